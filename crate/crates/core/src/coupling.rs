//! Two-variable coupling through a common part of two densities.
//!
//! Given densities `f1`, `f2` and a common part `phi <= min(f1, f2)` of mass
//! `kappa`, three independent uniforms `(u, u', u'')` produce a pair whose
//! marginals are exactly `F1` and `F2` and which coincide with probability
//! `kappa`:
//!
//! ```text
//! u <  kappa : both = Phi^-1(kappa u')
//! u >= kappa : v_i  = Psi_i^-1((1 - kappa) u''),   Psi_i = F_i - Phi
//! ```
//!
//! For the exact minimum `phi = min(f1, f2)` the half-line is cut at the
//! crossings of `f1 - f2`; on each piece the minimum is one of the two
//! densities, so `Phi` and `Psi_i` are differences of the survival functions
//! and need no quadrature. A caller-supplied minorant `phi` is tabulated by
//! cumulative quadrature instead.

use crate::dist::{bisect, invert_monotone, tail_horizon, RenewalLaw};
use crate::error::{Error, Result};
use crate::quadrature::{
    integrate_pieces, integrate_ref, integrate_to_infinity_ref, Estimate, QuadOptions,
};
use crate::scalar::Real;

/// Residual mass below which the non-coinciding branch is treated as empty.
pub const EMPTY_RESIDUAL: f64 = 1e-12;

/// Scan resolution used to locate density crossings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    pub grid: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self { grid: 512 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Lower {
    First,
    Second,
}

#[derive(Debug, Clone, Copy)]
struct Segment<T> {
    start: T,
    lower: Lower,
    common: T,
    residual: [T; 2],
}

struct Tabulated<T> {
    density: Box<dyn Fn(T) -> T + Send + Sync>,
    knots: Vec<T>,
    cumulative: Vec<T>,
    opts: QuadOptions<T>,
}

enum CommonPart<T> {
    ExactMin(Vec<Segment<T>>),
    Minorant(Tabulated<T>),
}

/// Decomposition `F_i = Phi + Psi_i` of two laws into a common part and two
/// residual parts.
pub struct OverlapSplit<T, A, B> {
    first: A,
    second: B,
    common: CommonPart<T>,
    kappa: T,
    residual_mass: [T; 2],
}

/// Output of one coupled draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledPair<T> {
    pub first: T,
    pub second: T,
    pub coincided: bool,
}

fn scan_grid<T: Real>(horizon: T, n: usize) -> Vec<T> {
    (0..=n)
        .map(|k| {
            let x = T::from_count(k) / T::from_count(n);
            horizon * x * x
        })
        .collect()
}

fn crossing_points<T: Real, F: Fn(T) -> T>(diff: F, grid: &[T]) -> Vec<(T, bool)> {
    // (start, first_is_lower) for each maximal run
    let lower_at = |s: T| diff(s) <= T::zero();
    let mut runs = vec![(T::zero(), lower_at(T::zero()))];
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (la, lb) = (lower_at(a), lower_at(b));
        if la == lb {
            continue;
        }
        let (mut lo, mut hi) = (a, b);
        for _ in 0..100 {
            let mid = T::lit(0.5) * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= T::lit(1e-14) * (T::one() + hi) {
                break;
            }
            if lower_at(mid) == la {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let cross = T::lit(0.5) * (lo + hi);
        let last = runs.len() - 1;
        if cross > runs[last].0 {
            runs.push((cross, lb));
        } else {
            runs[last].1 = lb;
        }
    }
    runs
}

fn mass_between<T: Real, L: RenewalLaw<T>>(law: &L, a: T, b: Option<T>) -> T {
    match b {
        Some(b) => (law.survival(a) - law.survival(b)).max(T::zero()),
        None => law.survival(a),
    }
}

impl<T: Real, A: RenewalLaw<T>, B: RenewalLaw<T>> OverlapSplit<T, A, B> {
    fn exact(first: A, second: B, opts: &SplitOptions) -> Self {
        let horizon = tail_horizon(&first).max(tail_horizon(&second));
        let grid = scan_grid(horizon, opts.grid.max(2));
        let runs = crossing_points(|s| first.pdf(s) - second.pdf(s), &grid);
        let mut segments = Vec::with_capacity(runs.len());
        let mut common = T::zero();
        let mut residual = [T::zero(); 2];
        for (i, &(start, first_lower)) in runs.iter().enumerate() {
            let end = runs.get(i + 1).map(|r| r.0);
            let lower = if first_lower { Lower::First } else { Lower::Second };
            segments.push(Segment {
                start,
                lower,
                common,
                residual,
            });
            let m1 = mass_between(&first, start, end);
            let m2 = mass_between(&second, start, end);
            let (low, high, hi_idx) = if first_lower { (m1, m2, 1) } else { (m2, m1, 0) };
            common = common + low;
            residual[hi_idx] = residual[hi_idx] + (high - low).max(T::zero());
        }
        OverlapSplit {
            first,
            second,
            common: CommonPart::ExactMin(segments),
            kappa: common.min(T::one()),
            residual_mass: residual,
        }
    }

    /// Overlap mass `kappa`.
    pub fn kappa(&self) -> T {
        self.kappa
    }

    /// `Psi_i(inf)` for `i = 0, 1`; both equal `1 - kappa` up to rounding.
    pub fn residual_mass(&self, i: usize) -> T {
        self.residual_mass[i]
    }

    pub fn residuals_empty(&self) -> bool {
        self.residual_mass[0].max(self.residual_mass[1]) <= T::lit(EMPTY_RESIDUAL)
    }

    pub fn first(&self) -> &A {
        &self.first
    }

    pub fn second(&self) -> &B {
        &self.second
    }

    fn law_cdf(&self, i: usize, s: T) -> T {
        if i == 0 {
            self.first.cdf(s)
        } else {
            self.second.cdf(s)
        }
    }

    fn law_pdf(&self, i: usize, s: T) -> T {
        if i == 0 {
            self.first.pdf(s)
        } else {
            self.second.pdf(s)
        }
    }

    fn law_survival(&self, which: Lower, s: T) -> T {
        match which {
            Lower::First => self.first.survival(s),
            Lower::Second => self.second.survival(s),
        }
    }

    /// Density of the common part.
    pub fn common_density(&self, s: T) -> T {
        match &self.common {
            CommonPart::ExactMin(_) => self.first.pdf(s).min(self.second.pdf(s)),
            CommonPart::Minorant(tab) => (tab.density)(s),
        }
    }

    /// Density of residual part `i`: `f_i - phi`.
    pub fn residual_density(&self, i: usize, s: T) -> T {
        (self.law_pdf(i, s) - self.common_density(s)).max(T::zero())
    }

    /// `ln psi_i(s)`, `-inf` where the residual vanishes.
    fn residual_log_density(&self, i: usize, s: T) -> T {
        match &self.common {
            CommonPart::ExactMin(_) => {
                let (own, other) = if i == 0 {
                    (self.first.log_pdf(s), self.second.log_pdf(s))
                } else {
                    (self.second.log_pdf(s), self.first.log_pdf(s))
                };
                if !(own > other) {
                    return T::neg_infinity();
                }
                own + (-(other - own).exp()).ln_1p()
            }
            CommonPart::Minorant(_) => self.residual_density(i, s).ln(),
        }
    }

    fn segment_index(segments: &[Segment<T>], s: T) -> usize {
        segments.partition_point(|seg| seg.start <= s).saturating_sub(1)
    }

    /// `Phi(s)`, the common part's CDF (total mass `kappa`).
    pub fn common_cdf(&self, s: T) -> T {
        if s <= T::zero() {
            return T::zero();
        }
        match &self.common {
            CommonPart::ExactMin(segments) => {
                let seg = &segments[Self::segment_index(segments, s)];
                let low = self.law_survival(seg.lower, seg.start) - self.law_survival(seg.lower, s);
                seg.common + low.max(T::zero())
            }
            CommonPart::Minorant(tab) => tab.cdf(s),
        }
    }

    /// `Psi_i(s) = F_i(s) - Phi(s)` (total mass `1 - kappa`).
    pub fn residual_cdf(&self, i: usize, s: T) -> T {
        if s <= T::zero() {
            return T::zero();
        }
        match &self.common {
            CommonPart::ExactMin(segments) => {
                let seg = &segments[Self::segment_index(segments, s)];
                let own = if i == 0 { Lower::First } else { Lower::Second };
                if seg.lower == own {
                    return seg.residual[i];
                }
                let other = seg.lower;
                let high = self.law_survival(own, seg.start) - self.law_survival(own, s);
                let low = self.law_survival(other, seg.start) - self.law_survival(other, s);
                seg.residual[i] + (high - low).max(T::zero())
            }
            CommonPart::Minorant(tab) => (self.law_cdf(i, s) - tab.cdf(s)).max(T::zero()),
        }
    }

    /// `Phi^-1(y)` for `y` in `[0, kappa)`.
    pub fn common_quantile(&self, y: T) -> T {
        match &self.common {
            CommonPart::ExactMin(segments) => {
                let k = segments
                    .partition_point(|seg| seg.common <= y)
                    .saturating_sub(1);
                self.solve_on_segment(segments, k, |s| self.common_cdf(s), y)
            }
            CommonPart::Minorant(_) => invert_monotone(|s| self.common_cdf(s), y),
        }
    }

    /// `Psi_i^-1(y)` for `y` in `[0, 1 - kappa)`.
    pub fn residual_quantile(&self, i: usize, y: T) -> T {
        match &self.common {
            CommonPart::ExactMin(segments) => {
                let k = segments
                    .partition_point(|seg| seg.residual[i] <= y)
                    .saturating_sub(1);
                self.solve_on_segment(segments, k, |s| self.residual_cdf(i, s), y)
            }
            CommonPart::Minorant(_) => invert_monotone(|s| self.residual_cdf(i, s), y),
        }
    }

    fn solve_on_segment<G: Fn(T) -> T>(&self, segments: &[Segment<T>], k: usize, g: G, y: T) -> T {
        let lo = segments[k].start;
        if y <= g(lo) {
            return lo;
        }
        match segments.get(k + 1) {
            Some(next) => bisect(&g, y, lo, next.start),
            None => {
                let shifted = |d: T| g(lo + d);
                lo + invert_monotone(shifted, y)
            }
        }
    }

    /// `int exp(beta s) psi_i(s) ds / (1 - kappa)`: the MGF of residual part
    /// `i` normalised to a probability law. `None` when the residual is empty.
    pub fn residual_mgf(&self, i: usize, beta: T, opts: &QuadOptions<T>) -> Result<Option<T>> {
        let mass = self.residual_mass[i];
        if mass <= T::lit(EMPTY_RESIDUAL) {
            return Ok(None);
        }
        let horizon = tail_horizon(&self.first).max(tail_horizon(&self.second));
        // log form: far out exp(beta s) overflows while the density underflows
        let weighted = |s: T| {
            let ld = self.residual_log_density(i, s);
            if ld == T::neg_infinity() {
                T::zero()
            } else {
                (beta * s + ld).exp()
            }
        };
        let total = match &self.common {
            CommonPart::ExactMin(segments) => {
                let own = if i == 0 { Lower::First } else { Lower::Second };
                let mut acc = T::zero();
                for (k, seg) in segments.iter().enumerate() {
                    if seg.lower == own {
                        continue;
                    }
                    acc = acc
                        + match segments.get(k + 1) {
                            Some(next) => integrate_ref(&weighted, seg.start, next.start, opts)?,
                            None => integrate_to_infinity_ref(
                                &weighted,
                                seg.start,
                                horizon.max(seg.start),
                                opts,
                            )?,
                        }
                        .value;
                }
                acc
            }
            CommonPart::Minorant(tab) => {
                let head = integrate_pieces(weighted, &tab.knots, opts)?.value;
                let last = tab.knots[tab.knots.len() - 1];
                head + integrate_to_infinity_ref(&weighted, last, last, opts)?.value
            }
        };
        Ok(Some(total / mass))
    }
}

impl<T: Real> Tabulated<T> {
    fn cdf(&self, s: T) -> T {
        let k = self.knots.partition_point(|&x| x <= s).saturating_sub(1);
        let k = k.min(self.knots.len() - 1);
        let extra = integrate_ref(&self.density, self.knots[k], s, &self.opts)
            .map(|e| e.value)
            .unwrap_or(T::zero());
        self.cumulative[k] + extra
    }
}

/// Overlap `int min(f1, f2)` of two laws, through crossing detection and
/// survival differences.
pub fn overlap<T: Real, A: RenewalLaw<T>, B: RenewalLaw<T>>(first: A, second: B) -> T {
    overlap_with(first, second, &SplitOptions::default())
}

pub fn overlap_with<T: Real, A: RenewalLaw<T>, B: RenewalLaw<T>>(
    first: A,
    second: B,
    opts: &SplitOptions,
) -> T {
    OverlapSplit::exact(first, second, opts).kappa()
}

/// Split with the exact common part `min(f1, f2)`.
pub fn split<T: Real, A: RenewalLaw<T>, B: RenewalLaw<T>>(
    first: A,
    second: B,
) -> Result<OverlapSplit<T, A, B>> {
    split_with(first, second, &SplitOptions::default())
}

pub fn split_with<T: Real, A: RenewalLaw<T>, B: RenewalLaw<T>>(
    first: A,
    second: B,
    opts: &SplitOptions,
) -> Result<OverlapSplit<T, A, B>> {
    let s = OverlapSplit::exact(first, second, opts);
    if s.kappa() <= T::zero() {
        return Err(Error::NoCommonPart);
    }
    Ok(s)
}

/// Split with a supplied common part `phi`, which must satisfy
/// `0 <= phi <= min(f1, f2)`.
pub fn split_with_minorant<T, A, B, P>(
    first: A,
    second: B,
    phi: P,
    opts: &QuadOptions<T>,
) -> Result<OverlapSplit<T, A, B>>
where
    T: Real,
    A: RenewalLaw<T>,
    B: RenewalLaw<T>,
    P: Fn(T) -> T + Send + Sync + 'static,
{
    let horizon = tail_horizon(&first).max(tail_horizon(&second));
    let knots = scan_grid(horizon, SplitOptions::default().grid);
    for &s in &knots {
        let bound = first.pdf(s).min(second.pdf(s));
        let value = phi(s);
        if !(value >= T::zero()) || value > bound * (T::one() + T::lit(1e-9)) + T::min_positive_value() {
            return Err(Error::InvalidMinorant { at: s.as_f64() });
        }
    }
    let mut cumulative = Vec::with_capacity(knots.len());
    cumulative.push(T::zero());
    for w in knots.windows(2) {
        let cell = integrate_ref(&phi, w[0], w[1], opts)?.value;
        cumulative.push(cumulative[cumulative.len() - 1] + cell);
    }
    let last = knots[knots.len() - 1];
    let tail = integrate_to_infinity_ref(&phi, last, last, opts)?.value;
    let kappa = cumulative[cumulative.len() - 1] + tail;
    if kappa <= T::zero() {
        return Err(Error::NoCommonPart);
    }
    let tab = Tabulated {
        density: Box::new(phi),
        knots,
        cumulative,
        opts: *opts,
    };
    let residual = (T::one() - kappa).max(T::zero());
    Ok(OverlapSplit {
        first,
        second,
        common: CommonPart::Minorant(tab),
        kappa,
        residual_mass: [residual; 2],
    })
}

/// One draw of the coupled pair from three uniforms in `[0, 1)`.
pub fn coupled_sample<T: Real, A: RenewalLaw<T>, B: RenewalLaw<T>>(
    split: &OverlapSplit<T, A, B>,
    u: T,
    u_common: T,
    u_residual: T,
) -> Result<CoupledPair<T>> {
    for (name, v) in [("u", u), ("u'", u_common), ("u''", u_residual)] {
        if !(v >= T::zero() && v < T::one()) {
            return Err(Error::Domain(format!(
                "uniform {name} must lie in [0, 1), got {}",
                v.as_f64()
            )));
        }
    }
    let kappa = split.kappa();
    if u < kappa {
        let x = split.common_quantile(kappa * u_common);
        return Ok(CoupledPair {
            first: x,
            second: x,
            coincided: true,
        });
    }
    let draw = |i: usize| split.residual_quantile(i, split.residual_mass(i) * u_residual);
    Ok(CoupledPair {
        first: draw(0),
        second: draw(1),
        coincided: false,
    })
}

/// `int_0^inf min(f1, f2)` by adaptive quadrature, with the integration range
/// cut at the sign changes of `f1 - f2` found on a scan of `[0, horizon]`.
pub fn overlap_densities<T, F1, F2>(
    f1: F1,
    f2: F2,
    horizon: T,
    opts: &QuadOptions<T>,
) -> Result<Estimate<T>>
where
    T: Real,
    F1: Fn(T) -> T,
    F2: Fn(T) -> T,
{
    let grid = scan_grid(horizon, 2048);
    let runs = crossing_points(|s| f1(s) - f2(s), &grid);
    let mut points: Vec<T> = runs.iter().map(|r| r.0).chain(grid.iter().copied()).collect();
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite scan points"));
    points.dedup();
    let min = |s: T| f1(s).min(f2(s));
    let head = integrate_pieces(min, &points, opts)?;
    let tail = integrate_to_infinity_ref(&min, horizon, horizon, opts)?;
    Ok(Estimate {
        value: head.value + tail.value,
        abs_error: head.abs_error + tail.abs_error,
    })
}
