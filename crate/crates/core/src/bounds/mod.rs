//! Certified bounds on the coupling epoch and on the total-variation distance
//! of the backward renewal time to its stationary law.
//!
//! The chain of quantities:
//!
//! * `R = E xi^2 / E xi` and `p0 = 1 - R / Theta` (Lorden + Markov): at each
//!   renewal of the lead process the other backward time is `<= Theta` with
//!   probability at least `p0`;
//! * `kappa_Theta`: infimum over `theta in [0, Theta]` of the overlap of `f`
//!   and the forward density `f_theta^W`;
//! * `pi = p0 kappa_Theta`, `q = 1 - pi`: per-attempt success / failure bounds;
//! * polynomial and exponential moment bounds of the epoch, then the TV curves.

mod exponential;
mod poly;
mod report;
mod series;
mod tv;

pub use exponential::{
    beta_search, example_cauchy_schwarz_bound, example_q, exp_bound, residual_mgf_bound,
    BetaSearch, ExpBound, ResidualMgf, ResidualProfile,
};
pub use poly::{poly_bound, poly_bound_with, sum_moment, PolyBound};
pub use report::{BoundReport, BoundRequest, ExampleDiagnostics, ExpEntry, PolyEntry, Tolerances};
pub use series::{s_ell, s_ell_closed_form};
pub use tv::{integrated_exp, integrated_poly, tv_bound_curve, TvCurve, TvMode, TvPoint};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::SplitOptions;
use crate::dist::{forward_law, moment, RenewalLaw};
use crate::error::{Error, Result};
use crate::quadrature::QuadOptions;
use crate::scalar::Real;

/// Numerical settings shared by the bound computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundOptions<T> {
    pub quad: QuadOptions<T>,
    pub split: SplitOptions,
    /// Coarse theta grid for `kappa_Theta`.
    pub kappa_grid: usize,
    pub kappa_refine_rounds: usize,
    pub kappa_refine_points: usize,
    /// Coarse theta grid for the residual MGF supremum.
    pub residual_grid: usize,
    pub residual_refine_rounds: usize,
    pub residual_refine_points: usize,
    pub series_tol: T,
    /// Relative bisection tolerance of `beta_search`.
    pub beta_rel_tol: T,
    pub beta_min: T,
    /// Backoff used to verify the margin of the returned rate.
    pub beta_backoff: T,
}

impl<T: Real> Default for BoundOptions<T> {
    fn default() -> Self {
        Self {
            quad: QuadOptions::default(),
            split: SplitOptions::default(),
            kappa_grid: 256,
            kappa_refine_rounds: 2,
            kappa_refine_points: 16,
            residual_grid: 64,
            residual_refine_rounds: 2,
            residual_refine_points: 8,
            series_tol: T::lit(1e-13),
            beta_rel_tol: T::lit(1e-6),
            beta_min: T::lit(1e-9),
            beta_backoff: T::lit(1e-6),
        }
    }
}

/// `R` and `p0` for a threshold `Theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LordenBound<T> {
    pub r: T,
    pub p0: T,
}

/// The per-attempt coupling parameters for a law and threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams<T> {
    pub theta: T,
    pub r: T,
    pub p0: T,
    pub kappa_theta: T,
    pub pi: T,
    pub q: T,
}

/// The Lorden ratio `E xi^2 / E xi`.
pub fn lorden_ratio<T: Real, L: RenewalLaw<T> + ?Sized>(law: &L, opts: &QuadOptions<T>) -> Result<T> {
    let m1 = moment(law, T::one(), opts)?.value;
    let m2 = moment(law, T::lit(2.0), opts)?.value;
    Ok(m2 / m1)
}

pub fn lorden_p0<T: Real, L: RenewalLaw<T> + ?Sized>(
    law: &L,
    theta: T,
    opts: &QuadOptions<T>,
) -> Result<LordenBound<T>> {
    let r = lorden_ratio(law, opts)?;
    // R carries quadrature error; a threshold within that error of R is not certifiable.
    if !(theta > r * (T::one() + opts.rel_tol)) {
        return Err(Error::ThresholdTooSmall {
            theta: theta.as_f64(),
            r: r.as_f64(),
        });
    }
    Ok(LordenBound {
        r,
        p0: T::one() - r / theta,
    })
}

/// Outcome of the `kappa_Theta` search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaTheta<T> {
    /// Certified value: grid infimum minus the Lipschitz margin.
    pub value: T,
    pub grid_min: T,
    pub argmin: T,
    pub margin: T,
    pub evaluations: usize,
}

/// Overlap of `f` with the forward density at elapsed time `theta`.
pub fn kappa_at<T: Real, L: RenewalLaw<T>>(law: &L, theta: T, split: &SplitOptions) -> Result<T> {
    let fwd = forward_law(law, theta)?;
    Ok(crate::coupling::overlap_with(law, &fwd, split))
}

fn evaluate_kappas<T: Real, L: RenewalLaw<T>>(
    law: &L,
    thetas: &[T],
    split: &SplitOptions,
) -> Result<Vec<(T, T)>> {
    thetas
        .par_iter()
        .map(|&theta| kappa_at(law, theta, split).map(|k| (theta, k)))
        .collect()
}

/// `inf_{theta in [0, Theta]} int min(f, f_theta^W)` over `grid_size` points,
/// refined around the running minimiser, minus a Lipschitz margin.
pub fn kappa_theta<T: Real, L: RenewalLaw<T>>(
    law: &L,
    theta_max: T,
    grid_size: usize,
    opts: &BoundOptions<T>,
) -> Result<KappaTheta<T>> {
    if !(theta_max > T::zero()) {
        return Err(Error::Domain(format!(
            "threshold must be positive, got {}",
            theta_max.as_f64()
        )));
    }
    let thetas: Vec<T> = if grid_size <= 1 {
        vec![T::zero()]
    } else {
        (0..grid_size)
            .map(|j| theta_max * T::from_count(j) / T::from_count(grid_size - 1))
            .collect()
    };
    let mut points = evaluate_kappas(law, &thetas, &opts.split)?;
    if grid_size > 1 {
        for _ in 0..opts.kappa_refine_rounds {
            let j = argmin(&points);
            let lo = points[j.saturating_sub(1)].0;
            let hi = points[(j + 1).min(points.len() - 1)].0;
            let n = opts.kappa_refine_points;
            let extra: Vec<T> = (1..=n)
                .map(|i| lo + (hi - lo) * T::from_count(i) / T::from_count(n + 1))
                .collect();
            points.extend(evaluate_kappas(law, &extra, &opts.split)?);
            points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite theta"));
            points.dedup_by(|a, b| a.0 == b.0);
        }
    }
    let j = argmin(&points);
    let (argmin_theta, grid_min) = points[j];
    let mut value = grid_min;
    // Lipschitz lower bound on each cell, slope estimated from the cell and its neighbours.
    let slopes: Vec<T> = points
        .windows(2)
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
        .collect();
    for (c, w) in points.windows(2).enumerate() {
        let lip = slopes[c.saturating_sub(1)..(c + 2).min(slopes.len())]
            .iter()
            .fold(T::zero(), |a, &b| a.max(b));
        let h = w[1].0 - w[0].0;
        let cell_low = T::lit(0.5) * (w[0].1 + w[1].1) - T::lit(0.5) * lip * h;
        value = value.min(cell_low);
    }
    let value = value.min(T::one());
    if !(value > T::zero()) {
        return Err(Error::NoCouplingPossible {
            kappa: value.as_f64(),
        });
    }
    Ok(KappaTheta {
        value,
        grid_min,
        argmin: argmin_theta,
        margin: grid_min - value,
        evaluations: points.len(),
    })
}

fn argmin<T: Real>(points: &[(T, T)]) -> usize {
    points
        .iter()
        .enumerate()
        .fold((0, T::infinity()), |acc, (i, p)| if p.1 < acc.1 { (i, p.1) } else { acc })
        .0
}

pub(crate) fn argmax<T: Real>(points: &[(T, T)]) -> usize {
    points
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |acc, (i, p)| if p.1 > acc.1 { (i, p.1) } else { acc })
        .0
}

impl<T: Real> CouplingParams<T> {
    pub fn compute<L: RenewalLaw<T>>(law: &L, theta: T, opts: &BoundOptions<T>) -> Result<Self> {
        let lorden = lorden_p0(law, theta, &opts.quad)?;
        let kappa = kappa_theta(law, theta, opts.kappa_grid, opts)?;
        Ok(Self::from_parts(theta, lorden, kappa.value))
    }

    pub fn from_parts(theta: T, lorden: LordenBound<T>, kappa_theta: T) -> Self {
        let pi = lorden.p0 * kappa_theta;
        Self {
            theta,
            r: lorden.r,
            p0: lorden.p0,
            kappa_theta,
            pi,
            q: T::one() - pi,
        }
    }

    pub fn to_f64(&self) -> CouplingParams<f64> {
        CouplingParams {
            theta: self.theta.as_f64(),
            r: self.r.as_f64(),
            p0: self.p0.as_f64(),
            kappa_theta: self.kappa_theta.as_f64(),
            pi: self.pi.as_f64(),
            q: self.q.as_f64(),
        }
    }
}

/// Default threshold `Theta = 2R`, which makes `p0 = 1/2`.
pub fn default_threshold<T: Real, L: RenewalLaw<T> + ?Sized>(law: &L, opts: &QuadOptions<T>) -> Result<T> {
    Ok(T::lit(2.0) * lorden_ratio(law, opts)?)
}

/// Threshold maximising `pi = p0(Theta) kappa_Theta` over a log-spaced scan of
/// `[R (1 + 1/64), 64 R]`, refined by golden-section search on the best bracket.
pub fn optimize_threshold<T: Real, L: RenewalLaw<T>>(law: &L, opts: &BoundOptions<T>) -> Result<T> {
    let r = lorden_ratio(law, &opts.quad)?;
    let pi_at = |theta: T| -> T {
        match CouplingParams::compute(law, theta, opts) {
            Ok(p) => p.pi,
            Err(_) => T::zero(),
        }
    };
    let lo = (T::one() + T::lit(1.0 / 64.0)).ln();
    let hi = T::lit(64.0).ln();
    let n = 12;
    let xs: Vec<T> = (0..=n)
        .map(|i| lo + (hi - lo) * T::from_count(i) / T::from_count(n))
        .collect();
    let values: Vec<(T, T)> = xs.iter().map(|&x| (x, pi_at(r * x.exp()))).collect();
    let j = argmax(&values);
    let (mut a, mut b) = (
        values[j.saturating_sub(1)].0,
        values[(j + 1).min(values.len() - 1)].0,
    );
    let g = T::lit(0.618_033_988_749_895);
    for _ in 0..20 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if pi_at(r * c.exp()) >= pi_at(r * d.exp()) {
            b = d;
        } else {
            a = c;
        }
    }
    let best = T::lit(0.5) * (a + b);
    if pi_at(r * best.exp()) >= values[j].1 {
        Ok(r * best.exp())
    } else {
        Ok(r * values[j].0.exp())
    }
}
