//! Adaptive Gauss-Kronrod quadrature on finite intervals and on `[a, inf)`.
//!
//! Finite intervals use a G7/K15 pair with global bisection of the interval
//! carrying the largest error estimate. Semi-infinite integrals are summed over
//! panels of doubling width; summation stops once the panels have passed the
//! caller's horizon hint (typically where the survival function drops below
//! `1e-14`) and a panel contributes less than the tolerance.

use crate::error::{Error, Result};
use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    /// Maximum number of subintervals per finite integral.
    pub max_intervals: usize,
}

impl<T: Real> Default for QuadOptions<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::lit(1e-12),
            rel_tol: T::lit(1e-10),
            max_intervals: 400,
        }
    }
}

impl<T: Real> QuadOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self {
            abs_tol: tol * T::lit(1e-2),
            rel_tol: tol,
            ..Self::default()
        }
    }

    fn target(&self, value: T) -> T {
        T::resolvable(self.abs_tol).max(T::resolvable(self.rel_tol) * value.abs())
    }
}

/// An integral value together with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub abs_error: T,
}

impl<T: Real> Estimate<T> {
    /// Relative error, or the absolute error when the value is zero.
    pub fn rel_error(&self) -> T {
        if self.value == T::zero() {
            self.abs_error
        } else {
            self.abs_error / self.value.abs()
        }
    }
}

fn kronrod<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> Result<(T, T)> {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let fc = f(center);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half_len * T::lit(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        kron = kron + T::lit(WGK[j]) * pair;
        if j % 2 == 1 {
            gauss = gauss + T::lit(WG[j / 2]) * pair;
        }
    }
    let value = kron * half_len;
    let err = ((kron - gauss) * half_len).abs();
    if !value.is_finite() {
        return Err(Error::Quadrature(format!(
            "non-finite integrand on [{}, {}]",
            a.as_f64(),
            b.as_f64()
        )));
    }
    Ok((value, err))
}

/// Integrates `f` over the finite interval `[a, b]`.
pub fn integrate<T: Real, F: Fn(T) -> T>(
    f: F,
    a: T,
    b: T,
    opts: &QuadOptions<T>,
) -> Result<Estimate<T>> {
    integrate_ref(&f, a, b, opts)
}

pub(crate) fn integrate_ref<T: Real, F: Fn(T) -> T>(
    f: &F,
    a: T,
    b: T,
    opts: &QuadOptions<T>,
) -> Result<Estimate<T>> {
    if a == b {
        return Ok(Estimate {
            value: T::zero(),
            abs_error: T::zero(),
        });
    }
    if b < a {
        let e = integrate_ref(f, b, a, opts)?;
        return Ok(Estimate {
            value: -e.value,
            abs_error: e.abs_error,
        });
    }
    let (v, e) = kronrod(f, a, b)?;
    let mut intervals = vec![(a, b, v, e)];
    let mut total = v;
    let mut total_err = e;
    while total_err > opts.target(total) && intervals.len() < opts.max_intervals {
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |acc, (i, iv)| {
                if iv.3 > acc.1 {
                    (i, iv.3)
                } else {
                    acc
                }
            });
        let (lo, hi, v0, e0) = intervals.swap_remove(idx);
        let mid = T::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            // Interval can no longer be split at this precision.
            intervals.push((lo, hi, v0, T::zero()));
            total_err = total_err - e0;
            continue;
        }
        let (vl, el) = kronrod(f, lo, mid)?;
        let (vr, er) = kronrod(f, mid, hi)?;
        intervals.push((lo, mid, vl, el));
        intervals.push((mid, hi, vr, er));
        total = intervals.iter().map(|iv| iv.2).sum();
        total_err = intervals.iter().map(|iv| iv.3).sum();
    }
    Ok(Estimate {
        value: total,
        abs_error: total_err,
    })
}

/// Integrates over consecutive pieces `[p0, p1], [p1, p2], ...`; used when the
/// integrand has known kinks at the breakpoints.
pub fn integrate_pieces<T: Real, F: Fn(T) -> T>(
    f: F,
    points: &[T],
    opts: &QuadOptions<T>,
) -> Result<Estimate<T>> {
    let mut value = T::zero();
    let mut abs_error = T::zero();
    for w in points.windows(2) {
        let e = integrate_ref(&f, w[0], w[1], opts)?;
        value = value + e.value;
        abs_error = abs_error + e.abs_error;
    }
    Ok(Estimate { value, abs_error })
}

/// Integrates `f` over `[a, inf)`.
///
/// `horizon` is the point beyond which the integrand is expected to be
/// negligible; panels are summed at least up to it and then until one panel
/// falls below the tolerance while decaying. Fails with
/// [`Error::DivergentIntegral`] if that never happens within a large multiple
/// of the horizon.
pub fn integrate_to_infinity<T: Real, F: Fn(T) -> T>(
    f: F,
    a: T,
    horizon: T,
    opts: &QuadOptions<T>,
) -> Result<Estimate<T>> {
    integrate_to_infinity_ref(&f, a, horizon, opts)
}

pub(crate) fn integrate_to_infinity_ref<T: Real, F: Fn(T) -> T>(
    f: &F,
    a: T,
    horizon: T,
    opts: &QuadOptions<T>,
) -> Result<Estimate<T>> {
    let span = (horizon - a).max(T::one());
    let cap = a + span * T::lit(1e6);
    let mut width = span / T::lit(8.0);
    let mut lo = a;
    let mut value = T::zero();
    let mut abs_error = T::zero();
    let mut prev_panel = T::infinity();
    loop {
        let hi = lo + width;
        let panel = integrate_ref(f, lo, hi, opts)?;
        value = value + panel.value;
        abs_error = abs_error + panel.abs_error;
        let mag = panel.value.abs();
        if hi >= horizon && mag <= opts.target(value) && mag <= prev_panel {
            break;
        }
        if hi >= cap {
            return Err(Error::DivergentIntegral { from: a.as_f64() });
        }
        prev_panel = mag;
        lo = hi;
        width = width * T::lit(2.0);
    }
    if !value.is_finite() {
        return Err(Error::DivergentIntegral { from: a.as_f64() });
    }
    Ok(Estimate { value, abs_error })
}
