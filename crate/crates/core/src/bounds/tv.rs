use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use super::exponential::{exp_bound_with, ResidualMgf};
use super::{residual_mgf_bound, s_ell, sum_moment, BoundOptions, CouplingParams};
use crate::dist::{forward_law, mgf, moment, stationary_backward, RenewalLaw};
use crate::error::{Error, Result};
use crate::quadrature::integrate_to_infinity_ref;
use crate::scalar::Real;

/// Which moment bound drives the TV curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum TvMode<T> {
    Poly { ell: T },
    Exp { beta: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvPoint<T> {
    pub t: T,
    pub bound: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvCurve<T> {
    #[serde(flatten)]
    pub mode: TvMode<T>,
    /// The moment bound integrated over the stationary initial state of the second process.
    pub integrated: T,
    pub points: Vec<TvPoint<T>>,
}

/// `int_0^inf g(b') p(b') db'` against the stationary backward density, with
/// `g` errors surfaced after the quadrature. Points where the conditioning
/// event is null carry no stationary mass and contribute zero.
fn against_stationary<T: Real, L: RenewalLaw<T>>(
    law: &L,
    opts: &BoundOptions<T>,
    g: impl Fn(T) -> Result<T>,
) -> Result<T> {
    let st = stationary_backward(law, &opts.quad)?;
    let failure = RefCell::new(None);
    let integrand = |b: T| -> T {
        let w = st.pdf(b);
        if w <= T::zero() {
            return T::zero();
        }
        match g(b) {
            Ok(v) => v * w,
            Err(Error::ConditioningOnNull { .. }) => T::zero(),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                T::nan()
            }
        }
    };
    let total = integrate_to_infinity_ref(&integrand, T::zero(), st.horizon(), &opts.quad);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(total?.value)
}

/// `int Poly(tau(b, b'), l) dP(b')` over the stationary backward law.
pub fn integrated_poly<T: Real, L: RenewalLaw<T>>(
    law: &L,
    b: T,
    params: &CouplingParams<T>,
    ell: T,
    opts: &BoundOptions<T>,
) -> Result<T> {
    let s = s_ell(params.q, ell, opts.series_tol)?;
    let xi = moment(law, ell, &opts.quad)?.value;
    let one_minus = T::one() - params.q;
    let bracket = T::one() / (one_minus * one_minus) + T::one() / one_minus;
    let sum = against_stationary(law, opts, |bp| sum_moment(law, b, bp, ell, &opts.quad))?;
    Ok(sum * s + xi * bracket)
}

/// `int Exp(tau(b, b'), beta) dP(b')`; only `E exp(beta t1')` depends on `b'`.
pub fn integrated_exp<T: Real, L: RenewalLaw<T>>(
    law: &L,
    b: T,
    params: &CouplingParams<T>,
    m: &ResidualMgf<T>,
    opts: &BoundOptions<T>,
) -> Result<T> {
    let at_b = exp_bound_with(law, b, b, params, m, opts)?;
    let other = at_b.forward_mgf[1];
    let beta = m.beta;
    let averaged = against_stationary(law, opts, |bp| {
        Ok(mgf(&forward_law(law, bp)?, beta, &opts.quad)?.value)
    })?;
    Ok(at_b.value / other * averaged)
}

/// TV bound curve `min(1, t^-l int Poly dP)` or `min(1, e^(-beta t) int Exp dP)`.
pub fn tv_bound_curve<T: Real, L: RenewalLaw<T>>(
    law: &L,
    b: T,
    params: &CouplingParams<T>,
    mode: TvMode<T>,
    t_grid: &[T],
    opts: &BoundOptions<T>,
) -> Result<TvCurve<T>> {
    if let Some(&t) = t_grid.iter().find(|&&t| !(t > T::zero() && t.is_finite())) {
        return Err(Error::Domain(format!(
            "time grid must be positive, got {}",
            t.as_f64()
        )));
    }
    let integrated = match mode {
        TvMode::Poly { ell } => integrated_poly(law, b, params, ell, opts)?,
        TvMode::Exp { beta } => {
            let m = residual_mgf_bound(law, params.theta, beta, opts)?;
            integrated_exp(law, b, params, &m, opts)?
        }
    };
    let points = t_grid
        .iter()
        .map(|&t| {
            let decay = match mode {
                TvMode::Poly { ell } => t.powf(-ell),
                TvMode::Exp { beta } => (-beta * t).exp(),
            };
            TvPoint {
                t,
                bound: (integrated * decay).min(T::one()),
            }
        })
        .collect();
    Ok(TvCurve {
        mode,
        integrated,
        points,
    })
}
