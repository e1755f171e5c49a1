use serde::{Deserialize, Serialize};

use super::{s_ell, BoundOptions, CouplingParams};
use crate::dist::{forward_law, moment, tail_horizon, RenewalLaw};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_to_infinity_ref, QuadOptions};
use crate::scalar::Real;

/// Components of the polynomial bound on `E tau(b, b')^l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyBound<T> {
    pub ell: T,
    pub s_ell: T,
    /// `E (t1 + t1')^l` for the two independent first forward times.
    pub sum_moment: T,
    /// `E xi^l`.
    pub xi_moment: T,
    /// `1/(1-q)^2 + 1/(1-q)`.
    pub bracket: T,
    pub value: T,
}

pub(crate) fn binomial<T: Real>(n: usize, k: usize) -> T {
    (0..k).fold(T::one(), |acc, i| {
        acc * T::from_count(n - i) / T::from_count(i + 1)
    })
}

pub(crate) fn integer_order(ell: f64) -> Option<usize> {
    (ell == ell.round() && (0.0..=30.0).contains(&ell)).then_some(ell as usize)
}

/// Moments `E t^j`, `j = 0..=n`, of the forward time from backward time `b`.
pub(crate) fn forward_moments<T: Real, L: RenewalLaw<T>>(
    law: &L,
    b: T,
    n: usize,
    opts: &QuadOptions<T>,
) -> Result<Vec<T>> {
    let fwd = forward_law(law, b)?;
    (0..=n)
        .map(|j| moment(&fwd, T::from_count(j), opts).map(|e| e.value))
        .collect()
}

/// `E (t1 + t1')^l` where `t1`, `t1'` are independent forward times from `b`, `b'`.
///
/// Integer orders use the binomial expansion with per-term forward moments;
/// other orders use nested quadrature,
/// `E (x + Y)^l = x^l + int l (x + y)^(l-1) P(Y > y) dy` integrated against the
/// density of `t1`.
pub fn sum_moment<T: Real, L: RenewalLaw<T>>(
    law: &L,
    b: T,
    b_prime: T,
    ell: T,
    opts: &QuadOptions<T>,
) -> Result<T> {
    if !(ell >= T::zero()) {
        return Err(Error::Domain(format!("order must be >= 0, got {}", ell.as_f64())));
    }
    if let Some(n) = integer_order(ell.as_f64()) {
        let m = forward_moments(law, b, n, opts)?;
        let m_prime = forward_moments(law, b_prime, n, opts)?;
        return Ok((0..=n)
            .map(|j| binomial::<T>(n, j) * m[j] * m_prime[n - j])
            .sum());
    }
    let first = forward_law(law, b)?;
    let second = forward_law(law, b_prime)?;
    let h1 = tail_horizon(&first);
    let h2 = tail_horizon(&second);
    let failure = std::cell::RefCell::new(None);
    let inner = |x: T| -> T {
        let integrand = |y: T| ell * (x + y).powf(ell - T::one()) * second.survival(y);
        match integrate_to_infinity_ref(&integrand, T::zero(), h2, opts) {
            Ok(e) => x.powf(ell) + e.value,
            Err(err) => {
                failure.borrow_mut().get_or_insert(err);
                T::nan()
            }
        }
    };
    let outer = integrate_to_infinity_ref(&|x: T| inner(x) * first.pdf(x), T::zero(), h1, opts);
    if let Some(err) = failure.into_inner() {
        return Err(err);
    }
    Ok(outer?.value)
}

/// Polynomial bound with precomputed coupling parameters:
/// `E(t1 + t1')^l S_l(q) + E xi^l (1/(1-q)^2 + 1/(1-q))`.
pub fn poly_bound_with<T: Real, L: RenewalLaw<T>>(
    law: &L,
    b: T,
    b_prime: T,
    params: &CouplingParams<T>,
    ell: T,
    opts: &BoundOptions<T>,
) -> Result<PolyBound<T>> {
    let s = s_ell(params.q, ell, opts.series_tol)?;
    let sum = sum_moment(law, b, b_prime, ell, &opts.quad)?;
    let xi = moment(law, ell, &opts.quad)?.value;
    Ok(assemble(ell, s, sum, xi, params.q))
}

pub(crate) fn assemble<T: Real>(ell: T, s: T, sum: T, xi: T, q: T) -> PolyBound<T> {
    let one_minus = T::one() - q;
    let bracket = T::one() / (one_minus * one_minus) + T::one() / one_minus;
    PolyBound {
        ell,
        s_ell: s,
        sum_moment: sum,
        xi_moment: xi,
        bracket,
        value: sum * s + xi * bracket,
    }
}

/// Polynomial bound on `E tau(b, b')^l` for threshold `Theta`.
pub fn poly_bound<T: Real, L: RenewalLaw<T>>(
    law: &L,
    b: T,
    b_prime: T,
    theta: T,
    ell: T,
    opts: &BoundOptions<T>,
) -> Result<PolyBound<T>> {
    let params = CouplingParams::compute(law, theta, opts)?;
    poly_bound_with(law, b, b_prime, &params, ell, opts)
}
