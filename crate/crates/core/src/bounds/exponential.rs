use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, BoundOptions, CouplingParams};
use crate::coupling::{split_with, OverlapSplit};
use crate::dist::{forward_law, mgf, ExampleLaw, ForwardLaw, RenewalLaw};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};
use crate::scalar::Real;

/// `M(beta, Theta)`: bound on the MGF of the increment that follows a failed
/// coupling attempt.
///
/// Two failure modes are covered: the other backward time exceeded `Theta`
/// (the increment is a fresh period, `fresh`), or the coupled draw did not
/// coincide (the increment follows a residual part, `residual`, taken as the
/// supremum over `theta in [0, Theta]` and over both residuals).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualMgf<T> {
    pub beta: T,
    pub fresh: T,
    pub residual: Option<T>,
    pub residual_argmax: Option<T>,
    pub value: T,
}

type ForwardSplit<'a, T, L> = OverlapSplit<T, &'a L, ForwardLaw<&'a L, T>>;

/// Splits of `f` against `f_theta^W` on a theta grid, reused across rates.
pub struct ResidualProfile<'a, T: Real, L> {
    law: &'a L,
    theta_max: T,
    spacing: T,
    splits: Vec<(T, ForwardSplit<'a, T, L>)>,
    opts: BoundOptions<T>,
}

fn residual_sup<T: Real, A: RenewalLaw<T>, B: RenewalLaw<T>>(
    split: &OverlapSplit<T, A, B>,
    beta: T,
    opts: &QuadOptions<T>,
) -> Result<Option<T>> {
    let a = split.residual_mgf(0, beta, opts)?;
    let b = split.residual_mgf(1, beta, opts)?;
    Ok(match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, y) => x.or(y),
    })
}

impl<'a, T: Real, L: RenewalLaw<T>> ResidualProfile<'a, T, L> {
    pub fn new(law: &'a L, theta_max: T, opts: &BoundOptions<T>) -> Result<Self> {
        let n = opts.residual_grid.max(2);
        let thetas: Vec<T> = (0..n)
            .map(|j| theta_max * T::from_count(j) / T::from_count(n - 1))
            .collect();
        let splits = thetas
            .par_iter()
            .map(|&theta| -> Result<Option<(T, ForwardSplit<'a, T, L>)>> {
                let fwd = forward_law(law, theta)?;
                let s = split_with(law, fwd, &opts.split)?;
                Ok((!s.residuals_empty()).then_some((theta, s)))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        Ok(Self {
            law,
            theta_max,
            spacing: theta_max / T::from_count(n - 1),
            splits,
            opts: *opts,
        })
    }

    fn residual_at(&self, theta: T, beta: T) -> Result<Option<T>> {
        let fwd = forward_law(self.law, theta)?;
        let s = split_with(self.law, fwd, &self.opts.split)?;
        if s.residuals_empty() {
            return Ok(None);
        }
        residual_sup(&s, beta, &self.opts.quad)
    }

    pub fn evaluate(&self, beta: T) -> Result<ResidualMgf<T>> {
        let fresh = mgf(self.law, beta, &self.opts.quad)?.value;
        let mut points: Vec<(T, T)> = self
            .splits
            .par_iter()
            .map(|(theta, s)| residual_sup(s, beta, &self.opts.quad).map(|v| v.map(|v| (*theta, v))))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        if points.is_empty() {
            return Ok(ResidualMgf {
                beta,
                fresh,
                residual: None,
                residual_argmax: None,
                value: fresh,
            });
        }
        let mut width = self.spacing;
        for _ in 0..self.opts.residual_refine_rounds {
            let (center, _) = points[argmax(&points)];
            let lo = (center - width).max(T::zero());
            let hi = (center + width).min(self.theta_max);
            let n = self.opts.residual_refine_points;
            let extra: Vec<T> = (1..=n)
                .map(|i| lo + (hi - lo) * T::from_count(i) / T::from_count(n + 1))
                .collect();
            let refined: Vec<(T, T)> = extra
                .par_iter()
                .map(|&theta| self.residual_at(theta, beta).map(|v| v.map(|v| (theta, v))))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            points.extend(refined);
            width = (hi - lo) / T::from_count(n + 1);
        }
        let (theta_star, residual) = points[argmax(&points)];
        Ok(ResidualMgf {
            beta,
            fresh,
            residual: Some(residual),
            residual_argmax: Some(theta_star),
            value: fresh.max(residual),
        })
    }
}

pub fn residual_mgf_bound<T: Real, L: RenewalLaw<T>>(
    law: &L,
    theta_max: T,
    beta: T,
    opts: &BoundOptions<T>,
) -> Result<ResidualMgf<T>> {
    ResidualProfile::new(law, theta_max, opts)?.evaluate(beta)
}

/// `Q(Theta) = ( int_0^inf [((C + K + C(s + Theta))(1 + Theta)^K - C) / (1 + s)^(K+1)]^2 ds )^(1/2)`,
/// integrated on `[0, 1)` after `s = u / (1 - u)`.
pub fn example_q<T: Real>(law: &ExampleLaw<T>, theta_max: T, opts: &QuadOptions<T>) -> Result<T> {
    let (c, k) = (law.c(), law.k());
    let scale = (T::one() + theta_max).powf(k);
    let g = |s: T| {
        let num = (c + k + c * (s + theta_max)) * scale - c;
        let r = num / (T::one() + s).powf(k + T::one());
        r * r
    };
    let mapped = |u: T| {
        if u >= T::one() {
            return T::zero();
        }
        let one_minus = T::one() - u;
        g(u / one_minus) / (one_minus * one_minus)
    };
    let e = integrate(mapped, T::zero(), T::one(), opts)?;
    Ok(e.value.sqrt())
}

/// Cauchy-Schwarz bound `sqrt(1 / (2 (C - beta))) Q(Theta)` on the residual MGF of
/// the `C + K/(1+s)` family; finite for `beta < C`.
pub fn example_cauchy_schwarz_bound<T: Real>(
    law: &ExampleLaw<T>,
    theta_max: T,
    beta: T,
    opts: &QuadOptions<T>,
) -> Result<T> {
    if !(beta < law.c()) {
        return Err(Error::DivergentMgf {
            beta: beta.as_f64(),
            threshold: law.c().as_f64(),
        });
    }
    let q = example_q(law, theta_max, opts)?;
    Ok((T::one() / (T::lit(2.0) * (law.c() - beta))).sqrt() * q)
}

/// Result of the admissible-rate search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSearch<T> {
    pub beta0: T,
    pub beta_max: T,
    /// `1 - q M(beta0 (1 - eps), Theta)`, positive for an admissible rate.
    pub margin: T,
}

/// Largest `beta <= beta_max` with `q M(beta, Theta) < 1`, by bisection.
pub fn beta_search<T: Real, L: RenewalLaw<T>>(
    law: &L,
    params: &CouplingParams<T>,
    beta_max: T,
    opts: &BoundOptions<T>,
) -> Result<BetaSearch<T>> {
    let q = params.q;
    if !(q < T::one()) {
        return Err(Error::SeriesDivergent { q: q.as_f64() });
    }
    if !(beta_max > T::zero()) {
        return Err(Error::Domain(format!(
            "beta_max must be positive, got {}",
            beta_max.as_f64()
        )));
    }
    let cap = law.mgf_abscissa().map_or(beta_max, |a| beta_max.min(a));
    if q == T::zero() {
        return Ok(BetaSearch {
            beta0: cap,
            beta_max,
            margin: T::one(),
        });
    }
    let profile = ResidualProfile::new(law, params.theta, opts)?;
    let admissible = |beta: T| -> Result<Option<T>> {
        match profile.evaluate(beta) {
            Ok(m) => Ok((q * m.value < T::one()).then_some(T::one() - q * m.value)),
            Err(Error::DivergentMgf { .. }) | Err(Error::DivergentIntegral { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let backoff = T::one() - opts.beta_backoff;
    if cap < law.mgf_abscissa().unwrap_or(T::infinity()) && admissible(cap)?.is_some() {
        let margin = admissible(cap * backoff)?.unwrap_or(T::zero());
        return Ok(BetaSearch {
            beta0: cap,
            beta_max,
            margin,
        });
    }
    let (mut lo, mut hi) = (T::zero(), cap);
    while hi - lo > opts.beta_rel_tol * hi {
        let mid = T::lit(0.5) * (lo + hi);
        if admissible(mid)?.is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi < opts.beta_min {
            break;
        }
    }
    if lo < opts.beta_min {
        return Err(Error::NoExponentialRate {
            q: q.as_f64(),
            beta_min: opts.beta_min.as_f64(),
        });
    }
    let margin = admissible(lo * backoff)?.unwrap_or(T::zero());
    Ok(BetaSearch {
        beta0: lo,
        beta_max,
        margin,
    })
}

/// Components of the exponential bound on `E exp(beta tau(b, b'))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpBound<T> {
    pub beta: T,
    pub m: ResidualMgf<T>,
    /// `E exp(beta t1)`, `E exp(beta t1')`.
    pub forward_mgf: [T; 2],
    pub xi_mgf: T,
    pub value: T,
}

/// `E e^{beta t1} E e^{beta t1'} E e^{beta xi} / (1 - q M(beta, Theta))`.
pub fn exp_bound<T: Real, L: RenewalLaw<T>>(
    law: &L,
    b: T,
    b_prime: T,
    params: &CouplingParams<T>,
    beta: T,
    opts: &BoundOptions<T>,
) -> Result<ExpBound<T>> {
    let m = residual_mgf_bound(law, params.theta, beta, opts)?;
    exp_bound_with(law, b, b_prime, params, &m, opts)
}

pub(crate) fn exp_bound_with<T: Real, L: RenewalLaw<T>>(
    law: &L,
    b: T,
    b_prime: T,
    params: &CouplingParams<T>,
    m: &ResidualMgf<T>,
    opts: &BoundOptions<T>,
) -> Result<ExpBound<T>> {
    let beta = m.beta;
    let denom = T::one() - params.q * m.value;
    if !(denom > T::zero()) {
        return Err(Error::RateInadmissible {
            q_m: (params.q * m.value).as_f64(),
        });
    }
    let f1 = mgf(&forward_law(law, b)?, beta, &opts.quad)?.value;
    let f2 = mgf(&forward_law(law, b_prime)?, beta, &opts.quad)?.value;
    let xi = mgf(law, beta, &opts.quad)?.value;
    Ok(ExpBound {
        beta,
        m: *m,
        forward_mgf: [f1, f2],
        xi_mgf: xi,
        value: f1 * f2 * xi / denom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Exponential;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exponential_m_is_plain_mgf() {
        let law = Exponential::new(1.0).unwrap();
        let m = residual_mgf_bound(&law, 4.0, 0.1, &BoundOptions::default()).unwrap();
        assert!(m.residual.is_none());
        assert_abs_diff_eq!(m.value, 10.0 / 9.0, epsilon = 1e-9);
        let m0 = residual_mgf_bound(&law, 4.0, 0.0, &BoundOptions::default()).unwrap();
        assert_eq!(m0.value, 1.0);
    }

    #[test]
    fn example_m_at_zero_rate_is_one() {
        let law = ExampleLaw::new(1.0, 2.0).unwrap();
        let m = residual_mgf_bound(&law, 2.0, 0.0, &BoundOptions::default()).unwrap();
        assert_abs_diff_eq!(m.value, 1.0, epsilon = 1e-9);
        assert!(m.residual.is_some());
    }

    #[test]
    fn example_m_below_cauchy_schwarz() {
        let law = ExampleLaw::new(1.0, 2.0).unwrap();
        let opts = BoundOptions::default();
        let m = residual_mgf_bound(&law, 2.0, 0.2, &opts).unwrap();
        let cs = example_cauchy_schwarz_bound(&law, 2.0, 0.2, &opts.quad).unwrap();
        assert!(m.value <= cs, "{} > {}", m.value, cs);
        assert!(m.residual.unwrap() > 1.0);
        assert!(matches!(
            example_cauchy_schwarz_bound(&law, 2.0, 1.0, &opts.quad),
            Err(Error::DivergentMgf { .. })
        ));
    }

    #[test]
    fn example_q_against_direct_quadrature() {
        let law = ExampleLaw::new(1.0, 3.0).unwrap();
        let theta = 1.5f64;
        let direct = crate::quadrature::integrate_to_infinity(
            |s| {
                let num = (1.0 + 3.0 + (s + theta)) * (1.0 + theta).powi(3) - 1.0;
                (num / (1.0 + s).powi(4)).powi(2)
            },
            0.0,
            50.0,
            &QuadOptions::default(),
        )
        .unwrap()
        .value
        .sqrt();
        let q = example_q(&law, theta, &QuadOptions::default()).unwrap();
        assert_abs_diff_eq!(q, direct, epsilon = 1e-8 * direct);
    }

    #[test]
    fn exponential_beta_search_and_exp_bound() {
        let law = Exponential::new(1.0).unwrap();
        let opts = BoundOptions::default();
        let params = CouplingParams::compute(&law, 4.0, &opts).unwrap();
        let found = beta_search(&law, &params, 1.0, &opts).unwrap();
        assert_abs_diff_eq!(found.beta0, 0.5, epsilon = 1e-6);
        assert!(found.margin > 0.0);
        let e = exp_bound(&law, 0.0, 0.0, &params, 0.1, &opts).unwrap();
        assert_abs_diff_eq!(e.value, 9000.0 / 2916.0, epsilon = 1e-8);
        let e0 = exp_bound(&law, 0.0, 0.0, &params, 0.0, &opts).unwrap();
        assert_abs_diff_eq!(e0.value, 1.0 / (1.0 - params.q), epsilon = 1e-12);
        assert!(matches!(
            exp_bound(&law, 0.0, 0.0, &params, 0.6, &opts),
            Err(Error::RateInadmissible { .. })
        ));
    }

    #[test]
    fn q_zero_gives_beta_max() {
        let law = Exponential::new(1.0).unwrap();
        let params = CouplingParams {
            theta: 4.0,
            r: 2.0,
            p0: 1.0,
            kappa_theta: 1.0,
            pi: 1.0,
            q: 0.0,
        };
        let found = beta_search(&law, &params, 0.7, &BoundOptions::default()).unwrap();
        assert_eq!(found.beta0, 0.7);
    }

    #[test]
    fn example_beta_search_is_verified() {
        let law = ExampleLaw::new(1.0, 2.0).unwrap();
        let opts = BoundOptions::default();
        let params = CouplingParams::compute(&law, 2.0, &opts).unwrap();
        let found = beta_search(&law, &params, law.c(), &opts).unwrap();
        assert!(found.beta0 > 0.0 && found.beta0 < 1.0, "{found:?}");
        assert!(found.margin > 0.0);
        let half = residual_mgf_bound(&law, 2.0, 0.5 * found.beta0, &opts).unwrap();
        assert!(params.q * half.value < 1.0);
    }
}
