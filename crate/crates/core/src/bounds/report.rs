use serde::{Deserialize, Serialize};

use super::exponential::exp_bound_with;
use super::tv::{integrated_exp, integrated_poly};
use super::{
    beta_search, default_threshold, example_cauchy_schwarz_bound, example_q, kappa_theta,
    lorden_p0, poly_bound_with, BetaSearch, BoundOptions, CouplingParams, ExpBound, KappaTheta,
    PolyBound, ResidualProfile, TvCurve, TvMode, TvPoint,
};
use crate::coupling::SplitOptions;
use crate::dist::{Law, LawSpec, RenewalLaw};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_to_infinity, QuadOptions};

/// Numerical tolerances echoed into every report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub quad_abs_tol: f64,
    pub quad_rel_tol: f64,
    pub quad_max_intervals: usize,
    pub split_grid: usize,
    pub kappa_grid: usize,
    pub residual_grid: usize,
    pub series_tol: f64,
    pub beta_rel_tol: f64,
    pub beta_min: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let o = BoundOptions::<f64>::default();
        Self {
            quad_abs_tol: o.quad.abs_tol,
            quad_rel_tol: o.quad.rel_tol,
            quad_max_intervals: o.quad.max_intervals,
            split_grid: o.split.grid,
            kappa_grid: o.kappa_grid,
            residual_grid: o.residual_grid,
            series_tol: o.series_tol,
            beta_rel_tol: o.beta_rel_tol,
            beta_min: o.beta_min,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("quad_abs_tol", self.quad_abs_tol),
            ("quad_rel_tol", self.quad_rel_tol),
            ("series_tol", self.series_tol),
            ("beta_rel_tol", self.beta_rel_tol),
            ("beta_min", self.beta_min),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("tolerances.{field}"), format!("must be positive, got {v}")));
            }
        }
        let counts = [
            ("quad_max_intervals", self.quad_max_intervals),
            ("split_grid", self.split_grid),
            ("kappa_grid", self.kappa_grid),
            ("residual_grid", self.residual_grid),
        ];
        for (field, v) in counts {
            if v < 2 {
                return Err(Error::validation(format!("tolerances.{field}"), format!("must be >= 2, got {v}")));
            }
        }
        Ok(())
    }

    pub fn options(&self) -> BoundOptions<f64> {
        BoundOptions {
            quad: QuadOptions {
                abs_tol: self.quad_abs_tol,
                rel_tol: self.quad_rel_tol,
                max_intervals: self.quad_max_intervals,
            },
            split: SplitOptions {
                grid: self.split_grid,
            },
            kappa_grid: self.kappa_grid,
            residual_grid: self.residual_grid,
            series_tol: self.series_tol,
            beta_rel_tol: self.beta_rel_tol,
            beta_min: self.beta_min,
            ..BoundOptions::default()
        }
    }
}

/// Inputs of a bound computation. `None` for `theta` / `betas` means "auto":
/// `Theta = 2R` and `beta = beta0 / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRequest {
    pub law: LawSpec,
    pub b: f64,
    pub b_prime: f64,
    pub theta: Option<f64>,
    pub ells: Vec<f64>,
    pub betas: Option<Vec<f64>>,
    /// Upper end of the rate search; defaults to the MGF abscissa of the law.
    pub beta_max: Option<f64>,
    pub t_grid: Vec<f64>,
    pub tolerances: Tolerances,
}

impl BoundRequest {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("b", self.b), ("b_prime", self.b_prime)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(field, format!("must be a finite time >= 0, got {v}")));
            }
        }
        if let Some(theta) = self.theta {
            if !(theta > 0.0 && theta.is_finite()) {
                return Err(Error::validation("theta", format!("must be positive, got {theta}")));
            }
        }
        if let Some(&ell) = self.ells.iter().find(|&&l| !(l >= 1.0 && l.is_finite())) {
            return Err(Error::validation("ells", format!("orders must be >= 1, got {ell}")));
        }
        if let Some(betas) = &self.betas {
            if let Some(&beta) = betas.iter().find(|&&x| !(x >= 0.0 && x.is_finite())) {
                return Err(Error::validation("betas", format!("rates must be >= 0, got {beta}")));
            }
        }
        if let Some(bm) = self.beta_max {
            if !(bm > 0.0) {
                return Err(Error::validation("beta_max", format!("must be positive, got {bm}")));
            }
        }
        if let Some(&t) = self.t_grid.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::validation("t_grid", format!("times must be positive, got {t}")));
        }
        if self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("t_grid", "times must be strictly increasing"));
        }
        self.tolerances.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyEntry {
    #[serde(flatten)]
    pub bound: PolyBound<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpEntry {
    #[serde(flatten)]
    pub bound: ExpBound<f64>,
    /// `sqrt(1 / (2 (C - beta))) Q(Theta)` for the example family.
    pub cauchy_schwarz: Option<f64>,
}

/// Quantities specific to the `C + K/(1+s)` hazard family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleDiagnostics {
    pub c: f64,
    pub k: f64,
    pub gamma1: f64,
    /// `None` when infinite (`K <= 2`).
    pub gamma2: Option<f64>,
    /// `Gamma2 / Gamma1`.
    pub r_hat: Option<f64>,
    /// `Q(Theta)`.
    pub q_theta: f64,
    /// `int C e^{-Cs} (1 + s + Theta)^{-K-1} ds`.
    pub minorant_integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub law: LawSpec,
    pub b: f64,
    pub b_prime: f64,
    pub theta: f64,
    pub theta_auto: bool,
    pub betas_auto: bool,
    pub beta_max: f64,
    pub tolerances: Tolerances,
    pub params: CouplingParams<f64>,
    pub kappa: KappaTheta<f64>,
    pub poly: Vec<PolyEntry>,
    pub beta_search: Option<BetaSearch<f64>>,
    /// Why `beta_search` is absent.
    pub beta_search_error: Option<String>,
    pub exp: Vec<ExpEntry>,
    pub example: Option<ExampleDiagnostics>,
    pub tv_curves: Vec<TvCurve<f64>>,
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl BoundReport {
    pub fn compute(req: &BoundRequest) -> Result<Self> {
        req.validate()?;
        let law = Law::<f64>::from_spec(&req.law)?;
        let opts = req.tolerances.options();
        let theta = match req.theta {
            Some(t) => t,
            None => default_threshold(&law, &opts.quad)?,
        };
        let lorden = lorden_p0(&law, theta, &opts.quad)?;
        let kappa = kappa_theta(&law, theta, opts.kappa_grid, &opts)?;
        let params = CouplingParams::from_parts(theta, lorden, kappa.value);

        let mut tv_curves = Vec::new();
        let mut poly = Vec::with_capacity(req.ells.len());
        for &ell in &req.ells {
            let bound = poly_bound_with(&law, req.b, req.b_prime, &params, ell, &opts)?;
            poly.push(PolyEntry { bound });
            let integrated = integrated_poly(&law, req.b, &params, ell, &opts)?;
            tv_curves.push(curve(TvMode::Poly { ell }, integrated, &req.t_grid));
        }

        let beta_max = match (req.beta_max, law.mgf_abscissa()) {
            (Some(bm), _) => bm,
            (None, Some(a)) => a,
            (None, None) => return Err(Error::validation("beta_max", "required for laws without an MGF abscissa")),
        };
        let (beta_found, beta_search_error) = match beta_search(&law, &params, beta_max, &opts) {
            Ok(s) => (Some(s), None),
            Err(e @ Error::NoExponentialRate { .. }) if req.betas.is_none() => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        let betas = match &req.betas {
            Some(list) => list.clone(),
            None => beta_found.iter().map(|s| 0.5 * s.beta0).collect(),
        };
        let example = law.as_example();
        let mut exp = Vec::with_capacity(betas.len());
        if !betas.is_empty() {
            let profile = ResidualProfile::new(&law, theta, &opts)?;
            for beta in betas {
                let m = profile.evaluate(beta)?;
                let bound = exp_bound_with(&law, req.b, req.b_prime, &params, &m, &opts)?;
                let cauchy_schwarz = example
                    .and_then(|e| example_cauchy_schwarz_bound(e, theta, beta, &opts.quad).ok())
                    .and_then(finite_or_none);
                exp.push(ExpEntry {
                    bound,
                    cauchy_schwarz,
                });
                let integrated = integrated_exp(&law, req.b, &params, &m, &opts)?;
                tv_curves.push(curve(TvMode::Exp { beta }, integrated, &req.t_grid));
            }
        }

        let example = match example {
            Some(e) => {
                let minorant =
                    integrate_to_infinity(|s| e.minorant(s, theta), 0.0, crate::dist::tail_horizon(e), &opts.quad)?;
                let (g1, g2) = (e.gamma1(), e.gamma2());
                Some(ExampleDiagnostics {
                    c: e.c(),
                    k: e.k(),
                    gamma1: g1,
                    gamma2: finite_or_none(g2),
                    r_hat: finite_or_none(g2 / g1),
                    q_theta: example_q(e, theta, &opts.quad)?,
                    minorant_integral: minorant.value,
                })
            }
            None => None,
        };

        Ok(Self {
            law: req.law.clone(),
            b: req.b,
            b_prime: req.b_prime,
            theta,
            theta_auto: req.theta.is_none(),
            betas_auto: req.betas.is_none(),
            beta_max,
            tolerances: req.tolerances,
            params,
            kappa,
            poly,
            beta_search: beta_found,
            beta_search_error,
            exp,
            example,
            tv_curves,
        })
    }

    /// Pointwise minimum over all TV curves, on the shared time grid.
    pub fn tightest_tv(&self) -> Vec<TvPoint<f64>> {
        let Some(first) = self.tv_curves.first() else {
            return Vec::new();
        };
        first
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| TvPoint {
                t: p.t,
                bound: self
                    .tv_curves
                    .iter()
                    .map(|c| c.points[i].bound)
                    .fold(f64::INFINITY, f64::min),
            })
            .collect()
    }

    /// Internal consistency of a (possibly re-read) report.
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        if !(p.theta > p.r) {
            return Err(Error::validation("params.theta", format!("{} must exceed R = {}", p.theta, p.r)));
        }
        if !close(p.p0, 1.0 - p.r / p.theta) || !(p.p0 > 0.0 && p.p0 <= 1.0) {
            return Err(Error::validation("params.p0", format!("{} inconsistent with R and theta", p.p0)));
        }
        if !(p.kappa_theta > 0.0 && p.kappa_theta <= 1.0) || !close(self.kappa.value, p.kappa_theta) {
            return Err(Error::validation("params.kappa_theta", format!("{} out of (0, 1]", p.kappa_theta)));
        }
        if !close(p.pi, p.p0 * p.kappa_theta) || !close(p.q, 1.0 - p.pi) || !(p.q >= 0.0 && p.q < 1.0) {
            return Err(Error::validation("params.q", format!("{} inconsistent with p0 kappa", p.q)));
        }
        for e in &self.poly {
            if !(e.bound.value >= e.bound.sum_moment) {
                return Err(Error::validation("poly", format!("bound below E(t1+t1')^l at l = {}", e.bound.ell)));
            }
        }
        for e in &self.exp {
            let b = &e.bound;
            if !(b.value >= b.forward_mgf[0] * b.forward_mgf[1] * b.xi_mgf) {
                return Err(Error::validation("exp", format!("bound below the MGF product at beta = {}", b.beta)));
            }
            if !(p.q * b.m.value < 1.0) {
                return Err(Error::validation("exp", format!("q M >= 1 at beta = {}", b.beta)));
            }
        }
        for c in &self.tv_curves {
            let ok = c.points.iter().all(|x| x.bound >= 0.0 && x.bound <= 1.0)
                && c.points.windows(2).all(|w| w[0].t < w[1].t && w[1].bound <= w[0].bound);
            if !ok {
                return Err(Error::validation("tv_curves", "curve must lie in [0, 1] and be nonincreasing"));
            }
        }
        Ok(())
    }
}

fn curve(mode: TvMode<f64>, integrated: f64, t_grid: &[f64]) -> TvCurve<f64> {
    let points = t_grid
        .iter()
        .map(|&t| {
            let decay = match mode {
                TvMode::Poly { ell } => t.powf(-ell),
                TvMode::Exp { beta } => (-beta * t).exp(),
            };
            TvPoint {
                t,
                bound: (integrated * decay).min(1.0),
            }
        })
        .collect();
    TvCurve {
        mode,
        integrated,
        points,
    }
}
