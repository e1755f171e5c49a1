use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::TV_NOTE;
use super::{
    empirical_tv_curve, estimate_tau_functionals, lorden_check, simulate_pair, stream_rng,
    LordenCheck, SimError, SimOptions, SimResult, TauEstimate, TauFunctional, TvEstimate,
};
use crate::bounds::{beta_search, default_threshold, BoundReport, BoundRequest, CouplingParams};
use crate::dist::{moment, Law, RenewalLaw};
use crate::error::Error;

const PURPOSE_PAIR: u8 = 0;

/// Everything needed to reproduce a bound + simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub request: BoundRequest,
    /// Coupled pairs simulated for the epoch statistics.
    pub replicas: usize,
    /// Copies of `B_t` per grid time for the empirical TV; at least 1000.
    pub tv_replicas: usize,
    pub seed: u64,
    /// Histogram bins; `ceil(N^(1/3))` when absent.
    pub bins: Option<usize>,
    pub event_cap: usize,
    pub lorden_replicas: usize,
    /// Lorden horizon in units of `E xi`.
    pub lorden_horizon: f64,
    pub lorden_grid: usize,
}

impl ExperimentConfig {
    pub fn new(request: BoundRequest, replicas: usize, seed: u64) -> Self {
        Self {
            request,
            replicas,
            tv_replicas: replicas,
            seed,
            bins: None,
            event_cap: 1_000_000,
            lorden_replicas: 10_000,
            lorden_horizon: 50.0,
            lorden_grid: 50,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.request.validate()?;
        if self.replicas == 0 {
            return Err(Error::validation("replicas", "must be at least 1"));
        }
        if !self.request.t_grid.is_empty() && self.tv_replicas < 1000 {
            return Err(Error::validation(
                "tv_replicas",
                format!("empirical TV needs at least 1000 copies, got {}", self.tv_replicas),
            ));
        }
        if self.bins == Some(0) {
            return Err(Error::validation("bins", "must be at least 1"));
        }
        if self.event_cap == 0 {
            return Err(Error::validation("event_cap", "must be at least 1"));
        }
        if self.lorden_replicas > 0 && !(self.lorden_horizon > 0.0 && self.lorden_grid > 0) {
            return Err(Error::validation("lorden_horizon", "horizon and grid must be positive"));
        }
        Ok(())
    }
}

/// Attempt-level counts aggregated over all replicas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AttemptStats {
    pub lead_renewals: usize,
    pub eligible: usize,
    pub blocked: usize,
    pub draws: usize,
    pub hits: usize,
    /// Fraction of lead renewals with the other backward time `<= Theta`.
    pub eligible_fraction: f64,
    pub eligible_fraction_se: f64,
    /// `hits / draws`.
    pub success_rate: f64,
    /// Mean overlap of the splits actually drawn from.
    pub mean_kappa: f64,
    /// `sqrt(sum kappa (1 - kappa)) / draws`.
    pub success_rate_se: f64,
    #[serde(skip)]
    kappa_sum: f64,
    #[serde(skip)]
    kappa_var: f64,
}

impl AttemptStats {
    fn merge(mut self, o: &AttemptStats) -> Self {
        self.lead_renewals += o.lead_renewals;
        self.eligible += o.eligible;
        self.blocked += o.blocked;
        self.draws += o.draws;
        self.hits += o.hits;
        self.kappa_sum += o.kappa_sum;
        self.kappa_var += o.kappa_var;
        self
    }

    fn finish(mut self) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        self.eligible_fraction = ratio(self.eligible, self.lead_renewals);
        let p = self.eligible_fraction;
        self.eligible_fraction_se = if self.lead_renewals == 0 {
            0.0
        } else {
            (p * (1.0 - p) / self.lead_renewals as f64).sqrt()
        };
        self.success_rate = ratio(self.hits, self.draws);
        if self.draws > 0 {
            self.mean_kappa = self.kappa_sum / self.draws as f64;
            self.success_rate_se = self.kappa_var.sqrt() / self.draws as f64;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub replicas: usize,
    pub b: f64,
    pub b_prime: f64,
    pub theta: f64,
    pub tau_samples: Vec<f64>,
    pub moments: Vec<TauEstimate>,
    pub empirical_tv: Vec<TvEstimate>,
    pub tv_note: String,
    pub attempt_success_rate: f64,
    pub attempts: AttemptStats,
    pub lorden: Option<LordenCheck>,
}

impl SimReport {
    /// Internal consistency of a (possibly re-read) report.
    pub fn validate(&self) -> Result<(), Error> {
        if self.tau_samples.len() != self.replicas {
            return Err(Error::validation(
                "tau_samples",
                format!("{} samples for {} replicas", self.tau_samples.len(), self.replicas),
            ));
        }
        if let Some(t) = self.tau_samples.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(Error::validation("tau_samples", format!("sample {t} is not a finite time")));
        }
        for m in &self.moments {
            if !(m.estimate.is_finite() && m.std_error.is_finite() && m.std_error >= 0.0) {
                return Err(Error::validation("moments", format!("non-finite estimate {m:?}")));
            }
            let again = estimate_tau_functionals(&self.tau_samples, m.functional)?;
            let close = (again.estimate - m.estimate).abs() <= 1e-12 * (1.0 + m.estimate.abs());
            if !close {
                return Err(Error::validation("moments", "estimate does not match tau_samples"));
            }
        }
        if let Some(e) = self.empirical_tv.iter().find(|e| !(0.0..=1.0).contains(&e.estimate)) {
            return Err(Error::validation("empirical_tv", format!("estimate {} outside [0, 1]", e.estimate)));
        }
        if !(0.0..=1.0).contains(&self.attempt_success_rate) {
            return Err(Error::validation("attempt_success_rate", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One dominance or consistency verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub estimate: f64,
    /// `le`: estimate <= reference + margin; `ge`: estimate >= reference - margin;
    /// `within`: |estimate - reference| <= margin.
    pub relation: String,
    pub reference: f64,
    pub margin: f64,
    pub pass: bool,
}

impl Verdict {
    fn le(name: String, estimate: f64, reference: f64, margin: f64) -> Self {
        let pass = estimate <= reference + margin;
        Self::new(name, estimate, "le", reference, margin, pass)
    }

    fn new(name: String, estimate: f64, relation: &str, reference: f64, margin: f64, pass: bool) -> Self {
        Self {
            name,
            estimate,
            relation: relation.to_string(),
            reference,
            margin,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub bounds: BoundReport,
    pub sim: SimReport,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
}

/// Resolve "auto" threshold and rates without computing the full bound report.
pub fn resolve_simulation_inputs(cfg: &ExperimentConfig) -> Result<(f64, Vec<TauFunctional>), Error> {
    let req = &cfg.request;
    let law = Law::<f64>::from_spec(&req.law)?;
    let opts = req.tolerances.options();
    let theta = match req.theta {
        Some(t) => t,
        None => default_threshold(&law, &opts.quad)?,
    };
    let mut functionals: Vec<TauFunctional> =
        req.ells.iter().map(|&ell| TauFunctional::Moment { ell }).collect();
    let betas = match &req.betas {
        Some(list) => list.clone(),
        None => {
            let params = CouplingParams::compute(&law, theta, &opts)?;
            let beta_max = req.beta_max.or(law.mgf_abscissa()).unwrap_or(1.0);
            match beta_search(&law, &params, beta_max, &opts) {
                Ok(s) => vec![0.5 * s.beta0],
                Err(Error::NoExponentialRate { .. }) => Vec::new(),
                Err(e) => return Err(e),
            }
        }
    };
    functionals.extend(betas.into_iter().map(|beta| TauFunctional::Exp { beta }));
    Ok((theta, functionals))
}

/// Simulate the coupled pairs, the empirical TV curve and the Lorden check.
pub fn run_simulation(
    cfg: &ExperimentConfig,
    theta: f64,
    functionals: &[TauFunctional],
) -> SimResult<SimReport> {
    cfg.validate()?;
    let req = &cfg.request;
    let law = Law::<f64>::from_spec(&req.law)?;
    let mut opts = SimOptions::new(theta);
    opts.event_cap = cfg.event_cap;
    opts.split.grid = req.tolerances.split_grid;

    let runs: Vec<(f64, AttemptStats)> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, PURPOSE_PAIR, i);
            let state = simulate_pair(&law, req.b, req.b_prime, &opts, &mut rng)?;
            let mut s = AttemptStats {
                lead_renewals: state.attempt_log.len(),
                ..AttemptStats::default()
            };
            for a in &state.attempt_log {
                s.eligible += a.eligible as usize;
                s.blocked += a.blocked as usize;
                s.hits += a.hit as usize;
                if let Some(k) = a.kappa {
                    s.draws += 1;
                    s.kappa_sum += k;
                    s.kappa_var += k * (1.0 - k);
                }
            }
            let tau = state.coupled_at.expect("run without horizon ends coupled");
            Ok((tau, s))
        })
        .collect::<SimResult<_>>()
        .map_err(SimError::stage("coupled pairs"))?;
    let attempts = runs
        .iter()
        .fold(AttemptStats::default(), |acc, (_, s)| acc.merge(s))
        .finish();
    let tau_samples: Vec<f64> = runs.into_iter().map(|(t, _)| t).collect();
    let moments = functionals
        .iter()
        .map(|&f| estimate_tau_functionals(&tau_samples, f))
        .collect::<Result<Vec<_>, _>>()?;

    let empirical_tv = empirical_tv_curve(&law, req.b, &req.t_grid, cfg.tv_replicas, cfg.bins, cfg.seed)
        .map_err(|e| SimError::stage("empirical tv")(e.into()))?;
    let lorden = if cfg.lorden_replicas > 0 {
        let mean = moment(&law, 1.0, &req.tolerances.options().quad)?.value;
        let check = lorden_check(
            &law,
            cfg.lorden_horizon * mean,
            cfg.lorden_replicas,
            cfg.lorden_grid,
            cfg.seed,
        )
        .map_err(|e| SimError::stage("lorden check")(e.into()))?;
        Some(check)
    } else {
        None
    };

    Ok(SimReport {
        seed: cfg.seed,
        replicas: cfg.replicas,
        b: req.b,
        b_prime: req.b_prime,
        theta,
        tau_samples,
        moments,
        empirical_tv,
        tv_note: TV_NOTE.to_string(),
        attempt_success_rate: attempts.success_rate,
        attempts,
        lorden,
    })
}

/// Bounds, simulation with the resolved parameters, and dominance verdicts.
pub fn run_experiment(cfg: &ExperimentConfig) -> SimResult<ExperimentReport> {
    cfg.validate()?;
    let bounds = BoundReport::compute(&cfg.request).map_err(|e| SimError::stage("bounds")(e.into()))?;
    let functionals: Vec<TauFunctional> = bounds
        .poly
        .iter()
        .map(|p| TauFunctional::Moment { ell: p.bound.ell })
        .chain(bounds.exp.iter().map(|e| TauFunctional::Exp { beta: e.bound.beta }))
        .collect();
    let sim = run_simulation(cfg, bounds.theta, &functionals)?;
    let verdicts = verdicts(&bounds, &sim);
    let pass = verdicts.iter().all(|v| v.pass);
    Ok(ExperimentReport {
        bounds,
        sim,
        verdicts,
        pass,
    })
}

fn verdicts(bounds: &BoundReport, sim: &SimReport) -> Vec<Verdict> {
    let mut out = Vec::new();
    let bound_values = bounds
        .poly
        .iter()
        .map(|p| p.bound.value)
        .chain(bounds.exp.iter().map(|e| e.bound.value));
    for (m, bound) in sim.moments.iter().zip(bound_values) {
        let name = match m.functional {
            TauFunctional::Moment { ell } => format!("E tau^{ell} <= poly"),
            TauFunctional::Exp { beta } => format!("E exp({beta} tau) <= exp"),
        };
        out.push(Verdict::le(name, m.estimate, bound, 3.0 * m.std_error));
    }
    for (est, bound) in sim.empirical_tv.iter().zip(bounds.tightest_tv()) {
        out.push(Verdict::le(
            format!("tv(t={}) <= bound", est.t),
            est.estimate,
            bound.bound,
            est.noise_margin,
        ));
    }
    if let Some(l) = &sim.lorden {
        let k = l.t_grid.iter().position(|&t| t == l.sup_time).unwrap_or(0);
        out.push(Verdict::new(
            "sup_t E B_t <= R".into(),
            l.sup_mean,
            "le",
            l.r,
            3.0 * l.std_errors[k],
            l.pass,
        ));
    }
    let a = &sim.attempts;
    if a.draws > 0 {
        let margin = 3.0 * a.success_rate_se + 1e-9;
        out.push(Verdict::new(
            "attempt success rate ~ kappa".into(),
            a.success_rate,
            "within",
            a.mean_kappa,
            margin,
            (a.success_rate - a.mean_kappa).abs() <= margin,
        ));
    }
    if a.lead_renewals > 0 {
        let margin = 3.0 * a.eligible_fraction_se;
        out.push(Verdict::new(
            "eligible fraction >= p0".into(),
            a.eligible_fraction,
            "ge",
            bounds.params.p0,
            margin,
            a.eligible_fraction >= bounds.params.p0 - margin,
        ));
    }
    out
}
