//! Simulation of the coupled pair of backward-renewal-time processes.
//!
//! Two renewal processes with the same period law start with backward times
//! `b` and `b'`. From the later of the two first renewals on, every renewal of
//! that process (the lead) is an attempt time: if the other process has
//! backward time `theta <= Theta`, the lead's next period and the other's
//! remaining time are drawn jointly from the split of `f` and `f_theta^W`.
//! A coinciding draw ends the run; otherwise both processes continue with the
//! drawn residual values.
//!
//! The two residual draws of a failed attempt share one uniform, so while the
//! other process still runs on such a draw its remaining time is a function of
//! the lead's, not an `f_theta^W` variable. Attempts in that state are logged
//! as blocked and skipped, which keeps both marginals exact.

mod experiment;
mod stats;

pub use experiment::{
    resolve_simulation_inputs, run_experiment, run_simulation, AttemptStats, ExperimentConfig, ExperimentReport, SimReport,
    Verdict,
};
pub use stats::{
    empirical_tv, empirical_tv_curve, estimate_tau_functionals, histogram_tv, histogram_tv_two_sample,
    jackknife_mean, ks_critical, ks_one_sample, ks_two_sample, lorden_check, LordenCheck,
    TauEstimate, TauFunctional, TvEstimate,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::{coupled_sample, split_with, SplitOptions};
use crate::dist::{forward_law, sample, RenewalLaw};
use crate::error::Error;

/// One renewal of the lead process after the first common time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub time: f64,
    /// Backward time of the other process at `time`.
    pub theta: f64,
    /// `theta <= Theta`.
    pub eligible: bool,
    pub blocked: bool,
    /// Overlap of the split used, when a draw was made.
    pub kappa: Option<f64>,
    pub hit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Renewals {
    last: f64,
    next: f64,
    /// `next` comes from the residual branch of a failed attempt.
    residual: bool,
}

/// Snapshot of a coupled run. `b` and `b_prime` are the backward times at `clock`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub clock: f64,
    pub b: f64,
    pub b_prime: f64,
    pub coupled_at: Option<f64>,
    pub attempt_log: Vec<AttemptRecord>,
    procs: [Renewals; 2],
    lead: usize,
    events: usize,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event cap {cap} exceeded at time {}", .state.clock)]
    CapExceeded { cap: usize, state: Box<CoupledState> },
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<SimError>,
    },
    #[error(transparent)]
    Core(#[from] Error),
}

impl SimError {
    /// The innermost core error, if any.
    pub fn core(&self) -> Option<&Error> {
        match self {
            SimError::Core(e) => Some(e),
            SimError::Stage { source, .. } => source.core(),
            SimError::CapExceeded { .. } => None,
        }
    }

    pub(crate) fn stage(stage: impl Into<String>) -> impl FnOnce(SimError) -> SimError {
        let stage = stage.into();
        move |e| SimError::Stage {
            stage,
            source: Box::new(e),
        }
    }
}

pub type SimResult<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub theta: f64,
    /// Disable to run the two processes independently.
    pub coupling: bool,
    pub split: SplitOptions,
    /// Maximum number of renewal events processed.
    pub event_cap: usize,
    pub keep_log: bool,
    /// Stop at this time instead of at coupling.
    pub horizon: Option<f64>,
}

impl SimOptions {
    pub fn new(theta: f64) -> Self {
        Self {
            theta,
            coupling: true,
            split: SplitOptions::default(),
            event_cap: 1_000_000,
            keep_log: true,
            horizon: None,
        }
    }
}

/// Counter-based stream: the same `(seed, purpose, index)` always yields the
/// same generator, independent of evaluation order.
pub fn stream_rng(seed: u64, purpose: u8, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | (index & ((1 << 56) - 1)));
    rng
}

impl CoupledState {
    fn start<L: RenewalLaw<f64>, R: Rng + ?Sized>(
        law: &L,
        b: f64,
        b_prime: f64,
        rng: &mut R,
    ) -> Result<Self, Error> {
        for (name, v) in [("b", b), ("b'", b_prime)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be a finite time >= 0, got {v}")));
            }
        }
        if b == b_prime {
            let first = sample(&forward_law(law, b)?, rng);
            let p = Renewals {
                last: -b,
                next: first,
                residual: false,
            };
            return Ok(Self {
                clock: 0.0,
                b,
                b_prime,
                coupled_at: Some(0.0),
                attempt_log: Vec::new(),
                procs: [p, p],
                lead: 0,
                events: 0,
            });
        }
        let t1 = sample(&forward_law(law, b)?, rng);
        let t2 = sample(&forward_law(law, b_prime)?, rng);
        Ok(Self {
            clock: 0.0,
            b,
            b_prime,
            coupled_at: None,
            attempt_log: Vec::new(),
            procs: [
                Renewals {
                    last: -b,
                    next: t1,
                    residual: false,
                },
                Renewals {
                    last: -b_prime,
                    next: t2,
                    residual: false,
                },
            ],
            lead: if t1 >= t2 { 0 } else { 1 },
            events: 0,
        })
    }

    fn set_clock(&mut self, t: f64) {
        self.clock = t;
        self.b = t - self.procs[0].last;
        self.b_prime = t - self.procs[1].last;
    }

    fn tick(&mut self, cap: usize) -> SimResult<()> {
        if self.events >= cap {
            return Err(SimError::CapExceeded {
                cap,
                state: Box::new(self.clone()),
            });
        }
        self.events += 1;
        Ok(())
    }

    /// Run forward until coupling (or the horizon), continuing from the
    /// current snapshot; a state returned by `CapExceeded` can be resumed with
    /// a larger cap.
    pub fn resume<L: RenewalLaw<f64>, R: Rng + ?Sized>(
        &mut self,
        law: &L,
        opts: &SimOptions,
        rng: &mut R,
    ) -> SimResult<()> {
        loop {
            if let Some(tau) = self.coupled_at {
                let Some(h) = opts.horizon else {
                    self.procs[1 - self.lead] = self.procs[self.lead];
                    self.set_clock(tau.max(self.clock));
                    if tau > 0.0 {
                        self.b = 0.0;
                        self.b_prime = 0.0;
                    }
                    return Ok(());
                };
                if tau > h {
                    self.set_clock(h);
                    return Ok(());
                }
                let mut p = self.procs[self.lead];
                while p.next <= h {
                    self.tick(opts.event_cap)?;
                    p.last = p.next;
                    p.next += sample(law, rng);
                }
                self.procs = [p, p];
                self.set_clock(h);
                return Ok(());
            }
            let (lead, other) = (self.lead, 1 - self.lead);
            let t = self.procs[lead].next;
            if let Some(h) = opts.horizon {
                if t > h {
                    while self.procs[other].next <= h {
                        self.tick(opts.event_cap)?;
                        let n = self.procs[other].next;
                        self.procs[other] = Renewals {
                            last: n,
                            next: n + sample(law, rng),
                            residual: false,
                        };
                    }
                    self.set_clock(h);
                    return Ok(());
                }
            }
            self.tick(opts.event_cap)?;
            self.procs[lead].last = t;
            while self.procs[other].next <= t {
                self.tick(opts.event_cap)?;
                let n = self.procs[other].next;
                self.procs[other] = Renewals {
                    last: n,
                    next: n + sample(law, rng),
                    residual: false,
                };
            }
            self.set_clock(t);
            let theta = t - self.procs[other].last;
            let eligible = opts.coupling && theta <= opts.theta;
            let blocked = eligible && self.procs[other].residual;
            let mut record = AttemptRecord {
                time: t,
                theta,
                eligible,
                blocked,
                kappa: None,
                hit: false,
            };
            if eligible && !blocked {
                let split = split_with(law, forward_law(law, theta)?, &opts.split)?;
                let (u, u1, u2): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
                let pair = coupled_sample(&split, u, u1, u2)?;
                record.kappa = Some(split.kappa());
                record.hit = pair.coincided;
                self.procs[lead].next = t + pair.first;
                self.procs[lead].residual = !pair.coincided;
                self.procs[other].next = t + pair.second;
                self.procs[other].residual = !pair.coincided;
                if pair.coincided {
                    self.coupled_at = Some(t + pair.first);
                }
            } else {
                self.procs[lead].next = t + sample(law, rng);
                self.procs[lead].residual = false;
            }
            if opts.keep_log {
                self.attempt_log.push(record);
            }
        }
    }
}

/// Simulate one coupled pair from backward times `b`, `b'`.
///
/// Without a horizon the run stops at the coupling epoch `coupled_at`;
/// with a horizon `h` it stops at `h` and `b`, `b_prime` hold `B_h`, `B'_h`.
pub fn simulate_pair<L: RenewalLaw<f64>, R: Rng + ?Sized>(
    law: &L,
    b: f64,
    b_prime: f64,
    opts: &SimOptions,
    rng: &mut R,
) -> SimResult<CoupledState> {
    if !(opts.theta > 0.0) {
        return Err(Error::Domain(format!("threshold must be positive, got {}", opts.theta)).into());
    }
    if let Some(h) = opts.horizon {
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("horizon must be a finite time >= 0, got {h}")).into());
        }
    }
    let mut state = CoupledState::start(law, b, b_prime, rng)?;
    state.resume(law, opts, rng)?;
    Ok(state)
}

/// `B_t` of a single process started from backward time `b`.
pub fn simulate_backward<L: RenewalLaw<f64>, R: Rng + ?Sized>(
    law: &L,
    b: f64,
    t: f64,
    rng: &mut R,
) -> Result<f64, Error> {
    let mut next = sample(&forward_law(law, b)?, rng);
    if next > t {
        return Ok(b + t);
    }
    let mut last = next;
    while next <= t {
        last = next;
        next += sample(law, rng);
    }
    Ok(t - last)
}

/// `B_t` at each of the nondecreasing times `grid` for one path from `b`.
pub fn simulate_backward_path<L: RenewalLaw<f64>, R: Rng + ?Sized>(
    law: &L,
    b: f64,
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>, Error> {
    let mut last = -b;
    let mut next = sample(&forward_law(law, b)?, rng);
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid {
        while next <= t {
            last = next;
            next += sample(law, rng);
        }
        out.push(t - last);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{ExampleLaw, Exponential};

    #[test]
    fn equal_starts_couple_at_zero() {
        let law = Exponential::new(1.0).unwrap();
        let mut rng = stream_rng(7, 0, 0);
        let s = simulate_pair(&law, 1.5, 1.5, &SimOptions::new(4.0), &mut rng).unwrap();
        assert_eq!(s.coupled_at, Some(0.0));
        assert!(s.attempt_log.is_empty());
    }

    #[test]
    fn exponential_couples_at_first_eligible_attempt() {
        let law = Exponential::new(1.0).unwrap();
        for i in 0..200 {
            let mut rng = stream_rng(11, 0, i);
            let s = simulate_pair(&law, 0.0, 5.0, &SimOptions::new(4.0), &mut rng).unwrap();
            let tau = s.coupled_at.unwrap();
            let first = s.attempt_log.iter().position(|a| a.eligible).unwrap();
            assert_eq!(first, s.attempt_log.len() - 1);
            let last = s.attempt_log[first];
            assert!(last.hit && !last.blocked && (last.kappa.unwrap() - 1.0).abs() < 1e-9);
            assert!(tau > last.time);
            assert!(s.attempt_log.windows(2).all(|w| w[0].time < w[1].time));
        }
    }

    #[test]
    fn cap_exceeded_is_resumable() {
        let law = ExampleLaw::new(1.0, 2.0).unwrap();
        let mut opts = SimOptions::new(2.0);
        opts.event_cap = 1;
        let mut rng = stream_rng(3, 0, 0);
        let err = simulate_pair(&law, 0.0, 3.0, &opts, &mut rng).unwrap_err();
        let SimError::CapExceeded { mut state, .. } = err else {
            panic!("expected cap error");
        };
        opts.event_cap = 1_000_000;
        state.resume(&law, &opts, &mut rng).unwrap();
        assert!(state.coupled_at.is_some());
        assert_eq!(state.b, state.b_prime);
    }

    #[test]
    fn horizon_run_reports_backward_times() {
        let law = ExampleLaw::new(1.0, 3.0).unwrap();
        let mut opts = SimOptions::new(2.0);
        opts.horizon = Some(6.0);
        for i in 0..100 {
            let mut rng = stream_rng(5, 0, i);
            let s = simulate_pair(&law, 0.2, 1.7, &opts, &mut rng).unwrap();
            assert_eq!(s.clock, 6.0);
            assert!(s.b >= 0.0 && s.b_prime >= 0.0);
            assert!(s.b <= 6.2 && s.b_prime <= 7.7);
            if s.coupled_at.is_some_and(|tau| tau <= 6.0) {
                assert_eq!(s.b, s.b_prime);
            }
        }
    }

    #[test]
    fn backward_path_matches_pointwise() {
        let law = ExampleLaw::new(1.0, 2.0).unwrap();
        let grid = [0.0, 1.0, 2.5, 7.0];
        let mut a = stream_rng(9, 1, 4);
        let path = simulate_backward_path(&law, 0.0, &grid, &mut a).unwrap();
        assert_eq!(path[0], 0.0);
        let mut b = stream_rng(9, 1, 4);
        assert_eq!(simulate_backward(&law, 0.0, 7.0, &mut b).unwrap(), path[3]);
    }

    #[test]
    fn streams_are_reproducible() {
        let mut a = stream_rng(42, 0, 17);
        let mut b = stream_rng(42, 0, 17);
        let mut c = stream_rng(42, 0, 18);
        let (x, y, z): (u64, u64, u64) = (a.gen(), b.gen(), c.gen());
        assert_eq!(x, y);
        assert_ne!(x, z);
    }
}
