use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate_backward, simulate_backward_path, stream_rng};
use crate::bounds::lorden_ratio;
use crate::dist::{quantile, stationary_backward, RenewalLaw};
use crate::error::{Error, Result};
use crate::quadrature::QuadOptions;

pub(crate) const PURPOSE_TV: u8 = 1;
pub(crate) const PURPOSE_LORDEN: u8 = 2;

/// Leave-one-out jackknife of the sample mean: `(mean, std_error)`.
pub fn jackknife_mean(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    let total: f64 = values.iter().sum();
    let mean = total / n as f64;
    if n == 1 {
        return Ok((mean, 0.0));
    }
    let m = (n - 1) as f64;
    let loo_mean = values.iter().map(|x| (total - x) / m).sum::<f64>() / n as f64;
    let ss: f64 = values
        .iter()
        .map(|x| {
            let d = (total - x) / m - loo_mean;
            d * d
        })
        .sum();
    Ok((mean, (m / n as f64 * ss).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "functional", rename_all = "kebab-case")]
pub enum TauFunctional {
    /// `E tau^l`.
    Moment { ell: f64 },
    /// `E exp(beta tau)`.
    Exp { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    #[serde(flatten)]
    pub functional: TauFunctional,
    pub estimate: f64,
    pub std_error: f64,
    /// Share of the sum carried by the largest single term.
    pub max_share: f64,
    /// `max_share <= 0.05`; a heavier concentration means the error bar is unreliable.
    pub stable: bool,
}

pub fn estimate_tau_functionals(samples: &[f64], functional: TauFunctional) -> Result<TauEstimate> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let values: Vec<f64> = match functional {
        TauFunctional::Moment { ell } => samples.iter().map(|t| t.powf(ell)).collect(),
        TauFunctional::Exp { beta } => samples.iter().map(|t| (beta * t).exp()).collect(),
    };
    let (estimate, std_error) = jackknife_mean(&values)?;
    let total: f64 = values.iter().sum();
    let max = values.iter().fold(0.0f64, |a, &b| a.max(b));
    let max_share = if total > 0.0 { max / total } else { 0.0 };
    Ok(TauEstimate {
        functional,
        estimate,
        std_error,
        max_share,
        stable: max_share <= 0.05 && std_error.is_finite(),
    })
}

/// One-sample Kolmogorov-Smirnov statistic `sup |F_n - F|`.
///
/// Ties are grouped and the left limit `F(x-)` is read just below each sample,
/// so laws with atoms (such as `B_t`, which has one at `b + t`) are handled.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let below = cdf(x.next_down());
        let at = cdf(x);
        d = d.max((below - i as f64 / n).abs()).max((j as f64 / n - at).abs());
        i = j;
    }
    Ok(d)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// Asymptotic critical value `c(alpha) sqrt((n + m) / (n m))`; `m = None` for
/// the one-sample test.
pub fn ks_critical(alpha: f64, n: usize, m: Option<usize>) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    let n = n as f64;
    match m {
        None => c / n.sqrt(),
        Some(m) => {
            let m = m as f64;
            c * ((n + m) / (n * m)).sqrt()
        }
    }
}

/// Histogram estimate of the TV distance between a sample and a reference
/// law, given the reference mass of each interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    /// Time of the estimate; 0 when produced by `histogram_tv` directly.
    pub t: f64,
    pub estimate: f64,
    pub bins: usize,
    pub bin_width: f64,
    /// Reference mass beyond the last bin.
    pub tail_mass: f64,
    /// Three times the expected sampling noise of the estimator.
    pub noise_margin: f64,
}

/// Bias note attached to every histogram estimate.
pub const TV_NOTE: &str = "histogram estimate of half the L1 distance; positively biased by \
sampling noise and negatively by binning; not a certified value";

fn default_bins(n: usize) -> usize {
    (n as f64).cbrt().ceil().max(1.0) as usize
}

/// `1/2 sum |p_hat - p_ref|` over equal bins of `[0, upper]`, one reference
/// mass per bin, plus the reference tail beyond `upper`.
pub fn histogram_tv(
    samples: &[f64],
    upper: f64,
    reference_masses: &[f64],
    reference_tail: f64,
) -> Result<TvEstimate> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let bins = reference_masses.len();
    if bins == 0 || !(upper > 0.0) {
        return Err(Error::Domain("histogram needs bins >= 1 and a positive range".into()));
    }
    let width = upper / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut outside = 0usize;
    for &x in samples {
        if (0.0..=upper).contains(&x) {
            counts[((x / width) as usize).min(bins - 1)] += 1;
        } else {
            outside += 1;
        }
    }
    let n = samples.len() as f64;
    let mut l1 = 0.0;
    let mut noise = 0.0;
    for (&c, &p) in counts.iter().zip(reference_masses) {
        l1 += (c as f64 / n - p).abs();
        noise += (p * (1.0 - p) / n).max(0.0).sqrt();
    }
    l1 += (outside as f64 / n - reference_tail).abs();
    Ok(TvEstimate {
        t: 0.0,
        estimate: (0.5 * l1).min(1.0),
        bins,
        bin_width: width,
        tail_mass: reference_tail,
        noise_margin: 3.0 * 0.5 * noise,
    })
}

/// Histogram TV between two samples on a common equal-width grid over their joint range.
pub fn histogram_tv_two_sample(a: &[f64], b: &[f64], bins: Option<usize>) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySamples);
    }
    let bins = bins.unwrap_or_else(|| default_bins(a.len().max(b.len())));
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok(0.0);
    }
    let width = (hi - lo) / bins as f64;
    let hist = |xs: &[f64]| {
        let mut h = vec![0.0; bins];
        for &x in xs {
            h[(((x - lo) / width) as usize).min(bins - 1)] += 1.0 / xs.len() as f64;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    Ok(0.5 * ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Empirical TV between `B_t` from `B_0 = b` and the stationary backward law,
/// from `n` simulated copies (stream `index` of the TV purpose).
pub fn empirical_tv<L: RenewalLaw<f64>>(
    law: &L,
    b: f64,
    t: f64,
    n: usize,
    bins: Option<usize>,
    seed: u64,
    index: u64,
) -> Result<TvEstimate> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    let samples: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, PURPOSE_TV, (index << 40) | i);
            simulate_backward(law, b, t, &mut rng)
        })
        .collect::<Result<_>>()?;
    let opts = QuadOptions::default();
    let st = stationary_backward(law, &opts)?;
    let q = quantile(&st, 1.0 - 1e-8)?;
    let upper = samples.iter().copied().fold(q, f64::max);
    let bins = bins.unwrap_or_else(|| default_bins(n));
    let edges: Vec<f64> = (0..=bins).map(|k| upper * k as f64 / bins as f64).collect();
    let surv: Vec<f64> = edges.par_iter().map(|&e| st.survival(e)).collect();
    let masses: Vec<f64> = surv.windows(2).map(|w| (w[0] - w[1]).max(0.0)).collect();
    let mut est = histogram_tv(&samples, upper, &masses, surv[bins])?;
    est.t = t;
    Ok(est)
}

/// `empirical_tv` at each time of `t_grid`, each on its own stream.
pub fn empirical_tv_curve<L: RenewalLaw<f64>>(
    law: &L,
    b: f64,
    t_grid: &[f64],
    n: usize,
    bins: Option<usize>,
    seed: u64,
) -> Result<Vec<TvEstimate>> {
    t_grid
        .iter()
        .enumerate()
        .map(|(j, &t)| empirical_tv(law, b, t, n, bins, seed, j as u64))
        .collect()
}

/// Empirical check of `sup_t E B_t <= R` from `B_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LordenCheck {
    pub r: f64,
    pub replicas: usize,
    pub t_grid: Vec<f64>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub sup_mean: f64,
    pub sup_time: f64,
    /// Every grid mean is `<= R + 3 se`.
    pub pass: bool,
}

pub fn lorden_check<L: RenewalLaw<f64>>(
    law: &L,
    horizon: f64,
    n: usize,
    grid_points: usize,
    seed: u64,
) -> Result<LordenCheck> {
    if !(horizon > 0.0) || n == 0 || grid_points == 0 {
        return Err(Error::Domain(
            "lorden check needs a positive horizon, replicas and grid".into(),
        ));
    }
    let r = lorden_ratio(law, &QuadOptions::default())?;
    let t_grid: Vec<f64> = (0..=grid_points)
        .map(|k| horizon * k as f64 / grid_points as f64)
        .collect();
    let paths: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, PURPOSE_LORDEN, i);
            simulate_backward_path(law, 0.0, &t_grid, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut means = Vec::with_capacity(t_grid.len());
    let mut std_errors = Vec::with_capacity(t_grid.len());
    for k in 0..t_grid.len() {
        let column: Vec<f64> = paths.iter().map(|p| p[k]).collect();
        let (m, se) = jackknife_mean(&column)?;
        means.push(m);
        std_errors.push(se);
    }
    let (sup_index, sup_mean) = means
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, m)| if m > a.1 { (i, m) } else { a });
    let pass = means.iter().zip(&std_errors).all(|(m, se)| *m <= r + 3.0 * se);
    Ok(LordenCheck {
        r,
        replicas: n,
        sup_time: t_grid[sup_index],
        t_grid,
        means,
        std_errors,
        sup_mean,
        pass,
    })
}
