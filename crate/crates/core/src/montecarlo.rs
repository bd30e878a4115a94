//! Monte Carlo estimates of box probabilities `P(l(Y_[nt])/n ∈ B(x, ρ))`
//! and the empirical rates `-(1/n) log P`.
//!
//! Samples are drawn in fixed-size blocks; block `b` of the run for `n`
//! uses the ChaCha stream `(n << 32) | b` of the configured seed, and block
//! results are merged in block order, so a run is bit-identical regardless
//! of the thread count.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::BoxSpec;
use crate::numeric::LogSumExp;
use crate::tree_walk::{seeded_rng, StepDistribution, WalkState};
use crate::{Error, Result};

/// Fewer hits than this and no log-probability is reported.
pub const MIN_HITS: usize = 30;

const BLOCK: usize = 8192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub mu: StepDistribution,
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    /// Exponential tilt of the distance chain (uniform step law only).
    pub tilt: Option<f64>,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.n == 0 {
            return Err(Error::domain("need samples >= 1 and n >= 1"));
        }
        if let Some(theta) = self.tilt {
            if !theta.is_finite() {
                return Err(Error::domain("tilt must be finite"));
            }
            if !self.mu.is_uniform() {
                return Err(Error::domain("tilting is only defined for the uniform step law"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateFlag {
    /// Fewer than [`MIN_HITS`] samples landed in the box.
    InsufficientHits,
    /// Likelihood ratios concentrate on fewer than [`MIN_HITS`] effective
    /// samples.
    HighVariance,
}

/// Estimate at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub n: usize,
    pub hits: usize,
    pub probability: f64,
    pub probability_stderr: f64,
    /// `-(1/n) log p̂`, absent when flagged.
    pub rate: Option<f64>,
    pub rate_stderr: Option<f64>,
    pub effective_sample_size: f64,
    pub flags: Vec<EstimateFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub spec: BoxSpec,
    pub seed: u64,
    pub samples: usize,
    pub tilt: Option<f64>,
    pub entries: Vec<RateEntry>,
    /// Largest pairwise difference among the last three reported rates.
    pub stabilization: Option<f64>,
}

impl RateEstimate {
    pub fn n_values(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.n).collect()
    }

    pub fn rates(&self) -> Vec<Option<f64>> {
        self.entries.iter().map(|e| e.rate).collect()
    }
}

/// Running sums of likelihood ratios on hits, kept in log space.
#[derive(Debug, Clone, Default)]
struct Tally {
    hits: usize,
    sum: LogSumExp,
    sum_sq: LogSumExp,
}

impl Tally {
    fn record(&mut self, log_lr: f64) {
        self.hits += 1;
        self.sum.push(log_lr);
        self.sum_sq.push(2.0 * log_lr);
    }

    fn merge(self, other: Tally) -> Tally {
        Tally { hits: self.hits + other.hits, sum: self.sum.merge(other.sum), sum_sq: self.sum_sq.merge(other.sum_sq) }
    }

    fn entry(self, n: usize, samples: usize) -> RateEntry {
        let total = samples as f64;
        let (log_s1, log_s2) = (self.sum.value(), self.sum_sq.value());
        let log_p = log_s1 - total.ln();
        let p = log_p.exp();
        // relative standard error of p̂, formed from log sums so that tiny
        // probabilities do not underflow
        let rel_var = ((log_s2 + total.ln() - 2.0 * log_s1).exp() - 1.0).max(0.0);
        let rel_se = if self.hits == 0 { 0.0 } else { (rel_var / total).sqrt() };
        let se = p * rel_se;
        let ess = if self.hits == 0 { 0.0 } else { (2.0 * log_s1 - log_s2).exp() };
        let mut flags = Vec::new();
        if self.hits < MIN_HITS {
            flags.push(EstimateFlag::InsufficientHits);
        }
        if ess < MIN_HITS as f64 {
            flags.push(EstimateFlag::HighVariance);
        }
        let (rate, rate_stderr) =
            if flags.is_empty() { (Some(-log_p / n as f64 + 0.0), Some(rel_se / n as f64)) } else { (None, None) };
        RateEntry {
            n,
            hits: self.hits,
            probability: p,
            probability_stderr: se,
            rate,
            rate_stderr,
            effective_sample_size: ess,
            flags,
        }
    }
}

fn run_blocks<F>(samples: usize, seed: u64, n: usize, block_fn: F) -> Tally
where
    F: Fn(&mut rand_chacha::ChaCha8Rng, usize) -> Tally + Sync,
{
    let blocks = samples.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = seeded_rng(seed, ((n as u64) << 32) | b as u64);
            block_fn(&mut rng, BLOCK.min(samples - b * BLOCK))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Tally::default(), Tally::merge)
}

/// Crude Monte Carlo on the tree walk: the fraction of simulated paths whose
/// rescaled checkpoint lengths fall in the box.
pub fn estimate_box(cfg: &McConfig, spec: &BoxSpec) -> Result<RateEstimate> {
    cfg.validate()?;
    let entry = crude_entry(&cfg.mu, spec, cfg.n, cfg.samples, cfg.seed);
    Ok(RateEstimate {
        spec: spec.clone(),
        seed: cfg.seed,
        samples: cfg.samples,
        tilt: None,
        entries: vec![entry],
        stabilization: None,
    })
}

fn crude_entry(mu: &StepDistribution, spec: &BoxSpec, n: usize, samples: usize, seed: u64) -> RateEntry {
    let idx = spec.grid.indices(n);
    let last = *idx.last().expect("grid is nonempty");
    let sampler = mu.sampler();
    let tally = run_blocks(samples, seed, n, |rng, count| {
        let mut tally = Tally::default();
        let mut walk = WalkState::new(last);
        let mut profile = vec![0usize; idx.len()];
        for _ in 0..count {
            walk.reset();
            let mut next = 0;
            for t in 0..=last {
                while next < idx.len() && idx[next] == t {
                    profile[next] = walk.len();
                    next += 1;
                }
                if t < last {
                    walk.step(sampler.sample(rng));
                }
            }
            if spec.contains_profile(&profile, n) {
                tally.record(0.0);
            }
        }
        tally
    });
    tally.entry(n, samples)
}

/// Importance sampling on the distance chain with up/down weights
/// proportional to `((d-1)/d) e^θ` and `(1/d) e^{-θ}` away from the origin.
/// Only the endpoint grid and the uniform step law are supported.
pub fn tilted_estimate(cfg: &McConfig, spec: &BoxSpec) -> Result<RateEstimate> {
    cfg.validate()?;
    let theta = cfg.tilt.ok_or_else(|| Error::domain("tilted estimate needs a tilt"))?;
    if !cfg.mu.is_uniform() {
        return Err(Error::domain("tilting is only defined for the uniform step law"));
    }
    if !spec.grid.is_endpoint() {
        return Err(Error::domain("tilted estimate supports only the endpoint grid J = (1)"));
    }
    let entry = tilted_entry(cfg.mu.d(), theta, spec, cfg.n, cfg.samples, cfg.seed);
    Ok(RateEstimate {
        spec: spec.clone(),
        seed: cfg.seed,
        samples: cfg.samples,
        tilt: Some(theta),
        entries: vec![entry],
        stabilization: None,
    })
}

fn tilted_entry(d: usize, theta: f64, spec: &BoxSpec, n: usize, samples: usize, seed: u64) -> RateEntry {
    let q = (d - 1) as f64 / d as f64;
    let z = q * theta.exp() + (1.0 - q) * (-theta).exp();
    let p_up = q * theta.exp() / z;
    // P(u < threshold) = p_up for u uniform on u64
    let threshold = if p_up >= 1.0 { u64::MAX } else { (p_up * 2f64.powi(64)) as u64 };
    let log_z = z.ln();
    let tally = run_blocks(samples, seed, n, |rng, count| {
        let mut tally = Tally::default();
        for _ in 0..count {
            let mut k: i64 = 0;
            // moves made from a positive state, and their net displacement
            let mut moves: i64 = 0;
            let mut net: i64 = 0;
            for _ in 0..n {
                if k == 0 {
                    k = 1;
                } else {
                    moves += 1;
                    if rng.next_u64() < threshold {
                        k += 1;
                        net += 1;
                    } else {
                        k -= 1;
                        net -= 1;
                    }
                }
            }
            if spec.contains_profile(&[k as usize], n) {
                tally.record(moves as f64 * log_z - theta * net as f64);
            }
        }
        tally
    });
    tally.entry(n, samples)
}

/// Estimates along a list of `n` (tilted when `tilt` is set) and reports
/// how much the last three rates still move.
pub fn convergence_sweep(
    spec: &BoxSpec,
    mu: &StepDistribution,
    n_list: &[usize],
    samples: usize,
    seed: u64,
    tilt: Option<f64>,
) -> Result<RateEstimate> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("n list must be nonempty and strictly increasing"));
    }
    let mut entries = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let cfg = McConfig { mu: mu.clone(), n, samples, seed, tilt };
        let est = if tilt.is_some() { tilted_estimate(&cfg, spec)? } else { estimate_box(&cfg, spec)? };
        entries.extend(est.entries);
    }
    let reported: Vec<f64> = entries.iter().filter_map(|e| e.rate).collect();
    let stabilization = (reported.len() >= 2).then(|| {
        let tail = &reported[reported.len().saturating_sub(3)..];
        tail.iter().flat_map(|a| tail.iter().map(move |b| (a - b).abs())).fold(0.0, f64::max)
    });
    Ok(RateEstimate { spec: spec.clone(), seed, samples, tilt, entries, stabilization })
}
