//! Exact laws of the distance process.
//!
//! Under the uniform step law, `l(Y_n)` is a birth-death chain on N with
//! `p(0,1) = 1`, `p(u,u+1) = (d-1)/d`, `p(u,u-1) = 1/d`. It is the absolute
//! value of a biased walk `R_n` on Z that leaves 0 symmetrically and is
//! pushed away from 0 with probability `(d-1)/d` on either side. Both are
//! propagated here by forward dynamic programming in O(n^2).
//!
//! For non-uniform laws the length alone is not Markov; only the
//! brute-force enumeration oracle is offered.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ext::format_float;
use crate::numeric::kahan_sum;
use crate::tree_walk::{visit_paths, StepDistribution};
use crate::{Error, Result};

/// Tolerance on total mass for the exact distributions.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// The law of a nonnegative distance at time `n`, indexed by distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceDistribution {
    pub n: usize,
    pub probs: Vec<f64>,
}

impl DistanceDistribution {
    pub fn support_max(&self) -> usize {
        self.probs.len().saturating_sub(1)
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        kahan_sum(self.probs.iter().enumerate().map(|(k, p)| k as f64 * p))
    }

    /// Largest entrywise difference, padding the shorter support with zeros.
    pub fn max_abs_diff(&self, other: &DistanceDistribution) -> f64 {
        let len = self.probs.len().max(other.probs.len());
        (0..len).map(|k| (self.prob(k) - other.prob(k)).abs()).fold(0.0, f64::max)
    }

    /// Mass within tolerance, and no weight off the parity class of `n` or above `n`.
    pub fn check_invariants(&self) -> Result<()> {
        let mass = self.total_mass();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::domain(format!("mass {mass} differs from 1")));
        }
        for (k, &p) in self.probs.iter().enumerate() {
            let off_parity = self.n >= 1 && (k > self.n || (k + self.n) % 2 == 1);
            if off_parity && p != 0.0 {
                return Err(Error::domain(format!("weight {p} at distance {k} at time {}", self.n)));
            }
        }
        Ok(())
    }

    /// CSV with columns `distance,probability`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(["distance", "probability"])?;
        for (k, p) in self.probs.iter().enumerate() {
            out.write_record([k.to_string(), format_float(*p)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// The law of the signed biased walk `R_n`, indexed by position `-n..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedDistribution {
    pub n: usize,
    /// `probs[i]` is `P(R_n = i - n)`.
    pub probs: Vec<f64>,
}

impl SignedDistribution {
    pub fn prob(&self, position: i64) -> f64 {
        let idx = position + self.n as i64;
        if idx < 0 {
            return 0.0;
        }
        self.probs.get(idx as usize).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.probs.iter().copied())
    }

    /// Largest `|P(R_n = k) - P(R_n = -k)|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.n as i64;
        (0..=n).map(|k| (self.prob(k) - self.prob(-k)).abs()).fold(0.0, f64::max)
    }
}

fn check_d(d: usize) -> Result<()> {
    if d < 3 {
        return Err(Error::domain(format!("need d >= 3, got {d}")));
    }
    Ok(())
}

/// Exact law of `l(Y_n)` for the simple walk on `T_d`.
pub fn simple_walk_distance_dist(d: usize, n: usize) -> Result<DistanceDistribution> {
    check_d(d)?;
    let up = (d - 1) as f64 / d as f64;
    let down = 1.0 / d as f64;
    let mut cur = vec![0.0; n + 2];
    let mut next = vec![0.0; n + 2];
    cur[0] = 1.0;
    for t in 0..n {
        next[..=t + 1].fill(0.0);
        next[1] += cur[0];
        for u in 1..=t {
            let p = cur[u];
            if p != 0.0 {
                next[u + 1] += p * up;
                next[u - 1] += p * down;
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur.truncate(n + 1);
    Ok(DistanceDistribution { n, probs: cur })
}

/// Exact law of `R_n` for the biased walk with parameter `1/(d-1)`.
pub fn biased_walk_dist(d: usize, n: usize) -> Result<SignedDistribution> {
    check_d(d)?;
    let away = (d - 1) as f64 / d as f64;
    let toward = 1.0 / d as f64;
    let width = 2 * n + 1;
    let origin = n;
    let mut cur = vec![0.0; width];
    let mut next = vec![0.0; width];
    cur[origin] = 1.0;
    for t in 0..n {
        let lo = origin - t;
        let hi = origin + t;
        next[lo.saturating_sub(1)..=(hi + 1).min(width - 1)].fill(0.0);
        for i in lo..=hi {
            let p = cur[i];
            if p == 0.0 {
                continue;
            }
            match i.cmp(&origin) {
                std::cmp::Ordering::Equal => {
                    next[i + 1] += 0.5 * p;
                    next[i - 1] += 0.5 * p;
                }
                std::cmp::Ordering::Greater => {
                    next[i + 1] += away * p;
                    next[i - 1] += toward * p;
                }
                std::cmp::Ordering::Less => {
                    next[i - 1] += away * p;
                    next[i + 1] += toward * p;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(SignedDistribution { n, probs: cur })
}

/// The law of `|R_n|`.
pub fn abs_pushforward(s: &SignedDistribution) -> DistanceDistribution {
    let n = s.n as i64;
    let probs = (0..=n).map(|k| if k == 0 { s.prob(0) } else { s.prob(k) + s.prob(-k) }).collect();
    DistanceDistribution { n: s.n, probs }
}

/// Exact law of `l(Y_n)` under an arbitrary step law by summing path weights.
pub fn brute_force_distance_dist(mu: &StepDistribution, n: usize, cap: u64) -> Result<DistanceDistribution> {
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    visit_paths(mu, n, cap, |_, lengths, w| buckets[lengths[n]].push(w))?;
    let probs = buckets.into_iter().map(kahan_sum).collect();
    Ok(DistanceDistribution { n, probs })
}

/// Summary of the coupling identity `l(Y_n) ~ |R_n|`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingReport {
    pub d: usize,
    pub n_max: usize,
    pub max_abs_diff: f64,
    pub worst_n: usize,
}

/// Compares the two DP routes for every `n <= n_max`.
pub fn coupling_check(d: usize, n_max: usize) -> Result<CouplingReport> {
    let mut report = CouplingReport { d, n_max, max_abs_diff: 0.0, worst_n: 0 };
    for n in 0..=n_max {
        let direct = simple_walk_distance_dist(d, n)?;
        let folded = abs_pushforward(&biased_walk_dist(d, n)?);
        let diff = direct.max_abs_diff(&folded);
        if diff > report.max_abs_diff {
            report.max_abs_diff = diff;
            report.worst_n = n;
        }
    }
    Ok(report)
}

#[cfg(feature = "exact")]
pub mod exact {
    //! Rational-arithmetic distance DP, limited to small `n`.

    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, ToPrimitive, Zero};

    use crate::{Error, Result};

    pub const MAX_EXACT_N: usize = 64;

    /// Exact law of `l(Y_n)` for the simple walk, as rationals.
    pub fn simple_walk_distance_dist_exact(d: usize, n: usize) -> Result<Vec<BigRational>> {
        super::check_d(d)?;
        if n > MAX_EXACT_N {
            return Err(Error::domain(format!("exact DP limited to n <= {MAX_EXACT_N}")));
        }
        let dd = BigInt::from(d);
        let up = BigRational::new(BigInt::from(d - 1), dd.clone());
        let down = BigRational::new(BigInt::one(), dd);
        let mut cur = vec![BigRational::zero(); n + 2];
        cur[0] = BigRational::one();
        for t in 0..n {
            let mut next = vec![BigRational::zero(); n + 2];
            next[1] += &cur[0];
            for u in 1..=t {
                if cur[u].is_zero() {
                    continue;
                }
                next[u + 1] += &cur[u] * &up;
                next[u - 1] += &cur[u] * &down;
            }
            cur = next;
        }
        cur.truncate(n + 1);
        Ok(cur)
    }

    pub fn to_f64(values: &[BigRational]) -> Vec<f64> {
        values.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()
    }
}
