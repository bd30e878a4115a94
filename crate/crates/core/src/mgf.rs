//! Checkpointed scaled log-moment generating functions
//!
//! ```text
//! Λ^J_n(nλ)/n = (1/n) log E[ exp( Σ_i λ_i l(Y_[n t_i]) ) ]
//! ```
//!
//! and their large-n limits `Λ^J(λ)`.
//!
//! For the uniform step law the expectation is propagated exactly along the
//! distance chain. The weight vector is stored in the tilted form
//! `u_t(k) = w_t(k) exp(g_t k)`, where `g_t` is the total weight of the
//! checkpoints still ahead, clamped below at `-log(d-1)/2`. Away from the
//! clamp, checkpoint multiplications become no-ops and the propagation uses
//! the kernel with up moves scaled by `e^{g}` and down moves by `e^{-g}`; the
//! entries that carry the final sum stay near the top of the floating-point
//! range. Rescaling is by powers of two so it
//! introduces no rounding.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ext::format_float;
use crate::grid::TimeGrid;
use crate::numeric::{kahan_sum, LogSumExp};
use crate::tree_walk::{visit_paths, StepDistribution};
use crate::{Error, Result};

/// One coordinate of a tensor-product λ grid: `points` equally spaced values
/// from `lo` to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if points == 0 || !(lo.is_finite() && hi.is_finite()) || (points > 1 && hi <= lo) {
            return Err(Error::domain(format!("bad axis [{lo}, {hi}] with {points} points")));
        }
        Ok(Axis { lo, hi, points })
    }

    pub fn step(&self) -> f64 {
        if self.points > 1 {
            (self.hi - self.lo) / (self.points - 1) as f64
        } else {
            0.0
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.value(i)).collect()
    }
}

/// Tensor-product grid of λ values in R^j. Points are enumerated in
/// lexicographic order (first coordinate slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub axes: Vec<Axis>,
}

pub const DEFAULT_LAMBDA_RADIUS: f64 = 8.0;
pub const DEFAULT_LAMBDA_POINTS: usize = 65;

impl LambdaGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok(LambdaGrid { axes })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64, points: usize) -> Result<Self> {
        LambdaGrid::new(vec![Axis::new(lo, hi, points)?; dim])
    }

    /// `[-8, 8]` with 65 points per coordinate.
    pub fn default_for(dim: usize) -> Self {
        LambdaGrid::cube(dim, -DEFAULT_LAMBDA_RADIUS, DEFAULT_LAMBDA_RADIUS, DEFAULT_LAMBDA_POINTS)
            .expect("default axis is valid")
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (slot, axis) in idx.iter_mut().zip(&self.axes).rev() {
            *slot = flat % axis.points;
            flat /= axis.points;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (&i, a)| acc * a.points + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().zip(&self.axes).map(|(&i, a)| a.value(i)).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// True when `lambda` sits on the outer boundary of some axis.
    pub fn on_boundary(&self, lambda: &[f64]) -> bool {
        lambda.iter().zip(&self.axes).any(|(&l, a)| {
            let tol = 1e-12 * (1.0 + a.hi.abs().max(a.lo.abs()));
            a.points > 1 && ((l - a.lo).abs() <= tol || (l - a.hi).abs() <= tol)
        })
    }

    /// Largest discrete-convexity violation `v(p) - (v(p-e) + v(p+e))/2`
    /// over all grid points `p` and unit index directions `e` (axes and
    /// diagonals), or 0 when convex.
    pub fn convexity_violation(&self, values: &[f64]) -> f64 {
        let dim = self.dim();
        let dirs: Vec<Vec<i64>> = (0..3usize.pow(dim as u32))
            .map(|mut c| {
                (0..dim)
                    .map(|_| {
                        let v = (c % 3) as i64 - 1;
                        c /= 3;
                        v
                    })
                    .collect::<Vec<_>>()
            })
            .filter(|v| v.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0))
            .collect();
        let mut worst: f64 = 0.0;
        for flat in 0..self.len() {
            let idx = self.multi_index(flat);
            for dir in &dirs {
                let shifted = |sign: i64| -> Option<usize> {
                    let mut out = Vec::with_capacity(dim);
                    for ((&i, &dv), axis) in idx.iter().zip(dir).zip(&self.axes) {
                        let j = i as i64 + sign * dv;
                        if j < 0 || j >= axis.points as i64 {
                            return None;
                        }
                        out.push(j as usize);
                    }
                    Some(self.flat_index(&out))
                };
                if let (Some(a), Some(b)) = (shifted(-1), shifted(1)) {
                    worst = worst.max(values[flat] - 0.5 * (values[a] + values[b]));
                }
            }
        }
        worst
    }
}

/// Anything that can report `Λ(λ)` at an arbitrary point.
pub trait LogMgf: Sync {
    fn dim(&self) -> usize;
    fn log_mgf(&self, lambda: &[f64]) -> f64;
}

/// Wraps a closure as a [`LogMgf`].
pub struct ClosedForm<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> ClosedForm<F> {
    pub fn new(dim: usize, f: F) -> Self {
        ClosedForm { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> LogMgf for ClosedForm<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_mgf(&self, lambda: &[f64]) -> f64 {
        (self.f)(lambda)
    }
}

fn check_lambda(grid: &TimeGrid, lambda: &[f64]) -> Result<()> {
    if lambda.len() != grid.len() {
        return Err(Error::domain(format!("λ has {} coordinates, grid has {} checkpoints", lambda.len(), grid.len())));
    }
    if lambda.iter().any(|l| !l.is_finite()) {
        return Err(Error::domain("λ must be finite"));
    }
    Ok(())
}

/// Exact `Λ^J_n(nλ)/n` for the simple walk on `T_d`.
pub fn checkpointed_mgf_simple(d: usize, grid: &TimeGrid, lambda: &[f64], n: usize) -> Result<f64> {
    if d < 3 {
        return Err(Error::domain(format!("need d >= 3, got {d}")));
    }
    if n == 0 {
        return Err(Error::domain("need n >= 1"));
    }
    check_lambda(grid, lambda)?;
    if lambda.iter().all(|&l| l == 0.0) {
        return Ok(0.0);
    }
    let indices = grid.indices(n);
    let last = *indices.last().expect("grid is nonempty");
    // Stored tilt gamma[t]: the weight still ahead, clamped below at the flat
    // threshold. Under a heavier negative weight, excursions that later
    // return carry the sum, and a steeper tilt would underflow them.
    let floor = -0.5 * ((d - 1) as f64).ln();
    let mut bonus = vec![0.0; last + 1];
    for (&i, &l) in indices.iter().zip(lambda) {
        bonus[i] += l;
    }
    let mut gamma = vec![0.0; last + 1];
    for t in (0..last).rev() {
        gamma[t] = (gamma[t + 1] + bonus[t + 1]).max(floor);
    }

    let up = (d - 1) as f64 / d as f64;
    let down = 1.0 / d as f64;
    let mut cur = vec![0.0f64; last + 2];
    let mut next = vec![0.0f64; last + 2];
    cur[0] = 1.0;
    let mut log_scale = 0.0f64;
    for t in 0..last {
        let b = gamma[t + 1] + bonus[t + 1];
        let delta = b - gamma[t];
        if delta != 0.0 {
            // delta <= 0 by construction
            for (k, v) in cur[..=t].iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= (delta * k as f64).exp();
                }
            }
        }
        let (eb, emb) = (b.exp(), (-b).exp());
        let from_root = eb;
        let grow = up * eb;
        let shrink = down * emb;
        let parity = (t + 1) % 2;
        let mut max = 0.0f64;
        let mut k = parity;
        while k <= t + 1 {
            let below = if k >= 1 { cur[k - 1] * if k == 1 { from_root } else { grow } } else { 0.0 };
            let above = if k < t { cur[k + 1] * shrink } else { 0.0 };
            let v = below + above;
            next[k] = v;
            max = max.max(v);
            k += 2;
        }
        // clear stale entries of the other parity
        let mut k = 1 - parity;
        while k <= t + 1 {
            next[k] = 0.0;
            k += 2;
        }
        if !(max > 0.0 && max.is_finite()) {
            return Err(Error::domain(format!("weights degenerated at step {t} (max = {max})")));
        }
        let exp = max.log2().floor() as i32;
        if exp != 0 {
            let factor = 2f64.powi(-exp);
            for v in &mut next[..=t + 1] {
                *v *= factor;
            }
            log_scale += exp as f64 * std::f64::consts::LN_2;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let total = kahan_sum(cur[..=last].iter().copied());
    Ok((total.ln() + log_scale) / n as f64)
}

/// The same quantity for any step law, summed over all of `S^n`.
pub fn checkpointed_mgf_bruteforce(
    mu: &StepDistribution,
    grid: &TimeGrid,
    lambda: &[f64],
    n: usize,
    cap: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("need n >= 1"));
    }
    check_lambda(grid, lambda)?;
    let indices = grid.indices(n);
    let mut acc = LogSumExp::default();
    visit_paths(mu, n, cap, |_, lengths, w| {
        let bonus: f64 = indices.iter().zip(lambda).map(|(&i, &l)| l * lengths[i] as f64).sum();
        acc.push(w.ln() + bonus);
    })?;
    Ok(acc.value() / n as f64)
}

/// A large-n limit estimate with its reported uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolated {
    pub estimate: f64,
    pub halfwidth: f64,
}

pub const MIN_EXTRAPOLATION_POINTS: usize = 4;

/// Fits `c + a/n` through the two largest `n` and returns `c`, with
/// `|v_last - v_previous|` as halfwidth.
pub fn extrapolate_limit(values_by_n: &BTreeMap<usize, f64>) -> Result<Extrapolated> {
    if values_by_n.len() < MIN_EXTRAPOLATION_POINTS {
        return Err(Error::InsufficientData(format!(
            "extrapolation needs {MIN_EXTRAPOLATION_POINTS} values of n, got {}",
            values_by_n.len()
        )));
    }
    let mut tail = values_by_n.iter().rev();
    let (&n2, &v2) = tail.next().expect("len checked");
    let (&n1, &v1) = tail.next().expect("len checked");
    if n1 == 0 {
        return Err(Error::domain("n must be positive"));
    }
    let (n1, n2) = (n1 as f64, n2 as f64);
    let estimate = if v1 == v2 { v2 } else { (n2 * v2 - n1 * v1) / (n2 - n1) };
    Ok(Extrapolated { estimate, halfwidth: (v2 - v1).abs() })
}

/// Where the finite-n values come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MgfSource {
    /// Distance-chain DP for the uniform step law on `T_d`.
    SimpleWalk { d: usize },
    /// Brute-force enumeration for an arbitrary step law.
    Enumeration { mu: StepDistribution, cap: u64 },
}

impl MgfSource {
    pub fn value(&self, grid: &TimeGrid, lambda: &[f64], n: usize) -> Result<f64> {
        match self {
            MgfSource::SimpleWalk { d } => checkpointed_mgf_simple(*d, grid, lambda, n),
            MgfSource::Enumeration { mu, cap } => checkpointed_mgf_bruteforce(mu, grid, lambda, n, *cap),
        }
    }
}

pub const EXTRAPOLATION_MODEL: &str =
    "c + a/n through the two largest n; halfwidth = |v(n_last) - v(n_prev)|; no convergence rate is proven";

/// `Λ^J_n(nλ)/n` on a λ grid for several `n`, with extrapolated limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MgfTable {
    pub source: MgfSource,
    pub grid: TimeGrid,
    pub lambda_grid: LambdaGrid,
    pub n_values: Vec<usize>,
    /// Per `n`, values in lambda-grid order.
    pub values_by_n: BTreeMap<usize, Vec<f64>>,
    pub extrapolated: Vec<Extrapolated>,
    pub extrapolation_model: String,
}

impl MgfTable {
    pub fn build(source: MgfSource, grid: TimeGrid, lambda_grid: LambdaGrid, n_values: Vec<usize>) -> Result<Self> {
        if lambda_grid.dim() != grid.len() {
            return Err(Error::domain(format!(
                "λ grid has dimension {}, time grid has {} checkpoints",
                lambda_grid.dim(),
                grid.len()
            )));
        }
        if n_values.len() < MIN_EXTRAPOLATION_POINTS {
            return Err(Error::InsufficientData(format!("need at least {MIN_EXTRAPOLATION_POINTS} values of n")));
        }
        if n_values[0] == 0 || n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("n values must be positive and strictly increasing"));
        }
        if let MgfSource::Enumeration { mu, cap } = &source {
            crate::tree_walk::check_cap(mu.d(), *n_values.last().expect("nonempty"), *cap)?;
        }
        let points = lambda_grid.points();
        let columns: Vec<Vec<f64>> = points
            .par_iter()
            .map(|lambda| n_values.iter().map(|&n| source.value(&grid, lambda, n)).collect())
            .collect::<Result<_>>()?;
        let mut values_by_n = BTreeMap::new();
        for (slot, &n) in n_values.iter().enumerate() {
            values_by_n.insert(n, columns.iter().map(|c| c[slot]).collect::<Vec<_>>());
        }
        let extrapolated = columns
            .iter()
            .map(|c| extrapolate_limit(&n_values.iter().copied().zip(c.iter().copied()).collect()))
            .collect::<Result<_>>()?;
        Ok(MgfTable {
            source,
            grid,
            lambda_grid,
            n_values,
            values_by_n,
            extrapolated,
            extrapolation_model: EXTRAPOLATION_MODEL.to_string(),
        })
    }

    /// Recomputes the extrapolated limit at an arbitrary λ with the same
    /// source and `n` values.
    pub fn evaluate(&self, lambda: &[f64]) -> Result<Extrapolated> {
        let values = self
            .n_values
            .iter()
            .map(|&n| Ok((n, self.source.value(&self.grid, lambda, n)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        extrapolate_limit(&values)
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.extrapolated.iter().map(|e| e.estimate).collect()
    }

    pub fn max_halfwidth(&self) -> f64 {
        self.extrapolated.iter().map(|e| e.halfwidth).fold(0.0, f64::max)
    }

    /// CSV: `lambda_1..lambda_j, n_<n>..., estimate, halfwidth`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let mut header: Vec<String> = (1..=self.grid.len()).map(|i| format!("lambda_{i}")).collect();
        header.extend(self.n_values.iter().map(|n| format!("n_{n}")));
        header.push("estimate".into());
        header.push("halfwidth".into());
        out.write_record(&header)?;
        for (flat, ex) in self.extrapolated.iter().enumerate() {
            let mut row: Vec<String> = self.lambda_grid.point(flat).iter().map(|&v| format_float(v)).collect();
            row.extend(self.n_values.iter().map(|n| format_float(self.values_by_n[n][flat])));
            row.push(format_float(ex.estimate));
            row.push(format_float(ex.halfwidth));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

impl LogMgf for MgfTable {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn log_mgf(&self, lambda: &[f64]) -> f64 {
        self.evaluate(lambda).map(|e| e.estimate).unwrap_or(f64::NAN)
    }
}

/// Closed forms for the simple walk.
pub mod simple_walk {
    /// `log(((d-1)/d) e^λ + (1/d) e^{-λ})`, the log-MGF of one step of the
    /// biased walk away from the origin.
    pub fn increment_log_mgf(d: usize, lambda: f64) -> f64 {
        let q = (d - 1) as f64 / d as f64;
        // factor out the dominant exponential
        if lambda >= 0.0 {
            lambda + (q + (1.0 - q) * (-2.0 * lambda).exp()).ln()
        } else {
            -lambda + (q * (2.0 * lambda).exp() + (1.0 - q)).ln()
        }
    }

    /// Where the increment log-MGF is minimal: `-(1/2) log(d-1)`.
    pub fn flat_threshold(d: usize) -> f64 {
        -0.5 * ((d - 1) as f64).ln()
    }

    /// `log(2 sqrt(d-1) / d)`, the log spectral radius.
    pub fn log_spectral_radius(d: usize) -> f64 {
        (2.0 * ((d - 1) as f64).sqrt() / d as f64).ln()
    }

    /// Endpoint limit `Λ(λ) = lim (1/n) log E[e^{λ l(Y_n)}]`: the increment
    /// log-MGF above the flat threshold, the log spectral radius below it.
    pub fn endpoint_log_mgf(d: usize, lambda: f64) -> f64 {
        if lambda >= flat_threshold(d) {
            increment_log_mgf(d, lambda)
        } else {
            log_spectral_radius(d)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree_walk::DEFAULT_ENUMERATION_CAP;

    fn endpoint() -> TimeGrid {
        TimeGrid::endpoint()
    }

    fn two_point() -> TimeGrid {
        TimeGrid::new(vec![0.5, 1.0]).unwrap()
    }

    #[test]
    fn zero_lambda_is_zero() {
        for n in [1, 7, 100] {
            assert_eq!(checkpointed_mgf_simple(3, &endpoint(), &[0.0], n).unwrap(), 0.0);
        }
        let mu = StepDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        let v = checkpointed_mgf_bruteforce(&mu, &two_point(), &[0.0, 0.0], 6, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn large_lambda_is_dominated_by_monotone_path() {
        let v = checkpointed_mgf_simple(3, &endpoint(), &[50.0], 50).unwrap();
        assert!((v - (50.0 + (2.0f64 / 3.0).ln())).abs() < 0.1, "{v}");
        let exact = 50.0 + 49.0 / 50.0 * (2.0f64 / 3.0).ln();
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn inert_checkpoint_changes_nothing() {
        for theta in [-3.0, -0.2, 0.7, 4.0] {
            for n in [9, 40, 301] {
                let a = checkpointed_mgf_simple(3, &two_point(), &[0.0, theta], n).unwrap();
                let b = checkpointed_mgf_simple(3, &endpoint(), &[theta], n).unwrap();
                assert!((a - b).abs() < 1e-12, "θ={theta} n={n}");
            }
        }
    }

    #[test]
    fn chain_dp_matches_enumeration() {
        let mu = StepDistribution::uniform(3).unwrap();
        let lambdas = [[0.0, 0.0], [1.0, -1.0], [-1.5, 0.5], [2.0, 1.0], [-2.0, -2.0]];
        for n in 1..=10 {
            for grid in [endpoint(), two_point(), TimeGrid::new(vec![0.3, 0.7]).unwrap()] {
                for lam in &lambdas {
                    let lam = &lam[..grid.len()];
                    let dp = checkpointed_mgf_simple(3, &grid, lam, n).unwrap();
                    let bf = checkpointed_mgf_bruteforce(&mu, &grid, lam, n, DEFAULT_ENUMERATION_CAP).unwrap();
                    assert!((dp - bf).abs() < 1e-10, "n={n} grid={grid:?} λ={lam:?}: {dp} vs {bf}");
                }
            }
        }
    }

    #[test]
    fn bruteforce_two_step_non_uniform() {
        let mu = StepDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        let v = checkpointed_mgf_bruteforce(&mu, &endpoint(), &[1.0], 2, DEFAULT_ENUMERATION_CAP).unwrap();
        let expected = 0.5 * (0.38 + 0.62 * 2f64.exp()).ln();
        assert!((v - expected).abs() < 1e-14);
    }

    /// Log-space reference DP, independent of the tilted representation.
    fn log_space_reference(d: usize, grid: &TimeGrid, lambda: &[f64], n: usize) -> f64 {
        let up = ((d - 1) as f64 / d as f64).ln();
        let down = (1.0 / d as f64).ln();
        let idx = grid.indices(n);
        let last = *idx.last().unwrap();
        let mut cur = vec![f64::NEG_INFINITY; last + 2];
        cur[0] = 0.0;
        let lse = |a: f64, b: f64| {
            let m = a.max(b);
            if m == f64::NEG_INFINITY {
                m
            } else {
                m + ((a - m).exp() + (b - m).exp()).ln()
            }
        };
        for t in 0..=last {
            for (i, &l) in idx.iter().zip(lambda) {
                if *i == t {
                    for (k, v) in cur.iter_mut().enumerate() {
                        *v += l * k as f64;
                    }
                }
            }
            if t == last {
                break;
            }
            let mut next = vec![f64::NEG_INFINITY; last + 2];
            for k in 0..=t + 1 {
                let below = if k == 1 {
                    cur[0]
                } else if k >= 2 {
                    cur[k - 1] + up
                } else {
                    f64::NEG_INFINITY
                };
                let above = if k < t { cur[k + 1] + down } else { f64::NEG_INFINITY };
                next[k] = lse(below, above);
            }
            cur = next;
        }
        cur.iter().fold(f64::NEG_INFINITY, |a, &b| lse(a, b)) / n as f64
    }

    #[test]
    fn tilted_dp_survives_opposite_sign_checkpoints() {
        let grid = two_point();
        for lam in [
            [-8.0, 8.0],
            [8.0, -8.0],
            [-8.0, -8.0],
            [8.0, 8.0],
            [-3.0, 2.5],
            [-30.0, 10.0],
            [10.0, -30.0],
            [-30.0, -30.0],
        ] {
            let fast = checkpointed_mgf_simple(3, &grid, &lam, 400).unwrap();
            let slow = log_space_reference(3, &grid, &lam, 400);
            assert!((fast - slow).abs() < 1e-11, "λ={lam:?}: {fast} vs {slow}");
        }
    }

    #[test]
    fn deep_negative_endpoint_weight_keeps_returning_paths() {
        let grid = endpoint();
        for d in [3, 5] {
            let slow = log_space_reference(d, &grid, &[-24.0], 1600);
            let fast = checkpointed_mgf_simple(d, &grid, &[-24.0], 1600).unwrap();
            assert!((fast - slow).abs() < 1e-11, "d={d}: {fast} vs {slow}");
            let shallow = checkpointed_mgf_simple(d, &grid, &[-12.0], 1600).unwrap();
            assert!((fast - shallow).abs() < 1e-6, "d={d}: {fast} vs {shallow}");
        }
    }

    #[test]
    fn finiteness_bound() {
        let grid = TimeGrid::new(vec![0.25, 0.6, 1.0]).unwrap();
        for lam in [[1.0, -2.0, 3.0], [-4.0, 4.0, -4.0], [0.5, 0.5, 0.5]] {
            for n in [10, 55, 200] {
                let v = checkpointed_mgf_simple(4, &grid, &lam, n).unwrap();
                let bound: f64 = lam.iter().zip(grid.times()).map(|(l, t)| l.abs() * t).sum();
                assert!(v <= bound + 1e-12, "{v} > {bound}");
            }
        }
    }

    #[test]
    fn extrapolation_examples() {
        let constant: BTreeMap<_, _> = [(10, 2.5), (20, 2.5), (40, 2.5), (80, 2.5)].into();
        assert_eq!(extrapolate_limit(&constant).unwrap(), Extrapolated { estimate: 2.5, halfwidth: 0.0 });

        let (c, a) = (0.7, -3.0);
        let seq: BTreeMap<_, _> = [100, 200, 400, 800].iter().map(|&n| (n, c + a / n as f64)).collect();
        let ex = extrapolate_limit(&seq).unwrap();
        assert!((ex.estimate - c).abs() <= a.abs() / 800.0);
        assert!((ex.estimate - c).abs() < 1e-12);

        let short: BTreeMap<_, _> = [(1, 0.0), (2, 0.0), (3, 0.0)].into();
        assert!(matches!(extrapolate_limit(&short), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn endpoint_limit_at_lambda_one() {
        let values: BTreeMap<_, _> = [200, 400, 800, 1600]
            .iter()
            .map(|&n| (n, checkpointed_mgf_simple(3, &endpoint(), &[1.0], n).unwrap()))
            .collect();
        let ex = extrapolate_limit(&values).unwrap();
        let closed = ((2.0 / 3.0) * 1f64.exp() + (1.0 / 3.0) * (-1f64).exp()).ln();
        assert!((ex.estimate - closed).abs() < 5e-3, "{} vs {closed}", ex.estimate);
        assert!((closed - 0.660_011_387).abs() < 1e-8);
    }

    #[test]
    fn table_is_convex_along_grid_lines() {
        let lg = LambdaGrid::cube(2, -3.0, 3.0, 9).unwrap();
        let table =
            MgfTable::build(MgfSource::SimpleWalk { d: 3 }, two_point(), lg.clone(), vec![20, 40, 80, 160]).unwrap();
        for values in table.values_by_n.values() {
            assert!(lg.convexity_violation(values) <= 1e-9);
        }
        let zero = lg.points().iter().position(|p| p.iter().all(|&v| v == 0.0)).unwrap();
        assert_eq!(table.extrapolated[zero], Extrapolated { estimate: 0.0, halfwidth: 0.0 });
        assert!(table.extrapolated.iter().all(|e| e.estimate.is_finite()));
    }

    #[test]
    fn table_evaluate_matches_grid_entries() {
        let lg = LambdaGrid::cube(1, -2.0, 2.0, 5).unwrap();
        let table =
            MgfTable::build(MgfSource::SimpleWalk { d: 4 }, endpoint(), lg.clone(), vec![50, 100, 150, 200]).unwrap();
        for (i, p) in lg.points().iter().enumerate() {
            assert_eq!(table.evaluate(p).unwrap(), table.extrapolated[i]);
        }
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "lambda_1,n_50,n_100,n_150,n_200,estimate,halfwidth");
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn table_rejects_mismatched_dimensions() {
        let lg = LambdaGrid::cube(1, -1.0, 1.0, 3).unwrap();
        let err = MgfTable::build(MgfSource::SimpleWalk { d: 3 }, two_point(), lg, vec![1, 2, 3, 4]);
        assert!(err.is_err());
    }

    #[test]
    fn grid_indexing_round_trips() {
        let lg = LambdaGrid::new(vec![Axis::new(0.0, 1.0, 3).unwrap(), Axis::new(-1.0, 1.0, 5).unwrap()]).unwrap();
        for flat in 0..lg.len() {
            assert_eq!(lg.flat_index(&lg.multi_index(flat)), flat);
        }
        assert_eq!(lg.point(0), vec![0.0, -1.0]);
        assert_eq!(lg.point(1), vec![0.0, -0.5]);
        assert_eq!(lg.point(14), vec![1.0, 1.0]);
        assert!(lg.on_boundary(&[0.5, 1.0]));
        assert!(!lg.on_boundary(&[0.5, 0.0]));
        let default = LambdaGrid::default_for(1);
        assert_eq!(default.len(), 65);
        assert_eq!(default.point(32), vec![0.0]);
    }

    #[test]
    fn endpoint_closed_form_is_continuous() {
        for d in 3..=6 {
            let t = simple_walk::flat_threshold(d);
            let a = simple_walk::increment_log_mgf(d, t);
            assert!((a - simple_walk::log_spectral_radius(d)).abs() < 1e-14);
        }
    }
}
