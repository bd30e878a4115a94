//! Fenchel-Legendre conjugates on grids, the closed-form rate function of
//! the simple walk, and discrete convexity certificates.
//!
//! A grid conjugate `sup_λ {<λ,x> - Λ(λ)}` over finitely many λ is a lower
//! bound for the true transform. Every [`RateGrid`] therefore records the λ
//! grid it was computed on and which points hit its boundary.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ext::{format_float, ExtReal};
use crate::grid::TimeGrid;
use crate::mgf::{LambdaGrid, LogMgf, MgfTable};
use crate::numeric::{golden_max, xlogx};
use crate::{Error, Result};

/// Gain in the objective, when the λ radius is doubled, above which a
/// boundary arg-max is reported as +∞.
pub const UNBOUNDED_GAIN: f64 = 1e-3;

/// Tolerance used by [`certify_midpoint_convexity`].
pub const CONVEXITY_TOL: f64 = 1e-6;

const MAX_REFINE_ROUNDS: usize = 30;
const REFINE_STOP: f64 = 1e-10;

/// `Λ*(x)` for the simple walk on `T_d`:
///
/// ```text
/// -((1+x)/2) log(d-1) + (1+x) log sqrt(1+x) + (1-x) log sqrt(1-x) + log(d/2)
/// ```
///
/// on `[0, 1]` (with `0 log 0 = 0`), `+∞` elsewhere.
///
/// # Panics
/// If `d < 3`.
pub fn lambda_star_closed_form(d: usize, x: f64) -> ExtReal {
    assert!(d >= 3, "need d >= 3, got {d}");
    if !(0.0..=1.0).contains(&x) {
        return ExtReal::PosInf;
    }
    let dm1 = (d - 1) as f64;
    let v = -0.5 * (1.0 + x) * dm1.ln() + 0.5 * xlogx(1.0 + x) + 0.5 * xlogx(1.0 - x) + (d as f64 / 2.0).ln();
    ExtReal::Finite(v)
}

/// Conjugate of the one-step log-MGF `log(((d-1)/d) e^λ + (1/d) e^{-λ})`:
/// the relative entropy of a `±1` coin with mean `s` against the biased
/// coin. Finite on `[-1, 1]`, and equal to [`lambda_star_closed_form`] on
/// `[0, 1]`.
pub fn increment_rate(d: usize, s: f64) -> ExtReal {
    assert!(d >= 3, "need d >= 3, got {d}");
    if !(-1.0..=1.0).contains(&s) {
        return ExtReal::PosInf;
    }
    let q = (d - 1) as f64 / d as f64;
    let p = 0.5 * (1.0 + s);
    let mut v = xlogx(p) + xlogx(1.0 - p);
    if p > 0.0 {
        v -= p * q.ln();
    }
    if p < 1.0 {
        v -= (1.0 - p) * (1.0 - q).ln();
    }
    ExtReal::Finite(v)
}

/// Tilt `θ` at which the one-step law has mean `x`:
/// `e^{2θ} = ((1+x)/(1-x)) / (d-1)`. Requires `|x| < 1`.
pub fn increment_tilt(d: usize, x: f64) -> Result<f64> {
    if d < 3 || x.abs() >= 1.0 || x.is_nan() {
        return Err(Error::domain(format!("tilt defined for d >= 3 and |x| < 1, got d={d}, x={x}")));
    }
    Ok(0.5 * (((1.0 + x) / (1.0 - x)).ln() - ((d - 1) as f64).ln()))
}

/// One x point of a [`RateGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub x: Vec<f64>,
    pub value: ExtReal,
    /// Maximising λ found (the refined point, or the boundary point when the
    /// value is unbounded).
    pub argmax_lambda: Vec<f64>,
    /// The arg-max sits on the outer boundary of the λ grid.
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub lambda_grid: LambdaGrid,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub ok: bool,
    pub worst_violation: ExtReal,
    pub triples_checked: usize,
}

/// Rate-function values on a tensor grid of x points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateGrid {
    pub grid: TimeGrid,
    pub x_axes: Vec<Vec<f64>>,
    /// In lexicographic order of the x axes (first coordinate slowest).
    pub points: Vec<RatePoint>,
    pub resolution: Option<Resolution>,
    pub certificate: Certificate,
}

fn check_axes(x_axes: &[Vec<f64>]) -> Result<()> {
    if x_axes.is_empty() || x_axes.iter().any(|a| a.is_empty()) {
        return Err(Error::EmptyGrid);
    }
    for a in x_axes {
        if a.iter().any(|v| !v.is_finite()) || a.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("x axes must be finite and strictly increasing"));
        }
    }
    Ok(())
}

fn tensor_points(x_axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = x_axes.iter().map(Vec::len).product();
    (0..total)
        .map(|mut flat| {
            let mut p = vec![0.0; x_axes.len()];
            for (slot, axis) in p.iter_mut().zip(x_axes).rev() {
                *slot = axis[flat % axis.len()];
                flat /= axis.len();
            }
            p
        })
        .collect()
}

impl RateGrid {
    /// Builds a grid from given values (no conjugate involved).
    pub fn from_values(grid: TimeGrid, x_axes: Vec<Vec<f64>>, values: Vec<ExtReal>) -> Result<Self> {
        check_axes(&x_axes)?;
        let xs = tensor_points(&x_axes);
        if xs.len() != values.len() {
            return Err(Error::domain(format!("{} x points but {} values", xs.len(), values.len())));
        }
        let dim = x_axes.len();
        let points = xs
            .into_iter()
            .zip(values)
            .map(|(x, value)| RatePoint { x, value, argmax_lambda: vec![f64::NAN; dim], boundary: false })
            .collect();
        let mut out = RateGrid { grid, x_axes, points, resolution: None, certificate: Certificate::unchecked() };
        out.certificate = certify_midpoint_convexity(&out);
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.x_axes.len()
    }

    pub fn values(&self) -> Vec<ExtReal> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// Smallest finite value on the grid.
    pub fn min_value(&self) -> Option<f64> {
        self.points.iter().filter_map(|p| p.value.finite()).reduce(f64::min)
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.x_axes).fold(0, |acc, (&i, a)| acc * a.len() + i)
    }

    /// Multilinear interpolation of the grid values at `x`. Any `+∞` corner
    /// with positive weight makes the result `+∞`.
    pub fn interpolate(&self, x: &[f64]) -> Result<ExtReal> {
        if x.len() != self.dim() {
            return Err(Error::domain(format!("point has {} coordinates, grid has {}", x.len(), self.dim())));
        }
        let tol = 1e-12;
        let mut cells = Vec::with_capacity(x.len());
        for (&v, axis) in x.iter().zip(&self.x_axes) {
            let (lo, hi) = (axis[0], axis[axis.len() - 1]);
            if !(v >= lo - tol && v <= hi + tol) {
                return Err(Error::Coverage { point: x.to_vec() });
            }
            if axis.len() == 1 {
                cells.push((0, 0, 0.0));
                continue;
            }
            let v = v.clamp(lo, hi);
            let i = axis.partition_point(|&a| a <= v).clamp(1, axis.len() - 1) - 1;
            let w = (v - axis[i]) / (axis[i + 1] - axis[i]);
            cells.push((i, i + 1, w));
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << x.len()) {
            let mut weight = 1.0;
            let mut idx = Vec::with_capacity(x.len());
            for (bit, &(i0, i1, w)) in cells.iter().enumerate() {
                if corner >> bit & 1 == 1 {
                    weight *= w;
                    idx.push(i1);
                } else {
                    weight *= 1.0 - w;
                    idx.push(i0);
                }
            }
            if weight == 0.0 {
                continue;
            }
            match self.points[self.flat_index(&idx)].value {
                ExtReal::Finite(v) => acc += weight * v,
                other => return Ok(other),
            }
        }
        Ok(ExtReal::Finite(acc))
    }

    /// CSV: `x_1..x_j, value, argmax_lambda_1..argmax_lambda_j, boundary`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let dim = self.dim();
        let mut header: Vec<String> = (1..=dim).map(|i| format!("x_{i}")).collect();
        header.push("value".into());
        header.extend((1..=dim).map(|i| format!("argmax_lambda_{i}")));
        header.push("boundary".into());
        out.write_record(&header)?;
        for p in &self.points {
            let mut row: Vec<String> = p.x.iter().map(|&v| format_float(v)).collect();
            row.push(p.value.to_string());
            row.extend(p.argmax_lambda.iter().map(|&v| format_float(v)));
            row.push(p.boundary.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

impl Certificate {
    fn unchecked() -> Self {
        Certificate { ok: true, worst_violation: ExtReal::Finite(0.0), triples_checked: 0 }
    }
}

/// Grid conjugate of an extrapolated MGF table on its own λ grid.
pub fn conjugate(table: &MgfTable, x_axes: &[Vec<f64>]) -> Result<RateGrid> {
    conjugate_with(table, &table.lambda_grid, Some(table.estimates()), table.grid.clone(), x_axes)
}

/// Grid conjugate of any [`LogMgf`] on the given λ grid.
pub fn conjugate_of<M: LogMgf + ?Sized>(
    f: &M,
    lambda_grid: &LambdaGrid,
    grid: TimeGrid,
    x_axes: &[Vec<f64>],
) -> Result<RateGrid> {
    conjugate_with(f, lambda_grid, None, grid, x_axes)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn conjugate_with<M: LogMgf + ?Sized>(
    f: &M,
    lambda_grid: &LambdaGrid,
    grid_values: Option<Vec<f64>>,
    grid: TimeGrid,
    x_axes: &[Vec<f64>],
) -> Result<RateGrid> {
    if lambda_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    check_axes(x_axes)?;
    let dim = lambda_grid.dim();
    if x_axes.len() != dim || f.dim() != dim {
        return Err(Error::domain(format!(
            "dimension mismatch: λ grid {dim}, x axes {}, log-MGF {}",
            x_axes.len(),
            f.dim()
        )));
    }
    let lambdas = lambda_grid.points();
    let values = match grid_values {
        Some(v) => v,
        None => lambdas.par_iter().map(|l| f.log_mgf(l)).collect(),
    };
    if values.len() != lambdas.len() {
        return Err(Error::domain("λ grid and values disagree in length"));
    }
    let zero = vec![0.0; dim];
    let at_zero = f.log_mgf(&zero);

    let points = tensor_points(x_axes)
        .into_par_iter()
        .map(|x| conjugate_point(f, lambda_grid, &lambdas, &values, (&zero, at_zero), x))
        .collect();
    let note = format!(
        "lower bound: max over {} grid points of [{}] plus coordinate-wise golden-section refinement; \
         boundary maxima reported as +inf when doubling the radius gains more than {UNBOUNDED_GAIN}",
        lambda_grid.len(),
        lambda_grid
            .axes
            .iter()
            .map(|a| format!("{}..{} ({} pts)", a.lo, a.hi, a.points))
            .collect::<Vec<_>>()
            .join(" x "),
    );
    let mut out = RateGrid {
        grid,
        x_axes: x_axes.to_vec(),
        points,
        resolution: Some(Resolution { lambda_grid: lambda_grid.clone(), note }),
        certificate: Certificate::unchecked(),
    };
    out.certificate = certify_midpoint_convexity(&out);
    Ok(out)
}

fn conjugate_point<M: LogMgf + ?Sized>(
    f: &M,
    lambda_grid: &LambdaGrid,
    lambdas: &[Vec<f64>],
    values: &[f64],
    zero: (&[f64], f64),
    x: Vec<f64>,
) -> RatePoint {
    let objective = |l: &[f64]| {
        let v = f.log_mgf(l);
        if v.is_finite() {
            dot(l, &x) - v
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut best_lambda = zero.0.to_vec();
    let mut best = -zero.1;
    let mut from_grid = false;
    for (l, &v) in lambdas.iter().zip(values) {
        let cand = dot(l, &x) - v;
        if cand > best || (!from_grid && cand == best && lex_less(l, &best_lambda)) {
            best = cand;
            best_lambda = l.clone();
            from_grid = true;
        }
    }

    // coordinate-wise refinement inside the grid box, each round followed by
    // a line search along the round's net move
    for _ in 0..MAX_REFINE_ROUNDS {
        let before = best;
        let start = best_lambda.clone();
        for (i, axis) in lambda_grid.axes.iter().enumerate() {
            let h = axis.step();
            if h == 0.0 {
                continue;
            }
            let lo = (best_lambda[i] - h).max(axis.lo);
            let hi = (best_lambda[i] + h).min(axis.hi);
            let mut probe = best_lambda.clone();
            let (arg, val) = golden_max(
                |t| {
                    probe[i] = t;
                    objective(&probe)
                },
                lo,
                hi,
                1e-9 * (1.0 + h),
            );
            if val > best {
                best = val;
                best_lambda[i] = arg;
            }
        }
        let dir: Vec<f64> = best_lambda.iter().zip(&start).map(|(a, b)| a - b).collect();
        if dir.iter().filter(|v| **v != 0.0).count() > 1 {
            let reach = max_step_in_box(lambda_grid, &best_lambda, &dir).min(4.0);
            if reach > 0.0 {
                let base = best_lambda.clone();
                let mut probe = base.clone();
                let (t, val) = golden_max(
                    |t| {
                        for ((p, b), d) in probe.iter_mut().zip(&base).zip(&dir) {
                            *p = b + t * d;
                        }
                        objective(&probe)
                    },
                    0.0,
                    reach,
                    1e-9,
                );
                if val > best {
                    best = val;
                    for ((p, b), d) in best_lambda.iter_mut().zip(&base).zip(&dir) {
                        *p = b + t * d;
                    }
                }
            }
        }
        if best - before < REFINE_STOP {
            break;
        }
    }

    let boundary = on_boundary_loose(lambda_grid, &best_lambda);
    let mut value = ExtReal::Finite(best);
    if boundary {
        let mut far = best_lambda.clone();
        for (v, axis) in far.iter_mut().zip(&lambda_grid.axes) {
            let span = axis.hi - axis.lo;
            if axis.points > 1 && (*v - axis.hi).abs() <= 1e-6 * span {
                *v = axis.hi + span.max(axis.hi.abs());
            } else if axis.points > 1 && (*v - axis.lo).abs() <= 1e-6 * span {
                *v = axis.lo - span.max(axis.lo.abs());
            }
        }
        let gain = objective(&far) - best;
        if gain > UNBOUNDED_GAIN {
            value = ExtReal::PosInf;
        }
    }
    RatePoint { x, value, argmax_lambda: best_lambda, boundary }
}

/// Largest `t >= 0` with `from + t * dir` inside the grid box.
fn max_step_in_box(lambda_grid: &LambdaGrid, from: &[f64], dir: &[f64]) -> f64 {
    let mut t = f64::INFINITY;
    for ((&p, &d), axis) in from.iter().zip(dir).zip(&lambda_grid.axes) {
        if d > 0.0 {
            t = t.min((axis.hi - p) / d);
        } else if d < 0.0 {
            t = t.min((axis.lo - p) / d);
        }
    }
    t.max(0.0)
}

fn on_boundary_loose(lambda_grid: &LambdaGrid, l: &[f64]) -> bool {
    l.iter().zip(&lambda_grid.axes).any(|(&v, a)| {
        let span = a.hi - a.lo;
        a.points > 1 && ((v - a.lo).abs() <= 1e-6 * span || (v - a.hi).abs() <= 1e-6 * span)
    })
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x < y;
        }
    }
    false
}

fn key(x: &[f64]) -> Vec<i64> {
    x.iter().map(|v| (v * 1e9).round() as i64).collect()
}

/// Checks `I((x+y)/2) <= (I(x) + I(y))/2 + 1e-6` over every pair of grid
/// points whose midpoint is also a grid point.
pub fn certify_midpoint_convexity(grid: &RateGrid) -> Certificate {
    let index: HashMap<Vec<i64>, usize> = grid.points.iter().enumerate().map(|(i, p)| (key(&p.x), i)).collect();
    let pts = &grid.points;
    let (worst, checked) = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut worst = ExtReal::Finite(0.0);
            let mut checked = 0usize;
            for j in i + 1..pts.len() {
                let mid: Vec<f64> = pts[i].x.iter().zip(&pts[j].x).map(|(a, b)| 0.5 * (a + b)).collect();
                let Some(&m) = index.get(&key(&mid)) else { continue };
                checked += 1;
                let v = match (pts[i].value, pts[j].value, pts[m].value) {
                    (ExtReal::Finite(a), ExtReal::Finite(b), ExtReal::Finite(c)) => ExtReal::Finite(c - 0.5 * (a + b)),
                    (ExtReal::Finite(_), ExtReal::Finite(_), ExtReal::PosInf) => ExtReal::PosInf,
                    _ => ExtReal::Finite(0.0),
                };
                worst = worst.max(v);
            }
            (worst, checked)
        })
        .reduce(|| (ExtReal::Finite(0.0), 0), |a, b| (a.0.max(b.0), a.1 + b.1));
    let ok = matches!(worst, ExtReal::Finite(v) if v <= CONVEXITY_TOL);
    Certificate { ok, worst_violation: worst, triples_checked: checked }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mgf::{simple_walk, ClosedForm};

    fn fin(v: ExtReal) -> f64 {
        v.finite().expect("finite")
    }

    #[test]
    fn closed_form_anchor_values() {
        for d in 3..=8 {
            let df = d as f64;
            assert!(fin(lambda_star_closed_form(d, (df - 2.0) / df)).abs() < 1e-12);
            assert!((fin(lambda_star_closed_form(d, 1.0)) - (df / (df - 1.0)).ln()).abs() < 1e-12);
            let rho = 2.0 * (df - 1.0).sqrt() / df;
            assert!((fin(lambda_star_closed_form(d, 0.0)) + rho.ln()).abs() < 1e-12);
        }
        assert_eq!(lambda_star_closed_form(3, -0.1), ExtReal::PosInf);
        assert_eq!(lambda_star_closed_form(3, 1.0 + 1e-12), ExtReal::PosInf);
        assert!((fin(lambda_star_closed_form(3, 0.8)) - 0.149_697).abs() < 1e-6);
        assert!((fin(lambda_star_closed_form(3, 0.6)) - 0.043_692).abs() < 1e-6);
    }

    #[test]
    fn closed_form_is_unimodal_around_escape_rate() {
        for d in [3, 4, 5] {
            let c = (d as f64 - 2.0) / d as f64;
            let vals: Vec<(f64, f64)> =
                (0..=1000).map(|i| i as f64 / 1000.0).map(|x| (x, fin(lambda_star_closed_form(d, x)))).collect();
            for w in vals.windows(2) {
                if w[1].0 <= c {
                    assert!(w[1].1 <= w[0].1 + 1e-15);
                } else if w[0].0 >= c {
                    assert!(w[1].1 >= w[0].1 - 1e-15);
                }
            }
            let zeros = vals.iter().filter(|(_, v)| v.abs() < 1e-7).count();
            assert!(zeros <= 1);
        }
    }

    #[test]
    fn increment_rate_extends_closed_form() {
        for d in [3, 4, 7] {
            for i in 0..=100 {
                let x = i as f64 / 100.0;
                let a = fin(lambda_star_closed_form(d, x));
                let b = fin(increment_rate(d, x));
                assert!((a - b).abs() < 1e-13, "d={d} x={x}");
            }
            assert!(increment_rate(d, -1.0).is_finite());
            assert_eq!(increment_rate(d, -1.5), ExtReal::PosInf);
        }
        // d=3, s=-1: always step down, probability 1/3 each step
        assert!((fin(increment_rate(3, -1.0)) - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn tilt_hits_requested_mean() {
        let theta = increment_tilt(3, 0.8).unwrap();
        assert!((theta - 0.752).abs() < 1e-3);
        for x in [-0.5, 0.0, 1.0 / 3.0, 0.9] {
            let t = increment_tilt(4, x).unwrap();
            let (up, down) = (0.75 * t.exp(), 0.25 * (-t).exp());
            assert!(((up - down) / (up + down) - x).abs() < 1e-13);
        }
        assert!(increment_tilt(3, 1.0).is_err());
    }

    #[test]
    fn quadratic_is_self_dual() {
        let f = ClosedForm::new(2, |l: &[f64]| 0.5 * (l[0] * l[0] + l[1] * l[1]));
        let lg = LambdaGrid::cube(2, -4.0, 4.0, 33).unwrap();
        let axes = vec![vec![-1.0, -0.3, 0.0, 0.55, 1.2], vec![-0.7, 0.0, 0.4, 2.0]];
        let rg = conjugate_of(&f, &lg, TimeGrid::new(vec![0.5, 1.0]).unwrap(), &axes).unwrap();
        for p in &rg.points {
            let expect = 0.5 * (p.x[0] * p.x[0] + p.x[1] * p.x[1]);
            assert!((fin(p.value) - expect).abs() < 1e-9, "{:?}", p);
            assert!(!p.boundary);
        }
        assert!(rg.certificate.ok);
    }

    fn increment_mgf() -> ClosedForm<impl Fn(&[f64]) -> f64 + Sync> {
        ClosedForm::new(1, |l: &[f64]| simple_walk::increment_log_mgf(3, l[0]))
    }

    #[test]
    fn conjugate_of_increment_mgf() {
        let rg = conjugate_of(
            &increment_mgf(),
            &LambdaGrid::default_for(1),
            TimeGrid::endpoint(),
            &[vec![1.0 / 3.0, 1.0, 1.3]],
        )
        .unwrap();
        assert!(fin(rg.points[0].value).abs() < 1e-6);
        assert!((fin(rg.points[1].value) - 1.5f64.ln()).abs() < 2e-3);
        assert!(rg.points[1].boundary);
        assert_eq!(rg.points[2].value, ExtReal::PosInf);
        assert!(rg.points[2].boundary);
    }

    #[test]
    fn fenchel_young_on_every_grid_lambda() {
        let lg = LambdaGrid::cube(1, -5.0, 5.0, 41).unwrap();
        let f = increment_mgf();
        let xs: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let rg = conjugate_of(&f, &lg, TimeGrid::endpoint(), &[xs]).unwrap();
        for p in &rg.points {
            for l in lg.points() {
                let lower = l[0] * p.x[0] - f.log_mgf(&l);
                assert!(p.value.to_f64() >= lower - 1e-12);
            }
        }
    }

    #[test]
    fn endpoint_limit_conjugate_matches_closed_form() {
        for d in [3, 4] {
            let f = ClosedForm::new(1, move |l: &[f64]| simple_walk::endpoint_log_mgf(d, l[0]));
            let xs: Vec<f64> = (0..=19).map(|i| i as f64 * 0.05).collect();
            let rg = conjugate_of(&f, &LambdaGrid::default_for(1), TimeGrid::endpoint(), &[xs]).unwrap();
            for p in &rg.points {
                let exact = fin(lambda_star_closed_form(d, p.x[0]));
                assert!((fin(p.value) - exact).abs() < 1e-8, "d={d} x={}", p.x[0]);
            }
        }
    }

    #[test]
    fn biconjugate_recovers_endpoint_limit() {
        // sup over x in [0,1] of λx - Λ*(x)
        let xs: Vec<f64> = (0..=20_000).map(|i| i as f64 / 20_000.0).collect();
        let stars: Vec<f64> = xs.iter().map(|&x| fin(lambda_star_closed_form(3, x))).collect();
        for i in 0..=80 {
            let l = -4.0 + i as f64 * 0.1;
            let bi = xs.iter().zip(&stars).map(|(x, s)| l * x - s).fold(f64::NEG_INFINITY, f64::max);
            let inc = simple_walk::increment_log_mgf(3, l);
            assert!(bi <= inc + 1e-12);
            if l >= simple_walk::flat_threshold(3) {
                assert!((bi - inc).abs() < 2e-3, "λ={l}");
            } else {
                assert!((bi - simple_walk::log_spectral_radius(3)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn certificate_controls() {
        let axes = vec![(0..11).map(|i| i as f64 / 10.0).collect::<Vec<_>>()];
        let convex: Vec<ExtReal> = axes[0].iter().map(|x| ExtReal::Finite(x * x)).collect();
        let rg = RateGrid::from_values(TimeGrid::endpoint(), axes.clone(), convex.clone()).unwrap();
        assert!(rg.certificate.ok);
        assert_eq!(rg.certificate.worst_violation, ExtReal::Finite(0.0));
        assert!(rg.certificate.triples_checked > 0);

        let mut dented = vec![ExtReal::Finite(0.0); 11];
        dented[5] = ExtReal::Finite(0.1);
        let c = certify_midpoint_convexity(&RateGrid::from_values(TimeGrid::endpoint(), axes.clone(), dented).unwrap());
        assert!(!c.ok);
        assert!((c.worst_violation.to_f64() - 0.1).abs() < 1e-12);

        let mut hole = convex;
        hole[5] = ExtReal::PosInf;
        let c = certify_midpoint_convexity(&RateGrid::from_values(TimeGrid::endpoint(), axes, hole).unwrap());
        assert!(!c.ok);
    }

    #[test]
    fn interpolation_and_coverage() {
        let axes = vec![vec![0.0, 1.0], vec![0.0, 2.0]];
        let vals = [0.0, 2.0, 1.0, 3.0].map(ExtReal::Finite).to_vec();
        let rg = RateGrid::from_values(TimeGrid::new(vec![0.5, 1.0]).unwrap(), axes, vals).unwrap();
        assert!((rg.interpolate(&[0.5, 1.0]).unwrap().to_f64() - 1.5).abs() < 1e-15);
        assert_eq!(rg.interpolate(&[1.0, 2.0]).unwrap(), ExtReal::Finite(3.0));
        assert!(matches!(rg.interpolate(&[1.5, 0.0]), Err(Error::Coverage { .. })));
        assert_eq!(rg.min_value(), Some(0.0));
    }

    #[test]
    fn empty_grid_is_rejected() {
        let f = increment_mgf();
        let lg = LambdaGrid::default_for(1);
        assert!(matches!(conjugate_of(&f, &lg, TimeGrid::endpoint(), &[vec![]]), Err(Error::EmptyGrid)));
        assert!(matches!(conjugate_of(&f, &lg, TimeGrid::endpoint(), &[]), Err(Error::EmptyGrid)));
    }

    #[test]
    fn csv_layout() {
        let rg = conjugate_of(&increment_mgf(), &LambdaGrid::default_for(1), TimeGrid::endpoint(), &[vec![0.5, 2.0]])
            .unwrap();
        let mut buf = Vec::new();
        rg.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x_1,value,argmax_lambda_1,boundary");
        assert!(lines[2].starts_with("2,inf,8,true"));
        let json = serde_json::to_string(&rg).unwrap();
        assert!(json.contains("\"inf\""));
    }
}
