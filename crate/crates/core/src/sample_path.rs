//! Rescaled distance paths `Z_n(t) = l(Y_[nt]) / n`, their polygonal
//! interpolations, and the integral rate functional
//! `I(f) = ∫ Λ*(f'(t)) dt` for the simple walk.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ext::{format_float, ExtReal};
use crate::legendre::RateGrid;
use crate::legendre::{increment_rate, lambda_star_closed_form};
use crate::numeric::kahan_sum;
use crate::tree_walk::LatticePath;
use crate::{Error, Result};

const FLAG_TOL: f64 = 1e-12;

/// Right-continuous step function `t ↦ heights[[nt]] / n` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFunctionPath {
    n: usize,
    heights: Vec<usize>,
}

impl StepFunctionPath {
    /// Integer heights `l(Y_0), …, l(Y_n)`; must start at 0 and move by
    /// exactly one per step.
    pub fn from_heights(heights: Vec<usize>) -> Result<Self> {
        if heights.len() < 2 {
            return Err(Error::domain("need at least one step"));
        }
        if heights[0] != 0 {
            return Err(Error::domain("path must start at 0"));
        }
        if let Some(i) = heights.windows(2).position(|w| w[0].abs_diff(w[1]) != 1) {
            return Err(Error::domain(format!("step {i} does not move by one")));
        }
        Ok(StepFunctionPath { n: heights.len() - 1, heights })
    }

    pub fn from_lattice(path: &LatticePath) -> Self {
        StepFunctionPath { n: path.n(), heights: path.prefix_lengths().to_vec() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn heights(&self) -> &[usize] {
        &self.heights
    }

    /// Values `Z_n(i/n)` for `i = 0..=n`.
    pub fn values(&self) -> Vec<f64> {
        self.heights.iter().map(|&h| h as f64 / self.n as f64).collect()
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let i = ((t.clamp(0.0, 1.0) * self.n as f64 + 1e-9).floor() as usize).min(self.n);
        self.heights[i] as f64 / self.n as f64
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_points(w, (0..=self.n).map(|i| (i as f64 / self.n as f64, self.heights[i] as f64 / self.n as f64)))
    }
}

fn write_points<W: Write>(w: W, points: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["t", "value"])?;
    for (t, v) in points {
        out.write_record([format_float(t), format_float(v)])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Shape {
    /// Interpolation of integer heights at `i/n`; slopes are exact integers.
    Lattice {
        n: usize,
        heights: Vec<i64>,
    },
    Knots(Vec<(f64, f64)>),
}

/// Continuous piecewise-linear path on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonalPath {
    shape: Shape,
}

/// One linear piece: duration and slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub dt: f64,
    pub slope: f64,
}

impl PolygonalPath {
    /// Breakpoints `(t, value)` with `t` strictly increasing from 0 to 1.
    pub fn from_knots(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::domain("need at least two knots"));
        }
        if knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::domain("knots must be finite"));
        }
        if knots[0].0 != 0.0 || knots[knots.len() - 1].0 != 1.0 {
            return Err(Error::domain("knots must span [0, 1]"));
        }
        if knots.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::domain("knot times must be strictly increasing"));
        }
        Ok(PolygonalPath { shape: Shape::Knots(knots) })
    }

    /// Piecewise-linear path through `(tᵢ, f(tᵢ))` from slopes on the
    /// intervals between the given interior breakpoints, starting at 0.
    pub fn from_slopes(breakpoints: &[f64], slopes: &[f64]) -> Result<Self> {
        if slopes.len() != breakpoints.len() + 1 {
            return Err(Error::domain("need one more slope than interior breakpoints"));
        }
        let mut times = vec![0.0];
        times.extend_from_slice(breakpoints);
        times.push(1.0);
        let mut knots = vec![(0.0, 0.0)];
        for (w, &s) in times.windows(2).zip(slopes) {
            let v = knots.last().expect("nonempty").1 + s * (w[1] - w[0]);
            knots.push((w[1], v));
        }
        PolygonalPath::from_knots(knots)
    }

    pub fn knots(&self) -> Vec<(f64, f64)> {
        match &self.shape {
            Shape::Lattice { n, heights } => {
                heights.iter().enumerate().map(|(i, &h)| (i as f64 / *n as f64, h as f64 / *n as f64)).collect()
            }
            Shape::Knots(k) => k.clone(),
        }
    }

    pub fn segments(&self) -> Vec<Segment> {
        match &self.shape {
            Shape::Lattice { n, heights } => heights
                .windows(2)
                .enumerate()
                .map(|(i, w)| Segment { t0: i as f64 / *n as f64, dt: 1.0 / *n as f64, slope: (w[1] - w[0]) as f64 })
                .collect(),
            Shape::Knots(k) => k
                .windows(2)
                .map(|w| Segment { t0: w[0].0, dt: w[1].0 - w[0].0, slope: (w[1].1 - w[0].1) / (w[1].0 - w[0].0) })
                .collect(),
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match &self.shape {
            Shape::Lattice { n, heights } => {
                let s = t * *n as f64;
                let i = (s.floor() as usize).min(n - 1);
                let frac = s - i as f64;
                (heights[i] as f64 + frac * (heights[i + 1] - heights[i]) as f64) / *n as f64
            }
            Shape::Knots(k) => {
                let j = k.partition_point(|&(kt, _)| kt <= t).clamp(1, k.len() - 1);
                let ((t0, v0), (t1, v1)) = (k[j - 1], k[j]);
                v0 + (t - t0) / (t1 - t0) * (v1 - v0)
            }
        }
    }

    /// Largest absolute slope over all segments.
    pub fn lipschitz_constant(&self) -> f64 {
        self.segments().iter().map(|s| s.slope.abs()).fold(0.0, f64::max)
    }

    /// Splits the segment containing `t` at `t` (no-op at existing knots).
    pub fn split_at(&self, t: f64) -> Result<Self> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::domain("split point must lie in (0, 1)"));
        }
        let mut knots = self.knots();
        if knots.iter().any(|&(kt, _)| kt == t) {
            return Ok(self.clone());
        }
        let v = self.value_at(t);
        let pos = knots.partition_point(|&(kt, _)| kt < t);
        knots.insert(pos, (t, v));
        PolygonalPath::from_knots(knots)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_points(w, self.knots().into_iter())
    }
}

/// Linear interpolation of `z` through `(i/n, Z_n(i/n))`.
pub fn polygonal(z: &StepFunctionPath) -> PolygonalPath {
    PolygonalPath { shape: Shape::Lattice { n: z.n, heights: z.heights.iter().map(|&h| h as i64).collect() } }
}

/// `sup_t |p(t) - z(t)|` over `[0, 1]`. On each piece where both are
/// linear/constant the extremes sit at the piece ends (taking left limits of
/// the step function), so the supremum is evaluated exactly there.
pub fn sup_distance(p: &PolygonalPath, z: &StepFunctionPath) -> f64 {
    let n = z.n as f64;
    let mut cuts: Vec<f64> = (0..=z.n).map(|i| i as f64 / n).collect();
    cuts.extend(p.knots().iter().map(|&(t, _)| t));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut worst: f64 = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        // step value on [a, b) is fixed by the lattice cell containing a
        let cell = ((a * n + 1e-9).floor() as usize).min(z.n);
        let c = z.heights[cell] as f64 / n;
        worst = worst.max((p.value_at(a) - c).abs()).max((p.value_at(b) - c).abs());
    }
    worst
}

/// Which one-slope rate is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateVariant {
    /// `Λ*` exactly as given in closed form: `+∞` for negative slopes.
    PaperLiteral,
    /// Conjugate of the one-step biased-walk log-MGF; finite on `[-1, 1]`.
    IncrementRate,
}

impl RateVariant {
    pub fn label(self) -> &'static str {
        match self {
            RateVariant::PaperLiteral => "paper-literal",
            RateVariant::IncrementRate => "increment-rate",
        }
    }

    fn local_rate(self, d: usize, slope: f64) -> ExtReal {
        match self {
            RateVariant::PaperLiteral => lambda_star_closed_form(d, slope),
            RateVariant::IncrementRate => increment_rate(d, slope),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainFlags {
    pub starts_at_zero: bool,
    pub lipschitz_ok: bool,
    pub nonnegative: bool,
    pub sup_norm_le_1: bool,
}

impl DomainFlags {
    pub fn all(self) -> bool {
        self.starts_at_zero && self.lipschitz_ok && self.nonnegative && self.sup_norm_le_1
    }
}

/// Membership checks for nonnegative 1-Lipschitz paths from 0 bounded by 1.
/// Absolute continuity is implied by the Lipschitz check.
pub fn domain_flags(p: &PolygonalPath) -> DomainFlags {
    let knots = p.knots();
    DomainFlags {
        starts_at_zero: knots[0].1.abs() <= FLAG_TOL,
        lipschitz_ok: p.lipschitz_constant() <= 1.0 + FLAG_TOL,
        nonnegative: knots.iter().all(|&(_, v)| v >= -FLAG_TOL),
        sup_norm_le_1: knots.iter().all(|&(_, v)| v.abs() <= 1.0 + FLAG_TOL),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFunctionalReport {
    pub variant: RateVariant,
    pub value: ExtReal,
    pub segment_contributions: Vec<ExtReal>,
    pub domain_flags: DomainFlags,
}

fn snap(slope: f64) -> f64 {
    for target in [-1.0, 0.0, 1.0] {
        if (slope - target).abs() <= FLAG_TOL {
            return target;
        }
    }
    slope
}

/// `Σ Δt · rate(slope)` over the segments of `p`, or `+∞` when a domain flag
/// fails.
pub fn mogulskii_rate_simple(d: usize, p: &PolygonalPath, variant: RateVariant) -> Result<RateFunctionalReport> {
    if d < 3 {
        return Err(Error::domain(format!("need d >= 3, got {d}")));
    }
    let segment_contributions: Vec<ExtReal> = p
        .segments()
        .iter()
        .map(|s| match variant.local_rate(d, snap(s.slope)) {
            ExtReal::Finite(r) => ExtReal::Finite(s.dt * r),
            other => other,
        })
        .collect();
    let domain_flags = domain_flags(p);
    let value = if !domain_flags.all() || segment_contributions.iter().any(|c| !c.is_finite()) {
        ExtReal::PosInf
    } else {
        ExtReal::Finite(kahan_sum(segment_contributions.iter().map(|c| c.to_f64())))
    };
    Ok(RateFunctionalReport { variant, value, segment_contributions, domain_flags })
}

/// Lower bound for the sample-path rate: the largest interpolated
/// `I_J(f(t₁), …, f(t_j))` over the supplied tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledRate {
    pub value: ExtReal,
    pub per_table: Vec<ExtReal>,
}

pub fn assemble_rate(f: &PolygonalPath, tables: &[RateGrid]) -> Result<AssembledRate> {
    if tables.is_empty() {
        return Err(Error::EmptyInput);
    }
    let per_table = tables
        .iter()
        .map(|table| {
            let projected: Vec<f64> = table.grid.times().iter().map(|&t| f.value_at(t)).collect();
            table.interpolate(&projected)
        })
        .collect::<Result<Vec<_>>>()?;
    let value = per_table.iter().copied().reduce(ExtReal::max).expect("nonempty");
    Ok(AssembledRate { value, per_table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::tree_walk::{simulate_walk, StepDistribution};

    #[test]
    fn tent_from_two_steps() {
        let z = StepFunctionPath::from_heights(vec![0, 1, 0]).unwrap();
        assert_eq!(z.values(), vec![0.0, 0.5, 0.0]);
        let p = polygonal(&z);
        assert_eq!(p.knots(), vec![(0.0, 0.0), (0.5, 0.5), (1.0, 0.0)]);
        assert_eq!(p.value_at(0.25), 0.25);
        assert_eq!(sup_distance(&p, &z), 0.5);
    }

    #[test]
    fn monotone_walk_is_the_diagonal() {
        let z = StepFunctionPath::from_heights((0..=10).collect()).unwrap();
        let p = polygonal(&z);
        assert_eq!(p.lipschitz_constant(), 1.0);
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            assert!((p.value_at(t) - t).abs() < 1e-15);
        }
    }

    #[test]
    fn synthetic_lipschitz() {
        let p = PolygonalPath::from_knots(vec![(0.0, 0.0), (0.5, 0.75), (1.0, 0.75)]).unwrap();
        assert_eq!(p.lipschitz_constant(), 1.5);
        assert!(!domain_flags(&p).lipschitz_ok);
    }

    #[test]
    fn walk_paths_have_unit_slopes_and_close_step_functions() {
        let mu = StepDistribution::uniform(3).unwrap();
        for seed in 0..20 {
            let path = simulate_walk(&mu, 37, seed).unwrap();
            let z = StepFunctionPath::from_lattice(&path);
            let p = polygonal(&z);
            assert_eq!(p.lipschitz_constant(), 1.0);
            let dist = sup_distance(&p, &z);
            assert!(dist <= 1.0 / 37.0 * (1.0 + 1e-12));
            assert!(domain_flags(&p).all());
        }
    }

    #[test]
    fn rate_examples() {
        let diag = PolygonalPath::from_slopes(&[], &[1.0]).unwrap();
        let r = mogulskii_rate_simple(3, &diag, RateVariant::PaperLiteral).unwrap();
        assert!((r.value.to_f64() - 1.5f64.ln()).abs() < 1e-14);

        let typical = PolygonalPath::from_slopes(&[], &[1.0 / 3.0]).unwrap();
        let r = mogulskii_rate_simple(3, &typical, RateVariant::PaperLiteral).unwrap();
        assert!(r.value.to_f64().abs() < 1e-14);

        let dip = PolygonalPath::from_slopes(&[0.5], &[0.8, -0.5]).unwrap();
        let literal = mogulskii_rate_simple(3, &dip, RateVariant::PaperLiteral).unwrap();
        assert_eq!(literal.value, ExtReal::PosInf);
        assert!(literal.domain_flags.all());
        let inc = mogulskii_rate_simple(3, &dip, RateVariant::IncrementRate).unwrap();
        assert!(inc.value.is_finite());
    }

    #[test]
    fn flags_force_infinity() {
        let high = PolygonalPath::from_knots(vec![(0.0, 0.0), (1.0, 1.5)]).unwrap();
        let r = mogulskii_rate_simple(3, &high, RateVariant::IncrementRate).unwrap();
        assert_eq!(r.value, ExtReal::PosInf);
        let shifted = PolygonalPath::from_knots(vec![(0.0, 0.1), (1.0, 0.2)]).unwrap();
        let r = mogulskii_rate_simple(3, &shifted, RateVariant::IncrementRate).unwrap();
        assert!(!r.domain_flags.starts_at_zero);
        assert_eq!(r.value, ExtReal::PosInf);
        let negative = PolygonalPath::from_slopes(&[], &[-0.2]).unwrap();
        let r = mogulskii_rate_simple(3, &negative, RateVariant::IncrementRate).unwrap();
        assert!(!r.domain_flags.nonnegative);
    }

    #[test]
    fn splitting_preserves_value() {
        let p = PolygonalPath::from_slopes(&[0.3, 0.65], &[0.9, 0.2, 0.5]).unwrap();
        for variant in [RateVariant::PaperLiteral, RateVariant::IncrementRate] {
            let a = mogulskii_rate_simple(4, &p, variant).unwrap().value.to_f64();
            let b = mogulskii_rate_simple(4, &p.split_at(0.1).unwrap().split_at(0.5).unwrap(), variant)
                .unwrap()
                .value
                .to_f64();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn assemble_takes_max_and_reports_coverage() {
        let axes = vec![vec![0.0, 0.5, 1.0]];
        let low =
            RateGrid::from_values(TimeGrid::endpoint(), axes.clone(), [0.0, 0.1, 0.2].map(ExtReal::Finite).to_vec())
                .unwrap();
        let high = RateGrid::from_values(
            TimeGrid::new(vec![0.5]).unwrap(),
            axes,
            [0.0, 0.3, 0.6].map(ExtReal::Finite).to_vec(),
        )
        .unwrap();
        let f = PolygonalPath::from_slopes(&[], &[1.0]).unwrap();
        let one = assemble_rate(&f, std::slice::from_ref(&low)).unwrap();
        let both = assemble_rate(&f, &[low.clone(), high]).unwrap();
        assert!((one.value.to_f64() - 0.2).abs() < 1e-15);
        assert!((both.value.to_f64() - 0.3).abs() < 1e-15);
        let far = PolygonalPath::from_knots(vec![(0.0, 0.0), (0.5, 0.5), (1.0, 1.0 + 1e-3)]).unwrap();
        assert!(matches!(assemble_rate(&far, &[low]), Err(Error::Coverage { .. })));
        assert!(matches!(assemble_rate(&f, &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn bad_inputs() {
        assert!(StepFunctionPath::from_heights(vec![0, 2]).is_err());
        assert!(StepFunctionPath::from_heights(vec![1, 0]).is_err());
        assert!(PolygonalPath::from_knots(vec![(0.0, 0.0), (0.5, 0.1)]).is_err());
        assert!(PolygonalPath::from_knots(vec![(0.0, 0.0), (0.5, 0.1), (0.5, 0.2), (1.0, 0.0)]).is_err());
    }

    #[test]
    fn csv_layout() {
        let z = StepFunctionPath::from_heights(vec![0, 1, 2, 1]).unwrap();
        let mut buf = Vec::new();
        polygonal(&z).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("t,value"));
        assert_eq!(text.lines().count(), 5);
    }
}
