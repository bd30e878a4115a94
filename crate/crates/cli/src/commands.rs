use std::path::PathBuf;
use std::process::ExitCode;

use serde::Serialize;
use thiserror::Error;

use tree_ldp::distance_chain::{
    abs_pushforward, biased_walk_dist, brute_force_distance_dist, coupling_check, simple_walk_distance_dist,
};
use tree_ldp::ldp_concat::{
    box_set, harvest_class, hypothesis_threshold, select_class, verify_containment, ConcatPlan,
};
use tree_ldp::legendre::{self, increment_tilt, lambda_star_closed_form};
use tree_ldp::mgf::{Axis, LambdaGrid, MgfSource, MgfTable, DEFAULT_LAMBDA_POINTS, DEFAULT_LAMBDA_RADIUS};
use tree_ldp::montecarlo::{convergence_sweep, RateEstimate};
use tree_ldp::sample_path::{mogulskii_rate_simple, PolygonalPath, RateVariant};
use tree_ldp::tree_walk::{simulate_walks, DEFAULT_ENUMERATION_CAP};
use tree_ldp::{format_float, BoxSpec, ExtReal, StepDistribution, TimeGrid};

use crate::config::{
    merge, resolve_seed, AcceptanceArgs, ConcatArgs, ConjugateArgs, CoupleArgs, DistArgs, LambdaStarArgs, Law, McArgs,
    MgfArgs, RateEndpointArgs, RatePathArgs, SimulateArgs,
};
use crate::output::{Format, Manifest, Sink};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_CAP: u8 = 3;
pub const EXIT_ACCEPTANCE: u8 = 4;

const COUPLING_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] tree_ldp::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use tree_ldp::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(E::CapExceeded { .. }) => EXIT_CAP,
            CliError::Core(E::Io(_) | E::Csv(_) | E::Json(_)) | CliError::Io(_) => 1,
            CliError::Core(_) => EXIT_CONFIG,
        }
    }

    pub fn kind(&self) -> &'static str {
        use tree_ldp::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Core(E::CapExceeded { .. }) => "cap_exceeded",
            CliError::Core(E::Io(_) | E::Csv(_) | E::Json(_)) | CliError::Io(_) => "io",
            CliError::Core(_) => "precondition",
        }
    }
}

type CmdResult = Result<ExitCode, CliError>;

pub struct Context {
    pub config: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
}

impl Context {
    fn load<T: Serialize + serde::de::DeserializeOwned>(&self, flags: &T) -> Result<T, CliError> {
        merge(self.config.as_deref(), flags)
    }

    fn format(&self, default: Format, allowed: &[Format]) -> Result<Format, CliError> {
        let f = self.format.unwrap_or(default);
        if !allowed.contains(&f) {
            return Err(CliError::Config(format!("this command does not support {f:?} output")));
        }
        Ok(f)
    }

    fn sink(&self) -> Sink {
        Sink { output: self.output.clone() }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn step_law(d: Option<usize>, mu: Option<Vec<f64>>) -> Result<StepDistribution, CliError> {
    let law = match mu {
        Some(p) => StepDistribution::new(p)?,
        None => StepDistribution::uniform(d.unwrap_or(3))?,
    };
    if let Some(d) = d {
        if d != law.d() {
            return Err(config_err(format!("d = {d} but mu has {} entries", law.d())));
        }
    }
    Ok(law)
}

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(buf)
}

fn csv_rows(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(header).map_err(tree_ldp::Error::from)?;
        for row in rows {
            w.write_record(&row).map_err(tree_ldp::Error::from)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

/// Drops the last-bit noise of `lo + i * step`.
fn round12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

/// `points` evenly spaced values from `lo` to `hi`.
fn linspace(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, CliError> {
    Ok(Axis::new(lo, hi, points)?.values().into_iter().map(round12).collect())
}

fn lambda_grid(dim: usize, lo: Option<f64>, hi: Option<f64>, points: Option<usize>) -> Result<LambdaGrid, CliError> {
    let lo = lo.unwrap_or(-DEFAULT_LAMBDA_RADIUS);
    let hi = hi.unwrap_or(DEFAULT_LAMBDA_RADIUS);
    Ok(LambdaGrid::cube(dim, lo, hi, points.unwrap_or(DEFAULT_LAMBDA_POINTS))?)
}

#[derive(Debug, Serialize)]
struct SimulateConfig {
    mu: Vec<f64>,
    n: usize,
    paths: usize,
    seed: u64,
}

pub fn simulate(ctx: &Context, flags: SimulateArgs) -> CmdResult {
    let a = ctx.load(&flags)?;
    let mu = step_law(a.d, a.mu)?;
    let cfg = SimulateConfig {
        mu: mu.probs().to_vec(),
        n: a.n.ok_or_else(|| config_err("simulate needs n"))?,
        paths: a.paths.unwrap_or(1),
        seed: resolve_seed(a.seed)?,
    };
    let walks = simulate_walks(&mu, cfg.n, cfg.paths, cfg.seed)?;
    let manifest = Manifest::new("simulate", Some(cfg.seed), &cfg)?;
    match ctx.format(Format::Csv, &[Format::Csv, Format::Json])? {
        Format::Csv => {
            let rows = walks.iter().enumerate().flat_map(|(p, w)| {
                (0..=w.n()).map(move |i| {
                    let letter = if i == 0 { String::new() } else { w.steps()[i - 1].index().to_string() };
                    vec![p.to_string(), i.to_string(), letter, w.length_at(i).to_string()]
                })
            });
            let body = csv_rows(&["path", "i", "letter", "length"], rows)?;
            ctx.sink().csv(&manifest, &[], &body)?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Walk {
                letters: Vec<usize>,
                lengths: Vec<usize>,
            }
            let out: Vec<Walk> = walks
                .iter()
                .map(|w| Walk {
                    letters: w.steps().iter().map(|s| s.index()).collect(),
                    lengths: w.prefix_lengths().to_vec(),
                })
                .collect();
            ctx.sink().json(&manifest, &out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct DistConfig {
    mu: Vec<f64>,
    n: usize,
    law: Law,
    cap: u64,
}

pub fn dist(ctx: &Context, flags: DistArgs) -> CmdResult {
    let a = ctx.load(&flags)?;
    let mu = step_law(a.d, a.mu)?;
    let law = a.law.unwrap_or(if mu.is_uniform() { Law::Chain } else { Law::Enumerate });
    let cfg = DistConfig {
        mu: mu.probs().to_vec(),
        n: a.n.ok_or_else(|| config_err("dist needs n"))?,
        law,
        cap: a.cap.unwrap_or(DEFAULT_ENUMERATION_CAP),
    };
    if law != Law::Enumerate && !mu.is_uniform() {
        return Err(config_err("the chain, biased and folded laws need the uniform step law"));
    }
    let manifest = Manifest::new("dist", None, &cfg)?;
    let format = ctx.format(Format::Csv, &[Format::Csv, Format::Json])?;
    let d = mu.d();
    if law == Law::Biased {
        let signed = biased_walk_dist(d, cfg.n)?;
        match format {
            Format::Csv => {
                let n = cfg.n as i64;
                let rows = (-n..=n).map(|k| vec![k.to_string(), format_float(signed.prob(k))]);
                ctx.sink().csv(&manifest, &[], &csv_rows(&["position", "probability"], rows)?)?;
            }
            Format::Json => ctx.sink().json(&manifest, &signed)?,
        }
        return Ok(ExitCode::SUCCESS);
    }
    let dist = match law {
        Law::Chain => simple_walk_distance_dist(d, cfg.n)?,
        Law::Folded => abs_pushforward(&biased_walk_dist(d, cfg.n)?),
        Law::Enumerate => brute_force_distance_dist(&mu, cfg.n, cfg.cap)?,
        Law::Biased => unreachable!("handled above"),
    };
    match format {
        Format::Csv => {
            let mut body = Vec::new();
            dist.write_csv(&mut body)?;
            ctx.sink().csv(&manifest, &[], &body)?;
        }
        Format::Json => ctx.sink().json(&manifest, &dist)?,
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct CoupleConfig {
    d: usize,
    n: usize,
}

pub fn couple_check(ctx: &Context, flags: CoupleArgs) -> CmdResult {
    let a = ctx.load(&flags)?;
    let cfg = CoupleConfig { d: a.d.unwrap_or(3), n: a.n.unwrap_or(200) };
    ctx.format(Format::Json, &[Format::Json])?;
    let report = coupling_check(cfg.d, cfg.n)?;
    let ok = report.max_abs_diff <= COUPLING_TOL;
    let message = if ok {
        format!("max abs diff ≤ {COUPLING_TOL:e}")
    } else {
        format!("max abs diff {:e} > {COUPLING_TOL:e} at n = {}", report.max_abs_diff, report.worst_n)
    };
    let manifest = Manifest::new("couple-check", None, &cfg)?;
    #[derive(Serialize)]
    struct Out<'a> {
        ok: bool,
        message: String,
        tolerance: f64,
        report: &'a tree_ldp::distance_chain::CouplingReport,
    }
    ctx.sink().json(&manifest, &Out { ok, message, tolerance: COUPLING_TOL, report: &report })?;
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(EXIT_ACCEPTANCE) })
}

#[derive(Debug, Serialize)]
struct MgfConfig {
    source: MgfSource,
    times: Vec<f64>,
    lambda_lo: f64,
    lambda_hi: f64,
    lambda_points: usize,
    n_list: Vec<usize>,
}

impl MgfConfig {
    #[allow(clippy::too_many_arguments)]
    fn resolve(
        d: Option<usize>,
        mu: Option<Vec<f64>>,
        times: Option<Vec<f64>>,
        lo: Option<f64>,
        hi: Option<f64>,
        points: Option<usize>,
        n_list: Option<Vec<usize>>,
        cap: Option<u64>,
    ) -> Result<(Self, TimeGrid, LambdaGrid), CliError> {
        let law = step_law(d, mu)?;
        let source = if law.is_uniform() {
            MgfSource::SimpleWalk { d: law.d() }
        } else {
            MgfSource::Enumeration { mu: law, cap: cap.unwrap_or(DEFAULT_ENUMERATION_CAP) }
        };
        let grid = TimeGrid::new(times.unwrap_or_else(|| vec![1.0]))?;
        let lambdas = lambda_grid(grid.len(), lo, hi, points)?;
        let default_n = match source {
            MgfSource::SimpleWalk { .. } => vec![200, 400, 800, 1600],
            MgfSource::Enumeration { .. } => vec![6, 8, 10, 12],
        };
        let axis = lambdas.axes[0];
        let cfg = MgfConfig {
            source,
            times: grid.times().to_vec(),
            lambda_lo: axis.lo,
            lambda_hi: axis.hi,
            lambda_points: axis.points,
            n_list: n_list.unwrap_or(default_n),
        };
        Ok((cfg, grid, lambdas))
    }

    fn table(&self, grid: TimeGrid, lambdas: LambdaGrid) -> Result<MgfTable, CliError> {
        Ok(MgfTable::build(self.source.clone(), grid, lambdas, self.n_list.clone())?)
    }
}

pub fn mgf(ctx: &Context, flags: MgfArgs) -> CmdResult {
    let a = ctx.load(&flags)?;
    let (cfg, grid, lambdas) =
        MgfConfig::resolve(a.d, a.mu, a.times, a.lambda_lo, a.lambda_hi, a.lambda_points, a.n_list, a.cap)?;
    let format = ctx.format(Format::Csv, &[Format::Csv, Format::Json])?;
    let table = cfg.table(grid, lambdas)?;
    let manifest = Manifest::new("mgf", None, &cfg)?;
    match format {
        Format::Csv => {
            let mut body = Vec::new();
            table.write_csv(&mut body)?;
            ctx.sink().csv(&manifest, &[format!("extrapolation: {}", table.extrapolation_model)], &body)?;
        }
        Format::Json => ctx.sink().json(&manifest, &table)?,
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct ConjugateConfig {
    #[serde(flatten)]
    mgf: MgfConfig,
    x_axes: Vec<Vec<f64>>,
}

/// One value per axis, or a single value broadcast to all.
fn per_axis(v: Option<Vec<f64>>, dim: usize, default: f64, name: &str) -> Result<Vec<f64>, CliError> {
    match v {
        None => Ok(vec![default; dim]),
        Some(v) if v.len() == 1 => Ok(vec![v[0]; dim]),
        Some(v) if v.len() == dim => Ok(v),
        Some(v) => Err(config_err(format!("{name} has {} values for {dim} checkpoints", v.len()))),
    }
}

pub fn conjugate(ctx: &Context, flags: ConjugateArgs) -> CmdResult {
    let a = ctx.load(&flags)?;
    let (mgf, grid, lambdas) =
        MgfConfig::resolve(a.d, a.mu, a.times, a.lambda_lo, a.lambda_hi, a.lambda_points, a.n_list, a.cap)?;
    let dim = grid.len();
    let lo = per_axis(a.x_lo, dim, 0.0, "x_lo")?;
    let hi: Vec<f64> = match a.x_hi {
        Some(v) => per_axis(Some(v), dim, 1.0, "x_hi")?,
        None => grid.times().to_vec(),
    };
    let points = a.x_points.unwrap_or(11);
    let x_axes = lo.iter().zip(&hi).map(|(&l, &h)| linspace(l, h, points)).collect::<Result<Vec<_>, _>>()?;
    let format = ctx.format(Format::Csv, &[Format::Csv, Format::Json])?;
    let table = mgf.table(grid, lambdas)?;
    let rates = legendre::conjugate(&table, &x_axes)?;
    let cfg = ConjugateConfig { mgf, x_axes };
    let manifest = Manifest::new("conjugate", None, &cfg)?;
    match format {
        Format::Csv => {
            let c = rates.certificate;
            let mut notes = vec![format!(
                "midpoint convexity: ok={} worst_violation={} triples={}",
                c.ok, c.worst_violation, c.triples_checked
            )];
            if let Some(r) = &rates.resolution {
                notes.push(format!("resolution: {}", r.note));
            }
            let mut body = Vec::new();
            rates.write_csv(&mut body)?;
            ctx.sink().csv(&manifest, &notes, &body)?;
        }
        Format::Json => ctx.sink().json(&manifest, &rates)?,
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct LambdaStarConfig {
    d: usize,
    x_lo: f64,
    x_hi: f64,
    x_step: f64,
}

pub fn lambda_star(ctx: &Context, flags: LambdaStarArgs) -> CmdResult {
    let a = ctx.load(&flags)?;
    let cfg = LambdaStarConfig {
        d: a.d.unwrap_or(3),
        x_lo: a.x_lo.unwrap_or(0.0),
        x_hi: a.x_hi.unwrap_or(1.0),
        x_step: a.x_step.unwrap_or(0.01),
    };
    if cfg.d < 3 {
        return Err(config_err(format!("need d >= 3, got {}", cfg.d)));
    }
    if !(cfg.x_step > 0.0 && cfg.x_lo.is_finite() && cfg.x_hi.is_finite() && cfg.x_lo <= cfg.x_hi) {
        return Err(config_err("need a positive step and finite x_lo <= x_hi"));
    }
    ctx.format(Format::Csv, &[Format::Csv])?;
    let count = ((cfg.x_hi - cfg.x_lo) / cfg.x_step + 1e-9).floor() as usize;
    let mut xs: Vec<f64> = (0..=count).map(|i| round12(cfg.x_lo + i as f64 * cfg.x_step)).collect();
    // the zero of the rate is always listed
    let escape = (cfg.d - 2) as f64 / cfg.d as f64;
    if (cfg.x_lo..=cfg.x_hi).contains(&escape) && !xs.iter().any(|&x| (x - escape).abs() < 1e-12) {
        xs.push(escape);
        xs.sort_by(f64::total_cmp);
    }
    let rows = xs.iter().map(|&x| vec![format_float(x), lambda_star_closed_form(cfg.d, x).to_string()]);
    let body = csv_rows(&["x", "value"], rows)?;
    let manifest = Manifest::new("lambda-star", None, &cfg)?;
    ctx.sink().csv(&manifest, &[], &body)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct RateEndpointConfig {
    d: usize,
    lambda_lo: f64,
    lambda_hi: f64,
    lambda_points: usize,
    n_list: Vec<usize>,
    x: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct EndpointRow {
    x: f64,
    numerical: ExtReal,
    closed_form: ExtReal,
    abs_diff: ExtReal,
}

pub fn rate_endpoint(ctx: &Context, flags: RateEndpointArgs) -> CmdResult {
    let a = ctx.load(&flags)?;
    let d = a.d.unwrap_or(3);
    let lambdas = lambda_grid(1, a.lambda_lo, a.lambda_hi, a.lambda_points)?;
    let x = linspace(a.x_lo.unwrap_or(0.0), a.x_hi.unwrap_or(0.9), a.x_points.unwrap_or(10))?;
    let axis = lambdas.axes[0];
    let cfg = RateEndpointConfig {
        d,
        lambda_lo: axis.lo,
        lambda_hi: axis.hi,
        lambda_points: axis.points,
        n_list: a.n_list.unwrap_or_else(|| vec![200, 400, 800, 1600]),
        x,
    };
    let format = ctx.format(Format::Csv, &[Format::Csv, Format::Json])?;
    let table = MgfTable::build(MgfSource::SimpleWalk { d }, TimeGrid::endpoint(), lambdas, cfg.n_list.clone())?;
    let rates = legendre::conjugate(&table, std::slice::from_ref(&cfg.x))?;
    let rows: Vec<EndpointRow> = cfg
        .x
        .iter()
        .zip(rates.values())
        .map(|(&x, numerical)| {
            let closed_form = lambda_star_closed_form(d, x);
            let abs_diff = match (numerical, closed_form) {
                (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite((a - b).abs()),
                (a, b) if a == b => ExtReal::Finite(0.0),
                _ => ExtReal::PosInf,
            };
            EndpointRow { x, numerical, closed_form, abs_diff }
        })
        .collect();
    let manifest = Manifest::new("rate-endpoint", None, &cfg)?;
    match format {
        Format::Csv => {
            let body = csv_rows(
                &["x", "numerical", "closed_form", "abs_diff"],
                rows.iter().map(|r| {
                    vec![format_float(r.x), r.numerical.to_string(), r.closed_form.to_string(), r.abs_diff.to_string()]
                }),
            )?;
            ctx.sink().csv(&manifest, &[], &body)?;
        }
        Format::Json => ctx.sink().json(&manifest, &rows)?,
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct RatePathConfig {
    d: usize,
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
}

pub fn rate_path(ctx: &Context, flags: RatePathArgs) -> CmdResult {
    let a = ctx.load(&flags)?;
    let cfg = RatePathConfig {
        d: a.d.unwrap_or(3),
        breakpoints: a.breakpoints.unwrap_or_default(),
        slopes: a.slopes.ok_or_else(|| config_err("rate-path needs slopes"))?,
    };
    ctx.format(Format::Json, &[Format::Json])?;
    let path = PolygonalPath::from_slopes(&cfg.breakpoints, &cfg.slopes)?;
    let reports = [RateVariant::PaperLiteral, RateVariant::IncrementRate]
        .into_iter()
        .map(|v| mogulskii_rate_simple(cfg.d, &path, v))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = Manifest::new("rate-path", None, &cfg)?;
    #[derive(Serialize)]
    struct Out {
        knots: Vec<(f64, f64)>,
        variants: Vec<tree_ldp::sample_path::RateFunctionalReport>,
    }
    ctx.sink().json(&manifest, &Out { knots: path.knots(), variants: reports })?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct ConcatConfig {
    mu: Vec<f64>,
    times: Vec<f64>,
    x: Vec<f64>,
    rho: f64,
    rho_prime: f64,
    n: usize,
    k: Vec<usize>,
    trials: usize,
    samples: usize,
    seed: u64,
    cap: u64,
}

#[derive(Debug, Serialize)]
struct ContainmentSummary {
    k: usize,
    n_tilde: usize,
    tuples: usize,
    contained: usize,
    step_length_ok: usize,
    separator_safe: usize,
    all_pass: bool,
}

#[derive(Debug, Serialize)]
struct ConcatOut {
    threshold: f64,
    hypothesis_met: bool,
    /// Exhaustive class selection, or rejection sampling when the box is
    /// too large to enumerate.
    members: &'static str,
    selection: Option<SelectionSummary>,
    plan: ConcatPlan,
    reports: Vec<ContainmentSummary>,
}

#[derive(Debug, Serialize)]
struct SelectionSummary {
    total_measure: f64,
    selected_measure: f64,
    bound: f64,
    bound_ok: bool,
    classes: usize,
}

pub fn concat_verify(ctx: &Context, flags: ConcatArgs) -> CmdResult {
    let a = ctx.load(&flags)?;
    let mu = step_law(a.d, a.mu)?;
    let cfg = ConcatConfig {
        mu: mu.probs().to_vec(),
        times: a.times.unwrap_or_else(|| vec![0.5, 1.0]),
        x: a.x.unwrap_or_else(|| vec![1.0 / 6.0, 1.0 / 3.0]),
        rho: a.rho.unwrap_or(0.1),
        rho_prime: a.rho_prime.unwrap_or(0.7),
        n: a.n.ok_or_else(|| config_err("concat-verify needs n"))?,
        k: a.k.unwrap_or_else(|| vec![2, 3, 5]),
        trials: a.trials.unwrap_or(1000),
        samples: a.samples.unwrap_or(200_000),
        seed: resolve_seed(a.seed)?,
        cap: a.cap.unwrap_or(DEFAULT_ENUMERATION_CAP),
    };
    ctx.format(Format::Json, &[Format::Json])?;
    let spec = BoxSpec::new(TimeGrid::new(cfg.times.clone())?, cfg.x.clone(), cfg.rho)?;
    let (plan, selection, members) = match box_set(&mu, &spec, cfg.n, cfg.cap) {
        Ok(set) => {
            let sel = select_class(&set)?;
            let summary = SelectionSummary {
                total_measure: sel.total_measure,
                selected_measure: sel.selected_measure,
                bound: sel.bound,
                bound_ok: sel.bound_ok,
                classes: sel.classes.len(),
            };
            (sel.plan, Some(summary), "exhaustive")
        }
        Err(tree_ldp::Error::CapExceeded { .. }) => {
            (harvest_class(&mu, &spec, cfg.n, cfg.samples, cfg.seed)?, None, "sampled")
        }
        Err(e) => return Err(e.into()),
    };
    let threshold = hypothesis_threshold(&spec, cfg.rho_prime);
    let mut reports = Vec::with_capacity(cfg.k.len());
    for &k in &cfg.k {
        let r = verify_containment(&plan, k, &spec, cfg.rho_prime, cfg.trials, cfg.seed)?;
        reports.push(ContainmentSummary {
            k,
            n_tilde: r.n_tilde,
            tuples: r.tuples.len(),
            contained: r.contained,
            step_length_ok: r.step_length_ok,
            separator_safe: r.separator_safe,
            all_pass: r.all_pass(),
        });
    }
    let out = ConcatOut { threshold, hypothesis_met: cfg.n as f64 >= threshold, members, selection, plan, reports };
    let manifest = Manifest::new("concat-verify", Some(cfg.seed), &cfg)?;
    ctx.sink().json(&manifest, &out)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct McConfig {
    mu: Vec<f64>,
    times: Vec<f64>,
    x: Vec<f64>,
    rho: f64,
    n_list: Vec<usize>,
    samples: usize,
    seed: u64,
    tilt: Option<f64>,
}

pub fn mc_rate(ctx: &Context, flags: McArgs) -> CmdResult {
    let a = ctx.load(&flags)?;
    let mu = step_law(a.d, a.mu)?;
    let x = a.x.ok_or_else(|| config_err("mc-rate needs x"))?;
    let tilt = match (a.tilt, a.auto_tilt.unwrap_or(false)) {
        (Some(_), true) => return Err(config_err("give either tilt or auto_tilt")),
        (Some(t), false) => Some(t),
        (None, true) => {
            let [x0] = x.as_slice() else {
                return Err(config_err("auto_tilt needs a single box centre"));
            };
            Some(increment_tilt(mu.d(), *x0)?)
        }
        (None, false) => None,
    };
    let cfg = McConfig {
        mu: mu.probs().to_vec(),
        times: a.times.unwrap_or_else(|| vec![1.0]),
        x,
        rho: a.rho.ok_or_else(|| config_err("mc-rate needs rho"))?,
        n_list: a.n_list.ok_or_else(|| config_err("mc-rate needs n_list"))?,
        samples: a.samples.unwrap_or(100_000),
        seed: resolve_seed(a.seed)?,
        tilt,
    };
    let format = ctx.format(Format::Csv, &[Format::Csv, Format::Json])?;
    let spec = BoxSpec::new(TimeGrid::new(cfg.times.clone())?, cfg.x.clone(), cfg.rho)?;
    let est = convergence_sweep(&spec, &mu, &cfg.n_list, cfg.samples, cfg.seed, cfg.tilt)?;
    let manifest = Manifest::new("mc-rate", Some(cfg.seed), &cfg)?;
    match format {
        Format::Csv => {
            let notes = vec![format!("stabilization: {}", est.stabilization.map_or("none".into(), format_float))];
            ctx.sink().csv(&manifest, &notes, &estimate_csv(&est)?)?;
        }
        Format::Json => ctx.sink().json(&manifest, &est)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn estimate_csv(est: &RateEstimate) -> Result<Vec<u8>, CliError> {
    let opt = |v: Option<f64>| v.map_or_else(String::new, format_float);
    let rows = est.entries.iter().map(|e| {
        let flags: Vec<String> = e
            .flags
            .iter()
            .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default())
            .collect();
        vec![
            e.n.to_string(),
            e.hits.to_string(),
            format_float(e.probability),
            format_float(e.probability_stderr),
            opt(e.rate),
            opt(e.rate_stderr),
            format_float(e.effective_sample_size),
            flags.join(";"),
        ]
    });
    csv_rows(
        &["n", "hits", "probability", "probability_stderr", "rate", "rate_stderr", "effective_sample_size", "flags"],
        rows,
    )
}

#[derive(Debug, Serialize)]
struct AcceptanceConfig {
    criteria: Vec<u8>,
}

pub fn acceptance(ctx: &Context, flags: AcceptanceArgs) -> CmdResult {
    let a = ctx.load(&flags)?;
    let ids = a.only.unwrap_or_else(|| tree_ldp::acceptance::CRITERIA.iter().map(|(id, _)| *id).collect());
    ctx.format(Format::Json, &[Format::Json])?;
    let results = tree_ldp::acceptance::run_selected(&ids)?;
    for r in &results {
        eprintln!("{r}");
    }
    let passed = results.iter().filter(|r| r.passed).count();
    let failed = results.len() - passed;
    let manifest = Manifest::new("acceptance", None, &AcceptanceConfig { criteria: ids })?;
    #[derive(Serialize)]
    struct Out<'a> {
        passed: usize,
        failed: usize,
        results: &'a [tree_ldp::acceptance::CriterionResult],
    }
    ctx.sink().json(&manifest, &Out { passed, failed, results: &results })?;
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(EXIT_ACCEPTANCE) })
}
