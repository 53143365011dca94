use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context as _};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use cycleforge_core::averaging::{
    average as average_system, bezout_bound, oracle_deviation, AveragedSystem, Coefficient,
};
use cycleforge_core::dynamics::{
    convergence_study, integrate_traced, refine_cycle, ConvergenceStudy, CycleVerdict, RefineConfig,
};
use cycleforge_core::generators::{
    default_targets, generate as generate_spec, Family, TargetRoots,
};
use cycleforge_core::moments::moment_dump;
use cycleforge_core::perturbation::{parse_spec, PerturbationSpec};
use cycleforge_core::polysolve::{
    default_box, find_zeros, report_from, CertifiedZero, SearchBox, SolverConfig, ZeroSearch,
};
use cycleforge_core::Error as CoreError;

use crate::manifest::Recorder;
use crate::render::{num, opt, pairs, Table};
use crate::{
    AverageArgs, GenerateArgs, MomentsArgs, PipelineArgs, ShootArgs, SolveArgs, VerifyArgs,
    ZerosArgs,
};

pub const EXIT_PARSE: u8 = 1;
pub const EXIT_INCOMPLETE: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;
pub const EXIT_SELFCHECK: u8 = 4;

pub const SEED_ENV: &str = "CYCLEFORGE_SEED";
const DEFAULT_SEED: u64 = 0x5eed;

pub struct Context {
    pub pretty: bool,
    pub jobs: Option<u16>,
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    fn parse(error: impl Into<anyhow::Error>) -> Self {
        Self::new(EXIT_PARSE, error)
    }
}

fn exit_code(e: &CoreError) -> u8 {
    use CoreError::*;
    match e {
        Timeout { .. }
        | Divergence { .. }
        | StepUnderflow { .. }
        | TangentialCrossing { .. }
        | OnSwitchingManifold => EXIT_VERIFY,
        FloatOverflow(_) | NotFactorable | NoFactoredComponent | SingularSolve(_) => {
            EXIT_INCOMPLETE
        }
        _ => EXIT_PARSE,
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Self::new(exit_code(&e), e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let code = e
            .downcast_ref::<CoreError>()
            .map(exit_code)
            .unwrap_or(EXIT_PARSE);
        Self { code, error: e }
    }
}

pub type Outcome = Result<u8, Failure>;

/// Seed from `CYCLEFORGE_SEED`, if set.
pub fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse::<u64>().map(Some).map_err(|_| {
            Failure::parse(anyhow!("{SEED_ENV} must be an unsigned integer, got {s:?}"))
        }),
        Err(_) => Ok(None),
    }
}

pub fn config_echo(ctx: &Context, args: &impl Serialize) -> Result<Value, Failure> {
    let mut v = serde_json::to_value(args).map_err(Failure::parse)?;
    if let Value::Object(m) = &mut v {
        m.insert("jobs".into(), json!(ctx.jobs));
        m.insert("seed".into(), json!(env_seed()?));
    }
    Ok(v)
}

fn is_stdio(p: &Path) -> bool {
    p.as_os_str() == "-"
}

fn read_input(path: &Path) -> anyhow::Result<Vec<u8>> {
    if is_stdio(path) {
        let mut buf = Vec::new();
        std::io::stdin()
            .read_to_end(&mut buf)
            .context("reading stdin")?;
        Ok(buf)
    } else {
        fs::read(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn load_spec(path: &Path, rec: &mut Recorder) -> Result<PerturbationSpec, Failure> {
    let bytes = read_input(path).map_err(Failure::parse)?;
    rec.input(&bytes);
    let text =
        String::from_utf8(bytes).map_err(|e| Failure::parse(anyhow!("spec is not UTF-8: {e}")))?;
    parse_spec(&text).map_err(Failure::parse)
}

/// Writes the JSON document (to `output` or stdout) and, with `--pretty`,
/// the table on stdout instead of the JSON.
fn emit(
    ctx: &Context,
    rec: &Recorder,
    body: Value,
    output: Option<&Path>,
    table: impl FnOnce() -> String,
) -> Result<(), Failure> {
    let doc = rec.attach(body);
    let text = serde_json::to_string_pretty(&doc).map_err(Failure::parse)? + "\n";
    let stdout = std::io::stdout();
    match output {
        Some(p) if !is_stdio(p) => fs::write(p, &text)
            .with_context(|| format!("writing {}", p.display()))
            .map_err(Failure::parse)?,
        _ if !ctx.pretty => stdout
            .lock()
            .write_all(text.as_bytes())
            .map_err(Failure::parse)?,
        _ => {}
    }
    if ctx.pretty {
        stdout
            .lock()
            .write_all(table().as_bytes())
            .map_err(Failure::parse)?;
    }
    Ok(())
}

fn parse_list(s: &str) -> anyhow::Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number {t:?}"))
        })
        .collect()
}

/// `r_min,r_max;lo1,hi1;...`
pub fn parse_box(s: &str, d: usize) -> anyhow::Result<SearchBox> {
    let groups: Vec<Vec<f64>> = s
        .split(';')
        .map(parse_list)
        .collect::<anyhow::Result<_>>()?;
    if groups.len() != d + 1 || groups.iter().any(|g| g.len() != 2) {
        bail!(
            "box needs {} pairs `lo,hi` separated by `;`, got {s:?}",
            d + 1
        );
    }
    let z = groups[1..].iter().map(|g| (g[0], g[1])).collect();
    Ok(SearchBox::new(groups[0][0], groups[0][1], z)?)
}

fn solver_config(args: &SolveArgs) -> Result<SolverConfig, Failure> {
    if args.grid < 2 {
        return Err(Failure::parse(anyhow!("--grid must be at least 2")));
    }
    Ok(SolverConfig {
        residual_tol: args.residual_tol,
        jac_tol: args.jac_tol,
        grid_per_axis: args.grid,
        max_iterations: args.max_iterations,
        jitter_seed: env_seed()?,
        ..SolverConfig::default()
    })
}

struct Solved {
    bx: SearchBox,
    search: ZeroSearch,
}

fn solve(sys: &AveragedSystem, args: &SolveArgs) -> Result<Solved, Failure> {
    let cfg = solver_config(args)?;
    let bx = match &args.search_box {
        Some(s) => parse_box(s, sys.d).map_err(Failure::parse)?,
        None => default_box(sys),
    };
    let search = find_zeros(sys, &bx, &cfg)?;
    Ok(Solved { bx, search })
}

fn incomplete(search: &ZeroSearch) -> bool {
    !search.complete && !search.degenerate
}

fn zero_table(zeros: &[CertifiedZero]) -> String {
    let mut t = Table::new(["#", "r", "z", "residual", "det J", "simple", "radius"]);
    for (i, z) in zeros.iter().enumerate() {
        t.row(vec![
            i.to_string(),
            num(z.r),
            z.z.iter().map(|v| num(*v)).collect::<Vec<_>>().join(", "),
            num(z.residual),
            num(z.jacobian_det),
            z.simple.to_string(),
            num(z.newton_radius),
        ]);
    }
    t.render()
}

pub fn moments(ctx: &Context, args: &MomentsArgs) -> Outcome {
    let rec = Recorder::start("moments", config_echo(ctx, args)?);
    let entries = moment_dump(args.max_degree);
    let body = json!({ "max_degree": args.max_degree, "entries": entries });
    emit(ctx, &rec, body, args.output.as_deref(), || {
        let mut t = Table::new(["kind", "p", "q", "exact", "value"]);
        for e in &entries {
            t.row(vec![
                format!("{:?}", e.kind),
                e.p.to_string(),
                e.q.to_string(),
                e.value.to_string(),
                num(e.float),
            ]);
        }
        t.render()
    })?;
    Ok(0)
}

fn random_points(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut p = vec![rng.gen_range(0.1..3.0)];
            p.extend((0..d).map(|_| rng.gen_range(-2.0..2.0)));
            p
        })
        .collect()
}

fn symbolic(c: &Coefficient) -> String {
    c.symbolic
        .iter()
        .map(|t| format!("{}*[{}]", t.weight, t.moment))
        .collect::<Vec<_>>()
        .join(" + ")
}

pub fn average(ctx: &Context, args: &AverageArgs) -> Outcome {
    let mut rec = Recorder::start("average", config_echo(ctx, args)?);
    let spec = load_spec(&args.spec, &mut rec)?;
    let sys = average_system(&spec)?;
    let bound = bezout_bound(&sys);
    let oracle = if args.oracle_check {
        let pts = random_points(
            spec.d,
            args.oracle_points,
            env_seed()?.unwrap_or(DEFAULT_SEED),
        );
        let dev = oracle_deviation(&spec, &sys, &pts)?;
        Some(json!({ "points": pts.len(), "max_deviation": dev }))
    } else {
        None
    };
    let body = json!({
        "kind": spec.kind,
        "n": spec.n,
        "d": spec.d,
        "bezout_bound": bound,
        "system": sys,
        "oracle": oracle,
    });
    emit(ctx, &rec, body, args.output.as_deref(), || {
        let mut out = pairs(&[
            ("kind", spec.kind.to_string()),
            ("n, d", format!("{}, {}", spec.n, spec.d)),
            ("bezout bound", bound.to_string()),
            ("r factored", sys.r_factored_first.is_some().to_string()),
            (
                "oracle deviation",
                opt(oracle.as_ref().and_then(|o| o["max_deviation"].as_f64())),
            ),
        ]);
        let mut t = Table::new(["component", "exponents", "value", "symbolic"]);
        for (i, comp) in sys.components.iter().enumerate() {
            for (e, c) in &comp.terms {
                t.row(vec![
                    format!("f{}", i + 1),
                    format!("{e:?}"),
                    num(c.value),
                    symbolic(c),
                ]);
            }
        }
        out.push('\n');
        out + &t.render()
    })?;
    Ok(0)
}

pub fn zeros(ctx: &Context, args: &ZerosArgs) -> Outcome {
    let mut rec = Recorder::start("zeros", config_echo(ctx, args)?);
    let spec = load_spec(&args.spec, &mut rec)?;
    let sys = average_system(&spec)?;
    let Solved { bx, search } = solve(&sys, &args.solve)?;
    let report = report_from(&sys, &search);
    let mut body = serde_json::to_value(&search).map_err(Failure::parse)?;
    body["box"] = json!(bx);
    body["count_report"] = json!(report);
    emit(ctx, &rec, body, args.output.as_deref(), || {
        let mut out = pairs(&[
            ("found", report.found.to_string()),
            ("bound", report.bound.to_string()),
            ("all simple", report.all_simple.to_string()),
            ("complete", report.complete.to_string()),
        ]);
        for w in &search.warnings {
            out += &format!("warning: {w}\n");
        }
        out.push('\n');
        out + &zero_table(&search.zeros)
    })?;
    Ok(if incomplete(&search) {
        EXIT_INCOMPLETE
    } else {
        0
    })
}

pub fn parse_z_roots(s: &str) -> anyhow::Result<Vec<Vec<f64>>> {
    s.split(';').map(parse_list).collect()
}

pub fn generate(ctx: &Context, args: &GenerateArgs) -> Outcome {
    let rec = Recorder::start("generate", config_echo(ctx, args)?);
    let family = Family::parse(&args.kind).map_err(Failure::parse)?;
    let targets = if args.r_roots.is_none() && args.z_roots.is_none() {
        None
    } else {
        let defaults = default_targets(family, args.n, args.d).map_err(Failure::parse)?;
        Some(TargetRoots {
            r_roots: match &args.r_roots {
                Some(s) => parse_list(s).map_err(Failure::parse)?,
                None => defaults.r_roots,
            },
            z_roots: match &args.z_roots {
                Some(s) => parse_z_roots(s).map_err(Failure::parse)?,
                None => defaults.z_roots,
            },
        })
    };
    let spec = generate_spec(family, args.n, args.d, targets.as_ref()).map_err(Failure::parse)?;
    let body: Value = serde_json::from_str(&spec.to_json()).map_err(Failure::parse)?;
    emit(ctx, &rec, body, args.output.as_deref(), || {
        let sys = average_system(&spec).ok();
        pairs(&[
            ("family", args.kind.clone()),
            ("kind", spec.kind.to_string()),
            ("n, d", format!("{}, {}", spec.n, spec.d)),
            (
                "bezout bound",
                opt(sys.as_ref().map(|s| bezout_bound(s) as f64)),
            ),
        ])
    })?;
    Ok(0)
}

#[derive(Debug, Serialize)]
pub struct VerdictEntry {
    pub index: usize,
    pub predicted: Vec<f64>,
    pub verified: bool,
    pub verdict: Option<CycleVerdict>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ShootReport {
    pub epsilon: f64,
    pub predicted: usize,
    pub simple: usize,
    pub verified: usize,
    pub max_distance: Option<f64>,
    pub verdicts: Vec<VerdictEntry>,
    pub studies: Option<Vec<ConvergenceStudy>>,
    /// Largest tested ε at which every simple zero verified.
    pub largest_verified_eps: Option<f64>,
}

impl ShootReport {
    fn failed(&self) -> bool {
        self.verified < self.simple
    }
}

fn check_shoot_args(args: &ShootArgs, cfg: &RefineConfig) -> Result<Vec<f64>, Failure> {
    if args.eps == 0.0 || !args.eps.is_finite() || args.eps.abs() > cfg.eps_max {
        return Err(Failure::parse(anyhow!(
            "--eps must be nonzero with |eps| <= {}, got {}",
            cfg.eps_max,
            args.eps
        )));
    }
    if !args.study {
        return Ok(Vec::new());
    }
    let list = parse_list(&args.study_eps).map_err(Failure::parse)?;
    if list.len() < 3 || list.windows(2).any(|w| w[1].abs() >= w[0].abs()) {
        return Err(Failure::parse(anyhow!(
            "--study-eps needs at least 3 values of strictly decreasing magnitude"
        )));
    }
    if list.iter().any(|e| *e == 0.0 || e.abs() > cfg.eps_max) {
        return Err(Failure::parse(anyhow!(
            "--study-eps values must be nonzero and at most {}",
            cfg.eps_max
        )));
    }
    Ok(list)
}

fn refine_config(args: &ShootArgs) -> RefineConfig {
    RefineConfig {
        shoot_tol: args.shoot_tol,
        ..RefineConfig::default()
    }
}

pub fn shoot(
    spec: &PerturbationSpec,
    zeros: &[CertifiedZero],
    args: &ShootArgs,
) -> Result<ShootReport, Failure> {
    let cfg = refine_config(args);
    let study_eps = check_shoot_args(args, &cfg)?;
    let simple: Vec<(usize, &CertifiedZero)> =
        zeros.iter().enumerate().filter(|(_, z)| z.simple).collect();

    let mut verdicts: Vec<VerdictEntry> = simple
        .par_iter()
        .map(|&(index, z)| match refine_cycle(spec, args.eps, z, &cfg) {
            Ok(v) => VerdictEntry {
                index,
                predicted: z.point(),
                verified: v.converged && v.distance <= args.max_distance,
                verdict: Some(v),
                error: None,
            },
            Err(e) => VerdictEntry {
                index,
                predicted: z.point(),
                verified: false,
                verdict: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let studies = if args.study {
        let s: Vec<ConvergenceStudy> = simple
            .par_iter()
            .map(|&(_, z)| convergence_study(spec, z, &study_eps, &cfg))
            .collect::<Result<_, _>>()?;
        for (entry, st) in verdicts.iter_mut().zip(&s) {
            if let Some(v) = entry.verdict.as_mut() {
                v.order_estimate = st.order_estimate;
            }
        }
        Some(s)
    } else {
        None
    };

    let main_ok = verdicts.iter().all(|v| v.verified);
    let mut candidates: Vec<(f64, bool)> = vec![(args.eps.abs(), main_ok)];
    if let Some(s) = &studies {
        for (k, &e) in study_eps.iter().enumerate() {
            if e.abs() == args.eps.abs() {
                continue;
            }
            let ok = s.iter().all(|st| {
                let p = &st.points[k];
                p.converged && p.distance.is_some_and(|d| d <= args.max_distance)
            });
            candidates.push((e.abs(), ok));
        }
    }
    let largest_verified_eps = if simple.is_empty() {
        None
    } else {
        candidates
            .iter()
            .filter(|c| c.1)
            .map(|c| c.0)
            .reduce(f64::max)
    };

    let verified = verdicts.iter().filter(|v| v.verified).count();
    let max_distance = verdicts
        .iter()
        .filter_map(|v| {
            v.verdict
                .as_ref()
                .filter(|c| c.converged)
                .map(|c| c.distance)
        })
        .reduce(f64::max);
    Ok(ShootReport {
        epsilon: args.eps,
        predicted: zeros.len(),
        simple: simple.len(),
        verified,
        max_distance,
        verdicts,
        studies,
        largest_verified_eps,
    })
}

fn verdict_table(report: &ShootReport) -> String {
    let mut t = Table::new([
        "#",
        "predicted",
        "fixed point",
        "distance",
        "residual",
        "iters",
        "period",
        "order",
        "verified",
    ]);
    let vec = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", ");
    for e in &report.verdicts {
        let v = e.verdict.as_ref();
        t.row(vec![
            e.index.to_string(),
            vec(&e.predicted),
            v.map(|v| vec(&v.fixed_point))
                .unwrap_or_else(|| e.error.clone().unwrap_or_default()),
            opt(v.map(|v| v.distance)),
            opt(v.map(|v| v.residual)),
            v.map(|v| v.iterations.to_string())
                .unwrap_or_else(|| "-".into()),
            opt(v.map(|v| v.period)),
            opt(v.and_then(|v| v.order_estimate)),
            e.verified.to_string(),
        ]);
    }
    t.render()
}

fn shoot_summary(report: &ShootReport) -> Vec<(&'static str, String)> {
    vec![
        ("epsilon", num(report.epsilon)),
        ("simple zeros", report.simple.to_string()),
        ("verified", report.verified.to_string()),
        ("max distance", opt(report.max_distance)),
        ("largest verified eps", opt(report.largest_verified_eps)),
    ]
}

fn write_trace(
    spec: &PerturbationSpec,
    report: &ShootReport,
    which: usize,
    path: &Path,
    cfg: &RefineConfig,
) -> Result<(), Failure> {
    let entry = report
        .verdicts
        .iter()
        .find(|e| e.index == which)
        .ok_or_else(|| Failure::parse(anyhow!("--trace-zero {which} is not a simple zero")))?;
    let v = entry
        .verdict
        .as_ref()
        .filter(|v| v.converged)
        .ok_or_else(|| {
            Failure::new(
                EXIT_VERIFY,
                anyhow!("zero {which} did not converge; nothing to trace"),
            )
        })?;
    let s = &v.fixed_point;
    let (_, tr) = integrate_traced(spec, report.epsilon, s[0], &s[1..], &cfg.integration, 8)?;
    let mut w = csv::Writer::from_path(path).map_err(Failure::parse)?;
    let mut header = vec!["t".to_string(), "x".into(), "y".into()];
    header.extend((1..=spec.d).map(|l| format!("z{l}")));
    w.write_record(&header).map_err(Failure::parse)?;
    for (st, _) in &tr.samples {
        let mut row = vec![st.t.to_string(), st.x.to_string(), st.y.to_string()];
        row.extend(st.z.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(Failure::parse)?;
    }
    w.flush().map_err(Failure::parse)?;
    Ok(())
}

fn load_zeros(path: &Path) -> Result<Vec<CertifiedZero>, Failure> {
    let bytes = read_input(path).map_err(Failure::parse)?;
    let doc: Value = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::parse)?;
    let zeros = doc
        .get("zeros")
        .ok_or_else(|| Failure::parse(anyhow!("{} has no `zeros` list", path.display())))?;
    serde_json::from_value(zeros.clone()).map_err(Failure::parse)
}

pub fn verify(ctx: &Context, args: &VerifyArgs) -> Outcome {
    let mut rec = Recorder::start("verify", config_echo(ctx, args)?);
    if args.zeros.as_deref().is_some_and(is_stdio) && is_stdio(&args.spec) {
        return Err(Failure::parse(anyhow!(
            "only one input can come from stdin"
        )));
    }
    let spec = load_spec(&args.spec, &mut rec)?;
    let (zeros, search) = match &args.zeros {
        Some(p) => {
            let z = load_zeros(p)?;
            if z.iter().any(|z| z.z.len() != spec.d) {
                return Err(Failure::parse(anyhow!("zeros do not match d = {}", spec.d)));
            }
            (z, None)
        }
        None => {
            let sys = average_system(&spec)?;
            let s = solve(&sys, &args.solve)?.search;
            (s.zeros.clone(), Some(s))
        }
    };
    let report = shoot(&spec, &zeros, &args.shoot)?;
    if let Some(path) = &args.trace {
        write_trace(
            &spec,
            &report,
            args.trace_zero,
            path,
            &refine_config(&args.shoot),
        )?;
    }
    let mut body = serde_json::to_value(&report).map_err(Failure::parse)?;
    body["search_complete"] = json!(search.as_ref().map(|s| s.complete));
    emit(ctx, &rec, body, args.output.as_deref(), || {
        pairs(&shoot_summary(&report)) + "\n" + &verdict_table(&report)
    })?;
    Ok(if search.as_ref().is_some_and(incomplete) {
        EXIT_INCOMPLETE
    } else if report.failed() {
        EXIT_VERIFY
    } else {
        0
    })
}

pub fn pipeline(ctx: &Context, args: &PipelineArgs) -> Outcome {
    let mut rec = Recorder::start("pipeline", config_echo(ctx, args)?);
    let spec = load_spec(&args.spec, &mut rec)?;
    let sys = average_system(&spec)?;
    let bound = bezout_bound(&sys);
    let Solved { bx, search } = solve(&sys, &args.solve)?;
    let report = shoot(&spec, &search.zeros, &args.shoot)?;
    let body = json!({
        "kind": spec.kind,
        "n": spec.n,
        "d": spec.d,
        "epsilon": args.shoot.eps,
        "bound": bound,
        "found": search.zeros.len(),
        "simple": report.simple,
        "verified": report.verified,
        "max_distance": report.max_distance,
        "largest_verified_eps": report.largest_verified_eps,
        "complete": search.complete,
        "degenerate": search.degenerate,
        "method": search.method,
        "used_factored": search.used_factored,
        "box": bx,
        "warnings": search.warnings,
        "zeros": search.zeros,
        "verdicts": report.verdicts,
        "studies": report.studies,
    });
    emit(ctx, &rec, body, args.output.as_deref(), || {
        let mut items = vec![
            ("kind", spec.kind.to_string()),
            ("n, d", format!("{}, {}", spec.n, spec.d)),
            ("bound", bound.to_string()),
            ("found", search.zeros.len().to_string()),
            ("complete", search.complete.to_string()),
        ];
        items.extend(shoot_summary(&report));
        let mut out = pairs(&items);
        for w in &search.warnings {
            out += &format!("warning: {w}\n");
        }
        out + "\n" + &zero_table(&search.zeros) + "\n" + &verdict_table(&report)
    })?;
    Ok(if incomplete(&search) {
        EXIT_INCOMPLETE
    } else if report.failed() {
        EXIT_VERIFY
    } else {
        0
    })
}
