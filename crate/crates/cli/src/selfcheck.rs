//! `selfcheck`: moment grid, quadrature oracle, ε = 0 identity, generator count.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use cycleforge_core::averaging::{average, oracle_deviation};
use cycleforge_core::dynamics::{integrate_to_section, IntegrationConfig};
use cycleforge_core::generators::{generate, Family};
use cycleforge_core::moments::{half_i, half_j, mu, MomentKind};
use cycleforge_core::perturbation::{CoeffTable, Kind, MonomialKey, MultiIndex, PerturbationSpec};
use cycleforge_core::polysolve::{default_box, find_zeros, SolverConfig};
use cycleforge_core::quadrature::integrate;

use crate::commands::{config_echo, env_seed, Context, Failure, Outcome, EXIT_SELFCHECK};
use crate::manifest::Recorder;
use crate::render::Table;

const DEFAULT_SEED: u64 = 20_251_015;

#[derive(Debug, Serialize)]
struct CheckResult {
    name: &'static str,
    passed: bool,
    detail: String,
    seconds: f64,
}

fn moment_grid() -> Result<String> {
    let mut count = 0;
    for p in 0..=24u32 {
        for q in 0..=(24 - p) {
            let (m, i, j) = (mu(p, q), half_i(p, q), half_j(p, q));
            ensure!(m == &i + &j, "mu != I + J at ({p},{q})");
            ensure!(
                m.is_zero() == (p % 2 == 1 || q % 2 == 1),
                "mu parity at ({p},{q})"
            );
            ensure!(i.is_zero() == (p % 2 == 1), "I parity at ({p},{q})");
            count += 1;
        }
    }
    let mut worst: f64 = 0.0;
    for p in 0..=10u32 {
        for q in 0..=(10 - p) {
            for (kind, exact) in [
                (MomentKind::FullCircle, mu(p, q)),
                (MomentKind::UpperHalf, half_i(p, q)),
                (MomentKind::LowerHalf, half_j(p, q)),
            ] {
                let (a, b) = kind.range();
                let quad = integrate(
                    |t| t.cos().powi(p as i32) * t.sin().powi(q as i32),
                    a,
                    b,
                    1e-13,
                );
                worst = worst.max((quad - exact.to_float()?).abs());
            }
        }
    }
    ensure!(
        worst <= 1e-11,
        "quadrature deviation {worst:e} exceeds 1e-11"
    );
    Ok(format!(
        "{count} exponent pairs; quadrature deviation {worst:.2e}"
    ))
}

fn random_spec(rng: &mut ChaCha8Rng, kind: Kind, n: u32, d: usize) -> Result<PerturbationSpec> {
    let mut s = PerturbationSpec::zero(n, d, kind)?;
    let mut fill = |t: &mut CoeffTable| -> Result<()> {
        for _ in 0..rng.gen_range(0..=4) {
            let mut budget = rng.gen_range(0..=n);
            let i = rng.gen_range(0..=budget);
            budget -= i;
            let j = rng.gen_range(0..=budget);
            budget -= j;
            let k: Vec<u32> = (0..d)
                .map(|_| {
                    let v = rng.gen_range(0..=budget);
                    budget -= v;
                    v
                })
                .collect();
            t.set(
                MonomialKey::new(i, j, MultiIndex(k)),
                rng.gen_range(-2.0..2.0),
            )?;
        }
        Ok(())
    };
    fill(&mut s.a)?;
    fill(&mut s.b)?;
    s.c.iter_mut().try_for_each(&mut fill)?;
    if let Some(t) = s.alpha.as_mut() {
        fill(t)?;
    }
    if let Some(t) = s.beta.as_mut() {
        fill(t)?;
    }
    if let Some(g) = s.gamma.as_mut() {
        g.iter_mut().try_for_each(&mut fill)?;
    }
    Ok(s)
}

fn oracle_spot_checks(seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let kind = if k % 2 == 0 {
            Kind::Continuous
        } else {
            Kind::Discontinuous
        };
        let (n, d) = (rng.gen_range(1..=3), rng.gen_range(1..=2));
        let spec = random_spec(&mut rng, kind, n, d)?;
        let sys = average(&spec)?;
        let pts: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let mut p = vec![rng.gen_range(0.1..3.0)];
                p.extend((0..d).map(|_| rng.gen_range(-2.0..2.0)));
                p
            })
            .collect();
        worst = worst.max(oracle_deviation(&spec, &sys, &pts)?);
    }
    ensure!(worst <= 1e-9, "oracle deviation {worst:e} exceeds 1e-9");
    Ok(format!("10 specs x 5 points; max deviation {worst:.2e}"))
}

fn unperturbed_identity(seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe0);
    let cfg = IntegrationConfig::default();
    let (mut dr, mut dt): (f64, f64) = (0.0, 0.0);
    for kind in [Kind::Continuous, Kind::Discontinuous] {
        for _ in 0..10 {
            let d = rng.gen_range(1..=2);
            let spec = random_spec(&mut rng, kind, 2, d)?;
            let r = rng.gen_range(0.1..3.0);
            let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let ret = integrate_to_section(&spec, 0.0, r, &z, &cfg)?;
            dr = ret
                .z
                .iter()
                .zip(&z)
                .fold((ret.r - r).abs(), |m, (a, b)| m.max((a - b).abs()))
                .max(dr);
            dt = dt.max((ret.period - 2.0 * PI).abs());
        }
    }
    ensure!(
        dr <= 1e-10 && dt <= 1e-10,
        "return error {dr:e}, period error {dt:e}"
    );
    Ok(format!(
        "20 starts; return error {dr:.2e}, period error {dt:.2e}"
    ))
}

fn generator_count() -> Result<String> {
    let spec = generate(Family::Disc, 2, 1, None)?;
    let sys = average(&spec)?;
    let search = find_zeros(&sys, &default_box(&sys), &SolverConfig::default())?;
    let simple = search.zeros.iter().filter(|z| z.simple).count();
    if simple != 4 {
        bail!("expected 4 simple zeros, found {simple}");
    }
    Ok("disc n=2 d=1: 4 simple zeros".into())
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<String>) -> CheckResult {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err(anyhow!("panicked")));
    let (passed, detail) = match out {
        Ok(d) => (true, d),
        Err(e) => (false, format!("{e:#}")),
    };
    CheckResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run(ctx: &Context) -> Outcome {
    let as_selfcheck = |f: Failure| Failure::new(EXIT_SELFCHECK, f.error);
    let seed = env_seed().map_err(as_selfcheck)?.unwrap_or(DEFAULT_SEED);
    let rec = Recorder::start(
        "selfcheck",
        config_echo(ctx, &json!({ "oracle_seed": seed })).map_err(as_selfcheck)?,
    );
    let checks = vec![
        timed("moment-grid", moment_grid),
        timed("averaging-oracle", || oracle_spot_checks(seed)),
        timed("unperturbed-identity", || unperturbed_identity(seed)),
        timed("generator-count", generator_count),
    ];
    let passed = checks.iter().all(|c| c.passed);
    let doc = rec.attach(json!({ "passed": passed, "checks": checks }));
    if ctx.pretty {
        let mut t = Table::new(["check", "result", "seconds", "detail"]);
        for c in &checks {
            t.row(vec![
                c.name.to_string(),
                if c.passed { "pass" } else { "FAIL" }.to_string(),
                format!("{:.2}", c.seconds),
                c.detail.clone(),
            ]);
        }
        print!("{}", t.render());
    } else {
        println!(
            "{}",
            serde_json::to_string_pretty(&doc).expect("report serializes")
        );
    }
    match checks.iter().find(|c| !c.passed) {
        Some(c) => Err(Failure::new(
            EXIT_SELFCHECK,
            anyhow!("selfcheck failed: {}: {}", c.name, c.detail),
        )),
        None => Ok(0),
    }
}
