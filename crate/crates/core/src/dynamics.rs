//! Direct integration of the perturbed flow and shooting for its periodic
//! orbits on the section `{y = 0, x > 0}`.
//!
//! The active branch of a discontinuous field is carried as explicit state
//! (`side`), never read off the sign of `y`: crossings are located on the
//! dense output, the step is redone up to the crossing time, and a final
//! step with `y` as independent variable lands exactly on `y = 0`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{single_step, DenseStep, Dopri5, OdeConfig};
use crate::perturbation::{CoeffTable, Kind, PerturbationSpec};
use crate::poly::FloatPoly;
use crate::polysolve::CertifiedZero;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartesianState {
    pub x: f64,
    pub y: f64,
    pub z: Vec<f64>,
    pub t: f64,
}

impl CartesianState {
    pub fn on_section(r: f64, z: &[f64]) -> Self {
        Self {
            x: r,
            y: 0.0,
            z: z.to_vec(),
            t: 0.0,
        }
    }

    fn from_vec(u: &[f64], t: f64) -> Self {
        Self {
            x: u[0],
            y: u[1],
            z: u[2..].to_vec(),
            t,
        }
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut u = vec![self.x, self.y];
        u.extend_from_slice(&self.z);
        u
    }
}

/// `+1` for the `y > 0` system, `-1` for the `y < 0` one.
pub type Side = i8;

fn table_poly(t: &CoeffTable) -> FloatPoly {
    let mut p = FloatPoly::zero(2 + t.d);
    for (key, v) in t.iter() {
        let mut e = vec![key.i, key.j];
        e.extend_from_slice(&key.k.0);
        p.add_term(e, v);
    }
    p
}

/// Perturbation polynomials of both branches in the variables `(x, y, z)`.
struct Field {
    kind: Kind,
    eps: f64,
    upper: Vec<FloatPoly>,
    lower: Vec<FloatPoly>,
}

impl Field {
    fn new(spec: &PerturbationSpec, eps: f64) -> Result<Self> {
        spec.validate()?;
        let collect = |a: &CoeffTable, b: &CoeffTable, c: &[CoeffTable]| {
            let mut v = vec![table_poly(a), table_poly(b)];
            v.extend(c.iter().map(table_poly));
            v
        };
        let upper = collect(&spec.a, &spec.b, &spec.c);
        let lower = match spec.kind {
            Kind::Continuous => upper.clone(),
            Kind::Discontinuous => {
                let (al, be, ga) = spec.lower_branch()?;
                collect(al, be, ga)
            }
        };
        Ok(Self {
            kind: spec.kind,
            eps,
            upper,
            lower,
        })
    }

    fn eval(&self, side: Side, u: &[f64], du: &mut [f64]) {
        let polys = if side >= 0 || self.kind == Kind::Continuous {
            &self.upper
        } else {
            &self.lower
        };
        for (i, p) in polys.iter().enumerate() {
            du[i] = self.eps * p.eval(u);
        }
        du[0] -= u[1];
        du[1] += u[0];
    }
}

/// Right-hand side at `state`. For the discontinuous kind the branch is
/// chosen by the sign of `y`, and `y = 0` is refused.
pub fn vector_field(spec: &PerturbationSpec, eps: f64, state: &CartesianState) -> Result<Vec<f64>> {
    if state.z.len() != spec.d {
        return Err(Error::Dimension(format!(
            "state has {} z-components, spec has d = {}",
            state.z.len(),
            spec.d
        )));
    }
    if spec.kind == Kind::Discontinuous && state.y == 0.0 {
        return Err(Error::OnSwitchingManifold);
    }
    let field = Field::new(spec, eps)?;
    let side = if state.y > 0.0 { 1 } else { -1 };
    let u = state.to_vec();
    let mut du = vec![0.0; u.len()];
    field.eval(side, &u, &mut du);
    Ok(du)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub ode: OdeConfig,
    pub t_max: f64,
    /// Abort once any component exceeds this in magnitude.
    pub divergence_bound: f64,
    /// `|ẏ|` below this at a crossing is treated as possible sliding.
    pub tangency_tol: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            ode: OdeConfig::default(),
            t_max: 4.0 * std::f64::consts::PI,
            divergence_bound: 1e8,
            tangency_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionReturn {
    pub r: f64,
    pub z: Vec<f64>,
    pub period: f64,
}

/// Samples collected along one return; each sample carries the branch that
/// was active when it was produced.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<(CartesianState, Side)>,
    pub events: Vec<CartesianState>,
}

/// Time in `[step.t0, step.t1]` where the dense `y` vanishes; `y` changes
/// sign over the step.
fn locate_crossing(step: &DenseStep) -> f64 {
    let (mut a, mut b) = (step.t0, step.t1());
    let (mut ya, mut yb) = (step.component(1, a), step.component(1, b));
    for _ in 0..100 {
        // Illinois-style regula falsi, falling back to bisection.
        let mut m = if yb != ya {
            b - yb * (b - a) / (yb - ya)
        } else {
            0.5 * (a + b)
        };
        if !(m > a && m < b) {
            m = 0.5 * (a + b);
        }
        let ym = step.component(1, m);
        if ym == 0.0 || (b - a) <= 1e-15 * b.abs().max(1.0) {
            return m;
        }
        if ym.signum() == ya.signum() {
            a = m;
            ya = ym;
            yb *= 0.5;
        } else {
            b = m;
            yb = ym;
            ya *= 0.5;
        }
    }
    0.5 * (a + b)
}

/// Pulls a state with small `y` onto `y = 0` with one step in the `y`
/// variable, staying on branch `side`. Returns the state and elapsed time.
fn henon_landing(field: &Field, side: Side, u: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = u.len();
    let mut g = |_s: f64, w: &[f64], dw: &mut [f64]| -> Result<()> {
        let mut du = vec![0.0; n];
        field.eval(side, &w[..n], &mut du);
        let ydot = du[1];
        for i in 0..n {
            dw[i] = du[i] / ydot;
        }
        dw[n] = 1.0 / ydot;
        Ok(())
    };
    let mut w = u.to_vec();
    w.push(0.0);
    let out = single_step(&mut g, u[1], &w, -u[1])?;
    let mut v = out[..n].to_vec();
    v[1] = 0.0;
    Ok((v, out[n]))
}

fn branch(field: &Field, side: Side) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> + '_ {
    move |_t, u, d| {
        field.eval(side, u, d);
        Ok(())
    }
}

fn check_finite(u: &[f64], t: f64, bound: f64) -> Result<()> {
    if u.iter().all(|v| v.is_finite() && v.abs() <= bound) {
        Ok(())
    } else {
        Err(Error::Divergence { t })
    }
}

/// First return from `(r, 0, z)` to `{y = 0, x > 0}`, crossing upward.
pub fn integrate_to_section(
    spec: &PerturbationSpec,
    eps: f64,
    r: f64,
    z: &[f64],
    cfg: &IntegrationConfig,
) -> Result<SectionReturn> {
    integrate_impl(spec, eps, r, z, cfg, None)
}

/// As [`integrate_to_section`], also recording `samples_per_step` dense
/// samples per accepted step.
pub fn integrate_traced(
    spec: &PerturbationSpec,
    eps: f64,
    r: f64,
    z: &[f64],
    cfg: &IntegrationConfig,
    samples_per_step: usize,
) -> Result<(SectionReturn, Trajectory)> {
    let mut tr = Trajectory::default();
    let ret = integrate_impl(
        spec,
        eps,
        r,
        z,
        cfg,
        Some((&mut tr, samples_per_step.max(1))),
    )?;
    Ok((ret, tr))
}

fn integrate_impl(
    spec: &PerturbationSpec,
    eps: f64,
    r: f64,
    z: &[f64],
    cfg: &IntegrationConfig,
    mut trace: Option<(&mut Trajectory, usize)>,
) -> Result<SectionReturn> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Precondition(format!(
            "section start needs r > 0, got {r}"
        )));
    }
    if z.len() != spec.d {
        return Err(Error::Dimension(format!(
            "start has {} z-components, spec has d = {}",
            z.len(),
            spec.d
        )));
    }
    let field = Field::new(spec, eps)?;
    let mut side: Side = 1;
    let u0 = CartesianState::on_section(r, z).to_vec();
    let n = u0.len();

    let mut du = vec![0.0; n];
    field.eval(side, &u0, &mut du);
    if du[1] < cfg.tangency_tol {
        return Err(Error::TangentialCrossing {
            t: 0.0,
            ydot: du[1],
        });
    }

    let mut stepper = Dopri5::new(&mut branch(&field, side), 0.0, u0.clone(), cfg.ode.clone())?;
    if let Some((tr, _)) = trace.as_mut() {
        tr.samples.push((CartesianState::from_vec(&u0, 0.0), side));
    }

    loop {
        if stepper.t > cfg.t_max {
            return Err(Error::Timeout { t_max: cfg.t_max });
        }
        let (t0, y0) = (stepper.t, stepper.y.clone());
        let step = stepper.step(&mut branch(&field, side))?;
        check_finite(&stepper.y, stepper.t, cfg.divergence_bound)?;

        let crossed = f64::from(side) * stepper.y[1] <= 0.0;
        if !crossed {
            if let Some((tr, k)) = trace.as_mut() {
                for q in 1..=*k {
                    let t = step.t0 + step.h * q as f64 / *k as f64;
                    tr.samples
                        .push((CartesianState::from_vec(&step.eval(t), t), side));
                }
            }
            continue;
        }

        let tc = locate_crossing(&step);
        let near = if tc > t0 {
            single_step(&mut branch(&field, side), t0, &y0, tc - t0)?
        } else {
            y0.clone()
        };
        let (landed, dt) = henon_landing(&field, side, &near)?;
        let t_event = tc + dt;
        check_finite(&landed, t_event, cfg.divergence_bound)?;

        field.eval(side, &landed, &mut du);
        if du[1].abs() < cfg.tangency_tol || f64::from(side) * du[1] > 0.0 {
            return Err(Error::TangentialCrossing {
                t: t_event,
                ydot: du[1],
            });
        }

        if let Some((tr, k)) = trace.as_mut() {
            for q in 1..*k {
                let t = step.t0 + (tc - step.t0) * q as f64 / *k as f64;
                tr.samples
                    .push((CartesianState::from_vec(&step.eval(t), t), side));
            }
            tr.samples
                .push((CartesianState::from_vec(&landed, t_event), side));
            tr.events.push(CartesianState::from_vec(&landed, t_event));
        }

        if side < 0 && landed[0] > 0.0 {
            return Ok(SectionReturn {
                r: landed[0],
                z: landed[2..].to_vec(),
                period: t_event,
            });
        }
        side = -side;
        stepper.reset(&mut branch(&field, side), t_event, landed)?;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub eps_max: f64,
    pub shoot_tol: f64,
    pub max_iterations: usize,
    /// Finite-difference step relative to `max(|s_i|, fd_floor)`.
    pub fd_rel: f64,
    pub fd_floor: f64,
    pub integration: IntegrationConfig,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            eps_max: 0.05,
            shoot_tol: 1e-10,
            max_iterations: 25,
            fd_rel: 1e-6,
            fd_floor: 1e-3,
            integration: IntegrationConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleVerdict {
    pub predicted: Vec<f64>,
    pub epsilon: f64,
    pub fixed_point: Vec<f64>,
    pub period: f64,
    /// Euclidean distance between `fixed_point` and `predicted`.
    pub distance: f64,
    pub converged: bool,
    /// `max_i |P(s) − s|` at `fixed_point`.
    pub residual: f64,
    pub iterations: usize,
    pub order_estimate: Option<f64>,
    pub note: Option<String>,
}

/// Displacement `P(s) − s` and the return time.
pub fn displacement(
    spec: &PerturbationSpec,
    eps: f64,
    s: &[f64],
    cfg: &IntegrationConfig,
) -> Result<(Vec<f64>, f64)> {
    let ret = integrate_to_section(spec, eps, s[0], &s[1..], cfg)?;
    let mut d = vec![ret.r - s[0]];
    d.extend(ret.z.iter().zip(&s[1..]).map(|(a, b)| a - b));
    Ok((d, ret.period))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton on the displacement map, started at the predicted zero.
pub fn refine_cycle(
    spec: &PerturbationSpec,
    eps: f64,
    predicted: &CertifiedZero,
    cfg: &RefineConfig,
) -> Result<CycleVerdict> {
    if eps == 0.0 {
        return Err(Error::Precondition(
            "eps = 0: every orbit of the center is periodic".into(),
        ));
    }
    if eps.abs() > cfg.eps_max {
        return Err(Error::Precondition(format!(
            "|eps| = {} exceeds eps_max = {}",
            eps.abs(),
            cfg.eps_max
        )));
    }
    if !predicted.simple {
        return Err(Error::Precondition("predicted zero is not simple".into()));
    }
    let p = predicted.point();
    if p.len() != spec.d + 1 {
        return Err(Error::Dimension(format!(
            "predicted point has length {}, expected {}",
            p.len(),
            spec.d + 1
        )));
    }
    let dim = p.len();
    let ic = &cfg.integration;

    let mut s = p.clone();
    let (mut d, mut period) = displacement(spec, eps, &s, ic)?;
    let mut res = max_abs(&d);
    let mut iterations = 0;
    let mut note = None;

    while res > cfg.shoot_tol {
        if iterations == cfg.max_iterations {
            note = Some("Newton iteration budget exhausted".to_string());
            break;
        }
        iterations += 1;
        let mut jac = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            let h = cfg.fd_rel * s[i].abs().max(cfg.fd_floor);
            let mut sp = s.clone();
            let mut sm = s.clone();
            sp[i] += h;
            sm[i] -= h;
            let (dp, _) = displacement(spec, eps, &sp, ic)?;
            let (dm, _) = displacement(spec, eps, &sm, ic)?;
            for k in 0..dim {
                jac[(k, i)] = (dp[k] - dm[k]) / (2.0 * h);
            }
        }
        let Some(step) = jac.lu().solve(&DVector::from_vec(d.clone())) else {
            note = Some("singular displacement Jacobian".to_string());
            break;
        };
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..10 {
            let trial: Vec<f64> = s
                .iter()
                .zip(step.iter())
                .map(|(a, b)| a - lambda * b)
                .collect();
            if trial[0] > 0.0 {
                if let Ok((dt, per)) = displacement(spec, eps, &trial, ic) {
                    let rt = max_abs(&dt);
                    if rt < res {
                        s = trial;
                        d = dt;
                        period = per;
                        res = rt;
                        improved = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            note = Some(format!("Newton stalled at residual {res:e}"));
            break;
        }
    }

    let distance = s
        .iter()
        .zip(&p)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(CycleVerdict {
        predicted: p,
        epsilon: eps,
        fixed_point: s,
        period,
        distance,
        converged: res <= cfg.shoot_tol,
        residual: res,
        iterations,
        order_estimate: None,
        note,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyPoint {
    pub epsilon: f64,
    pub distance: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub predicted: Vec<f64>,
    pub points: Vec<StudyPoint>,
    /// Slope of `log distance` against `log ε`.
    pub order_estimate: Option<f64>,
    /// `distance(ε_{k+1}) / distance(ε_k)` for consecutive usable points.
    pub ratios: Vec<f64>,
    pub degenerate: bool,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

pub fn convergence_study(
    spec: &PerturbationSpec,
    predicted: &CertifiedZero,
    eps_list: &[f64],
    cfg: &RefineConfig,
) -> Result<ConvergenceStudy> {
    if eps_list.len() < 3 {
        return Err(Error::Precondition(format!(
            "need at least 3 eps values, got {}",
            eps_list.len()
        )));
    }
    if eps_list.windows(2).any(|w| w[1].abs() >= w[0].abs()) {
        return Err(Error::Precondition(
            "eps values must be strictly decreasing in magnitude".into(),
        ));
    }
    let points: Vec<StudyPoint> = eps_list
        .par_iter()
        .map(|&eps| match refine_cycle(spec, eps, predicted, cfg) {
            Ok(v) if v.converged => StudyPoint {
                epsilon: eps,
                distance: Some(v.distance),
                converged: true,
                error: None,
            },
            Ok(v) => StudyPoint {
                epsilon: eps,
                distance: None,
                converged: false,
                error: v.note,
            },
            Err(e) => StudyPoint {
                epsilon: eps,
                distance: None,
                converged: false,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| {
            p.distance
                .filter(|&d| d > 0.0)
                .map(|d| (p.epsilon.abs(), d))
        })
        .collect();
    let xs: Vec<f64> = usable.iter().map(|(e, _)| e.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|(_, d)| d.ln()).collect();
    let order_estimate = fit_slope(&xs, &ys);
    let ratios = usable.windows(2).map(|w| w[1].1 / w[0].1).collect();
    Ok(ConvergenceStudy {
        predicted: predicted.point(),
        points,
        order_estimate,
        ratios,
        degenerate: order_estimate.is_none(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::{MonomialKey, MultiIndex};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn key(i: u32, j: u32, k: &[u32]) -> MonomialKey {
        MonomialKey::new(i, j, MultiIndex(k.to_vec()))
    }

    fn random_spec(kind: Kind, seed: u64) -> PerturbationSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = PerturbationSpec::zero(2, 1, kind).unwrap();
        let mut tables: Vec<&mut CoeffTable> = vec![&mut s.a, &mut s.b];
        tables.extend(s.c.iter_mut());
        if let (Some(a), Some(b), Some(g)) = (s.alpha.as_mut(), s.beta.as_mut(), s.gamma.as_mut()) {
            tables.push(a);
            tables.push(b);
            tables.extend(g.iter_mut());
        }
        for t in tables {
            for i in 0..=2u32 {
                for j in 0..=(2 - i) {
                    t.set(key(i, j, &[0]), rng.gen_range(-1.0..1.0)).unwrap();
                }
            }
        }
        s
    }

    fn simple_zero(r: f64, z: f64) -> CertifiedZero {
        CertifiedZero {
            r,
            z: vec![z],
            residual: 0.0,
            jacobian_det: 1.0,
            simple: true,
            newton_radius: 0.0,
        }
    }

    #[test]
    fn vector_field_examples() {
        let zero = PerturbationSpec::zero(2, 2, Kind::Continuous).unwrap();
        let st = CartesianState {
            x: 1.0,
            y: 0.0,
            z: vec![0.3, -0.2],
            t: 0.0,
        };
        assert_eq!(
            vector_field(&zero, 0.0, &st).unwrap(),
            vec![0.0, 1.0, 0.0, 0.0]
        );

        let mut s = PerturbationSpec::zero(1, 1, Kind::Continuous).unwrap();
        s.a.set(key(0, 0, &[0]), 1.0).unwrap();
        let st = CartesianState {
            x: 0.0,
            y: 0.0,
            z: vec![0.0],
            t: 0.0,
        };
        assert_eq!(vector_field(&s, 0.1, &st).unwrap(), vec![0.1, 0.0, 0.0]);

        let mut s = PerturbationSpec::zero(1, 1, Kind::Discontinuous).unwrap();
        s.alpha.as_mut().unwrap().set(key(0, 0, &[0]), 1.0).unwrap();
        let st = CartesianState {
            x: 0.0,
            y: -0.5,
            z: vec![0.0],
            t: 0.0,
        };
        let v = vector_field(&s, 0.1, &st).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15);
        let on = CartesianState {
            x: 1.0,
            y: 0.0,
            z: vec![0.0],
            t: 0.0,
        };
        assert!(matches!(
            vector_field(&s, 0.1, &on),
            Err(Error::OnSwitchingManifold)
        ));
    }

    #[test]
    fn unperturbed_return_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = IntegrationConfig::default();
        for kind in [Kind::Continuous, Kind::Discontinuous] {
            for trial in 0..50 {
                let spec = random_spec(kind, trial);
                let r = rng.gen_range(0.05..3.0);
                let z = rng.gen_range(-2.0..2.0);
                let ret = integrate_to_section(&spec, 0.0, r, &[z], &cfg).unwrap();
                assert!((ret.r - r).abs() <= 1e-10, "{kind:?} r {r} -> {}", ret.r);
                assert!((ret.z[0] - z).abs() <= 1e-10);
                assert!(
                    (ret.period - 2.0 * PI).abs() <= 1e-10,
                    "period {}",
                    ret.period
                );
            }
        }
    }

    #[test]
    fn radius_conserved_without_perturbation() {
        let spec = random_spec(Kind::Discontinuous, 3);
        let (_, tr) =
            integrate_traced(&spec, 0.0, 1.7, &[0.4], &IntegrationConfig::default(), 5).unwrap();
        for (s, _) in &tr.samples {
            assert!(((s.x * s.x + s.y * s.y).sqrt() - 1.7).abs() <= 1e-10);
            assert_eq!(s.z[0], 0.4);
        }
    }

    #[test]
    fn branch_is_constant_between_events() {
        for seed in 0..10 {
            let spec = random_spec(Kind::Discontinuous, 100 + seed);
            let (_, tr) =
                integrate_traced(&spec, 0.05, 1.0, &[0.2], &IntegrationConfig::default(), 8)
                    .unwrap();
            assert_eq!(tr.events.len(), 2);
            for (s, side) in &tr.samples {
                if s.y != 0.0 {
                    assert_eq!(s.y > 0.0, *side > 0, "sample {s:?} on side {side}");
                }
            }
            assert!(tr.events.iter().all(|e| e.y == 0.0));
            assert!(tr.events[0].x < 0.0 && tr.events[1].x > 0.0);
        }
    }

    #[test]
    fn isochronous_linear_study_is_degenerate() {
        let spec = PerturbationSpec::zero(2, 1, Kind::Continuous).unwrap();
        let st = convergence_study(
            &spec,
            &simple_zero(1.0, 0.0),
            &[1e-2, 5e-3, 2.5e-3],
            &RefineConfig::default(),
        )
        .unwrap();
        assert!(st.degenerate && st.order_estimate.is_none());
        assert!(st.points.iter().all(|p| p.distance == Some(0.0)));
    }

    #[test]
    fn refine_preconditions() {
        let spec = PerturbationSpec::zero(2, 1, Kind::Continuous).unwrap();
        let cfg = RefineConfig::default();
        assert!(matches!(
            refine_cycle(&spec, 0.0, &simple_zero(1.0, 0.0), &cfg),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            refine_cycle(&spec, 0.5, &simple_zero(1.0, 0.0), &cfg),
            Err(Error::Precondition(_))
        ));
        let mut z = simple_zero(1.0, 0.0);
        z.simple = false;
        assert!(matches!(
            refine_cycle(&spec, 1e-3, &z, &cfg),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn refines_a_known_cycle() {
        // ẋ = -y + ε x (1 - x² - y²)/?: averaged f1 = π r - (3π/4 + π/4) r³ → r = 1,
        // plus ż = -ε z.
        let mut s = PerturbationSpec::zero(3, 1, Kind::Continuous).unwrap();
        s.a.set(key(1, 0, &[0]), 1.0).unwrap();
        s.a.set(key(3, 0, &[0]), -1.0).unwrap();
        s.a.set(key(1, 2, &[0]), -1.0).unwrap();
        s.c[0].set(key(0, 0, &[1]), -1.0).unwrap();
        let v = refine_cycle(&s, 1e-2, &simple_zero(1.0, 0.0), &RefineConfig::default()).unwrap();
        assert!(v.converged, "{v:?}");
        // x(1-r²) vanishes on r = 1 exactly, so the cycle is the unit circle.
        assert!(
            v.distance < 1e-9 && (v.period - 2.0 * PI).abs() < 1e-9,
            "{v:?}"
        );
    }

    #[test]
    fn tangential_start_is_refused() {
        // ẏ = x + ε b_000 vanishes at (1, 0)
        let mut s = PerturbationSpec::zero(1, 1, Kind::Discontinuous).unwrap();
        s.b.set(key(0, 0, &[0]), -20.0).unwrap();
        let err =
            integrate_to_section(&s, 0.05, 1.0, &[0.0], &IntegrationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::TangentialCrossing { .. }), "{err}");
    }

    #[test]
    fn slope_fit() {
        let x: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [2.0f64, 4.0, 6.0].iter().map(|v| v.ln()).collect();
        assert!((fit_slope(&x, &y).unwrap() - 1.0).abs() < 1e-14);
        assert!(fit_slope(&x[..1], &y[..1]).is_none());
    }
}
