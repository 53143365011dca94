//! Zeros with `r > 0` of the averaged system, certified by the Jacobian.
//!
//! Two search strategies:
//! * decoupled systems (every component depends on a single variable and the
//!   components cover all variables) are solved exactly per variable by
//!   monotone-interval bisection, then tensored;
//! * otherwise a seed grid over the search box feeds a damped Newton
//!   iteration whose limits are deduplicated.
//!
//! Either way each zero is re-certified: residual, Jacobian determinant and a
//! radius on which it is the only zero.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::{bezout_bound, AveragedSystem};
use crate::error::{Error, Result};
use crate::poly::{horner, FloatPoly};

/// Truncated cylindrical annulus `r_min ≤ r ≤ r_max`, `z` in a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub r_min: f64,
    pub r_max: f64,
    pub z_bounds: Vec<(f64, f64)>,
}

impl SearchBox {
    pub fn new(r_min: f64, r_max: f64, z_bounds: Vec<(f64, f64)>) -> Result<Self> {
        if !(r_min > 0.0 && r_min < r_max && r_max.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "need 0 < r_min < r_max, got [{r_min}, {r_max}]"
            )));
        }
        for (l, &(lo, hi)) in z_bounds.iter().enumerate() {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidBox(format!("z{} bounds [{lo}, {hi}]", l + 1)));
            }
        }
        Ok(Self {
            r_min,
            r_max,
            z_bounds,
        })
    }

    /// Bounds of variable `v` (0 is `r`).
    pub fn bounds(&self, v: usize) -> (f64, f64) {
        if v == 0 {
            (self.r_min, self.r_max)
        } else {
            self.z_bounds[v - 1]
        }
    }

    pub fn dim(&self) -> usize {
        1 + self.z_bounds.len()
    }

    pub fn contains(&self, p: &[f64], slack: f64) -> bool {
        (0..self.dim()).all(|v| {
            let (lo, hi) = self.bounds(v);
            let pad = slack * (hi - lo);
            p[v] >= lo - pad && p[v] <= hi + pad
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub residual_tol: f64,
    pub jac_tol: f64,
    pub grid_per_axis: usize,
    pub max_iterations: usize,
    pub dedup_dist: f64,
    /// Solve decoupled systems per variable instead of by grid search.
    pub use_fast_path: bool,
    /// Seeds are jittered inside their grid cells when set.
    pub jitter_seed: Option<u64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-12,
            jac_tol: 1e-8,
            grid_per_axis: 32,
            max_iterations: 60,
            dedup_dist: 1e-6,
            use_fast_path: true,
            jitter_seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifiedZero {
    pub r: f64,
    pub z: Vec<f64>,
    /// `max_i |f_i|` of the solved (factored when available) system.
    pub residual: f64,
    pub jacobian_det: f64,
    pub simple: bool,
    /// Radius (max-norm) of a ball around the point holding no other zero;
    /// zero when uniqueness could not be verified.
    pub newton_radius: f64,
}

impl CertifiedZero {
    pub fn point(&self) -> Vec<f64> {
        let mut p = vec![self.r];
        p.extend_from_slice(&self.z);
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMethod {
    Univariate,
    GridNewton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroSearch {
    pub zeros: Vec<CertifiedZero>,
    pub method: SearchMethod,
    pub used_factored: bool,
    /// False when the search hit its budget or the zero set is not isolated.
    pub complete: bool,
    /// Some component vanishes identically, so there is nothing to isolate.
    #[serde(default)]
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountReport {
    pub found: usize,
    pub bound: u64,
    pub all_simple: bool,
    pub complete: bool,
}

/// Float form of the solved system plus its formal Jacobian.
struct Compiled {
    comps: Vec<FloatPoly>,
    jac: Vec<Vec<FloatPoly>>,
}

impl Compiled {
    fn new(sys: &AveragedSystem, use_factored: bool) -> Result<Self> {
        let comps = chosen_components(sys, use_factored)?;
        let nv = sys.nvars();
        let jac = comps
            .iter()
            .map(|c| (0..nv).map(|v| c.derivative(v)).collect())
            .collect();
        Ok(Self { comps, jac })
    }

    fn eval(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.comps.len(), self.comps.iter().map(|c| c.eval(p)))
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let n = self.comps.len();
        DMatrix::from_fn(n, n, |i, j| self.jac[i][j].eval(p))
    }
}

fn chosen_components(sys: &AveragedSystem, use_factored: bool) -> Result<Vec<FloatPoly>> {
    let mut comps: Vec<FloatPoly> = sys.components.iter().map(|c| c.to_float()).collect();
    if use_factored {
        let bar = sys
            .r_factored_first
            .as_ref()
            .ok_or(Error::NoFactoredComponent)?;
        comps[0] = bar.to_float();
    }
    Ok(comps)
}

fn check_point(sys: &AveragedSystem, point: &[f64], use_factored: bool) -> Result<()> {
    if point.len() != sys.nvars() {
        return Err(Error::Dimension(format!(
            "point has length {}, expected {}",
            point.len(),
            sys.nvars()
        )));
    }
    if use_factored && point[0] <= 0.0 {
        return Err(Error::Precondition(
            "factored evaluation needs r > 0".into(),
        ));
    }
    Ok(())
}

/// Component values at `(r, z)`; `f̄_1` replaces `f_1` when `use_factored`.
pub fn eval_system(sys: &AveragedSystem, point: &[f64], use_factored: bool) -> Result<Vec<f64>> {
    check_point(sys, point, use_factored)?;
    if use_factored {
        let bar = sys
            .r_factored_first
            .as_ref()
            .ok_or(Error::NoFactoredComponent)?;
        let mut out = vec![bar.eval(point)];
        out.extend(sys.components[1..].iter().map(|c| c.eval(point)));
        Ok(out)
    } else {
        Ok(sys.components.iter().map(|c| c.eval(point)).collect())
    }
}

/// Jacobian with respect to `(r, z_1, …, z_d)` by formal differentiation of
/// the exact term lists.
pub fn jacobian(sys: &AveragedSystem, point: &[f64], use_factored: bool) -> Result<DMatrix<f64>> {
    check_point(sys, point, use_factored)?;
    let first = if use_factored {
        sys.r_factored_first
            .as_ref()
            .ok_or(Error::NoFactoredComponent)?
    } else {
        &sys.components[0]
    };
    let rows: Vec<_> = std::iter::once(first).chain(&sys.components[1..]).collect();
    let n = sys.nvars();
    let mut m = DMatrix::zeros(n, n);
    for (i, f) in rows.iter().enumerate() {
        for j in 0..n {
            m[(i, j)] = f.derivative(j).eval(point);
        }
    }
    Ok(m)
}

/// Real roots of `Σ c_k t^k` in `[lo, hi]`, ascending.
///
/// Roots of the derivative split the interval into monotone pieces; each
/// sign change is bisected to full precision. Double roots sitting on a
/// critical point are returned too.
pub fn univariate_roots(coeffs: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut c = coeffs.to_vec();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    if c.len() <= 1 || lo > hi {
        return Vec::new();
    }
    if c.len() == 2 {
        let t = -c[0] / c[1];
        return if t >= lo && t <= hi {
            vec![t]
        } else {
            Vec::new()
        };
    }
    let deriv: Vec<f64> = c
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, v)| k as f64 * v)
        .collect();
    let mut knots = vec![lo];
    knots.extend(
        univariate_roots(&deriv, lo, hi)
            .into_iter()
            .filter(|&t| t > lo && t < hi),
    );
    knots.push(hi);

    let magnitude = |t: f64| {
        c.iter()
            .enumerate()
            .map(|(k, v)| v.abs() * t.abs().powi(k as i32))
            .sum::<f64>()
    };
    let p = |t: f64| horner(&c, t);
    let mut roots: Vec<f64> = Vec::new();
    let push = |t: f64, roots: &mut Vec<f64>| {
        if roots
            .last()
            .map_or(true, |&last| (t - last).abs() > 1e-12 * t.abs().max(1.0))
        {
            roots.push(t);
        }
    };
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (pa, pb) = (p(a), p(b));
        if pa.abs() <= 1e-14 * magnitude(a) {
            push(a, &mut roots);
            continue;
        }
        if pa.signum() != pb.signum() && pb != 0.0 {
            let (mut x0, mut x1, s0) = (a, b, pa.signum());
            for _ in 0..200 {
                let m = 0.5 * (x0 + x1);
                if m <= x0 || m >= x1 {
                    break;
                }
                if p(m).signum() == s0 {
                    x0 = m;
                } else {
                    x1 = m;
                }
            }
            push(0.5 * (x0 + x1), &mut roots);
        }
    }
    let last = *knots.last().unwrap();
    if p(last).abs() <= 1e-14 * magnitude(last) {
        push(last, &mut roots);
    }
    roots
}

/// `1 + max |c_k / c_deg|`: every real root lies in `[-B, B]`.
pub fn cauchy_bound(coeffs: &[f64]) -> Option<f64> {
    let deg = coeffs.iter().rposition(|&v| v != 0.0)?;
    if deg == 0 {
        return None;
    }
    let lead = coeffs[deg].abs();
    Some(
        1.0 + coeffs[..deg]
            .iter()
            .map(|v| v.abs() / lead)
            .fold(0.0, f64::max),
    )
}

/// Permutation `component → variable` when the system decouples.
fn decoupled_assignment(comps: &[FloatPoly]) -> Option<Vec<usize>> {
    let mut used = vec![false; comps.len()];
    let mut out = Vec::with_capacity(comps.len());
    for c in comps {
        let s = c.support();
        if s.len() != 1 || used[s[0]] {
            return None;
        }
        used[s[0]] = true;
        out.push(s[0]);
    }
    Some(out)
}

/// Box around the zeros of a decoupled system (root enclosure padded by 50%),
/// or a fixed default box when the system does not decouple.
pub fn default_box(sys: &AveragedSystem) -> SearchBox {
    let fallback =
        || SearchBox::new(1e-3, 4.0, vec![(-4.0, 4.0); sys.d]).expect("static box is valid");
    let comps = match chosen_components(sys, sys.r_factored_first.is_some()) {
        Ok(c) => c,
        Err(_) => return fallback(),
    };
    let assign = match decoupled_assignment(&comps) {
        Some(a) => a,
        None => return fallback(),
    };
    let mut bounds = vec![(f64::NAN, f64::NAN); sys.nvars()];
    for (c, &v) in comps.iter().zip(&assign) {
        let coeffs = c.univariate_coeffs(v).expect("decoupled");
        let roots = match cauchy_bound(&coeffs) {
            Some(b) if v == 0 => univariate_roots(&coeffs, 0.0, b)
                .into_iter()
                .filter(|&t| t > 0.0)
                .collect(),
            Some(b) => univariate_roots(&coeffs, -b, b),
            None => Vec::new(),
        };
        bounds[v] = match (roots.first(), roots.last()) {
            (Some(&lo), Some(&hi)) => {
                let pad = 0.5 * (hi - lo).max(0.5 * lo.abs().max(hi.abs()));
                let pad = if pad > 0.0 { pad } else { 0.5 };
                (lo - pad, hi + pad)
            }
            _ => {
                if v == 0 {
                    (0.0, 1.0)
                } else {
                    (-1.0, 1.0)
                }
            }
        };
    }
    let (r_lo, r_hi) = bounds[0];
    let r_min = if r_lo > 0.0 {
        r_lo.min(1e-3)
    } else {
        1e-3_f64.min(0.5 * r_hi)
    };
    let r_min = r_min.max(r_lo);
    SearchBox::new(r_min, r_hi, bounds[1..].to_vec()).unwrap_or_else(|_| fallback())
}

enum NewtonOutcome {
    Converged(Vec<f64>),
    Exhausted,
    Failed,
}

fn newton(sys: &Compiled, start: Vec<f64>, bx: &SearchBox, cfg: &SolverConfig) -> NewtonOutcome {
    let mut x = start;
    let mut fx = sys.eval(&x);
    for _ in 0..cfg.max_iterations {
        let res = fx.amax();
        if !res.is_finite() {
            return NewtonOutcome::Failed;
        }
        if res <= cfg.residual_tol {
            return NewtonOutcome::Converged(x);
        }
        let step = match sys.jacobian(&x).lu().solve(&fx) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => return NewtonOutcome::Failed,
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<f64> = x
                .iter()
                .zip(step.iter())
                .map(|(a, s)| a - lambda * s)
                .collect();
            let ft = sys.eval(&trial);
            if ft.amax() < res || lambda < 1e-3 {
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted || !bx.contains(&x, 1.0) {
            return NewtonOutcome::Failed;
        }
        if step.amax() * lambda <= 1e-16 * x.iter().fold(1.0_f64, |m, v| m.max(v.abs())) {
            // Stalled above the residual tolerance (rounding floor).
            return if fx.amax() <= 1e3 * cfg.residual_tol {
                NewtonOutcome::Converged(x)
            } else {
                NewtonOutcome::Failed
            };
        }
    }
    if fx.amax() <= cfg.residual_tol {
        NewtonOutcome::Converged(x)
    } else {
        NewtonOutcome::Exhausted
    }
}

/// A couple of plain Newton steps that never increase the residual.
fn polish(sys: &Compiled, mut x: Vec<f64>) -> Vec<f64> {
    let mut fx = sys.eval(&x);
    for _ in 0..3 {
        let Some(step) = sys.jacobian(&x).lu().solve(&fx) else {
            break;
        };
        let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - s).collect();
        let ft = sys.eval(&trial);
        if ft.amax() < fx.amax() {
            x = trial;
            fx = ft;
        } else {
            break;
        }
    }
    x
}

/// Radius of a max-norm ball on which `‖J(x) − J(p)‖ ≤ 1/(2‖J(p)⁻¹‖)`, so `f`
/// is injective there and `p` is its only zero.
fn uniqueness_radius(sys: &Compiled, p: &[f64], jac: &DMatrix<f64>) -> f64 {
    let Some(inv) = jac.clone().try_inverse() else {
        return 0.0;
    };
    let inv_norm = (0..inv.nrows())
        .map(|i| inv.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if !inv_norm.is_finite() || inv_norm == 0.0 {
        return 0.0;
    }
    let scale = p.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut rho = 0.1 * scale;
    for _ in 0..60 {
        let lip = sys
            .comps
            .iter()
            .map(|c| {
                let n = p.len();
                let mut s = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        s += c.second_derivative_bound(a, b, p, rho);
                    }
                }
                s
            })
            .fold(0.0, f64::max);
        if lip * rho * inv_norm <= 0.5 {
            return rho;
        }
        rho *= 0.5;
    }
    0.0
}

fn certify(sys: &Compiled, p: Vec<f64>, cfg: &SolverConfig) -> CertifiedZero {
    let residual = sys.eval(&p).amax();
    let jac = sys.jacobian(&p);
    let det = jac.determinant();
    let simple = det.abs() >= cfg.jac_tol;
    let newton_radius = if simple {
        uniqueness_radius(sys, &p, &jac)
    } else {
        0.0
    };
    CertifiedZero {
        r: p[0],
        z: p[1..].to_vec(),
        residual,
        jacobian_det: det,
        simple,
        newton_radius,
    }
}

fn grid_seeds(bx: &SearchBox, cfg: &SolverConfig) -> Vec<Vec<f64>> {
    let dim = bx.dim();
    let n = cfg.grid_per_axis.max(1);
    let total = n.pow(dim as u32);
    let mut rng = cfg.jitter_seed.map(ChaCha8Rng::seed_from_u64);
    let mut seeds = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut p = Vec::with_capacity(dim);
        for v in 0..dim {
            let cell = rem % n;
            rem /= n;
            let offset = match rng.as_mut() {
                Some(g) => g.gen_range(0.0..1.0),
                None => 0.5,
            };
            let (lo, hi) = bx.bounds(v);
            p.push(lo + (cell as f64 + offset) * (hi - lo) / n as f64);
        }
        seeds.push(p);
    }
    seeds
}

fn sort_zeros(zeros: &mut [CertifiedZero]) {
    zeros.sort_by(|a, b| {
        a.r.partial_cmp(&b.r)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                a.z.iter()
                    .zip(&b.z)
                    .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
}

fn dedup_push(out: &mut Vec<Vec<f64>>, p: Vec<f64>, dist: f64) {
    let close = out.iter().any(|q| {
        q.iter()
            .zip(&p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            <= dist
    });
    if !close {
        out.push(p);
    }
}

/// All zeros with `r > 0` inside `bx`, sorted by `r` then `z`.
pub fn find_zeros(sys: &AveragedSystem, bx: &SearchBox, cfg: &SolverConfig) -> Result<ZeroSearch> {
    if bx.dim() != sys.nvars() {
        return Err(Error::InvalidBox(format!(
            "box has {} axes, system has {} variables",
            bx.dim(),
            sys.nvars()
        )));
    }
    let used_factored = sys.r_factored_first.is_some();
    let compiled = Compiled::new(sys, used_factored)?;
    let mut warnings = Vec::new();

    if let Some(i) = compiled.comps.iter().position(|c| c.is_zero()) {
        warnings.push(format!(
            "component {} vanishes identically; the zero set is not isolated",
            i + 1
        ));
        return Ok(ZeroSearch {
            zeros: Vec::new(),
            method: SearchMethod::GridNewton,
            used_factored,
            complete: false,
            degenerate: true,
            warnings,
        });
    }

    let assignment = if cfg.use_fast_path {
        decoupled_assignment(&compiled.comps)
    } else {
        None
    };

    let (points, method, complete) = match assignment {
        Some(assign) => {
            let mut per_var: Vec<Vec<f64>> = vec![Vec::new(); sys.nvars()];
            for (c, &v) in compiled.comps.iter().zip(&assign) {
                let (lo, hi) = bx.bounds(v);
                per_var[v] = univariate_roots(&c.univariate_coeffs(v).expect("decoupled"), lo, hi);
            }
            let mut points: Vec<Vec<f64>> = vec![Vec::new()];
            for roots in &per_var {
                points = points
                    .iter()
                    .flat_map(|p| {
                        roots.iter().map(move |&t| {
                            let mut q = p.clone();
                            q.push(t);
                            q
                        })
                    })
                    .collect();
            }
            let points: Vec<Vec<f64>> = points.into_iter().map(|p| polish(&compiled, p)).collect();
            (points, SearchMethod::Univariate, true)
        }
        None => {
            let seeds = grid_seeds(bx, cfg);
            let outcomes: Vec<NewtonOutcome> = seeds
                .into_par_iter()
                .map(|s| newton(&compiled, s, bx, cfg))
                .collect();
            let mut exhausted = 0usize;
            let mut points = Vec::new();
            for o in outcomes {
                match o {
                    NewtonOutcome::Converged(p) if bx.contains(&p, 0.0) => {
                        dedup_push(&mut points, p, cfg.dedup_dist)
                    }
                    NewtonOutcome::Exhausted => exhausted += 1,
                    _ => {}
                }
            }
            if exhausted > 0 {
                warnings.push(format!(
                    "incomplete search: {exhausted} seeds exhausted the iteration budget"
                ));
            }
            (points, SearchMethod::GridNewton, exhausted == 0)
        }
    };

    let mut zeros: Vec<CertifiedZero> = points
        .into_iter()
        .filter(|p| p[0] > 0.0)
        .map(|p| certify(&compiled, p, cfg))
        .collect();
    sort_zeros(&mut zeros);
    if zeros.iter().any(|z| !z.simple) {
        warnings.push("non-simple zeros found: no conclusion for them".into());
    }
    Ok(ZeroSearch {
        zeros,
        method,
        used_factored,
        complete,
        degenerate: false,
        warnings,
    })
}

pub fn count_report(
    sys: &AveragedSystem,
    bx: &SearchBox,
    cfg: &SolverConfig,
) -> Result<CountReport> {
    let search = find_zeros(sys, bx, cfg)?;
    Ok(report_from(sys, &search))
}

pub fn report_from(sys: &AveragedSystem, search: &ZeroSearch) -> CountReport {
    CountReport {
        found: search.zeros.len(),
        bound: bezout_bound(sys),
        all_simple: search.zeros.iter().all(|z| z.simple),
        complete: search.complete,
    }
}
