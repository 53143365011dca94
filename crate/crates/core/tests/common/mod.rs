#![allow(dead_code)]

use cycleforge_core::averaging::AveragedSystem;
use cycleforge_core::perturbation::{CoeffTable, Kind, MonomialKey, MultiIndex, PerturbationSpec};
use cycleforge_core::polysolve::{eval_system, SearchBox};
use rand::Rng;

/// Random sparse spec: each table gets up to `per_table` random monomials.
pub fn random_spec<R: Rng>(
    rng: &mut R,
    kind: Kind,
    n: u32,
    d: usize,
    per_table: usize,
) -> PerturbationSpec {
    let mut s = PerturbationSpec::zero(n, d, kind).unwrap();
    let fill = |t: &mut CoeffTable, rng: &mut R| {
        let count = rng.gen_range(0..=per_table);
        for _ in 0..count {
            let mut budget = rng.gen_range(0..=n);
            let i = rng.gen_range(0..=budget);
            budget -= i;
            let j = rng.gen_range(0..=budget);
            budget -= j;
            let mut k = vec![0u32; d];
            for slot in k.iter_mut() {
                let v = rng.gen_range(0..=budget);
                *slot = v;
                budget -= v;
            }
            t.set(
                MonomialKey::new(i, j, MultiIndex(k)),
                rng.gen_range(-2.0..2.0),
            )
            .unwrap();
        }
    };
    fill(&mut s.a, rng);
    fill(&mut s.b, rng);
    for c in s.c.iter_mut() {
        fill(c, rng);
    }
    if let Some(t) = s.alpha.as_mut() {
        fill(t, rng);
    }
    if let Some(t) = s.beta.as_mut() {
        fill(t, rng);
    }
    if let Some(g) = s.gamma.as_mut() {
        for t in g.iter_mut() {
            fill(t, rng);
        }
    }
    s
}

pub fn random_point<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    let mut p = vec![rng.gen_range(0.1..3.0)];
    p.extend((0..d).map(|_| rng.gen_range(-2.0..2.0)));
    p
}

/// Roots of component `comp` along variable `var` (other coordinates at
/// `base`) by sign-change scanning on a fine grid plus plain bisection.
pub fn bisection_roots(
    sys: &AveragedSystem,
    comp: usize,
    var: usize,
    base: &[f64],
    lo: f64,
    hi: f64,
) -> Vec<f64> {
    let factored = sys.r_factored_first.is_some();
    let f = |t: f64| {
        let mut p = base.to_vec();
        p[var] = t;
        eval_system(sys, &p, factored).unwrap()[comp]
    };
    let steps = 20_000;
    let mut roots = Vec::new();
    let mut a = lo;
    let mut fa = f(a);
    for s in 1..=steps {
        let b = lo + (hi - lo) * s as f64 / steps as f64;
        let fb = f(b);
        if fa == 0.0 {
            roots.push(a);
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            let (mut x0, mut x1) = (a, b);
            for _ in 0..200 {
                let m = 0.5 * (x0 + x1);
                if f(m).signum() == fa.signum() {
                    x0 = m;
                } else {
                    x1 = m;
                }
            }
            roots.push(0.5 * (x0 + x1));
        }
        a = b;
        fa = fb;
    }
    roots
}

/// Tensor product of per-variable bisection roots for a decoupled system
/// whose component `l` depends on variable `assign[l]`.
pub fn oracle_zero_set(sys: &AveragedSystem, bx: &SearchBox, assign: &[usize]) -> Vec<Vec<f64>> {
    let nv = sys.nvars();
    let base: Vec<f64> = (0..nv)
        .map(|v| {
            let (lo, hi) = bx.bounds(v);
            0.5 * (lo + hi)
        })
        .collect();
    let mut per_var = vec![Vec::new(); nv];
    for (comp, &v) in assign.iter().enumerate() {
        let (lo, hi) = bx.bounds(v);
        per_var[v] = bisection_roots(sys, comp, v, &base, lo, hi);
    }
    let mut pts: Vec<Vec<f64>> = vec![Vec::new()];
    for roots in &per_var {
        pts = pts
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
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts
}

/// Which variable each component of a generator instance depends on.
pub fn decoupled_assignment(sys: &AveragedSystem) -> Vec<usize> {
    let mut comps: Vec<_> = sys.components.iter().map(|c| c.to_float()).collect();
    if let Some(bar) = &sys.r_factored_first {
        comps[0] = bar.to_float();
    }
    comps
        .iter()
        .map(|c| {
            let s = c.support();
            assert_eq!(s.len(), 1, "component is not univariate");
            s[0]
        })
        .collect()
}
