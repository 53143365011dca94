//! Perturbations whose averaged systems have a prescribed, maximal set of
//! simple zeros.
//!
//! Each target polynomial is expanded from its roots and every coefficient
//! is divided by the moment factor of a single monomial that produces it.
//! Besides those, every instance carries one extra monomial whose average
//! vanishes. It does not move the predicted zeros, but without it the true
//! cycles of these very symmetric systems agree with the prediction to
//! second order in ε, which hides the generic first-order rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{half_i, mu};
use crate::perturbation::{CoeffTable, Kind, MonomialKey, MultiIndex, PerturbationSpec};

/// Weight of the symmetry-breaking monomial, relative to the r-scale.
pub const SYMMETRY_BREAK: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    ContOdd,
    ContEven,
    Disc,
    HopfCont,
    HopfDisc,
}

impl Family {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cont-odd" => Ok(Family::ContOdd),
            "cont-even" => Ok(Family::ContEven),
            "disc" => Ok(Family::Disc),
            "hopf-cont" => Ok(Family::HopfCont),
            "hopf-disc" => Ok(Family::HopfDisc),
            _ => Err(Error::Targets(format!("unknown generator family {s:?}"))),
        }
    }

    pub fn kind(self) -> Kind {
        match self {
            Family::ContOdd | Family::ContEven | Family::HopfCont => Kind::Continuous,
            Family::Disc | Family::HopfDisc => Kind::Discontinuous,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetRoots {
    pub r_roots: Vec<f64>,
    /// One list per coordinate `z_1, …, z_d`.
    pub z_roots: Vec<Vec<f64>>,
}

/// Root counts `(r, [z_1, …, z_d])` each family needs.
pub fn expected_counts(family: Family, n: u32, d: usize) -> Result<(usize, Vec<usize>)> {
    if d == 0 {
        return Err(Error::Targets("d must be at least 1".into()));
    }
    let n_us = n as usize;
    match family {
        Family::ContOdd => {
            if n < 3 || n % 2 == 0 {
                return Err(Error::Targets(format!(
                    "odd continuous family needs odd n >= 3, got {n}"
                )));
            }
            Ok(((n_us - 1) / 2, vec![n_us; d]))
        }
        Family::ContEven => {
            if n < 2 || n % 2 == 1 {
                return Err(Error::Targets(format!(
                    "even continuous family needs even n >= 2, got {n}"
                )));
            }
            let mut z = vec![n_us; d];
            z[0] = n_us - 1;
            Ok((n_us / 2, z))
        }
        Family::HopfCont => {
            let inner = if n % 2 == 1 {
                Family::ContOdd
            } else {
                Family::ContEven
            };
            expected_counts(inner, n, d)
        }
        Family::Disc => {
            if n < 1 {
                return Err(Error::Targets("n must be at least 1".into()));
            }
            Ok((n_us, vec![n_us; d]))
        }
        Family::HopfDisc => {
            if n < 2 {
                return Err(Error::Targets(format!("this family needs n >= 2, got {n}")));
            }
            Ok((n_us - 1, vec![n_us; d]))
        }
    }
}

fn integer_ladder(count: usize) -> Vec<f64> {
    let start = -((count / 2) as i64);
    (0..count as i64).map(|k| (start + k) as f64).collect()
}

/// r-roots `1, …, m` (scaled to end at 0.01 for the near-origin families)
/// and consecutive integers around 0 for each z-coordinate.
pub fn default_targets(family: Family, n: u32, d: usize) -> Result<TargetRoots> {
    let (nr, nz) = expected_counts(family, n, d)?;
    let mut r_roots: Vec<f64> = (1..=nr).map(|k| k as f64).collect();
    if matches!(family, Family::HopfCont | Family::HopfDisc) {
        r_roots.iter_mut().for_each(|v| *v *= 0.01 / nr as f64);
    }
    Ok(TargetRoots {
        r_roots,
        z_roots: nz.into_iter().map(integer_ladder).collect(),
    })
}

fn check_simple(label: &str, roots: &mut [f64]) -> Result<()> {
    if roots.iter().any(|v| !v.is_finite()) {
        return Err(Error::Targets(format!("{label} roots must be finite")));
    }
    roots.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    if roots.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Targets(format!(
            "{label} roots must be pairwise distinct"
        )));
    }
    Ok(())
}

/// Sorted copy of `targets` after count, positivity and simplicity checks.
pub fn validate_targets(
    family: Family,
    n: u32,
    d: usize,
    targets: &TargetRoots,
) -> Result<TargetRoots> {
    let (nr, nz) = expected_counts(family, n, d)?;
    let mut t = targets.clone();
    if t.r_roots.len() != nr {
        return Err(Error::Targets(format!(
            "expected {nr} r-roots, got {}",
            t.r_roots.len()
        )));
    }
    if t.r_roots.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Targets("r-roots must be strictly positive".into()));
    }
    check_simple("r", &mut t.r_roots)?;
    if t.z_roots.len() != d {
        return Err(Error::Targets(format!(
            "expected z-roots for {d} coordinates, got {}",
            t.z_roots.len()
        )));
    }
    for (l, (roots, &want)) in t.z_roots.iter_mut().zip(&nz).enumerate() {
        if roots.len() != want {
            return Err(Error::Targets(format!(
                "expected {want} roots for z{}, got {}",
                l + 1,
                roots.len()
            )));
        }
        check_simple(&format!("z{}", l + 1), roots)?;
    }
    Ok(t)
}

/// Coefficients (ascending) of `∏ (t − root) / scale`.
fn poly_from_roots(roots: &[f64], scale: f64) -> Vec<f64> {
    let mut c = vec![1.0];
    for &rt in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (k, v) in c.iter().enumerate() {
            next[k + 1] += v / scale;
            next[k] -= v * rt / scale;
        }
        c = next;
    }
    c
}

/// Coefficients in `r` of `∏ (r² − ρ²) / σ²`.
fn even_poly_from_roots(roots: &[f64], sigma: f64) -> Vec<f64> {
    let squares: Vec<f64> = roots.iter().map(|v| v * v).collect();
    let in_s = poly_from_roots(&squares, sigma * sigma);
    let mut c = vec![0.0; 2 * in_s.len() - 1];
    for (k, v) in in_s.iter().enumerate() {
        c[2 * k] = *v;
    }
    c
}

fn key(d: usize, i: u32, j: u32, k: MultiIndex) -> MonomialKey {
    debug_assert_eq!(k.len(), d);
    MonomialKey::new(i, j, k)
}

fn assign(table: &mut CoeffTable, key: MonomialKey, target: f64, factor: f64) -> Result<()> {
    if target == 0.0 {
        return Ok(());
    }
    if factor == 0.0 || !factor.is_finite() {
        return Err(Error::SingularSolve(format!("zero moment factor at {key}")));
    }
    table.set(key, target / factor)
}

/// `f_{ℓ+1} = ∏ (z_ℓ − ζ)` through `c_{ℓ 0 0 k e_ℓ}`, whose average carries
/// `factor` (2π continuous, π for the upper-branch-only discontinuous form).
fn place_z_polys(
    spec: &mut PerturbationSpec,
    roots: &[Vec<f64>],
    skip_first: bool,
    factor: f64,
) -> Result<()> {
    let d = spec.d;
    for (l, rts) in roots.iter().enumerate() {
        if skip_first && l == 0 {
            continue;
        }
        let coeffs = poly_from_roots(rts, 1.0);
        for (k, &v) in coeffs.iter().enumerate() {
            assign(
                &mut spec.c[l],
                key(d, 0, 0, MultiIndex::unit(d, l, k as u32)),
                v,
                factor,
            )?;
        }
    }
    Ok(())
}

fn sigma(r_roots: &[f64]) -> f64 {
    r_roots.iter().cloned().fold(0.0, f64::max)
}

/// Odd `n`: `f̄_1(r) = ∏ (r² − ρ²)/σ²` from `a_{p00}`, `f_{ℓ+1}(z_ℓ)` of
/// degree `n`.
pub fn gen_continuous_odd(n: u32, d: usize, targets: &TargetRoots) -> Result<PerturbationSpec> {
    let t = validate_targets(Family::ContOdd, n, d, targets)?;
    let mut spec = PerturbationSpec::zero(n, d, Kind::Continuous)?;
    let s = sigma(&t.r_roots);
    let bar = even_poly_from_roots(&t.r_roots, s);
    // f_1 = r · f̄_1: coefficient of r^{p+1}
    for (p, &v) in bar.iter().enumerate() {
        let deg = p as u32 + 1;
        if deg % 2 == 1 {
            assign(
                &mut spec.a,
                key(d, deg, 0, MultiIndex::zero(d)),
                v,
                mu(deg + 1, 0).to_float()?,
            )?;
        }
    }
    spec.a
        .set(key(d, 1, 1, MultiIndex::zero(d)), SYMMETRY_BREAK / s)?;
    place_z_polys(&mut spec, &t.z_roots, false, mu(0, 0).to_float()?)?;
    Ok(spec)
}

/// Even `n`: `f̄_1 = A_1(z_1)` of degree `n − 1` from `a_{1 0 k e_1}`,
/// `f_2(r) = ∏ (r² − ρ²)/σ²` from `c_{1, 2m, 0, 0}`, and degree-`n`
/// polynomials in `z_ℓ` for `ℓ ≥ 2`.
pub fn gen_continuous_even(n: u32, d: usize, targets: &TargetRoots) -> Result<PerturbationSpec> {
    let t = validate_targets(Family::ContEven, n, d, targets)?;
    let mut spec = PerturbationSpec::zero(n, d, Kind::Continuous)?;
    let s = sigma(&t.r_roots);

    let a1 = poly_from_roots(&t.z_roots[0], 1.0);
    let m20 = mu(2, 0).to_float()?;
    for (k, &v) in a1.iter().enumerate() {
        assign(
            &mut spec.a,
            key(d, 1, 0, MultiIndex::unit(d, 0, k as u32)),
            v,
            m20,
        )?;
    }

    let f2 = even_poly_from_roots(&t.r_roots, s);
    for (p, &v) in f2.iter().enumerate() {
        if p % 2 == 0 {
            let p = p as u32;
            assign(
                &mut spec.c[0],
                key(d, p, 0, MultiIndex::zero(d)),
                v,
                mu(p, 0).to_float()?,
            )?;
        }
    }
    spec.c[0].set(key(d, 0, 1, MultiIndex::zero(d)), SYMMETRY_BREAK / s)?;
    place_z_polys(&mut spec, &t.z_roots, true, mu(0, 0).to_float()?)?;
    Ok(spec)
}

/// `f_1` coefficient of `r^p` through the upper branch only: `a_{p00}` for
/// odd `p`, `b_{p00}` for even `p`.
fn place_disc_r_poly(spec: &mut PerturbationSpec, coeffs: &[f64]) -> Result<()> {
    let d = spec.d;
    for (p, &v) in coeffs.iter().enumerate() {
        let p = p as u32;
        if p % 2 == 1 {
            assign(
                &mut spec.a,
                key(d, p, 0, MultiIndex::zero(d)),
                v,
                half_i(p + 1, 0).to_float()?,
            )?;
        } else {
            assign(
                &mut spec.b,
                key(d, p, 0, MultiIndex::zero(d)),
                v,
                half_i(p, 1).to_float()?,
            )?;
        }
    }
    Ok(())
}

/// `b_{100}` on the upper branch: `I(1, 1) = 0`, so the average is unchanged.
fn break_symmetry_disc(spec: &mut PerturbationSpec) -> Result<()> {
    let d = spec.d;
    spec.b
        .set(key(d, 1, 0, MultiIndex::zero(d)), SYMMETRY_BREAK)
}

/// `f_1(r) = σ ∏ (r − ρ)/σ` of degree `n`, degree-`n` polynomials in each
/// `z_ℓ`; all coefficients sit on the `y > 0` branch.
pub fn gen_discontinuous(n: u32, d: usize, targets: &TargetRoots) -> Result<PerturbationSpec> {
    let t = validate_targets(Family::Disc, n, d, targets)?;
    let mut spec = PerturbationSpec::zero(n, d, Kind::Discontinuous)?;
    let s = sigma(&t.r_roots);
    let f1: Vec<f64> = poly_from_roots(&t.r_roots, s)
        .into_iter()
        .map(|v| v * s)
        .collect();
    place_disc_r_poly(&mut spec, &f1)?;
    break_symmetry_disc(&mut spec)?;
    place_z_polys(&mut spec, &t.z_roots, false, half_i(0, 0).to_float()?)?;
    Ok(spec)
}

/// Families whose `(x, y)`-constant terms vanish, so cycles can sit at any
/// small radius. Continuous: the odd/even recipe (which never uses those
/// terms). Discontinuous: `f_1 = r · ∏ (r − ρ)/σ` with `n − 1` roots.
pub fn gen_hopf(kind: Kind, n: u32, d: usize, targets: &TargetRoots) -> Result<PerturbationSpec> {
    match kind {
        Kind::Continuous => {
            if n % 2 == 1 {
                gen_continuous_odd(n, d, targets)
            } else {
                gen_continuous_even(n, d, targets)
            }
        }
        Kind::Discontinuous => {
            let t = validate_targets(Family::HopfDisc, n, d, targets)?;
            let mut spec = PerturbationSpec::zero(n, d, Kind::Discontinuous)?;
            let s = sigma(&t.r_roots);
            let mut f1 = vec![0.0];
            f1.extend(poly_from_roots(&t.r_roots, s));
            place_disc_r_poly(&mut spec, &f1)?;
            break_symmetry_disc(&mut spec)?;
            place_z_polys(&mut spec, &t.z_roots, false, half_i(0, 0).to_float()?)?;
            Ok(spec)
        }
    }
}

pub fn generate(
    family: Family,
    n: u32,
    d: usize,
    targets: Option<&TargetRoots>,
) -> Result<PerturbationSpec> {
    let owned;
    let t = match targets {
        Some(t) => t,
        None => {
            owned = default_targets(family, n, d)?;
            &owned
        }
    };
    match family {
        Family::ContOdd => gen_continuous_odd(n, d, t),
        Family::ContEven => gen_continuous_even(n, d, t),
        Family::Disc => gen_discontinuous(n, d, t),
        Family::HopfCont => gen_hopf(Kind::Continuous, n, d, t),
        Family::HopfDisc => gen_hopf(Kind::Discontinuous, n, d, t),
    }
}

/// The zero set the construction prescribes (the same tensor product for
/// every family), as `(r, z_1, …, z_d)` points
/// sorted by `r` then `z`.
pub fn expected_zeros(targets: &TargetRoots) -> Vec<Vec<f64>> {
    let mut axes = vec![targets.r_roots.clone()];
    axes.extend(targets.z_roots.iter().cloned());
    let mut pts: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        let mut sorted = axis.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));
        pts = pts
            .iter()
            .flat_map(|p| {
                sorted.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    pts
}
