//! First-order averaged functions in the variables `(r, z_1, …, z_d)`.
//!
//! After `x = r cos θ, y = r sin θ` and with `θ` as the new time, the
//! perturbed system reads `r' = ε F_1 + O(ε²)`, `z_l' = ε F_{l+1} + O(ε²)`
//! (and `G_1, G_{l+1}` on the lower branch of the discontinuous kind). The
//! averaged function is the integral of those integrands over one turn,
//! which collapses to user coefficients times exact trigonometric moments.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exactval::RationalPi;
use crate::moments::{half_i, mu};
use crate::perturbation::{eval_poly, CoeffTable, Kind, MonomialKey, PerturbationSpec};
use crate::poly::{monomial, FloatPoly};
use crate::quadrature::integrate;

/// One summand `weight · moment` of a symbolic coefficient.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymTerm {
    pub weight: f64,
    pub moment: RationalPi,
    /// Which user coefficients produced `weight`, e.g. `a(1,0,(0))`.
    pub origin: String,
}

/// Coefficient of one monomial: symbolic sum plus its collapsed value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coefficient {
    pub symbolic: Vec<SymTerm>,
    pub value: f64,
}

impl Coefficient {
    fn push(&mut self, term: SymTerm) {
        self.value += term.weight * term.moment.to_float().expect("moments are small");
        self.symbolic.push(term);
    }

    /// Exactly zero in symbolic form (every weight is `0.0`).
    pub fn is_symbolically_zero(&self) -> bool {
        self.symbolic.iter().all(|t| t.weight == 0.0)
    }

    /// Re-collapses the symbolic sum; equals `value` up to rounding.
    pub fn collapse(&self) -> f64 {
        self.symbolic
            .iter()
            .map(|t| t.weight * t.moment.to_float().expect("moments are small"))
            .sum()
    }

    fn scaled(&self, s: f64) -> Coefficient {
        Coefficient {
            symbolic: self
                .symbolic
                .iter()
                .map(|t| SymTerm {
                    weight: t.weight * s,
                    moment: t.moment.clone(),
                    origin: t.origin.clone(),
                })
                .collect(),
            value: self.value * s,
        }
    }
}

/// Polynomial in `nvars` variables with symbolic coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactPolynomial {
    pub nvars: usize,
    pub terms: BTreeMap<Vec<u32>, Coefficient>,
}

impl ExactPolynomial {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    fn push(&mut self, exponents: Vec<u32>, term: SymTerm) {
        debug_assert_eq!(exponents.len(), self.nvars);
        self.terms
            .entry(exponents)
            .or_insert_with(|| Coefficient {
                symbolic: Vec::new(),
                value: 0.0,
            })
            .push(term);
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c.value * monomial(e, v))
            .sum()
    }

    pub fn total_degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    pub fn to_float(&self) -> FloatPoly {
        let mut p = FloatPoly::zero(self.nvars);
        for (e, c) in &self.terms {
            p.add_term(e.clone(), c.value);
        }
        p
    }

    /// Formal partial derivative; symbolic weights are scaled by the exponent.
    pub fn derivative(&self, var: usize) -> ExactPolynomial {
        let mut out = ExactPolynomial::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[var] > 0 {
                let mut de = e.clone();
                de[var] -= 1;
                out.terms.insert(de, c.scaled(e[var] as f64));
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|c| c.value == 0.0)
    }
}

impl Serialize for ExactPolynomial {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Row<'a> {
            exponents: &'a [u32],
            symbolic: &'a [SymTerm],
            value: f64,
        }
        let rows: Vec<Row> = self
            .terms
            .iter()
            .map(|(e, c)| Row {
                exponents: e,
                symbolic: &c.symbolic,
                value: c.value,
            })
            .collect();
        let mut st = s.serialize_struct("ExactPolynomial", 2)?;
        st.serialize_field("nvars", &self.nvars)?;
        st.serialize_field("terms", &rows)?;
        st.end()
    }
}

/// The averaged map `f = (f_1, …, f_{d+1})`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AveragedSystem {
    pub kind: Kind,
    pub n: u32,
    pub d: usize,
    pub components: Vec<ExactPolynomial>,
    /// `f̄_1` with `f_1 = r·f̄_1`, when `f_1` has no `r^0` part.
    pub r_factored_first: Option<ExactPolynomial>,
    /// `A_p(z)`: coefficient of `r^p` in `f_1`, as a polynomial in `z`.
    pub a_coeffs: BTreeMap<u32, ExactPolynomial>,
}

impl AveragedSystem {
    fn assemble(kind: Kind, n: u32, d: usize, components: Vec<ExactPolynomial>) -> Self {
        let a_coeffs = a_coefficients(&components[0], d);
        let mut sys = AveragedSystem {
            kind,
            n,
            d,
            components,
            r_factored_first: None,
            a_coeffs,
        };
        sys.r_factored_first = factor_r(&sys).ok();
        sys
    }

    pub fn nvars(&self) -> usize {
        self.d + 1
    }
}

fn origin(name: &str, key: &MonomialKey) -> String {
    format!("{name}{key}")
}

fn exponents(key: &MonomialKey) -> Vec<u32> {
    let mut e = Vec::with_capacity(1 + key.k.len());
    e.push(key.i + key.j);
    e.extend_from_slice(&key.k.0);
    e
}

/// `A_p(z)` grouped from the `r^p` terms of `f_1`.
fn a_coefficients(f1: &ExactPolynomial, d: usize) -> BTreeMap<u32, ExactPolynomial> {
    let mut out: BTreeMap<u32, ExactPolynomial> = BTreeMap::new();
    for (e, c) in &f1.terms {
        out.entry(e[0])
            .or_insert_with(|| ExactPolynomial::zero(d))
            .terms
            .insert(e[1..].to_vec(), c.clone());
    }
    out
}

/// `F_1` (component 1) or `F_{l+1}` (component `l+1`) at `(θ, r, z)`.
pub fn integrand_f(
    spec: &PerturbationSpec,
    component: usize,
    theta: f64,
    r: f64,
    z: &[f64],
) -> Result<f64> {
    upper_or_lower(spec, &spec.a, &spec.b, &spec.c, component, theta, r, z)
}

/// `G_1` or `G_{l+1}` (lower branch of a discontinuous spec).
pub fn integrand_g(
    spec: &PerturbationSpec,
    component: usize,
    theta: f64,
    r: f64,
    z: &[f64],
) -> Result<f64> {
    let (alpha, beta, gamma) = spec.lower_branch()?;
    upper_or_lower(spec, alpha, beta, gamma, component, theta, r, z)
}

#[allow(clippy::too_many_arguments)]
fn upper_or_lower(
    spec: &PerturbationSpec,
    a: &CoeffTable,
    b: &CoeffTable,
    c: &[CoeffTable],
    component: usize,
    theta: f64,
    r: f64,
    z: &[f64],
) -> Result<f64> {
    if component == 0 || component > spec.d + 1 {
        return Err(Error::Dimension(format!(
            "component {component} outside 1..={}",
            spec.d + 1
        )));
    }
    if z.len() != spec.d {
        return Err(Error::Dimension(format!(
            "z has length {}, expected {}",
            z.len(),
            spec.d
        )));
    }
    let (ct, st) = (theta.cos(), theta.sin());
    let (x, y) = (r * ct, r * st);
    Ok(if component == 1 {
        ct * eval_poly(a, x, y, z) + st * eval_poly(b, x, y, z)
    } else {
        eval_poly(&c[component - 2], x, y, z)
    })
}

/// Exact averaged system of a continuous spec.
pub fn average_continuous(spec: &PerturbationSpec) -> Result<AveragedSystem> {
    spec.require_kind(Kind::Continuous)?;
    let nv = spec.d + 1;
    let mut f1 = ExactPolynomial::zero(nv);
    for (key, v) in spec.a.iter() {
        if key.i % 2 == 1 && key.j % 2 == 0 {
            f1.push(
                exponents(key),
                SymTerm {
                    weight: v,
                    moment: mu(key.i + 1, key.j),
                    origin: origin("a", key),
                },
            );
        }
    }
    for (key, v) in spec.b.iter() {
        if key.i % 2 == 0 && key.j % 2 == 1 {
            f1.push(
                exponents(key),
                SymTerm {
                    weight: v,
                    moment: mu(key.i, key.j + 1),
                    origin: origin("b", key),
                },
            );
        }
    }
    let mut components = vec![f1];
    for (l, table) in spec.c.iter().enumerate() {
        let mut fl = ExactPolynomial::zero(nv);
        for (key, v) in table.iter() {
            if key.i % 2 == 0 && key.j % 2 == 0 {
                fl.push(
                    exponents(key),
                    SymTerm {
                        weight: v,
                        moment: mu(key.i, key.j),
                        origin: origin(&format!("c{}", l + 1), key),
                    },
                );
            }
        }
        components.push(fl);
    }
    Ok(AveragedSystem::assemble(
        Kind::Continuous,
        spec.n,
        spec.d,
        components,
    ))
}

/// Union of the keys stored in two tables, in order.
fn key_union<'a>(p: &'a CoeffTable, q: &'a CoeffTable) -> Vec<&'a MonomialKey> {
    let mut keys: Vec<&MonomialKey> = p.entries.keys().chain(q.entries.keys()).collect();
    keys.sort();
    keys.dedup();
    keys
}

fn sign(j: u32) -> f64 {
    if j % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Exact averaged system of a discontinuous spec: upper half-turn on the
/// first branch, lower half-turn on the second.
pub fn average_discontinuous(spec: &PerturbationSpec) -> Result<AveragedSystem> {
    let (alpha, beta, gamma) = spec.lower_branch()?;
    let nv = spec.d + 1;
    let mut f1 = ExactPolynomial::zero(nv);
    for key in key_union(&spec.a, alpha) {
        if key.i % 2 == 1 {
            let w = spec.a.get(key) + sign(key.j) * alpha.get(key);
            f1.push(
                exponents(key),
                SymTerm {
                    weight: w,
                    moment: half_i(key.i + 1, key.j),
                    origin: format!(
                        "{} {} {}",
                        origin("a", key),
                        if key.j % 2 == 0 { "+" } else { "-" },
                        origin("alpha", key)
                    ),
                },
            );
        }
    }
    for key in key_union(&spec.b, beta) {
        if key.i % 2 == 0 {
            let w = spec.b.get(key) - sign(key.j) * beta.get(key);
            f1.push(
                exponents(key),
                SymTerm {
                    weight: w,
                    moment: half_i(key.i, key.j + 1),
                    origin: format!(
                        "{} {} {}",
                        origin("b", key),
                        if key.j % 2 == 0 { "-" } else { "+" },
                        origin("beta", key)
                    ),
                },
            );
        }
    }
    let mut components = vec![f1];
    for (l, (ct, gt)) in spec.c.iter().zip(gamma).enumerate() {
        let mut fl = ExactPolynomial::zero(nv);
        for key in key_union(ct, gt) {
            if key.i % 2 == 0 {
                let w = ct.get(key) + sign(key.j) * gt.get(key);
                fl.push(
                    exponents(key),
                    SymTerm {
                        weight: w,
                        moment: half_i(key.i, key.j),
                        origin: format!(
                            "{} {} {}",
                            origin(&format!("c{}", l + 1), key),
                            if key.j % 2 == 0 { "+" } else { "-" },
                            origin(&format!("gamma{}", l + 1), key)
                        ),
                    },
                );
            }
        }
        components.push(fl);
    }
    Ok(AveragedSystem::assemble(
        Kind::Discontinuous,
        spec.n,
        spec.d,
        components,
    ))
}

/// Dispatches on the spec's kind.
pub fn average(spec: &PerturbationSpec) -> Result<AveragedSystem> {
    match spec.kind {
        Kind::Continuous => average_continuous(spec),
        Kind::Discontinuous => average_discontinuous(spec),
    }
}

/// `f̄_1 = f_1 / r`. Fails unless the `r^0` part of `f_1` is symbolically zero.
pub fn factor_r(sys: &AveragedSystem) -> Result<ExactPolynomial> {
    let f1 = &sys.components[0];
    let mut out = ExactPolynomial::zero(f1.nvars);
    for (e, c) in &f1.terms {
        if e[0] == 0 {
            if !c.is_symbolically_zero() {
                return Err(Error::NotFactorable);
            }
            continue;
        }
        let mut de = e.clone();
        de[0] -= 1;
        out.terms.insert(de, c.clone());
    }
    Ok(out)
}

/// Bézout-type bound on the number of simple zeros with `r > 0`.
pub fn bezout_bound(sys: &AveragedSystem) -> u64 {
    let n = sys.n as u64;
    let nd = n.pow(sys.d as u32);
    match sys.kind {
        Kind::Continuous => nd * n.saturating_sub(1) / 2,
        Kind::Discontinuous if sys.r_factored_first.is_some() => nd * n.saturating_sub(1),
        Kind::Discontinuous => nd * n,
    }
}

/// The averaged function evaluated by adaptive quadrature of the integrands.
pub fn average_by_quadrature(
    spec: &PerturbationSpec,
    r: f64,
    z: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(spec.d + 1);
    for comp in 1..=spec.d + 1 {
        integrand_f(spec, comp, 0.0, r, z)?;
        let v = match spec.kind {
            Kind::Continuous => integrate(
                |t| integrand_f(spec, comp, t, r, z).expect("checked"),
                0.0,
                2.0 * PI,
                tol,
            ),
            Kind::Discontinuous => {
                integrand_g(spec, comp, 0.0, r, z)?;
                integrate(
                    |t| integrand_f(spec, comp, t, r, z).expect("checked"),
                    0.0,
                    PI,
                    tol,
                ) + integrate(
                    |t| integrand_g(spec, comp, t, r, z).expect("checked"),
                    PI,
                    2.0 * PI,
                    tol,
                )
            }
        };
        out.push(v);
    }
    Ok(out)
}

/// Largest `|exact − quadrature|` over the given `(r, z)` points.
pub fn oracle_deviation(
    spec: &PerturbationSpec,
    sys: &AveragedSystem,
    points: &[Vec<f64>],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in points {
        let num = average_by_quadrature(spec, p[0], &p[1..], 1e-12)?;
        for (f, q) in sys.components.iter().zip(num) {
            worst = worst.max((f.eval(p) - q).abs());
        }
    }
    Ok(worst)
}
