//! Coefficient data model for the perturbed systems
//!
//! ```text
//! x' = -y + ε P_a(x,y,z),  y' = x + ε P_b(x,y,z),  z_l' = ε P_{c_l}(x,y,z)
//! ```
//!
//! and, for the discontinuous kind, the second branch `Q_α, Q_β, Q_{γ_l}`
//! used when `y < 0`. Every polynomial has total degree at most `n` in
//! `(x, y, z_1, …, z_d)`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponents `(k_1, …, k_d)` of the `z` variables.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(d: usize) -> Self {
        Self(vec![0; d])
    }

    /// `k_l = power`, every other exponent zero (`l` is 0-based).
    pub fn unit(d: usize, l: usize, power: u32) -> Self {
        let mut k = vec![0; d];
        k[l] = power;
        Self(k)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|k| = k_1 + … + k_d`
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }
}

/// Key `(i, j, k)` of the monomial `x^i y^j z^k`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonomialKey {
    pub i: u32,
    pub j: u32,
    pub k: MultiIndex,
}

impl MonomialKey {
    pub fn new(i: u32, j: u32, k: MultiIndex) -> Self {
        Self { i, j, k }
    }

    pub fn total_degree(&self) -> u32 {
        self.i + self.j + self.k.degree()
    }
}

impl fmt::Display for MonomialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k: Vec<String> = self.k.0.iter().map(|v| v.to_string()).collect();
        write!(f, "({},{},({}))", self.i, self.j, k.join(","))
    }
}

/// Sparse coefficient table of one polynomial; absent keys are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffTable {
    pub n: u32,
    pub d: usize,
    pub entries: BTreeMap<MonomialKey, f64>,
}

impl CoeffTable {
    pub fn new(n: u32, d: usize) -> Self {
        Self {
            n,
            d,
            entries: BTreeMap::new(),
        }
    }

    /// Stores `value` at `key` after checking the degree and index bounds.
    pub fn set(&mut self, key: MonomialKey, value: f64) -> Result<()> {
        if key.k.len() != self.d {
            return Err(Error::MultiIndexLength {
                got: key.k.len(),
                expected: self.d,
                key,
            });
        }
        if key.total_degree() > self.n {
            return Err(Error::DegreeViolation(key));
        }
        if !value.is_finite() {
            return Err(Error::BadCoefficient { key, value });
        }
        self.entries.insert(key, value);
        Ok(())
    }

    pub fn get(&self, key: &MonomialKey) -> f64 {
        self.entries.get(key).copied().unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MonomialKey, f64)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    /// `s·self + t·other`, keeping the union of stored keys.
    pub fn combine(&self, s: f64, other: &CoeffTable, t: f64) -> CoeffTable {
        let mut out = CoeffTable::new(self.n.max(other.n), self.d);
        for (key, v) in self.iter() {
            *out.entries.entry(key.clone()).or_insert(0.0) += s * v;
        }
        for (key, v) in other.iter() {
            *out.entries.entry(key.clone()).or_insert(0.0) += t * v;
        }
        out
    }
}

/// Evaluates `Σ coeff · x^i y^j z^k`.
pub fn eval_poly(table: &CoeffTable, x: f64, y: f64, z: &[f64]) -> f64 {
    debug_assert_eq!(z.len(), table.d);
    table
        .iter()
        .map(|(key, v)| {
            let mut term = v * x.powi(key.i as i32) * y.powi(key.j as i32);
            for (zl, &kl) in z.iter().zip(&key.k.0) {
                term *= zl.powi(kl as i32);
            }
            term
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Continuous,
    Discontinuous,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::Continuous => write!(f, "continuous"),
            Kind::Discontinuous => write!(f, "discontinuous"),
        }
    }
}

/// All perturbation coefficients of one system. `ε` is not part of it.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSpec {
    pub n: u32,
    pub d: usize,
    pub kind: Kind,
    pub a: CoeffTable,
    pub b: CoeffTable,
    pub c: Vec<CoeffTable>,
    pub alpha: Option<CoeffTable>,
    pub beta: Option<CoeffTable>,
    pub gamma: Option<Vec<CoeffTable>>,
}

impl PerturbationSpec {
    /// All-zero spec of the given shape.
    pub fn zero(n: u32, d: usize, kind: Kind) -> Result<Self> {
        if d == 0 {
            return Err(Error::Dimension("d must be at least 1".into()));
        }
        let t = || CoeffTable::new(n, d);
        let disc = kind == Kind::Discontinuous;
        Ok(Self {
            n,
            d,
            kind,
            a: t(),
            b: t(),
            c: (0..d).map(|_| t()).collect(),
            alpha: disc.then(t),
            beta: disc.then(t),
            gamma: disc.then(|| (0..d).map(|_| t()).collect()),
        })
    }

    pub fn require_kind(&self, expected: Kind) -> Result<()> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(Error::KindMismatch {
                expected,
                got: self.kind,
            })
        }
    }

    /// Second-branch tables `(α, β, γ)`; only present for discontinuous specs.
    pub fn lower_branch(&self) -> Result<(&CoeffTable, &CoeffTable, &[CoeffTable])> {
        self.require_kind(Kind::Discontinuous)?;
        match (&self.alpha, &self.beta, &self.gamma) {
            (Some(al), Some(be), Some(ga)) => Ok((al, be, ga)),
            (None, _, _) => Err(Error::MissingTable("alpha")),
            (_, None, _) => Err(Error::MissingTable("beta")),
            (_, _, None) => Err(Error::MissingTable("gamma")),
        }
    }

    /// Checks the shared-shape and kind invariants.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Dimension("d must be at least 1".into()));
        }
        if self.c.len() != self.d {
            return Err(Error::Dimension(format!(
                "c has {} tables, expected d = {}",
                self.c.len(),
                self.d
            )));
        }
        match self.kind {
            Kind::Continuous => {
                if self.alpha.is_some() {
                    return Err(Error::UnexpectedTable("alpha"));
                }
                if self.beta.is_some() {
                    return Err(Error::UnexpectedTable("beta"));
                }
                if self.gamma.is_some() {
                    return Err(Error::UnexpectedTable("gamma"));
                }
            }
            Kind::Discontinuous => {
                let (_, _, gamma) = self.lower_branch()?;
                if gamma.len() != self.d {
                    return Err(Error::Dimension(format!(
                        "gamma has {} tables, expected d = {}",
                        gamma.len(),
                        self.d
                    )));
                }
            }
        }
        for t in self.all_tables() {
            if t.n != self.n || t.d != self.d {
                return Err(Error::Dimension("tables disagree on n or d".into()));
            }
            for key in t.entries.keys() {
                if key.k.len() != self.d {
                    return Err(Error::MultiIndexLength {
                        key: key.clone(),
                        got: key.k.len(),
                        expected: self.d,
                    });
                }
                if key.total_degree() > self.n {
                    return Err(Error::DegreeViolation(key.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn all_tables(&self) -> Vec<&CoeffTable> {
        let mut out = vec![&self.a, &self.b];
        out.extend(self.c.iter());
        out.extend(self.alpha.iter());
        out.extend(self.beta.iter());
        if let Some(g) = &self.gamma {
            out.extend(g.iter());
        }
        out
    }

    /// `s·self + t·other` table by table (shapes must agree).
    pub fn combine(&self, s: f64, other: &PerturbationSpec, t: f64) -> Result<PerturbationSpec> {
        if self.kind != other.kind || self.d != other.d {
            return Err(Error::Dimension(
                "cannot combine specs of different shape".into(),
            ));
        }
        let comb = |x: &CoeffTable, y: &CoeffTable| x.combine(s, y, t);
        let comb_vec = |x: &[CoeffTable], y: &[CoeffTable]| -> Vec<CoeffTable> {
            x.iter().zip(y).map(|(p, q)| comb(p, q)).collect()
        };
        let both = |x: &Option<CoeffTable>, y: &Option<CoeffTable>| match (x, y) {
            (Some(p), Some(q)) => Some(comb(p, q)),
            _ => None,
        };
        let n = self.n.max(other.n);
        let mut out = PerturbationSpec {
            n,
            d: self.d,
            kind: self.kind,
            a: comb(&self.a, &other.a),
            b: comb(&self.b, &other.b),
            c: comb_vec(&self.c, &other.c),
            alpha: both(&self.alpha, &other.alpha),
            beta: both(&self.beta, &other.beta),
            gamma: match (&self.gamma, &other.gamma) {
                (Some(p), Some(q)) => Some(comb_vec(p, q)),
                _ => None,
            },
        };
        out.set_degree(n);
        Ok(out)
    }

    fn set_degree(&mut self, n: u32) {
        self.n = n;
        self.a.n = n;
        self.b.n = n;
        self.c.iter_mut().for_each(|t| t.n = n);
        if let Some(t) = self.alpha.as_mut() {
            t.n = n;
        }
        if let Some(t) = self.beta.as_mut() {
            t.n = n;
        }
        if let Some(g) = self.gamma.as_mut() {
            g.iter_mut().for_each(|t| t.n = n);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SpecDoc::from_spec(self)).expect("spec serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    i: u32,
    j: u32,
    k: Vec<u32>,
    v: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    n: u32,
    d: usize,
    kind: Kind,
    a: Vec<EntryDoc>,
    b: Vec<EntryDoc>,
    c: Vec<Vec<EntryDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<Vec<EntryDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<Vec<EntryDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<Vec<Vec<EntryDoc>>>,
    /// Run provenance written by the command-line tool; ignored here.
    #[serde(default, skip_serializing, rename = "manifest")]
    _manifest: Option<serde::de::IgnoredAny>,
}

impl SpecDoc {
    fn from_spec(spec: &PerturbationSpec) -> Self {
        let entries = |t: &CoeffTable| -> Vec<EntryDoc> {
            t.iter()
                .map(|(key, v)| EntryDoc {
                    i: key.i,
                    j: key.j,
                    k: key.k.0.clone(),
                    v: serde_json::Value::from(v),
                })
                .collect()
        };
        SpecDoc {
            n: spec.n,
            d: spec.d,
            kind: spec.kind,
            a: entries(&spec.a),
            b: entries(&spec.b),
            c: spec.c.iter().map(entries).collect(),
            alpha: spec.alpha.as_ref().map(entries),
            beta: spec.beta.as_ref().map(entries),
            gamma: spec.gamma.as_ref().map(|g| g.iter().map(entries).collect()),
            _manifest: None,
        }
    }
}

fn build_table(n: u32, d: usize, name: &str, docs: Vec<EntryDoc>) -> Result<CoeffTable> {
    let mut table = CoeffTable::new(n, d);
    for e in docs {
        let key = MonomialKey::new(e.i, e.j, MultiIndex(e.k));
        let value = e.v.as_f64().ok_or_else(|| {
            Error::Malformed(format!(
                "non-numeric coefficient in {name} at {key}: {}",
                e.v
            ))
        })?;
        if table.entries.contains_key(&key) {
            return Err(Error::Malformed(format!(
                "duplicate entry in {name} at {key}"
            )));
        }
        table.set(key, value)?;
    }
    Ok(table)
}

fn build_family(n: u32, d: usize, name: &str, docs: Vec<Vec<EntryDoc>>) -> Result<Vec<CoeffTable>> {
    if docs.len() != d {
        return Err(Error::Dimension(format!(
            "{name} has {} tables, expected d = {d}",
            docs.len()
        )));
    }
    docs.into_iter()
        .enumerate()
        .map(|(l, t)| build_table(n, d, &format!("{name}[{}]", l + 1), t))
        .collect()
}

/// Parses and validates a JSON spec document.
pub fn parse_spec(document: &str) -> Result<PerturbationSpec> {
    let doc: SpecDoc =
        serde_json::from_str(document).map_err(|e| Error::Malformed(e.to_string()))?;
    let (n, d) = (doc.n, doc.d);
    if d == 0 {
        return Err(Error::Dimension("d must be at least 1".into()));
    }
    let spec = PerturbationSpec {
        n,
        d,
        kind: doc.kind,
        a: build_table(n, d, "a", doc.a)?,
        b: build_table(n, d, "b", doc.b)?,
        c: build_family(n, d, "c", doc.c)?,
        alpha: doc
            .alpha
            .map(|t| build_table(n, d, "alpha", t))
            .transpose()?,
        beta: doc.beta.map(|t| build_table(n, d, "beta", t)).transpose()?,
        gamma: doc
            .gamma
            .map(|g| build_family(n, d, "gamma", g))
            .transpose()?,
    };
    spec.validate()?;
    Ok(spec)
}
