//! Closed-form trigonometric moments
//!
//! ```text
//! μ(p,q) = ∫_0^{2π} cos^p θ sin^q θ dθ
//! I(p,q) = ∫_0^{π}  cos^p θ sin^q θ dθ
//! J(p,q) = ∫_π^{2π} cos^p θ sin^q θ dθ
//! ```
//!
//! All three reduce to the Wallis quarter-period integral
//! `W(p,q) = ∫_0^{π/2} cos^p sin^q = (p-1)!!(q-1)!!/(p+q)!!`, times `π/2`
//! when both exponents are even.

use std::collections::HashMap;
use std::sync::RwLock;

use num_bigint::BigInt;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::exactval::{Rational, RationalPi};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MomentKind {
    /// μ over `[0, 2π]`
    FullCircle,
    /// I over `[0, π]`
    UpperHalf,
    /// J over `[π, 2π]`
    LowerHalf,
}

impl MomentKind {
    pub fn range(self) -> (f64, f64) {
        use std::f64::consts::PI;
        match self {
            MomentKind::FullCircle => (0.0, 2.0 * PI),
            MomentKind::UpperHalf => (0.0, PI),
            MomentKind::LowerHalf => (PI, 2.0 * PI),
        }
    }
}

/// `m!!` with `(-1)!! = 0!! = 1`.
fn double_factorial(m: i64) -> BigInt {
    let mut acc = BigInt::one();
    let mut k = m;
    while k > 1 {
        acc *= k;
        k -= 2;
    }
    acc
}

/// `∫_0^{π/2} cos^p sin^q`.
fn wallis_quarter(p: u32, q: u32) -> RationalPi {
    let num = double_factorial(p as i64 - 1) * double_factorial(q as i64 - 1);
    let den = double_factorial((p + q) as i64);
    let ratio = Rational::new(num, den);
    if p % 2 == 0 && q % 2 == 0 {
        RationalPi::pi_multiple(ratio / BigInt::from(2))
    } else {
        RationalPi::from_rational(ratio)
    }
}

/// `μ(p,q)`; nonzero iff `p` and `q` are both even.
pub fn mu(p: u32, q: u32) -> RationalPi {
    if p % 2 == 1 || q % 2 == 1 {
        return RationalPi::zero();
    }
    wallis_quarter(p, q).mul_rational(&Rational::from_integer(4.into()))
}

/// `I(p,q)`; zero iff `p` is odd.
pub fn half_i(p: u32, q: u32) -> RationalPi {
    if p % 2 == 1 {
        return RationalPi::zero();
    }
    wallis_quarter(p, q).mul_rational(&Rational::from_integer(2.into()))
}

/// `J(p,q) = (-1)^q I(p,q)`.
pub fn half_j(p: u32, q: u32) -> RationalPi {
    let i = half_i(p, q);
    if q % 2 == 1 {
        -&i
    } else {
        i
    }
}

pub fn moment(kind: MomentKind, p: u32, q: u32) -> RationalPi {
    match kind {
        MomentKind::FullCircle => mu(p, q),
        MomentKind::UpperHalf => half_i(p, q),
        MomentKind::LowerHalf => half_j(p, q),
    }
}

/// Memoized moment lookups keyed by `(kind, p, q)`.
///
/// Entries are written once; racing first computations store the same exact
/// value, so readers never observe disagreement.
#[derive(Debug, Default)]
pub struct MomentTable {
    memo: RwLock<HashMap<(MomentKind, u32, u32), RationalPi>>,
}

impl MomentTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Table prefilled for `0 ≤ p, q ≤ max_exponent` (use `n + 1` for a
    /// degree-`n` spec).
    pub fn with_grid(max_exponent: u32) -> Self {
        let table = Self::new();
        {
            let mut memo = table.memo.write().expect("moment memo poisoned");
            for kind in [
                MomentKind::FullCircle,
                MomentKind::UpperHalf,
                MomentKind::LowerHalf,
            ] {
                for p in 0..=max_exponent {
                    for q in 0..=max_exponent {
                        memo.insert((kind, p, q), moment(kind, p, q));
                    }
                }
            }
        }
        table
    }

    pub fn get(&self, kind: MomentKind, p: u32, q: u32) -> RationalPi {
        if let Some(v) = self
            .memo
            .read()
            .expect("moment memo poisoned")
            .get(&(kind, p, q))
        {
            return v.clone();
        }
        let v = moment(kind, p, q);
        self.memo
            .write()
            .expect("moment memo poisoned")
            .entry((kind, p, q))
            .or_insert(v)
            .clone()
    }

    pub fn len(&self) -> usize {
        self.memo.read().expect("moment memo poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One row of the `moments` dump.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentEntry {
    pub kind: MomentKind,
    pub p: u32,
    pub q: u32,
    pub value: RationalPi,
    pub float: f64,
}

/// Every moment with `p + q ≤ max_degree`, ordered by kind, then `p`, then `q`.
pub fn moment_dump(max_degree: u32) -> Vec<MomentEntry> {
    let mut out = Vec::new();
    for kind in [
        MomentKind::FullCircle,
        MomentKind::UpperHalf,
        MomentKind::LowerHalf,
    ] {
        for p in 0..=max_degree {
            for q in 0..=(max_degree - p) {
                let value = moment(kind, p, q);
                let float = value.to_float().unwrap_or(f64::NAN);
                out.push(MomentEntry {
                    kind,
                    p,
                    q,
                    value,
                    float,
                });
            }
        }
    }
    out
}
