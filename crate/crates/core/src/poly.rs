//! Sparse multivariate polynomials with `f64` coefficients.

use std::collections::BTreeMap;

/// `Σ c_e · v^e` over exponent vectors `e` of length `nvars`.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatPoly {
    pub nvars: usize,
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl FloatPoly {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn add_term(&mut self, exponents: Vec<u32>, coeff: f64) {
        debug_assert_eq!(exponents.len(), self.nvars);
        *self.terms.entry(exponents).or_insert(0.0) += coeff;
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        self.terms.iter().map(|(e, c)| c * monomial(e, v)).sum()
    }

    /// Formal partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> FloatPoly {
        let mut out = FloatPoly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[var] > 0 {
                let mut de = e.clone();
                de[var] -= 1;
                out.add_term(de, c * e[var] as f64);
            }
        }
        out
    }

    pub fn total_degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    /// True when every coefficient is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|c| *c == 0.0)
    }

    /// Variables that appear with a positive exponent in a nonzero term.
    pub fn support(&self) -> Vec<usize> {
        (0..self.nvars)
            .filter(|&i| self.terms.iter().any(|(e, c)| *c != 0.0 && e[i] > 0))
            .collect()
    }

    /// Dense coefficients `[c_0, c_1, …]` in variable `var` when the
    /// polynomial depends on no other variable.
    pub fn univariate_coeffs(&self, var: usize) -> Option<Vec<f64>> {
        let support = self.support();
        if support.iter().any(|&i| i != var) {
            return None;
        }
        let deg = self
            .terms
            .iter()
            .filter(|(_, c)| **c != 0.0)
            .map(|(e, _)| e[var])
            .max()
            .unwrap_or(0) as usize;
        let mut out = vec![0.0; deg + 1];
        for (e, c) in &self.terms {
            if e.iter().enumerate().all(|(i, &p)| i == var || p == 0) {
                if (e[var] as usize) <= deg {
                    out[e[var] as usize] += c;
                }
            }
        }
        Some(out)
    }

    /// Upper bound on `|∂²p/∂v_a∂v_b|` over the box `|v_i - center_i| ≤ rho`.
    pub fn second_derivative_bound(&self, a: usize, b: usize, center: &[f64], rho: f64) -> f64 {
        let mut bound = 0.0;
        for (e, c) in &self.terms {
            let factor = if a == b {
                e[a] as f64 * (e[a] as f64 - 1.0)
            } else {
                e[a] as f64 * e[b] as f64
            };
            if factor <= 0.0 {
                continue;
            }
            let mut m = c.abs() * factor;
            for (i, &p) in e.iter().enumerate() {
                let mut pow = p as i32;
                if i == a {
                    pow -= 1;
                }
                if i == b {
                    pow -= 1;
                }
                if pow > 0 {
                    m *= (center[i].abs() + rho).powi(pow);
                }
            }
            bound += m;
        }
        bound
    }
}

pub(crate) fn monomial(e: &[u32], v: &[f64]) -> f64 {
    e.iter().zip(v).fold(
        1.0,
        |acc, (&p, &x)| if p == 0 { acc } else { acc * x.powi(p as i32) },
    )
}

/// Horner evaluation of `Σ c_k t^k`.
pub fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}
