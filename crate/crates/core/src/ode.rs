//! Dormand–Prince 5(4) with Hairer's continuous extension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-14,
            h_init: 1e-2,
            h_max: 0.1,
            h_min: 1e-12,
        }
    }
}

/// Right-hand side `f(t, y, dy)`.
pub trait Rhs: FnMut(f64, &[f64], &mut [f64]) -> Result<()> {}
impl<F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>> Rhs for F {}

struct Stages {
    y1: Vec<f64>,
    k: [Vec<f64>; 7],
    err: Vec<f64>,
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] = y[i] + h * s;
    }
}

/// One explicit step of size `h` from `(t, y)` with `k1 = f(t, y)`.
fn stages<F: Rhs>(f: &mut F, t: f64, y: &[f64], k1: &[f64], h: f64) -> Result<Stages> {
    let n = y.len();
    let mut tmp = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut y1 = vec![0.0; n];

    axpy(&mut tmp, y, h, &[(A21, k1)]);
    f(t + C2 * h, &tmp, &mut k2)?;
    axpy(&mut tmp, y, h, &[(A31, k1), (A32, &k2)]);
    f(t + C3 * h, &tmp, &mut k3)?;
    axpy(&mut tmp, y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]);
    f(t + C4 * h, &tmp, &mut k4)?;
    axpy(
        &mut tmp,
        y,
        h,
        &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)],
    );
    f(t + C5 * h, &tmp, &mut k5)?;
    axpy(
        &mut tmp,
        y,
        h,
        &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
    );
    f(t + h, &tmp, &mut k6)?;
    axpy(
        &mut y1,
        y,
        h,
        &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    f(t + h, &y1, &mut k7)?;

    let err = (0..n)
        .map(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]))
        .collect();
    Ok(Stages {
        y1,
        k: [k1.to_vec(), k2, k3, k4, k5, k6, k7],
        err,
    })
}

/// A single fixed step; fifth-order accurate, no error control.
pub fn single_step<F: Rhs>(f: &mut F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut k1 = vec![0.0; y.len()];
    f(t, y, &mut k1)?;
    Ok(stages(f, t, y, &k1, h)?.y1)
}

/// Continuous extension over one accepted step.
#[derive(Clone, Debug)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseStep {
    fn new(t0: f64, h: f64, y0: &[f64], s: &Stages) -> Self {
        let n = y0.len();
        let k = &s.k;
        let mut r = [
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
        ];
        for i in 0..n {
            let dy = s.y1[i] - y0[i];
            let bspl = h * k[0][i] - dy;
            r[0][i] = y0[i];
            r[1][i] = dy;
            r[2][i] = bspl;
            r[3][i] = dy - h * k[6][i] - bspl;
            r[4][i] = h
                * (D1 * k[0][i]
                    + D3 * k[2][i]
                    + D4 * k[3][i]
                    + D5 * k[4][i]
                    + D6 * k[5][i]
                    + D7 * k[6][i]);
        }
        Self { t0, h, rcont: r }
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn component(&self, i: usize, t: f64) -> f64 {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let r = &self.rcont;
        r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])))
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        (0..self.rcont[0].len())
            .map(|i| self.component(i, t))
            .collect()
    }
}

/// Adaptive stepper state.
pub struct Dopri5 {
    pub cfg: OdeConfig,
    pub t: f64,
    pub y: Vec<f64>,
    k1: Vec<f64>,
    h: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl Dopri5 {
    pub fn new<F: Rhs>(f: &mut F, t: f64, y: Vec<f64>, cfg: OdeConfig) -> Result<Self> {
        let mut k1 = vec![0.0; y.len()];
        f(t, &y, &mut k1)?;
        let h = cfg.h_init.min(cfg.h_max);
        Ok(Self {
            cfg,
            t,
            y,
            k1,
            h,
            accepted: 0,
            rejected: 0,
        })
    }

    /// Restart from a new state (after a discontinuity), keeping the step size.
    pub fn reset<F: Rhs>(&mut self, f: &mut F, t: f64, y: Vec<f64>) -> Result<()> {
        f(t, &y, &mut self.k1)?;
        self.t = t;
        self.y = y;
        Ok(())
    }

    fn error_norm(&self, y1: &[f64], err: &[f64]) -> f64 {
        let n = err.len() as f64;
        let s: f64 = err
            .iter()
            .zip(&self.y)
            .zip(y1)
            .map(|((e, a), b)| {
                let sc = self.cfg.atol + self.cfg.rtol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum();
        (s / n).sqrt()
    }

    /// Advances by one accepted step and returns its dense output.
    pub fn step<F: Rhs>(&mut self, f: &mut F) -> Result<DenseStep> {
        loop {
            let h = self.h.min(self.cfg.h_max);
            if h < self.cfg.h_min {
                return Err(Error::StepUnderflow { t: self.t, h });
            }
            let s = stages(f, self.t, &self.y, &self.k1, h)?;
            let err = self.error_norm(&s.y1, &s.err);
            if !err.is_finite() {
                self.rejected += 1;
                self.h = 0.2 * h;
                continue;
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                let dense = DenseStep::new(self.t, h, &self.y, &s);
                self.t += h;
                self.y = s.y1;
                self.k1 = s.k[6].clone();
                self.h = h * fac;
                self.accepted += 1;
                return Ok(dense);
            }
            self.rejected += 1;
            self.h = h * fac.min(1.0);
        }
    }
}
