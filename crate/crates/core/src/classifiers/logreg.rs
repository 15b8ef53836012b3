//! Regularised binary logistic regression.
//!
//! Objective, with `n` rows and inverse regularisation strength `C`:
//!
//! ```text
//! none: (1/n) Σ logloss
//! l2:   (1/n) Σ logloss + ‖w‖² / (2 C n)
//! l1:   (1/n) Σ logloss + ‖w‖₁ / (C n)
//! ```
//!
//! The bias is never penalised. `gd` is full-batch gradient descent with
//! backtracking (proximal soft-thresholding for l1); `newton` is IRLS with a
//! damped Hessian and a backtracking line search. Both only accept steps that
//! do not increase the objective.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_binary, check_features, Classifier};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
    None,
}

impl Penalty {
    /// Tie-break rank used by grid search: l2 before l1 before none.
    pub fn rank(self) -> u8 {
        match self {
            Penalty::L2 => 0,
            Penalty::L1 => 1,
            Penalty::None => 2,
        }
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Penalty::L1 => "l1",
            Penalty::L2 => "l2",
            Penalty::None => "none",
        })
    }
}

impl FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Penalty::L1),
            "l2" => Ok(Penalty::L2),
            "none" => Ok(Penalty::None),
            other => Err(Error::invalid(format!("unknown penalty `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Gd,
    Newton,
}

impl Solver {
    pub fn rank(self) -> u8 {
        match self {
            Solver::Gd => 0,
            Solver::Newton => 1,
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Gd => "gd",
            Solver::Newton => "newton",
        })
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(Solver::Gd),
            "newton" => Ok(Solver::Newton),
            other => Err(Error::invalid(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegOptions {
    pub penalty: Penalty,
    pub c: f64,
    pub solver: Solver,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogRegOptions {
    fn default() -> Self {
        LogRegOptions {
            penalty: Penalty::L2,
            c: 1.0,
            solver: Solver::Gd,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub penalty: Penalty,
    pub c: f64,
    pub solver: Solver,
    pub converged: bool,
    pub iterations: usize,
    /// Objective value at the start and after every accepted step.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl LogRegModel {
    /// A model with the given weights that has not been trained.
    pub fn with_weights(weights: Vec<f64>, bias: f64) -> Self {
        LogRegModel {
            weights,
            bias,
            penalty: Penalty::None,
            c: 1.0,
            solver: Solver::Gd,
            converged: false,
            iterations: 0,
            objective_trace: Vec::new(),
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_features(x, self.weights.len())?;
        Ok(x.row_iter().map(|r| sigmoid(dot(r, &self.weights) + self.bias)).collect())
    }
}

impl Classifier for LogRegModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn score(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.predict_proba(x)
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.predict_proba(x)?.into_iter().map(|p| usize::from(p >= 0.5)).collect())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn mean_log_loss(x: &Matrix, y: &[usize], w: &[f64], b: f64) -> f64 {
    let n = x.rows() as f64;
    x.row_iter()
        .zip(y)
        .map(|(r, &t)| {
            let z = dot(r, w) + b;
            if t == 1 {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum::<f64>()
        / n
}

fn penalty_value(w: &[f64], penalty: Penalty, c: f64, n: usize) -> f64 {
    let cn = c * n as f64;
    match penalty {
        Penalty::None => 0.0,
        Penalty::L2 => dot(w, w) / (2.0 * cn),
        Penalty::L1 => w.iter().map(|v| v.abs()).sum::<f64>() / cn,
    }
}

/// Regularised objective at `(w, b)`.
pub fn logistic_objective(x: &Matrix, y: &[usize], w: &[f64], b: f64, penalty: Penalty, c: f64) -> f64 {
    mean_log_loss(x, y, w, b) + penalty_value(w, penalty, c, x.rows())
}

/// Gradient of the differentiable part of the objective: the full objective
/// for `none` and `l2`, the log-loss term alone for `l1`.
pub fn logistic_gradient(x: &Matrix, y: &[usize], w: &[f64], b: f64, penalty: Penalty, c: f64) -> (Vec<f64>, f64) {
    let n = x.rows() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (r, &t) in x.row_iter().zip(y) {
        let e = sigmoid(dot(r, w) + b) - t as f64;
        gb += e;
        for (g, v) in gw.iter_mut().zip(r) {
            *g += e * v;
        }
    }
    gw.iter_mut().for_each(|g| *g /= n);
    gb /= n;
    if penalty == Penalty::L2 {
        let cn = c * n;
        for (g, v) in gw.iter_mut().zip(w) {
            *g += v / cn;
        }
    }
    (gw, gb)
}

fn smooth_objective(x: &Matrix, y: &[usize], w: &[f64], b: f64, penalty: Penalty, c: f64) -> f64 {
    match penalty {
        Penalty::L1 => mean_log_loss(x, y, w, b),
        _ => logistic_objective(x, y, w, b, penalty, c),
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn logreg_fit(x: &Matrix, y: &[usize], opts: &LogRegOptions) -> Result<LogRegModel> {
    check_binary(x, y)?;
    if x.rows() == 0 {
        return Err(Error::invalid("cannot fit on zero rows"));
    }
    if !(opts.c > 0.0) {
        return Err(Error::invalid(format!("C must be positive, got {}", opts.c)));
    }
    if opts.penalty == Penalty::L1 && opts.solver == Solver::Newton {
        return Err(Error::UnsupportedSolver);
    }
    match opts.solver {
        Solver::Gd => fit_gd(x, y, opts),
        Solver::Newton => fit_newton(x, y, opts),
    }
}

fn fit_gd(x: &Matrix, y: &[usize], opts: &LogRegOptions) -> Result<LogRegModel> {
    let d = x.cols();
    let (penalty, c) = (opts.penalty, opts.c);
    let l1_scale = 1.0 / (c * x.rows() as f64);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut step = 1.0;
    let mut trace = vec![logistic_objective(x, y, &w, b, penalty, c)];
    let mut converged = false;
    let mut iterations = 0;
    let mut previous: Option<(Vec<f64>, f64, Vec<f64>, f64)> = None;

    while iterations < opts.max_iter {
        let (gw, gb) = logistic_gradient(x, y, &w, b, penalty, c);
        if let Some((pw, pb, pgw, pgb)) = previous.take() {
            // Barzilai-Borwein trial step
            let mut ss = (b - pb) * (b - pb);
            let mut sy = (b - pb) * (gb - pgb);
            for i in 0..d {
                ss += (w[i] - pw[i]) * (w[i] - pw[i]);
                sy += (w[i] - pw[i]) * (gw[i] - pgw[i]);
            }
            step = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { (step * 2.0).min(1e10) };
        }
        let residual = if penalty == Penalty::L1 {
            // prox-gradient residual with unit step
            let r = w
                .iter()
                .zip(&gw)
                .map(|(wi, gi)| (wi - soft_threshold(wi - gi, l1_scale)).abs())
                .fold(0.0f64, f64::max);
            r.max(gb.abs())
        } else {
            gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()))
        };
        if residual < opts.tol {
            converged = true;
            break;
        }
        let f0 = smooth_objective(x, y, &w, b, penalty, c);
        let mut accepted = false;
        while step > 1e-20 {
            let wn: Vec<f64> = w
                .iter()
                .zip(&gw)
                .map(|(wi, gi)| {
                    let v = wi - step * gi;
                    if penalty == Penalty::L1 {
                        soft_threshold(v, step * l1_scale)
                    } else {
                        v
                    }
                })
                .collect();
            let bn = b - step * gb;
            // quadratic upper-bound test on the smooth part
            let mut lin = gb * (bn - b);
            let mut sq = (bn - b) * (bn - b);
            for i in 0..d {
                let dlt = wn[i] - w[i];
                lin += gw[i] * dlt;
                sq += dlt * dlt;
            }
            let f1 = smooth_objective(x, y, &wn, bn, penalty, c);
            if f1 <= f0 + lin + sq / (2.0 * step) {
                let full = logistic_objective(x, y, &wn, bn, penalty, c);
                if full <= *trace.last().expect("trace") {
                    previous = Some((std::mem::take(&mut w), b, gw.clone(), gb));
                    w = wn;
                    b = bn;
                    trace.push(full);
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }

    Ok(LogRegModel {
        weights: w,
        bias: b,
        penalty,
        c,
        solver: Solver::Gd,
        converged,
        iterations,
        objective_trace: trace,
    })
}

fn fit_newton(x: &Matrix, y: &[usize], opts: &LogRegOptions) -> Result<LogRegModel> {
    let d = x.cols();
    let n = x.rows() as f64;
    let (penalty, c) = (opts.penalty, opts.c);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut trace = vec![logistic_objective(x, y, &w, b, penalty, c)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let (gw, gb) = logistic_gradient(x, y, &w, b, penalty, c);
        let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax < opts.tol {
            converged = true;
            break;
        }
        // Hessian over (w, b), bias in the last slot
        let m = d + 1;
        let mut h = Matrix::zeros(m, m);
        for r in x.row_iter() {
            let p = sigmoid(dot(r, &w) + b);
            let s = p * (1.0 - p) / n;
            for a in 0..m {
                let xa = if a < d { r[a] } else { 1.0 };
                for bb in a..m {
                    let xb = if bb < d { r[bb] } else { 1.0 };
                    h[(a, bb)] += s * xa * xb;
                }
            }
        }
        for a in 0..m {
            for bb in 0..a {
                h[(a, bb)] = h[(bb, a)];
            }
        }
        if penalty == Penalty::L2 {
            for a in 0..d {
                h[(a, a)] += 1.0 / (c * n);
            }
        }
        let mut g = gw.clone();
        g.push(gb);
        let mut damping = 0.0;
        let dir = loop {
            let mut hd = h.clone();
            for a in 0..m {
                hd[(a, a)] += damping;
            }
            if let Some(sol) = cholesky_solve(&hd, &g) {
                break sol;
            }
            damping = if damping == 0.0 { 1e-10 } else { damping * 10.0 };
            if damping > 1e6 {
                return Err(Error::NoConvergence("newton solver"));
            }
        };
        let slope: f64 = dot(&g, &dir);
        let f0 = *trace.last().expect("trace");
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-12 {
            let wn: Vec<f64> = w.iter().zip(&dir).map(|(wi, di)| wi - alpha * di).collect();
            let bn = b - alpha * dir[d];
            let f1 = logistic_objective(x, y, &wn, bn, penalty, c);
            if f1 <= f0 - 1e-4 * alpha * slope {
                w = wn;
                b = bn;
                trace.push(f1);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }

    Ok(LogRegModel {
        weights: w,
        bias: b,
        penalty,
        c,
        solver: Solver::Newton,
        converged,
        iterations,
        objective_trace: trace,
    })
}
