//! Derivative-free and quasi-Newton minimizers.
//!
//! * [`anneal`]: simulated annealing with a Gaussian proposal whose scale
//!   equals the current temperature, `T_k = T_0 / ln(k + e − 1)`, cooled
//!   every `evals_per_temp` evaluations. Tracks the best point seen.
//! * [`bfgs`]: variable-metric minimization with backtracking line search
//!   and central finite-difference gradients.
//! * [`nelder_mead`]: simplex search.
//!
//! All minimize; callers maximizing pass the negated objective.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Objective values that are NaN or infinite are replaced by this.
const BIG: f64 = 1.0e35;

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        BIG
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealConfig {
    pub evaluations: usize,
    pub initial_temperature: f64,
    pub evals_per_temp: usize,
    /// Proposals are clamped to `[-bound, bound]` per coordinate.
    pub bound: f64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            evaluations: 1000,
            initial_temperature: 10.0,
            evals_per_temp: 10,
            bound: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

pub fn anneal<F, R>(mut f: F, x0: &[f64], cfg: &AnnealConfig, rng: &mut R) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let clamp = |v: f64| v.clamp(-cfg.bound, cfg.bound);
    let mut x: Vec<f64> = x0.iter().map(|v| clamp(*v)).collect();
    let mut y = sanitize(f(&x));
    let mut best = x.clone();
    let mut best_y = y;
    let mut evals = 1;
    let mut trial = x.clone();
    let e1 = core::f64::consts::E - 1.0;
    while evals < cfg.evaluations {
        let temp = cfg.initial_temperature / libm::log(evals as f64 + e1);
        let mut k = 0;
        while k < cfg.evals_per_temp.max(1) && evals < cfg.evaluations {
            for (t, xi) in trial.iter_mut().zip(&x) {
                let z: f64 = StandardNormal.sample(rng);
                *t = clamp(xi + temp * z);
            }
            let yt = sanitize(f(&trial));
            evals += 1;
            k += 1;
            let dy = yt - y;
            if dy <= 0.0 || rng.random::<f64>() < libm::exp(-dy / temp) {
                x.copy_from_slice(&trial);
                y = yt;
                if y <= best_y {
                    best.copy_from_slice(&x);
                    best_y = y;
                }
            }
        }
    }
    Minimum {
        x: best,
        value: best_y,
        evaluations: evals,
        converged: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsConfig {
    pub max_iter: usize,
    pub reltol: f64,
    /// Central-difference step for gradients.
    pub fd_step: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        BfgsConfig {
            max_iter: 100,
            reltol: 1.490_116_119_384_765_6e-8,
            fd_step: 1e-5,
        }
    }
}

/// Central finite-difference gradient.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], h: f64, out: &mut [f64]) -> usize {
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        out[i] = (up - down) / (2.0 * h);
    }
    2 * x.len()
}

/// Quasi-Newton minimization following the classic variable-metric scheme:
/// inverse-Hessian BFGS updates, backtracking with an Armijo test, metric
/// reset when a direction fails to descend.
pub fn bfgs<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], cfg: &BfgsConfig) -> Minimum {
    const ACCTOL: f64 = 1e-4;
    const STEPREDN: f64 = 0.2;
    let n = x0.len();
    let mut b = x0.to_vec();
    let mut fmin = f(&b);
    let mut evals = 1;
    if !fmin.is_finite() || n == 0 {
        return Minimum {
            x: b,
            value: fmin,
            evaluations: evals,
            converged: false,
        };
    }
    let mut g = alloc::vec![0.0; n];
    evals += fd_gradient(&mut f, &b, cfg.fd_step, &mut g);
    let mut h = identity(n);
    let mut iter = 0;
    let mut fresh_metric = true;
    let mut converged = false;
    let mut x = alloc::vec![0.0; n];
    let mut g_new = alloc::vec![0.0; n];
    while iter < cfg.max_iter {
        iter += 1;
        // direction t = -H g
        let t: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>())
            .collect();
        let gradproj: f64 = t.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(gradproj < 0.0) {
            if fresh_metric {
                converged = true;
                break;
            }
            h = identity(n);
            fresh_metric = true;
            continue;
        }
        let mut step = 1.0;
        let mut accepted = None;
        loop {
            let mut unchanged = 0;
            for i in 0..n {
                x[i] = b[i] + step * t[i];
                if x[i] == b[i] {
                    unchanged += 1;
                }
            }
            if unchanged == n {
                break;
            }
            let fx = f(&x);
            evals += 1;
            if fx.is_finite() && fx <= fmin + gradproj * step * ACCTOL {
                accepted = Some(fx);
                break;
            }
            step *= STEPREDN;
        }
        let Some(fx) = accepted else {
            if fresh_metric {
                converged = true;
                break;
            }
            h = identity(n);
            fresh_metric = true;
            continue;
        };
        let small = (fx - fmin).abs() <= cfg.reltol * (fmin.abs() + cfg.reltol);
        evals += fd_gradient(&mut f, &x, cfg.fd_step, &mut g_new);
        let s: Vec<f64> = t.iter().map(|v| v * step).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        b.copy_from_slice(&x);
        fmin = fx;
        g.copy_from_slice(&g_new);
        if small {
            converged = true;
            break;
        }
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 0.0 {
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum::<f64>())
                .collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let coef = (1.0 + yhy / sy) / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += coef * s[i] * s[j] - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
            fresh_metric = false;
        } else {
            h = identity(n);
            fresh_metric = true;
        }
    }
    Minimum {
        x: b,
        value: fmin,
        evaluations: evals,
        converged,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = alloc::vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    pub max_evals: usize,
    /// Initial simplex edge along each axis.
    pub initial_step: f64,
    /// Stop when the spread of simplex values falls below this.
    pub ftol: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig {
            max_evals: 4000,
            initial_step: 0.5,
            ftol: 1e-12,
        }
    }
}

/// Standard Nelder–Mead (reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2).
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], cfg: &NelderMeadConfig) -> Minimum {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        let step = if v[i] != 0.0 {
            cfg.initial_step * v[i].abs().max(1.0)
        } else {
            cfg.initial_step
        };
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| sanitize(f(v))).collect();
    let mut evals = n + 1;
    let mut converged = false;
    let mut centroid = alloc::vec![0.0; n];
    let point = |c: &[f64], w: &[f64], coef: f64| -> Vec<f64> {
        c.iter().zip(w).map(|(ci, wi)| ci + coef * (wi - ci)).collect()
    };
    while evals < cfg.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if (values[n] - values[0]).abs() <= cfg.ftol * (values[0].abs() + cfg.ftol) {
            converged = true;
            break;
        }
        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflected = point(&centroid, &worst, -1.0);
        let fr = sanitize(f(&reflected));
        evals += 1;
        if fr < values[0] {
            let expanded = point(&centroid, &worst, -2.0);
            let fe = sanitize(f(&expanded));
            evals += 1;
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (contracted, fc) = if fr < values[n] {
                let c = point(&centroid, &worst, -0.5);
                let fc = sanitize(f(&c));
                (c, fc)
            } else {
                let c = point(&centroid, &worst, 0.5);
                let fc = sanitize(f(&c));
                (c, fc)
            };
            evals += 1;
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = point(&best, &simplex[i], 0.5);
                    values[i] = sanitize(f(&simplex[i]));
                }
                evals += n;
            }
        }
    }
    let (best, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap_or((0, &0.0));
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        evaluations: evals,
        converged,
    }
}
