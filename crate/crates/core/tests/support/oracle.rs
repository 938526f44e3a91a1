//! Explicit-loop reference implementations of the objectives, written
//! independently of the tape so the vectorised versions can be checked
//! against them.

#![allow(dead_code)]

use graphssl_core::Tensor;

pub struct Weights {
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub p: f64,
    pub hsic: bool,
}

impl Weights {
    pub fn standard(hsic: bool) -> Self {
        Self { lambda: 25.0, mu: 25.0, nu: 1.0, gamma: 1.0, epsilon: 1e-4, p: 2.0, hsic }
    }
}

fn rows(z: &Tensor) -> Vec<Vec<f64>> {
    (0..z.rows()).map(|i| z.row(i).to_vec()).collect()
}

fn column_means(z: &[Vec<f64>]) -> Vec<f64> {
    let d = z[0].len();
    let mut mean = vec![0.0; d];
    for row in z {
        for j in 0..d {
            mean[j] += row[j];
        }
    }
    mean.iter().map(|m| m / z.len() as f64).collect()
}

pub fn invariance(za: &Tensor, zb: &Tensor, p: f64) -> f64 {
    let (a, b) = (rows(za), rows(zb));
    let mut total = 0.0;
    for i in 0..a.len() {
        let mut norm_p = 0.0;
        for j in 0..a[i].len() {
            norm_p += (a[i][j] - b[i][j]).abs().powf(p);
        }
        total += norm_p.powf(1.0 / p).powi(2);
    }
    total / a.len() as f64
}

/// Mean hinge of per-column standard deviations, unbiased variance.
pub fn std_loss(z: &Tensor, gamma: f64, epsilon: f64) -> f64 {
    let z = rows(z);
    let (n, d) = (z.len(), z[0].len());
    let mean = column_means(&z);
    let mut total = 0.0;
    for j in 0..d {
        let mut var = 0.0;
        for row in &z {
            var += (row[j] - mean[j]).powi(2);
        }
        var /= (n - 1) as f64;
        total += (gamma - (var + epsilon).sqrt()).max(0.0);
    }
    total / d as f64
}

/// Centre, then `ZᵀZ / (n − 1)`.
pub fn covariance(z: &Tensor) -> Vec<Vec<f64>> {
    let z = rows(z);
    let (n, d) = (z.len(), z[0].len());
    let mean = column_means(&z);
    let centered: Vec<Vec<f64>> = z
        .iter()
        .map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let mut c = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            for row in &centered {
                c[i][j] += row[i] * row[j];
            }
            c[i][j] /= (n - 1) as f64;
        }
    }
    c
}

pub fn cov_loss(z: &Tensor, hsic: bool) -> f64 {
    let c = covariance(z);
    let d = c.len();
    let shift = if hsic { 1.0 } else { 0.0 };
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                total += (shift + c[i][j]).powi(2);
            }
        }
    }
    total / d as f64
}

pub fn vicreg_family(za: &Tensor, zb: &Tensor, w: &Weights) -> f64 {
    let sim = invariance(za, zb, w.p);
    let std = std_loss(za, w.gamma, w.epsilon) + std_loss(zb, w.gamma, w.epsilon);
    let cov = cov_loss(za, w.hsic) + cov_loss(zb, w.hsic);
    w.lambda * sim + w.mu * std + w.nu * cov
}

fn standardized(z: &Tensor) -> Vec<Vec<f64>> {
    let z = rows(z);
    let (n, d) = (z.len(), z[0].len());
    let mean = column_means(&z);
    let mut sd = vec![0.0; d];
    for row in &z {
        for j in 0..d {
            sd[j] += (row[j] - mean[j]).powi(2) / n as f64;
        }
    }
    z.iter()
        .map(|row| (0..d).map(|j| (row[j] - mean[j]) / sd[j].sqrt()).collect())
        .collect()
}

/// Cross-correlation objective with off-diagonals pulled to `target`.
pub fn cross_correlation_loss(za: &Tensor, zb: &Tensor, weight: f64, target: f64) -> f64 {
    let (a, b) = (standardized(za), standardized(zb));
    let (n, d) = (a.len(), a[0].len());
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut r = 0.0;
            for k in 0..n {
                r += a[k][i] * b[k][j];
            }
            r /= n as f64;
            total += if i == j { (1.0 - r).powi(2) } else { weight * (r - target).powi(2) };
        }
    }
    total
}

pub fn barlow_twins(za: &Tensor, zb: &Tensor, lambda_bt: f64) -> f64 {
    cross_correlation_loss(za, zb, lambda_bt, 0.0)
}

pub fn hsic(za: &Tensor, zb: &Tensor, lambda_bt: f64) -> f64 {
    cross_correlation_loss(za, zb, lambda_bt, -1.0)
}

/// Softmax enumeration over every anchor of the concatenated views.
pub fn nt_xent(za: &Tensor, zb: &Tensor, temperature: f64) -> f64 {
    let mut all = rows(za);
    all.extend(rows(zb));
    let unit: Vec<Vec<f64>> = all
        .iter()
        .map(|r| {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            r.iter().map(|v| v / norm).collect()
        })
        .collect();
    let m = unit.len();
    let n = m / 2;
    let dot = |i: usize, j: usize| unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum::<f64>();
    let mut total = 0.0;
    for i in 0..m {
        let positive = (i + n) % m;
        let denom: f64 = (0..m).filter(|&k| k != i).map(|k| (dot(i, k) / temperature).exp()).sum();
        total -= ((dot(i, positive) / temperature).exp() / denom).ln();
    }
    total / m as f64
}
