//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

/// Uniform draw from the `k`-simplex, every entry strictly positive.
pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            e + 1e-12
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// `Σ p_i ln(p_i o_i)`, the rate of betting `b = p`.
pub fn proportional_rate(p: &[f64], odds: &[f64]) -> f64 {
    p.iter()
        .zip(odds)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &oi)| pi * (pi * oi).ln())
        .sum()
}

/// `Σ_{x,y} p(x,y) ln(p(x,y) / (p(x) p(y)))` summed term by term.
pub fn mutual_information(joint: &[Vec<f64>]) -> f64 {
    let px: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let cols = joint[0].len();
    let py: Vec<f64> = (0..cols).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &pxy) in row.iter().enumerate() {
            if pxy > 0.0 {
                mi += pxy * (pxy / (px[i] * py[j])).ln();
            }
        }
    }
    mi
}

/// Softmax by direct exponentiation; fine for moderate logits.
pub fn naive_softmax(z: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = z.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `−ln(p̂_y + p̂_{m+1}/o)` for a single row of logits.
pub fn naive_gambler_loss(z: &[f64], label: usize, o: f64) -> f64 {
    let p = naive_softmax(z);
    -(p[label] + p[p.len() - 1] / o).ln()
}

/// `−ln(o·p̂_y + p̂_{m+1})` for a single row of logits.
pub fn naive_scaled_gambler_loss(z: &[f64], label: usize, o: f64) -> f64 {
    let p = naive_softmax(z);
    -(o * p[label] + p[p.len() - 1]).ln()
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let s: f64 = rand_distr::StandardNormal.sample(rng);
            s * scale
        })
        .collect()
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `$DG_DATA_DIR`, else `data/mnist` at the workspace root.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("DG_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

pub fn require_mnist() -> PathBuf {
    let dir = mnist_dir();
    assert!(
        dir.join("t10k-images-idx3-ubyte").is_file(),
        "MNIST IDX files not found in {}; run scripts/fetch_mnist.sh or set DG_DATA_DIR",
        dir.display()
    );
    dir
}
