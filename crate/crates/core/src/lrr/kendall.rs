//! Exact and kernelized Kendall tau over score vectors.
//!
//! The exact correlation counts concordant versus discordant pairs on the
//! rank function (1-based, descending scores, ties broken by ascending
//! index). The kernel variant embeds one ranking with the hard pair-sign map
//! `phi` and the other with its sigmoid-smoothed counterpart `phi_smooth`,
//! so the smooth side stays differentiable for gradient-based training.
//!
//! Sign convention: entries are positive when item i outranks item j (higher
//! score), which makes the self-kernel of a tie-free vector approach 1.

use crate::error::{Error, Result};

/// 1-based ranks of scores sorted descending, ties broken by ascending index.
pub fn ranks_desc(u: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..u.len()).collect();
    idx.sort_by(|&a, &b| u[b].total_cmp(&u[a]).then(a.cmp(&b)));
    let mut ranks = vec![0usize; u.len()];
    for (pos, &i) in idx.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

fn check_pair_lengths(u: &[f64], u_prime: &[f64]) -> Result<usize> {
    if u.len() != u_prime.len() {
        return Err(Error::Contract(format!(
            "score vectors differ in length: {} vs {}",
            u.len(),
            u_prime.len()
        )));
    }
    if u.len() < 2 {
        return Err(Error::Contract(
            "Kendall tau needs at least two items".to_string(),
        ));
    }
    Ok(u.len())
}

/// `(concordant - discordant) / (n(n-1)/2)` over the tie-broken rank
/// functions of the two score vectors. Bounded in [-1, 1] and symmetric.
pub fn kendall_tau_exact(u: &[f64], u_prime: &[f64]) -> Result<f64> {
    let n = check_pair_lengths(u, u_prime)?;
    let r = ranks_desc(u);
    let r_prime = ranks_desc(u_prime);
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let a = r[i] as i64 - r[j] as i64;
            let b = r_prime[i] as i64 - r_prime[j] as i64;
            if a * b > 0 {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok((concordant - discordant) as f64 / pairs)
}

/// Hard pair-sign embedding: one entry per pair (i, j), i < j, in
/// lexicographic order, equal to `sign(u_i - u_j) / sqrt(n(n-1)/2)`.
/// Tied pairs contribute 0.
pub fn phi_map(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let pairs = n * (n - 1) / 2;
    let norm = 1.0 / (pairs as f64).sqrt();
    let mut out = Vec::with_capacity(pairs);
    for i in 0..n {
        for j in i + 1..n {
            let sign = (u[i] > u[j]) as i32 - (u[i] < u[j]) as i32;
            out.push(sign as f64 * norm);
        }
    }
    out
}

fn sigmoid(x: f64, theta: f64) -> f64 {
    1.0 / (1.0 + (-theta * x).exp())
}

/// Sigmoid-smoothed pair embedding with entries
/// `(sigma(u_i - u_j) - sigma(u_j - u_i)) / sqrt(n(n-1)/2)` where
/// `sigma(x) = 1/(1+exp(-theta x))`. Converges entrywise to [`phi_map`] as
/// theta grows.
pub fn phi_smooth(u: &[f64], theta: f64) -> Vec<f64> {
    let n = u.len();
    let pairs = n * (n - 1) / 2;
    let norm = 1.0 / (pairs as f64).sqrt();
    let mut out = Vec::with_capacity(pairs);
    for i in 0..n {
        for j in i + 1..n {
            let d = u[i] - u[j];
            out.push((sigmoid(d, theta) - sigmoid(-d, theta)) * norm);
        }
    }
    out
}

/// Kernelized Kendall tau: `phi(u) . phi_smooth(u_prime)`. The smooth side is
/// the differentiable side, so gradients flow through `u_prime` only.
pub fn kendall_kernel(u: &[f64], u_prime: &[f64], theta: f64) -> Result<f64> {
    check_pair_lengths(u, u_prime)?;
    Ok(phi_map(u)
        .iter()
        .zip(phi_smooth(u_prime, theta))
        .map(|(a, b)| a * b)
        .sum())
}

/// Gradient of [`kendall_kernel`] with respect to `u_prime`.
pub fn kendall_kernel_gradient(u: &[f64], u_prime: &[f64], theta: f64) -> Result<Vec<f64>> {
    let n = check_pair_lengths(u, u_prime)?;
    let pairs = n * (n - 1) / 2;
    let norm = 1.0 / (pairs as f64).sqrt();
    let phi = phi_map(u);
    let mut grad = vec![0.0; n];
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            let d = u_prime[i] - u_prime[j];
            let s = sigmoid(d, theta);
            // d/dd of (sigma(d) - sigma(-d)) = 2 theta sigma(d)(1 - sigma(d))
            let slope = 2.0 * theta * s * (1.0 - s) * norm;
            grad[i] += phi[k] * slope;
            grad[j] -= phi[k] * slope;
            k += 1;
        }
    }
    Ok(grad)
}
