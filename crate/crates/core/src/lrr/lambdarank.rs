//! LambdaRank surrogate loss: logistic pair losses weighted by the NDCG cost
//! of swapping the pair.

use crate::error::{Error, Result};

use super::kendall::ranks_desc;

/// NDCG cost of exchanging two items:
/// `(2^y_i - 2^y_j) * (ln(1+rank_i) - ln(1+rank_j))`.
///
/// Natural logarithm, as in the loss this weights; the evaluation-side NDCG
/// in the metrics module uses the conventional log2 discount instead.
pub fn delta_ndcg(y_i: f64, y_j: f64, rank_i: usize, rank_j: usize) -> f64 {
    (y_i.exp2() - y_j.exp2()) * ((1.0 + rank_i as f64).ln() - (1.0 + rank_j as f64).ln())
}

/// Numerically stable `ln(1 + exp(x))`.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn check_lengths(y: &[f64], u: &[f64]) -> Result<usize> {
    if y.len() != u.len() {
        return Err(Error::Contract(format!(
            "grades and scores differ in length: {} vs {}",
            y.len(),
            u.len()
        )));
    }
    Ok(y.len())
}

/// Sum over ordered pairs with `y_i >= y_j` of
/// `ln(1 + exp(-theta (u_i - u_j))) * |delta_ndcg(i, j)|`, with ranks taken
/// from the current scores. Finite and non-negative.
pub fn lambdarank_loss(y: &[f64], u: &[f64], theta: f64) -> Result<f64> {
    let n = check_lengths(y, u)?;
    if n < 2 {
        return Ok(0.0);
    }
    let ranks = ranks_desc(u);
    let mut loss = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j || y[i] < y[j] {
                continue;
            }
            let delta = delta_ndcg(y[i], y[j], ranks[i], ranks[j]).abs();
            if delta == 0.0 {
                continue;
            }
            loss += softplus(-theta * (u[i] - u[j])) * delta;
        }
    }
    Ok(loss)
}

/// Gradient of [`lambdarank_loss`] with respect to the scores, holding the
/// ranks inside the delta terms fixed (standard LambdaRank practice; the
/// loss itself is re-evaluated with fresh ranks each optimizer iteration).
pub fn lambdarank_gradient(y: &[f64], u: &[f64], theta: f64) -> Result<Vec<f64>> {
    let n = check_lengths(y, u)?;
    let mut grad = vec![0.0; n];
    if n < 2 {
        return Ok(grad);
    }
    let ranks = ranks_desc(u);
    for i in 0..n {
        for j in 0..n {
            if i == j || y[i] < y[j] {
                continue;
            }
            let delta = delta_ndcg(y[i], y[j], ranks[i], ranks[j]).abs();
            if delta == 0.0 {
                continue;
            }
            // d/du_i softplus(-theta (u_i - u_j)) = -theta sigma(-theta (u_i - u_j))
            let g = -theta / (1.0 + (theta * (u[i] - u[j])).exp()) * delta;
            grad[i] += g;
            grad[j] -= g;
        }
    }
    Ok(grad)
}

/// Buckets margins into `n_grades` equal-frequency grades `0..n_grades-1`
/// over the pooled corpus, so the exponential NDCG gains stay bounded.
/// Boundary values are quantiles; equal margins always get equal grades.
pub fn grade_margins(all_margins: &[f64], n_grades: usize) -> Vec<f64> {
    assert!(n_grades >= 2, "need at least two grades");
    let mut sorted: Vec<f64> = all_margins.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let boundaries: Vec<f64> = (1..n_grades)
        .map(|g| sorted[g * sorted.len() / n_grades])
        .collect();
    all_margins
        .iter()
        .map(|&m| boundaries.iter().filter(|&&b| m >= b).count() as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn delta_ndcg_zero_cases() {
        assert_eq!(delta_ndcg(2.0, 2.0, 1, 5), 0.0);
        assert_eq!(delta_ndcg(3.0, 1.0, 4, 4), 0.0);
    }

    #[test]
    fn delta_ndcg_worked_example() {
        // (2^1 - 2^0)(ln 2 - ln 3)
        assert_relative_eq!(
            delta_ndcg(1.0, 0.0, 1, 2),
            2f64.ln() - 3f64.ln(),
            epsilon = 1e-12
        );
        assert_relative_eq!(delta_ndcg(1.0, 0.0, 1, 2), -0.405465, epsilon = 1e-6);
    }

    #[test]
    fn loss_empty_and_single() {
        assert_eq!(lambdarank_loss(&[], &[], 1.0).unwrap(), 0.0);
        assert_eq!(lambdarank_loss(&[1.0], &[0.3], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn loss_worked_example() {
        // y = (1, 0), u = (2, 1), theta = 1:
        // ln(1 + e^-1) * |(2-1)(ln2 - ln3)|
        let loss = lambdarank_loss(&[1.0, 0.0], &[2.0, 1.0], 1.0).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln() * (3.0f64 / 2.0).ln();
        assert_relative_eq!(loss, expected, epsilon = 1e-12);
        assert_relative_eq!(loss, 0.127017, epsilon = 1e-6);
    }

    #[test]
    fn loss_invariant_to_constant_shift() {
        let y = [2.0, 0.0, 1.0, 1.0];
        let u = [0.4, -0.2, 1.1, 0.3];
        let shifted: Vec<f64> = u.iter().map(|x| x + 17.5).collect();
        assert_relative_eq!(
            lambdarank_loss(&y, &u, 2.0).unwrap(),
            lambdarank_loss(&y, &shifted, 2.0).unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn loss_mismatched_lengths_error() {
        assert!(lambdarank_loss(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn gradient_zero_for_uniform_grades() {
        let g = lambdarank_gradient(&[1.0, 1.0, 1.0], &[0.5, 0.2, 0.9], 1.0).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gradient_two_item_antisymmetry() {
        let y = [1.0, 0.0];
        let u = [2.0, 1.0];
        let theta = 1.3;
        let g = lambdarank_gradient(&y, &u, theta).unwrap();
        let delta = delta_ndcg(1.0, 0.0, 1, 2).abs();
        let expected = -theta / (1.0 + (theta * 1.0).exp()) * delta;
        assert_relative_eq!(g[0], expected, epsilon = 1e-12);
        assert_relative_eq!(g[0] + g[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences_with_frozen_ranks() {
        // central differences of the loss with ranks frozen at the base point
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-6;
        for _ in 0..50 {
            let n = 10;
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..4) as f64).collect();
            let mut u: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let ranks = ranks_desc(&u);
            let frozen_loss = |u: &[f64]| -> f64 {
                let mut loss = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        if i == j || y[i] < y[j] {
                            continue;
                        }
                        let delta = delta_ndcg(y[i], y[j], ranks[i], ranks[j]).abs();
                        if delta == 0.0 {
                            continue;
                        }
                        loss += softplus(-1.7 * (u[i] - u[j])) * delta;
                    }
                }
                loss
            };
            let grad = lambdarank_gradient(&y, &u, 1.7).unwrap();
            for k in 0..n {
                let orig = u[k];
                u[k] = orig + h;
                let up = frozen_loss(&u);
                u[k] = orig - h;
                let down = frozen_loss(&u);
                u[k] = orig;
                let numeric = (up - down) / (2.0 * h);
                if numeric.abs() < 1e-9 && grad[k].abs() < 1e-9 {
                    continue;
                }
                let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs());
                assert!(rel < 1e-4, "coord {k}: {} vs {numeric} (rel {rel:.2e})", grad[k]);
            }
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_relative_eq!(softplus(0.0), 2f64.ln());
        assert_relative_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!(softplus(-800.0) < 1e-300);
    }

    #[test]
    fn margin_grades_equal_frequency() {
        let margins: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let grades = grade_margins(&margins, 5);
        for g in 0..5 {
            let count = grades.iter().filter(|&&x| x == g as f64).count();
            assert_eq!(count, 20, "grade {g}");
        }
        // equal margins always share a grade
        let grades = grade_margins(&[1.0, 1.0, 1.0, 2.0], 2);
        assert_eq!(grades[0], grades[1]);
        assert_eq!(grades[0], grades[2]);
    }
}
