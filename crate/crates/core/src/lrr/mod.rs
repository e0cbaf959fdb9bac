//! Value-aware learning-to-re-rank.
//!
//! Starting from a base relevance ranking, a composite score adds
//! price and commission terms whose weight function beta is learned by
//! gradient descent on a LambdaRank loss over margin grades, regularized by a
//! kernelized Kendall tau that keeps the new ranking close to the original.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ndcg_at;
use crate::mf::{sort_ranked, RankedItem, RankedList};

pub mod kendall;
pub mod lambdarank;

pub use kendall::{
    kendall_kernel, kendall_kernel_gradient, kendall_tau_exact, phi_map, phi_smooth, ranks_desc,
};
pub use lambdarank::{delta_ndcg, grade_margins, lambdarank_gradient, lambdarank_loss};

/// Floor of the (0, 1] range base scores are normalized onto.
pub const SCORE_EPSILON: f64 = 1e-3;

/// Hyperparameters and learned weights of the re-ranking objective.
///
/// `beta_weights` parameterizes the linear weight function
/// `beta(x, m) = w . [x; ln m] + bias`; everything else is fixed during
/// training. The rank loss and the smooth embedding carry separate
/// temperatures since they play different roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrrParams {
    pub alpha: f64,
    /// Weights over `[item features..., ln margin]`.
    pub beta_weights: Vec<f64>,
    pub beta_bias: f64,
    pub gamma: f64,
    pub theta_rank: f64,
    pub theta_smooth: f64,
    pub margin_grades: usize,
}

impl LrrParams {
    /// Zero-initialized beta over `n_features` item features plus the margin
    /// term.
    pub fn new(alpha: f64, gamma: f64, n_features: usize) -> Self {
        LrrParams {
            alpha,
            beta_weights: vec![0.0; n_features + 1],
            beta_bias: 0.0,
            gamma,
            theta_rank: 1.0,
            theta_smooth: 10.0,
            margin_grades: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 {
            return Err(Error::Config("gamma must be >= 0".into()));
        }
        if self.theta_rank <= 0.0 || self.theta_smooth <= 0.0 {
            return Err(Error::Config("theta parameters must be > 0".into()));
        }
        if self.margin_grades < 2 {
            return Err(Error::Config("margin_grades must be >= 2".into()));
        }
        Ok(())
    }

    pub fn beta(&self, features: &[f64], margin: f64) -> f64 {
        debug_assert_eq!(self.beta_weights.len(), features.len() + 1);
        let mut value = self.beta_bias;
        for (w, x) in self.beta_weights.iter().zip(features) {
            value += w * x;
        }
        value + self.beta_weights[features.len()] * margin.ln()
    }
}

/// One user's candidate list with everything the objective needs.
#[derive(Debug, Clone)]
pub struct ListData {
    pub user: u32,
    pub items: Vec<u32>,
    /// Base relevance scores normalized to (0, 1].
    pub u: Vec<f64>,
    /// Clamped base predicted ratings, carried through to re-ranked output.
    pub pred_rating: Vec<f64>,
    pub price: Vec<f64>,
    pub margin: Vec<f64>,
    pub features: Vec<Vec<f64>>,
    /// Equal-frequency margin grades; fill via [`assign_margin_grades`].
    pub margin_grade: Vec<f64>,
}

impl ListData {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Min-max maps scores onto `[SCORE_EPSILON, 1]`; a constant vector maps to
/// all ones.
pub fn normalize_scores(scores: &[f64]) -> Vec<f64> {
    let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max - min).is_normal() {
        return vec![1.0; scores.len()];
    }
    scores
        .iter()
        .map(|s| SCORE_EPSILON + (1.0 - SCORE_EPSILON) * (s - min) / (max - min))
        .collect()
}

/// Buckets margins into the configured number of equal-frequency grades over
/// the pooled corpus.
pub fn assign_margin_grades(batch: &mut [ListData], n_grades: usize) {
    let all: Vec<f64> = batch.iter().flat_map(|l| l.margin.iter().copied()).collect();
    if all.is_empty() {
        return;
    }
    let graded = grade_margins(&all, n_grades);
    let mut cursor = 0;
    for list in batch.iter_mut() {
        list.margin_grade = graded[cursor..cursor + list.len()].to_vec();
        cursor += list.len();
    }
}

/// The composite score `u'_i = ln(u_i) + alpha ln(p_i) + beta(x_i, m_i) ln(m_i / p_i)`.
pub fn composite_score(list: &ListData, params: &LrrParams) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(list.len());
    for i in 0..list.len() {
        let (u, p, m) = (list.u[i], list.price[i], list.margin[i]);
        if u <= 0.0 || p <= 0.0 || m <= 0.0 {
            return Err(Error::Contract(format!(
                "composite score needs positive u, price, margin; item {} has ({u}, {p}, {m})",
                list.items[i]
            )));
        }
        let beta = params.beta(&list.features[i], m);
        out.push(u.ln() + params.alpha * p.ln() + beta * (m / p).ln());
    }
    Ok(out)
}

/// The training objective summed over lists:
/// rank loss of the margin grades under the composite scores, plus
/// `gamma * (1 - kernel(u, u'))`. Lists shorter than two items contribute
/// nothing (no pairs).
pub fn lrr_loss(batch: &[ListData], params: &LrrParams) -> Result<f64> {
    params.validate()?;
    let mut total = 0.0;
    for list in batch {
        if list.len() < 2 {
            continue;
        }
        let u_prime = composite_score(list, params)?;
        let rank_loss = lambdarank_loss(&list.margin_grade, &u_prime, params.theta_rank)?;
        let kernel = kendall_kernel(&list.u, &u_prime, params.theta_smooth)?;
        total += rank_loss + params.gamma * (1.0 - kernel);
    }
    if !total.is_finite() {
        return Err(Error::Contract("non-finite re-ranking loss".to_string()));
    }
    Ok(total)
}

/// Gradient of [`lrr_loss`] with respect to the beta weights and bias, with
/// ranks inside the NDCG deltas held fixed.
pub fn lrr_beta_gradient(batch: &[ListData], params: &LrrParams) -> Result<(Vec<f64>, f64)> {
    let n_weights = params.beta_weights.len();
    let mut grad_w = vec![0.0; n_weights];
    let mut grad_b = 0.0;
    for list in batch {
        if list.len() < 2 {
            continue;
        }
        let u_prime = composite_score(list, params)?;
        let rank_grad = lambdarank_gradient(&list.margin_grade, &u_prime, params.theta_rank)?;
        let kernel_grad = kendall_kernel_gradient(&list.u, &u_prime, params.theta_smooth)?;
        for i in 0..list.len() {
            let du = rank_grad[i] - params.gamma * kernel_grad[i];
            let commission_term = (list.margin[i] / list.price[i]).ln();
            let chain = du * commission_term;
            for (k, x) in list.features[i].iter().enumerate() {
                grad_w[k] += chain * x;
            }
            grad_w[n_weights - 1] += chain * list.margin[i].ln();
            grad_b += chain;
        }
    }
    Ok((grad_w, grad_b))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LrrOptimizerConfig {
    pub step_size: f64,
    pub iters: usize,
    /// Echoed into logs; the full-batch optimizer itself is deterministic.
    pub seed: u64,
}

impl Default for LrrOptimizerConfig {
    fn default() -> Self {
        LrrOptimizerConfig {
            step_size: 0.05,
            iters: 80,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LrrLogRow {
    pub iter: usize,
    pub loss: f64,
    pub mean_tau: f64,
    pub margin_ndcg: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LrrTrainLog {
    pub rows: Vec<LrrLogRow>,
}

impl LrrTrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,loss,mean_tau,margin_ndcg\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.iter, r.loss, r.mean_tau, r.margin_ndcg
            ));
        }
        out
    }
}

/// Mean exact tau between base and composite rankings over the batch.
pub fn mean_tau(batch: &[ListData], params: &LrrParams) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for list in batch {
        if list.len() < 2 {
            continue;
        }
        let u_prime = composite_score(list, params)?;
        total += kendall_tau_exact(&list.u, &u_prime)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Contract("no lists with two or more items".into()));
    }
    Ok(total / count as f64)
}

/// Mean NDCG@n of the margin grades under a ranking of each list. Pass
/// `params = None` to evaluate the base ranking `u` itself.
pub fn mean_margin_ndcg(batch: &[ListData], params: Option<&LrrParams>, n: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for list in batch {
        if list.len() < 2 {
            continue;
        }
        let scores = match params {
            Some(p) => composite_score(list, p)?,
            None => list.u.clone(),
        };
        let order = order_desc(&scores);
        let graded: Vec<f64> = order.iter().map(|&i| list.margin_grade[i]).collect();
        total += ndcg_at(&graded, &list.margin_grade, n);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Contract("no lists with two or more items".into()));
    }
    Ok(total / count as f64)
}

fn order_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Full-batch gradient descent on the beta weights with backtracking steps,
/// so the recorded loss is non-increasing; stalls stop early. Alpha, gamma,
/// and the temperatures stay fixed throughout.
pub fn train_lrr(
    batch: &[ListData],
    init: LrrParams,
    cfg: &LrrOptimizerConfig,
) -> Result<(LrrParams, LrrTrainLog)> {
    init.validate()?;
    let batch: Vec<&ListData> = batch.iter().filter(|l| l.len() >= 2).collect();
    if batch.is_empty() {
        return Err(Error::Contract(
            "training needs at least one list with two or more items".to_string(),
        ));
    }
    let owned: Vec<ListData> = batch.into_iter().cloned().collect();
    for list in &owned {
        if list.margin_grade.len() != list.len() {
            return Err(Error::Contract(
                "margin grades missing; call assign_margin_grades first".to_string(),
            ));
        }
        if list.features.iter().any(|x| x.len() + 1 != init.beta_weights.len()) {
            return Err(Error::Contract(
                "feature width does not match beta weight count".to_string(),
            ));
        }
    }
    let mut params = init;
    let mut log = LrrTrainLog::default();
    let mut loss = lrr_loss(&owned, &params)?;
    log.rows.push(LrrLogRow {
        iter: 0,
        loss,
        mean_tau: mean_tau(&owned, &params)?,
        margin_ndcg: mean_margin_ndcg(&owned, Some(&params), 10)?,
    });
    let mut step = cfg.step_size;
    for iter in 1..=cfg.iters {
        let (grad_w, grad_b) = lrr_beta_gradient(&owned, &params)?;
        let grad_norm: f64 = grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b;
        if grad_norm.sqrt() < 1e-12 {
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut candidate = params.clone();
            for (w, g) in candidate.beta_weights.iter_mut().zip(&grad_w) {
                *w -= step * g;
            }
            candidate.beta_bias -= step * grad_b;
            let candidate_loss = lrr_loss(&owned, &candidate)?;
            if !candidate_loss.is_finite() {
                return Err(Error::Training {
                    epoch: iter,
                    msg: "non-finite loss during re-rank training".to_string(),
                });
            }
            if candidate_loss <= loss {
                params = candidate;
                loss = candidate_loss;
                accepted = true;
                step = (step * 1.25).min(cfg.step_size * 64.0);
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        log.rows.push(LrrLogRow {
            iter,
            loss,
            mean_tau: mean_tau(&owned, &params)?,
            margin_ndcg: mean_margin_ndcg(&owned, Some(&params), 10)?,
        });
    }
    Ok((params, log))
}

/// Top-n of one list by composite score, standard tie-break.
pub fn rerank_lrr(list: &ListData, params: &LrrParams, n: usize) -> Result<RankedList> {
    let u_prime = composite_score(list, params)?;
    let mut items: Vec<RankedItem> = (0..list.len())
        .map(|i| RankedItem {
            item: list.items[i],
            score: u_prime[i],
            pred_rating: list.pred_rating[i],
        })
        .collect();
    sort_ranked(&mut items);
    let truncated = n > items.len();
    items.truncate(n);
    Ok(RankedList {
        user: list.user,
        items,
        truncated,
    })
}
