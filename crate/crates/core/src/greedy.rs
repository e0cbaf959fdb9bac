//! Profit-aware greedy re-ranking and the two purchase models.
//!
//! The re-ranker takes a relevance-sorted candidate list and pushes the
//! highest-margin items to the top, as long as their predicted rating clears
//! a minimum threshold. Expected profit per user follows one of two purchase
//! models: every user picks one recommendation (guaranteed), or purchase
//! probability decays exponentially with predicted relevance.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use crate::dataset::{EconomicsTable, RatingScale, RatingsDataset};
use crate::error::{Error, Result};
use crate::metrics::{f1_at, ndcg_at};
use crate::mf::{FactorModel, RankedList};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RerankConfig {
    /// Minimum predicted rating an item needs to be eligible for promotion.
    pub threshold: f64,
    /// Output list length N.
    pub list_size: usize,
}

impl RerankConfig {
    pub fn validate(&self, scale: RatingScale) -> Result<()> {
        if self.list_size < 1 {
            return Err(Error::Config("list_size must be >= 1".into()));
        }
        if !scale.contains(self.threshold) {
            return Err(Error::Config(format!(
                "threshold {} outside rating scale [{}, {}]",
                self.threshold, scale.min, scale.max
            )));
        }
        Ok(())
    }
}

/// How recommended items convert into purchases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PurchaseModel {
    /// The user always picks exactly one of the recommended items, uniformly.
    Guaranteed,
    /// Purchase probability decays exponentially as the predicted rating
    /// falls below the scale maximum.
    Decay { alpha: f64, base_prob: f64 },
}

impl PurchaseModel {
    pub fn decay_default() -> Self {
        PurchaseModel::Decay {
            alpha: -1.5,
            base_prob: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let PurchaseModel::Decay { alpha, base_prob } = self {
            if *alpha >= 0.0 {
                return Err(Error::Config("decay alpha must be negative".into()));
            }
            if !(*base_prob > 0.0 && *base_prob <= 1.0) {
                return Err(Error::Config("decay base_prob must be in (0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Probability that an item with predicted rating `r` is purchased. Under the
/// decay model this is `base_prob * exp(alpha * (scale_max - r))`, clamped to
/// [0, 1].
pub fn purchase_probability(r: f64, model: &PurchaseModel, scale: RatingScale) -> f64 {
    match model {
        PurchaseModel::Guaranteed => 1.0,
        PurchaseModel::Decay { alpha, base_prob } => {
            (base_prob * (alpha * (scale.max - r)).exp()).clamp(0.0, 1.0)
        }
    }
}

/// Re-sorts a relevance-sorted candidate list by margin among the items whose
/// predicted rating clears the threshold, keeping the top N. When fewer than
/// N items are eligible, the remaining slots are filled in relevance order
/// from the ineligible items so the list length stays fixed.
pub fn rerank_by_profit(
    relevance_list: &RankedList,
    econ: &EconomicsTable,
    cfg: &RerankConfig,
) -> RankedList {
    let (mut eligible, ineligible): (Vec<_>, Vec<_>) = relevance_list
        .items
        .iter()
        .copied()
        .partition(|it| it.pred_rating >= cfg.threshold);
    eligible.sort_by(|a, b| {
        econ.margin(b.item)
            .total_cmp(&econ.margin(a.item))
            .then(b.pred_rating.total_cmp(&a.pred_rating))
            .then(a.item.cmp(&b.item))
    });
    let mut items = Vec::with_capacity(cfg.list_size.min(relevance_list.items.len()));
    items.extend(eligible.into_iter().take(cfg.list_size));
    if items.len() < cfg.list_size {
        items.extend(ineligible.into_iter().take(cfg.list_size - items.len()));
    }
    RankedList {
        user: relevance_list.user,
        items,
        truncated: relevance_list.truncated || cfg.list_size > relevance_list.items.len(),
    }
}

/// Expected profit of one recommendation list.
///
/// Guaranteed purchases pick one list item uniformly, so the expectation is
/// the mean margin; decay purchases are independent per item, so it is the
/// probability-weighted margin sum. An empty list earns zero.
pub fn expected_profit_per_user(
    list: &RankedList,
    econ: &EconomicsTable,
    model: &PurchaseModel,
    scale: RatingScale,
) -> f64 {
    if list.items.is_empty() {
        return 0.0;
    }
    match model {
        PurchaseModel::Guaranteed => {
            let total: f64 = list.items.iter().map(|it| econ.margin(it.item)).sum();
            total / list.items.len() as f64
        }
        PurchaseModel::Decay { .. } => list
            .items
            .iter()
            .map(|it| purchase_probability(it.pred_rating, model, scale) * econ.margin(it.item))
            .sum(),
    }
}

/// One row of a threshold sweep; `threshold = None` is the no-rerank baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSweepRow {
    pub threshold: Option<f64>,
    pub avg_profit: f64,
    pub f1_at_n: f64,
    pub ndcg_at_n: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepConfig {
    pub list_size: usize,
    pub relevance_threshold: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            list_size: 10,
            relevance_threshold: 4.0,
        }
    }
}

/// Evaluates profit and accuracy across a grid of re-ranking thresholds,
/// plus the no-rerank baseline as the first row.
///
/// Test users are the users holding at least one record in `test_records`.
/// Per user, candidates are all items outside the user's training records.
/// Per-user work parallelizes; reductions run in fixed user order.
#[allow(clippy::too_many_arguments)]
pub fn sweep_threshold(
    ds: &RatingsDataset,
    model: &FactorModel,
    econ: &EconomicsTable,
    grid: &[f64],
    purchase: &PurchaseModel,
    train_records: &[u32],
    test_records: &[u32],
    cfg: &SweepConfig,
) -> Result<Vec<ThresholdSweepRow>> {
    if grid.is_empty() {
        return Err(Error::Config("threshold grid must be non-empty".into()));
    }
    purchase.validate()?;
    let scale = ds.scale();
    let interactions = ds.interactions();

    let mut train_items: Vec<HashSet<u32>> = vec![HashSet::new(); ds.n_users()];
    for &r in train_records {
        let rec = &interactions[r as usize];
        train_items[rec.user as usize].insert(rec.item);
    }
    let mut relevant: HashMap<u32, HashSet<u32>> = HashMap::new();
    let mut test_users: Vec<u32> = Vec::new();
    for &r in test_records {
        let rec = &interactions[r as usize];
        if !test_users.contains(&rec.user) {
            test_users.push(rec.user);
        }
        if rec.rating >= cfg.relevance_threshold {
            relevant.entry(rec.user).or_default().insert(rec.item);
        }
    }
    test_users.sort_unstable();

    // per user: profit and optional (f1, ndcg) for baseline + each grid point
    let per_user: Vec<Vec<(f64, Option<(f64, f64)>)>> = test_users
        .par_iter()
        .map(|&user| {
            let candidates: Vec<u32> = (0..ds.n_items() as u32)
                .filter(|i| !train_items[user as usize].contains(i))
                .collect();
            let full = crate::mf::top_n(model, user, &candidates, candidates.len(), scale)
                .expect("indices in range");
            let empty = HashSet::new();
            let rel = relevant.get(&user).unwrap_or(&empty);
            let evaluate = |list: &RankedList| {
                let profit = expected_profit_per_user(list, econ, purchase, scale);
                let items: Vec<u32> = list.items.iter().map(|it| it.item).collect();
                let quality = f1_at(&items, rel, cfg.list_size).map(|f1| {
                    let grades: Vec<f64> = items
                        .iter()
                        .map(|i| if rel.contains(i) { 1.0 } else { 0.0 })
                        .collect();
                    let all = vec![1.0; rel.len()];
                    (f1, ndcg_at(&grades, &all, cfg.list_size))
                });
                (profit, quality)
            };
            let mut rows = Vec::with_capacity(grid.len() + 1);
            let baseline = RankedList {
                user,
                items: full.items.iter().copied().take(cfg.list_size).collect(),
                truncated: cfg.list_size > full.items.len(),
            };
            rows.push(evaluate(&baseline));
            for &threshold in grid {
                let reranked = rerank_by_profit(
                    &full,
                    econ,
                    &RerankConfig {
                        threshold,
                        list_size: cfg.list_size,
                    },
                );
                rows.push(evaluate(&reranked));
            }
            rows
        })
        .collect();

    let n_rows = grid.len() + 1;
    let mut out = Vec::with_capacity(n_rows);
    for row in 0..n_rows {
        let mut profit = 0.0;
        let mut f1 = 0.0;
        let mut ndcg = 0.0;
        let mut quality_n = 0usize;
        for user_rows in &per_user {
            let (p, q) = user_rows[row];
            profit += p;
            if let Some((f, g)) = q {
                f1 += f;
                ndcg += g;
                quality_n += 1;
            }
        }
        let users = per_user.len().max(1) as f64;
        out.push(ThresholdSweepRow {
            threshold: if row == 0 { None } else { Some(grid[row - 1]) },
            avg_profit: profit / users,
            f1_at_n: if quality_n > 0 { f1 / quality_n as f64 } else { 0.0 },
            ndcg_at_n: if quality_n > 0 { ndcg / quality_n as f64 } else { 0.0 },
        });
    }
    Ok(out)
}

/// Renders sweep rows as the report CSV, baseline row labelled "none".
pub fn sweep_to_csv(rows: &[ThresholdSweepRow]) -> String {
    let mut out = String::from("threshold,avg_profit,f1_at_n,ndcg_at_n\n");
    for row in rows {
        let t = match row.threshold {
            Some(t) => format!("{t}"),
            None => "none".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{}\n",
            t, row.avg_profit, row.f1_at_n, row.ndcg_at_n
        ));
    }
    out
}
