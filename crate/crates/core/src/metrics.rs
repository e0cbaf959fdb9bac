//! Stakeholder evaluation suite: consumer accuracy metrics, provider counts
//! (exposure, hits, reach, target reach, per-provider accuracy), the system
//! fairness ratio, and distribution-moment reporting.
//!
//! All operations are pure functions over immutable contexts.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::mf::RankedList;

/// One held-out rating with the model's (clamped) prediction for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestRating {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
    pub predicted: f64,
}

/// Everything needed to evaluate one set of recommendation lists.
#[derive(Debug, Clone)]
pub struct EvalContext {
    /// One recommendation list per evaluated user.
    pub lists: Vec<RankedList>,
    /// Held-out ratings with predictions.
    pub test: Vec<TestRating>,
    /// Ratings at or above this count as relevant.
    pub relevance_threshold: f64,
    /// Item index -> provider id.
    pub provider_of: Vec<u32>,
    pub n_providers: u32,
    /// Per-provider target user set; `None` means every user is targeted.
    pub targets: Vec<Option<HashSet<u32>>>,
    test_lookup: HashMap<(u32, u32), (f64, f64)>,
}

impl EvalContext {
    pub fn new(
        lists: Vec<RankedList>,
        test: Vec<TestRating>,
        relevance_threshold: f64,
        provider_of: Vec<u32>,
        n_providers: u32,
        targets: Vec<Option<HashSet<u32>>>,
    ) -> Self {
        assert_eq!(targets.len(), n_providers as usize);
        let test_lookup = test
            .iter()
            .map(|t| ((t.user, t.item), (t.rating, t.predicted)))
            .collect();
        EvalContext {
            lists,
            test,
            relevance_threshold,
            provider_of,
            n_providers,
            targets,
            test_lookup,
        }
    }

    pub fn n_lists(&self) -> usize {
        self.lists.len()
    }

    fn owns(&self, provider: u32, item: u32) -> bool {
        self.provider_of[item as usize] == provider
    }

    pub fn test_rating(&self, user: u32, item: u32) -> Option<f64> {
        self.test_lookup.get(&(user, item)).map(|&(r, _)| r)
    }
}

/// Number of recommendation slots filled by the provider's items.
pub fn exposure(provider: u32, ctx: &EvalContext) -> usize {
    ctx.lists
        .iter()
        .flat_map(|l| l.items.iter().map(move |it| (l.user, it.item)))
        .filter(|&(_, item)| ctx.owns(provider, item))
        .count()
}

/// Exposures that are hits: the (user, item) pair appears in the test set
/// with a rating at or above the relevance threshold.
pub fn hits(provider: u32, ctx: &EvalContext) -> usize {
    ctx.lists
        .iter()
        .flat_map(|l| l.items.iter().map(move |it| (l.user, it.item)))
        .filter(|&(user, item)| {
            ctx.owns(provider, item)
                && ctx
                    .test_rating(user, item)
                    .is_some_and(|r| r >= ctx.relevance_threshold)
        })
        .count()
}

/// Users whose list contains at least one of the provider's items.
pub fn reach(provider: u32, ctx: &EvalContext) -> usize {
    ctx.lists
        .iter()
        .filter(|l| l.items.iter().any(|it| ctx.owns(provider, it.item)))
        .count()
}

/// Reach restricted to the provider's target users.
pub fn target_reach(provider: u32, ctx: &EvalContext) -> usize {
    let target = &ctx.targets[provider as usize];
    ctx.lists
        .iter()
        .filter(|l| match target {
            Some(users) => users.contains(&l.user),
            None => true,
        })
        .filter(|l| l.items.iter().any(|it| ctx.owns(provider, it.item)))
        .count()
}

/// Mean of a per-pair accuracy metric over the provider's slice of the test
/// set. Errors when the provider has no test ratings.
pub fn p_accuracy(
    provider: u32,
    ctx: &EvalContext,
    metric: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in &ctx.test {
        if ctx.owns(provider, t.item) {
            sum += metric(t.rating, t.predicted);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::UndefinedMetric(format!(
            "provider {provider} has no test ratings"
        )));
    }
    Ok(sum / count as f64)
}

/// Group reach-rate ratio: mean Reach(p)/|lists| over group 0 divided by the
/// same over group 1. A parity value is 1; a zero group-1 rate yields
/// infinity, reported as such.
pub fn fairness_ratio(group0: &[u32], group1: &[u32], ctx: &EvalContext) -> Result<f64> {
    if group0.is_empty() || group1.is_empty() {
        return Err(Error::UndefinedMetric(
            "fairness ratio requires two non-empty provider groups".to_string(),
        ));
    }
    if ctx.n_lists() == 0 {
        return Err(Error::UndefinedMetric(
            "fairness ratio requires at least one recommendation list".to_string(),
        ));
    }
    let rate = |group: &[u32]| -> f64 {
        let total: f64 = group
            .iter()
            .map(|&p| reach(p, ctx) as f64 / ctx.n_lists() as f64)
            .sum();
        total / group.len() as f64
    };
    let r0 = rate(group0);
    let r1 = rate(group1);
    if r1 == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(r0 / r1)
}

/// Population mean, variance, and standardized skewness.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DistributionMoments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Set when the variance was too small for a meaningful skewness; the
    /// skewness is reported as 0 in that case.
    pub degenerate: bool,
}

pub fn moments(values: &[f64]) -> Result<DistributionMoments> {
    if values.is_empty() {
        return Err(Error::UndefinedMetric(
            "moments of an empty sample".to_string(),
        ));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if variance < 1e-12 {
        return Ok(DistributionMoments {
            mean,
            variance,
            skewness: 0.0,
            degenerate: true,
        });
    }
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    Ok(DistributionMoments {
        mean,
        variance,
        skewness: m3 / variance.powf(1.5),
        degenerate: false,
    })
}

/// Precision/recall harmonic mean over the first `n` list entries, with
/// relevance given by the user's relevant test-item set. `None` when the user
/// has no relevant test items (recall undefined).
pub fn f1_at(list: &[u32], relevant: &HashSet<u32>, n: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let take = list.len().min(n);
    if take == 0 {
        return Some(0.0);
    }
    let hits = list[..take].iter().filter(|i| relevant.contains(i)).count() as f64;
    if hits == 0.0 {
        return Some(0.0);
    }
    let precision = hits / take as f64;
    let recall = hits / relevant.len() as f64;
    Some(2.0 * precision * recall / (precision + recall))
}

/// NDCG over the first `n` entries with `2^grade - 1` gains and a
/// `log2(rank+1)` discount. The ideal ranking is drawn from `all_grades`,
/// the grades of every item that could have been ranked.
pub fn ndcg_at(list_grades: &[f64], all_grades: &[f64], n: usize) -> f64 {
    let dcg: f64 = list_grades
        .iter()
        .take(n)
        .enumerate()
        .map(|(rank, &g)| (g.exp2() - 1.0) / (rank as f64 + 2.0).log2())
        .sum();
    let mut ideal: Vec<f64> = all_grades.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(n)
        .enumerate()
        .map(|(rank, &g)| (g.exp2() - 1.0) / (rank as f64 + 2.0).log2())
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Consumer-side accuracy bundle with the per-user metric distributions kept
/// for moment reporting.
#[derive(Debug, Clone)]
pub struct ConsumerMetrics {
    pub rmse: f64,
    pub f1_at_n: f64,
    pub ndcg_at_n: f64,
    pub per_user_f1: Vec<f64>,
    pub per_user_ndcg: Vec<f64>,
    /// Users without any relevant test item, excluded from F1/NDCG means.
    pub users_skipped: usize,
    pub n: usize,
}

/// RMSE over the test pairs plus mean F1@n and NDCG@n over the lists, using
/// binary relevance at the context's threshold.
pub fn consumer_metrics(ctx: &EvalContext, n: usize) -> Result<ConsumerMetrics> {
    if ctx.test.is_empty() {
        return Err(Error::UndefinedMetric(
            "consumer metrics on an empty test set".to_string(),
        ));
    }
    let sse: f64 = ctx
        .test
        .iter()
        .map(|t| (t.rating - t.predicted).powi(2))
        .sum();
    let rmse = (sse / ctx.test.len() as f64).sqrt();

    let mut relevant: HashMap<u32, HashSet<u32>> = HashMap::new();
    for t in &ctx.test {
        if t.rating >= ctx.relevance_threshold {
            relevant.entry(t.user).or_default().insert(t.item);
        }
    }
    let empty = HashSet::new();
    let mut per_user_f1 = Vec::new();
    let mut per_user_ndcg = Vec::new();
    let mut skipped = 0usize;
    for list in &ctx.lists {
        let rel = relevant.get(&list.user).unwrap_or(&empty);
        let items: Vec<u32> = list.items.iter().map(|it| it.item).collect();
        match f1_at(&items, rel, n) {
            Some(f1) => {
                per_user_f1.push(f1);
                let grades: Vec<f64> = items
                    .iter()
                    .map(|i| if rel.contains(i) { 1.0 } else { 0.0 })
                    .collect();
                let all: Vec<f64> = vec![1.0; rel.len()];
                per_user_ndcg.push(ndcg_at(&grades, &all, n));
            }
            None => skipped += 1,
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok(ConsumerMetrics {
        rmse,
        f1_at_n: mean(&per_user_f1),
        ndcg_at_n: mean(&per_user_ndcg),
        per_user_f1,
        per_user_ndcg,
        users_skipped: skipped,
        n,
    })
}
