//! Fairness-regularized training and unfairness measures.
//!
//! The trainer minimizes `loss - eta * indep + lambda * reg`, where the
//! independence term takes a larger value the less the predictions depend on
//! the sensitive feature. Three terms are available: mean matching,
//! distribution matching under Bhattacharyya distance, and mutual information
//! under Gaussian fits. All three are non-positive and reach zero exactly at
//! (estimated) group-distribution equality.

use std::fmt;

use crate::dataset::RatingsDataset;
use crate::error::{Error, Result};
use crate::metrics::TestRating;
use crate::mf::{train_sgd, EpochPenalty, FactorModel, TrainConfig, TrainReport};

/// Variance estimates are floored here so log and division terms stay finite
/// on near-constant groups.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum IndepTerm {
    MeanMatching,
    Bhattacharyya,
    MutualInformation,
}

impl fmt::Display for IndepTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndepTerm::MeanMatching => write!(f, "mean_matching"),
            IndepTerm::Bhattacharyya => write!(f, "bhattacharyya"),
            IndepTerm::MutualInformation => write!(f, "mutual_information"),
        }
    }
}

impl std::str::FromStr for IndepTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_matching" => Ok(IndepTerm::MeanMatching),
            "bhattacharyya" => Ok(IndepTerm::Bhattacharyya),
            "mutual_information" => Ok(IndepTerm::MutualInformation),
            other => Err(Error::Config(format!(
                "unknown independence term {other:?} (known: mean_matching, bhattacharyya, mutual_information)"
            ))),
        }
    }
}

/// Weight and choice of the independence term. The L2 weight of the
/// objective is the base trainer's `l2_reg`; keeping a single knob is what
/// makes the eta = 0 run coincide with the plain trainer exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairnessConfig {
    pub eta: f64,
    pub term: IndepTerm,
}

impl FairnessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta < 0.0 {
            return Err(Error::Config("eta must be >= 0".into()));
        }
        Ok(())
    }
}

/// Predicted values partitioned by the sensitive feature.
#[derive(Debug, Clone)]
pub struct GroupedPredictions {
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
}

impl GroupedPredictions {
    pub fn from_labels(values: &[f64], labels: &[bool]) -> Self {
        let mut d0 = Vec::new();
        let mut d1 = Vec::new();
        for (&v, &s) in values.iter().zip(labels) {
            if s {
                d1.push(v);
            } else {
                d0.push(v);
            }
        }
        GroupedPredictions { d0, d1 }
    }
}

#[derive(Debug, Clone, Copy)]
struct GroupStats {
    n0: f64,
    mean0: f64,
    var0: f64,
    n1: f64,
    mean1: f64,
    var1: f64,
    pooled_mean: f64,
    pooled_var: f64,
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.max(VARIANCE_FLOOR))
}

fn stats(g: &GroupedPredictions, need_variance: bool) -> Result<GroupStats> {
    if g.d0.is_empty() || g.d1.is_empty() {
        return Err(Error::Contract(
            "independence terms need both sensitive groups non-empty".to_string(),
        ));
    }
    if need_variance && (g.d0.len() < 2 || g.d1.len() < 2) {
        return Err(Error::Contract(
            "variance-based independence terms need at least two points per group".to_string(),
        ));
    }
    let (mean0, var0) = mean_var(&g.d0);
    let (mean1, var1) = mean_var(&g.d1);
    let pooled: Vec<f64> = g.d0.iter().chain(g.d1.iter()).copied().collect();
    let (pooled_mean, pooled_var) = mean_var(&pooled);
    Ok(GroupStats {
        n0: g.d0.len() as f64,
        mean0,
        var0,
        n1: g.d1.len() as f64,
        mean1,
        var1,
        pooled_mean,
        pooled_var,
    })
}

/// Mean matching: `-(mean(D0) - mean(D1))^2`.
pub fn indep_mean_matching(g: &GroupedPredictions) -> Result<f64> {
    let s = stats(g, false)?;
    Ok(-(s.mean0 - s.mean1).powi(2))
}

/// Distribution matching: minus the Bhattacharyya distance between Gaussian
/// fits of the two groups,
/// `BC = sqrt(2 s0 s1 / (s0^2 + s1^2)) * exp(-(m0-m1)^2 / (4 (s0^2 + s1^2)))`.
pub fn indep_bhattacharyya(g: &GroupedPredictions) -> Result<f64> {
    let s = stats(g, true)?;
    let v = s.var0 + s.var1;
    let distance = 0.25 * (s.mean0 - s.mean1).powi(2) / v + 0.5 * v.ln()
        - 0.25 * s.var0.ln()
        - 0.25 * s.var1.ln()
        - 0.5 * 2f64.ln();
    Ok(-distance)
}

/// Mutual information under Gaussian fits:
/// `-(H(pooled) - sum_s Pr[S=s] H(group s))` with `H = 0.5 ln(2 pi e var)`.
pub fn indep_mutual_info(g: &GroupedPredictions) -> Result<f64> {
    let s = stats(g, true)?;
    let n = s.n0 + s.n1;
    let mi = 0.5 * (s.pooled_var.ln() - (s.n0 / n) * s.var0.ln() - (s.n1 / n) * s.var1.ln());
    Ok(-mi)
}

pub fn independence_term(term: IndepTerm, g: &GroupedPredictions) -> Result<f64> {
    match term {
        IndepTerm::MeanMatching => indep_mean_matching(g),
        IndepTerm::Bhattacharyya => indep_bhattacharyya(g),
        IndepTerm::MutualInformation => indep_mutual_info(g),
    }
}

/// Gradient of `-indep` (the penalty actually minimized) with respect to each
/// predicted value, returned in (group 0, group 1) order matching the input.
pub fn independence_gradient(
    term: IndepTerm,
    g: &GroupedPredictions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = stats(g, !matches!(term, IndepTerm::MeanMatching))?;
    let grad0 = g.d0.iter().map(|&y| penalty_gradient_at(term, &s, false, y)).collect();
    let grad1 = g.d1.iter().map(|&y| penalty_gradient_at(term, &s, true, y)).collect();
    Ok((grad0, grad1))
}

/// d(-indep)/d(prediction) for one point, from group statistics.
fn penalty_gradient_at(term: IndepTerm, s: &GroupStats, group1: bool, y: f64) -> f64 {
    let delta = s.mean0 - s.mean1;
    let (n_s, mean_s, var_s, sign) = if group1 {
        (s.n1, s.mean1, s.var1, -1.0)
    } else {
        (s.n0, s.mean0, s.var0, 1.0)
    };
    match term {
        IndepTerm::MeanMatching => 2.0 * delta * sign / n_s,
        IndepTerm::Bhattacharyya => {
            let v = s.var0 + s.var1;
            let mean_path = 0.5 * delta / v * sign / n_s;
            let var_path = (0.5 / v - 0.25 * delta * delta / (v * v) - 0.25 / var_s)
                * 2.0
                * (y - mean_s)
                / n_s;
            mean_path + var_path
        }
        IndepTerm::MutualInformation => {
            let n = s.n0 + s.n1;
            (y - s.pooled_mean) / (n * s.pooled_var) - (y - mean_s) / (n * var_s)
        }
    }
}

struct FairnessHook<'a> {
    /// Sensitive label of each training record's item, aligned to the record
    /// slice given to the trainer.
    record_label: &'a [bool],
    eta: f64,
    term: IndepTerm,
}

impl EpochPenalty for FairnessHook<'_> {
    fn epoch_gradients(&mut self, predictions: &[f64]) -> Vec<f64> {
        let g = GroupedPredictions::from_labels(predictions, self.record_label);
        let s = stats(&g, !matches!(self.term, IndepTerm::MeanMatching))
            .expect("trainer checked both groups are present");
        predictions
            .iter()
            .zip(self.record_label)
            .map(|(&y, &s1)| self.eta * penalty_gradient_at(self.term, &s, s1, y))
            .collect()
    }
}

/// Trains matrix factorization with the independence penalty, per-epoch
/// full-batch group statistics, and the plain trainer's update rule. With
/// eta = 0 the result is bit-identical to [`crate::mf::train_mf_on`].
pub fn train_fair_mf(
    ds: &RatingsDataset,
    records: &[u32],
    item_sensitive: &[bool],
    cfg: &TrainConfig,
    fair: &FairnessConfig,
) -> Result<(FactorModel, TrainReport)> {
    fair.validate()?;
    let record_label: Vec<bool> = records
        .iter()
        .map(|&r| item_sensitive[ds.interactions()[r as usize].item as usize])
        .collect();
    let zeros = record_label.iter().filter(|&&s| !s).count();
    if zeros == 0 || zeros == record_label.len() {
        return Err(Error::Contract(
            "fair training needs both sensitive groups in the training records".to_string(),
        ));
    }
    let mut hook = FairnessHook {
        record_label: &record_label,
        eta: fair.eta,
        term: fair.term,
    };
    train_sgd(ds, records, cfg, Some(&mut hook))
}

/// Mean prediction per sensitive group over a set of test ratings.
pub fn group_prediction_means(test: &[TestRating], item_sensitive: &[bool]) -> (f64, f64) {
    let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0usize, 0.0, 0usize);
    for t in test {
        if item_sensitive[t.item as usize] {
            s1 += t.predicted;
            n1 += 1;
        } else {
            s0 += t.predicted;
            n0 += 1;
        }
    }
    (s0 / n0.max(1) as f64, s1 / n1.max(1) as f64)
}

#[derive(Debug, Clone, Copy)]
pub struct AbsoluteUnfairness {
    pub value: f64,
    pub eligible_users: usize,
    /// Users lacking test items in one of the groups, excluded from the mean.
    pub skipped_users: usize,
}

/// Mean over users of the discrepancy between the predicted and observed
/// between-group rating gaps:
/// `mean_user | |mean_i0 Yhat - mean_i1 Yhat| - |mean_i0 Y - mean_i1 Y| |`.
pub fn absolute_unfairness(
    test: &[TestRating],
    item_sensitive: &[bool],
) -> Result<AbsoluteUnfairness> {
    use std::collections::HashMap;
    struct Acc {
        pred: [f64; 2],
        obs: [f64; 2],
        n: [usize; 2],
    }
    let mut users: HashMap<u32, Acc> = HashMap::new();
    for t in test {
        let g = item_sensitive[t.item as usize] as usize;
        let acc = users.entry(t.user).or_insert(Acc {
            pred: [0.0; 2],
            obs: [0.0; 2],
            n: [0; 2],
        });
        acc.pred[g] += t.predicted;
        acc.obs[g] += t.rating;
        acc.n[g] += 1;
    }
    let mut total = 0.0;
    let mut eligible = 0usize;
    let mut skipped = 0usize;
    let mut user_ids: Vec<u32> = users.keys().copied().collect();
    user_ids.sort_unstable();
    for user in user_ids {
        let acc = &users[&user];
        if acc.n[0] == 0 || acc.n[1] == 0 {
            skipped += 1;
            continue;
        }
        let pred_gap = (acc.pred[0] / acc.n[0] as f64 - acc.pred[1] / acc.n[1] as f64).abs();
        let obs_gap = (acc.obs[0] / acc.n[0] as f64 - acc.obs[1] / acc.n[1] as f64).abs();
        total += (pred_gap - obs_gap).abs();
        eligible += 1;
    }
    if eligible == 0 {
        return Err(Error::UndefinedMetric(
            "absolute unfairness: no user has test items in both groups".to_string(),
        ));
    }
    Ok(AbsoluteUnfairness {
        value: total / eligible as f64,
        eligible_users: eligible,
        skipped_users: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mf::train_mf_on;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grouped(d0: &[f64], d1: &[f64]) -> GroupedPredictions {
        GroupedPredictions {
            d0: d0.to_vec(),
            d1: d1.to_vec(),
        }
    }

    #[test]
    fn mean_matching_examples() {
        assert_eq!(
            indep_mean_matching(&grouped(&[3.0, 3.0], &[3.0, 3.0])).unwrap(),
            0.0
        );
        assert_relative_eq!(
            indep_mean_matching(&grouped(&[4.0, 4.0], &[2.0, 2.0])).unwrap(),
            -4.0
        );
        // symmetric under group swap
        assert_relative_eq!(
            indep_mean_matching(&grouped(&[1.0, 5.0], &[2.0])).unwrap(),
            indep_mean_matching(&grouped(&[2.0], &[1.0, 5.0])).unwrap()
        );
        assert!(indep_mean_matching(&grouped(&[], &[1.0])).is_err());
    }

    #[test]
    fn bhattacharyya_examples() {
        // identical groups
        let same = indep_bhattacharyya(&grouped(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0])).unwrap();
        assert_relative_eq!(same, 0.0, epsilon = 1e-12);
        // mu0 = 0, mu1 = 2, sigma = 1: -(-ln exp(-4/8)) = -0.5
        // sample variance 1 via points mean +/- 1
        let g = grouped(&[-1.0, 1.0], &[1.0, 3.0]);
        assert_relative_eq!(indep_bhattacharyya(&g).unwrap(), -0.5, epsilon = 1e-12);
        // widening the mean gap makes the term more negative
        let mut prev = 0.0;
        for gap in [1.0, 2.0, 3.0, 4.0] {
            let g = grouped(&[-1.0, 1.0], &[gap - 1.0, gap + 1.0]);
            let v = indep_bhattacharyya(&g).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn mutual_info_examples() {
        let same = indep_mutual_info(&grouped(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0])).unwrap();
        assert!(same.abs() < 1e-6);
        // concentrated far-apart groups are strictly negative
        let v = indep_mutual_info(&grouped(&[1.0, 1.001], &[5.0, 5.001])).unwrap();
        assert!(v < -0.1);
        // equal sizes, sigma = 1, means 0 and 2: -(1/2) ln 2
        let g = grouped(&[-1.0, 1.0], &[1.0, 3.0]);
        assert_relative_eq!(
            indep_mutual_info(&g).unwrap(),
            -0.5 * 2f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn all_terms_nonpositive_and_swap_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n0 = rng.gen_range(2..20);
            let n1 = rng.gen_range(2..20);
            let d0: Vec<f64> = (0..n0).map(|_| rng.gen_range(1.0..5.0)).collect();
            let d1: Vec<f64> = (0..n1).map(|_| rng.gen_range(1.0..5.0)).collect();
            let g = grouped(&d0, &d1);
            let swapped = grouped(&d1, &d0);
            for term in [
                IndepTerm::MeanMatching,
                IndepTerm::Bhattacharyya,
                IndepTerm::MutualInformation,
            ] {
                let v = independence_term(term, &g).unwrap();
                assert!(v <= 1e-9, "{term}: {v} > 0");
                let w = independence_term(term, &swapped).unwrap();
                assert_relative_eq!(v, w, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = 1e-6;
        for trial in 0..50 {
            let n0 = rng.gen_range(3..12);
            let n1 = rng.gen_range(3..12);
            let d0: Vec<f64> = (0..n0).map(|_| rng.gen_range(1.0..5.0)).collect();
            let d1: Vec<f64> = (0..n1).map(|_| rng.gen_range(1.0..5.0)).collect();
            for term in [
                IndepTerm::MeanMatching,
                IndepTerm::Bhattacharyya,
                IndepTerm::MutualInformation,
            ] {
                let g = grouped(&d0, &d1);
                let (grad0, grad1) = independence_gradient(term, &g).unwrap();
                let mut check = |group1: bool, idx: usize, analytic: f64| {
                    let mut up = g.clone();
                    let mut down = g.clone();
                    if group1 {
                        up.d1[idx] += h;
                        down.d1[idx] -= h;
                    } else {
                        up.d0[idx] += h;
                        down.d0[idx] -= h;
                    }
                    // gradient of the penalty -indep
                    let numeric = (independence_term(term, &down).unwrap()
                        - independence_term(term, &up).unwrap())
                        / (2.0 * h);
                    if numeric.abs() < 1e-8 && analytic.abs() < 1e-8 {
                        return;
                    }
                    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
                    assert!(
                        rel < 1e-4,
                        "{term} trial {trial} group{} idx {idx}: {analytic} vs {numeric}",
                        group1 as u8
                    );
                };
                for (idx, &a) in grad0.iter().enumerate() {
                    check(false, idx, a);
                }
                for (idx, &a) in grad1.iter().enumerate() {
                    check(true, idx, a);
                }
            }
        }
    }

    #[test]
    fn eta_zero_reproduces_plain_trainer_exactly() {
        let cfg = crate::dataset::synthetic::SyntheticConfig {
            n_users: 40,
            n_items: 60,
            target_ratings: 1500,
            seed: 17,
        };
        let (ds, meta) = crate::dataset::synthetic::generate(&cfg);
        let sensitive: Vec<bool> = (0..ds.n_items() as u32)
            .map(|i| meta.year(i).unwrap() < 1990)
            .collect();
        let records: Vec<u32> = (0..ds.n_records() as u32).collect();
        let train_cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let (plain, _) = train_mf_on(&ds, &records, &train_cfg).unwrap();
        let (fair, _) = train_fair_mf(
            &ds,
            &records,
            &sensitive,
            &train_cfg,
            &FairnessConfig {
                eta: 0.0,
                term: IndepTerm::MeanMatching,
            },
        )
        .unwrap();
        assert_eq!(plain, fair);
    }

    #[test]
    fn eta_sweep_shrinks_group_gap() {
        let cfg = crate::dataset::synthetic::SyntheticConfig {
            n_users: 120,
            n_items: 200,
            target_ratings: 6000,
            seed: 19,
        };
        let (ds, meta) = crate::dataset::synthetic::generate(&cfg);
        let sensitive: Vec<bool> = (0..ds.n_items() as u32)
            .map(|i| meta.year(i).unwrap() < 1990)
            .collect();
        let plan = crate::dataset::split_random_kfold(&ds, 5, 7).unwrap();
        let (train, test) = plan.train_test(0);
        let train_cfg = TrainConfig::default();
        let scale = ds.scale();
        let mut gaps = Vec::new();
        for eta in [0.0, 10.0, 100.0] {
            let (model, _) = train_fair_mf(
                &ds,
                &train,
                &sensitive,
                &train_cfg,
                &FairnessConfig {
                    eta,
                    term: IndepTerm::MeanMatching,
                },
            )
            .unwrap();
            let test_ratings: Vec<TestRating> = test
                .iter()
                .map(|&r| {
                    let rec = &ds.interactions()[r as usize];
                    TestRating {
                        user: rec.user,
                        item: rec.item,
                        rating: rec.rating,
                        predicted: model.predict_clamped(rec.user, rec.item, scale).unwrap(),
                    }
                })
                .collect();
            let (m0, m1) = group_prediction_means(&test_ratings, &sensitive);
            gaps.push((m0 - m1).abs());
        }
        assert!(
            gaps[1] < gaps[0] && gaps[2] < gaps[1],
            "gaps did not strictly decrease: {gaps:?}"
        );
    }

    #[test]
    fn absolute_unfairness_examples() {
        let sensitive = vec![false, true];
        // predictions equal observations
        let test = vec![
            TestRating { user: 0, item: 0, rating: 4.0, predicted: 4.0 },
            TestRating { user: 0, item: 1, rating: 2.0, predicted: 2.0 },
        ];
        assert_eq!(absolute_unfairness(&test, &sensitive).unwrap().value, 0.0);

        // one user: prediction group means (4, 2), observed (3, 3)
        let test = vec![
            TestRating { user: 0, item: 0, rating: 3.0, predicted: 4.0 },
            TestRating { user: 0, item: 1, rating: 3.0, predicted: 2.0 },
        ];
        assert_eq!(absolute_unfairness(&test, &sensitive).unwrap().value, 2.0);

        // a constant shift within one user's predictions changes nothing
        let shifted = vec![
            TestRating { user: 0, item: 0, rating: 3.0, predicted: 4.7 },
            TestRating { user: 0, item: 1, rating: 3.0, predicted: 2.7 },
        ];
        assert_eq!(absolute_unfairness(&shifted, &sensitive).unwrap().value, 2.0);
    }

    #[test]
    fn absolute_unfairness_skips_one_sided_users() {
        let sensitive = vec![false, true];
        let test = vec![
            TestRating { user: 0, item: 0, rating: 3.0, predicted: 4.0 },
            TestRating { user: 0, item: 1, rating: 3.0, predicted: 2.0 },
            TestRating { user: 1, item: 0, rating: 5.0, predicted: 1.0 },
        ];
        let out = absolute_unfairness(&test, &sensitive).unwrap();
        assert_eq!(out.eligible_users, 1);
        assert_eq!(out.skipped_users, 1);
        assert_eq!(out.value, 2.0);

        let one_sided = vec![TestRating { user: 0, item: 0, rating: 3.0, predicted: 4.0 }];
        assert!(matches!(
            absolute_unfairness(&one_sided, &sensitive),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn fair_training_needs_both_groups() {
        let cfg = crate::dataset::synthetic::SyntheticConfig {
            n_users: 10,
            n_items: 20,
            target_ratings: 300,
            seed: 23,
        };
        let (ds, _) = crate::dataset::synthetic::generate(&cfg);
        let records: Vec<u32> = (0..ds.n_records() as u32).collect();
        let sensitive = vec![false; ds.n_items()];
        assert!(matches!(
            train_fair_mf(
                &ds,
                &records,
                &sensitive,
                &TrainConfig::default(),
                &FairnessConfig { eta: 1.0, term: IndepTerm::MeanMatching }
            ),
            Err(Error::Contract(_))
        ));
    }
}
