// scratch calibration harness; deleted before release
use stakerec::dataset::{split_random_kfold, synthetic, RatingScale};
use stakerec::mf::{top_n, train_mf_on, TrainConfig};

#[test]
#[ignore]
fn calibrate_mf_on_synthetic() {
    let t0 = std::time::Instant::now();
    let cfg = synthetic::SyntheticConfig::movielens_100k_like(42);
    let (ds, meta) = synthetic::generate(&cfg);
    println!(
        "corpus: {} users {} items {} records gen in {:?}",
        ds.n_users(),
        ds.n_items(),
        ds.n_records(),
        t0.elapsed()
    );
    let plan = split_random_kfold(&ds, 5, 42).unwrap();
    let (train, test) = plan.train_test(0);
    let t1 = std::time::Instant::now();
    let (model, report) = train_mf_on(&ds, &train, &TrainConfig::default()).unwrap();
    println!("train {:?}  rmse[0]={:.4} rmse[last]={:.4}", t1.elapsed(), report.epoch_rmse[0], report.epoch_rmse.last().unwrap());
    // test rmse
    let inter = ds.interactions();
    let scale = RatingScale::MOVIELENS;
    let sse: f64 = test
        .iter()
        .map(|&r| {
            let rec = &inter[r as usize];
            let p = model.predict_clamped(rec.user, rec.item, scale).unwrap();
            (p - rec.rating).powi(2)
        })
        .sum();
    println!("test rmse = {:.4}", (sse / test.len() as f64).sqrt());

    // candidate preds >= 4.5 per user; top-10 mean pred
    let mut train_items: Vec<std::collections::HashSet<u32>> =
        vec![Default::default(); ds.n_users()];
    for &r in &train {
        let rec = &inter[r as usize];
        train_items[rec.user as usize].insert(rec.item);
    }
    let mut elig_counts = Vec::new();
    let mut top10_mean_pred = Vec::new();
    let t2 = std::time::Instant::now();
    for user in 0..ds.n_users() as u32 {
        let candidates: Vec<u32> = (0..ds.n_items() as u32)
            .filter(|i| !train_items[user as usize].contains(i))
            .collect();
        let list = top_n(&model, user, &candidates, candidates.len(), scale).unwrap();
        let elig = list.items.iter().filter(|it| it.pred_rating >= 4.5).count();
        elig_counts.push(elig);
        let m: f64 = list.items.iter().take(10).map(|i| i.pred_rating).sum::<f64>() / 10.0;
        top10_mean_pred.push(m);
    }
    println!("full rank all users in {:?}", t2.elapsed());
    elig_counts.sort_unstable();
    println!(
        "eligible@4.5 per user: min={} p25={} median={} p75={} max={} mean={:.1}",
        elig_counts[0],
        elig_counts[elig_counts.len() / 4],
        elig_counts[elig_counts.len() / 2],
        elig_counts[3 * elig_counts.len() / 4],
        elig_counts[elig_counts.len() - 1],
        elig_counts.iter().sum::<usize>() as f64 / elig_counts.len() as f64
    );
    let mp: f64 = top10_mean_pred.iter().sum::<f64>() / top10_mean_pred.len() as f64;
    println!("mean top-10 pred rating = {:.3}", mp);

    // fairness gap at eta=0: mean predicted rating on test pairs by group
    let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0usize, 0.0, 0usize);
    for &r in &test {
        let rec = &inter[r as usize];
        let p = model.predict(rec.user, rec.item).unwrap();
        if meta.year(rec.item).unwrap() < 1990 {
            s1 += p;
            n1 += 1;
        } else {
            s0 += p;
            n0 += 1;
        }
    }
    println!(
        "test-pred group means: new={:.4} (n={}) old={:.4} (n={}) gap={:.4}",
        s0 / n0 as f64,
        n0,
        s1 / n1 as f64,
        n1,
        (s1 / n1 as f64 - s0 / n0 as f64).abs()
    );
    println!("total {:?}", t0.elapsed());
}
