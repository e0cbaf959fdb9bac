//! Deterministic synthetic rating corpus with MovieLens-like shape.
//!
//! Experiments here need a public-style rating corpus plus item years. When
//! no local copy of such a dataset is available, this generator produces one
//! with the same gross statistics: integer 1-5 ratings, skewed item
//! popularity, users with 20+ ratings, and release years where older items
//! attract slightly higher ratings.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;

use super::{InteractionRecord, ItemMetadata, RatingScale, RatingsDataset};

#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// Approximate total rating count; the realized count differs slightly
    /// because per-user profile sizes are sampled.
    pub target_ratings: usize,
    pub seed: u64,
}

impl SyntheticConfig {
    /// Same gross shape as the MovieLens-100K corpus.
    pub fn movielens_100k_like(seed: u64) -> Self {
        SyntheticConfig {
            n_users: 943,
            n_items: 1682,
            target_ratings: 100_000,
            seed,
        }
    }

    /// A small corpus for fast pipeline tests and the shipped sample data.
    pub fn small(seed: u64) -> Self {
        SyntheticConfig {
            n_users: 200,
            n_items: 400,
            target_ratings: 8_000,
            seed,
        }
    }
}

const LATENT_DIM: usize = 8;
const MIN_PROFILE: usize = 20;
/// Rating lift for items released before 1990, the source of the group gap
/// that fairness-regularized training is expected to shrink.
const OLD_ITEM_LIFT: f64 = 0.45;

/// Generates the corpus and aligned metadata in memory.
pub fn generate(cfg: &SyntheticConfig) -> (RatingsDataset, ItemMetadata) {
    let (records, titles, years) = generate_records(cfg);
    let ds = RatingsDataset::from_records(records, RatingScale::MOVIELENS)
        .expect("generator emits a valid dataset");
    // Align metadata to the dataset's item index.
    let mut meta_titles = vec![String::new(); ds.n_items()];
    let mut meta_years = vec![None; ds.n_items()];
    for (pos, title) in titles.into_iter().enumerate() {
        let item = ds
            .item_index(pos as u32 + 1)
            .expect("every item receives at least one rating");
        meta_titles[item as usize] = title;
        meta_years[item as usize] = Some(years[pos]);
    }
    (ds, ItemMetadata::new(meta_titles, meta_years))
}

/// Writes `ratings.tsv` (tab format) and `items.psv` (pipe format) under `dir`.
pub fn write_corpus(cfg: &SyntheticConfig, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let (records, titles, years) = generate_records(cfg);
    let mut ratings = String::new();
    for r in &records {
        ratings.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.user_id,
            r.item_id,
            r.rating,
            r.timestamp.unwrap()
        ));
    }
    let mut items = String::new();
    for (pos, title) in titles.iter().enumerate() {
        items.push_str(&format!("{}|{}|01-Jan-{}|\n", pos + 1, title, years[pos]));
    }
    let ratings_path = dir.join("ratings.tsv");
    let items_path = dir.join("items.psv");
    std::fs::write(&ratings_path, ratings)?;
    std::fs::write(&items_path, items)?;
    Ok((ratings_path, items_path))
}

fn generate_records(cfg: &SyntheticConfig) -> (Vec<InteractionRecord>, Vec<String>, Vec<i32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_users = cfg.n_users;
    let n_items = cfg.n_items;

    let years: Vec<i32> = (0..n_items)
        .map(|_| {
            if rng.gen_bool(0.62) {
                rng.gen_range(1990..=1998)
            } else {
                rng.gen_range(1930..1990)
            }
        })
        .collect();
    let titles: Vec<String> = (0..n_items)
        .map(|i| format!("Feature {:04} ({})", i + 1, years[i]))
        .collect();

    let bias = Normal::new(0.0, 0.45).unwrap();
    let factor = Normal::new(0.0, 0.42).unwrap();
    let noise = Normal::new(0.0, 0.55).unwrap();

    let user_bias: Vec<f64> = (0..n_users).map(|_| bias.sample(&mut rng)).collect();
    let item_bias: Vec<f64> = (0..n_items)
        .map(|i| {
            let lift = if years[i] < 1990 { OLD_ITEM_LIFT } else { 0.0 };
            bias.sample(&mut rng) * 0.9 + lift
        })
        .collect();
    let user_factors: Vec<f64> = (0..n_users * LATENT_DIM)
        .map(|_| factor.sample(&mut rng))
        .collect();
    let item_factors: Vec<f64> = (0..n_items * LATENT_DIM)
        .map(|_| factor.sample(&mut rng))
        .collect();

    // Zipf-ish popularity over a shuffled item order.
    let mut pop_rank: Vec<usize> = (0..n_items).collect();
    for i in (1..n_items).rev() {
        pop_rank.swap(i, rng.gen_range(0..=i));
    }
    let mut weights = vec![0f64; n_items];
    for (rank, &item) in pop_rank.iter().enumerate() {
        weights[item] = 1.0 / (rank as f64 + 1.0).powf(0.8);
    }
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let total_weight = *cumulative.last().unwrap();

    let mean_extra = (cfg.target_ratings as f64 / n_users as f64 - MIN_PROFILE as f64).max(1.0);
    let rate = |user: usize, item: usize, rng: &mut ChaCha8Rng| {
        let mut dot = 0.0;
        for f in 0..LATENT_DIM {
            dot += user_factors[user * LATENT_DIM + f] * item_factors[item * LATENT_DIM + f];
        }
        let raw = 3.55 + user_bias[user] + item_bias[item] + dot + noise.sample(rng);
        (raw.round()).clamp(1.0, 5.0)
    };

    let mut records = Vec::with_capacity(cfg.target_ratings + n_items);
    let mut rated = vec![false; n_items];
    for user in 0..n_users {
        let profile = MIN_PROFILE
            + (-mean_extra * rng.gen_range(f64::EPSILON..1.0f64).ln()) as usize;
        let profile = profile.min(n_items / 2);
        let mut chosen = std::collections::HashSet::with_capacity(profile);
        while chosen.len() < profile {
            let target = rng.gen_range(0.0..total_weight);
            let item = cumulative.partition_point(|&c| c < target).min(n_items - 1);
            chosen.insert(item);
        }
        let mut chosen: Vec<usize> = chosen.into_iter().collect();
        chosen.sort_unstable();
        for item in chosen {
            rated[item] = true;
            records.push(InteractionRecord {
                user_id: user as u32 + 1,
                item_id: item as u32 + 1,
                rating: rate(user, item, &mut rng),
                timestamp: Some(rng.gen_range(874_000_000..893_000_000)),
            });
        }
    }
    // Guarantee every item appears so metadata and economics stay total.
    for item in 0..n_items {
        if !rated[item] {
            let user = rng.gen_range(0..n_users);
            if records
                .iter()
                .any(|r| r.user_id == user as u32 + 1 && r.item_id == item as u32 + 1)
            {
                continue;
            }
            records.push(InteractionRecord {
                user_id: user as u32 + 1,
                item_id: item as u32 + 1,
                rating: rate(user, item, &mut rng),
                timestamp: Some(rng.gen_range(874_000_000..893_000_000)),
            });
        }
    }
    (records, titles, years)
}
