//! Rating data ingestion, evaluation splits, and simulation of the
//! multistakeholder attributes (providers, profits, sensitive labels) that
//! public rating datasets lack.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub mod metadata;
pub mod simulate;
pub mod split;
pub mod synthetic;

pub use metadata::{load_item_metadata, ItemMetadata};
pub use simulate::{
    assign_providers, label_sensitive, sample_item_profits, EconomicsTable, ItemEconomics,
    ProfitParams, ProviderDist, SensitiveLabels, SensitiveRule,
};
pub use split::{split_random_kfold, split_temporal, FoldAssignment, SplitKind, SplitPlan};

/// Inclusive rating bounds, e.g. (1, 5) for MovieLens.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl RatingScale {
    pub const MOVIELENS: RatingScale = RatingScale { min: 1.0, max: 5.0 };

    pub fn contains(&self, r: f64) -> bool {
        r >= self.min && r <= self.max
    }

    pub fn clamp(&self, r: f64) -> f64 {
        r.clamp(self.min, self.max)
    }
}

/// One user/item interaction as it appears in an input file, with the
/// dataset's original opaque ids.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub user_id: u32,
    pub item_id: u32,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// An interaction with ids resolved to contiguous indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Input file layout for rating data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingsFormat {
    /// Whitespace-delimited `user item rating [timestamp]` (MovieLens-100K u.data).
    Tab,
    /// `user::item::rating[::timestamp]` (MovieLens-1M ratings.dat).
    DoubleColon,
}

impl fmt::Display for RatingsFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatingsFormat::Tab => write!(f, "tab"),
            RatingsFormat::DoubleColon => write!(f, "double-colon"),
        }
    }
}

/// An interaction dataset with contiguous user/item reindex maps.
///
/// The reindex maps are bijections onto `0..n_users-1` / `0..n_items-1`,
/// assigned in first-seen order so loading is deterministic.
#[derive(Debug, Clone)]
pub struct RatingsDataset {
    interactions: Vec<Interaction>,
    scale: RatingScale,
    user_ids: Vec<u32>,
    item_ids: Vec<u32>,
    user_lookup: HashMap<u32, u32>,
    item_lookup: HashMap<u32, u32>,
    user_records: Vec<Vec<u32>>,
}

impl RatingsDataset {
    /// Builds a dataset from parsed records, reindexing ids in first-seen order.
    ///
    /// Fails on an empty record list, a rating outside `scale`, or a duplicate
    /// `(user_id, item_id)` pair.
    pub fn from_records(records: Vec<InteractionRecord>, scale: RatingScale) -> Result<Self> {
        Self::build(records, scale, None)
    }

    fn build(
        records: Vec<InteractionRecord>,
        scale: RatingScale,
        path: Option<&str>,
    ) -> Result<Self> {
        let fail = |pos: usize, msg: String| -> Error {
            match path {
                Some(p) => Error::Parse {
                    path: p.to_string(),
                    line: pos + 1,
                    msg,
                },
                None => Error::Contract(format!("record {pos}: {msg}")),
            }
        };
        if records.is_empty() {
            return Err(Error::EmptyDataset(
                path.unwrap_or("in-memory records").to_string(),
            ));
        }
        let mut ds = RatingsDataset {
            interactions: Vec::with_capacity(records.len()),
            scale,
            user_ids: Vec::new(),
            item_ids: Vec::new(),
            user_lookup: HashMap::new(),
            item_lookup: HashMap::new(),
            user_records: Vec::new(),
        };
        let mut seen: HashMap<(u32, u32), ()> = HashMap::with_capacity(records.len());
        for (pos, rec) in records.into_iter().enumerate() {
            if !scale.contains(rec.rating) {
                return Err(fail(
                    pos,
                    format!(
                        "rating {} outside scale [{}, {}]",
                        rec.rating, scale.min, scale.max
                    ),
                ));
            }
            if seen.insert((rec.user_id, rec.item_id), ()).is_some() {
                return Err(fail(
                    pos,
                    format!("duplicate (user {}, item {}) pair", rec.user_id, rec.item_id),
                ));
            }
            let next_user = ds.user_ids.len() as u32;
            let user = *ds.user_lookup.entry(rec.user_id).or_insert_with(|| {
                ds.user_ids.push(rec.user_id);
                ds.user_records.push(Vec::new());
                next_user
            });
            let next_item = ds.item_ids.len() as u32;
            let item = *ds.item_lookup.entry(rec.item_id).or_insert_with(|| {
                ds.item_ids.push(rec.item_id);
                next_item
            });
            ds.user_records[user as usize].push(ds.interactions.len() as u32);
            ds.interactions.push(Interaction {
                user,
                item,
                rating: rec.rating,
                timestamp: rec.timestamp,
            });
        }
        Ok(ds)
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_records(&self) -> usize {
        self.interactions.len()
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    /// Record indices belonging to one user, in load order.
    pub fn user_records(&self, user: u32) -> &[u32] {
        &self.user_records[user as usize]
    }

    /// Original id of a user index.
    pub fn user_id(&self, user: u32) -> u32 {
        self.user_ids[user as usize]
    }

    /// Original id of an item index.
    pub fn item_id(&self, item: u32) -> u32 {
        self.item_ids[item as usize]
    }

    pub fn user_index(&self, user_id: u32) -> Option<u32> {
        self.user_lookup.get(&user_id).copied()
    }

    pub fn item_index(&self, item_id: u32) -> Option<u32> {
        self.item_lookup.get(&item_id).copied()
    }

    pub fn global_mean(&self) -> f64 {
        let sum: f64 = self.interactions.iter().map(|r| r.rating).sum();
        sum / self.interactions.len() as f64
    }

    pub fn has_timestamps(&self) -> bool {
        self.interactions.iter().all(|r| r.timestamp.is_some())
    }
}

/// Loads a delimiter-separated ratings file into a reindexed dataset on the
/// MovieLens 1-5 scale.
pub fn load_ratings(path: impl AsRef<Path>, format: RatingsFormat) -> Result<RatingsDataset> {
    load_ratings_with_scale(path, format, RatingScale::MOVIELENS)
}

pub fn load_ratings_with_scale(
    path: impl AsRef<Path>,
    format: RatingsFormat,
    scale: RatingScale,
) -> Result<RatingsDataset> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let content = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            // Trailing blank lines are common; interior blanks are malformed.
            if content.lines().skip(idx + 1).any(|l| !l.trim().is_empty()) {
                return Err(Error::Parse {
                    path: display,
                    line: idx + 1,
                    msg: "blank line".to_string(),
                });
            }
            break;
        }
        records.push(parse_line(line, format, &display, idx + 1)?);
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset(display));
    }
    RatingsDataset::build(records, scale, Some(&display))
}

fn parse_line(
    line: &str,
    format: RatingsFormat,
    path: &str,
    line_no: usize,
) -> Result<InteractionRecord> {
    let fail = |msg: String| Error::Parse {
        path: path.to_string(),
        line: line_no,
        msg,
    };
    let fields: Vec<&str> = match format {
        RatingsFormat::Tab => line.split_whitespace().collect(),
        RatingsFormat::DoubleColon => line.split("::").map(str::trim).collect(),
    };
    if fields.len() < 3 || fields.len() > 4 {
        return Err(fail(format!(
            "expected 3 or 4 fields, found {}",
            fields.len()
        )));
    }
    let user_id: u32 = fields[0]
        .parse()
        .map_err(|_| fail(format!("invalid user id {:?}", fields[0])))?;
    let item_id: u32 = fields[1]
        .parse()
        .map_err(|_| fail(format!("invalid item id {:?}", fields[1])))?;
    let rating: f64 = fields[2]
        .parse()
        .map_err(|_| fail(format!("invalid rating {:?}", fields[2])))?;
    let timestamp = match fields.get(3) {
        Some(f) => Some(
            f.parse::<i64>()
                .map_err(|_| fail(format!("invalid timestamp {:?}", f)))?,
        ),
        None => None,
    };
    Ok(InteractionRecord {
        user_id,
        item_id,
        rating,
        timestamp,
    })
}
