//! Simulation of multistakeholder item attributes: provider assignment,
//! profitability sampling, and sensitive labels.
//!
//! All operations are pure functions of (inputs, seed).

use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::{ItemMetadata, RatingsDataset};

/// Margins of exactly zero after clipping are nudged up so log terms stay finite.
pub const MARGIN_EPSILON: f64 = 1e-6;

/// Default fraction of the selling price that is margin: `price = margin / commission`.
pub const DEFAULT_COMMISSION: f64 = 0.25;

/// How provider catalog sizes are distributed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProviderDist {
    Uniform,
    /// Catalog sizes follow a rank/size power law with the given exponent:
    /// the r-th largest catalog is proportional to `r^-exponent`.
    PowerLaw { exponent: f64 },
}

/// Assigns every item to exactly one provider. Catalog sizes sum to the item
/// count; deterministic per seed.
pub fn assign_providers(
    ds: &RatingsDataset,
    n_providers: u32,
    dist: ProviderDist,
    seed: u64,
) -> Result<Vec<u32>> {
    if n_providers < 1 {
        return Err(Error::Config("n_providers must be >= 1".to_string()));
    }
    let n_items = ds.n_items();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match dist {
        ProviderDist::Uniform => Ok((0..n_items)
            .map(|_| rng.gen_range(0..n_providers))
            .collect()),
        ProviderDist::PowerLaw { exponent } => {
            if exponent <= 0.0 {
                return Err(Error::Config(format!(
                    "power-law exponent must be > 0, got {exponent}"
                )));
            }
            // Rank-law weights r^-exponent with lognormal jitter, shuffled
            // over providers. Keeps the sampled sizes on the configured
            // rank/size slope even for small provider counts.
            let jitter: Normal<f64> = Normal::new(0.0, 0.2).expect("valid jitter distribution");
            let mut weights: Vec<f64> = (1..=n_providers as usize)
                .map(|rank| (rank as f64).powf(-exponent) * jitter.sample(&mut rng).exp())
                .collect();
            weights.shuffle(&mut rng);
            let sizes = largest_remainder(&weights, n_items);
            // Deal shuffled items into contiguous per-provider blocks.
            let mut items: Vec<u32> = (0..n_items as u32).collect();
            items.shuffle(&mut rng);
            let mut providers = vec![0u32; n_items];
            let mut cursor = 0;
            for (p, &size) in sizes.iter().enumerate() {
                for &item in &items[cursor..cursor + size] {
                    providers[item as usize] = p as u32;
                }
                cursor += size;
            }
            Ok(providers)
        }
    }
}

/// Rounds fractional shares of `total` to integers that sum exactly to `total`.
fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut sizes: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &idx in order.iter().take(total - assigned) {
        sizes[idx] += 1;
    }
    sizes
}

/// Gaussian profitability simulation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitParams {
    pub mu: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
    /// Margin as a fraction of price; synthesizes price and cost from the
    /// sampled margin.
    pub commission: f64,
}

impl Default for ProfitParams {
    fn default() -> Self {
        ProfitParams {
            mu: 2.0,
            sigma: 1.0,
            lo: 0.0,
            hi: 4.0,
            commission: DEFAULT_COMMISSION,
        }
    }
}

/// Per-item simulated economics.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemEconomics {
    /// Original item id (for persistence; rows are stored in item-index order).
    pub item_id: u32,
    pub price: f64,
    pub cost: f64,
    pub margin: f64,
    pub provider: u32,
    pub sensitive: bool,
}

/// Samples per-item margins from a clipped Gaussian and synthesizes price and
/// cost so that `price - cost = margin` at the configured commission rate.
pub fn sample_item_profits(
    ds: &RatingsDataset,
    params: &ProfitParams,
    seed: u64,
) -> Result<Vec<ItemEconomics>> {
    if params.lo >= params.hi {
        return Err(Error::Config(format!(
            "profit bounds must satisfy lo < hi, got [{}, {}]",
            params.lo, params.hi
        )));
    }
    if params.sigma <= 0.0 {
        return Err(Error::Config("profit sigma must be > 0".to_string()));
    }
    if params.commission <= 0.0 || params.commission > 1.0 {
        return Err(Error::Config(format!(
            "commission must be in (0, 1], got {}",
            params.commission
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(params.mu, params.sigma)
        .map_err(|e| Error::Config(format!("invalid profit distribution: {e}")))?;
    Ok((0..ds.n_items() as u32)
        .map(|item| {
            let mut margin = normal.sample(&mut rng).clamp(params.lo, params.hi);
            if margin <= 0.0 {
                margin = MARGIN_EPSILON;
            }
            let price = margin / params.commission;
            ItemEconomics {
                item_id: ds.item_id(item),
                price,
                cost: price - margin,
                margin,
                provider: 0,
                sensitive: false,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

/// A declarative predicate over a named item attribute, e.g. `year < 1990`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitiveRule {
    pub attribute: String,
    pub op: RuleOp,
    pub value: f64,
}

impl SensitiveRule {
    fn apply(&self, attr: f64) -> bool {
        match self.op {
            RuleOp::Lt => attr < self.value,
            RuleOp::Le => attr <= self.value,
            RuleOp::Gt => attr > self.value,
            RuleOp::Ge => attr >= self.value,
            RuleOp::Eq => attr == self.value,
        }
    }
}

impl FromStr for SensitiveRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tokens: Vec<&str> = s.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(Error::Config(format!(
                "sensitive rule must be `<attribute> <op> <value>`, got {s:?}"
            )));
        }
        let op = match tokens[1] {
            "<" => RuleOp::Lt,
            "<=" => RuleOp::Le,
            ">" => RuleOp::Gt,
            ">=" => RuleOp::Ge,
            "==" | "=" => RuleOp::Eq,
            other => {
                return Err(Error::Config(format!(
                    "unknown operator {other:?} in sensitive rule"
                )))
            }
        };
        let value: f64 = tokens[2]
            .parse()
            .map_err(|_| Error::Config(format!("invalid rule value {:?}", tokens[2])))?;
        Ok(SensitiveRule {
            attribute: tokens[0].to_string(),
            op,
            value,
        })
    }
}

/// Outcome of labelling, including data-quality notes for the run report.
#[derive(Debug, Clone)]
pub struct SensitiveLabels {
    pub labels: Vec<bool>,
    /// Items whose attribute value was missing; they default to group 0.
    pub missing_attribute: usize,
    /// Set when one of the groups came out empty.
    pub warning: Option<String>,
}

/// Evaluates a sensitive rule against item metadata. The only attribute
/// currently backed by metadata is `year`; unknown names are config errors.
pub fn label_sensitive(meta: &ItemMetadata, rule: &SensitiveRule) -> Result<SensitiveLabels> {
    if rule.attribute != "year" {
        return Err(Error::Config(format!(
            "unknown item attribute {:?} in sensitive rule (known: year)",
            rule.attribute
        )));
    }
    let mut labels = Vec::with_capacity(meta.n_items());
    let mut missing = 0usize;
    for item in 0..meta.n_items() as u32 {
        match meta.year(item) {
            Some(y) => labels.push(rule.apply(y as f64)),
            None => {
                missing += 1;
                labels.push(false);
            }
        }
    }
    let ones = labels.iter().filter(|&&l| l).count();
    let warning = if ones == 0 || ones == labels.len() {
        Some(format!(
            "sensitive rule {} {:?} {} labels all items in one group ({} of {} in group 1)",
            rule.attribute, rule.op, rule.value, ones, labels.len(),
        ))
    } else {
        None
    };
    Ok(SensitiveLabels {
        labels,
        missing_attribute: missing,
        warning,
    })
}

/// The assembled per-item economics, aligned to the dataset's item index.
#[derive(Debug, Clone)]
pub struct EconomicsTable {
    items: Vec<ItemEconomics>,
}

impl EconomicsTable {
    pub fn new(items: Vec<ItemEconomics>) -> Self {
        EconomicsTable { items }
    }

    /// Runs the full attribute simulation: margins, providers, and (when a
    /// rule and metadata are given) sensitive labels. Each stage draws from
    /// its own seed stream so adding a stage never perturbs the others.
    pub fn simulate(
        ds: &RatingsDataset,
        n_providers: u32,
        dist: ProviderDist,
        profits: &ProfitParams,
        sensitive: Option<(&ItemMetadata, &SensitiveRule)>,
        seed: u64,
    ) -> Result<(Self, Option<String>)> {
        let mut items = sample_item_profits(ds, profits, seed)?;
        let providers = assign_providers(ds, n_providers, dist, seed.wrapping_add(1))?;
        for (item, provider) in items.iter_mut().zip(providers) {
            item.provider = provider;
        }
        let mut warning = None;
        if let Some((meta, rule)) = sensitive {
            let labelled = label_sensitive(meta, rule)?;
            for (item, label) in items.iter_mut().zip(labelled.labels) {
                item.sensitive = label;
            }
            warning = labelled.warning;
        }
        Ok((EconomicsTable { items }, warning))
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn items(&self) -> &[ItemEconomics] {
        &self.items
    }

    pub fn get(&self, item: u32) -> &ItemEconomics {
        &self.items[item as usize]
    }

    pub fn margin(&self, item: u32) -> f64 {
        self.items[item as usize].margin
    }

    pub fn price(&self, item: u32) -> f64 {
        self.items[item as usize].price
    }

    pub fn provider(&self, item: u32) -> u32 {
        self.items[item as usize].provider
    }

    pub fn sensitive(&self, item: u32) -> bool {
        self.items[item as usize].sensitive
    }

    pub fn n_providers(&self) -> u32 {
        self.items.iter().map(|i| i.provider + 1).max().unwrap_or(0)
    }

    /// Catalog sizes indexed by provider id.
    pub fn catalog_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_providers() as usize];
        for item in &self.items {
            sizes[item.provider as usize] += 1;
        }
        sizes
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("item_id,provider_id,price,cost,margin,sensitive\n");
        for item in &self.items {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                item.item_id,
                item.provider,
                item.price,
                item.cost,
                item.margin,
                item.sensitive as u8
            ));
        }
        out
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let content = std::fs::read_to_string(path)?;
        let mut items = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let fail = |msg: &str| Error::Parse {
                path: display.clone(),
                line: idx + 1,
                msg: msg.to_string(),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(fail("expected 6 fields"));
            }
            items.push(ItemEconomics {
                item_id: fields[0].parse().map_err(|_| fail("invalid item_id"))?,
                provider: fields[1].parse().map_err(|_| fail("invalid provider_id"))?,
                price: fields[2].parse().map_err(|_| fail("invalid price"))?,
                cost: fields[3].parse().map_err(|_| fail("invalid cost"))?,
                margin: fields[4].parse().map_err(|_| fail("invalid margin"))?,
                sensitive: fields[5].trim() == "1",
            });
        }
        Ok(EconomicsTable { items })
    }
}
