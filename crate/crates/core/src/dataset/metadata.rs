//! Item metadata ingestion (pipe-delimited MovieLens u.item layout), used for
//! sensitive-attribute rules such as release year.

use std::path::Path;

use crate::error::{Error, Result};

use super::RatingsDataset;

/// Per-item attributes aligned to the dataset's item index.
#[derive(Debug, Clone)]
pub struct ItemMetadata {
    titles: Vec<String>,
    years: Vec<Option<i32>>,
}

impl ItemMetadata {
    pub fn new(titles: Vec<String>, years: Vec<Option<i32>>) -> Self {
        assert_eq!(titles.len(), years.len());
        ItemMetadata { titles, years }
    }

    pub fn n_items(&self) -> usize {
        self.years.len()
    }

    pub fn title(&self, item: u32) -> &str {
        &self.titles[item as usize]
    }

    pub fn year(&self, item: u32) -> Option<i32> {
        self.years[item as usize]
    }
}

/// Loads pipe-delimited item metadata (`id|title|release_date|...`) and aligns
/// it to the dataset's item index. Items absent from the file keep empty
/// attributes; file entries for unknown items are ignored.
pub fn load_item_metadata(path: impl AsRef<Path>, ds: &RatingsDataset) -> Result<ItemMetadata> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let content = std::fs::read_to_string(path)?;
    let mut titles = vec![String::new(); ds.n_items()];
    let mut years = vec![None; ds.n_items()];
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('|');
        let id: u32 = fields
            .next()
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Parse {
                path: display.clone(),
                line: idx + 1,
                msg: "invalid item id".to_string(),
            })?;
        let title = fields.next().unwrap_or("").trim();
        let release_date = fields.next().unwrap_or("").trim();
        if let Some(item) = ds.item_index(id) {
            titles[item as usize] = title.to_string();
            years[item as usize] = year_from_title(title).or_else(|| year_from_date(release_date));
        }
    }
    Ok(ItemMetadata { titles, years })
}

/// Extracts a 4-digit year from a trailing "(YYYY)" in the title.
fn year_from_title(title: &str) -> Option<i32> {
    let open = title.rfind('(')?;
    let close = title[open..].find(')')? + open;
    let inner = &title[open + 1..close];
    if inner.len() == 4 && inner.bytes().all(|b| b.is_ascii_digit()) {
        inner.parse().ok()
    } else {
        None
    }
}

/// Extracts the year from a "DD-Mon-YYYY" release date.
fn year_from_date(date: &str) -> Option<i32> {
    let tail = date.rsplit('-').next()?;
    if tail.len() == 4 && tail.bytes().all(|b| b.is_ascii_digit()) {
        tail.parse().ok()
    } else {
        None
    }
}
