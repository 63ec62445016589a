//! Caption-contest data: per-contest caption ratings used as Bernoulli arm means.
//!
//! Input is a CSV with header `contest_id,caption_id,mean,count`, one row per
//! caption. Contests keep the order in which they first appear in the file,
//! which is expected to be chronological.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use log::warn;
use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Caption {
    pub id: String,
    pub mean: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contest {
    pub id: String,
    pub captions: Vec<Caption>,
}

impl Contest {
    /// The `n` captions with the highest empirical means, best first.
    /// Ties keep file order. `None` if the contest has fewer than `n` captions.
    pub fn top(&self, n: usize) -> Option<Vec<&Caption>> {
        if self.captions.len() < n {
            return None;
        }
        let mut sorted: Vec<&Caption> = self.captions.iter().collect();
        sorted.sort_by(|a, b| b.mean.total_cmp(&a.mean));
        sorted.truncate(n);
        Some(sorted)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CaptionDataset {
    pub contests: Vec<Contest>,
}

#[derive(Debug, Deserialize)]
struct Row {
    contest_id: String,
    caption_id: String,
    mean: f64,
    count: u64,
}

const HEADER: [&str; 4] = ["contest_id", "caption_id", "mean", "count"];

impl CaptionDataset {
    pub fn from_reader<R: Read>(reader: R, source: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != HEADER {
            return Err(Error::Parse {
                path: source.to_path_buf(),
                line: 1,
                message: format!("expected header {}, got {:?}", HEADER.join(","), header),
            });
        }
        let mut contests: Vec<Contest> = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| Error::Parse {
                path: source.to_path_buf(),
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            if !(0.0..=1.0).contains(&row.mean) {
                return Err(Error::data(format!(
                    "caption {} of contest {} has mean {} outside [0, 1]",
                    row.caption_id, row.contest_id, row.mean
                )));
            }
            let caption = Caption {
                id: row.caption_id,
                mean: row.mean,
                count: row.count,
            };
            match contests.iter_mut().find(|c| c.id == row.contest_id) {
                Some(c) => c.captions.push(caption),
                None => contests.push(Contest {
                    id: row.contest_id,
                    captions: vec![caption],
                }),
            }
        }
        if contests.is_empty() {
            return Err(Error::data(format!(
                "{} contains no captions",
                source.display()
            )));
        }
        Ok(Self { contests })
    }
}

pub fn load_captions(path: &Path) -> Result<CaptionDataset> {
    let file = File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    CaptionDataset::from_reader(file, path)
}

/// Arm pools of the contests that have at least `top_n` captions, in order.
/// Each pool holds the top-`top_n` caption means, best first.
pub fn caption_pools(dataset: &CaptionDataset, top_n: usize) -> Vec<(String, Vec<f64>)> {
    dataset
        .contests
        .iter()
        .filter_map(|c| match c.top(top_n) {
            Some(top) => Some((c.id.clone(), top.iter().map(|cap| cap.mean).collect())),
            None => {
                warn!(
                    "skipping contest {}: {} captions, need {top_n}",
                    c.id,
                    c.captions.len()
                );
                None
            }
        })
        .collect()
}
