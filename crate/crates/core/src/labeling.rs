//! Clean-shaven / facial-hair labeling from attribute confidences.
//!
//! An attribute counts as predicted when its confidence is at or above the
//! threshold. An image is clean-shaven when both "no beard" and "no mustache"
//! are predicted, and facial-hair when none of "no beard", "no mustache" or
//! "5 o'clock shadow" is predicted. Everything else is excluded.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AttributeScores, DatasetManifest};

pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HairLabel {
    #[serde(rename = "CS")]
    CleanShaven,
    #[serde(rename = "FH")]
    FacialHair,
    Excluded,
}

impl HairLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            HairLabel::CleanShaven => "CS",
            HairLabel::FacialHair => "FH",
            HairLabel::Excluded => "Excluded",
        }
    }
}

impl std::str::FromStr for HairLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "CS" | "cs" => Ok(HairLabel::CleanShaven),
            "FH" | "fh" => Ok(HairLabel::FacialHair),
            "Excluded" | "excluded" => Ok(HairLabel::Excluded),
            other => Err(Error::parse("label", format!("unknown label `{other}`"))),
        }
    }
}

impl std::fmt::Display for HairLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(threshold))
    }
}

pub fn classify_hair(scores: &AttributeScores, threshold: f64) -> Result<HairLabel> {
    check_threshold(threshold)?;
    scores.validate()?;
    let predicted = |v: f64| v >= threshold;
    let label = if predicted(scores.no_beard) && predicted(scores.no_mustache) {
        HairLabel::CleanShaven
    } else if !predicted(scores.no_beard)
        && !predicted(scores.no_mustache)
        && !predicted(scores.five_oclock_shadow)
    {
        HairLabel::FacialHair
    } else {
        HairLabel::Excluded
    };
    Ok(label)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub cs: usize,
    pub fh: usize,
    pub excluded: usize,
    /// Records with no attribute row; also counted in `excluded`.
    pub missing_attributes: usize,
}

impl LabelCounts {
    fn add(&mut self, label: HairLabel) {
        match label {
            HairLabel::CleanShaven => self.cs += 1,
            HairLabel::FacialHair => self.fh += 1,
            HairLabel::Excluded => self.excluded += 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Labels {
    pub by_image: BTreeMap<String, HairLabel>,
    pub per_cohort: BTreeMap<String, LabelCounts>,
}

impl Labels {
    pub fn get(&self, image_id: &str) -> HairLabel {
        self.by_image
            .get(image_id)
            .copied()
            .unwrap_or(HairLabel::Excluded)
    }

    pub fn totals(&self) -> LabelCounts {
        self.per_cohort.values().fold(LabelCounts::default(), |mut acc, c| {
            acc.cs += c.cs;
            acc.fh += c.fh;
            acc.excluded += c.excluded;
            acc.missing_attributes += c.missing_attributes;
            acc
        })
    }
}

pub fn label_dataset(manifest: &DatasetManifest, threshold: f64) -> Result<Labels> {
    check_threshold(threshold)?;
    let mut labels = Labels::default();
    for r in &manifest.records {
        let counts = labels.per_cohort.entry(r.cohort.clone()).or_default();
        let label = match &r.attributes {
            Some(a) => classify_hair(a, threshold)?,
            None => {
                counts.missing_attributes += 1;
                HairLabel::Excluded
            }
        };
        counts.add(label);
        labels.by_image.insert(r.image_id.clone(), label);
    }
    let totals = labels.totals();
    if totals.missing_attributes > 0 {
        log::warn!(
            "{} records have no attribute scores and were excluded",
            totals.missing_attributes
        );
    }
    Ok(labels)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &Labels) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["image_id", "label"])?;
    for (id, label) in &labels.by_image {
        w.write_record([id.as_str(), label.as_str()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads `image_id,label`. Per-cohort counts are not recoverable from the file
/// alone and are left empty.
pub fn load_labels(path: impl AsRef<Path>) -> Result<HashMap<String, HairLabel>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = HashMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let (Some(id), Some(label)) = (row.get(0), row.get(1)) else {
            return Err(Error::parse(format!("labels row {}", i + 2), "expected image_id,label"));
        };
        if out.insert(id.to_string(), label.parse()?).is_some() {
            return Err(Error::DuplicateId(id.to_string()));
        }
    }
    Ok(out)
}

impl From<HashMap<String, HairLabel>> for Labels {
    fn from(map: HashMap<String, HairLabel>) -> Self {
        Labels {
            by_image: map.into_iter().collect(),
            per_cohort: BTreeMap::new(),
        }
    }
}
