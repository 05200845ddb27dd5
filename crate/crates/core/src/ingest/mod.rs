//! Input artifacts: dataset manifest, attribute scores, embeddings, landmarks
//! and facial-hair masks, assembled into an immutable [`Dataset`].

mod embeddings;
mod landmarks;
mod manifest;
mod mask;

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embeddings::{load_embedding_ids, load_embeddings, write_embedding_ids, EmbeddingStore};
pub use landmarks::{load_landmarks, write_landmarks, LandmarkSet, Point, LANDMARK_COUNT};
pub use manifest::{
    load_attributes, load_manifest, write_attributes, write_manifest, ATTRIBUTE_COLUMNS,
};
pub use mask::{load_mask, HairMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
    Unknown,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
            Sex::Unknown => "unknown",
        }
    }
}

impl std::str::FromStr for Sex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Sex::Male),
            "female" | "f" => Ok(Sex::Female),
            "unknown" | "u" | "" => Ok(Sex::Unknown),
            other => Err(Error::parse("sex column", format!("unrecognised value `{other}`"))),
        }
    }
}

/// Facial-hair attribute confidences, each in [0, 1].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeScores {
    pub no_beard: f64,
    pub chin: f64,
    pub side_to_side: f64,
    pub no_mustache: f64,
    pub mustache_connected: f64,
    pub mustache_isolated: f64,
    pub five_oclock_shadow: f64,
    pub short: f64,
    pub medium: f64,
    pub long: f64,
}

impl AttributeScores {
    pub fn fields(&self) -> [(&'static str, f64); 10] {
        [
            ("no_beard", self.no_beard),
            ("chin", self.chin),
            ("side_to_side", self.side_to_side),
            ("no_mustache", self.no_mustache),
            ("mustache_connected", self.mustache_connected),
            ("mustache_isolated", self.mustache_isolated),
            ("five_oclock_shadow", self.five_oclock_shadow),
            ("short", self.short),
            ("medium", self.medium),
            ("long", self.long),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (field, value) in self.fields() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfRangeScore { field, value });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub subject_id: String,
    pub cohort: String,
    pub sex: Sex,
    pub path: PathBuf,
    pub mask_path: Option<PathBuf>,
    pub attributes: Option<AttributeScores>,
    /// Row in the embedding store.
    pub embedding_ref: Option<usize>,
}

/// Validated records, sorted by `image_id`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<ImageRecord>,
    pub cohorts: BTreeSet<String>,
}

impl DatasetManifest {
    pub fn from_records(mut records: Vec<ImageRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        for pair in records.windows(2) {
            if pair[0].image_id == pair[1].image_id {
                return Err(Error::DuplicateId(pair[0].image_id.clone()));
            }
        }
        for r in &records {
            if r.image_id.is_empty() {
                return Err(Error::MissingField("image_id".into()));
            }
            if r.subject_id.is_empty() {
                return Err(Error::MissingField(format!("subject_id (image {})", r.image_id)));
            }
            if let Some(a) = &r.attributes {
                a.validate()?;
            }
        }
        let cohorts = records.iter().map(|r| r.cohort.clone()).collect();
        Ok(Self { records, cohorts })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Everything the pipeline reads, joined on `image_id`. Immutable once built.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub embeddings: Option<EmbeddingStore>,
    pub landmarks: HashMap<String, LandmarkSet>,
    index: HashMap<String, usize>,
}

/// Counts of side-file rows that did not match any manifest record.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct JoinReport {
    pub unmatched_attributes: usize,
    pub unmatched_embeddings: usize,
    pub unmatched_landmarks: usize,
}

impl Dataset {
    pub fn new(manifest: DatasetManifest) -> Self {
        let index = manifest
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.image_id.clone(), i))
            .collect();
        Self {
            manifest,
            embeddings: None,
            landmarks: HashMap::new(),
            index,
        }
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.manifest.records
    }

    pub fn record(&self, image_id: &str) -> Option<&ImageRecord> {
        self.index.get(image_id).map(|&i| &self.manifest.records[i])
    }

    pub fn position(&self, image_id: &str) -> Option<usize> {
        self.index.get(image_id).copied()
    }

    pub fn attach_attributes(
        &mut self,
        attributes: impl IntoIterator<Item = (String, AttributeScores)>,
    ) -> Result<usize> {
        let mut unmatched = 0;
        for (id, scores) in attributes {
            scores.validate()?;
            match self.index.get(&id) {
                Some(&i) => self.manifest.records[i].attributes = Some(scores),
                None => unmatched += 1,
            }
        }
        Ok(unmatched)
    }

    /// Links each manifest record to its embedding row via the companion id list.
    pub fn attach_embeddings(&mut self, store: EmbeddingStore, ids: &[String]) -> Result<usize> {
        if ids.len() != store.count() {
            return Err(Error::EmbeddingDim(format!(
                "id list has {} entries but store has {} rows",
                ids.len(),
                store.count()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        let mut unmatched = 0;
        for (row, id) in ids.iter().enumerate() {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
            match self.index.get(id) {
                Some(&i) => self.manifest.records[i].embedding_ref = Some(row),
                None => unmatched += 1,
            }
        }
        self.embeddings = Some(store);
        Ok(unmatched)
    }

    pub fn attach_landmarks(&mut self, landmarks: HashMap<String, LandmarkSet>) -> usize {
        let mut unmatched = 0;
        for (id, set) in landmarks {
            if self.index.contains_key(&id) {
                self.landmarks.insert(id, set);
            } else {
                unmatched += 1;
            }
        }
        unmatched
    }

    pub fn embedding(&self, record: &ImageRecord) -> Option<&[f32]> {
        let store = self.embeddings.as_ref()?;
        record.embedding_ref.map(|row| store.row(row))
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embeddings.as_ref().map(EmbeddingStore::dim)
    }
}
