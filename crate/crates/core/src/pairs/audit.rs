//! All-pairs audit of one or more cohorts.
//!
//! Usable images (CS or FH label, embedding present) are ordered by image id.
//! The upper triangle of the pair matrix is cut into square tiles; each row of
//! tiles is one work unit with private statistics. Unit results are merged
//! with [`merge_tree`] in unit order, so the report does not depend on the
//! worker count.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::counts::{count_pairs, PairClass, PairGroup, PairKind, SubjectTally};
use super::similarity::UnitRows;
use super::stats::{dprime, merge_tree, StreamStats};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::labeling::{HairLabel, Labels};
use crate::seed::{lane_key, str_key, unit_from_key, Lane};

pub const DEFAULT_TILE: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpostorSampling {
    /// Target number of impostor pairs per cohort, across all three groups.
    pub target: u64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct AuditOptions {
    /// Worker threads; `None` uses rayon's default pool.
    pub threads: Option<usize>,
    pub impostor_sampling: Option<ImpostorSampling>,
    pub tile: usize,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            threads: None,
            impostor_sampling: None,
            tile: DEFAULT_TILE,
        }
    }
}

/// Which training manifest produced the embeddings, for grid figures.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingTag {
    pub protocol: String,
    pub grid_point: usize,
    pub repetition: usize,
    pub subjects: usize,
    pub images_per_subject: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub genuine: Option<StreamStats>,
    pub impostor: Option<StreamStats>,
    pub dprime: Option<f64>,
}

impl GroupReport {
    fn from_cells(genuine: StreamStats, impostor: StreamStats) -> Self {
        let dprime = dprime(&genuine, &impostor).ok();
        Self {
            genuine: (!genuine.is_empty()).then_some(genuine),
            impostor: (!impostor.is_empty()).then_some(impostor),
            dprime,
        }
    }

    pub fn cell(&self, kind: PairKind) -> Option<&StreamStats> {
        match kind {
            PairKind::Genuine => self.genuine.as_ref(),
            PairKind::Impostor => self.impostor.as_ref(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub images: usize,
    pub subjects: usize,
    pub cs_images: usize,
    pub fh_images: usize,
    /// Labeled CS/FH images dropped because they had no embedding.
    pub skipped_without_embedding: usize,
    /// Closed-form pair counts for every cell before any impostor sampling.
    pub expected_pairs: BTreeMap<PairGroup, [u64; 2]>,
    pub groups: BTreeMap<PairGroup, GroupReport>,
}

impl CohortReport {
    pub fn dprime(&self, group: PairGroup) -> Option<f64> {
        self.groups.get(&group).and_then(|g| g.dprime)
    }

    pub fn cell(&self, class: PairClass) -> Option<&StreamStats> {
        self.groups.get(&class.group).and_then(|g| g.cell(class.kind))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub cohorts: BTreeMap<String, CohortReport>,
    pub unit_norm_embeddings: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impostor_sampling: Option<ImpostorSampling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingTag>,
}

impl AuditReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

struct CohortData {
    rows: UnitRows,
    subject: Vec<u32>,
    fh: Vec<bool>,
    keys: Vec<u64>,
}

type Cells = [StreamStats; 6];

fn empty_cells() -> Cells {
    std::array::from_fn(|_| StreamStats::new())
}

pub fn audit(
    dataset: &Dataset,
    labels: &Labels,
    cohort_filter: Option<&[String]>,
    options: &AuditOptions,
) -> Result<AuditReport> {
    let store = dataset
        .embeddings
        .as_ref()
        .ok_or_else(|| Error::InsufficientData("no embeddings loaded".into()))?;
    if options.tile == 0 {
        return Err(Error::InvalidSpec("tile size must be positive".into()));
    }
    let cohorts: BTreeSet<String> = match cohort_filter {
        Some(list) if !list.is_empty() => {
            for c in list {
                if !dataset.manifest.cohorts.contains(c) {
                    return Err(Error::InsufficientData(format!("cohort `{c}` not in manifest")));
                }
            }
            list.iter().cloned().collect()
        }
        _ => dataset.manifest.cohorts.clone(),
    };
    if cohorts.is_empty() {
        return Err(Error::InsufficientData("dataset has no records".into()));
    }

    let run = || -> Result<BTreeMap<String, CohortReport>> {
        cohorts
            .iter()
            .map(|c| audit_cohort(dataset, labels, c, options).map(|r| (c.clone(), r)))
            .collect()
    };
    let reports = match options.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    Ok(AuditReport {
        cohorts: reports,
        unit_norm_embeddings: store.is_unit_norm(),
        impostor_sampling: options.impostor_sampling,
        training: None,
    })
}

fn audit_cohort(
    dataset: &Dataset,
    labels: &Labels,
    cohort: &str,
    options: &AuditOptions,
) -> Result<CohortReport> {
    let dim = dataset.embedding_dim().unwrap_or(0);
    let mut skipped = 0;
    let mut usable = Vec::new();
    for r in dataset.records().iter().filter(|r| r.cohort == cohort) {
        let label = labels.get(&r.image_id);
        if label == HairLabel::Excluded {
            continue;
        }
        match dataset.embedding(r) {
            Some(e) => usable.push((r, label, e)),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("cohort {cohort}: {skipped} labeled images have no embedding");
    }

    let tally = SubjectTally::from_labeled(usable.iter().map(|(r, l, _)| (r.subject_id.as_str(), *l)));
    let with_two = tally.subjects().filter(|(_, cs, fh)| cs + fh >= 2).count();
    if with_two < 2 {
        return Err(Error::InsufficientData(format!(
            "cohort {cohort}: need at least 2 subjects with 2 or more usable images, found {with_two}"
        )));
    }

    let subject_ids: BTreeMap<&str, u32> = tally
        .subjects()
        .enumerate()
        .map(|(i, (s, _, _))| (s, i as u32))
        .collect();
    let data = CohortData {
        rows: UnitRows::new(dim, usable.iter().map(|(_, _, e)| *e))?,
        subject: usable.iter().map(|(r, _, _)| subject_ids[r.subject_id.as_str()]).collect(),
        fh: usable.iter().map(|(_, l, _)| *l == HairLabel::FacialHair).collect(),
        keys: usable.iter().map(|(r, _, _)| str_key(&r.image_id)).collect(),
    };

    let mut expected_pairs = BTreeMap::new();
    let mut impostor_total = 0;
    for g in PairGroup::ALL {
        let gen = count_pairs(&tally, PairClass::new(PairKind::Genuine, g));
        let imp = count_pairs(&tally, PairClass::new(PairKind::Impostor, g));
        impostor_total += imp;
        expected_pairs.insert(g, [gen, imp]);
    }
    let keep_rate = options.impostor_sampling.map(|s| {
        let rate = if impostor_total == 0 {
            0.0
        } else {
            (s.target as f64 / impostor_total as f64).min(1.0)
        };
        (rate, s.seed)
    });

    let n = usable.len();
    let tile = options.tile;
    let blocks = n.div_ceil(tile);
    let units: Vec<Cells> = (0..blocks)
        .into_par_iter()
        .map(|bi| tile_row(&data, bi, blocks, tile, keep_rate))
        .collect();

    let mut per_cell: Vec<Vec<StreamStats>> = vec![Vec::with_capacity(units.len()); 6];
    for unit in units {
        for (cell, s) in unit.into_iter().enumerate() {
            per_cell[cell].push(s);
        }
    }
    let mut merged: Vec<StreamStats> = per_cell.into_iter().map(merge_tree).collect();

    let mut groups = BTreeMap::new();
    for g in PairGroup::ALL {
        let imp = std::mem::take(&mut merged[PairClass::new(PairKind::Impostor, g).cell()]);
        let gen = std::mem::take(&mut merged[PairClass::new(PairKind::Genuine, g).cell()]);
        groups.insert(g, GroupReport::from_cells(gen, imp));
    }

    Ok(CohortReport {
        images: n,
        subjects: tally.subjects().count(),
        cs_images: data.fh.iter().filter(|f| !**f).count(),
        fh_images: data.fh.iter().filter(|f| **f).count(),
        skipped_without_embedding: skipped,
        expected_pairs,
        groups,
    })
}

/// Tiles (bi, bj) for bj >= bi. Within the diagonal tile only i < j.
fn tile_row(
    data: &CohortData,
    bi: usize,
    blocks: usize,
    tile: usize,
    keep_rate: Option<(f64, u64)>,
) -> Cells {
    let n = data.subject.len();
    let mut cells = empty_cells();
    let rows_i = bi * tile..((bi + 1) * tile).min(n);
    for bj in bi..blocks {
        let cols = bj * tile..((bj + 1) * tile).min(n);
        for i in rows_i.clone() {
            let start = if bi == bj { i + 1 } else { cols.start };
            let (si, fi) = (data.subject[i], data.fh[i]);
            for j in start..cols.end {
                let genuine = data.subject[j] == si;
                if !genuine {
                    if let Some((rate, seed)) = keep_rate {
                        let key = lane_key(seed, Lane::ImpostorSample, &[data.keys[i], data.keys[j]]);
                        if unit_from_key(key) >= rate {
                            continue;
                        }
                    }
                }
                let group = match (fi, data.fh[j]) {
                    (false, false) => 0,
                    (true, true) => 2,
                    _ => 1,
                };
                let cell = group * 2 + usize::from(!genuine);
                cells[cell].accumulate(data.rows.cosine(i, j));
            }
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{DatasetManifest, EmbeddingStore, ImageRecord, Sex};

    fn dataset(specs: &[(&str, &str, HairLabel, [f32; 3])]) -> (Dataset, Labels) {
        let records = specs
            .iter()
            .map(|(id, subj, _, _)| ImageRecord {
                image_id: id.to_string(),
                subject_id: subj.to_string(),
                cohort: "C".into(),
                sex: Sex::Male,
                path: "x".into(),
                mask_path: None,
                attributes: None,
                embedding_ref: None,
            })
            .collect();
        let mut ds = Dataset::new(DatasetManifest::from_records(records).unwrap());
        let rows: Vec<Vec<f32>> = specs.iter().map(|s| s.3.to_vec()).collect();
        let ids: Vec<String> = specs.iter().map(|s| s.0.to_string()).collect();
        ds.attach_embeddings(EmbeddingStore::from_rows(&rows).unwrap(), &ids)
            .unwrap();
        let labels = Labels {
            by_image: specs.iter().map(|s| (s.0.to_string(), s.2)).collect(),
            ..Default::default()
        };
        (ds, labels)
    }

    #[test]
    fn no_fh_images_leaves_fh_cells_absent() {
        use HairLabel::CleanShaven as C;
        let (ds, labels) = dataset(&[
            ("a1", "a", C, [1.0, 0.1, 0.0]),
            ("a2", "a", C, [0.9, 0.2, 0.1]),
            ("a3", "a", C, [1.0, 0.0, 0.3]),
            ("b1", "b", C, [0.0, 1.0, 0.2]),
            ("b2", "b", C, [0.1, 0.9, 0.0]),
            ("b3", "b", C, [0.3, 1.0, 0.1]),
        ]);
        let rep = audit(&ds, &labels, None, &AuditOptions::default()).unwrap();
        let c = &rep.cohorts["C"];
        assert!(c.dprime(PairGroup::CsCs).is_some());
        for g in [PairGroup::CsFh, PairGroup::FhFh] {
            assert!(c.groups[&g].genuine.is_none());
            assert!(c.groups[&g].impostor.is_none());
            assert!(c.dprime(g).is_none());
        }
        assert_eq!(c.groups[&PairGroup::CsCs].genuine.as_ref().unwrap().n(), 6);
        assert_eq!(c.groups[&PairGroup::CsCs].impostor.as_ref().unwrap().n(), 9);
    }

    #[test]
    fn single_subject_rejected() {
        use HairLabel::CleanShaven as C;
        let (ds, labels) = dataset(&[("a1", "a", C, [1.0, 0.0, 0.0]), ("a2", "a", C, [0.0, 1.0, 0.0])]);
        assert!(matches!(
            audit(&ds, &labels, None, &AuditOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn tile_size_does_not_change_counts() {
        use HairLabel::{CleanShaven as C, FacialHair as F};
        let specs: Vec<(String, String, HairLabel, [f32; 3])> = (0..23)
            .map(|i| {
                let v = [(i as f32 * 0.7).sin(), (i as f32 * 1.3).cos(), 0.5];
                (format!("i{i:02}"), format!("s{}", i % 5), if i % 3 == 0 { F } else { C }, v)
            })
            .collect();
        let borrowed: Vec<(&str, &str, HairLabel, [f32; 3])> = specs
            .iter()
            .map(|(a, b, c, d)| (a.as_str(), b.as_str(), *c, *d))
            .collect();
        let (ds, labels) = dataset(&borrowed);
        let r1 = audit(&ds, &labels, None, &AuditOptions { tile: 4, ..Default::default() }).unwrap();
        let r2 = audit(&ds, &labels, None, &AuditOptions { tile: 64, ..Default::default() }).unwrap();
        for g in PairGroup::ALL {
            for k in [PairKind::Genuine, PairKind::Impostor] {
                let cl = PairClass::new(k, g);
                let (a, b) = (r1.cohorts["C"].cell(cl), r2.cohorts["C"].cell(cl));
                assert_eq!(a.map(StreamStats::n), b.map(StreamStats::n));
                if let (Some(a), Some(b)) = (a, b) {
                    assert!((a.mean() - b.mean()).abs() < 1e-12);
                }
            }
            let [gen, imp] = r1.cohorts["C"].expected_pairs[&g];
            let n = |k| r1.cohorts["C"].cell(PairClass::new(k, g)).map_or(0, StreamStats::n);
            assert_eq!((n(PairKind::Genuine), n(PairKind::Impostor)), (gen, imp));
        }
    }
}
