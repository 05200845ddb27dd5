//! Controlled training manifests with a fixed identity set and a varying
//! share of facial-hair images.
//!
//! Male subjects come from the superset of subjects owning at least `k`
//! clean-shaven and `k` facial-hair images. The first `S` of them in
//! lexicographic order form the identity set of every manifest. Two protocols
//! vary the facial-hair frequency:
//!
//! - across subjects: `x` subjects contribute `k` CS images, the other `S - x`
//!   contribute `k` FH images;
//! - within subjects: every subject contributes `x` CS and `k - x` FH images.
//!
//! A fixed female complement is appended unchanged.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ImageRecord, Sex};
use crate::labeling::{HairLabel, Labels};
use crate::seed::{lane_key, lane_rng, str_key, Lane};

pub const DEFAULT_SUBJECTS: usize = 5000;
pub const DEFAULT_IMAGES_PER_SUBJECT: usize = 12;
pub const DEFAULT_REPETITIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    #[serde(rename = "across")]
    AcrossSubjects,
    #[serde(rename = "within")]
    WithinSubjects,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::AcrossSubjects => "across",
            Protocol::WithinSubjects => "within",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "across" | "across-subjects" => Ok(Protocol::AcrossSubjects),
            "within" | "within-subjects" => Ok(Protocol::WithinSubjects),
            other => Err(Error::InvalidSpec(format!("unknown protocol `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub subject_id: String,
    pub image_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSpec {
    pub protocol: Protocol,
    /// CS subjects (across) or CS images per subject (within).
    pub grid_point: usize,
    pub subjects_male: usize,
    pub images_per_subject: usize,
    pub female_pool: Vec<PoolEntry>,
    pub repetition: usize,
    pub seed: u64,
}

impl ManifestSpec {
    pub fn validate(&self) -> Result<()> {
        if self.images_per_subject == 0 {
            return Err(Error::InvalidSpec("images per subject must be positive".into()));
        }
        let bound = match self.protocol {
            Protocol::AcrossSubjects => self.subjects_male,
            Protocol::WithinSubjects => self.images_per_subject,
        };
        if self.grid_point > bound {
            return Err(Error::InvalidSpec(format!(
                "grid point {} exceeds {} for the {} protocol",
                self.grid_point,
                bound,
                self.protocol.as_str()
            )));
        }
        Ok(())
    }

    pub fn expected_len(&self) -> usize {
        self.subjects_male * self.images_per_subject + self.female_pool.len()
    }

    pub fn expected_cs(&self) -> usize {
        match self.protocol {
            Protocol::AcrossSubjects => self.grid_point * self.images_per_subject,
            Protocol::WithinSubjects => self.subjects_male * self.grid_point,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntryLabel {
    #[serde(rename = "CS")]
    CleanShaven,
    #[serde(rename = "FH")]
    FacialHair,
    #[serde(rename = "female")]
    Female,
}

impl EntryLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryLabel::CleanShaven => "CS",
            EntryLabel::FacialHair => "FH",
            EntryLabel::Female => "female",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub image_id: String,
    pub label: EntryLabel,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingManifest {
    pub entries: Vec<ManifestEntry>,
    pub provenance: ManifestSpec,
}

impl TrainingManifest {
    pub fn count(&self, label: EntryLabel) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["subject_id", "image_id", "label"])?;
        for e in &self.entries {
            w.write_record([e.subject_id.as_str(), &e.image_id, e.label.as_str()])?;
        }
        w.into_inner()
            .map_err(|e| Error::parse("manifest csv", e.to_string()))
    }

    /// Writes the CSV and a `<out>.json` sidecar holding the spec.
    pub fn write(&self, out: impl AsRef<Path>) -> Result<()> {
        let out = out.as_ref();
        std::fs::write(out, self.to_csv()?).map_err(|e| Error::io(out, e))?;
        let side = sidecar_path(out);
        let mut f = std::fs::File::create(&side).map_err(|e| Error::io(&side, e))?;
        serde_json::to_writer_pretty(&mut f, &self.provenance)?;
        f.write_all(b"\n").map_err(|e| Error::io(&side, e))?;
        Ok(())
    }
}

pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Candidate CS and FH images per male subject, each list sorted by image id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SubjectPools {
    pools: BTreeMap<String, (Vec<String>, Vec<String>)>,
}

impl SubjectPools {
    /// Female records are left out; they enter manifests only via the
    /// explicit female pool.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a ImageRecord>, labels: &Labels) -> Self {
        let mut pools: BTreeMap<String, (Vec<String>, Vec<String>)> = BTreeMap::new();
        for r in records {
            if r.sex == Sex::Female {
                continue;
            }
            match labels.get(&r.image_id) {
                HairLabel::CleanShaven => pools.entry(r.subject_id.clone()).or_default().0.push(r.image_id.clone()),
                HairLabel::FacialHair => pools.entry(r.subject_id.clone()).or_default().1.push(r.image_id.clone()),
                HairLabel::Excluded => {}
            }
        }
        for (cs, fh) in pools.values_mut() {
            cs.sort();
            fh.sort();
        }
        Self { pools }
    }

    pub fn insert(&mut self, subject: &str, cs: Vec<String>, fh: Vec<String>) {
        let mut entry = (cs, fh);
        entry.0.sort();
        entry.1.sort();
        self.pools.insert(subject.to_string(), entry);
    }

    pub fn cs(&self, subject: &str) -> &[String] {
        self.pools.get(subject).map_or(&[], |p| &p.0)
    }

    pub fn fh(&self, subject: &str) -> &[String] {
        self.pools.get(subject).map_or(&[], |p| &p.1)
    }

    pub fn subjects(&self) -> impl Iterator<Item = &str> {
        self.pools.keys().map(String::as_str)
    }
}

/// Subjects with at least `k` CS and `k` FH images, sorted by subject id.
pub fn find_superset(pools: &SubjectPools, k: usize) -> Vec<String> {
    pools
        .pools
        .iter()
        .filter(|(_, (cs, fh))| cs.len() >= k && fh.len() >= k)
        .map(|(s, _)| s.clone())
        .collect()
}

fn identity_set(spec: &ManifestSpec, pools: &SubjectPools) -> Result<Vec<String>> {
    let mut eligible = find_superset(pools, spec.images_per_subject);
    if eligible.len() < spec.subjects_male {
        return Err(Error::InsufficientSubjects {
            needed: spec.subjects_male,
            available: eligible.len(),
        });
    }
    eligible.truncate(spec.subjects_male);
    Ok(eligible)
}

/// Partial Fisher-Yates: `n` distinct items, returned sorted.
fn draw(pool: &[String], n: usize, rng: &mut ChaCha8Rng, subject: &str, kind: &'static str) -> Result<Vec<String>> {
    if pool.len() < n {
        return Err(Error::InsufficientImages {
            subject: subject.to_string(),
            kind,
            needed: n,
            available: pool.len(),
        });
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    for i in 0..n {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    let mut out: Vec<String> = idx[..n].iter().map(|&i| pool[i].clone()).collect();
    out.sort();
    Ok(out)
}

fn draw_cs(spec: &ManifestSpec, pools: &SubjectPools, subject: &str, n: usize) -> Result<Vec<String>> {
    let mut rng = lane_rng(spec.seed, Lane::CsImages, &[str_key(subject)]);
    draw(pools.cs(subject), n, &mut rng, subject, "CS")
}

fn draw_fh(spec: &ManifestSpec, pools: &SubjectPools, subject: &str, n: usize) -> Result<Vec<String>> {
    let mut rng = lane_rng(spec.seed, Lane::FhImages, &[str_key(subject)]);
    draw(pools.fh(subject), n, &mut rng, subject, "FH")
}

fn push(entries: &mut Vec<ManifestEntry>, subject: &str, ids: Vec<String>, label: EntryLabel) {
    entries.extend(ids.into_iter().map(|image_id| ManifestEntry {
        subject_id: subject.to_string(),
        image_id,
        label,
    }));
}

fn finish(mut entries: Vec<ManifestEntry>, spec: &ManifestSpec) -> Result<TrainingManifest> {
    for f in &spec.female_pool {
        entries.push(ManifestEntry {
            subject_id: f.subject_id.clone(),
            image_id: f.image_id.clone(),
            label: EntryLabel::Female,
        });
    }
    let mut seen = HashSet::with_capacity(entries.len());
    for e in &entries {
        if !seen.insert(e.image_id.as_str()) {
            return Err(Error::DuplicateId(e.image_id.clone()));
        }
    }
    Ok(TrainingManifest {
        entries,
        provenance: spec.clone(),
    })
}

pub fn build_across(spec: &ManifestSpec, pools: &SubjectPools) -> Result<TrainingManifest> {
    if spec.protocol != Protocol::AcrossSubjects {
        return Err(Error::InvalidSpec("build_across needs the across protocol".into()));
    }
    spec.validate()?;
    let subjects = identity_set(spec, pools)?;
    let k = spec.images_per_subject;

    let mut order: Vec<usize> = (0..subjects.len()).collect();
    let mut rng = lane_rng(spec.seed, Lane::SubjectAssignment, &[]);
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut clean = vec![false; subjects.len()];
    for &s in &order[..spec.grid_point] {
        clean[s] = true;
    }

    let mut entries = Vec::with_capacity(spec.expected_len());
    for (subject, is_cs) in subjects.iter().zip(clean) {
        if is_cs {
            push(&mut entries, subject, draw_cs(spec, pools, subject, k)?, EntryLabel::CleanShaven);
        } else {
            push(&mut entries, subject, draw_fh(spec, pools, subject, k)?, EntryLabel::FacialHair);
        }
    }
    finish(entries, spec)
}

pub fn build_within(spec: &ManifestSpec, pools: &SubjectPools) -> Result<TrainingManifest> {
    if spec.protocol != Protocol::WithinSubjects {
        return Err(Error::InvalidSpec("build_within needs the within protocol".into()));
    }
    spec.validate()?;
    let subjects = identity_set(spec, pools)?;
    let (x, k) = (spec.grid_point, spec.images_per_subject);
    let mut entries = Vec::with_capacity(spec.expected_len());
    for subject in &subjects {
        push(&mut entries, subject, draw_cs(spec, pools, subject, x)?, EntryLabel::CleanShaven);
        push(&mut entries, subject, draw_fh(spec, pools, subject, k - x)?, EntryLabel::FacialHair);
    }
    finish(entries, spec)
}

pub fn build(spec: &ManifestSpec, pools: &SubjectPools) -> Result<TrainingManifest> {
    match spec.protocol {
        Protocol::AcrossSubjects => build_across(spec, pools),
        Protocol::WithinSubjects => build_within(spec, pools),
    }
}

/// `{0, S/10, ..., S}` for across, `{0, 1, ..., k}` for within.
pub fn default_grid(protocol: Protocol, subjects: usize, k: usize) -> Vec<usize> {
    match protocol {
        Protocol::AcrossSubjects => (0..=10).map(|i| subjects * i / 10).collect(),
        Protocol::WithinSubjects => (0..=k).collect(),
    }
}

pub fn derive_seed(base_seed: u64, grid_point: usize, repetition: usize) -> u64 {
    lane_key(base_seed, Lane::ManifestSeed, &[grid_point as u64, repetition as u64])
}

/// One manifest per (grid point, repetition), grid-major.
pub fn grid_run(
    template: &ManifestSpec,
    grid: &[usize],
    repetitions: usize,
    base_seed: u64,
    pools: &SubjectPools,
) -> Result<Vec<TrainingManifest>> {
    let jobs: Vec<(usize, usize)> = grid
        .iter()
        .flat_map(|&x| (0..repetitions).map(move |r| (x, r)))
        .collect();
    jobs.par_iter()
        .map(|&(x, rep)| {
            let spec = ManifestSpec {
                grid_point: x,
                repetition: rep,
                seed: derive_seed(base_seed, x, rep),
                ..template.clone()
            };
            build(&spec, pools)
        })
        .collect()
}

/// Reads the `subject_id,image_id,label` CSV written by [`TrainingManifest::write`].
pub fn load_training_entries(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ManifestEntry>().enumerate() {
        out.push(row.map_err(|e| Error::parse(format!("training manifest row {}", i + 2), e.to_string()))?);
    }
    Ok(out)
}

/// Reads a `subject_id,image_id` female pool.
pub fn load_female_pool(path: impl AsRef<Path>) -> Result<Vec<PoolEntry>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<PoolEntry>().enumerate() {
        out.push(row.map_err(|e| Error::parse(format!("female pool row {}", i + 2), e.to_string()))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pools(subjects: usize, cs: usize, fh: usize) -> SubjectPools {
        let mut p = SubjectPools::default();
        for s in 0..subjects {
            let name = format!("m{s:03}");
            p.insert(
                &name,
                (0..cs).map(|i| format!("{name}_cs{i:02}")).collect(),
                (0..fh).map(|i| format!("{name}_fh{i:02}")).collect(),
            );
        }
        p
    }

    fn spec(protocol: Protocol, x: usize, s: usize, k: usize, seed: u64) -> ManifestSpec {
        ManifestSpec {
            protocol,
            grid_point: x,
            subjects_male: s,
            images_per_subject: k,
            female_pool: vec![
                PoolEntry { subject_id: "f1".into(), image_id: "f1_a".into() },
                PoolEntry { subject_id: "f1".into(), image_id: "f1_b".into() },
            ],
            repetition: 0,
            seed,
        }
    }

    #[test]
    fn superset_boundary() {
        let mut p = SubjectPools::default();
        let ids = |pfx: &str, n: usize| (0..n).map(|i| format!("{pfx}{i}")).collect::<Vec<_>>();
        p.insert("ok", ids("a", 12), ids("b", 12));
        p.insert("short", ids("c", 12), ids("d", 11));
        assert_eq!(find_superset(&p, 12), vec!["ok".to_string()]);
    }

    #[test]
    fn across_extremes() {
        let p = pools(5, 4, 4);
        let all_cs = build_across(&spec(Protocol::AcrossSubjects, 5, 5, 3, 1), &p).unwrap();
        assert_eq!(all_cs.count(EntryLabel::CleanShaven), 15);
        assert_eq!(all_cs.count(EntryLabel::FacialHair), 0);
        let all_fh = build_across(&spec(Protocol::AcrossSubjects, 0, 5, 3, 1), &p).unwrap();
        assert_eq!(all_fh.count(EntryLabel::FacialHair), 15);
        assert_eq!(all_fh.entries.len(), 17);
    }

    #[test]
    fn across_seeds_change_assignment_not_composition() {
        let p = pools(4, 2, 2);
        let a = build_across(&spec(Protocol::AcrossSubjects, 2, 4, 2, 11), &p).unwrap();
        let b = build_across(&spec(Protocol::AcrossSubjects, 2, 4, 2, 12), &p).unwrap();
        let cs_subjects = |m: &TrainingManifest| {
            let mut v: Vec<String> = m
                .entries
                .iter()
                .filter(|e| e.label == EntryLabel::CleanShaven)
                .map(|e| e.subject_id.clone())
                .collect();
            v.dedup();
            v
        };
        assert_eq!(a.count(EntryLabel::CleanShaven), 4);
        assert_eq!(b.count(EntryLabel::CleanShaven), 4);
        assert_eq!(cs_subjects(&a).len(), 2);
        // seeds 11 and 12 pick different CS subject pairs
        assert_ne!(cs_subjects(&a), cs_subjects(&b));
    }

    #[test]
    fn within_all_cs_matches_across_all_cs() {
        let p = pools(6, 20, 20);
        let across = build_across(&spec(Protocol::AcrossSubjects, 6, 6, 12, 9), &p).unwrap();
        let within = build_within(&spec(Protocol::WithinSubjects, 12, 6, 12, 9), &p).unwrap();
        assert_eq!(across.entries, within.entries);
    }

    #[test]
    fn within_balanced() {
        let p = pools(3, 15, 15);
        let m = build_within(&spec(Protocol::WithinSubjects, 6, 3, 12, 5), &p).unwrap();
        for s in ["m000", "m001", "m002"] {
            let n = |l| m.entries.iter().filter(|e| e.subject_id == s && e.label == l).count();
            assert_eq!((n(EntryLabel::CleanShaven), n(EntryLabel::FacialHair)), (6, 6));
        }
        let again = build_within(&spec(Protocol::WithinSubjects, 6, 3, 12, 5), &p).unwrap();
        assert_eq!(m.to_csv().unwrap(), again.to_csv().unwrap());
    }

    #[test]
    fn errors() {
        let p = pools(2, 3, 3);
        assert!(matches!(
            build_within(&spec(Protocol::WithinSubjects, 13, 2, 12, 0), &p),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            build_within(&spec(Protocol::WithinSubjects, 1, 3, 3, 0), &p),
            Err(Error::InsufficientSubjects { needed: 3, available: 2 })
        ));
        let mut dup = spec(Protocol::WithinSubjects, 1, 2, 3, 0);
        dup.female_pool.push(PoolEntry { subject_id: "m000".into(), image_id: "m000_fh00".into() });
        dup.female_pool.push(PoolEntry { subject_id: "m000".into(), image_id: "m000_fh01".into() });
        dup.female_pool.push(PoolEntry { subject_id: "m000".into(), image_id: "m000_fh02".into() });
        assert!(matches!(build_within(&dup, &p), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn csv_round_trip() {
        let p = pools(3, 4, 4);
        let m = build_within(&spec(Protocol::WithinSubjects, 2, 3, 4, 3), &p).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        m.write(&path).unwrap();
        assert_eq!(load_training_entries(&path).unwrap(), m.entries);
        let side: ManifestSpec =
            serde_json::from_slice(&std::fs::read(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side, m.provenance);
    }

    #[test]
    fn grid_shapes() {
        let p = pools(20, 12, 12);
        let t = spec(Protocol::WithinSubjects, 0, 20, 12, 0);
        let within = grid_run(&t, &default_grid(Protocol::WithinSubjects, 20, 12), 5, 42, &p).unwrap();
        assert_eq!(within.len(), 65);
        let t = spec(Protocol::AcrossSubjects, 0, 20, 12, 0);
        let across = grid_run(&t, &default_grid(Protocol::AcrossSubjects, 20, 12), 5, 42, &p).unwrap();
        assert_eq!(across.len(), 55);
        assert_eq!(default_grid(Protocol::AcrossSubjects, 5000, 12)[1], 500);
    }

    #[test]
    fn single_point_grid_equals_direct_call() {
        let p = pools(4, 5, 5);
        let t = spec(Protocol::WithinSubjects, 0, 4, 4, 0);
        let run = grid_run(&t, &[2], 1, 77, &p).unwrap();
        let direct = build_within(
            &ManifestSpec { grid_point: 2, seed: derive_seed(77, 2, 0), ..t },
            &p,
        )
        .unwrap();
        assert_eq!(run, vec![direct]);
    }
}
