//! Synthetic cohorts with planted score structure.
//!
//! Geometry (all vectors unit length, `d` dimensions):
//!
//! - a shared direction `g`; subject centre `c = sqrt(q) g + sqrt(1-q) v`
//!   with `v` random and orthogonal to `g`, `q = impostor_mu / genuine_mu`;
//! - facial-hair images of a subject sit around `c' = normalize(c + a w)`,
//!   `w` random and orthogonal to `c`, `a` the facial-hair offset;
//! - an image is `normalize(centre + s u)` with `u` a random unit tangent at
//!   the centre and `s^2 = 1 / genuine_mu - 1`.
//!
//! Because `|centre + s u|` is the constant `sqrt(1 + s^2)`, the expected
//! same-centre cosine is exactly `genuine_mu` and the expected cross-subject
//! cosine between clean-shaven images is exactly `impostor_mu`. The offset
//! lowers the expected CS-FH genuine cosine to `genuine_mu / sqrt(1 + a^2)`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::augment::frontal_template;
use crate::error::{Error, Result};
use crate::ingest::{
    write_attributes, write_embedding_ids, write_landmarks, write_manifest, AttributeScores, Dataset,
    DatasetManifest, EmbeddingStore, HairMask, ImageRecord, LandmarkSet, Point, Sex,
};
use crate::labeling::HairLabel;
use crate::pairs::PairGroup;
use crate::seed::{lane_rng, Lane};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub subjects: usize,
    pub images_per_subject: usize,
    pub dim: usize,
    /// Share of each male subject's images that are clean-shaven.
    pub cs_fraction: f64,
    pub genuine_mu: f64,
    pub impostor_mu: f64,
    pub fh_offset: f64,
    /// Share of subjects that are female; their images are all clean-shaven.
    pub female_fraction: f64,
    /// Subjects are assigned to cohorts round-robin.
    pub cohorts: Vec<String>,
    pub image_size: u32,
    pub render_images: bool,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            subjects: 200,
            images_per_subject: 24,
            dim: 128,
            cs_fraction: 0.5,
            genuine_mu: 0.7,
            impostor_mu: 0.0,
            fh_offset: 0.3,
            female_fraction: 0.0,
            cohorts: vec!["SYN".into()],
            image_size: 112,
            render_images: false,
            seed: 7,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.subjects == 0 || self.images_per_subject == 0 {
            return bad("subjects and images per subject must be positive".into());
        }
        if self.dim < 3 {
            return bad(format!("dimension {} is below 3", self.dim));
        }
        if !(self.genuine_mu > 0.0 && self.genuine_mu < 1.0) {
            return bad(format!("genuine mean {} outside (0, 1)", self.genuine_mu));
        }
        if !(self.impostor_mu >= 0.0 && self.impostor_mu < self.genuine_mu) {
            return bad(format!(
                "impostor mean {} outside [0, genuine mean)",
                self.impostor_mu
            ));
        }
        for (name, v) in [("cs fraction", self.cs_fraction), ("female fraction", self.female_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(self.fh_offset >= 0.0 && self.fh_offset.is_finite()) {
            return bad(format!("facial-hair offset {} must be finite and non-negative", self.fh_offset));
        }
        if self.cohorts.is_empty() {
            return bad("at least one cohort tag is required".into());
        }
        if self.image_size < 32 {
            return bad(format!("image size {} is below 32", self.image_size));
        }
        Ok(())
    }

    /// Tangent noise length giving the target genuine mean.
    pub fn noise_scale(&self) -> f64 {
        (1.0 / self.genuine_mu - 1.0).sqrt()
    }

    /// Expected (genuine, impostor) cosine per pair group.
    pub fn expected_means(&self) -> BTreeMap<PairGroup, (f64, f64)> {
        let shrink = 1.0 / (1.0 + self.fh_offset * self.fh_offset).sqrt();
        BTreeMap::from([
            (PairGroup::CsCs, (self.genuine_mu, self.impostor_mu)),
            (PairGroup::CsFh, (self.genuine_mu * shrink, self.impostor_mu * shrink)),
            (PairGroup::FhFh, (self.genuine_mu, self.impostor_mu * shrink * shrink)),
        ])
    }
}

#[derive(Clone, Debug)]
pub struct SynthCohort {
    pub params: SynthParams,
    /// Image paths are relative (`images/<id>.png`, `masks/<id>.png`).
    pub records: Vec<ImageRecord>,
    pub labels: BTreeMap<String, HairLabel>,
    pub embeddings: EmbeddingStore,
    pub embedding_ids: Vec<String>,
    pub landmarks: BTreeMap<String, LandmarkSet>,
    pub masks: BTreeMap<String, HairMask>,
    pub images: BTreeMap<String, RgbImage>,
}

#[derive(Serialize)]
struct SynthInfo<'a> {
    params: &'a SynthParams,
    noise_scale: f64,
    expected_means: BTreeMap<PairGroup, (f64, f64)>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Random unit vector orthogonal to the unit vector `to`.
fn orthogonal(rng: &mut ChaCha8Rng, to: &[f64]) -> Vec<f64> {
    loop {
        let mut z = gaussian(rng, to.len());
        let p = dot(&z, to);
        z.iter_mut().zip(to).for_each(|(x, t)| *x -= p * t);
        if dot(&z, &z) > 1e-12 {
            return normalize(z);
        }
    }
}

fn combine(a: f64, x: &[f64], b: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(p, q)| a * p + b * q).collect()
}

fn attributes(rng: &mut ChaCha8Rng, label: HairLabel) -> AttributeScores {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    match label {
        HairLabel::CleanShaven => AttributeScores {
            no_beard: u(0.75, 1.0),
            no_mustache: u(0.75, 1.0),
            five_oclock_shadow: u(0.0, 1.0),
            chin: u(0.0, 0.2),
            side_to_side: u(0.0, 0.2),
            mustache_connected: u(0.0, 0.2),
            mustache_isolated: u(0.0, 0.2),
            short: u(0.0, 0.3),
            medium: u(0.0, 0.2),
            long: u(0.0, 0.1),
        },
        _ => AttributeScores {
            no_beard: u(0.0, 0.6),
            no_mustache: u(0.0, 0.6),
            five_oclock_shadow: u(0.0, 0.6),
            chin: u(0.3, 1.0),
            side_to_side: u(0.2, 1.0),
            mustache_connected: u(0.3, 1.0),
            mustache_isolated: u(0.0, 0.4),
            short: u(0.2, 1.0),
            medium: u(0.0, 0.8),
            long: u(0.0, 0.5),
        },
    }
}

fn jittered_landmarks(rng: &mut ChaCha8Rng, size: u32) -> LandmarkSet {
    let base = frontal_template(size, size);
    let (dx, dy) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let hi = f64::from(size) - 0.5;
    let pts: Vec<Point> = base
        .points()
        .iter()
        .map(|p| {
            let jx: f64 = rng.sample::<f64, _>(StandardNormal) * 0.4;
            let jy: f64 = rng.sample::<f64, _>(StandardNormal) * 0.4;
            Point::new((p.x + dx + jx).clamp(0.5, hi), (p.y + dy + jy).clamp(0.5, hi))
        })
        .collect();
    LandmarkSet::new(&pts).expect("clamped into the image")
}

/// Rectangle between the jaw corners, from part-way down the nose-chin span
/// to the chin.
fn chin_strip(rng: &mut ChaCha8Rng, lm: &LandmarkSet, size: u32) -> HairMask {
    let top_share: f64 = rng.random_range(0.0..0.5);
    let (x0, x1) = (lm.get(4).x, lm.get(12).x);
    let (nose, chin) = (lm.get(33).y, lm.get(8).y);
    let y0 = nose + top_share * (chin - nose);
    HairMask::from_fn(size, size, |x, y| {
        let (cx, cy) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
        cx >= x0 && cx < x1 && cy >= y0 && cy < chin
    })
}

fn render(skin: [u8; 3], mask: Option<&HairMask>, size: u32) -> RgbImage {
    RgbImage::from_fn(size, size, |x, y| {
        if mask.is_some_and(|m| m.get(x, y)) {
            Rgb([40, 30, 25])
        } else {
            let shade = ((x + y) % 16) as u8;
            Rgb(skin.map(|c| c.saturating_sub(shade)))
        }
    })
}

pub fn generate_cohort(params: &SynthParams) -> Result<SynthCohort> {
    params.validate()?;
    let d = params.dim;
    let q = params.impostor_mu / params.genuine_mu;
    let s = params.noise_scale();
    let shared = normalize(gaussian(&mut lane_rng(params.seed, Lane::Synth, &[u64::MAX]), d));

    let mut records = Vec::new();
    let mut labels = BTreeMap::new();
    let mut data = Vec::with_capacity(params.subjects * params.images_per_subject * d);
    let mut embedding_ids = Vec::new();
    let mut landmarks = BTreeMap::new();
    let mut masks = BTreeMap::new();
    let mut images = BTreeMap::new();

    for si in 0..params.subjects {
        let mut rng = lane_rng(params.seed, Lane::Synth, &[si as u64]);
        let subject = format!("s{si:05}");
        let cohort = params.cohorts[si % params.cohorts.len()].clone();
        let sex = if rng.random::<f64>() < params.female_fraction {
            Sex::Female
        } else {
            Sex::Male
        };
        let v = orthogonal(&mut rng, &shared);
        let centre = combine(q.sqrt(), &shared, (1.0 - q).sqrt(), &v);
        let w = orthogonal(&mut rng, &centre);
        let fh_centre = normalize(combine(1.0, &centre, params.fh_offset, &w));
        let skin = [rng.random_range(150..230), rng.random_range(110..180), rng.random_range(80..150)];

        let n_cs = match sex {
            Sex::Female => params.images_per_subject,
            _ => (params.cs_fraction * params.images_per_subject as f64).round() as usize,
        };
        for i in 0..params.images_per_subject {
            let image_id = format!("{subject}_{i:03}");
            let label = if i < n_cs { HairLabel::CleanShaven } else { HairLabel::FacialHair };
            let c = if label == HairLabel::FacialHair { &fh_centre } else { &centre };
            let u = orthogonal(&mut rng, c);
            let e = combine(1.0, c, s, &u);
            let norm = dot(&e, &e).sqrt();
            data.extend(e.iter().map(|x| (x / norm) as f32));
            embedding_ids.push(image_id.clone());

            let attrs = attributes(&mut rng, label);
            let lm = jittered_landmarks(&mut rng, params.image_size);
            let mask = (label == HairLabel::FacialHair).then(|| chin_strip(&mut rng, &lm, params.image_size));
            if params.render_images {
                images.insert(image_id.clone(), render(skin, mask.as_ref(), params.image_size));
            }
            records.push(ImageRecord {
                image_id: image_id.clone(),
                subject_id: subject.clone(),
                cohort: cohort.clone(),
                sex,
                path: PathBuf::from(format!("images/{image_id}.png")),
                mask_path: mask.as_ref().map(|_| PathBuf::from(format!("masks/{image_id}.png"))),
                attributes: Some(attrs),
                embedding_ref: None,
            });
            if let Some(m) = mask {
                masks.insert(image_id.clone(), m);
            }
            landmarks.insert(image_id.clone(), lm);
            labels.insert(image_id, label);
        }
    }

    let count = embedding_ids.len();
    Ok(SynthCohort {
        params: params.clone(),
        records,
        labels,
        embeddings: EmbeddingStore::new(count, d, data)?,
        embedding_ids,
        landmarks,
        masks,
        images,
    })
}

impl SynthCohort {
    /// In-memory dataset with attributes, embeddings and landmarks joined.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let mut ds = Dataset::new(DatasetManifest::from_records(self.records.clone())?);
        ds.attach_embeddings(self.embeddings.clone(), &self.embedding_ids)?;
        ds.attach_landmarks(self.landmarks.iter().map(|(k, v)| (k.clone(), v.clone())).collect());
        Ok(ds)
    }

    /// Writes `manifest.csv`, `attributes.csv`, `embeddings.bin` with its
    /// `.ids` list, `landmarks.csv`, `masks/`, `images/` when rendered, and
    /// `synth.json`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
        mkdir(dir)?;
        mkdir(&dir.join("masks"))?;

        let absolute: Vec<ImageRecord> = self
            .records
            .iter()
            .map(|r| ImageRecord {
                path: dir.join(&r.path),
                mask_path: r.mask_path.as_ref().map(|m| dir.join(m)),
                ..r.clone()
            })
            .collect();
        write_manifest(dir.join("manifest.csv"), &absolute)?;
        write_attributes(
            dir.join("attributes.csv"),
            self.records
                .iter()
                .filter_map(|r| r.attributes.as_ref().map(|a| (r.image_id.as_str(), a))),
        )?;
        self.embeddings.write(dir.join("embeddings.bin"))?;
        write_embedding_ids(dir.join("embeddings.bin.ids"), &self.embedding_ids)?;
        write_landmarks(dir.join("landmarks.csv"), self.landmarks.iter().map(|(k, v)| (k.as_str(), v)))?;
        for (id, m) in &self.masks {
            m.save(dir.join("masks").join(format!("{id}.png")))?;
        }
        if !self.images.is_empty() {
            mkdir(&dir.join("images"))?;
            for (id, img) in &self.images {
                let path = dir.join("images").join(format!("{id}.png"));
                img.save(&path).map_err(|source| Error::Image { path, source })?;
            }
        }
        let info = SynthInfo {
            params: &self.params,
            noise_scale: self.params.noise_scale(),
            expected_means: self.params.expected_means(),
        };
        let path = dir.join("synth.json");
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::to_writer_pretty(&mut f, &info)?;
        f.write_all(b"\n").map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::{classify_hair, DEFAULT_THRESHOLD};

    fn small() -> SynthParams {
        SynthParams {
            subjects: 30,
            images_per_subject: 8,
            dim: 64,
            ..Default::default()
        }
    }

    #[test]
    fn unit_norm_rows() {
        let c = generate_cohort(&small()).unwrap();
        for i in 0..c.embeddings.count() {
            let n: f64 = c.embeddings.row(i).iter().map(|&v| f64::from(v) * f64::from(v)).sum();
            assert!((n.sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn attributes_reproduce_labels() {
        let c = generate_cohort(&SynthParams { female_fraction: 0.3, ..small() }).unwrap();
        for r in &c.records {
            let got = classify_hair(r.attributes.as_ref().unwrap(), DEFAULT_THRESHOLD).unwrap();
            assert_eq!(got, c.labels[&r.image_id]);
            if r.sex == Sex::Female {
                assert_eq!(got, HairLabel::CleanShaven);
            }
            assert_eq!(c.masks.contains_key(&r.image_id), got == HairLabel::FacialHair);
        }
    }

    #[test]
    fn genuine_mean_matches_target() {
        let p = SynthParams { subjects: 40, images_per_subject: 20, cs_fraction: 1.0, ..small() };
        let c = generate_cohort(&p).unwrap();
        let e = &c.embeddings;
        let cos = |i: usize, j: usize| -> f64 {
            e.row(i).iter().zip(e.row(j)).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum()
        };
        let (mut gen, mut imp) = (Vec::new(), Vec::new());
        for i in 0..e.count() {
            for j in i + 1..e.count() {
                if i / 20 == j / 20 { gen.push(cos(i, j)) } else { imp.push(cos(i, j)) }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = (1.0 - p.genuine_mu) / ((p.dim - 1) as f64).sqrt();
        assert!((mean(&gen) - 0.7).abs() < 3.0 * sd / (gen.len() as f64).sqrt() + 1e-3, "{}", mean(&gen));
        assert!(mean(&imp).abs() < 0.02, "{}", mean(&imp));
    }

    #[test]
    fn deterministic_files() {
        let p = SynthParams { render_images: true, subjects: 3, images_per_subject: 4, ..small() };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_cohort(&p).unwrap().write_to(a.path()).unwrap();
        generate_cohort(&p).unwrap().write_to(b.path()).unwrap();
        for f in ["manifest.csv", "attributes.csv", "embeddings.bin", "landmarks.csv", "synth.json"] {
            let (x, y) = (std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
            assert_eq!(
                String::from_utf8_lossy(&x).replace(a.path().to_str().unwrap(), ""),
                String::from_utf8_lossy(&y).replace(b.path().to_str().unwrap(), ""),
                "{f}"
            );
        }
        assert!(a.path().join("images/s00000_000.png").exists());
    }

    #[test]
    fn invalid_params() {
        assert!(SynthParams { impostor_mu: 0.8, ..small() }.validate().is_err());
        assert!(SynthParams { genuine_mu: 1.0, ..small() }.validate().is_err());
        assert!(SynthParams { cs_fraction: 1.2, ..small() }.validate().is_err());
    }
}
