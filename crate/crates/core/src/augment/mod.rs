//! Facial-hair augmentation of clean-shaven training images.
//!
//! Three modes:
//!
//! - hair transfer: a source-pool member's hair mask is warped onto the
//!   target's landmarks and the warped source pixels replace the target's;
//! - random pixels under a mask: same warped mask, filled with uniform noise;
//! - random pixels in a landmark region (mustache, beard, or both).
//!
//! Each image draws its own keyed stream, so the outcome for an image does
//! not depend on which other images are processed or in what order.

mod region;
mod template;
mod warp;

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{load_mask, Dataset, HairMask, ImageRecord, LandmarkSet, Sex};
use crate::seed::{lane_key, str_key, Lane};

pub use region::{fill_polygon, region_mask, Region, RegionPolygon, BEARD, MUSTACHE};
pub use template::frontal_template;
pub use warp::{warp_mask, WarpMap};

/// Source images need strictly more than this share of hair pixels.
pub const DEFAULT_MIN_HAIR_FRACTION: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentMode {
    HairTransfer,
    #[serde(rename = "random-mask")]
    RandomPixelMask,
    #[serde(rename = "random-region")]
    RandomPixelRegion,
}

impl AugmentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AugmentMode::HairTransfer => "hair-transfer",
            AugmentMode::RandomPixelMask => "random-mask",
            AugmentMode::RandomPixelRegion => "random-region",
        }
    }
}

impl std::str::FromStr for AugmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hair-transfer" => Ok(AugmentMode::HairTransfer),
            "random-mask" => Ok(AugmentMode::RandomPixelMask),
            "random-region" => Ok(AugmentMode::RandomPixelRegion),
            other => Err(Error::InvalidSpec(format!("unknown augmentation mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    MaleOnly,
    All,
}

impl Scope {
    pub fn covers(self, sex: Sex) -> bool {
        match self {
            Scope::MaleOnly => sex == Sex::Male,
            Scope::All => true,
        }
    }
}

impl std::str::FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "male" => Ok(Scope::MaleOnly),
            "all" => Ok(Scope::All),
            other => Err(Error::InvalidSpec(format!("unknown scope `{other}`"))),
        }
    }
}

/// A facial-hair image usable as a transfer source.
#[derive(Clone, Debug)]
pub struct SourceImage {
    pub image_id: String,
    pub image: RgbImage,
    pub mask: HairMask,
    pub landmarks: LandmarkSet,
}

#[derive(Clone, Debug)]
pub struct AugmentationSpec {
    pub mode: AugmentMode,
    /// Used by [`AugmentMode::RandomPixelRegion`] only.
    pub region: Region,
    pub probability: f64,
    pub scope: Scope,
    pub seed: u64,
    pub source_pool: Vec<SourceImage>,
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::InvalidSpec(format!(
                "probability {} outside [0, 1]",
                self.probability
            )));
        }
        if self.mode == AugmentMode::HairTransfer && self.source_pool.is_empty() {
            return Err(Error::InvalidSpec("hair transfer needs a non-empty source pool".into()));
        }
        for s in &self.source_pool {
            if s.image.dimensions() != s.mask.dimensions() {
                return Err(Error::MaskFormat(format!("source {} mask and image sizes differ", s.image_id)));
            }
        }
        Ok(())
    }
}

/// Ids whose hair fraction is strictly above `min_fraction`, in input order.
pub fn filter_source_pool<'a>(
    masks: impl IntoIterator<Item = (&'a str, &'a HairMask)>,
    min_fraction: f64,
) -> Vec<&'a str> {
    masks
        .into_iter()
        .filter(|(_, m)| m.hair_fraction() > min_fraction)
        .map(|(id, _)| id)
        .collect()
}

/// Where pixel data comes from; files by default, memory in tests.
pub trait ImageSource: Sync {
    fn image(&self, record: &ImageRecord) -> Result<RgbImage>;
    fn mask(&self, record: &ImageRecord) -> Result<Option<HairMask>>;
}

pub struct FileImages;

impl ImageSource for FileImages {
    fn image(&self, record: &ImageRecord) -> Result<RgbImage> {
        let img = image::open(&record.path).map_err(|source| Error::Image {
            path: record.path.clone(),
            source,
        })?;
        Ok(img.to_rgb8())
    }

    fn mask(&self, record: &ImageRecord) -> Result<Option<HairMask>> {
        record.mask_path.as_ref().map(load_mask).transpose()
    }
}

/// Loads every candidate whose mask passes [`filter_source_pool`] and which
/// has landmarks. Candidates without a mask or landmarks are skipped.
pub fn load_source_pool<'a>(
    candidates: impl IntoIterator<Item = &'a ImageRecord>,
    landmarks: &HashMap<String, LandmarkSet>,
    images: &dyn ImageSource,
    min_fraction: f64,
) -> Result<Vec<SourceImage>> {
    let mut pool = Vec::new();
    let mut without_landmarks = 0;
    for r in candidates {
        let Some(mask) = images.mask(r)? else { continue };
        if filter_source_pool([(r.image_id.as_str(), &mask)], min_fraction).is_empty() {
            continue;
        }
        let Some(lm) = landmarks.get(&r.image_id) else {
            without_landmarks += 1;
            continue;
        };
        let image = images.image(r)?;
        if image.dimensions() != mask.dimensions() {
            return Err(Error::MaskFormat(format!("{}: mask and image sizes differ", r.image_id)));
        }
        pool.push(SourceImage {
            image_id: r.image_id.clone(),
            image,
            mask,
            landmarks: lm.clone(),
        });
    }
    if without_landmarks > 0 {
        log::warn!("{without_landmarks} source candidates skipped for missing landmarks");
    }
    Ok(pool)
}

/// Copies warped source pixels under the warped source mask. Returns the new
/// image and the warped mask; pixels outside the mask are untouched.
pub fn transfer_hair(
    cs_image: &RgbImage,
    cs_landmarks: &LandmarkSet,
    source: &SourceImage,
) -> Result<(RgbImage, HairMask)> {
    let map = WarpMap::new(
        &source.landmarks,
        source.image.dimensions(),
        cs_landmarks,
        cs_image.dimensions(),
    )?;
    let warped = map.warp_mask(&source.mask)?;
    let mut out = cs_image.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        if warped.get(x, y) {
            if let Some(v) = map.sample_rgb(&source.image, x, y) {
                *px = v;
            }
        }
    }
    Ok((out, warped))
}

/// Uniform 8-bit noise on every channel of every masked pixel.
pub fn random_pixel_fill<R: Rng + ?Sized>(image: &RgbImage, mask: &HairMask, rng: &mut R) -> Result<RgbImage> {
    if image.dimensions() != mask.dimensions() {
        return Err(Error::MaskFormat(format!(
            "mask is {:?}, image is {:?}",
            mask.dimensions(),
            image.dimensions()
        )));
    }
    let mut out = image.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        if mask.get(x, y) {
            *px = Rgb([rng.random(), rng.random(), rng.random()]);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Augmented,
    NotSelected,
    OutOfScope,
    MissingLandmarks,
    MissingMask,
}

/// One JSON line of the augmentation log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub image_id: String,
    pub augmented: bool,
    pub status: Status,
    pub mode: AugmentMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    /// Key of the image's random stream.
    pub seed_lane: u64,
}

#[derive(Clone, Debug)]
pub struct AugmentOutcome {
    pub log: LogRecord,
    /// Present only for augmented images.
    pub image: Option<RgbImage>,
    /// Pixels allowed to change.
    pub effective_mask: Option<HairMask>,
}

#[derive(Clone, Debug, Default)]
pub struct AugmentRun {
    pub outcomes: Vec<AugmentOutcome>,
}

impl AugmentRun {
    pub fn count(&self, status: Status) -> usize {
        self.outcomes.iter().filter(|o| o.log.status == status).count()
    }

    pub fn augmented(&self) -> usize {
        self.count(Status::Augmented)
    }

    pub fn skipped(&self) -> usize {
        self.count(Status::MissingLandmarks) + self.count(Status::MissingMask)
    }

    pub fn log_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for o in &self.outcomes {
            serde_json::to_writer(&mut out, &o.log)?;
            out.push(b'\n');
        }
        Ok(out)
    }

    /// Writes `<dir>/<image_id>.png` for each augmented image and the log.
    pub fn write(&self, dir: &Path, log_path: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.outcomes
            .par_iter()
            .filter_map(|o| o.image.as_ref().map(|img| (output_path(dir, &o.log.image_id), img)))
            .try_for_each(|(path, img)| {
                img.save(&path).map_err(|source| Error::Image { path, source })
            })?;
        let mut f = std::fs::File::create(log_path).map_err(|e| Error::io(log_path, e))?;
        f.write_all(&self.log_jsonl()?).map_err(|e| Error::io(log_path, e))
    }
}

pub fn output_path(dir: &Path, image_id: &str) -> PathBuf {
    let safe: String = image_id
        .chars()
        .map(|c| if matches!(c, '/' | '\\' | ':') { '_' } else { c })
        .collect();
    dir.join(format!("{safe}.png"))
}

/// Whether an image is selected, from its own stream.
pub fn image_lane(seed: u64, image_id: &str) -> u64 {
    lane_key(seed, Lane::AugmentImage, &[str_key(image_id)])
}

/// One augmentation pass over `targets` (all records when `None`).
pub fn apply_augmentation(
    dataset: &Dataset,
    targets: Option<&[String]>,
    images: &dyn ImageSource,
    spec: &AugmentationSpec,
) -> Result<AugmentRun> {
    spec.validate()?;
    let records: Vec<&ImageRecord> = match targets {
        Some(ids) => ids
            .iter()
            .map(|id| {
                dataset
                    .record(id)
                    .ok_or_else(|| Error::InvalidSpec(format!("target `{id}` is not in the dataset")))
            })
            .collect::<Result<_>>()?,
        None => dataset.records().iter().collect(),
    };
    let outcomes = records
        .par_iter()
        .map(|r| augment_one(r, dataset.landmarks.get(&r.image_id), images, spec))
        .collect::<Result<Vec<_>>>()?;
    let run = AugmentRun { outcomes };
    if run.skipped() > 0 {
        log::warn!("{} images skipped for missing landmarks or masks", run.skipped());
    }
    Ok(run)
}

fn augment_one(
    record: &ImageRecord,
    landmarks: Option<&LandmarkSet>,
    images: &dyn ImageSource,
    spec: &AugmentationSpec,
) -> Result<AugmentOutcome> {
    let seed_lane = image_lane(spec.seed, &record.image_id);
    let mut log = LogRecord {
        image_id: record.image_id.clone(),
        augmented: false,
        status: Status::NotSelected,
        mode: spec.mode,
        region: (spec.mode == AugmentMode::RandomPixelRegion).then_some(spec.region),
        source_id: None,
        seed_lane,
    };
    let skip = |mut log: LogRecord, status| {
        log.status = status;
        Ok(AugmentOutcome {
            log,
            image: None,
            effective_mask: None,
        })
    };
    if !spec.scope.covers(record.sex) {
        return skip(log, Status::OutOfScope);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed_lane);
    if rng.random::<f64>() >= spec.probability {
        return skip(log, Status::NotSelected);
    }
    let pick = |rng: &mut rand_chacha::ChaCha8Rng| {
        (!spec.source_pool.is_empty()).then(|| &spec.source_pool[rng.random_range(0..spec.source_pool.len())])
    };

    let (image, mask) = match spec.mode {
        AugmentMode::HairTransfer => {
            let Some(lm) = landmarks else { return skip(log, Status::MissingLandmarks) };
            let source = pick(&mut rng).expect("validated non-empty pool");
            log.source_id = Some(source.image_id.clone());
            transfer_hair(&images.image(record)?, lm, source)?
        }
        AugmentMode::RandomPixelMask => {
            let target = images.image(record)?;
            let mask = match (pick(&mut rng), landmarks) {
                (Some(source), Some(lm)) => {
                    log.source_id = Some(source.image_id.clone());
                    warp_mask(&source.mask, &source.landmarks, lm, target.dimensions())?
                }
                (Some(_), None) => return skip(log, Status::MissingLandmarks),
                (None, _) => match images.mask(record)? {
                    Some(m) => m,
                    None => return skip(log, Status::MissingMask),
                },
            };
            (random_pixel_fill(&target, &mask, &mut rng)?, mask)
        }
        AugmentMode::RandomPixelRegion => {
            let Some(lm) = landmarks else { return skip(log, Status::MissingLandmarks) };
            let target = images.image(record)?;
            let mask = region_mask(lm, spec.region, target.dimensions())?;
            (random_pixel_fill(&target, &mask, &mut rng)?, mask)
        }
    };
    log.augmented = true;
    log.status = Status::Augmented;
    Ok(AugmentOutcome {
        log,
        image: Some(image),
        effective_mask: Some(mask),
    })
}
