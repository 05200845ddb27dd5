use std::path::Path;

use image::{DynamicImage, GrayImage};

use crate::error::{Error, Result};

/// Binary facial-hair map, one byte per pixel, nonzero = hair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HairMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl HairMask {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::InvalidSpec(format!(
                "mask buffer of {} bytes does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.data[y as usize * self.width as usize + x as usize] = if on { 255 } else { 0 };
    }

    pub fn hair_pixels(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn hair_fraction(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.hair_pixels() as f64 / self.data.len() as f64
    }

    pub fn union(&self, other: &HairMask) -> Result<HairMask> {
        if self.dimensions() != other.dimensions() {
            return Err(Error::InvalidSpec("mask union of differing sizes".into()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| if a != 0 || b != 0 { 255 } else { 0 })
            .collect();
        Ok(HairMask {
            width: self.width,
            height: self.height,
            data,
        })
    }

    /// Centroid of hair pixel centres, `None` when the mask is empty.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_raw(self.width, self.height, self.data.clone()).expect("sized buffer")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_gray().save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Loads an 8-bit single-channel PNG mask.
pub fn load_mask(path: impl AsRef<Path>) -> Result<HairMask> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    match img {
        DynamicImage::ImageLuma8(gray) => {
            let (w, h) = gray.dimensions();
            HairMask::new(w, h, gray.into_raw())
        }
        _ => Err(Error::MaskFormat(path.display().to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_mask_has_no_hair() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        HairMask::empty(8, 6).save(&p).unwrap();
        let m = load_mask(&p).unwrap();
        assert_eq!(m.dimensions(), (8, 6));
        assert_eq!(m.hair_pixels(), 0);
    }

    #[test]
    fn rgb_png_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        image::RgbImage::new(4, 4).save(&p).unwrap();
        assert!(matches!(load_mask(&p), Err(Error::MaskFormat(_))));
    }

    #[test]
    fn fraction() {
        let m = HairMask::from_fn(10, 10, |x, _| x < 2);
        assert_eq!(m.hair_pixels(), 20);
        assert!((m.hair_fraction() - 0.2).abs() < 1e-12);
    }
}
