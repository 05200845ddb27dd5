//! Landmark-bounded facial regions and their rasterization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{HairMask, LandmarkSet, Point, LANDMARK_COUNT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Mustache,
    Beard,
    Both,
}

impl std::str::FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mustache" => Ok(Region::Mustache),
            "beard" => Ok(Region::Beard),
            "both" => Ok(Region::Both),
            other => Err(Error::InvalidSpec(format!("unknown region `{other}`"))),
        }
    }
}

/// Closed polygon through landmark indices (0-based iBUG numbering).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionPolygon(Vec<usize>);

/// Nose base 31-35, then the outer upper lip from the right corner back to
/// the left corner.
pub const MUSTACHE: [usize; 12] = [31, 32, 33, 34, 35, 54, 53, 52, 51, 50, 49, 48];

/// Jaw line 0-16, then the outer lower lip from the right corner to the left.
pub const BEARD: [usize; 24] = [
    0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 54, 55, 56, 57, 58, 59, 48,
];

impl RegionPolygon {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.len() < 3 || indices.iter().any(|&i| i >= LANDMARK_COUNT) {
            return Err(Error::DegeneratePolygon);
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn vertices(&self, landmarks: &LandmarkSet) -> Vec<Point> {
        self.0.iter().map(|&i| landmarks.get(i)).collect()
    }
}

impl Region {
    pub fn polygons(self) -> Vec<RegionPolygon> {
        let m = || RegionPolygon(MUSTACHE.to_vec());
        let b = || RegionPolygon(BEARD.to_vec());
        match self {
            Region::Mustache => vec![m()],
            Region::Beard => vec![b()],
            Region::Both => vec![m(), b()],
        }
    }
}

fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

/// Even-odd scanline fill sampled at pixel centres.
pub fn fill_polygon(pts: &[Point], width: u32, height: u32) -> Result<HairMask> {
    if pts.len() < 3 || signed_area(pts).abs() < 1e-9 {
        return Err(Error::DegeneratePolygon);
    }
    let mut mask = HairMask::empty(width, height);
    let mut xs = Vec::new();
    for y in 0..height {
        let yc = f64::from(y) + 0.5;
        xs.clear();
        for i in 0..pts.len() {
            let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
            if (a.y <= yc) != (b.y <= yc) {
                xs.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            // pixel x is inside when span[0] <= x + 0.5 < span[1]
            let lo = (span[0] - 0.5).ceil().max(0.0);
            let hi = (span[1] - 0.5).ceil().min(f64::from(width));
            let mut x = lo;
            while x < hi {
                mask.set(x as u32, y, true);
                x += 1.0;
            }
        }
    }
    Ok(mask)
}

pub fn region_mask(landmarks: &LandmarkSet, region: Region, size: (u32, u32)) -> Result<HairMask> {
    let mut out = HairMask::empty(size.0, size.1);
    for poly in region.polygons() {
        out = out.union(&fill_polygon(&poly.vertices(landmarks), size.0, size.1)?)?;
    }
    Ok(out)
}
