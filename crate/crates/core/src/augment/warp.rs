//! Piecewise-affine warp between two landmark configurations.
//!
//! The source landmarks plus the four source-image corners are Delaunay
//! triangulated. The same index triangles, built on the destination
//! landmarks and destination corners, tile the destination image. For every
//! destination pixel centre the containing triangle gives barycentric weights
//! that locate the matching point in the source image.
//!
//! Coordinates are continuous: pixel `(i, j)` covers `[i, i+1) x [j, j+1)`
//! and its centre is `(i + 0.5, j + 0.5)`.

use image::{Rgb, RgbImage};
use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::ingest::{HairMask, LandmarkSet, Point};

struct Anchor {
    at: Point2<f64>,
    idx: usize,
}

impl HasPosition for Anchor {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        self.at
    }
}

fn with_corners(set: &LandmarkSet, width: u32, height: u32) -> Result<Vec<Point>> {
    let (w, h) = (f64::from(width), f64::from(height));
    for (index, p) in set.points().iter().enumerate() {
        if p.x < 0.0 || p.y < 0.0 || p.x > w || p.y > h {
            return Err(Error::OutOfBoundsLandmark {
                index,
                x: p.x,
                y: p.y,
                width,
                height,
            });
        }
    }
    let mut pts = set.points().to_vec();
    pts.extend([
        Point::new(0.0, 0.0),
        Point::new(w, 0.0),
        Point::new(0.0, h),
        Point::new(w, h),
    ]);
    Ok(pts)
}

/// Index triples of a Delaunay triangulation over `pts`.
fn triangulate(pts: &[Point]) -> Result<Vec<[usize; 3]>> {
    let mut sorted: Vec<(u64, u64)> = pts.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DegenerateTriangle);
    }
    let anchors: Vec<Anchor> = pts
        .iter()
        .enumerate()
        .map(|(idx, p)| Anchor {
            at: Point2::new(p.x, p.y),
            idx,
        })
        .collect();
    let tri = DelaunayTriangulation::<Anchor>::bulk_load_stable(anchors)
        .map_err(|_| Error::DegenerateTriangle)?;
    if tri.num_vertices() != pts.len() {
        return Err(Error::DegenerateTriangle);
    }
    let faces: Vec<[usize; 3]> = tri
        .inner_faces()
        .map(|f| f.vertices().map(|v| v.data().idx))
        .collect();
    if faces.is_empty() {
        return Err(Error::DegenerateTriangle);
    }
    Ok(faces)
}

/// For every destination pixel, the matching continuous source coordinate.
pub struct WarpMap {
    width: u32,
    height: u32,
    src_size: (u32, u32),
    coords: Vec<Option<(f64, f64)>>,
}

impl WarpMap {
    pub fn new(
        src: &LandmarkSet,
        src_size: (u32, u32),
        dst: &LandmarkSet,
        dst_size: (u32, u32),
    ) -> Result<Self> {
        let sp = with_corners(src, src_size.0, src_size.1)?;
        let dp = with_corners(dst, dst_size.0, dst_size.1)?;
        let faces = triangulate(&sp)?;
        let (width, height) = dst_size;
        let mut coords = vec![None; width as usize * height as usize];

        for [a, b, c] in faces {
            let (d0, d1, d2) = (dp[a], dp[b], dp[c]);
            let det = (d1.x - d0.x) * (d2.y - d0.y) - (d2.x - d0.x) * (d1.y - d0.y);
            if det.abs() < 1e-12 {
                continue;
            }
            let (s0, s1, s2) = (sp[a], sp[b], sp[c]);
            let x_lo = d0.x.min(d1.x).min(d2.x).floor().max(0.0) as u32;
            let y_lo = d0.y.min(d1.y).min(d2.y).floor().max(0.0) as u32;
            let x_hi = (d0.x.max(d1.x).max(d2.x).ceil() as u32).min(width);
            let y_hi = (d0.y.max(d1.y).max(d2.y).ceil() as u32).min(height);
            for y in y_lo..y_hi {
                let py = f64::from(y) + 0.5;
                for x in x_lo..x_hi {
                    let slot = &mut coords[y as usize * width as usize + x as usize];
                    if slot.is_some() {
                        continue;
                    }
                    let px = f64::from(x) + 0.5;
                    let l1 = ((px - d0.x) * (d2.y - d0.y) - (d2.x - d0.x) * (py - d0.y)) / det;
                    let l2 = ((d1.x - d0.x) * (py - d0.y) - (px - d0.x) * (d1.y - d0.y)) / det;
                    let l0 = 1.0 - l1 - l2;
                    const EPS: f64 = -1e-9;
                    if l0 < EPS || l1 < EPS || l2 < EPS {
                        continue;
                    }
                    *slot = Some((
                        l0 * s0.x + l1 * s1.x + l2 * s2.x,
                        l0 * s0.y + l1 * s1.y + l2 * s2.y,
                    ));
                }
            }
        }
        Ok(Self {
            width,
            height,
            src_size,
            coords,
        })
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn source_coord(&self, x: u32, y: u32) -> Option<(f64, f64)> {
        self.coords[y as usize * self.width as usize + x as usize]
    }

    /// Nearest-neighbour resampling keeps the mask binary.
    pub fn warp_mask(&self, mask: &HairMask) -> Result<HairMask> {
        if mask.dimensions() != self.src_size {
            return Err(Error::MaskFormat(format!(
                "mask is {:?}, source image is {:?}",
                mask.dimensions(),
                self.src_size
            )));
        }
        let (sw, sh) = self.src_size;
        Ok(HairMask::from_fn(self.width, self.height, |x, y| {
            self.source_coord(x, y).is_some_and(|(sx, sy)| {
                let (fx, fy) = (sx.floor(), sy.floor());
                fx >= 0.0 && fy >= 0.0 && fx < f64::from(sw) && fy < f64::from(sh) && mask.get(fx as u32, fy as u32)
            })
        }))
    }

    /// Bilinear sample of `image` at the source point of destination pixel
    /// `(x, y)`, rounded to 8 bits.
    pub fn sample_rgb(&self, image: &RgbImage, x: u32, y: u32) -> Option<Rgb<u8>> {
        let (sx, sy) = self.source_coord(x, y)?;
        Some(bilinear(image, sx - 0.5, sy - 0.5))
    }
}

fn bilinear(image: &RgbImage, x: f64, y: f64) -> Rgb<u8> {
    let (w, h) = image.dimensions();
    let clamp = |v: f64, hi: u32| v.clamp(0.0, f64::from(hi - 1));
    let (x, y) = (clamp(x, w), clamp(y, h));
    let (x0, y0) = (x.floor() as u32, y.floor() as u32);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (tx, ty) = (x - f64::from(x0), y - f64::from(y0));
    let (p00, p10, p01, p11) = (
        image.get_pixel(x0, y0),
        image.get_pixel(x1, y0),
        image.get_pixel(x0, y1),
        image.get_pixel(x1, y1),
    );
    Rgb(std::array::from_fn(|c| {
        let top = f64::from(p00[c]) * (1.0 - tx) + f64::from(p10[c]) * tx;
        let bottom = f64::from(p01[c]) * (1.0 - tx) + f64::from(p11[c]) * tx;
        (top * (1.0 - ty) + bottom * ty).round().clamp(0.0, 255.0) as u8
    }))
}

/// Warps a mask drawn on the image with landmarks `src` onto the image with
/// landmarks `dst`, which has size `dst_size`.
pub fn warp_mask(mask: &HairMask, src: &LandmarkSet, dst: &LandmarkSet, dst_size: (u32, u32)) -> Result<HairMask> {
    WarpMap::new(src, mask.dimensions(), dst, dst_size)?.warp_mask(mask)
}
