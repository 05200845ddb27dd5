use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LANDMARK_COUNT: usize = 68;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// 68 facial landmarks in iBUG order, in continuous pixel coordinates
/// (pixel `(i, j)` covers `[i, i+1) x [j, j+1)`).
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSet {
    points: [Point; LANDMARK_COUNT],
}

impl LandmarkSet {
    pub fn new(points: &[Point]) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(Error::WrongPointCount {
                image_id: String::new(),
                count: points.len(),
            });
        }
        for (i, p) in points.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() || p.x < 0.0 || p.y < 0.0 {
                return Err(Error::InvalidLandmark(format!(
                    "point {i} = ({}, {}) must be finite and non-negative",
                    p.x, p.y
                )));
            }
        }
        let mut arr = [Point::default(); LANDMARK_COUNT];
        arr.copy_from_slice(points);
        Ok(Self { points: arr })
    }

    pub fn points(&self) -> &[Point; LANDMARK_COUNT] {
        &self.points
    }

    pub fn get(&self, i: usize) -> Point {
        self.points[i]
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self> {
        let moved: Vec<Point> = self
            .points
            .iter()
            .map(|p| Point::new(p.x + dx, p.y + dy))
            .collect();
        Self::new(&moved)
    }
}

#[derive(Deserialize)]
struct Row {
    image_id: String,
    i: usize,
    x: f64,
    y: f64,
}

/// Reads `image_id,i,x,y` rows; every image must list each index 0..67 exactly once.
pub fn load_landmarks(path: impl AsRef<Path>) -> Result<HashMap<String, LandmarkSet>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_landmarks(file)
}

pub(crate) fn read_landmarks(reader: impl std::io::Read) -> Result<HashMap<String, LandmarkSet>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut grouped: BTreeMap<String, BTreeMap<usize, Point>> = BTreeMap::new();
    for (line, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::parse(format!("landmarks row {}", line + 2), e.to_string()))?;
        if row.i >= LANDMARK_COUNT {
            return Err(Error::InvalidLandmark(format!(
                "image {}: index {} outside 0..67",
                row.image_id, row.i
            )));
        }
        let pts = grouped.entry(row.image_id.clone()).or_default();
        if pts.insert(row.i, Point::new(row.x, row.y)).is_some() {
            return Err(Error::InvalidLandmark(format!(
                "image {}: index {} listed twice",
                row.image_id, row.i
            )));
        }
    }
    grouped
        .into_iter()
        .map(|(id, pts)| {
            if pts.len() != LANDMARK_COUNT {
                return Err(Error::WrongPointCount {
                    image_id: id,
                    count: pts.len(),
                });
            }
            let points: Vec<Point> = pts.into_values().collect();
            let set = LandmarkSet::new(&points).map_err(|e| match e {
                Error::InvalidLandmark(m) => Error::InvalidLandmark(format!("image {id}: {m}")),
                other => other,
            })?;
            Ok((id, set))
        })
        .collect()
}

pub fn write_landmarks<'a>(
    path: impl AsRef<Path>,
    sets: impl IntoIterator<Item = (&'a str, &'a LandmarkSet)>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["image_id", "i", "x", "y"])?;
    for (id, set) in sets {
        for (i, p) in set.points().iter().enumerate() {
            w.write_record([id.to_string(), i.to_string(), p.x.to_string(), p.y.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
