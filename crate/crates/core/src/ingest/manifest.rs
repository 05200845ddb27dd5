use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{AttributeScores, DatasetManifest, ImageRecord};
use crate::error::{Error, Result};

const REQUIRED: [&str; 5] = ["image_id", "subject_id", "cohort", "sex", "path"];

pub const ATTRIBUTE_COLUMNS: [&str; 10] = [
    "no_beard",
    "chin",
    "side_to_side",
    "no_mustache",
    "mustache_connected",
    "mustache_isolated",
    "five_oclock_shadow",
    "short",
    "medium",
    "long",
];

#[derive(Deserialize)]
struct ManifestRow {
    image_id: String,
    subject_id: String,
    cohort: String,
    sex: String,
    path: String,
    #[serde(default)]
    mask_path: Option<String>,
}

/// Loads `image_id,subject_id,cohort,sex,path[,mask_path]`.
///
/// Relative paths resolve against the manifest's directory. An empty file
/// yields an empty manifest.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    read_manifest(file, &base)
}

pub(crate) fn read_manifest(reader: impl std::io::Read, base: &Path) -> Result<DatasetManifest> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(DatasetManifest::default());
    }
    for col in REQUIRED {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingField(col.into()));
        }
    }
    let resolve = |p: &str| -> PathBuf {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let mut records = Vec::new();
    for (i, row) in rdr.deserialize::<ManifestRow>().enumerate() {
        let row = row.map_err(|e| Error::parse(format!("manifest row {}", i + 2), e.to_string()))?;
        records.push(ImageRecord {
            sex: row.sex.parse()?,
            path: resolve(&row.path),
            mask_path: row.mask_path.filter(|m| !m.is_empty()).map(|m| resolve(&m)),
            image_id: row.image_id,
            subject_id: row.subject_id,
            cohort: row.cohort,
            attributes: None,
            embedding_ref: None,
        });
    }
    DatasetManifest::from_records(records)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ImageRecord]) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let rel = |p: &Path| -> String {
        p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned()
    };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["image_id", "subject_id", "cohort", "sex", "path", "mask_path"])?;
    for r in records {
        w.write_record([
            r.image_id.as_str(),
            &r.subject_id,
            &r.cohort,
            r.sex.as_str(),
            &rel(&r.path),
            &r.mask_path.as_deref().map(rel).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Deserialize)]
struct AttributeRow {
    image_id: String,
    no_beard: f64,
    chin: f64,
    side_to_side: f64,
    no_mustache: f64,
    mustache_connected: f64,
    mustache_isolated: f64,
    five_oclock_shadow: f64,
    short: f64,
    medium: f64,
    long: f64,
}

impl AttributeRow {
    fn scores(&self) -> AttributeScores {
        AttributeScores {
            no_beard: self.no_beard,
            chin: self.chin,
            side_to_side: self.side_to_side,
            no_mustache: self.no_mustache,
            mustache_connected: self.mustache_connected,
            mustache_isolated: self.mustache_isolated,
            five_oclock_shadow: self.five_oclock_shadow,
            short: self.short,
            medium: self.medium,
            long: self.long,
        }
    }
}

/// Loads `image_id` plus the ten attribute columns.
pub fn load_attributes(path: impl AsRef<Path>) -> Result<HashMap<String, AttributeScores>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_attributes(file)
}

pub(crate) fn read_attributes(reader: impl std::io::Read) -> Result<HashMap<String, AttributeScores>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(HashMap::new());
    }
    for col in std::iter::once("image_id").chain(ATTRIBUTE_COLUMNS) {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingField(col.into()));
        }
    }
    let mut out = HashMap::new();
    for (i, row) in rdr.deserialize::<AttributeRow>().enumerate() {
        let row = row.map_err(|e| Error::parse(format!("attributes row {}", i + 2), e.to_string()))?;
        let scores = row.scores();
        scores.validate()?;
        if out.insert(row.image_id.clone(), scores).is_some() {
            return Err(Error::DuplicateId(row.image_id));
        }
    }
    Ok(out)
}

pub fn write_attributes<'a>(
    path: impl AsRef<Path>,
    rows: impl IntoIterator<Item = (&'a str, &'a AttributeScores)>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(std::iter::once("image_id").chain(ATTRIBUTE_COLUMNS))?;
    for (id, s) in rows {
        let mut rec = vec![id.to_string()];
        rec.extend(s.fields().iter().map(|(_, v)| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "image_id,subject_id,cohort,sex,path\n";

    #[test]
    fn three_rows() {
        let text = format!("{HEADER}a,s1,AAM,male,a.png\nb,s1,AAM,male,b.png\nc,s2,CM,M,/abs/c.png\n");
        let m = read_manifest(text.as_bytes(), Path::new("/data")).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.records[0].path, PathBuf::from("/data/a.png"));
        assert_eq!(m.records[2].path, PathBuf::from("/abs/c.png"));
        assert_eq!(m.cohorts.len(), 2);
    }

    #[test]
    fn repeated_id() {
        let text = format!("{HEADER}a,s1,AAM,male,a.png\na,s2,AAM,male,b.png\n");
        assert!(matches!(
            read_manifest(text.as_bytes(), Path::new("")),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn empty_file() {
        let m = read_manifest(&b""[..], Path::new("")).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn missing_column() {
        let text = "image_id,subject_id,sex,path\na,s,male,a.png\n";
        assert!(matches!(
            read_manifest(text.as_bytes(), Path::new("")),
            Err(Error::MissingField(c)) if c == "cohort"
        ));
    }

    #[test]
    fn malformed_row() {
        let text = format!("{HEADER}a,s1,AAM,male\n");
        assert!(matches!(
            read_manifest(text.as_bytes(), Path::new("")),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn row_order_does_not_matter() {
        let rows = [
            "a,s1,AAM,male,a.png",
            "b,s2,AAM,female,b.png",
            "c,s1,CM,unknown,c.png",
        ];
        let fwd = format!("{HEADER}{}\n", rows.join("\n"));
        let rev: Vec<_> = rows.iter().rev().copied().collect();
        let bwd = format!("{HEADER}{}\n", rev.join("\n"));
        let a = read_manifest(fwd.as_bytes(), Path::new("")).unwrap();
        let b = read_manifest(bwd.as_bytes(), Path::new("")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn attributes_parse_and_validate() {
        let mut text = String::from("image_id,");
        text.push_str(&ATTRIBUTE_COLUMNS.join(","));
        text.push_str("\nx,0.9,0,0,0.8,0,0,0.1,0,0,0\n");
        let attrs = read_attributes(text.as_bytes()).unwrap();
        assert_eq!(attrs["x"].no_mustache, 0.8);
        let bad = text.replace("0.9", "1.5");
        assert!(matches!(
            read_attributes(bad.as_bytes()),
            Err(Error::OutOfRangeScore { field: "no_beard", .. })
        ));
    }
}
