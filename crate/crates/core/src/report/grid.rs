//! d-prime across a training grid: per (grid point, repetition, cohort,
//! group) values and their per-grid-point mean and spread.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use super::svg::Svg;
use super::{group_colour, into_string, sig6};
use crate::error::{Error, Result};
use crate::manifest_builder::Protocol;
use crate::pairs::{AuditReport, PairGroup};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridCell {
    pub grid_point: usize,
    pub repetition: usize,
    pub cohort: String,
    pub group: PairGroup,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub protocol: Protocol,
    pub subjects: usize,
    pub images_per_subject: usize,
    /// `None` marks a cell that was absent in that repetition's report.
    pub values: BTreeMap<GridCell, Option<f64>>,
}

/// Mean and sample standard deviation over the repetitions that had a value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSummary {
    pub mean: f64,
    pub std: f64,
    pub repetitions: usize,
}

impl GridResult {
    pub fn new(protocol: Protocol, subjects: usize, images_per_subject: usize) -> Self {
        Self {
            protocol,
            subjects,
            images_per_subject,
            values: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, grid_point: usize, repetition: usize, cohort: &str, group: PairGroup, dprime: Option<f64>) {
        self.values.insert(
            GridCell {
                grid_point,
                repetition,
                cohort: cohort.to_string(),
                group,
            },
            dprime,
        );
    }

    /// Collects reports that carry a training tag.
    pub fn from_reports(reports: &[AuditReport]) -> Result<Self> {
        let mut out: Option<GridResult> = None;
        let mut seen = BTreeSet::new();
        for r in reports {
            let tag = r
                .training
                .as_ref()
                .ok_or_else(|| Error::InvalidSpec("grid reports need a training tag".into()))?;
            let protocol: Protocol = tag.protocol.parse()?;
            let grid = out.get_or_insert_with(|| GridResult::new(protocol, tag.subjects, tag.images_per_subject));
            if (grid.protocol, grid.subjects, grid.images_per_subject) != (protocol, tag.subjects, tag.images_per_subject) {
                return Err(Error::InvalidSpec("reports come from different training grids".into()));
            }
            if !seen.insert((tag.grid_point, tag.repetition)) {
                return Err(Error::InvalidSpec(format!(
                    "grid point {} repetition {} appears twice",
                    tag.grid_point, tag.repetition
                )));
            }
            for (cohort, c) in &r.cohorts {
                for g in PairGroup::ALL {
                    grid.insert(tag.grid_point, tag.repetition, cohort, g, c.dprime(g));
                }
            }
        }
        out.ok_or(Error::EmptyReport)
    }

    pub fn grid_points(&self) -> Vec<usize> {
        self.values.keys().map(|c| c.grid_point).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn cohorts(&self) -> Vec<String> {
        self.values.keys().map(|c| c.cohort.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn summary(&self, grid_point: usize, cohort: &str, group: PairGroup) -> Option<GridSummary> {
        let vals: Vec<f64> = self
            .values
            .iter()
            .filter(|(c, _)| c.grid_point == grid_point && c.cohort == cohort && c.group == group)
            .filter_map(|(_, v)| *v)
            .collect();
        if vals.is_empty() {
            return None;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = if vals.len() < 2 {
            0.0
        } else {
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(GridSummary {
            mean,
            std,
            repetitions: vals.len(),
        })
    }

    /// Share of male training images that carry facial hair.
    pub fn fh_image_pct(&self, grid_point: usize) -> f64 {
        let total = match self.protocol {
            Protocol::AcrossSubjects => self.subjects,
            Protocol::WithinSubjects => self.images_per_subject,
        } as f64;
        (total - grid_point as f64) / total * 100.0
    }

    /// Share of male subjects with at least one facial-hair image.
    pub fn fh_subject_pct(&self, grid_point: usize) -> f64 {
        match self.protocol {
            Protocol::AcrossSubjects => self.fh_image_pct(grid_point),
            Protocol::WithinSubjects if grid_point < self.images_per_subject => 100.0,
            Protocol::WithinSubjects => 0.0,
        }
    }

    pub fn row_label(&self, grid_point: usize) -> String {
        match self.protocol {
            Protocol::WithinSubjects => {
                format!("{grid_point}-CS {}-FH", self.images_per_subject - grid_point.min(self.images_per_subject))
            }
            Protocol::AcrossSubjects => {
                format!("{grid_point}-CS {}-FH subjects", self.subjects - grid_point.min(self.subjects))
            }
        }
    }

    /// One row per grid point with `mean,std` columns per cohort and group.
    pub fn emit_table(&self) -> Result<String> {
        let cohorts = self.cohorts();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["row".to_string(), "grid_point".into(), "fh_image_pct".into(), "fh_subject_pct".into()];
        for c in &cohorts {
            for g in PairGroup::ALL {
                header.push(format!("{c}_{}_mean", g.as_str()));
                header.push(format!("{c}_{}_std", g.as_str()));
            }
        }
        w.write_record(&header)?;
        for x in self.grid_points() {
            let mut row = vec![
                self.row_label(x),
                x.to_string(),
                sig6(self.fh_image_pct(x)),
                sig6(self.fh_subject_pct(x)),
            ];
            for c in &cohorts {
                for g in PairGroup::ALL {
                    match self.summary(x, c, g) {
                        Some(s) => row.extend([sig6(s.mean), sig6(s.std)]),
                        None => row.extend([String::new(), String::new()]),
                    }
                }
            }
            w.write_record(&row)?;
        }
        into_string(w)
    }

    /// Every per-repetition value, one per line; reads back with
    /// [`parse_long_csv`].
    pub fn emit_long_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "protocol",
            "subjects",
            "images_per_subject",
            "grid_point",
            "repetition",
            "cohort",
            "group",
            "dprime",
        ])?;
        for (c, v) in &self.values {
            w.write_record([
                self.protocol.as_str().to_string(),
                self.subjects.to_string(),
                self.images_per_subject.to_string(),
                c.grid_point.to_string(),
                c.repetition.to_string(),
                c.cohort.clone(),
                c.group.as_str().to_string(),
                v.map(sig6).unwrap_or_default(),
            ])?;
        }
        into_string(w)
    }

    /// d-prime against facial-hair image percentage with one curve per
    /// cohort and group and standard-deviation error bars.
    pub fn render_grid(&self) -> Result<String> {
        let points = self.grid_points();
        if points.is_empty() {
            return Err(Error::EmptyReport);
        }
        let cohorts = self.cohorts();
        let mut series = Vec::new();
        for (ci, c) in cohorts.iter().enumerate() {
            for g in PairGroup::ALL {
                let mut pts: Vec<(f64, GridSummary)> = points
                    .iter()
                    .filter_map(|&x| self.summary(x, c, g).map(|s| (self.fh_image_pct(x), s)))
                    .collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                if !pts.is_empty() {
                    series.push((ci, c, g, pts));
                }
            }
        }
        if series.is_empty() {
            return Err(Error::EmptyReport);
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (_, _, _, pts) in &series {
            for (_, s) in pts {
                lo = lo.min(s.mean - s.std);
                hi = hi.max(s.mean + s.std);
            }
        }
        let pad = ((hi - lo) * 0.1).max(0.5);
        let (lo, hi) = (lo - pad, hi + pad);

        let (w, h) = (560.0, 360.0);
        let (px0, px1, py0, py1) = (60.0, 400.0, 20.0, h - 45.0);
        let sx = |v: f64| px0 + v / 100.0 * (px1 - px0);
        let sy = |v: f64| py1 - (v - lo) / (hi - lo) * (py1 - py0);
        let mut svg = Svg::new(w, h);
        svg.line(px0, py1, px1, py1, "black");
        svg.line(px0, py0, px0, py1, "black");
        for t in 0..=5 {
            let v = f64::from(t) * 20.0;
            svg.line(sx(v), py1, sx(v), py1 + 4.0, "black");
            svg.text(sx(v), py1 + 16.0, "middle", "tick", &format!("{v:.0}"));
        }
        for t in 0..=4 {
            let v = lo + (hi - lo) * f64::from(t) / 4.0;
            svg.line(px0 - 4.0, sy(v), px0, sy(v), "black");
            svg.text(px0 - 6.0, sy(v) + 4.0, "end", "tick", &format!("{v:.1}"));
        }
        svg.text((px0 + px1) / 2.0, h - 8.0, "middle", "axis", "facial-hair images (%)");
        svg.text(14.0, (py0 + py1) / 2.0, "middle", "axis", "d'");

        for (i, (ci, cohort, g, pts)) in series.iter().enumerate() {
            let colour = group_colour(*g);
            let line: Vec<(f64, f64)> = pts.iter().map(|(x, s)| (sx(*x), sy(s.mean))).collect();
            svg.path(&line, colour, *ci % 2 == 1, &format!("{cohort} {}", g.as_str()));
            for (x, s) in pts {
                svg.line(sx(*x), sy(s.mean - s.std), sx(*x), sy(s.mean + s.std), colour);
                svg.line(sx(*x) - 3.0, sy(s.mean - s.std), sx(*x) + 3.0, sy(s.mean - s.std), colour);
                svg.line(sx(*x) - 3.0, sy(s.mean + s.std), sx(*x) + 3.0, sy(s.mean + s.std), colour);
                svg.circle(sx(*x), sy(s.mean), 2.5, colour);
            }
            let ly = py0 + 10.0 + i as f64 * 16.0;
            svg.line(px1 + 15.0, ly - 4.0, px1 + 35.0, ly - 4.0, colour);
            svg.text(px1 + 40.0, ly, "start", "legend", &format!("{cohort} {}", g.as_str()));
        }
        Ok(svg.finish())
    }
}

#[derive(Deserialize)]
struct LongRow {
    protocol: String,
    subjects: usize,
    images_per_subject: usize,
    grid_point: usize,
    repetition: usize,
    cohort: String,
    group: String,
    dprime: Option<f64>,
}

pub fn parse_long_csv(text: &str) -> Result<GridResult> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out: Option<GridResult> = None;
    for (i, row) in rdr.deserialize::<LongRow>().enumerate() {
        let row = row.map_err(|e| Error::parse(format!("grid csv row {}", i + 2), e.to_string()))?;
        let protocol: Protocol = row.protocol.parse()?;
        let grid = out.get_or_insert_with(|| GridResult::new(protocol, row.subjects, row.images_per_subject));
        if (grid.protocol, grid.subjects, grid.images_per_subject) != (protocol, row.subjects, row.images_per_subject) {
            return Err(Error::parse(format!("grid csv row {}", i + 2), "mixed grids".to_string()));
        }
        grid.insert(row.grid_point, row.repetition, &row.cohort, row.group.parse()?, row.dprime);
    }
    out.ok_or(Error::EmptyReport)
}
