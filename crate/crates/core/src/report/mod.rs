//! CSV tables and SVG figures for audit reports and training-grid results.

mod grid;
mod svg;

use crate::error::{Error, Result};
use crate::pairs::{bin_edge, AuditReport, CohortReport, PairGroup, PairKind, StreamStats, HISTOGRAM_BINS};
use svg::Svg;

pub use grid::{parse_long_csv, GridCell, GridResult, GridSummary};

/// Six significant digits, shortest form, `""` never produced.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let r: f64 = sci.parse().expect("formatted float parses");
    let mag = r.abs().log10().floor() as i32;
    if !(-4..15).contains(&mag) {
        let (mant, exp) = sci.split_once('e').expect("exponent form");
        return format!("{}e{exp}", trim_zeros(mant));
    }
    let decimals = (5 - mag).max(0) as usize;
    trim_zeros(&format!("{r:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

const GROUP_COLOURS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN: (f64, f64, f64, f64) = (50.0, 20.0, 30.0, 40.0); // left, right, top, bottom

fn present_cells(c: &CohortReport) -> Vec<(PairGroup, PairKind, &StreamStats)> {
    let mut out = Vec::new();
    for g in PairGroup::ALL {
        if let Some(gr) = c.groups.get(&g) {
            for k in [PairKind::Genuine, PairKind::Impostor] {
                if let Some(s) = gr.cell(k).filter(|s| !s.is_empty()) {
                    out.push((g, k, s));
                }
            }
        }
    }
    out
}

/// Overlaid normalized score histograms, one panel per cohort. Genuine curves
/// are solid, impostor curves dashed; d-prime values sit at the upper left.
pub fn render_distributions(report: &AuditReport) -> Result<String> {
    let panels: Vec<(&String, &CohortReport)> = report
        .cohorts
        .iter()
        .filter(|(_, c)| !present_cells(c).is_empty())
        .collect();
    if panels.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut svg = Svg::new(PANEL_W * panels.len() as f64, PANEL_H);
    for (pi, (name, cohort)) in panels.iter().enumerate() {
        draw_panel(&mut svg, PANEL_W * pi as f64, name, cohort);
    }
    Ok(svg.finish())
}

fn draw_panel(svg: &mut Svg, x0: f64, name: &str, cohort: &CohortReport) {
    let cells = present_cells(cohort);
    let (left, right, top, bottom) = MARGIN;
    let (px0, px1, py0, py1) = (x0 + left, x0 + PANEL_W - right, top, PANEL_H - bottom);

    let used = |s: &StreamStats| {
        let h = s.histogram();
        let first = h.iter().position(|&c| c > 0).unwrap_or(0);
        let last = h.iter().rposition(|&c| c > 0).unwrap_or(HISTOGRAM_BINS - 1);
        (first, last)
    };
    let lo_bin = cells.iter().map(|c| used(c.2).0).min().unwrap_or(0).saturating_sub(4);
    let hi_bin = (cells.iter().map(|c| used(c.2).1).max().unwrap_or(HISTOGRAM_BINS - 1) + 4).min(HISTOGRAM_BINS - 1);
    let (xlo, xhi) = (bin_edge(lo_bin), bin_edge(hi_bin + 1));
    let width = bin_edge(1) - bin_edge(0);
    let density = |s: &StreamStats, b: usize| s.histogram()[b] as f64 / (s.n() as f64 * width);
    let ymax = cells
        .iter()
        .flat_map(|c| (lo_bin..=hi_bin).map(move |b| density(c.2, b)))
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let sx = |v: f64| px0 + (v - xlo) / (xhi - xlo) * (px1 - px0);
    let sy = |v: f64| py1 - v / ymax * (py1 - py0);

    svg.line(px0, py1, px1, py1, "black");
    svg.line(px0, py0, px0, py1, "black");
    for t in 0..=4 {
        let v = xlo + (xhi - xlo) * f64::from(t) / 4.0;
        svg.line(sx(v), py1, sx(v), py1 + 4.0, "black");
        svg.text(sx(v), py1 + 16.0, "middle", "tick", &format!("{v:.2}"));
    }
    svg.text((px0 + px1) / 2.0, PANEL_H - 6.0, "middle", "axis", &format!("{name} cosine similarity"));

    for (g, k, s) in &cells {
        let pts: Vec<(f64, f64)> = (lo_bin..=hi_bin)
            .map(|b| (sx((bin_edge(b) + bin_edge(b + 1)) / 2.0), sy(density(s, b))))
            .collect();
        let class = format!(
            "{} {}",
            g.as_str(),
            if *k == PairKind::Genuine { "genuine" } else { "impostor" }
        );
        svg.path(&pts, GROUP_COLOURS[g.index()], *k == PairKind::Impostor, &class);
    }

    let mut line = 0.0;
    for g in PairGroup::ALL {
        if let Some(d) = cohort.dprime(g) {
            svg.text(px0 + 8.0, py0 + 14.0 + line * 15.0, "start", "dprime", &format!("{} d' = {:.2}", g.as_str(), d));
            line += 1.0;
        }
    }
}

/// One row per cohort and pair group: cell sizes, means, std and d-prime.
pub fn emit_report_table(report: &AuditReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "cohort",
        "group",
        "genuine_n",
        "genuine_mean",
        "genuine_std",
        "impostor_n",
        "impostor_mean",
        "impostor_std",
        "dprime",
    ])?;
    for (name, c) in &report.cohorts {
        for g in PairGroup::ALL {
            let gr = c.groups.get(&g);
            let cell = |k| -> [String; 3] {
                match gr.and_then(|gr| gr.cell(k)) {
                    Some(s) => [
                        s.n().to_string(),
                        sig6(s.mean()),
                        s.variance().map(|v| sig6(v.sqrt())).unwrap_or_default(),
                    ],
                    None => ["0".into(), String::new(), String::new()],
                }
            };
            let mut row = vec![name.clone(), g.as_str().to_string()];
            row.extend(cell(PairKind::Genuine));
            row.extend(cell(PairKind::Impostor));
            row.push(c.dprime(g).map(sig6).unwrap_or_default());
            w.write_record(&row)?;
        }
    }
    into_string(w)
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::parse("csv output", e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::parse("csv output", e.to_string()))
}

pub(crate) fn group_colour(g: PairGroup) -> &'static str {
    GROUP_COLOURS[g.index()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairs::GroupReport;
    use std::collections::BTreeMap;

    fn cohort(with_fh: bool) -> CohortReport {
        let stats = |m: f64| StreamStats::from_scores((0..200).map(|i| m + (i as f64 - 100.0) * 0.001));
        let mut groups = BTreeMap::new();
        for g in PairGroup::ALL {
            let present = with_fh || g != PairGroup::FhFh;
            let (gen, imp) = if present { (stats(0.7), stats(0.05)) } else { (StreamStats::new(), StreamStats::new()) };
            let dprime = present.then(|| crate::pairs::dprime(&gen, &imp).unwrap());
            groups.insert(
                g,
                GroupReport {
                    genuine: present.then_some(gen),
                    impostor: present.then_some(imp),
                    dprime,
                },
            );
        }
        CohortReport {
            images: 10,
            subjects: 2,
            cs_images: 5,
            fh_images: 5,
            skipped_without_embedding: 0,
            expected_pairs: BTreeMap::new(),
            groups,
        }
    }

    fn report(with_fh: bool) -> AuditReport {
        AuditReport {
            cohorts: BTreeMap::from([("AAM".to_string(), cohort(with_fh))]),
            unit_norm_embeddings: true,
            impostor_sampling: None,
            training: None,
        }
    }

    #[test]
    fn six_curves_three_labels() {
        let svg = render_distributions(&report(true)).unwrap();
        assert_eq!(svg.matches("<path").count(), 6);
        assert_eq!(svg.matches(r#"class="dprime""#).count(), 3);
        assert_eq!(svg, render_distributions(&report(true)).unwrap());
    }

    #[test]
    fn absent_cells_are_omitted() {
        let svg = render_distributions(&report(false)).unwrap();
        assert_eq!(svg.matches("<path").count(), 4);
        assert!(!svg.contains("FH-FH"));
    }

    #[test]
    fn empty_report_is_an_error() {
        let mut r = report(true);
        r.cohorts.clear();
        assert!(matches!(render_distributions(&r), Err(Error::EmptyReport)));
    }

    #[test]
    fn sig6_format() {
        assert_eq!(sig6(11.0123456), "11.0123");
        assert_eq!(sig6(7.95), "7.95");
        assert_eq!(sig6(-0.000123456789), "-0.000123457");
        assert_eq!(sig6(1234567.0), "1234570");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1e-7), "1e-7");
    }

    #[test]
    fn report_table_rows() {
        let t = emit_report_table(&report(false)).unwrap();
        assert_eq!(t.lines().count(), 4);
        assert!(t.lines().nth(3).unwrap().starts_with("AAM,FH-FH,0,,,0,,,"));
    }
}
