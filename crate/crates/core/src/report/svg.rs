//! Minimal SVG writer with fixed number formatting.

use std::fmt::Write;

pub(crate) struct Svg {
    buf: String,
}

pub(crate) fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

pub(crate) fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        let mut buf = String::new();
        let (w, h) = (num(width), num(height));
        writeln!(
            buf,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        )
        .unwrap();
        writeln!(buf, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#).unwrap();
        Self { buf }
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        writeln!(
            self.buf,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="1"/>"#,
            num(x1),
            num(y1),
            num(x2),
            num(y2)
        )
        .unwrap();
    }

    pub fn path(&mut self, pts: &[(f64, f64)], stroke: &str, dashed: bool, class: &str) {
        let mut d = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{} {}", if i == 0 { "M" } else { " L" }, num(*x), num(*y));
        }
        let dash = if dashed { r#" stroke-dasharray="5 3""# } else { "" };
        writeln!(
            self.buf,
            r#"<path class="{class}" d="{d}" fill="none" stroke="{stroke}" stroke-width="1.5"{dash}/>"#
        )
        .unwrap();
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        writeln!(
            self.buf,
            r#"<circle cx="{}" cy="{}" r="{}" fill="{fill}"/>"#,
            num(x),
            num(y),
            num(r)
        )
        .unwrap();
    }

    pub fn text(&mut self, x: f64, y: f64, anchor: &str, class: &str, content: &str) {
        writeln!(
            self.buf,
            r#"<text class="{class}" x="{}" y="{}" text-anchor="{anchor}">{}</text>"#,
            num(x),
            num(y),
            escape(content)
        )
        .unwrap();
    }

    pub fn finish(mut self) -> String {
        self.buf.push_str("</svg>\n");
        self.buf
    }
}
