use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::labeling::HairLabel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairKind {
    Genuine,
    Impostor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairGroup {
    #[serde(rename = "CS-CS")]
    CsCs,
    #[serde(rename = "CS-FH")]
    CsFh,
    #[serde(rename = "FH-FH")]
    FhFh,
}

impl PairGroup {
    pub const ALL: [PairGroup; 3] = [PairGroup::CsCs, PairGroup::CsFh, PairGroup::FhFh];

    pub fn of(a: HairLabel, b: HairLabel) -> Option<PairGroup> {
        use HairLabel::*;
        match (a, b) {
            (CleanShaven, CleanShaven) => Some(PairGroup::CsCs),
            (FacialHair, FacialHair) => Some(PairGroup::FhFh),
            (CleanShaven, FacialHair) | (FacialHair, CleanShaven) => Some(PairGroup::CsFh),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairGroup::CsCs => "CS-CS",
            PairGroup::CsFh => "CS-FH",
            PairGroup::FhFh => "FH-FH",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for PairGroup {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "CS-CS" => Ok(PairGroup::CsCs),
            "CS-FH" => Ok(PairGroup::CsFh),
            "FH-FH" => Ok(PairGroup::FhFh),
            other => Err(crate::Error::parse("pair group", format!("unknown group `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairClass {
    pub kind: PairKind,
    pub group: PairGroup,
}

impl PairClass {
    pub const fn new(kind: PairKind, group: PairGroup) -> Self {
        Self { kind, group }
    }

    pub fn all() -> impl Iterator<Item = PairClass> {
        PairGroup::ALL.into_iter().flat_map(|g| {
            [PairKind::Genuine, PairKind::Impostor]
                .into_iter()
                .map(move |k| PairClass::new(k, g))
        })
    }

    /// Cell index 0..6, genuine/impostor interleaved per group.
    pub fn cell(self) -> usize {
        self.group.index() * 2 + usize::from(self.kind == PairKind::Impostor)
    }
}

/// Per-subject CS/FH image counts; excluded images are not tallied.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SubjectTally {
    counts: BTreeMap<String, (u64, u64)>,
}

impl SubjectTally {
    pub fn from_labeled<'a>(items: impl IntoIterator<Item = (&'a str, HairLabel)>) -> Self {
        let mut counts: BTreeMap<String, (u64, u64)> = BTreeMap::new();
        for (subject, label) in items {
            match label {
                HairLabel::CleanShaven => counts.entry(subject.to_string()).or_default().0 += 1,
                HairLabel::FacialHair => counts.entry(subject.to_string()).or_default().1 += 1,
                HairLabel::Excluded => {}
            }
        }
        Self { counts }
    }

    pub fn subjects(&self) -> impl Iterator<Item = (&str, u64, u64)> {
        self.counts.iter().map(|(s, &(cs, fh))| (s.as_str(), cs, fh))
    }
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Closed-form number of pairs in a class.
pub fn count_pairs(tally: &SubjectTally, class: PairClass) -> u64 {
    let (mut cs_total, mut fh_total) = (0u64, 0u64);
    let (mut gen_cs, mut gen_fh, mut gen_mixed) = (0u64, 0u64, 0u64);
    for (_, cs, fh) in tally.subjects() {
        cs_total += cs;
        fh_total += fh;
        gen_cs += choose2(cs);
        gen_fh += choose2(fh);
        gen_mixed += cs * fh;
    }
    match (class.kind, class.group) {
        (PairKind::Genuine, PairGroup::CsCs) => gen_cs,
        (PairKind::Genuine, PairGroup::CsFh) => gen_mixed,
        (PairKind::Genuine, PairGroup::FhFh) => gen_fh,
        (PairKind::Impostor, PairGroup::CsCs) => choose2(cs_total) - gen_cs,
        (PairKind::Impostor, PairGroup::CsFh) => cs_total * fh_total - gen_mixed,
        (PairKind::Impostor, PairGroup::FhFh) => choose2(fh_total) - gen_fh,
    }
}
