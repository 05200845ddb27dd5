//! Mergeable running statistics for one pair class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HISTOGRAM_BINS: usize = 512;
const HIST_MIN: f64 = -1.0;
const HIST_MAX: f64 = 1.0;

/// Count, mean and sum of squared deviations (Welford), plus a 512-bin
/// histogram over [-1, 1] whose last bin is closed on the right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "StatsRepr", into = "StatsRepr")]
pub struct StreamStats {
    n: u64,
    mean: f64,
    m2: f64,
    histogram: Vec<u64>,
}

impl Default for StreamStats {
    fn default() -> Self {
        Self::new()
    }
}

pub fn histogram_bin(score: f64) -> usize {
    let s = score.clamp(HIST_MIN, HIST_MAX);
    let bin = ((s - HIST_MIN) / (HIST_MAX - HIST_MIN) * HISTOGRAM_BINS as f64).floor() as usize;
    bin.min(HISTOGRAM_BINS - 1)
}

/// Lower edge of histogram bin `i`.
pub fn bin_edge(i: usize) -> f64 {
    HIST_MIN + (HIST_MAX - HIST_MIN) * i as f64 / HISTOGRAM_BINS as f64
}

impl StreamStats {
    pub fn new() -> Self {
        Self {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            histogram: vec![0; HISTOGRAM_BINS],
        }
    }

    pub fn from_scores(scores: impl IntoIterator<Item = f64>) -> Self {
        let mut s = Self::new();
        for x in scores {
            s.accumulate(x);
        }
        s
    }

    #[inline]
    pub fn accumulate(&mut self, score: f64) {
        debug_assert!(score.is_finite());
        self.n += 1;
        let delta = score - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (score - self.mean);
        self.histogram[histogram_bin(score)] += 1;
    }

    /// Chan et al. parallel combination. Merging with an empty side returns
    /// the other side unchanged.
    pub fn merge(&self, other: &StreamStats) -> StreamStats {
        if other.n == 0 {
            return self.clone();
        }
        if self.n == 0 {
            return other.clone();
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = self.n + other.n;
        let nf = n as f64;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * (nb / nf);
        let m2 = self.m2 + other.m2 + delta * delta * (na * nb / nf);
        let histogram = self
            .histogram
            .iter()
            .zip(&other.histogram)
            .map(|(a, b)| a + b)
            .collect();
        StreamStats {
            n,
            mean,
            m2,
            histogram,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Sample variance (n - 1 denominator); `None` below two observations.
    pub fn variance(&self) -> Option<f64> {
        (self.n >= 2).then(|| self.m2 / (self.n - 1) as f64)
    }

    pub fn histogram(&self) -> &[u64] {
        &self.histogram
    }
}

/// Combines a sequence with a balanced binary tree whose shape depends only
/// on the sequence length.
pub fn merge_tree(mut items: Vec<StreamStats>) -> StreamStats {
    if items.is_empty() {
        return StreamStats::new();
    }
    while items.len() > 1 {
        items = items
            .chunks(2)
            .map(|c| match c {
                [a, b] => a.merge(b),
                [a] => a.clone(),
                _ => unreachable!(),
            })
            .collect();
    }
    items.pop().unwrap()
}

/// Decidability index: mean difference over the root of the average sample
/// variance.
pub fn dprime(genuine: &StreamStats, impostor: &StreamStats) -> Result<f64> {
    let (Some(vg), Some(vi)) = (genuine.variance(), impostor.variance()) else {
        return Err(Error::DegenerateDistribution("fewer than two scores"));
    };
    let pooled = (vg + vi) / 2.0;
    if !(pooled > 0.0) {
        return Err(Error::DegenerateDistribution("zero pooled variance"));
    }
    Ok((genuine.mean - impostor.mean) / pooled.sqrt())
}

#[derive(Serialize, Deserialize)]
struct StatsRepr {
    n: u64,
    mean: f64,
    #[serde(default, skip_deserializing)]
    variance: Option<f64>,
    m2: f64,
    histogram: Vec<u64>,
}

impl From<StreamStats> for StatsRepr {
    fn from(s: StreamStats) -> Self {
        StatsRepr {
            variance: s.variance(),
            n: s.n,
            mean: s.mean,
            m2: s.m2,
            histogram: s.histogram,
        }
    }
}

impl From<StatsRepr> for StreamStats {
    fn from(r: StatsRepr) -> Self {
        let mut histogram = r.histogram;
        histogram.resize(HISTOGRAM_BINS, 0);
        StreamStats {
            n: r.n,
            mean: r.mean,
            m2: r.m2,
            histogram,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_two_three() {
        let s = StreamStats::from_scores([1.0, 2.0, 3.0]);
        assert_eq!(s.n(), 3);
        assert_eq!(s.mean(), 2.0);
        assert_eq!(s.variance(), Some(1.0));
    }

    #[test]
    fn merge_matches_sequential() {
        let a = StreamStats::from_scores([1.0, 2.0]);
        let b = StreamStats::from_scores([3.0]);
        let m = a.merge(&b);
        assert_eq!(m.n(), 3);
        assert!((m.mean() - 2.0).abs() < 1e-15);
        assert!((m.variance().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let s = StreamStats::from_scores([0.1, -0.4, 0.9]);
        assert_eq!(s.merge(&StreamStats::new()), s);
        assert_eq!(StreamStats::new().merge(&s), s);
    }

    #[test]
    fn dprime_examples() {
        let g = StreamStats::from_scores([0.8, 0.9]);
        let i = StreamStats::from_scores([0.1, 0.2]);
        // 0.7 / sqrt(0.005)
        assert!((dprime(&g, &i).unwrap() - 9.899_494_936_611_665).abs() < 1e-6);
        assert_eq!(dprime(&g, &g).unwrap(), 0.0);
        let flat = StreamStats::from_scores([0.3, 0.3]);
        assert!(matches!(dprime(&flat, &flat), Err(Error::DegenerateDistribution(_))));
        let one = StreamStats::from_scores([0.3]);
        assert!(dprime(&g, &one).is_err());
    }

    #[test]
    fn histogram_edges() {
        assert_eq!(histogram_bin(-1.0), 0);
        assert_eq!(histogram_bin(1.0), HISTOGRAM_BINS - 1);
        assert_eq!(histogram_bin(0.0), HISTOGRAM_BINS / 2);
        assert_eq!(histogram_bin(-1e-12), HISTOGRAM_BINS / 2 - 1);
    }

    #[test]
    fn json_round_trip() {
        let s = StreamStats::from_scores([0.25, 0.5, -0.125]);
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"variance\""));
        let back: StreamStats = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    fn scores() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..=1.0, 0..200)
    }

    proptest! {
        #[test]
        fn merge_equals_union(a in scores(), b in scores()) {
            let merged = StreamStats::from_scores(a.iter().copied())
                .merge(&StreamStats::from_scores(b.iter().copied()));
            let seq = StreamStats::from_scores(a.iter().chain(&b).copied());
            prop_assert_eq!(merged.n(), seq.n());
            prop_assert_eq!(merged.histogram(), seq.histogram());
            let tol = |x: f64| 1e-9 * x.abs().max(1.0);
            prop_assert!((merged.mean() - seq.mean()).abs() <= tol(seq.mean()));
            prop_assert!((merged.m2() - seq.m2()).abs() <= tol(seq.m2()));
            prop_assert!(merged.m2() >= 0.0);
        }

        #[test]
        fn dprime_affine_invariant(
            g in prop::collection::vec(-1.0f64..1.0, 3..50),
            i in prop::collection::vec(-1.0f64..1.0, 3..50),
            a in 0.1f64..10.0,
            b in -5.0f64..5.0,
        ) {
            let gs = StreamStats::from_scores(g.iter().copied());
            let is = StreamStats::from_scores(i.iter().copied());
            if let Ok(d) = dprime(&gs, &is) {
                let gt = StreamStats::from_scores(g.iter().map(|x| a * x + b));
                let it = StreamStats::from_scores(i.iter().map(|x| a * x + b));
                let dt = dprime(&gt, &it).unwrap();
                prop_assert!((d - dt).abs() <= 1e-9 * d.abs().max(1.0));
                let swapped = dprime(&is, &gs).unwrap();
                prop_assert_eq!(swapped, -d);
            }
        }
    }
}
