use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HISTOGRAM_BINS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges shared by both domains.
    pub edges: Vec<f64>,
    pub source_counts: Vec<usize>,
    pub target_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentStats {
    /// Per channel: target mean − source mean, over samples and time.
    pub mean_gaps: Vec<f64>,
    /// Per channel: target variance − source variance.
    pub variance_gaps: Vec<f64>,
    /// `‖μ_s − μ_t‖²` over flattened features.
    pub mean_term: f64,
    /// `‖Σ_s − Σ_t‖_F²` of the population covariances.
    pub covariance_term: f64,
    pub distance: f64,
    pub histogram: Histogram,
}

fn moments(x: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("nonempty batch");
    let centered = x - &mean;
    let cov = centered.t().dot(&centered) / x.nrows() as f64;
    (mean, cov)
}

fn channel_moments(x: &Array2<f64>, channels: usize) -> Vec<(f64, f64)> {
    let len = x.ncols() / channels;
    (0..channels)
        .map(|c| {
            let block = x.slice(ndarray::s![.., c * len..(c + 1) * len]);
            let n = block.len() as f64;
            let mean = block.sum() / n;
            let var = block.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (mean, var)
        })
        .collect()
}

fn histogram(source: &Array2<f64>, target: &Array2<f64>) -> Histogram {
    let (lo, hi) = source
        .iter()
        .chain(target.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let width = if hi > lo {
        (hi - lo) / HISTOGRAM_BINS as f64
    } else {
        1.0
    };
    let edges = (0..=HISTOGRAM_BINS).map(|i| lo + width * i as f64).collect();
    let count = |x: &Array2<f64>| {
        let mut counts = vec![0usize; HISTOGRAM_BINS];
        for &v in x {
            let bin = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
            counts[bin] += 1;
        }
        counts
    };
    Histogram {
        edges,
        source_counts: count(source),
        target_counts: count(target),
    }
}

/// Two-moment comparison of flattened `(batch, channels·T)` feature batches.
pub fn feature_alignment_stats(source: &Array2<f64>, target: &Array2<f64>, channels: usize) -> Result<AlignmentStats> {
    if source.nrows() == 0 || target.nrows() == 0 {
        return Err(Error::Size("alignment needs nonempty feature batches".into()));
    }
    if source.ncols() != target.ncols() || channels == 0 || !source.ncols().is_multiple_of(channels) {
        return Err(Error::Dimension(format!(
            "feature widths {} and {} with {channels} channels",
            source.ncols(),
            target.ncols()
        )));
    }
    let (mu_s, cov_s) = moments(source);
    let (mu_t, cov_t) = moments(target);
    let mean_term = (&mu_s - &mu_t).mapv(|v| v * v).sum();
    let covariance_term = (&cov_s - &cov_t).mapv(|v| v * v).sum();
    let (mean_gaps, variance_gaps) = channel_moments(source, channels)
        .into_iter()
        .zip(channel_moments(target, channels))
        .map(|((ms, vs), (mt, vt))| (mt - ms, vt - vs))
        .unzip();
    Ok(AlignmentStats {
        mean_gaps,
        variance_gaps,
        mean_term,
        covariance_term,
        distance: mean_term + covariance_term,
        histogram: histogram(source, target),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_moves_only_the_mean() {
        let a = Array2::from_shape_fn((5, 6), |(i, j)| (i * 7 + j * 3) as f64 % 5.0);
        let b = &a + 0.5;
        let s = feature_alignment_stats(&a, &b, 2).unwrap();
        assert!((s.mean_term - 6.0 * 0.25).abs() < 1e-12);
        assert!(s.covariance_term < 1e-24);
        assert!(s.mean_gaps.iter().all(|g| (g - 0.5).abs() < 1e-12));
        let total: usize = s.histogram.source_counts.iter().sum();
        assert_eq!(total, 30);
    }
}
