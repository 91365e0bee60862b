use serde::{Deserialize, Serialize};

use super::HydroSeries;
use crate::error::{Error, Result};

/// Per-channel min-max scaling fitted on a training split. Channels are the
/// rainfall stations in order followed by runoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub rain_min: Vec<f64>,
    pub rain_max: Vec<f64>,
    pub runoff_min: f64,
    pub runoff_max: f64,
}

fn scale(v: f64, min: f64, max: f64) -> f64 {
    let range = max - min;
    // A dead gauge carries no signal.
    if range > 0.0 {
        (v - min) / range
    } else {
        0.0
    }
}

fn unscale(v: f64, min: f64, max: f64) -> f64 {
    let range = max - min;
    if range > 0.0 {
        v * range + min
    } else {
        min
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

impl Normalizer {
    pub fn fit(series: &HydroSeries) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::Size("cannot fit a normalizer on an empty series".into()));
        }
        let (rain_min, rain_max) = series
            .rainfall
            .columns()
            .into_iter()
            .map(|c| min_max(c.iter().copied()))
            .unzip();
        let (runoff_min, runoff_max) = min_max(series.runoff.iter().copied());
        Ok(Self {
            rain_min,
            rain_max,
            runoff_min,
            runoff_max,
        })
    }

    pub fn station_count(&self) -> usize {
        self.rain_min.len()
    }

    /// Maps every channel into normalized space. Values beyond the fitted
    /// range extrapolate linearly; nothing is clipped.
    pub fn apply(&self, series: &HydroSeries) -> Result<HydroSeries> {
        if series.station_count() != self.station_count() {
            return Err(Error::Dimension(format!(
                "normalizer fitted on {} stations, series has {}",
                self.station_count(),
                series.station_count()
            )));
        }
        let mut out = series.clone();
        for (j, mut col) in out.rainfall.columns_mut().into_iter().enumerate() {
            let (lo, hi) = (self.rain_min[j], self.rain_max[j]);
            col.mapv_inplace(|v| scale(v, lo, hi));
        }
        for v in &mut out.runoff {
            *v = self.normalize_runoff(*v);
        }
        Ok(out)
    }

    pub fn normalize_runoff(&self, v: f64) -> f64 {
        scale(v, self.runoff_min, self.runoff_max)
    }

    pub fn invert_runoff(&self, v: f64) -> f64 {
        unscale(v, self.runoff_min, self.runoff_max)
    }

    pub fn invert_rainfall(&self, station: usize, v: f64) -> f64 {
        unscale(v, self.rain_min[station], self.rain_max[station])
    }

    pub fn invert_runoff_all(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.invert_runoff(v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, NaiveDate};
    use ndarray::Array2;
    use proptest::prelude::*;

    fn series(rain: Vec<f64>, runoff: Vec<f64>) -> HydroSeries {
        let len = runoff.len();
        let start = NaiveDate::from_ymd_opt(2000, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        HydroSeries::new(
            "t",
            vec!["r".into()],
            Array2::from_shape_vec((len, 1), rain).unwrap(),
            runoff,
            (0..len as i64).map(|h| start + Duration::hours(h)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn endpoints_and_midpoint() {
        let s = series(vec![2.0, 4.0, 6.0], vec![5.0, 5.0, 5.0]);
        let n = Normalizer::fit(&s).unwrap();
        let out = n.apply(&s).unwrap();
        assert_eq!(out.rainfall.column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        // constant channel
        assert_eq!(out.runoff, vec![0.0, 0.0, 0.0]);
        assert_eq!(n.invert_runoff(0.7), 5.0);
    }

    #[test]
    fn no_clipping_above_training_max() {
        let train = series(vec![0.0, 10.0], vec![0.0, 10.0]);
        let n = Normalizer::fit(&train).unwrap();
        assert!((n.normalize_runoff(12.0) - 1.2).abs() < 1e-15);
        let test = series(vec![12.0], vec![12.0]);
        assert!((n.apply(&test).unwrap().rainfall[[0, 0]] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn fitted_max_not_below_min() {
        let n = Normalizer::fit(&series(vec![3.0, 1.0, 2.0], vec![9.0, 4.0, 4.0])).unwrap();
        assert!(n.rain_max[0] >= n.rain_min[0]);
        assert!(n.runoff_max >= n.runoff_min);
    }

    proptest! {
        #[test]
        fn invert_undoes_normalize(
            lo in 0.0f64..1e3,
            span in 1e-3f64..1e4,
            frac in 0.0f64..1.0,
        ) {
            let hi = lo + span;
            let n = Normalizer { rain_min: vec![lo], rain_max: vec![hi], runoff_min: lo, runoff_max: hi };
            let v = lo + frac * span;
            let back = n.invert_runoff(n.normalize_runoff(v));
            prop_assert!((back - v).abs() <= 1e-9 * v.abs().max(1e-12) + 1e-12 * span);
        }
    }
}
