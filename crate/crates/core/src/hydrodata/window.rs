use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::HydroSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    /// Input window length `T` in hours.
    #[serde(default = "default_window_length")]
    pub window_length: usize,
    /// Lead time `t` in hours between the window end and the predicted instant.
    #[serde(default = "default_forecast_period")]
    pub forecast_period: usize,
}

fn default_window_length() -> usize {
    24
}

fn default_forecast_period() -> usize {
    6
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_length: default_window_length(),
            forecast_period: default_forecast_period(),
        }
    }
}

impl WindowConfig {
    pub fn validate(&self, receptive_field: usize) -> Result<()> {
        if self.forecast_period < 1 {
            return Err(Error::Config("forecast period must be at least 1 hour".into()));
        }
        if self.window_length < receptive_field {
            return Err(Error::Config(format!(
                "window length {} is shorter than the encoder receptive field {receptive_field}",
                self.window_length
            )));
        }
        Ok(())
    }

    /// Rows a labeled series needs to yield one sample.
    pub fn min_labeled_len(&self) -> usize {
        self.window_length + self.forecast_period
    }

    /// Minimum length of each split segment.
    pub fn min_split_segment(&self) -> usize {
        self.min_labeled_len() + 1
    }
}

/// One input window. `y` is present only for labeled windows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSample {
    /// (d, T) normalized rainfall.
    pub x: Array2<f64>,
    pub y_history: Vec<f64>,
    pub y: Option<f64>,
    pub source_index: usize,
}

impl WindowedSample {
    pub fn last_runoff(&self) -> f64 {
        *self.y_history.last().expect("window is never empty")
    }

    pub fn label(&self) -> Result<f64> {
        self.y
            .ok_or_else(|| Error::Argument(format!("window at {} carries no label", self.source_index)))
    }
}

pub fn window_count(len: usize, cfg: &WindowConfig, labeled: bool) -> usize {
    let need = if labeled {
        cfg.min_labeled_len()
    } else {
        cfg.window_length
    };
    (len + 1).saturating_sub(need)
}

/// Stride-1 windows over an already-normalized series.
pub fn make_windows(series: &HydroSeries, cfg: &WindowConfig, labeled: bool) -> Result<Vec<WindowedSample>> {
    let len = series.len();
    let big_t = cfg.window_length;
    let need = if labeled { cfg.min_labeled_len() } else { big_t };
    if big_t == 0 || len < need {
        return Err(Error::Size(format!(
            "series of length {len} is too short: windows need at least {need} rows"
        )));
    }
    let count = window_count(len, cfg, labeled);
    Ok((0..count)
        .map(|k| WindowedSample {
            x: series.rainfall.slice(s![k..k + big_t, ..]).t().to_owned(),
            y_history: series.runoff[k..k + big_t].to_vec(),
            y: labeled.then(|| series.runoff[k + big_t + cfg.forecast_period - 1]),
            source_index: k,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, NaiveDate};

    fn series(len: usize) -> HydroSeries {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        HydroSeries::new(
            "w",
            vec!["a".into(), "b".into()],
            Array2::from_shape_fn((len, 2), |(i, j)| (10 * i + j) as f64),
            (0..len).map(|i| i as f64).collect(),
            (0..len as i64).map(|h| start + Duration::hours(h)).collect(),
        )
        .unwrap()
    }

    fn brute_force_count(len: usize, big_t: usize, t: usize) -> usize {
        (0..len).filter(|&k| k + big_t + t - 1 < len).count()
    }

    #[test]
    fn labeled_counts() {
        let cfg = WindowConfig {
            window_length: 24,
            forecast_period: 6,
        };
        assert_eq!(make_windows(&series(40), &cfg, true).unwrap().len(), 11);
        let one = make_windows(&series(30), &cfg, true).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].y, Some(29.0));
    }

    #[test]
    fn unlabeled_exact_window() {
        let cfg = WindowConfig::default();
        let w = make_windows(&series(24), &cfg, false).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].y, None);
        assert!(matches!(make_windows(&series(24), &cfg, true), Err(Error::Size(_))));
    }

    #[test]
    fn window_contents() {
        let cfg = WindowConfig {
            window_length: 4,
            forecast_period: 2,
        };
        let w = make_windows(&series(10), &cfg, true).unwrap();
        let k = 3;
        assert_eq!(w[k].x.dim(), (2, 4));
        assert_eq!(w[k].x[[1, 0]], 31.0);
        assert_eq!(w[k].x[[0, 3]], 60.0);
        assert_eq!(w[k].y_history, vec![3.0, 4.0, 5.0, 6.0]);
        assert_eq!(w[k].y, Some(8.0));
        assert_eq!(w[k].source_index, 3);
    }

    #[test]
    fn count_matches_enumeration() {
        for big_t in [4, 8, 24] {
            for t in [1, 6] {
                let cfg = WindowConfig {
                    window_length: big_t,
                    forecast_period: t,
                };
                for len in big_t + t..=big_t + t + 50 {
                    let expected = brute_force_count(len, big_t, t);
                    assert_eq!(make_windows(&series(len), &cfg, true).unwrap().len(), expected);
                    assert_eq!(window_count(len, &cfg, true), expected);
                }
            }
        }
    }
}
