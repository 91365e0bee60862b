//! Randomized invariants across modules.

use chrono::{Duration, NaiveDate};
use flooddan::evaluation::{supervision_equivalence, Equivalence, FewShotResult};
use flooddan::hydrodata::{make_windows, window_count, HydroSeries, WindowConfig};
use flooddan::models::{init_params, ArchConfig};
use flooddan::training::{cosine_lr, decode_checkpoint, encode_checkpoint, Checkpoint, CheckpointMeta, Stage};
use ndarray::Array2;
use proptest::prelude::*;

fn ramp_series(len: usize, stations: usize) -> HydroSeries {
    let start = NaiveDate::from_ymd_opt(2021, 6, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    HydroSeries::new(
        "ramp",
        (0..stations).map(|i| format!("s{i}")).collect(),
        Array2::from_shape_fn((len, stations), |(i, j)| (i + j) as f64),
        (0..len).map(|i| i as f64).collect(),
        (0..len).map(|i| start + Duration::hours(i as i64)).collect(),
    )
    .unwrap()
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn windows_enumerate_every_valid_start(len in 30usize..90, t in 1usize..8, big_t in 8usize..24, labeled: bool) {
        let cfg = WindowConfig { window_length: big_t, forecast_period: t };
        let s = ramp_series(len, 2);
        let need = if labeled { big_t + t } else { big_t };
        prop_assume!(len >= need);
        let w = make_windows(&s, &cfg, labeled).unwrap();
        let brute = (0..len).filter(|&k| k + need <= len).count();
        prop_assert_eq!(w.len(), brute);
        prop_assert_eq!(window_count(len, &cfg, labeled), brute);
        for (k, sample) in w.iter().enumerate() {
            prop_assert_eq!(sample.last_runoff(), (k + big_t - 1) as f64);
            if labeled {
                prop_assert_eq!(sample.y, Some((k + big_t + t - 1) as f64));
            } else {
                prop_assert_eq!(sample.y, None);
            }
        }
    }

    #[test]
    fn checkpoints_decode_to_what_was_encoded(stations in 1usize..12, seed: u64) {
        let arch = ArchConfig { critic_hidden: 8, ..ArchConfig::default() };
        let window = WindowConfig::default();
        let ckpt = Checkpoint {
            meta: CheckpointMeta::new(&arch, stations, window, None, Stage::Adapt, seed),
            bundle: init_params(&arch, stations, window.window_length, seed),
        };
        let bytes = encode_checkpoint(&ckpt);
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(&back.bundle, &ckpt.bundle);
        prop_assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn cosine_schedule_decays_from_base_to_zero(base in 1e-6f64..1.0, total in 2usize..5000) {
        prop_assert_eq!(cosine_lr(base, 0, total), base);
        prop_assert!(cosine_lr(base, total - 1, total).abs() <= 1e-15 * base.max(1.0));
        let mut prev = base;
        for step in (0..total).step_by((total / 50).max(1)) {
            let lr = cosine_lr(base, step, total);
            prop_assert!(lr <= prev + 1e-18 && lr >= 0.0);
            prev = lr;
        }
    }

    #[test]
    fn equivalence_interval_brackets_the_dc(mut dcs in prop::collection::vec(0.0f64..1.0, 2..6), pick in 0.0f64..1.0) {
        dcs.sort_by(f64::total_cmp);
        dcs.dedup();
        prop_assume!(dcs.len() >= 2);
        let hours: Vec<usize> = (0..dcs.len()).map(|i| 50 << i).collect();
        let sweep: Vec<FewShotResult> = hours
            .iter()
            .zip(&dcs)
            .map(|(&h, &d)| FewShotResult::from_repeats(h, vec![0.0], vec![d]))
            .collect();
        let target = dcs[0] + pick * (dcs[dcs.len() - 1] - dcs[0]);
        match supervision_equivalence(target, &sweep) {
            Equivalence::Interval { low, high, hours: h } => {
                prop_assert!(low <= high && (low as f64) <= h && h <= high as f64);
                let at = |x: usize| dcs[hours.iter().position(|&v| v == x).unwrap()];
                prop_assert!(at(low) <= target && target <= at(high));
            }
            other => prop_assert!(false, "{:?}", other),
        }
    }
}
