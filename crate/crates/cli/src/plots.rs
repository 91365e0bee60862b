use std::path::{Path, PathBuf};

use flooddan::evaluation::{read_prediction_trace, supervision_equivalence, FewShotResult, Histogram, MetricsReport};
use flooddan::training::TrainTrace;
use flooddan::{Error, Result};
use plotters::prelude::*;
use serde::de::DeserializeOwned;

use crate::commands::AlignmentRecord;

const SIZE: (u32, u32) = (900, 500);

fn draw_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        location: format!("{} line {}", path.display(), e.line()),
        reason: e.to_string(),
    })
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let pad = ((hi - lo) * 0.05).max(1e-6);
    (lo - pad, hi + pad)
}

/// Observed and predicted runoff over the test split.
pub fn prediction_plot(truths: &[f64], predictions: &[f64], path: &Path) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_error(path, e))?;
    let (lo, hi) = bounds(truths.iter().chain(predictions).copied());
    let mut chart = ChartBuilder::on(&root)
        .caption("Target test split: observed vs predicted runoff", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(55)
        .build_cartesian_2d(0..truths.len(), lo..hi)
        .map_err(|e| draw_error(path, e))?;
    chart
        .configure_mesh()
        .x_desc("hour")
        .y_desc("runoff (m³/s)")
        .draw()
        .map_err(|e| draw_error(path, e))?;
    chart
        .draw_series(LineSeries::new(truths.iter().copied().enumerate(), &BLUE))
        .map_err(|e| draw_error(path, e))?
        .label("observed")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));
    chart
        .draw_series(LineSeries::new(predictions.iter().copied().enumerate(), &RED))
        .map_err(|e| draw_error(path, e))?
        .label("predicted")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .draw()
        .map_err(|e| draw_error(path, e))?;
    root.present().map_err(|e| draw_error(path, e))
}

/// Target (left) and source (right) feature histograms on shared bins.
pub fn histogram_plot(hist: &Histogram, title: &str, path: &Path) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_error(path, e))?;
    let (left, right) = root.split_horizontally(SIZE.0 / 2);
    let lo = hist.edges[0];
    let hi = *hist.edges.last().expect("edges");
    let total = |c: &[usize]| c.iter().sum::<usize>().max(1) as f64;
    let top = hist
        .source_counts
        .iter()
        .map(|&c| c as f64 / total(&hist.source_counts))
        .chain(
            hist.target_counts
                .iter()
                .map(|&c| c as f64 / total(&hist.target_counts)),
        )
        .fold(0.0, f64::max)
        * 1.05;
    for (area, counts, name, color) in [
        (&left, &hist.target_counts, "target features", RED),
        (&right, &hist.source_counts, "source features", BLUE),
    ] {
        let n = total(counts);
        let mut chart = ChartBuilder::on(area)
            .caption(format!("{title}: {name}"), ("sans-serif", 16))
            .margin(10)
            .x_label_area_size(30)
            .y_label_area_size(45)
            .build_cartesian_2d(lo..hi, 0.0..top.max(1e-9))
            .map_err(|e| draw_error(path, e))?;
        chart
            .configure_mesh()
            .y_desc("share")
            .draw()
            .map_err(|e| draw_error(path, e))?;
        chart
            .draw_series(counts.iter().enumerate().map(|(i, &c)| {
                Rectangle::new(
                    [(hist.edges[i], 0.0), (hist.edges[i + 1], c as f64 / n)],
                    color.mix(0.6).filled(),
                )
            }))
            .map_err(|e| draw_error(path, e))?;
    }
    root.present().map_err(|e| draw_error(path, e))
}

/// Probe ratio `mean(Y/Ŷ)` per adaptation epoch, one marker per epoch.
pub fn ratio_plot(trace: &TrainTrace, path: &Path) -> Result<usize> {
    let points: Vec<(usize, f64)> = trace
        .records
        .iter()
        .filter_map(|r| r.probe_ratio.filter(|v| v.is_finite()).map(|v| (r.epoch, v)))
        .collect();
    if points.is_empty() {
        return Err(Error::Parse {
            location: path.display().to_string(),
            reason: "trace carries no probe ratios".into(),
        });
    }
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_error(path, e))?;
    let (lo, hi) = bounds(points.iter().map(|p| p.1).chain([1.0]));
    let last = points.last().expect("nonempty").0;
    let mut chart = ChartBuilder::on(&root)
        .caption("Probe ratio mean(Y/Ŷ) during adaptation", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(55)
        .build_cartesian_2d(0..last + 1, lo..hi)
        .map_err(|e| draw_error(path, e))?;
    chart
        .configure_mesh()
        .x_desc("epoch")
        .y_desc("mean(Y/Ŷ)")
        .draw()
        .map_err(|e| draw_error(path, e))?;
    chart
        .draw_series(LineSeries::new([(0, 1.0), (last + 1, 1.0)], BLACK.mix(0.4)))
        .map_err(|e| draw_error(path, e))?;
    chart
        .draw_series(LineSeries::new(points.iter().copied(), &BLUE))
        .map_err(|e| draw_error(path, e))?;
    chart
        .draw_series(points.iter().map(|&p| Circle::new(p, 3, BLUE.filled())))
        .map_err(|e| draw_error(path, e))?;
    root.present().map_err(|e| draw_error(path, e))?;
    Ok(points.len())
}

/// Mean few-shot DC against labeled hours, with the unsupervised DC as a
/// horizontal line.
pub fn fewshot_plot(results: &[FewShotResult], unsupervised_dc: Option<f64>, path: &Path) -> Result<()> {
    let mut points: Vec<(f64, f64)> = results.iter().map(|r| (r.hours as f64, r.mean_dc)).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_error(path, e))?;
    let (lo, hi) = bounds(points.iter().map(|p| p.1).chain(unsupervised_dc));
    let x_max = points.last().map_or(1.0, |p| p.0) * 1.05;
    let mut chart = ChartBuilder::on(&root)
        .caption("Few-shot supervision: mean DC vs labeled hours", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(55)
        .build_cartesian_2d(0.0..x_max, lo..hi)
        .map_err(|e| draw_error(path, e))?;
    chart
        .configure_mesh()
        .x_desc("labeled hours")
        .y_desc("DC")
        .draw()
        .map_err(|e| draw_error(path, e))?;
    chart
        .draw_series(LineSeries::new(points.iter().copied(), &BLUE))
        .map_err(|e| draw_error(path, e))?
        .label("few-shot mean DC")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));
    chart
        .draw_series(points.iter().map(|&p| Circle::new(p, 3, BLUE.filled())))
        .map_err(|e| draw_error(path, e))?;
    if let Some(dc) = unsupervised_dc {
        chart
            .draw_series(LineSeries::new([(0.0, dc), (x_max, dc)], &RED))
            .map_err(|e| draw_error(path, e))?
            .label("unsupervised")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .draw()
        .map_err(|e| draw_error(path, e))?;
    root.present().map_err(|e| draw_error(path, e))
}

pub fn plot_command(
    out: &Path,
    predictions: Option<PathBuf>,
    alignment: Option<PathBuf>,
    trace: Option<PathBuf>,
    fewshot: Vec<PathBuf>,
    report: Option<PathBuf>,
) -> Result<()> {
    // Parse every input before drawing so a bad file leaves no partial output.
    let predictions = predictions.map(|p| read_prediction_trace(&p)).transpose()?;
    let alignment: Option<AlignmentRecord> = alignment.map(|p| read_json(&p)).transpose()?;
    let trace = trace.map(|p| TrainTrace::read_jsonl(&p)).transpose()?;
    let fewshot: Vec<FewShotResult> = fewshot.iter().map(|p| read_json(p)).collect::<Result<_>>()?;
    let report: Option<MetricsReport> = report.map(|p| read_json(&p)).transpose()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    if let Some((truths, preds)) = predictions {
        prediction_plot(&truths, &preds, &out.join("predictions.svg"))?;
    }
    if let Some(a) = alignment {
        histogram_plot(
            &a.before.histogram,
            "before adaptation",
            &out.join("features_before.svg"),
        )?;
        histogram_plot(&a.after.histogram, "after adaptation", &out.join("features_after.svg"))?;
    }
    if let Some(t) = trace {
        ratio_plot(&t, &out.join("ratio.svg"))?;
    }
    if !fewshot.is_empty() {
        let dc = report.as_ref().map(|r| r.dc);
        if let Some(dc) = dc {
            log::info!("equivalence: {:?}", supervision_equivalence(dc, &fewshot));
        }
        fewshot_plot(&fewshot, dc, &out.join("fewshot.svg"))?;
    }
    Ok(())
}
