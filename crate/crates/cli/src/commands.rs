use std::path::{Path, PathBuf};

use flooddan::evaluation::{fewshot_run, supervision_equivalence, Equivalence, FewShotResult, MetricsReport};
use flooddan::hydrodata::{generate_synthetic, load_series};
use flooddan::pipeline::{prepare, provenance, run_adapt, run_evaluate, run_pretrain, Prepared, RunConfig};
use flooddan::training::{load_checkpoint, save_checkpoint};
use flooddan::{Error, Result};
use log::info;
use serde::{Deserialize, Serialize};

use crate::manifest::{write_json, ManifestBuilder};
use crate::Common;

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
    Ok(cfg)
}

/// An upstream artifact: the explicit path or `<out>/<default>`, which must exist.
fn upstream(explicit: Option<PathBuf>, out: &Path, default: &str) -> Result<PathBuf> {
    let path = explicit.unwrap_or_else(|| out.join(default));
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::Dependency { path })
    }
}

fn load_prepared(path: &Path, cfg: &RunConfig) -> Result<Prepared> {
    let series = load_series(path, &cfg.data.schema())?;
    prepare(&series, cfg)
}

pub fn synth(common: &Common) -> Result<()> {
    let mut cfg = resolve(common)?;
    if let Some(seed) = common.seed {
        cfg.synthetic.source.seed = seed;
        cfg.synthetic.target.seed = seed.wrapping_add(1);
    }
    let min_len = cfg.window.min_labeled_len();
    cfg.synthetic.source.validate(min_len)?;
    cfg.synthetic.target.validate(min_len)?;
    let mut manifest = ManifestBuilder::new("synth", &cfg, cfg.synthetic.source.seed);
    for (role, syn) in [("source", &cfg.synthetic.source), ("target", &cfg.synthetic.target)] {
        let series = generate_synthetic(syn)?;
        let path = common.out.join(format!("{role}.csv"));
        series.write_csv(&path)?;
        info!(
            "wrote {} rows x {} stations to {}",
            series.len(),
            series.station_count(),
            path.display()
        );
        manifest.output(&path);
    }
    manifest.finish(&common.out)?;
    Ok(())
}

pub fn pretrain(common: &Common, source: Option<PathBuf>) -> Result<()> {
    let cfg = resolve(common)?;
    let out = &common.out;
    let source = upstream(source, out, "source.csv")?;
    let mut manifest = ManifestBuilder::new("pretrain", &cfg, cfg.train.seed);
    manifest.input("source", &source);
    let data = load_prepared(&source, &cfg)?;
    let result = run_pretrain(&data, &cfg)?;
    info!(
        "source test DC {:.4} (persistence {:.4})",
        result.test.report.dc, result.baseline.report.dc
    );

    let ckpt = out.join("pretrain.ckpt");
    save_checkpoint(&result.checkpoint, &ckpt)?;
    let trace = out.join("pretrain_trace.jsonl");
    result.trace.write_jsonl(&trace)?;
    let report = out.join("pretrain_report.json");
    write_json(&report, &result.test.report)?;
    let baseline = out.join("pretrain_lower_bound.json");
    write_json(&baseline, &result.baseline.report)?;
    let predictions = out.join("pretrain_predictions.csv");
    result.test.write_trace(&predictions)?;
    for p in [&ckpt, &trace, &report, &baseline, &predictions] {
        manifest.output(p);
    }
    manifest.finish(out)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub before: flooddan::evaluation::AlignmentStats,
    pub after: flooddan::evaluation::AlignmentStats,
}

pub fn adapt(
    common: &Common,
    source: Option<PathBuf>,
    target: Option<PathBuf>,
    pretrained: Option<PathBuf>,
) -> Result<()> {
    let cfg = resolve(common)?;
    let out = &common.out;
    let pretrained = upstream(pretrained, out, "pretrain.ckpt")?;
    let source = upstream(source, out, "source.csv")?;
    let target = upstream(target, out, "target.csv")?;
    let mut manifest = ManifestBuilder::new("adapt", &cfg, cfg.adapt.seed);
    manifest.input("pretrained", &pretrained);
    manifest.input("source", &source);
    manifest.input("target", &target);

    let ckpt = load_checkpoint(&pretrained)?;
    let source_data = load_prepared(&source, &cfg)?;
    let target_data = load_prepared(&target, &cfg)?;
    let result = run_adapt(&source_data, &target_data, &ckpt, &cfg)?;
    info!(
        "alignment distance {:.4} -> {:.4}; spliced target DC {:.4}",
        result.before.distance, result.after.distance, result.test.report.dc
    );

    let adapted = out.join("adapt.ckpt");
    save_checkpoint(&result.checkpoint, &adapted)?;
    let trace = out.join("adapt_trace.jsonl");
    result.trace.write_jsonl(&trace)?;
    let alignment = out.join("alignment.json");
    write_json(
        &alignment,
        &AlignmentRecord {
            before: result.before,
            after: result.after,
        },
    )?;
    let report = out.join("adapt_report.json");
    write_json(&report, &result.test.report)?;
    for p in [&adapted, &trace, &alignment, &report] {
        manifest.output(p);
    }
    manifest.finish(out)?;
    Ok(())
}

pub fn evaluate(
    common: &Common,
    target: Option<PathBuf>,
    pretrained: Option<PathBuf>,
    adapted: Option<PathBuf>,
    supervised: bool,
) -> Result<()> {
    let cfg = resolve(common)?;
    let out = &common.out;
    let pretrained = upstream(pretrained, out, "pretrain.ckpt")?;
    let adapted = upstream(adapted, out, "adapt.ckpt")?;
    let target = upstream(target, out, "target.csv")?;
    let mut manifest = ManifestBuilder::new("evaluate", &cfg, cfg.adapt.seed);
    manifest.input("pretrained", &pretrained);
    manifest.input("adapted", &adapted);
    manifest.input("target", &target);

    let target_data = load_prepared(&target, &cfg)?;
    let (spliced, baseline) = run_evaluate(
        &load_checkpoint(&pretrained)?,
        &load_checkpoint(&adapted)?,
        &target_data,
        &cfg,
    )?;
    info!(
        "spliced DC {:.4}, persistence DC {:.4}",
        spliced.report.dc, baseline.report.dc
    );
    let report = out.join("evaluate_report.json");
    write_json(&report, &spliced.report)?;
    let lower = out.join("lower_bound_report.json");
    write_json(&lower, &baseline.report)?;
    let predictions = out.join("evaluate_predictions.csv");
    spliced.write_trace(&predictions)?;
    for p in [&report, &lower, &predictions] {
        manifest.output(p);
    }
    if supervised {
        let full = run_pretrain(&target_data, &cfg)?;
        info!("fully supervised target DC {:.4}", full.test.report.dc);
        let path = out.join("supervised_report.json");
        write_json(&path, &full.test.report)?;
        manifest.output(&path);
    }
    manifest.finish(out)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct EquivalenceRecord {
    pub unsupervised_dc: f64,
    pub hours: Vec<usize>,
    pub mean_dc: Vec<f64>,
    pub equivalence: Equivalence,
}

pub fn fewshot(
    common: &Common,
    target: Option<PathBuf>,
    hours: Option<Vec<usize>>,
    repeats: Option<usize>,
    unsupervised_report: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = resolve(common)?;
    if let Some(h) = hours {
        cfg.fewshot.hours = h;
    }
    if let Some(r) = repeats {
        cfg.fewshot.repeats = r;
    }
    cfg.validate()?;
    let out = &common.out;
    let target = upstream(target, out, "target.csv")?;
    let report_path = upstream(unsupervised_report, out, "adapt_report.json")?;
    let text = std::fs::read_to_string(&report_path).map_err(|e| Error::io(&report_path, e))?;
    let unsupervised: MetricsReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
        location: report_path.display().to_string(),
        reason: e.to_string(),
    })?;

    let mut manifest = ManifestBuilder::new("fewshot", &cfg, cfg.train.seed);
    manifest.input("target", &target);
    manifest.input("unsupervised_report", &report_path);
    let data = load_prepared(&target, &cfg)?;
    let prov = provenance(&cfg, "fewshot", cfg.arch.variant, 0, &data.name, cfg.train.seed);
    let mut results: Vec<FewShotResult> = Vec::new();
    for &h in &cfg.fewshot.hours {
        let result = fewshot_run(
            &data.train,
            &data.test,
            h,
            cfg.fewshot.repeats,
            cfg.fewshot.contiguous,
            &cfg.train,
            &cfg.arch,
            &data.normalizer,
            &prov,
        )?;
        info!("{h} h: mean DC {:.4} over {} repeats", result.mean_dc, result.dc.len());
        let path = out.join(format!("fewshot_{h}h.json"));
        write_json(&path, &result)?;
        manifest.output(&path);
        results.push(result);
    }
    let equivalence = supervision_equivalence(unsupervised.dc, &results);
    info!("unsupervised DC {:.4}: {equivalence:?}", unsupervised.dc);
    let path = out.join("equivalence.json");
    write_json(
        &path,
        &EquivalenceRecord {
            unsupervised_dc: unsupervised.dc,
            hours: results.iter().map(|r| r.hours).collect(),
            mean_dc: results.iter().map(|r| r.mean_dc).collect(),
            equivalence,
        },
    )?;
    manifest.output(&path);
    manifest.finish(out)?;
    Ok(())
}
