use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nakagami::data::pgm::read_pgm;
use nakagami::data::phantom::generate;
use nakagami::data::raster::{encode_raster, read_raster, Raster};
use nakagami::data::{normalize_to_m, split_dataset, synthesize_all, GroundTruthMap};
use nakagami::metrics::{histogram_csv, metrics_csv, roi_csv, roi_stats, sort_reports, MetricReport, RoiStats};
use nakagami::nn::{encode_network, load_network, TrainReport};
use nakagami::pipeline::{estimate as estimate_map, run_benchmark, run_roi, train_score_network};
use nakagami::{EnvelopeImage, ParamMap};

use crate::config::{Preset, RunConfig, Source};
use crate::error::CliError;
use crate::manifest::{RunManifest, MANIFEST_NAME};

const SPLIT_FILE: &str = "split.csv";
const LOSS_FILE: &str = "loss.csv";

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn read_raster_at(path: &Path) -> Result<Raster, CliError> {
    read_raster(path).map_err(|e| match e {
        nakagami::Error::Io(io) => CliError::io(path, io),
        other => CliError::Io(format!("{}: {other}", path.display())),
    })
}

fn sorted_files(dir: &Path, keep: impl Fn(&str) -> bool) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() && path.file_name().and_then(|n| n.to_str()).is_some_and(&keep) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn measurement_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    sorted_files(dir, |n| n.starts_with("measurement_") && n.ends_with(".nkrf"))
}

/// `measurement_007.nkrf` and `estimate_007.nkrf` share the index `007`.
fn index_of(path: &Path) -> Option<&str> {
    let stem = path.file_stem()?.to_str()?;
    stem.split_once('_').map(|(_, idx)| idx)
}

fn loss_csv(report: &TrainReport) -> String {
    let mut out = String::from("step,delta,loss\n");
    for (i, (d, l)) in report.deltas.iter().zip(&report.history).enumerate() {
        out.push_str(&format!("{i},{d},{l}\n"));
    }
    out
}

fn ground_truths(cfg: &RunConfig) -> Result<Vec<GroundTruthMap>, CliError> {
    let ds = &cfg.dataset;
    match ds.source {
        Source::Procedural => Ok(generate(ds.family, ds.count, ds.height, ds.width, ds.seed)?
            .into_iter()
            .map(|img| normalize_to_m(ds.height, ds.width, &img))
            .collect::<nakagami::Result<Vec<_>>>()?),
        Source::Pgm => {
            let dir = ds.pgm_dir.as_ref().ok_or_else(|| CliError::Config("dataset.pgm_dir is required for source = pgm".into()))?;
            let files = sorted_files(dir, |n| n.to_ascii_lowercase().ends_with(".pgm"))?;
            if files.is_empty() {
                return Err(CliError::Io(format!("no .pgm files in {}", dir.display())));
            }
            files
                .iter()
                .map(|f| {
                    let img = read_pgm(f).map_err(|e| CliError::Io(format!("{}: {e}", f.display())))?;
                    Ok(normalize_to_m(img.height, img.width, &img.intensities())?)
                })
                .collect()
        }
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let out = &cfg.paths.output;
    let truths = ground_truths(cfg)?;
    let samples = synthesize_all(truths, cfg.simulate.omega, cfg.simulate.seed)?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::new("simulate", cfg);
    manifest.detail("omega", cfg.simulate.omega);
    manifest.detail("images", samples.len());
    let mut split = vec!["train"; samples.len()];
    if samples.len() >= 2 {
        let s = split_dataset((0..samples.len()).collect(), cfg.dataset.train_fraction, cfg.dataset.seed)?;
        for i in s.test {
            split[i] = "test";
        }
    }
    for (i, s) in samples.iter().enumerate() {
        let truth = encode_raster(&Raster::from_map(s.truth.map()))?;
        manifest.write(out, &format!("truth_{i:03}.nkrf"), &truth, None)?;
        let meas = encode_raster(&Raster::from_envelope(&s.measurement))?;
        manifest.write(out, &format!("measurement_{i:03}.nkrf"), &meas, None)?;
    }
    let mut csv = String::from("index,split\n");
    for (i, s) in split.iter().enumerate() {
        csv.push_str(&format!("{i},{s}\n"));
    }
    manifest.write(out, SPLIT_FILE, csv.as_bytes(), None)?;
    Ok(manifest)
}

/// Training measurements: the `train` rows of `split.csv` when present,
/// otherwise every measurement in the directory.
fn training_inputs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let split_path = dir.join(SPLIT_FILE);
    if !split_path.exists() {
        return measurement_files(dir);
    }
    let text = std::fs::read_to_string(&split_path).map_err(|e| CliError::io(&split_path, e))?;
    let mut files = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let (idx, part) = line
            .split_once(',')
            .ok_or_else(|| CliError::Io(format!("{}: malformed row {line:?}", split_path.display())))?;
        let idx: usize =
            idx.trim().parse().map_err(|_| CliError::Io(format!("{}: bad index {idx:?}", split_path.display())))?;
        if part.trim() == "train" {
            files.push(dir.join(format!("measurement_{idx:03}.nkrf")));
        }
    }
    Ok(files)
}

pub fn train(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let input = &cfg.paths.input;
    let files = training_inputs(input)?;
    if files.is_empty() {
        return Err(CliError::Io(format!("no training measurements in {}", input.display())));
    }
    let images = files
        .iter()
        .map(|f| Ok(read_raster_at(f)?.into_envelope()?))
        .collect::<Result<Vec<EnvelopeImage>, CliError>>()?;
    let out = &cfg.paths.output;
    ensure_dir(out)?;
    let mut manifest = RunManifest::new("train", cfg);
    let settings = &cfg.train.score;
    manifest.detail("images", images.len());
    manifest.detail("sigma_min", settings.sigma_min);
    manifest.detail("sigma_max", settings.sigma_max);
    manifest.detail("learning_rate", settings.train.learning_rate);
    match train_score_network(&images, settings, |_, _| {}) {
        Ok((net, report)) => {
            manifest.detail("steps", report.history.len());
            manifest.detail("final_loss", report.history.last().copied().unwrap_or(f64::NAN));
            manifest.write(out, &cfg.train.checkpoint, &encode_network(&net), None)?;
            manifest.write(out, LOSS_FILE, loss_csv(&report).as_bytes(), None)?;
            Ok(manifest)
        }
        Err((err, last_good)) => {
            if let Some(net) = last_good {
                manifest.write(out, &cfg.train.checkpoint, &encode_network(&net), None)?;
                manifest.detail("error", err.to_string());
                manifest.save(out)?;
            }
            Err(err.into())
        }
    }
}

pub fn estimate(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let est = &cfg.estimate;
    let method = est.method()?;
    let network = if method.needs_network() {
        let path = est
            .checkpoint
            .as_ref()
            .ok_or_else(|| CliError::Config("method unicorn needs a score checkpoint (--checkpoint)".into()))?;
        Some(load_network(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?)
    } else {
        None
    };
    let input = &cfg.paths.input;
    let files = if input.is_file() { vec![input.clone()] } else { measurement_files(input)? };
    if files.is_empty() {
        return Err(CliError::Io(format!("no measurements in {}", input.display())));
    }
    let out = &cfg.paths.output;
    ensure_dir(out)?;
    let mut manifest = RunManifest::new("estimate", cfg);
    manifest.detail("method", method.name());
    manifest.detail("window", method.window_label());
    for f in &files {
        let image = read_raster_at(f)?.into_envelope()?;
        let map = estimate_map(&image, &method, network.as_ref())?;
        let name = match index_of(f) {
            Some(idx) => format!("estimate_{idx}.nkrf"),
            None => format!("estimate_{}.nkrf", f.file_stem().and_then(|s| s.to_str()).unwrap_or("map")),
        };
        manifest.write(out, &name, &encode_raster(&Raster::from_map(&map))?, Some(f))?;
    }
    Ok(manifest)
}

struct EstimateEntry {
    method: String,
    window: String,
    path: PathBuf,
    source: Option<PathBuf>,
}

fn estimate_entries(path: &Path) -> Result<Vec<EstimateEntry>, CliError> {
    if path.is_file() {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("estimate").to_string();
        return Ok(vec![EstimateEntry { method: stem, window: String::new(), path: path.to_path_buf(), source: None }]);
    }
    if !path.join(MANIFEST_NAME).exists() {
        return Err(CliError::Io(format!("{} is neither an estimate file nor an estimate run directory", path.display())));
    }
    let manifest = RunManifest::load(path)?;
    let text = |k: &str| manifest.details.get(k).and_then(|v| v.as_str()).unwrap_or_default().to_string();
    let (method, window) = (text("method"), text("window"));
    Ok(manifest
        .artifacts
        .iter()
        .filter(|a| a.path.ends_with(".nkrf"))
        .map(|a| EstimateEntry {
            method: method.clone(),
            window: window.clone(),
            path: path.join(&a.path),
            source: a.source.as_ref().map(PathBuf::from),
        })
        .collect())
}

fn truth_for(entry: &EstimateEntry, truth: Option<&Path>) -> Option<PathBuf> {
    if let Some(t) = truth.filter(|t| t.is_file()) {
        return Some(t.to_path_buf());
    }
    let idx = entry.source.as_deref().and_then(index_of).or_else(|| index_of(&entry.path))?;
    let dir = match truth {
        Some(d) => d.to_path_buf(),
        None => entry.source.as_deref()?.parent()?.to_path_buf(),
    };
    Some(dir.join(format!("truth_{idx}.nkrf")))
}

fn roi_mask(path: &Path) -> Result<Vec<bool>, CliError> {
    let raster = read_raster_at(path)?;
    Ok(match raster.mask {
        Some(mask) => mask,
        None => raster.values.iter().map(|&v| v != 0.0).collect(),
    })
}

pub fn evaluate(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let ev = &cfg.evaluate;
    if ev.estimates.is_empty() {
        return Err(CliError::Config("evaluate needs at least one estimate (--estimate)".into()));
    }
    let roi = ev.roi.as_deref().map(roi_mask).transpose()?;
    let mut per_method: Vec<((String, String), Vec<MetricReport>)> = Vec::new();
    let mut roi_rows: Vec<(String, RoiStats)> = Vec::new();
    for path in &ev.estimates {
        for entry in estimate_entries(path)? {
            let map: ParamMap = read_raster_at(&entry.path)?.into_map()?;
            let label = if entry.window.is_empty() { entry.method.clone() } else { format!("{}/{}", entry.method, entry.window) };
            if let Some(mask) = &roi {
                let row_label = match index_of(&entry.path) {
                    Some(idx) if path.is_dir() => format!("{label}#{idx}"),
                    _ => label.clone(),
                };
                roi_rows.push((row_label, roi_stats(&map, mask, ev.bins, ev.hist_range)?));
            }
            let truth_path = match truth_for(&entry, ev.truth.as_deref()) {
                Some(p) if p.exists() => p,
                Some(_) | None if roi.is_some() && ev.truth.is_none() => continue,
                Some(p) => return Err(CliError::Io(format!("missing ground truth {}", p.display()))),
                None => return Err(CliError::Config(format!("cannot locate ground truth for {}", entry.path.display()))),
            };
            let truth = read_raster_at(&truth_path)?.into_map()?;
            let report = MetricReport::evaluate(&entry.method, &entry.window, &map, &truth, ev.data_range)?;
            let key = (entry.method.clone(), entry.window.clone());
            match per_method.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(report),
                None => per_method.push((key, vec![report])),
            }
        }
    }
    let out = &cfg.paths.output;
    ensure_dir(out)?;
    let mut manifest = RunManifest::new("evaluate", cfg);
    manifest.detail("data_range", ev.data_range);
    if !per_method.is_empty() {
        let mut rows =
            per_method.iter().map(|(_, v)| MetricReport::average(v)).collect::<nakagami::Result<Vec<_>>>()?;
        sort_reports(&mut rows);
        manifest.detail("images", per_method.iter().map(|(_, v)| v.len()).collect::<BTreeSet<_>>().into_iter().collect::<Vec<_>>());
        manifest.write(out, "metrics.csv", metrics_csv(&rows)?.as_bytes(), None)?;
    }
    if !roi_rows.is_empty() {
        manifest.write(out, "roi_stats.csv", roi_csv(&roi_rows)?.as_bytes(), None)?;
        manifest.write(out, "histogram.csv", histogram_csv(&roi_rows)?.as_bytes(), None)?;
    }
    if manifest.artifacts.is_empty() {
        return Err(CliError::Config("nothing to evaluate: no ground truth and no ROI".into()));
    }
    Ok(manifest)
}

pub fn benchmark(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let out = &cfg.paths.output;
    let mut manifest = RunManifest::new("benchmark", cfg);
    match cfg.benchmark.preset {
        Preset::Table => {
            let table = &cfg.benchmark.table;
            let outcome = run_benchmark(table, |_, _| {})?;
            ensure_dir(out)?;
            manifest.detail("preset", "table");
            manifest.detail("data_range", table.data_range);
            manifest.detail("test_images", outcome.dataset.test.len());
            manifest.write(out, "metrics.csv", metrics_csv(&outcome.summary)?.as_bytes(), None)?;
            manifest.write(out, "score.nksn", &encode_network(&outcome.network), None)?;
            manifest.write(out, LOSS_FILE, loss_csv(&outcome.training).as_bytes(), None)?;
            for r in &outcome.summary {
                println!("{:<8} {:<10} psnr {:>8.3} dB  rmse {:.4}", r.method, r.window, r.psnr_db, r.rmse);
            }
        }
        Preset::Roi => {
            let roi = &cfg.benchmark.roi;
            let outcome = run_roi(roi, |_, _| {})?;
            ensure_dir(out)?;
            manifest.detail("preset", "roi");
            manifest.detail("roi_m", roi.roi_m);
            manifest.detail("background_m", roi.background_m);
            manifest.write(out, "roi_stats.csv", roi_csv(&outcome.stats)?.as_bytes(), None)?;
            manifest.write(out, "histogram.csv", histogram_csv(&outcome.stats)?.as_bytes(), None)?;
            let mut phantom = Raster::from_map(outcome.truth.map());
            phantom.mask = Some(outcome.roi.clone());
            manifest.write(out, "phantom.nkrf", &encode_raster(&phantom)?, None)?;
            manifest.write(out, "measurement.nkrf", &encode_raster(&Raster::from_envelope(&outcome.measurement))?, None)?;
            for (name, map) in &outcome.maps {
                manifest.write(out, &format!("map_{name}.nkrf"), &encode_raster(&Raster::from_map(map))?, None)?;
            }
            manifest.write(out, "score.nksn", &encode_network(&outcome.network), None)?;
            manifest.write(out, LOSS_FILE, loss_csv(&outcome.training).as_bytes(), None)?;
            for (name, s) in &outcome.stats {
                println!("{name:<8} roi mean {:.4}  std {:.4}  pre-Rayleigh {:.3}", s.mean, s.std, s.pre_rayleigh);
            }
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_from_names() {
        assert_eq!(index_of(Path::new("/x/measurement_007.nkrf")), Some("007"));
        assert_eq!(index_of(Path::new("estimate_012.nkrf")), Some("012"));
        assert_eq!(index_of(Path::new("plain.nkrf")), None);
    }

    #[test]
    fn loss_table_layout() {
        let r = TrainReport { history: vec![1.0, 0.5], deltas: vec![0.1, 0.05] };
        assert_eq!(loss_csv(&r), "step,delta,loss\n0,0.1,1\n1,0.05,0.5\n");
    }
}
