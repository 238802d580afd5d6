//! Masked error metrics against ground truth, region-of-interest statistics
//! and their CSV tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distribution::{regime_of, Regime};
use crate::error::{Error, Result};
use crate::image::ParamMap;

/// Default PSNR peak: the span of the ground-truth range, `2.0 - 0.5`.
pub const DEFAULT_DATA_RANGE: f64 = 1.5;
pub const DEFAULT_BINS: usize = 50;
pub const DEFAULT_HIST_RANGE: (f64, f64) = (0.0, 3.0);

fn mutual_pixels<'a>(a: &'a ParamMap, b: &'a ParamMap) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    if a.shape() != b.shape() {
        return Err(Error::Config(format!("shape mismatch: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(a.values()
        .iter()
        .zip(a.valid())
        .zip(b.values().iter().zip(b.valid()))
        .filter(|((_, va), (_, vb))| **va && **vb)
        .map(|((x, _), (y, _))| (*x, *y)))
}

/// Root mean squared difference over mutually valid pixels.
pub fn rmse(estimate: &ParamMap, truth: &ParamMap) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (e, t) in mutual_pixels(estimate, truth)? {
        sum += (e - t) * (e - t);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Evaluation("no mutually valid pixels".into()));
    }
    Ok((sum / n as f64).sqrt())
}

/// PSNR in dB; `rmse == 0` gives `+inf`.
pub fn psnr_from_rmse(rmse: f64, data_range: f64) -> f64 {
    if rmse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (data_range / rmse).log10()
    }
}

pub fn psnr(estimate: &ParamMap, truth: &ParamMap, data_range: f64) -> Result<f64> {
    if !(data_range > 0.0) {
        return Err(Error::Config(format!("data range must be positive, got {data_range}")));
    }
    Ok(psnr_from_rmse(rmse(estimate, truth)?, data_range))
}

/// One row of a method comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub window: String,
    pub data_range: f64,
    pub psnr_db: f64,
    pub psnr_infinite: bool,
    pub rmse: f64,
    pub valid_fraction: f64,
}

impl MetricReport {
    pub fn evaluate(
        method: impl Into<String>,
        window: impl Into<String>,
        estimate: &ParamMap,
        truth: &ParamMap,
        data_range: f64,
    ) -> Result<Self> {
        let err = rmse(estimate, truth)?;
        let psnr_db = psnr(estimate, truth, data_range)?;
        Ok(Self {
            method: method.into(),
            window: window.into(),
            data_range,
            psnr_db,
            psnr_infinite: psnr_db.is_infinite(),
            rmse: err,
            valid_fraction: estimate.valid_fraction(),
        })
    }

    /// Combines per-image reports of one method: mean PSNR and RMSE.
    pub fn average(reports: &[MetricReport]) -> Result<Self> {
        let first = reports.first().ok_or_else(|| Error::Evaluation("no reports to average".into()))?;
        let n = reports.len() as f64;
        let psnr_db = reports.iter().map(|r| r.psnr_db).sum::<f64>() / n;
        Ok(Self {
            method: first.method.clone(),
            window: first.window.clone(),
            data_range: first.data_range,
            psnr_db,
            psnr_infinite: psnr_db.is_infinite(),
            rmse: reports.iter().map(|r| r.rmse).sum::<f64>() / n,
            valid_fraction: reports.iter().map(|r| r.valid_fraction).sum::<f64>() / n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Values outside the range land in the first or last bin.
    pub fn build(values: impl Iterator<Item = f64>, bins: usize, range: (f64, f64)) -> Result<Self> {
        if bins == 0 || !(range.0 < range.1) {
            return Err(Error::Config(format!("bad histogram: {bins} bins over {range:?}")));
        }
        let width = (range.1 - range.0) / bins as f64;
        let edges = (0..=bins).map(|i| range.0 + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for v in values {
            let i = ((v - range.0) / width).floor();
            let i = if i.is_nan() { 0 } else { i.clamp(0.0, (bins - 1) as f64) as usize };
            counts[i] += 1;
        }
        Ok(Self { edges, counts })
    }
}

/// Statistics of a map over a region of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiStats {
    pub count: usize,
    pub mean: f64,
    /// Population (1/N) standard deviation.
    pub std: f64,
    pub histogram: Histogram,
    pub pre_rayleigh: f64,
    pub rayleigh: f64,
    pub post_rayleigh: f64,
}

pub fn roi_stats(map: &ParamMap, roi: &[bool], bins: usize, range: (f64, f64)) -> Result<RoiStats> {
    if roi.len() != map.len() {
        return Err(Error::Config(format!("ROI mask has {} pixels, map {}", roi.len(), map.len())));
    }
    let values: Vec<f64> = map
        .values()
        .iter()
        .zip(map.valid())
        .zip(roi)
        .filter(|((_, valid), inside)| **valid && **inside)
        .map(|((v, _), _)| *v)
        .collect();
    if values.len() < 2 {
        return Err(Error::Evaluation(format!("ROI holds {} valid pixels, need at least 2", values.len())));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let mut shares = [0usize; 3];
    for &v in &values {
        shares[match regime_of(v) {
            Regime::PreRayleigh => 0,
            Regime::Rayleigh => 1,
            Regime::PostRayleigh => 2,
        }] += 1;
    }
    Ok(RoiStats {
        count: values.len(),
        mean,
        std,
        histogram: Histogram::build(values.iter().copied(), bins, range)?,
        pre_rayleigh: shares[0] as f64 / n,
        rayleigh: shares[1] as f64 / n,
        post_rayleigh: shares[2] as f64 / n,
    })
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("CSV: {other:?}")),
    }
}

/// Orders rows by method name, then numerically by the leading window size.
pub fn sort_reports(reports: &mut [MetricReport]) {
    let key = |w: &str| w.split(',').next().and_then(|s| s.parse::<usize>().ok()).unwrap_or(usize::MAX);
    reports.sort_by(|a, b| a.method.cmp(&b.method).then(key(&a.window).cmp(&key(&b.window))).then(a.window.cmp(&b.window)));
}

/// Metric table sorted by method, then window.
pub fn metrics_csv(reports: &[MetricReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Evaluation("no metric rows to write".into()));
    }
    let mut rows = reports.to_vec();
    sort_reports(&mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(csv_error)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).map_err(|e| Error::Format(e.to_string()))
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricReport>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_error)
}

#[derive(Debug, Serialize)]
struct RoiRow<'a> {
    method: &'a str,
    count: usize,
    mean: f64,
    std: f64,
    pre_rayleigh: f64,
    rayleigh: f64,
    post_rayleigh: f64,
}

#[derive(Debug, Serialize)]
struct HistRow<'a> {
    method: &'a str,
    bin_low: f64,
    bin_high: f64,
    count: usize,
}

/// ROI summary table, one row per method, sorted by method.
pub fn roi_csv(stats: &[(String, RoiStats)]) -> Result<String> {
    let mut rows: Vec<&(String, RoiStats)> = stats.iter().collect();
    if rows.is_empty() {
        return Err(Error::Evaluation("no ROI rows to write".into()));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut w = csv::Writer::from_writer(Vec::new());
    for (method, s) in rows {
        w.serialize(RoiRow {
            method,
            count: s.count,
            mean: s.mean,
            std: s.std,
            pre_rayleigh: s.pre_rayleigh,
            rayleigh: s.rayleigh,
            post_rayleigh: s.post_rayleigh,
        })
        .map_err(csv_error)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).map_err(|e| Error::Format(e.to_string()))
}

/// Long-format histogram dump: one row per (method, bin).
pub fn histogram_csv(stats: &[(String, RoiStats)]) -> Result<String> {
    let mut rows: Vec<&(String, RoiStats)> = stats.iter().collect();
    if rows.is_empty() {
        return Err(Error::Evaluation("no histogram rows to write".into()));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut w = csv::Writer::from_writer(Vec::new());
    for (method, s) in rows {
        for (i, &count) in s.histogram.counts.iter().enumerate() {
            w.serialize(HistRow { method, bin_low: s.histogram.edges[i], bin_high: s.histogram.edges[i + 1], count })
                .map_err(csv_error)?;
        }
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).map_err(|e| Error::Format(e.to_string()))
}

pub fn emit_csv(text: &str, path: &Path) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn constant(v: f64) -> ParamMap {
        ParamMap::constant(4, 4, v).unwrap()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&constant(1.0), &constant(1.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(rmse(&constant(1.15), &constant(1.0)).unwrap(), 0.15, epsilon = 1e-12);
        let mut valid = vec![true; 16];
        valid[3] = false;
        let mut values = vec![1.15; 16];
        values[3] = 99.0;
        let masked = ParamMap::new(4, 4, values, valid).unwrap();
        assert_abs_diff_eq!(rmse(&masked, &constant(1.0)).unwrap(), 0.15, epsilon = 1e-12);
        let empty = ParamMap::new(4, 4, vec![0.0; 16], vec![false; 16]).unwrap();
        assert!(matches!(rmse(&empty, &constant(1.0)), Err(Error::Evaluation(_))));
        assert!(matches!(rmse(&ParamMap::constant(2, 2, 1.0).unwrap(), &constant(1.0)), Err(Error::Config(_))));
    }

    #[test]
    fn psnr_examples() {
        assert_abs_diff_eq!(psnr_from_rmse(0.15, 1.5), 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(psnr_from_rmse(0.015, 1.5), 40.0, epsilon = 1e-12);
        assert_abs_diff_eq!(psnr_from_rmse(0.05, 1.5) - psnr_from_rmse(0.1, 1.5), 20.0 * 2f64.log10(), epsilon = 1e-12);
        assert!(psnr(&constant(1.0), &constant(1.0), 1.5).unwrap().is_infinite());
        assert!(psnr(&constant(1.0), &constant(1.0), 0.0).is_err());
    }

    #[test]
    fn roi_examples() {
        let roi = vec![true; 16];
        let s = roi_stats(&constant(0.6), &roi, 50, (0.0, 3.0)).unwrap();
        assert_abs_diff_eq!(s.mean, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(s.std, 0.0, epsilon = 1e-15);
        assert_eq!(s.pre_rayleigh, 1.0);
        let two = ParamMap::from_values(1, 2, vec![0.5, 1.5]).unwrap();
        let s = roi_stats(&two, &[true, true], 50, (0.0, 3.0)).unwrap();
        assert_abs_diff_eq!(s.mean, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.std, 0.5, epsilon = 1e-15);
        assert_eq!(s.pre_rayleigh + s.rayleigh + s.post_rayleigh, 1.0);
        assert!(roi_stats(&two, &[true, false], 50, (0.0, 3.0)).is_err());
    }

    #[test]
    fn histogram_clamps_out_of_range_values() {
        let h = Histogram::build([-1.0, 0.1, 2.9, 7.0].into_iter(), 3, (0.0, 3.0)).unwrap();
        assert_eq!(h.counts, vec![2, 0, 2]);
        assert_eq!(h.edges, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn metrics_csv_round_trip_and_order() {
        let a = MetricReport::evaluate("wmc", "9,11,13", &constant(1.1), &constant(1.0), 1.5).unwrap();
        let b = MetricReport::evaluate("moment", "11", &constant(1.0), &constant(1.0), 1.5).unwrap();
        let text = metrics_csv(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(1).unwrap().starts_with("moment,"));
        let back = parse_metrics_csv(&text).unwrap();
        assert_eq!(back, vec![b, a]);
        assert_eq!(metrics_csv(&back).unwrap(), text);
    }

    #[test]
    fn reports_sort_by_method_then_numeric_window() {
        let mk = |m: &str, w: &str| MetricReport {
            method: m.into(),
            window: w.into(),
            data_range: 1.5,
            psnr_db: 0.0,
            psnr_infinite: false,
            rmse: 1.0,
            valid_fraction: 1.0,
        };
        let mut v = vec![mk("wmc", "9,11"), mk("moment", "11"), mk("moment", "9"), mk("unicorn", "median:3")];
        sort_reports(&mut v);
        let order: Vec<_> = v.iter().map(|r| format!("{}/{}", r.method, r.window)).collect();
        assert_eq!(order, ["moment/9", "moment/11", "unicorn/median:3", "wmc/9,11"]);
    }
}
