//! End-to-end experiment drivers: method dispatch, score-network training,
//! the method-comparison benchmark and the disk-phantom ROI study.

use serde::{Deserialize, Serialize};

use crate::classical::{sliding_window_map, wmc_map, WindowEstimator, WindowSpec};
use crate::data::phantom::{generate, Family};
use crate::data::{normalize_to_m, split_dataset, synthesize_all, synthesize_measurement, Dataset, GroundTruthMap};
use crate::error::{Error, Result};
use crate::filter::LowPass;
use crate::image::{EnvelopeImage, ParamMap};
use crate::metrics::{roi_stats, sort_reports, MetricReport, RoiStats, DEFAULT_BINS, DEFAULT_DATA_RANGE, DEFAULT_HIST_RANGE};
use crate::nn::{train_with, AnnealingSchedule, LrSchedule, Precision, ScoreNetwork, Topology, TrainConfig, TrainReport};
use crate::rng;
use crate::unicorn::{unicorn_map, UnicornConfig};

/// A per-pixel estimator together with its settings.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Moment(WindowSpec),
    Ml(WindowSpec),
    Wmc(Vec<usize>),
    Unicorn(UnicornConfig),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Moment(_) => "moment",
            Method::Ml(_) => "ml",
            Method::Wmc(_) => "wmc",
            Method::Unicorn(_) => "unicorn",
        }
    }

    /// Window column of result tables: the size, the size list, or the
    /// filter for the score-based method.
    pub fn window_label(&self) -> String {
        match self {
            Method::Moment(w) | Method::Ml(w) => w.size().to_string(),
            Method::Wmc(sizes) => sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
            Method::Unicorn(c) => c.filter.to_string(),
        }
    }

    pub fn needs_network(&self) -> bool {
        matches!(self, Method::Unicorn(_))
    }
}

/// Runs `method` on one image. The score-based method needs `network`.
pub fn estimate(image: &EnvelopeImage, method: &Method, network: Option<&ScoreNetwork>) -> Result<ParamMap> {
    match method {
        Method::Moment(w) => sliding_window_map(image, w, WindowEstimator::Moment),
        Method::Ml(w) => sliding_window_map(image, w, WindowEstimator::Ml),
        Method::Wmc(sizes) => wmc_map(image, sizes),
        Method::Unicorn(cfg) => {
            let net = network.ok_or_else(|| Error::Config("the unicorn method needs a score network".into()))?;
            let scores = net.forward(image)?;
            unicorn_map(image, &scores, cfg)
        }
    }
}

/// Network shape, optimizer settings and the annealing endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreTraining {
    pub topology: Topology,
    pub train: TrainConfig,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for ScoreTraining {
    fn default() -> Self {
        Self { topology: Topology::default(), train: TrainConfig::default(), sigma_min: 0.01, sigma_max: 0.1 }
    }
}

impl ScoreTraining {
    /// Settings that train the default topology within a few CPU minutes on
    /// a few hundred 32x32 images: higher peak rate with cosine decay, 32-bit
    /// arithmetic.
    pub fn desk() -> Self {
        Self {
            train: TrainConfig {
                learning_rate: 6e-3,
                epochs: 30,
                precision: Precision::F32,
                lr_schedule: LrSchedule::Cosine { floor: 0.05 },
                ..TrainConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.train.epochs = epochs;
        self
    }

    pub fn schedule(&self, dataset_len: usize) -> Result<AnnealingSchedule> {
        AnnealingSchedule::new(self.sigma_min, self.sigma_max, self.train.total_steps(dataset_len).max(1))
    }
}

/// Initialises a network from `train.seed` and trains it on `images`.
///
/// On divergence the error is returned together with the last good network.
pub fn train_score_network(
    images: &[EnvelopeImage],
    settings: &ScoreTraining,
    observe: impl FnMut(usize, f64),
) -> std::result::Result<(ScoreNetwork, TrainReport), (Error, Option<ScoreNetwork>)> {
    let init = ScoreNetwork::new(settings.topology.clone(), &mut rng::stream(settings.train.seed, 0));
    let mut net = init.map_err(|e| (e, None))?;
    let schedule = settings.schedule(images.len()).map_err(|e| (e, None))?;
    let mut train_rng = rng::stream(settings.train.seed, 1);
    match train_with(&mut net, images, &settings.train, &schedule, &mut train_rng, observe) {
        Ok(report) => Ok((net, report)),
        Err(e @ Error::Divergence { .. }) => Err((e, Some(net))),
        Err(e) => Err((e, None)),
    }
}

/// Comparison of all methods on a synthetic train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub family: Family,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub omega: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub moment_windows: Vec<usize>,
    pub ml_windows: Vec<usize>,
    pub wmc_sizes: Vec<usize>,
    pub unicorn: UnicornConfig,
    pub training: ScoreTraining,
    pub data_range: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            family: Family::RampsDisks,
            count: 64,
            height: 64,
            width: 64,
            omega: 1.0,
            seed: 0,
            train_fraction: 0.8,
            moment_windows: vec![9, 11, 13],
            ml_windows: vec![],
            wmc_sizes: vec![9, 11, 13],
            unicorn: UnicornConfig { filter: LowPass::Median(5), ..UnicornConfig::default() },
            training: ScoreTraining::desk().with_epochs(150),
            data_range: DEFAULT_DATA_RANGE,
        }
    }
}

impl BenchmarkConfig {
    pub fn methods(&self) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for &w in &self.moment_windows {
            out.push(Method::Moment(WindowSpec::dense(w)?));
        }
        for &w in &self.ml_windows {
            out.push(Method::Ml(WindowSpec::dense(w)?));
        }
        if !self.wmc_sizes.is_empty() {
            out.push(Method::Wmc(self.wmc_sizes.clone()));
        }
        out.push(Method::Unicorn(self.unicorn));
        Ok(out)
    }

    /// Ground truths from the procedural family and their measurements,
    /// split into train and test.
    pub fn dataset(&self) -> Result<Dataset> {
        let truths = generate(self.family, self.count, self.height, self.width, self.seed)?
            .into_iter()
            .map(|img| normalize_to_m(self.height, self.width, &img))
            .collect::<Result<Vec<_>>>()?;
        let samples = synthesize_all(truths, self.omega, self.seed.wrapping_add(1))?;
        split_dataset(samples, self.train_fraction, self.seed.wrapping_add(2))
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    /// One row per method, averaged over test images, sorted by method then window.
    pub summary: Vec<MetricReport>,
    pub network: ScoreNetwork,
    pub training: TrainReport,
    pub dataset: Dataset,
}

pub fn run_benchmark(config: &BenchmarkConfig, observe: impl FnMut(usize, f64)) -> Result<BenchmarkOutcome> {
    let dataset = config.dataset()?;
    let train_images: Vec<EnvelopeImage> = dataset.train.iter().map(|s| s.measurement.clone()).collect();
    let (network, training) = train_score_network(&train_images, &config.training, observe).map_err(|(e, _)| e)?;
    let mut summary = Vec::new();
    for method in config.methods()? {
        let per_image = dataset
            .test
            .iter()
            .map(|s| {
                let map = estimate(&s.measurement, &method, Some(&network))?;
                MetricReport::evaluate(method.name(), method.window_label(), &map, s.truth.map(), config.data_range)
            })
            .collect::<Result<Vec<_>>>()?;
        summary.push(MetricReport::average(&per_image)?);
    }
    sort_reports(&mut summary);
    Ok(BenchmarkOutcome { summary, network, training, dataset })
}

/// A disk of `inside` on a background of `outside`, with the disk as ROI.
pub fn disk_phantom(
    height: usize,
    width: usize,
    center: (f64, f64),
    radius: f64,
    inside: f64,
    outside: f64,
) -> Result<(GroundTruthMap, Vec<bool>)> {
    let roi: Vec<bool> = (0..height * width)
        .map(|i| {
            let (y, x) = ((i / width) as f64, (i % width) as f64);
            (y - center.0).powi(2) + (x - center.1).powi(2) <= radius * radius
        })
        .collect();
    let values = roi.iter().map(|&r| if r { inside } else { outside }).collect();
    let truth = GroundTruthMap::new(ParamMap::from_values(height, width, values)?)?;
    Ok((truth, roi))
}

/// ROI study: a score network is trained on measurements of randomly placed
/// disks, then every method is summarised inside the disk of a centred
/// held-out phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiConfig {
    pub height: usize,
    pub width: usize,
    pub roi_m: f64,
    pub background_m: f64,
    /// Disk radius as a fraction of the smaller image side.
    pub radius_fraction: f64,
    pub train_images: usize,
    /// Fraction of training phantoms with the inside and outside values exchanged.
    pub swap_fraction: f64,
    pub omega: f64,
    pub seed: u64,
    pub moment_window: usize,
    pub ml_window: usize,
    pub wmc_sizes: Vec<usize>,
    pub unicorn: UnicornConfig,
    pub training: ScoreTraining,
    pub bins: usize,
    pub hist_range: (f64, f64),
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            height: 48,
            width: 48,
            roi_m: 0.6,
            background_m: 1.2,
            radius_fraction: 0.25,
            train_images: 128,
            swap_fraction: 0.5,
            omega: 1.0,
            seed: 0,
            moment_window: 9,
            ml_window: 9,
            wmc_sizes: vec![9, 11, 13],
            unicorn: UnicornConfig::default(),
            training: ScoreTraining::desk().with_epochs(125),
            bins: DEFAULT_BINS,
            hist_range: DEFAULT_HIST_RANGE,
        }
    }
}

impl RoiConfig {
    pub fn methods(&self) -> Result<Vec<Method>> {
        Ok(vec![
            Method::Moment(WindowSpec::dense(self.moment_window)?),
            Method::Ml(WindowSpec::dense(self.ml_window)?),
            Method::Wmc(self.wmc_sizes.clone()),
            Method::Unicorn(self.unicorn),
        ])
    }

    fn radius(&self) -> f64 {
        self.radius_fraction * self.height.min(self.width) as f64
    }

    /// The centred evaluation phantom and its measurement.
    pub fn phantom(&self) -> Result<(GroundTruthMap, Vec<bool>, EnvelopeImage)> {
        let center = ((self.height as f64 - 1.0) / 2.0, (self.width as f64 - 1.0) / 2.0);
        let (truth, roi) = disk_phantom(self.height, self.width, center, self.radius(), self.roi_m, self.background_m)?;
        let measurement = synthesize_measurement(&truth, self.omega, &mut rng::stream(self.seed, u64::MAX))?;
        Ok((truth, roi, measurement))
    }

    /// Measurements of disks at random centres with radii around the ROI radius.
    pub fn training_images(&self) -> Result<Vec<EnvelopeImage>> {
        use rand::Rng;
        if !(0.0..=1.0).contains(&self.swap_fraction) {
            return Err(Error::Config(format!("swap_fraction must be in [0, 1], got {}", self.swap_fraction)));
        }
        let r0 = self.radius();
        (0..self.train_images)
            .map(|i| {
                let g = &mut rng::stream(self.seed, i as u64);
                let radius = r0 * g.gen_range(0.6..1.4);
                let center = (g.gen_range(0.0..self.height as f64), g.gen_range(0.0..self.width as f64));
                let (inside, outside) = if g.gen_bool(self.swap_fraction) {
                    (self.background_m, self.roi_m)
                } else {
                    (self.roi_m, self.background_m)
                };
                let (truth, _) = disk_phantom(self.height, self.width, center, radius, inside, outside)?;
                synthesize_measurement(&truth, self.omega, g)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RoiOutcome {
    pub stats: Vec<(String, RoiStats)>,
    pub maps: Vec<(String, ParamMap)>,
    pub truth: GroundTruthMap,
    pub roi: Vec<bool>,
    pub measurement: EnvelopeImage,
    pub network: ScoreNetwork,
    pub training: TrainReport,
}

pub fn run_roi(config: &RoiConfig, observe: impl FnMut(usize, f64)) -> Result<RoiOutcome> {
    let images = config.training_images()?;
    let (network, training) = train_score_network(&images, &config.training, observe).map_err(|(e, _)| e)?;
    let (truth, roi, measurement) = config.phantom()?;
    let mut stats = Vec::new();
    let mut maps = Vec::new();
    for method in config.methods()? {
        let map = estimate(&measurement, &method, Some(&network))?;
        stats.push((method.name().to_string(), roi_stats(&map, &roi, config.bins, config.hist_range)?));
        maps.push((method.name().to_string(), map));
    }
    Ok(RoiOutcome { stats, maps, truth, roi, measurement, network, training })
}
