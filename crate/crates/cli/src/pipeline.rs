//! Seeded end-to-end runs: data preparation, training, evaluation, timing.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use beatbench_core::cost::{measure_latency, CountMode, PerfReport};
use beatbench_core::data::{
    add_gaussian_noise, load_csv, minmax_scale, smote_oversample, split_train_val, standard_scale, synth_generate,
    Dataset, NoiseSpec, SplitSpec, NUM_CLASSES,
};
use beatbench_core::model::{dbn_model, FamilyConfig, ModelFamily, DBN_SIZES};
use beatbench_core::rbm::Dbn;
use beatbench_core::tensor::derive_seed;
use beatbench_core::train::{fit, evaluate, TrainConfig};
use beatbench_core::{RngStream, Tensor};
use serde::{Deserialize, Serialize};

use crate::artifact::{MacSummary, RunArtifact, Timing};
use crate::CliError;

/// Where beats come from: a CSV file or `synth:N` (N beats per class).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Csv(PathBuf),
    Synth { per_class: usize },
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.strip_prefix("synth:") {
            Some(n) => {
                let per_class: usize = n.parse().map_err(|_| format!("`{n}` is not a beat count"))?;
                Ok(DataSource::Synth { per_class })
            }
            None if s.is_empty() => Err("empty data source".into()),
            None => Ok(DataSource::Csv(PathBuf::from(s))),
        }
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Csv(p) => write!(f, "{}", p.display()),
            DataSource::Synth { per_class } => write!(f, "synth:{per_class}"),
        }
    }
}

/// Every seed a run consumes, derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedManifest {
    pub master: u64,
    pub data: u64,
    pub noise: u64,
    pub split: u64,
    pub smote: u64,
    pub init: u64,
    pub pretrain: u64,
    pub train: u64,
}

impl SeedManifest {
    pub fn from_master(master: u64) -> Self {
        let d = |tag| derive_seed(master, tag);
        Self { master, data: d(1), noise: d(2), split: d(3), smote: d(4), init: d(5), pretrain: d(6), train: d(7) }
    }

    /// Initialization seed of one model family, so models in a bench run
    /// differ in weights but share every data seed.
    pub fn init_for(&self, family: ModelFamily) -> u64 {
        derive_seed(self.init, family as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub source: DataSource,
    pub noise_sigma: f64,
    pub train_fraction: f64,
    pub stratified: bool,
    /// SMOTE neighbour count, `None` to skip rebalancing.
    pub smote_k: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synth { per_class: 500 },
            noise_sigma: NoiseSpec::DEFAULT_SIGMA,
            train_fraction: 0.8,
            stratified: true,
            smote_k: Some(beatbench_core::data::DEFAULT_SMOTE_K),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelFamily,
    pub data: DataConfig,
    pub family: FamilyConfig,
    pub train: TrainConfig,
    pub dbn_pretrain_epochs: usize,
    pub dbn_pretrain_lr: f64,
    pub latency_repeats: u64,
    pub seeds: SeedManifest,
}

impl RunConfig {
    pub fn new(model: ModelFamily, data: DataConfig, master_seed: u64) -> Self {
        let seeds = SeedManifest::from_master(master_seed);
        Self {
            model,
            data,
            family: FamilyConfig::default(),
            train: TrainConfig { seed: seeds.train, ..default_train(model) },
            dbn_pretrain_epochs: 3,
            dbn_pretrain_lr: 0.05,
            latency_repeats: 3,
            seeds,
        }
    }
}

/// Per-family training defaults sized for a desk-scale run.
pub fn default_train(model: ModelFamily) -> TrainConfig {
    let base = TrainConfig { epochs: 12, batch_size: 32, learning_rate: 3e-3, ..TrainConfig::default() };
    match model {
        ModelFamily::Lstm => TrainConfig { epochs: 8, learning_rate: 5e-3, ..base },
        ModelFamily::Cnn => base,
        ModelFamily::Rnn => TrainConfig { epochs: 10, learning_rate: 5e-3, ..base },
        ModelFamily::Dbn => TrainConfig { epochs: 15, learning_rate: 1e-2, ..base },
    }
}

/// Train/validation sets after noise, splitting and SMOTE, before scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train: Dataset,
    pub val: Dataset,
    pub synthetic_records: usize,
}

fn data_err(e: beatbench_core::Error) -> CliError {
    CliError::from_core(e)
}

/// Failures that can only come from the input beats themselves.
fn input_err(e: beatbench_core::Error) -> CliError {
    CliError::Data(CliError::core_message(&e).to_string())
}

/// Load → noise → split → SMOTE on the training part.
pub fn prepare_data(cfg: &DataConfig, seeds: &SeedManifest) -> Result<PreparedData, CliError> {
    let raw = match &cfg.source {
        DataSource::Csv(p) => load_csv(p).map_err(|e| CliError::Data(format!("{}: {}", p.display(), CliError::core_message(&e))))?,
        DataSource::Synth { per_class } => {
            if *per_class == 0 {
                return Err(CliError::Usage("synthetic beats per class must be >= 1".into()));
            }
            synth_generate([*per_class; NUM_CLASSES], seeds.data).map_err(data_err)?
        }
    };
    let noisy = add_gaussian_noise(&raw, NoiseSpec { sigma: cfg.noise_sigma, seed: seeds.noise }).map_err(data_err)?;
    let spec = SplitSpec { train_fraction: cfg.train_fraction, stratified: cfg.stratified, seed: seeds.split };
    let (train, val) = split_train_val(&noisy, spec).map_err(input_err)?;
    let (train, synthetic_records) = match cfg.smote_k {
        Some(k) => {
            let out = smote_oversample(&train, k, seeds.smote).map_err(input_err)?;
            let n = out.draws.len();
            (out.dataset, n)
        }
        None => (train, 0),
    };
    log::info!(
        "data: {} train ({} synthetic), {} validation, histogram {:?}",
        train.len(),
        synthetic_records,
        val.len(),
        train.class_histogram()
    );
    Ok(PreparedData { train, val, synthetic_records })
}

/// Run one model on prepared data and collect its artifact.
pub fn run_model(cfg: &RunConfig, data: &PreparedData) -> Result<RunArtifact, CliError> {
    let scaled = if cfg.model == ModelFamily::Dbn {
        minmax_scale(&data.train, &[&data.val])
    } else {
        standard_scale(&data.train, &[&data.val])
    }
    .map_err(data_err)?;
    let (train, val) = (scaled.0, scaled.1.into_iter().next().expect("one extra set"));

    let mut rng = RngStream::new(cfg.seeds.init_for(cfg.model));
    let start = Instant::now();
    let model = if cfg.model == ModelFamily::Dbn {
        let mut dbn = Dbn::init(&DBN_SIZES, NUM_CLASSES, &mut rng).map_err(data_err)?;
        let mut pre_rng = RngStream::new(cfg.seeds.pretrain);
        dbn.pretrain_layerwise(&train.feature_matrix(), cfg.dbn_pretrain_epochs, cfg.dbn_pretrain_lr, &mut pre_rng)
            .map_err(data_err)?;
        dbn_model(&dbn)
    } else {
        cfg.model.build(&cfg.family, &mut rng).map_err(data_err)?
    };
    log::info!("{}: {} parameters, training", cfg.model, model.param_count());
    let (trained, history) = fit(&model, &train, &val, &cfg.train).map_err(CliError::from_core)?;
    let training_time_s = start.elapsed().as_secs_f64();

    let metrics = evaluate(&trained, &val).map_err(CliError::from_core)?.with_training(training_time_s, trained.param_count());
    let inputs: Vec<Tensor> = val.records().iter().map(|r| r.to_tensor()).collect();
    let latency = measure_latency(&inputs, cfg.latency_repeats, |x| trained.forward(x).map(|_| ())).map_err(CliError::from_core)?;
    let macs = MacSummary {
        exact: trained.total_macs(CountMode::Exact),
        formula: trained.total_macs(CountMode::Formula),
    };
    let perf = PerfReport::new(macs.exact, latency.best_pass_time_s, latency.samples).map_err(CliError::from_core)?;
    log::info!("{}: val accuracy {:.4}", cfg.model, metrics.accuracy);
    Ok(RunArtifact::new(cfg.clone(), metrics, perf, macs, history, Timing { training_time_s, latency }))
}

/// Convenience wrapper: prepare data and run a single model.
pub fn run(cfg: &RunConfig) -> Result<RunArtifact, CliError> {
    let data = prepare_data(&cfg.data, &cfg.seeds)?;
    run_model(cfg, &data)
}
