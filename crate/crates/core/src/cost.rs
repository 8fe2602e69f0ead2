//! Multiply-accumulate counting, latency/throughput metrics, a roofline
//! style accelerator latency estimate, and the comparison-table records.
//!
//! Two counting modes exist. `Formula` applies the closed forms
//! `F·D²·I²` (conv), `I²/P²` (pool) and `C` (fully connected) literally:
//! single channel, output extent equal to input extent. `Exact` counts the
//! multiply-accumulates the layer kernels really execute, including input
//! channels and the true output extent. For a valid, stride-1, single
//! channel convolution the two differ by `F·D²·(I² − (I−D+1)²)`.
//!
//! Pooling performs comparisons rather than MACs; both modes charge one
//! unit per pooled output, as the pooling formula does. Throughput counts
//! one MAC as one operation when converting to GOP/s.

use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Receiver for multiply-accumulate counts emitted by layer kernels.
pub trait MacSink {
    fn add(&mut self, n: u64);
}

impl MacSink for () {
    #[inline(always)]
    fn add(&mut self, _n: u64) {}
}

impl MacSink for u64 {
    #[inline(always)]
    fn add(&mut self, n: u64) {
        *self += n;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    Formula,
    Exact,
}

impl std::fmt::Display for CountMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CountMode::Formula => "formula",
            CountMode::Exact => "exact",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Pool,
    Fc,
    Recurrent,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub layer_id: String,
    pub kind: LayerKind,
    pub macs: u64,
    pub mode: CountMode,
    /// Set when a formula needed flooring (pool window not dividing input).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inexact: bool,
}

impl LayerCost {
    pub fn new(layer_id: impl Into<String>, kind: LayerKind, macs: u64, mode: CountMode) -> Self {
        Self { layer_id: layer_id.into(), kind, macs, mode, inexact: false }
    }
}

fn positive(name: &str, v: u64) -> Result<()> {
    if v == 0 {
        Err(Error::invalid(format!("{name} must be >= 1")))
    } else {
        Ok(())
    }
}

/// Convolution count `F·D²·I²`.
pub fn mac_conv(filters: u64, kernel: u64, input: u64) -> Result<u64> {
    positive("filter count", filters)?;
    positive("kernel size", kernel)?;
    positive("input size", input)?;
    Ok(filters * kernel * kernel * input * input)
}

/// Exact count for a valid, stride-1, single-channel square convolution:
/// `F·D²·(I−D+1)²`.
pub fn mac_conv_valid_exact(filters: u64, kernel: u64, input: u64) -> Result<u64> {
    mac_conv(filters, kernel, 1)?;
    positive("input size", input)?;
    if kernel > input {
        return Err(Error::invalid("kernel larger than input"));
    }
    let out = input - kernel + 1;
    Ok(filters * kernel * kernel * out * out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolCount {
    pub macs: u64,
    /// `P²` did not divide `I²`; the count was floored.
    pub non_divisible: bool,
}

/// Pooling count `I²/P²`, floored when not divisible.
pub fn mac_pool(input: u64, window: u64) -> Result<PoolCount> {
    positive("input size", input)?;
    positive("pool window", window)?;
    let num = input * input;
    let den = window * window;
    Ok(PoolCount { macs: num / den, non_divisible: !num.is_multiple_of(den) })
}

/// Fully connected count: the number of connections.
pub fn mac_fc(connections: u64) -> u64 {
    connections
}

/// Connections of a dense layer.
pub fn dense_connections(in_features: u64, out_features: u64) -> u64 {
    in_features * out_features
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cell", rename_all = "lowercase")]
pub enum RecurrentShape {
    Lstm { hidden: u64, input: u64 },
    Rnn { hidden: u64, input: u64 },
}

/// Per-step count: LSTM `4·H·(H+X) + 3·H`, RNN `H·(H+X)`.
pub fn mac_recurrent(shape: RecurrentShape) -> Result<u64> {
    match shape {
        RecurrentShape::Lstm { hidden, input } => {
            positive("hidden size", hidden)?;
            positive("input size", input)?;
            Ok(4 * hidden * (hidden + input) + 3 * hidden)
        }
        RecurrentShape::Rnn { hidden, input } => {
            positive("hidden size", hidden)?;
            positive("input size", input)?;
            Ok(hidden * (hidden + input))
        }
    }
}

pub fn mac_recurrent_sequence(shape: RecurrentShape, steps: u64) -> Result<u64> {
    Ok(steps * mac_recurrent(shape)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacTotal {
    pub macs: u64,
    /// Present when entries from both counting modes were summed.
    pub warning: Option<String>,
}

pub fn mac_total(costs: &[LayerCost]) -> MacTotal {
    let macs = costs.iter().map(|c| c.macs).sum();
    let mixed = costs.windows(2).any(|w| w[0].mode != w[1].mode);
    MacTotal {
        macs,
        warning: mixed.then(|| "total mixes formula and exact counts".to_string()),
    }
}

/// Mean time per inference sample.
pub fn simulation_time(total_time_s: f64, num_samples: u64) -> Result<f64> {
    if num_samples == 0 {
        return Err(Error::invalid("zero inference samples"));
    }
    if !(total_time_s >= 0.0) {
        return Err(Error::invalid(format!("negative total time {total_time_s}")));
    }
    Ok(total_time_s / num_samples as f64)
}

/// MACs per second.
pub fn throughput(total_macs: u64, latency_s: f64) -> Result<f64> {
    if !(latency_s > 0.0) {
        return Err(Error::invalid(format!("latency must be > 0, got {latency_s}")));
    }
    Ok(total_macs as f64 / latency_s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    /// MACs of one inference.
    pub total_macs: u64,
    pub total_inference_time_s: f64,
    pub num_samples: u64,
    pub simulation_time_s_per_sample: f64,
    pub throughput_macs_per_s: f64,
    pub throughput_gops: f64,
}

impl PerfReport {
    pub fn new(total_macs: u64, total_inference_time_s: f64, num_samples: u64) -> Result<Self> {
        let sim = simulation_time(total_inference_time_s, num_samples)?;
        let thr = throughput(total_macs, sim)?;
        Ok(Self {
            total_macs,
            total_inference_time_s,
            num_samples,
            simulation_time_s_per_sample: sim,
            throughput_macs_per_s: thr,
            throughput_gops: thr * 1e-9,
        })
    }

    /// Largest relative violation of the time and throughput identities.
    pub fn identity_error(&self) -> f64 {
        let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
        let sim = self.total_inference_time_s / self.num_samples as f64;
        let thr = self.total_macs as f64 / self.simulation_time_s_per_sample;
        rel(sim, self.simulation_time_s_per_sample)
            .max(rel(thr, self.throughput_macs_per_s))
            .max(rel(thr * 1e-9, self.throughput_gops))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceleratorSpec {
    pub name: String,
    pub clock_hz: f64,
    pub macs_per_cycle: u64,
}

/// Idealized latency `macs / (macs_per_cycle · efficiency) / clock`.
pub fn estimate_accelerator_latency(total_macs: u64, spec: &AcceleratorSpec, efficiency: f64) -> Result<f64> {
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(Error::invalid(format!("efficiency {efficiency} outside (0, 1]")));
    }
    if !(spec.clock_hz > 0.0) || spec.macs_per_cycle == 0 {
        return Err(Error::invalid("clock and MAC array size must be positive"));
    }
    let cycles = total_macs as f64 / (spec.macs_per_cycle as f64 * efficiency);
    Ok(cycles / spec.clock_hz)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples: u64,
    pub repeats: u64,
    /// Wall-clock of all timed passes together.
    pub total_time_s: f64,
    /// Wall-clock of the fastest pass.
    pub best_pass_time_s: f64,
    pub per_sample_min_s: f64,
    pub per_sample_mean_s: f64,
    pub per_sample_std_s: f64,
}

static EXCLUSIVE_RUN: Mutex<()> = Mutex::new(());

/// Time `repeats` full passes of `infer` over `items` after one untimed
/// warm-up pass. Holds a process-wide lock so timed regions never overlap.
pub fn measure_latency<T, F>(items: &[T], repeats: u64, mut infer: F) -> Result<LatencyStats>
where
    F: FnMut(&T) -> Result<()>,
{
    if items.is_empty() {
        return Err(Error::invalid("latency measurement over an empty dataset"));
    }
    if repeats == 0 {
        return Err(Error::invalid("repeats must be >= 1"));
    }
    let _token = EXCLUSIVE_RUN.lock().unwrap_or_else(|p| p.into_inner());
    for it in items {
        infer(it)?;
    }
    let mut passes = Vec::with_capacity(repeats as usize);
    for _ in 0..repeats {
        let start = Instant::now();
        for it in items {
            infer(it)?;
        }
        passes.push(start.elapsed().as_secs_f64());
    }
    Ok(latency_stats_from_passes(&passes, items.len() as u64))
}

pub fn latency_stats_from_passes(passes: &[f64], samples: u64) -> LatencyStats {
    let n = samples as f64;
    let total: f64 = passes.iter().sum();
    let best = passes.iter().copied().fold(f64::INFINITY, f64::min);
    let per: Vec<f64> = passes.iter().map(|p| p / n).collect();
    let mean = total / (n * passes.len() as f64);
    let var = per.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / per.len() as f64;
    LatencyStats {
        samples,
        repeats: passes.len() as u64,
        total_time_s: total,
        best_pass_time_s: best,
        per_sample_min_s: best / n,
        per_sample_mean_s: mean,
        per_sample_std_s: var.sqrt(),
    }
}

/// Column headers of the model comparison table, in order.
pub const COMPARISON_COLUMNS: [&str; 8] = [
    "Accuracy",
    "Precision",
    "Recall",
    "F1-score",
    "Training time",
    "Model complexity (params)",
    "Throughput [GOP/s]",
    "Latency",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub training_time_s: f64,
    pub params: u64,
    pub throughput_gops: f64,
    pub latency_s: f64,
}

impl ComparisonRow {
    /// Cells in [`COMPARISON_COLUMNS`] order.
    pub fn cells(&self) -> [String; 8] {
        [
            percent(self.accuracy),
            percent(self.precision),
            percent(self.recall),
            percent(self.f1),
            format!("{:.2} s", self.training_time_s),
            thousands(self.params),
            format!("{:.6}", self.throughput_gops),
            format!("{:.3} ms", self.latency_s * 1e3),
        ]
    }
}

pub fn render_comparison_row(metrics: &crate::metrics::MetricsReport, perf: &PerfReport, model: &str) -> ComparisonRow {
    ComparisonRow {
        model: model.to_string(),
        accuracy: metrics.accuracy,
        precision: metrics.macro_precision,
        recall: metrics.macro_recall,
        f1: metrics.macro_f1,
        training_time_s: metrics.training_time_s,
        params: metrics.param_count,
        throughput_gops: perf.throughput_gops,
        latency_s: perf.simulation_time_s_per_sample,
    }
}

/// Row labels of the implementation comparison table, in order.
pub const IMPLEMENTATION_ROWS: [&str; 8] = [
    "Convolution Type",
    "Platform",
    "No. Input Samples",
    "Activation",
    "Num of MACs",
    "Clock",
    "Accuracy",
    "Power",
];

/// One implementation column; absent values render as `-`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImplementationRow {
    pub label: String,
    pub convolution_type: Option<String>,
    pub platform: Option<String>,
    pub input_samples: Option<String>,
    pub activation: Option<String>,
    pub macs: Option<u64>,
    pub clock_hz: Option<f64>,
    pub accuracy_percent: Option<f64>,
    /// Reported power, passed through verbatim.
    pub power: Option<String>,
    pub estimated_latency_s: Option<f64>,
}

impl ImplementationRow {
    pub fn cells(&self) -> [String; 8] {
        let dash = || "-".to_string();
        [
            self.convolution_type.clone().unwrap_or_else(dash),
            self.platform.clone().unwrap_or_else(dash),
            self.input_samples.clone().unwrap_or_else(dash),
            self.activation.clone().unwrap_or_else(dash),
            self.macs.map(thousands).unwrap_or_else(dash),
            self.clock_hz.map(format_clock).unwrap_or_else(dash),
            self.accuracy_percent.map(|a| format!("{a}")).unwrap_or_else(dash),
            self.power.clone().unwrap_or_else(dash),
        ]
    }

    /// Reference scenario: 2-D convolution on 187 input samples, 47,560
    /// MACs at 100 MHz; accuracy and power are reported metadata.
    pub fn reference_scenario() -> Self {
        Self {
            label: "reference".into(),
            convolution_type: Some("2-D".into()),
            platform: Some("FPGA Pynq-Z1".into()),
            input_samples: Some("187".into()),
            activation: Some("ReLu".into()),
            macs: Some(47_560),
            clock_hz: Some(100e6),
            accuracy_percent: Some(99.1),
            power: Some("1.53 W".into()),
            estimated_latency_s: None,
        }
    }
}

pub fn format_clock(hz: f64) -> String {
    if hz >= 1e9 {
        format!("{} GHz", hz / 1e9)
    } else if hz >= 1e6 {
        format!("{} MHz", hz / 1e6)
    } else if hz >= 1e3 {
        format!("{} kHz", hz / 1e3)
    } else {
        format!("{hz} Hz")
    }
}

fn percent(v: f64) -> String {
    format!("{:.2}%", v * 100.0)
}

pub fn thousands(v: u64) -> String {
    let s = v.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn conv_counts() {
        assert_eq!(mac_conv(1, 1, 1).unwrap(), 1);
        assert_eq!(mac_conv(2, 3, 4).unwrap(), 288);
        assert!(mac_conv(0, 3, 4).is_err());
        // 2·9·(16 − 4) = 216 MACs of padding overhead for I=4, D=3
        assert_eq!(mac_conv(2, 3, 4).unwrap() - mac_conv_valid_exact(2, 3, 4).unwrap(), 2 * 9 * (16 - 4));
    }

    #[test]
    fn pool_counts() {
        assert_eq!(mac_pool(8, 2).unwrap(), PoolCount { macs: 16, non_divisible: false });
        assert_eq!(mac_pool(5, 5).unwrap().macs, 1);
        let p = mac_pool(7, 2).unwrap();
        assert_eq!(p, PoolCount { macs: 12, non_divisible: true });
        assert!(mac_pool(0, 2).is_err());
    }

    #[test]
    fn fc_and_recurrent_counts() {
        assert_eq!(mac_fc(dense_connections(187, 5)), 935);
        assert_eq!(mac_fc(dense_connections(1, 1)), 1);
        assert_eq!(mac_recurrent(RecurrentShape::Rnn { hidden: 1, input: 1 }).unwrap(), 2);
        assert_eq!(mac_recurrent(RecurrentShape::Lstm { hidden: 1, input: 1 }).unwrap(), 11);
        let lstm = RecurrentShape::Lstm { hidden: 4, input: 3 };
        assert_eq!(mac_recurrent_sequence(lstm, 10).unwrap(), 10 * mac_recurrent(lstm).unwrap());
    }

    #[test]
    fn totals() {
        assert_eq!(mac_total(&[]).macs, 0);
        let costs = [
            LayerCost::new("conv", LayerKind::Conv, 288, CountMode::Formula),
            LayerCost::new("pool", LayerKind::Pool, 16, CountMode::Formula),
            LayerCost::new("fc", LayerKind::Fc, 935, CountMode::Formula),
        ];
        let t = mac_total(&costs);
        assert_eq!(t.macs, 1239);
        assert!(t.warning.is_none());
        let mut rev = costs.to_vec();
        rev.reverse();
        assert_eq!(mac_total(&rev).macs, 1239);
        rev[0].mode = CountMode::Exact;
        assert!(mac_total(&rev).warning.is_some());
    }

    #[test]
    fn time_and_throughput() {
        assert_eq!(simulation_time(10.0, 100).unwrap(), 0.1);
        assert_eq!(simulation_time(0.0, 7).unwrap(), 0.0);
        assert_eq!(simulation_time(3.5, 1).unwrap(), 3.5);
        assert!(simulation_time(1.0, 0).is_err());
        assert_eq!(throughput(1000, 0.5).unwrap(), 2000.0);
        assert_eq!(throughput(2000, 0.5).unwrap(), 2.0 * throughput(1000, 0.5).unwrap());
        assert!(throughput(10, 0.0).is_err());
        let t = throughput(47_560, 0.014).unwrap();
        assert!((t - 3.397_142_857e6).abs() < 1.0, "{t}");
    }

    #[test]
    fn perf_report_identities() {
        let p = PerfReport::new(47_560, 1.3, 100).unwrap();
        assert!(p.identity_error() <= 1e-12);
        assert_eq!(p.throughput_gops, p.throughput_macs_per_s * 1e-9);
    }

    #[test]
    fn accelerator_estimate() {
        let spec = AcceleratorSpec { name: "tcu".into(), clock_hz: 100e6, macs_per_cycle: 100 };
        assert_eq!(estimate_accelerator_latency(1_000_000, &spec, 1.0).unwrap(), 1e-4);
        assert_eq!(estimate_accelerator_latency(1_000_000, &spec, 0.5).unwrap(), 2e-4);
        assert!(estimate_accelerator_latency(1, &spec, 0.0).is_err());
        assert!(estimate_accelerator_latency(1, &spec, 1.5).is_err());
    }

    #[test]
    fn latency_stats() {
        let s = latency_stats_from_passes(&[2.0, 1.0, 3.0, 1.5, 2.5], 10);
        assert_eq!(s.per_sample_mean_s, s.total_time_s / (10.0 * 5.0));
        assert!(s.per_sample_min_s <= s.per_sample_mean_s);
        assert_eq!(s.per_sample_min_s, 0.1);
        let one = latency_stats_from_passes(&[0.4], 4);
        assert_eq!(one.total_time_s, 0.4);
        assert_eq!(one.per_sample_min_s, one.per_sample_mean_s);

        let items = [1u32, 2, 3];
        let mut calls = 0;
        let m = measure_latency(&items, 5, |_| {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 3 * 6);
        assert_eq!(m.repeats, 5);
        assert!(m.per_sample_min_s <= m.per_sample_mean_s);
        assert!(measure_latency::<u32, _>(&[], 1, |_| Ok(())).is_err());
    }

    #[test]
    fn table_cells() {
        let row = ImplementationRow::reference_scenario();
        let cells = row.cells();
        assert_eq!(cells[2], "187");
        assert_eq!(cells[4], "47,560");
        assert_eq!(cells[5], "100 MHz");
        let empty = ImplementationRow::default().cells();
        assert!(empty.iter().all(|c| c == "-"));
        assert_eq!(thousands(3_245_637), "3,245,637");
        assert_eq!(thousands(940), "940");
    }

    proptest! {
        #[test]
        fn accelerator_monotone(
            macs in 1u64..10_000_000, clock in 1e6f64..1e9, array in 1u64..4096,
            clock2 in 1e6f64..1e9, array2 in 1u64..4096, eff in 0.01f64..1.0
        ) {
            let a = AcceleratorSpec { name: "a".into(), clock_hz: clock, macs_per_cycle: array };
            let faster_clock = AcceleratorSpec { clock_hz: clock.max(clock2), ..a.clone() };
            let wider = AcceleratorSpec { macs_per_cycle: array.max(array2), ..a.clone() };
            let base = estimate_accelerator_latency(macs, &a, eff).unwrap();
            prop_assert!(estimate_accelerator_latency(macs, &faster_clock, eff).unwrap() <= base);
            prop_assert!(estimate_accelerator_latency(macs, &wider, eff).unwrap() <= base);
            prop_assert!(estimate_accelerator_latency(macs + 1, &a, eff).unwrap() >= base);
        }
    }
}
