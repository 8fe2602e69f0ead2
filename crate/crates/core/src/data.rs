//! ECG beat datasets: CSV ingestion, a synthetic beat generator, noise
//! augmentation, SMOTE rebalancing, scaling, and train/validation splits.
//!
//! The CSV layout is one beat per row: 187 amplitude columns followed by an
//! integer class label in `0..5`. A non-numeric first field on the first
//! row marks a header, which is skipped.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{RngStream, Tensor};

pub const BEAT_LEN: usize = 187;
pub const NUM_CLASSES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatRecord {
    samples: Vec<f64>,
    label: usize,
}

impl BeatRecord {
    pub fn new(samples: Vec<f64>, label: usize) -> Result<Self> {
        if samples.len() != BEAT_LEN {
            return Err(Error::data(format!("beat has {} samples, expected {BEAT_LEN}", samples.len())));
        }
        if label >= NUM_CLASSES {
            return Err(Error::data(format!("label {label} outside 0..{NUM_CLASSES}")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("beat contains non-finite samples"));
        }
        Ok(Self { samples, label })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::vector(&self.samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<BeatRecord>,
    histogram: [usize; NUM_CLASSES],
}

impl Dataset {
    pub fn new(records: Vec<BeatRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::data("empty dataset"));
        }
        let mut histogram = [0; NUM_CLASSES];
        for r in &records {
            histogram[r.label] += 1;
        }
        Ok(Self { records, histogram })
    }

    pub fn records(&self) -> &[BeatRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_histogram(&self) -> [usize; NUM_CLASSES] {
        self.histogram
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Features as an `[N, 187]` tensor.
    pub fn feature_matrix(&self) -> Tensor {
        let data = self.records.iter().flat_map(|r| r.samples.iter().copied()).collect();
        Tensor::from_vec(&[self.len(), BEAT_LEN], data).expect("non-empty dataset")
    }

    fn map_samples(&self, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Result<Self> {
        let records = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| BeatRecord::new(f(i, &r.samples), r.label))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(records)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Dataset::new(indices.iter().map(|&i| self.records[i].clone()).collect())
    }
}

fn parse_field(field: &str, line: usize, col: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::data(format!("row {line}: column {col} is not numeric: `{}`", field.trim())))?;
    if !v.is_finite() {
        return Err(Error::data(format!("row {line}: column {col} is not finite")));
    }
    Ok(v)
}

/// Parse beat CSV text. Row numbers in errors are 1-based file lines.
pub fn parse_csv(text: &str) -> Result<Dataset> {
    read_csv(text.as_bytes())
}

pub fn read_csv<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut records = Vec::new();
    let mut first = true;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if first {
            first = false;
            if fields[0].trim().parse::<f64>().is_err() {
                continue;
            }
        }
        if fields.len() != BEAT_LEN + 1 {
            return Err(Error::data(format!(
                "row {lineno}: expected {} fields, found {}",
                BEAT_LEN + 1,
                fields.len()
            )));
        }
        let mut samples = Vec::with_capacity(BEAT_LEN);
        for (col, f) in fields[..BEAT_LEN].iter().enumerate() {
            samples.push(parse_field(f, lineno, col + 1)?);
        }
        let raw = parse_field(fields[BEAT_LEN], lineno, BEAT_LEN + 1)?;
        if raw.fract() != 0.0 || !(0.0..NUM_CLASSES as f64).contains(&raw) {
            return Err(Error::data(format!("row {lineno}: label {raw} outside {{0..{}}}", NUM_CLASSES - 1)));
        }
        records.push(BeatRecord::new(samples, raw as usize).map_err(|e| Error::data(format!("row {lineno}: {e}")))?);
    }
    Dataset::new(records)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_csv(std::io::BufReader::new(file))
}

/// Serialize in the beat CSV format (no header, shortest round-trip floats).
pub fn to_csv(ds: &Dataset) -> String {
    let mut out = String::with_capacity(ds.len() * BEAT_LEN * 8);
    for r in &ds.records {
        for v in &r.samples {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{}", r.label);
    }
    out
}

struct Wave {
    center: f64,
    width: f64,
    amplitude: f64,
}

/// Parametric template per class: baseline plus Gaussian P/QRS/T bumps.
fn class_template(class: usize) -> Vec<Wave> {
    let w = |center, width, amplitude| Wave { center, width, amplitude };
    match class {
        // normal: P, narrow QRS, upright T
        0 => vec![w(18.0, 4.0, 0.15), w(40.0, 2.5, 0.75), w(95.0, 10.0, 0.25)],
        // supraventricular premature: early narrow QRS, no P, early T
        1 => vec![w(25.0, 2.5, 0.70), w(70.0, 8.0, 0.30)],
        // ventricular: wide tall QRS, inverted T
        2 => vec![w(50.0, 9.0, 0.70), w(115.0, 12.0, -0.15)],
        // fusion: medium QRS, flat late T
        3 => vec![w(18.0, 4.0, 0.10), w(45.0, 5.0, 0.50), w(130.0, 10.0, 0.30)],
        // paced: pacing spike then wide complex
        _ => vec![w(20.0, 1.2, 0.75), w(60.0, 7.0, 0.45), w(140.0, 12.0, 0.20)],
    }
}

const SYNTH_BASELINE: f64 = 0.2;
const SYNTH_NOISE: f64 = 0.01;

/// Deterministic synthetic beats, `counts[k]` of class `k`, with jittered
/// wave amplitude, width, and position plus small white noise. Values are
/// clipped to `[0, 1]` like the preprocessed beat corpus.
pub fn synth_generate(counts: [usize; NUM_CLASSES], seed: u64) -> Result<Dataset> {
    if counts.iter().sum::<usize>() == 0 {
        return Err(Error::invalid("synthetic dataset needs at least one beat"));
    }
    let mut rng = RngStream::new(seed);
    let mut records = Vec::new();
    for (class, &n) in counts.iter().enumerate() {
        let template = class_template(class);
        for _ in 0..n {
            let waves: Vec<Wave> = template
                .iter()
                .map(|w| Wave {
                    center: w.center + rng.normal(),
                    width: w.width * (1.0 + 0.05 * rng.normal()),
                    amplitude: w.amplitude * (1.0 + 0.05 * rng.normal()),
                })
                .collect();
            let samples = (0..BEAT_LEN)
                .map(|t| {
                    let t = t as f64;
                    let v: f64 = waves
                        .iter()
                        .map(|w| w.amplitude * (-0.5 * ((t - w.center) / w.width).powi(2)).exp())
                        .sum();
                    (SYNTH_BASELINE + v + SYNTH_NOISE * rng.normal()).clamp(0.0, 1.0)
                })
                .collect();
            records.push(BeatRecord::new(samples, class)?);
        }
    }
    Dataset::new(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub const DEFAULT_SIGMA: f64 = 0.05;
}

/// Perturb every sample with i.i.d. `N(0, sigma²)`; labels are untouched.
pub fn add_gaussian_noise(ds: &Dataset, spec: NoiseSpec) -> Result<Dataset> {
    if !(spec.sigma >= 0.0) {
        return Err(Error::invalid(format!("noise sigma {} < 0", spec.sigma)));
    }
    if spec.sigma == 0.0 {
        return Ok(ds.clone());
    }
    let mut rng = RngStream::new(spec.seed);
    ds.map_samples(|_, s| s.iter().map(|v| v + spec.sigma * rng.normal()).collect())
}

/// One synthetic SMOTE point: `base + gap · (neighbor − base)`, with
/// indices into the input dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoteDraw {
    pub base: usize,
    pub neighbor: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteOutput {
    /// Input records in order, followed by the synthetic records in draw order.
    pub dataset: Dataset,
    pub draws: Vec<SmoteDraw>,
}

pub const DEFAULT_SMOTE_K: usize = 5;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Upsample every class to the majority count by interpolating toward one
/// of the `k` nearest same-class neighbours (Euclidean, ties by index).
pub fn smote_oversample(ds: &Dataset, k_neighbors: usize, seed: u64) -> Result<SmoteOutput> {
    if k_neighbors == 0 {
        return Err(Error::invalid("k_neighbors must be >= 1"));
    }
    let hist = ds.class_histogram();
    let target = *hist.iter().max().expect("classes");
    let mut rng = RngStream::new(seed);
    let mut records = ds.records.clone();
    let mut draws = Vec::new();
    for (class, &count) in hist.iter().enumerate() {
        if count == 0 || count == target {
            continue;
        }
        if count < 2 {
            return Err(Error::data(format!("class {class} has {count} member; SMOTE needs at least 2")));
        }
        let k = if k_neighbors > count - 1 {
            log::warn!("class {class}: k_neighbors {k_neighbors} clamped to {}", count - 1);
            count - 1
        } else {
            k_neighbors
        };
        let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.records[i].label == class).collect();
        let neighbours: Vec<Vec<usize>> = members
            .iter()
            .map(|&i| {
                let mut d: Vec<(f64, usize)> = members
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| (squared_distance(&ds.records[i].samples, &ds.records[j].samples), j))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.into_iter().take(k).map(|(_, j)| j).collect()
            })
            .collect();
        for _ in 0..target - count {
            let m = rng.below(count);
            let base = members[m];
            let neighbor = neighbours[m][rng.below(k)];
            let gap = rng.uniform();
            let x = &ds.records[base].samples;
            let y = &ds.records[neighbor].samples;
            let samples = x.iter().zip(y).map(|(a, b)| a + gap * (b - a)).collect();
            records.push(BeatRecord::new(samples, class)?);
            draws.push(SmoteDraw { base, neighbor, gap });
        }
    }
    Ok(SmoteOutput { dataset: Dataset::new(records)?, draws })
}

/// Per-feature affine scaling fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub offset: Vec<f64>,
    /// Divisor per feature; 1 for features the fit found constant.
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        ds.map_samples(|_, s| {
            s.iter()
                .zip(self.offset.iter().zip(&self.scale))
                .map(|(v, (o, d))| (v - o) / d)
                .collect()
        })
    }
}

/// Standardize with mean and population standard deviation computed on
/// `train` only. Zero-variance features are centred but not divided.
pub fn standard_scale(train: &Dataset, others: &[&Dataset]) -> Result<(Dataset, Vec<Dataset>, Scaler)> {
    let n = train.len() as f64;
    let mut mean = vec![0.0; BEAT_LEN];
    for r in &train.records {
        mean.iter_mut().zip(&r.samples).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; BEAT_LEN];
    for r in &train.records {
        for (k, v) in r.samples.iter().enumerate() {
            var[k] += (v - mean[k]).powi(2);
        }
    }
    let first = &train.records[0].samples;
    let mut scale = Vec::with_capacity(BEAT_LEN);
    for k in 0..BEAT_LEN {
        if train.records.iter().all(|r| r.samples[k] == first[k]) {
            // exact constant: centre on the value itself so the output is exactly 0
            mean[k] = first[k];
            scale.push(1.0);
        } else {
            scale.push((var[k] / n).sqrt());
        }
    }
    let scaler = Scaler { offset: mean, scale };
    let scaled = scaler.transform(train)?;
    let rest = others.iter().map(|d| scaler.transform(d)).collect::<Result<Vec<_>>>()?;
    Ok((scaled, rest, scaler))
}

/// Min-max scaling to `[0, 1]` from `train` statistics, clamped so unseen
/// data stays in range.
pub fn minmax_scale(train: &Dataset, others: &[&Dataset]) -> Result<(Dataset, Vec<Dataset>, Scaler)> {
    let mut lo = vec![f64::INFINITY; BEAT_LEN];
    let mut hi = vec![f64::NEG_INFINITY; BEAT_LEN];
    for r in &train.records {
        for (k, &v) in r.samples.iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    let scale = lo.iter().zip(&hi).map(|(l, h)| if h > l { h - l } else { 1.0 }).collect();
    let scaler = Scaler { offset: lo, scale };
    let clamp = |d: &Dataset| -> Result<Dataset> {
        scaler.transform(d)?.map_samples(|_, s| s.iter().map(|v| v.clamp(0.0, 1.0)).collect())
    };
    let scaled = clamp(train)?;
    let rest = others.iter().map(|d| clamp(d)).collect::<Result<Vec<_>>>()?;
    Ok((scaled, rest, scaler))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.8, stratified: true, seed: 0 }
    }
}

/// Index partition behind [`split_train_val`]; both halves are in shuffled order.
pub fn split_indices(ds: &Dataset, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {} outside (0, 1)", spec.train_fraction)));
    }
    if ds.len() < 2 {
        return Err(Error::data("cannot split fewer than two records"));
    }
    let mut rng = RngStream::new(spec.seed);
    let n = ds.len();
    let target = ((n as f64 * spec.train_fraction).round() as usize).clamp(1, n - 1);
    if !spec.stratified {
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        let val = idx.split_off(target);
        return Ok((idx, val));
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, r) in ds.records.iter().enumerate() {
        groups[r.label].push(i);
    }
    if let Some(c) = groups.iter().position(|g| g.len() == 1) {
        return Err(Error::data(format!("stratification impossible: class {c} has a single member")));
    }
    // Largest-remainder apportionment of `target` across classes.
    let quotas: Vec<f64> = groups.iter().map(|g| g.len() as f64 * spec.train_fraction).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..NUM_CLASSES).filter(|&c| !groups[c].is_empty()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let mut remaining = target.saturating_sub(take.iter().sum());
    for &c in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if take[c] < groups[c].len() {
            take[c] += 1;
            remaining -= 1;
        }
    }
    for c in 0..NUM_CLASSES {
        if !groups[c].is_empty() {
            take[c] = take[c].clamp(1, groups[c].len() - 1);
        }
    }
    let mut train = Vec::with_capacity(target);
    let mut val = Vec::with_capacity(n - target);
    for (c, g) in groups.iter_mut().enumerate() {
        rng.shuffle(g);
        train.extend_from_slice(&g[..take[c]]);
        val.extend_from_slice(&g[take[c]..]);
    }
    rng.shuffle(&mut train);
    rng.shuffle(&mut val);
    Ok((train, val))
}

pub fn split_train_val(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let (t, v) = split_indices(ds, spec)?;
    Ok((ds.subset(&t)?, ds.subset(&v)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beat(value: f64, label: usize) -> BeatRecord {
        BeatRecord::new(vec![value; BEAT_LEN], label).unwrap()
    }

    fn row(value: f64, label: &str) -> String {
        let mut s = vec![value.to_string(); BEAT_LEN];
        s.push(label.to_string());
        s.join(",")
    }

    #[test]
    fn csv_well_formed() {
        let text = format!("{}\n{}\n", row(0.5, "0"), row(0.25, "3.0"));
        let ds = parse_csv(&text).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.class_histogram(), [1, 0, 0, 1, 0]);
        assert_eq!(ds.records()[1].samples()[0], 0.25);
    }

    #[test]
    fn csv_header_is_skipped() {
        let header = (0..=BEAT_LEN).map(|i| format!("c{i}")).collect::<Vec<_>>().join(",");
        let ds = parse_csv(&format!("{header}\n{}\n", row(0.1, "4"))).unwrap();
        assert_eq!(ds.labels(), vec![4]);
    }

    #[test]
    fn csv_errors() {
        let short = vec!["0.1"; BEAT_LEN].join(",");
        let err = parse_csv(&format!("{}\n{short}\n", row(0.0, "1"))).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");

        let err = parse_csv("").unwrap_err();
        assert!(err.to_string().contains("empty dataset"));

        assert!(parse_csv(&row(0.0, "5")).is_err());
        assert!(parse_csv(&row(0.0, "1.5")).is_err());
        assert!(parse_csv(&format!("{}\n{}", row(0.0, "1"), row(0.0, "1").replacen("0", "x", 1))).is_err());
        assert!(parse_csv(&row(f64::NAN, "1")).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ds = synth_generate([2, 1, 0, 1, 1], 3).unwrap();
        assert_eq!(parse_csv(&to_csv(&ds)).unwrap(), ds);
    }

    #[test]
    fn synth_examples() {
        let one = synth_generate([1, 0, 0, 0, 0], 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.labels(), vec![0]);
        assert_eq!(to_csv(&synth_generate([3; 5], 7).unwrap()), to_csv(&synth_generate([3; 5], 7).unwrap()));
        assert!(synth_generate([0; 5], 1).is_err());
    }

    #[test]
    fn synth_classes_are_separated() {
        let ds = synth_generate([200; 5], 11).unwrap();
        let mut means = vec![vec![0.0; BEAT_LEN]; NUM_CLASSES];
        for r in ds.records() {
            means[r.label()].iter_mut().zip(r.samples()).for_each(|(m, v)| *m += v / 200.0);
        }
        // pooled per-element RMS deviation from the class mean
        let mut ss = 0.0;
        for r in ds.records() {
            ss += squared_distance(r.samples(), &means[r.label()]);
        }
        let within = (ss / (ds.len() * BEAT_LEN) as f64).sqrt();
        for a in 0..NUM_CLASSES {
            for b in a + 1..NUM_CLASSES {
                let d = squared_distance(&means[a], &means[b]).sqrt();
                assert!(d > 10.0 * within, "classes {a},{b}: distance {d} vs within {within}");
            }
        }
    }

    #[test]
    fn noise_contract() {
        let ds = synth_generate([3; 5], 2).unwrap();
        assert_eq!(add_gaussian_noise(&ds, NoiseSpec { sigma: 0.0, seed: 9 }).unwrap(), ds);
        let noisy = add_gaussian_noise(&ds, NoiseSpec { sigma: 0.3, seed: 9 }).unwrap();
        assert_eq!(noisy.labels(), ds.labels());
        assert_ne!(noisy, ds);

        let base = Dataset::new((0..535).map(|i| beat(0.5, i % 5)).collect()).unwrap();
        let sigma = 0.05;
        let n = add_gaussian_noise(&base, NoiseSpec { sigma, seed: 42 }).unwrap();
        let diffs: Vec<f64> = n
            .records()
            .iter()
            .flat_map(|r| r.samples().iter().map(|v| v - 0.5))
            .collect();
        assert!(diffs.len() >= 100_000);
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64).sqrt();
        assert!((sd - sigma).abs() <= 0.05 * sigma, "sd {sd}");
    }

    #[test]
    fn smote_balanced_is_noop() {
        let ds = synth_generate([4; 5], 1).unwrap();
        let out = smote_oversample(&ds, 5, 3).unwrap();
        assert_eq!(out.dataset, ds);
        assert!(out.draws.is_empty());
    }

    #[test]
    fn smote_balances_and_replays() {
        let ds = synth_generate([10, 2, 0, 0, 0], 5).unwrap();
        let out = smote_oversample(&ds, 5, 8).unwrap();
        assert_eq!(out.dataset.class_histogram(), [10, 10, 0, 0, 0]);
        assert_eq!(&out.dataset.records()[..ds.len()], ds.records());
        for (draw, synth) in out.draws.iter().zip(&out.dataset.records()[ds.len()..]) {
            let x = ds.records()[draw.base].samples();
            let y = ds.records()[draw.neighbor].samples();
            assert_eq!(ds.records()[draw.base].label(), synth.label());
            assert_eq!(ds.records()[draw.neighbor].label(), synth.label());
            assert_ne!(draw.base, draw.neighbor);
            assert!((0.0..=1.0).contains(&draw.gap));
            for ((s, a), b) in synth.samples().iter().zip(x).zip(y) {
                assert_eq!(*s, a + draw.gap * (b - a));
            }
        }
    }

    #[test]
    fn smote_rejects_singletons() {
        let ds = synth_generate([5, 1, 0, 0, 0], 5).unwrap();
        assert!(smote_oversample(&ds, 5, 1).is_err());
        assert!(smote_oversample(&ds, 0, 1).is_err());
    }

    #[test]
    fn scaling_contract() {
        let mut records: Vec<BeatRecord> = synth_generate([6; 5], 4).unwrap().records().to_vec();
        // make feature 0 constant
        records = records
            .into_iter()
            .map(|r| {
                let mut s = r.samples().to_vec();
                s[0] = 0.7;
                BeatRecord::new(s, r.label()).unwrap()
            })
            .collect();
        let train = Dataset::new(records).unwrap();
        let shifted = train.map_samples(|_, s| s.iter().map(|v| v + 10.0).collect()).unwrap();
        let (st, rest, scaler) = standard_scale(&train, &[&shifted]).unwrap();
        let m = st.feature_matrix();
        let n = st.len() as f64;
        for k in 0..BEAT_LEN {
            let col: Vec<f64> = (0..st.len()).map(|i| m.get(&[i, k])).collect();
            let mean = col.iter().sum::<f64>() / n;
            assert!(mean.abs() < 1e-9);
            if k == 0 {
                assert!(col.iter().all(|&v| v == 0.0));
            } else if scaler.scale[k] != 1.0 {
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                assert!((sd - 1.0).abs() < 1e-9);
            }
        }
        // validation set uses train statistics: shift of 10 shows up as 10/std
        let a = st.records()[0].samples()[50];
        let b = rest[0].records()[0].samples()[50];
        assert!((b - a - 10.0 / scaler.scale[50]).abs() < 1e-9);
    }

    #[test]
    fn minmax_range() {
        let ds = synth_generate([5; 5], 6).unwrap();
        let noisy = add_gaussian_noise(&ds, NoiseSpec { sigma: 0.5, seed: 1 }).unwrap();
        let (a, rest, _) = minmax_scale(&ds, &[&noisy]).unwrap();
        for r in a.records().iter().chain(rest[0].records()) {
            assert!(r.samples().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn split_examples() {
        let ds = Dataset::new((0..100).map(|i| beat(i as f64, i % 2)).collect()).unwrap();
        let spec = SplitSpec { train_fraction: 0.8, stratified: false, seed: 1 };
        let (t, v) = split_train_val(&ds, spec).unwrap();
        assert_eq!((t.len(), v.len()), (80, 20));

        let (t, v) = split_train_val(&ds, SplitSpec { stratified: true, ..spec }).unwrap();
        assert_eq!(t.class_histogram()[..2], [40, 40]);
        assert_eq!(v.class_histogram()[..2], [10, 10]);

        let a = split_indices(&ds, SplitSpec { seed: 3, ..spec }).unwrap();
        assert_eq!(a, split_indices(&ds, SplitSpec { seed: 3, ..spec }).unwrap());
        assert_ne!(a, split_indices(&ds, SplitSpec { seed: 4, ..spec }).unwrap());

        let lonely = Dataset::new(vec![beat(0.0, 0), beat(0.0, 0), beat(0.0, 1)]).unwrap();
        assert!(split_train_val(&lonely, SplitSpec::default()).is_err());
    }

    #[test]
    fn split_is_partition() {
        let ds = synth_generate([13, 7, 29, 2, 11], 5).unwrap();
        for seed in 0..10 {
            let (t, v) = split_indices(&ds, SplitSpec { train_fraction: 0.8, stratified: true, seed }).unwrap();
            assert_eq!(t.len() + v.len(), ds.len());
            let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
            let target = ds.len() as f64 * 0.8;
            assert!((t.len() as f64 - target).abs() <= 1.0);
            let train = ds.subset(&t).unwrap();
            for c in 0..NUM_CLASSES {
                let expected = ds.class_histogram()[c] as f64 * 0.8;
                assert!((train.class_histogram()[c] as f64 - expected).abs() <= 1.0);
            }
        }
    }
}
