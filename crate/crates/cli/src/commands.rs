//! Argument parsing and the five subcommands.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use beatbench_core::cost::{estimate_accelerator_latency, mac_total, AcceleratorSpec, CountMode, ImplementationRow};
use beatbench_core::data::{synth_generate, to_csv, NUM_CLASSES};
use beatbench_core::dsl::ModelSpec;
use beatbench_core::model::{FamilyConfig, ModelFamily, Sequential};
use beatbench_core::train::OptimizerKind;
use beatbench_core::RngStream;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::artifact::{artifacts_to_json, history_csv, read_artifacts, RunArtifact};
use crate::pipeline::{prepare_data, run_model, DataConfig, DataSource, RunConfig};
use crate::table::{comparison_csv, comparison_table, implementation_table};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "beatbench", version, about = "ECG beat classifier benchmark harness")]
pub struct Cli {
    /// Master seed; every other seed is derived from it.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Directory for artifacts and tables [default: .]
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic beat CSV.
    Synth {
        /// Beats generated for each of the five classes.
        #[arg(long)]
        per_class: usize,
        /// Output path (default: <out-dir>/beats.csv).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train and evaluate one model.
    Train {
        /// Model family: lstm, cnn, rnn or dbn.
        #[arg(long, required_unless_present = "replay")]
        model: Option<ModelFamily>,
        /// CSV path or `synth:N` for N synthetic beats per class.
        #[arg(long, required_unless_present = "replay")]
        data: Option<DataSource>,
        /// Re-run the configuration embedded in an artifact.
        #[arg(long, conflicts_with_all = ["model", "data"])]
        replay: Option<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Train every selected model on one shared split and tabulate them.
    Bench {
        /// Comma-separated model families.
        #[arg(long, value_delimiter = ',', default_value = "lstm,cnn,rnn,dbn")]
        models: Vec<ModelFamily>,
        /// CSV path or `synth:N` for N synthetic beats per class.
        #[arg(long, default_value = "synth:500")]
        data: DataSource,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Per-layer multiply-accumulate counts.
    Macs {
        /// Built-in model family to analyse.
        #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
        model: Option<ModelFamily>,
        /// Layer description, e.g. `input=28x28;conv=8x3x3;pool=2x2;fc=5`.
        #[arg(long)]
        spec: Option<String>,
        /// Which MAC count to report.
        #[arg(long, value_enum, default_value_t = MacMode::Both)]
        mode: MacMode,
        /// Accelerator clock in Hz, e.g. 100e6.
        #[arg(long)]
        clock: Option<f64>,
        /// MAC array as ROWSxCOLS.
        #[arg(long, default_value = "8x8")]
        array: String,
        /// Fraction of peak array throughput actually achieved.
        #[arg(long, default_value_t = 1.0)]
        efficiency: f64,
        /// Also print the implementation comparison table.
        #[arg(long)]
        implementations: bool,
    },
    /// Render comparison tables from artifact files.
    Report {
        /// Artifact JSON files, single runs or bench lists.
        artifacts: Vec<PathBuf>,
        /// CSV output path (default: <out-dir>/report.csv).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MacMode {
    Exact,
    Formula,
    Both,
}

/// Overrides shared by `train` and `bench`; unset fields keep per-model defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunOpts {
    /// Maximum training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Mini-batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// sgd or adam.
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Smallest validation loss drop that counts as improvement.
    #[arg(long)]
    pub min_delta: Option<f64>,
    /// Standard deviation of Gaussian noise added to every beat.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Share of beats in the training split.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Random instead of stratified split.
    #[arg(long)]
    pub no_stratify: bool,
    /// SMOTE neighbour count.
    #[arg(long)]
    pub smote_k: Option<usize>,
    /// Skip SMOTE oversampling of the training split.
    #[arg(long, conflicts_with = "smote_k")]
    pub no_smote: bool,
    /// LSTM/RNN samples per time step.
    #[arg(long)]
    pub frame: Option<usize>,
    /// Timed single-beat inferences; the minimum is reported.
    #[arg(long)]
    pub latency_repeats: Option<u64>,
}

impl RunOpts {
    fn data_config(&self, source: DataSource) -> DataConfig {
        let d = DataConfig::default();
        DataConfig {
            source,
            noise_sigma: self.noise_sigma.unwrap_or(d.noise_sigma),
            train_fraction: self.train_fraction.unwrap_or(d.train_fraction),
            stratified: !self.no_stratify,
            smote_k: if self.no_smote { None } else { self.smote_k.or(d.smote_k) },
        }
    }

    fn run_config(&self, model: ModelFamily, data: DataConfig, seed: u64) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::new(model, data, seed);
        let t = &mut cfg.train;
        t.epochs = self.epochs.unwrap_or(t.epochs);
        t.learning_rate = self.lr.unwrap_or(t.learning_rate);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.optimizer = self.optimizer.unwrap_or(t.optimizer);
        t.patience = self.patience.unwrap_or(t.patience);
        t.min_delta = self.min_delta.unwrap_or(t.min_delta);
        t.validate().map_err(usage)?;
        if let Some(f) = self.frame {
            cfg.family.frame = f;
        }
        cfg.latency_repeats = self.latency_repeats.unwrap_or(cfg.latency_repeats);
        if cfg.latency_repeats == 0 {
            return Err(CliError::Usage("latency repeats must be >= 1".into()));
        }
        let d = &cfg.data;
        if !(d.noise_sigma >= 0.0 && d.noise_sigma.is_finite()) {
            return Err(CliError::Usage(format!("noise sigma {} must be >= 0", d.noise_sigma)));
        }
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return Err(CliError::Usage(format!("train fraction {} must lie in (0, 1)", d.train_fraction)));
        }
        Ok(cfg)
    }
}

fn usage(e: beatbench_core::Error) -> CliError {
    CliError::Usage(CliError::core_message(&e).to_string())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Runtime(format!("stdout: {e}")))
}

fn write_run(dir: &Path, a: &RunArtifact) -> Result<(), CliError> {
    write_file(&dir.join(format!("{}.json", a.config.model)), &a.to_json())?;
    write_file(&dir.join(format!("{}_history.csv", a.config.model)), &history_csv(&a.history))
}

/// Execute a parsed command line, writing human-readable output to `out`.
pub fn run_cli(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let out_dir = cli.out_dir.unwrap_or_else(|| PathBuf::from("."));
    match cli.command {
        Command::Synth { per_class, output } => {
            if per_class == 0 {
                return Err(CliError::Usage("--per-class must be >= 1".into()));
            }
            let ds = synth_generate([per_class; NUM_CLASSES], cli.seed).map_err(CliError::from_core)?;
            let path = output.unwrap_or_else(|| out_dir.join("beats.csv"));
            write_file(&path, &to_csv(&ds))?;
            let mut text = format!("wrote {} beats to {}\n", ds.len(), path.display());
            for (class, n) in ds.class_histogram().iter().enumerate() {
                let _ = writeln!(text, "class {class}: {n}");
            }
            emit(out, &text)
        }
        Command::Train { model, data, replay, opts } => {
            let cfg = match replay {
                Some(p) => RunArtifact::read(&p)?.config,
                None => {
                    let (model, data) = (model.expect("clap enforces --model"), data.expect("clap enforces --data"));
                    opts.run_config(model, opts.data_config(data), cli.seed)?
                }
            };
            let prepared = prepare_data(&cfg.data, &cfg.seeds)?;
            let artifact = run_model(&cfg, &prepared)?;
            write_run(&out_dir, &artifact)?;
            emit(out, &comparison_table(std::slice::from_ref(&artifact)).render())
        }
        Command::Bench { models, data, opts } => {
            if models.is_empty() {
                return Err(CliError::Usage("select at least one model".into()));
            }
            let data_cfg = opts.data_config(data);
            let configs =
                models.iter().map(|&m| opts.run_config(m, data_cfg.clone(), cli.seed)).collect::<Result<Vec<_>, _>>()?;
            // Data seeds do not depend on the model, so one split serves all.
            let prepared = prepare_data(&data_cfg, &configs[0].seeds)?;
            let mut artifacts = Vec::with_capacity(configs.len());
            for cfg in &configs {
                let a = run_model(cfg, &prepared)?;
                write_file(&out_dir.join(format!("{}_history.csv", cfg.model)), &history_csv(&a.history))?;
                artifacts.push(a);
            }
            write_file(&out_dir.join("bench.json"), &artifacts_to_json(&artifacts))?;
            write_file(&out_dir.join("bench.csv"), &comparison_csv(&artifacts))?;
            let table = comparison_table(&artifacts).render();
            write_file(&out_dir.join("bench.txt"), &table)?;
            emit(out, &table)
        }
        Command::Macs { model, spec, mode, clock, array, efficiency, implementations } => {
            let mut rng = RngStream::new(cli.seed);
            let (name, net): (String, Sequential) = match (model, spec) {
                (Some(m), _) => (m.to_string(), m.build(&FamilyConfig::default(), &mut rng).map_err(CliError::from_core)?),
                (None, Some(s)) => {
                    let parsed: ModelSpec = s.parse().map_err(usage)?;
                    (parsed.to_string(), parsed.build(&mut rng).map_err(usage)?)
                }
                (None, None) => return Err(CliError::Usage("give --model or --spec".into())),
            };
            let text = macs_report(&name, &net, mode, clock, &array, efficiency, implementations)?;
            emit(out, &text)
        }
        Command::Report { artifacts, csv } => {
            if artifacts.is_empty() {
                return Err(CliError::Usage("no artifact files given".into()));
            }
            let mut all = Vec::new();
            for p in &artifacts {
                all.extend(read_artifacts(p)?);
            }
            write_file(&csv.unwrap_or_else(|| out_dir.join("report.csv")), &comparison_csv(&all))?;
            emit(out, &comparison_table(&all).render())
        }
    }
}

fn parse_array(s: &str) -> Result<u64, CliError> {
    let bad = || CliError::Usage(format!("--array `{s}` must look like 8x8"));
    let (r, c) = s.split_once('x').ok_or_else(bad)?;
    let (r, c): (u64, u64) = (r.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?);
    r.checked_mul(c).filter(|&n| n > 0).ok_or_else(bad)
}

fn macs_report(
    name: &str,
    net: &Sequential,
    mode: MacMode,
    clock: Option<f64>,
    array: &str,
    efficiency: f64,
    implementations: bool,
) -> Result<String, CliError> {
    let exact = net.layer_costs(CountMode::Exact);
    let formula = net.layer_costs(CountMode::Formula);
    let mut rows = Vec::new();
    for (e, f) in exact.iter().zip(&formula) {
        let kind = format!("{:?}", e.kind).to_lowercase();
        let mut r = vec![e.layer_id.clone(), kind];
        if mode != MacMode::Formula {
            r.push(e.macs.to_string());
        }
        if mode != MacMode::Exact {
            r.push(format!("{}{}", f.macs, if f.inexact { " *" } else { "" }));
        }
        rows.push(r);
    }
    let (te, tf) = (mac_total(&exact), mac_total(&formula));
    let mut total = vec!["total".to_string(), String::new()];
    if mode != MacMode::Formula {
        total.push(te.macs.to_string());
    }
    if mode != MacMode::Exact {
        total.push(tf.macs.to_string());
    }
    rows.push(total);
    let mut header = vec!["layer".to_string(), "kind".to_string()];
    if mode != MacMode::Formula {
        header.push("exact".into());
    }
    if mode != MacMode::Exact {
        header.push("formula".into());
    }
    let mut text = format!("model: {name}\nparameters: {}\n", net.param_count());
    text.push_str(&crate::table::Table { header, rows }.render());
    if formula.iter().any(|c| c.inexact) {
        text.push_str("* pool window does not divide the input; count floored\n");
    }
    if mode == MacMode::Both {
        let mut parts = Vec::new();
        for (e, f) in exact.iter().zip(&formula) {
            let d = f.macs as i128 - e.macs as i128;
            if d != 0 {
                parts.push(format!("{} {d:+}", e.layer_id));
            }
        }
        parts.push(format!("total {:+}", tf.macs as i128 - te.macs as i128));
        let _ = writeln!(text, "formula - exact: {}", parts.join(", "));
    }
    let primary = if mode == MacMode::Formula { tf.macs } else { te.macs };
    if let Some(hz) = clock {
        let per_cycle = parse_array(array)?;
        let spec = AcceleratorSpec { name: format!("{array} array"), clock_hz: hz, macs_per_cycle: per_cycle };
        let lat = estimate_accelerator_latency(primary, &spec, efficiency).map_err(usage)?;
        let _ = writeln!(
            text,
            "estimated latency: {lat:.6e} s ({primary} MACs, {array} array, {}, efficiency {efficiency})",
            beatbench_core::cost::format_clock(hz)
        );
    }
    if implementations {
        let mine = ImplementationRow {
            label: name.to_string(),
            input_samples: Some(net.input_shape().iter().product::<usize>().to_string()),
            macs: Some(primary),
            clock_hz: clock,
            ..Default::default()
        };
        text.push('\n');
        text.push_str(&implementation_table(&[ImplementationRow::reference_scenario(), mine]).render());
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> Result<String, CliError> {
        let cli = Cli::try_parse_from(std::iter::once("beatbench").chain(args.iter().copied()))
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let mut out = Vec::new();
        run_cli(cli, &mut out)?;
        Ok(String::from_utf8(out).unwrap())
    }

    #[test]
    fn toy_spec_totals() {
        let text = run(&["macs", "--spec", "input=28x28;conv=8x3x3;pool=2x2;fc=5"]).unwrap();
        let total = text.lines().find(|l| l.starts_with("total")).unwrap();
        let exact = 8 * 9 * 26 * 26 + 8 * 13 * 13 + 8 * 13 * 13 * 5;
        let formula = 8 * 9 * 784 + 169 + 8 * 13 * 13 * 5;
        assert!(total.contains(&exact.to_string()) && total.contains(&formula.to_string()), "{total}");
        assert!(text.contains(&format!("1:conv2d +{}", 8 * 9 * (784 - 676))), "{text}");
    }

    #[test]
    fn accelerator_line_needs_clock() {
        let base = ["macs", "--model", "cnn"];
        assert!(!run(&base).unwrap().contains("estimated latency"));
        let with = run(&[&base[..], &["--clock", "100e6", "--array", "8x8"]].concat()).unwrap();
        assert!(with.contains("estimated latency"));
        assert!(run(&[&base[..], &["--clock", "100e6", "--array", "8"]].concat()).is_err());
    }

    #[test]
    fn implementation_table_prints_reference() {
        let text = run(&["macs", "--model", "cnn", "--implementations"]).unwrap();
        assert!(text.contains("47,560") && text.contains("100 MHz") && text.contains("1.53 W"));
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(&["macs", "--spec", "input=0"]).unwrap_err().exit_code(), 1);
        assert_eq!(run(&["report"]).unwrap_err().exit_code(), 1);
        assert_eq!(run(&["synth", "--per-class", "0"]).unwrap_err().exit_code(), 1);
        assert_eq!(run(&["train", "--model", "cnn"]).unwrap_err().exit_code(), 1);
        assert_eq!(run(&["train", "--model", "cnn", "--data", "synth:5", "--lr", "0"]).unwrap_err().exit_code(), 1);
    }
}
