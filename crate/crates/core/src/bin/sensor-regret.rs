use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sensor_regret::eval::ExperimentReport;
use sensor_regret::lab::{read_feature_file, write_feature_file, FeatureFile, RidgeRegressor, SampleMeta, Tap};
use sensor_regret::monitor::{decision_header, r2_of, write_decision, Monitor, MonitorSummary, StreamSample};
use sensor_regret::pipeline::{
    calibrate, extract_split, fit_extractor, fit_ridge, run_bench, score_split, stream_samples, train_vae, LabConfig,
    Split,
};
use sensor_regret::regret::{read_scores_csv, score_lr_detailed, write_scores_csv};
use sensor_regret::vae::{read_checkpoint, write_checkpoint};
use sensor_regret::zo::ZoMethod;

#[derive(Parser)]
#[command(name = "sensor-regret", version, about = "Likelihood-regret trust scoring for sensor feature streams")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML experiment config; flags given on the command line override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Fixed-point format for scoring, e.g. Q16.16.
    #[arg(long, global = true)]
    fixed_point: Option<String>,
    #[arg(long, global = true)]
    optimizer: Option<ZoMethod>,
    #[arg(long, global = true)]
    iterations: Option<usize>,
    #[arg(long, global = true)]
    tap: Option<Tap>,
    #[arg(long, global = true)]
    fusion: Option<Fusion>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fusion {
    Off,
    Concat,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Calib,
    Test,
    Stream,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Calib => Split::Calib,
            SplitArg::Test => Split::Test,
            SplitArg::Stream => Split::Stream,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the sample plan of every split.
    GenData,
    /// Fit the point-set extractor and write feature files for every planned split.
    Extract,
    /// Train the VAE and the downstream ridge regressor on the train features.
    TrainVae,
    /// Score a split's features by likelihood regret.
    Score {
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Also write the optimizer trace of this sample index.
        #[arg(long)]
        trace: Option<usize>,
    },
    /// Tabulate AUCs, ROC curves and histograms from a scores CSV.
    Evaluate {
        /// Defaults to <out>/scores_test.csv.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Gate the stream split on a calibrated LR threshold.
    Monitor {
        /// Skip calibration and use this threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Run extract, train, score and evaluate in memory.
    Bench,
}

/// Machine-parsable failure: `error: kind=<kind> path=<path> msg=<msg>`.
struct CliError {
    kind: &'static str,
    path: Option<PathBuf>,
    msg: String,
}

impl CliError {
    fn new(kind: &'static str, msg: impl fmt::Display) -> Self {
        CliError { kind, path: None, msg: msg.to_string() }
    }

    fn at(kind: &'static str, path: &Path, msg: impl fmt::Display) -> Self {
        CliError { kind, path: Some(path.to_path_buf()), msg: msg.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error: kind={}", self.kind)?;
        if let Some(p) = &self.path {
            write!(f, " path={}", p.display())?;
        }
        write!(f, " msg={}", self.msg.replace('\n', " "))
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::at("missing_input", path, "no such file"))
    }
}

fn read_text(path: &Path) -> Result<String> {
    require(path)?;
    fs::read_to_string(path).map_err(|e| CliError::at("io", path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::at("io", path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::at("io", path, e))?;
    write_text(path, &(text + "\n"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::at("parse", path, e))
}

fn resolve_config(g: &Global) -> Result<LabConfig> {
    let mut cfg = match &g.config {
        Some(path) => LabConfig::from_toml(&read_text(path)?).map_err(|e| CliError::at("config", path, e))?,
        None => LabConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(f) = &g.fixed_point {
        cfg.scoring.fixed_point = Some(f.clone());
    }
    if let Some(m) = g.optimizer {
        cfg.scoring.optimizer = m;
    }
    if let Some(t) = g.iterations {
        cfg.scoring.iterations = t;
    }
    if let Some(t) = g.tap {
        cfg.tap = t;
    }
    if let Some(f) = g.fusion {
        cfg.fusion = matches!(f, Fusion::Concat);
    }
    // surface bad optimizer or fixed-point settings before any work is done
    cfg.score_settings().map_err(|e| CliError::new("config", e))?;
    Ok(cfg)
}

struct Paths(PathBuf);

impl Paths {
    fn plan(&self, s: Split) -> PathBuf {
        self.0.join(format!("plan_{}.json", s.name()))
    }
    fn features(&self, s: Split) -> PathBuf {
        self.0.join(format!("{}.lrft", s.name()))
    }
    fn scores(&self, s: Split) -> PathBuf {
        self.0.join(format!("scores_{}.csv", s.name()))
    }
    fn extractor(&self) -> PathBuf {
        self.0.join("extractor.json")
    }
    fn vae(&self) -> PathBuf {
        self.0.join("vae.ckpt")
    }
    fn ridge(&self) -> PathBuf {
        self.0.join("ridge.json")
    }
    fn report(&self) -> PathBuf {
        self.0.join("report")
    }
}

fn load_features(path: &Path) -> Result<FeatureFile> {
    require(path)?;
    read_feature_file(path).map_err(|e| CliError::at("features", path, e))
}

fn load_vae(paths: &Paths) -> Result<sensor_regret::vae::VaeParams> {
    let path = paths.vae();
    require(&path)?;
    read_checkpoint(&path).map_err(|e| CliError::at("checkpoint", &path, e))
}

fn gen_data(cfg: &LabConfig, paths: &Paths) -> Result<()> {
    for split in Split::ALL {
        let plan = sensor_regret::pipeline::plan_split(cfg, split);
        write_json(&paths.plan(split), &plan)?;
    }
    write_text(&paths.0.join("config.toml"), &cfg.to_toml())
}

fn extract(cfg: &LabConfig, paths: &Paths) -> Result<()> {
    let plans: Vec<(Split, Vec<SampleMeta>)> =
        Split::ALL.iter().map(|&s| Ok((s, read_json(&paths.plan(s))?))).collect::<Result<_>>()?;
    let (extractor, _) = fit_extractor(cfg).map_err(|e| CliError::new("extract", e))?;
    write_json(&paths.extractor(), &extractor)?;
    for (split, meta) in plans {
        let path = paths.features(split);
        let features = extract_split(&extractor, &meta).map_err(|e| CliError::at("extract", &path, e))?;
        let vectors: Vec<_> = features.iter().map(|f| f.vector(cfg.tap, cfg.fusion)).collect();
        let file = FeatureFile::from_vectors(&vectors, meta).map_err(|e| CliError::at("extract", &path, e))?;
        write_feature_file(&path, &file).map_err(|e| CliError::at("io", &path, e))?;
    }
    Ok(())
}

fn train(cfg: &LabConfig, paths: &Paths) -> Result<()> {
    let train = load_features(&paths.features(Split::Train))?;
    let outcome = train_vae(cfg, &train.rows).map_err(|e| CliError::new("train", e))?;
    write_checkpoint(&outcome.params, &paths.vae()).map_err(|e| CliError::at("io", &paths.vae(), e))?;
    let ridge = fit_ridge(cfg, &train.rows, &train.meta).map_err(|e| CliError::new("train", e))?;
    write_json(&paths.ridge(), &ridge)?;
    let curve: String = outcome.loss_curve.iter().enumerate().map(|(i, l)| format!("{},{l}\n", i + 1)).collect();
    write_text(&paths.0.join("vae_loss.csv"), &format!("epoch,neg_elbo\n{curve}"))
}

fn score(cfg: &LabConfig, paths: &Paths, split: Split, trace: Option<usize>) -> Result<()> {
    let params = load_vae(paths)?;
    let features = load_features(&paths.features(split))?;
    let records =
        score_split(cfg, &params, &features.rows, &features.meta, split).map_err(|e| CliError::new("score", e))?;
    let path = paths.scores(split);
    let file = fs::File::create(&path).map_err(|e| CliError::at("io", &path, e))?;
    write_scores_csv(BufWriter::new(file), &records).map_err(|e| CliError::at("io", &path, e))?;
    if let Some(i) = trace {
        let x = features.rows.get(i).ok_or_else(|| CliError::new("usage", format!("trace index {i} out of range")))?;
        let mut settings = cfg.score_settings().map_err(|e| CliError::new("config", e))?;
        let seed = cfg.score_seed(split).wrapping_add(i as u64);
        settings.zo.seed = seed;
        let (_, result) = score_lr_detailed(&params, x, &settings, seed).map_err(|e| CliError::new("score", e))?;
        let path = paths.0.join(format!("trace_{}_{i}.csv", split.name()));
        let file = fs::File::create(&path).map_err(|e| CliError::at("io", &path, e))?;
        result.write_trace_csv(BufWriter::new(file)).map_err(|e| CliError::at("io", &path, e))?;
    }
    Ok(())
}

fn evaluate(cfg: &LabConfig, paths: &Paths, scores: Option<PathBuf>) -> Result<()> {
    let path = scores.unwrap_or_else(|| paths.scores(Split::Test));
    require(&path)?;
    let file = fs::File::open(&path).map_err(|e| CliError::at("io", &path, e))?;
    let records = read_scores_csv(BufReader::new(file)).map_err(|e| CliError::at("parse", &path, e))?;
    let report = ExperimentReport::from_records(records, cfg.fingerprint()).map_err(|e| CliError::at("evaluate", &path, e))?;
    report.write(&paths.report()).map_err(|e| CliError::new("io", e))
}

#[derive(Serialize)]
struct MonitorReport {
    #[serde(flatten)]
    summary: MonitorSummary,
    /// Regressor R² on the clean part of the stream.
    r2_clean: Option<f64>,
}

fn monitor(cfg: &LabConfig, paths: &Paths, threshold: Option<f64>) -> Result<()> {
    let params = load_vae(paths)?;
    let ridge: RidgeRegressor = read_json(&paths.ridge())?;
    let stream = load_features(&paths.features(Split::Stream))?;
    let threshold = match threshold {
        Some(t) => t,
        None => {
            let calib = load_features(&paths.features(Split::Calib))?;
            calibrate(cfg, &params, &calib.rows, &calib.meta).map_err(|e| CliError::new("calibrate", e))?
        }
    };
    let samples = stream_samples(&stream.rows, &stream.meta);
    let clean: Vec<StreamSample> =
        samples.iter().zip(&stream.meta).filter(|(_, m)| m.corruption.is_none()).map(|(s, _)| s.clone()).collect();
    let r2_clean = if clean.is_empty() { None } else { r2_of(&ridge, &clean).ok() };

    let settings = cfg.score_settings().map_err(|e| CliError::new("config", e))?;
    let m = Monitor { vae: &params, regressor: &ridge, settings, threshold, window: 64, base_seed: cfg.score_seed(Split::Stream) };
    let path = paths.0.join("decisions.csv");
    let file = fs::File::create(&path).map_err(|e| CliError::at("io", &path, e))?;
    let mut w = BufWriter::new(file);
    let k = ridge.output_dim;
    let mut failed = None;
    let _ = writeln!(w, "{}", decision_header(k)).map_err(|e| failed = Some(e));
    let summary = m.run(samples, |d| {
        if failed.is_none() {
            if let Err(e) = write_decision(&mut w, d, k) {
                failed = Some(e);
            }
        }
    });
    if let Some(e) = failed.or_else(|| w.flush().err()) {
        return Err(CliError::at("io", &path, e));
    }
    write_json(&paths.0.join("monitor_summary.json"), &MonitorReport { summary, r2_clean })
}

fn bench(cfg: &LabConfig, paths: &Paths) -> Result<()> {
    let out = run_bench(cfg).map_err(|e| CliError::new("bench", e))?;
    out.report.write(&paths.report()).map_err(|e| CliError::new("io", e))?;
    print!("{}", out.report.auc_table_csv());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    let paths = Paths(cli.global.out.clone());
    fs::create_dir_all(&paths.0).map_err(|e| CliError::at("io", &paths.0, e))?;
    match cli.command {
        Command::GenData => gen_data(&cfg, &paths),
        Command::Extract => extract(&cfg, &paths),
        Command::TrainVae => train(&cfg, &paths),
        Command::Score { split, trace } => score(&cfg, &paths, split.into(), trace),
        Command::Evaluate { scores } => evaluate(&cfg, &paths, scores),
        Command::Monitor { threshold } => monitor(&cfg, &paths, threshold),
        Command::Bench => bench(&cfg, &paths),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("bad arguments");
            eprintln!("{}", CliError::new("usage", first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
