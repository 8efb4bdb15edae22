//! Command-line front end for the `sbic` library.

pub mod config;
pub mod error;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sbic::data::{load_features, write_atomic, write_csv};
use sbic::eval::{auc_table_to_csv, parse_auc_table, pivot_auc_table, AucRecord};
use sbic::{
    cross_validate, friedman_statistic, generate_toy, load_csv, rank_matrix, Classifier, LambdaMode, Toy,
};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "sbic", version, about = "Similarity-based imbalanced classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write one of the synthetic toy datasets as CSV.
    Toy {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        which: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an ensemble and save it.
    Fit {
        #[command(flatten)]
        run: RunFlags,
        /// Model file; the effective configuration goes to `<out>.config`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a CSV file with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also emit hard labels, 1 when the score exceeds this value.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value = "label")]
        label_column: String,
    },
    /// Stratified cross validation with ROC output.
    Cv {
        #[command(flatten)]
        run: RunFlags,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated AUC over a lattice of fixed coefficients.
    LambdaSweep {
        #[command(flatten)]
        run: RunFlags,
        /// `start:stop:count`, or a single value.
        #[arg(long, default_value = "0:4:5")]
        lambda1_range: String,
        #[arg(long, default_value = "0:11:12")]
        lambda2_range: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank means and the Friedman statistic of an AUC table.
    Friedman {
        /// CSV with columns dataset, fold, algorithm, auc.
        #[arg(long)]
        table: PathBuf,
    },
}

/// Flags shared by the training commands. Each overrides the config file.
#[derive(Args, Debug, Default, Clone)]
pub struct RunFlags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Majority clusters, or `auto`.
    #[arg(long = "K")]
    pub clusters: Option<String>,
    /// Ensemble members.
    #[arg(long = "U")]
    pub members: Option<usize>,
    /// Absent points per member, or `auto`.
    #[arg(long = "T")]
    pub absent: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Comma-separated candidates.
    #[arg(long)]
    pub lambda1_grid: Option<String>,
    #[arg(long)]
    pub lambda2_grid: Option<String>,
    /// Similarity-only classifier: zero coefficients, no absent points.
    #[arg(long)]
    pub esf: bool,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl RunFlags {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| sbic::Error::Io {
                path: path.clone(),
                source: e,
            })?;
            cfg.apply_text(&text)?;
        }
        let mut set = |key: &str, v: Option<String>| match v {
            Some(v) => cfg.set(key, &v),
            None => Ok(()),
        };
        set("data", self.data.as_ref().map(|p| p.display().to_string()))?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("K", self.clusters.clone())?;
        set("U", self.members.map(|v| v.to_string()))?;
        set("T", self.absent.clone())?;
        set("folds", self.folds.map(|v| v.to_string()))?;
        set("lambda1_grid", self.lambda1_grid.clone())?;
        set("lambda2_grid", self.lambda2_grid.clone())?;
        set("esf", self.esf.then(|| "true".to_string()))?;
        set("label_column", self.label_column.clone())?;
        set("threshold", self.threshold.map(|v| format!("{v:?}")))?;
        Ok(cfg)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    sbic::Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
    .into()
}

/// `start:stop:count` evenly spaced values, or a single number.
pub fn parse_range(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("invalid range `{spec}`, expected start:stop:count"));
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let values = match parts.as_slice() {
        [v] => vec![v.parse().map_err(|_| bad())?],
        [a, b, n] => {
            let (a, b): (f64, f64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            let n: usize = n.parse().map_err(|_| bad())?;
            match n {
                0 => return Err(bad()),
                1 if a == b => vec![a],
                1 => return Err(bad()),
                _ => (0..n)
                    .map(|i| if i == n - 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
                    .collect(),
            }
        }
        _ => return Err(bad()),
    };
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(CliError::Usage(format!("range `{spec}` must be finite and nonnegative")));
    }
    Ok(values)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Toy { which, seed, out } => {
            let data = generate_toy(Toy::from_index(which)?, seed);
            write_csv(&data, &out)?;
            println!("wrote {} rows to {}", data.len(), out.display());
            Ok(())
        }
        Command::Fit { run, out } => cmd_fit(&run.resolve()?, &out),
        Command::Predict {
            model,
            data,
            out,
            threshold,
            label_column,
        } => cmd_predict(&model, &data, &out, threshold, &label_column),
        Command::Cv { run, out } => cmd_cv(&run.resolve()?, &out),
        Command::LambdaSweep {
            run,
            lambda1_range,
            lambda2_range,
            out,
        } => cmd_lambda_sweep(&run.resolve()?, &parse_range(&lambda1_range)?, &parse_range(&lambda2_range)?, &out),
        Command::Friedman { table } => {
            let text = std::fs::read_to_string(&table).map_err(|e| io_err(&table, e))?;
            print!("{}", cmd_friedman(&text)?);
            Ok(())
        }
    }
}

fn config_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".config");
    out.with_file_name(name)
}

pub fn cmd_fit(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let data = load_csv(cfg.data_path()?, &cfg.label_column)?;
    let pipeline = cfg.pipeline()?;
    let clf = Classifier::fit(&data, &pipeline, cfg.seed)?;
    write_text(out, &clf.to_text())?;
    write_text(&config_path(out), &cfg.to_text())?;

    let ens = &clf.ensemble;
    println!("members {} (K = {})", ens.members.len(), ens.clustering.k());
    for (l, m) in ens.members.iter().enumerate() {
        let p = &m.model.penalty;
        let d = &m.model.diagnostics;
        println!(
            "member {l}: {} lambda1={} lambda2={} Delta={:.6} delta={:.6} R={:.6} residual={:.3e} iterations={} converged={}",
            if m.esf { "ESF" } else { "SBIC" },
            p.lambda1,
            p.lambda2,
            p.minority_threshold,
            p.majority_threshold,
            m.r_value,
            d.residual_norm,
            d.iterations,
            d.converged,
        );
        if !d.converged {
            eprintln!("warning: member {l} did not converge");
        }
        if m.all_cells_failed {
            eprintln!("warning: member {l}: no grid cell converged, kept the smallest residual");
        }
    }
    if ens.members.len() < cfg.members {
        eprintln!(
            "warning: {} of {} members failed to train",
            cfg.members - ens.members.len(),
            cfg.members
        );
    }
    Ok(())
}

pub fn cmd_predict(
    model: &Path,
    data: &Path,
    out: &Path,
    threshold: Option<f64>,
    label_column: &str,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(model).map_err(|e| io_err(model, e))?;
    let clf = Classifier::parse(&text)?;
    let points = load_features(data, label_column)?;
    let scores = clf.predict_all(&points)?;
    let mut s = String::new();
    if !scores.is_empty() {
        s.push_str(if threshold.is_some() { "score,predicted\n" } else { "score\n" });
        for v in &scores {
            match threshold {
                Some(t) => writeln!(s, "{v:?},{}", u8::from(*v > t)).unwrap(),
                None => writeln!(s, "{v:?}").unwrap(),
            }
        }
    }
    write_text(out, &s)
}

fn dataset_name(cfg: &RunConfig) -> String {
    cfg.data
        .as_ref()
        .and_then(|p| p.file_stem())
        .map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
}

/// Writes `fold_<f>_roc.csv`, `average_roc.csv`, `auc.csv`, `summary.txt`
/// and `config.txt` into `out`.
pub fn cmd_cv(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let data = load_csv(cfg.data_path()?, &cfg.label_column)?;
    let pipeline = cfg.pipeline()?;
    let report = cross_validate(&data, cfg.folds, &pipeline, cfg.seed)?;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let algorithm = if cfg.esf { "ESF" } else { "SBIC" };
    let name = dataset_name(cfg);
    let mut records = Vec::new();
    for f in &report.folds {
        write_text(&out.join(format!("fold_{}_roc.csv", f.fold)), &f.curve.to_csv())?;
        records.push(AucRecord {
            dataset: name.clone(),
            fold: f.fold,
            algorithm: algorithm.into(),
            auc: f.auc,
        });
        println!("fold {}: AUC {:.4}", f.fold, f.auc);
        if f.unconverged_members > 0 {
            eprintln!("warning: fold {}: {} unconverged members", f.fold, f.unconverged_members);
        }
    }
    write_text(&out.join("average_roc.csv"), &report.average_curve.to_csv())?;
    write_text(&out.join("auc.csv"), &auc_table_to_csv(&records))?;
    write_text(&out.join("summary.txt"), &format!("{}\n", report.summary()))?;
    write_text(&out.join("config.txt"), &cfg.to_text())?;
    println!("AUC {}", report.summary());
    Ok(())
}

pub fn cmd_lambda_sweep(cfg: &RunConfig, lambda1: &[f64], lambda2: &[f64], out: &Path) -> Result<(), CliError> {
    let data = load_csv(cfg.data_path()?, &cfg.label_column)?;
    let base = cfg.pipeline()?;
    let mut s = String::from("lambda1,lambda2,auc\n");
    for &a in lambda1 {
        for &b in lambda2 {
            let pipeline = sbic::PipelineConfig {
                lambda: LambdaMode::Fixed { lambda1: a, lambda2: b },
                ..base.clone()
            };
            let report = cross_validate(&data, cfg.folds, &pipeline, cfg.seed)?;
            writeln!(s, "{a:?},{b:?},{:?}", report.mean_auc).unwrap();
            println!("lambda1={a} lambda2={b}: AUC {}", report.summary());
        }
    }
    write_text(out, &s)
}

pub fn cmd_friedman(table_csv: &str) -> Result<String, CliError> {
    let pivot = pivot_auc_table(&parse_auc_table(table_csv)?)?;
    let ranks = rank_matrix(&pivot.table)?;
    let f = friedman_statistic(&ranks.column_means, pivot.rows.len())?;
    let mut s = String::from("algorithm,rank_mean\n");
    for (a, q) in pivot.algorithms.iter().zip(&ranks.column_means) {
        writeln!(s, "{a},{q:?}").unwrap();
    }
    writeln!(s, "test sets: {}", pivot.rows.len()).unwrap();
    writeln!(s, "F: {f:?}").unwrap();
    Ok(s)
}
