//! Run configuration: a flat `key = value` file whose keys mirror the
//! command-line flags. Flags override the file.

use std::fmt::Write as _;
use std::path::PathBuf;

use sbic::{LambdaGrid, LambdaMode, LinkFunction, LinkKind, PipelineConfig, SolverConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub label_column: String,
    pub seed: u64,
    /// Majority clusters; `None` follows the default rule.
    pub clusters: Option<usize>,
    pub members: usize,
    /// Absent points per member; `None` uses the input dimension.
    pub absent: Option<usize>,
    pub folds: usize,
    pub lambda1_grid: Vec<f64>,
    pub lambda2_grid: Vec<f64>,
    pub esf: bool,
    pub threshold: f64,
    pub link: LinkKind,
    pub clamp_epsilon: f64,
    pub max_iterations: usize,
    pub residual_tolerance: f64,
    pub step_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grid = LambdaGrid::default();
        let pipeline = PipelineConfig::default();
        RunConfig {
            data: None,
            label_column: "label".into(),
            seed: 0,
            clusters: None,
            members: pipeline.members,
            absent: None,
            folds: 5,
            lambda1_grid: grid.lambda1,
            lambda2_grid: grid.lambda2,
            esf: false,
            threshold: 0.5,
            link: pipeline.link.kind,
            clamp_epsilon: pipeline.link.clamp_epsilon,
            max_iterations: pipeline.solver.max_iterations,
            residual_tolerance: pipeline.solver.residual_tolerance,
            step_tolerance: pipeline.solver.step_tolerance,
        }
    }
}

fn bad(key: &str, value: &str) -> CliError {
    CliError::Usage(format!("invalid value `{value}` for `{key}`"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| bad(key, value))
}

fn auto<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>, CliError> {
    if value.trim() == "auto" {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .map(|v| num::<f64>(key, v))
        .collect()
}

fn show_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn show_auto<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "label_column" => self.label_column = value.to_string(),
            "seed" => self.seed = num(key, value)?,
            "K" => self.clusters = auto(key, value)?,
            "U" => self.members = num(key, value)?,
            "T" => self.absent = auto(key, value)?,
            "folds" => self.folds = num(key, value)?,
            "lambda1_grid" => self.lambda1_grid = parse_list(key, value)?,
            "lambda2_grid" => self.lambda2_grid = parse_list(key, value)?,
            "esf" => self.esf = num(key, value)?,
            "threshold" => self.threshold = num(key, value)?,
            "link" => {
                self.link = LinkKind::from_name(value).map_err(|e| CliError::Usage(e.to_string()))?
            }
            "clamp_epsilon" => self.clamp_epsilon = num(key, value)?,
            "max_iterations" => self.max_iterations = num(key, value)?,
            "residual_tolerance" => self.residual_tolerance = num(key, value)?,
            "step_tolerance" => self.step_tolerance = num(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(d) = &self.data {
            writeln!(s, "data = {}", d.display()).unwrap();
        }
        writeln!(s, "label_column = {}", self.label_column).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "K = {}", show_auto(self.clusters)).unwrap();
        writeln!(s, "U = {}", self.members).unwrap();
        writeln!(s, "T = {}", show_auto(self.absent)).unwrap();
        writeln!(s, "folds = {}", self.folds).unwrap();
        writeln!(s, "lambda1_grid = {}", show_list(&self.lambda1_grid)).unwrap();
        writeln!(s, "lambda2_grid = {}", show_list(&self.lambda2_grid)).unwrap();
        writeln!(s, "esf = {}", self.esf).unwrap();
        writeln!(s, "threshold = {:?}", self.threshold).unwrap();
        writeln!(s, "link = {}", self.link.name()).unwrap();
        writeln!(s, "clamp_epsilon = {:?}", self.clamp_epsilon).unwrap();
        writeln!(s, "max_iterations = {}", self.max_iterations).unwrap();
        writeln!(s, "residual_tolerance = {:?}", self.residual_tolerance).unwrap();
        writeln!(s, "step_tolerance = {:?}", self.step_tolerance).unwrap();
        s
    }

    pub fn data_path(&self) -> Result<&PathBuf, CliError> {
        self.data
            .as_ref()
            .ok_or_else(|| CliError::Usage("no data file given (use --data or a config file)".into()))
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, CliError> {
        let grid = LambdaGrid::new(self.lambda1_grid.clone(), self.lambda2_grid.clone())
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let solver = SolverConfig {
            max_iterations: self.max_iterations,
            residual_tolerance: self.residual_tolerance,
            step_tolerance: self.step_tolerance,
            seed: 0,
        };
        solver.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.members == 0 {
            return Err(CliError::Usage("U must be at least 1".into()));
        }
        if self.clusters == Some(0) {
            return Err(CliError::Usage("K must be at least 1".into()));
        }
        if !(self.clamp_epsilon > 0.0 && self.clamp_epsilon < 0.5) {
            return Err(CliError::Usage("clamp_epsilon must lie in (0, 0.5)".into()));
        }
        Ok(PipelineConfig {
            clusters: self.clusters,
            members: self.members,
            absent_count: self.absent,
            lambda: LambdaMode::Grid(grid),
            esf: self.esf,
            link: LinkFunction {
                kind: self.link,
                clamp_epsilon: self.clamp_epsilon,
            },
            solver,
        })
    }
}
