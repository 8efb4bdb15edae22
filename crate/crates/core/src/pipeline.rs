//! End-to-end classifier: input normalization followed by the undersampling
//! ensemble, plus its text persistence.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::data::{normalize, LabeledDataset};
use crate::ensemble::{self, ClusterAssignment, Member, PipelineConfig, SbicEnsemble};
use crate::error::{Error, Result};
use crate::lambda_search::Thresholds;
use crate::model::{parse_num, parse_vec, ModelDocument, SolveDiagnostics};
use crate::similarity::Point;

pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

/// A trained ensemble together with the input scaling learned from its
/// training data. Predictions take raw (unscaled) points.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub input_scale: f64,
    pub ensemble: SbicEnsemble,
}

impl Classifier {
    pub fn fit(data: &LabeledDataset, cfg: &PipelineConfig, seed: u64) -> Result<Self> {
        let (scaled, input_scale) = normalize(data);
        let ensemble = ensemble::train_ensemble(&scaled, cfg, seed)?;
        Ok(Classifier {
            input_scale,
            ensemble,
        })
    }

    pub fn dim(&self) -> usize {
        self.ensemble.dim()
    }

    pub fn predict(&self, x: &Point) -> Result<f64> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        ensemble::ensemble_predict(&self.ensemble, &x.scaled(self.input_scale))
    }

    pub fn predict_all(&self, xs: &[Point]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// Container document: header, clustering, then one block per member
    /// holding its training rows and model document.
    pub fn to_text(&self) -> String {
        let ens = &self.ensemble;
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut s = String::new();
        writeln!(s, "sbic-ensemble {ENSEMBLE_FORMAT_VERSION}").unwrap();
        writeln!(s, "scale {:?}", self.input_scale).unwrap();
        writeln!(s, "seed {}", ens.seed).unwrap();
        writeln!(s, "members {}", ens.members.len()).unwrap();
        writeln!(s, "priors {}", join(&ens.priors)).unwrap();
        writeln!(s, "K {}", ens.clustering.k()).unwrap();
        for c in &ens.clustering.centroids {
            writeln!(s, "centroid {}", join(c.as_slice())).unwrap();
        }
        let memberships: Vec<String> = ens.clustering.memberships.iter().map(|m| m.to_string()).collect();
        writeln!(s, "memberships {}", memberships.join(" ")).unwrap();
        for (l, m) in ens.members.iter().enumerate() {
            let d = &m.model.diagnostics;
            writeln!(s, "member {l}").unwrap();
            writeln!(s, "esf {}", m.esf).unwrap();
            writeln!(s, "converged {}", d.converged).unwrap();
            writeln!(s, "restarted {}", d.restarted).unwrap();
            writeln!(s, "iterations {}", d.iterations).unwrap();
            writeln!(s, "residual_norm {:?}", d.residual_norm).unwrap();
            writeln!(s, "residual_inf_norm {:?}", d.residual_inf_norm).unwrap();
            writeln!(s, "initial_residual_norm {:?}", d.initial_residual_norm).unwrap();
            writeln!(s, "r_value {:?}", m.r_value).unwrap();
            writeln!(s, "all_cells_failed {}", m.all_cells_failed).unwrap();
            let data = m.data();
            writeln!(s, "rows {}", data.len()).unwrap();
            for i in 0..data.len() {
                writeln!(s, "row {} {}", data.label(i), join(data.input(i).as_slice())).unwrap();
            }
            s.push_str(&ModelDocument::from_model(&m.model).to_text());
            writeln!(s, "end").unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Reader(text.lines().map(str::trim).filter(|l| !l.is_empty()));
        let mut next = |key: &str| r.field(key);
        let version: u32 = parse_num(&next("sbic-ensemble")?, "version")?;
        if version != ENSEMBLE_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported ensemble version {version}")));
        }
        let input_scale: f64 = parse_num(&next("scale")?, "scale")?;
        let seed: u64 = parse_num(&next("seed")?, "seed")?;
        let u: usize = parse_num(&next("members")?, "member count")?;
        if u == 0 {
            return Err(Error::Format("ensemble has no members".into()));
        }
        let priors = parse_vec(&next("priors")?, u, "priors")?;
        let k: usize = parse_num(&next("K")?, "K")?;
        let mut centroids = Vec::with_capacity(k);
        let mut p = None;
        for _ in 0..k {
            let raw = next("centroid")?;
            let dim = raw.split_whitespace().count();
            centroids.push(Point::new(parse_vec(&raw, *p.get_or_insert(dim), "centroid")?)?);
        }
        let memberships = next("memberships")?
            .split_whitespace()
            .map(|v| parse_num::<usize>(v, "membership"))
            .collect::<Result<Vec<_>>>()?;
        if memberships.iter().any(|&m| m >= k) {
            return Err(Error::Format("membership refers to a missing cluster".into()));
        }

        let mut members = Vec::with_capacity(u);
        for l in 0..u {
            let index: usize = parse_num(&next("member")?, "member index")?;
            if index != l {
                return Err(Error::Format(format!("expected member {l}, found {index}")));
            }
            let flag = |raw: String, what: &str| parse_num::<bool>(&raw, what);
            let esf = flag(next("esf")?, "esf flag")?;
            let converged = flag(next("converged")?, "converged flag")?;
            let restarted = flag(next("restarted")?, "restarted flag")?;
            let iterations = parse_num(&next("iterations")?, "iteration count")?;
            let residual_norm = parse_num(&next("residual_norm")?, "residual norm")?;
            let residual_inf_norm = parse_num(&next("residual_inf_norm")?, "residual norm")?;
            let initial_residual_norm = parse_num(&next("initial_residual_norm")?, "residual norm")?;
            let r_value = parse_num(&next("r_value")?, "objective value")?;
            let all_cells_failed = flag(next("all_cells_failed")?, "failure flag")?;
            let n: usize = parse_num(&next("rows")?, "row count")?;
            let mut inputs = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let raw = next("row")?;
                let (label, coords) = raw.split_once(' ').unwrap_or((&raw, ""));
                labels.push(parse_num::<u8>(label, "label")?);
                let dim = coords.split_whitespace().count();
                inputs.push(Point::new(parse_vec(coords, *p.get_or_insert(dim), "row")?)?);
            }
            let data = Arc::new(LabeledDataset::new(inputs, labels)?);
            let mut doc = String::new();
            loop {
                let line = next("")?;
                if line == "end" {
                    break;
                }
                doc.push_str(&line);
                doc.push('\n');
            }
            let diagnostics = SolveDiagnostics {
                residual_norm,
                residual_inf_norm,
                initial_residual_norm,
                iterations,
                converged,
                restarted,
            };
            let model = ModelDocument::parse(&doc)?.into_model(data, diagnostics)?;
            let thresholds = (!esf).then_some(Thresholds {
                minority: model.penalty.minority_threshold,
                majority: model.penalty.majority_threshold,
                minority_degenerate: false,
                majority_degenerate: false,
            });
            members.push(Member {
                model,
                esf,
                thresholds,
                r_value,
                cells: Vec::new(),
                all_cells_failed,
            });
        }
        let ensemble = SbicEnsemble {
            members,
            priors: vec![1.0 / u as f64; u],
            clustering: ClusterAssignment {
                centroids,
                memberships,
            },
            seed,
        }
        .with_priors(priors)?;
        Ok(Classifier {
            input_scale,
            ensemble,
        })
    }
}

struct Reader<'a, I: Iterator<Item = &'a str>>(I);

impl<'a, I: Iterator<Item = &'a str>> Reader<'a, I> {
    /// The value after `key` on the next line. An empty key returns the
    /// whole line unchecked.
    fn field(&mut self, key: &str) -> Result<String> {
        let line = self
            .0
            .next()
            .ok_or_else(|| Error::Format(format!("missing field `{key}`")))?;
        if key.is_empty() {
            return Ok(line.to_string());
        }
        let (k, v) = line.split_once(' ').unwrap_or((line, ""));
        if k != key {
            return Err(Error::Format(format!("expected `{key}`, found `{k}`")));
        }
        Ok(v.trim().to_string())
    }
}
