//! Penalized likelihood over similarity weights and absent minority points.
//!
//! Training scores are leave-one-out averages; the likelihood is the
//! Bernoulli log-likelihood of the labels under the link. Two penalty terms
//! reward similarity between the absent points and, respectively, the
//! minority and majority inputs. A fit solves the stationarity conditions
//! of the penalized objective (gradient in the weights and in every absent
//! coordinate) by projected Levenberg-Marquardt on the gradient residuals.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::lm::{self, LeastSquares, LmSettings, Termination};
use crate::seed;
use crate::similarity::{
    self, accumulate_gradients, LinkFunction, LinkKind, Point, SimilarityWeights,
    SINGULARITY_EPSILON, UNDERFLOW_FLOOR,
};

/// The `T` absent points, all of dimension `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsentSet {
    p: usize,
    points: Vec<Point>,
}

impl AbsentSet {
    pub fn new(p: usize, points: Vec<Point>) -> Result<Self> {
        if let Some(bad) = points.iter().find(|x| x.dim() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: bad.dim(),
            });
        }
        Ok(AbsentSet { p, points })
    }

    /// No absent points. Only valid with zero penalty coefficients.
    pub fn empty(p: usize) -> Self {
        AbsentSet {
            p,
            points: Vec::new(),
        }
    }

    /// For each point, the midpoint of a uniformly drawn
    /// (minority, majority) pair.
    pub fn midpoint_init(data: &LabeledDataset, count: usize, seed: u64) -> Result<Self> {
        if count > 0 && data.is_single_class() {
            return Err(Error::Contract(
                "absent-point initialization needs both classes".into(),
            ));
        }
        let mut rng = seed::rng(seed);
        let points = (0..count)
            .map(|_| {
                let plus = &data.minority()[rng.gen_range(0..data.n_minority())];
                let minus = &data.majority()[rng.gen_range(0..data.n_majority())];
                let mid = plus
                    .as_slice()
                    .iter()
                    .zip(minus.as_slice())
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect();
                Point::new(mid)
            })
            .collect::<Result<_>>()?;
        Ok(AbsentSet {
            p: data.dim(),
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Point-major flattening: entry `t * p + j` is coordinate `j` of point `t`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.points
            .iter()
            .flat_map(|x| x.as_slice().iter().copied())
            .collect()
    }

    fn from_flat(p: usize, flat: &[f64]) -> Result<Self> {
        let points = flat
            .chunks(p)
            .map(|c| Point::new(c.to_vec()))
            .collect::<Result<_>>()?;
        Ok(AbsentSet { p, points })
    }
}

/// Lagrangian coefficients and the similarity thresholds they multiply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Threshold on total absent-to-minority similarity.
    pub minority_threshold: f64,
    /// Threshold on total absent-to-majority similarity.
    pub majority_threshold: f64,
}

impl PenaltyConfig {
    pub fn new(lambda1: f64, lambda2: f64, minority_threshold: f64, majority_threshold: f64) -> Result<Self> {
        for (name, v) in [
            ("lambda1", lambda1),
            ("lambda2", lambda2),
            ("minority threshold", minority_threshold),
            ("majority threshold", majority_threshold),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidValue(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(PenaltyConfig {
            lambda1,
            lambda2,
            minority_threshold,
            majority_threshold,
        })
    }

    /// Zero coefficients and thresholds: the plain likelihood.
    pub fn unconstrained() -> Self {
        PenaltyConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            minority_threshold: 0.0,
            majority_threshold: 0.0,
        }
    }

    pub fn is_unconstrained(&self) -> bool {
        self.lambda1 == 0.0 && self.lambda2 == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// On the infinity norm of the stationarity residuals.
    pub residual_tolerance: f64,
    pub step_tolerance: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 200,
            residual_tolerance: 1e-6,
            step_tolerance: 1e-10,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tolerance > 0.0) || !(self.step_tolerance > 0.0) {
            return Err(Error::InvalidValue(
                "solver tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveDiagnostics {
    /// Euclidean norm of the residuals at exit.
    pub residual_norm: f64,
    pub residual_inf_norm: f64,
    pub initial_residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the solve was restarted from a perturbed start.
    pub restarted: bool,
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub weights: SimilarityWeights,
    pub absent: AbsentSet,
    pub penalty: PenaltyConfig,
    pub training: Arc<LabeledDataset>,
    pub link: LinkFunction,
    pub diagnostics: SolveDiagnostics,
}

impl FittedModel {
    pub fn dim(&self) -> usize {
        self.weights.dim()
    }

    /// Value of the penalized objective at the fitted parameters.
    pub fn objective(&self) -> f64 {
        penalized_value(
            self.weights.as_slice(),
            &self.absent.to_flat(),
            &self.training,
            &self.penalty,
            &self.link,
        )
    }
}

fn check_inputs(w: &SimilarityWeights, absent: Option<&AbsentSet>, data: &LabeledDataset) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::Contract(
            "the likelihood needs at least two training points".into(),
        ));
    }
    if data.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: data.dim(),
        });
    }
    if let Some(a) = absent {
        if a.dim() != w.dim() {
            return Err(Error::DimensionMismatch {
                expected: w.dim(),
                found: a.dim(),
            });
        }
    }
    Ok(())
}

/// Likelihood value and its weight gradient. The pairwise similarity sums
/// are accumulated once per weight vector and shared by both.
struct LikelihoodTerms {
    value: f64,
    grad_w: Vec<f64>,
}

fn likelihood_terms(w: &[f64], data: &LabeledDataset, link: &LinkFunction, want_grad: bool) -> LikelihoodTerms {
    let n = data.len();
    let p = w.len();
    let mut den = vec![0.0; n];
    let mut num = vec![0.0; n];
    // d(den_i)/dw and d(num_i)/dw, row-major n x p.
    let mut dden = if want_grad { vec![0.0; n * p] } else { Vec::new() };
    let mut dnum = if want_grad { vec![0.0; n * p] } else { Vec::new() };
    let mut ds = vec![0.0; p];

    for i in 0..n {
        let xi = data.input(i).as_slice();
        for l in (i + 1)..n {
            let xl = data.input(l).as_slice();
            let d = similarity::distance(w, xi, xl);
            let s = (-d).exp();
            den[i] += s;
            den[l] += s;
            let (yi, yl) = (data.is_minority(i), data.is_minority(l));
            if yl {
                num[i] += s;
            }
            if yi {
                num[l] += s;
            }
            if want_grad && d > SINGULARITY_EPSILON {
                let k = -0.5 * s / d;
                for j in 0..p {
                    let diff = xi[j] - xl[j];
                    ds[j] = k * diff * diff;
                }
                for j in 0..p {
                    dden[i * p + j] += ds[j];
                    dden[l * p + j] += ds[j];
                    if yl {
                        dnum[i * p + j] += ds[j];
                    }
                    if yi {
                        dnum[l * p + j] += ds[j];
                    }
                }
            }
        }
    }

    let prior = data.minority_prior();
    let mut value = 0.0;
    let mut grad_w = vec![0.0; if want_grad { p } else { 0 }];
    for i in 0..n {
        let fallback = den[i] < UNDERFLOW_FLOOR;
        let z = if fallback {
            prior
        } else {
            (num[i] / den[i]).clamp(0.0, 1.0)
        };
        let (f_z, density) = link.apply(z);
        let y = data.is_minority(i);
        value += if y { f_z.ln() } else { (1.0 - f_z).ln() };
        if want_grad && !fallback {
            let yv = if y { 1.0 } else { 0.0 };
            let coef = (yv - f_z) * density / (f_z * (1.0 - f_z));
            let a = den[i];
            for j in 0..p {
                let dz = (dnum[i * p + j] * a - num[i] * dden[i * p + j]) / (a * a);
                grad_w[j] += coef * dz;
            }
        }
    }
    LikelihoodTerms { value, grad_w }
}

/// Contribution of absent point `t` to the penalty gradients: `grad_w`
/// gets the weight part, `grad_a` the part for the point's own coordinates.
/// Returns the (minority, majority) similarity sums for that point.
fn absent_point_terms(
    w: &[f64],
    a: &[f64],
    data: &LabeledDataset,
    penalty: &PenaltyConfig,
    mut grad_w: Option<&mut [f64]>,
    mut grad_a: Option<&mut [f64]>,
) -> (f64, f64) {
    let mut sums = (0.0, 0.0);
    for i in 0..data.len() {
        let minority = data.is_minority(i);
        let lambda = if minority { penalty.lambda1 } else { penalty.lambda2 };
        let s = accumulate_gradients(
            w,
            data.input(i).as_slice(),
            a,
            lambda,
            grad_w.as_deref_mut(),
            grad_a.as_deref_mut(),
        );
        if minority {
            sums.0 += s;
        } else {
            sums.1 += s;
        }
    }
    sums
}

fn penalty_value(sums: (f64, f64), penalty: &PenaltyConfig) -> f64 {
    penalty.lambda1 * (sums.0 - penalty.minority_threshold)
        + penalty.lambda2 * (sums.1 - penalty.majority_threshold)
}

/// Total absent-to-minority and absent-to-majority similarity.
pub fn constraint_sums(w: &SimilarityWeights, absent: &AbsentSet, data: &LabeledDataset) -> Result<(f64, f64)> {
    check_inputs(w, Some(absent), data)?;
    let mut sums = (0.0, 0.0);
    for a in absent.points() {
        let s = absent_point_terms(
            w.as_slice(),
            a.as_slice(),
            data,
            &PenaltyConfig::unconstrained(),
            None,
            None,
        );
        sums.0 += s.0;
        sums.1 += s.1;
    }
    Ok(sums)
}

fn penalized_value(w: &[f64], absent: &[f64], data: &LabeledDataset, penalty: &PenaltyConfig, link: &LinkFunction) -> f64 {
    let l = likelihood_terms(w, data, link, false).value;
    if penalty.is_unconstrained() {
        return l;
    }
    let p = w.len();
    let mut sums = (0.0, 0.0);
    for a in absent.chunks(p) {
        let s = absent_point_terms(w, a, data, penalty, None, None);
        sums.0 += s.0;
        sums.1 += s.1;
    }
    l + penalty_value(sums, penalty)
}

/// Residual vector: weight gradient followed by the absent-point gradients
/// in point-major order.
fn residuals_raw(w: &[f64], absent: &[f64], data: &LabeledDataset, penalty: &PenaltyConfig, link: &LinkFunction) -> Vec<f64> {
    let p = w.len();
    let mut out = vec![0.0; p + absent.len()];
    let lik = likelihood_terms(w, data, link, true);
    out[..p].copy_from_slice(&lik.grad_w);
    if !penalty.is_unconstrained() {
        let (gw, ga) = out.split_at_mut(p);
        for (a, g) in absent.chunks(p).zip(ga.chunks_mut(p)) {
            absent_point_terms(w, a, data, penalty, Some(gw), Some(g));
        }
    }
    out
}

/// Leave-one-out Bernoulli log-likelihood of the labels. Always finite and
/// at most zero thanks to the link clamp.
pub fn log_likelihood(w: &SimilarityWeights, data: &LabeledDataset, link: &LinkFunction) -> Result<f64> {
    check_inputs(w, None, data)?;
    Ok(likelihood_terms(w.as_slice(), data, link, false).value)
}

/// Log-likelihood plus the two Lagrangian penalty terms.
pub fn penalized_objective(
    w: &SimilarityWeights,
    absent: &AbsentSet,
    data: &LabeledDataset,
    penalty: &PenaltyConfig,
    link: &LinkFunction,
) -> Result<f64> {
    check_inputs(w, Some(absent), data)?;
    Ok(penalized_value(
        w.as_slice(),
        &absent.to_flat(),
        data,
        penalty,
        link,
    ))
}

/// Gradient of the penalized objective with respect to the weights.
pub fn gradient_weights(
    w: &SimilarityWeights,
    absent: &AbsentSet,
    data: &LabeledDataset,
    penalty: &PenaltyConfig,
    link: &LinkFunction,
) -> Result<Vec<f64>> {
    check_inputs(w, Some(absent), data)?;
    let mut r = residuals_raw(w.as_slice(), &absent.to_flat(), data, penalty, link);
    r.truncate(w.dim());
    Ok(r)
}

/// Gradient of the penalized objective with respect to each absent point;
/// row `t` holds the partials for point `t`.
pub fn gradient_absent(
    w: &SimilarityWeights,
    absent: &AbsentSet,
    data: &LabeledDataset,
    penalty: &PenaltyConfig,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(w, Some(absent), data)?;
    let p = w.dim();
    Ok(absent
        .points()
        .iter()
        .map(|a| {
            let mut g = vec![0.0; p];
            if !penalty.is_unconstrained() {
                absent_point_terms(w.as_slice(), a.as_slice(), data, penalty, None, Some(&mut g));
            }
            g
        })
        .collect())
}

/// The `(T + 1) p` stationarity residuals.
pub fn residual_system(
    w: &SimilarityWeights,
    absent: &AbsentSet,
    data: &LabeledDataset,
    penalty: &PenaltyConfig,
    link: &LinkFunction,
) -> Result<Vec<f64>> {
    check_inputs(w, Some(absent), data)?;
    Ok(residuals_raw(w.as_slice(), &absent.to_flat(), data, penalty, link))
}

/// Replaces each weight residual `G_j` by `max(0, w_j + G_j) - w_j`. This
/// equals `G_j` unless the weight sits at zero with the objective pushing it
/// negative, and vanishes exactly at maximizers over `w >= 0`.
fn project_weight_block(w: &[f64], r: &mut [f64]) {
    for (rj, wj) in r.iter_mut().zip(w) {
        *rj = (wj + *rj).max(0.0) - wj;
    }
}

/// The residuals the solver drives to zero: [`residual_system`] with the
/// weight block projected for the nonnegativity bound.
pub fn projected_residual_system(
    w: &SimilarityWeights,
    absent: &AbsentSet,
    data: &LabeledDataset,
    penalty: &PenaltyConfig,
    link: &LinkFunction,
) -> Result<Vec<f64>> {
    let mut r = residual_system(w, absent, data, penalty, link)?;
    project_weight_block(w.as_slice(), &mut r[..w.dim()]);
    Ok(r)
}

struct StationarityProblem<'a> {
    data: &'a LabeledDataset,
    penalty: &'a PenaltyConfig,
    link: &'a LinkFunction,
    p: usize,
}

impl LeastSquares for StationarityProblem<'_> {
    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let (w, absent) = x.split_at(self.p);
        let mut r = residuals_raw(w, absent, self.data, self.penalty, self.link);
        project_weight_block(w, &mut r[..self.p]);
        r
    }

    fn jacobian(&self, x: &[f64], r: &[f64]) -> DMatrix<f64> {
        let p = self.p;
        let m = x.len();
        let mut jac = DMatrix::zeros(m, m);
        // Weight columns: forward steps keep the weights feasible.
        for k in 0..p {
            let h = 1e-7 * x[k].abs().max(1.0);
            let mut xp = x.to_vec();
            xp[k] += h;
            let rp = self.residuals(&xp);
            for i in 0..m {
                jac[(i, k)] = (rp[i] - r[i]) / h;
            }
        }
        if self.penalty.is_unconstrained() {
            return jac;
        }
        // Absent columns only move the weight block and their own point's
        // block, so they are differenced locally (central).
        let w = &x[..p];
        // Weight rows held at the bound do not depend on the absent points.
        let active: Vec<bool> = (0..p).map(|i| r[i] == -w[i] && w[i] + r[i] <= 0.0).collect();
        for (t, a) in x[p..].chunks(p).enumerate() {
            for j in 0..p {
                let h = 1e-6 * a[j].abs().max(1.0);
                let eval = |delta: f64| {
                    let mut a2 = a.to_vec();
                    a2[j] += delta;
                    let mut gw = vec![0.0; p];
                    let mut ga = vec![0.0; p];
                    absent_point_terms(w, &a2, self.data, self.penalty, Some(&mut gw), Some(&mut ga));
                    (gw, ga)
                };
                let (gw_p, ga_p) = eval(h);
                let (gw_m, ga_m) = eval(-h);
                let col = p + t * p + j;
                for i in 0..p {
                    if !active[i] {
                        jac[(i, col)] = (gw_p[i] - gw_m[i]) / (2.0 * h);
                    }
                    jac[(p + t * p + i, col)] = (ga_p[i] - ga_m[i]) / (2.0 * h);
                }
            }
        }
        jac
    }

    fn project(&self, x: &mut [f64]) {
        for v in &mut x[..self.p] {
            if !(*v >= 0.0) {
                *v = 0.0;
            }
        }
    }
}

/// Starting point of a solve.
#[derive(Debug, Clone)]
pub enum Init {
    /// All-ones weights and `absent_count` midpoint-initialized absent points.
    Default { absent_count: usize },
    /// Given weights and `absent_count` midpoint-initialized absent points.
    Weights {
        weights: SimilarityWeights,
        absent_count: usize,
    },
    Given {
        weights: SimilarityWeights,
        absent: AbsentSet,
    },
}

/// Fits weights and absent points by driving the stationarity residuals to
/// zero. Non-convergence is reported in the diagnostics, not as an error.
pub fn solve_stationary(
    data: Arc<LabeledDataset>,
    penalty: PenaltyConfig,
    link: LinkFunction,
    solver: &SolverConfig,
    init: Init,
) -> Result<FittedModel> {
    solver.validate()?;
    if data.is_single_class() {
        return Err(Error::Contract("training data must contain both classes".into()));
    }
    let p = data.dim();
    let init_seed = seed::derive_seed(solver.seed, "solver-init");
    let (w0, absent0) = match init {
        Init::Default { absent_count } => (
            SimilarityWeights::ones(p),
            AbsentSet::midpoint_init(&data, absent_count, init_seed)?,
        ),
        Init::Weights {
            weights,
            absent_count,
        } => (
            weights,
            AbsentSet::midpoint_init(&data, absent_count, init_seed)?,
        ),
        Init::Given { weights, absent } => (weights, absent),
    };
    check_inputs(&w0, Some(&absent0), &data)?;
    if absent0.is_empty() && !penalty.is_unconstrained() {
        return Err(Error::Contract(
            "penalized fits need at least one absent point".into(),
        ));
    }

    let problem = StationarityProblem {
        data: &data,
        penalty: &penalty,
        link: &link,
        p,
    };
    let settings = LmSettings {
        max_iterations: solver.max_iterations,
        residual_tolerance: solver.residual_tolerance,
        step_tolerance: solver.step_tolerance,
    };
    let mut x0: Vec<f64> = w0.as_slice().to_vec();
    x0.extend(absent0.to_flat());
    let mut outcome = lm::minimize(&problem, &x0, settings);
    let mut restarted = false;
    if outcome.termination == Termination::NonFinite {
        restarted = true;
        let mut rng = seed::rng(seed::derive_seed(solver.seed, "solver-restart"));
        let perturbed: Vec<f64> = x0
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let u: f64 = rng.gen_range(-1.0..1.0);
                if k < p {
                    v * (1.0 + 0.1 * u)
                } else {
                    v + 0.05 * u
                }
            })
            .collect();
        outcome = lm::minimize(&problem, &perturbed, settings);
        if outcome.termination == Termination::NonFinite {
            return Err(Error::Numerical(
                "stationarity residuals are not finite after a restart".into(),
            ));
        }
    }

    let residual_norm = outcome.residuals.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diagnostics = SolveDiagnostics {
        residual_norm,
        residual_inf_norm: lm::inf_norm(&outcome.residuals),
        initial_residual_norm: outcome.initial_norm,
        iterations: outcome.iterations,
        converged: outcome.converged(),
        restarted,
    };
    let weights = SimilarityWeights::projected(outcome.x[..p].to_vec());
    let absent = AbsentSet::from_flat(p, &outcome.x[p..])?;
    Ok(FittedModel {
        weights,
        absent,
        penalty,
        training: data,
        link,
        diagnostics,
    })
}

/// Probability that `x` belongs to the minority class under one model.
pub fn predict_proba(model: &FittedModel, x: &Point) -> Result<f64> {
    let z = similarity::test_score(&model.weights, &model.training, x)?;
    Ok(model.link.apply(z.value).0)
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// The persisted parameters of a fitted model. Training data is referenced
/// by checksum only.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDocument {
    pub weights: SimilarityWeights,
    pub absent: AbsentSet,
    pub penalty: PenaltyConfig,
    pub link: LinkKind,
    pub checksum: String,
}

impl ModelDocument {
    pub fn from_model(model: &FittedModel) -> Self {
        ModelDocument {
            weights: model.weights.clone(),
            absent: model.absent.clone(),
            penalty: model.penalty,
            link: model.link.kind,
            checksum: model.training.checksum(),
        }
    }

    /// Flat text, one field per line, in fixed order. Floats use the
    /// shortest representation that parses back to the same bits.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut s = String::new();
        writeln!(s, "version {MODEL_FORMAT_VERSION}").unwrap();
        writeln!(s, "p {}", self.weights.dim()).unwrap();
        writeln!(s, "T {}", self.absent.len()).unwrap();
        writeln!(s, "w {}", join(self.weights.as_slice())).unwrap();
        for a in self.absent.points() {
            writeln!(s, "absent {}", join(a.as_slice())).unwrap();
        }
        writeln!(s, "lambda1 {:?}", self.penalty.lambda1).unwrap();
        writeln!(s, "lambda2 {:?}", self.penalty.lambda2).unwrap();
        writeln!(s, "Delta {:?}", self.penalty.minority_threshold).unwrap();
        writeln!(s, "delta {:?}", self.penalty.majority_threshold).unwrap();
        writeln!(s, "link {}", self.link.name()).unwrap();
        writeln!(s, "checksum {}", self.checksum).unwrap();
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut field = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing field `{key}`")))?;
            let (k, v) = line.split_once(' ').unwrap_or((line, ""));
            if k != key {
                return Err(Error::Format(format!("expected `{key}`, found `{k}`")));
            }
            Ok(v.trim().to_string())
        };
        let version: u32 = parse_num(&field("version")?, "version")?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let p: usize = parse_num(&field("p")?, "p")?;
        let t: usize = parse_num(&field("T")?, "T")?;
        let weights = SimilarityWeights::new(parse_vec(&field("w")?, p, "w")?)?;
        let points = (0..t)
            .map(|_| Point::new(parse_vec(&field("absent")?, p, "absent")?))
            .collect::<Result<Vec<_>>>()?;
        let absent = AbsentSet::new(p, points)?;
        let penalty = PenaltyConfig::new(
            parse_num(&field("lambda1")?, "lambda1")?,
            parse_num(&field("lambda2")?, "lambda2")?,
            parse_num(&field("Delta")?, "Delta")?,
            parse_num(&field("delta")?, "delta")?,
        )?;
        let link = LinkKind::from_name(&field("link")?)?;
        let checksum = field("checksum")?;
        Ok(ModelDocument {
            weights,
            absent,
            penalty,
            link,
            checksum,
        })
    }

    /// Reattaches training data. The data must match the stored checksum.
    pub fn into_model(self, training: Arc<LabeledDataset>, diagnostics: SolveDiagnostics) -> Result<FittedModel> {
        if training.checksum() != self.checksum {
            return Err(Error::Format(format!(
                "training data checksum {} does not match model checksum {}",
                training.checksum(),
                self.checksum
            )));
        }
        if training.dim() != self.weights.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.dim(),
                found: training.dim(),
            });
        }
        Ok(FittedModel {
            weights: self.weights,
            absent: self.absent,
            penalty: self.penalty,
            training,
            link: LinkFunction {
                kind: self.link,
                ..LinkFunction::default()
            },
            diagnostics,
        })
    }
}

pub(crate) fn parse_num<T: std::str::FromStr>(raw: &str, what: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Format(format!("`{raw}` is not a valid {what}")))
}

pub(crate) fn parse_vec(raw: &str, len: usize, what: &str) -> Result<Vec<f64>> {
    let v = raw
        .split_whitespace()
        .map(|x| parse_num(x, what))
        .collect::<Result<Vec<f64>>>()?;
    if v.len() != len {
        return Err(Error::Format(format!(
            "`{what}` has {} values, expected {len}",
            v.len()
        )));
    }
    Ok(v)
}
