//! Similarity thresholds and the discrete search over Lagrangian
//! coefficients.
//!
//! The search first fits the unpenalized likelihood, derives the two
//! thresholds from that fit, then solves the stationarity system for every
//! cell of the candidate grid and keeps the cell whose penalized objective
//! at its stationary point is smallest.

use std::sync::Arc;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{self, FittedModel, Init, PenaltyConfig, SolverConfig};
use crate::similarity::{self, LinkFunction, Point, SimilarityWeights};

/// Candidate values for the two coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid {
            lambda1: vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35],
            lambda2: vec![0.5, 1.0, 3.0, 5.0, 7.0, 9.0, 11.0],
        }
    }
}

impl LambdaGrid {
    pub fn new(lambda1: Vec<f64>, lambda2: Vec<f64>) -> Result<Self> {
        let grid = LambdaGrid { lambda1, lambda2 };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda1.is_empty() || self.lambda2.is_empty() {
            return Err(Error::InvalidValue("lambda candidate sets must be nonempty".into()));
        }
        if self
            .lambda1
            .iter()
            .chain(&self.lambda2)
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::InvalidValue(
                "lambda candidates must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Cells in row-major order over (lambda1, lambda2).
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.lambda1
            .iter()
            .flat_map(|&a| self.lambda2.iter().map(move |&b| (a, b)))
            .collect()
    }
}

/// The two thresholds plus flags for classes too small to define them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub minority: f64,
    pub majority: f64,
    pub minority_degenerate: bool,
    pub majority_degenerate: bool,
}

fn pairwise_similarity_sum(w: &SimilarityWeights, points: &[Point]) -> f64 {
    let w = w.as_slice();
    let mut sum = 0.0;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            sum += (-similarity::distance(w, points[i].as_slice(), points[j].as_slice())).exp();
        }
    }
    sum
}

/// `T / n+ * sum_{i<j} S(x+_i, x+_j)` and
/// `T / (4 |D-|) * sum_{i<j} S(x-_i, x-_j)`.
pub fn compute_thresholds(
    w: &SimilarityWeights,
    minority: &[Point],
    majority: &[Point],
    absent_count: usize,
) -> Result<Thresholds> {
    if let Some(bad) = minority.iter().chain(majority).find(|x| x.dim() != w.dim()) {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: bad.dim(),
        });
    }
    let t = absent_count as f64;
    let (minority_value, minority_degenerate) = if minority.len() < 2 {
        (0.0, true)
    } else {
        (t / minority.len() as f64 * pairwise_similarity_sum(w, minority), false)
    };
    let (majority_value, majority_degenerate) = if majority.len() < 2 {
        (0.0, true)
    } else {
        (
            t / (4.0 * majority.len() as f64) * pairwise_similarity_sum(w, majority),
            false,
        )
    };
    Ok(Thresholds {
        minority: minority_value,
        majority: majority_value,
        minority_degenerate,
        majority_degenerate,
    })
}

/// Outcome of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub lambda1: f64,
    pub lambda2: f64,
    pub r_value: f64,
    pub residual_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct GridSelection {
    pub penalty: PenaltyConfig,
    pub model: FittedModel,
    pub r_value: f64,
    pub thresholds: Thresholds,
    /// The unpenalized fit the thresholds were computed from.
    pub unconstrained: FittedModel,
    pub cells: Vec<GridCell>,
    /// No cell converged; the selection is the smallest-residual cell.
    pub all_failed: bool,
}

fn prefer(a: &GridCell, b: &GridCell, key: impl Fn(&GridCell) -> f64) -> std::cmp::Ordering {
    key(a)
        .total_cmp(&key(b))
        .then(a.lambda2.total_cmp(&b.lambda2))
        .then(a.lambda1.total_cmp(&b.lambda1))
}

/// Picks the cell with the smallest objective among converged cells; ties
/// go to the smaller `lambda2`, then the smaller `lambda1`.
pub(crate) fn select_cell(cells: &[GridCell]) -> Option<(usize, bool)> {
    let usable = |c: &GridCell| c.converged && c.r_value.is_finite();
    if let Some((i, _)) = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| usable(c))
        .min_by(|(_, a), (_, b)| prefer(a, b, |c| c.r_value))
    {
        return Some((i, false));
    }
    cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.residual_norm.is_finite())
        .min_by(|(_, a), (_, b)| prefer(a, b, |c| c.residual_norm))
        .map(|(i, _)| (i, true))
}

pub fn grid_select(
    data: Arc<LabeledDataset>,
    grid: &LambdaGrid,
    link: LinkFunction,
    solver: &SolverConfig,
    absent_count: usize,
) -> Result<GridSelection> {
    grid.validate()?;
    if absent_count == 0 {
        return Err(Error::Contract("grid search needs at least one absent point".into()));
    }
    let unconstrained = model::solve_stationary(
        data.clone(),
        PenaltyConfig::unconstrained(),
        link,
        solver,
        Init::Default { absent_count: 0 },
    )?;
    let thresholds = compute_thresholds(
        &unconstrained.weights,
        data.minority(),
        data.majority(),
        absent_count,
    )?;
    let cells = grid.cells();
    let fits = exec::map_indexed(cells.len(), |c| {
        let (lambda1, lambda2) = cells[c];
        let penalty = PenaltyConfig::new(lambda1, lambda2, thresholds.minority, thresholds.majority)?;
        model::solve_stationary(
            data.clone(),
            penalty,
            link,
            solver,
            Init::Weights {
                weights: unconstrained.weights.clone(),
                absent_count,
            },
        )
    });
    let mut models = Vec::with_capacity(fits.len());
    let mut summaries = Vec::with_capacity(fits.len());
    for (fit, &(lambda1, lambda2)) in fits.into_iter().zip(&cells) {
        let summary = match &fit {
            Ok(m) => GridCell {
                lambda1,
                lambda2,
                r_value: m.objective(),
                residual_norm: m.diagnostics.residual_norm,
                converged: m.diagnostics.converged,
            },
            Err(_) => GridCell {
                lambda1,
                lambda2,
                r_value: f64::NAN,
                residual_norm: f64::NAN,
                converged: false,
            },
        };
        summaries.push(summary);
        models.push(fit.ok());
    }
    let (best, all_failed) = select_cell(&summaries)
        .ok_or_else(|| Error::Numerical("every lambda grid solve failed".into()))?;
    let model = models[best].take().expect("selected cell has a model");
    Ok(GridSelection {
        penalty: model.penalty,
        r_value: summaries[best].r_value,
        model,
        thresholds,
        unconstrained,
        cells: summaries,
        all_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_toy, normalize, Toy};
    use rand::Rng;

    fn pts(v: &[&[f64]]) -> Vec<Point> {
        v.iter().map(|x| Point::new(x.to_vec()).unwrap()).collect()
    }

    #[test]
    fn thresholds_for_identical_points() {
        let w = SimilarityWeights::ones(2);
        let minority = pts(&[&[0.5, 0.5][..]; 3]);
        let majority = pts(&[&[-0.5, 0.1][..]; 4]);
        let th = compute_thresholds(&w, &minority, &majority, 2).unwrap();
        assert_eq!(th.minority, 2.0);
        assert_eq!(th.majority, 0.75);
        assert!(!th.minority_degenerate && !th.majority_degenerate);
    }

    #[test]
    fn thresholds_match_double_loop() {
        let mut rng = crate::seed::rng(17);
        let mut cloud = |n: usize| -> Vec<Point> {
            (0..n)
                .map(|_| Point::new(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).unwrap())
                .collect()
        };
        let (minority, majority) = (cloud(6), cloud(9));
        let w = SimilarityWeights::new(vec![2.0, 0.7]).unwrap();
        let brute = |set: &[Point]| {
            let mut total = 0.0;
            for (i, a) in set.iter().enumerate() {
                for (j, b) in set.iter().enumerate() {
                    if i < j {
                        total += similarity::similarity(&w, a, b).unwrap();
                    }
                }
            }
            total
        };
        let th = compute_thresholds(&w, &minority, &majority, 3).unwrap();
        assert!((th.minority - 3.0 / 6.0 * brute(&minority)).abs() < 1e-12);
        assert!((th.majority - 3.0 / 36.0 * brute(&majority)).abs() < 1e-12);

        let mut reversed = majority.clone();
        reversed.reverse();
        let th2 = compute_thresholds(&w, &minority, &reversed, 3).unwrap();
        assert!((th.majority - th2.majority).abs() < 1e-12);
    }

    #[test]
    fn tiny_classes_are_flagged() {
        let w = SimilarityWeights::ones(1);
        let th = compute_thresholds(&w, &pts(&[&[0.0]]), &pts(&[&[1.0], &[2.0]]), 1).unwrap();
        assert!(th.minority_degenerate);
        assert_eq!(th.minority, 0.0);
    }

    #[test]
    fn selection_prefers_small_r_then_small_lambda2() {
        let cell = |l1, l2, r, ok| GridCell {
            lambda1: l1,
            lambda2: l2,
            r_value: r,
            residual_norm: 1.0,
            converged: ok,
        };
        let cells = vec![
            cell(0.1, 3.0, -5.0, true),
            cell(0.2, 1.0, -5.0, true),
            cell(0.05, 1.0, -5.0, true),
            cell(0.3, 0.5, -9.0, false),
        ];
        assert_eq!(select_cell(&cells), Some((2, false)));
        let failed: Vec<_> = cells.iter().map(|c| GridCell { converged: false, ..*c }).collect();
        assert_eq!(select_cell(&failed).map(|s| s.1), Some(true));
    }

    #[test]
    fn singleton_grid_is_forced() {
        let data = Arc::new(normalize(&generate_toy(Toy::One, 3)).0);
        let grid = LambdaGrid::new(vec![0.2], vec![5.0]).unwrap();
        let sel = grid_select(data, &grid, LinkFunction::default(), &SolverConfig::default(), 2).unwrap();
        assert_eq!((sel.penalty.lambda1, sel.penalty.lambda2), (0.2, 5.0));
        assert_eq!(sel.cells.len(), 1);
    }

    #[test]
    fn selected_lambda_is_on_the_grid() {
        let data = Arc::new(normalize(&generate_toy(Toy::Two, 8)).0);
        let grid = LambdaGrid::new(vec![0.0, 0.1, 0.3], vec![0.0, 1.0, 9.0]).unwrap();
        let sel = grid_select(data, &grid, LinkFunction::default(), &SolverConfig::default(), 2).unwrap();
        assert!(grid.lambda1.contains(&sel.penalty.lambda1));
        assert!(grid.lambda2.contains(&sel.penalty.lambda2));
        assert_eq!(sel.cells.len(), 9);
        let r00 = sel.cells.iter().find(|c| c.lambda1 == 0.0 && c.lambda2 == 0.0).unwrap();
        let l = model::log_likelihood(&sel.unconstrained.weights, &sel.unconstrained.training, &LinkFunction::default()).unwrap();
        if r00.converged {
            // With zero coefficients the warm-started fit stays at the
            // unpenalized stationary point.
            assert!((r00.r_value - l).abs() < 1e-6, "{} vs {l}", r00.r_value);
        }
        let min_r = sel
            .cells
            .iter()
            .filter(|c| c.converged)
            .map(|c| c.r_value)
            .fold(f64::INFINITY, f64::min);
        if !sel.all_failed {
            assert_eq!(sel.r_value, min_r);
        }
    }

    #[test]
    fn grid_rejects_bad_candidates() {
        assert!(LambdaGrid::new(vec![], vec![1.0]).is_err());
        assert!(LambdaGrid::new(vec![-0.1], vec![1.0]).is_err());
    }
}
