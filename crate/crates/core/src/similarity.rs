//! Weighted distance, exponential similarity and the similarity-weighted
//! label average used both for leave-one-out training scores and for
//! test-time scores.
//!
//! The checked public functions validate dimensions; the `pub(crate)`
//! slice kernels underneath skip validation and are what the optimizer
//! calls in its inner loops.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// Distances at or below this value are treated as coincident points when
/// differentiating, where the exact gradient is not defined.
pub const SINGULARITY_EPSILON: f64 = 1e-12;

/// Score denominators below this floor fall back to the minority prior.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

/// Default clamp applied to link outputs before any logarithm is taken.
pub const DEFAULT_CLAMP_EPSILON: f64 = 1e-9;

/// A finite point in the (normalized) input space.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(j) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "coordinate {j} is not finite ({})",
                coords[j]
            )));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn scaled(&self, factor: f64) -> Point {
        Point(self.0.iter().map(|c| c * factor).collect())
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

/// Nonnegative per-coordinate weights of the similarity function.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityWeights(Vec<f64>);

impl SimilarityWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidValue("weight vector is empty".into()));
        }
        if let Some(j) = w.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidValue(format!(
                "weight {j} must be finite and nonnegative, got {}",
                w[j]
            )));
        }
        Ok(SimilarityWeights(w))
    }

    /// All-ones weights of dimension `p`.
    pub fn ones(p: usize) -> Self {
        SimilarityWeights(vec![1.0; p])
    }

    /// Clamps negative entries to zero. Used by the solver's projection step.
    pub(crate) fn projected(mut w: Vec<f64>) -> Self {
        for v in &mut w {
            if *v < 0.0 || v.is_nan() {
                *v = 0.0;
            }
        }
        SimilarityWeights(w)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Which cumulative distribution on [0, 1] maps a score to a probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkKind {
    Uniform,
}

impl LinkKind {
    pub fn name(self) -> &'static str {
        match self {
            LinkKind::Uniform => "uniform",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(LinkKind::Uniform),
            other => Err(Error::InvalidValue(format!("unknown link kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkFunction {
    pub kind: LinkKind,
    pub clamp_epsilon: f64,
}

impl Default for LinkFunction {
    fn default() -> Self {
        LinkFunction {
            kind: LinkKind::Uniform,
            clamp_epsilon: DEFAULT_CLAMP_EPSILON,
        }
    }
}

impl LinkFunction {
    /// Returns `(F(z), f(z))`, with `F` clamped to `[eps, 1 - eps]`.
    pub fn apply(&self, z: f64) -> (f64, f64) {
        let eps = self.clamp_epsilon;
        match self.kind {
            LinkKind::Uniform => (z.clamp(eps, 1.0 - eps), 1.0),
        }
    }
}

/// A similarity-weighted label average together with a flag telling
/// whether the denominator underflowed and the minority prior was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub fallback: bool,
}

fn check_dims(w: &SimilarityWeights, x: &Point, y: &Point) -> Result<()> {
    if x.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: x.dim(),
        });
    }
    if y.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: y.dim(),
        });
    }
    Ok(())
}

pub(crate) fn distance(w: &[f64], x: &[f64], y: &[f64]) -> f64 {
    w.iter()
        .zip(x.iter().zip(y))
        .map(|(wj, (xj, yj))| {
            let d = xj - yj;
            wj * d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `sqrt(sum_j w_j (x_j - y_j)^2)`.
pub fn weighted_distance(w: &SimilarityWeights, x: &Point, y: &Point) -> Result<f64> {
    check_dims(w, x, y)?;
    Ok(distance(w.as_slice(), x.as_slice(), y.as_slice()))
}

/// `exp(-weighted_distance(w, x, y))`, in `(0, 1]`.
pub fn similarity(w: &SimilarityWeights, x: &Point, y: &Point) -> Result<f64> {
    check_dims(w, x, y)?;
    Ok((-distance(w.as_slice(), x.as_slice(), y.as_slice())).exp())
}

/// Accumulates the partial derivatives of `S_w(x, a)` into `grad_w` and
/// `grad_a`, each scaled by `scale`. Returns `S_w(x, a)`.
///
/// Coincident points (distance at or below [`SINGULARITY_EPSILON`])
/// contribute nothing.
pub(crate) fn accumulate_gradients(
    w: &[f64],
    x: &[f64],
    a: &[f64],
    scale: f64,
    grad_w: Option<&mut [f64]>,
    grad_a: Option<&mut [f64]>,
) -> f64 {
    let d = distance(w, x, a);
    let s = (-d).exp();
    if d <= SINGULARITY_EPSILON {
        return s;
    }
    let k = scale * s / d;
    if let Some(gw) = grad_w {
        for j in 0..w.len() {
            let diff = x[j] - a[j];
            gw[j] -= 0.5 * k * diff * diff;
        }
    }
    if let Some(ga) = grad_a {
        for j in 0..w.len() {
            ga[j] += k * w[j] * (x[j] - a[j]);
        }
    }
    s
}

/// Gradients of `S_w(x, a)` with respect to `w` and to `a`.
///
/// Both are zero vectors when `x` and `a` coincide under `w`.
pub fn similarity_gradients(
    w: &SimilarityWeights,
    x: &Point,
    a: &Point,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(w, x, a)?;
    let p = w.dim();
    let mut gw = vec![0.0; p];
    let mut ga = vec![0.0; p];
    accumulate_gradients(
        w.as_slice(),
        x.as_slice(),
        a.as_slice(),
        1.0,
        Some(&mut gw),
        Some(&mut ga),
    );
    Ok((gw, ga))
}

fn weighted_average<'a>(
    w: &[f64],
    query: &[f64],
    others: impl Iterator<Item = (&'a [f64], bool)>,
    prior: f64,
) -> Score {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, minority) in others {
        let s = (-distance(w, query, x)).exp();
        den += s;
        if minority {
            num += s;
        }
    }
    if den < UNDERFLOW_FLOOR {
        Score {
            value: prior,
            fallback: true,
        }
    } else {
        Score {
            value: (num / den).clamp(0.0, 1.0),
            fallback: false,
        }
    }
}

/// Leave-one-out score of training point `i`: the similarity-weighted
/// average of all other points' labels.
pub fn loo_score(w: &SimilarityWeights, data: &LabeledDataset, i: usize) -> Result<Score> {
    if data.len() < 2 {
        return Err(Error::Contract(
            "leave-one-out score needs at least two points".into(),
        ));
    }
    if i >= data.len() {
        return Err(Error::Contract(format!(
            "index {i} out of range for {} points",
            data.len()
        )));
    }
    if data.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: data.dim(),
        });
    }
    let query = data.input(i).as_slice();
    let others = (0..data.len())
        .filter(|&l| l != i)
        .map(|l| (data.input(l).as_slice(), data.is_minority(l)));
    Ok(weighted_average(
        w.as_slice(),
        query,
        others,
        data.minority_prior(),
    ))
}

/// Score of an arbitrary point against every training point.
pub fn test_score(w: &SimilarityWeights, data: &LabeledDataset, x: &Point) -> Result<Score> {
    if data.is_empty() {
        return Err(Error::Contract("test score needs a nonempty dataset".into()));
    }
    if x.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: x.dim(),
        });
    }
    if data.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: data.dim(),
        });
    }
    let others = (0..data.len()).map(|l| (data.input(l).as_slice(), data.is_minority(l)));
    Ok(weighted_average(
        w.as_slice(),
        x.as_slice(),
        others,
        data.minority_prior(),
    ))
}

/// `(F(z), f(z))` for the given link.
pub fn link_apply(link: &LinkFunction, z: f64) -> (f64, f64) {
    link.apply(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pt(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    fn wt(v: &[f64]) -> SimilarityWeights {
        SimilarityWeights::new(v.to_vec()).unwrap()
    }

    fn dataset(points: &[(&[f64], u8)]) -> LabeledDataset {
        let inputs = points.iter().map(|(x, _)| pt(x)).collect();
        let labels = points.iter().map(|(_, y)| *y).collect();
        LabeledDataset::new(inputs, labels).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(
            weighted_distance(&wt(&[1.0, 1.0]), &pt(&[0.0, 0.0]), &pt(&[3.0, 4.0])).unwrap(),
            5.0
        );
        assert_eq!(
            weighted_distance(&wt(&[0.0, 0.0]), &pt(&[1.5, -2.0]), &pt(&[3.0, 4.0])).unwrap(),
            0.0
        );
        assert_eq!(
            weighted_distance(&wt(&[4.0, 0.0]), &pt(&[0.0, 0.0]), &pt(&[1.0, 5.0])).unwrap(),
            2.0
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = weighted_distance(&wt(&[1.0, 1.0]), &pt(&[0.0]), &pt(&[1.0, 2.0]));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        assert!(similarity(&wt(&[1.0]), &pt(&[0.0]), &pt(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn weights_reject_negative_and_nan() {
        assert!(SimilarityWeights::new(vec![1.0, -0.1]).is_err());
        assert!(SimilarityWeights::new(vec![f64::NAN]).is_err());
        assert!(Point::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn similarity_examples() {
        let w = wt(&[1.0, 1.0]);
        assert_eq!(similarity(&w, &pt(&[0.3, 0.7]), &pt(&[0.3, 0.7])).unwrap(), 1.0);
        assert_relative_eq!(
            similarity(&w, &pt(&[0.0, 0.0]), &pt(&[3.0, 4.0])).unwrap(),
            6.737_946_999_085_467e-3,
            max_relative = 1e-12
        );
        let s10 = similarity(&wt(&[1.0, 0.0]), &pt(&[0.0, 0.0]), &pt(&[0.0, 2.0])).unwrap();
        let s11 = similarity(&w, &pt(&[0.0, 0.0]), &pt(&[0.0, 2.0])).unwrap();
        assert_eq!(s10, 1.0);
        assert_relative_eq!(s11, (-2.0f64).exp(), max_relative = 1e-15);
        assert!(s11 < s10);
    }

    #[test]
    fn gradient_closed_form() {
        let (gw, ga) =
            similarity_gradients(&wt(&[1.0, 1.0]), &pt(&[3.0, 4.0]), &pt(&[0.0, 0.0])).unwrap();
        let e5 = (-5.0f64).exp();
        assert_relative_eq!(gw[0], -e5 * 9.0 / 10.0, max_relative = 1e-12);
        assert_relative_eq!(gw[1], -e5 * 16.0 / 10.0, max_relative = 1e-12);
        assert_relative_eq!(ga[0], e5 * 3.0 / 5.0, max_relative = 1e-12);
        assert_relative_eq!(ga[1], e5 * 4.0 / 5.0, max_relative = 1e-12);
    }

    #[test]
    fn gradient_at_coincident_points_is_zero() {
        let (gw, ga) =
            similarity_gradients(&wt(&[2.0, 0.5]), &pt(&[1.0, 1.0]), &pt(&[1.0, 1.0])).unwrap();
        assert_eq!(gw, vec![0.0, 0.0]);
        assert_eq!(ga, vec![0.0, 0.0]);
    }

    /// Central finite differences of `similarity`, written independently of
    /// the analytic kernel.
    fn fd_gradients(w: &[f64], x: &[f64], a: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
        let s = |w: &[f64], a: &[f64]| {
            let d2: f64 = (0..w.len()).map(|j| w[j] * (x[j] - a[j]).powi(2)).sum();
            (-d2.sqrt()).exp()
        };
        let mut gw = vec![0.0; w.len()];
        let mut ga = vec![0.0; w.len()];
        for j in 0..w.len() {
            let (mut wp, mut wm) = (w.to_vec(), w.to_vec());
            wp[j] += h;
            wm[j] -= h;
            gw[j] = (s(&wp, a) - s(&wm, a)) / (2.0 * h);
            let (mut ap, mut am) = (a.to_vec(), a.to_vec());
            ap[j] += h;
            am[j] -= h;
            ga[j] = (s(w, &ap) - s(w, &am)) / (2.0 * h);
        }
        (gw, ga)
    }

    proptest! {
        #[test]
        fn gradients_match_finite_differences(
            p in 1usize..6,
            seed in prop::collection::vec(0.0f64..1.0, 18),
        ) {
            let w: Vec<f64> = (0..p).map(|j| 0.2 + 3.0 * seed[j]).collect();
            let x: Vec<f64> = (0..p).map(|j| 2.0 * seed[6 + j] - 1.0).collect();
            let a: Vec<f64> = (0..p).map(|j| 2.0 * seed[12 + j] - 1.0).collect();
            prop_assume!(distance(&w, &x, &a) >= 1e-2);
            let (gw, ga) = similarity_gradients(&wt(&w), &pt(&x), &pt(&a)).unwrap();
            let (fw, fa) = fd_gradients(&w, &x, &a, 1e-6);
            let rel = |g: &[f64], f: &[f64]| {
                let num = g.iter().zip(f).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                num / f.iter().fold(0.0f64, |m, b| m.max(b.abs())).max(1e-300)
            };
            prop_assert!(rel(&gw, &fw) <= 1e-5, "w {:?} {:?}", gw, fw);
            prop_assert!(rel(&ga, &fa) <= 1e-5, "a {:?} {:?}", ga, fa);
        }

        #[test]
        fn similarity_is_symmetric_and_bounded(
            w in prop::collection::vec(0.0f64..10.0, 3),
            x in prop::collection::vec(-5.0f64..5.0, 3),
            y in prop::collection::vec(-5.0f64..5.0, 3),
        ) {
            let (w, x, y) = (wt(&w), pt(&x), pt(&y));
            let sxy = similarity(&w, &x, &y).unwrap();
            prop_assert_eq!(sxy, similarity(&w, &y, &x).unwrap());
            prop_assert!(sxy > 0.0 && sxy <= 1.0);
            prop_assert!(weighted_distance(&w, &x, &y).unwrap() >= 0.0);
        }

        #[test]
        fn distance_scales_with_sqrt_of_weight_scale(
            w in prop::collection::vec(0.0f64..10.0, 3),
            x in prop::collection::vec(-5.0f64..5.0, 3),
            y in prop::collection::vec(-5.0f64..5.0, 3),
            c in 0.01f64..100.0,
        ) {
            let cw: Vec<f64> = w.iter().map(|v| c * v).collect();
            let d = weighted_distance(&wt(&w), &pt(&x), &pt(&y)).unwrap();
            let dc = weighted_distance(&wt(&cw), &pt(&x), &pt(&y)).unwrap();
            prop_assert!((dc - c.sqrt() * d).abs() <= 1e-12 * (1.0 + dc));
        }

        #[test]
        fn scores_are_convex_combinations(
            coords in prop::collection::vec(-3.0f64..3.0, 16),
            labels in prop::collection::vec(0u8..2, 8),
            w in prop::collection::vec(0.0f64..50.0, 2),
        ) {
            let inputs = coords.chunks(2).map(pt).collect();
            let data = LabeledDataset::new(inputs, labels).unwrap();
            let w = wt(&w);
            for i in 0..data.len() {
                let z = loo_score(&w, &data, i).unwrap().value;
                prop_assert!((0.0..=1.0).contains(&z));
            }
            let z = test_score(&w, &data, &pt(&[0.5, -0.5])).unwrap().value;
            prop_assert!((0.0..=1.0).contains(&z));
        }
    }

    #[test]
    fn loo_score_examples() {
        let w = wt(&[1.0]);
        // Equidistant from one point of each label.
        let data = dataset(&[(&[-1.0], 0), (&[1.0], 1), (&[0.0], 0)]);
        let i = (0..3).find(|&i| data.input(i).as_slice() == [0.0]).unwrap();
        assert_relative_eq!(loo_score(&w, &data, i).unwrap().value, 0.5, epsilon = 1e-15);

        let data = dataset(&[(&[0.0], 0), (&[1.0], 1), (&[2.0], 1), (&[5.0], 1)]);
        assert_eq!(loo_score(&w, &data, 0).unwrap().value, 1.0);

        // Direct evaluation: (e^-2 * 0 + e^-1 * 1) / (e^-2 + e^-1).
        let data = dataset(&[(&[0.0], 0), (&[1.0], 1), (&[2.0], 0)]);
        let i = (0..3).find(|&i| data.input(i).as_slice() == [2.0]).unwrap();
        let expected = (-1.0f64).exp() / ((-2.0f64).exp() + (-1.0f64).exp());
        assert_relative_eq!(expected, 0.731_058_578_630_004_9, epsilon = 1e-15);
        assert_relative_eq!(loo_score(&w, &data, i).unwrap().value, expected, epsilon = 1e-15);
    }

    #[test]
    fn loo_score_needs_two_points() {
        let data = dataset(&[(&[0.0], 1)]);
        assert!(loo_score(&wt(&[1.0]), &data, 0).is_err());
    }

    #[test]
    fn test_score_examples() {
        let w = wt(&[1.0]);
        let data = dataset(&[(&[0.0], 1), (&[40.0], 0), (&[-40.0], 0)]);
        let z = test_score(&w, &data, &pt(&[0.0])).unwrap();
        assert!(z.value > 1.0 - 1e-15 && !z.fallback);

        let data = dataset(&[(&[-1.0], 0), (&[1.0], 1)]);
        assert_eq!(test_score(&w, &data, &pt(&[0.0])).unwrap().value, 0.5);

        let data = dataset(&[(&[0.0], 0), (&[1.0], 1)]);
        let expected = (-1.0f64).exp() / ((-2.0f64).exp() + (-1.0f64).exp());
        assert_relative_eq!(
            test_score(&w, &data, &pt(&[2.0])).unwrap().value,
            expected,
            epsilon = 1e-15
        );
    }

    #[test]
    fn far_test_point_falls_back_to_prior() {
        let w = wt(&[1.0]);
        let data = dataset(&[(&[0.0], 0), (&[0.1], 0), (&[0.2], 0), (&[1.0], 1)]);
        let z = test_score(&w, &data, &pt(&[1e6])).unwrap();
        assert!(z.fallback);
        assert_eq!(z.value, 0.25);
    }

    #[test]
    fn uniform_link_clamps() {
        let link = LinkFunction::default();
        assert_eq!(link_apply(&link, 0.5), (0.5, 1.0));
        assert_eq!(link_apply(&link, 0.0), (1e-9, 1.0));
        assert_eq!(link_apply(&link, 1.0), (1.0 - 1e-9, 1.0));
    }
}
