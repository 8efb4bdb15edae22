//! Error rates, ROC curves and AUC, cross-validation and the Friedman rank
//! statistic.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::{stratified_folds, LabeledDataset};
use crate::ensemble::PipelineConfig;
use crate::error::{Error, Result};
use crate::exec;
use crate::model::parse_num;
use crate::pipeline::Classifier;
use crate::seed;

/// Number of false-alarm grid points used when averaging curves.
pub const AVERAGE_GRID_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTestSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredTestSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.len(),
                found: labels.len(),
            });
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidValue("labels must be 0 or 1".into()));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::InvalidValue("scores must not be NaN".into()));
        }
        Ok(ScoredTestSet { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y == 1).count();
        (self.len() - pos, pos)
    }
}

/// False-alarm and mis-detection rates at one threshold. A rate whose class
/// is absent from the test set is reported as 0 and flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRates {
    pub false_alarm: f64,
    pub mis_detection: f64,
    pub false_alarm_undefined: bool,
    pub mis_detection_undefined: bool,
}

/// A point is predicted positive iff its score exceeds `threshold`.
pub fn fa_md(scored: &ScoredTestSet, threshold: f64) -> ErrorRates {
    let (neg, pos) = scored.class_counts();
    let mut false_pos = 0usize;
    let mut false_neg = 0usize;
    for (&s, &y) in scored.scores.iter().zip(&scored.labels) {
        let predicted = s > threshold;
        match (y, predicted) {
            (0, true) => false_pos += 1,
            (1, false) => false_neg += 1,
            _ => {}
        }
    }
    let rate = |k: usize, total: usize| if total == 0 { 0.0 } else { k as f64 / total as f64 };
    ErrorRates {
        false_alarm: rate(false_pos, neg),
        mis_detection: rate(false_neg, pos),
        false_alarm_undefined: neg == 0,
        mis_detection_undefined: pos == 0,
    }
}

/// (false alarm, detection power) pairs from (0,0) to (1,1).
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

impl RocCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let ok_ends = points.first() == Some(&(0.0, 0.0)) && points.last() == Some(&(1.0, 1.0));
        let monotone = points
            .windows(2)
            .all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        if !ok_ends || !monotone {
            return Err(Error::InvalidValue(
                "ROC points must be non-decreasing from (0,0) to (1,1)".into(),
            ));
        }
        Ok(RocCurve { points })
    }

    /// Delimited text with an `FA,DP` header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("FA,DP\n");
        for (fa, dp) in &self.points {
            writeln!(s, "{fa:?},{dp:?}").unwrap();
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some("FA,DP") {
            return Err(Error::Format("ROC file must start with an FA,DP header".into()));
        }
        let points = lines
            .map(|line| {
                let (fa, dp) = line
                    .split_once(',')
                    .ok_or_else(|| Error::Format(format!("`{line}` is not an FA,DP pair")))?;
                Ok((parse_num(fa, "false alarm")?, parse_num(dp, "detection power")?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }
}

/// One ROC point per distinct score, swept from above the largest score to
/// below the smallest. Points with equal scores enter together.
pub fn roc_curve(scored: &ScoredTestSet) -> RocCurve {
    let (neg, pos) = scored.class_counts();
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored.scores[b].total_cmp(&scored.scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scored.scores[order[i]];
        while i < order.len() && scored.scores[order[i]] == s {
            if scored.labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let fa = if neg == 0 { 0.0 } else { fp as f64 / neg as f64 };
        let dp = if pos == 0 { 0.0 } else { tp as f64 / pos as f64 };
        points.push((fa, dp));
    }
    if points.last() != Some(&(1.0, 1.0)) {
        // A missing class leaves its rate at 0; close the curve.
        points.push((1.0, 1.0));
    }
    RocCurve { points }
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Highest detection power reachable at false alarm `fa`, linearly
/// interpolated between the curve's points.
fn dp_at(curve: &RocCurve, fa: f64) -> f64 {
    let pts = &curve.points;
    let mut best = f64::NEG_INFINITY;
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if fa < x0 || fa > x1 {
            continue;
        }
        let y = if x1 == x0 {
            y1
        } else {
            y0 + (y1 - y0) * (fa - x0) / (x1 - x0)
        };
        best = best.max(y);
    }
    best
}

/// Vertical averaging: detection power at 101 equispaced false-alarm values,
/// averaged across curves.
pub fn average_roc(curves: &[RocCurve]) -> Result<RocCurve> {
    if curves.is_empty() {
        return Err(Error::InvalidValue("nothing to average".into()));
    }
    let m = AVERAGE_GRID_POINTS - 1;
    let mut points = vec![(0.0, 0.0)];
    for k in 0..=m {
        let fa = k as f64 / m as f64;
        let dp = curves.iter().map(|c| dp_at(c, fa)).sum::<f64>() / curves.len() as f64;
        points.push((fa, dp.clamp(0.0, 1.0)));
    }
    if points[1] == (0.0, 0.0) {
        points.remove(0);
    }
    let last = points.len() - 1;
    points[last].1 = 1.0;
    RocCurve::new(points)
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub scored: ScoredTestSet,
    pub curve: RocCurve,
    pub auc: f64,
    /// Members that stopped without meeting a convergence criterion.
    pub unconverged_members: usize,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub mean_auc: f64,
    /// Sample standard deviation of the per-fold AUCs.
    pub stdev_auc: f64,
    pub average_curve: RocCurve,
}

impl CvReport {
    /// `mean (stdev)` in percent with two decimals.
    pub fn summary(&self) -> String {
        format!("{:.2} ({:.2})", 100.0 * self.mean_auc, 100.0 * self.stdev_auc)
    }
}

/// Mean and sample standard deviation.
pub fn mean_stdev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Stratified k-fold evaluation of the full pipeline. Each training split is
/// normalized on its own; the held-out split reuses that scale.
pub fn cross_validate(
    data: &LabeledDataset,
    folds: usize,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<CvReport> {
    if folds < 2 {
        return Err(Error::InvalidValue("cross-validation needs at least 2 folds".into()));
    }
    let parts = stratified_folds(data, folds, seed::derive_seed(seed, "folds"))?;
    let mut splits = Vec::with_capacity(folds);
    for (f, test) in parts.iter().enumerate() {
        let mut in_test = vec![false; data.len()];
        for &i in test {
            in_test[i] = true;
        }
        let train: Vec<usize> = (0..data.len()).filter(|&i| !in_test[i]).collect();
        let train = data.subset(&train)?;
        let test = data.subset(test)?;
        for (split, d) in [("training", &train), ("test", &test)] {
            if d.n_majority() == 0 {
                return Err(Error::DegenerateFold { fold: f, class: "majority", split });
            }
            if d.n_minority() == 0 {
                return Err(Error::DegenerateFold { fold: f, class: "minority", split });
            }
        }
        splits.push((train, test));
    }
    let results = exec::map_indexed(folds, |f| -> Result<FoldResult> {
        let (train, test) = &splits[f];
        let clf = Classifier::fit(train, cfg, seed::derive_seed(seed, &format!("fold/{f}")))?;
        let scores = clf.predict_all(test.inputs())?;
        let scored = ScoredTestSet::new(scores, test.labels())?;
        let curve = roc_curve(&scored);
        Ok(FoldResult {
            fold: f,
            auc: auc(&curve),
            curve,
            scored,
            unconverged_members: clf.ensemble.members.iter().filter(|m| !m.converged()).count(),
        })
    });
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let aucs: Vec<f64> = folds.iter().map(|f| f.auc).collect();
    let (mean_auc, stdev_auc) = mean_stdev(&aucs);
    let curves: Vec<RocCurve> = folds.iter().map(|f| f.curve.clone()).collect();
    Ok(CvReport {
        average_curve: average_roc(&curves)?,
        folds,
        mean_auc,
        stdev_auc,
    })
}

/// `12 m_d / (m_a (m_a + 1)) * (sum of squared rank means - m_a (m_a + 1)^2 / 4)`.
pub fn friedman_statistic(rank_means: &[f64], m_d: usize) -> Result<f64> {
    let m_a = rank_means.len();
    if m_a < 2 || m_d < 1 {
        return Err(Error::InvalidValue(
            "need at least two algorithms and one test set".into(),
        ));
    }
    let a = m_a as f64;
    let sum_sq: f64 = rank_means.iter().map(|q| q * q).sum();
    Ok(12.0 * m_d as f64 / (a * (a + 1.0)) * (sum_sq - a * (a + 1.0).powi(2) / 4.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankMatrix {
    pub values: Vec<Vec<f64>>,
    /// Per-row ranks; the largest value gets rank `m_a`, ties share the
    /// average rank.
    pub ranks: Vec<Vec<f64>>,
    pub column_means: Vec<f64>,
}

fn rank_row(row: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
    let mut ranks = vec![0.0; row.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && row[order[j + 1]] == row[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn rank_matrix(table: &[Vec<f64>]) -> Result<RankMatrix> {
    let m_a = table.first().map_or(0, Vec::len);
    if table.is_empty() || m_a == 0 {
        return Err(Error::InvalidValue("the AUC table is empty".into()));
    }
    if let Some(row) = table.iter().find(|r| r.len() != m_a) {
        return Err(Error::DimensionMismatch {
            expected: m_a,
            found: row.len(),
        });
    }
    if table.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::InvalidValue("the AUC table contains NaN".into()));
    }
    let ranks: Vec<Vec<f64>> = table.iter().map(|r| rank_row(r)).collect();
    let column_means = (0..m_a)
        .map(|c| ranks.iter().map(|r| r[c]).sum::<f64>() / ranks.len() as f64)
        .collect();
    Ok(RankMatrix {
        values: table.to_vec(),
        ranks,
        column_means,
    })
}

/// One row of an AUC results table.
#[derive(Debug, Clone, PartialEq)]
pub struct AucRecord {
    pub dataset: String,
    pub fold: usize,
    pub algorithm: String,
    pub auc: f64,
}

pub fn auc_table_to_csv(records: &[AucRecord]) -> String {
    let mut s = String::from("dataset,fold,algorithm,auc\n");
    for r in records {
        writeln!(s, "{},{},{},{:?}", r.dataset, r.fold, r.algorithm, r.auc).unwrap();
    }
    s
}

pub fn parse_auc_table(text: &str) -> Result<Vec<AucRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("AUC table has no `{name}` column")))
    };
    let (cd, cf, ca, cv) = (col("dataset")?, col("fold")?, col("algorithm")?, col("auc")?);
    let mut out = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: r + 1,
            column: String::new(),
            message: e.to_string(),
        })?;
        let cell = |c: usize, name: &str| -> Result<&str> {
            rec.get(c).ok_or_else(|| Error::Parse {
                row: r + 1,
                column: name.into(),
                message: "missing value".into(),
            })
        };
        let fold = cell(cf, "fold")?.parse().map_err(|_| Error::Parse {
            row: r + 1,
            column: "fold".into(),
            message: "not a fold index".into(),
        })?;
        let auc: f64 = cell(cv, "auc")?.parse().map_err(|_| Error::Parse {
            row: r + 1,
            column: "auc".into(),
            message: "not a number".into(),
        })?;
        out.push(AucRecord {
            dataset: cell(cd, "dataset")?.to_string(),
            fold,
            algorithm: cell(ca, "algorithm")?.to_string(),
            auc,
        });
    }
    Ok(out)
}

/// Test sets (dataset, fold) by algorithms. Algorithms keep their order of
/// first appearance; rows are sorted. Every cell must be present exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct AucPivot {
    pub rows: Vec<(String, usize)>,
    pub algorithms: Vec<String>,
    pub table: Vec<Vec<f64>>,
}

pub fn pivot_auc_table(records: &[AucRecord]) -> Result<AucPivot> {
    let mut algorithms: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, usize), BTreeMap<usize, f64>> = BTreeMap::new();
    for r in records {
        let a = match algorithms.iter().position(|x| x == &r.algorithm) {
            Some(a) => a,
            None => {
                algorithms.push(r.algorithm.clone());
                algorithms.len() - 1
            }
        };
        let row = cells.entry((r.dataset.clone(), r.fold)).or_default();
        if row.insert(a, r.auc).is_some() {
            return Err(Error::Format(format!(
                "duplicate entry for dataset {}, fold {}, algorithm {}",
                r.dataset, r.fold, r.algorithm
            )));
        }
    }
    let mut rows = Vec::with_capacity(cells.len());
    let mut table = Vec::with_capacity(cells.len());
    for ((dataset, fold), row) in cells {
        let mut values = Vec::with_capacity(algorithms.len());
        for (a, name) in algorithms.iter().enumerate() {
            let v = row.get(&a).ok_or_else(|| {
                Error::Format(format!(
                    "missing entry for dataset {dataset}, fold {fold}, algorithm {name}"
                ))
            })?;
            values.push(*v);
        }
        rows.push((dataset, fold));
        table.push(values);
    }
    if table.is_empty() {
        return Err(Error::Format("the AUC table has no rows".into()));
    }
    Ok(AucPivot {
        rows,
        algorithms,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn set(scores: &[f64], labels: &[u8]) -> ScoredTestSet {
        ScoredTestSet::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    fn mann_whitney(s: &ScoredTestSet) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0usize;
        for (i, &yi) in s.labels().iter().enumerate() {
            for (j, &yj) in s.labels().iter().enumerate() {
                if yi == 1 && yj == 0 {
                    pairs += 1;
                    let (a, b) = (s.scores()[i], s.scores()[j]);
                    total += if a > b {
                        1.0
                    } else if a == b {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        total / pairs as f64
    }

    /// Thresholds at every distinct score plus midpoints and sentinels,
    /// evaluated one at a time through the error rates.
    fn dense_sweep(s: &ScoredTestSet) -> Vec<(f64, f64)> {
        let mut distinct: Vec<f64> = s.scores().to_vec();
        distinct.sort_by(|a, b| b.total_cmp(a));
        distinct.dedup();
        let mut thresholds = vec![distinct[0] + 1.0];
        for w in distinct.windows(2) {
            thresholds.push((w[0] + w[1]) / 2.0);
        }
        thresholds.push(distinct[distinct.len() - 1] - 1.0);
        thresholds
            .iter()
            .map(|&t| {
                let r = fa_md(s, t);
                (r.false_alarm, 1.0 - r.mis_detection)
            })
            .collect()
    }

    fn random_set(rng: &mut impl Rng, n: usize) -> ScoredTestSet {
        let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // Coarse scores so ties occur.
        let scores = (0..n).map(|_| rng.gen_range(0..8) as f64 / 8.0).collect();
        ScoredTestSet::new(scores, labels).unwrap()
    }

    #[test]
    fn rates_examples() {
        let s = set(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]);
        let r = fa_md(&s, 0.5);
        assert_eq!((r.false_alarm, r.mis_detection), (0.0, 0.0));
        let r = fa_md(&s, f64::NEG_INFINITY);
        assert_eq!((r.false_alarm, r.mis_detection), (1.0, 0.0));
        let r = fa_md(&set(&[0.9, 0.2], &[0, 1]), 0.5);
        assert_eq!((r.false_alarm, r.mis_detection), (1.0, 1.0));
        let r = fa_md(&set(&[0.9], &[1]), 0.5);
        assert!(r.false_alarm_undefined && !r.mis_detection_undefined);
        assert_eq!(r.false_alarm, 0.0);
    }

    #[test]
    fn curve_examples() {
        let c = roc_curve(&set(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]));
        assert!(c.points.contains(&(0.0, 1.0)));
        assert_eq!(auc(&c), 1.0);
        let c = roc_curve(&set(&[0.3; 5], &[0, 1, 0, 1, 1]));
        assert_eq!(c.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc(&c), 0.5);
    }

    #[test]
    fn curve_matches_dense_threshold_sweep() {
        let mut rng = seed::rng(4);
        for _ in 0..50 {
            let s = random_set(&mut rng, 20);
            let (got, want) = (roc_curve(&s).points, dense_sweep(&s));
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                assert!((g.0 - w.0).abs() < 1e-12 && (g.1 - w.1).abs() < 1e-12, "{got:?} {want:?}");
            }
        }
    }

    #[test]
    fn auc_is_mann_whitney() {
        let mut rng = seed::rng(5);
        for _ in 0..300 {
            let n = rng.gen_range(2..=50);
            let s = random_set(&mut rng, n);
            assert!((auc(&roc_curve(&s)) - mann_whitney(&s)).abs() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn curve_properties(
            raw in prop::collection::vec((0.0f64..1.0, 0u8..2), 2..40)
        ) {
            let mut raw = raw;
            raw[0].1 = 0;
            raw[1].1 = 1;
            let s = set(&raw.iter().map(|r| r.0).collect::<Vec<_>>(), &raw.iter().map(|r| r.1).collect::<Vec<_>>());
            let c = roc_curve(&s);
            prop_assert!(RocCurve::new(c.points.clone()).is_ok());

            // Strictly increasing transform.
            let t = set(&s.scores().iter().map(|v| (3.0 * v).exp()).collect::<Vec<_>>(), s.labels());
            prop_assert_eq!(&roc_curve(&t).points, &c.points);

            let flipped = set(&s.scores().iter().map(|v| 1.0 - v).collect::<Vec<_>>(), s.labels());
            prop_assert!((auc(&roc_curve(&flipped)) - (1.0 - auc(&c))).abs() < 1e-12);

            // Any operating point lies on or below the staircase.
            for &th in s.scores() {
                let r = fa_md(&s, th);
                let dp = 1.0 - r.mis_detection;
                prop_assert!(dp <= dp_at(&c, r.false_alarm) + 1e-12);
            }
        }
    }

    #[test]
    fn averaging_examples() {
        let c = RocCurve::new(vec![(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]).unwrap();
        let avg = average_roc(std::slice::from_ref(&c)).unwrap();
        for &(fa, dp) in &avg.points[1..] {
            assert_eq!(dp, dp_at(&c, fa));
        }
        assert_eq!(average_roc(&[c.clone(), c.clone()]).unwrap(), avg);

        let up = RocCurve::new(vec![(0.0, 0.0), (0.5, 0.75), (1.0, 1.0)]).unwrap();
        let down = RocCurve::new(vec![(0.0, 0.0), (0.5, 0.25), (1.0, 1.0)]).unwrap();
        let avg = average_roc(&[up, down]).unwrap();
        assert_eq!(avg.points.len(), AVERAGE_GRID_POINTS);
        for &(fa, dp) in &avg.points {
            assert!((fa - dp).abs() < 1e-12);
        }
        assert!(average_roc(&[]).is_err());
    }

    #[test]
    fn roc_csv_round_trip() {
        let c = roc_curve(&set(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]));
        let back = RocCurve::parse_csv(&c.to_csv()).unwrap();
        assert_eq!(back, c);
        assert!(RocCurve::parse_csv("x,y\n0,0\n").is_err());
    }

    #[test]
    fn friedman_examples() {
        assert_eq!(friedman_statistic(&[2.0; 3], 10).unwrap(), 0.0);
        assert_eq!(friedman_statistic(&[2.0, 1.0], 7).unwrap(), 7.0);
        let f = friedman_statistic(&[3.24, 3.13, 2.07, 3.31, 3.24], 45).unwrap();
        let sum_sq = 3.24f64.powi(2) * 2.0 + 3.13f64.powi(2) + 2.07f64.powi(2) + 3.31f64.powi(2);
        assert!((f - 18.0 * (sum_sq - 45.0)).abs() < 1e-9);
        let g = friedman_statistic(&[3.31, 2.07, 3.24, 3.24, 3.13], 45).unwrap();
        assert!((f - g).abs() < 1e-12);
        assert!(friedman_statistic(&[1.0], 3).is_err());
    }

    #[test]
    fn ranking_examples() {
        let m = rank_matrix(&[vec![0.9, 0.8, 0.7], vec![0.8, 0.8, 0.1]]).unwrap();
        assert_eq!(m.ranks[0], vec![3.0, 2.0, 1.0]);
        assert_eq!(m.ranks[1], vec![2.5, 2.5, 1.0]);
        let same = rank_matrix(&[vec![0.5; 4], vec![0.7; 4]]).unwrap();
        assert!(same.column_means.iter().all(|&q| q == 2.5));
        assert!(rank_matrix(&[vec![0.1, 0.2], vec![0.3]]).is_err());
    }

    #[test]
    fn auc_table_pivot() {
        let recs = vec![
            AucRecord { dataset: "b".into(), fold: 0, algorithm: "x".into(), auc: 0.5 },
            AucRecord { dataset: "b".into(), fold: 0, algorithm: "y".into(), auc: 0.6 },
            AucRecord { dataset: "a".into(), fold: 1, algorithm: "y".into(), auc: 0.7 },
            AucRecord { dataset: "a".into(), fold: 1, algorithm: "x".into(), auc: 0.8 },
        ];
        let back = parse_auc_table(&auc_table_to_csv(&recs)).unwrap();
        assert_eq!(back, recs);
        let p = pivot_auc_table(&recs).unwrap();
        assert_eq!(p.algorithms, vec!["x", "y"]);
        assert_eq!(p.rows, vec![("a".into(), 1), ("b".into(), 0)]);
        assert_eq!(p.table, vec![vec![0.8, 0.7], vec![0.5, 0.6]]);

        let err = pivot_auc_table(&recs[..3]).unwrap_err().to_string();
        assert!(err.contains("dataset a, fold 1, algorithm x"), "{err}");
    }

    #[test]
    fn summary_statistics() {
        let (m, s) = mean_stdev(&[0.9, 0.95, 1.0]);
        assert!((m - 0.95).abs() < 1e-15);
        assert!((s - 0.05).abs() < 1e-15);
        assert_eq!(mean_stdev(&[0.7]), (0.7, 0.0));
    }
}
