//! Cluster-based undersampling and the averaged ensemble.
//!
//! Majority inputs are partitioned by k-means; every ensemble member is
//! trained on one randomly drawn majority point per cluster together with
//! all minority points, and test-time probabilities are averaged across
//! members.

use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::lambda_search::{self, GridCell, LambdaGrid, Thresholds};
use crate::model::{self, FittedModel, Init, PenaltyConfig, SolverConfig};
use crate::seed;
use crate::similarity::{LinkFunction, Point};

const KMEANS_MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub centroids: Vec<Point>,
    /// Cluster index of each input point.
    pub memberships: Vec<usize>,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Point indices of each cluster, ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &c) in self.memberships.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(x, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds<R: Rng>(points: &[Point], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].as_slice().to_vec()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|x| sq_dist(x.as_slice(), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // Every remaining point coincides with a centre.
            Err(_) => {
                let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
                free[rng.gen_range(0..free.len())]
            }
        };
        chosen[next] = true;
        let c = points[next].as_slice().to_vec();
        for (i, x) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(x.as_slice(), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd iterations from k-means++ seeds until the assignment stops
/// changing (at most 100 rounds). Empty clusters take the point farthest
/// from its own centroid.
pub fn kmeans(points: &[Point], k: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::Contract(format!(
            "cannot form {k} clusters from {n} points"
        )));
    }
    let p = points[0].dim();
    if let Some(bad) = points.iter().find(|x| x.dim() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: bad.dim(),
        });
    }
    let mut rng = seed::rng(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let mut memberships = vec![usize::MAX; n];

    for _ in 0..KMEANS_MAX_ITERATIONS {
        let mut next: Vec<usize> = points
            .iter()
            .map(|x| nearest(x.as_slice(), &centroids).0)
            .collect();
        repair_empty(points, &mut next, &mut centroids);
        let changed = next != memberships;
        memberships = next;

        let mut sums = vec![vec![0.0; p]; k];
        let mut counts = vec![0usize; k];
        for (x, &c) in points.iter().zip(&memberships) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(x.as_slice()) {
                *s += v;
            }
        }
        for c in 0..k {
            for s in &mut sums[c] {
                *s /= counts[c] as f64;
            }
        }
        centroids = sums;
        if !changed {
            break;
        }
    }
    Ok(ClusterAssignment {
        centroids: centroids
            .into_iter()
            .map(Point::new)
            .collect::<Result<_>>()?,
        memberships,
    })
}

fn repair_empty(points: &[Point], memberships: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        for &c in memberships.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let donor = (0..points.len())
            .filter(|&i| counts[memberships[i]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(points[a].as_slice(), &centroids[memberships[a]]);
                let db = sq_dist(points[b].as_slice(), &centroids[memberships[b]]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("k <= n leaves a cluster with a spare point");
        memberships[donor] = empty;
        centroids[empty] = points[donor].as_slice().to_vec();
    }
}

/// `count` training sets, each holding one uniformly drawn majority point
/// per cluster and every minority point. `clusters` indexes the majority
/// block of `data`.
pub fn build_undersampled(
    data: &LabeledDataset,
    clusters: &ClusterAssignment,
    count: usize,
    seed: u64,
) -> Result<Vec<LabeledDataset>> {
    if clusters.memberships.len() != data.n_majority() {
        return Err(Error::Contract(format!(
            "clustering covers {} points but there are {} majority points",
            clusters.memberships.len(),
            data.n_majority()
        )));
    }
    let groups = clusters.clusters();
    (0..count)
        .map(|l| {
            let mut rng = seed::rng(seed::derive_seed(seed, &format!("member/{l}")));
            let mut indices: Vec<usize> = groups
                .iter()
                .map(|g| g[rng.gen_range(0..g.len())])
                .collect();
            indices.extend(data.n_majority()..data.len());
            data.subset(&indices)
        })
        .collect()
}

/// How the Lagrangian coefficients of each member are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaMode {
    Grid(LambdaGrid),
    Fixed { lambda1: f64, lambda2: f64 },
}

/// Everything needed to train an ensemble except the data and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Number of majority clusters; `None` uses [`default_clusters`].
    pub clusters: Option<usize>,
    pub members: usize,
    /// Absent points per member; `None` uses the input dimension.
    pub absent_count: Option<usize>,
    pub lambda: LambdaMode,
    /// Similarity-only classifier: zero coefficients, no absent points.
    pub esf: bool,
    pub link: LinkFunction,
    /// Tolerances and budget; the seed field is replaced per member.
    pub solver: SolverConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            clusters: None,
            members: 3,
            absent_count: None,
            lambda: LambdaMode::Grid(LambdaGrid::default()),
            esf: false,
            link: LinkFunction::default(),
            solver: SolverConfig::default(),
        }
    }
}

/// `min(n-, max(50, 3 n+))`.
pub fn default_clusters(n_majority: usize, n_minority: usize) -> usize {
    n_majority.min(50.max(3 * n_minority))
}

impl PipelineConfig {
    /// Cluster count actually used for `data`: the configured or default
    /// value, capped at the number of majority points.
    pub fn effective_clusters(&self, data: &LabeledDataset) -> usize {
        self.clusters
            .unwrap_or_else(|| default_clusters(data.n_majority(), data.n_minority()))
            .min(data.n_majority())
    }

    pub fn effective_absent_count(&self, p: usize) -> usize {
        if self.esf {
            0
        } else {
            self.absent_count.unwrap_or(p)
        }
    }
}

/// One trained member and how its coefficients were chosen.
#[derive(Debug, Clone)]
pub struct Member {
    pub model: FittedModel,
    pub esf: bool,
    pub thresholds: Option<Thresholds>,
    pub r_value: f64,
    pub cells: Vec<GridCell>,
    /// No grid cell converged.
    pub all_cells_failed: bool,
}

impl Member {
    pub fn converged(&self) -> bool {
        self.model.diagnostics.converged
    }

    pub fn data(&self) -> &LabeledDataset {
        &self.model.training
    }
}

#[derive(Debug, Clone)]
pub struct SbicEnsemble {
    pub members: Vec<Member>,
    pub priors: Vec<f64>,
    pub clustering: ClusterAssignment,
    pub seed: u64,
}

impl SbicEnsemble {
    pub fn dim(&self) -> usize {
        self.members[0].model.dim()
    }

    pub fn with_priors(mut self, priors: Vec<f64>) -> Result<Self> {
        if priors.len() != self.members.len() {
            return Err(Error::DimensionMismatch {
                expected: self.members.len(),
                found: priors.len(),
            });
        }
        let total: f64 = priors.iter().sum();
        if priors.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidValue(
                "priors must be nonnegative and sum to one".into(),
            ));
        }
        self.priors = priors;
        Ok(self)
    }
}

fn train_member(
    data: LabeledDataset,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Member> {
    let data = Arc::new(data);
    let solver = SolverConfig { seed, ..cfg.solver };
    let absent_count = cfg.effective_absent_count(data.dim());
    if cfg.esf {
        let model = model::solve_stationary(
            data.clone(),
            PenaltyConfig::unconstrained(),
            cfg.link,
            &solver,
            Init::Default { absent_count: 0 },
        )?;
        let r_value = model.objective();
        return Ok(Member {
            model,
            esf: true,
            thresholds: None,
            r_value,
            cells: Vec::new(),
            all_cells_failed: false,
        });
    }
    match &cfg.lambda {
        LambdaMode::Grid(grid) => {
            let sel = lambda_search::grid_select(data, grid, cfg.link, &solver, absent_count)?;
            Ok(Member {
                model: sel.model,
                esf: false,
                thresholds: Some(sel.thresholds),
                r_value: sel.r_value,
                cells: sel.cells,
                all_cells_failed: sel.all_failed,
            })
        }
        LambdaMode::Fixed { lambda1, lambda2 } => {
            let unconstrained = model::solve_stationary(
                data.clone(),
                PenaltyConfig::unconstrained(),
                cfg.link,
                &solver,
                Init::Default { absent_count: 0 },
            )?;
            let th = lambda_search::compute_thresholds(
                &unconstrained.weights,
                data.minority(),
                data.majority(),
                absent_count,
            )?;
            let penalty = PenaltyConfig::new(*lambda1, *lambda2, th.minority, th.majority)?;
            let init = if absent_count == 0 {
                Init::Given {
                    weights: unconstrained.weights.clone(),
                    absent: model::AbsentSet::empty(data.dim()),
                }
            } else {
                Init::Weights {
                    weights: unconstrained.weights.clone(),
                    absent_count,
                }
            };
            let model = model::solve_stationary(data, penalty, cfg.link, &solver, init)?;
            let r_value = model.objective();
            let converged = model.diagnostics.converged;
            Ok(Member {
                cells: vec![GridCell {
                    lambda1: *lambda1,
                    lambda2: *lambda2,
                    r_value,
                    residual_norm: model.diagnostics.residual_norm,
                    converged,
                }],
                model,
                esf: false,
                thresholds: Some(th),
                r_value,
                all_cells_failed: !converged,
            })
        }
    }
}

/// Clusters the majority inputs, draws the undersampled training sets and
/// fits one member per set. `data` should already be normalized.
pub fn train_ensemble(data: &LabeledDataset, cfg: &PipelineConfig, seed: u64) -> Result<SbicEnsemble> {
    if data.is_single_class() {
        return Err(Error::Contract("training data must contain both classes".into()));
    }
    if cfg.members == 0 {
        return Err(Error::InvalidValue("the ensemble needs at least one member".into()));
    }
    if let LambdaMode::Grid(grid) = &cfg.lambda {
        grid.validate()?;
    }
    let k = cfg.effective_clusters(data);
    let clustering = kmeans(data.majority(), k, seed::derive_seed(seed, "clustering"))?;
    let sets = build_undersampled(data, &clustering, cfg.members, seed::derive_seed(seed, "undersample"))?;
    let results = exec::map_indexed(sets.len(), |l| {
        train_member(
            sets[l].clone(),
            cfg,
            seed::derive_seed(seed, &format!("solver/{l}")),
        )
    });
    let mut members = Vec::with_capacity(results.len());
    let mut last_err = None;
    for r in results {
        match r {
            Ok(m) => members.push(m),
            Err(e) => last_err = Some(e),
        }
    }
    if members.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::Numerical("no member could be trained".into())));
    }
    let u = members.len();
    Ok(SbicEnsemble {
        members,
        priors: vec![1.0 / u as f64; u],
        clustering,
        seed,
    })
}

/// Prior-weighted average of the members' probabilities.
pub fn ensemble_predict(ens: &SbicEnsemble, x: &Point) -> Result<f64> {
    let mut total = 0.0;
    for (m, prior) in ens.members.iter().zip(&ens.priors) {
        total += prior * model::predict_proba(&m.model, x)?;
    }
    Ok(total.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_toy, normalize, Toy};
    use crate::model::{AbsentSet, SolveDiagnostics};
    use crate::similarity::SimilarityWeights;

    fn pt(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    fn cloud(n: usize, seed: u64) -> Vec<Point> {
        let mut rng = seed::rng(seed);
        (0..n)
            .map(|_| pt(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]))
            .collect()
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = cloud(30, 1);
        let c = kmeans(&pts, 1, 9).unwrap();
        for j in 0..2 {
            let mean = pts.iter().map(|x| x.as_slice()[j]).sum::<f64>() / 30.0;
            assert!((c.centroids[0].as_slice()[j] - mean).abs() < 1e-12);
        }
        assert!(c.memberships.iter().all(|&m| m == 0));
    }

    #[test]
    fn one_cluster_per_point() {
        let pts = cloud(12, 2);
        let c = kmeans(&pts, 12, 3).unwrap();
        let mut seen = c.memberships.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..12).collect::<Vec<_>>());
        for (i, &m) in c.memberships.iter().enumerate() {
            assert_eq!(c.centroids[m], pts[i]);
        }
    }

    #[test]
    fn duplicates_still_fill_every_cluster() {
        let mut pts = vec![pt(&[0.0, 0.0]); 5];
        pts.push(pt(&[1.0, 1.0]));
        let c = kmeans(&pts, 4, 0).unwrap();
        assert!(c.clusters().iter().all(|g| !g.is_empty()));
    }

    #[test]
    fn kmeans_is_seeded() {
        let pts = cloud(60, 4);
        assert_eq!(kmeans(&pts, 7, 11).unwrap(), kmeans(&pts, 7, 11).unwrap());
        assert!(kmeans(&pts, 61, 11).is_err());
        assert!(kmeans(&pts, 0, 11).is_err());
    }

    #[test]
    fn undersampled_sets_take_one_point_per_cluster() {
        let data = generate_toy(Toy::One, 5);
        let c = kmeans(data.majority(), 10, 1).unwrap();
        let sets = build_undersampled(&data, &c, 4, 2).unwrap();
        assert_eq!(sets.len(), 4);
        let groups = c.clusters();
        for s in &sets {
            assert_eq!((s.n_majority(), s.n_minority()), (10, 20));
            let mut per_cluster = [0; 10];
            for i in 0..s.n_majority() {
                let src = s.origin(i);
                per_cluster[c.memberships[src]] += 1;
                assert!(groups[c.memberships[src]].contains(&src));
            }
            assert!(per_cluster.iter().all(|&k| k == 1));
        }
    }

    #[test]
    fn singleton_clusters_reproduce_the_majority() {
        let data = generate_toy(Toy::One, 6);
        let c = kmeans(data.majority(), data.n_majority(), 1).unwrap();
        let sets = build_undersampled(&data, &c, 1, 2).unwrap();
        let mut origins: Vec<_> = (0..sets[0].n_majority()).map(|i| sets[0].origin(i)).collect();
        origins.sort_unstable();
        assert_eq!(origins, (0..data.n_majority()).collect::<Vec<_>>());
    }

    fn stub_member(data: Arc<LabeledDataset>, w: f64) -> Member {
        Member {
            model: FittedModel {
                weights: SimilarityWeights::new(vec![w]).unwrap(),
                absent: AbsentSet::empty(1),
                penalty: PenaltyConfig::unconstrained(),
                training: data,
                link: LinkFunction::default(),
                diagnostics: SolveDiagnostics {
                    residual_norm: 0.0,
                    residual_inf_norm: 0.0,
                    initial_residual_norm: 0.0,
                    iterations: 0,
                    converged: true,
                    restarted: false,
                },
            },
            esf: true,
            thresholds: None,
            r_value: 0.0,
            cells: Vec::new(),
            all_cells_failed: false,
        }
    }

    fn stub_ensemble(members: Vec<Member>) -> SbicEnsemble {
        let u = members.len();
        SbicEnsemble {
            members,
            priors: vec![1.0 / u as f64; u],
            clustering: ClusterAssignment {
                centroids: vec![pt(&[0.0])],
                memberships: vec![],
            },
            seed: 0,
        }
    }

    #[test]
    fn average_of_members() {
        // Members whose training sets give scores 0.2, 0.4 and 0.6 at x = 0:
        // the query is coincident with every training point (weight 0).
        let member_with = |minority: usize| {
            let inputs = vec![pt(&[0.0]); 5];
            let labels = (0..5).map(|i| u8::from(i < minority)).collect();
            stub_member(Arc::new(LabeledDataset::new(inputs, labels).unwrap()), 0.0)
        };
        let ens = stub_ensemble(vec![member_with(1), member_with(2), member_with(3)]);
        let got = ensemble_predict(&ens, &pt(&[0.0])).unwrap();
        assert!((got - 0.4).abs() < 1e-15, "{got}");

        let ens = stub_ensemble(vec![member_with(1), member_with(4)]);
        assert!((ensemble_predict(&ens, &pt(&[0.0])).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_member_is_identity() {
        let data = Arc::new(normalize(&generate_toy(Toy::Two, 1)).0.subset(&[0, 1, 2, 50, 51]).unwrap());
        let ens = stub_ensemble(vec![stub_member(data.clone(), 0.0)]);
        let m = &ens.members[0].model;
        let m = FittedModel {
            weights: SimilarityWeights::new(vec![0.0, 0.0]).unwrap(),
            absent: AbsentSet::empty(2),
            ..m.clone()
        };
        let ens = stub_ensemble(vec![Member { model: m.clone(), ..ens.members[0].clone() }]);
        for x in [pt(&[0.1, 0.2]), pt(&[-0.5, 0.3])] {
            assert_eq!(
                ensemble_predict(&ens, &x).unwrap(),
                model::predict_proba(&m, &x).unwrap()
            );
        }
    }

    #[test]
    fn priors_must_be_a_distribution() {
        let data = Arc::new(LabeledDataset::new(vec![pt(&[0.0]), pt(&[1.0])], vec![0, 1]).unwrap());
        let ens = stub_ensemble(vec![stub_member(data.clone(), 1.0), stub_member(data, 1.0)]);
        assert!(ens.clone().with_priors(vec![0.7, 0.4]).is_err());
        let ens = ens.with_priors(vec![0.25, 0.75]).unwrap();
        assert_eq!(ens.priors, vec![0.25, 0.75]);
    }

    #[test]
    fn default_cluster_rule() {
        assert_eq!(default_clusters(500, 10), 50);
        assert_eq!(default_clusters(500, 40), 120);
        assert_eq!(default_clusters(30, 40), 30);
    }

    #[test]
    fn training_is_deterministic() {
        let (data, _) = normalize(&generate_toy(Toy::One, 12));
        let cfg = PipelineConfig {
            clusters: Some(20),
            members: 2,
            absent_count: Some(2),
            lambda: LambdaMode::Grid(LambdaGrid::new(vec![0.1], vec![1.0, 5.0]).unwrap()),
            ..PipelineConfig::default()
        };
        let a = train_ensemble(&data, &cfg, 99).unwrap();
        let b = train_ensemble(&data, &cfg, 99).unwrap();
        assert_eq!(a.members.len(), 2);
        for (ma, mb) in a.members.iter().zip(&b.members) {
            assert_eq!(ma.model.weights, mb.model.weights);
            assert_eq!(ma.model.absent, mb.model.absent);
            assert_eq!(ma.data(), mb.data());
            assert_eq!(ma.data().n_majority(), 20);
        }
        let x = pt(&[0.2, 0.1]);
        let lo = a.members.iter().map(|m| model::predict_proba(&m.model, &x).unwrap()).fold(1.0, f64::min);
        let hi = a.members.iter().map(|m| model::predict_proba(&m.model, &x).unwrap()).fold(0.0, f64::max);
        let avg = ensemble_predict(&a, &x).unwrap();
        assert!(lo <= avg && avg <= hi);
        assert_eq!(avg, ensemble_predict(&b, &x).unwrap());
    }

    #[test]
    fn esf_members_have_no_absent_points() {
        let (data, _) = normalize(&generate_toy(Toy::One, 2));
        let cfg = PipelineConfig {
            clusters: Some(50),
            members: 1,
            esf: true,
            ..PipelineConfig::default()
        };
        let ens = train_ensemble(&data, &cfg, 1).unwrap();
        let m = &ens.members[0];
        assert!(m.esf && m.model.absent.is_empty());
        assert!(m.model.penalty.is_unconstrained());
    }
}
