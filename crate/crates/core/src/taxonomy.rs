//! Two-class k-means taxonomy of hashtag trajectories.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const RESTARTS: usize = 50;
const MAX_ITER: usize = 300;

/// Raw trajectory features of one hashtag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<F> {
    pub tag: String,
    pub growth: F,
    pub persistence: F,
    pub final_size: F,
}

impl<F: Real> FeatureVector<F> {
    pub fn new(tag: impl Into<String>, growth: F, persistence: F, final_size: F) -> Self {
        Self {
            tag: tag.into(),
            growth,
            persistence,
            final_size,
        }
    }

    fn raw(&self) -> [F; 3] {
        [self.growth, self.persistence, self.final_size]
    }
}

/// Z-scores (sample standard deviation); zero-variance columns map to 0.
pub fn standardize<F: Real>(features: &[FeatureVector<F>]) -> Vec<Vec<F>> {
    let n = features.len();
    if n == 0 {
        return Vec::new();
    }
    let nf = F::from_count(n);
    let mut means = [F::zero(); 3];
    let mut sds = [F::zero(); 3];
    for j in 0..3 {
        means[j] = features.iter().map(|f| f.raw()[j]).sum::<F>() / nf;
        if n > 1 {
            let ss: F = features.iter().map(|f| (f.raw()[j] - means[j]).powi(2)).sum();
            sds[j] = (ss / F::from_count(n - 1)).sqrt();
        }
    }
    features
        .iter()
        .map(|f| {
            let r = f.raw();
            (0..3)
                .map(|j| {
                    if sds[j] > F::zero() {
                        (r[j] - means[j]) / sds[j]
                    } else {
                        F::zero()
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel<F> {
    pub k: usize,
    /// Centroids in standardized coordinates.
    pub centroids: Vec<Vec<F>>,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares of the winning restart.
    pub wss: F,
    pub restart: usize,
    /// Every point coincides: a single effective cluster.
    pub degenerate: bool,
    pub standardized: Vec<Vec<F>>,
}

fn dist2<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest<F: Real>(p: &[F], centroids: &[Vec<F>]) -> (usize, F) {
    let mut best = (0, F::infinity());
    for (c, ctr) in centroids.iter().enumerate() {
        let d = dist2(p, ctr);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus<F: Real>(points: &[Vec<F>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<F>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    while centroids.len() < k {
        let d: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1.as_f64()).collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &di) in d.iter().enumerate() {
                if target < di {
                    idx = i;
                    break;
                }
                target -= di;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[pick].clone());
    }
    centroids
}

fn lloyd<F: Real>(points: &[Vec<F>], mut centroids: Vec<Vec<F>>) -> (Vec<Vec<F>>, Vec<usize>, F) {
    let k = centroids.len();
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITER {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![F::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for j in 0..dim {
                sums[l][j] += p[j];
            }
        }
        for c in 0..k {
            // an emptied cluster keeps its previous centroid
            if counts[c] > 0 {
                let nc = F::from_count(counts[c]);
                centroids[c] = sums[c].iter().map(|&s| s / nc).collect();
            }
        }
    }
    let wss = points.iter().zip(&labels).map(|(p, &l)| dist2(p, &centroids[l])).sum();
    (centroids, labels, wss)
}

/// k-means++ with `restarts` seeded restarts; lowest WSS wins, then lowest restart index.
pub fn kmeans<F: Real>(points: &[Vec<F>], k: usize, restarts: usize, seed: u64) -> Result<(Vec<Vec<F>>, Vec<usize>, F, usize)> {
    if k == 0 || points.len() < k {
        return Err(Error::data(format!("k-means needs at least k = {k} points, got {}", points.len())));
    }
    let runs: Vec<(usize, Vec<Vec<F>>, Vec<usize>, F)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let init = plus_plus(points, k, &mut rng);
            let (c, l, w) = lloyd(points, init);
            (r, c, l, w)
        })
        .collect();
    let (r, c, l, w) = runs
        .into_iter()
        .min_by(|a, b| a.3.partial_cmp(&b.3).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)))
        .expect("at least one restart");
    Ok((c, l, w, r))
}

/// Clusters standardized features into `k` groups.
pub fn cluster<F: Real>(features: &[FeatureVector<F>], k: usize, seed: u64) -> Result<ClusterModel<F>> {
    if features.len() < k {
        return Err(Error::data(format!(
            "cannot form {k} clusters from {} hashtags",
            features.len()
        )));
    }
    let z = standardize(features);
    let degenerate = z.iter().all(|p| dist2(p, &z[0]) == F::zero());
    if degenerate {
        return Ok(ClusterModel {
            k,
            centroids: vec![z[0].clone(); k],
            labels: vec![0; z.len()],
            wss: F::zero(),
            restart: 0,
            degenerate,
            standardized: z,
        });
    }
    let (centroids, labels, wss, restart) = kmeans(&z, k, RESTARTS, seed)?;
    Ok(ClusterModel {
        k,
        centroids,
        labels,
        wss,
        restart,
        degenerate,
        standardized: z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryClass {
    Winner,
    AlsoRan,
}

impl TrajectoryClass {
    pub const ALL: [TrajectoryClass; 2] = [TrajectoryClass::Winner, TrajectoryClass::AlsoRan];

    pub fn as_str(&self) -> &'static str {
        match self {
            TrajectoryClass::Winner => "winner",
            TrajectoryClass::AlsoRan => "also_ran",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            TrajectoryClass::Winner => "Winner",
            TrajectoryClass::AlsoRan => "Also-ran",
        }
    }
}

impl fmt::Display for TrajectoryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAssignment<F> {
    pub tag: String,
    pub class: TrajectoryClass,
    pub cluster: usize,
    /// Distance to each centroid in standardized space.
    pub distances: Vec<F>,
}

/// Names the cluster with the larger mean final size (then larger mean growth) the winners.
///
/// A degenerate model has no contrast to draw on and labels everything also-ran.
pub fn label_classes<F: Real>(model: &ClusterModel<F>, features: &[FeatureVector<F>]) -> Result<Vec<ClassAssignment<F>>> {
    if model.k != 2 {
        return Err(Error::data(format!("labelling needs 2 clusters, model has {}", model.k)));
    }
    if model.labels.len() != features.len() {
        return Err(Error::data("model and features differ in length"));
    }
    let winner_cluster = if model.degenerate {
        None
    } else {
        let mut stats: BTreeMap<usize, (F, F, usize)> = BTreeMap::new();
        for (f, &l) in features.iter().zip(&model.labels) {
            let e = stats.entry(l).or_insert((F::zero(), F::zero(), 0));
            e.0 += f.final_size;
            e.1 += f.growth;
            e.2 += 1;
        }
        let means: Vec<(usize, F, F)> = stats
            .into_iter()
            .map(|(c, (s, g, n))| (c, s / F::from_count(n), g / F::from_count(n)))
            .collect();
        means
            .iter()
            .max_by(|a, b| {
                a.1.partial_cmp(&b.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.2.partial_cmp(&b.2).unwrap_or(std::cmp::Ordering::Equal))
                    .then(b.0.cmp(&a.0))
            })
            .map(|m| m.0)
    };
    Ok(features
        .iter()
        .zip(&model.labels)
        .zip(&model.standardized)
        .map(|((f, &l), z)| ClassAssignment {
            tag: f.tag.clone(),
            class: if Some(l) == winner_cluster {
                TrajectoryClass::Winner
            } else {
                TrajectoryClass::AlsoRan
            },
            cluster: l,
            distances: model.centroids.iter().map(|c| dist2(z, c).sqrt()).collect(),
        })
        .collect())
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut ra: BTreeMap<usize, u64> = BTreeMap::new();
    let mut rb: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let c2 = |m: u64| (m * m.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.values().map(|&m| c2(m)).sum();
    let sa: f64 = ra.values().map(|&m| c2(m)).sum();
    let sb: f64 = rb.values().map(|&m| c2(m)).sum();
    let total = c2(n as u64);
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(tag: &str, g: f64, p: f64, s: f64) -> FeatureVector<f64> {
        FeatureVector::new(tag, g, p, s)
    }

    #[test]
    fn two_points_split() {
        let f = vec![fv("a", 1.0, 10.0, 100.0), fv("b", 5.0, 50.0, 900.0)];
        let m = cluster(&f, 2, 3).unwrap();
        assert_ne!(m.labels[0], m.labels[1]);
        let a = label_classes(&m, &f).unwrap();
        assert_eq!(a[1].class, TrajectoryClass::Winner);
        assert_eq!(a[0].class, TrajectoryClass::AlsoRan);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let f = vec![fv("a", 1.0, 1.0, 1.0); 4];
        let m = cluster(&f, 2, 0).unwrap();
        assert!(m.degenerate);
        assert!(m.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn too_few_points() {
        assert!(cluster(&[fv("a", 1.0, 1.0, 1.0)], 2, 0).is_err());
    }

    #[test]
    fn growth_breaks_final_size_tie() {
        let f = vec![fv("a", 1.0, 5.0, 100.0), fv("b", 9.0, 900.0, 100.0)];
        let model = ClusterModel {
            k: 2,
            centroids: vec![vec![0.0; 3], vec![1.0; 3]],
            labels: vec![0, 1],
            wss: 0.0,
            restart: 0,
            degenerate: false,
            standardized: standardize(&f),
        };
        let a = label_classes(&model, &f).unwrap();
        assert_eq!(a[1].class, TrajectoryClass::Winner);
    }

    #[test]
    fn standardized_moments() {
        let f: Vec<_> = (0..7).map(|i| fv("x", i as f64, (i * i) as f64, 3.0)).collect();
        let z = standardize(&f);
        for j in 0..2 {
            let mean: f64 = z.iter().map(|r| r[j]).sum::<f64>() / 7.0;
            let var: f64 = z.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
        assert!(z.iter().all(|r| r[2] == 0.0));
    }

    #[test]
    fn ari_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        let r = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!(r < 0.0);
    }

    #[test]
    fn same_seed_same_labels() {
        let f: Vec<_> = (0..30)
            .map(|i| fv("x", (i % 7) as f64, (i % 5) as f64 * 3.0, (i % 11) as f64))
            .collect();
        let a = cluster(&f, 2, 42).unwrap();
        let b = cluster(&f, 2, 42).unwrap();
        assert_eq!(a.labels, b.labels);
    }
}
