//! K-means under the `1 - OVL` distance, maximizing the overlapping clustering index.
//!
//! A cluster's centroid is the Gaussian MLE of its pooled member draws, and the OCI
//! of a partition is `Σ_m Σ_{h ∈ G_m} OVL(p_h, g_m)`. Centroid draws use one fixed
//! seed per clustering run, so the OCI is a deterministic function of the partition
//! and k-means and the exhaustive oracle score partitions identically.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::{
    fit_gaussian_mle, GaussianCentroid, PosteriorDensity, DEFAULT_DRAWS_PER_MEMBER,
};
use crate::error::{Error, Result};
use crate::overlap::ovl;
use crate::rng::stream;

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_CENTROID_SEED: u64 = 0x00C1_u64;
pub const ORACLE_LIMIT: u128 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub draws_per_member: usize,
    pub centroid_seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            draws_per_member: DEFAULT_DRAWS_PER_MEMBER,
            centroid_seed: DEFAULT_CENTROID_SEED,
            restarts: DEFAULT_RESTARTS,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Assignment of sources to `k` clusters; cluster indices are 1-based and ordered by
/// increasing centroid mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
    pub centroids: Vec<GaussianCentroid>,
    pub oci: f64,
}

impl Partition {
    /// 0-based cluster label of each posterior, in input order.
    pub fn labels(&self, posteriors: &[PosteriorDensity]) -> Result<Vec<usize>> {
        posteriors
            .iter()
            .map(|p| {
                self.assignment
                    .get(&p.source_id)
                    .map(|c| c - 1)
                    .ok_or_else(|| {
                        Error::invalid(format!("source `{}` is not in the partition", p.source_id))
                    })
            })
            .collect()
    }

    /// Input indices of the members of each cluster.
    pub fn clusters(&self, posteriors: &[PosteriorDensity]) -> Result<Vec<Vec<usize>>> {
        let labels = self.labels(posteriors)?;
        let mut out = vec![Vec::new(); self.k];
        for (i, l) in labels.into_iter().enumerate() {
            out[l].push(i);
        }
        Ok(out)
    }

    /// Source ids of each cluster.
    pub fn member_ids(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.k];
        for (id, c) in &self.assignment {
            out[c - 1].push(id.clone());
        }
        out
    }
}

/// OCI of `partition` using its stored centroids.
pub fn oci(posteriors: &[PosteriorDensity], partition: &Partition) -> Result<f64> {
    let clusters = partition.clusters(posteriors)?;
    if partition.centroids.len() != partition.k {
        return Err(Error::invalid(
            "partition has the wrong number of centroids",
        ));
    }
    let mut total = 0.0;
    for (m, members) in clusters.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyCluster { cluster: m + 1 });
        }
        total += members
            .iter()
            .map(|&i| ovl(&posteriors[i], &partition.centroids[m]))
            .sum::<f64>();
    }
    Ok(total)
}

#[derive(Debug, Clone)]
struct Fitted {
    centroid: GaussianCentroid,
    /// OVL of the centroid with every posterior.
    ovl: Vec<f64>,
}

/// Clustering context over a fixed set of posteriors; caches centroid fits by member set.
pub struct Clusterer<'a> {
    posteriors: &'a [PosteriorDensity],
    cfg: ClusterConfig,
    cache: Mutex<HashMap<Vec<usize>, Fitted>>,
}

impl<'a> Clusterer<'a> {
    pub fn new(posteriors: &'a [PosteriorDensity], cfg: ClusterConfig) -> Result<Self> {
        if posteriors.is_empty() {
            return Err(Error::invalid("clustering needs at least one posterior"));
        }
        Ok(Self {
            posteriors,
            cfg,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    fn fitted(&self, members: &[usize]) -> Result<Fitted> {
        let mut key = members.to_vec();
        key.sort_unstable();
        if let Some(f) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(f.clone());
        }
        let refs: Vec<&PosteriorDensity> = key.iter().map(|&i| &self.posteriors[i]).collect();
        let centroid =
            fit_gaussian_mle(&refs, self.cfg.draws_per_member, self.cfg.centroid_seed)?.centroid;
        let ovl = self.posteriors.iter().map(|p| ovl(p, &centroid)).collect();
        let f = Fitted { centroid, ovl };
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, f.clone());
        Ok(f)
    }

    fn check_k(&self, k: usize) -> Result<()> {
        let h = self.posteriors.len();
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if k > h {
            return Err(Error::TooManyClusters { k, h });
        }
        Ok(())
    }

    fn groups(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            g[l].push(i);
        }
        g
    }

    fn score(&self, labels: &[usize], k: usize) -> Result<f64> {
        let mut total = 0.0;
        for (m, members) in Self::groups(labels, k).iter().enumerate() {
            if members.is_empty() {
                return Err(Error::EmptyCluster { cluster: m + 1 });
            }
            let f = self.fitted(members)?;
            total += members.iter().map(|&i| f.ovl[i]).sum::<f64>();
        }
        Ok(total)
    }

    /// Build a partition from 0-based labels in input order.
    pub fn partition(&self, labels: &[usize], k: usize) -> Result<Partition> {
        self.check_k(k)?;
        if labels.len() != self.posteriors.len() || labels.iter().any(|&l| l >= k) {
            return Err(Error::invalid(
                "labels must cover every posterior with values below k",
            ));
        }
        let groups = Self::groups(labels, k);
        let mut fits = Vec::with_capacity(k);
        let mut oci = 0.0;
        for (m, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::EmptyCluster { cluster: m + 1 });
            }
            let f = self.fitted(members)?;
            oci += members.iter().map(|&i| f.ovl[i]).sum::<f64>();
            fits.push((
                f.centroid,
                members
                    .iter()
                    .map(|&i| self.posteriors[i].source_id.as_str())
                    .min(),
            ));
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            fits[a]
                .0
                .mu
                .total_cmp(&fits[b].0.mu)
                .then_with(|| fits[a].1.cmp(&fits[b].1))
        });
        let mut rank = vec![0; k];
        for (r, &m) in order.iter().enumerate() {
            rank[m] = r;
        }
        let assignment = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| (self.posteriors[i].source_id.clone(), rank[l] + 1))
            .collect();
        Ok(Partition {
            k,
            assignment,
            centroids: order.iter().map(|&m| fits[m].0).collect(),
            oci,
        })
    }

    /// Best-OCI Lloyd run over `cfg.restarts` k-means++ restarts.
    pub fn kmeans(&self, k: usize, seed: u64) -> Result<Partition> {
        self.check_k(k)?;
        if self.cfg.restarts == 0 {
            return Err(Error::invalid("restarts must be at least 1"));
        }
        let runs: Vec<Result<(f64, Vec<usize>)>> = (0..self.cfg.restarts)
            .into_par_iter()
            .map(|r| self.lloyd(k, seed, r as u64))
            .collect();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for run in runs {
            let (score, labels) = run?;
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, labels));
            }
        }
        let (_, labels) = best.expect("at least one restart");
        self.partition(&labels, k)
    }

    fn lloyd(&self, k: usize, seed: u64, restart: u64) -> Result<(f64, Vec<usize>)> {
        let h = self.posteriors.len();
        let mut rng = stream(seed, restart);

        let first = rng.random_range(0..h);
        let mut centers: Vec<Fitted> = vec![self.fitted(&[first])?];
        let mut chosen = vec![first];
        while centers.len() < k {
            let d2: Vec<f64> = (0..h)
                .map(|i| {
                    if chosen.contains(&i) {
                        0.0
                    } else {
                        centers
                            .iter()
                            .map(|c| 1.0 - c.ovl[i])
                            .fold(f64::INFINITY, f64::min)
                            .max(0.0)
                            .powi(2)
                    }
                })
                .collect();
            let total: f64 = d2.iter().sum();
            let next = if total > 0.0 {
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = None;
                for (i, d) in d2.iter().enumerate() {
                    acc += d;
                    if *d > 0.0 && u < acc {
                        pick = Some(i);
                        break;
                    }
                }
                pick.unwrap_or_else(|| (0..h).rev().find(|&i| d2[i] > 0.0).expect("positive total"))
            } else {
                let free: Vec<usize> = (0..h).filter(|i| !chosen.contains(i)).collect();
                free[rng.random_range(0..free.len())]
            };
            chosen.push(next);
            centers.push(self.fitted(&[next])?);
        }

        let mut labels: Option<Vec<usize>> = None;
        for _ in 0..self.cfg.max_iter {
            let dist = |i: usize, m: usize| 1.0 - centers[m].ovl[i];
            let mut next: Vec<usize> = (0..h)
                .map(|i| {
                    let mut best = 0;
                    for m in 1..k {
                        if dist(i, m) < dist(i, best) {
                            best = m;
                        }
                    }
                    best
                })
                .collect();
            repair_empty(&mut next, k, &dist);
            if labels.as_ref() == Some(&next) {
                break;
            }
            centers = Self::groups(&next, k)
                .iter()
                .map(|g| self.fitted(g))
                .collect::<Result<_>>()?;
            labels = Some(next);
        }
        let labels = labels.expect("max_iter is at least one");
        Ok((self.score(&labels, k)?, labels))
    }

    /// Exact OCI-maximizing partition by enumerating every partition into `k` blocks.
    pub fn brute_force(&self, k: usize) -> Result<Partition> {
        self.check_k(k)?;
        let h = self.posteriors.len();
        let count = stirling2(h, k);
        if count > ORACLE_LIMIT {
            return Err(Error::OracleTooLarge {
                count,
                limit: ORACLE_LIMIT,
            });
        }
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut err = None;
        for_each_partition(h, k, &mut |labels| {
            if err.is_some() {
                return;
            }
            match self.score(labels, k) {
                Ok(s) => {
                    if best.as_ref().is_none_or(|(b, _)| s > *b) {
                        best = Some((s, labels.to_vec()));
                    }
                }
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        let (_, labels) = best.expect("at least one partition");
        self.partition(&labels, k)
    }
}

/// Move the point farthest from its centroid (taken from a cluster with spare members)
/// into each empty cluster.
fn repair_empty(labels: &mut [usize], k: usize, dist: &dyn Fn(usize, usize) -> f64) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far: Option<(usize, f64)> = None;
        for (i, &l) in labels.iter().enumerate() {
            if counts[l] > 1 {
                let d = dist(i, l);
                if far.is_none_or(|(_, fd)| d > fd) {
                    far = Some((i, d));
                }
            }
        }
        let (i, _) = far.expect("k <= H guarantees a cluster with spare members");
        labels[i] = empty;
    }
}

/// Stirling number of the second kind, saturating.
pub fn stirling2(n: usize, k: usize) -> u128 {
    let mut row = vec![0u128; k + 1];
    row[0] = 1;
    for i in 1..=n {
        for j in (1..=k.min(i)).rev() {
            row[j] = (j as u128)
                .saturating_mul(row[j])
                .saturating_add(row[j - 1]);
        }
        row[0] = 0;
    }
    row[k]
}

/// Visit every partition of `0..n` into exactly `k` nonempty blocks as a restricted
/// growth string.
fn for_each_partition(n: usize, k: usize, visit: &mut dyn FnMut(&[usize])) {
    fn rec(
        i: usize,
        used: usize,
        n: usize,
        k: usize,
        labels: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if i == n {
            if used == k {
                visit(labels);
            }
            return;
        }
        if k - used > n - i {
            return;
        }
        for l in 0..used.min(k) {
            labels.push(l);
            rec(i + 1, used, n, k, labels, visit);
            labels.pop();
        }
        if used < k {
            labels.push(used);
            rec(i + 1, used + 1, n, k, labels, visit);
            labels.pop();
        }
    }
    rec(0, 0, n, k, &mut Vec::with_capacity(n), visit);
}

pub fn kmeans_ovl(
    posteriors: &[PosteriorDensity],
    k: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
) -> Result<Partition> {
    let cfg = ClusterConfig {
        restarts,
        max_iter,
        ..ClusterConfig::default()
    };
    Clusterer::new(posteriors, cfg)?.kmeans(k, seed)
}

pub fn brute_force_best_partition(posteriors: &[PosteriorDensity], k: usize) -> Result<Partition> {
    Clusterer::new(posteriors, ClusterConfig::default())?.brute_force(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{Component, Repr};

    fn normals(means: &[f64], sd: f64) -> Vec<PosteriorDensity> {
        means
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                PosteriorDensity::new(
                    format!("s{i}"),
                    10,
                    Repr::Parametric(Component::Normal { mean: m, sd }),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn stirling_numbers() {
        assert_eq!(stirling2(5, 3), 25);
        assert_eq!(stirling2(8, 3), 966);
        assert_eq!(stirling2(4, 4), 1);
        assert_eq!(stirling2(3, 4), 0);
        let mut n = 0;
        for_each_partition(6, 3, &mut |_| n += 1);
        assert_eq!(n, 90);
    }

    #[test]
    fn single_member_oci() {
        let p = normals(&[0.6], 0.05);
        let part = kmeans_ovl(&p, 1, 1, 10, 100).unwrap();
        assert!((part.oci - 1.0).abs() < 0.02);
        assert!((oci(&p, &part).unwrap() - part.oci).abs() < 1e-12);
    }

    #[test]
    fn singletons_score_near_h() {
        let p = normals(&[0.1, 0.3, 0.5, 0.7], 0.03);
        let part = kmeans_ovl(&p, 4, 2, 10, 100).unwrap();
        assert!(part.oci >= 4.0 * 0.98);
    }

    #[test]
    fn kmeans_matches_oracle_on_small_instance() {
        let p = normals(&[0.1, 0.12, 0.5, 0.52, 0.9], 0.02);
        let km = kmeans_ovl(&p, 3, 7, 10, 100).unwrap();
        let bf = brute_force_best_partition(&p, 3).unwrap();
        assert!((km.oci - bf.oci).abs() < 1e-6);
        assert_eq!(km.assignment, bf.assignment);
        assert_eq!(
            bf.member_ids(),
            vec![vec!["s0", "s1"], vec!["s2", "s3"], vec!["s4"]]
        );
    }

    #[test]
    fn oracle_trivial_cases() {
        let p = normals(&[0.1, 0.5], 0.05);
        let bf = brute_force_best_partition(&p, 2).unwrap();
        assert_eq!(bf.member_ids(), vec![vec!["s0"], vec!["s1"]]);
        let one = kmeans_ovl(&normals(&[0.1, 0.5, 0.9], 0.05), 1, 3, 2, 10).unwrap();
        assert!(one.assignment.values().all(|&c| c == 1));
    }

    #[test]
    fn rejects_bad_k() {
        let p = normals(&[0.1, 0.5], 0.05);
        assert!(matches!(
            kmeans_ovl(&p, 3, 1, 1, 10),
            Err(Error::TooManyClusters { k: 3, h: 2 })
        ));
        let many = normals(&(0..12).map(|i| i as f64).collect::<Vec<_>>(), 0.5);
        assert!(matches!(
            brute_force_best_partition(&many, 5),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn repair_fills_empty_clusters() {
        let mut labels = vec![0, 0, 0, 1];
        let d = |i: usize, _m: usize| i as f64 * 0.1;
        repair_empty(&mut labels, 3, &d);
        assert_eq!(labels, vec![0, 0, 2, 1]);
    }

    #[test]
    fn json_shape() {
        let p = normals(&[0.1, 0.5], 0.05);
        let part = kmeans_ovl(&p, 2, 1, 2, 10).unwrap();
        let v = serde_json::to_value(&part).unwrap();
        assert_eq!(v["k"], 2);
        assert_eq!(v["assignment"]["s0"], 1);
        assert!(v["centroids"][0]["mu"].is_number());
        assert!(v["centroids"][0]["sigma"].is_number());
        assert!(v["oci"].is_number());
    }
}
