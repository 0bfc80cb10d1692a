//! Two-cluster K-means used alongside the MLP, either averaged with its
//! output or appended to its input.

use super::Standardizer;
use crate::nn::seeded_rng;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const MAX_ITERATIONS: usize = 300;
pub const CONVERGENCE_SHIFT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
    /// Class (0 benign, 1 attack) assigned to each cluster.
    pub class_map: Vec<u8>,
    pub iterations: usize,
    pub seed: u64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let d = dist2(c, x);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations. Each cluster's class is
/// the majority training label of its members (ties and empty clusters:
/// attack and benign respectively).
pub fn kmeans_fit(rows: &[Vec<f64>], labels: &[f64], k: usize, seed: u64) -> Result<KMeansModel> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let first = rows.first().ok_or(Error::EmptyDataset)?;
    if rows.iter().any(|r| r.len() != first.len()) {
        return Err(Error::ModelShape("ragged rows passed to k-means".into()));
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for r in rows {
        if !distinct.contains(&r) {
            distinct.push(r);
            if distinct.len() >= k {
                break;
            }
        }
    }
    if distinct.len() < k || (k > 1 && distinct.len() == 1) {
        return Err(Error::DegenerateClustering);
    }

    let mut rng = seeded_rng(seed);
    let mut centroids = vec![rows[rng.gen_range(0..rows.len())].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| dist2(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("at least k distinct points");
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        centroids.push(rows[pick].clone());
        for (d, r) in d2.iter_mut().zip(rows) {
            *d = d.min(dist2(r, centroids.last().unwrap()));
        }
    }

    let dim = first.len();
    let mut assign = vec![0usize; rows.len()];
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for (a, r) in assign.iter_mut().zip(rows) {
            *a = nearest(&centroids, r);
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, r) in assign.iter().zip(rows) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(r) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(dist2(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }
        if shift < CONVERGENCE_SHIFT {
            break;
        }
    }
    for (a, r) in assign.iter_mut().zip(rows) {
        *a = nearest(&centroids, r);
    }

    let mut votes = vec![(0usize, 0usize); k];
    for (&a, &y) in assign.iter().zip(labels) {
        if y == 1.0 {
            votes[a].1 += 1;
        } else {
            votes[a].0 += 1;
        }
    }
    let class_map = votes.iter().map(|&(b, a)| u8::from(a > 0 && a >= b)).collect();
    Ok(KMeansModel { centroids, class_map, iterations, seed })
}

impl KMeansModel {
    pub fn cluster(&self, x: &[f64]) -> usize {
        nearest(&self.centroids, x)
    }

    pub fn classify(&self, x: &[f64]) -> u8 {
        self.class_map[self.cluster(x)]
    }
}

/// Class 1 iff the mean of the MLP probability and the K-means class is at
/// least 0.5.
pub fn ensemble_average(mlp_prob: f64, kmeans_class: u8) -> u8 {
    u8::from((mlp_prob + f64::from(kmeans_class)) / 2.0 >= 0.5)
}

/// Appends each row's K-means class (computed on scaled rows) as one more
/// column.
pub fn kmeans_as_feature(rows: &[Vec<f64>], km: &KMeansModel, scaler: &Standardizer) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let mut out = r.clone();
            out.push(f64::from(km.classify(&scaler.apply(r))));
            out
        })
        .collect()
}
