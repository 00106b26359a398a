//! Prior anchor sizes by k-means under the `1 - IoU` distance.
//!
//! Boxes are compared as if they shared a center, so only width and height
//! matter. Initialization is k-means++ over the sorted, deduplicated sizes
//! (weighted by multiplicity), which makes the result independent of input
//! order for a fixed seed.

use std::cmp::Ordering;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{read_json, sig6, write_json};

/// Anchor sizes in network-input pixels, ordered by area ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorSet {
    priors: Vec<[f64; 2]>,
}

impl AnchorSet {
    pub fn new(mut priors: Vec<[f64; 2]>) -> Result<Self> {
        if priors.is_empty() {
            return Err(Error::invalid("anchor set is empty"));
        }
        if let Some(p) = priors.iter().find(|p| !(p[0] > 0.0 && p[1] > 0.0 && p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::invalid(format!("anchor {}x{} is not positive", p[0], p[1])));
        }
        priors.sort_by(|a, b| cmp_size(&(a[0], a[1]), &(b[0], b[1])));
        Ok(AnchorSet { priors })
    }

    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }

    pub fn get(&self, i: usize) -> (f64, f64) {
        (self.priors[i][0], self.priors[i][1])
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.priors.iter().map(|p| (p[0], p[1]))
    }

    /// Index of the prior with the highest centered IoU (first on ties).
    pub fn best_match(&self, w: f64, h: f64) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, p) in self.iter().enumerate() {
            let v = centered_iou((w, h), p);
            if v > best.1 {
                best = (i, v);
            }
        }
        best.0
    }

    pub fn load(path: impl AsRef<Path>) -> Result<AnchorSet> {
        let raw: Vec<[f64; 2]> = read_json(path.as_ref())?;
        AnchorSet::new(raw)
    }

    /// Writes the JSON list of `[w, h]` pairs.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let rounded: Vec<[f64; 2]> = self.priors.iter().map(|p| [sig6(p[0]), sig6(p[1])]).collect();
        write_json(path.as_ref(), &rounded)
    }
}

/// IoU of two sizes placed on a common center.
pub fn centered_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = a.0.min(b.0) * a.1.min(b.1);
    inter / (a.0 * a.1 + b.0 * b.1 - inter)
}

fn cmp_size(a: &(f64, f64), b: &(f64, f64)) -> Ordering {
    (a.0 * a.1)
        .total_cmp(&(b.0 * b.1))
        .then(a.0.total_cmp(&b.0))
        .then(a.1.total_cmp(&b.1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 10,
            seed: 0,
            max_iters: 100,
        }
    }
}

/// Result of a clustering run with its per-iteration distortion.
#[derive(Debug, Clone)]
pub struct KMeansOutcome {
    pub anchors: AnchorSet,
    /// Mean `1 - IoU` after each assignment step.
    pub distortion: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn cluster_anchors(sizes: &[(f64, f64)], k: usize, seed: u64, max_iters: usize) -> Result<AnchorSet> {
    Ok(cluster_anchors_traced(sizes, &KMeansConfig { k, seed, max_iters })?.anchors)
}

pub fn cluster_anchors_traced(sizes: &[(f64, f64)], cfg: &KMeansConfig) -> Result<KMeansOutcome> {
    if sizes.is_empty() {
        return Err(Error::invalid("no box sizes to cluster"));
    }
    if let Some(s) = sizes.iter().find(|s| !(s.0 > 0.0 && s.1 > 0.0 && s.0.is_finite() && s.1.is_finite())) {
        return Err(Error::invalid(format!("box size {}x{} is not positive", s.0, s.1)));
    }
    let (points, counts) = dedup_sorted(sizes);
    if cfg.k == 0 || cfg.k > points.len() {
        return Err(Error::invalid(format!(
            "k = {} but only {} distinct sizes",
            cfg.k,
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = kmeans_pp(&points, &counts, cfg.k, &mut rng);
    let total: f64 = counts.iter().sum();

    let mut assignment: Vec<usize> = Vec::new();
    let mut distortion = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters.max(1) {
        iterations += 1;
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        let d: f64 = points
            .iter()
            .zip(&next)
            .zip(&counts)
            .map(|((p, &c), n)| n * (1.0 - centered_iou(*p, centroids[c])))
            .sum::<f64>()
            / total;
        distortion.push(d);
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..points.len()).filter(|&i| assignment[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let weight: f64 = members.iter().map(|&i| counts[i]).sum();
            let mean = (
                members.iter().map(|&i| counts[i] * points[i].0).sum::<f64>() / weight,
                members.iter().map(|&i| counts[i] * points[i].1).sum::<f64>() / weight,
            );
            // the mean does not minimise 1 - IoU, so only accept it when it helps
            let cost = |z: (f64, f64)| -> f64 {
                members
                    .iter()
                    .map(|&i| counts[i] * (1.0 - centered_iou(points[i], z)))
                    .sum()
            };
            if cost(mean) <= cost(*centroid) {
                *centroid = mean;
            }
        }
    }
    let anchors = AnchorSet::new(centroids.iter().map(|c| [c.0, c.1]).collect())?;
    Ok(KMeansOutcome {
        anchors,
        distortion,
        iterations,
        converged,
    })
}

fn dedup_sorted(sizes: &[(f64, f64)]) -> (Vec<(f64, f64)>, Vec<f64>) {
    let mut sorted = sizes.to_vec();
    sorted.sort_by(cmp_size);
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for s in sorted {
        if points.last() == Some(&s) {
            *counts.last_mut().unwrap() += 1.0;
        } else {
            points.push(s);
            counts.push(1.0);
        }
    }
    (points, counts)
}

fn nearest(p: &(f64, f64), centroids: &[(f64, f64)]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = 1.0 - centered_iou(*p, *c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

fn weighted_pick<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // rounding fell off the end: last positive weight
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn kmeans_pp<R: Rng>(points: &[(f64, f64)], counts: &[f64], k: usize, rng: &mut R) -> Vec<(f64, f64)> {
    let mut centroids = vec![points[weighted_pick(counts, rng)]];
    while centroids.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .zip(counts)
            .map(|(p, n)| {
                let d = centroids
                    .iter()
                    .map(|c| 1.0 - centered_iou(*p, *c))
                    .fold(f64::INFINITY, f64::min);
                n * d * d
            })
            .collect();
        centroids.push(points[weighted_pick(&weights, rng)]);
    }
    centroids
}
