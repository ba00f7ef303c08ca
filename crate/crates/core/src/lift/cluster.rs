use std::collections::VecDeque;
use std::num::NonZero;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::Vector3;

use crate::error::{Error, Result};

pub const OUTLIER_NEIGHBORS: usize = 16;
pub const OUTLIER_STD_RATIO: f64 = 2.0;
pub const CLUSTER_EPS_FACTOR: f64 = 3.0;
pub const CLUSTER_MIN_POINTS: usize = 8;

fn build_tree(points: &[Vector3<f64>]) -> ImmutableKdTree<f64, 3> {
    let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
    ImmutableKdTree::new_from_slice(&raw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierResult {
    pub points: Vec<Vector3<f64>>,
    pub removed: usize,
    /// Too few points for the neighbor statistic; input returned unchanged.
    pub passthrough: bool,
}

/// Mean distance of each point to its `k` nearest other points.
pub fn mean_knn_distance(points: &[Vector3<f64>], k: usize) -> Vec<f64> {
    let tree = build_tree(points);
    let n = NonZero::new(k + 1).unwrap();
    points
        .iter()
        .map(|p| {
            let nn = tree.nearest_n::<SquaredEuclidean>(&[p.x, p.y, p.z], n);
            // the query point itself is among the results at distance 0
            let sum: f64 = nn.iter().map(|r| r.distance.max(0.0).sqrt()).sum();
            sum / k as f64
        })
        .collect()
}

/// Statistical outlier removal: drops points whose mean distance to their `k`
/// nearest neighbors exceeds the mean of that statistic by `std_ratio` standard
/// deviations.
pub fn remove_outliers(points: &[Vector3<f64>], k: usize, std_ratio: f64) -> OutlierResult {
    if points.len() < k + 1 {
        return OutlierResult {
            points: points.to_vec(),
            removed: 0,
            passthrough: true,
        };
    }
    let d = mean_knn_distance(points, k);
    let n = d.len() as f64;
    let mu = d.iter().sum::<f64>() / n;
    let sigma = (d.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).sqrt();
    let limit = mu + std_ratio * sigma;
    let kept: Vec<_> = points.iter().zip(&d).filter(|(_, &v)| v <= limit).map(|(p, _)| *p).collect();
    OutlierResult {
        removed: points.len() - kept.len(),
        points: kept,
        passthrough: false,
    }
}

/// Density clustering (DBSCAN) with `eps = eps_factor * median nearest-neighbor
/// distance`. Returns a label per point, `None` for noise; labels are numbered
/// in order of first discovery.
pub fn dbscan(points: &[Vector3<f64>], eps_factor: f64, min_points: usize) -> Vec<Option<usize>> {
    if points.is_empty() {
        return Vec::new();
    }
    let tree = build_tree(points);
    let mut nn: Vec<f64> = if points.len() > 1 {
        let two = NonZero::new(2).unwrap();
        points
            .iter()
            .map(|p| {
                let r = tree.nearest_n::<SquaredEuclidean>(&[p.x, p.y, p.z], two);
                r.last().map(|x| x.distance.max(0.0).sqrt()).unwrap_or(0.0)
            })
            .collect()
    } else {
        vec![0.0]
    };
    nn.sort_by(f64::total_cmp);
    let median = nn[nn.len() / 2];
    let eps = (eps_factor * median).max(1e-9);
    let eps2 = eps * eps;
    let neighbors = |i: usize| -> Vec<usize> {
        let p = points[i];
        let mut v: Vec<usize> = tree
            .within_unsorted::<SquaredEuclidean>(&[p.x, p.y, p.z], eps2)
            .into_iter()
            .map(|r| r.item as usize)
            .collect();
        v.sort_unstable();
        v
    };

    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    let mut visited = vec![false; points.len()];
    let mut next = 0;
    for i in 0..points.len() {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = neighbors(i);
        if nb.len() < min_points {
            continue;
        }
        let label = next;
        next += 1;
        labels[i] = Some(label);
        let mut queue: VecDeque<usize> = nb.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(label);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nb = neighbors(j);
            if nb.len() >= min_points {
                queue.extend(nb.into_iter().filter(|&m| !visited[m] || labels[m].is_none()));
            }
        }
    }
    labels
}

/// Largest density cluster; ties go to the cluster whose centroid is nearer
/// the camera (smaller z).
pub fn largest_cluster(points: &[Vector3<f64>], eps_factor: f64, min_points: usize) -> Result<Vec<Vector3<f64>>> {
    if points.is_empty() {
        return Err(Error::NoObjectPoints);
    }
    let labels = dbscan(points, eps_factor, min_points);
    let count = labels.iter().flatten().max().map_or(0, |m| m + 1);
    if count == 0 {
        return Err(Error::AllNoise);
    }
    let mut sizes = vec![0usize; count];
    let mut zsum = vec![0.0; count];
    for (p, l) in points.iter().zip(&labels) {
        if let Some(l) = l {
            sizes[*l] += 1;
            zsum[*l] += p.z;
        }
    }
    let best = (0..count)
        .min_by(|&a, &b| {
            sizes[b]
                .cmp(&sizes[a])
                .then((zsum[a] / sizes[a] as f64).total_cmp(&(zsum[b] / sizes[b] as f64)))
        })
        .unwrap();
    Ok(points
        .iter()
        .zip(&labels)
        .filter(|(_, l)| **l == Some(best))
        .map(|(p, _)| *p)
        .collect())
}
