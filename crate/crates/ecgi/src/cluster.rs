//! Latent-space cluster diagnostics: a deterministic 2-D PCA projection for
//! plotting exports and silhouette coefficients for separation claims.
//!
//! The silhouette is computed in the full latent dimension with Euclidean
//! distance; the PCA projection exists only so the point cloud can be drawn.
//! Both are deterministic — the PCA factor signs follow the same convention
//! as the inverse solvers (largest-magnitude entry of each principal axis is
//! positive), so exported coordinates are reproducible across backends.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A 2-D view of an `N×d` point cloud.
#[derive(Debug, Clone)]
pub struct Projection2d {
    /// Per-point `(pc1, pc2)` scores, in input row order.
    pub coords: Vec<[f64; 2]>,
    /// The two principal axes in the original `d`-dimensional space.
    pub components: [Vec<f64>; 2],
    /// Fraction of total variance carried by each axis.
    pub explained: [f64; 2],
}

/// Projects an `N×d` point cloud onto its two leading principal axes.
///
/// Points are centered first, so the projection is translation invariant.
/// Needs at least two points; with effectively rank-one data the second
/// coordinate column is numerically zero rather than an error.
pub fn project_2d(latents: &Tensor) -> Result<Projection2d> {
    let (n, d) = (latents.rows(), latents.cols());
    if n < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 points, got {n}")));
    }
    if d < 2 {
        return Err(Error::invalid(format!("PCA export needs at least 2 dimensions, got {d}")));
    }
    let mut centered = DMatrix::from_row_iterator(n, d, latents.as_slice().iter().copied());
    for j in 0..d {
        let mean = centered.column(j).sum() / n as f64;
        for i in 0..n {
            centered[(i, j)] -= mean;
        }
    }
    let svd = centered.clone().svd(false, true);
    let mut v_t = svd.v_t.expect("right factors");
    for k in 0..2.min(v_t.nrows()) {
        let row = v_t.row(k);
        let mut lead = 0;
        for j in 1..d {
            if row[j].abs() > row[lead].abs() {
                lead = j;
            }
        }
        if row[lead] < 0.0 {
            for j in 0..d {
                v_t[(k, j)] = -v_t[(k, j)];
            }
        }
    }

    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let mut components = [vec![0.0; d], vec![0.0; d]];
    let mut explained = [0.0, 0.0];
    for k in 0..2.min(v_t.nrows()) {
        components[k] = v_t.row(k).iter().copied().collect();
        if total > 0.0 {
            explained[k] = svd.singular_values[k].powi(2) / total;
        }
    }

    let coords = (0..n)
        .map(|i| {
            let mut point = [0.0, 0.0];
            for (k, axis) in components.iter().enumerate() {
                point[k] = (0..d).map(|j| centered[(i, j)] * axis[j]).sum();
            }
            point
        })
        .collect();
    Ok(Projection2d {
        coords,
        components,
        explained,
    })
}

/// Mean silhouette coefficient of a labeled `N×d` point cloud under
/// Euclidean distance.
///
/// Per point: `a` is the mean distance to the rest of its own cluster, `b`
/// the smallest mean distance to any other cluster, and the score is
/// `(b − a) / max(a, b)`. Points in singleton clusters score 0 by
/// convention. Requires at least two distinct labels.
pub fn silhouette(latents: &Tensor, labels: &[usize]) -> Result<f64> {
    let n = latents.rows();
    if labels.len() != n {
        return Err(Error::shape(format!(
            "{n} points with {} labels",
            labels.len()
        )));
    }
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::invalid(
            "silhouette needs at least two distinct labels",
        ));
    }

    let cluster_size = |label: usize| labels.iter().filter(|&&l| l == label).count();
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        if cluster_size(own) == 1 {
            continue; // scores 0, adds nothing
        }
        let mut sums: Vec<(usize, f64, usize)> =
            distinct.iter().map(|&l| (l, 0.0, 0)).collect();
        for j in 0..n {
            if i == j {
                continue;
            }
            let dist = euclidean(latents.row(i), latents.row(j));
            let slot = sums
                .iter_mut()
                .find(|(l, _, _)| *l == labels[j])
                .expect("label seen during dedup");
            slot.1 += dist;
            slot.2 += 1;
        }
        let mut a = 0.0;
        let mut b = f64::INFINITY;
        for (label, sum, count) in sums {
            if count == 0 {
                continue;
            }
            let mean = sum / count as f64;
            if label == own {
                a = mean;
            } else {
                b = b.min(mean);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
