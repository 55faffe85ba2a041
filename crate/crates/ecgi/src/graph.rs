//! Heart-surrogate geometry: ring lattices with a combinatorial Laplacian.
//!
//! The experiments run on a ring instead of a 3-D heart mesh. A ring keeps
//! the two properties the reconstruction problem actually needs — spatial
//! wave propagation and an underdetermined smoothing measurement — while
//! staying small enough that every physics claim can be verified exactly.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Undirected graph with planar node coordinates, used as the cardiac domain.
#[derive(Debug, Clone)]
pub struct HeartGraph {
    node_count: usize,
    coordinates: Vec<[f64; 2]>,
    adjacency: Vec<Vec<usize>>,
}

impl HeartGraph {
    /// Builds a ring lattice of `n` nodes on the unit circle, each node
    /// coupled to its `neighbors` nearest nodes on both sides.
    ///
    /// Requires `n >= 8` and `1 <= neighbors <= n/4` so the ring keeps a
    /// meaningful notion of "far side".
    pub fn build_ring(n: usize, neighbors: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::invalid(format!("ring needs at least 8 nodes, got {n}")));
        }
        if neighbors < 1 || neighbors > n / 4 {
            return Err(Error::invalid(format!(
                "ring coupling half-width must be in 1..={}, got {neighbors}",
                n / 4
            )));
        }
        let coordinates = (0..n)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [theta.cos(), theta.sin()]
            })
            .collect();
        let adjacency = (0..n)
            .map(|i| {
                let mut nbrs = Vec::with_capacity(2 * neighbors);
                for off in 1..=neighbors {
                    nbrs.push((i + n - off) % n);
                    nbrs.push((i + off) % n);
                }
                nbrs
            })
            .collect();
        Ok(HeartGraph {
            node_count: n,
            coordinates,
            adjacency,
        })
    }

    /// Number of nodes.
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Planar coordinates of every node.
    pub fn coordinates(&self) -> &[[f64; 2]] {
        &self.coordinates
    }

    /// Neighbor list of one node.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    /// Dense combinatorial Laplacian `L = D - A` as a rank-2 tensor.
    ///
    /// Rows sum to zero and the matrix is symmetric; diffusion uses `-L`.
    pub fn laplacian(&self) -> Tensor {
        let n = self.node_count;
        let mut l = Tensor::zeros(&[n, n]);
        for i in 0..n {
            l.set(i, i, self.adjacency[i].len() as f64);
            for &j in &self.adjacency[i] {
                l.set(i, j, l.get(i, j) - 1.0);
            }
        }
        l
    }

    /// Breadth-first graph distances from `from` to every node.
    pub fn distances_from(&self, from: usize) -> Result<Vec<usize>> {
        if from >= self.node_count {
            return Err(Error::invalid(format!("node {from} out of range")));
        }
        let mut dist = vec![usize::MAX; self.node_count];
        let mut queue = std::collections::VecDeque::new();
        dist[from] = 0;
        queue.push_back(from);
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        if dist.iter().any(|&d| d == usize::MAX) {
            return Err(Error::invalid("graph is not connected"));
        }
        Ok(dist)
    }

    /// Largest Laplacian eigenvalue, by power iteration on `L`.
    ///
    /// `L` is positive semi-definite, so plain power iteration converges to
    /// the top eigenvalue. The start vector is a fixed quasi-random pattern,
    /// which keeps the result deterministic.
    pub fn lambda_max(&self) -> f64 {
        let n = self.node_count;
        let l = self.laplacian();
        let mut v: Vec<f64> = (0..n).map(|i| ((i as f64 * 0.754_877_666).fract() - 0.5) + 1e-3).collect();
        let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let s = norm(&v);
        v.iter_mut().for_each(|x| *x /= s);
        let mut lambda = 0.0;
        for _ in 0..10_000 {
            let w = l.matvec(&v).expect("square laplacian");
            let next = crate::tensor::dot(&v, &w);
            let wn = norm(&w);
            if wn == 0.0 {
                return 0.0;
            }
            v = w.iter().map(|x| x / wn).collect();
            if (next - lambda).abs() <= 1e-13 * next.abs().max(1.0) {
                return next;
            }
            lambda = next;
        }
        lambda
    }
}
