//! Scenario sampling: excitation origins, scar arcs, and difficulty bands.
//!
//! A *scenario* is the generative ground truth for one sample: where the
//! excitation starts and which arc of the ring is scarred. Generalization is
//! probed by holding out regions of both parameters: training scenarios draw
//! from designated train arcs, while test scenarios draw from the held-out
//! remainder, split into a *Low* band (adjacent to the train arc, walking
//! forward around the ring) and a *High* band (the far half of the held-out
//! arc). The four test splits are the product of excitation and scar
//! difficulty.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::HeartGraph;
use crate::rng::{self, StreamKind};

/// Difficulty band of a held-out scenario parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Difficulty {
    /// Adjacent to the training region.
    Low,
    /// Maximally advanced into the held-out region.
    High,
}

impl std::fmt::Display for Difficulty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Difficulty::Low => "low",
            Difficulty::High => "high",
        })
    }
}

/// Ground truth for one sample.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Scenario {
    /// Node where excitation starts.
    pub excitation_node: usize,
    /// Scarred (non-excitable, uncoupled) nodes.
    pub scar_nodes: BTreeSet<usize>,
    /// Band the excitation node was drawn from (Low for training draws).
    pub exc_difficulty: Difficulty,
    /// Band the scar center was drawn from (Low for training draws).
    pub scar_difficulty: Difficulty,
}

impl Scenario {
    /// Checks node ranges and the basic invariants: the excitation node is
    /// not scarred and the scar does not cover the whole graph.
    pub fn validate(&self, graph: &HeartGraph) -> Result<()> {
        let n = graph.node_count();
        if self.excitation_node >= n {
            return Err(Error::invalid(format!(
                "excitation node {} out of range for {n} nodes",
                self.excitation_node
            )));
        }
        if let Some(&bad) = self.scar_nodes.iter().find(|&&s| s >= n) {
            return Err(Error::invalid(format!("scar node {bad} out of range for {n} nodes")));
        }
        if self.scar_nodes.contains(&self.excitation_node) {
            return Err(Error::invalid("excitation node lies inside the scar"));
        }
        if self.scar_nodes.len() == n {
            return Err(Error::invalid("scar covers the whole graph"));
        }
        Ok(())
    }
}

/// Which region a batch of scenarios is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawRegion {
    /// Training arcs for both excitation and scar center.
    Train,
    /// Held-out bands at the given difficulties.
    Test {
        /// Excitation-origin band.
        exc: Difficulty,
        /// Scar-center band.
        scar: Difficulty,
    },
}

/// Partition of excitation nodes and scar centers into train and held-out
/// regions on a ring of `n` nodes.
///
/// Arcs are index ranges `start..start+len` taken modulo `n`. The held-out
/// complement of each arc is walked forward from its end; the first half is
/// the Low band and the rest the High band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    /// First node of the training excitation arc.
    pub exc_train_start: usize,
    /// Length of the training excitation arc.
    pub exc_train_len: usize,
    /// First node of the training scar-center arc.
    pub scar_train_start: usize,
    /// Length of the training scar-center arc.
    pub scar_train_len: usize,
    /// Smallest sampled scar arc, in nodes.
    pub scar_min_size: usize,
    /// Largest sampled scar arc, in nodes.
    pub scar_max_size: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            exc_train_start: 0,
            exc_train_len: 32,
            scar_train_start: 16,
            scar_train_len: 32,
            scar_min_size: 4,
            scar_max_size: 16,
        }
    }
}

impl SplitSpec {
    /// Validates the spec against a ring of `n` nodes.
    pub fn validate(&self, n: usize) -> Result<()> {
        for (what, start, len) in [
            ("excitation", self.exc_train_start, self.exc_train_len),
            ("scar-center", self.scar_train_start, self.scar_train_len),
        ] {
            if len == 0 {
                return Err(Error::invalid(format!("empty {what} training arc")));
            }
            if start >= n {
                return Err(Error::invalid(format!("{what} arc start {start} out of range")));
            }
            // Both held-out bands must be non-empty.
            if n - len < 2 {
                return Err(Error::invalid(format!(
                    "{what} training arc of {len} leaves no held-out bands on {n} nodes"
                )));
            }
        }
        if self.scar_min_size == 0 || self.scar_min_size > self.scar_max_size {
            return Err(Error::invalid("scar size range is empty"));
        }
        if self.scar_max_size >= n {
            return Err(Error::invalid("scar size reaches the whole ring"));
        }
        Ok(())
    }

    fn arc(start: usize, len: usize, n: usize) -> Vec<usize> {
        (0..len).map(|o| (start + o) % n).collect()
    }

    fn bands(start: usize, len: usize, n: usize) -> (Vec<usize>, Vec<usize>) {
        let complement = Self::arc((start + len) % n, n - len, n);
        let low_len = complement.len() / 2;
        let (low, high) = complement.split_at(low_len);
        (low.to_vec(), high.to_vec())
    }

    /// Excitation nodes of the training arc.
    pub fn exc_train(&self, n: usize) -> Vec<usize> {
        Self::arc(self.exc_train_start, self.exc_train_len, n)
    }

    /// Held-out excitation band at the given difficulty.
    pub fn exc_band(&self, n: usize, difficulty: Difficulty) -> Vec<usize> {
        let (low, high) = Self::bands(self.exc_train_start, self.exc_train_len, n);
        match difficulty {
            Difficulty::Low => low,
            Difficulty::High => high,
        }
    }

    /// Scar centers of the training arc.
    pub fn scar_train(&self, n: usize) -> Vec<usize> {
        Self::arc(self.scar_train_start, self.scar_train_len, n)
    }

    /// Held-out scar-center band at the given difficulty.
    pub fn scar_band(&self, n: usize, difficulty: Difficulty) -> Vec<usize> {
        let (low, high) = Self::bands(self.scar_train_start, self.scar_train_len, n);
        match difficulty {
            Difficulty::Low => low,
            Difficulty::High => high,
        }
    }
}

/// Maximum resampling attempts before declaring a region infeasible.
const MAX_DRAW_ATTEMPTS: usize = 10_000;

/// Samples `count` scenarios from the region selected by `draw`.
///
/// Deterministic given `seed`. Scar arcs are centered on a node drawn from
/// the scar region with a size drawn from the configured range; draws whose
/// scar would touch the excitation stimulus (the excitation node or any of
/// its graph neighbors, which are all forced to `u = 1` at frame 0) are
/// rejected and retried, because a stimulated scar node would freeze at its
/// stimulus value instead of staying silent.
pub fn sample_scenarios(
    graph: &HeartGraph,
    count: usize,
    spec: &SplitSpec,
    draw: DrawRegion,
    seed: u64,
) -> Result<Vec<Scenario>> {
    let n = graph.node_count();
    spec.validate(n)?;
    let (exc_region, scar_region, exc_difficulty, scar_difficulty) = match draw {
        DrawRegion::Train => (
            spec.exc_train(n),
            spec.scar_train(n),
            Difficulty::Low,
            Difficulty::Low,
        ),
        DrawRegion::Test { exc, scar } => {
            (spec.exc_band(n, exc), spec.scar_band(n, scar), exc, scar)
        }
    };
    if exc_region.is_empty() || scar_region.is_empty() {
        return Err(Error::invalid("scenario region is empty"));
    }

    let mut rng = rng::stream(seed, StreamKind::Scenario, 0);
    let mut scenarios = Vec::with_capacity(count);
    for _ in 0..count {
        let mut accepted = None;
        for _ in 0..MAX_DRAW_ATTEMPTS {
            let exc = exc_region[rng.random_range(0..exc_region.len())];
            let center = scar_region[rng.random_range(0..scar_region.len())];
            let size = rng.random_range(spec.scar_min_size..=spec.scar_max_size);
            let scar: BTreeSet<usize> = (0..size)
                .map(|o| (center + n + o - size / 2) % n)
                .collect();
            let stimulus: BTreeSet<usize> = std::iter::once(exc)
                .chain(graph.neighbors(exc).iter().copied())
                .collect();
            if scar.intersection(&stimulus).next().is_some() {
                continue;
            }
            accepted = Some(Scenario {
                excitation_node: exc,
                scar_nodes: scar,
                exc_difficulty,
                scar_difficulty,
            });
            break;
        }
        let scenario = accepted.ok_or_else(|| {
            Error::invalid("could not draw a scar clear of the stimulus; regions too tight")
        })?;
        scenario.validate(graph)?;
        scenarios.push(scenario);
    }
    Ok(scenarios)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring64() -> HeartGraph {
        HeartGraph::build_ring(64, 1).unwrap()
    }

    #[test]
    fn default_bands_match_forward_walk() {
        let spec = SplitSpec::default();
        assert_eq!(spec.exc_train(64), (0..32).collect::<Vec<_>>());
        assert_eq!(spec.exc_band(64, Difficulty::Low), (32..48).collect::<Vec<_>>());
        assert_eq!(spec.exc_band(64, Difficulty::High), (48..64).collect::<Vec<_>>());
        assert_eq!(spec.scar_band(64, Difficulty::Low), (48..64).collect::<Vec<_>>());
        assert_eq!(spec.scar_band(64, Difficulty::High), (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn count_zero_yields_empty() {
        let out =
            sample_scenarios(&ring64(), 0, &SplitSpec::default(), DrawRegion::Train, 1).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn same_seed_is_identical() {
        let g = ring64();
        let spec = SplitSpec::default();
        let a = sample_scenarios(&g, 25, &spec, DrawRegion::Train, 42).unwrap();
        let b = sample_scenarios(&g, 25, &spec, DrawRegion::Train, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_scenarios(&g, 25, &spec, DrawRegion::Train, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn high_band_test_draws_stay_in_far_band() {
        let g = ring64();
        let spec = SplitSpec::default();
        let draws = sample_scenarios(
            &g,
            50,
            &spec,
            DrawRegion::Test {
                exc: Difficulty::High,
                scar: Difficulty::Low,
            },
            7,
        )
        .unwrap();
        for s in &draws {
            assert!((48..64).contains(&s.excitation_node), "exc {}", s.excitation_node);
            assert_eq!(s.exc_difficulty, Difficulty::High);
        }
    }

    #[test]
    fn scar_never_touches_stimulus() {
        let g = ring64();
        let spec = SplitSpec::default();
        for draw in [
            DrawRegion::Train,
            DrawRegion::Test {
                exc: Difficulty::Low,
                scar: Difficulty::High,
            },
            DrawRegion::Test {
                exc: Difficulty::High,
                scar: Difficulty::High,
            },
        ] {
            for s in sample_scenarios(&g, 100, &spec, draw, 3).unwrap() {
                assert!(!s.scar_nodes.contains(&s.excitation_node));
                for &j in g.neighbors(s.excitation_node) {
                    assert!(!s.scar_nodes.contains(&j), "scar touches stimulus neighbor {j}");
                }
                let size = s.scar_nodes.len();
                assert!((4..=16).contains(&size));
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let g = ring64();
        let empty_arc = SplitSpec {
            exc_train_len: 0,
            ..SplitSpec::default()
        };
        assert!(sample_scenarios(&g, 1, &empty_arc, DrawRegion::Train, 0).is_err());
        let no_holdout = SplitSpec {
            exc_train_len: 63,
            ..SplitSpec::default()
        };
        assert!(sample_scenarios(&g, 1, &no_holdout, DrawRegion::Train, 0).is_err());
        let bad_sizes = SplitSpec {
            scar_min_size: 9,
            scar_max_size: 8,
            ..SplitSpec::default()
        };
        assert!(sample_scenarios(&g, 1, &bad_sizes, DrawRegion::Train, 0).is_err());
    }
}
