//! Two-variable Aliev–Panfilov reaction–diffusion dynamics on a graph.
//!
//! The activation variable `u` (the transmembrane potential, dimensionless in
//! `[0, 1]`) and the recovery variable `v` evolve under
//!
//! ```text
//! du/dt = κ·k·u(1−u)(u−a) − u·v + d·(−L u)
//! dv/dt = −(eps0 + mu1·v/(u + mu2)) · (v + κ·k·u(u−a−1))
//! ```
//!
//! where `L` is the graph Laplacian and `κ` is a per-node excitability scale.
//! Scar tissue has `κ = 0` and is additionally disconnected from the graph:
//! necrotic tissue neither reacts nor couples electrically, so a scar node
//! keeps `u = 0` while the wave travels around it. (Leaving diffusion into
//! scar nodes active would let them charge up passively to `u ≈ 0.8` at the
//! default parameters, which contradicts their non-excitable role and makes
//! amplitude-based scar detection meaningless.)
//!
//! Integration is forward Euler with `sub_steps` inner steps per recorded
//! frame and a per-substep clamp of `u` to `[0, 1.05]` against overshoot.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::graph::HeartGraph;
use crate::scenario::Scenario;
use crate::tensor::Tensor;

/// A ground-truth transmembrane-potential sequence, shaped `[nodes, frames]`.
pub type TmpSequence = Tensor;

/// Aliev–Panfilov kinetics and integrator parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApParams {
    /// Excitability gain of the cubic reaction term.
    pub k: f64,
    /// Excitation threshold, strictly inside `(0, 1)`.
    pub a: f64,
    /// Baseline recovery rate.
    pub eps0: f64,
    /// Recovery rate modulation numerator.
    pub mu1: f64,
    /// Recovery rate modulation denominator offset.
    pub mu2: f64,
    /// Diffusion coefficient (graph-units² per time-unit).
    pub d: f64,
    /// Euler step in time-units.
    pub dt: f64,
    /// Euler substeps per recorded frame.
    pub sub_steps: usize,
}

impl Default for ApParams {
    fn default() -> Self {
        ApParams {
            k: 8.0,
            a: 0.15,
            eps0: 0.002,
            mu1: 0.2,
            mu2: 0.3,
            d: 1.0,
            dt: 0.1,
            sub_steps: 5,
        }
    }
}

impl ApParams {
    /// Checks parameter-only invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(Error::invalid(format!("threshold a must be in (0,1), got {}", self.a)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.sub_steps == 0 {
            return Err(Error::invalid("sub_steps must be at least 1"));
        }
        if self.d < 0.0 || self.k <= 0.0 || self.eps0 < 0.0 || self.mu1 < 0.0 || self.mu2 <= 0.0 {
            return Err(Error::invalid("kinetics coefficients out of range"));
        }
        for (name, value) in [
            ("k", self.k),
            ("a", self.a),
            ("eps0", self.eps0),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("d", self.d),
            ("dt", self.dt),
        ] {
            if !value.is_finite() {
                return Err(Error::invalid(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    /// Checks the explicit-Euler diffusion stability bound
    /// `dt·d·λ_max(L) < 2` on the given graph, in addition to
    /// [`ApParams::validate`].
    pub fn validate_for(&self, graph: &HeartGraph) -> Result<()> {
        self.validate()?;
        let bound = self.dt * self.d * graph.lambda_max();
        if bound >= 2.0 {
            return Err(Error::invalid(format!(
                "unstable integrator: dt·d·λ_max = {bound:.3} must stay below 2"
            )));
        }
        Ok(())
    }
}

/// Integrator state: activation and recovery per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ApState {
    /// Activation, clamped to `[0, 1.05]` by the integrator.
    pub u: Vec<f64>,
    /// Recovery, non-negative along every trajectory started at rest.
    pub v: Vec<f64>,
}

impl ApState {
    /// The resting state of a graph: all nodes at `u = v = 0`.
    pub fn resting(node_count: usize) -> Self {
        ApState {
            u: vec![0.0; node_count],
            v: vec![0.0; node_count],
        }
    }

    fn validate(&self, node_count: usize) -> Result<()> {
        if self.u.len() != node_count || self.v.len() != node_count {
            return Err(Error::shape(format!(
                "state vectors ({}, {}) do not match {node_count} nodes",
                self.u.len(),
                self.v.len()
            )));
        }
        if self.u.iter().chain(&self.v).any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite integrator state".into()));
        }
        Ok(())
    }
}

/// Time derivatives `(du/dt, dv/dt)` of the reaction kinetics at one node.
///
/// `excitability_scale` is the per-node `κ`; scar tissue uses `0`, healthy
/// tissue `1`. The diffusion term is not part of the kinetics.
#[inline]
pub fn ap_kinetics(u: f64, v: f64, params: &ApParams, excitability_scale: f64) -> (f64, f64) {
    let kappa = excitability_scale;
    let du = kappa * params.k * u * (1.0 - u) * (u - params.a) - u * v;
    let dv = -(params.eps0 + params.mu1 * v / (u + params.mu2))
        * (v + kappa * params.k * u * (u - params.a - 1.0));
    (du, dv)
}

/// Integrates a scenario: stimulus at the excitation node and its immediate
/// graph neighbors (`u = 1` at frame 0), scar nodes fully disabled.
///
/// Returns the `[nodes, frames]` activation history; frame 0 is the initial
/// condition. Deterministic: no randomness is involved.
///
/// A scar node inside the stimulus set would hold its stimulus value forever
/// (no reaction, no coupling); scenario sampling never produces such overlap,
/// but this function does not reject it.
pub fn simulate_tmp(
    graph: &HeartGraph,
    scenario: &Scenario,
    params: &ApParams,
    frames: usize,
) -> Result<TmpSequence> {
    scenario.validate(graph)?;
    let mut state = ApState::resting(graph.node_count());
    state.u[scenario.excitation_node] = 1.0;
    for &j in graph.neighbors(scenario.excitation_node) {
        state.u[j] = 1.0;
    }
    simulate_from(graph, state, &scenario.scar_nodes, params, frames)
}

/// Integrates from an explicit initial state with the given scar set.
///
/// This is the engine behind [`simulate_tmp`]; it is public so that physics
/// properties (resting fixed point, integrator consistency) can be probed
/// without constructing a stimulus.
pub fn simulate_from(
    graph: &HeartGraph,
    initial: ApState,
    scar_nodes: &BTreeSet<usize>,
    params: &ApParams,
    frames: usize,
) -> Result<TmpSequence> {
    let n = graph.node_count();
    params.validate_for(graph)?;
    initial.validate(n)?;
    if frames < 2 {
        return Err(Error::invalid(format!("need at least 2 frames, got {frames}")));
    }
    if let Some(&bad) = scar_nodes.iter().find(|&&s| s >= n) {
        return Err(Error::invalid(format!("scar node {bad} out of range for {n} nodes")));
    }
    if scar_nodes.len() == n {
        return Err(Error::invalid("scar covers the whole graph"));
    }

    // Effective topology: every edge touching a scar node is removed.
    let coupled: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            if scar_nodes.contains(&i) {
                Vec::new()
            } else {
                graph
                    .neighbors(i)
                    .iter()
                    .copied()
                    .filter(|j| !scar_nodes.contains(j))
                    .collect()
            }
        })
        .collect();
    let kappa: Vec<f64> = (0..n).map(|i| if scar_nodes.contains(&i) { 0.0 } else { 1.0 }).collect();

    let ApState { mut u, mut v } = initial;
    let mut lap = vec![0.0; n];
    let mut out = Tensor::zeros(&[n, frames]);
    for i in 0..n {
        out.set(i, 0, u[i]);
    }
    for frame in 1..frames {
        for _ in 0..params.sub_steps {
            for i in 0..n {
                let mut acc = 0.0;
                for &j in &coupled[i] {
                    acc += u[j] - u[i];
                }
                lap[i] = acc;
            }
            for i in 0..n {
                let (du, dv) = ap_kinetics(u[i], v[i], params, kappa[i]);
                u[i] = (u[i] + params.dt * (params.d * lap[i] + du)).clamp(0.0, 1.05);
                v[i] += params.dt * dv;
            }
        }
        for i in 0..n {
            out.set(i, frame, u[i]);
        }
    }
    out.validate_finite()?;
    Ok(out)
}
