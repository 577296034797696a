//! Spring layout of the topic field.
//!
//! Every displayed magnet `i` is tied to every document `d` by a zero-rest-length
//! spring of stiffness `stiffness * w_di`, where `w_d` is the document's topic
//! proportions restricted to the displayed magnets and rescaled to sum to one.
//! With magnets pinned, the only equilibrium of a document is the
//! `w_d`-weighted barycenter of the magnets, which is what [`project`]
//! computes in closed form.
//!
//! Integration is semi-implicit Euler with velocity damping:
//! `v <- damping * (v + dt * F / m)`, `x <- x + dt * v`. Documents have unit
//! mass (their spring weights already sum to one); a magnet's mass is the
//! total weight of its springs, so magnets and documents relax at the same
//! rate regardless of how many documents are in the field.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DocumentId;
use crate::field::{FieldState, NodeRef};
use crate::geometry::Point;
use crate::topic_model::{ModelError, TopicId, TopicModel};

pub const MAGNET_RADIUS_MIN: f64 = 8.0;
pub const MAGNET_RADIUS_MAX: f64 = 28.0;
/// Distance floor for document repulsion.
pub const REPULSION_DISTANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutParams {
    pub stiffness: f64,
    /// Fraction of velocity kept per step.
    pub damping: f64,
    pub dt: f64,
    /// Inverse-square document-document repulsion. Any positive value moves
    /// documents off their exact barycentric positions.
    pub repulsion: f64,
    /// Stop once no node moves further than this in one step.
    pub epsilon: f64,
    pub max_steps: usize,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            stiffness: 1.0,
            damping: 0.6,
            dt: 0.28,
            repulsion: 0.0,
            epsilon: 1e-4,
            max_steps: 10_000,
        }
    }
}

impl LayoutParams {
    pub fn validate(&self) -> Result<(), LayoutError> {
        let bad = |name: &'static str| Err(LayoutError::InvalidParams(name));
        if !(self.stiffness > 0.0 && self.stiffness.is_finite()) {
            return bad("stiffness must be positive");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must be in (0, 1]");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.repulsion >= 0.0 && self.repulsion.is_finite()) {
            return bad("repulsion must be non-negative");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("invalid layout parameters: {0}")]
    InvalidParams(&'static str),
    #[error("non-finite position for {node} at step {step}")]
    NonFinite { step: usize, node: NodeRef },
    #[error("non-finite position for magnet {0}")]
    NonFiniteMagnet(TopicId),
    #[error("no topic positions given")]
    NoMagnets,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Positions of every node after one simulation step.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionFrame {
    pub step: usize,
    pub positions: BTreeMap<NodeRef, Point>,
    pub max_displacement: f64,
}

/// Per-node velocities carried between steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Velocities(pub BTreeMap<NodeRef, Point>);

/// Topic proportions of `doc` restricted to `displayed` and rescaled to sum
/// to one. Falls back to uniform weights when the restricted mass is zero.
pub fn renormalized_theta(model: &TopicModel, doc: &DocumentId, displayed: &[TopicId]) -> Result<Vec<f64>, ModelError> {
    if displayed.is_empty() {
        return Ok(Vec::new());
    }
    let row = model.theta_row(doc)?;
    for t in displayed {
        model.check_topic(*t)?;
    }
    let mut w: Vec<f64> = displayed.iter().map(|t| row[t.index()]).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|v| *v /= total);
    } else {
        let u = 1.0 / w.len() as f64;
        w.iter_mut().for_each(|v| *v = u);
    }
    Ok(w)
}

/// Closed-form resting place of a free document among fixed magnets.
pub fn project(model: &TopicModel, doc: &DocumentId, topic_positions: &BTreeMap<TopicId, Point>) -> Result<Point, LayoutError> {
    if topic_positions.is_empty() {
        return Err(LayoutError::NoMagnets);
    }
    if let Some((t, _)) = topic_positions.iter().find(|(_, p)| !p.is_finite()) {
        return Err(LayoutError::NonFiniteMagnet(*t));
    }
    let topics: Vec<TopicId> = topic_positions.keys().copied().collect();
    let w = renormalized_theta(model, doc, &topics)?;
    Ok(topic_positions
        .values()
        .zip(&w)
        .fold(Point::ORIGIN, |acc, (p, wi)| acc + *p * *wi))
}

/// Magnet radius in screen units, linear in relevance.
pub fn magnet_radius(relevance: f64, rel_max: f64) -> f64 {
    if rel_max <= 0.0 {
        return MAGNET_RADIUS_MIN;
    }
    let r = (relevance / rel_max).clamp(0.0, 1.0);
    MAGNET_RADIUS_MIN + (MAGNET_RADIUS_MAX - MAGNET_RADIUS_MIN) * r
}

/// A running simulation over one field snapshot.
#[derive(Debug, Clone)]
pub struct Simulation {
    params: LayoutParams,
    nodes: Vec<NodeRef>,
    positions: Vec<Point>,
    velocities: Vec<Point>,
    pinned: Vec<bool>,
    num_docs: usize,
    num_topics: usize,
    /// Row-major `num_docs x num_topics` spring weights.
    weights: Vec<f64>,
    magnet_mass: Vec<f64>,
    step: usize,
}

impl Simulation {
    pub fn new(field: &FieldState, model: &TopicModel, params: LayoutParams) -> Result<Self, LayoutError> {
        Self::with_velocities(field, model, params, &Velocities::default())
    }

    pub fn with_velocities(
        field: &FieldState,
        model: &TopicModel,
        params: LayoutParams,
        velocities: &Velocities,
    ) -> Result<Self, LayoutError> {
        params.validate()?;
        let displayed: Vec<TopicId> = field.topic_ids().collect();
        let num_docs = field.doc_nodes().len();
        let num_topics = displayed.len();
        let mut weights = Vec::with_capacity(num_docs * num_topics);
        for id in field.doc_ids() {
            weights.extend(renormalized_theta(model, id, &displayed)?);
        }
        let mut magnet_mass = vec![0.0; num_topics];
        for row in weights.chunks(num_topics.max(1)) {
            for (m, w) in magnet_mass.iter_mut().zip(row) {
                *m += w;
            }
        }
        magnet_mass
            .iter_mut()
            .filter(|m| **m <= 0.0)
            .for_each(|m| *m = 1.0);
        let mut nodes = Vec::with_capacity(num_docs + num_topics);
        let mut positions = Vec::with_capacity(nodes.capacity());
        let mut pinned = Vec::with_capacity(nodes.capacity());
        for (node_ref, node) in field.nodes() {
            nodes.push(node_ref);
            positions.push(node.position);
            pinned.push(node.pinned);
        }
        let velocities = nodes
            .iter()
            .map(|n| velocities.0.get(n).copied().unwrap_or_default())
            .collect();
        Ok(Self {
            params,
            nodes,
            positions,
            velocities,
            pinned,
            num_docs,
            num_topics,
            weights,
            magnet_mass,
            step: 0,
        })
    }

    pub fn params(&self) -> &LayoutParams {
        &self.params
    }

    pub fn velocities(&self) -> Velocities {
        Velocities(self.nodes.iter().cloned().zip(self.velocities.iter().copied()).collect())
    }

    fn forces(&self) -> Vec<Point> {
        let (nd, nt) = (self.num_docs, self.num_topics);
        let k = self.params.stiffness;
        let mut forces = vec![Point::ORIGIN; nd + nt];
        for d in 0..nd {
            let xd = self.positions[d];
            for i in 0..nt {
                let w = self.weights[d * nt + i];
                if w == 0.0 {
                    continue;
                }
                let pull = (self.positions[nd + i] - xd) * (k * w);
                forces[d] += pull;
                forces[nd + i] += pull * -1.0;
            }
        }
        if self.params.repulsion > 0.0 {
            for a in 0..nd {
                for b in (a + 1)..nd {
                    let delta = self.positions[a] - self.positions[b];
                    let dist = delta.norm().max(REPULSION_DISTANCE_FLOOR);
                    // Magnitude repulsion / dist^2 along the unit vector.
                    let f = delta * (self.params.repulsion / (dist * dist * dist));
                    forces[a] += f;
                    forces[b] += f * -1.0;
                }
            }
        }
        forces
    }

    pub fn step(&mut self) -> Result<PositionFrame, LayoutError> {
        let forces = self.forces();
        let LayoutParams { damping, dt, .. } = self.params;
        let mut max_displacement = 0.0f64;
        let mut next = self.positions.clone();
        for (idx, force) in forces.into_iter().enumerate() {
            if self.pinned[idx] {
                continue;
            }
            let mass = if idx < self.num_docs {
                1.0
            } else {
                self.magnet_mass[idx - self.num_docs]
            };
            let v = (self.velocities[idx] + force * (dt / mass)) * damping;
            let moved = v * dt;
            next[idx] = self.positions[idx] + moved;
            if !next[idx].is_finite() {
                return Err(LayoutError::NonFinite {
                    step: self.step,
                    node: self.nodes[idx].clone(),
                });
            }
            self.velocities[idx] = v;
            max_displacement = max_displacement.max(moved.norm());
        }
        self.positions = next;
        let frame = PositionFrame {
            step: self.step,
            positions: self.nodes.iter().cloned().zip(self.positions.iter().copied()).collect(),
            max_displacement,
        };
        self.step += 1;
        Ok(frame)
    }

    /// Steps until the largest per-step displacement drops below epsilon or
    /// the step budget runs out. Returns every frame.
    pub fn run(&mut self) -> Result<Vec<PositionFrame>, LayoutError> {
        let mut frames = Vec::new();
        while self.step < self.params.max_steps {
            let frame = self.step()?;
            let done = frame.max_displacement < self.params.epsilon;
            frames.push(frame);
            if done {
                break;
            }
        }
        Ok(frames)
    }
}

/// Advances one step from the field's current positions and the given velocities.
pub fn step(
    field: &FieldState,
    model: &TopicModel,
    params: &LayoutParams,
    velocities: &mut Velocities,
) -> Result<PositionFrame, LayoutError> {
    let mut sim = Simulation::with_velocities(field, model, *params, velocities)?;
    let frame = sim.step()?;
    *velocities = sim.velocities();
    Ok(frame)
}

pub fn run_to_convergence(field: &FieldState, model: &TopicModel, params: &LayoutParams) -> Result<Vec<PositionFrame>, LayoutError> {
    Simulation::new(field, model, *params)?.run()
}

/// Converges the field in place and returns the number of steps taken.
pub fn converge_in_place(field: &mut FieldState, model: &TopicModel, params: &LayoutParams) -> Result<usize, LayoutError> {
    let frames = run_to_convergence(field, model, params)?;
    if let Some(last) = frames.last() {
        field.apply_positions(&last.positions);
    }
    Ok(frames.len())
}
