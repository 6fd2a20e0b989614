//! Prioritized replay buffer: sum-tree proportional sampling with stratified
//! draws and importance weights, plus the two-stage sampler that filters a
//! priority-drawn candidate batch down to a diverse subset by greedy MAP
//! selection over a similarity kernel.

use crate::env::{EnvState, ACTION_COUNT};
use crate::kernel::{self, FeatureVector, KernelError};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("empty buffer")]
    EmptyBuffer,
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("transition has a non-finite field")]
    NonFiniteTransition,
    #[error("action index {0} out of range 0..{ACTION_COUNT}")]
    InvalidAction(usize),
    #[error("index {index} out of range, buffer holds {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{got} priorities for {expected} indices")]
    LengthMismatch { got: usize, expected: usize },
    #[error("td error at position {0} is not finite")]
    NonFiniteTdError(usize),
    #[error("priority floor must be positive, got {0}")]
    InvalidPriorityFloor(f64),
    #[error("exponent {name} must lie in [0, 1], got {value}")]
    InvalidExponent { name: &'static str, value: f64 },
    #[error("candidate size {candidate} smaller than final size {target}")]
    CandidateSmallerThanFinal { candidate: usize, target: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// One replay record: the window's origin state/action, the discounted
/// reward accumulated over `step_count + 1` environment steps, the state
/// observed at the window's end, and whether that state was terminal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub action: usize,
    pub accum_reward: f64,
    pub next_state: EnvState,
    pub step_count: u32,
    pub terminal: bool,
}

impl Transition {
    fn validate(&self) -> Result<(), ReplayError> {
        if self.action >= ACTION_COUNT {
            return Err(ReplayError::InvalidAction(self.action));
        }
        if !self.accum_reward.is_finite() {
            return Err(ReplayError::NonFiniteTransition);
        }
        Ok(())
    }
}

/// Binary sum tree over scaled priorities with a parallel max tree over the
/// base priorities. Leaf count is the next power of two above the capacity;
/// internal sums are recomputed from children on every update, so a full
/// bottom-up rebuild reproduces them exactly.
#[derive(Debug, Clone)]
pub struct PriorityTree {
    leaf_count: usize,
    sums: Vec<f64>,
    maxes: Vec<f64>,
    base: Vec<f64>,
    exponent: f64,
}

impl PriorityTree {
    pub fn new(capacity: usize, exponent: f64) -> Self {
        let leaf_count = capacity.next_power_of_two().max(1);
        PriorityTree {
            leaf_count,
            sums: vec![0.0; 2 * leaf_count - 1],
            maxes: vec![0.0; 2 * leaf_count - 1],
            base: vec![0.0; leaf_count],
            exponent,
        }
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn total(&self) -> f64 {
        self.sums[0]
    }

    /// Largest base priority currently stored.
    pub fn max_base(&self) -> f64 {
        self.maxes[0]
    }

    pub fn base(&self, leaf: usize) -> f64 {
        self.base[leaf]
    }

    /// Scaled leaf value: base^exponent (0 for unset leaves).
    pub fn scaled(&self, leaf: usize) -> f64 {
        self.sums[self.leaf_count - 1 + leaf]
    }

    pub fn set(&mut self, leaf: usize, base_priority: f64) {
        self.base[leaf] = base_priority;
        let mut node = self.leaf_count - 1 + leaf;
        self.sums[node] = base_priority.powf(self.exponent);
        self.maxes[node] = base_priority;
        while node > 0 {
            node = (node - 1) / 2;
            let left = 2 * node + 1;
            let right = 2 * node + 2;
            self.sums[node] = self.sums[left] + self.sums[right];
            self.maxes[node] = self.maxes[left].max(self.maxes[right]);
        }
    }

    /// Re-exponentiate every stored leaf (used when the sampling exponent
    /// changes between calls).
    pub fn set_exponent(&mut self, exponent: f64, occupied: usize) {
        self.exponent = exponent;
        for leaf in 0..occupied {
            let base = self.base[leaf];
            self.set(leaf, base);
        }
    }

    /// Leaf whose cumulative-sum interval contains `mass` (0 <= mass < total).
    pub fn find(&self, mass: f64) -> usize {
        let mut node = 0usize;
        let mut mass = mass;
        while node < self.leaf_count - 1 {
            let left = 2 * node + 1;
            if mass < self.sums[left] {
                node = left;
            } else {
                mass -= self.sums[left];
                node = left + 1;
            }
        }
        node - (self.leaf_count - 1)
    }

    /// Maximum deviation between stored internal sums and a full bottom-up
    /// rebuild; exercised by the consistency tests.
    pub fn rebuild_deviation(&self) -> f64 {
        let mut rebuilt = self.sums.clone();
        for node in (0..self.leaf_count - 1).rev() {
            rebuilt[node] = rebuilt[2 * node + 1] + rebuilt[2 * node + 2];
        }
        self.sums
            .iter()
            .zip(&rebuilt)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A sampled batch: buffer positions, the transitions, each draw's sampling
/// probability over the whole buffer, and importance weights normalized so
/// the largest weight in the batch is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub indices: Vec<usize>,
    pub transitions: Vec<Transition>,
    pub probabilities: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Configuration for the diversity stage of the two-stage sampler.
#[derive(Debug, Clone)]
pub struct DppConfig {
    /// Gaussian kernel bandwidth over the transition features.
    pub bandwidth: f64,
    /// Diagonal jitter keeping duplicate candidates selectable.
    pub jitter: f64,
    /// Map dimensions used to normalize the offset features.
    pub map_width: i32,
    pub map_height: i32,
    /// When true, kernel entries are rescaled by per-candidate quality
    /// (sqrt of the scaled priority) before selection. Off by default: stage
    /// one already applied priority, stage two is diversity-only.
    pub quality_weighting: bool,
}

impl Default for DppConfig {
    fn default() -> Self {
        DppConfig {
            bandwidth: 1.0,
            jitter: 1e-6,
            map_width: 16,
            map_height: 16,
            quality_weighting: false,
        }
    }
}

/// Feature composition for the similarity kernel: normalized goal offsets
/// and obstacle bits of the origin state, one-hot action, reward scaled by
/// 1/500, and the normalized goal offsets of the end state.
pub fn transition_features(t: &Transition, config: &DppConfig) -> FeatureVector {
    let w = f64::from(config.map_width);
    let h = f64::from(config.map_height);
    let mut v = Vec::with_capacity(2 + ACTION_COUNT + ACTION_COUNT + 1 + 2);
    v.push(f64::from(t.state.dx) / w);
    v.push(f64::from(t.state.dy) / h);
    for &b in &t.state.blocked {
        v.push(if b { 1.0 } else { 0.0 });
    }
    for a in 0..ACTION_COUNT {
        v.push(if a == t.action { 1.0 } else { 0.0 });
    }
    v.push(t.accum_reward / 500.0);
    v.push(f64::from(t.next_state.dx) / w);
    v.push(f64::from(t.next_state.dy) / h);
    FeatureVector::new(v)
}

/// Ring-buffer prioritized replay. Single-writer: the training loop owns it.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    tree: PriorityTree,
    items: Vec<Transition>,
    write_cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, priority_exponent: f64) -> Self {
        assert!(capacity >= 1, "capacity must be at least 1");
        ReplayBuffer {
            capacity,
            tree: PriorityTree::new(capacity, priority_exponent),
            items: Vec::with_capacity(capacity),
            write_cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, index: usize) -> Result<&Transition, ReplayError> {
        self.items.get(index).ok_or(ReplayError::IndexOutOfRange {
            index,
            len: self.items.len(),
        })
    }

    /// Base (un-exponentiated) priority of a stored transition.
    pub fn priority(&self, index: usize) -> Result<f64, ReplayError> {
        if index >= self.items.len() {
            return Err(ReplayError::IndexOutOfRange {
                index,
                len: self.items.len(),
            });
        }
        Ok(self.tree.base(index))
    }

    pub fn tree(&self) -> &PriorityTree {
        &self.tree
    }

    /// Store a transition with the buffer's current maximum priority (1.0
    /// when empty), overwriting the oldest entry once full.
    pub fn push(&mut self, transition: Transition) -> Result<usize, ReplayError> {
        transition.validate()?;
        let priority = if self.items.is_empty() {
            1.0
        } else {
            self.tree.max_base()
        };
        let index = self.write_cursor;
        if self.items.len() < self.capacity {
            self.items.push(transition);
        } else {
            self.items[index] = transition;
        }
        self.tree.set(index, priority);
        self.write_cursor = (self.write_cursor + 1) % self.capacity;
        Ok(index)
    }

    /// Set priority p = |td_error| + floor at each index; the sampling
    /// exponent is applied inside the tree.
    pub fn update_priorities(
        &mut self,
        indices: &[usize],
        td_errors: &[f64],
        priority_floor: f64,
    ) -> Result<(), ReplayError> {
        if indices.len() != td_errors.len() {
            return Err(ReplayError::LengthMismatch {
                got: td_errors.len(),
                expected: indices.len(),
            });
        }
        if !(priority_floor > 0.0) || !priority_floor.is_finite() {
            return Err(ReplayError::InvalidPriorityFloor(priority_floor));
        }
        for (pos, (&index, &delta)) in indices.iter().zip(td_errors).enumerate() {
            if index >= self.items.len() {
                return Err(ReplayError::IndexOutOfRange {
                    index,
                    len: self.items.len(),
                });
            }
            if !delta.is_finite() {
                return Err(ReplayError::NonFiniteTdError(pos));
            }
        }
        for (&index, &delta) in indices.iter().zip(td_errors) {
            self.tree.set(index, delta.abs() + priority_floor);
        }
        Ok(())
    }

    fn validate_exponents(alpha: f64, beta: f64) -> Result<(), ReplayError> {
        if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
            return Err(ReplayError::InvalidExponent {
                name: "alpha",
                value: alpha,
            });
        }
        if !(0.0..=1.0).contains(&beta) || beta.is_nan() {
            return Err(ReplayError::InvalidExponent {
                name: "beta",
                value: beta,
            });
        }
        Ok(())
    }

    /// Stratified proportional sampling: the total priority mass is split
    /// into `batch_size` equal strata with one uniform draw each, so a draw
    /// lands on index j with probability scaled(j)/total. Importance weights
    /// (N * P(j))^-beta are normalized by the batch maximum.
    pub fn sample_proportional<R: Rng>(
        &mut self,
        batch_size: usize,
        priority_exponent: f64,
        weight_exponent: f64,
        rng: &mut R,
    ) -> Result<SampledBatch, ReplayError> {
        if self.items.is_empty() {
            return Err(ReplayError::EmptyBuffer);
        }
        if batch_size == 0 {
            return Err(ReplayError::ZeroBatch);
        }
        Self::validate_exponents(priority_exponent, weight_exponent)?;
        if self.tree.exponent() != priority_exponent {
            self.tree.set_exponent(priority_exponent, self.items.len());
        }
        let total = self.tree.total();
        let occupancy = self.items.len() as f64;
        let mut indices = Vec::with_capacity(batch_size);
        let mut probabilities = Vec::with_capacity(batch_size);
        let mut raw_weights = Vec::with_capacity(batch_size);
        for stratum in 0..batch_size {
            let u: f64 = rng.gen();
            let mass = (stratum as f64 + u) / batch_size as f64 * total;
            let index = self.tree.find(mass).min(self.items.len() - 1);
            let probability = self.tree.scaled(index) / total;
            indices.push(index);
            probabilities.push(probability);
            raw_weights.push((occupancy * probability).powf(-weight_exponent));
        }
        let max_weight = raw_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = raw_weights.iter().map(|w| w / max_weight).collect();
        let transitions = indices.iter().map(|&i| self.items[i]).collect();
        Ok(SampledBatch {
            indices,
            transitions,
            probabilities,
            weights,
        })
    }

    /// Two-stage sampler: draw `candidate_size` transitions proportionally,
    /// then keep the `final_size` most mutually dissimilar ones by greedy
    /// MAP selection over the Gaussian feature kernel. The survivors keep
    /// their stage-one weights and stage-one draw metadata; selection order
    /// is preserved. Fewer than `final_size` items come back only when the
    /// kernel pivots are exhausted (near-duplicate candidates).
    pub fn sample_per_dpp<R: Rng>(
        &mut self,
        candidate_size: usize,
        final_size: usize,
        priority_exponent: f64,
        weight_exponent: f64,
        config: &DppConfig,
        rng: &mut R,
    ) -> Result<SampledBatch, ReplayError> {
        if candidate_size < final_size {
            return Err(ReplayError::CandidateSmallerThanFinal {
                candidate: candidate_size,
                target: final_size,
            });
        }
        if final_size == 0 {
            return Err(ReplayError::ZeroBatch);
        }
        let candidates =
            self.sample_proportional(candidate_size, priority_exponent, weight_exponent, rng)?;
        if candidate_size == final_size {
            // total selection: the diversity stage would keep everything
            return Ok(candidates);
        }
        self.dpp_filter(&candidates, final_size, priority_exponent, config)
    }

    /// Stage two alone: reduce an already-sampled candidate batch to its
    /// most diverse `final_size` members.
    pub fn dpp_filter(
        &self,
        candidates: &SampledBatch,
        final_size: usize,
        priority_exponent: f64,
        config: &DppConfig,
    ) -> Result<SampledBatch, ReplayError> {
        if candidates.len() == final_size {
            return Ok(candidates.clone());
        }
        let features: Vec<FeatureVector> = candidates
            .transitions
            .iter()
            .map(|t| transition_features(t, config))
            .collect();
        let mut kernel_matrix = kernel::build_kernel(&features, config.bandwidth, config.jitter)?;
        if config.quality_weighting {
            let quality: Vec<f64> = candidates
                .indices
                .iter()
                .map(|&i| self.tree.base(i).powf(priority_exponent).sqrt().max(1e-12))
                .collect();
            kernel_matrix = kernel_matrix.quality_weighted(&quality)?;
        }
        let selected = kernel::greedy_map_select(&kernel_matrix, final_size)?;
        Ok(SampledBatch {
            indices: selected.iter().map(|&k| candidates.indices[k]).collect(),
            transitions: selected
                .iter()
                .map(|&k| candidates.transitions[k])
                .collect(),
            probabilities: selected
                .iter()
                .map(|&k| candidates.probabilities[k])
                .collect(),
            weights: selected.iter().map(|&k| candidates.weights[k]).collect(),
        })
    }
}
