//! Elastic-step transition building: accumulate discounted reward while the
//! Q-observations at the window origin and the current frontier land in
//! different density clusters, and commit a multi-step transition when they
//! share a cluster, the step cap is hit, or the episode ends.

use crate::clustering;
use crate::env::EnvState;
use crate::replay::{ReplayBuffer, ReplayError, Transition};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ElasticError {
    #[error("bank too small: holds {0} point(s), need at least 2")]
    BankTooSmall(usize),
    #[error("label index {index} out of range, labeling covers {len} points")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("Q-vector contains a non-finite entry")]
    NonFiniteQ,
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

/// Ring buffer of Q-vectors in insertion order; the two most recent entries
/// are the pair whose cluster labels gate the commit decision.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    entries: VecDeque<Vec<f64>>,
    capacity: usize,
}

impl MemoryBank {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 2, "memory bank needs room for at least one pair");
        MemoryBank {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, q: Vec<f64>) -> Result<(), ElasticError> {
        if q.iter().any(|v| !v.is_finite()) {
            return Err(ElasticError::NonFiniteQ);
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(q);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn snapshot(&self) -> Vec<Vec<f64>> {
        self.entries.iter().cloned().collect()
    }
}

/// Per-point labels: cluster id or noise (None).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabeling {
    labels: Vec<Option<usize>>,
}

impl ClusterLabeling {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> Result<Option<usize>, ElasticError> {
        self.labels
            .get(index)
            .copied()
            .ok_or(ElasticError::IndexOutOfRange {
                index,
                len: self.labels.len(),
            })
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }
}

/// Density clustering of the bank's Q-vectors under Euclidean distance.
/// Deterministic for a fixed bank order.
pub fn cluster_qvectors(
    bank: &MemoryBank,
    min_cluster_size: usize,
) -> Result<ClusterLabeling, ElasticError> {
    if bank.len() < 2 {
        return Err(ElasticError::BankTooSmall(bank.len()));
    }
    let labels = clustering::cluster(&bank.snapshot(), min_cluster_size);
    Ok(ClusterLabeling { labels })
}

/// True iff both points carry the same non-noise label. Two noise points do
/// not count as sharing a cluster.
pub fn same_cluster(
    labeling: &ClusterLabeling,
    i: usize,
    j: usize,
) -> Result<bool, ElasticError> {
    let a = labeling.label(i)?;
    let b = labeling.label(j)?;
    Ok(match (a, b) {
        (Some(x), Some(y)) => x == y,
        _ => false,
    })
}

/// Running multi-step window: origin state/action, the discounted reward
/// accumulated so far (covering `step_count` environment steps), and the
/// next discount power, maintained by sequential multiplication so replaying
/// the reward log reproduces it exactly.
#[derive(Debug, Clone)]
pub struct ElasticAccumulator {
    origin_state: EnvState,
    origin_action: usize,
    accum_reward: f64,
    step_count: u32,
    discount: f64,
    discount_pow: f64,
}

impl ElasticAccumulator {
    pub fn new(origin_state: EnvState, origin_action: usize, discount: f64) -> Self {
        ElasticAccumulator {
            origin_state,
            origin_action,
            accum_reward: 0.0,
            step_count: 0,
            discount,
            discount_pow: 1.0,
        }
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn accum_reward(&self) -> f64 {
        self.accum_reward
    }

    pub fn origin_state(&self) -> &EnvState {
        &self.origin_state
    }

    pub fn origin_action(&self) -> usize {
        self.origin_action
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitReason {
    /// Origin and frontier Q-vectors share a cluster label.
    SameCluster,
    /// The step cap was reached.
    StepCap,
    /// Terminal event or episode truncation forced a flush.
    EpisodeEnd,
    /// The bank is still too small for clustering; commit every step.
    WarmUp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommitDecision {
    Committed {
        buffer_index: usize,
        step_count: u32,
        reason: CommitReason,
    },
    Accumulating,
}

#[derive(Debug, Clone)]
pub struct ElasticParams {
    pub min_cluster_size: usize,
    /// Cap on the accumulated step count d; 0 reduces to one-step commits.
    pub max_steps: u32,
    /// When false this call skips re-clustering (cheaper cadence); with no
    /// fresh evidence the same-cluster test is treated as a miss.
    pub cluster_now: bool,
}

/// One elastic step. Pushes both Q-observations into the bank, decides
/// whether to commit, and either stores the multi-step transition (with max
/// priority) or folds the reward into the accumulator. `terminal` marks a
/// true terminal next-state (bootstrap drops), `truncated` an episode cut
/// short; both force a flush.
#[allow(clippy::too_many_arguments)]
pub fn elastic_step(
    acc: &mut ElasticAccumulator,
    reward: f64,
    q_origin: &[f64],
    q_frontier: &[f64],
    frontier_state: &EnvState,
    terminal: bool,
    truncated: bool,
    bank: &mut MemoryBank,
    buffer: &mut ReplayBuffer,
    params: &ElasticParams,
) -> Result<CommitDecision, ElasticError> {
    bank.push(q_origin.to_vec())?;
    bank.push(q_frontier.to_vec())?;

    let reason = if terminal || truncated {
        Some(CommitReason::EpisodeEnd)
    } else if acc.step_count >= params.max_steps {
        Some(CommitReason::StepCap)
    } else if bank.len() < 2 * params.min_cluster_size {
        Some(CommitReason::WarmUp)
    } else if params.cluster_now {
        let labeling = cluster_qvectors(bank, params.min_cluster_size)?;
        let origin_idx = bank.len() - 2;
        let frontier_idx = bank.len() - 1;
        if same_cluster(&labeling, origin_idx, frontier_idx)? {
            Some(CommitReason::SameCluster)
        } else {
            None
        }
    } else {
        None
    };

    match reason {
        Some(reason) => {
            let total_reward = acc.accum_reward + acc.discount_pow * reward;
            let transition = Transition {
                state: acc.origin_state,
                action: acc.origin_action,
                accum_reward: total_reward,
                next_state: *frontier_state,
                step_count: acc.step_count,
                terminal,
            };
            let buffer_index = buffer.push(transition)?;
            Ok(CommitDecision::Committed {
                buffer_index,
                step_count: acc.step_count,
                reason,
            })
        }
        None => {
            acc.accum_reward += acc.discount_pow * reward;
            acc.discount_pow *= acc.discount;
            acc.step_count += 1;
            Ok(CommitDecision::Accumulating)
        }
    }
}
