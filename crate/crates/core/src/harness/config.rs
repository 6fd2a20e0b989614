//! Experiment configuration: a flat key = value text format with documented
//! keys, strict validation, and round-trip serialization. Unknown keys are
//! rejected so typos cannot silently fall back to defaults.

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// One-step transitions, uniform replay.
    Dqn,
    /// Elastic multi-step transitions, uniform replay.
    Elastic,
    /// Elastic transitions, prioritized candidates, diversity-filtered batch.
    PerDppElastic,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Elastic => "elastic",
            Algorithm::PerDppElastic => "per-dpp-elastic",
        }
    }

    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        match s {
            "dqn" => Ok(Algorithm::Dqn),
            "elastic" => Ok(Algorithm::Elastic),
            "per-dpp-elastic" => Ok(Algorithm::PerDppElastic),
            other => Err(HarnessError::Config(format!(
                "unknown algorithm '{other}', expected dqn | elastic | per-dpp-elastic"
            ))),
        }
    }
}

/// Every free parameter of a run. `map` is either a builtin map name or a
/// path to a map file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub map: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub step_cap: usize,
    pub buffer_capacity: usize,
    pub priority_exponent: f64,
    pub weight_exponent_start: f64,
    pub weight_exponent_end: f64,
    pub priority_floor: f64,
    pub candidate_size: usize,
    pub batch_size: usize,
    pub kernel_bandwidth: f64,
    pub kernel_jitter: f64,
    pub quality_weighting: bool,
    pub hidden_width: usize,
    pub learning_rate: f64,
    pub discount: f64,
    pub sync_period: u32,
    pub min_cluster_size: usize,
    pub bank_capacity: usize,
    pub max_elastic_steps: u32,
    pub recluster_every: usize,
    pub explore_start: f64,
    pub explore_end: f64,
    pub explore_fraction: f64,
    pub train_start: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            map: "map1-dense-random".into(),
            algorithm: Algorithm::PerDppElastic,
            seed: 0,
            epochs: 80,
            episodes_per_epoch: 30,
            step_cap: 200,
            buffer_capacity: 10_000,
            priority_exponent: 0.6,
            weight_exponent_start: 0.4,
            weight_exponent_end: 1.0,
            priority_floor: 0.01,
            candidate_size: 128,
            batch_size: 32,
            kernel_bandwidth: 1.0,
            kernel_jitter: 1e-6,
            quality_weighting: false,
            hidden_width: 64,
            learning_rate: 1e-3,
            discount: 0.9,
            sync_period: 100,
            min_cluster_size: 5,
            bank_capacity: 256,
            max_elastic_steps: 8,
            recluster_every: 1,
            explore_start: 1.0,
            explore_end: 0.05,
            explore_fraction: 0.5,
            train_start: 200,
        }
    }
}

impl ExperimentConfig {
    /// Parse the flat `key = value` format. Lines starting with '#' and
    /// blank lines are ignored; every key must be known.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut config = ExperimentConfig::default();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected 'key = value'", line_no + 1))
            })?;
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
            value.parse().map_err(|_| {
                HarnessError::Config(format!("key '{key}': cannot parse '{value}'"))
            })
        }
        match key {
            "map" => self.map = value.to_string(),
            "algorithm" => self.algorithm = Algorithm::parse(value)?,
            "seed" => self.seed = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "episodes_per_epoch" => self.episodes_per_epoch = num(key, value)?,
            "step_cap" => self.step_cap = num(key, value)?,
            "buffer_capacity" => self.buffer_capacity = num(key, value)?,
            "priority_exponent" => self.priority_exponent = num(key, value)?,
            "weight_exponent_start" => self.weight_exponent_start = num(key, value)?,
            "weight_exponent_end" => self.weight_exponent_end = num(key, value)?,
            "priority_floor" => self.priority_floor = num(key, value)?,
            "candidate_size" => self.candidate_size = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "kernel_bandwidth" => self.kernel_bandwidth = num(key, value)?,
            "kernel_jitter" => self.kernel_jitter = num(key, value)?,
            "quality_weighting" => self.quality_weighting = num(key, value)?,
            "hidden_width" => self.hidden_width = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "discount" => self.discount = num(key, value)?,
            "sync_period" => self.sync_period = num(key, value)?,
            "min_cluster_size" => self.min_cluster_size = num(key, value)?,
            "bank_capacity" => self.bank_capacity = num(key, value)?,
            "max_elastic_steps" => self.max_elastic_steps = num(key, value)?,
            "recluster_every" => self.recluster_every = num(key, value)?,
            "explore_start" => self.explore_start = num(key, value)?,
            "explore_end" => self.explore_end = num(key, value)?,
            "explore_fraction" => self.explore_fraction = num(key, value)?,
            "train_start" => self.train_start = num(key, value)?,
            other => {
                return Err(HarnessError::Config(format!("unknown key '{other}'")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bail = |msg: String| Err(HarnessError::Config(msg));
        if self.epochs < 10 {
            return bail(format!(
                "epochs must be at least 10 (convergence uses the last 10), got {}",
                self.epochs
            ));
        }
        if self.episodes_per_epoch == 0 || self.step_cap == 0 {
            return bail("episodes_per_epoch and step_cap must be positive".into());
        }
        if self.buffer_capacity == 0 {
            return bail("buffer_capacity must be positive".into());
        }
        for (name, v) in [
            ("priority_exponent", self.priority_exponent),
            ("weight_exponent_start", self.weight_exponent_start),
            ("weight_exponent_end", self.weight_exponent_end),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bail(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.priority_floor > 0.0) {
            return bail(format!(
                "priority_floor must be positive, got {}",
                self.priority_floor
            ));
        }
        if self.batch_size == 0 || self.candidate_size < self.batch_size {
            return bail(format!(
                "need candidate_size >= batch_size >= 1, got {} and {}",
                self.candidate_size, self.batch_size
            ));
        }
        if !(self.kernel_bandwidth > 0.0) {
            return bail(format!(
                "kernel_bandwidth must be positive, got {}",
                self.kernel_bandwidth
            ));
        }
        if !(self.kernel_jitter >= 0.0) {
            return bail(format!(
                "kernel_jitter must be non-negative, got {}",
                self.kernel_jitter
            ));
        }
        if self.hidden_width == 0 {
            return bail("hidden_width must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bail(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bail(format!("discount must lie in (0, 1), got {}", self.discount));
        }
        if self.sync_period < 1 {
            return bail("sync_period must be at least 1".into());
        }
        if self.min_cluster_size < 2 {
            return bail(format!(
                "min_cluster_size must be at least 2, got {}",
                self.min_cluster_size
            ));
        }
        if self.bank_capacity < 2 * self.min_cluster_size {
            return bail(format!(
                "bank_capacity must be at least 2 * min_cluster_size, got {}",
                self.bank_capacity
            ));
        }
        if self.recluster_every == 0 {
            return bail("recluster_every must be at least 1".into());
        }
        for (name, v) in [
            ("explore_start", self.explore_start),
            ("explore_end", self.explore_end),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bail(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(0.0 < self.explore_fraction && self.explore_fraction <= 1.0) {
            return bail(format!(
                "explore_fraction must lie in (0, 1], got {}",
                self.explore_fraction
            ));
        }
        if self.train_start == 0 {
            return bail("train_start must be at least 1".into());
        }
        Ok(())
    }

    /// Serialize back to the key = value format (round-trips via `parse`).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut push = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        push("map", self.map.clone());
        push("algorithm", self.algorithm.as_str().to_string());
        push("seed", self.seed.to_string());
        push("epochs", self.epochs.to_string());
        push("episodes_per_epoch", self.episodes_per_epoch.to_string());
        push("step_cap", self.step_cap.to_string());
        push("buffer_capacity", self.buffer_capacity.to_string());
        push("priority_exponent", self.priority_exponent.to_string());
        push(
            "weight_exponent_start",
            self.weight_exponent_start.to_string(),
        );
        push("weight_exponent_end", self.weight_exponent_end.to_string());
        push("priority_floor", self.priority_floor.to_string());
        push("candidate_size", self.candidate_size.to_string());
        push("batch_size", self.batch_size.to_string());
        push("kernel_bandwidth", self.kernel_bandwidth.to_string());
        push("kernel_jitter", self.kernel_jitter.to_string());
        push("quality_weighting", self.quality_weighting.to_string());
        push("hidden_width", self.hidden_width.to_string());
        push("learning_rate", self.learning_rate.to_string());
        push("discount", self.discount.to_string());
        push("sync_period", self.sync_period.to_string());
        push("min_cluster_size", self.min_cluster_size.to_string());
        push("bank_capacity", self.bank_capacity.to_string());
        push("max_elastic_steps", self.max_elastic_steps.to_string());
        push("recluster_every", self.recluster_every.to_string());
        push("explore_start", self.explore_start.to_string());
        push("explore_end", self.explore_end.to_string());
        push("explore_fraction", self.explore_fraction.to_string());
        push("train_start", self.train_start.to_string());
        s
    }
}
