//! Flat self-organizing map: a rectangular grid of weight vectors trained by
//! online competitive learning with a Gaussian neighborhood.
//!
//! Neuron `k` sits at grid coordinate `(k % width, k / width)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HsomError, Result};
use crate::matrix::{squared_distance, Matrix};

/// Default cap on single-sample update steps per map.
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;
/// Default update steps per training sample before the cap applies.
pub const DEFAULT_ITERATIONS_PER_SAMPLE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDim {
    pub width: usize,
    pub height: usize,
}

impl GridDim {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(HsomError::invalid(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(GridDim { width, height })
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, side)
    }

    #[inline]
    pub fn neurons(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn coord(&self, k: usize) -> (usize, usize) {
        (k % self.width, k / self.width)
    }

    /// Squared Euclidean distance between two neurons on the integer grid.
    #[inline]
    pub fn grid_distance_sq(&self, a: usize, b: usize) -> f64 {
        let (ax, ay) = self.coord(a);
        let (bx, by) = self.coord(b);
        let dx = ax as f64 - bx as f64;
        let dy = ay as f64 - by as f64;
        dx * dx + dy * dy
    }
}

impl std::fmt::Display for GridDim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl std::str::FromStr for GridDim {
    type Err = HsomError;

    fn from_str(s: &str) -> Result<Self> {
        let (w, h) = s
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| HsomError::invalid(format!("grid '{s}' is not of the form WxH")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| HsomError::invalid(format!("grid '{s}' is not of the form WxH")))
        };
        GridDim::new(parse(w)?, parse(h)?)
    }
}

/// Learning-rate and neighborhood-width schedule for one map.
///
/// Both decay linearly in the step counter `t`:
/// `alpha(t) = alpha0 * (1 - t/T)` and `delta(t) = max(delta_min, delta0 * (1 - t/T))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub alpha0: f64,
    pub delta0: f64,
    pub delta_min: f64,
    pub iterations: usize,
}

impl TrainSchedule {
    pub fn new(alpha0: f64, delta0: f64, delta_min: f64, iterations: usize) -> Result<Self> {
        let s = TrainSchedule {
            alpha0,
            delta0,
            delta_min,
            iterations,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return Err(HsomError::invalid(format!(
                "alpha0 must lie in (0, 1], got {}",
                self.alpha0
            )));
        }
        if !(self.delta_min > 0.0 && self.delta_min.is_finite()) {
            return Err(HsomError::invalid(format!(
                "delta_min must be positive, got {}",
                self.delta_min
            )));
        }
        if !(self.delta0.is_finite() && self.delta0 >= self.delta_min) {
            return Err(HsomError::invalid(format!(
                "delta0 must be finite and >= delta_min ({}), got {}",
                self.delta_min, self.delta0
            )));
        }
        if self.iterations == 0 {
            return Err(HsomError::invalid("iterations must be at least 1"));
        }
        Ok(())
    }

    #[inline]
    fn remaining(&self, t: usize) -> f64 {
        1.0 - t as f64 / self.iterations as f64
    }

    #[inline]
    pub fn learning_rate(&self, t: usize) -> f64 {
        self.alpha0 * self.remaining(t)
    }

    #[inline]
    pub fn width(&self, t: usize) -> f64 {
        (self.delta0 * self.remaining(t)).max(self.delta_min)
    }
}

/// Schedule parameters that are resolved per map, because the iteration count
/// and initial width depend on the partition size and grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub alpha0: f64,
    /// `None` means `max(width, height) / 2`.
    pub delta0: Option<f64>,
    pub delta_min: f64,
    /// Fixed step count; `None` means `min(iterations_per_sample * N, max_iterations)`.
    pub iterations: Option<usize>,
    pub iterations_per_sample: usize,
    pub max_iterations: usize,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            alpha0: 0.5,
            delta0: None,
            delta_min: 0.01,
            iterations: None,
            iterations_per_sample: DEFAULT_ITERATIONS_PER_SAMPLE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

impl ScheduleParams {
    pub fn resolve(&self, dim: GridDim, samples: usize) -> Result<TrainSchedule> {
        let delta0 = self
            .delta0
            .unwrap_or_else(|| dim.width.max(dim.height) as f64 / 2.0)
            .max(self.delta_min);
        let iterations = self.iterations.unwrap_or_else(|| {
            samples
                .saturating_mul(self.iterations_per_sample)
                .min(self.max_iterations)
                .max(1)
        });
        TrainSchedule::new(self.alpha0, delta0, self.delta_min, iterations)
    }
}

/// A trained (or initialized) grid of weight vectors, one row per neuron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomMap {
    dim: GridDim,
    weights: Matrix,
}

impl SomMap {
    pub fn from_weights(dim: GridDim, weights: Matrix) -> Result<Self> {
        if weights.nrows() != dim.neurons() {
            return Err(HsomError::invalid(format!(
                "{dim} grid needs {} weight rows, got {}",
                dim.neurons(),
                weights.nrows()
            )));
        }
        if weights.ncols() == 0 {
            return Err(HsomError::invalid("weight vectors must have at least one feature"));
        }
        if !weights.all_finite() {
            return Err(HsomError::invalid("weights must be finite"));
        }
        Ok(SomMap { dim, weights })
    }

    pub fn dim(&self) -> GridDim {
        self.dim
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn neurons(&self) -> usize {
        self.dim.neurons()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weight(&self, k: usize) -> &[f64] {
        self.weights.row(k)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_dim() {
            return Err(HsomError::invalid(format!(
                "feature dimension mismatch: expected P={}, found {}",
                self.feature_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.neurons() {
            return Err(HsomError::invalid(format!(
                "neuron index {k} out of range for {} grid",
                self.dim
            )));
        }
        Ok(())
    }

    /// Index of the neuron nearest to `x`; ties go to the lowest index.
    pub fn find_bmu(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        Ok(self.bmu(x).0)
    }

    #[inline]
    pub(crate) fn bmu(&self, x: &[f64]) -> (usize, f64) {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, w) in self.weights.rows().enumerate() {
            let d = squared_distance(x, w);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        (best, best_d)
    }

    /// Gaussian neighborhood weight `exp(-|r_b - r_k|^2 / delta(t))`.
    pub fn neighborhood(&self, b: usize, k: usize, t: usize, sched: &TrainSchedule) -> Result<f64> {
        self.check_index(b)?;
        self.check_index(k)?;
        check_step(t, sched)?;
        Ok((-self.dim.grid_distance_sq(b, k) / sched.width(t)).exp())
    }

    /// One online update step pulling every neuron toward `x`, weighted by its
    /// neighborhood to the winner `b`.
    pub fn update_weights(
        &mut self,
        x: &[f64],
        b: usize,
        t: usize,
        sched: &TrainSchedule,
    ) -> Result<()> {
        self.check_dim(x)?;
        self.check_index(b)?;
        check_step(t, sched)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(HsomError::invalid("sample contains non-finite values"));
        }
        self.pull(x, b, sched.learning_rate(t), sched.width(t));
        Ok(())
    }

    #[inline]
    fn pull(&mut self, x: &[f64], b: usize, alpha: f64, width: f64) {
        let dim = self.dim;
        for k in 0..dim.neurons() {
            let h = (-dim.grid_distance_sq(b, k) / width).exp();
            let rate = alpha * h;
            for (w, xi) in self.weights.row_mut(k).iter_mut().zip(x) {
                *w += rate * (xi - *w);
            }
        }
    }
}

fn check_step(t: usize, sched: &TrainSchedule) -> Result<()> {
    if t >= sched.iterations {
        return Err(HsomError::invalid(format!(
            "step {t} out of range for a {}-step schedule",
            sched.iterations
        )));
    }
    Ok(())
}

fn check_data(data: &Matrix) -> Result<()> {
    if data.is_empty() {
        return Err(HsomError::invalid("training data is empty"));
    }
    if data.ncols() == 0 {
        return Err(HsomError::invalid("training data has no feature columns"));
    }
    Ok(())
}

/// Initializes every weight row to a data row drawn uniformly with replacement.
pub fn init_som(dim: GridDim, data: &Matrix, seed: u64) -> Result<SomMap> {
    check_data(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(init_with(dim, data, &mut rng))
}

fn init_with(dim: GridDim, data: &Matrix, rng: &mut ChaCha8Rng) -> SomMap {
    let picks: Vec<usize> = (0..dim.neurons())
        .map(|_| rng.random_range(0..data.nrows()))
        .collect();
    SomMap {
        dim,
        weights: data.select_rows(&picks),
    }
}

/// Initializes from the data, then runs exactly `sched.iterations` steps of
/// random-sample / find-winner / update.
pub fn train_som(data: &Matrix, dim: GridDim, sched: &TrainSchedule, seed: u64) -> Result<SomMap> {
    check_data(data)?;
    sched.validate()?;
    if !data.all_finite() {
        return Err(HsomError::invalid("training data contains non-finite values"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut som = init_with(dim, data, &mut rng);
    for t in 0..sched.iterations {
        let x = data.row(rng.random_range(0..data.nrows()));
        let (b, _) = som.bmu(x);
        som.pull(x, b, sched.learning_rate(t), sched.width(t));
    }
    Ok(som)
}

/// Partition of samples by winning neuron, with per-neuron summed squared
/// distance to the neuron weight.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronAssignment {
    pub members: Vec<Vec<usize>>,
    pub errors: Vec<f64>,
}

impl NeuronAssignment {
    pub fn neurons(&self) -> usize {
        self.errors.len()
    }

    pub fn sample_count(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }

    /// Per-sample winning neuron, indexed by sample.
    pub fn winners(&self) -> Vec<usize> {
        let mut out = vec![0; self.sample_count()];
        for (k, m) in self.members.iter().enumerate() {
            for &i in m {
                out[i] = k;
            }
        }
        out
    }
}

pub fn map_samples(som: &SomMap, data: &Matrix) -> Result<NeuronAssignment> {
    if !data.is_empty() && data.ncols() != som.feature_dim() {
        return Err(HsomError::invalid(format!(
            "feature dimension mismatch: expected P={}, found {}",
            som.feature_dim(),
            data.ncols()
        )));
    }
    let m = som.neurons();
    let mut members = vec![Vec::new(); m];
    let mut errors = vec![0.0; m];
    for (i, x) in data.rows().enumerate() {
        let (b, d) = som.bmu(x);
        members[b].push(i);
        errors[b] += d;
    }
    Ok(NeuronAssignment { members, errors })
}

pub fn quantization_error(assignment: &NeuronAssignment) -> f64 {
    assignment.errors.iter().sum()
}
