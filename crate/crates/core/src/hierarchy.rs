//! Hierarchical SOM: a tree whose internal nodes are SOMs and whose leaves
//! carry a benign/malicious label.
//!
//! Training is level-synchronous. The root map is trained on all training
//! samples; then every pending map on the current level runs the vertical
//! growth step, which either trains a child map on a neuron's samples or
//! closes the neuron as a labeled leaf. The next level is whatever maps were
//! grown. [`train_sequential`] runs each level in path order on the calling
//! thread; `parallel::train_parallel` runs the same steps on a worker pool.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{HsomError, Result};
use crate::matrix::Matrix;
use crate::parallel::{child_seed, derive_node_seed};
use crate::som::{map_samples, train_som, GridDim, NeuronAssignment, ScheduleParams, SomMap};

pub const DEFAULT_MAX_DEPTH: usize = 8;

/// Growth and stopping parameters shared by every map in the tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConfig {
    pub grid: GridDim,
    /// Multiplier on the mean per-neuron error that a neuron must exceed to grow.
    pub tau: f64,
    /// Maximum number of SOM levels, root included.
    pub max_depth: usize,
    pub schedule: ScheduleParams,
    pub seed: u64,
}

impl GrowthConfig {
    pub fn new(grid: GridDim, seed: u64) -> Self {
        GrowthConfig {
            grid,
            tau: 1.0,
            max_depth: DEFAULT_MAX_DEPTH,
            schedule: ScheduleParams::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(HsomError::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if self.max_depth == 0 {
            return Err(HsomError::invalid("max_depth must be at least 1"));
        }
        GridDim::new(self.grid.width, self.grid.height)?;
        self.schedule.resolve(self.grid, 1)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub label: u8,
    pub sample_count: usize,
    /// Share of the neuron's samples carrying `label`; 1 for empty neurons,
    /// which inherit the parent partition's majority label.
    pub majority_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HsomNode {
    Internal {
        som: SomMap,
        /// Size of the partition this map was grown on.
        sample_count: usize,
        /// One child per neuron, indexed by neuron.
        children: Vec<HsomNode>,
    },
    Leaf(Leaf),
}

impl HsomNode {
    pub fn sample_count(&self) -> usize {
        match self {
            HsomNode::Internal { sample_count, .. } => *sample_count,
            HsomNode::Leaf(l) => l.sample_count,
        }
    }

    fn depth(&self) -> usize {
        match self {
            HsomNode::Internal { children, .. } => {
                1 + children.iter().map(HsomNode::depth).max().unwrap_or(0)
            }
            HsomNode::Leaf(_) => 0,
        }
    }

    fn count(&self) -> usize {
        match self {
            HsomNode::Internal { children, .. } => 1 + children.iter().map(HsomNode::count).sum::<usize>(),
            HsomNode::Leaf(_) => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HsomModel {
    pub root: HsomNode,
    pub config: GrowthConfig,
    /// Number of SOM levels on the deepest root-to-leaf path.
    pub depth: usize,
    /// Internal nodes plus leaves.
    pub node_count: usize,
    pub training_time_s: f64,
}

impl HsomModel {
    /// Wraps a tree, recomputing depth and node count.
    pub fn from_root(root: HsomNode, config: GrowthConfig, training_time_s: f64) -> Result<Self> {
        let model = HsomModel {
            depth: root.depth(),
            node_count: root.count(),
            root,
            config,
            training_time_s,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn feature_dim(&self) -> usize {
        match &self.root {
            HsomNode::Internal { som, .. } => som.feature_dim(),
            HsomNode::Leaf(_) => 0,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        self.descend(x).map(|(label, _)| label)
    }

    /// Label plus the number of maps visited on the way to the leaf.
    pub fn descend(&self, x: &[f64]) -> Result<(u8, usize)> {
        if x.len() != self.feature_dim() {
            return Err(HsomError::invalid(format!(
                "feature dimension mismatch: expected P={}, found {}",
                self.feature_dim(),
                x.len()
            )));
        }
        let mut node = &self.root;
        let mut hops = 0;
        loop {
            match node {
                HsomNode::Internal { som, children, .. } => {
                    node = &children[som.bmu(x).0];
                    hops += 1;
                }
                HsomNode::Leaf(leaf) => return Ok((leaf.label, hops)),
            }
        }
    }

    pub fn predict_batch(&self, data: &Matrix) -> Result<Vec<u8>> {
        data.rows().map(|x| self.predict(x)).collect()
    }

    /// Leaves with the level of the map that owns them (1 = root's neurons).
    pub fn leaves(&self) -> Vec<(usize, &Leaf)> {
        fn walk<'a>(node: &'a HsomNode, level: usize, out: &mut Vec<(usize, &'a Leaf)>) {
            match node {
                HsomNode::Internal { children, .. } => {
                    for c in children {
                        walk(c, level + 1, out);
                    }
                }
                HsomNode::Leaf(l) => out.push((level, l)),
            }
        }
        let mut out = Vec::new();
        walk(&self.root, 0, &mut out);
        out
    }

    /// Checks the structural invariants: the root is a map, every map has one
    /// child per neuron, child sample counts sum to the parent's, labels are
    /// binary and depth respects `max_depth`.
    pub fn validate(&self) -> Result<()> {
        fn check(node: &HsomNode, path: &mut Vec<usize>, p: usize) -> Result<()> {
            let bad = |path: &[usize], m: String| HsomError::invalid(format!("node {path:?}: {m}"));
            match node {
                HsomNode::Leaf(l) => {
                    if l.label > 1 {
                        return Err(bad(path, format!("leaf label {}", l.label)));
                    }
                    if !(0.5..=1.0).contains(&l.majority_fraction) {
                        return Err(bad(path, format!("majority fraction {}", l.majority_fraction)));
                    }
                }
                HsomNode::Internal {
                    som,
                    sample_count,
                    children,
                } => {
                    if som.feature_dim() != p {
                        return Err(bad(path, format!("map has P={}, root has {p}", som.feature_dim())));
                    }
                    if children.len() != som.neurons() {
                        return Err(bad(
                            path,
                            format!("{} children for {} neurons", children.len(), som.neurons()),
                        ));
                    }
                    let total: usize = children.iter().map(HsomNode::sample_count).sum();
                    if total != *sample_count {
                        return Err(bad(
                            path,
                            format!("children hold {total} samples, partition has {sample_count}"),
                        ));
                    }
                    for (i, c) in children.iter().enumerate() {
                        path.push(i);
                        check(c, path, p)?;
                        path.pop();
                    }
                }
            }
            Ok(())
        }
        if !matches!(self.root, HsomNode::Internal { .. }) {
            return Err(HsomError::invalid("model root must be a map"));
        }
        check(&self.root, &mut Vec::new(), self.feature_dim())?;
        let depth = self.root.depth();
        if depth != self.depth || depth > self.config.max_depth {
            return Err(HsomError::invalid(format!(
                "tree depth {depth} (recorded {}) exceeds max_depth {} or disagrees",
                self.depth, self.config.max_depth
            )));
        }
        if self.root.count() != self.node_count {
            return Err(HsomError::invalid("recorded node count disagrees with the tree"));
        }
        Ok(())
    }

    /// Largest elementwise weight difference if both trees have the same
    /// shape, leaf labels and counts; `None` otherwise.
    pub fn max_weight_diff(&self, other: &HsomModel) -> Option<f64> {
        fn diff(a: &HsomNode, b: &HsomNode) -> Option<f64> {
            match (a, b) {
                (HsomNode::Leaf(x), HsomNode::Leaf(y)) => {
                    (x.label == y.label && x.sample_count == y.sample_count).then_some(0.0)
                }
                (
                    HsomNode::Internal {
                        som: sa,
                        sample_count: na,
                        children: ca,
                    },
                    HsomNode::Internal {
                        som: sb,
                        sample_count: nb,
                        children: cb,
                    },
                ) => {
                    if na != nb || sa.dim() != sb.dim() || sa.feature_dim() != sb.feature_dim() {
                        return None;
                    }
                    let mut worst = sa
                        .weights()
                        .as_slice()
                        .iter()
                        .zip(sb.weights().as_slice())
                        .map(|(x, y)| (x - y).abs())
                        .fold(0.0, f64::max);
                    for (x, y) in ca.iter().zip(cb) {
                        worst = worst.max(diff(x, y)?);
                    }
                    Some(worst)
                }
                _ => None,
            }
        }
        diff(&self.root, &other.root)
    }
}

/// `tau` times the mean per-neuron error.
pub fn compute_growth_threshold(assignment: &NeuronAssignment, tau: f64) -> f64 {
    let m = assignment.neurons().max(1);
    tau * assignment.errors.iter().sum::<f64>() / m as f64
}

/// Majority label and its share; ties go to malicious (1). `None` for an
/// empty list.
pub fn label_leaf(labels: &[u8]) -> Option<(u8, f64)> {
    if labels.is_empty() {
        return None;
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    let zeros = labels.len() - ones;
    let (label, count) = if ones >= zeros { (1, ones) } else { (0, zeros) };
    Some((label, count as f64 / labels.len() as f64))
}

/// What a neuron of a pending map turns into.
#[derive(Debug, Clone)]
pub enum ChildDescriptor {
    Grow {
        som: SomMap,
        partition: LabeledDataset,
    },
    Leaf(Leaf),
}

/// A map waiting for its vertical growth step.
#[derive(Debug, Clone)]
pub struct PendingNode {
    /// Neuron indices from the root; empty for the root itself.
    pub path: Vec<usize>,
    pub som: SomMap,
    pub partition: LabeledDataset,
    /// Level of this map, root = 1.
    pub depth: usize,
}

impl PendingNode {
    pub fn grow(&self, config: &GrowthConfig) -> Result<Vec<ChildDescriptor>> {
        vertical_growth(
            &self.som,
            &self.partition,
            config,
            self.depth,
            derive_node_seed(config.seed, &self.path),
        )
    }
}

/// Splits `partition` across the neurons of `parent_som` and decides, per
/// neuron, whether to train a child map on its samples or close it as a leaf.
/// A neuron grows when its error exceeds the growth threshold, it holds more
/// samples than the grid has neurons, and `depth < max_depth`.
pub fn vertical_growth(
    parent_som: &SomMap,
    partition: &LabeledDataset,
    config: &GrowthConfig,
    depth: usize,
    node_seed: u64,
) -> Result<Vec<ChildDescriptor>> {
    if depth == 0 || depth > config.max_depth {
        return Err(HsomError::invalid(format!(
            "depth {depth} outside 1..={}",
            config.max_depth
        )));
    }
    let assignment = map_samples(parent_som, partition.features())?;
    let threshold = compute_growth_threshold(&assignment, config.tau);
    let fallback = label_leaf(partition.labels()).map_or(1, |(l, _)| l);
    let grid_size = config.grid.neurons();

    let mut out = Vec::with_capacity(assignment.neurons());
    for (k, members) in assignment.members.iter().enumerate() {
        let grows = assignment.errors[k] > threshold
            && members.len() > grid_size
            && depth < config.max_depth;
        if grows {
            let sub = partition.subset(members)?;
            let sched = config.schedule.resolve(config.grid, sub.len())?;
            let som = train_som(sub.features(), config.grid, &sched, child_seed(node_seed, k))?;
            out.push(ChildDescriptor::Grow { som, partition: sub });
        } else {
            let labels: Vec<u8> = members.iter().map(|&i| partition.labels()[i]).collect();
            let (label, majority_fraction) = label_leaf(&labels).unwrap_or((fallback, 1.0));
            out.push(ChildDescriptor::Leaf(Leaf {
                label,
                sample_count: members.len(),
                majority_fraction,
            }));
        }
    }
    Ok(out)
}

enum Slot {
    Leaf(Leaf),
    Internal {
        som: SomMap,
        sample_count: usize,
        children: Vec<usize>,
    },
}

/// Runs root training, then the level loop, handing each frontier to
/// `run_level`, which must return one result per pending node, in order.
pub(crate) fn grow_levels<F>(
    train: &LabeledDataset,
    config: &GrowthConfig,
    mut run_level: F,
) -> Result<HsomModel>
where
    F: FnMut(&[PendingNode]) -> Vec<Result<Vec<ChildDescriptor>>>,
{
    config.validate()?;
    let start = Instant::now();
    // names are not needed inside the tree and would be cloned per partition
    let train = LabeledDataset::new(train.features().clone(), train.labels().to_vec())?;
    let sched = config.schedule.resolve(config.grid, train.len())?;
    let root_som = train_som(
        train.features(),
        config.grid,
        &sched,
        derive_node_seed(config.seed, &[]),
    )?;

    let mut arena = vec![Slot::Internal {
        som: root_som.clone(),
        sample_count: train.len(),
        children: Vec::new(),
    }];
    let mut frontier = vec![PendingNode {
        path: Vec::new(),
        som: root_som,
        partition: train,
        depth: 1,
    }];
    let mut slots = vec![0usize];

    while !frontier.is_empty() {
        let results = run_level(&frontier);
        debug_assert_eq!(results.len(), frontier.len());
        let mut next = Vec::new();
        let mut next_slots = Vec::new();
        for ((node, slot), result) in frontier.iter().zip(&slots).zip(results) {
            let descriptors = result.map_err(|e| match e {
                e @ HsomError::TrainingFailed { .. } => e,
                other => HsomError::TrainingFailed {
                    path: node.path.clone(),
                    message: other.to_string(),
                },
            })?;
            let mut ids = Vec::with_capacity(descriptors.len());
            for (k, d) in descriptors.into_iter().enumerate() {
                let id = arena.len();
                ids.push(id);
                match d {
                    ChildDescriptor::Leaf(l) => arena.push(Slot::Leaf(l)),
                    ChildDescriptor::Grow { som, partition } => {
                        arena.push(Slot::Internal {
                            som: som.clone(),
                            sample_count: partition.len(),
                            children: Vec::new(),
                        });
                        let mut path = node.path.clone();
                        path.push(k);
                        next.push(PendingNode {
                            path,
                            som,
                            partition,
                            depth: node.depth + 1,
                        });
                        next_slots.push(id);
                    }
                }
            }
            if let Slot::Internal { children, .. } = &mut arena[*slot] {
                *children = ids;
            }
        }
        frontier = next;
        slots = next_slots;
    }
    let elapsed = start.elapsed().as_secs_f64();

    fn build(arena: &mut Vec<Option<Slot>>, id: usize) -> HsomNode {
        match arena[id].take().expect("each slot is visited once") {
            Slot::Leaf(l) => HsomNode::Leaf(l),
            Slot::Internal {
                som,
                sample_count,
                children,
            } => HsomNode::Internal {
                som,
                sample_count,
                children: children.into_iter().map(|c| build(arena, c)).collect(),
            },
        }
    }
    let mut arena: Vec<Option<Slot>> = arena.into_iter().map(Some).collect();
    let root = build(&mut arena, 0);
    HsomModel::from_root(root, *config, elapsed)
}

/// Trains the hierarchy on the calling thread, visiting pending maps level by
/// level in path order.
pub fn train_sequential(train: &LabeledDataset, config: &GrowthConfig) -> Result<HsomModel> {
    grow_levels(train, config, |level| {
        level.iter().map(|node| node.grow(config)).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_blobs, BlobSpec, SyntheticSpec};

    fn assignment(errors: Vec<f64>) -> NeuronAssignment {
        NeuronAssignment {
            members: vec![Vec::new(); errors.len()],
            errors,
        }
    }

    fn config(side: usize, seed: u64) -> GrowthConfig {
        GrowthConfig::new(GridDim::square(side).unwrap(), seed)
    }

    #[test]
    fn threshold_examples() {
        let uniform = assignment(vec![3.0; 4]);
        let t = compute_growth_threshold(&uniform, 1.0);
        assert_eq!(t, 3.0);
        assert!(!uniform.errors.iter().any(|&e| e > t));

        let skewed = assignment(vec![0.0, 0.0, 0.0, 8.0]);
        let t = compute_growth_threshold(&skewed, 1.0);
        assert_eq!(t, 2.0);
        let over: Vec<usize> = (0..4).filter(|&k| skewed.errors[k] > t).collect();
        assert_eq!(over, vec![3]);
        let t = compute_growth_threshold(&skewed, 2.0);
        assert_eq!(t, 4.0);
        assert!(skewed.errors[3] > t);
    }

    #[test]
    fn label_leaf_examples() {
        assert_eq!(label_leaf(&[1, 1, 1]), Some((1, 1.0)));
        assert_eq!(label_leaf(&[0, 0, 0, 0, 0, 1, 1, 1]), Some((0, 0.625)));
        assert_eq!(label_leaf(&[0, 0, 1, 1]), Some((1, 0.5)));
        assert_eq!(label_leaf(&[]), None);
    }

    #[test]
    fn identical_samples_never_grow() {
        let partition =
            LabeledDataset::new(Matrix::from_rows(&vec![[1.0, 2.0]; 50]).unwrap(), vec![0; 50])
                .unwrap();
        let cfg = config(2, 1);
        let som = train_som(
            partition.features(),
            cfg.grid,
            &cfg.schedule.resolve(cfg.grid, 50).unwrap(),
            1,
        )
        .unwrap();
        let out = vertical_growth(&som, &partition, &cfg, 1, 9).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|d| matches!(d, ChildDescriptor::Leaf(_))));
    }

    #[test]
    fn small_neuron_becomes_leaf() {
        // neuron 1 gets 3 spread samples: high error but 3 <= 4 neurons
        let rows = vec![[0.0], [0.0], [0.0], [0.0], [10.0], [12.0], [14.0]];
        let partition =
            LabeledDataset::new(Matrix::from_rows(&rows).unwrap(), vec![0, 0, 0, 0, 1, 1, 1])
                .unwrap();
        let som = SomMap::from_weights(
            GridDim::new(2, 2).unwrap(),
            Matrix::from_rows(&[[0.0], [12.0], [-100.0], [-200.0]]).unwrap(),
        )
        .unwrap();
        let cfg = config(2, 1);
        let out = vertical_growth(&som, &partition, &cfg, 1, 0).unwrap();
        match &out[1] {
            ChildDescriptor::Leaf(l) => {
                assert_eq!((l.label, l.sample_count), (1, 3));
            }
            _ => panic!("neuron 1 should be a leaf"),
        }
        // empty neurons inherit the partition majority (4 benign vs 3)
        match &out[2] {
            ChildDescriptor::Leaf(l) => {
                assert_eq!((l.label, l.sample_count, l.majority_fraction), (0, 0, 1.0));
            }
            _ => panic!("empty neuron should be a leaf"),
        }
    }

    #[test]
    fn growth_respects_depth_cap() {
        let data = SyntheticSpec::new(4, 400, 4, 10.0).unwrap().generate(3).unwrap();
        let mut cfg = config(2, 5);
        let som = train_som(
            data.features(),
            cfg.grid,
            &cfg.schedule.resolve(cfg.grid, data.len()).unwrap(),
            5,
        )
        .unwrap();
        cfg.max_depth = 2;
        let out = vertical_growth(&som, &data, &cfg, 2, 0).unwrap();
        assert!(out.iter().all(|d| matches!(d, ChildDescriptor::Leaf(_))));
        assert!(vertical_growth(&som, &data, &cfg, 3, 0).is_err());
    }

    #[test]
    fn four_blobs_close_as_leaves_below_root() {
        // Each blob is split at the root; its child map then sees near-uniform
        // error and closes every neuron.
        let data = SyntheticSpec::new(4, 2000, 4, 10.0).unwrap().generate(11).unwrap();
        let cfg = GrowthConfig {
            max_depth: 2,
            ..config(2, 3)
        };
        let model = train_sequential(&data, &cfg).unwrap();
        let HsomNode::Internal { children, .. } = &model.root else {
            panic!("root must be a map")
        };
        assert!(model.depth <= 2);
        for child in children {
            if let HsomNode::Internal { children, .. } = child {
                assert!(children.iter().all(|c| matches!(c, HsomNode::Leaf(_))));
            }
        }
        assert!(model.leaves().iter().any(|(level, _)| *level == 2) || model.depth == 1);
    }

    #[test]
    fn depth_one_model_is_root_with_leaves() {
        let data = SyntheticSpec::new(2, 500, 2, 10.0).unwrap().generate(1).unwrap();
        let cfg = GrowthConfig {
            max_depth: 1,
            ..config(3, 1)
        };
        let model = train_sequential(&data, &cfg).unwrap();
        assert_eq!(model.depth, 1);
        assert_eq!(model.node_count, 10);
        let HsomNode::Internal { children, .. } = &model.root else {
            panic!()
        };
        assert!(children.iter().all(|c| matches!(c, HsomNode::Leaf(_))));
    }

    #[test]
    fn sequential_training_is_deterministic() {
        let data = SyntheticSpec::new(4, 3000, 4, 6.0).unwrap().generate(2).unwrap();
        let cfg = config(3, 42);
        let a = train_sequential(&data, &cfg).unwrap();
        let b = train_sequential(&data, &cfg).unwrap();
        assert_eq!(a.root, b.root);
        a.validate().unwrap();
    }

    #[test]
    fn separable_blobs_classify_held_out() {
        let blobs = vec![
            BlobSpec {
                center: vec![0.0, 0.0, 0.0],
                sigma: 1.0,
                label: 0,
            },
            BlobSpec {
                center: vec![10.0, 10.0, 0.0],
                sigma: 1.0,
                label: 1,
            },
        ];
        let train = synth_blobs(5000, &blobs, 1).unwrap();
        let test = synth_blobs(1000, &blobs, 2).unwrap();
        let model = train_sequential(&train, &config(3, 7)).unwrap();
        let pred = model.predict_batch(test.features()).unwrap();
        let correct = pred.iter().zip(test.labels()).filter(|(a, b)| a == b).count();
        assert!(correct as f64 / 1000.0 >= 0.99, "accuracy {}", correct as f64 / 1000.0);
    }

    #[test]
    fn predict_routes_every_sample_to_a_leaf() {
        let data = SyntheticSpec::new(4, 3000, 4, 4.0).unwrap().generate(8).unwrap();
        let model = train_sequential(&data, &config(2, 8)).unwrap();
        let test = SyntheticSpec::new(4, 1000, 4, 4.0).unwrap().generate(9).unwrap();
        for x in test.features().rows() {
            let (label, hops) = model.descend(x).unwrap();
            assert!(label <= 1);
            assert!(hops >= 1 && hops <= model.depth);
        }
        assert!(model.predict(&[1.0]).is_err());
    }

    #[test]
    fn pure_leaf_training_samples_get_leaf_label() {
        let data = SyntheticSpec::new(2, 400, 2, 20.0).unwrap().generate(4).unwrap();
        let model = train_sequential(&data, &config(2, 4)).unwrap();
        for (x, &l) in data.features().rows().zip(data.labels()) {
            assert_eq!(model.predict(x).unwrap(), l);
        }
    }

    #[test]
    fn validate_catches_broken_conservation() {
        let data = SyntheticSpec::new(2, 200, 2, 10.0).unwrap().generate(1).unwrap();
        let mut model = train_sequential(&data, &config(2, 1)).unwrap();
        if let HsomNode::Internal { sample_count, .. } = &mut model.root {
            *sample_count += 1;
        }
        assert!(model.validate().is_err());
    }
}
