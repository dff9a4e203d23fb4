use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ArchConfig, DEPTH_REFINER_LAYERS, PARALLAX_FEATURES, SEMANTIC_FEATURES};
use super::cost::sncv_channels;
use super::real::Real;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const KERNEL: usize = 3;

/// One convolution: canonical name prefix and channel counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Final layer of a refiner; starts near zero so the untrained network
    /// reproduces its priors.
    pub is_output: bool,
}

impl ConvSpec {
    fn new(name: String, in_channels: usize, out_channels: usize, is_output: bool) -> Self {
        ConvSpec { name, in_channels, out_channels, is_output }
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, KERNEL, KERNEL]
    }

    pub fn bias_dims(&self) -> [usize; 4] {
        [1, self.out_channels, 1, 1]
    }

    pub fn param_count(&self) -> usize {
        self.out_channels * (self.in_channels * KERNEL * KERNEL + 1)
    }
}

pub fn encoder_convs(cfg: &ArchConfig) -> Vec<ConvSpec> {
    let mut convs = Vec::new();
    let mut cin = 3;
    for (l, &f) in (1..).zip(&cfg.filters_per_level) {
        convs.push(ConvSpec::new(format!("encoder.l{l}.conv1"), cin, f, false));
        convs.push(ConvSpec::new(format!("encoder.l{l}.conv2"), f, f, false));
        cin = f;
    }
    convs
}

/// Input channels of the parallax refiner at a level: normalized features,
/// SNCV, PSCV, two log-parallax maps, and upsampled parallax features below
/// the coarsest level.
pub fn depth_refiner_inputs(cfg: &ArchConfig, level: usize) -> usize {
    let up = if level < cfg.num_levels { PARALLAX_FEATURES } else { 0 };
    cfg.filters_per_level[level - 1] + sncv_channels(cfg.sncv_radius) + cfg.pscv_candidates + 2 + up
}

pub fn semantic_refiner_inputs(cfg: &ArchConfig, level: usize) -> usize {
    let up = if level < cfg.num_levels { cfg.num_classes + SEMANTIC_FEATURES } else { 0 };
    cfg.filters_per_level[level - 1] + up
}

fn stack(prefix: &str, cin: usize, hidden: &[usize], cout: usize) -> Vec<ConvSpec> {
    let mut convs = Vec::new();
    let mut c = cin;
    for (i, &w) in hidden.iter().enumerate() {
        convs.push(ConvSpec::new(format!("{prefix}.refine{}", i + 1), c, w, false));
        c = w;
    }
    convs.push(ConvSpec::new(format!("{prefix}.refine{}", hidden.len() + 1), c, cout, true));
    convs
}

pub fn depth_convs(cfg: &ArchConfig) -> Vec<ConvSpec> {
    debug_assert_eq!(cfg.depth_refiner_widths.len() + 1, DEPTH_REFINER_LAYERS);
    (1..=cfg.num_levels)
        .flat_map(|l| {
            stack(
                &format!("depth.l{l}"),
                depth_refiner_inputs(cfg, l),
                &cfg.depth_refiner_widths,
                1 + PARALLAX_FEATURES,
            )
        })
        .collect()
}

pub fn semantic_convs(cfg: &ArchConfig) -> Vec<ConvSpec> {
    (1..=cfg.num_levels)
        .flat_map(|l| {
            stack(
                &format!("semantic.l{l}"),
                semantic_refiner_inputs(cfg, l),
                &cfg.semantic_refiner_widths,
                SEMANTIC_FEATURES + cfg.num_classes,
            )
        })
        .collect()
}

/// Every convolution of the configured network in canonical order.
pub fn all_convs(cfg: &ArchConfig) -> Vec<ConvSpec> {
    let mut convs = encoder_convs(cfg);
    if cfg.task.has_depth() {
        convs.extend(depth_convs(cfg));
    }
    if cfg.task.has_semantic() {
        convs.extend(semantic_convs(cfg));
    }
    convs
}

pub fn param_count(cfg: &ArchConfig) -> usize {
    all_convs(cfg).iter().map(ConvSpec::param_count).sum()
}

pub fn encoder_param_count(cfg: &ArchConfig) -> usize {
    encoder_convs(cfg).iter().map(ConvSpec::param_count).sum()
}

/// Named parameter tensors in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    /// Seeded initialization: uniform He-style weights scaled for the leaky
    /// activation, zero biases, output layers shrunk by 10x. The coarsest
    /// parallax output is biased to the configured initial parallax.
    pub fn init(cfg: &ArchConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = (2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope)).sqrt();
        let mut entries = Vec::new();
        for conv in all_convs(cfg) {
            let fan_in = (conv.in_channels * KERNEL * KERNEL) as f64;
            let mut bound = gain * (3.0 / fan_in).sqrt();
            if conv.is_output {
                bound *= 0.1;
            }
            let weight = Tensor::from_fn(conv.weight_dims(), |_| T::of(rng.random_range(-bound..bound)));
            let mut bias = Tensor::zeros(conv.bias_dims());
            if conv.is_output && conv.name.starts_with(&format!("depth.l{}.", cfg.num_levels)) {
                bias.data_mut()[0] = T::of(cfg.initial_parallax.ln());
            }
            entries.push((format!("{}.weight", conv.name), weight));
            entries.push((format!("{}.bias", conv.name), bias));
        }
        Ok(Self::from_entries(entries))
    }

    pub fn from_entries(entries: Vec<(String, Tensor<T>)>) -> Self {
        let (names, tensors): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        ParamStore { names, tensors, index }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Checks that names and shapes match the configured network exactly.
    pub fn check_against(&self, cfg: &ArchConfig) -> Result<()> {
        let expected = Self::layout(cfg);
        if expected.len() != self.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                self.len()
            )));
        }
        for ((name, dims), (have, t)) in expected.iter().zip(self.names.iter().zip(&self.tensors)) {
            if name != have || *dims != t.dims() {
                return Err(Error::Checkpoint(format!(
                    "parameter {have} {:?} does not match expected {name} {dims:?}",
                    t.dims()
                )));
            }
        }
        Ok(())
    }

    pub fn layout(cfg: &ArchConfig) -> Vec<(String, [usize; 4])> {
        all_convs(cfg)
            .into_iter()
            .flat_map(|c| {
                [
                    (format!("{}.weight", c.name), c.weight_dims()),
                    (format!("{}.bias", c.name), c.bias_dims()),
                ]
            })
            .collect()
    }

    /// Records every parameter on the tape as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams {
        let vars = self.tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        BoundParams { vars, index: self.index.clone() }
    }

    /// Records every parameter as a constant (inference only).
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> BoundParams {
        let vars = self.tensors.iter().map(|t| tape.constant(t.clone())).collect();
        BoundParams { vars, index: self.index.clone() }
    }
}

/// Tape handles of a [`ParamStore`], in the same order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Var {
        match self.index.get(name) {
            Some(&i) => self.vars[i],
            None => panic!("no parameter named {name}"),
        }
    }
}
