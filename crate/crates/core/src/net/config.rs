use serde::{Deserialize, Serialize};

use super::cost::check_groups;
use crate::classes::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::geometry::DenominatorReading;

/// Which decoders a network carries. All variants share the encoder layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Task {
    #[default]
    Joint,
    DepthOnly,
    SemanticOnly,
}

impl Task {
    pub fn has_depth(self) -> bool {
        matches!(self, Task::Joint | Task::DepthOnly)
    }

    pub fn has_semantic(self) -> bool {
        matches!(self, Task::Joint | Task::SemanticOnly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub num_levels: usize,
    pub filters_per_level: Vec<usize>,
    pub split_k_per_level: Vec<usize>,
    pub sncv_radius: usize,
    pub pscv_candidates: usize,
    pub pscv_step: f64,
    pub num_classes: usize,
    pub sequence_length: usize,
    /// Hidden widths of the parallax refiner; the output layer is added on top.
    pub depth_refiner_widths: Vec<usize>,
    pub semantic_refiner_layers: usize,
    /// Hidden widths of the semantic refiner, `semantic_refiner_layers - 1` of them.
    pub semantic_refiner_widths: Vec<usize>,
    pub leaky_slope: f64,
    /// Depth assigned where parallax is degenerate.
    pub max_depth: f64,
    pub denominator: DenominatorReading,
    /// Parallax (pixels, coarsest level) the untrained network starts from.
    pub initial_parallax: f64,
    pub task: Task,
}

/// Channels of the parallax feature map passed between decoder levels.
pub const PARALLAX_FEATURES: usize = 4;
/// Channels of the semantic feature map passed between decoder levels.
pub const SEMANTIC_FEATURES: usize = 4;
pub const DEPTH_REFINER_LAYERS: usize = 7;

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            num_levels: 5,
            filters_per_level: vec![16, 32, 64, 96, 128],
            split_k_per_level: vec![1, 2, 2, 4, 4],
            sncv_radius: 3,
            pscv_candidates: 5,
            pscv_step: 1.25,
            num_classes: NUM_CLASSES,
            sequence_length: 3,
            depth_refiner_widths: vec![128, 128, 96, 64, 32, 16],
            semantic_refiner_layers: 5,
            semantic_refiner_widths: vec![96, 64, 32, 16],
            leaky_slope: 0.1,
            max_depth: 200.0,
            denominator: DenominatorReading::VirtualDepth,
            initial_parallax: 0.5,
            task: Task::Joint,
        }
    }
}

impl ArchConfig {
    /// A reduced configuration for fast tests: narrow layers, same topology.
    pub fn tiny(num_levels: usize) -> Self {
        let filters = [4, 8, 8, 8, 8, 8];
        let ks = [1, 2, 2, 2, 2, 2];
        ArchConfig {
            num_levels,
            filters_per_level: filters[..num_levels].to_vec(),
            split_k_per_level: ks[..num_levels].to_vec(),
            sncv_radius: 1,
            pscv_candidates: 3,
            depth_refiner_widths: vec![6, 6, 6, 6, 6, 6],
            semantic_refiner_layers: 3,
            semantic_refiner_widths: vec![6, 6],
            num_classes: 4,
            ..ArchConfig::default()
        }
    }

    pub fn with_task(mut self, task: Task) -> Self {
        self.task = task;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(4..=6).contains(&self.num_levels) {
            return bad(format!("num_levels must be 4, 5 or 6, got {}", self.num_levels));
        }
        if self.filters_per_level.len() != self.num_levels || self.split_k_per_level.len() != self.num_levels {
            return bad(format!(
                "filters_per_level and split_k_per_level need {} entries",
                self.num_levels
            ));
        }
        for (&f, &k) in self.filters_per_level.iter().zip(&self.split_k_per_level) {
            check_groups(f, k)?;
        }
        if self.pscv_candidates < 3 || self.pscv_candidates % 2 == 0 {
            return bad(format!("pscv_candidates must be odd and >= 3, got {}", self.pscv_candidates));
        }
        if !(self.pscv_step > 1.0) || !self.pscv_step.is_finite() {
            return bad(format!("pscv_step must exceed 1, got {}", self.pscv_step));
        }
        if self.sncv_radius == 0 {
            return bad("sncv_radius must be at least 1".into());
        }
        if self.num_classes < 2 || self.num_classes > 256 {
            return bad(format!("num_classes must be in [2, 256], got {}", self.num_classes));
        }
        if self.sequence_length < 2 {
            return bad(format!("sequence_length must be at least 2, got {}", self.sequence_length));
        }
        if self.depth_refiner_widths.len() != DEPTH_REFINER_LAYERS - 1 {
            return bad(format!(
                "the parallax refiner has {DEPTH_REFINER_LAYERS} layers, so it needs {} hidden widths",
                DEPTH_REFINER_LAYERS - 1
            ));
        }
        if self.semantic_refiner_layers < 2 || self.semantic_refiner_widths.len() != self.semantic_refiner_layers - 1 {
            return bad(format!(
                "semantic_refiner_layers = {} needs that many minus one hidden widths",
                self.semantic_refiner_layers
            ));
        }
        let widths = self.filters_per_level.iter().chain(&self.depth_refiner_widths);
        if widths.chain(&self.semantic_refiner_widths).any(|&w| w == 0) {
            return bad("layer widths must be positive".into());
        }
        if !(self.max_depth > 0.0) || !(self.initial_parallax > 0.0) || !(self.leaky_slope >= 0.0) {
            return bad("max_depth and initial_parallax must be positive, leaky_slope non-negative".into());
        }
        Ok(())
    }

    /// Input images must have both sides divisible by this.
    pub fn divisor(&self) -> usize {
        1 << self.num_levels
    }

    pub fn check_input(&self, width: usize, height: usize) -> Result<()> {
        let d = self.divisor();
        if width == 0 || height == 0 || width % d != 0 || height % d != 0 {
            return Err(Error::Shape(format!(
                "input {width}x{height} must have both sides divisible by 2^{} = {d}",
                self.num_levels
            )));
        }
        Ok(())
    }

    /// `(height, width, channels)` of every encoder level for an input size.
    pub fn pyramid_shapes(&self, width: usize, height: usize) -> Result<Vec<(usize, usize, usize)>> {
        self.check_input(width, height)?;
        Ok((1..=self.num_levels)
            .map(|l| (height >> l, width >> l, self.filters_per_level[l - 1]))
            .collect())
    }
}
