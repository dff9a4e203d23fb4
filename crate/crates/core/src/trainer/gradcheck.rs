use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::batch::{window_loss, SequenceBatch};
use crate::error::Result;
use crate::net::{ArchConfig, ParamStore, Tape};
use crate::objectives::SkyHandling;

/// One scalar parameter compared against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradProbe {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradProbe {
    /// `|analytic - numeric| / max(|analytic|, |numeric|)`, 0 when both vanish.
    pub fn relative_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.analytic - self.numeric).abs() / scale
        }
    }
}

fn loss_value(arch: &ArchConfig, params: &ParamStore<f64>, batch: &SequenceBatch<f64>, w: f64, sky: SkyHandling) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = params.bind_frozen(&mut tape);
    let (loss, _) = window_loss(&mut tape, arch, &bound, batch, w, sky)?;
    Ok(tape.value(loss).data()[0])
}

/// Checks the tape gradient of the joint window loss for `count` randomly
/// chosen scalar parameters (uniform over all scalars) against central
/// differences with step `h`.
pub fn check_loss_gradient(
    arch: &ArchConfig,
    params: &ParamStore<f64>,
    batch: &SequenceBatch<f64>,
    loss_weight: f64,
    sky: SkyHandling,
    count: usize,
    h: f64,
    seed: u64,
) -> Result<Vec<GradProbe>> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let (loss, _) = window_loss(&mut tape, arch, &bound, batch, loss_weight, sky)?;
    let grads = tape.backward(loss);

    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::with_capacity(count);
    for _ in 0..count {
        let mut flat = rng.random_range(0..total);
        let mut ti = 0;
        while flat >= sizes[ti] {
            flat -= sizes[ti];
            ti += 1;
        }
        let analytic = grads.get(bound.vars[ti]).map_or(0.0, |g| g.data()[flat]);
        let mut shifted = params.clone();
        shifted.tensors_mut()[ti].data_mut()[flat] += h;
        let plus = loss_value(arch, &shifted, batch, loss_weight, sky)?;
        shifted.tensors_mut()[ti].data_mut()[flat] -= 2.0 * h;
        let minus = loss_value(arch, &shifted, batch, loss_weight, sky)?;
        probes.push(GradProbe {
            name: params.names()[ti].clone(),
            index: flat,
            analytic,
            numeric: (plus - minus) / (2.0 * h),
        });
    }
    Ok(probes)
}
