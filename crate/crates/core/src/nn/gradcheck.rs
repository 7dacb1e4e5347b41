//! Analytic gradients against central finite differences, at f64.

use super::model::{backward, forward, init_params, Architecture, ModelParams};
use super::tensor::Tensor;
use crate::contrastive::{AnchorRole, BatchLayout, ContrastiveBatch, Provenance};
use crate::error::Result;
use crate::image::Image;
use crate::rng::Xoshiro256;

/// Size of the random instance checked.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckSpec {
    pub arch: Architecture,
    pub height: usize,
    pub width: usize,
    /// Positive pairs in the batch; the batch holds `2 * pairs` images.
    pub pairs: usize,
    pub temperature: f64,
    /// Parameter coordinates sampled per instance (plus every bias of the
    /// last layer).
    pub coords: usize,
    pub step: f64,
}

impl Default for GradCheckSpec {
    fn default() -> Self {
        Self {
            arch: Architecture::default(),
            height: 8,
            width: 8,
            pairs: 3,
            temperature: 0.5,
            coords: 200,
            step: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Index of the worst coordinate.
    pub worst_index: usize,
    pub checked: usize,
    /// Coordinates skipped because the ±step passes changed a ReLU pattern.
    pub skipped_kinks: usize,
}

/// Denominator floor of the relative error, sized to the finite-difference
/// noise of an O(1) loss at step 1e-5.
const REL_FLOOR: f64 = 1e-6;

fn pair_layout(n: usize) -> BatchLayout {
    BatchLayout {
        provenance: (0..n)
            .map(|j| if j % 2 == 0 { Provenance::Anchor } else { Provenance::View })
            .collect(),
        group: (0..n).map(|j| j / 2).collect(),
        roles: (0..n)
            .map(|j| AnchorRole {
                anchor: j,
                positives: vec![j ^ 1],
                negatives: (0..n).filter(|&k| k != j && k != (j ^ 1)).collect(),
                synthetic_negatives: Vec::new(),
            })
            .collect(),
    }
}

struct Instance {
    params: ModelParams<f64>,
    images: Vec<Image>,
    layout: BatchLayout,
    tau: f64,
}

impl Instance {
    fn new(spec: &GradCheckSpec, seed: u64) -> Self {
        let mut params: ModelParams<f64> = init_params(spec.arch, seed);
        let mut r = Xoshiro256::for_item(seed, &[1]);
        for (i, p) in spec.arch.params().iter().enumerate() {
            if p.is_bias {
                let range = params.range(i);
                for v in &mut params.data_mut()[range] {
                    *v = r.uniform(-0.1, 0.1);
                }
            }
        }
        let n = 2 * spec.pairs;
        let images = (0..n)
            .map(|_| {
                let data = (0..spec.height * spec.width * 3).map(|_| r.next_f64() as f32).collect();
                Image::from_data(spec.height, spec.width, data).expect("dims")
            })
            .collect();
        Self {
            params,
            images,
            layout: pair_layout(n),
            tau: spec.temperature,
        }
    }

    fn loss(&self, params: &ModelParams<f64>) -> Result<(f64, Vec<bool>)> {
        let fwd = forward(params, &self.images)?;
        let pattern = fwd.caches.iter().flat_map(|c| c.activation_pattern()).collect();
        let batch = ContrastiveBatch::new(self.layout.clone(), fwd.embeddings(params.arch().embed_dim))?;
        Ok((batch.loss(self.tau)?, pattern))
    }

    fn analytic(&self) -> Result<ModelParams<f64>> {
        let fwd = forward(&self.params, &self.images)?;
        let emb: Tensor<f64> = fwd.embeddings(self.params.arch().embed_dim);
        let batch = ContrastiveBatch::new(self.layout.clone(), emb)?;
        let (_, dz) = batch.loss_and_grad(self.tau)?;
        backward(&self.params, &fwd, &dz)
    }
}

/// Worst relative error between analytic and central-difference gradients
/// on a random instance drawn from `seed`.
pub fn gradient_check(spec: &GradCheckSpec, seed: u64) -> Result<GradCheckReport> {
    gradient_check_with_perturbation(spec, seed, None)
}

/// As [`gradient_check`], but adds `delta` to the analytic gradient of
/// coordinate `index` first. The coordinate is always checked.
pub fn gradient_check_with_perturbation(
    spec: &GradCheckSpec,
    seed: u64,
    perturb: Option<(usize, f64)>,
) -> Result<GradCheckReport> {
    let inst = Instance::new(spec, seed);
    let mut analytic = inst.analytic()?;
    if let Some((i, d)) = perturb {
        analytic.data_mut()[i] += d;
    }
    let (_, base_pattern) = inst.loss(&inst.params)?;

    let n = inst.params.len();
    let mut r = Xoshiro256::for_item(seed, &[2]);
    let mut coords: Vec<usize> = (0..spec.coords).map(|_| r.index(n)).collect();
    let last = spec.arch.params().len() - 1;
    coords.extend(inst.params.range(last));
    if let Some((i, _)) = perturb {
        coords.push(i);
    }
    coords.sort_unstable();
    coords.dedup();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: 0,
        skipped_kinks: 0,
    };
    let mut p = inst.params.clone();
    for &i in &coords {
        let orig = p.data()[i];
        p.data_mut()[i] = orig + spec.step;
        let (plus, pat_plus) = inst.loss(&p)?;
        p.data_mut()[i] = orig - spec.step;
        let (minus, pat_minus) = inst.loss(&p)?;
        p.data_mut()[i] = orig;
        if pat_plus != base_pattern || pat_minus != base_pattern {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * spec.step);
        let a = analytic.data()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}
