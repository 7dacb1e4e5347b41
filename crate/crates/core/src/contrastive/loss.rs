//! Temperature-scaled contrastive probability and loss, plus the batched
//! form with its gradient w.r.t. the embeddings.

use crate::error::{Error, Result};
use crate::nn::Tensor;

fn check(a: &[f64], others: &[&[f64]], tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::NonPositiveTemperature(tau));
    }
    if a.is_empty() {
        return Err(Error::EmptyEmbedding);
    }
    if let Some(o) = others.iter().find(|o| o.len() != a.len()) {
        return Err(Error::ShapeMismatch(format!(
            "embedding dims {} and {}",
            a.len(),
            o.len()
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `-log P(a,p)` from the positive logit and negative logits, stable under
/// large logits.
fn neg_log_prob(pos_logit: f64, neg_logits: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = neg_logits.clone().fold(pos_logit, f64::max);
    let sum: f64 = (pos_logit - max).exp() + neg_logits.map(|l| (l - max).exp()).sum::<f64>();
    max + sum.ln() - pos_logit
}

/// `exp(aᵀp/τ) / (exp(aᵀp/τ) + Σₙ exp(aᵀn/τ))`.
pub fn contrastive_probability(a: &[f64], p: &[f64], negatives: &[&[f64]], tau: f64) -> Result<f64> {
    let mut all = vec![p];
    all.extend_from_slice(negatives);
    check(a, &all, tau)?;
    let pos = dot(a, p) / tau;
    let negs = negatives.iter().map(|n| dot(a, n) / tau);
    Ok((-neg_log_prob(pos, negs)).exp())
}

/// `-Σ_{p∈P} log P(a,p)`.
pub fn contrastive_loss(a: &[f64], positives: &[&[f64]], negatives: &[&[f64]], tau: f64) -> Result<f64> {
    if positives.is_empty() {
        return Err(Error::EmptyPositiveSet);
    }
    let all: Vec<&[f64]> = positives.iter().chain(negatives).copied().collect();
    check(a, &all, tau)?;
    let negs: Vec<f64> = negatives.iter().map(|n| dot(a, n) / tau).collect();
    Ok(positives
        .iter()
        .map(|p| neg_log_prob(dot(a, p) / tau, negs.iter().copied()))
        .sum())
}

/// Where a view in a batch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Anchor,
    View,
    SynPos,
    SynNeg,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Anchor => "anchor",
            Provenance::View => "view",
            Provenance::SynPos => "syn_pos",
            Provenance::SynNeg => "syn_neg",
        }
    }
}

/// One anchor role: the element acting as anchor and its positive and
/// negative sets. `synthetic_negatives` is the subset of `negatives` that was
/// synthesized for this anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorRole {
    pub anchor: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    pub synthetic_negatives: Vec<usize>,
}

impl AnchorRole {
    pub fn regular_negatives(&self) -> impl Iterator<Item = usize> + '_ {
        self.negatives
            .iter()
            .copied()
            .filter(|n| !self.synthetic_negatives.contains(n))
    }
}

/// Batch structure independent of the embedding values.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLayout {
    pub provenance: Vec<Provenance>,
    /// Index of the source anchor group of each element.
    pub group: Vec<usize>,
    pub roles: Vec<AnchorRole>,
}

impl BatchLayout {
    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    /// Structural checks: indices in range, positive and negative sets
    /// disjoint and non-empty, anchor in neither.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for r in &self.roles {
            if r.positives.is_empty() {
                return Err(Error::EmptyPositiveSet);
            }
            for &i in r.positives.iter().chain(&r.negatives).chain([&r.anchor]) {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, count: n });
                }
            }
            if r.positives.iter().any(|p| r.negatives.contains(p))
                || r.positives.contains(&r.anchor)
                || r.negatives.contains(&r.anchor)
                || r.synthetic_negatives.iter().any(|s| !r.negatives.contains(s))
            {
                return Err(Error::ShapeMismatch(format!(
                    "role of anchor {} has overlapping sets",
                    r.anchor
                )));
            }
        }
        Ok(())
    }
}

/// Embeddings plus the layout that assigns them anchor/positive/negative roles.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub layout: BatchLayout,
    pub embeddings: Tensor<f64>,
}

/// Mean anchor-to-set cosine similarities for one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineStats {
    pub pos: f64,
    pub neg_regular: f64,
    pub neg_synthetic: Option<f64>,
}

impl ContrastiveBatch {
    pub fn new(layout: BatchLayout, embeddings: Tensor<f64>) -> Result<Self> {
        if embeddings.rows() != layout.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} embeddings for {} layout elements",
                embeddings.rows(),
                layout.len()
            )));
        }
        layout.validate()?;
        Ok(Self { layout, embeddings })
    }

    fn e(&self, i: usize) -> &[f64] {
        self.embeddings.row(i)
    }

    /// Loss averaged over anchor roles, and its gradient w.r.t. every
    /// embedding row.
    pub fn loss_and_grad(&self, tau: f64) -> Result<(f64, Tensor<f64>)> {
        if !(tau > 0.0) {
            return Err(Error::NonPositiveTemperature(tau));
        }
        let mut grad = Tensor::zeros(self.embeddings.shape());
        let roles = &self.layout.roles;
        if roles.is_empty() {
            return Ok((0.0, grad));
        }
        let scale = 1.0 / roles.len() as f64;
        let mut total = 0.0;
        let d = self.embeddings.cols();
        let mut d_a = vec![0.0; d];
        for r in roles {
            let a = self.e(r.anchor);
            let neg_logits: Vec<f64> = r.negatives.iter().map(|&n| dot(a, self.e(n)) / tau).collect();
            // per negative, accumulated softmax weight over all positives
            let mut neg_w = vec![0.0; r.negatives.len()];
            d_a.iter_mut().for_each(|v| *v = 0.0);
            for &p in &r.positives {
                let pl = dot(a, self.e(p)) / tau;
                let max = neg_logits.iter().copied().fold(pl, f64::max);
                let z: f64 = (pl - max).exp() + neg_logits.iter().map(|l| (l - max).exp()).sum::<f64>();
                total += max + z.ln() - pl;
                let wp = (pl - max).exp() / z;
                let gp = (wp - 1.0) / tau * scale;
                add_scaled(&mut d_a, self.e(p), gp);
                add_scaled(grad.row_mut(p), a, gp);
                for (w, l) in neg_w.iter_mut().zip(&neg_logits) {
                    *w += (l - max).exp() / z;
                }
            }
            for (&n, w) in r.negatives.iter().zip(&neg_w) {
                let gn = w / tau * scale;
                add_scaled(&mut d_a, self.e(n), gn);
                add_scaled(grad.row_mut(n), a, gn);
            }
            add_scaled(grad.row_mut(r.anchor), &d_a, 1.0);
        }
        Ok((total * scale, grad))
    }

    pub fn loss(&self, tau: f64) -> Result<f64> {
        Ok(self.loss_and_grad(tau)?.0)
    }

    /// Cosine similarity of each anchor to its positives, regular negatives
    /// and synthetic negatives, averaged per role then over roles.
    pub fn cosine_stats(&self) -> CosineStats {
        let mean_cos = |a: usize, idx: &mut dyn Iterator<Item = usize>| -> Option<f64> {
            let (mut s, mut n) = (0.0, 0usize);
            for i in idx {
                s += cosine(self.e(a), self.e(i));
                n += 1;
            }
            (n > 0).then(|| s / n as f64)
        };
        let avg = |v: Vec<f64>| -> Option<f64> {
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let roles = &self.layout.roles;
        let pos: Vec<f64> = roles
            .iter()
            .filter_map(|r| mean_cos(r.anchor, &mut r.positives.iter().copied()))
            .collect();
        let neg: Vec<f64> = roles
            .iter()
            .filter_map(|r| mean_cos(r.anchor, &mut r.regular_negatives()))
            .collect();
        let syn: Vec<f64> = roles
            .iter()
            .filter_map(|r| mean_cos(r.anchor, &mut r.synthetic_negatives.iter().copied()))
            .collect();
        CosineStats {
            pos: avg(pos).unwrap_or(0.0),
            neg_regular: avg(neg).unwrap_or(0.0),
            neg_synthetic: avg(syn),
        }
    }
}

fn add_scaled(y: &mut [f64], x: &[f64], k: f64) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += k * b;
    }
}

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_negatives_gives_probability_one() {
        let a = [0.6, 0.8];
        let p = [1.0, 0.0];
        for tau in [0.05, 0.2, 3.0] {
            assert_eq!(contrastive_probability(&a, &p, &[], tau).unwrap(), 1.0);
            assert_eq!(contrastive_loss(&a, &[&p], &[], tau).unwrap(), 0.0);
        }
    }

    #[test]
    fn symmetric_case_is_one_half() {
        let a = [1.0, 0.0];
        let p = [0.5, 0.5f64.sqrt()];
        let n = [0.5, -(0.5f64.sqrt())];
        let pr = contrastive_probability(&a, &p, &[&n], 0.2).unwrap();
        assert!((pr - 0.5).abs() < 1e-15);
    }

    #[test]
    fn worked_example() {
        let a = [1.0, 0.0];
        let p = [0.6, 0.8];
        let n = [0.0, 1.0];
        // e^3 / (e^3 + 1)
        let pr = contrastive_probability(&a, &p, &[&n], 0.2).unwrap();
        assert!((pr - 0.952574).abs() < 1e-6);
        let l = contrastive_loss(&a, &[&p], &[&n], 0.2).unwrap();
        assert!((l - 0.048587).abs() < 1e-6);
        let l2 = contrastive_loss(&a, &[&p, &p], &[&n], 0.2).unwrap();
        assert_eq!(l2, 2.0 * l);
    }

    #[test]
    fn error_cases() {
        let a = [1.0, 0.0];
        assert!(matches!(
            contrastive_probability(&a, &a, &[], 0.0),
            Err(Error::NonPositiveTemperature(_))
        ));
        assert!(matches!(
            contrastive_probability(&[], &[], &[], 1.0),
            Err(Error::EmptyEmbedding)
        ));
        assert!(matches!(
            contrastive_loss(&a, &[], &[], 1.0),
            Err(Error::EmptyPositiveSet)
        ));
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let a = [1.0, 0.0];
        let p = [1.0, 0.0];
        let n = [-1.0, 0.0];
        let tau = 0.02;
        let pr = contrastive_probability(&a, &p, &[&n, &n], tau).unwrap();
        assert!(pr.is_finite() && pr > 0.999);
        let l = contrastive_loss(&n, &[&p], &[&a], tau).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn overlapping_roles_are_rejected() {
        let layout = BatchLayout {
            provenance: vec![Provenance::Anchor, Provenance::View],
            group: vec![0, 0],
            roles: vec![AnchorRole {
                anchor: 0,
                positives: vec![1],
                negatives: vec![1],
                synthetic_negatives: vec![],
            }],
        };
        assert!(layout.validate().is_err());
    }
}
