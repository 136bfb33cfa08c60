//! Style embeddings: the per-scale Gram matrices extracted from a style
//! image, with affine interpolation between embeddings.

use crate::error::{Error, Result};
use crate::gram::GramMatrix;

/// Gram matrices at the network's matching scales, plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleEmbedding {
    /// (stage index, Gram) pairs in increasing stage order.
    grams: Vec<(usize, GramMatrix)>,
    style_id: String,
    style_size: usize,
}

impl StyleEmbedding {
    pub fn new(
        grams: Vec<(usize, GramMatrix)>,
        style_id: impl Into<String>,
        style_size: usize,
    ) -> Result<Self> {
        if grams.is_empty() {
            return Err(Error::shape("style embedding needs at least one scale"));
        }
        if grams.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::shape(
                "style embedding scales must be strictly increasing",
            ));
        }
        Ok(StyleEmbedding {
            grams,
            style_id: style_id.into(),
            style_size,
        })
    }

    pub fn scales(&self) -> impl Iterator<Item = usize> + '_ {
        self.grams.iter().map(|(s, _)| *s)
    }

    pub fn grams(&self) -> &[(usize, GramMatrix)] {
        &self.grams
    }

    pub fn gram_at(&self, stage: usize) -> Option<&GramMatrix> {
        self.grams
            .iter()
            .find(|(s, _)| *s == stage)
            .map(|(_, g)| g)
    }

    pub fn style_id(&self) -> &str {
        &self.style_id
    }

    pub fn style_size(&self) -> usize {
        self.style_size
    }
}

/// Per-scale affine combination of style embeddings. The weights must sum to
/// one (within 1e-6); convex weights keep every Gram positive semidefinite.
pub fn interpolate_embeddings(
    embeddings: &[StyleEmbedding],
    weights: &[f32],
) -> Result<StyleEmbedding> {
    if embeddings.is_empty() || embeddings.len() != weights.len() {
        return Err(Error::shape(format!(
            "interpolation needs matching embedding/weight counts, got {} and {}",
            embeddings.len(),
            weights.len()
        )));
    }
    let total: f64 = weights.iter().map(|&w| w as f64).sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::config(format!(
            "interpolation weights must sum to 1, got {total}"
        )));
    }
    let first = &embeddings[0];
    for e in &embeddings[1..] {
        let compatible = e.grams.len() == first.grams.len()
            && e.grams.iter().zip(&first.grams).all(|((sa, ga), (sb, gb))| {
                sa == sb
                    && ga.channels() == gb.channels()
                    && ga.normalized() == gb.normalized()
            });
        if !compatible {
            return Err(Error::shape(
                "interpolation requires embeddings with identical scale structure",
            ));
        }
    }
    let mut grams = Vec::with_capacity(first.grams.len());
    for (i, (stage, g0)) in first.grams.iter().enumerate() {
        let c = g0.channels();
        let mut acc = vec![0.0f32; c * c];
        for (e, &w) in embeddings.iter().zip(weights) {
            for (dst, &v) in acc.iter_mut().zip(e.grams[i].1.values()) {
                *dst += w * v;
            }
        }
        grams.push((
            *stage,
            GramMatrix::new(acc, c, g0.source_dims(), g0.normalized())?,
        ));
    }
    let id = embeddings
        .iter()
        .zip(weights)
        .map(|(e, w)| format!("{}*{}", w, e.style_id()))
        .collect::<Vec<_>>()
        .join("+");
    StyleEmbedding::new(grams, id, first.style_size)
}
