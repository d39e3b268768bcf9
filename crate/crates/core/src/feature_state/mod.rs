//! Per-feature hybrid states: mixture fingerprint plus semantic embedding.

pub mod embed;
pub mod gmm;
pub mod pca;

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureMetadata, FeatureTable};
use crate::error::{Error, Result};
pub use embed::{EmbeddingCache, EmbeddingProvider, EmbeddingSource};
pub use gmm::{fit_gmm, select_global_k, EmConfig, GmmFit, GmmParams};
pub use pca::reduce_dimensions;

/// Order of the mixture parameters inside `h`.
pub const THETA_LAYOUT: &str = "z1..zk,mu1..muk,sigma1..sigmak";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticEmbedding {
    pub vector: Vec<f64>,
    pub source: EmbeddingSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    /// `e ⊕ (z, μ, σ)`, length 4k.
    pub h: Vec<f64>,
    /// `e ⊕ Σ z·μ ⊕ Σ z·σ`, length k + 2.
    pub s: Vec<f64>,
}

impl HybridState {
    pub fn new(e: &SemanticEmbedding, g: &GmmParams) -> Result<Self> {
        if e.vector.len() != g.k() {
            return Err(Error::DimensionMismatch {
                expected: g.k(),
                actual: e.vector.len(),
                context: "embedding length must equal the component count".into(),
            });
        }
        let mut h = e.vector.clone();
        h.extend(g.flatten());
        Ok(Self {
            h,
            s: state_vector(&e.vector, g),
        })
    }
}

/// Compressed RL state of one feature: `e ⊕ [Σ z_j μ_j] ⊕ [Σ z_j σ_j]`.
pub fn state_vector(e: &[f64], g: &GmmParams) -> Vec<f64> {
    let mut s = Vec::with_capacity(e.len() + 2);
    s.extend_from_slice(e);
    s.push(g.weighted_mean());
    s.push(g.weighted_std());
    s
}

/// Concatenation of `s_i` for selected features and zero blocks otherwise.
pub fn global_state(states: &[Vec<f64>], mask: &[bool]) -> Result<Vec<f64>> {
    if states.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            expected: states.len(),
            actual: mask.len(),
            context: "mask length must equal the number of feature states".into(),
        });
    }
    let width = states.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(states.len() * width);
    for (s, &on) in states.iter().zip(mask) {
        if s.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                actual: s.len(),
                context: "feature states must share one length".into(),
            });
        }
        if on {
            out.extend_from_slice(s);
        } else {
            out.extend(std::iter::repeat_n(0.0, width));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStates {
    pub k: usize,
    pub per_feature_k: Vec<usize>,
    pub fits: Vec<GmmFit>,
    pub embeddings: Vec<SemanticEmbedding>,
    pub hybrid: Vec<HybridState>,
}

impl FeatureStates {
    pub fn compressed(&self) -> Vec<Vec<f64>> {
        self.hybrid.iter().map(|h| h.s.clone()).collect()
    }

    pub fn hybrid_vectors(&self) -> Vec<Vec<f64>> {
        self.hybrid.iter().map(|h| h.h.clone()).collect()
    }

    pub fn state_width(&self) -> usize {
        self.k + 2
    }
}

/// Mixture search, refit, embedding and projection for every feature.
///
/// `normalized` must already be z-scored; see [`FeatureTable::z_normalized`].
pub fn build_feature_states(
    normalized: &FeatureTable,
    metadata: &FeatureMetadata,
    provider: &mut dyn EmbeddingProvider,
    cache: Option<&mut EmbeddingCache>,
    k_max: usize,
    em: &EmConfig,
    seed: u64,
) -> Result<FeatureStates> {
    let global = select_global_k(normalized, k_max, seed, em)?;
    let k = global.k;
    let fits = gmm::fit_all(normalized, k, seed, em)?;
    for (name, fit) in normalized.feature_names().iter().zip(&fits) {
        if fit.degraded {
            log::warn!(
                "feature {name:?} has fewer distinct values than k={k}; padded with zero-weight components"
            );
        }
    }

    let raw = embed::fetch_embeddings(normalized.feature_names(), metadata, provider, cache)?;
    let reduced = reduce_dimensions(&raw.iter().map(|r| r.vector.clone()).collect::<Vec<_>>(), k)?;
    let embeddings: Vec<SemanticEmbedding> = raw
        .iter()
        .zip(reduced)
        .map(|(r, v)| SemanticEmbedding {
            vector: if r.source == EmbeddingSource::Zero { vec![0.0; k] } else { v },
            source: r.source,
        })
        .collect();
    let hybrid = embeddings
        .iter()
        .zip(&fits)
        .map(|(e, f)| HybridState::new(e, &f.params))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureStates {
        k,
        per_feature_k: global.per_feature,
        fits,
        embeddings,
        hybrid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TaskKind;
    use embed::ZeroProvider;

    fn params(z: &[f64], mu: &[f64], sd: &[f64]) -> GmmParams {
        GmmParams {
            weights: z.to_vec(),
            means: mu.to_vec(),
            stds: sd.to_vec(),
        }
    }

    #[test]
    fn state_vector_hand_example() {
        let s = state_vector(&[0.1, 0.2], &params(&[0.5, 0.5], &[0.0, 2.0], &[1.0, 3.0]));
        assert_eq!(s, vec![0.1, 0.2, 1.0, 2.0]);
    }

    #[test]
    fn state_vector_single_component() {
        assert_eq!(state_vector(&[0.0], &params(&[1.0], &[0.0], &[1.0])), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn state_vector_is_permutation_invariant() {
        let a = params(&[0.2, 0.3, 0.5], &[-1.0, 0.5, 2.0], &[0.3, 1.0, 0.7]);
        let b = params(&[0.5, 0.2, 0.3], &[2.0, -1.0, 0.5], &[0.7, 0.3, 1.0]);
        let e = [0.1, -0.2, 0.3];
        let (sa, sb) = (state_vector(&e, &a), state_vector(&e, &b));
        for (x, y) in sa.iter().zip(&sb) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(a.canonical(), b.canonical());
    }

    #[test]
    fn global_state_examples() {
        let states = vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]];
        assert_eq!(
            global_state(&states, &[true, false]).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(global_state(&states, &[false, false]).unwrap(), vec![0.0; 8]);
        assert_eq!(
            global_state(&states, &[true, true]).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
        );
        assert!(global_state(&states, &[true]).is_err());
    }

    #[test]
    fn hybrid_dimensions_and_zero_metadata() {
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|j| (0..120).map(|i| ((i * (j + 3)) % 17) as f64 + if i % 2 == 0 { 10.0 } else { 0.0 }).collect())
            .collect();
        let names: Vec<String> = (0..5).map(|j| format!("x{j}")).collect();
        let t = FeatureTable::new(names.clone(), cols, vec![0.0; 120], TaskKind::Regression)
            .unwrap()
            .z_normalized();
        let meta = FeatureMetadata::empty(&names);
        let fs = build_feature_states(&t, &meta, &mut ZeroProvider { dim: 8 }, None, 3, &EmConfig::default(), 1).unwrap();
        let k = fs.k;
        for h in &fs.hybrid {
            assert_eq!(h.h.len(), 4 * k);
            assert_eq!(h.s.len(), k + 2);
            assert!(h.h[..k].iter().all(|&x| x == 0.0));
        }
        for (e, f) in fs.embeddings.iter().zip(&fs.fits) {
            assert_eq!(e.source, EmbeddingSource::Zero);
            let h = HybridState::new(e, &f.params).unwrap();
            assert_eq!(h.s, state_vector(&e.vector, &f.params));
        }
        let g = global_state(&fs.compressed(), &[true; 5]).unwrap();
        assert_eq!(g.len(), 5 * (k + 2));
    }
}
