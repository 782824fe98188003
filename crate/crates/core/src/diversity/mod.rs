//! Semantic dissimilarity machinery: embeddings, cosine distances, and
//! k-medoids representative selection.

mod kmedoids;
mod select;

pub use kmedoids::{k_medoids, k_medoids_exhaustive, k_medoids_pam, MedoidSelection};
pub use select::{select_representatives, ClusterPicker, SelectionContext, SelectionStrategy};

use serde::{Deserialize, Serialize};

use crate::digest::fnv1a64;

/// Errors from embedding, distance, and selection.
#[derive(Debug, thiserror::Error)]
pub enum DiversityError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding vector has zero norm")]
    ZeroVector,
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("k = {k} exceeds point count n = {n}")]
    KExceedsN { k: usize, n: usize },
    #[error("cluster-negative selection needs a negative exemplar")]
    MissingNegativeExemplar,
    #[error("cluster-llm selection needs a picker")]
    PickerUnavailable,
    #[error("distance matrix invalid: {0}")]
    InvalidMatrix(String),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
}

/// Where an embedding came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingSource {
    Provider,
    DeterministicFallback,
}

/// A fixed-dimension embedding with non-zero norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source: EmbeddingSource,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Provider embedding interface (HTTP embeddings endpoint or similar).
pub trait EmbeddingBackend: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, crate::gateway::GatewayError>;
}

const FALLBACK_DIM: usize = 256;

/// Embed text: the provider when configured, otherwise a deterministic
/// hashed character-trigram frequency vector (dim 256, L2-normalized),
/// stable across runs and platforms.
pub fn embed_text(
    text: &str,
    backend: Option<&dyn EmbeddingBackend>,
) -> Result<EmbeddingVector, DiversityError> {
    if text.trim().is_empty() {
        return Err(DiversityError::EmptyText);
    }
    if let Some(backend) = backend {
        let values = backend.embed(text)?;
        let vector = EmbeddingVector {
            values,
            source: EmbeddingSource::Provider,
        };
        if vector.norm() == 0.0 {
            return Err(DiversityError::ZeroVector);
        }
        return Ok(vector);
    }
    Ok(trigram_embedding(text))
}

fn trigram_embedding(text: &str) -> EmbeddingVector {
    let mut counts = vec![0.0f64; FALLBACK_DIM];
    let chars: Vec<char> = text.chars().collect();
    if chars.len() < 3 {
        counts[(fnv1a64(text.as_bytes()) % FALLBACK_DIM as u64) as usize] += 1.0;
    } else {
        let mut buf = String::new();
        for window in chars.windows(3) {
            buf.clear();
            buf.extend(window);
            counts[(fnv1a64(buf.as_bytes()) % FALLBACK_DIM as u64) as usize] += 1.0;
        }
    }
    let norm = counts.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut counts {
        *v /= norm;
    }
    EmbeddingVector {
        values: counts,
        source: EmbeddingSource::DeterministicFallback,
    }
}

/// Symmetric cosine-distance matrix with zero diagonal, entries in [0, 2].
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Pairwise cosine distances d = 1 - cos(v_i, v_j). Symmetry and the
    /// zero diagonal hold by construction.
    pub fn from_vectors(vectors: &[EmbeddingVector]) -> Result<Self, DiversityError> {
        if vectors.is_empty() {
            return Err(DiversityError::InvalidMatrix("no vectors".into()));
        }
        let dim = vectors[0].dim();
        for v in vectors {
            if v.dim() != dim {
                return Err(DiversityError::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
            if v.norm() == 0.0 {
                return Err(DiversityError::ZeroVector);
            }
        }
        let n = vectors.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let dot: f64 = vectors[i]
                    .values
                    .iter()
                    .zip(&vectors[j].values)
                    .map(|(a, b)| a * b)
                    .sum();
                let d = (1.0 - dot / (vectors[i].norm() * vectors[j].norm())).clamp(0.0, 2.0);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Ok(Self { n, data })
    }

    /// Build from raw entries, validating symmetry, zero diagonal, and
    /// finiteness. Row-major, n x n.
    pub fn from_raw(n: usize, data: Vec<f64>) -> Result<Self, DiversityError> {
        if data.len() != n * n {
            return Err(DiversityError::InvalidMatrix(format!(
                "expected {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(DiversityError::InvalidMatrix("nonzero diagonal".into()));
            }
            for j in 0..n {
                let v = data[i * n + j];
                if !v.is_finite() {
                    return Err(DiversityError::InvalidMatrix("non-finite entry".into()));
                }
                if (v - data[j * n + i]).abs() > 1e-12 {
                    return Err(DiversityError::InvalidMatrix("asymmetric".into()));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}
