//! Representative selection over candidate responses.
//!
//! The default picks cluster medoids; the alternatives mirror the ablation
//! strategies (pure random, cluster + random member, cluster + model-chosen
//! member, cluster + member farthest from a negative exemplar).

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contrast::CandidateResponse;

use super::{embed_text, k_medoids, DistanceMatrix, DiversityError, EmbeddingVector};

/// How representatives are chosen from the candidate pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionStrategy {
    #[default]
    Medoid,
    Random,
    ClusterRandom,
    ClusterLlm,
    ClusterNegative,
}

impl FromStr for SelectionStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "medoid" => Ok(Self::Medoid),
            "random" => Ok(Self::Random),
            "cluster-random" => Ok(Self::ClusterRandom),
            "cluster-llm" => Ok(Self::ClusterLlm),
            "cluster-negative" => Ok(Self::ClusterNegative),
            other => Err(format!("unknown selection strategy: {other}")),
        }
    }
}

/// Chooses one member (by local index) from a cluster's candidates.
pub type ClusterPicker<'a> =
    &'a mut dyn FnMut(&[&CandidateResponse]) -> Result<usize, DiversityError>;

/// Extra inputs some strategies need.
#[derive(Default)]
pub struct SelectionContext<'a> {
    /// The careless-persona response; required by cluster-negative.
    pub negative: Option<&'a CandidateResponse>,
    /// Model-backed chooser; required by cluster-llm.
    pub picker: Option<ClusterPicker<'a>>,
}

/// Select up to `k` dissimilar representatives. Exact-duplicate solution
/// texts collapse to their first occurrence before clustering; when the
/// distinct pool is no larger than `k`, it is returned unchanged.
pub fn select_representatives(
    candidates: &[CandidateResponse],
    k: usize,
    strategy: SelectionStrategy,
    seed: u64,
    mut ctx: SelectionContext<'_>,
) -> Result<Vec<CandidateResponse>, DiversityError> {
    if candidates.is_empty() {
        return Err(DiversityError::KExceedsN { k, n: 0 });
    }
    let distinct = collapse_duplicates(candidates);
    if distinct.len() <= k {
        return Ok(distinct.into_iter().cloned().collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if strategy == SelectionStrategy::Random {
        let mut indices: Vec<usize> = (0..distinct.len()).collect();
        for i in 0..k {
            let j = rng.random_range(i..indices.len());
            indices.swap(i, j);
        }
        let mut chosen: Vec<usize> = indices[..k].to_vec();
        chosen.sort_unstable();
        return Ok(chosen.into_iter().map(|i| distinct[i].clone()).collect());
    }

    let vectors: Vec<EmbeddingVector> = distinct
        .iter()
        .map(|c| embed_text(&c.solution_text, None))
        .collect::<Result<_, _>>()?;
    let matrix = DistanceMatrix::from_vectors(&vectors)?;
    let selection = k_medoids(&matrix, k, seed)?;

    let mut out = Vec::with_capacity(k);
    for cluster in 0..selection.k {
        let members = selection.cluster_members(cluster);
        debug_assert!(!members.is_empty(), "every medoid owns itself");
        let chosen = match strategy {
            SelectionStrategy::Medoid => selection.medoid_indices[cluster],
            SelectionStrategy::ClusterRandom => members[rng.random_range(0..members.len())],
            SelectionStrategy::ClusterLlm => {
                let picker = ctx
                    .picker
                    .as_mut()
                    .ok_or(DiversityError::PickerUnavailable)?;
                let views: Vec<&CandidateResponse> = members.iter().map(|&i| distinct[i]).collect();
                let local = picker(&views)?;
                members[local.min(members.len() - 1)]
            }
            SelectionStrategy::ClusterNegative => {
                let negative = ctx
                    .negative
                    .ok_or(DiversityError::MissingNegativeExemplar)?;
                let negative_vec = embed_text(&negative.solution_text, None)?;
                // Farthest member from the negative exemplar, ties to the
                // lowest index.
                let mut best = members[0];
                let mut best_dist = f64::NEG_INFINITY;
                for &m in &members {
                    let dist = cosine_distance(&vectors[m], &negative_vec);
                    if dist > best_dist + 1e-15 {
                        best = m;
                        best_dist = dist;
                    }
                }
                best
            }
            SelectionStrategy::Random => unreachable!("handled above"),
        };
        out.push(distinct[chosen].clone());
    }
    Ok(out)
}

fn collapse_duplicates(candidates: &[CandidateResponse]) -> Vec<&CandidateResponse> {
    let mut seen: Vec<&str> = Vec::new();
    let mut out = Vec::new();
    for c in candidates {
        if seen.contains(&c.solution_text.as_str()) {
            continue;
        }
        seen.push(&c.solution_text);
        out.push(c);
    }
    out
}

fn cosine_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let na = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}
