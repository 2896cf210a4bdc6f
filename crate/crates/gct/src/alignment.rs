//! Concept-space alignment between two agents and zero-shot policy transfer
//! by embedding remapping.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bottleneck::{Agent, BottleneckPolicy, Provenance};
use crate::concepts::ConceptModel;
use crate::hungarian::{hungarian, HungarianError};
use crate::rng::stream;

#[derive(Debug, Error, PartialEq)]
pub enum AlignmentError {
    #[error("concept counts differ: {0} vs {1}")]
    KMismatch(usize, usize),
    #[error("feature dims differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("random alignment requires a seed")]
    MissingSeed,
    #[error(transparent)]
    Assignment(#[from] HungarianError),
    #[error("policy k {policy} does not match alignment k {map}")]
    PolicyKMismatch { policy: usize, map: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMethod {
    Hungarian,
    GreedyNn,
    Procrustes,
    Random,
    Identity,
}

impl AlignMethod {
    pub fn parse(s: &str) -> Option<AlignMethod> {
        match s {
            "hungarian" => Some(AlignMethod::Hungarian),
            "greedy" | "greedy_nn" => Some(AlignMethod::GreedyNn),
            "procrustes" => Some(AlignMethod::Procrustes),
            "random" => Some(AlignMethod::Random),
            "identity" => Some(AlignMethod::Identity),
            _ => None,
        }
    }
}

/// K x K matrix of cosine similarities between source and target centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Vec<Vec<f64>>,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        // Zero-norm centroids are defined to be dissimilar to everything.
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

pub fn similarity(a: &ConceptModel, b: &ConceptModel) -> Result<SimilarityMatrix, AlignmentError> {
    if a.k != b.k {
        return Err(AlignmentError::KMismatch(a.k, b.k));
    }
    let da = a.centroids[0].len();
    let db = b.centroids[0].len();
    if da != db {
        return Err(AlignmentError::DimMismatch(da, db));
    }
    let values = a
        .centroids
        .iter()
        .map(|ca| b.centroids.iter().map(|cb| cosine(ca, cb)).collect())
        .collect();
    Ok(SimilarityMatrix { values })
}

fn similarity_of_rows(rows: &[Vec<f64>], b: &ConceptModel) -> SimilarityMatrix {
    SimilarityMatrix {
        values: rows
            .iter()
            .map(|ca| b.centroids.iter().map(|cb| cosine(ca, cb)).collect())
            .collect(),
    }
}

/// Pairs of (source concept, target concept) plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub pairs: Vec<(usize, usize)>,
    pub method: AlignMethod,
    pub mean_matched_similarity: f64,
    pub seed: Option<u64>,
    pub k: usize,
}

fn mean_matched(sim: &SimilarityMatrix, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| sim.values[i][j]).sum::<f64>() / pairs.len() as f64
}

/// Orthogonal rotation R minimizing ||A R - B||_F via SVD of A^T B.
fn procrustes_rotation(a: &ConceptModel, b: &ConceptModel) -> DMatrix<f64> {
    let dim = a.centroids[0].len();
    let k = a.k;
    let ma = DMatrix::from_fn(k, dim, |r, c| a.centroids[r][c]);
    let mb = DMatrix::from_fn(k, dim, |r, c| b.centroids[r][c]);
    let m = ma.transpose() * mb;
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    u * vt
}

pub fn align(
    a: &ConceptModel,
    b: &ConceptModel,
    method: AlignMethod,
    seed: Option<u64>,
) -> Result<AlignmentMap, AlignmentError> {
    let sim = similarity(a, b)?;
    let k = a.k;
    let (pairs, sim_for_stats) = match method {
        AlignMethod::Hungarian => {
            let cost: Vec<Vec<f64>> = sim.values.iter().map(|r| r.iter().map(|s| -s).collect()).collect();
            let assignment = hungarian(&cost)?;
            let pairs = assignment.into_iter().enumerate().collect();
            (pairs, sim.clone())
        }
        AlignMethod::GreedyNn => {
            // Each target slot fetches its most-similar source concept; ties
            // break to the lowest source index. May be many-to-one.
            let mut pairs = Vec::with_capacity(k);
            for j in 0..k {
                let mut best = 0;
                let mut best_s = f64::NEG_INFINITY;
                for (i, row) in sim.values.iter().enumerate() {
                    if row[j] > best_s {
                        best_s = row[j];
                        best = i;
                    }
                }
                pairs.push((best, j));
            }
            (pairs, sim.clone())
        }
        AlignMethod::Procrustes => {
            let r = procrustes_rotation(a, b);
            let rotated: Vec<Vec<f64>> = a
                .centroids
                .iter()
                .map(|row| {
                    (0..row.len())
                        .map(|c| (0..row.len()).map(|d| row[d] * r[(d, c)]).sum())
                        .collect()
                })
                .collect();
            let rsim = similarity_of_rows(&rotated, b);
            let cost: Vec<Vec<f64>> =
                rsim.values.iter().map(|r| r.iter().map(|s| -s).collect()).collect();
            let assignment = hungarian(&cost)?;
            let pairs: Vec<(usize, usize)> = assignment.into_iter().enumerate().collect();
            (pairs, rsim)
        }
        AlignMethod::Random => {
            let seed = seed.ok_or(AlignmentError::MissingSeed)?;
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(&mut stream(seed, &[0xa11]));
            let pairs = perm.into_iter().enumerate().collect();
            (pairs, sim.clone())
        }
        AlignMethod::Identity => ((0..k).map(|i| (i, i)).collect(), sim.clone()),
    };
    Ok(AlignmentMap {
        mean_matched_similarity: mean_matched(&sim_for_stats, &pairs),
        pairs,
        method,
        seed,
        k,
    })
}

/// New policy whose embedding row j is the mean of the source rows mapped to
/// target j; rows with an empty preimage get the global mean source row; MLP
/// weights are copied verbatim.
pub fn remap_policy(src: &BottleneckPolicy, map: &AlignmentMap) -> Result<BottleneckPolicy, AlignmentError> {
    if src.k != map.k {
        return Err(AlignmentError::PolicyKMismatch {
            policy: src.k,
            map: map.k,
        });
    }
    let d = src.embed_dim();
    let mut rows = vec![vec![0.0; d]; src.k];
    let mut counts = vec![0usize; src.k];
    for &(i, j) in &map.pairs {
        counts[j] += 1;
        for (r, s) in rows[j].iter_mut().zip(&src.embedding[i]) {
            *r += s;
        }
    }
    let mut global_mean = vec![0.0; d];
    for row in &src.embedding {
        for (g, v) in global_mean.iter_mut().zip(row) {
            *g += v / src.k as f64;
        }
    }
    for (row, &c) in rows.iter_mut().zip(&counts) {
        if c == 0 {
            row.copy_from_slice(&global_mean);
        } else {
            for v in row.iter_mut() {
                *v /= c as f64;
            }
        }
    }
    Ok(BottleneckPolicy {
        embedding: rows,
        l1: src.l1.clone(),
        l2: src.l2.clone(),
        k: src.k,
        seed: src.seed,
        provenance: Provenance::Transferred,
    })
}

/// Zero-shot transfer: target encoder + target concepts + remapped source
/// policy. No inputs are modified.
pub fn transfer(
    src: &Agent,
    tgt: &Agent,
    method: AlignMethod,
    seed: Option<u64>,
) -> Result<Agent, AlignmentError> {
    let map = align(&src.concept_model, &tgt.concept_model, method, seed)?;
    let policy = remap_policy(&src.policy, &map)?;
    Ok(Agent {
        encoder: tgt.encoder.clone(),
        concept_model: tgt.concept_model.clone(),
        policy,
    })
}
