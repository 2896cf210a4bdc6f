//! Concept discovery: MiniBatch K-means over encoder features with a
//! full-batch Lloyd polish, nearest-centroid assignment, and partition
//! stability metrics (ARI, NMI, perturbation robustness).

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::encoder::{Encoder, FeatureVector};
use crate::go::BoardState;
use crate::nn::{masked_softmax, sample_categorical};
use crate::rng::stream;

pub const DEFAULT_K: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum ConceptError {
    #[error("insufficient data: {features} features for k={k}")]
    InsufficientData { features: usize, k: usize },
    #[error("k must be >= 1")]
    ZeroK,
    #[error("n_games must be >= 1")]
    NoGames,
    #[error("label lists have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("label lists must have length >= 2")]
    TooShort,
    #[error("need at least 2 seeds")]
    TooFewSeeds,
}

/// K centroids in feature space plus fit metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptModel {
    /// `k` rows of `dim` entries each.
    pub centroids: Vec<FeatureVector>,
    pub k: usize,
    pub fit_seed: u64,
    pub inertia: f64,
    pub feature_count: usize,
}

pub type ConceptId = usize;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid in Euclidean distance; ties break low.
pub fn assign(model: &ConceptModel, f: &[f64]) -> ConceptId {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in model.centroids.iter().enumerate() {
        let d = sq_dist(c, f);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn full_inertia(centroids: &[FeatureVector], features: &[FeatureVector]) -> f64 {
    features
        .iter()
        .map(|f| {
            centroids
                .iter()
                .map(|c| sq_dist(c, f))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// k-means++ seeding.
fn init_centroids<R: Rng>(features: &[FeatureVector], k: usize, rng: &mut R) -> Vec<FeatureVector> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(features[rng.gen_range(0..features.len())].clone());
    let mut d2: Vec<f64> = features
        .iter()
        .map(|f| sq_dist(f, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen_range(0.0..total);
            let mut chosen = features.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.gen_range(0..features.len())
        };
        centroids.push(features[next].clone());
        for (i, f) in features.iter().enumerate() {
            let d = sq_dist(f, centroids.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

/// MiniBatch K-means (batch 256, 10 passes) followed by full-batch Lloyd
/// refinement to an assignment fixpoint (at most 100 iterations). Empty
/// clusters are re-seeded to the point farthest from its nearest centroid.
pub fn fit_kmeans(
    features: &[FeatureVector],
    k: usize,
    seed: u64,
) -> Result<ConceptModel, ConceptError> {
    if k == 0 {
        return Err(ConceptError::ZeroK);
    }
    if features.len() < k {
        return Err(ConceptError::InsufficientData {
            features: features.len(),
            k,
        });
    }
    let dim = features[0].len();
    let mut rng = stream(seed, &[0x6b6d]);
    let mut centroids = init_centroids(features, k, &mut rng);

    // MiniBatch phase.
    const BATCH: usize = 256;
    const PASSES: usize = 10;
    let mut counts = vec![0u64; k];
    let mut order: Vec<usize> = (0..features.len()).collect();
    for _ in 0..PASSES {
        order.shuffle(&mut rng);
        for chunk in order.chunks(BATCH) {
            let assigned: Vec<usize> = chunk
                .iter()
                .map(|&i| {
                    let mut best = 0;
                    let mut best_d = f64::INFINITY;
                    for (c, cen) in centroids.iter().enumerate() {
                        let d = sq_dist(cen, &features[i]);
                        if d < best_d {
                            best_d = d;
                            best = c;
                        }
                    }
                    best
                })
                .collect();
            for (&i, &c) in chunk.iter().zip(&assigned) {
                counts[c] += 1;
                let eta = 1.0 / counts[c] as f64;
                for (cv, fv) in centroids[c].iter_mut().zip(&features[i]) {
                    *cv += eta * (*fv - *cv);
                }
            }
        }
    }

    // Lloyd polish. Inertia must be non-increasing across iterations.
    let mut assignments = vec![usize::MAX; features.len()];
    let mut last_inertia = f64::INFINITY;
    for _iter in 0..100 {
        let mut changed = false;
        for (i, f) in features.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cen) in centroids.iter().enumerate() {
                let d = sq_dist(cen, f);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut ns = vec![0usize; k];
        for (f, &c) in features.iter().zip(&assignments) {
            ns[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(f) {
                *s += v;
            }
        }
        let mut taken = vec![false; features.len()];
        for c in 0..k {
            if ns[c] > 0 {
                for (cv, s) in centroids[c].iter_mut().zip(&sums[c]) {
                    *cv = s / ns[c] as f64;
                }
            } else {
                // Re-seed a dead cluster to the worst-covered point.
                let mut far_i = 0;
                let mut far_d = -1.0;
                for (i, f) in features.iter().enumerate() {
                    if taken[i] {
                        continue;
                    }
                    let d = centroids
                        .iter()
                        .map(|cen| sq_dist(cen, f))
                        .fold(f64::INFINITY, f64::min);
                    if d > far_d {
                        far_d = d;
                        far_i = i;
                    }
                }
                taken[far_i] = true;
                centroids[c] = features[far_i].clone();
            }
        }
        let inertia = full_inertia(&centroids, features);
        assert!(
            inertia <= last_inertia * (1.0 + 1e-9) + 1e-9,
            "Lloyd refinement increased inertia: {last_inertia} -> {inertia}"
        );
        last_inertia = inertia;
    }

    let inertia = full_inertia(&centroids, features);
    Ok(ConceptModel {
        centroids,
        k,
        fit_seed: seed,
        inertia,
        feature_count: features.len(),
    })
}

/// Features from every state visited in `n_games` self-play games of the
/// encoder's action head (actions sampled from the masked softmax).
pub fn collect_features(
    encoder: &Encoder,
    n_games: usize,
    seed: u64,
) -> Result<Vec<FeatureVector>, ConceptError> {
    if n_games == 0 {
        return Err(ConceptError::NoGames);
    }
    let mut features = Vec::new();
    for game in 0..n_games {
        let mut rng = stream(seed, &[0xfea7, game as u64]);
        let mut state = BoardState::new_game();
        while !state.is_terminal() {
            let mask = state.legal_mask().expect("non-terminal");
            let feat = encoder.encode(&state.observe());
            let probs = masked_softmax(&encoder.head_logits(&feat), &mask);
            let action = sample_categorical(&probs, &mut rng);
            features.push(feat);
            state = state
                .apply(crate::go::Action(action))
                .expect("sampled action must be legal");
        }
    }
    Ok(features)
}

fn ln_binom2(n: u64) -> f64 {
    // n choose 2 as f64.
    (n as f64) * (n as f64 - 1.0) / 2.0
}

fn contingency(a: &[usize], b: &[usize]) -> (Vec<u64>, Vec<u64>, std::collections::BTreeMap<(usize, usize), u64>) {
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut ra = vec![0u64; ka];
    let mut rb = vec![0u64; kb];
    let mut cells = std::collections::BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        ra[x] += 1;
        rb[y] += 1;
        *cells.entry((x, y)).or_insert(0) += 1;
    }
    (ra, rb, cells)
}

/// Adjusted Rand index via the contingency-table formula.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64, ConceptError> {
    if a.len() != b.len() {
        return Err(ConceptError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(ConceptError::TooShort);
    }
    let n = a.len() as u64;
    let (ra, rb, cells) = contingency(a, b);
    let sum_cells: f64 = cells.values().map(|&c| ln_binom2(c)).sum();
    let sum_a: f64 = ra.iter().map(|&c| ln_binom2(c)).sum();
    let sum_b: f64 = rb.iter().map(|&c| ln_binom2(c)).sum();
    let total = ln_binom2(n);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-300 {
        // Both partitions trivial; identical by convention.
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max_index - expected))
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// NMI with arithmetic-mean normalization; defined as 0 when either
/// partition has zero entropy.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64, ConceptError> {
    if a.len() != b.len() {
        return Err(ConceptError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(ConceptError::TooShort);
    }
    let n = a.len() as f64;
    let (ra, rb, cells) = contingency(a, b);
    let ha = entropy(&ra, n);
    let hb = entropy(&rb, n);
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (&(x, y), &c) in &cells {
        let pxy = c as f64 / n;
        let px = ra[x] as f64 / n;
        let py = rb[y] as f64 / n;
        mi += pxy * (pxy / (px * py)).ln();
    }
    Ok((mi / (0.5 * (ha + hb))).clamp(0.0, 1.0))
}

/// Fraction of (feature, trial) pairs whose assignment survives additive
/// Gaussian noise of scale `sigma`.
pub fn perturbation_robustness(
    model: &ConceptModel,
    features: &[FeatureVector],
    sigma: f64,
    trials: usize,
    seed: u64,
) -> f64 {
    assert!(sigma >= 0.0 && trials >= 1);
    let mut rng = stream(seed, &[0x9e72]);
    let mut stable = 0u64;
    let mut total = 0u64;
    let mut noisy = vec![0.0; model.centroids[0].len()];
    for f in features {
        let base = assign(model, f);
        for _ in 0..trials {
            for (nv, fv) in noisy.iter_mut().zip(f) {
                *nv = fv + sigma * gaussian(&mut rng);
            }
            if assign(model, &noisy) == base {
                stable += 1;
            }
            total += 1;
        }
    }
    stable as f64 / total as f64
}

/// Standard normal via Box-Muller.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub mean_ari: f64,
    pub std_ari: f64,
    pub mean_nmi: f64,
    pub std_nmi: f64,
}

/// Fits one model per seed on the shared corpus and reports pairwise
/// ARI/NMI statistics between the resulting assignment vectors.
pub fn cross_seed_stability(
    features: &[FeatureVector],
    k: usize,
    seeds: &[u64],
) -> Result<StabilityReport, ConceptError> {
    if seeds.len() < 2 {
        return Err(ConceptError::TooFewSeeds);
    }
    let labelings: Vec<Vec<usize>> = seeds
        .iter()
        .map(|&s| {
            let m = fit_kmeans(features, k, s)?;
            Ok(features.iter().map(|f| assign(&m, f)).collect())
        })
        .collect::<Result<_, ConceptError>>()?;
    let mut aris = Vec::new();
    let mut nmis = Vec::new();
    for i in 0..labelings.len() {
        for j in i + 1..labelings.len() {
            aris.push(ari(&labelings[i], &labelings[j])?);
            nmis.push(nmi(&labelings[i], &labelings[j])?);
        }
    }
    let stats = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64
        } else {
            0.0
        };
        (mean, var.sqrt())
    };
    let (mean_ari, std_ari) = stats(&aris);
    let (mean_nmi, std_nmi) = stats(&nmis);
    Ok(StabilityReport {
        mean_ari,
        std_ari,
        mean_nmi,
        std_nmi,
    })
}
