//! Artifact persistence: a JSON manifest at `PATH` plus a raw little-endian
//! f32 tensor blob at `PATH.blob`, with an FNV-1a 64 content hash recorded in
//! the manifest and verified on load. Writes are atomic (temp file + rename).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::alignment::AlignmentMap;
use crate::bottleneck::{Agent, BottleneckPolicy, Provenance};
use crate::concepts::ConceptModel;
use crate::encoder::Encoder;
use crate::nn::Linear;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("blob hash mismatch: manifest {expected}, computed {actual}")]
    HashMismatch { expected: String, actual: String },
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("expected artifact kind {expected:?}, found {found:?}")]
    BadKind { expected: String, found: String },
    #[error("tensor {0:?} missing from manifest")]
    MissingTensor(String),
    #[error("tensor {name:?} does not fit the blob")]
    BadTensorBounds { name: String },
    #[error("manifest field {0:?} missing or malformed")]
    BadField(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn hash_string(bytes: &[u8]) -> String {
    format!("fnv1a64:{:016x}", fnv1a64(bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub byte_offset: u64,
    pub byte_len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ArtifactManifest {
    pub artifact_kind: String,
    pub format_version: u32,
    pub blob_hash: String,
    /// Blob hashes of the upstream artifacts this one was derived from.
    pub created_from: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub hyperparameters: BTreeMap<String, Value>,
    pub tensors: Vec<TensorEntry>,
}

/// Accumulates named f64 tensors into one little-endian f32 blob.
#[derive(Default)]
pub struct BlobWriter {
    bytes: Vec<u8>,
    tensors: Vec<TensorEntry>,
}

impl BlobWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, shape: &[usize], data: &[f64]) {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        let byte_offset = self.bytes.len() as u64;
        for &x in data {
            self.bytes.extend_from_slice(&(x as f32).to_le_bytes());
        }
        self.tensors.push(TensorEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            byte_offset,
            byte_len: (data.len() * 4) as u64,
        });
    }

    fn finish(
        self,
        artifact_kind: &str,
        created_from: Vec<String>,
        seeds: BTreeMap<String, u64>,
        hyperparameters: BTreeMap<String, Value>,
    ) -> (ArtifactManifest, Vec<u8>) {
        let manifest = ArtifactManifest {
            artifact_kind: artifact_kind.to_string(),
            format_version: FORMAT_VERSION,
            blob_hash: hash_string(&self.bytes),
            created_from,
            seeds,
            hyperparameters,
            tensors: self.tensors,
        };
        (manifest, self.bytes)
    }
}

/// Read-side view over a verified blob.
pub struct BlobReader<'a> {
    manifest: &'a ArtifactManifest,
    bytes: &'a [u8],
}

impl<'a> BlobReader<'a> {
    pub fn new(manifest: &'a ArtifactManifest, bytes: &'a [u8]) -> Self {
        BlobReader { manifest, bytes }
    }

    pub fn get(&self, name: &str) -> Result<(Vec<usize>, Vec<f64>), ArtifactError> {
        let entry = self
            .manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| ArtifactError::MissingTensor(name.to_string()))?;
        let start = entry.byte_offset as usize;
        let end = start + entry.byte_len as usize;
        let count = entry.shape.iter().product::<usize>();
        if end > self.bytes.len() || entry.byte_len as usize != count * 4 {
            return Err(ArtifactError::BadTensorBounds {
                name: name.to_string(),
            });
        }
        let data = self.bytes[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok((entry.shape.clone(), data))
    }
}

/// Writes `bytes` to `path` atomically: temp file in the same directory,
/// then rename over the destination.
fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp~");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

fn blob_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".blob");
    PathBuf::from(p)
}

/// Writes the manifest (JSON) at `path` and the tensor blob at `path.blob`.
pub fn write_artifact(
    path: &Path,
    manifest: &ArtifactManifest,
    blob: &[u8],
) -> Result<(), ArtifactError> {
    atomic_write(&blob_path(path), blob)?;
    let json = serde_json::to_vec_pretty(manifest)?;
    atomic_write(path, &json)?;
    Ok(())
}

/// Reads and verifies a manifest + blob pair.
pub fn read_artifact(path: &Path) -> Result<(ArtifactManifest, Vec<u8>), ArtifactError> {
    let json = fs::read(path).map_err(io_err(path))?;
    let manifest: ArtifactManifest = serde_json::from_slice(&json)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(ArtifactError::BadVersion(manifest.format_version));
    }
    let bp = blob_path(path);
    let blob = fs::read(&bp).map_err(io_err(&bp))?;
    let actual = hash_string(&blob);
    if actual != manifest.blob_hash {
        return Err(ArtifactError::HashMismatch {
            expected: manifest.blob_hash.clone(),
            actual,
        });
    }
    Ok((manifest, blob))
}

fn require_kind(manifest: &ArtifactManifest, kind: &str) -> Result<(), ArtifactError> {
    if manifest.artifact_kind != kind {
        return Err(ArtifactError::BadKind {
            expected: kind.to_string(),
            found: manifest.artifact_kind.clone(),
        });
    }
    Ok(())
}

fn seed_field(manifest: &ArtifactManifest, key: &str) -> Result<u64, ArtifactError> {
    manifest
        .seeds
        .get(key)
        .copied()
        .ok_or_else(|| ArtifactError::BadField(format!("seeds.{key}")))
}

fn hyper_u64(manifest: &ArtifactManifest, key: &str) -> Result<u64, ArtifactError> {
    manifest
        .hyperparameters
        .get(key)
        .and_then(Value::as_u64)
        .ok_or_else(|| ArtifactError::BadField(format!("hyperparameters.{key}")))
}

fn hyper_f64(manifest: &ArtifactManifest, key: &str) -> Result<f64, ArtifactError> {
    manifest
        .hyperparameters
        .get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| ArtifactError::BadField(format!("hyperparameters.{key}")))
}

fn push_linear(w: &mut BlobWriter, prefix: &str, l: &Linear) {
    w.push(&format!("{prefix}.w"), &[l.out_dim, l.in_dim], &l.w);
    w.push(&format!("{prefix}.b"), &[l.out_dim], &l.b);
}

fn read_linear(r: &BlobReader, prefix: &str) -> Result<Linear, ArtifactError> {
    let (wshape, w) = r.get(&format!("{prefix}.w"))?;
    let (_, b) = r.get(&format!("{prefix}.b"))?;
    if wshape.len() != 2 || wshape[0] != b.len() {
        return Err(ArtifactError::BadTensorBounds {
            name: format!("{prefix}.w"),
        });
    }
    Ok(Linear {
        in_dim: wshape[1],
        out_dim: wshape[0],
        w,
        b,
    })
}

pub fn save_encoder(path: &Path, e: &Encoder) -> Result<String, ArtifactError> {
    let mut w = BlobWriter::new();
    push_linear(&mut w, "l1", &e.l1);
    push_linear(&mut w, "l2", &e.l2);
    push_linear(&mut w, "head", &e.head);
    w.push("loss_history", &[e.loss_history.len()], &e.loss_history);
    let mut seeds = BTreeMap::new();
    seeds.insert("train".to_string(), e.seed);
    let mut hyper = BTreeMap::new();
    hyper.insert("training_steps".to_string(), Value::from(e.training_steps));
    let (manifest, blob) = w.finish("encoder", Vec::new(), seeds, hyper);
    let hash = manifest.blob_hash.clone();
    write_artifact(path, &manifest, &blob)?;
    Ok(hash)
}

pub fn load_encoder(path: &Path) -> Result<Encoder, ArtifactError> {
    let (manifest, blob) = read_artifact(path)?;
    require_kind(&manifest, "encoder")?;
    let r = BlobReader::new(&manifest, &blob);
    Ok(Encoder {
        l1: read_linear(&r, "l1")?,
        l2: read_linear(&r, "l2")?,
        head: read_linear(&r, "head")?,
        seed: seed_field(&manifest, "train")?,
        training_steps: hyper_u64(&manifest, "training_steps")?,
        loss_history: r.get("loss_history")?.1,
    })
}

pub fn save_concept_model(
    path: &Path,
    m: &ConceptModel,
    created_from: Vec<String>,
) -> Result<String, ArtifactError> {
    let dim = m.centroids[0].len();
    let flat: Vec<f64> = m.centroids.iter().flatten().copied().collect();
    let mut w = BlobWriter::new();
    w.push("centroids", &[m.k, dim], &flat);
    let mut seeds = BTreeMap::new();
    seeds.insert("fit".to_string(), m.fit_seed);
    let mut hyper = BTreeMap::new();
    hyper.insert("k".to_string(), Value::from(m.k as u64));
    hyper.insert("inertia".to_string(), Value::from(m.inertia));
    hyper.insert(
        "feature_count".to_string(),
        Value::from(m.feature_count as u64),
    );
    let (manifest, blob) = w.finish("concept-model", created_from, seeds, hyper);
    let hash = manifest.blob_hash.clone();
    write_artifact(path, &manifest, &blob)?;
    Ok(hash)
}

pub fn load_concept_model(path: &Path) -> Result<ConceptModel, ArtifactError> {
    let (manifest, blob) = read_artifact(path)?;
    require_kind(&manifest, "concept-model")?;
    let r = BlobReader::new(&manifest, &blob);
    let (shape, flat) = r.get("centroids")?;
    let k = hyper_u64(&manifest, "k")? as usize;
    if shape.len() != 2 || shape[0] != k {
        return Err(ArtifactError::BadTensorBounds {
            name: "centroids".to_string(),
        });
    }
    let dim = shape[1];
    Ok(ConceptModel {
        centroids: flat.chunks(dim).map(|c| c.to_vec()).collect(),
        k,
        fit_seed: seed_field(&manifest, "fit")?,
        inertia: hyper_f64(&manifest, "inertia")?,
        feature_count: hyper_u64(&manifest, "feature_count")? as usize,
    })
}

fn provenance_str(p: Provenance) -> &'static str {
    match p {
        Provenance::Trained => "trained",
        Provenance::Transferred => "transferred",
        Provenance::Finetuned => "finetuned",
    }
}

fn parse_provenance(s: &str) -> Result<Provenance, ArtifactError> {
    match s {
        "trained" => Ok(Provenance::Trained),
        "transferred" => Ok(Provenance::Transferred),
        "finetuned" => Ok(Provenance::Finetuned),
        _ => Err(ArtifactError::BadField(
            "hyperparameters.provenance".to_string(),
        )),
    }
}

pub fn save_policy(
    path: &Path,
    p: &BottleneckPolicy,
    created_from: Vec<String>,
) -> Result<String, ArtifactError> {
    let d = p.embed_dim();
    let flat: Vec<f64> = p.embedding.iter().flatten().copied().collect();
    let mut w = BlobWriter::new();
    w.push("embedding", &[p.k, d], &flat);
    push_linear(&mut w, "l1", &p.l1);
    push_linear(&mut w, "l2", &p.l2);
    let mut seeds = BTreeMap::new();
    seeds.insert("train".to_string(), p.seed);
    let mut hyper = BTreeMap::new();
    hyper.insert("k".to_string(), Value::from(p.k as u64));
    hyper.insert(
        "provenance".to_string(),
        Value::from(provenance_str(p.provenance)),
    );
    let (manifest, blob) = w.finish("bottleneck-policy", created_from, seeds, hyper);
    let hash = manifest.blob_hash.clone();
    write_artifact(path, &manifest, &blob)?;
    Ok(hash)
}

pub fn load_policy(path: &Path) -> Result<BottleneckPolicy, ArtifactError> {
    let (manifest, blob) = read_artifact(path)?;
    require_kind(&manifest, "bottleneck-policy")?;
    let r = BlobReader::new(&manifest, &blob);
    let (shape, flat) = r.get("embedding")?;
    let k = hyper_u64(&manifest, "k")? as usize;
    if shape.len() != 2 || shape[0] != k {
        return Err(ArtifactError::BadTensorBounds {
            name: "embedding".to_string(),
        });
    }
    let prov = manifest
        .hyperparameters
        .get("provenance")
        .and_then(Value::as_str)
        .ok_or_else(|| ArtifactError::BadField("hyperparameters.provenance".to_string()))?;
    Ok(BottleneckPolicy {
        embedding: flat.chunks(shape[1]).map(|c| c.to_vec()).collect(),
        l1: read_linear(&r, "l1")?,
        l2: read_linear(&r, "l2")?,
        k,
        seed: seed_field(&manifest, "train")?,
        provenance: parse_provenance(prov)?,
    })
}

pub fn save_dataset(
    path: &Path,
    data: &crate::encoder::DemoDataset,
    n_games: usize,
    seed: u64,
) -> Result<String, ArtifactError> {
    use crate::encoder::INPUT_DIM;
    use crate::go::NUM_ACTIONS;
    let n = data.samples.len();
    let mut obs = Vec::with_capacity(n * INPUT_DIM);
    let mut actions = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n * NUM_ACTIONS);
    for s in &data.samples {
        obs.extend(s.obs.to_input());
        actions.push(s.action.0 as f64);
        masks.extend(s.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    }
    let mut w = BlobWriter::new();
    w.push("obs", &[n, INPUT_DIM], &obs);
    w.push("actions", &[n], &actions);
    w.push("masks", &[n, NUM_ACTIONS], &masks);
    let mut seeds = BTreeMap::new();
    seeds.insert("collect".to_string(), seed);
    let mut hyper = BTreeMap::new();
    hyper.insert("n_games".to_string(), Value::from(n_games as u64));
    hyper.insert("n_samples".to_string(), Value::from(n as u64));
    let (manifest, blob) = w.finish("demo-dataset", Vec::new(), seeds, hyper);
    let hash = manifest.blob_hash.clone();
    write_artifact(path, &manifest, &blob)?;
    Ok(hash)
}

pub fn load_dataset(path: &Path) -> Result<crate::encoder::DemoDataset, ArtifactError> {
    use crate::encoder::{DemoDataset, DemoSample, INPUT_DIM};
    use crate::go::{Action, Observation, BOARD_POINTS, NUM_ACTIONS};
    let (manifest, blob) = read_artifact(path)?;
    require_kind(&manifest, "demo-dataset")?;
    let r = BlobReader::new(&manifest, &blob);
    let (oshape, obs) = r.get("obs")?;
    let (_, actions) = r.get("actions")?;
    let (_, masks) = r.get("masks")?;
    let n = oshape[0];
    if oshape[1] != INPUT_DIM || actions.len() != n || masks.len() != n * NUM_ACTIONS {
        return Err(ArtifactError::BadTensorBounds {
            name: "obs".to_string(),
        });
    }
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let mut planes = [[false; BOARD_POINTS]; 3];
        for p in 0..3 {
            for j in 0..BOARD_POINTS {
                planes[p][j] = obs[i * INPUT_DIM + p * BOARD_POINTS + j] != 0.0;
            }
        }
        let mut mask = [false; NUM_ACTIONS];
        for (j, m) in mask.iter_mut().enumerate() {
            *m = masks[i * NUM_ACTIONS + j] != 0.0;
        }
        samples.push(DemoSample {
            obs: Observation { planes },
            action: Action(actions[i] as usize),
            mask,
        });
    }
    Ok(DemoDataset { samples })
}

/// Saves an agent as three artifact pairs in `dir`: `encoder.json`,
/// `concepts.json`, `policy.json` (each with its `.blob`). Downstream
/// manifests record the upstream blob hashes in `created_from`.
pub fn save_agent(dir: &Path, agent: &Agent) -> Result<(), ArtifactError> {
    let enc_hash = save_encoder(&dir.join("encoder.json"), &agent.encoder)?;
    let cm_hash = save_concept_model(
        &dir.join("concepts.json"),
        &agent.concept_model,
        vec![enc_hash.clone()],
    )?;
    save_policy(
        &dir.join("policy.json"),
        &agent.policy,
        vec![enc_hash, cm_hash],
    )?;
    Ok(())
}

pub fn load_agent(dir: &Path) -> Result<Agent, ArtifactError> {
    let encoder = load_encoder(&dir.join("encoder.json"))?;
    let concept_model = load_concept_model(&dir.join("concepts.json"))?;
    let policy = load_policy(&dir.join("policy.json"))?;
    Ok(Agent {
        encoder,
        concept_model,
        policy,
    })
}

/// Atomic write of arbitrary bytes (used for CSV reports).
pub fn save_bytes(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    atomic_write(path, bytes)
}

/// Serializes any report-style value as pretty JSON, atomically.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let json = serde_json::to_vec_pretty(value)?;
    atomic_write(path, &json)?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ArtifactError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn save_alignment(path: &Path, map: &AlignmentMap) -> Result<(), ArtifactError> {
    save_json(path, map)
}

pub fn load_alignment(path: &Path) -> Result<AlignmentMap, ArtifactError> {
    load_json(path)
}
