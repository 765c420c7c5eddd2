use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{content_hash64, Reader, Writer};
use crate::data::SynthTaskSpec;
use crate::error::{AdeError, Result};
use crate::numcore::rng::{normal_vec, seeded};
use crate::numcore::{norm, Tensor};

pub const TEACHER_MAGIC: &[u8; 6] = b"ADETE1";

/// Dense `N × d` teacher embedding matrix plus a content hash.
///
/// The hash covers the 32-bit on-disk image, so a teacher built in memory and
/// one read back from its file hash identically.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherEmbedding {
    values: Tensor,
    hash: u64,
}

impl TeacherEmbedding {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.shape().len() != 2 || values.rows() == 0 || values.cols() == 0 {
            return Err(AdeError::config(format!("teacher must be N×d, got {:?}", values.shape())));
        }
        if !values.is_finite() {
            return Err(AdeError::data("teacher has non-finite values"));
        }
        let hash = content_hash64(&encode_body(&values));
        Ok(Self { values, hash })
    }

    pub fn num_words(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn hash(&self) -> u64 {
        self.hash
    }

    /// Rows with non-zero norm; zero rows are excluded from distillation.
    pub fn active_rows(&self) -> Vec<usize> {
        (0..self.num_words()).filter(|&i| norm(self.values.row(i)) > 0.0).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = encode_body(&self.values);
        body.extend_from_slice(&self.hash.to_le_bytes());
        body
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(AdeError::corrupt("teacher file too short"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let mut r = Reader::new(body, "teacher");
        r.expect_magic(TEACHER_MAGIC)?;
        let n = r.usize()?;
        let d = r.usize()?;
        let count = n.checked_mul(d).ok_or_else(|| AdeError::corrupt("teacher N·d overflows"))?;
        let data = r.f32_vec(count)?;
        r.finish()?;
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        let computed = content_hash64(body);
        if stored != computed {
            return Err(AdeError::corrupt(format!(
                "teacher hash mismatch: stored {stored:016x}, computed {computed:016x}"
            )));
        }
        Self::new(Tensor::new(vec![n, d], data)?)
    }
}

fn encode_body(values: &Tensor) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(TEACHER_MAGIC);
    w.u64(values.rows() as u64);
    w.u64(values.cols() as u64);
    w.f32_slice(values.data());
    w.buf
}

/// Random cluster-structured teacher: every row is a positive combination of
/// a few shared cluster directions plus isotropic noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTeacherSpec {
    pub num_words: usize,
    pub dim: usize,
    pub clusters: usize,
    /// each row mixes between 1 and this many clusters
    pub max_active: usize,
    /// per-coordinate noise standard deviation (cluster coordinates are unit-variance)
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticTeacherSpec {
    fn default() -> Self {
        Self {
            num_words: 1000,
            dim: 32,
            clusters: 16,
            max_active: 3,
            noise: 0.15,
            seed: 0,
        }
    }
}

/// A teacher together with the non-negative mixing matrix and cluster
/// directions that generated it (before noise).
#[derive(Debug, Clone)]
pub struct SyntheticTeacher {
    pub teacher: TeacherEmbedding,
    pub mixing: Tensor,
    pub clusters: Tensor,
}

pub fn synthetic_teacher(spec: &SyntheticTeacherSpec) -> Result<SyntheticTeacher> {
    if spec.num_words == 0 || spec.dim == 0 || spec.clusters == 0 {
        return Err(AdeError::config("synthetic teacher needs N, d and cluster count ≥ 1"));
    }
    if spec.max_active == 0 || spec.noise < 0.0 {
        return Err(AdeError::config("synthetic teacher needs max_active ≥ 1 and noise ≥ 0"));
    }
    let mut rng = seeded(spec.seed);
    let (n, d, m) = (spec.num_words, spec.dim, spec.clusters);
    let clusters = Tensor::new(vec![m, d], normal_vec(&mut rng, m * d, 1.0))?;
    let mut mixing = Tensor::zeros(vec![n, m]);
    let mut values = Tensor::zeros(vec![n, d]);
    for i in 0..n {
        let active = rng.gen_range(1..=spec.max_active.min(m));
        for j in sample(&mut rng, m, active).into_iter() {
            let w = rng.gen_range(0.5..1.5);
            mixing.row_mut(i)[j] = w;
            crate::numcore::axpy(w, clusters.row(j), values.row_mut(i));
        }
        let noise = normal_vec(&mut rng, d, spec.noise);
        crate::numcore::axpy(1.0, &noise, values.row_mut(i));
    }
    Ok(SyntheticTeacher {
        teacher: TeacherEmbedding::new(values)?,
        mixing,
        clusters,
    })
}

/// Teacher for the synthetic polysemy vocabulary.
///
/// Rows cluster by token role: every trigger shares one centre, every cue of
/// a sense shares that sense's centre, fillers (and unk) share another. Each
/// token adds its own Gaussian offset of scale `own_scale`. The pad row is
/// zero and therefore excluded from distillation.
pub fn synth_task_teacher(spec: &SynthTaskSpec, dim: usize, own_scale: f64, seed: u64) -> Result<TeacherEmbedding> {
    spec.validate()?;
    if dim == 0 || !(own_scale >= 0.0) {
        return Err(AdeError::config("teacher width must be ≥ 1 and offset scale ≥ 0"));
    }
    let vocab = spec.vocab()?;
    let roles = spec.classes + 2;
    let mut rng = seeded(seed);
    let centres = normal_vec(&mut rng, roles * dim, 1.0);
    let first_cue = 2 + spec.triggers;
    let first_filler = first_cue + spec.classes * spec.cues_per_sense;
    let mut values = Tensor::zeros(vec![vocab.len(), dim]);
    for id in 1..vocab.len() {
        let role = if (2..first_cue).contains(&id) {
            0
        } else if (first_cue..first_filler).contains(&id) {
            1 + (id - first_cue) / spec.cues_per_sense
        } else {
            roles - 1
        };
        let row = values.row_mut(id);
        row.copy_from_slice(&centres[role * dim..(role + 1) * dim]);
        crate::numcore::axpy(1.0, &normal_vec(&mut rng, dim, own_scale), row);
    }
    TeacherEmbedding::new(values)
}
