//! `.ade` checkpoints.
//!
//! Layout (little-endian): `"ADEMD1"`, version `u32`, model config as a
//! length-prefixed JSON string, header `d, heads, C, K, N` as `u64`, the
//! codebook index structure (`u16` cardinality then `u32` indices per word),
//! an optional vocabulary, named `f32` parameter sections, and a trailing
//! SHA-256 of everything before it.

use std::path::Path;

use crate::binio::{sha256, Reader, Writer};
use crate::codebook::{AnchorMatrix, SparseCodebook};
use crate::data::Vocab;
use crate::error::{AdeError, Result};
use crate::numcore::Tensor;
use crate::pipeline::{AdeModel, ModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"ADEMD1";
pub const CHECKPOINT_VERSION: u32 = 1;

fn sections(m: &AdeModel) -> Vec<(&'static str, Vec<f64>)> {
    let names = ["sat.wq", "sat.wk", "sat.wv", "sat.wo", "sat.bq", "sat.bk", "sat.bv", "sat.bo"];
    let mut out: Vec<(&'static str, Vec<f64>)> = names.iter().zip(m.sat.slices()).map(|(n, s)| (*n, s.to_vec())).collect();
    out.push(("ln.gain", m.ln.gain.clone()));
    out.push(("ln.bias", m.ln.bias.clone()));
    out.push(("pooler.w", m.pooler.score_w.clone()));
    out.push(("pooler.b", vec![m.pooler.score_b]));
    out.push(("head.w", m.head.w.data().to_vec()));
    out.push(("head.b", m.head.b.clone()));
    out.push(("anchors", m.anchors.values().data().to_vec()));
    out.push(("codebook.weights", m.codebook.all_weights().to_vec()));
    out
}

pub fn encode_checkpoint(m: &AdeModel) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.str(&serde_json::to_string(&m.config).map_err(|e| AdeError::config(e.to_string()))?);
    for v in [m.config.dim, m.config.heads, m.config.classes, m.anchors.num_anchors(), m.codebook.num_words()] {
        w.u64(v as u64);
    }
    for word in 0..m.codebook.num_words() {
        let k = u16::try_from(m.codebook.cardinality(word))
            .map_err(|_| AdeError::config(format!("word {word}: cardinality exceeds u16")))?;
        w.u16(k);
        m.codebook.indices(word).iter().for_each(|&j| w.u32(j as u32));
    }
    match &m.vocab {
        Some(v) => {
            w.bytes(&[1]);
            w.u32(v.len() as u32);
            v.tokens().iter().for_each(|t| w.str(t));
        }
        None => w.bytes(&[0]),
    }
    let secs = sections(m);
    w.u32(secs.len() as u32);
    for (name, vals) in &secs {
        w.str(name);
        w.u64(vals.len() as u64);
        w.f32_slice(vals);
    }
    let digest = sha256(&w.buf);
    w.bytes(&digest);
    Ok(w.buf)
}

fn corrupt(e: AdeError) -> AdeError {
    match e {
        AdeError::Corrupt(_) => e,
        other => AdeError::corrupt(other.to_string()),
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<AdeModel> {
    if bytes.len() < 32 + CHECKPOINT_MAGIC.len() {
        return Err(AdeError::corrupt("checkpoint too short"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    let mut r = Reader::new(body, "checkpoint");
    r.expect_magic(CHECKPOINT_MAGIC)?;
    if sha256(body) != digest {
        return Err(AdeError::corrupt("checkpoint hash mismatch"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(AdeError::corrupt(format!("unsupported checkpoint version {version}")));
    }
    let config: ModelConfig =
        serde_json::from_str(&r.str()?).map_err(|e| AdeError::corrupt(format!("config block: {e}")))?;
    let (d, heads, classes, k, n) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    if (d, heads, classes) != (config.dim, config.heads, config.classes) {
        return Err(AdeError::corrupt(format!(
            "header (d={d}, heads={heads}, C={classes}) disagrees with config (d={}, heads={}, C={})",
            config.dim, config.heads, config.classes
        )));
    }
    if n.saturating_mul(2) > r.remaining() {
        return Err(AdeError::corrupt("codebook structure truncated"));
    }
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let card = r.u16()? as usize;
        let idx = (0..card).map(|_| r.u32().map(|j| j as usize)).collect::<Result<Vec<_>>>()?;
        entries.push((idx, vec![0.0; card]));
    }
    let mut codebook = SparseCodebook::from_entries(k, entries).map_err(corrupt)?;
    let vocab = match r.take(1)?[0] {
        0 => None,
        1 => {
            let count = r.u32()? as usize;
            let tokens = (0..count).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
            Some(Vocab::from_tokens(tokens).map_err(corrupt)?)
        }
        other => return Err(AdeError::corrupt(format!("bad vocabulary flag {other}"))),
    };
    let anchors = AnchorMatrix::new(Tensor::zeros(vec![k, d])).map_err(corrupt)?;
    codebook.all_weights_mut().iter_mut().for_each(|v| *v = 0.0);
    let mut model = AdeModel::new(config, codebook, anchors, 0).map_err(corrupt)?;
    if let Some(v) = vocab {
        model = model.with_vocab(v).map_err(corrupt)?;
    }

    let expected = sections(&model);
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(AdeError::corrupt(format!("expected {} sections, found {count}", expected.len())));
    }
    let mut flat = Vec::with_capacity(model.num_params());
    for (name, vals) in &expected {
        let found = r.str()?;
        if found != *name {
            return Err(AdeError::corrupt(format!("expected section {name}, found {found}")));
        }
        let len = r.usize()?;
        if len != vals.len() {
            return Err(AdeError::corrupt(format!("section {name}: {len} values, expected {}", vals.len())));
        }
        flat.extend(r.f32_vec(len)?);
    }
    r.finish()?;
    model.set_flat_params(&flat)?;
    if !model.flat_params().iter().all(|v| v.is_finite()) {
        return Err(AdeError::corrupt("checkpoint holds non-finite parameters"));
    }
    Ok(model)
}

pub fn checkpoint_save(model: &AdeModel, path: &Path) -> Result<Vec<u8>> {
    let bytes = encode_checkpoint(model)?;
    std::fs::write(path, &bytes)?;
    Ok(bytes)
}

pub fn checkpoint_load(path: &Path) -> Result<AdeModel> {
    decode_checkpoint(&std::fs::read(path)?)
}
