//! `.adecb` codebook files.
//!
//! Layout (little-endian):
//! `"ADECB1"`, `N: u64`, `K: u64`, `d: u64`, `τ: f64`, then per word
//! `k_i: u16` followed by `k_i × (index: u32, weight: f32)`, then the
//! `K × d` anchor matrix as `f32`.

use crate::binio::{Reader, Writer};
use crate::codebook::{AnchorMatrix, SparseCodebook};
use crate::error::{AdeError, Result};
use crate::numcore::Tensor;

pub const CODEBOOK_MAGIC: &[u8; 6] = b"ADECB1";

pub fn write_codebook(cb: &SparseCodebook, anchors: &AnchorMatrix, tau: f64) -> Result<Vec<u8>> {
    if cb.num_anchors() != anchors.num_anchors() {
        return Err(AdeError::shape("codebook and anchor matrix disagree on K"));
    }
    if cb.num_anchors() > u32::MAX as usize + 1 {
        return Err(AdeError::config("K too large for 32-bit indices"));
    }
    let mut w = Writer::default();
    w.bytes(CODEBOOK_MAGIC);
    w.u64(cb.num_words() as u64);
    w.u64(cb.num_anchors() as u64);
    w.u64(anchors.dim() as u64);
    w.f64(tau);
    for word in 0..cb.num_words() {
        let k = u16::try_from(cb.cardinality(word))
            .map_err(|_| AdeError::config(format!("word {word}: cardinality exceeds u16")))?;
        w.u16(k);
        for (&j, &b) in cb.indices(word).iter().zip(cb.weights(word)) {
            w.u32(j as u32);
            w.f32(b as f32);
        }
    }
    w.f32_slice(anchors.values().data());
    Ok(w.buf)
}

/// Parses an `.adecb` image into `(codebook, anchors, τ)`.
pub fn read_codebook(bytes: &[u8]) -> Result<(SparseCodebook, AnchorMatrix, f64)> {
    let mut r = Reader::new(bytes, "codebook");
    r.expect_magic(CODEBOOK_MAGIC)?;
    let n = r.usize()?;
    let k = r.usize()?;
    let d = r.usize()?;
    let tau = r.f64()?;
    if k == 0 || d == 0 {
        return Err(AdeError::corrupt("codebook header has K or d equal to zero"));
    }
    // each word needs at least 10 bytes; reject absurd headers before allocating
    if n.saturating_mul(10) > r.remaining() {
        return Err(AdeError::corrupt(format!("codebook header claims {n} words but file is too short")));
    }
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let card = r.u16()? as usize;
        let mut idx = Vec::with_capacity(card);
        let mut wts = Vec::with_capacity(card);
        for _ in 0..card {
            idx.push(r.u32()? as usize);
            wts.push(r.f32()? as f64);
        }
        entries.push((idx, wts));
    }
    let cb = SparseCodebook::from_entries(k, entries).map_err(|e| AdeError::corrupt(e.to_string()))?;
    let values = r.f32_vec(k.checked_mul(d).ok_or_else(|| AdeError::corrupt("K·d overflows"))?)?;
    r.finish()?;
    let anchors = AnchorMatrix::new(Tensor::new(vec![k, d], values)?)
        .map_err(|e| AdeError::corrupt(e.to_string()))?;
    Ok((cb, anchors, tau))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (SparseCodebook, AnchorMatrix) {
        let cb = SparseCodebook::from_entries(
            3,
            vec![(vec![0, 2], vec![0.5, 0.25]), (vec![1], vec![1.0])],
        )
        .unwrap();
        let a = AnchorMatrix::new(Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()).unwrap();
        (cb, a)
    }

    #[test]
    fn header_bytes() {
        let (cb, a) = sample();
        let bytes = write_codebook(&cb, &a, 0.1).unwrap();
        assert_eq!(&bytes[..6], b"ADECB1");
        assert_eq!(u64::from_le_bytes(bytes[6..14].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[14..22].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[22..30].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[30..38].try_into().unwrap()), 0.1);
        // records: (2 + 2·8) + (2 + 8), anchors 6·4
        assert_eq!(bytes.len(), 38 + 18 + 10 + 24);
    }

    #[test]
    fn round_trip() {
        let (cb, a) = sample();
        let (cb2, a2, tau) = read_codebook(&write_codebook(&cb, &a, 0.1).unwrap()).unwrap();
        assert_eq!(cb2, cb);
        assert_eq!(a2, a);
        assert_eq!(tau, 0.1);
    }

    #[test]
    fn truncation_and_bad_magic_are_corruption() {
        let (cb, a) = sample();
        let bytes = write_codebook(&cb, &a, 0.1).unwrap();
        for cut in [3, 20, 40, bytes.len() - 1] {
            assert!(matches!(read_codebook(&bytes[..cut]), Err(AdeError::Corrupt(_))));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_codebook(&bad), Err(AdeError::Corrupt(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(read_codebook(&extra), Err(AdeError::Corrupt(_))));
    }
}
