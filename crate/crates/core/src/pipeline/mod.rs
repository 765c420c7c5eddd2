//! End-to-end model: lookup, anchor weighting, attention over the anchor
//! sequence, composition, normalisation, pooling and classification.

mod checkpoint;
mod model;
mod train;

pub use crate::codebook::padding_mask;
pub use checkpoint::{checkpoint_load, checkpoint_save, decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use model::{AdeModel, ForwardOptions, ForwardTrace, Gradients, Mode, ModelConfig, LAYER_NORM_EPS};
pub use train::{accuracy, predict, train_classifier, StepRecord, TrainConfig, TrainHistory};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{AnchorMatrix, SparseCodebook, TokenBatch};
    use crate::error::AdeError;
    use crate::numcore::Tensor;

    fn model() -> AdeModel {
        let cb = SparseCodebook::from_entries(3, vec![(vec![0], vec![1.0]), (vec![1, 2], vec![0.5, 0.7]), (vec![0, 2], vec![0.3, 1.1])]).unwrap();
        let a = AnchorMatrix::new(Tensor::new(vec![3, 4], (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap()).unwrap();
        let cfg = ModelConfig { dim: 4, heads: 2, classes: 2, max_positions: 8, ..Default::default() };
        AdeModel::new(cfg, cb, a, 7).unwrap()
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise_at_f32() {
        let m = model();
        let back = decode_checkpoint(&encode_checkpoint(&m).unwrap()).unwrap();
        assert_eq!(back, m.rounded_to_f32());
        let tb = TokenBatch::new(vec![0, 1, 2], vec![true; 3], 1, 3).unwrap();
        let a = m.rounded_to_f32().forward(&tb, Mode::Eval).unwrap();
        let b = back.forward(&tb, Mode::Eval).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn checkpoint_truncation_and_tamper_rejected() {
        let bytes = encode_checkpoint(&model()).unwrap();
        for cut in [4, 40, bytes.len() - 1] {
            assert!(matches!(decode_checkpoint(&bytes[..cut]), Err(AdeError::Corrupt(_))));
        }
        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 1;
        assert!(matches!(decode_checkpoint(&bad), Err(AdeError::Corrupt(_))));
    }

    #[test]
    fn padding_mask_examples() {
        let (m, t) = padding_mask(&[3, 0, 2, 3], 2).unwrap();
        assert_eq!(t, 5);
        assert_eq!(m, vec![true, true, true, false, false, true, true, true, true, true]);
    }
}
