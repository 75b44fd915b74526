//! A small recurrent captioner trained with a language-modelling loss plus a
//! contrastive retrieval loss over sets of similar images, with hand-derived
//! gradients and a finite-difference checker.

mod batch;
mod dataset;
mod gradcheck;
mod loss;
mod model;
mod optim;
mod sampling;
mod tensor;
mod train;
mod vocab;

pub use batch::{sample_contrastive_batch, ContrastiveBatchItem, GraphItemSource, ItemSource, DEFAULT_H_SIZE};
pub use dataset::{synthetic_clusters, SyntheticConfig, ToyDataset, ToyRecord, ADJECTIVES, NOUNS, SYNTHETIC_DIM};
pub use gradcheck::{
    check_gradients, check_gradients_with_step, gradcheck_seed, random_case, rel_error, GradcheckReport, TensorCheck, FD_STEP, GRADCHECK_TOLERANCE,
};
pub use loss::{
    agreement, backward, contrastive_loss, cosine, crl_from_cosines, item_cosines, lm_loss, total_loss, LossBreakdown,
};
pub use model::{
    decode_text, encode_image, text_representation, Decoded, Gradients, ImageEncoding, ModelShape, ToyModelParams,
    CHECKPOINT_MAGIC,
};
pub use optim::{adamw_step, AdamWConfig, AdamWState};
pub use sampling::{generate, nucleus_filter, nucleus_sample_with};
pub use tensor::Matrix;
pub use train::{evaluate_retrieval, train_toy, write_trace_csv, EpochTrace, TrainConfig, TrainOutcome};
pub use vocab::{TokenId, ToyVocab, BOS, EOS, PAD};
