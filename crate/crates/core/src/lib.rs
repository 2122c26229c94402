//! Teacher feature fusion and multi-level prior distillation losses over
//! patch-feature matrices.
//!
//! * [`tensor`]: feature maps, cosine geometry, masked softmax, `.dsdp` files
//! * [`fusion`]: semantic-adaptive outlier masking and calibrated attention
//! * [`losses`]: cosine and attention-KL backbone distillation
//! * [`relational`]: point-wise and batch-relational instance distillation
//! * [`harness`]: oracles, synthetic fixtures, gradient checks, descent

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fusion;
pub mod harness;
pub mod losses;
pub mod relational;
pub mod tensor;

pub use error::{Error, Result};
pub use fusion::{
    calibrated_attention, context_outlier_mask, fuse_pipeline, fuse_teacher, lof_scores, semantic_neighborhoods,
    AttentionMatrix, FusionConfig, FusionDiagnostics, FusionOutput, OutlierMask, Strategy,
};
pub use losses::{
    align_student, attention_distill_loss, backbone_loss, cosine_distill_loss, BackboneLoss, BackboneLossConfig,
    LossResult,
};
pub use relational::{
    enhance_feature, point_kd_loss, relational_distill_loss, scope_pair_count, DistillScope, Instance, MuParam,
    RelationalLoss,
};
pub use tensor::{FeatureMap, SimilarityMatrix};
