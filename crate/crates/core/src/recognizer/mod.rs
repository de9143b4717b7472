//! Integrated match-plus-liveness recognizer.

pub mod fusion;
pub mod keypoints;
pub mod liveness;
pub mod matching;
pub mod preprocess;
pub mod system;
pub mod template;

pub use fusion::{fuse_im, Decision, FusionWeights, ImScore, Thresholds};
pub use keypoints::{extract_keypoints, KeypointConfig, KeypointDescriptor, DESCRIPTOR_LEN};
pub use liveness::{compare_liveness_score, comparison_features, CompareLivenessModel, CompareScore, COMPARE_FEATURES};
pub use matching::{aggregate_patches, match_patch, MatchedPair, PatchMatch};
pub use preprocess::{preprocess, split_patches, Patch, PatchGrid, Preprocessed};
pub use system::{
    choose_thresholds, design_from_protocol, design_trials, match_patches, parse_protocol, prepare_query, protocol_csv,
    read_protocol, score_patches, template_id, trial_score_set, DualGate, PreparedQuery, ProtocolRow, QueryScores,
    RecognizerConfig, TrialContext, TrialDesign, PROTOCOL_HEADER,
};
pub use template::{enroll, patch_keypoints, PatchTemplate, Template};
