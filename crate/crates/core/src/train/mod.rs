//! Losses, ensembles and training recipes.

pub mod ensemble;
pub mod log;
pub mod losses;
pub mod recipe;

pub use ensemble::{ensemble_predict, mean_probabilities, Classifier, EnsembleModel, MemberRole, Prediction};
pub use log::{epoch_log_csv, parse_epoch_log, read_epoch_log, write_epoch_log, EpochRecord};
pub use losses::{
    cross_entropy, cross_entropy_graph, distill_loss, distill_objective, kl_div, kl_to_constant_graph,
    mutual_objective, DistillConfig, LossComponent, LossValue, Target,
};
pub use recipe::{
    evaluate_auc, load_trained, mutual_step, run_recipe, MemberInfo, Recipe, RecipeKind, RecipeMode, Techniques,
    TrainConfig, TrainData, TrainedArtifacts,
};
