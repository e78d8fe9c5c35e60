//! Evaluation harness: splits, synthetic data, augmentation, the toy trainer,
//! gradient checks, ablations and complexity accounting.

pub mod ablation;
pub mod augment;
pub mod complexity;
pub mod dataset;
pub mod gradcheck;
pub mod heads;
pub mod model_io;
pub mod pipeline;
pub mod split;
pub mod train;
pub mod synth;

pub use augment::{augment, AugmentConfig, AugmentTransform};
pub use pipeline::{EitNet, PipelineConfig, Prediction, StageToggles};
pub use train::{evaluate, train_toy, EvalResult, TrainConfig, TrainOutcome};
pub use split::{make_split, make_split_of, SplitAxis, SplitPlan};
pub use synth::{generate_synthetic_dataset, ActionLabel, SyntheticAction, SyntheticConfig};
pub use complexity::{count_params_flops, Complexity, Cost, LayerSpec};
pub use gradcheck::{gradient_check, GradCheck};
pub use ablation::{run_ablation, train_and_evaluate, AblationRow, MetricsRow};
pub use dataset::{read_dataset, write_dataset};
pub use model_io::{load_model, save_model};
