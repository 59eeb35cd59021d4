//! DeepONet surrogate for the kernel map `lambda -> k`.

pub mod deeponet;
pub mod error_report;
pub mod gradcheck;
pub mod mlp;
pub mod persist;
pub mod train;

pub use deeponet::{relative_l2, DeepOperatorModel, OperatorArchitecture, TrunkBasis};
pub use mlp::{Activation, Dense, Mlp};
pub use train::{train, EpochRecord, Optimizer, PreparedData, TrainerState, TrainingConfig, TrainingReport};
pub use error_report::{kernel_error_report, operator_error, OperatorErrorReport};
pub use gradcheck::gradient_check;
pub use persist::{load_model, load_trainer, save_model, save_trainer};
