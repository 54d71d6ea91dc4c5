//! Conditional adversarial model for RGB-to-DEM translation: a U-Net
//! generator against a patch discriminator, trained with BCE + L1 losses,
//! with JSON checkpoints and a staged training loop.

pub mod adam;
pub mod checkpoint;
pub mod data;
pub mod discriminator;
pub mod error;
pub mod eval;
pub mod generator;
pub mod layers;
pub mod loss;
pub mod scalar;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::ModelCheckpoint;
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use error::{GanError, Result};
pub use generator::{Generator, GeneratorConfig};
pub use scalar::NnScalar;
pub use train::{train_stage, TrainOutcome, TrainingStageConfig};
