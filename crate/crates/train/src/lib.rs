//! Training plumbing for hadanet models: IDX datasets, the toy-scale
//! classifier and its multiply-based twin, SGD with momentum, and checkpoints.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod loss;
pub mod model;
pub mod nn;
pub mod optim;
pub mod real;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use data::{load_idx, Dataset};
pub use error::{Result, TrainError};
pub use model::{Model, ModelKind, ModelSpec};
pub use real::Real;
pub use train::{evaluate, train, EpochRecord, History, TrainConfig};

pub type Model32 = Model<f32>;
