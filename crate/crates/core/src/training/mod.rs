//! Loss, optimizers, the training loop, gradient checking and checkpoints.

mod checkpoint;
mod gradcheck;
mod loss;
mod optim;
mod trainer;

pub use checkpoint::{
    decode_checkpoint, decode_tensors, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC,
    VERSION,
};
pub use gradcheck::{
    check_gradients, grad_check, relative_error, toy_config, GradCheckReport, TensorCheck,
    GRAD_CHECK_TOLERANCE, MAGNITUDE_FLOOR, STEP,
};
pub use loss::{cross_entropy, softmax_cross_entropy_grad, PROB_FLOOR};
pub use optim::{OptimState, OptimizerKind, OptimizerSettings};
pub use trainer::{evaluate, predict, train, train_from, train_observed, TrainRun, TrainSettings};
