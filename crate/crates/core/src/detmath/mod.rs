//! Detection-head mathematics: anchors, target assignment, box encoding and
//! the focal + aleatoric loss stack with analytic gradients.

mod anchors;
mod assign;
mod encoding;
mod kmeans;
mod loss;
mod toy;

pub use anchors::{build_anchor_grid, mean_anchor_size, Anchor, AnchorConfig};
pub use assign::assign_targets;
pub use encoding::{decode_box, decode_prediction, encode_box, BoxEncoding};
pub use kmeans::{kmeans_orientations, orientation_distance, KmeansParams};
pub use loss::{
    aleatoric_loss, aleatoric_term, encode_targets, focal_loss, loss_from_targets, sigmoid,
    smooth_l1, total_loss, AleatoricGrad, LossParams, LossReport, PRED_WIDTH,
};
pub use toy::{
    fit_toy_head, make_toy_dataset, ToyConfig, ToyDataset, ToyFit, ToyFrame, TracePoint,
    DEFAULT_LR, DEFAULT_STEPS, NUM_FEATURES,
};
