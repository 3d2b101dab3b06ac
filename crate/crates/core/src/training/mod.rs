//! Windowed batching, label assignment, Adam, plateau scheduling and the
//! training loop. Inputs are used exactly as read; there is no augmentation.

mod adam;
mod fit;
mod schedule;
mod windows;

pub use adam::{Adam, BETA1, BETA2, EPSILON};
pub use fit::{
    evaluate, fit, ground_truth_frames, predict_dataset, training_graphs, validation_options, write_history_csv, EpochRecord,
    FitOptions, FitResult, TrainState, EVAL_IOU,
};
pub use schedule::{PlateauSchedule, Verdict};
pub use windows::{assign_labels, centered_windows, make_windows, CenteredWindow, Window};
