//! Synthetic acquisition: phantoms, the thresholded detector model and
//! frame-stack datasets.

mod dataset;
mod detector;
mod phantom;
mod stack;

pub use dataset::{build_dataset, LocationEntry, Manifest, Split, SplitCounts, MANIFEST_FILE};
pub use detector::{
    detect_frame, detect_frame_with, detector_response, sample_poisson, DetectorParams, NoiseMode,
};
pub use phantom::{render_phantom, Modality, PhantomSpec};
pub use stack::{average_stack, mean_of_frames, simulate_stack, FrameStack};
