//! Image-quality and boundary-preservation scoring plus report aggregation.

mod boundary;
pub mod published;
mod quality;
mod report;

pub use boundary::{boundary_masks, boundary_scores, BoundaryScores};
pub use quality::{psnr, ssim, SSIM_WINDOW};
pub use report::{aggregate_report, CaseRow, EvalReport, MethodSummary};
