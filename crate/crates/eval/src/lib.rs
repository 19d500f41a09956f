//! Evaluation harness: PSNR and luma SSIM against held-out views, replay
//! training of the voxel, splat and mesh models, time-to-quality and the
//! render-time-versus-resolution sweep, reported as CSV and JSON.

mod error;
mod harness;
pub mod metrics;
mod model;
pub mod report;
mod sweep;

pub use error::EvalError;
pub use harness::{
    evaluate, evaluate_method, holdout_psnr, holdout_scores, load_eval_data, CurvePoint, EvalConfig, EvalData,
    MethodResult, Target, TimeToQuality,
};
pub use metrics::{psnr, ssim, ssim_gray, PSNR_CAP};
pub use model::{checkpoint_method, load_checkpoint, sha256_hex, Method, Model, ModelConfig};
pub use report::{EvalReport, ReportRow};
pub use sweep::{full_to_tenth_ratio, render_sweep, sweep_csv, SweepRow, DEFAULT_FRACTIONS};
