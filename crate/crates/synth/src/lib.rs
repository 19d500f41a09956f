//! Ray-traced ground truth for parametric scenes.
//!
//! Scenes are spheres, boxes and planes with Lambertian shading under one
//! directional light plus optional emission. Trajectories (orbit or raster
//! scan) are rendered into session-log directories readable by
//! `rfnode_ingest::session`.

mod benchmark;
mod scene;
mod session;
mod trajectory;

pub use benchmark::{benchmark_holdout, benchmark_script, benchmark_spec, BENCHMARK_CHECKSUM, BENCHMARK_HOLDOUT};
pub use scene::{trace_frame, trace_ray, trace_sample, Hit, Material, Primitive, SceneSpec, Shape, Specular};
pub use session::{generate_session, session_checksum, CameraSpec, GenerateSpec, SynthError};
pub use trajectory::TrajectorySpec;
