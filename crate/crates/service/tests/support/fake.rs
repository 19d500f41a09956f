//! Scripted engine whose renders encode the snapshot step in every pixel.

use std::sync::Arc;
use std::time::Duration;

use rfnode_core::{
    Aabb, DepthImage, FrameSample, PinholeCamera, Pose, RenderError, RenderProduct, RgbImage, SceneRenderer,
    TrainStats,
};
use rfnode_service::{Backend, TrainingEngine};

pub struct StepRenderer {
    pub step: u64,
    pub delay: Duration,
}

impl SceneRenderer for StepRenderer {
    fn render(&self, camera: &PinholeCamera, _pose: &Pose, crop: Option<&Aabb>) -> Result<RenderProduct, RenderError> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let (w, h) = (camera.width() as usize, camera.height() as usize);
        let v = (self.step % 256) as f32 / 255.0;
        let opacity = if crop.is_some() { 0.0 } else { 1.0 };
        Ok(RenderProduct {
            rgb: RgbImage::filled(w, h, [v, v, v]),
            depth: DepthImage::filled(w, h, 2.0),
            opacity: DepthImage::filled(w, h, opacity),
            render_time: 1e-3,
        })
    }
}

pub struct FakeEngine {
    pub steps: u64,
    pub training: bool,
    pub ready: bool,
    pub backends: Vec<Backend>,
    pub pose: Option<Pose>,
    pub frames: Vec<FrameSample>,
    pub delay: Duration,
    pub failing: Option<Backend>,
    pub renders: usize,
    pub on_render: Option<Box<dyn FnMut(usize) + Send>>,
}

impl Default for FakeEngine {
    fn default() -> Self {
        Self {
            steps: 0,
            training: true,
            ready: true,
            backends: vec![Backend::Voxel, Backend::Splat, Backend::Mesh],
            pose: None,
            frames: Vec::new(),
            delay: Duration::ZERO,
            failing: None,
            renders: 0,
            on_render: None,
        }
    }
}

impl TrainingEngine for FakeEngine {
    fn backends(&self) -> Vec<Backend> {
        self.backends.clone()
    }

    fn ready(&self) -> bool {
        self.ready
    }

    fn train_step(&mut self) -> Option<TrainStats> {
        if !self.training {
            return None;
        }
        self.steps += 1;
        Some(TrainStats::default())
    }

    fn steps(&self) -> u64 {
        self.steps
    }

    fn keyframes(&self) -> usize {
        self.frames.len()
    }

    fn tracked_pose(&self) -> Option<Pose> {
        self.pose
    }

    fn push_frame(&mut self, frame: FrameSample) -> Result<(), String> {
        self.pose = Some(frame.pose);
        self.frames.push(frame);
        Ok(())
    }

    fn renderer(&mut self, backend: Backend) -> Result<Arc<dyn SceneRenderer>, RenderError> {
        self.renders += 1;
        if let Some(hook) = self.on_render.as_mut() {
            hook(self.renders);
        }
        if self.failing == Some(backend) {
            return Err(RenderError::Backend("injected failure".into()));
        }
        Ok(Arc::new(StepRenderer {
            step: self.steps,
            delay: self.delay,
        }))
    }
}
