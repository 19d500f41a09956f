use rfnode_core::{scale_camera, Aabb, PinholeCamera, Pose};

use crate::protocol::{RenderRequestMsg, StageKind, FLAG_CONTINUOUS, FLAG_PROGRESSIVE, FLAG_WANT_DEPTH};

pub type ClientId = [u8; 16];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    Voxel = 0,
    Splat = 1,
    Mesh = 2,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::Voxel, Backend::Splat, Backend::Mesh];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Backend::Voxel => "voxel",
            Backend::Splat => "splat",
            Backend::Mesh => "mesh",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown backend `{s}` (expected voxel, splat or mesh)"))
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestMode {
    Dynamic,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderRequest {
    pub client_id: ClientId,
    pub request_id: u64,
    pub pose: Pose,
    pub intrinsics: PinholeCamera,
    pub crop: Option<Aabb>,
    pub backend: Backend,
    pub want_depth: bool,
    pub mode: RequestMode,
    pub progressive: bool,
}

/// Why a wire request could not become a [`RenderRequest`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RequestFault {
    Backend(u8),
    Invalid(String),
}

impl RenderRequest {
    pub fn from_wire(client_id: ClientId, msg: &RenderRequestMsg) -> Result<Self, RequestFault> {
        let backend = Backend::from_u8(msg.backend).ok_or(RequestFault::Backend(msg.backend))?;
        let p = msg.pose;
        let pose = Pose::new([p[0], p[1], p[2], p[3]], [p[4], p[5], p[6]])
            .map_err(|e| RequestFault::Invalid(format!("pose: {e}")))?;
        let [fx, fy, cx, cy] = msg.intrinsics.map(|v| v as f64);
        let intrinsics = PinholeCamera::new(fx, fy, cx, cy, msg.width as u32, msg.height as u32)
            .map_err(|e| RequestFault::Invalid(format!("camera: {e}")))?;
        let crop = match msg.crop {
            Some(c) => {
                let c = c.map(|v| v as f64);
                Some(
                    Aabb::new([c[0], c[1], c[2]], [c[3], c[4], c[5]])
                        .map_err(|e| RequestFault::Invalid(format!("crop: {e}")))?,
                )
            }
            None => None,
        };
        Ok(Self {
            client_id,
            request_id: msg.request_id,
            pose,
            intrinsics,
            crop,
            backend,
            want_depth: msg.flags & FLAG_WANT_DEPTH != 0,
            mode: if msg.flags & FLAG_CONTINUOUS != 0 { RequestMode::Continuous } else { RequestMode::Dynamic },
            progressive: msg.flags & FLAG_PROGRESSIVE != 0,
        })
    }

    pub fn to_wire(&self) -> RenderRequestMsg {
        let mut flags = 0;
        if self.want_depth {
            flags |= FLAG_WANT_DEPTH;
        }
        if self.progressive {
            flags |= FLAG_PROGRESSIVE;
        }
        if self.mode == RequestMode::Continuous {
            flags |= FLAG_CONTINUOUS;
        }
        let c = &self.intrinsics;
        RenderRequestMsg {
            request_id: self.request_id,
            backend: self.backend as u8,
            flags,
            pose: self.pose.to_array(),
            intrinsics: [c.fx() as f32, c.fy() as f32, c.cx() as f32, c.cy() as f32],
            width: c.width() as u16,
            height: c.height() as u16,
            crop: self.crop.map(|b| b.to_array().map(|v| v as f32)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedStage {
    pub stage: StageKind,
    pub fraction: f64,
    pub camera: PinholeCamera,
}

/// Stage cameras for a request: 10%, 50% and 100% per axis when
/// progressive, otherwise full resolution only.
pub fn progressive_plan(camera: &PinholeCamera, progressive: bool) -> Vec<PlannedStage> {
    let stages: &[StageKind] = if progressive { &StageKind::ALL } else { &[StageKind::S100] };
    stages
        .iter()
        .map(|&stage| PlannedStage {
            stage,
            fraction: stage.fraction(),
            camera: scale_camera(camera, stage.fraction()).expect("stage fractions lie in (0, 1]"),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_sizes() {
        let cam = PinholeCamera::new(800.0, 800.0, 500.0, 400.0, 1000, 800).unwrap();
        let dims: Vec<_> = progressive_plan(&cam, true)
            .iter()
            .map(|s| (s.camera.width(), s.camera.height()))
            .collect();
        assert_eq!(dims, vec![(100, 80), (500, 400), (1000, 800)]);
        let single = progressive_plan(&cam, false);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].stage, StageKind::S100);
        assert_eq!(single[0].camera, cam);
    }

    #[test]
    fn plan_rescales_by_realized_ratio() {
        let cam = PinholeCamera::new(500.0, 500.0, 512.0, 384.0, 1024, 768).unwrap();
        let s10 = &progressive_plan(&cam, true)[0];
        assert_eq!((s10.camera.width(), s10.camera.height()), (102, 76));
        assert!((s10.camera.fx() - 500.0 * 102.0 / 1024.0).abs() < 1e-12);
        assert!((s10.camera.fy() - 500.0 * 76.0 / 768.0).abs() < 1e-12);
    }

    #[test]
    fn wire_round_trip() {
        let req = RenderRequest {
            client_id: [3; 16],
            request_id: 4,
            pose: Pose::identity(),
            intrinsics: PinholeCamera::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap(),
            crop: Some(Aabb::new([-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]).unwrap()),
            backend: Backend::Mesh,
            want_depth: true,
            mode: RequestMode::Continuous,
            progressive: false,
        };
        assert_eq!(RenderRequest::from_wire([3; 16], &req.to_wire()).unwrap(), req);
        let mut bad = req.to_wire();
        bad.backend = 9;
        assert_eq!(RenderRequest::from_wire([3; 16], &bad), Err(RequestFault::Backend(9)));
        bad.backend = 0;
        bad.width = 0;
        assert!(matches!(RenderRequest::from_wire([3; 16], &bad), Err(RequestFault::Invalid(_))));
    }
}
