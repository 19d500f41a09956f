//! Rigid transforms, rays and axis-aligned boxes.

use nalgebra::{Matrix3, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};

use crate::error::CoreError;

/// World-from-camera rigid transform.
///
/// The rotation is stored as a unit quaternion and renormalized on
/// construction, so poses decoded from the wire never accumulate drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    /// Builds a pose from a `(w, x, y, z)` quaternion and a translation in meters.
    pub fn new(quat_wxyz: [f64; 4], translation: [f64; 3]) -> Result<Self, CoreError> {
        let [w, x, y, z] = quat_wxyz;
        if !quat_wxyz.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(CoreError::InvalidPose("non-finite component".into()));
        }
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if norm < 1e-12 {
            return Err(CoreError::InvalidPose("zero-norm quaternion".into()));
        }
        Ok(Self {
            rotation: UnitQuaternion::new_unchecked(q / norm),
            translation: Vector3::from(translation),
        })
    }

    pub fn from_parts(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        // Re-normalize: callers may hand in quaternions built by composition.
        let rotation = UnitQuaternion::new_normalize(rotation.into_inner());
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera at `eye` looking at `target`, with image-up roughly along `up`.
    ///
    /// Uses the camera convention +x right, +y down, +z forward.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self, CoreError> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(CoreError::InvalidPose("eye coincides with target".into()));
        }
        let z = forward.normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-9 {
            return Err(CoreError::InvalidPose("up vector parallel to view".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let m = Matrix3::from_columns(&[x, y, z]);
        let rot = Rotation3::from_matrix_unchecked(m);
        Ok(Self {
            rotation: UnitQuaternion::from_rotation_matrix(&rot),
            translation: eye,
        })
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// `(w, x, y, z)`
    pub fn quat_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// Wire order: `qw, qx, qy, qz, tx, ty, tz`.
    pub fn to_array(&self) -> [f64; 7] {
        let [w, x, y, z] = self.quat_wxyz();
        let t = self.translation;
        [w, x, y, z, t.x, t.y, t.z]
    }

    pub fn from_array(v: [f64; 7]) -> Result<Self, CoreError> {
        Self::new([v[0], v[1], v[2], v[3]], [v[4], v[5], v[6]])
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Self {
            rotation: r_inv,
            translation: -(r_inv * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Self {
        Self::from_parts(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// World point into the camera frame.
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&(p - self.translation))
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Geodesic rotation angle between two poses, radians in `[0, π]`.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    /// Rotation about `axis` by `angle`, no translation.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self {
            rotation,
            translation,
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Unit length.
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self, CoreError> {
        if !min.iter().chain(max.iter()).all(|v| v.is_finite()) {
            return Err(CoreError::InvalidAabb("non-finite bound".into()));
        }
        if (0..3).any(|i| min[i] > max[i]) {
            return Err(CoreError::InvalidAabb(format!(
                "min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Self {
            min: Vector3::from(min),
            max: Vector3::from(max),
        })
    }

    /// Swaps inverted bounds per axis instead of failing.
    pub fn from_corners(a: [f64; 3], b: [f64; 3]) -> Result<Self, CoreError> {
        let min = [a[0].min(b[0]), a[1].min(b[1]), a[2].min(b[2])];
        let max = [a[0].max(b[0]), a[1].max(b[1]), a[2].max(b[2])];
        Self::new(min, max)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    /// `[x0, y0, z0, x1, y1, z1]`
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.min.x, self.min.y, self.min.z, self.max.x, self.max.y, self.max.z,
        ]
    }

    /// Grows the box uniformly by `margin` meters on every side.
    pub fn expanded(&self, margin: f64) -> Self {
        let m = Vector3::repeat(margin);
        Self {
            min: self.min - m,
            max: self.max + m,
        }
    }
}

/// Slab-method intersection of a ray with a box, restricted to `t >= 0`.
///
/// Returns `(t_near, t_far)` with `t_near` clamped to 0 when the origin is
/// inside the box, or `None` when the ray misses or the box lies behind it.
pub fn ray_aabb_clip(ray: &Ray, aabb: &Aabb) -> Option<(f64, f64)> {
    let mut t0 = 0.0_f64;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        let o = ray.origin[axis];
        let d = ray.direction[axis];
        let (lo, hi) = (aabb.min[axis], aabb.max[axis]);
        if d.abs() < 1e-300 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let (mut ta, mut tb) = ((lo - o) * inv, (hi - o) * inv);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}
