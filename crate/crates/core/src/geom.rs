//! Quaternion, rotation, and SE(3) primitives shared by the rest of the crate.
//!
//! Quaternions are stored `(w, x, y, z)` and canonicalized to `w >= 0` after
//! every normalization so that rotation-angle extraction via `2*acos(|w|)` is
//! stable. [`UnitQuat::exp`] follows the half-angle convention: the rotation
//! angle of the result is twice the norm of the input vector.

use nalgebra::{Matrix3, Vector3};

/// Axis-angle vector in the so(3) tangent space (half-angle convention:
/// `UnitQuat::exp` of this vector rotates by twice its norm).
pub type TangentRotation = Vector3<f64>;

/// Unit quaternion `(w, x, y, z)` restricted to the `w >= 0` hemisphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitQuat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::identity()
    }
}

impl UnitQuat {
    pub fn identity() -> Self {
        Self { w: 1.0, x: 0.0, y: 0.0, z: 0.0 }
    }

    /// Builds a unit quaternion from raw components, normalizing and
    /// canonicalizing the hemisphere. Panics on a near-zero norm.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        assert!(n > 1e-12, "cannot normalize a zero quaternion");
        let s = if w < 0.0 { -1.0 / n } else { 1.0 / n };
        Self { w: w * s, x: x * s, y: y * s, z: z * s }
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n < 1e-12 {
            return Self::identity();
        }
        Self::exp(&(axis * (0.5 * angle / n)))
    }

    /// Intrinsic roll-pitch-yaw (X, then Y, then Z) composition.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        let rz = Self::from_axis_angle(&Vector3::z(), yaw);
        let ry = Self::from_axis_angle(&Vector3::y(), pitch);
        let rx = Self::from_axis_angle(&Vector3::x(), roll);
        rz * ry * rx
    }

    /// Exponential map from a half-angle tangent vector.
    ///
    /// The zero vector maps to the identity; small inputs match the
    /// first-order approximation `[1, v]` after normalization.
    pub fn exp(half_angle: &TangentRotation) -> Self {
        let n = half_angle.norm();
        if n < 1e-9 {
            // First-order expansion, renormalized.
            return Self::new(1.0, half_angle.x, half_angle.y, half_angle.z);
        }
        let (s, c) = n.sin_cos();
        let k = s / n;
        Self::new(c, k * half_angle.x, k * half_angle.y, k * half_angle.z)
    }

    /// Inverse of [`UnitQuat::exp`]: the half-angle tangent vector of the
    /// canonical (shortest) rotation.
    pub fn log(&self) -> TangentRotation {
        let v = Vector3::new(self.x, self.y, self.z);
        let vn = v.norm();
        if vn < 1e-12 {
            return v / self.w;
        }
        let half = vn.atan2(self.w);
        v * (half / vn)
    }

    pub fn conjugate(&self) -> Self {
        Self { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Rotation angle in radians, `2*acos(|w|)`.
    pub fn angle(&self) -> f64 {
        2.0 * self.w.abs().min(1.0).acos()
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let qv = Vector3::new(self.x, self.y, self.z);
        let t = qv.cross(v);
        v + 2.0 * (self.w * t + qv.cross(&t))
    }
}

impl std::ops::Mul for UnitQuat {
    type Output = UnitQuat;

    fn mul(self, rhs: UnitQuat) -> UnitQuat {
        let (aw, ax, ay, az) = (self.w, self.x, self.y, self.z);
        let (bw, bx, by, bz) = (rhs.w, rhs.x, rhs.y, rhs.z);
        UnitQuat::new(
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        )
    }
}

/// Cross-product matrix: `skew(v) * u == v.cross(u)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Partial derivatives of the rotation matrix with respect to the four unit
/// quaternion components, ordered `(w, x, y, z)`.
pub(crate) fn rotmat_partials(q: &UnitQuat) -> [Matrix3<f64>; 4] {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    let dw = 2.0 * Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0);
    let dx = 2.0 * Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x);
    let dy = 2.0 * Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y);
    let dz = 2.0 * Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0);
    [dw, dx, dy, dz]
}

/// Rigid transform: rotation `q` followed by translation `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSE3 {
    pub t: Vector3<f64>,
    pub q: UnitQuat,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self { t: Vector3::zeros(), q: UnitQuat::identity() }
    }

    pub fn new(t: Vector3<f64>, q: UnitQuat) -> Self {
        Self { t, q }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self { t, q: UnitQuat::identity() }
    }

    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3 { t: self.t + self.q.rotate(&other.t), q: self.q * other.q }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let qi = self.q.conjugate();
        PoseSE3 { t: -qi.rotate(&self.t), q: qi }
    }

    /// `other` expressed in `self`'s frame: `self⁻¹ ∘ other`.
    /// Inverse of composition: `self.compose(&self.relative(&other)) == other`.
    pub fn relative(&self, other: &PoseSE3) -> PoseSE3 {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.q.rotate(p) + self.t
    }

    /// Rotation angle of the pose, in radians.
    pub fn rotation_angle(&self) -> f64 {
        self.q.angle()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const TOL: f64 = 1e-9;

    #[test]
    fn exp_of_zero_is_identity() {
        let q = UnitQuat::exp(&Vector3::zeros());
        assert_eq!(q, UnitQuat::identity());
    }

    #[test]
    fn exp_of_half_pi_about_z_is_pi_rotation() {
        let q = UnitQuat::exp(&Vector3::new(0.0, 0.0, PI / 2.0));
        assert!(q.w.abs() < TOL);
        assert_relative_eq!(q.z, 1.0, epsilon = TOL);
        assert_relative_eq!(q.angle(), PI, epsilon = TOL);
    }

    #[test]
    fn exp_small_angle_first_order() {
        let q = UnitQuat::exp(&Vector3::new(1e-9, 0.0, 0.0));
        assert_relative_eq!(q.w, 1.0, epsilon = 1e-15);
        assert_relative_eq!(q.x, 1e-9, epsilon = 1e-15);
    }

    #[test]
    fn rotmat_of_identity() {
        assert_relative_eq!(
            UnitQuat::identity().to_rotation_matrix(),
            Matrix3::identity(),
            epsilon = TOL
        );
    }

    #[test]
    fn rotmat_180_about_z() {
        let q = UnitQuat::from_axis_angle(&Vector3::z(), PI);
        let expected = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        assert_relative_eq!(q.to_rotation_matrix(), expected, epsilon = TOL);
    }

    #[test]
    fn rotmat_90_about_x_maps_y_to_z() {
        let q = UnitQuat::from_axis_angle(&Vector3::x(), PI / 2.0);
        let v = q.to_rotation_matrix() * Vector3::y();
        assert_relative_eq!(v, Vector3::z(), epsilon = TOL);
    }

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        let v = Vector3::new(1.0, 0.0, 0.0);
        let u = Vector3::new(0.0, 1.0, 0.0);
        assert_relative_eq!(skew(&v) * u, Vector3::z(), epsilon = TOL);
        let m = skew(&Vector3::new(1.0, 2.0, 3.0));
        assert_relative_eq!(m.transpose(), -m, epsilon = TOL);
    }

    #[test]
    fn relative_of_equal_poses_is_identity() {
        let a = PoseSE3::new(
            Vector3::new(1.0, -2.0, 0.5),
            UnitQuat::from_rpy(0.1, -0.2, 0.7),
        );
        let rel = a.relative(&a);
        assert!(rel.t.norm() < TOL);
        assert!(rel.rotation_angle() < TOL);
    }

    #[test]
    fn relative_to_identity_is_self() {
        let b = PoseSE3::new(Vector3::new(3.0, 1.0, -1.0), UnitQuat::from_rpy(0.3, 0.2, -0.4));
        let rel = PoseSE3::identity().relative(&b);
        assert_relative_eq!(rel.t, b.t, epsilon = TOL);
        assert_relative_eq!(rel.q.w, b.q.w, epsilon = TOL);
    }

    #[test]
    fn relative_of_pure_translations() {
        let a = PoseSE3::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let b = PoseSE3::from_translation(Vector3::new(2.0, 0.0, 0.0));
        let rel = a.relative(&b);
        assert_relative_eq!(rel.t, Vector3::new(1.0, 0.0, 0.0), epsilon = TOL);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let a = PoseSE3::new(Vector3::new(0.3, 4.0, -2.0), UnitQuat::from_rpy(1.0, -0.5, 2.0));
        let id = a.compose(&a.inverse());
        assert!(id.t.norm() < TOL);
        assert!(id.rotation_angle() < TOL);
    }

    #[test]
    fn canonical_hemisphere() {
        let q = UnitQuat::new(-0.5, 0.5, 0.5, 0.5);
        assert!(q.w > 0.0);
        // Same rotation either way.
        let r = UnitQuat::new(0.5, -0.5, -0.5, -0.5).to_rotation_matrix();
        assert_relative_eq!(q.to_rotation_matrix(), r, epsilon = TOL);
    }

    #[test]
    fn rotmat_partials_match_finite_differences() {
        let q = UnitQuat::from_rpy(0.4, -0.3, 1.2);
        let parts = rotmat_partials(&q);
        let h = 1e-7;
        let comps = [q.w, q.x, q.y, q.z];
        for m in 0..4 {
            let mut plus = comps;
            let mut minus = comps;
            plus[m] += h;
            minus[m] -= h;
            // Raw (non-normalized) perturbation of the rotation matrix formula.
            let rm = |c: [f64; 4]| {
                UnitQuat { w: c[0], x: c[1], y: c[2], z: c[3] }.to_rotation_matrix()
            };
            let fd = (rm(plus) - rm(minus)) / (2.0 * h);
            assert_relative_eq!(parts[m], fd, epsilon = 1e-6);
        }
    }

    fn small_tangent() -> impl Strategy<Value = Vector3<f64>> {
        // Half-angle vector below pi/2 keeps the rotation angle below pi.
        prop::array::uniform3(-0.99f64..0.99)
            .prop_map(|v| Vector3::new(v[0], v[1], v[2]) * (PI / 2.0 / 3.0f64.sqrt()))
    }

    fn arb_quat() -> impl Strategy<Value = UnitQuat> {
        prop::array::uniform4(-1.0f64..1.0)
            .prop_filter("norm", |c| c.iter().map(|v| v * v).sum::<f64>() > 1e-3)
            .prop_map(|c| UnitQuat::new(c[0], c[1], c[2], c[3]))
    }

    fn arb_pose() -> impl Strategy<Value = PoseSE3> {
        (prop::array::uniform3(-10.0f64..10.0), arb_quat())
            .prop_map(|(t, q)| PoseSE3::new(Vector3::new(t[0], t[1], t[2]), q))
    }

    proptest! {
        #[test]
        fn exp_times_exp_of_negation_is_identity(v in small_tangent()) {
            let q = UnitQuat::exp(&v) * UnitQuat::exp(&(-v));
            prop_assert!(q.angle() < TOL);
        }

        #[test]
        fn exp_log_roundtrip(v in small_tangent()) {
            let back = UnitQuat::exp(&v).log();
            prop_assert!((back - v).norm() < TOL);
        }

        #[test]
        fn rotmat_is_homomorphism(a in arb_quat(), b in arb_quat()) {
            let lhs = (a * b).to_rotation_matrix();
            let rhs = a.to_rotation_matrix() * b.to_rotation_matrix();
            prop_assert!((lhs - rhs).abs().max() < TOL);
        }

        #[test]
        fn rotmat_is_special_orthogonal(q in arb_quat()) {
            let r = q.to_rotation_matrix();
            prop_assert!((r * r.transpose() - Matrix3::identity()).abs().max() < TOL);
            prop_assert!((r.determinant() - 1.0).abs() < TOL);
        }

        #[test]
        fn relative_inverts_composition(a in arb_pose(), b in arb_pose()) {
            let back = a.compose(&a.relative(&b));
            prop_assert!((back.t - b.t).norm() < 1e-8);
            prop_assert!((back.q * b.q.conjugate()).angle() < 1e-8);
        }

        #[test]
        fn products_stay_normalized(a in arb_quat(), b in arb_quat()) {
            prop_assert!(((a * b).norm() - 1.0).abs() < TOL);
        }
    }
}
