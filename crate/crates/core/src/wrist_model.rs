//! Five-frame wrist chain with a prismatic rotation-center term.
//!
//! Frames: {0} radiocarpal base, {1} fixed 90° about z, {2} prismatic `d2`
//! along the capitate axis, {3} radio-ulnar deviation `θ3`, {4}
//! flexion-extension `θ4` (positive in flexion), {5} middle fingertip at
//! distance `a4` along x₄.

use crate::error::{Error, Result};
use crate::homogeneous::{compose_chain, dh_link_transform, DhRow, Pose, Vec3};
use crate::scalar::Scalar;

/// Relative tolerance on the arcsin arguments of the inverse kinematics.
/// Arguments inside `1 + IK_CLAMP_TOLERANCE` are clamped to ±1.
pub const IK_CLAMP_TOLERANCE: f64 = 1e-9;

/// Wrist joint configuration.
///
/// `beta3 = theta3 + π/2` is maintained by the constructor. `theta4` is the
/// flexion-extension angle and equals `beta4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState<T> {
    theta3: T,
    beta3: T,
    theta4: T,
    d2: T,
}

impl<T: Scalar> JointState<T> {
    pub fn new(theta3: T, theta4: T, d2: T) -> Result<Self> {
        if !(theta3.is_finite() && theta4.is_finite() && d2.is_finite()) {
            return Err(Error::InvalidArgument("non-finite joint value".into()));
        }
        if theta4.abs() > T::FRAC_PI_2() {
            return Err(Error::InvalidArgument(format!(
                "theta4 = {theta4} rad outside [-pi/2, pi/2]"
            )));
        }
        Ok(JointState {
            theta3,
            beta3: theta3 + T::FRAC_PI_2(),
            theta4,
            d2,
        })
    }

    /// Builds a state from the surface inputs `(β3, β4)` and `d2`.
    pub fn from_betas(beta3: T, beta4: T, d2: T) -> Result<Self> {
        Self::new(beta3 - T::FRAC_PI_2(), beta4, d2)
    }

    pub fn theta3(&self) -> T {
        self.theta3
    }

    pub fn beta3(&self) -> T {
        self.beta3
    }

    pub fn theta4(&self) -> T {
        self.theta4
    }

    pub fn beta4(&self) -> T {
        self.theta4
    }

    pub fn d2(&self) -> T {
        self.d2
    }
}

/// Per-subject geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectParams<T> {
    pub subject_id: String,
    /// Capitate origin to middle fingertip (mm).
    a4: T,
    /// Origin of the sensor frame L expressed in the base frame (mm).
    pub p_lorg: Vec3<T>,
}

impl<T: Scalar> SubjectParams<T> {
    pub fn new(subject_id: impl Into<String>, a4: T, p_lorg: Vec3<T>) -> Result<Self> {
        if !(a4 > T::zero() && a4.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "a4 must be positive, got {a4}"
            )));
        }
        if !p_lorg.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("p_lorg must be finite".into()));
        }
        Ok(SubjectParams {
            subject_id: subject_id.into(),
            a4,
            p_lorg,
        })
    }

    pub fn a4(&self) -> T {
        self.a4
    }
}

/// The D-H table of the chain for a given state.
pub fn dh_table<T: Scalar>(state: &JointState<T>, subject: &SubjectParams<T>) -> [DhRow<T>; 5] {
    let z = T::zero();
    let quarter = T::FRAC_PI_2();
    [
        DhRow::new(z, z, z, quarter),
        DhRow::new(quarter, z, state.d2, z),
        DhRow::new(-quarter, z, z, state.theta3),
        DhRow::new(quarter, z, z, state.theta4),
        DhRow::new(z, subject.a4, z, z),
    ]
}

/// `⁰₁T, ¹₂T, ²₃T, ³₄T, ⁴₅T` built row by row from the D-H table.
pub fn link_transforms<T: Scalar>(
    state: &JointState<T>,
    subject: &SubjectParams<T>,
) -> [Pose<T>; 5] {
    dh_table(state, subject).map(|row| {
        // Rows are finite by construction of JointState/SubjectParams.
        dh_link_transform(&row).expect("finite D-H row")
    })
}

/// Closed-form `⁰₅T`.
pub fn forward_kinematics<T: Scalar>(state: &JointState<T>, subject: &SubjectParams<T>) -> Pose<T> {
    let (s3, c3) = state.theta3.sin_cos();
    let (s4, c4) = state.theta4.sin_cos();
    let a4 = subject.a4;
    let z = T::zero();
    let r = [
        [-s3 * c4, s3 * s4, c3],
        [c3 * c4, -c3 * s4, s3],
        [s4, c4, z],
    ];
    let p = [state.d2 - a4 * s3 * c4, a4 * c3 * c4, a4 * s4];
    Pose::from_parts_unchecked(r, p)
}

/// Forward kinematics as the product of the five link transforms.
pub fn forward_kinematics_by_product<T: Scalar>(
    state: &JointState<T>,
    subject: &SubjectParams<T>,
) -> Pose<T> {
    compose_chain(link_transforms(state, subject).iter())
}

/// Fixed rotation `⁰_L R` of the sensor frame L in the base frame.
pub fn sensor_rotation<T: Scalar>() -> [[T; 3]; 3] {
    let (z, o) = (T::zero(), T::one());
    [[z, z, -o], [-o, z, z], [z, o, z]]
}

/// `⁰_L T` for a subject.
pub fn sensor_frame<T: Scalar>(subject: &SubjectParams<T>) -> Pose<T> {
    Pose::from_parts_unchecked(sensor_rotation(), subject.p_lorg)
}

/// Maps an end-effector pose tracked in frame L into the base frame.
pub fn sensor_to_base<T: Scalar>(pose_in_l: &Pose<T>, subject: &SubjectParams<T>) -> Pose<T> {
    sensor_frame(subject).compose(pose_in_l)
}

/// Inverse of [`sensor_to_base`].
pub fn base_to_sensor<T: Scalar>(pose_in_base: &Pose<T>, subject: &SubjectParams<T>) -> Pose<T> {
    sensor_frame(subject).invert().compose(pose_in_base)
}

/// Closed-form inverse kinematics from a base-frame end-effector pose.
///
/// `θ4 = asin(p_z / a4)`, `θ3 = asin(a_y)`, `d2 = p_x - a4·n_x`.
pub fn inverse_kinematics<T: Scalar>(
    pose_in_base: &Pose<T>,
    subject: &SubjectParams<T>,
) -> Result<JointState<T>> {
    let a4 = subject.a4;
    let p = pose_in_base.position();
    let band = T::one() + T::lit(IK_CLAMP_TOLERANCE);

    let sin4 = p[2] / a4;
    if !(sin4.abs() <= band) {
        return Err(Error::OutOfReach {
            p_z: p[2].as_f64(),
            a4: a4.as_f64(),
        });
    }
    let a_y = pose_in_base.a()[1];
    if !(a_y.abs() <= band) {
        return Err(Error::MalformedOrientation { a_y: a_y.as_f64() });
    }
    let clamp = |v: T| v.max(-T::one()).min(T::one());

    let theta4 = clamp(sin4).asin();
    let theta3 = clamp(a_y).asin();
    let d2 = p[0] - a4 * pose_in_base.n()[0];
    JointState::new(theta3, theta4, d2)
}
