//! Rigid-body transform algebra on 4×4 homogeneous matrices.
//!
//! Link transforms follow the modified (proximal) Denavit-Hartenberg
//! convention: `Rot_X(α_{i-1}) · Trans_X(a_{i-1}) · Rot_Z(θ_i) · Trans_Z(d_i)`.
//! The classic (distal) convention is intentionally not offered.

use std::ops::Mul;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance used for the orthonormality and determinant checks on [`Pose`].
pub const POSE_TOLERANCE: f64 = 1e-9;

/// 3×3 matrix, row-major.
pub type Mat3<T> = [[T; 3]; 3];
pub type Vec3<T> = [T; 3];

/// A rigid transform: rotation `r` (columns n, o, a) and position `p` in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T> {
    r: Mat3<T>,
    p: Vec3<T>,
}

impl<T: Scalar> Pose<T> {
    /// Builds a pose, checking orthonormality and `det(r) = +1` within
    /// [`POSE_TOLERANCE`].
    pub fn new(r: Mat3<T>, p: Vec3<T>) -> Result<Self> {
        Self::with_tolerance(r, p, T::lit(POSE_TOLERANCE))
    }

    /// Like [`Pose::new`] with a caller-chosen tolerance.
    pub fn with_tolerance(r: Mat3<T>, p: Vec3<T>, tol: T) -> Result<Self> {
        let pose = Pose { r, p };
        pose.check(tol)?;
        Ok(pose)
    }

    /// Builds a pose from its n, o, a columns and position.
    pub fn from_columns(n: Vec3<T>, o: Vec3<T>, a: Vec3<T>, p: Vec3<T>) -> Result<Self> {
        Self::new(
            [[n[0], o[0], a[0]], [n[1], o[1], a[1]], [n[2], o[2], a[2]]],
            p,
        )
    }

    pub(crate) fn from_parts_unchecked(r: Mat3<T>, p: Vec3<T>) -> Self {
        Pose { r, p }
    }

    pub fn identity() -> Self {
        Pose {
            r: mat_identity(),
            p: [T::zero(); 3],
        }
    }

    pub fn translation(p: Vec3<T>) -> Self {
        Pose {
            r: mat_identity(),
            p,
        }
    }

    pub fn rotation(&self) -> &Mat3<T> {
        &self.r
    }

    pub fn position(&self) -> Vec3<T> {
        self.p
    }

    pub fn n(&self) -> Vec3<T> {
        column(&self.r, 0)
    }

    pub fn o(&self) -> Vec3<T> {
        column(&self.r, 1)
    }

    pub fn a(&self) -> Vec3<T> {
        column(&self.r, 2)
    }

    /// Largest elementwise deviation of `rᵀr` from the identity.
    pub fn orthonormality_error(&self) -> T {
        let rtr = mat_mul(&transpose(&self.r), &self.r);
        let mut worst = T::zero();
        for (i, row) in rtr.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }

    pub fn determinant(&self) -> T {
        det(&self.r)
    }

    /// Checks the rigid-transform invariants with tolerance `tol`.
    pub fn check(&self, tol: T) -> Result<()> {
        let finite = self
            .r
            .iter()
            .flatten()
            .chain(self.p.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidPose("non-finite entry".into()));
        }
        let ortho = self.orthonormality_error();
        if ortho > tol {
            return Err(Error::InvalidPose(format!(
                "rotation not orthonormal (max |RᵀR - I| = {:e})",
                ortho.as_f64()
            )));
        }
        let d = self.determinant();
        if (d - T::one()).abs() > tol {
            return Err(Error::InvalidPose(format!(
                "rotation determinant {d} is not +1"
            )));
        }
        Ok(())
    }

    /// Homogeneous product `self · rhs`.
    pub fn compose(&self, rhs: &Pose<T>) -> Pose<T> {
        let r = mat_mul(&self.r, &rhs.r);
        let rp = mat_vec(&self.r, &rhs.p);
        Pose {
            r,
            p: [rp[0] + self.p[0], rp[1] + self.p[1], rp[2] + self.p[2]],
        }
    }

    /// Rigid inverse `(rᵀ, -rᵀp)`.
    pub fn invert(&self) -> Pose<T> {
        let rt = transpose(&self.r);
        let q = mat_vec(&rt, &self.p);
        Pose {
            r: rt,
            p: [-q[0], -q[1], -q[2]],
        }
    }

    /// Maps a point expressed in this pose's child frame into its parent frame.
    pub fn transform_point(&self, x: &Vec3<T>) -> Vec3<T> {
        let rx = mat_vec(&self.r, x);
        [rx[0] + self.p[0], rx[1] + self.p[1], rx[2] + self.p[2]]
    }

    /// The full 4×4 matrix, row-major.
    pub fn to_matrix(&self) -> [[T; 4]; 4] {
        let z = T::zero();
        let mut m = [[z; 4]; 4];
        for ((row, r), p) in m.iter_mut().zip(&self.r).zip(self.p) {
            row[..3].copy_from_slice(r);
            row[3] = p;
        }
        m[3][3] = T::one();
        m
    }

    /// Largest absolute elementwise difference between the two 4×4 matrices.
    pub fn max_abs_diff(&self, other: &Pose<T>) -> T {
        self.r
            .iter()
            .flatten()
            .zip(other.r.iter().flatten())
            .chain(self.p.iter().zip(other.p.iter()))
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    /// Projects the rotation onto SO(3) (polar decomposition by Newton
    /// iteration `R ← (R + R⁻ᵀ)/2`). Used to clean up slightly drifted
    /// sensor orientations.
    pub fn reorthonormalized(&self) -> Result<Pose<T>> {
        let mut r = self.r;
        for _ in 0..32 {
            let inv_t = transpose(
                &inverse(&r).ok_or_else(|| Error::InvalidPose("singular rotation block".into()))?,
            );
            let half = T::lit(0.5);
            let mut next = r;
            for i in 0..3 {
                for j in 0..3 {
                    next[i][j] = half * (r[i][j] + inv_t[i][j]);
                }
            }
            let delta = next
                .iter()
                .flatten()
                .zip(r.iter().flatten())
                .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
            r = next;
            if delta <= T::epsilon() * T::lit(4.0) {
                break;
            }
        }
        let pose = Pose { r, p: self.p };
        pose.check(T::lit(POSE_TOLERANCE))?;
        Ok(pose)
    }
}

impl<T: Scalar> Mul for Pose<T> {
    type Output = Pose<T>;

    fn mul(self, rhs: Pose<T>) -> Pose<T> {
        self.compose(&rhs)
    }
}

impl<T: Scalar> Mul for &Pose<T> {
    type Output = Pose<T>;

    fn mul(self, rhs: &Pose<T>) -> Pose<T> {
        self.compose(rhs)
    }
}

/// One row of a modified D-H table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhRow<T> {
    /// Twist about the previous x axis (rad).
    pub alpha_prev: T,
    /// Offset along the previous x axis (mm).
    pub a_prev: T,
    /// Offset along the current z axis (mm).
    pub d: T,
    /// Rotation about the current z axis (rad).
    pub theta: T,
}

impl<T: Scalar> DhRow<T> {
    pub fn new(alpha_prev: T, a_prev: T, d: T, theta: T) -> Self {
        DhRow {
            alpha_prev,
            a_prev,
            d,
            theta,
        }
    }

    fn is_finite(&self) -> bool {
        self.alpha_prev.is_finite()
            && self.a_prev.is_finite()
            && self.d.is_finite()
            && self.theta.is_finite()
    }
}

/// Link transform `ⁱ⁻¹ᵢT` for one modified D-H row.
pub fn dh_link_transform<T: Scalar>(row: &DhRow<T>) -> Result<Pose<T>> {
    if !row.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-finite D-H row {row:?}"
        )));
    }
    let (st, ct) = row.theta.sin_cos();
    let (sa, ca) = row.alpha_prev.sin_cos();
    let z = T::zero();
    let r = [
        [ct, -st, z],
        [st * ca, ct * ca, -sa],
        [st * sa, ct * sa, ca],
    ];
    let p = [row.a_prev, -sa * row.d, ca * row.d];
    Ok(Pose::from_parts_unchecked(r, p))
}

/// Composes a chain left to right: `T₁ · T₂ · … · Tₙ`.
pub fn compose_chain<'a, T, I>(chain: I) -> Pose<T>
where
    T: Scalar,
    I: IntoIterator<Item = &'a Pose<T>>,
{
    chain
        .into_iter()
        .fold(Pose::identity(), |acc, t| acc.compose(t))
}

fn mat_identity<T: Scalar>() -> Mat3<T> {
    let (z, o) = (T::zero(), T::one());
    [[o, z, z], [z, o, z], [z, z, o]]
}

fn column<T: Scalar>(m: &Mat3<T>, j: usize) -> Vec3<T> {
    [m[0][j], m[1][j], m[2][j]]
}

fn transpose<T: Scalar>(m: &Mat3<T>) -> Mat3<T> {
    let mut t = *m;
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            t[j][i] = v;
        }
    }
    t
}

fn mat_mul<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

fn mat_vec<T: Scalar>(m: &Mat3<T>, x: &Vec3<T>) -> Vec3<T> {
    [
        m[0][0] * x[0] + m[0][1] * x[1] + m[0][2] * x[2],
        m[1][0] * x[0] + m[1][1] * x[1] + m[1][2] * x[2],
        m[2][0] * x[0] + m[2][1] * x[1] + m[2][2] * x[2],
    ]
}

fn det<T: Scalar>(m: &Mat3<T>) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inverse<T: Scalar>(m: &Mat3<T>) -> Option<Mat3<T>> {
    let d = det(m);
    if d.abs() <= T::min_positive_value() {
        return None;
    }
    let c =
        |i0: usize, i1: usize, j0: usize, j1: usize| m[i0][j0] * m[i1][j1] - m[i0][j1] * m[i1][j0];
    let adj = [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ];
    let mut out = adj;
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            *v = *v / d;
        }
    }
    Some(out)
}
