//! Six-dimensional spatial vector algebra.
//!
//! Spatial vectors are ordered angular-before-linear: a motion vector is
//! `[ω; v]`, a force vector `[n; f]`. Transforms follow the Plücker
//! convention where `ᴮX_A` maps motion vectors expressed in frame `A` into
//! frame `B`.
//!
//! Besides the usual operators this module provides the two single-body
//! Coriolis factorizations: the Christoffel-consistent `𝐂` for a body using
//! its body twist as generalized speeds, and the body-level `𝐁 = 𝐂 − 𝐈(v×)`
//! used by the recursive algorithms.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Matrix6, Rotation3, Unit, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// Spatial motion vector `[ω; v]`.
pub type MotionVector = Vector6<f64>;
/// Spatial force (or momentum) vector `[n; f]`.
pub type ForceVector = Vector6<f64>;

/// 3×3 cross-product matrix: `skew(a) * b == a × b`.
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Inverse of [`skew`] applied to the skew-symmetric part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

#[inline]
fn angular(v: &Vector6<f64>) -> Vector3<f64> {
    v.fixed_rows::<3>(0).into_owned()
}

#[inline]
fn linear(v: &Vector6<f64>) -> Vector3<f64> {
    v.fixed_rows::<3>(3).into_owned()
}

fn stack(top: Vector3<f64>, bottom: Vector3<f64>) -> Vector6<f64> {
    Vector6::new(top.x, top.y, top.z, bottom.x, bottom.y, bottom.z)
}

fn blocks(tl: &Matrix3<f64>, tr: &Matrix3<f64>, bl: &Matrix3<f64>, br: &Matrix3<f64>) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(tl);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(tr);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(bl);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(br);
    m
}

/// Motion cross-product operator `(v×) = [[ω×, 0], [v×, ω×]]`.
pub fn cross_motion(v: &MotionVector) -> Matrix6<f64> {
    let w = skew(&angular(v));
    let l = skew(&linear(v));
    blocks(&w, &Matrix3::zeros(), &l, &w)
}

/// Force cross-product operator `(v×#) = −(v×)ᵀ`.
pub fn cross_force_dual(v: &MotionVector) -> Matrix6<f64> {
    -cross_motion(v).transpose()
}

/// The operator `(f ×̄#)` defined by `(f ×̄#) w = (w ×#) f` for every `w`.
///
/// Assembled column by column from that contract.
pub fn bar_cross_sharp(f: &ForceVector) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    for k in 0..6 {
        let e = Vector6::ith(k, 1.0);
        m.set_column(k, &(cross_force_dual(&e) * f));
    }
    m
}

/// Christoffel-consistent single-body factorization
/// `𝐂 = ½[𝐈(v×) + (v×#)𝐈 + (𝐈v)×̄#]`.
pub fn body_coriolis_star(inertia: &SpatialInertia, v: &MotionVector) -> Matrix6<f64> {
    coriolis_star_matrix(&inertia.to_matrix(), v)
}

/// Body-level factorization `𝐁 = ½[(v×#)𝐈 + (𝐈v)×̄# − 𝐈(v×)]`.
pub fn body_coriolis_b(inertia: &SpatialInertia, v: &MotionVector) -> Matrix6<f64> {
    coriolis_b_matrix(&inertia.to_matrix(), v)
}

/// [`body_coriolis_star`] for an arbitrary 6×6 inertia matrix.
pub fn coriolis_star_matrix(i: &Matrix6<f64>, v: &MotionVector) -> Matrix6<f64> {
    0.5 * (i * cross_motion(v) + cross_force_dual(v) * i + bar_cross_sharp(&(i * v)))
}

/// [`body_coriolis_b`] for an arbitrary 6×6 inertia matrix.
pub fn coriolis_b_matrix(i: &Matrix6<f64>, v: &MotionVector) -> Matrix6<f64> {
    0.5 * (cross_force_dual(v) * i + bar_cross_sharp(&(i * v)) - i * cross_motion(v))
}

/// Number of 6-vectors stacked in `len` entries.
fn nblocks(len: usize) -> usize {
    debug_assert_eq!(len % 6, 0, "stacked spatial quantity must have 6·n rows");
    len / 6
}

fn block6(v: &DVector<f64>, b: usize) -> Vector6<f64> {
    Vector6::from_iterator(v.rows(6 * b, 6).iter().copied())
}

fn stacked_blockdiag(v: &DVector<f64>, op: impl Fn(&Vector6<f64>) -> Matrix6<f64>) -> DMatrix<f64> {
    let n = nblocks(v.len());
    let mut m = DMatrix::zeros(6 * n, 6 * n);
    for b in 0..n {
        m.view_mut((6 * b, 6 * b), (6, 6)).copy_from(&op(&block6(v, b)));
    }
    m
}

/// Block-diagonal `(𝗏×)` for a stacked cluster velocity.
pub fn stacked_cross_motion(v: &DVector<f64>) -> DMatrix<f64> {
    stacked_blockdiag(v, cross_motion)
}

/// Block-diagonal `(𝗏×#)` for a stacked cluster velocity.
pub fn stacked_cross_force(v: &DVector<f64>) -> DMatrix<f64> {
    stacked_blockdiag(v, cross_force_dual)
}

/// Block-diagonal `(𝗳×̄#)` for a stacked cluster force.
pub fn stacked_bar_cross(f: &DVector<f64>) -> DMatrix<f64> {
    stacked_blockdiag(f, bar_cross_sharp)
}

/// Cluster-level `𝗕(𝗜, 𝗏) = ½[(𝗏×#)𝗜 + (𝗜𝗏)×̄# − 𝗜(𝗏×)]`.
///
/// `inertia` may be any (6n)×(6n) matrix, e.g. a composite inertia.
pub fn stacked_coriolis_b(inertia: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let iv = inertia * v;
    (stacked_cross_force(v) * inertia + stacked_bar_cross(&iv) - inertia * stacked_cross_motion(v)) * 0.5
}

/// Plücker transform `ᴮX_A` stored as the rotation `E` (A coordinates to B
/// coordinates) and the position `r` of B's origin expressed in A.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialTransform {
    pub rot: Matrix3<f64>,
    pub trans: Vector3<f64>,
}

impl Default for SpatialTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SpatialTransform {
    pub fn new(rot: Matrix3<f64>, trans: Vector3<f64>) -> Self {
        Self { rot, trans }
    }

    pub fn identity() -> Self {
        Self { rot: Matrix3::identity(), trans: Vector3::zeros() }
    }

    /// Frame B rotated by `angle` about `axis` (unit) relative to frame A.
    pub fn rotation(axis: &Vector3<f64>, angle: f64) -> Self {
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self { rot: r.matrix().transpose(), trans: Vector3::zeros() }
    }

    /// Frame B displaced by `p` (in A coordinates) without rotation.
    pub fn translation(p: &Vector3<f64>) -> Self {
        Self { rot: Matrix3::identity(), trans: *p }
    }

    /// Transform for a frame with orientation `r_ab` (B axes expressed in A)
    /// located at `p` in A.
    pub fn from_pose(r_ab: &Matrix3<f64>, p: &Vector3<f64>) -> Self {
        Self { rot: r_ab.transpose(), trans: *p }
    }

    /// 6×6 matrix acting on motion vectors.
    pub fn to_matrix(&self) -> Matrix6<f64> {
        let e = self.rot;
        blocks(&e, &Matrix3::zeros(), &(-e * skew(&self.trans)), &e)
    }

    /// `ᴮX_A ∘ ᴬX_C = ᴮX_C`.
    pub fn compose(&self, rhs: &SpatialTransform) -> SpatialTransform {
        SpatialTransform { rot: self.rot * rhs.rot, trans: rhs.trans + rhs.rot.transpose() * self.trans }
    }

    pub fn inverse(&self) -> SpatialTransform {
        SpatialTransform { rot: self.rot.transpose(), trans: -(self.rot * self.trans) }
    }

    /// `X v` for a motion vector.
    pub fn apply_motion(&self, v: &MotionVector) -> MotionVector {
        let w = angular(v);
        let l = linear(v);
        stack(self.rot * w, self.rot * (l - self.trans.cross(&w)))
    }

    /// `Xᵀ f`: maps a force from B coordinates back to A coordinates.
    pub fn apply_transpose(&self, f: &ForceVector) -> ForceVector {
        let n = self.rot.transpose() * angular(f);
        let fl = self.rot.transpose() * linear(f);
        stack(n + self.trans.cross(&fl), fl)
    }

    /// `X⁻ᵀ f`: maps a force from A coordinates into B coordinates.
    pub fn apply_force(&self, f: &ForceVector) -> ForceVector {
        let n = angular(f);
        let fl = linear(f);
        stack(self.rot * (n - self.trans.cross(&fl)), self.rot * fl)
    }

    /// Orientation of B expressed in A.
    pub fn orientation(&self) -> Matrix3<f64> {
        self.rot.transpose()
    }

    /// Maximum deviation of `EᵀE` from identity and of `det E` from one.
    pub fn orthonormality_error(&self) -> f64 {
        let o = (self.rot.transpose() * self.rot - Matrix3::identity()).abs().max();
        o.max((self.rot.determinant() - 1.0).abs())
    }
}

/// Ten inertial parameters `[m, h_x, h_y, h_z, Ī_xx, Ī_yy, Ī_zz, Ī_xy, Ī_xz, Ī_yz]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertialParams(pub [f64; 10]);

impl InertialParams {
    pub const LEN: usize = 10;

    pub fn zeros() -> Self {
        Self([0.0; 10])
    }

    /// A point mass `m` at `c` (body coordinates).
    pub fn point_mass(m: f64, c: &Vector3<f64>) -> Self {
        SpatialInertia::from_mass_com_inertia(m, c, &Matrix3::zeros()).to_params()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.0)
    }
}

/// Spatial inertia about the body-frame origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialInertia {
    pub mass: f64,
    /// First mass moment `m c`.
    pub h: Vector3<f64>,
    /// Rotational inertia about the frame origin.
    pub ibar: Matrix3<f64>,
}

impl SpatialInertia {
    pub fn zero() -> Self {
        Self { mass: 0.0, h: Vector3::zeros(), ibar: Matrix3::zeros() }
    }

    /// Build from mass, centre of mass `c` and rotational inertia about the
    /// centre of mass.
    pub fn from_mass_com_inertia(mass: f64, c: &Vector3<f64>, i_com: &Matrix3<f64>) -> Self {
        let cx = skew(c);
        Self { mass, h: c * mass, ibar: i_com - mass * cx * cx }
    }

    pub fn from_params(theta: &InertialParams) -> Self {
        let t = &theta.0;
        let ibar = Matrix3::new(t[4], t[7], t[8], t[7], t[5], t[9], t[8], t[9], t[6]);
        Self { mass: t[0], h: Vector3::new(t[1], t[2], t[3]), ibar }
    }

    pub fn to_params(&self) -> InertialParams {
        let i = &self.ibar;
        InertialParams([self.mass, self.h.x, self.h.y, self.h.z, i[(0, 0)], i[(1, 1)], i[(2, 2)], i[(0, 1)], i[(0, 2)], i[(1, 2)]])
    }

    /// `𝐈 = [[Ī, (h×)], [(h×)ᵀ, m·1]]`.
    pub fn to_matrix(&self) -> Matrix6<f64> {
        let hx = skew(&self.h);
        blocks(&self.ibar, &hx, &hx.transpose(), &(Matrix3::identity() * self.mass))
    }

    /// Reads a symmetric 6×6 spatial inertia matrix back into its parts.
    pub fn from_matrix(m: &Matrix6<f64>) -> Self {
        let s = (m + m.transpose()) * 0.5;
        let ibar = s.fixed_view::<3, 3>(0, 0).into_owned();
        let hx = s.fixed_view::<3, 3>(0, 3).into_owned();
        let mass = (s[(3, 3)] + s[(4, 4)] + s[(5, 5)]) / 3.0;
        Self { mass, h: vee(&hx), ibar }
    }

    /// 4×4 pseudo-inertia `[[Σ, h], [hᵀ, m]]` with `Σ = ½tr(Ī)1 − Ī`.
    pub fn pseudo_inertia(&self) -> Matrix4<f64> {
        let sigma = Matrix3::identity() * (0.5 * self.ibar.trace()) - self.ibar;
        let mut j = Matrix4::zeros();
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(&sigma);
        j.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.h);
        j.fixed_view_mut::<1, 3>(3, 0).copy_from(&self.h.transpose());
        j[(3, 3)] = self.mass;
        j
    }

    /// Positive semidefinite pseudo-inertia, up to `tol`.
    pub fn is_physically_consistent(&self, tol: f64) -> bool {
        let eig = self.pseudo_inertia().symmetric_eigenvalues();
        eig.iter().all(|&e| e >= -tol)
    }

    pub fn kinetic_energy(&self, v: &MotionVector) -> f64 {
        0.5 * v.dot(&(self.to_matrix() * v))
    }
}

impl std::ops::Add for SpatialInertia {
    type Output = SpatialInertia;
    fn add(self, rhs: SpatialInertia) -> SpatialInertia {
        SpatialInertia { mass: self.mass + rhs.mass, h: self.h + rhs.h, ibar: self.ibar + rhs.ibar }
    }
}

/// `XᵀIX`: the inertia `I` (given in frame B) re-expressed in frame A.
pub fn inertia_transform(x: &SpatialTransform, inertia: &SpatialInertia) -> SpatialInertia {
    let xm = x.to_matrix();
    SpatialInertia::from_matrix(&(xm.transpose() * inertia.to_matrix() * xm))
}
