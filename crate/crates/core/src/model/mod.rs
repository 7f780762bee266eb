//! Mechanism description: bodies, joints, clusters, configuration state.
//!
//! Bodies are numbered so that every parent precedes its child. Bodies that
//! are not listed in an explicit cluster form a single-body cluster with
//! their own joint. Clusters are ordered by their first body, which keeps
//! the cluster tree topologically sorted.

mod catalog;
mod cluster;
mod io;
mod joint;

pub use catalog::{bundled_model, bundled_names, geared_pair_cluster, parallel_belt_cluster};
pub use cluster::{BodyLink, ClusterJoint};
pub use io::{load_model, model_from_json, model_to_json, save_model};
pub use joint::{JointKind, JointModel, Offset};

use nalgebra::{DMatrix, DVector, Vector6};

use crate::error::{Error, Result};
use crate::spatial::{InertialParams, SpatialInertia, SpatialTransform};

/// Default gravity: spatial acceleration `[0, 0, 0, 0, 0, −9.81]` in the world frame.
pub const DEFAULT_GRAVITY: [f64; 6] = [0.0, 0.0, 0.0, 0.0, 0.0, -9.81];

#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub name: String,
    /// Spanning-tree parent (`None` for the world).
    pub parent: Option<usize>,
    pub joint: JointModel,
    pub inertia: InertialParams,
}

/// An explicit grouping of bodies joined through a linear transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub name: String,
    /// Body indices in increasing order.
    pub bodies: Vec<usize>,
    /// `G` with one row per body and one column per cluster coordinate.
    pub transmission: DMatrix<f64>,
}

/// A node of the cluster tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub bodies: Vec<usize>,
    pub parent: Option<usize>,
    pub links: Vec<BodyLink>,
    pub joint: ClusterJoint,
    pub q_offset: usize,
    pub v_offset: usize,
}

impl Cluster {
    pub fn nq(&self) -> usize {
        self.joint.nq()
    }

    pub fn nv(&self) -> usize {
        self.joint.nv()
    }

    pub fn nbodies(&self) -> usize {
        self.bodies.len()
    }
}

/// Configuration `q` and generalized speeds `v̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigState {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub name: String,
    bodies: Vec<Body>,
    specs: Vec<ClusterSpec>,
    clusters: Vec<Cluster>,
    /// (cluster, local index) for each body.
    body_cluster: Vec<(usize, usize)>,
    gravity: Vector6<f64>,
    nq: usize,
    nv: usize,
}

/// A spanning-tree version of a clustered model together with the maps
/// between the two coordinate sets.
#[derive(Debug, Clone)]
pub struct SpanningTree {
    pub model: Model,
    /// `v_span = map · v̄` (constant for linear transmissions).
    pub velocity_map: DMatrix<f64>,
}

impl Model {
    pub fn new(name: impl Into<String>, bodies: Vec<Body>, specs: Vec<ClusterSpec>, gravity: Vector6<f64>) -> Result<Self> {
        let name = name.into();
        if bodies.is_empty() {
            return Err(Error::Validation("model has no bodies".into()));
        }
        for (i, b) in bodies.iter().enumerate() {
            if let Some(p) = b.parent {
                if p >= i {
                    return Err(Error::Validation(format!("body {} ('{}') has parent {} which does not precede it", i + 1, b.name, p + 1)));
                }
            }
        }

        let mut owner: Vec<Option<usize>> = vec![None; bodies.len()];
        for (s, spec) in specs.iter().enumerate() {
            if spec.bodies.len() < 2 {
                return Err(Error::Validation(format!("cluster '{}' needs at least two bodies", spec.name)));
            }
            if !spec.bodies.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::Validation(format!("cluster '{}' bodies must be increasing", spec.name)));
            }
            if spec.transmission.nrows() != spec.bodies.len() || spec.transmission.ncols() == 0 {
                return Err(Error::Validation(format!("cluster '{}' transmission must have one row per body", spec.name)));
            }
            if spec.transmission.rank(1e-10) != spec.transmission.ncols() {
                return Err(Error::Validation(format!("cluster '{}' transmission is rank deficient", spec.name)));
            }
            for &b in &spec.bodies {
                if b >= bodies.len() {
                    return Err(Error::Validation(format!("cluster '{}' references missing body {}", spec.name, b + 1)));
                }
                if owner[b].is_some() {
                    return Err(Error::Validation(format!("body {} belongs to two clusters", b + 1)));
                }
                if bodies[b].joint.nv() != 1 || bodies[b].joint.nq() != 1 {
                    return Err(Error::Validation(format!("body {} in cluster '{}' must have a one-DoF joint", b + 1, spec.name)));
                }
                owner[b] = Some(s);
            }
        }

        // cluster body lists, ordered by first body
        let mut groups: Vec<(Vec<usize>, Option<usize>)> = Vec::new();
        let mut seen = vec![false; bodies.len()];
        for b in 0..bodies.len() {
            if seen[b] {
                continue;
            }
            match owner[b] {
                Some(s) => {
                    for &x in &specs[s].bodies {
                        seen[x] = true;
                    }
                    groups.push((specs[s].bodies.clone(), Some(s)));
                }
                None => {
                    seen[b] = true;
                    groups.push((vec![b], None));
                }
            }
        }

        let mut body_cluster = vec![(0, 0); bodies.len()];
        for (k, (members, _)) in groups.iter().enumerate() {
            for (l, &b) in members.iter().enumerate() {
                body_cluster[b] = (k, l);
            }
        }

        let mut clusters = Vec::with_capacity(groups.len());
        let (mut q_offset, mut v_offset) = (0, 0);
        for (k, (members, spec)) in groups.into_iter().enumerate() {
            let mut parent: Option<Option<usize>> = None;
            let mut links = Vec::with_capacity(members.len());
            for &b in &members {
                let link = match bodies[b].parent {
                    None => {
                        Self::merge_parent(&mut parent, None, k)?;
                        BodyLink::World
                    }
                    Some(pb) => {
                        let (pc, pl) = body_cluster[pb];
                        if pc == k {
                            BodyLink::Internal(pl)
                        } else {
                            Self::merge_parent(&mut parent, Some(pc), k)?;
                            BodyLink::External(pl)
                        }
                    }
                };
                links.push(link);
            }
            let parent = parent.ok_or_else(|| Error::Validation(format!("cluster {} has no external parent", k + 1)))?;
            let joint = match spec {
                None => ClusterJoint::Single(bodies[members[0]].joint),
                Some(s) => ClusterJoint::Transmission { joints: members.iter().map(|&b| bodies[b].joint).collect(), ratio: specs[s].transmission.clone() },
            };
            let c = Cluster { bodies: members, parent, links, joint, q_offset, v_offset };
            q_offset += c.nq();
            v_offset += c.nv();
            clusters.push(c);
        }

        let model = Model { name, bodies, specs, clusters, body_cluster, gravity, nq: q_offset, nv: v_offset };
        model.check_rank()?;
        Ok(model)
    }

    fn merge_parent(current: &mut Option<Option<usize>>, candidate: Option<usize>, k: usize) -> Result<()> {
        match current {
            None => {
                *current = Some(candidate);
                Ok(())
            }
            Some(c) if *c == candidate => Ok(()),
            Some(_) => Err(Error::Validation(format!("cluster {} attaches to more than one parent cluster", k + 1))),
        }
    }

    fn check_rank(&self) -> Result<()> {
        let q0 = self.neutral_config();
        let mut q1 = q0.clone();
        for (i, x) in q1.iter_mut().enumerate() {
            *x += 0.3 + 0.1 * i as f64;
        }
        self.normalize_config(&mut q1);
        for q in [&q0, &q1] {
            for (k, c) in self.clusters.iter().enumerate() {
                let phi = c.joint.motion_subspace(&c.links, self.cluster_q(k, q.as_slice()))?;
                if phi.rank(1e-9) != c.nv() {
                    return Err(Error::Validation(format!("motion subspace of cluster {} is rank deficient", k + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn bodies(&self) -> &[Body] {
        &self.bodies
    }

    pub fn cluster_specs(&self) -> &[ClusterSpec] {
        &self.specs
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn nbodies(&self) -> usize {
        self.bodies.len()
    }

    pub fn nclusters(&self) -> usize {
        self.clusters.len()
    }

    /// Configuration dimension.
    pub fn nq(&self) -> usize {
        self.nq
    }

    /// Minimal velocity dimension `m`.
    pub fn nv(&self) -> usize {
        self.nv
    }

    /// Maximal velocity dimension `n = 6 N_B`.
    pub fn n_maximal(&self) -> usize {
        6 * self.bodies.len()
    }

    pub fn gravity(&self) -> &Vector6<f64> {
        &self.gravity
    }

    pub fn set_gravity(&mut self, g: Vector6<f64>) {
        self.gravity = g;
    }

    pub fn body_cluster(&self, body: usize) -> (usize, usize) {
        self.body_cluster[body]
    }

    /// Predecessor array over clusters, 1-based with 0 for the world.
    pub fn parent_array(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.parent.map_or(0, |p| p + 1)).collect()
    }

    /// True when every cluster is a single body.
    pub fn is_open_chain(&self) -> bool {
        self.clusters.iter().all(|c| matches!(c.joint, ClusterJoint::Single(_)))
    }

    /// True when all speeds are coordinate derivatives.
    pub fn uses_coordinates(&self) -> bool {
        self.bodies.iter().all(|b| b.joint.is_coordinate())
    }

    /// `i ⪯ j`: cluster `i` lies on the path from `j` to the root.
    pub fn is_ancestor(&self, i: usize, j: usize) -> bool {
        let mut c = Some(j);
        while let Some(x) = c {
            if x == i {
                return true;
            }
            if x < i {
                return false;
            }
            c = self.clusters[x].parent;
        }
        false
    }

    /// Number of clusters on the longest root path.
    pub fn depth(&self) -> usize {
        let mut d = vec![0usize; self.clusters.len()];
        for (k, c) in self.clusters.iter().enumerate() {
            d[k] = 1 + c.parent.map_or(0, |p| d[p]);
        }
        d.into_iter().max().unwrap_or(0)
    }

    pub fn cluster_q<'a>(&self, k: usize, q: &'a [f64]) -> &'a [f64] {
        let c = &self.clusters[k];
        &q[c.q_offset..c.q_offset + c.nq()]
    }

    pub fn cluster_v<'a>(&self, k: usize, v: &'a [f64]) -> &'a [f64] {
        let c = &self.clusters[k];
        &v[c.v_offset..c.v_offset + c.nv()]
    }

    /// Number of bodies (6-blocks) on the parent side of cluster `k`.
    pub fn parent_blocks(&self, k: usize) -> usize {
        self.clusters[k].parent.map_or(1, |p| self.clusters[p].nbodies())
    }

    pub fn body_inertia(&self, b: usize) -> SpatialInertia {
        SpatialInertia::from_params(&self.bodies[b].inertia)
    }

    /// Block-diagonal inertia of the bodies of cluster `k`.
    pub fn cluster_inertia(&self, k: usize) -> DMatrix<f64> {
        let c = &self.clusters[k];
        let mut m = DMatrix::zeros(6 * c.nbodies(), 6 * c.nbodies());
        for (l, &b) in c.bodies.iter().enumerate() {
            m.view_mut((6 * l, 6 * l), (6, 6)).copy_from(&self.body_inertia(b).to_matrix());
        }
        m
    }

    /// Stacked parameters `θ ∈ ℝ^{10 N_B}` ordered by body.
    pub fn theta(&self) -> DVector<f64> {
        DVector::from_iterator(10 * self.bodies.len(), self.bodies.iter().flat_map(|b| b.inertia.0))
    }

    /// Copy of the model with parameters replaced by `theta`.
    pub fn with_theta(&self, theta: &DVector<f64>) -> Result<Model> {
        if theta.len() != 10 * self.bodies.len() {
            return Err(Error::Shape(format!("θ has {} entries, expected {}", theta.len(), 10 * self.bodies.len())));
        }
        let mut m = self.clone();
        for (b, body) in m.bodies.iter_mut().enumerate() {
            body.inertia = InertialParams(std::array::from_fn(|i| theta[10 * b + i]));
        }
        Ok(m)
    }

    pub fn neutral_config(&self) -> DVector<f64> {
        let mut q = DVector::zeros(self.nq);
        for c in &self.clusters {
            if let ClusterJoint::Single(j) = &c.joint {
                q.rows_mut(c.q_offset, c.nq()).copy_from_slice(&j.neutral());
            }
        }
        q
    }

    pub fn neutral_state(&self) -> ConfigState {
        ConfigState { q: self.neutral_config(), v: DVector::zeros(self.nv) }
    }

    pub fn normalize_config(&self, q: &mut DVector<f64>) {
        for c in &self.clusters {
            if let ClusterJoint::Single(j) = &c.joint {
                j.normalize(&mut q.as_mut_slice()[c.q_offset..c.q_offset + c.nq()]);
            }
        }
    }

    pub fn check_state(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<()> {
        if q.len() != self.nq || v.len() != self.nv {
            return Err(Error::InvalidConfig(format!("state has (nq, nv) = ({}, {}), model expects ({}, {})", q.len(), v.len(), self.nq, self.nv)));
        }
        for c in &self.clusters {
            if let ClusterJoint::Single(j) = &c.joint {
                let err = j.quaternion_norm_error(&q.as_slice()[c.q_offset..c.q_offset + c.nq()]);
                if err > 1e-10 {
                    return Err(Error::InvalidConfig(format!("quaternion norm off by {err:e}")));
                }
            }
        }
        if q.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("non-finite state entry".into()));
        }
        Ok(())
    }

    /// `q ⊕ v̄·dt` along the exponential map; quaternions renormalized.
    pub fn integrate_config(&self, q: &DVector<f64>, v: &DVector<f64>, dt: f64) -> DVector<f64> {
        let mut out = q.clone();
        for c in &self.clusters {
            let qs = &q.as_slice()[c.q_offset..c.q_offset + c.nq()];
            let vs = &v.as_slice()[c.v_offset..c.v_offset + c.nv()];
            let o = &mut out.as_mut_slice()[c.q_offset..c.q_offset + c.nq()];
            match &c.joint {
                ClusterJoint::Single(j) => {
                    j.integrate(qs, vs, dt, o);
                    j.normalize(o);
                }
                ClusterJoint::Transmission { .. } => {
                    for (oi, (qi, vi)) in o.iter_mut().zip(qs.iter().zip(vs)) {
                        *oi = qi + vi * dt;
                    }
                }
            }
        }
        out
    }

    /// Per-joint [`JointModel::local_rate`]; identity for coordinate joints.
    pub fn local_rate(&self, u: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        let mut out = xi.clone();
        for c in &self.clusters {
            if let ClusterJoint::Single(j) = &c.joint {
                let r = c.v_offset..c.v_offset + c.nv();
                j.local_rate(&u.as_slice()[r.clone()], &xi.as_slice()[r.clone()], &mut out.as_mut_slice()[r]);
            }
        }
        out
    }

    /// Integrates a whole state by one step of length `dt` with constant speeds.
    pub fn integrate_state(&self, state: &ConfigState, dt: f64) -> Result<ConfigState> {
        if dt <= 0.0 {
            return Err(Error::InvalidConfig(format!("step must be positive, got {dt}")));
        }
        Ok(ConfigState { q: self.integrate_config(&state.q, &state.v, dt), v: state.v.clone() })
    }

    /// `q̇` induced by speeds `v̄`.
    pub fn config_rate(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.nq);
        for c in &self.clusters {
            let qs = &q.as_slice()[c.q_offset..c.q_offset + c.nq()];
            let vs = &v.as_slice()[c.v_offset..c.v_offset + c.nv()];
            let o = &mut out.as_mut_slice()[c.q_offset..c.q_offset + c.nq()];
            match &c.joint {
                ClusterJoint::Single(j) => j.config_rate(qs, vs, o),
                ClusterJoint::Transmission { .. } => o.copy_from_slice(vs),
            }
        }
        out
    }

    /// World-to-body transforms `ᵇX_0` for every body.
    pub fn body_world_transforms(&self, q: &DVector<f64>) -> Result<Vec<SpatialTransform>> {
        let mut world = vec![SpatialTransform::identity(); self.bodies.len()];
        for (k, c) in self.clusters.iter().enumerate() {
            let xs = c.joint.body_transforms(self.cluster_q(k, q.as_slice()))?;
            for (l, &b) in c.bodies.iter().enumerate() {
                world[b] = match self.bodies[b].parent {
                    None => xs[l],
                    Some(p) => xs[l].compose(&world[p]),
                };
            }
        }
        Ok(world)
    }

    /// Dissolves every cluster into its spanning tree.
    pub fn spanning_tree(&self) -> Result<SpanningTree> {
        let model = Model::new(format!("{}-spanning", self.name), self.bodies.clone(), Vec::new(), self.gravity)?;
        let mut map = DMatrix::zeros(model.nv, self.nv);
        for (k, c) in self.clusters.iter().enumerate() {
            match &c.joint {
                ClusterJoint::Single(_) => {
                    let b = c.bodies[0];
                    let sc = &model.clusters[model.body_cluster[b].0];
                    map.view_mut((sc.v_offset, c.v_offset), (c.nv(), c.nv())).fill_with_identity();
                }
                ClusterJoint::Transmission { ratio, .. } => {
                    for (l, &b) in c.bodies.iter().enumerate() {
                        let sc = &model.clusters[model.body_cluster[b].0];
                        for col in 0..c.nv() {
                            map[(sc.v_offset, self.clusters[k].v_offset + col)] = ratio[(l, col)];
                        }
                    }
                }
            }
        }
        Ok(SpanningTree { model, velocity_map: map })
    }

    /// Spanning-tree configuration for cluster coordinates `q`.
    pub fn spanning_config(&self, spanning: &Model, q: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(spanning.nq);
        for (k, c) in self.clusters.iter().enumerate() {
            let qs = self.cluster_q(k, q.as_slice());
            match &c.joint {
                ClusterJoint::Single(_) => {
                    let sc = &spanning.clusters[spanning.body_cluster[c.bodies[0]].0];
                    out.rows_mut(sc.q_offset, sc.nq()).copy_from_slice(qs);
                }
                ClusterJoint::Transmission { ratio, .. } => {
                    let y = ratio * DVector::from_column_slice(qs);
                    for (l, &b) in c.bodies.iter().enumerate() {
                        let sc = &spanning.clusters[spanning.body_cluster[b].0];
                        out[sc.q_offset] = y[l];
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn link(name: &str, parent: Option<usize>, joint: JointModel) -> Body {
        Body { name: name.into(), parent, joint, inertia: InertialParams::point_mass(1.0, &Vector3::new(0.5, 0.0, 0.0)) }
    }

    fn gravity() -> Vector6<f64> {
        Vector6::from_row_slice(&DEFAULT_GRAVITY)
    }

    #[test]
    fn rejects_empty_and_unordered() {
        assert!(Model::new("e", vec![], vec![], gravity()).is_err());
        let rz = JointModel::revolute(Vector3::z());
        let bodies = vec![link("a", Some(1), rz), link("b", None, rz)];
        assert!(matches!(Model::new("bad", bodies, vec![], gravity()), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_rank_deficient_transmission() {
        let rz = JointModel::revolute(Vector3::z());
        let bodies = vec![link("a", None, rz), link("b", Some(0), rz)];
        let spec = ClusterSpec { name: "c".into(), bodies: vec![0, 1], transmission: DMatrix::zeros(2, 1) };
        assert!(Model::new("bad", bodies, vec![spec], gravity()).is_err());
    }

    #[test]
    fn cluster_tree_structure() {
        let rz = JointModel::revolute(Vector3::z());
        let bodies = vec![link("a", None, rz), link("b", Some(0), rz), link("c", Some(1), rz), link("d", Some(2), rz)];
        let spec = ClusterSpec { name: "gear".into(), bodies: vec![1, 2], transmission: DMatrix::from_column_slice(2, 1, &[1.0, 2.0]) };
        let m = Model::new("g", bodies, vec![spec], gravity()).unwrap();
        assert_eq!(m.nclusters(), 3);
        assert_eq!(m.parent_array(), vec![0, 1, 2]);
        assert_eq!(m.nv(), 3);
        assert_eq!(m.n_maximal(), 24);
        assert_eq!(m.clusters()[2].links, vec![BodyLink::External(1)]);
        assert!(m.is_ancestor(0, 2) && !m.is_ancestor(2, 0));
        let st = m.spanning_tree().unwrap();
        assert_eq!(st.model.nv(), 4);
        assert_eq!(st.velocity_map[(2, 1)], 2.0);
    }

    #[test]
    fn integrate_is_exact_for_linear_coordinates() {
        let rz = JointModel::revolute(Vector3::z());
        let m = Model::new("c", vec![link("a", None, rz), link("b", Some(0), rz)], vec![], gravity()).unwrap();
        let q = DVector::from_vec(vec![0.1, -0.2]);
        let v = DVector::from_vec(vec![0.7, 1.1]);
        let two_half = m.integrate_config(&m.integrate_config(&q, &v, 0.05), &v, 0.05);
        let one = m.integrate_config(&q, &v, 0.1);
        assert!((two_half - one).amax() < 1e-15);
        assert_eq!(m.integrate_config(&q, &DVector::zeros(2), 0.1), q);
        assert!(m.integrate_state(&ConfigState { q, v }, 0.0).is_err());
    }
}
