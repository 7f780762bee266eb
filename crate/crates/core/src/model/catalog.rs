//! Models shipped with the library.

use nalgebra::DMatrix;

use super::{model_from_json, ClusterSpec, Model};
use crate::error::{Error, Result};

const BUNDLED: &[(&str, &str)] = &[
    ("point_mass", include_str!("../../models/point_mass.json")),
    ("pendulum", include_str!("../../models/pendulum.json")),
    ("planar2r", include_str!("../../models/planar2r.json")),
    ("arm6", include_str!("../../models/arm6.json")),
    ("free_tree", include_str!("../../models/free_tree.json")),
    ("tree4", include_str!("../../models/tree4.json")),
    ("geared_pair", include_str!("../../models/geared_pair.json")),
    ("belt_two_link", include_str!("../../models/belt_two_link.json")),
];

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

/// Loads a bundled model. A trailing `.json` is accepted.
pub fn bundled_model(name: &str) -> Result<Model> {
    let key = name.strip_suffix(".json").unwrap_or(name);
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == key)
        .ok_or_else(|| Error::InvalidConfig(format!("no bundled model '{name}' (have: {})", bundled_names().join(", "))))?;
    model_from_json(text)
}

/// Two serial one-DoF joints where the second turns `ratio` times as fast
/// as the first. `first` is the 0-based index of the driving body.
pub fn geared_pair_cluster(first: usize, ratio: f64) -> ClusterSpec {
    ClusterSpec { name: "geared pair".into(), bodies: vec![first, first + 1], transmission: DMatrix::from_column_slice(2, 1, &[1.0, ratio]) }
}

/// Two serial links driven from the base through belts, so the distal
/// link keeps its absolute angle when the proximal one moves.
pub fn parallel_belt_cluster(first: usize) -> ClusterSpec {
    ClusterSpec { name: "parallel belt".into(), bodies: vec![first, first + 1], transmission: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 1.0]) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{load_model, save_model, BodyLink};

    #[test]
    fn every_bundled_model_loads_and_round_trips() {
        let dir = std::env::temp_dir().join(format!("coriolis-roundtrip-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        for name in bundled_names() {
            let m = bundled_model(name).unwrap();
            let path = dir.join(format!("{name}.json"));
            save_model(&m, &path).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(back, m, "{name}");
            for b in back.bodies() {
                assert_eq!(b.inertia.0.map(f64::to_bits), m.bodies()[0..].iter().find(|x| x.name == b.name).unwrap().inertia.0.map(f64::to_bits));
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn point_mass_dimensions() {
        let m = bundled_model("point_mass.json").unwrap();
        assert_eq!((m.n_maximal(), m.nv()), (6, 3));
    }

    #[test]
    fn tree4_parent_array() {
        let m = bundled_model("tree4").unwrap();
        assert_eq!(m.parent_array(), vec![0, 1, 1, 3]);
    }

    #[test]
    fn cluster_models_have_two_body_clusters() {
        let g = bundled_model("geared_pair").unwrap();
        assert_eq!(g.nclusters(), 3);
        assert_eq!(g.clusters()[1].links, vec![BodyLink::External(0), BodyLink::Internal(0)]);
        assert_eq!(g.nv(), 3);
        let b = bundled_model("belt_two_link").unwrap();
        assert_eq!((b.nclusters(), b.nv()), (3, 4));
        assert_eq!(geared_pair_cluster(1, 2.0).transmission, g.cluster_specs()[0].transmission);
        assert_eq!(parallel_belt_cluster(1).transmission, b.cluster_specs()[0].transmission);
    }

    #[test]
    fn unknown_name_is_an_error() {
        assert!(bundled_model("nope").is_err());
    }
}
