//! Small shipped varieties with known dimension and degree.

use crate::error::{Error, Result};
use crate::geometry::AmbientSpace;
use crate::oracle::VarietySpec;
use crate::poly::PolySystem;

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub spec: VarietySpec,
    /// A point of the set, used as the default query center.
    pub center: Vec<f64>,
    /// Whether the set has singular points.
    pub singular: bool,
}

struct Raw {
    name: &'static str,
    description: &'static str,
    space: AmbientSpace,
    polys: &'static [&'static str],
    m: usize,
    delta: u32,
    smooth_ci: bool,
    center: &'static [f64],
    singular: bool,
}

const RAW: &[Raw] = &[
    Raw {
        name: "line2d",
        description: "the line X2 = 0 in R^2",
        space: AmbientSpace::Euclidean(2),
        polys: &["X2"],
        m: 1,
        delta: 1,
        smooth_ci: true,
        center: &[0.0, 0.0],
        singular: false,
    },
    Raw {
        name: "circle",
        description: "the unit circle in R^2",
        space: AmbientSpace::Euclidean(2),
        polys: &["X1^2 + X2^2 - 1"],
        m: 1,
        delta: 2,
        smooth_ci: true,
        center: &[1.0, 0.0],
        singular: false,
    },
    Raw {
        name: "node",
        description: "the coordinate cross X1 X2 = 0 in R^2",
        space: AmbientSpace::Euclidean(2),
        polys: &["X1*X2"],
        m: 1,
        delta: 2,
        smooth_ci: false,
        center: &[0.0, 0.0],
        singular: true,
    },
    Raw {
        name: "cusp",
        description: "the cuspidal cubic X2^2 = X1^3 in R^2",
        space: AmbientSpace::Euclidean(2),
        polys: &["X2^2 - X1^3"],
        m: 1,
        delta: 3,
        smooth_ci: false,
        center: &[0.0, 0.0],
        singular: true,
    },
    Raw {
        name: "origin",
        description: "the origin of R^2 cut out by X1 and X2",
        space: AmbientSpace::Euclidean(2),
        polys: &["X1", "X2"],
        m: 0,
        delta: 1,
        smooth_ci: true,
        center: &[0.0, 0.0],
        singular: false,
    },
    Raw {
        name: "twisted_cubic",
        description: "the twisted cubic (t, t^2, t^3) in R^3",
        space: AmbientSpace::Euclidean(3),
        polys: &["X2 - X1^2", "X3 - X1^3"],
        m: 1,
        delta: 3,
        smooth_ci: true,
        center: &[0.0, 0.0, 0.0],
        singular: false,
    },
    Raw {
        name: "great_circle",
        description: "the great circle X2 = 0 in S^2",
        space: AmbientSpace::Sphere(2),
        polys: &["X2"],
        m: 1,
        delta: 1,
        smooth_ci: true,
        center: &[1.0, 0.0, 0.0],
        singular: false,
    },
    Raw {
        name: "great_sphere",
        description: "the great 2-sphere X3 = 0 in S^3",
        space: AmbientSpace::Sphere(3),
        polys: &["X3"],
        m: 2,
        delta: 1,
        smooth_ci: true,
        center: &[1.0, 0.0, 0.0, 0.0],
        singular: false,
    },
    Raw {
        name: "antipodal_pair",
        description: "the points (±1, 0) of S^1, cut out by X1",
        space: AmbientSpace::Sphere(1),
        polys: &["X1"],
        m: 0,
        delta: 1,
        smooth_ci: true,
        center: &[1.0, 0.0],
        singular: false,
    },
];

fn build(r: &Raw) -> CorpusEntry {
    let first_var = usize::from(!r.space.is_sphere());
    let system = PolySystem::parse(r.polys, r.space.coords(), first_var).expect("corpus polynomials parse");
    CorpusEntry {
        name: r.name,
        description: r.description,
        spec: VarietySpec::new(system, r.space, r.m, r.delta, r.smooth_ci).expect("corpus entries are valid"),
        center: r.center.to_vec(),
        singular: r.singular,
    }
}

pub fn names() -> Vec<&'static str> {
    RAW.iter().map(|r| r.name).collect()
}

pub fn all() -> Vec<CorpusEntry> {
    RAW.iter().map(build).collect()
}

pub fn get(name: &str) -> Result<CorpusEntry> {
    RAW.iter()
        .find(|r| r.name == name)
        .map(build)
        .ok_or_else(|| Error::UnknownCorpus(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::jacobian_min_sv;

    #[test]
    fn every_entry_builds_and_center_lies_on_it() {
        for e in all() {
            let r = e.spec.system.eval(&e.center).unwrap();
            assert!(r.iter().all(|v| v.abs() < 1e-14), "{}", e.name);
            assert_eq!(e.spec.delta, e.spec.system.max_degree(), "{}", e.name);
        }
        assert!(get("nope").is_err());
        assert_eq!(names().len(), 9);
    }

    #[test]
    fn declared_dimension_matches_jacobian_rank() {
        // At a smooth point the rank equals the codimension in the space.
        let smooth_points: &[(&str, &[f64])] = &[
            ("line2d", &[0.3, 0.0]),
            ("circle", &[0.6, 0.8]),
            ("node", &[0.5, 0.0]),
            ("cusp", &[1.0, 1.0]),
            ("origin", &[0.0, 0.0]),
            ("twisted_cubic", &[0.5, 0.25, 0.125]),
            ("great_circle", &[0.6, 0.8, 0.0]),
            ("great_sphere", &[0.6, 0.0, 0.8, 0.0]),
            ("antipodal_pair", &[1.0, 0.0]),
        ];
        for (name, x) in smooth_points {
            let e = get(name).unwrap();
            let sphere = e.spec.space.is_sphere();
            let sv = jacobian_min_sv(&e.spec.system, x, sphere).unwrap();
            let codim = e.spec.space.dim() - e.spec.m;
            let rows = e.spec.system.len() + usize::from(sphere);
            assert_eq!(rows, codim + usize::from(sphere), "{name}");
            assert!(sv > 1e-3, "{name}: {sv}");
        }
    }
}
