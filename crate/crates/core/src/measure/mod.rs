//! Finite atomic approximations of Borel measures on the domain.
//!
//! Every measure is a list of weighted point masses. Integrals of P1
//! functions against a measure are therefore exact sums of point values,
//! which is all the weak forms need.

mod growth;
mod ifs;
mod log_cantor;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use growth::{fit_growth_exponent, geometric_radii, growth_setup, max_growth_ratio, sample_centers, GrowthReport};
pub use ifs::{check_open_set_condition, natural_measure, similarity_dimension, IfsSpec, OscCertificate, Similarity, MAX_ATOMS};
pub use log_cantor::{log_cantor_measure, log_cantor_radii, LogCantorTree, TreePoint};

use crate::error::{Error, Result};
use crate::mesh::{dist, FeFunction, Mesh, Point, PointLocator};
use crate::numeric::compensated_sum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Lebesgue,
    Ifs { depth: usize },
    LogCantor { level: usize, q: f64, r0: f64, total_mass: f64 },
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: Point,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
    total_mass: f64,
    provenance: Provenance,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Atom>, provenance: Provenance) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("measure has no atoms".into()));
        }
        if let Some(a) = atoms.iter().find(|a| !(a.w > 0.0 && a.w.is_finite())) {
            return Err(Error::InvalidMeasure(format!("atom weight must be positive, got {}", a.w)));
        }
        if atoms.iter().any(|a| !(a.x[0].is_finite() && a.x[1].is_finite())) {
            return Err(Error::InvalidMeasure("non-finite atom location".into()));
        }
        let total_mass = compensated_sum(atoms.iter().map(|a| a.w));
        Ok(DiscreteMeasure { atoms, total_mass, provenance })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn centroid(&self) -> Point {
        let m = self.total_mass;
        [
            compensated_sum(self.atoms.iter().map(|a| a.w * a.x[0])) / m,
            compensated_sum(self.atoms.iter().map(|a| a.w * a.x[1])) / m,
        ]
    }

    /// CSV `x,y,w`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,w\n");
        for a in &self.atoms {
            let _ = writeln!(s, "{:?},{:?},{:?}", a.x[0], a.x[1], a.w);
        }
        s
    }

    /// JSON header accompanying the CSV export.
    pub fn header_json(&self) -> serde_json::Value {
        serde_json::json!({
            "provenance": self.provenance,
            "total_mass": self.total_mass,
            "atoms": self.atoms.len(),
        })
    }

    pub fn from_csv(text: &str, provenance: Provenance) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "x,y,w" => {}
            _ => return Err(Error::Parse { line: 1, msg: "expected header `x,y,w`".into() }),
        }
        let mut atoms = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: std::result::Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
            match f {
                Ok(v) if v.len() == 3 => atoms.push(Atom { x: [v[0], v[1]], w: v[2] }),
                _ => return Err(Error::Parse { line: i + 1, msg: "expected `x,y,w`".into() }),
            }
        }
        DiscreteMeasure::new(atoms, provenance)
    }
}

/// Closed-ball mass `μ(B(center, r))`.
pub fn ball_mass(mu: &DiscreteMeasure, center: Point, r: f64) -> f64 {
    compensated_sum(mu.atoms.iter().filter(|a| dist(a.x, center) <= r).map(|a| a.w))
}

/// One atom per triangle at its barycenter, weighted by the element area.
pub fn lebesgue_measure(mesh: &Mesh) -> DiscreteMeasure {
    let atoms: Vec<Atom> = (0..mesh.num_triangles())
        .map(|t| Atom { x: mesh.barycenter(t), w: mesh.element_areas()[t] })
        .collect();
    DiscreteMeasure::new(atoms, Provenance::Lebesgue).expect("mesh areas are positive")
}

/// Measure atoms expressed in the P1 basis of a mesh.
#[derive(Debug, Clone)]
pub struct AtomMap {
    mesh_id: u64,
    verts: Vec<[usize; 3]>,
    bary: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl AtomMap {
    /// Locates every atom. Atoms outside the closed domain are rejected.
    pub fn new(mesh: &Mesh, mu: &DiscreteMeasure) -> Result<Self> {
        let locator = PointLocator::new(mesh);
        let mut verts = Vec::with_capacity(mu.len());
        let mut bary = Vec::with_capacity(mu.len());
        for (k, a) in mu.atoms().iter().enumerate() {
            let (t, b) = locator.locate(mesh, a.x).ok_or_else(|| {
                Error::InvalidMeasure(format!("atom {k} at ({}, {}) lies outside the mesh", a.x[0], a.x[1]))
            })?;
            verts.push(mesh.triangles()[t]);
            bary.push(b);
        }
        Ok(AtomMap { mesh_id: mesh.id(), verts, bary, weights: mu.atoms().iter().map(|a| a.w).collect() })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn check(&self, u: &FeFunction) -> Result<()> {
        if u.mesh_id() != self.mesh_id {
            return Err(Error::MeshMismatch);
        }
        Ok(())
    }

    /// Values of the P1 function with nodal `coeffs` at every atom.
    pub fn eval(&self, coeffs: &[f64]) -> Vec<f64> {
        self.verts
            .iter()
            .zip(&self.bary)
            .map(|(v, b)| b[0] * coeffs[v[0]] + b[1] * coeffs[v[1]] + b[2] * coeffs[v[2]])
            .collect()
    }

    /// Nodal loads `Σ_a w_a g_a φ_i(a)` for per-atom samples `g`.
    pub fn load(&self, g: &[f64], num_vertices: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_vertices];
        for ((v, b), (w, x)) in self.verts.iter().zip(&self.bary).zip(self.weights.iter().zip(g)) {
            for k in 0..3 {
                out[v[k]] += w * x * b[k];
            }
        }
        out
    }

    /// `(vertex, vertex, value)` triplets of `Σ_a c_a φ_i(a) φ_j(a)`.
    pub fn weighted_outer<'a>(&'a self, c: &'a [f64]) -> impl Iterator<Item = (usize, usize, f64)> + 'a {
        self.verts.iter().zip(&self.bary).zip(c).flat_map(|((v, b), &ca)| {
            (0..9).map(move |k| {
                let (i, j) = (k / 3, k % 3);
                (v[i], v[j], ca * b[i] * b[j])
            })
        })
    }

    /// `Σ_a w_a |u(a)|^p`.
    pub fn p_mass(&self, coeffs: &[f64], p: f64) -> f64 {
        let vals = self.eval(coeffs);
        compensated_sum(self.weights.iter().zip(&vals).map(|(w, v)| w * v.abs().powf(p)))
    }
}

/// Warns when some atom has no neighbour within `h/2`, i.e. the measure
/// is coarser than the finite-element space can resolve.
pub fn coupling_warning(mesh: &Mesh, mu: &DiscreteMeasure) -> Option<String> {
    if mu.len() < 2 {
        return None;
    }
    let half_h = 0.5 * mesh.h();
    let (lo, _) = mesh.bounding_box();
    let key = |x: Point| (((x[0] - lo[0]) / half_h).floor() as i64, ((x[1] - lo[1]) / half_h).floor() as i64);
    let mut grid: std::collections::HashMap<(i64, i64), Vec<usize>> = std::collections::HashMap::new();
    for (k, a) in mu.atoms().iter().enumerate() {
        grid.entry(key(a.x)).or_default().push(k);
    }
    let isolated = mu
        .atoms()
        .iter()
        .enumerate()
        .filter(|(k, a)| {
            let (ci, cj) = key(a.x);
            !(-1..=1).any(|di| {
                (-1..=1).any(|dj| {
                    grid.get(&(ci + di, cj + dj))
                        .is_some_and(|v| v.iter().any(|&m| m != *k && dist(mu.atoms()[m].x, a.x) <= half_h))
                })
            })
        })
        .count();
    (isolated > 0).then(|| {
        format!("{isolated} of {} atoms have no neighbour within h/2 = {half_h:.3e}; refine the measure", mu.len())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_uniform_mesh, Domain};

    #[test]
    fn lebesgue_examples() {
        let m = build_uniform_mesh(&Domain::UnitSquare, 2).unwrap();
        let mu = lebesgue_measure(&m);
        assert_eq!(mu.len(), 8);
        assert!((mu.total_mass() - 1.0).abs() < 1e-15);
        let t = build_uniform_mesh(&Domain::UnitTriangle, 9).unwrap();
        let mt = lebesgue_measure(&t);
        assert!((mt.total_mass() - 3f64.sqrt() / 4.0).abs() < 1e-12);
        assert_eq!(mt.total_mass(), t.total_area());
    }

    #[test]
    fn ball_mass_limits() {
        let m = build_uniform_mesh(&Domain::UnitSquare, 4).unwrap();
        let mu = lebesgue_measure(&m);
        let c = mu.centroid();
        assert!((ball_mass(&mu, c, 1.0) - mu.total_mass()).abs() < 1e-15);
        assert_eq!(ball_mass(&mu, [5.0, 5.0], 0.1), 0.0);
    }

    #[test]
    fn closed_ball_counts_sphere() {
        let mu = DiscreteMeasure::new(vec![Atom { x: [1.0, 0.0], w: 2.0 }], Provenance::Custom).unwrap();
        assert_eq!(ball_mass(&mu, [0.0, 0.0], 1.0), 2.0);
    }

    #[test]
    fn rejects_bad_atoms() {
        assert!(DiscreteMeasure::new(vec![], Provenance::Custom).is_err());
        assert!(DiscreteMeasure::new(vec![Atom { x: [0.0, 0.0], w: 0.0 }], Provenance::Custom).is_err());
        let m = build_uniform_mesh(&Domain::UnitSquare, 4).unwrap();
        let outside = DiscreteMeasure::new(vec![Atom { x: [1.5, 0.5], w: 1.0 }], Provenance::Custom).unwrap();
        assert!(AtomMap::new(&m, &outside).is_err());
    }

    #[test]
    fn atom_map_is_exact_for_linear_functions() {
        let m = build_uniform_mesh(&Domain::UnitTriangle, 6).unwrap();
        let mu = DiscreteMeasure::new(
            vec![Atom { x: [0.3, 0.2], w: 1.0 }, Atom { x: [0.5, 0.6], w: 0.5 }],
            Provenance::Custom,
        )
        .unwrap();
        let map = AtomMap::new(&m, &mu).unwrap();
        let u = FeFunction::interpolate(&m, |p| 2.0 * p[0] - p[1] + 0.25);
        let vals = map.eval(&u.coeffs);
        assert!((vals[0] - (0.6 - 0.2 + 0.25)).abs() < 1e-12);
        assert!((vals[1] - (1.0 - 0.6 + 0.25)).abs() < 1e-12);
        let loads = map.load(&[1.0, 1.0], m.num_vertices());
        assert!((loads.iter().sum::<f64>() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn csv_roundtrip() {
        let m = build_uniform_mesh(&Domain::UnitSquare, 3).unwrap();
        let mu = lebesgue_measure(&m);
        let back = DiscreteMeasure::from_csv(&mu.to_csv(), Provenance::Lebesgue).unwrap();
        assert_eq!(back, mu);
    }

    #[test]
    fn coupling_rule() {
        let m = build_uniform_mesh(&Domain::UnitSquare, 8).unwrap();
        assert!(coupling_warning(&m, &lebesgue_measure(&m)).is_none());
        let sparse = DiscreteMeasure::new(
            vec![Atom { x: [0.2, 0.2], w: 1.0 }, Atom { x: [0.8, 0.8], w: 1.0 }],
            Provenance::Custom,
        )
        .unwrap();
        assert!(coupling_warning(&m, &sparse).is_some());
    }
}
