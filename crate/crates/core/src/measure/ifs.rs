use serde::{Deserialize, Serialize};

use super::{Atom, DiscreteMeasure, Provenance};
use crate::error::{Error, Result};
use crate::mesh::{Point, Polygon};
use crate::numeric::compensated_sum;

pub const MAX_ATOMS: f64 = 1e7;

/// `x ↦ r R(θ) F x + t`, with `F` the reflection across the x-axis when
/// `reflect` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub ratio: f64,
    pub angle: f64,
    pub translation: Point,
    pub reflect: bool,
}

impl Similarity {
    pub fn scaling(ratio: f64, translation: Point) -> Self {
        Similarity { ratio, angle: 0.0, translation, reflect: false }
    }

    pub fn apply(&self, x: Point) -> Point {
        let y = if self.reflect { -x[1] } else { x[1] };
        let (s, c) = self.angle.sin_cos();
        [
            self.ratio * (c * x[0] - s * y) + self.translation[0],
            self.ratio * (s * x[0] + c * y) + self.translation[1],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfsSpec {
    maps: Vec<Similarity>,
    probabilities: Vec<f64>,
}

impl IfsSpec {
    pub fn new(maps: Vec<Similarity>, probabilities: Vec<f64>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidMeasure("IFS needs at least one map".into()));
        }
        if maps.len() != probabilities.len() {
            return Err(Error::DimensionMismatch { expected: maps.len(), got: probabilities.len() });
        }
        if let Some(m) = maps.iter().find(|m| !(m.ratio > 0.0 && m.ratio < 1.0)) {
            return Err(Error::InvalidMeasure(format!("similarity ratio must lie in (0,1), got {}", m.ratio)));
        }
        if maps.iter().any(|m| !m.angle.is_finite() || !m.translation.iter().all(|t| t.is_finite())) {
            return Err(Error::InvalidMeasure("non-finite map parameter".into()));
        }
        if let Some(p) = probabilities.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
            return Err(Error::InvalidMeasure(format!("probability must lie in [0,1], got {p}")));
        }
        let total = compensated_sum(probabilities.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("probabilities sum to {total}, not 1")));
        }
        Ok(IfsSpec { maps, probabilities })
    }

    /// Equal-probability IFS.
    pub fn uniform(maps: Vec<Similarity>) -> Result<Self> {
        let n = maps.len();
        Self::new(maps, vec![1.0 / n as f64; n])
    }

    /// Sierpinski triangle on the unit equilateral triangle, `p_i = 1/3`.
    pub fn sierpinski() -> Self {
        let corners = Polygon::unit_triangle();
        let maps = corners
            .vertices()
            .iter()
            .map(|c| Similarity::scaling(0.5, [0.5 * c[0], 0.5 * c[1]]))
            .collect();
        Self::uniform(maps).expect("valid built-in IFS")
    }

    /// Natural probabilities `p_i = r_i^s` at the similarity dimension.
    pub fn with_natural_probabilities(maps: Vec<Similarity>) -> Result<Self> {
        let provisional = IfsSpec { maps: maps.clone(), probabilities: vec![0.0; maps.len()] };
        let s = similarity_dimension(&provisional);
        let mut probs: Vec<f64> = maps.iter().map(|m| m.ratio.powf(s)).collect();
        let total = compensated_sum(probs.iter().copied());
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(maps, probs)
    }

    pub fn maps(&self) -> &[Similarity] {
        &self.maps
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Fixed point of the first map; lies on the attractor.
    pub fn attractor_point(&self) -> Point {
        let mut x = [0.0, 0.0];
        for _ in 0..2000 {
            x = self.maps[0].apply(x);
        }
        x
    }

    /// Average of the maps' fixed points, a convenient interior seed for the
    /// usual gasket- and carpet-type systems.
    pub fn default_seed(&self) -> Point {
        let n = self.maps.len() as f64;
        let mut acc = [0.0, 0.0];
        for m in &self.maps {
            let mut x = [0.0, 0.0];
            for _ in 0..2000 {
                x = m.apply(x);
            }
            acc[0] += x[0] / n;
            acc[1] += x[1] / n;
        }
        acc
    }

    /// Text format: one map per line `r theta tx ty reflect p`, `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut maps = Vec::new();
        let mut probs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let perr = |m: &str| Error::Parse { line: i + 1, msg: m.to_string() };
            if f.len() != 6 {
                return Err(perr("expected `r theta tx ty reflect p`"));
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| perr(&format!("bad number `{}`", f[k])));
            let reflect = match f[4] {
                "0" | "false" => false,
                "1" | "true" => true,
                other => return Err(perr(&format!("bad reflect flag `{other}`"))),
            };
            maps.push(Similarity { ratio: num(0)?, angle: num(1)?, translation: [num(2)?, num(3)?], reflect });
            probs.push(num(5)?);
        }
        IfsSpec::new(maps, probs)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# r theta tx ty reflect p\n");
        for (m, p) in self.maps.iter().zip(&self.probabilities) {
            s.push_str(&format!(
                "{:?} {:?} {:?} {:?} {} {:?}\n",
                m.ratio,
                m.angle,
                m.translation[0],
                m.translation[1],
                u8::from(m.reflect),
                p
            ));
        }
        s
    }
}

/// Unique `s > 0` with `Σ r_i^s = 1`, by bisection.
pub fn similarity_dimension(ifs: &IfsSpec) -> f64 {
    let f = |s: f64| compensated_sum(ifs.maps.iter().map(|m| m.ratio.powf(s))) - 1.0;
    if ifs.maps.len() == 1 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscCertificate {
    pub holds: bool,
    /// Maps whose image of `U` leaves `U`.
    pub not_contained: Vec<usize>,
    /// Pairs of maps whose images of `U` overlap.
    pub overlapping: Vec<(usize, usize)>,
}

fn projection(poly: &[Point], axis: Point) -> (f64, f64) {
    poly.iter()
        .map(|v| v[0] * axis[0] + v[1] * axis[1])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

/// Separating-axis test for open convex polygons; touching boundaries do not count.
fn open_convex_overlap(a: &[Point], b: &[Point], tol: f64) -> bool {
    for poly in [a, b] {
        let n = poly.len();
        for i in 0..n {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            let axis = [q[1] - p[1], p[0] - q[0]];
            let (alo, ahi) = projection(a, axis);
            let (blo, bhi) = projection(b, axis);
            let scale = axis[0].hypot(axis[1]);
            if ahi <= blo + tol * scale || bhi <= alo + tol * scale {
                return false;
            }
        }
    }
    true
}

/// Open set condition for a convex candidate `U`: every `f_i(U) ⊂ U` and the
/// images are pairwise disjoint.
pub fn check_open_set_condition(ifs: &IfsSpec, candidate: &Polygon) -> Result<OscCertificate> {
    if !candidate.is_convex() {
        return Err(Error::InvalidDomain("open-set candidate must be convex".into()));
    }
    let tol = 1e-12 * candidate.diameter();
    let images: Vec<Vec<Point>> =
        ifs.maps.iter().map(|m| candidate.vertices().iter().map(|&v| m.apply(v)).collect()).collect();
    let not_contained: Vec<usize> = images
        .iter()
        .enumerate()
        .filter(|(_, img)| !img.iter().all(|&v| candidate.contains(v, tol)))
        .map(|(i, _)| i)
        .collect();
    let mut overlapping = Vec::new();
    for i in 0..images.len() {
        for j in i + 1..images.len() {
            if open_convex_overlap(&images[i], &images[j], tol) {
                overlapping.push((i, j));
            }
        }
    }
    Ok(OscCertificate { holds: not_contained.is_empty() && overlapping.is_empty(), not_contained, overlapping })
}

/// All `N^L` word images of `seed` with product weights. Atoms are ordered
/// lexicographically by word, first letter most significant, so the
/// cylinder of words starting with `i` is a contiguous block.
pub fn natural_measure(ifs: &IfsSpec, depth: usize, seed: Point) -> Result<DiscreteMeasure> {
    if depth == 0 {
        return Err(Error::InvalidMeasure("depth must be positive".into()));
    }
    let n = ifs.maps.len();
    let atoms = (n as f64).powi(depth as i32);
    if atoms > MAX_ATOMS {
        let max_depth = if n <= 1 { usize::MAX } else { (MAX_ATOMS.ln() / (n as f64).ln()).floor() as usize };
        return Err(Error::AtomBudget { atoms, max_depth });
    }
    let mut level: Vec<(Point, f64)> = vec![(seed, 1.0)];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(level.len() * n);
        for (m, &p) in ifs.maps.iter().zip(&ifs.probabilities) {
            for &(x, w) in &level {
                next.push((m.apply(x), p * w));
            }
        }
        level = next;
    }
    let atoms: Vec<Atom> = level.into_iter().filter(|(_, w)| *w > 0.0).map(|(x, w)| Atom { x, w }).collect();
    DiscreteMeasure::new(atoms, Provenance::Ifs { depth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::ball_mass;
    use proptest::prelude::*;

    fn dyadic(n: usize) -> IfsSpec {
        let corners = [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]];
        IfsSpec::uniform(corners[..n].iter().map(|&t| Similarity::scaling(0.5, t)).collect()).unwrap()
    }

    #[test]
    fn dimension_examples() {
        assert!((similarity_dimension(&dyadic(4)) - 2.0).abs() < 1e-12);
        assert!((similarity_dimension(&dyadic(2)) - 1.0).abs() < 1e-12);
        let s3 = similarity_dimension(&dyadic(3));
        assert!((s3 - 3f64.ln() / 2f64.ln()).abs() < 1e-12);
        assert!((s3 - 1.58496).abs() < 1e-5);
    }

    #[test]
    fn spec_validation() {
        let m = Similarity::scaling(0.5, [0.0, 0.0]);
        assert!(IfsSpec::new(vec![m, m], vec![0.5, 0.6]).is_err());
        assert!(IfsSpec::new(vec![Similarity::scaling(1.0, [0.0, 0.0])], vec![1.0]).is_err());
        assert!(IfsSpec::new(vec![m], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn osc_examples() {
        let sier = IfsSpec::sierpinski();
        let cert = check_open_set_condition(&sier, &Polygon::unit_triangle()).unwrap();
        assert!(cert.holds, "{cert:?}");
        let quad = dyadic(4);
        assert!(check_open_set_condition(&quad, &Polygon::unit_square()).unwrap().holds);
        let big = IfsSpec::uniform(vec![Similarity::scaling(0.9, [0.0, 0.0]), Similarity::scaling(0.9, [0.1, 0.1])])
            .unwrap();
        let cert = check_open_set_condition(&big, &Polygon::unit_square()).unwrap();
        assert!(!cert.holds);
        assert_eq!(cert.overlapping, vec![(0, 1)]);
        let l_shape =
            Polygon::new(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]]).unwrap();
        assert!(check_open_set_condition(&quad, &l_shape).is_err());
    }

    #[test]
    fn natural_measure_examples() {
        let sier = IfsSpec::sierpinski();
        let seed = sier.default_seed();
        let d1 = natural_measure(&sier, 1, seed).unwrap();
        assert_eq!(d1.len(), 3);
        assert!(d1.atoms().iter().zip(sier.probabilities()).all(|(a, p)| a.w == *p));
        let d5 = natural_measure(&sier, 5, seed).unwrap();
        assert_eq!(d5.len(), 243);
        assert!(d5.atoms().iter().all(|a| (a.w - 3f64.powi(-5)).abs() < 1e-18));
        assert!((d5.total_mass() - 1.0).abs() < 1e-12);
        let cyl: f64 = d5.atoms()[..81].iter().map(|a| a.w).sum();
        assert!((cyl - 1.0 / 3.0).abs() < 1e-14);
        assert!(matches!(natural_measure(&sier, 15, seed), Err(Error::AtomBudget { max_depth: 14, .. })));
    }

    #[test]
    fn cylinder_ball_mass_matches_prefix_sum() {
        let sier = IfsSpec::sierpinski();
        let mu = natural_measure(&sier, 6, sier.default_seed()).unwrap();
        // f_1(E) is the corner triangle of side 1/2; circumscribed disc of radius 1/(2√3)
        let center = [0.25, 0.25 / 3f64.sqrt()];
        let r = 0.5 / 3f64.sqrt();
        let prefix: f64 = mu.atoms()[..mu.len() / 3].iter().map(|a| a.w).sum();
        assert!((ball_mass(&mu, center, r) - prefix).abs() < 1e-12);
        assert!((prefix - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn natural_probabilities_equal_ratios() {
        let sier = IfsSpec::sierpinski();
        let nat = IfsSpec::with_natural_probabilities(sier.maps().to_vec()).unwrap();
        for (a, b) in nat.probabilities().iter().zip(sier.probabilities()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn parse_roundtrip_and_errors() {
        let text = "# gasket\n0.5 0 0 0 0 0.25\n0.5 1.5707963 0.5 0 1 0.75\n";
        let ifs = IfsSpec::parse(text).unwrap();
        assert_eq!(ifs.maps().len(), 2);
        assert!(ifs.maps()[1].reflect);
        assert_eq!(IfsSpec::parse(&ifs.to_text()).unwrap(), ifs);
        assert!(matches!(IfsSpec::parse("0.5 0 0 0 0"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn depth_refinement_conserves_cylinder_mass() {
        let ifs = IfsSpec::new(
            vec![
                Similarity::scaling(0.5, [0.0, 0.0]),
                Similarity::scaling(0.3, [0.6, 0.0]),
                Similarity::scaling(0.4, [0.2, 0.55]),
            ],
            vec![0.5, 0.2, 0.3],
        )
        .unwrap();
        let seed = [0.3, 0.3];
        let coarse = natural_measure(&ifs, 4, seed).unwrap();
        let fine = natural_measure(&ifs, 5, seed).unwrap();
        for (k, a) in coarse.atoms().iter().enumerate() {
            let children: f64 = fine.atoms()[3 * k..3 * k + 3].iter().map(|c| c.w).sum();
            assert!((children - a.w).abs() <= 1e-12 * a.w);
        }
    }

    proptest! {
        #[test]
        fn maps_are_similarities(r in 0.01f64..0.99, th in -6.3f64..6.3, tx in -2.0f64..2.0, ty in -2.0f64..2.0,
                                 reflect: bool, a in prop::array::uniform2(-3.0f64..3.0), b in prop::array::uniform2(-3.0f64..3.0)) {
            let m = Similarity { ratio: r, angle: th, translation: [tx, ty], reflect };
            let d0 = (a[0] - b[0]).hypot(a[1] - b[1]);
            let (fa, fb) = (m.apply(a), m.apply(b));
            let d1 = (fa[0] - fb[0]).hypot(fa[1] - fb[1]);
            prop_assert!((d1 - r * d0).abs() <= 1e-12 * (1.0 + d0));
        }
    }
}
