use pmulap::measure::{
    ball_mass, fit_growth_exponent, growth_setup, lebesgue_measure, log_cantor_radii, natural_measure,
    similarity_dimension, IfsSpec, LogCantorTree, Similarity, TreePoint,
};
use pmulap::{build_uniform_mesh, Domain, Mesh, Polygon};
use proptest::prelude::*;

fn parallelogram(a: f64, b: f64, shear: f64) -> Polygon {
    Polygon::new(vec![[0.0, 0.0], [a, 0.0], [a + shear, b], [shear, b]]).unwrap()
}

#[test]
fn polygon_serde_validates() {
    let ok: Polygon = serde_json::from_str("[[0,0],[1,0],[0,1]]").unwrap();
    assert!((ok.area() - 0.5).abs() < 1e-15);
    let back: Polygon = serde_json::from_str(&serde_json::to_string(&ok).unwrap()).unwrap();
    assert_eq!(ok, back);
    assert!(serde_json::from_str::<Polygon>("[[0,0],[1,0]]").is_err());
    assert!(serde_json::from_str::<Polygon>("[[0,0],[1,0],[2,0]]").is_err());
    let d: Domain = serde_json::from_str("{\"polygon\":[[0,0],[2,0],[0,1]]}").unwrap();
    assert!((d.polygon().area() - 1.0).abs() < 1e-15);
    assert!(serde_json::from_str::<Domain>("{\"polygon\":[[0,0],[0,0],[0,0]]}").is_err());
}

#[test]
fn lebesgue_growth_exponent_is_two() {
    let m = build_uniform_mesh(&Domain::UnitSquare, 128).unwrap();
    let mu = lebesgue_measure(&m);
    let (c, r) = growth_setup(&mu, 128, 3).unwrap();
    let g = fit_growth_exponent(&mu, &c, &r).unwrap();
    assert!((g.fitted_exponent - 2.0).abs() <= 0.05, "{}", g.fitted_exponent);
}

#[test]
fn log_cantor_first_radius() {
    let logs = log_cantor_radii(3.0, 0.25, 2).unwrap();
    assert!((logs[1] - 2f64.powf(2.0 / 3.0) * 4f64.ln()).abs() < 1e-12);
    assert!((logs[2] - 2f64.powf(4.0 / 3.0) * 4f64.ln()).abs() < 1e-12);
    assert!(LogCantorTree::new(5.0, 2, [0.5, 0.5], 0.25).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mesh_areas_and_text_roundtrip(a in 0.2f64..3.0, b in 0.2f64..3.0, shear in -1.0f64..1.0, n in 2usize..20) {
        let poly = parallelogram(a, b, shear);
        let m = build_uniform_mesh(&Domain::Polygon(poly.clone()), n).unwrap();
        prop_assert!((m.total_area() - poly.area()).abs() <= 1e-12 * poly.area());
        prop_assert!(m.element_areas().iter().all(|&t| t > 0.0));
        let back = Mesh::from_text(&m.to_text()).unwrap();
        prop_assert_eq!(back.vertices(), m.vertices());
        prop_assert_eq!(back.triangles(), m.triangles());
        let mu = lebesgue_measure(&m);
        prop_assert!((mu.total_mass() - poly.area()).abs() <= 1e-12 * poly.area());
    }

    #[test]
    fn ball_mass_is_monotone(x in 0.0f64..1.0, y in 0.0f64..1.0, r1 in 0.0f64..0.7, dr in 0.0f64..0.7) {
        let ifs = IfsSpec::sierpinski();
        let mu = natural_measure(&ifs, 5, ifs.default_seed()).unwrap();
        let small = ball_mass(&mu, [x, y], r1);
        let large = ball_mass(&mu, [x, y], r1 + dr);
        prop_assert!(small <= large);
        prop_assert!(large <= mu.total_mass() * (1.0 + 1e-12));
        prop_assert!((ball_mass(&mu, [x, y], 10.0) - mu.total_mass()).abs() <= 1e-12);
    }

    #[test]
    fn natural_measure_conserves_mass(depth in 1usize..7, r1 in 0.1f64..0.45, r2 in 0.1f64..0.45) {
        let maps = vec![Similarity::scaling(r1, [0.0, 0.0]), Similarity::scaling(r2, [1.0 - r2, 0.0])];
        let ifs = IfsSpec::with_natural_probabilities(maps).unwrap();
        let s = similarity_dimension(&ifs);
        prop_assert!((r1.powf(s) + r2.powf(s) - 1.0).abs() <= 1e-10);
        prop_assert!((ifs.probabilities()[0] - r1.powf(s)).abs() <= 1e-10);
        let mu = natural_measure(&ifs, depth, ifs.default_seed()).unwrap();
        prop_assert!((mu.total_mass() - 1.0).abs() <= 1e-12);
        prop_assert_eq!(mu.len(), 1usize << depth);
    }

    #[test]
    fn tree_ball_masses_halve(q in 2.1f64..3.2, level in 1usize..8) {
        let tree = LogCantorTree::new(q, level, [0.5, 0.5], 0.25).unwrap();
        let leaf = TreePoint::node(vec![true; level]);
        for k in 0..level {
            prop_assert!((tree.node_mass(k + 1) - 0.5 * tree.node_mass(k)).abs() <= 1e-15 * tree.node_mass(k));
            let ball = tree.ball_mass(&leaf, tree.diameters()[k]);
            prop_assert!(ball >= tree.node_mass(k) * (1.0 - 1e-12));
        }
        let mu = tree.to_measure();
        prop_assert!((mu.total_mass() - tree.total_mass()).abs() <= 1e-12 * tree.total_mass());
    }
}
