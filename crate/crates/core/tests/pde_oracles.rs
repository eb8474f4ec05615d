use std::f64::consts::PI;

use pmulap::measure::{lebesgue_measure, natural_measure, AtomMap, DiscreteMeasure, IfsSpec};
use pmulap::pde::{solve_poisson, PoissonProblem};
use pmulap::{build_uniform_mesh, dirichlet_energy, Domain, FeFunction, Mesh, SolverParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn square(n: usize) -> (Mesh, DiscreteMeasure) {
    let m = build_uniform_mesh(&Domain::UnitSquare, n).unwrap();
    let mu = lebesgue_measure(&m);
    (m, mu)
}

/// Centre value of the 5-point finite-difference solution of `-Δu = 1` on an
/// `n × n` grid of the unit square, by discrete sine expansion.
fn fd_center_value(n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let beta: Vec<f64> = (1..n)
        .map(|k| (2.0 / n as f64) * (1..n).map(|i| (k as f64 * PI * i as f64 * h).sin()).sum::<f64>())
        .collect();
    let lam = |k: usize| 4.0 / (h * h) * (k as f64 * PI * h / 2.0).sin().powi(2);
    let mut u = 0.0;
    for k in 1..n {
        for l in 1..n {
            let mode = (k as f64 * PI / 2.0).sin() * (l as f64 * PI / 2.0).sin();
            u += beta[k - 1] * beta[l - 1] * mode / (lam(k) + lam(l));
        }
    }
    u
}

fn max_coeff(u: &FeFunction) -> f64 {
    u.coeffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn fd_oracle_matches_continuum_series() {
    // continuum centre value of the torsion function is about 0.0736713
    assert!((fd_center_value(64) - 0.073671).abs() < 2e-5);
}

#[test]
fn poisson_max_matches_fd_oracle() {
    let (m, mu) = square(64);
    let f = vec![1.0; mu.len()];
    let sol = solve_poisson(&f, &mu, &m, &SolverParams::default()).unwrap();
    assert!(sol.converged);
    let oracle = fd_center_value(64);
    let got = max_coeff(&sol.u);
    assert!((got - oracle).abs() / oracle < 0.01, "{got} vs {oracle}");
}

#[test]
fn manufactured_sine_solution() {
    let (m, mu) = square(64);
    let f: Vec<f64> = mu.atoms().iter().map(|a| 2.0 * PI * PI * (PI * a.x[0]).sin() * (PI * a.x[1]).sin()).collect();
    let sol = solve_poisson(&f, &mu, &m, &SolverParams::default()).unwrap();
    let err = m
        .vertices()
        .iter()
        .zip(&sol.u.coeffs)
        .map(|(x, u)| (u - (PI * x[0]).sin() * (PI * x[1]).sin()).abs())
        .fold(0.0, f64::max);
    assert!(err <= 5e-3, "L∞ error {err}");
}

#[test]
fn homogeneity_scaling() {
    let (m, mu) = square(24);
    for p in [1.5, 1.8] {
        let params = SolverParams::new(p, 3.0).unwrap();
        let f = vec![1.0; mu.len()];
        let base = solve_poisson(&f, &mu, &m, &params).unwrap();
        let c = 3.0;
        let scaled = solve_poisson(&vec![c; mu.len()], &mu, &m, &params).unwrap();
        let k = c.powf(1.0 / (p - 1.0));
        let scale = max_coeff(&scaled.u);
        for (a, b) in base.u.coeffs.iter().zip(&scaled.u.coeffs) {
            assert!((k * a - b).abs() <= 1e-6 * scale, "p = {p}: {} vs {b}", k * a);
        }
    }
}

#[test]
fn energy_gradient_matches_finite_differences() {
    let (m, mu) = square(12);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f: Vec<f64> = (0..mu.len()).map(|_| rng.random_range(0.5..1.5)).collect();
    for p in [1.5, 2.0] {
        let params = SolverParams::new(p, 3.0).unwrap();
        let prob = PoissonProblem::new(&m, &mu, &f, &params).unwrap();
        let n = m.interior_vertices().len();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.1)).collect();
        let u = FeFunction::from_interior(&m, &x);
        let g = prob.energy_gradient(&u).unwrap();
        for _ in 0..20 {
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t = 1e-5;
            let shift = |s: f64| {
                let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + s * b).collect();
                prob.energy(&FeFunction::from_interior(&m, &y)).unwrap()
            };
            let fd = (shift(t) - shift(-t)) / (2.0 * t);
            let an: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "p = {p}: {fd} vs {an}");
        }
    }
}

#[test]
fn solution_satisfies_weak_form_tested_with_itself() {
    // ∫|∇u|^p dx = ∫ f u dμ at the minimizer
    let m = build_uniform_mesh(&Domain::UnitTriangle, 32).unwrap();
    let ifs = IfsSpec::sierpinski();
    let mu = natural_measure(&ifs, 6, ifs.default_seed()).unwrap();
    let params = SolverParams::new(1.5, 3.0).unwrap();
    let f = vec![1.0; mu.len()];
    let sol = solve_poisson(&f, &mu, &m, &params).unwrap();
    assert!(sol.converged);
    let map = AtomMap::new(&m, &mu).unwrap();
    let vals = map.eval(&sol.u.coeffs);
    let rhs: f64 = map.weights().iter().zip(&vals).map(|(w, v)| w * v).sum();
    let lhs = dirichlet_energy(&m, &sol.u, params.p).unwrap();
    assert!((lhs - rhs).abs() <= 1e-6 * rhs, "{lhs} vs {rhs}");
}

#[test]
fn unique_minimizer_from_random_starts() {
    let (m, mu) = square(20);
    let params = SolverParams::new(1.5, 3.0).unwrap();
    let f = vec![1.0; mu.len()];
    let prob = PoissonProblem::new(&m, &mu, &f, &params).unwrap();
    let n = m.interior_vertices().len();
    let sols: Vec<FeFunction> = [1u64, 2]
        .iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-0.2..0.3)).collect();
            let sol = prob.solve_from(&FeFunction::from_interior(&m, &x)).unwrap();
            assert!(sol.converged);
            sol.u
        })
        .collect();
    let gap = sols[0].coeffs.iter().zip(&sols[1].coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap <= 10.0 * params.tol_residual.max(1e-7), "gap {gap}");
}

#[test]
fn regularization_insensitivity() {
    let (m, mu) = square(20);
    let f = vec![1.0; mu.len()];
    let mut params = SolverParams::new(1.5, 3.0).unwrap();
    let a = solve_poisson(&f, &mu, &m, &params).unwrap();
    params.grad_reg = 1e-10;
    let b = solve_poisson(&f, &mu, &m, &params).unwrap();
    let scale = max_coeff(&a.u);
    let gap = a.u.coeffs.iter().zip(&b.u.coeffs).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap <= 1e-6 * scale, "gap {gap}");
}

#[test]
fn energy_history_is_monotone() {
    let m = build_uniform_mesh(&Domain::UnitTriangle, 24).unwrap();
    let ifs = IfsSpec::sierpinski();
    let mu = natural_measure(&ifs, 6, ifs.default_seed()).unwrap();
    let params = SolverParams::new(1.2, 2.0).unwrap();
    let sol = solve_poisson(&vec![1.0; mu.len()], &mu, &m, &params).unwrap();
    assert!(sol.energy_history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn forcing_length_mismatch_is_rejected() {
    let (m, mu) = square(8);
    assert!(solve_poisson(&[1.0], &mu, &m, &SolverParams::default()).is_err());
}
