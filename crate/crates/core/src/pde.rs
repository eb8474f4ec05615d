//! The (p,μ)-Poisson problem `-Δ_{p,μ} u = f` with zero boundary values.
//!
//! The discrete solution minimizes the strictly convex energy
//! `J(u) = (1/p) Σ_T |T| (|∇u|² + ε²)^{p/2} - Σ_a w_a u(a) f(a)` over P1
//! functions vanishing on the boundary. The minimizer is found by damped
//! Newton steps (the Hessian of the regularized p-energy as preconditioner)
//! with Armijo backtracking on `J`.

use std::fmt::Write as _;

use nalgebra_sparse::CscMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{AtomMap, DiscreteMeasure};
use crate::mesh::{element_gradient, FeFunction, Mesh};
use crate::numeric::{compensated_sum, dot, max_abs};
pub use crate::params::SolverParams;
use crate::sparse::{assemble_interior, SpdSolver};

pub(crate) const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;

/// Regularized p-energy kernels on a fixed mesh.
pub(crate) struct PEnergy<'a> {
    pub(crate) mesh: &'a Mesh,
    pub(crate) p: f64,
    pub(crate) eps: f64,
}

impl<'a> PEnergy<'a> {
    pub(crate) fn new(mesh: &'a Mesh, params: &SolverParams) -> Self {
        PEnergy { mesh, p: params.p, eps: params.grad_reg }
    }

    /// `Σ_T |T| (|∇u|² + ε²)^{p/2}`.
    pub(crate) fn numerator(&self, coeffs: &[f64]) -> f64 {
        let areas = self.mesh.element_areas();
        let half_p = 0.5 * self.p;
        compensated_sum((0..self.mesh.num_triangles()).map(|t| {
            let g = element_gradient(self.mesh, t, coeffs);
            areas[t] * (g[0] * g[0] + g[1] * g[1] + self.eps * self.eps).powf(half_p)
        }))
    }

    /// `(|g|² + ε²)^{(p-2)/2}`, with the `0·∞` limit at `g = 0, ε = 0` taken as 0.
    fn flux_coefficient(&self, g: [f64; 2]) -> f64 {
        let s = g[0] * g[0] + g[1] * g[1] + self.eps * self.eps;
        if s == 0.0 {
            0.0
        } else {
            s.powf(0.5 * self.p - 1.0)
        }
    }

    /// Vertex vector `a_p(u, φ_i) = Σ_T |T| (|∇u|²+ε²)^{(p-2)/2} ∇u·∇φ_i`.
    pub(crate) fn flux_load(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.mesh.num_vertices()];
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let g = element_gradient(self.mesh, t, coeffs);
            let c = self.mesh.element_areas()[t] * self.flux_coefficient(g);
            let gb = &self.mesh.grad_basis()[t];
            for k in 0..3 {
                out[tri[k]] += c * (g[0] * gb[k][0] + g[1] * gb[k][1]);
            }
        }
        out
    }

    /// Hessian of `(1/p) Σ_T |T| (|∇u|² + ε²)^{p/2}` on interior unknowns.
    /// Where `|∇u|² + ε²` vanishes the curvature is floored, which only
    /// affects its use as a preconditioner.
    pub(crate) fn hessian(&self, coeffs: &[f64], extra: Option<&[(usize, usize, f64)]>) -> CscMatrix<f64> {
        self.assemble_curvature(coeffs, extra, true)
    }

    /// Lagged-diffusivity matrix `Σ_T |T| (|∇u|²+ε²)^{(p-2)/2} ∇φ_i·∇φ_j`; for
    /// `p < 2` it majorizes the Hessian.
    pub(crate) fn lagged_matrix(&self, coeffs: &[f64]) -> CscMatrix<f64> {
        self.assemble_curvature(coeffs, None, false)
    }

    fn assemble_curvature(&self, coeffs: &[f64], extra: Option<&[(usize, usize, f64)]>, radial: bool) -> CscMatrix<f64> {
        let p = self.p;
        let ntri = self.mesh.num_triangles();
        let grads: Vec<[f64; 2]> = (0..ntri).map(|t| element_gradient(self.mesh, t, coeffs)).collect();
        let gmax = grads.iter().map(|g| g[0].hypot(g[1])).fold(0.0, f64::max);
        let floor = if self.eps > 0.0 { 0.0 } else { (1e-8 * gmax).max(1e-12).powi(2) };
        let mut trip = Vec::with_capacity(9 * ntri);
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let g = grads[t];
            let s = (g[0] * g[0] + g[1] * g[1] + self.eps * self.eps).max(floor);
            let a = s.powf(0.5 * p - 1.0);
            let b = if radial { (p - 2.0) * s.powf(0.5 * p - 2.0) } else { 0.0 };
            let area = self.mesh.element_areas()[t];
            let gb = &self.mesh.grad_basis()[t];
            let proj: [f64; 3] = std::array::from_fn(|k| g[0] * gb[k][0] + g[1] * gb[k][1]);
            for i in 0..3 {
                for j in 0..3 {
                    let gg = gb[i][0] * gb[j][0] + gb[i][1] * gb[j][1];
                    trip.push((tri[i], tri[j], area * (a * gg + b * proj[i] * proj[j])));
                }
            }
        }
        if let Some(extra) = extra {
            trip.extend_from_slice(extra);
        }
        assemble_interior(self.mesh, trip.into_iter())
    }
}

/// Measure, forcing and mesh bundled for repeated evaluation.
pub struct PoissonProblem<'a> {
    mesh: &'a Mesh,
    params: SolverParams,
    atoms: AtomMap,
    f_values: Vec<f64>,
}

impl<'a> PoissonProblem<'a> {
    pub fn new(mesh: &'a Mesh, mu: &DiscreteMeasure, f_values: &[f64], params: &SolverParams) -> Result<Self> {
        params.validate()?;
        if f_values.len() != mu.len() {
            return Err(Error::DimensionMismatch { expected: mu.len(), got: f_values.len() });
        }
        if f_values.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidParams("forcing contains non-finite values".into()));
        }
        Ok(PoissonProblem { mesh, params: *params, atoms: AtomMap::new(mesh, mu)?, f_values: f_values.to_vec() })
    }

    fn kernels(&self) -> PEnergy<'_> {
        PEnergy::new(self.mesh, &self.params)
    }

    fn forcing_term(&self, coeffs: &[f64]) -> f64 {
        let vals = self.atoms.eval(coeffs);
        compensated_sum(self.atoms.weights().iter().zip(&vals).zip(&self.f_values).map(|((w, u), f)| w * u * f))
    }

    fn energy_coeffs(&self, coeffs: &[f64]) -> f64 {
        self.kernels().numerator(coeffs) / self.params.p - self.forcing_term(coeffs)
    }

    /// Vertex-indexed weak-form defect `a_p(u, φ_i) - ⟨fμ, φ_i⟩`.
    fn defect(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut a = self.kernels().flux_load(coeffs);
        let l = self.atoms.load(&self.f_values, self.mesh.num_vertices());
        a.iter_mut().zip(&l).for_each(|(x, y)| *x -= y);
        a
    }

    fn interior_defect(&self, coeffs: &[f64]) -> Vec<f64> {
        let d = self.defect(coeffs);
        self.mesh.interior_vertices().iter().map(|&v| d[v]).collect()
    }

    pub fn energy(&self, u: &FeFunction) -> Result<f64> {
        u.check(self.mesh)?;
        Ok(self.energy_coeffs(&u.coeffs))
    }

    /// Gradient of the energy with respect to the interior nodal values.
    pub fn energy_gradient(&self, u: &FeFunction) -> Result<Vec<f64>> {
        u.check(self.mesh)?;
        Ok(self.interior_defect(&u.coeffs))
    }

    pub fn weak_residual(&self, u: &FeFunction) -> Result<f64> {
        u.check(self.mesh)?;
        Ok(max_abs(&self.interior_defect(&u.coeffs)))
    }

    /// Interior nodal loads `⟨fμ, φ_i⟩`.
    pub fn loads(&self) -> Vec<f64> {
        let l = self.atoms.load(&self.f_values, self.mesh.num_vertices());
        self.mesh.interior_vertices().iter().map(|&v| l[v]).collect()
    }

    pub fn solve(&self) -> Result<PoissonSolution> {
        self.solve_from(&FeFunction::zeros(self.mesh))
    }

    pub fn solve_from(&self, initial: &FeFunction) -> Result<PoissonSolution> {
        initial.check(self.mesh)?;
        let mesh = self.mesh;
        let params = &self.params;
        let mut x = initial.interior_values(mesh);
        let to_coeffs = |dofs: &[f64]| FeFunction::from_interior(mesh, dofs).coeffs;
        let mut coeffs = to_coeffs(&x);
        let mut energy = self.energy_coeffs(&coeffs);
        let mut grad = self.interior_defect(&coeffs);
        let mut residual = max_abs(&grad);
        let mut history = vec![energy];
        let mut notes = params.diagnostics();
        if !energy.is_finite() {
            return Err(Error::Numerical("initial energy is not finite".into()));
        }
        let kernels = self.kernels();
        // p = 2 has a constant Hessian
        let fixed = if params.p == 2.0 { Some(SpdSolver::factor(&kernels.hessian(&coeffs, None))?) } else { None };
        let mut iterations = 0;
        let mut converged = residual < params.tol_residual;
        while !converged && iterations < params.max_iter {
            iterations += 1;
            let search = |dir: &[f64], slope: f64| -> Result<Option<(Vec<f64>, Vec<f64>, f64, f64)>> {
                let mut t = 1.0;
                loop {
                    let trial: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + t * d).collect();
                    let trial_coeffs = to_coeffs(&trial);
                    let e = self.energy_coeffs(&trial_coeffs);
                    if e.is_nan() {
                        return Err(Error::Numerical(format!(
                            "energy evaluated to NaN in line search (iteration {iterations}, step {t:e})"
                        )));
                    }
                    if e <= energy + ARMIJO_C * t * slope {
                        return Ok(Some((trial, trial_coeffs, e, t)));
                    }
                    t *= 0.5;
                    if t < MIN_STEP {
                        return Ok(None);
                    }
                }
            };
            let descent = |solver: Option<SpdSolver>| {
                let mut dir: Vec<f64> = match solver {
                    Some(s) => s.solve(&grad),
                    None => grad.clone(),
                };
                dir.iter_mut().for_each(|d| *d = -*d);
                let mut slope = dot(&grad, &dir);
                if !(slope < 0.0) || dir.iter().any(|d| !d.is_finite()) {
                    dir = grad.iter().map(|g| -g).collect();
                    slope = -dot(&grad, &grad);
                }
                (dir, slope)
            };
            let (dir, slope) = match &fixed {
                Some(s) => {
                    let mut d: Vec<f64> = s.solve(&grad).iter().map(|v| -v).collect();
                    let mut sl = dot(&grad, &d);
                    if !(sl < 0.0) {
                        d = grad.iter().map(|g| -g).collect();
                        sl = -dot(&grad, &grad);
                    }
                    (d, sl)
                }
                None => descent(SpdSolver::factor(&kernels.hessian(&coeffs, None)).ok()),
            };
            let mut accepted = search(&dir, slope)?;
            // decrease achieved relative to the quadratic model t·slope·(1 - t/2)
            let poor = |a: &(Vec<f64>, Vec<f64>, f64, f64)| (energy - a.2) < 0.25 * -slope * a.3 * (1.0 - 0.5 * a.3);
            // p < 2: fall back on the majorizing step when the Newton model is poor
            if fixed.is_none() && params.p < 2.0 && accepted.as_ref().is_none_or(poor) {
                let (dir, slope) = descent(SpdSolver::factor(&kernels.lagged_matrix(&coeffs)).ok());
                if let Some(b) = search(&dir, slope)? {
                    if accepted.as_ref().is_none_or(|a| b.2 < a.2) {
                        accepted = Some(b);
                    }
                }
            }
            let accepted = accepted.map(|(a, b, c, _)| (a, b, c));
            let Some((trial, trial_coeffs, e)) = accepted else {
                notes.push(format!("line search stalled at iteration {iterations}"));
                break;
            };
            assert!(e <= energy, "energy increased in an accepted step");
            let decrease = (energy - e) / e.abs().max(f64::MIN_POSITIVE);
            x = trial;
            coeffs = trial_coeffs;
            energy = e;
            history.push(e);
            grad = self.interior_defect(&coeffs);
            residual = max_abs(&grad);
            converged = decrease < params.tol_energy && residual < params.tol_residual;
        }
        if !converged && residual < params.tol_residual {
            converged = true;
        }
        if !converged {
            notes.push(format!("not converged: residual {residual:e} after {iterations} iterations"));
        }
        Ok(PoissonSolution {
            u: FeFunction::from_interior(mesh, &x),
            iterations,
            final_energy: energy,
            residual_norm: residual,
            converged,
            energy_history: history,
            notes,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub u: FeFunction,
    pub iterations: usize,
    pub final_energy: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub energy_history: Vec<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoissonDiagnostics {
    pub iterations: usize,
    pub final_energy: f64,
    pub residual: f64,
    pub converged: bool,
    pub energies: Vec<f64>,
    pub notes: Vec<String>,
}

impl PoissonSolution {
    pub fn diagnostics(&self) -> PoissonDiagnostics {
        PoissonDiagnostics {
            iterations: self.iterations,
            final_energy: self.final_energy,
            residual: self.residual_norm,
            converged: self.converged,
            energies: self.energy_history.clone(),
            notes: self.notes.clone(),
        }
    }
}

/// Per-vertex CSV `x,y,u`.
pub fn function_csv(mesh: &Mesh, u: &FeFunction) -> String {
    let mut s = String::from("x,y,u\n");
    for (v, c) in mesh.vertices().iter().zip(&u.coeffs) {
        let _ = writeln!(s, "{:?},{:?},{:?}", v[0], v[1], c);
    }
    s
}

pub fn energy(mesh: &Mesh, u: &FeFunction, f_values: &[f64], mu: &DiscreteMeasure, params: &SolverParams) -> Result<f64> {
    PoissonProblem::new(mesh, mu, f_values, params)?.energy(u)
}

pub fn weak_residual(
    mesh: &Mesh,
    u: &FeFunction,
    f_values: &[f64],
    mu: &DiscreteMeasure,
    params: &SolverParams,
) -> Result<f64> {
    PoissonProblem::new(mesh, mu, f_values, params)?.weak_residual(u)
}

pub fn solve_poisson(f_values: &[f64], mu: &DiscreteMeasure, mesh: &Mesh, params: &SolverParams) -> Result<PoissonSolution> {
    PoissonProblem::new(mesh, mu, f_values, params)?.solve()
}
