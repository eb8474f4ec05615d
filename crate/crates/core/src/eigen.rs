//! First (p,μ)-eigenpair by minimization of the Rayleigh quotient
//! `R(u) = ∫|∇u|^p dx / ∫|u|^p dμ`.
//!
//! Iterates are kept normalized to `∫|u|^p dμ = 1`. Each step is a Newton
//! preconditioned descent direction for `R` (for `p = 2` it reduces to
//! inverse iteration), safeguarded by Armijo backtracking on `R`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{AtomMap, DiscreteMeasure};
use crate::mesh::{dirichlet_energy, FeFunction, Mesh, Point};
use crate::numeric::{compensated_sum, dot, max_abs};
use crate::params::SolverParams;
use crate::pde::{PEnergy, ARMIJO_C};
use crate::sparse::SpdSolver;

/// Seed used when a caller does not supply one.
pub const DEFAULT_SEED: u64 = 20_240_917;

const MIN_STEP: f64 = 1e-12;
/// Relative change in `R` below which differences are rounding noise.
const NOISE: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    pub u: FeFunction,
    pub iterations: usize,
    pub rayleigh_history: Vec<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    /// Steps accepted on residual decrease once `R` had stagnated at rounding level.
    pub polish_iterations: usize,
    pub seed: u64,
    pub notes: Vec<String>,
}

/// `∫|∇u|^p dx / Σ_a w_a |u(a)|^p`.
pub fn rayleigh_quotient(mesh: &Mesh, u: &FeFunction, mu: &DiscreteMeasure, params: &SolverParams) -> Result<f64> {
    params.validate()?;
    u.check(mesh)?;
    let atoms = AtomMap::new(mesh, mu)?;
    rq(mesh, &atoms, u, params.p)
}

fn rq(mesh: &Mesh, atoms: &AtomMap, u: &FeFunction, p: f64) -> Result<f64> {
    let den = atoms.p_mass(&u.coeffs, p);
    if !(den > 0.0) {
        return Err(Error::NotAdmissible("u vanishes at every atom of the measure".into()));
    }
    Ok(dirichlet_energy(mesh, u, p)? / den)
}

struct Rayleigh<'a> {
    mesh: &'a Mesh,
    params: SolverParams,
    atoms: AtomMap,
}

impl<'a> Rayleigh<'a> {
    fn new(mesh: &'a Mesh, mu: &DiscreteMeasure, params: &SolverParams) -> Result<Self> {
        params.validate()?;
        Ok(Rayleigh { mesh, params: *params, atoms: AtomMap::new(mesh, mu)? })
    }

    fn kernels(&self) -> PEnergy<'_> {
        PEnergy::new(self.mesh, &self.params)
    }

    fn denominator(&self, coeffs: &[f64]) -> f64 {
        self.atoms.p_mass(coeffs, self.params.p)
    }

    /// Vertex loads `Σ_a w_a |u(a)|^{p-2} u(a) φ_i(a)`.
    fn mass_load(&self, coeffs: &[f64]) -> Vec<f64> {
        let p = self.params.p;
        let g: Vec<f64> = self
            .atoms
            .eval(coeffs)
            .into_iter()
            .map(|v| if v == 0.0 { 0.0 } else { v.signum() * v.abs().powf(p - 1.0) })
            .collect();
        self.atoms.load(&g, self.mesh.num_vertices())
    }

    /// Interior defect `a_p(u, φ_i) - λ Σ_a w_a |u|^{p-2} u φ_i`.
    fn defect(&self, coeffs: &[f64], lambda: f64) -> Vec<f64> {
        let a = self.kernels().flux_load(coeffs);
        let b = self.mass_load(coeffs);
        self.mesh.interior_vertices().iter().map(|&v| a[v] - lambda * b[v]).collect()
    }

    /// Rescales interior values to unit `p`-mass.
    fn normalize(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let coeffs = FeFunction::from_interior(self.mesh, x).coeffs;
        let den = self.denominator(&coeffs);
        if !(den.is_finite() && den > 1e-300) {
            return Err(Error::Numerical(format!("iterate collapsed: ∫|u|^p dμ = {den:e}")));
        }
        let s = den.powf(-1.0 / self.params.p);
        let x: Vec<f64> = x.iter().map(|v| v * s).collect();
        let coeffs = FeFunction::from_interior(self.mesh, &x).coeffs;
        Ok((x, coeffs))
    }

    fn exact_quotient(&self, coeffs: &[f64]) -> Result<f64> {
        let u = FeFunction::new(self.mesh, coeffs.to_vec())?;
        rq(self.mesh, &self.atoms, &u, self.params.p)
    }

    /// Once `R` has stagnated at rounding level: the first step lowering the
    /// residual, trying the full flux Newton step and the lagged-diffusivity
    /// step at each length.
    #[allow(clippy::type_complexity)]
    fn polish_step(
        &self,
        kernels: &PEnergy,
        x: &[f64],
        coeffs: &[f64],
        r: f64,
        dir: &[f64],
        residual: f64,
    ) -> Result<Option<(Vec<f64>, Vec<f64>, f64, bool)>> {
        let p = self.params.p;
        let newton: Vec<f64> = dir.iter().map(|d| d / (p - 1.0)).collect();
        let mut candidates = vec![newton];
        if p < 2.0 {
            if let Ok(s) = SpdSolver::factor(&kernels.lagged_matrix(coeffs)) {
                let lagged: Vec<f64> = s.solve(&self.defect(coeffs, r)).iter().map(|d| -d).collect();
                if lagged.iter().all(|d| d.is_finite()) {
                    candidates.push(lagged);
                }
            }
        }
        let mut t = 1.0;
        while t >= MIN_STEP {
            let mut best: Option<(f64, Vec<f64>, Vec<f64>, f64)> = None;
            for d in &candidates {
                let trial: Vec<f64> = x.iter().zip(d).map(|(a, d)| a + t * d).collect();
                let (tx, tc) = self.normalize(&trial)?;
                let rt = kernels.numerator(&tc);
                if !((rt - r).abs() <= NOISE * r) {
                    continue;
                }
                let res = max_abs(&self.defect(&tc, self.exact_quotient(&tc)?));
                if res < residual && best.as_ref().is_none_or(|b| res < b.0) {
                    best = Some((res, tx, tc, rt));
                }
            }
            if let Some((_, tx, tc, rt)) = best {
                return Ok(Some((tx, tc, rt, true)));
            }
            t *= 0.5;
        }
        Ok(None)
    }

    fn minimize(&self, initial: Vec<f64>, seed: u64) -> Result<EigenPair> {
        let mesh = self.mesh;
        let params = &self.params;
        let p = params.p;
        let kernels = self.kernels();
        if self.denominator(&FeFunction::from_interior(mesh, &initial).coeffs) == 0.0 {
            return Err(Error::NotAdmissible("the measure puts no mass where interior basis functions live".into()));
        }
        let (mut x, mut coeffs) = self.normalize(&initial)?;
        let mut r = kernels.numerator(&coeffs);
        let mut history = vec![r];
        let mut notes = params.diagnostics();
        let fixed = if p == 2.0 { Some(SpdSolver::factor(&kernels.hessian(&coeffs, None))?) } else { None };
        let mut iterations = 0;
        let mut polish = 0;
        let mut last_decrease = f64::INFINITY;
        let mut converged = false;
        loop {
            let lambda = self.exact_quotient(&coeffs)?;
            let residual = max_abs(&self.defect(&coeffs, lambda));
            if residual < params.tol_residual && last_decrease < params.tol_energy {
                converged = true;
                break;
            }
            if iterations >= params.max_iter {
                break;
            }
            iterations += 1;
            // ∇R = p (a - R b) at unit p-mass
            let grad: Vec<f64> = self.defect(&coeffs, r).iter().map(|g| p * g).collect();
            let mut dir = match &fixed {
                Some(s) => s.solve(&grad),
                None => match SpdSolver::factor(&kernels.hessian(&coeffs, None)) {
                    Ok(s) => s.solve(&grad),
                    Err(_) => grad.clone(),
                },
            };
            let scale = -(p - 1.0) / p;
            dir.iter_mut().for_each(|d| *d *= scale);
            let mut slope = dot(&grad, &dir);
            if !(slope < 0.0) || dir.iter().any(|d| !d.is_finite()) {
                dir = grad.iter().map(|g| -g).collect();
                slope = -dot(&grad, &grad);
            }
            let mut accepted = None;
            let mut t = 1.0;
            while t >= MIN_STEP {
                let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
                let (tx, tc) = self.normalize(&trial)?;
                let rt = kernels.numerator(&tc);
                if rt.is_nan() {
                    return Err(Error::Numerical(format!(
                        "Rayleigh quotient is NaN (iteration {iterations}, step {t:e})"
                    )));
                }
                if (rt - r).abs() <= NOISE * r {
                    break;
                }
                if rt <= r + ARMIJO_C * t * slope {
                    accepted = Some((tx, tc, rt, false));
                    break;
                }
                t *= 0.5;
            }
            if accepted.is_none() {
                accepted = self.polish_step(&kernels, &x, &coeffs, r, &dir, residual)?;
            }
            let Some((tx, tc, rt, polished)) = accepted else {
                notes.push(format!("line search stalled at iteration {iterations}"));
                break;
            };
            if polished {
                polish += 1;
            }
            last_decrease = ((r - rt) / r).max(0.0);
            x = tx;
            coeffs = tc;
            r = rt;
            if r <= *history.last().expect("nonempty") {
                history.push(r);
            }
        }
        let mut u = FeFunction::from_interior(mesh, &x);
        let signed = compensated_sum(self.atoms.weights().iter().zip(self.atoms.eval(&u.coeffs)).map(|(w, v)| w * v));
        if signed < 0.0 {
            u = u.scaled(-1.0);
        }
        let lambda = self.exact_quotient(&u.coeffs)?;
        let residual_norm = max_abs(&self.defect(&u.coeffs, lambda));
        if !converged {
            notes.push(format!("not converged: residual {residual_norm:e} after {iterations} iterations"));
        }
        Ok(EigenPair {
            lambda,
            u,
            iterations,
            rayleigh_history: history,
            residual_norm,
            converged,
            polish_iterations: polish,
            seed,
            notes,
        })
    }
}

/// Random positive interior start drawn from `seed`.
fn random_start(mesh: &Mesh, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..mesh.interior_vertices().len()).map(|_| rng.random_range(0.1..1.0)).collect()
}

pub fn minimize_rayleigh(mu: &DiscreteMeasure, mesh: &Mesh, params: &SolverParams, seed: u64) -> Result<EigenPair> {
    Rayleigh::new(mesh, mu, params)?.minimize(random_start(mesh, seed), seed)
}

/// Max interior defect of `∫|∇u|^{p-2}∇u·∇φ_i = λ ∫|u|^{p-2}u φ_i dμ`.
pub fn eigen_residual(pair: &EigenPair, mu: &DiscreteMeasure, mesh: &Mesh, params: &SolverParams) -> Result<f64> {
    pair.u.check(mesh)?;
    let ray = Rayleigh::new(mesh, mu, params)?;
    Ok(max_abs(&ray.defect(&pair.u.coeffs, pair.lambda)))
}

/// `max_i Σ_a w_a |u(a)|^{p-1} φ_i(a)` over interior nodes: the sensitivity of
/// the eigen defect to `λ`.
pub fn lambda_sensitivity(pair: &EigenPair, mu: &DiscreteMeasure, mesh: &Mesh, params: &SolverParams) -> Result<f64> {
    pair.u.check(mesh)?;
    let ray = Rayleigh::new(mesh, mu, params)?;
    let abs: Vec<f64> = pair.u.coeffs.iter().map(|c| c.abs()).collect();
    let b = ray.mass_load(&abs);
    Ok(mesh.interior_vertices().iter().map(|&v| b[v]).fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub min_interior: f64,
    pub max_interior: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub const SIGN_TOL: f64 = 1e-8;

/// One-signedness at interior vertices under the convention `Σ w u ≥ 0`.
pub fn check_sign(mesh: &Mesh, u: &FeFunction) -> Result<SignReport> {
    u.check(mesh)?;
    let vals = u.interior_values(mesh);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(SignReport { min_interior: min, max_interior: max, tolerance: SIGN_TOL, pass: min >= -SIGN_TOL })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplicityReport {
    pub seeds: Vec<u64>,
    pub lambdas: Vec<f64>,
    /// `(max λ - min λ) / min λ` over the converged seeds.
    pub lambda_spread: f64,
    /// Largest pairwise `‖u - c v‖_∞` with `c` the least-squares scalar.
    pub max_aligned_distance: f64,
    pub excluded: Vec<(u64, String)>,
    pub inner_tol_residual: f64,
    pub pass: bool,
}

/// Least-squares scalar `c` minimizing `‖u - c v‖₂`, and the resulting sup distance.
pub fn aligned_distance(u: &[f64], v: &[f64]) -> f64 {
    let vv = dot(v, v);
    let c = if vv > 0.0 { dot(u, v) / vv } else { 0.0 };
    u.iter().zip(v).map(|(a, b)| (a - c * b).abs()).fold(0.0, f64::max)
}

/// Runs [`minimize_rayleigh`] from every seed and compares the results.
///
/// Each run is solved to `1e-3 · tol_residual` (floored at `1e-13`): the
/// eigenvector error is a mesh-dependent multiple of the residual, so the
/// comparison against `10 · tol_residual` needs the extra margin.
pub fn check_simplicity(
    mu: &DiscreteMeasure,
    mesh: &Mesh,
    params: &SolverParams,
    seeds: &[u64],
) -> Result<(SimplicityReport, Vec<EigenPair>)> {
    if seeds.len() < 3 {
        return Err(Error::InvalidParams(format!("simplicity check needs at least 3 seeds, got {}", seeds.len())));
    }
    let inner_tol = (1e-3 * params.tol_residual).max(1e-13);
    let inner = SolverParams { tol_residual: inner_tol, max_iter: params.max_iter.max(1000), ..*params };
    let ray = Rayleigh::new(mesh, mu, &inner)?;
    let runs: Vec<(u64, Result<EigenPair>)> =
        seeds.par_iter().map(|&s| (s, ray.minimize(random_start(mesh, s), s))).collect();
    let mut pairs = Vec::new();
    let mut excluded = Vec::new();
    for (s, r) in runs {
        match r {
            Ok(pair) if pair.converged => pairs.push(pair),
            Ok(pair) => excluded.push((s, format!("not converged, residual {:e}", pair.residual_norm))),
            Err(e) => excluded.push((s, e.to_string())),
        }
    }
    if pairs.is_empty() {
        return Err(Error::Numerical("no seed converged".into()));
    }
    let lambdas: Vec<f64> = pairs.iter().map(|p| p.lambda).collect();
    let lo = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / lo;
    let mut dist = 0.0f64;
    for i in 0..pairs.len() {
        for j in 0..pairs.len() {
            if i != j {
                dist = dist.max(aligned_distance(&pairs[i].u.coeffs, &pairs[j].u.coeffs));
            }
        }
    }
    let report = SimplicityReport {
        seeds: pairs.iter().map(|p| p.seed).collect(),
        lambdas,
        lambda_spread: spread,
        max_aligned_distance: dist,
        excluded,
        inner_tol_residual: inner_tol,
        pass: spread <= 0.01 && dist <= 10.0 * params.tol_residual,
    };
    Ok((report, pairs))
}

/// `(∫|∇w|^p, ½(∫|∇u|^p + ∫|∇v|^p))` for `w = ((u^p + v^p)/2)^{1/p}` formed
/// nodally; `u` and `v` must be non-negative.
pub fn convexity_terms(mesh: &Mesh, u: &FeFunction, v: &FeFunction, p: f64) -> Result<(f64, f64)> {
    u.check(mesh)?;
    v.check(mesh)?;
    if u.coeffs.iter().chain(&v.coeffs).any(|c| *c < 0.0) {
        return Err(Error::InvalidParams("convexity terms need non-negative functions".into()));
    }
    let w = FeFunction::new(
        mesh,
        u.coeffs.iter().zip(&v.coeffs).map(|(a, b)| (0.5 * (a.powf(p) + b.powf(p))).powf(1.0 / p)).collect(),
    )?;
    let lhs = dirichlet_energy(mesh, &w, p)?;
    let rhs = 0.5 * (dirichlet_energy(mesh, u, p)? + dirichlet_energy(mesh, v, p)?);
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaBound {
    /// Certified `λ ≥ lower` for every discrete eigenvalue on this mesh.
    pub lower: f64,
    /// Embedding constant `C` with `‖φ‖_{p,μ} ≤ C ‖∇φ‖_p`, `lower = C^{-p}`.
    pub embedding_constant: f64,
    /// Smallest Rayleigh quotient over a short-refined random batch; an upper estimate of `λ`.
    pub sampled_estimate: f64,
    pub batch_size: usize,
}

/// Horizontal or vertical line index over triangles.
struct Bands {
    axis: usize,
    lo: f64,
    width: f64,
    bins: Vec<Vec<usize>>,
}

impl Bands {
    fn new(mesh: &Mesh, axis: usize) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let n = ((mesh.num_triangles() as f64).sqrt().ceil() as usize).max(1);
        let width = (hi[axis] - lo[axis]).max(f64::MIN_POSITIVE) / n as f64;
        let mut bins = vec![Vec::new(); n];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let c: Vec<f64> = tri.iter().map(|&v| mesh.vertices()[v][axis]).collect();
            let a = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let b = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let i0 = (((a - lo[axis]) / width).floor().max(0.0) as usize).min(n - 1);
            let i1 = (((b - lo[axis]) / width).floor().max(0.0) as usize).min(n - 1);
            for bin in &mut bins[i0..=i1] {
                bin.push(t);
            }
        }
        Bands { axis, lo: lo[axis], width, bins }
    }

    /// Sum over triangles of `ℓ_T^{p'} |T|^{-p'/p}` along the two rays from `x`
    /// parallel to the other axis; returns the smaller of the two.
    fn ray_weights(&self, mesh: &Mesh, x: Point, p: f64) -> f64 {
        let (cut, run) = (self.axis, 1 - self.axis);
        let level = x[cut];
        let n = self.bins.len();
        let bin = (((level - self.lo) / self.width).floor().max(0.0) as usize).min(n - 1);
        let pp = p / (p - 1.0);
        let mut fwd = 0.0;
        let mut back = 0.0;
        for &t in &self.bins[bin] {
            let tri = mesh.triangles()[t];
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for k in 0..3 {
                let a = mesh.vertices()[tri[k]];
                let b = mesh.vertices()[tri[(k + 1) % 3]];
                let (da, db) = (a[cut] - level, b[cut] - level);
                if da == 0.0 && db == 0.0 {
                    lo = lo.min(a[run].min(b[run]));
                    hi = hi.max(a[run].max(b[run]));
                } else if da * db <= 0.0 {
                    let s = da / (da - db);
                    let y = a[run] + s * (b[run] - a[run]);
                    lo = lo.min(y);
                    hi = hi.max(y);
                }
            }
            if !(hi > lo) {
                continue;
            }
            let coef = mesh.element_areas()[t].powf(-pp / p);
            let ahead = hi - lo.max(x[run]);
            if ahead > 0.0 {
                fwd += ahead.powf(pp) * coef;
            }
            let behind = hi.min(x[run]) - lo;
            if behind > 0.0 {
                back += behind.powf(pp) * coef;
            }
        }
        fwd.min(back)
    }
}

/// Lower bound for the first discrete eigenvalue.
///
/// For a P1 function vanishing on the boundary, integrating `∇u` along an
/// axis-parallel ray from an atom `a` to the boundary and applying Hölder's
/// inequality triangle by triangle gives `|u(a)|^p ≤ L_a^{p-1} ∫|∇u|^p`
/// with `L_a = Σ_T ℓ_T^{p'} |T|^{-p'/p}`. Summing against the weights,
/// `λ ≥ 1 / Σ_a w_a L_a^{p-1}`. The bound is rigorous but degrades as the
/// mesh is refined, since point values are not controlled by `W^{1,p}` for
/// `p ≤ 2`.
pub fn lambda_lower_bound(mu: &DiscreteMeasure, mesh: &Mesh, params: &SolverParams) -> Result<LambdaBound> {
    lambda_lower_bound_seeded(mu, mesh, params, DEFAULT_SEED)
}

pub fn lambda_lower_bound_seeded(
    mu: &DiscreteMeasure,
    mesh: &Mesh,
    params: &SolverParams,
    seed: u64,
) -> Result<LambdaBound> {
    let p = params.p;
    let ray = Rayleigh::new(mesh, mu, params)?;
    let bands = [Bands::new(mesh, 1), Bands::new(mesh, 0)];
    let total = compensated_sum(mu.atoms().iter().map(|a| {
        let l = bands.iter().map(|b| b.ray_weights(mesh, a.x, p)).fold(f64::INFINITY, f64::min);
        a.w * l.powf(p - 1.0)
    }));
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NotAdmissible("the measure has no mass away from the boundary".into()));
    }
    let lower = 1.0 / total;
    let batch = 4;
    let short = SolverParams { max_iter: 3, ..*params };
    let short_ray = Rayleigh { mesh, params: short, atoms: ray.atoms.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut estimate = f64::INFINITY;
    for _ in 0..batch {
        let pair = short_ray.minimize(random_start(mesh, rng.random()), seed)?;
        estimate = estimate.min(pair.lambda);
    }
    if !(estimate > 0.0) {
        return Err(Error::Numerical("degenerate batch: every sampled ratio vanished".into()));
    }
    Ok(LambdaBound { lower, embedding_constant: lower.powf(-1.0 / p), sampled_estimate: estimate, batch_size: batch })
}
