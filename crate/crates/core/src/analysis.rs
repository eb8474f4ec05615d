//! Empirical regularity diagnostics: local sup bounds, Hölder exponents,
//! growth exponents of measures, and the borderline log-Cantor measure at
//! `p = n = 2`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eigen::minimize_rayleigh;
use crate::error::{Error, Result};
use crate::measure::{ball_mass, fit_growth_exponent, growth_setup, DiscreteMeasure, GrowthReport, LogCantorTree, TreePoint};
use crate::mesh::{build_uniform_mesh, dist, Domain, FeFunction, Mesh, Point, Polygon};
use crate::numeric::linear_fit;
use crate::params::{SolverParams, DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupEntry {
    pub center: Point,
    pub r: f64,
    pub sigma: f64,
    /// `max u⁺` over vertices in `B(center, σr)`.
    pub lhs: f64,
    /// `(area-weighted mean of (u⁺)^p over triangles inside B(center, r))^{1/p}`.
    pub rhs_core: f64,
    /// `lhs · (1-σ)^{n/p} / rhs_core`.
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupReport {
    pub entries: Vec<SupEntry>,
    pub max_constant: f64,
    pub notes: Vec<String>,
}

/// Implied constants of the local bound
/// `sup_{B(σr)} u⁺ ≤ C (1-σ)^{-n/p} (⨍_{B(r)} (u⁺)^p)^{1/p}`.
pub fn sup_bound_check(
    mesh: &Mesh,
    domain: &Polygon,
    u: &FeFunction,
    balls: &[(Point, f64)],
    sigmas: &[f64],
    params: &SolverParams,
) -> Result<SupReport> {
    params.validate()?;
    u.check(mesh)?;
    let p = params.p;
    for &(c, r) in balls {
        if !(r > 0.0 && domain.contains(c, 0.0) && domain.boundary_distance(c) >= 2.0 * r) {
            return Err(Error::InvalidParams(format!("ball B(({}, {}), 2·{r}) is not contained in the domain", c[0], c[1])));
        }
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
        return Err(Error::InvalidParams(format!("sigma must lie in (0, 1), got {s}")));
    }
    let plus: Vec<f64> = u.coeffs.iter().map(|v| v.max(0.0)).collect();
    let mut entries = Vec::new();
    let mut notes = Vec::new();
    for &(c, r) in balls {
        let mut area = 0.0;
        let mut integral = 0.0;
        for (t, tri) in mesh.triangles().iter().enumerate() {
            if tri.iter().all(|&v| dist(mesh.vertices()[v], c) <= r) {
                let a = mesh.element_areas()[t];
                area += a;
                integral += a * tri.iter().map(|&v| plus[v].powf(p)).sum::<f64>() / 3.0;
            }
        }
        for &sigma in sigmas {
            let inner: Vec<usize> = (0..mesh.num_vertices())
                .filter(|&v| !mesh.boundary_mask()[v] && dist(mesh.vertices()[v], c) <= sigma * r)
                .collect();
            if inner.is_empty() {
                notes.push(format!("skipped ({:.4}, {:.4}), r = {r}, σ = {sigma}: no interior vertex", c[0], c[1]));
                continue;
            }
            let lhs = inner.iter().map(|&v| plus[v]).fold(0.0, f64::max);
            let rhs_core = if area > 0.0 { (integral / area).powf(1.0 / p) } else { 0.0 };
            let constant = if lhs == 0.0 {
                0.0
            } else if rhs_core > 0.0 {
                lhs * (1.0 - sigma).powf(DIM / p) / rhs_core
            } else {
                notes.push(format!("skipped ({:.4}, {:.4}), r = {r}: no triangle inside the ball", c[0], c[1]));
                continue;
            };
            entries.push(SupEntry { center: c, r, sigma, lhs, rhs_core, constant });
        }
    }
    let max_constant = entries.iter().map(|e| e.constant).fold(0.0, f64::max);
    Ok(SupReport { entries, max_constant, notes })
}

/// First `count` points of the base-(2,3) Halton sequence over the domain's
/// bounding box with `B(x, 2r)` inside the domain.
pub fn interior_balls(domain: &Polygon, count: usize, r: f64) -> Vec<(Point, f64)> {
    let halton = |mut i: usize, b: usize| {
        let (mut f, mut x) = (1.0, 0.0);
        while i > 0 {
            f /= b as f64;
            x += f * (i % b) as f64;
            i /= b;
        }
        x
    };
    let vs = domain.vertices();
    let lo = [vs.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min), vs.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min)];
    let hi = [
        vs.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max),
        vs.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max),
    ];
    (1..100_000)
        .map(|i| [lo[0] + (hi[0] - lo[0]) * halton(i, 2), lo[1] + (hi[1] - lo[1]) * halton(i, 3)])
        .filter(|&x| domain.contains(x, 0.0) && domain.boundary_distance(x) >= 2.0 * r)
        .take(count)
        .map(|x| (x, r))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderBin {
    /// `log |x - y|` of the pair attaining the bin maximum.
    pub log_distance: f64,
    pub max_log_increment: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    /// Fitted slope clamped to `[0, 1.5]`.
    pub alpha_hat: f64,
    pub raw_slope: f64,
    pub fit_r2: f64,
    pub pair_count: usize,
    pub distance_range: (f64, f64),
    pub bins: Vec<HolderBin>,
}

impl HolderFit {
    /// CSV `log_distance,max_log_increment,pairs` of the nonempty bins.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("log_distance,max_log_increment,pairs\n");
        for b in &self.bins {
            let _ = writeln!(s, "{:?},{:?},{}", b.log_distance, b.max_log_increment, b.pairs);
        }
        s
    }
}

pub const HOLDER_BINS: usize = 10;

/// Nearest-vertex lookup on a uniform bucket grid.
struct VertexGrid {
    lo: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl VertexGrid {
    fn new(mesh: &Mesh, cell: f64) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let nx = (((hi[0] - lo[0]) / cell).floor() as usize) + 1;
        let ny = (((hi[1] - lo[1]) / cell).floor() as usize) + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (k, v) in mesh.vertices().iter().enumerate() {
            let i = (((v[0] - lo[0]) / cell) as usize).min(nx - 1);
            let j = (((v[1] - lo[1]) / cell) as usize).min(ny - 1);
            buckets[j * nx + i].push(k);
        }
        VertexGrid { lo, cell, nx, ny, buckets }
    }

    fn nearest(&self, mesh: &Mesh, x: Point) -> Option<usize> {
        let fi = ((x[0] - self.lo[0]) / self.cell).floor();
        let fj = ((x[1] - self.lo[1]) / self.cell).floor();
        if fi < -1.0 || fj < -1.0 || fi > self.nx as f64 || fj > self.ny as f64 {
            return None;
        }
        let (ci, cj) = (fi as i64, fj as i64);
        let mut best: Option<(usize, f64)> = None;
        for ring in 0i64..4 {
            for j in (cj - ring)..=(cj + ring) {
                for i in (ci - ring)..=(ci + ring) {
                    if (i - ci).abs() != ring && (j - cj).abs() != ring {
                        continue;
                    }
                    if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
                        continue;
                    }
                    for &v in &self.buckets[j as usize * self.nx + i as usize] {
                        let d = dist(mesh.vertices()[v], x);
                        if best.is_none_or(|(_, bd)| d < bd) {
                            best = Some((v, d));
                        }
                    }
                }
            }
            if best.is_some_and(|(_, d)| d <= ring as f64 * self.cell) {
                break;
            }
        }
        best.map(|(v, _)| v)
    }
}

pub fn holder_exponent_fit(mesh: &Mesh, u: &FeFunction, pair_budget: usize, seed: u64) -> Result<HolderFit> {
    holder_exponent_fit_in(mesh, u, pair_budget, seed, None)
}

/// Binned max-increment log-log fit of `|u(x) - u(y)|` against `|x - y|`.
///
/// Pairs are formed from a random vertex and the vertex nearest to a point
/// at a log-uniform distance in `[h, min(100h, extent/8)]` and random
/// direction, where `h` is the longest mesh edge and `extent` the diameter of
/// the sampling region. Beyond a fraction of the extent the increments of a
/// bounded function saturate at its oscillation and flatten the slope. With `region = Some((c, R))` both vertices must lie
/// in `B(c, R)`.
pub fn holder_exponent_fit_in(
    mesh: &Mesh,
    u: &FeFunction,
    pair_budget: usize,
    seed: u64,
    region: Option<(Point, f64)>,
) -> Result<HolderFit> {
    u.check(mesh)?;
    if pair_budget < 1000 {
        return Err(Error::InvalidParams(format!("pair budget must be at least 1000, got {pair_budget}")));
    }
    let inside = |x: Point| region.is_none_or(|(c, r)| dist(x, c) <= r);
    let cand: Vec<usize> = (0..mesh.num_vertices()).filter(|&v| inside(mesh.vertices()[v])).collect();
    if cand.len() < 2 {
        return Err(Error::InsufficientData("fewer than two vertices in the sampling region".into()));
    }
    let extent = match region {
        Some((_, r)) => 2.0 * r,
        None => {
            let (lo, hi) = mesh.bounding_box();
            dist(lo, hi)
        }
    };
    let h = mesh.h();
    let d_min = h;
    let d_max = (100.0 * h).min(extent / 8.0);
    if d_max <= 2.0 * d_min {
        return Err(Error::InsufficientData(format!("mesh too coarse: distance range [{d_min:.3e}, {d_max:.3e}]")));
    }
    let (l0, l1) = (d_min.ln(), d_max.ln());
    let width = (l1 - l0) / HOLDER_BINS as f64;
    let grid = VertexGrid::new(mesh, h);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Vec<Option<(f64, f64)>> = vec![None; HOLDER_BINS];
    let mut counts = vec![0usize; HOLDER_BINS];
    let mut pair_count = 0;
    for _ in 0..pair_budget {
        let a = cand[rng.random_range(0..cand.len())];
        let ld = rng.random_range(l0..l1);
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let xa = mesh.vertices()[a];
        let target = [xa[0] + ld.exp() * theta.cos(), xa[1] + ld.exp() * theta.sin()];
        let Some(b) = grid.nearest(mesh, target) else { continue };
        let xb = mesh.vertices()[b];
        let d = dist(xa, xb);
        if b == a || !inside(xb) || d < d_min || d > d_max {
            continue;
        }
        pair_count += 1;
        let bin = (((d.ln() - l0) / width) as usize).min(HOLDER_BINS - 1);
        counts[bin] += 1;
        let inc = (u.coeffs[a] - u.coeffs[b]).abs();
        if inc > 0.0 {
            let li = inc.ln();
            if best[bin].is_none_or(|(_, m)| li > m) {
                best[bin] = Some((d.ln(), li));
            }
        }
    }
    let bins: Vec<HolderBin> = best
        .iter()
        .zip(&counts)
        .filter_map(|(b, &n)| b.map(|(ld, li)| HolderBin { log_distance: ld, max_log_increment: li, pairs: n }))
        .collect();
    if bins.len() < 4 {
        return Err(Error::InsufficientData(format!("only {} distance bins carry a nonzero increment", bins.len())));
    }
    let xs: Vec<f64> = bins.iter().map(|b| b.log_distance).collect();
    let ys: Vec<f64> = bins.iter().map(|b| b.max_log_increment).collect();
    let (slope, _, r2) =
        linear_fit(&xs, &ys).ok_or_else(|| Error::InsufficientData("degenerate distance bins".into()))?;
    Ok(HolderFit {
        alpha_hat: slope.clamp(0.0, 1.5),
        raw_slope: slope,
        fit_r2: r2,
        pair_count,
        distance_range: (d_min, d_max),
        bins,
    })
}

/// `min(0.999, (q-p)(n-p)/(p(p-1)))` for `p < n`.
pub fn holder_bound(params: &SolverParams) -> Result<f64> {
    params.validate()?;
    let (p, q) = (params.p, params.q);
    if p >= DIM {
        return Err(Error::InvalidParams("the Hölder bound needs p < n = 2".into()));
    }
    Ok(((q - p) * (DIM - p) / (p * (p - 1.0))).min(0.999))
}

/// `min((n-p)(q/p - 1), n(p-1))` for `p < n`.
pub fn moser_epsilon(params: &SolverParams) -> Result<f64> {
    params.validate()?;
    let (p, q) = (params.p, params.q);
    if p >= DIM {
        return Err(Error::InvalidParams("the exponent bookkeeping needs p < n = 2".into()));
    }
    Ok(((DIM - p) * (q / p - 1.0)).min(DIM * (p - 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    /// `q(n-p)/p`.
    pub s_target: f64,
    pub growth: GrowthReport,
    pub pass: bool,
    /// Largest `q` with `q(n-p)/p` at most the fitted exponent; `None` at `p = n`.
    pub max_admissible_q: Option<f64>,
}

pub const DIMENSION_SLACK: f64 = 0.1;

pub fn dimension_consistency_check(
    mu: &DiscreteMeasure,
    params: &SolverParams,
    centers: usize,
    seed: u64,
) -> Result<DimensionReport> {
    params.validate()?;
    let (p, q) = (params.p, params.q);
    let s_target = q * (DIM - p) / p;
    let (c, radii) = growth_setup(mu, centers, seed)?;
    let growth = fit_growth_exponent(mu, &c, &radii)?;
    let max_admissible_q = (p < DIM).then(|| growth.fitted_exponent * p / (DIM - p));
    Ok(DimensionReport { s_target, pass: growth.fitted_exponent >= s_target - DIMENSION_SLACK, growth, max_admissible_q })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub sup_check: SupReport,
    pub holder_fit: HolderFit,
    /// `None` at `p = n`, where the bound does not apply.
    pub bound_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleConfig {
    pub r0: f64,
    pub center: Point,
    pub pair_budget: usize,
    pub seed: u64,
    pub mass_bound_samples: usize,
    pub alphas: Vec<f64>,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig {
            r0: 0.25,
            center: [0.5, 0.5],
            pair_budget: 1_000_000,
            seed: crate::eigen::DEFAULT_SEED,
            mass_bound_samples: 2000,
            alphas: vec![0.1, 0.5, 0.9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSeries {
    pub alpha: f64,
    /// `μ(B(x₀, r_k)) / r_k^α` for `k = 0..=level`, `x₀` a leaf of the tree.
    pub ratios: Vec<f64>,
    /// `2^{-k} h(r_0) / r_k^α`, a lower bound for `ratios`.
    pub closed_form: Vec<f64>,
    /// First `k` from which the closed form increases at every step.
    pub onset: usize,
    pub increasing_after_onset: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub q: f64,
    pub level: usize,
    pub diameters: Vec<f64>,
    pub growth: Vec<GrowthSeries>,
    /// Levels whose radii are resolved in absolute `f64` coordinates.
    pub brute_force_levels: Vec<usize>,
    /// Largest amount, relative to `h(r_k)`, by which the exact tree mass falls
    /// outside `[μ(B(x, r(1-δ))), μ(B(x, r(1+δ)))]` summed over atoms, `δ = 1e-9`.
    pub brute_force_max_discrepancy: f64,
    /// `sup μ(B(x, r_k)) / h(r_k)` over sampled centers and levels.
    pub mass_bound_max_ratio: f64,
    pub mass_bound_samples: usize,
    pub resolutions: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub alpha_hats: Vec<f64>,
    pub holder_fits: Vec<HolderFit>,
    pub pass: bool,
    pub notes: Vec<String>,
}

pub const MASS_BOUND: f64 = 4.0;

/// Borderline experiment at `p = n = 2` with the log-Cantor measure.
pub fn counterexample_probe(
    params: &SolverParams,
    level: usize,
    resolutions: &[usize],
    config: &CounterexampleConfig,
) -> Result<CounterexampleReport> {
    params.validate()?;
    if params.p != DIM {
        return Err(Error::InvalidParams(format!("the probe runs at p = n = 2, got p = {}", params.p)));
    }
    let tree = LogCantorTree::new(params.q, level, config.center, config.r0)?;
    let diam = tree.diameters().to_vec();
    let logs = tree.abs_log_radii().to_vec();
    let mut notes = params.diagnostics();

    let leaf = TreePoint::node(vec![false; level]);
    let growth: Vec<GrowthSeries> = config
        .alphas
        .iter()
        .map(|&alpha| {
            let closed_log: Vec<f64> =
                (0..=level).map(|k| tree.node_mass(k).ln() + alpha * logs[k]).collect();
            let ratios: Vec<f64> = (0..=level).map(|k| tree.ball_mass(&leaf, diam[k]) * (alpha * logs[k]).exp()).collect();
            // increments -ln 2 + α(|log r_{k+1}| - |log r_k|) grow with k
            let onset = (0..level).find(|&k| closed_log[k + 1] > closed_log[k]).unwrap_or(level);
            let increasing_after_onset = onset < level
                && (onset..level).all(|k| closed_log[k + 1] > closed_log[k] && ratios[k + 1] > ratios[k]);
            GrowthSeries {
                alpha,
                ratios,
                closed_form: closed_log.iter().map(|l| l.exp()).collect(),
                onset,
                increasing_after_onset,
            }
        })
        .collect();

    let mu = tree.to_measure();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let brute_force_levels: Vec<usize> = (0..=level).filter(|&k| diam[k] >= 1e-6).collect();
    let mut mass_bound_max = 0.0f64;
    let mut discrepancy = 0.0f64;
    for sample in 0..=config.mass_bound_samples {
        // the first center is the leaf used for the growth ratios
        let x = if sample == 0 {
            leaf.clone()
        } else {
            let depth = rng.random_range(0..=level);
            let path: Vec<bool> = (0..depth).map(|_| rng.random()).collect();
            let spread = rng.random_range(0.0..2.0) * diam[depth];
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            TreePoint { path, offset: [spread * angle.cos(), spread * angle.sin()] }
        };
        for k in 0..=level {
            let m = tree.ball_mass(&x, diam[k]);
            mass_bound_max = mass_bound_max.max(m / tree.h_at_level(k));
        }
        // atoms at distance r ± rounding are unresolved in absolute coordinates,
        // so the exact mass is compared against a slightly shrunk and grown ball
        let xa = tree.absolute(&x);
        for &k in &brute_force_levels {
            let exact = tree.ball_mass(&x, diam[k]);
            let lo = ball_mass(&mu, xa, diam[k] * (1.0 - 1e-9));
            let hi = ball_mass(&mu, xa, diam[k] * (1.0 + 1e-9));
            let miss = (lo - exact).max(exact - hi).max(0.0);
            discrepancy = discrepancy.max(miss / tree.h_at_level(k));
        }
    }

    let region = (config.center, 4.0 * diam[1]);
    let mut lambdas = Vec::new();
    let mut holder_fits = Vec::new();
    for &n in resolutions {
        let mesh = build_uniform_mesh(&Domain::UnitSquare, n)?;
        let pair = minimize_rayleigh(&mu, &mesh, params, config.seed)?;
        if !pair.converged {
            notes.push(format!("resolution {n}: eigen solve not converged (residual {:e})", pair.residual_norm));
        }
        lambdas.push(pair.lambda);
        holder_fits.push(holder_exponent_fit_in(&mesh, &pair.u, config.pair_budget, config.seed, Some(region))?);
    }
    let alpha_hats: Vec<f64> = holder_fits.iter().map(|f| f.alpha_hat).collect();
    let non_increasing = alpha_hats.windows(2).all(|w| w[1] <= w[0]);
    let growth_ok = growth.iter().all(|g| g.increasing_after_onset);
    if !non_increasing {
        notes.push(format!("alpha_hat not non-increasing across resolutions: {alpha_hats:?}"));
    }
    let pass = growth_ok && non_increasing && mass_bound_max <= MASS_BOUND;
    Ok(CounterexampleReport {
        q: params.q,
        level,
        diameters: diam,
        growth,
        brute_force_levels,
        brute_force_max_discrepancy: discrepancy,
        mass_bound_max_ratio: mass_bound_max,
        mass_bound_samples: config.mass_bound_samples,
        resolutions: resolutions.to_vec(),
        lambdas,
        alpha_hats,
        holder_fits,
        pass,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Provenance;

    #[test]
    fn sup_constant_of_constant_function() {
        let m = build_uniform_mesh(&Domain::UnitSquare, 16).unwrap();
        let u = FeFunction::interpolate(&m, |_| 3.0);
        let params = SolverParams::new(1.5, 3.0).unwrap();
        let rep = sup_bound_check(&m, &Polygon::unit_square(), &u, &[([0.5, 0.5], 0.2)], &[0.5], &params).unwrap();
        assert!((rep.max_constant - 0.5f64.powf(2.0 / 1.5)).abs() < 1e-12);
        let z = FeFunction::interpolate(&m, |x| -x[0]);
        let rep = sup_bound_check(&m, &Polygon::unit_square(), &z, &[([0.5, 0.5], 0.2)], &[0.5], &params).unwrap();
        assert_eq!(rep.entries[0].lhs, 0.0);
        assert_eq!(rep.max_constant, 0.0);
    }

    #[test]
    fn sup_check_rejects_large_balls() {
        let m = build_uniform_mesh(&Domain::UnitSquare, 8).unwrap();
        let u = FeFunction::zeros(&m);
        let params = SolverParams::default();
        assert!(sup_bound_check(&m, &Polygon::unit_square(), &u, &[([0.5, 0.5], 0.3)], &[0.5], &params).is_err());
        assert!(sup_bound_check(&m, &Polygon::unit_square(), &u, &[([0.5, 0.5], 0.2)], &[1.0], &params).is_err());
    }

    #[test]
    fn halton_balls_fit() {
        let poly = Polygon::unit_triangle();
        let balls = interior_balls(&poly, 5, 0.05);
        assert_eq!(balls.len(), 5);
        assert!(balls.iter().all(|(c, r)| poly.boundary_distance(*c) >= 2.0 * r));
    }

    #[test]
    fn formulas() {
        let b = |p, q| holder_bound(&SolverParams::new(p, q).unwrap()).unwrap();
        assert_eq!(b(1.5, 3.0), 0.999);
        assert!((b(1.5, 2.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!(b(1.999, 3.0) < 0.01);
        assert!(holder_bound(&SolverParams::new(2.0, 3.0).unwrap()).is_err());
        let e = |p, q| moser_epsilon(&SolverParams::new(p, q).unwrap()).unwrap();
        assert!((e(1.5, 3.0) - 0.5).abs() < 1e-15);
        assert!((e(1.5, 2.25) - 0.25).abs() < 1e-15);
        assert!(SolverParams::new(1.5, 1.5).is_err());
    }

    #[test]
    fn constant_function_has_no_holder_signal() {
        let m = build_uniform_mesh(&Domain::UnitSquare, 32).unwrap();
        let u = FeFunction::interpolate(&m, |_| 1.0);
        assert!(matches!(holder_exponent_fit(&m, &u, 2000, 1), Err(Error::InsufficientData(_))));
        assert!(holder_exponent_fit(&m, &u, 10, 1).is_err());
    }

    #[test]
    fn holder_fit_is_deterministic_and_scale_equivariant() {
        let m = build_uniform_mesh(&Domain::UnitSquare, 64).unwrap();
        let u = FeFunction::interpolate(&m, |x| (x[0] - 0.5).abs().powf(0.5) + x[1]);
        let a = holder_exponent_fit(&m, &u, 5000, 9).unwrap();
        let b = holder_exponent_fit(&m, &u, 5000, 9).unwrap();
        assert_eq!(a, b);
        let c = holder_exponent_fit(&m, &u.scaled(-7.0), 5000, 9).unwrap();
        assert!((a.raw_slope - c.raw_slope).abs() < 1e-9);
    }

    #[test]
    fn growth_ratio_closed_form() {
        let tree = LogCantorTree::new(3.0, 4, [0.5, 0.5], 0.25).unwrap();
        let ratio = |k: usize| tree.node_mass(k) / tree.diameters()[k].powf(0.5);
        assert!(ratio(3) > ratio(1));
    }

    #[test]
    fn dimension_check_on_lebesgue() {
        let m = build_uniform_mesh(&Domain::UnitSquare, 64).unwrap();
        let mu = crate::measure::lebesgue_measure(&m);
        let rep = dimension_consistency_check(&mu, &SolverParams::new(1.5, 3.0).unwrap(), 64, 1).unwrap();
        assert!((rep.s_target - 1.0).abs() < 1e-15);
        assert!(rep.pass);
        assert!(matches!(mu.provenance(), Provenance::Lebesgue));
    }
}
