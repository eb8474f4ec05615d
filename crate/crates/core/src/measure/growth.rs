use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DiscreteMeasure;
use crate::error::{Error, Result};
use crate::mesh::{convex_hull, dist, Point};
use crate::numeric::{compensated_sum, linear_fit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub fitted_exponent: f64,
    pub fitted_constant: f64,
    pub radii_range: (f64, f64),
    /// `sup μ(B(x,r)) / r^{fitted_exponent}` over the sampled balls.
    pub max_ratio: f64,
    pub sample_count: usize,
    pub skipped_pairs: usize,
}

/// `count` radii from `r_max` down to `r_min`, equally spaced in `log r`.
pub fn geometric_radii(r_max: f64, r_min: f64, count: usize) -> Vec<f64> {
    let ratio = (r_min / r_max).powf(1.0 / (count.saturating_sub(1).max(1)) as f64);
    (0..count).map(|k| r_max * ratio.powi(k as i32)).collect()
}

/// `count` distinct atom locations drawn uniformly with a seeded generator.
pub fn sample_centers(mu: &DiscreteMeasure, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = count.min(mu.len());
    let mut idx = sample(&mut rng, mu.len(), count).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| mu.atoms()[i].x).collect()
}

/// Ball centers and radii adapted to a measure.
///
/// Radii run geometrically from `0.15 · diam` of the atoms' convex hull down
/// to four times the median nearest-neighbour spacing of the atoms (but at
/// most a factor 30). Centers are atoms at least half the largest radius away
/// from the hull boundary, which keeps the truncation of balls near the edge
/// of a two-dimensional support from biasing the slope.
pub fn growth_setup(mu: &DiscreteMeasure, count: usize, seed: u64) -> Result<(Vec<Point>, Vec<f64>)> {
    growth_setup_with(mu, count, seed, 0.15, 0.5)
}

fn growth_setup_with(
    mu: &DiscreteMeasure,
    count: usize,
    seed: u64,
    r_frac: f64,
    margin: f64,
) -> Result<(Vec<Point>, Vec<f64>)> {
    let pts: Vec<Point> = mu.atoms().iter().map(|a| a.x).collect();
    let hull = convex_hull(&pts)
        .ok_or_else(|| Error::InsufficientData("atoms are collinear; no planar growth fit possible".into()))?;
    let r_max = r_frac * hull.diameter();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = sample(&mut rng, pts.len(), pts.len().min(64)).into_vec();
    let mut spacing: Vec<f64> = probe
        .iter()
        .map(|&i| {
            pts.iter().map(|&y| dist(y, pts[i])).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min)
        })
        .filter(|d| d.is_finite())
        .collect();
    if spacing.is_empty() {
        return Err(Error::InsufficientData("all atoms coincide".into()));
    }
    spacing.sort_by(f64::total_cmp);
    let r_min = (4.0 * spacing[spacing.len() / 2]).max(r_max / 30.0);
    if r_min > 0.25 * r_max {
        return Err(Error::InsufficientData(format!(
            "atom spacing {:.3e} leaves less than a factor 4 of radii below {r_max:.3e}",
            spacing[spacing.len() / 2]
        )));
    }
    let eligible: Vec<usize> = (0..pts.len()).filter(|&i| hull.boundary_distance(pts[i]) >= margin * r_max).collect();
    if eligible.len() < 32 {
        return Err(Error::InsufficientData(format!("only {} atoms lie {r_max:.3e} inside the hull", eligible.len())));
    }
    let mut pick = sample(&mut rng, eligible.len(), count.min(eligible.len())).into_vec();
    pick.sort_unstable();
    let centers = pick.into_iter().map(|k| pts[eligible[k]]).collect();
    Ok((centers, geometric_radii(r_max, r_min, 10)))
}

/// Least-squares slope of `log μ(B(x,r))` against `log r`, per center, averaged.
pub fn fit_growth_exponent(mu: &DiscreteMeasure, centers: &[Point], radii: &[f64]) -> Result<GrowthReport> {
    if radii.len() < 8 {
        return Err(Error::InvalidParams(format!("need at least 8 radii, got {}", radii.len())));
    }
    if centers.len() < 32 {
        return Err(Error::InvalidParams(format!("need at least 32 centers, got {}", centers.len())));
    }
    let ratio = radii[1] / radii[0];
    if !(radii[radii.len() - 1] > 0.0 && ratio < 1.0)
        || radii.windows(2).any(|w| ((w[1] / w[0]) - ratio).abs() > 1e-9 * ratio)
    {
        return Err(Error::InvalidParams("radii must form a strictly decreasing geometric sequence".into()));
    }
    let log_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let mut slopes = Vec::new();
    let mut intercepts = Vec::new();
    let mut skipped = 0usize;
    let mut max_ratio_data = Vec::new();
    for &c in centers {
        // distances once per center, then cumulative masses per radius
        let mut pairs: Vec<(f64, f64)> = mu.atoms().iter().map(|a| (dist(a.x, c), a.w)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (k, &r) in radii.iter().enumerate() {
            let inside = pairs.partition_point(|(d, _)| *d <= r);
            let m = compensated_sum(pairs[..inside].iter().map(|(_, w)| *w));
            if m > 0.0 {
                xs.push(log_r[k]);
                ys.push(m.ln());
                max_ratio_data.push((r, m));
            } else {
                skipped += 1;
            }
        }
        if let Some((s, b, _)) = linear_fit(&xs, &ys).filter(|_| xs.len() >= 3) {
            slopes.push(s);
            intercepts.push(b);
        }
    }
    let total = centers.len() * radii.len();
    if 2 * skipped > total || slopes.is_empty() {
        return Err(Error::InsufficientData(format!("{skipped} of {total} sampled balls are empty")));
    }
    let n = slopes.len() as f64;
    let fitted_exponent = compensated_sum(slopes.iter().copied()) / n;
    let fitted_constant = (compensated_sum(intercepts.iter().copied()) / n).exp();
    let max_ratio = max_ratio_data.iter().map(|(r, m)| m / r.powf(fitted_exponent)).fold(0.0, f64::max);
    Ok(GrowthReport {
        fitted_exponent,
        fitted_constant,
        radii_range: (radii[radii.len() - 1], radii[0]),
        max_ratio,
        sample_count: slopes.len(),
        skipped_pairs: skipped,
    })
}

/// `sup μ(B(x,r)) / r^s` over all sampled balls, for a prescribed exponent.
pub fn max_growth_ratio(mu: &DiscreteMeasure, centers: &[Point], radii: &[f64], s: f64) -> f64 {
    let mut best = 0.0f64;
    for &c in centers {
        for &r in radii {
            best = best.max(super::ball_mass(mu, c, r) / r.powf(s));
        }
    }
    best
}
