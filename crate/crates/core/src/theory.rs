//! Numeric oracles for the ball-mixture analysis: ball and cap volumes, the
//! cap-ratio bounds, the convergence radius, 1-NN classification, analytic
//! and Monte-Carlo error rates, and the asymptotic memory targets.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::world::{sample_theory, TheoryWorld, WorldSpec};
use crate::error::{Error, Result};
use crate::math::{dot, norm, normalize, UNIT_TOL};
use crate::scalar::Scalar;
use crate::seeds::{derived_rng, tag};

/// Relative accuracy requested from the cap quadrature.
pub const QUAD_REL_TOL: f64 = 1e-12;

/// Volume of the unit d-ball, `π^{d/2} / Γ(d/2 + 1)`.
pub fn sphere_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    (h * PI.ln() - ln_gamma(h + 1.0)).exp()
}

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// `∫₀^θ sinᵈ φ dφ` by adaptive Simpson quadrature.
pub fn sin_power_integral(d: usize, theta: f64) -> f64 {
    if theta <= 0.0 {
        return 0.0;
    }
    let f = |x: f64| x.sin().powi(d as i32);
    // A fixed coarse pass sizes the tolerance relative to the answer.
    let n = 64;
    let h = theta / n as f64;
    let coarse: f64 = (0..n)
        .map(|i| {
            let a = i as f64 * h;
            simpson(f(a), f(a + h / 2.0), f(a + h), a, a + h)
        })
        .sum();
    let tol = QUAD_REL_TOL * coarse.abs().max(f64::MIN_POSITIVE);
    (0..n)
        .map(|i| {
            let a = i as f64 * h;
            let b = if i + 1 == n { theta } else { a + h };
            let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
            adaptive(&f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol / n as f64, 40)
        })
        .sum()
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    Ok(())
}

fn check_angle(theta: f64, max: f64) -> Result<()> {
    if !(0.0..=max).contains(&theta) {
        return Err(Error::Domain(format!("polar angle {theta} outside [0, {max}]")));
    }
    Ok(())
}

/// Volume of the cap of the unit d-ball with polar angle `theta`,
/// `π^{(d−1)/2} / Γ((d+1)/2) · ∫₀^θ sinᵈ φ dφ`.
pub fn cap_volume(d: usize, theta: f64) -> Result<f64> {
    check_dim(d)?;
    check_angle(theta, PI)?;
    let h = (d as f64 - 1.0) / 2.0;
    let coef = (h * PI.ln() - ln_gamma(h + 1.0)).exp();
    Ok(coef * sin_power_integral(d, theta))
}

/// Cap volume as a fraction of the whole ball.
pub fn cap_ratio(d: usize, theta: f64) -> Result<f64> {
    Ok(cap_volume(d, theta)? / sphere_volume(d))
}

/// Closed-form `(lower, upper)` bounds on [`cap_ratio`] for `θ ∈ [0, π/2]`.
pub fn cap_ratio_bounds(d: usize, theta: f64) -> Result<(f64, f64)> {
    check_dim(d)?;
    check_angle(theta, FRAC_PI_2)?;
    let df = d as f64;
    let inv_sqrt_pi = 1.0 / PI.sqrt();
    let power = theta.powf(df + 1.0);
    let lower = inv_sqrt_pi * (2.0 * df + 4.0).powf(-0.5) * (2.0 / PI).powf(df) * power;
    let upper = inv_sqrt_pi * (2.0 * df + 2.0).powf(-0.5) * power;
    Ok((lower, upper))
}

/// Polar angle of the cap that holds every memory entry with probability
/// at least `1 − δ` after `n` samples with queue capacity `k`:
/// `(π/2)·(8/√π · √(2d+4) · (ln(2/δ) + k) / n)^{1/(d+1)}`.
pub fn theta_radius(n: usize, k: usize, d: usize, delta: f64) -> Result<f64> {
    if n == 0 || k == 0 || d == 0 {
        return Err(Error::Domain(format!("need n, k, d ≥ 1 (got {n}, {k}, {d})")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("δ = {delta} outside (0, 1)")));
    }
    let df = d as f64;
    let inner = 8.0 / PI.sqrt() * (2.0 * df + 4.0).sqrt() * ((2.0 / delta).ln() + k as f64) / n as f64;
    Ok(FRAC_PI_2 * inner.powf(1.0 / (df + 1.0)))
}

/// Class of the entry nearest to `f` in L2; ties go to the lowest class.
pub fn onenn_oracle<T: Scalar>(f: &[T], entries: &[(usize, &[T])]) -> Result<usize> {
    let mut best: Option<(T, usize)> = None;
    for &(class, m) in entries {
        if m.len() != f.len() {
            return Err(Error::DimMismatch {
                expected: f.len(),
                found: m.len(),
            });
        }
        let d2 = f.iter().zip(m).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
        best = match best {
            Some((bd, bc)) if bd < d2 || (bd == d2 && bc <= class) => Some((bd, bc)),
            _ => Some((d2, class)),
        };
    }
    best.map(|(_, c)| c).ok_or(Error::EmptyMemory)
}

/// Exact error of the zero-bias linear classifier with unit normal `w` on the
/// ball mixture with class-1 center `mu`: the cap beyond the hyperplane at
/// height `μᵀw`, as a fraction of the ball.
pub fn analytic_error(mu: &[f64], w: &[f64]) -> Result<f64> {
    if mu.len() != w.len() {
        return Err(Error::DimMismatch {
            expected: mu.len(),
            found: w.len(),
        });
    }
    if (norm(w) - 1.0).abs() > UNIT_TOL {
        return Err(Error::Domain(format!("classifier direction has norm {}", norm(w))));
    }
    let h = dot(mu, w);
    if h >= 1.0 {
        return Ok(0.0);
    }
    cap_ratio(mu.len(), h.max(-1.0).acos())
}

/// A Monte-Carlo error estimate with its 95% normal-approximation interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub estimate: f64,
    pub half_width: f64,
    pub n_samples: usize,
}

impl ErrorReport {
    pub fn from_counts(errors: usize, n: usize) -> Self {
        let p = if n == 0 { 0.0 } else { errors as f64 / n as f64 };
        let half_width = if n == 0 {
            0.0
        } else {
            1.96 * (p * (1.0 - p) / n as f64).sqrt()
        };
        Self {
            estimate: p,
            half_width,
            n_samples: n,
        }
    }
}

fn count_errors<P, R>(predictor: &P, world: &TheoryWorld, n: usize, offset: usize, rng: &mut R) -> Result<usize>
where
    P: Fn(&[f64]) -> usize + ?Sized,
    R: Rng + ?Sized,
{
    let mut errors = 0;
    for i in 0..n {
        // Classes alternate, so every estimate is over a balanced sample.
        let y = (offset + i) % 2;
        let f = sample_theory(world, y, None, rng)?;
        if predictor(&f) != y {
            errors += 1;
        }
    }
    Ok(errors)
}

/// Error of `predictor` on `n` fresh in-distribution samples with balanced
/// classes.
pub fn mc_error<P, R>(predictor: P, world: &TheoryWorld, n: usize, rng: &mut R) -> Result<ErrorReport>
where
    P: Fn(&[f64]) -> usize,
    R: Rng + ?Sized,
{
    let errors = count_errors(&predictor, world, n, 0, rng)?;
    Ok(ErrorReport::from_counts(errors, n))
}

pub const MC_CHUNK: usize = 1 << 14;

/// Parallel [`mc_error`]: fixed-size chunks each draw from their own derived
/// generator, so the result depends only on `seed`, never on thread count.
pub fn mc_error_par<P>(predictor: P, world: &TheoryWorld, n: usize, seed: u64) -> Result<ErrorReport>
where
    P: Fn(&[f64]) -> usize + Sync,
{
    let chunks = n.div_ceil(MC_CHUNK);
    let errors = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(n - c * MC_CHUNK);
            let mut rng = derived_rng(seed, tag::MC_CHUNK, c as u64);
            count_errors(&predictor, world, len, c * MC_CHUNK, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(ErrorReport::from_counts(errors, n))
}

/// Limit points of the two class memories, `(m*₀, m*₁) = (−μ − w, μ + w)`.
pub fn asymptotic_targets(world: &TheoryWorld) -> [Vec<f64>; 2] {
    let m1: Vec<f64> = world.mu().iter().zip(world.w_pre()).map(|(m, w)| m + w).collect();
    let m0 = m1.iter().map(|v| -v).collect();
    [m0, m1]
}

/// Normal of the bisector between the asymptotic targets,
/// `normalize(μ + w_pre)`.
pub fn w_asym(world: &TheoryWorld) -> Result<Vec<f64>> {
    normalize(&asymptotic_targets(world)[1])
}

/// ε_asym by Monte Carlo: the 1-NN rule over the frozen targets.
pub fn asymptotic_error_mc(world: &TheoryWorld, n: usize, seed: u64) -> Result<ErrorReport> {
    let [m0, m1] = asymptotic_targets(world);
    mc_error_par(
        |f: &[f64]| onenn_oracle(f, &[(0, m0.as_slice()), (1, m1.as_slice())]).expect("two targets"),
        world,
        n,
        seed,
    )
}

/// Error of the world's own logistic pre-classifier (with its bias).
pub fn pre_error_mc(world: &TheoryWorld, n: usize, seed: u64) -> Result<ErrorReport> {
    let head = world.head();
    mc_error_par(|f: &[f64]| head.predict(f), world, n, seed)
}

/// A d-dimensional world with `μ = ‖μ‖·e₁`, zero bias and `w_pre` in the
/// (e₁, e₂) plane, tilted until [`analytic_error`] equals `error_rate`.
pub fn world_with_error_rate(d: usize, mu_norm: f64, error_rate: f64, t_scale: f64) -> Result<TheoryWorld> {
    if d < 2 {
        return Err(Error::Domain("a tilted classifier needs d ≥ 2".into()));
    }
    if mu_norm.is_nan() || mu_norm <= 0.0 {
        return Err(Error::Domain(format!("‖μ‖ = {mu_norm} must be positive")));
    }
    let best = analytic_error_at(d, mu_norm)?;
    if !(error_rate > best && error_rate < 0.5) {
        return Err(Error::Domain(format!(
            "error rate {error_rate} not reachable: must lie in ({best}, 0.5)"
        )));
    }
    // Error decreases in h = μᵀw on (0, min(‖μ‖, 1)).
    let (mut lo, mut hi) = (0.0, mu_norm.min(1.0));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if analytic_error_at(d, mid)? > error_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let cos = (0.5 * (lo + hi) / mu_norm).clamp(-1.0, 1.0);
    let mut mu = vec![0.0; d];
    mu[0] = mu_norm;
    let mut w = vec![0.0; d];
    w[0] = cos;
    w[1] = (1.0 - cos * cos).sqrt();
    TheoryWorld::new(WorldSpec {
        mu,
        w_pre: w,
        b_pre: 0.0,
        t_scale,
        ood_centers: Vec::new(),
    })
}

fn analytic_error_at(d: usize, h: f64) -> Result<f64> {
    if h >= 1.0 {
        return Ok(0.0);
    }
    cap_ratio(d, h.max(-1.0).acos())
}

/// `count` OOD domains whose class centers are the ID centers shifted by
/// `distance` along directions orthogonal to both `μ` and `w_pre`, cycling
/// through the orthogonal complement with alternating sign.
pub fn orthogonal_ood_centers(world: &TheoryWorld, count: usize, distance: f64) -> Result<Vec<[Vec<f64>; 2]>> {
    let d = world.dim();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in [world.mu(), world.w_pre()] {
        push_orthogonal(&mut basis, v.to_vec());
    }
    let spanned = basis.len();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        push_orthogonal(&mut basis, e);
    }
    let complement = &basis[spanned..];
    if complement.is_empty() && count > 0 {
        return Err(Error::Domain(format!(
            "no direction orthogonal to μ and w_pre in d = {d}"
        )));
    }
    Ok((0..count)
        .map(|j| {
            let dir = &complement[(j / 2) % complement.len()];
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let shift = |c: Vec<f64>| -> Vec<f64> {
                c.iter().zip(dir).map(|(a, e)| a + sign * distance * e).collect()
            };
            let c1 = world.mu().to_vec();
            let c0: Vec<f64> = c1.iter().map(|v| -v).collect();
            [shift(c0), shift(c1)]
        })
        .collect())
}

fn push_orthogonal(basis: &mut Vec<Vec<f64>>, mut v: Vec<f64>) {
    for b in basis.iter() {
        let p = dot(&v, b);
        v.iter_mut().zip(b).for_each(|(x, e)| *x -= p * e);
    }
    let n = norm(&v);
    if n > 1e-9 {
        basis.push(v.into_iter().map(|x| x / n).collect());
    }
}
