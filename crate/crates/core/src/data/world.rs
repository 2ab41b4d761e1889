//! The binary ball-mixture world: class `y` is uniform in the unit ball
//! around `(2y − 1)·μ`, pre-classified by a logistic linear head.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{dot, norm, LogitHead, LogitKind, Logits, UNIT_TOL};
use crate::scalar::Scalar;

fn default_t_scale() -> f64 {
    100.0
}

/// Unvalidated world description, as written in world spec files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub mu: Vec<f64>,
    pub w_pre: Vec<f64>,
    #[serde(default)]
    pub b_pre: f64,
    #[serde(default = "default_t_scale")]
    pub t_scale: f64,
    /// Class-0 and class-1 centers of each out-of-distribution domain.
    #[serde(default)]
    pub ood_centers: Vec<[Vec<f64>; 2]>,
}

/// A validated ball-mixture world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorldSpec", into = "WorldSpec")]
pub struct TheoryWorld {
    spec: WorldSpec,
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl TryFrom<WorldSpec> for TheoryWorld {
    type Error = Error;

    fn try_from(spec: WorldSpec) -> Result<Self> {
        TheoryWorld::new(spec)
    }
}

impl From<TheoryWorld> for WorldSpec {
    fn from(w: TheoryWorld) -> Self {
        w.spec
    }
}

impl TheoryWorld {
    pub fn new(spec: WorldSpec) -> Result<Self> {
        let d = spec.mu.len();
        if d == 0 {
            return Err(Error::InvalidParams("mu must have at least one component".into()));
        }
        let all_finite = spec
            .mu
            .iter()
            .chain(&spec.w_pre)
            .chain(spec.ood_centers.iter().flatten().flatten())
            .chain([&spec.b_pre, &spec.t_scale])
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::NonFinite("world spec".into()));
        }
        if spec.w_pre.len() != d {
            return Err(Error::DimMismatch {
                expected: d,
                found: spec.w_pre.len(),
            });
        }
        for c in spec.ood_centers.iter().flatten() {
            if c.len() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    found: c.len(),
                });
            }
        }
        if spec.t_scale <= 0.0 {
            return Err(Error::InvalidParams(format!("t_scale = {} must be positive", spec.t_scale)));
        }
        let w_norm = norm(&spec.w_pre);
        if (w_norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::Assumption {
                assumption: "unit classifier",
                detail: format!("‖w_pre‖ = {} ≠ 1", fmt_num(w_norm)),
            });
        }
        let mu_w = dot(&spec.mu, &spec.w_pre);
        if mu_w <= 0.0 {
            return Err(Error::Assumption {
                assumption: "classifier alignment",
                detail: format!("μᵀw_pre = {} ≤ 0", fmt_num(mu_w)),
            });
        }
        if !(-mu_w - 1.0 < spec.b_pre && spec.b_pre < mu_w + 1.0) {
            return Err(Error::Assumption {
                assumption: "classifier bias",
                detail: format!(
                    "b_pre = {} outside ({}, {})",
                    fmt_num(spec.b_pre),
                    fmt_num(-mu_w - 1.0),
                    fmt_num(mu_w + 1.0)
                ),
            });
        }
        let neg_mu: Vec<f64> = spec.mu.iter().map(|v| -v).collect();
        for pair in &spec.ood_centers {
            for (y, center) in [(0, &neg_mu), (1, &spec.mu)] {
                for (yp, ood) in pair.iter().enumerate() {
                    let gap = dist(center, ood);
                    if gap <= 4.0 {
                        let sub = ['₀', '₁'];
                        return Err(Error::Assumption {
                            assumption: "OOD separation",
                            detail: format!(
                                "‖μ{} − μ′{}‖ = {} ≤ 4",
                                sub[y],
                                sub[yp],
                                fmt_num(gap)
                            ),
                        });
                    }
                }
            }
        }
        Ok(Self { spec })
    }

    pub fn dim(&self) -> usize {
        self.spec.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.spec.mu
    }

    pub fn w_pre(&self) -> &[f64] {
        &self.spec.w_pre
    }

    pub fn b_pre(&self) -> f64 {
        self.spec.b_pre
    }

    pub fn t_scale(&self) -> f64 {
        self.spec.t_scale
    }

    pub fn ood_centers(&self) -> &[[Vec<f64>; 2]] {
        &self.spec.ood_centers
    }

    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    /// A copy with a different set of OOD domains.
    pub fn with_ood_centers(&self, ood_centers: Vec<[Vec<f64>; 2]>) -> Result<Self> {
        Self::new(WorldSpec {
            ood_centers,
            ..self.spec.clone()
        })
    }

    /// Center of class `y` in the in-distribution domain, or in OOD domain
    /// `ood` when given.
    pub fn center(&self, y: usize, ood: Option<usize>) -> Result<Vec<f64>> {
        if y > 1 {
            return Err(Error::BadClass { class: y, classes: 2 });
        }
        match ood {
            None => {
                let sign = if y == 1 { 1.0 } else { -1.0 };
                Ok(self.spec.mu.iter().map(|v| sign * v).collect())
            }
            Some(i) => self
                .spec
                .ood_centers
                .get(i)
                .map(|pair| pair[y].clone())
                .ok_or_else(|| {
                    Error::InvalidParams(format!(
                        "OOD domain {i} requested but the world has {}",
                        self.spec.ood_centers.len()
                    ))
                }),
        }
    }

    pub fn head(&self) -> TheoryHead {
        TheoryHead {
            w: self.spec.w_pre.clone(),
            b: self.spec.b_pre,
            t: self.spec.t_scale,
        }
    }
}

/// Uniform sample from the unit d-ball.
pub fn sample_unit_ball<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let dir = loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&g);
        if n > 1e-12 {
            break g.into_iter().map(|x| x / n).collect::<Vec<_>>();
        }
    };
    let u: f64 = rng.random();
    let r = u.powf(1.0 / d as f64);
    dir.into_iter().map(|x| r * x).collect()
}

/// One raw (unnormalized) embedding of class `y`, from the ID domain or from
/// OOD domain `ood`.
pub fn sample_theory<R: Rng + ?Sized>(
    world: &TheoryWorld,
    y: usize,
    ood: Option<usize>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let center = world.center(y, ood)?;
    let offset = sample_unit_ball(world.dim(), rng);
    Ok(center.iter().zip(offset).map(|(c, o)| c + o).collect())
}

/// The logistic linear pre-classifier `z = ⟨f, w⟩ + b`, `p̂₁ = σ(t·z)`.
/// As a [`LogitHead`] it emits `(−t·z/2, +t·z/2)`, whose softmax is exactly
/// `(p̂₀, p̂₁)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoryHead {
    w: Vec<f64>,
    b: f64,
    t: f64,
}

impl TheoryHead {
    pub fn z(&self, f: &[f64]) -> f64 {
        dot(f, &self.w) + self.b
    }

    pub fn p1(&self, f: &[f64]) -> f64 {
        1.0 / (1.0 + (-self.t * self.z(f)).exp())
    }

    pub fn predict(&self, f: &[f64]) -> usize {
        usize::from(self.z(f) > 0.0)
    }

    pub fn entropy(&self, f: &[f64]) -> f64 {
        let half = 0.5 * self.t * self.z(f);
        crate::math::entropy_of(&[-half, half]).expect("two finite logits")
    }
}

impl<T: Scalar> LogitHead<T> for TheoryHead {
    fn num_classes(&self) -> usize {
        2
    }

    fn dim(&self) -> usize {
        self.w.len()
    }

    fn logits(&self, f: &[T]) -> Result<Logits<T>> {
        if f.len() != self.w.len() {
            return Err(Error::DimMismatch {
                expected: self.w.len(),
                found: f.len(),
            });
        }
        let z = f
            .iter()
            .zip(&self.w)
            .fold(T::zero(), |acc, (&x, &w)| acc + x * T::of(w))
            + T::of(self.b);
        let half = T::of(0.5 * self.t) * z;
        Ok(Logits::new(vec![-half, half], LogitKind::Pre))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use approx::assert_abs_diff_eq;

    fn world(mu: Vec<f64>, w: Vec<f64>) -> TheoryWorld {
        TheoryWorld::new(WorldSpec {
            mu,
            w_pre: w,
            b_pre: 0.0,
            t_scale: 100.0,
            ood_centers: vec![],
        })
        .unwrap()
    }

    #[test]
    fn one_dimensional_ball_is_an_interval() {
        let w = world(vec![2.0], vec![1.0]);
        let mut rng = seeds::rng(1);
        for _ in 0..10_000 {
            let x = sample_theory(&w, 1, None, &mut rng).unwrap()[0];
            assert!((1.0..=3.0).contains(&x));
        }
    }

    #[test]
    fn head_boundary_and_saturation() {
        let w = world(vec![0.8, 0.0], vec![1.0, 0.0]);
        let h = w.head();
        assert_abs_diff_eq!(h.p1(&[0.0, 0.3]), 0.5);
        assert_abs_diff_eq!(h.entropy(&[0.0, 0.3]), 2f64.ln(), epsilon = 1e-15);
        assert!(h.entropy(&[5.0, 0.0]) < 1e-100);
        assert_eq!(h.predict(&[0.1, 0.0]), 1);
        assert_eq!(h.predict(&[-0.1, 0.0]), 0);
        // the 2-logit form reproduces the logistic probability
        let z: Logits<f64> = h.logits(&[0.013, 0.2]).unwrap();
        let p = crate::math::softmax(&z.values);
        assert_abs_diff_eq!(p[1], h.p1(&[0.013, 0.2]), epsilon = 1e-14);
    }

    #[test]
    fn separable_world_has_zero_error() {
        let w = world(vec![1.2, 0.0, 0.0], vec![1.0, 0.0, 0.0]);
        let h = w.head();
        let mut rng = seeds::rng(2);
        for i in 0..100_000 {
            let y = i % 2;
            let f = sample_theory(&w, y, None, &mut rng).unwrap();
            assert_eq!(h.predict(&f), y);
        }
    }

    #[test]
    fn assumption_violations_are_named() {
        let base = WorldSpec {
            mu: vec![1.0, 0.0],
            w_pre: vec![1.0, 0.0],
            b_pre: 0.0,
            t_scale: 100.0,
            ood_centers: vec![],
        };
        let e = TheoryWorld::new(WorldSpec {
            w_pre: vec![-1.0, 0.0],
            ..base.clone()
        })
        .unwrap_err();
        assert!(e.to_string().starts_with("classifier alignment"), "{e}");
        let e = TheoryWorld::new(WorldSpec {
            b_pre: 2.5,
            ..base.clone()
        })
        .unwrap_err();
        assert!(e.to_string().starts_with("classifier bias"), "{e}");
        let e = TheoryWorld::new(WorldSpec {
            ood_centers: vec![[vec![-1.0, 3.0], vec![4.2, 0.0]]],
            ..base.clone()
        })
        .unwrap_err();
        assert_eq!(e.to_string(), "OOD separation assumption violated: ‖μ₀ − μ′₀‖ = 3 ≤ 4");
        let e = TheoryWorld::new(WorldSpec {
            w_pre: vec![0.5, 0.0],
            ..base.clone()
        })
        .unwrap_err();
        assert!(e.to_string().starts_with("unit classifier"), "{e}");
        assert!(TheoryWorld::new(WorldSpec {
            ood_centers: vec![[vec![-1.0, 5.0], vec![1.0, 5.0]]],
            ..base
        })
        .is_ok());
    }

    #[test]
    fn spec_roundtrips_through_toml() {
        let w = TheoryWorld::new(WorldSpec {
            mu: vec![0.8, 0.0],
            w_pre: vec![0.6, 0.8],
            b_pre: 0.1,
            t_scale: 100.0,
            ood_centers: vec![[vec![-0.8, 6.0], vec![0.8, 6.0]]],
        })
        .unwrap();
        let text = toml::to_string(&w).unwrap();
        let back: TheoryWorld = toml::from_str(&text).unwrap();
        assert_eq!(back, w);
        assert!(toml::from_str::<TheoryWorld>("mu = [1.0]\nw_pre = [-1.0]").is_err());
    }
}
