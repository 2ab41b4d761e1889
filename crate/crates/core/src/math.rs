//! Numeric primitives: normalization, dot products, zero-shot logits and
//! softmax entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Norms at or below this are treated as the zero vector.
pub const NORM_EPS: f64 = 1e-12;

/// Tolerance on `‖v‖₂ = 1` for vectors that are required to be unit-norm.
pub const UNIT_TOL: f64 = 1e-6;

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

/// `v / ‖v‖₂`, or [`Error::ZeroVector`] when the norm is below [`NORM_EPS`].
pub fn normalize<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    let n = norm(v);
    if !n.is_finite() {
        return Err(Error::NonFinite("vector to normalize".into()));
    }
    if n <= T::of(NORM_EPS) {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|&x| x / n).collect())
}

/// Cosine similarity; zero when either side has zero norm.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let denom = norm(a) * norm(b);
    if denom <= T::of(NORM_EPS) {
        T::zero()
    } else {
        dot(a, b) / denom
    }
}

fn check_finite<T: Scalar>(values: &[T], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// A d-vector of finite scalars. Benchmark embeddings are unit-norm; the
/// ball-mixture experiments keep raw vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding<T> {
    values: Vec<T>,
}

impl<T: Scalar> Embedding<T> {
    /// Wraps raw values without normalizing them.
    pub fn new(values: Vec<T>) -> Result<Self> {
        check_finite(&values, "embedding")?;
        if values.is_empty() {
            return Err(Error::DimMismatch {
                expected: 1,
                found: 0,
            });
        }
        Ok(Self { values })
    }

    /// Normalizes `values` onto the unit sphere.
    pub fn normalized(values: Vec<T>) -> Result<Self> {
        check_finite(&values, "embedding")?;
        Self::new(normalize(&values)?)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn norm(&self) -> T {
        norm(&self.values)
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - T::one()).abs() <= T::of(UNIT_TOL)
    }

    pub fn dot(&self, other: &Embedding<T>) -> T {
        dot(&self.values, &other.values)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogitKind {
    Pre,
    Mem,
    Post,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Logits<T> {
    pub values: Vec<T>,
    pub kind: LogitKind,
}

impl<T: Scalar> Logits<T> {
    pub fn new(values: Vec<T>, kind: LogitKind) -> Self {
        Self { values, kind }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the largest logit; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }
}

pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Anything that maps an embedding to pre-adaptation class logits: the
/// zero-shot text classifier, or the linear head of the ball-mixture world.
pub trait LogitHead<T: Scalar>: Send + Sync {
    fn num_classes(&self) -> usize;
    fn dim(&self) -> usize;
    fn logits(&self, f: &[T]) -> Result<Logits<T>>;
}

/// Class text embeddings `T` (c × d, unit rows) plus the logit scale.
#[derive(Clone, Debug, PartialEq)]
pub struct TextClassifier<T> {
    rows: Vec<Embedding<T>>,
    class_names: Vec<String>,
    scale: T,
}

impl<T: Scalar> TextClassifier<T> {
    pub fn new(rows: Vec<Vec<T>>, class_names: Vec<String>, scale: T) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "classifier needs at least 2 classes, got {}",
                rows.len()
            )));
        }
        if class_names.len() != rows.len() {
            return Err(Error::DimMismatch {
                expected: rows.len(),
                found: class_names.len(),
            });
        }
        if !scale.is_finite() || scale < T::zero() {
            return Err(Error::InvalidParams(format!("logit scale {scale}")));
        }
        let d = rows[0].len();
        let mut out = Vec::with_capacity(rows.len());
        for (y, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            let e = Embedding::new(row)?;
            if !e.is_unit() {
                return Err(Error::InvalidParams(format!(
                    "text embedding of class {y} has norm {}",
                    e.norm()
                )));
            }
            out.push(e);
        }
        Ok(Self {
            rows: out,
            class_names,
            scale,
        })
    }

    /// Like [`TextClassifier::new`] but normalizes each row first.
    pub fn from_raw_rows(rows: Vec<Vec<T>>, class_names: Vec<String>, scale: T) -> Result<Self> {
        let rows = rows
            .iter()
            .map(|r| normalize(r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, class_names, scale)
    }

    pub fn rows(&self) -> &[Embedding<T>] {
        &self.rows
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn scale(&self) -> T {
        self.scale
    }
}

impl<T: Scalar> LogitHead<T> for TextClassifier<T> {
    fn num_classes(&self) -> usize {
        self.rows.len()
    }

    fn dim(&self) -> usize {
        self.rows[0].dim()
    }

    fn logits(&self, f: &[T]) -> Result<Logits<T>> {
        zero_shot_logits(f, self)
    }
}

/// `z_pre[y] = scale · ⟨f, t_y⟩`.
pub fn zero_shot_logits<T: Scalar>(f: &[T], clf: &TextClassifier<T>) -> Result<Logits<T>> {
    let d = clf.dim();
    if f.len() != d {
        return Err(Error::DimMismatch {
            expected: d,
            found: f.len(),
        });
    }
    let values = clf
        .rows
        .iter()
        .map(|t| clf.scale * dot(f, t.as_slice()))
        .collect();
    Ok(Logits::new(values, LogitKind::Pre))
}

/// Log-sum-exp split as `(max, Σ_{i≠argmax} exp(z_i − max))` so the caller can
/// use `ln_1p` on the remainder.
fn lse_parts<T: Scalar>(z: &[T]) -> (usize, T, T) {
    let top = argmax(z);
    let m = z[top];
    let rest = z
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &v)| (v - m).exp())
        .sum();
    (top, m, rest)
}

pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let (_, m, rest) = lse_parts(z);
    let lse = m + rest.ln_1p();
    z.iter().map(|&v| (v - lse).exp()).collect()
}

/// Shannon entropy (natural log) of `softmax(logits)`.
pub fn entropy<T: Scalar>(logits: &Logits<T>) -> Result<T> {
    entropy_of(&logits.values)
}

pub fn entropy_of<T: Scalar>(z: &[T]) -> Result<T> {
    if z.len() < 2 {
        return Err(Error::InvalidParams(format!(
            "entropy needs at least 2 logits, got {}",
            z.len()
        )));
    }
    check_finite(z, "logits")?;
    let (_, m, rest) = lse_parts(z);
    let lse = m + rest.ln_1p();
    let h = z
        .iter()
        .map(|&v| {
            let logp = v - lse;
            let p = logp.exp();
            if p > T::zero() {
                -p * logp
            } else {
                T::zero()
            }
        })
        .sum::<T>();
    Ok(h.max(T::zero()))
}
