//! Local priority-queue memory, prototypes, external memory and the
//! entropy-gated merge.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::math::{normalize, Embedding};
use crate::scalar::Scalar;

/// Which geometry embeddings live in. Benchmark streams are L2-normalized;
/// the ball-mixture experiments work on raw vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Space {
    #[default]
    UnitSphere,
    Raw,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryEntry<T> {
    pub embedding: Embedding<T>,
    pub entropy: T,
    pub seq: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InsertOutcome<T> {
    Inserted,
    Replaced(MemoryEntry<T>),
    Rejected,
}

fn by_entropy_then_seq<T: Scalar>(a: &MemoryEntry<T>, b: &MemoryEntry<T>) -> Ordering {
    a.entropy
        .partial_cmp(&b.entropy)
        .unwrap_or(Ordering::Equal)
        .then(a.seq.cmp(&b.seq))
}

/// `c` bounded queues of capacity `k_l`, each kept sorted from low to high
/// entropy. A full queue replaces its highest-entropy entry when a strictly
/// more confident embedding arrives; among equal entropies the earlier entry
/// survives.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalMemory<T> {
    queues: Vec<Vec<MemoryEntry<T>>>,
    capacity: usize,
    next_seq: u64,
}

impl<T: Scalar> LocalMemory<T> {
    pub fn new(num_classes: usize, capacity: usize) -> Result<Self> {
        if num_classes == 0 || capacity == 0 {
            return Err(Error::InvalidParams(format!(
                "local memory needs classes >= 1 and capacity >= 1 (got {num_classes}, {capacity})"
            )));
        }
        Ok(Self {
            queues: vec![Vec::with_capacity(capacity); num_classes],
            capacity,
            next_seq: 0,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.queues.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn queue(&self, class: usize) -> &[MemoryEntry<T>] {
        &self.queues[class]
    }

    pub fn queues(&self) -> &[Vec<MemoryEntry<T>>] {
        &self.queues
    }

    pub fn len(&self) -> usize {
        self.queues.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(Vec::is_empty)
    }

    pub fn update(
        &mut self,
        embedding: Embedding<T>,
        class: usize,
        entropy: T,
    ) -> Result<InsertOutcome<T>> {
        if class >= self.queues.len() {
            return Err(Error::BadClass {
                class,
                classes: self.queues.len(),
            });
        }
        if !entropy.is_finite() || entropy < T::zero() {
            return Err(Error::InvalidEntropy(entropy.as_f64()));
        }
        let queue = &mut self.queues[class];
        let entry = MemoryEntry {
            embedding,
            entropy,
            seq: self.next_seq,
        };
        let outcome = if queue.len() < self.capacity {
            InsertOutcome::Inserted
        } else {
            // sorted ascending, so the last entry is the worst (latest among ties)
            let worst = queue.last().expect("full queue is non-empty");
            if entropy < worst.entropy {
                InsertOutcome::Replaced(queue.pop().expect("checked above"))
            } else {
                return Ok(InsertOutcome::Rejected);
            }
        };
        self.next_seq += 1;
        let at = queue.partition_point(|e| by_entropy_then_seq(e, &entry) == Ordering::Less);
        queue.insert(at, entry);
        Ok(outcome)
    }
}

/// Entropy-weighted prototype of one class queue.
///
/// Weights are `exp(−γ·H)`. On the unit sphere the weighted sum is
/// normalized; in raw space the weighted mean is returned so the prototype
/// stays inside the data's support. `Ok(None)` for an empty queue and
/// [`Error::ZeroVector`] when the weighted sum cancels out.
pub fn compute_prototype<T: Scalar>(
    queue: &[MemoryEntry<T>],
    gamma: T,
    space: Space,
) -> Result<Option<Embedding<T>>> {
    if gamma < T::zero() || !gamma.is_finite() {
        return Err(Error::InvalidParams(format!("gamma {gamma}")));
    }
    let Some(first) = queue.first() else {
        return Ok(None);
    };
    let d = first.embedding.dim();
    let h_min = queue
        .iter()
        .map(|e| e.entropy)
        .fold(T::infinity(), T::min);
    let mut acc = vec![T::zero(); d];
    let mut total = T::zero();
    for e in queue {
        if e.embedding.dim() != d {
            return Err(Error::DimMismatch {
                expected: d,
                found: e.embedding.dim(),
            });
        }
        // shifting all log-weights by γ·h_min cancels in both normalizations
        let w = (-gamma * (e.entropy - h_min)).exp();
        total = total + w;
        for (a, &x) in acc.iter_mut().zip(e.embedding.as_slice()) {
            *a = *a + w * x;
        }
    }
    let values = match space {
        Space::UnitSphere => normalize(&acc)?,
        Space::Raw => acc.into_iter().map(|a| a / total).collect(),
    };
    Embedding::new(values).map(Some)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExternalEntry<T> {
    pub origin: usize,
    pub embedding: Embedding<T>,
    pub entropy: T,
    pub similarity: T,
}

/// Per-class foreign prototypes downloaded from the server.
#[derive(Clone, Debug)]
pub struct ExternalMemory<T> {
    owner: usize,
    capacity: usize,
    lists: Vec<Vec<ExternalEntry<T>>>,
}

impl<T: Scalar> ExternalMemory<T> {
    pub fn empty(owner: usize, num_classes: usize, capacity: usize) -> Self {
        Self {
            owner,
            capacity,
            lists: vec![Vec::new(); num_classes],
        }
    }

    /// Builds the memory from per-class downloads, rejecting lists that break
    /// the size bound or contain the owner's own prototype.
    pub fn from_lists(
        owner: usize,
        capacity: usize,
        lists: Vec<Vec<ExternalEntry<T>>>,
    ) -> Result<Self> {
        for list in &lists {
            if list.len() > capacity {
                return Err(Error::InvalidParams(format!(
                    "external list of {} entries exceeds k_e = {capacity}",
                    list.len()
                )));
            }
            if list.iter().any(|e| e.origin == owner) {
                return Err(Error::InvalidParams(format!(
                    "external memory of client {owner} contains its own prototype"
                )));
            }
        }
        Ok(Self {
            owner,
            capacity,
            lists,
        })
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn list(&self, class: usize) -> &[ExternalEntry<T>] {
        &self.lists[class]
    }

    pub fn len(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Local { seq: u64 },
    External { origin: usize, rank: usize },
}

impl Source {
    fn rank_key(self) -> (u8, u64) {
        match self {
            Source::Local { seq } => (0, seq),
            Source::External { rank, .. } => (1, rank as u64),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergedEntry<'a, T> {
    pub embedding: &'a Embedding<T>,
    pub entropy: T,
    pub source: Source,
}

/// Per-class union of local and external memory cut to the `k_l` most
/// confident members, sorted by ascending entropy.
#[derive(Clone, Debug)]
pub struct MergedMemory<'a, T> {
    classes: Vec<Vec<MergedEntry<'a, T>>>,
}

impl<'a, T: Scalar> MergedMemory<'a, T> {
    pub fn from_classes(classes: Vec<Vec<MergedEntry<'a, T>>>) -> Self {
        Self { classes }
    }

    pub fn class(&self, y: usize) -> &[MergedEntry<'a, T>] {
        &self.classes[y]
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn len(&self) -> usize {
        self.classes.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Keeps the `k_l` lowest-entropy entries of `local ∪ external` per class.
/// Exact entropy ties favour local entries, then lower sequence number.
pub fn merge<'a, T: Scalar>(
    local: &'a LocalMemory<T>,
    external: &'a ExternalMemory<T>,
    k_l: usize,
) -> MergedMemory<'a, T> {
    let classes = (0..local.num_classes())
        .map(|y| {
            let mut cands: Vec<MergedEntry<'a, T>> = local
                .queue(y)
                .iter()
                .map(|e| MergedEntry {
                    embedding: &e.embedding,
                    entropy: e.entropy,
                    source: Source::Local { seq: e.seq },
                })
                .collect();
            if y < external.lists.len() {
                cands.extend(external.lists[y].iter().enumerate().map(|(rank, e)| {
                    MergedEntry {
                        embedding: &e.embedding,
                        entropy: e.entropy,
                        source: Source::External {
                            origin: e.origin,
                            rank,
                        },
                    }
                }));
            }
            cands.sort_by(|a, b| {
                a.entropy
                    .partial_cmp(&b.entropy)
                    .unwrap_or(Ordering::Equal)
                    .then(a.source.rank_key().cmp(&b.source.rank_key()))
            });
            cands.truncate(k_l);
            cands
        })
        .collect();
    MergedMemory { classes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn e(v: &[f64]) -> Embedding<f64> {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn entropies(q: &[MemoryEntry<f64>]) -> Vec<f64> {
        q.iter().map(|e| e.entropy).collect()
    }

    #[test]
    fn update_examples() {
        let mut m = LocalMemory::new(2, 2).unwrap();
        assert_eq!(m.update(e(&[1.0, 0.0]), 0, 0.5).unwrap(), InsertOutcome::Inserted);
        assert_eq!(m.queue(0).len(), 1);
        m.update(e(&[0.0, 1.0]), 0, 0.9).unwrap();
        match m.update(e(&[0.6, 0.8]), 0, 0.7).unwrap() {
            InsertOutcome::Replaced(old) => assert_eq!(old.entropy, 0.9),
            other => panic!("expected replacement, got {other:?}"),
        }
        assert_eq!(entropies(m.queue(0)), vec![0.5, 0.7]);
        assert_eq!(m.update(e(&[0.8, 0.6]), 0, 0.8).unwrap(), InsertOutcome::Rejected);
        assert_eq!(entropies(m.queue(0)), vec![0.5, 0.7]);
        assert!(matches!(
            m.update(e(&[1.0, 0.0]), 2, 0.1),
            Err(Error::BadClass { class: 2, classes: 2 })
        ));
        assert!(m.update(e(&[1.0, 0.0]), 0, -0.1).is_err());
    }

    #[test]
    fn ties_keep_earlier_entries() {
        let mut m = LocalMemory::new(1, 2).unwrap();
        m.update(e(&[1.0, 0.0]), 0, 0.5).unwrap();
        m.update(e(&[0.0, 1.0]), 0, 0.5).unwrap();
        assert_eq!(m.update(e(&[0.6, 0.8]), 0, 0.5).unwrap(), InsertOutcome::Rejected);
        let seqs: Vec<u64> = m.queue(0).iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![0, 1]);
        // a better entry evicts the later of two tied worst entries
        match m.update(e(&[0.6, 0.8]), 0, 0.1).unwrap() {
            InsertOutcome::Replaced(old) => assert_eq!(old.seq, 1),
            other => panic!("{other:?}"),
        }
    }

    fn entry(v: &[f64], h: f64, seq: u64) -> MemoryEntry<f64> {
        MemoryEntry {
            embedding: e(v),
            entropy: h,
            seq,
        }
    }

    #[test]
    fn prototype_examples() {
        let g = 1.0;
        assert_eq!(compute_prototype::<f64>(&[], g, Space::UnitSphere).unwrap(), None);

        let single = [entry(&[0.6, 0.8], 0.3, 0)];
        let p = compute_prototype(&single, g, Space::UnitSphere).unwrap().unwrap();
        assert_abs_diff_eq!(p.as_slice()[0], 0.6, epsilon = 1e-15);

        let s = 0.5f64.sqrt();
        let two = [entry(&[1.0, 0.0], 0.4, 0), entry(&[0.0, 1.0], 0.4, 1)];
        let p = compute_prototype(&two, g, Space::UnitSphere).unwrap().unwrap();
        assert_abs_diff_eq!(p.as_slice()[0], s, epsilon = 1e-15);
        assert_abs_diff_eq!(p.as_slice()[1], s, epsilon = 1e-15);

        let uneven = [entry(&[1.0, 0.0], 0.1, 0), entry(&[0.0, 1.0], 0.6, 1)];
        let p = compute_prototype(&uneven, 0.0, Space::UnitSphere).unwrap().unwrap();
        assert_abs_diff_eq!(p.as_slice()[0], s, epsilon = 1e-15);

        // exp(-ln 2) = 0.5, then normalize by sqrt(1.25)
        let weighted = [entry(&[1.0, 0.0], 0.0, 0), entry(&[0.0, 1.0], 2f64.ln(), 1)];
        let p = compute_prototype(&weighted, 1.0, Space::UnitSphere).unwrap().unwrap();
        assert_abs_diff_eq!(p.as_slice()[0], 1.0 / 1.25f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.as_slice()[1], 0.5 / 1.25f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.as_slice()[0], 0.8944, epsilon = 1e-4);
        assert_abs_diff_eq!(p.as_slice()[1], 0.4472, epsilon = 1e-4);

        let antipodal = [entry(&[1.0, 0.0], 0.2, 0), entry(&[-1.0, 0.0], 0.2, 1)];
        assert!(matches!(
            compute_prototype(&antipodal, 1.0, Space::UnitSphere),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn raw_prototype_is_weighted_mean() {
        let q = [entry(&[2.0, 0.0], 0.0, 0), entry(&[0.0, 2.0], 2f64.ln(), 1)];
        let p = compute_prototype(&q, 1.0, Space::Raw).unwrap().unwrap();
        assert_abs_diff_eq!(p.as_slice()[0], 2.0 / 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.as_slice()[1], 1.0 / 1.5, epsilon = 1e-12);
    }

    fn ext(origin: usize, v: &[f64], h: f64) -> ExternalEntry<f64> {
        ExternalEntry {
            origin,
            embedding: e(v),
            entropy: h,
            similarity: 1.0,
        }
    }

    #[test]
    fn merge_examples() {
        let mut local = LocalMemory::new(1, 2).unwrap();
        local.update(e(&[1.0, 0.0]), 0, 0.4).unwrap();
        local.update(e(&[0.0, 1.0]), 0, 0.8).unwrap();

        let empty = ExternalMemory::empty(0, 1, 2);
        let m = merge(&local, &empty, 2);
        let hs: Vec<f64> = m.class(0).iter().map(|e| e.entropy).collect();
        assert_eq!(hs, vec![0.4, 0.8]);

        let external = ExternalMemory::from_lists(
            0,
            2,
            vec![vec![ext(1, &[0.6, 0.8], 0.2), ext(2, &[0.8, 0.6], 0.9)]],
        )
        .unwrap();
        let m = merge(&local, &external, 2);
        let hs: Vec<f64> = m.class(0).iter().map(|e| e.entropy).collect();
        assert_eq!(hs, vec![0.2, 0.4]);

        let mut tie_local = LocalMemory::new(1, 1).unwrap();
        tie_local.update(e(&[1.0, 0.0]), 0, 0.5).unwrap();
        let tie_ext =
            ExternalMemory::from_lists(0, 1, vec![vec![ext(1, &[0.0, 1.0], 0.5)]]).unwrap();
        let m = merge(&tie_local, &tie_ext, 1);
        assert!(matches!(m.class(0)[0].source, Source::Local { .. }));
    }

    #[test]
    fn external_memory_rejects_self_and_overflow() {
        assert!(ExternalMemory::from_lists(1, 2, vec![vec![ext(1, &[1.0, 0.0], 0.1)]]).is_err());
        assert!(ExternalMemory::from_lists(
            0,
            1,
            vec![vec![ext(1, &[1.0, 0.0], 0.1), ext(2, &[1.0, 0.0], 0.1)]]
        )
        .is_err());
    }
}
