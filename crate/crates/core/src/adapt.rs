//! Per-sample adaptation: pseudo-labelling, local memory update, merge,
//! attention over the merged memory, and the periodic exchange with the
//! server.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::math::{cosine, dot, entropy, normalize, Embedding, LogitHead, LogitKind, Logits};
use crate::memory::{
    compute_prototype, merge, ExternalEntry, ExternalMemory, InsertOutcome, LocalMemory,
    MergedMemory, Space,
};
use crate::scalar::Scalar;
use crate::server::GlobalMemory;
use crate::wire::{self, Opcode, Record};

/// How often a client talks to the server, in locally processed samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommPeriod {
    Every(usize),
    Never,
}

impl CommPeriod {
    pub fn is_due(self, processed: usize) -> bool {
        match self {
            CommPeriod::Every(t) => t > 0 && processed > 0 && processed.is_multiple_of(t),
            CommPeriod::Never => false,
        }
    }
}

impl Default for CommPeriod {
    fn default() -> Self {
        CommPeriod::Every(1)
    }
}

impl fmt::Display for CommPeriod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommPeriod::Every(t) => write!(f, "{t}"),
            CommPeriod::Never => f.write_str("never"),
        }
    }
}

impl Serialize for CommPeriod {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CommPeriod::Every(t) => s.serialize_u64(*t as u64),
            CommPeriod::Never => s.serialize_str("never"),
        }
    }
}

impl<'de> Deserialize<'de> for CommPeriod {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Period(u64),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Period(0) => Err(serde::de::Error::custom(
                "comm_period must be >= 1 (use \"never\" to disable)",
            )),
            Repr::Period(t) => Ok(CommPeriod::Every(t as usize)),
            Repr::Word(w) if w == "never" => Ok(CommPeriod::Never),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "comm_period must be a positive integer or \"never\", got {w:?}"
            ))),
        }
    }
}

fn default_scale() -> f64 {
    100.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatteParams {
    /// Weight of the memory logits in the final prediction.
    pub alpha: f64,
    /// Sharpness of the similarity term in the attention weights.
    pub beta: f64,
    /// Sharpness of the entropy term, shared by prototypes and attention.
    pub gamma: f64,
    pub k_l: usize,
    pub k_e: usize,
    #[serde(default)]
    pub comm_period: CommPeriod,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

impl LatteParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("scale", self.scale),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParams(format!("{name} = {v}")));
            }
        }
        if self.k_l == 0 || self.k_e == 0 {
            return Err(Error::InvalidParams(format!(
                "k_l = {}, k_e = {} (both must be >= 1)",
                self.k_l, self.k_e
            )));
        }
        if self.comm_period == CommPeriod::Every(0) {
            return Err(Error::InvalidParams("comm_period = 0".into()));
        }
        Ok(())
    }

    pub fn preset(name: &str) -> Result<Self> {
        let fragment = Preset::from_name(name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset {name:?}; valid presets: {}",
                    Preset::ALL.map(Preset::name).join(", ")
                ))
            })?
            .fragment();
        toml::from_str(fragment).map_err(|e| Error::Config(format!("preset {name}: {e}")))
    }
}

/// Hyperparameter sets shipped for the four benchmarks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Vlcs,
    TerraIncognita,
    Cifar10C,
    Cifar100C,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Vlcs,
        Preset::TerraIncognita,
        Preset::Cifar10C,
        Preset::Cifar100C,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Vlcs => "vlcs-latte",
            Preset::TerraIncognita => "terra-latte",
            Preset::Cifar10C => "cifar10c-latte",
            Preset::Cifar100C => "cifar100c-latte",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// The embedded TOML fragment for this preset.
    pub fn fragment(self) -> &'static str {
        match self {
            Preset::Vlcs => include_str!("../presets/vlcs-latte.toml"),
            Preset::TerraIncognita => include_str!("../presets/terra-latte.toml"),
            Preset::Cifar10C => include_str!("../presets/cifar10c-latte.toml"),
            Preset::Cifar100C => include_str!("../presets/cifar100c-latte.toml"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Latte,
    /// Plain `argmax z_pre`; memory is never touched.
    ZeroShot,
    /// Full pipeline without communication.
    LocalOnly,
    /// One local memory shared by every client, no external memory. The
    /// sharing itself is arranged by the simulator; a single client behaves
    /// like `LocalOnly`.
    GlobalShared,
}

impl Policy {
    pub fn uses_memory(self) -> bool {
        self != Policy::ZeroShot
    }

    pub fn communicates(self) -> bool {
        self == Policy::Latte
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTrace<T> {
    pub z_pre: Logits<T>,
    pub z_mem: Logits<T>,
    pub z_post: Logits<T>,
    pub pseudo_label: usize,
    pub label: usize,
    pub entropy: T,
    /// `None` when the policy does not maintain a memory.
    pub memory_action: Option<InsertOutcome<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub z_pre: Logits<T>,
    pub z_mem: Logits<T>,
    pub z_post: Logits<T>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RetrievalLogRow {
    pub downloader: usize,
    pub uploader: usize,
    pub class: usize,
    pub similarity: f64,
}

/// Byte counts and retrievals of one upload/retrieve exchange.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommRound {
    pub uploaded_classes: usize,
    pub upload_bytes: usize,
    pub download_bytes: usize,
    pub upload_wire_bytes: usize,
    pub download_wire_bytes: usize,
    pub retrievals: Vec<RetrievalLogRow>,
}

/// Memory logits: per class, attention over the merged entries with weights
/// `exp(β·⟨f, m⟩ − γ·H(m))`, normalized into `c_y`, then `scale·⟨f, c_y⟩`.
/// Classes with no entries fall back to the zero-shot logit.
pub fn memory_logits<T: Scalar>(
    f: &Embedding<T>,
    merged: &MergedMemory<'_, T>,
    z_pre: &Logits<T>,
    params: &LatteParams,
) -> Result<Logits<T>> {
    let beta = T::of(params.beta);
    let gamma = T::of(params.gamma);
    let scale = T::of(params.scale);
    let d = f.dim();
    let mut out = Vec::with_capacity(merged.num_classes());
    let mut log_w = Vec::new();
    let mut acc = vec![T::zero(); d];
    for y in 0..merged.num_classes() {
        let entries = merged.class(y);
        if entries.is_empty() {
            out.push(z_pre.values[y]);
            continue;
        }
        log_w.clear();
        for m in entries {
            if m.embedding.dim() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    found: m.embedding.dim(),
                });
            }
            log_w.push(beta * f.dot(m.embedding) - gamma * m.entropy);
        }
        // log-domain shift: β can be large enough to overflow exp otherwise
        let top = log_w.iter().copied().fold(T::neg_infinity(), T::max);
        acc.iter_mut().for_each(|a| *a = T::zero());
        for (m, &lw) in entries.iter().zip(&log_w) {
            let w = (lw - top).exp();
            for (a, &x) in acc.iter_mut().zip(m.embedding.as_slice()) {
                *a = *a + w * x;
            }
        }
        let c = normalize(&acc)?;
        out.push(scale * dot(f.as_slice(), &c));
    }
    Ok(Logits::new(out, LogitKind::Mem))
}

pub fn combine<T: Scalar>(z_pre: &Logits<T>, z_mem: &Logits<T>, alpha: f64) -> Logits<T> {
    let a = T::of(alpha);
    Logits::new(
        z_pre
            .values
            .iter()
            .zip(&z_mem.values)
            .map(|(&p, &m)| p + a * m)
            .collect(),
        LogitKind::Post,
    )
}

/// One federated client: its head, local and external memories, and the
/// count of processed samples that drives the communication schedule.
#[derive(Debug)]
pub struct Client<T, H> {
    id: usize,
    head: Arc<H>,
    params: LatteParams,
    policy: Policy,
    space: Space,
    local: LocalMemory<T>,
    external: ExternalMemory<T>,
    processed: usize,
}

impl<T: Scalar, H: LogitHead<T>> Client<T, H> {
    pub fn new(id: usize, head: Arc<H>, params: LatteParams, policy: Policy, space: Space) -> Result<Self> {
        params.validate()?;
        let c = head.num_classes();
        Ok(Self {
            id,
            local: LocalMemory::new(c, params.k_l)?,
            external: ExternalMemory::empty(id, c, params.k_e),
            head,
            params,
            policy,
            space,
            processed: 0,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn params(&self) -> &LatteParams {
        &self.params
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn head(&self) -> &H {
        &self.head
    }

    pub fn local(&self) -> &LocalMemory<T> {
        &self.local
    }

    pub fn local_mut(&mut self) -> &mut LocalMemory<T> {
        &mut self.local
    }

    pub fn external(&self) -> &ExternalMemory<T> {
        &self.external
    }

    pub fn processed(&self) -> usize {
        self.processed
    }

    /// True right after every `comm_period`-th processed sample, for the
    /// policies that communicate at all.
    pub fn is_due(&self) -> bool {
        self.policy.communicates() && self.params.comm_period.is_due(self.processed)
    }

    fn check_input(&self, f: &Embedding<T>) -> Result<()> {
        if f.dim() != self.head.dim() {
            return Err(Error::DimMismatch {
                expected: self.head.dim(),
                found: f.dim(),
            });
        }
        if self.space == Space::UnitSphere && !f.is_unit() {
            return Err(Error::InvalidParams(format!(
                "input embedding has norm {} but the client expects unit vectors",
                f.norm()
            )));
        }
        Ok(())
    }

    fn adapted(&self, f: &Embedding<T>, z_pre: &Logits<T>) -> Result<(Logits<T>, Logits<T>)> {
        if !self.policy.uses_memory() {
            let z_mem = Logits::new(vec![T::zero(); z_pre.len()], LogitKind::Mem);
            let z_post = Logits::new(z_pre.values.clone(), LogitKind::Post);
            return Ok((z_mem, z_post));
        }
        let merged = merge(&self.local, &self.external, self.params.k_l);
        let z_mem = memory_logits(f, &merged, z_pre, &self.params)?;
        let z_post = combine(z_pre, &z_mem, self.params.alpha);
        Ok((z_mem, z_post))
    }

    /// Processes one stream sample: zero-shot logits and pseudo-label, local
    /// memory update, then prediction from the merged memory. The update
    /// happens before the prediction, so a sample can attend to itself.
    pub fn step(&mut self, f: Embedding<T>) -> Result<PredictionTrace<T>> {
        self.check_input(&f)?;
        let z_pre = self.head.logits(f.as_slice())?;
        let pseudo_label = z_pre.argmax();
        let h = entropy(&z_pre)?;
        self.processed += 1;
        let memory_action = if self.policy.uses_memory() {
            Some(self.local.update(f.clone(), pseudo_label, h)?)
        } else {
            None
        };
        let (z_mem, z_post) = self.adapted(&f, &z_pre)?;
        let label = z_post.argmax();
        Ok(PredictionTrace {
            z_pre,
            z_mem,
            z_post,
            pseudo_label,
            label,
            entropy: h,
            memory_action,
        })
    }

    /// Predicts with the current memories without touching them.
    pub fn predict(&self, f: &Embedding<T>) -> Result<Prediction<T>> {
        self.check_input(f)?;
        let z_pre = self.head.logits(f.as_slice())?;
        let (z_mem, z_post) = self.adapted(f, &z_pre)?;
        let label = z_post.argmax();
        Ok(Prediction {
            z_pre,
            z_mem,
            z_post,
            label,
        })
    }

    /// Per-class prototypes of the local memory. Empty classes, and classes
    /// whose weighted sum cancels out, yield `None`.
    pub fn prototypes(&self) -> Result<Vec<Option<Embedding<T>>>> {
        let gamma = T::of(self.params.gamma);
        self.local
            .queues()
            .iter()
            .map(|q| match compute_prototype(q, gamma, self.space) {
                Err(Error::ZeroVector) => Ok(None),
                other => other,
            })
            .collect()
    }

    /// Uploads prototypes, retrieves the most similar foreign ones through
    /// the wire encoding, and replaces the external memory with them.
    /// Payload bytes are counted at `bytes_per_scalar`.
    pub fn communicate(&mut self, server: &GlobalMemory<T>, bytes_per_scalar: usize) -> Result<CommRound> {
        let mut round = CommRound::default();
        if !self.policy.communicates() {
            return Ok(round);
        }
        let protos = self.prototypes()?;
        let c = self.head.num_classes();
        let mut request: Vec<Record> = protos
            .iter()
            .enumerate()
            .filter_map(|(class, p)| {
                p.as_ref().map(|p| Record {
                    opcode: Opcode::Upload,
                    client: self.id as u32,
                    class: class as u32,
                    payload: p.as_slice().iter().map(|v| v.as_f32()).collect(),
                })
            })
            .collect();
        if request.is_empty() {
            self.external = ExternalMemory::empty(self.id, c, self.params.k_e);
            return Ok(round);
        }
        round.uploaded_classes = request.len();
        round.upload_bytes = request.iter().map(|r| r.payload_bytes(bytes_per_scalar)).sum();
        request.push(Record {
            opcode: Opcode::Retrieve,
            client: self.id as u32,
            class: self.params.k_e as u32,
            payload: Vec::new(),
        });
        let encoded = wire::encode_all(&request);
        round.upload_wire_bytes = encoded.len();

        let response = server.serve(&encoded)?;
        round.download_wire_bytes = response.len();
        let mut lists: Vec<Vec<ExternalEntry<T>>> = vec![Vec::new(); c];
        for rec in wire::decode_all(&response)? {
            if rec.opcode != Opcode::Download {
                return Err(Error::Wire(format!("unexpected {:?} in response", rec.opcode)));
            }
            let class = rec.class as usize;
            if class >= c {
                return Err(Error::BadClass { class, classes: c });
            }
            round.download_bytes += rec.payload_bytes(bytes_per_scalar);
            let embedding =
                Embedding::new(rec.payload.iter().map(|&v| T::of(v as f64)).collect())?;
            let h = entropy(&self.head.logits(embedding.as_slice())?)?;
            let query = protos[class]
                .as_ref()
                .ok_or_else(|| Error::Wire(format!("download for class {class} without query")))?;
            let similarity = cosine(query.as_slice(), embedding.as_slice());
            round.retrievals.push(RetrievalLogRow {
                downloader: self.id,
                uploader: rec.client as usize,
                class,
                similarity: similarity.as_f64(),
            });
            lists[class].push(ExternalEntry {
                origin: rec.client as usize,
                embedding,
                entropy: h,
                similarity,
            });
        }
        self.external = ExternalMemory::from_lists(self.id, self.params.k_e, lists)?;
        Ok(round)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::TextClassifier;
    use approx::assert_abs_diff_eq;

    fn params() -> LatteParams {
        LatteParams {
            alpha: 1.0,
            beta: 5.0,
            gamma: 1.0,
            k_l: 3,
            k_e: 2,
            comm_period: CommPeriod::Every(1),
            scale: 100.0,
        }
    }

    fn clf() -> Arc<TextClassifier<f64>> {
        Arc::new(
            TextClassifier::new(
                vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
                vec!["a".into(), "b".into(), "c".into()],
                100.0,
            )
            .unwrap(),
        )
    }

    fn unit(v: &[f64]) -> Embedding<f64> {
        Embedding::normalized(v.to_vec()).unwrap()
    }

    #[test]
    fn presets_match_published_values() {
        let p = LatteParams::preset("cifar100c-latte").unwrap();
        assert_eq!((p.alpha, p.beta, p.gamma, p.k_l, p.k_e), (0.7, 60.0, 1.5, 8, 5));
        let p = LatteParams::preset("cifar10c-latte").unwrap();
        assert_eq!((p.alpha, p.beta, p.gamma, p.k_l, p.k_e), (1.0, 60.0, 1.5, 12, 9));
        let p = LatteParams::preset("vlcs-latte").unwrap();
        assert_eq!((p.alpha, p.beta, p.gamma, p.k_l, p.k_e), (0.3, 6.0, 6.0, 15, 12));
        let p = LatteParams::preset("terra-latte").unwrap();
        assert_eq!((p.alpha, p.beta, p.gamma, p.k_l, p.k_e), (1.5, 35.0, 10.0, 2, 20));
        assert_eq!(p.comm_period, CommPeriod::Every(1));
        assert_eq!(p.scale, 100.0);
        assert!(LatteParams::preset("imagenet").is_err());
    }

    #[test]
    fn comm_period_serde() {
        #[derive(Deserialize)]
        struct W {
            p: CommPeriod,
        }
        assert_eq!(toml::from_str::<W>("p = 7").unwrap().p, CommPeriod::Every(7));
        assert_eq!(toml::from_str::<W>("p = \"never\"").unwrap().p, CommPeriod::Never);
        assert!(toml::from_str::<W>("p = 0").is_err());
        assert!(toml::from_str::<W>("p = \"sometimes\"").is_err());
        assert!(CommPeriod::Every(3).is_due(6));
        assert!(!CommPeriod::Every(3).is_due(5));
        assert!(!CommPeriod::Never.is_due(5));
    }

    #[test]
    fn validate_rejects_bad_params() {
        let mut p = params();
        p.beta = -1.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.k_l = 0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.alpha = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn first_sample_attends_to_itself() {
        let mut c = Client::new(0, clf(), params(), Policy::Latte, Space::UnitSphere).unwrap();
        let f = unit(&[0.9, 0.3, 0.1]);
        let t = c.step(f.clone()).unwrap();
        assert_eq!(t.pseudo_label, 0);
        assert_eq!(t.memory_action, Some(InsertOutcome::Inserted));
        assert_eq!(c.local().queue(0).len(), 1);
        assert_abs_diff_eq!(t.z_mem.values[0], 100.0, epsilon = 1e-9);
        // empty classes fall back to the zero-shot logits
        assert_eq!(t.z_mem.values[1], t.z_pre.values[1]);
        assert_eq!(t.z_mem.values[2], t.z_pre.values[2]);
    }

    #[test]
    fn alpha_zero_is_zero_shot() {
        let mut p = params();
        p.alpha = 0.0;
        let mut c = Client::new(0, clf(), p, Policy::Latte, Space::UnitSphere).unwrap();
        for v in [[0.9, 0.3, 0.1], [0.2, 0.5, 0.4], [0.1, 0.1, 0.9], [0.5, 0.49, 0.0]] {
            let t = c.step(unit(&v)).unwrap();
            assert_eq!(t.label, t.z_pre.argmax());
        }
    }

    #[test]
    fn duplicate_input_gives_identical_logits() {
        let mut c = Client::new(0, clf(), params(), Policy::Latte, Space::UnitSphere).unwrap();
        c.step(unit(&[0.2, 0.9, 0.1])).unwrap();
        let f = unit(&[0.7, 0.2, 0.3]);
        let a = c.step(f.clone()).unwrap();
        let b = c.step(f).unwrap();
        assert_eq!(a.z_post, b.z_post);
    }

    #[test]
    fn singleton_classes_reduce_to_plain_similarity() {
        let mut c = Client::new(0, clf(), params(), Policy::Latte, Space::UnitSphere).unwrap();
        let m = [unit(&[0.9, 0.2, 0.1]), unit(&[0.1, 0.9, 0.2]), unit(&[0.2, 0.1, 0.9])];
        for (y, e) in m.iter().enumerate() {
            c.local_mut().update(e.clone(), y, 0.3).unwrap();
        }
        let f = unit(&[0.3, 0.5, 0.4]);
        let p = c.predict(&f).unwrap();
        for (y, e) in m.iter().enumerate() {
            assert_abs_diff_eq!(p.z_mem.values[y], 100.0 * f.dot(e), epsilon = 1e-9);
        }
    }

    #[test]
    fn huge_beta_does_not_overflow() {
        let mut p = params();
        p.beta = 1e6;
        let mut c = Client::new(0, clf(), p, Policy::Latte, Space::UnitSphere).unwrap();
        c.local_mut().update(unit(&[0.9, 0.2, 0.1]), 0, 0.1).unwrap();
        c.local_mut().update(unit(&[0.8, 0.5, 0.1]), 0, 0.2).unwrap();
        let pred = c.predict(&unit(&[0.85, 0.4, 0.1])).unwrap();
        assert!(pred.z_post.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn empty_memory_communicates_nothing() {
        let server = GlobalMemory::new(3, 2, 3);
        let mut c = Client::new(0, clf(), params(), Policy::Latte, Space::UnitSphere).unwrap();
        let r = c.communicate(&server, 2).unwrap();
        assert_eq!(r, CommRound::default());
        assert!(c.external().is_empty());
    }

    #[test]
    fn twin_clients_retrieve_each_other() {
        let server = GlobalMemory::new(3, 2, 3).requiring_unit_norm(true);
        let mut a = Client::new(0, clf(), params(), Policy::Latte, Space::UnitSphere).unwrap();
        let mut b = Client::new(1, clf(), params(), Policy::Latte, Space::UnitSphere).unwrap();
        let stream = [[0.9, 0.3, 0.1], [0.2, 0.8, 0.3], [0.1, 0.2, 0.9], [0.8, 0.1, 0.3]];
        for v in stream {
            a.step(unit(&v)).unwrap();
            b.step(unit(&v)).unwrap();
        }
        a.communicate(&server, 4).unwrap();
        let r = b.communicate(&server, 4).unwrap();
        assert_eq!(r.retrievals.len(), 3);
        for row in &r.retrievals {
            assert_eq!(row.uploader, 0);
            assert!((row.similarity - 1.0).abs() < 1e-6);
        }
        let r = a.communicate(&server, 4).unwrap();
        assert!(r.retrievals.iter().all(|row| row.uploader == 1));
        assert_eq!(r.upload_bytes, 3 * 3 * 4);
        assert_eq!(r.download_bytes, 3 * 3 * 4);
        assert!(a.external().len() == 3);
    }

    #[test]
    fn zero_shot_policy_ignores_memory() {
        let mut c = Client::new(0, clf(), params(), Policy::ZeroShot, Space::UnitSphere).unwrap();
        let t = c.step(unit(&[0.2, 0.9, 0.1])).unwrap();
        assert!(t.memory_action.is_none());
        assert!(c.local().is_empty());
        assert_eq!(t.z_post.values, t.z_pre.values);
        assert!(!c.is_due());
    }

    #[test]
    fn rejects_non_unit_input_on_sphere() {
        let mut c = Client::new(0, clf(), params(), Policy::Latte, Space::UnitSphere).unwrap();
        assert!(c.step(Embedding::new(vec![2.0, 0.0, 0.0]).unwrap()).is_err());
        assert!(c.step(unit(&[1.0, 0.0])).is_err());
    }
}
