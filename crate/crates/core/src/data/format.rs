//! On-disk embedding datasets: a JSON manifest next to raw little-endian
//! binary files, each guarded by a CRC32 (IEEE) checksum.
//!
//! ```text
//! <stem>.json                  manifest
//! <stem>.embeddings.bin        N × d f32, row-major
//! <stem>.labels.bin            N × u32
//! <stem>.text_embeddings.bin   c × d f32, row-major
//! <stem>.domains.bin           N × u32 (optional)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{norm, TextClassifier, UNIT_TOL};

pub const MAGIC: &str = "latte-embeddings";
pub const VERSION: u32 = 1;
pub const DTYPE: &str = "f32le";

fn default_logit_scale() -> f64 {
    100.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFiles {
    pub embeddings: String,
    pub labels: String,
    pub text_embeddings: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domains: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestChecksums {
    pub embeddings: u32,
    pub labels: u32,
    pub text_embeddings: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domains: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub magic: String,
    pub version: u32,
    pub dim: usize,
    pub num_samples: usize,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub dtype: String,
    #[serde(default = "default_logit_scale")]
    pub logit_scale: f64,
    /// Raw ball-space embeddings: rows are not normalized on load.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub raw: bool,
    pub files: ManifestFiles,
    pub crc32: ManifestChecksums,
}

/// Test-stream embeddings with labels, optional domain tags and the text
/// classifier that produced the zero-shot logits. Labels are 0-based.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingDataset {
    dim: usize,
    embeddings: Vec<f64>,
    labels: Vec<u32>,
    domains: Option<Vec<u32>>,
    classifier: TextClassifier<f64>,
    raw: bool,
}

fn is_unit(row: &[f64]) -> bool {
    (norm(row) - 1.0).abs() <= UNIT_TOL
}

impl EmbeddingDataset {
    /// Builds a dataset; unless `raw`, rows are normalized (rows already
    /// unit-norm within tolerance are kept bit-for-bit).
    pub fn new(
        dim: usize,
        mut embeddings: Vec<f64>,
        labels: Vec<u32>,
        domains: Option<Vec<u32>>,
        classifier: TextClassifier<f64>,
        raw: bool,
    ) -> Result<Self> {
        use crate::math::LogitHead;
        if dim == 0 || embeddings.len() != dim * labels.len() {
            return Err(Error::DimMismatch {
                expected: dim * labels.len(),
                found: embeddings.len(),
            });
        }
        if LogitHead::<f64>::dim(&classifier) != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: LogitHead::<f64>::dim(&classifier),
            });
        }
        if let Some(d) = &domains {
            if d.len() != labels.len() {
                return Err(Error::DimMismatch {
                    expected: labels.len(),
                    found: d.len(),
                });
            }
        }
        let c = classifier.class_names().len();
        for (row, &label) in labels.iter().enumerate() {
            if label as usize >= c {
                return Err(Error::LabelOutOfRange {
                    row,
                    label,
                    classes: c,
                });
            }
        }
        for (row, chunk) in embeddings.chunks_exact_mut(dim).enumerate() {
            if chunk.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteRow {
                    path: PathBuf::from("<memory>"),
                    row,
                });
            }
            if !raw && !is_unit(chunk) {
                let n = norm(chunk);
                if n <= crate::math::NORM_EPS {
                    return Err(Error::ZeroRow {
                        path: PathBuf::from("<memory>"),
                        row,
                    });
                }
                chunk.iter_mut().for_each(|v| *v /= n);
            }
        }
        Ok(Self {
            dim,
            embeddings,
            labels,
            domains,
            classifier,
            raw,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.class_names().len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    pub fn embeddings(&self) -> &[f64] {
        &self.embeddings
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn domains(&self) -> Option<&[u32]> {
        self.domains.as_deref()
    }

    pub fn domain_of(&self, i: usize) -> u32 {
        self.domains.as_ref().map_or(0, |d| d[i])
    }

    pub fn classifier(&self) -> &TextClassifier<f64> {
        &self.classifier
    }

    pub fn is_raw(&self) -> bool {
        self.raw
    }

    /// Values exactly as they will be stored (f32).
    pub fn to_stored_precision(&self) -> Result<Self> {
        let emb = self.embeddings.iter().map(|&v| v as f32 as f64).collect();
        let text = self
            .classifier
            .rows()
            .iter()
            .map(|r| r.as_slice().iter().map(|&v| v as f32 as f64).collect())
            .collect();
        let clf = text_classifier(text, self.classifier.class_names().to_vec(), self.classifier.scale())?;
        Self::new(self.dim, emb, self.labels.clone(), self.domains.clone(), clf, self.raw)
    }
}

fn text_classifier(rows: Vec<Vec<f64>>, names: Vec<String>, scale: f64) -> Result<TextClassifier<f64>> {
    let rows = rows
        .into_iter()
        .map(|r| {
            if is_unit(&r) {
                Ok(r)
            } else {
                crate::math::normalize(&r)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    TextClassifier::new(rows, names, scale)
}

fn f32_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(|v| (v as f32).to_le_bytes()).collect()
}

fn u32_bytes(values: &[u32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `dataset` as `manifest_path` plus its binary files in the same
/// directory. Output is a pure function of the dataset.
pub fn save_dataset(dataset: &EmbeddingDataset, manifest_path: &Path) -> Result<Manifest> {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let stem = stem(manifest_path);
    let name = |kind: &str| format!("{stem}.{kind}.bin");

    let emb = f32_bytes(dataset.embeddings.iter().copied());
    let labels = u32_bytes(&dataset.labels);
    let text = f32_bytes(
        dataset
            .classifier
            .rows()
            .iter()
            .flat_map(|r| r.as_slice().iter().copied()),
    );
    let domains = dataset.domains.as_deref().map(u32_bytes);

    let files = ManifestFiles {
        embeddings: name("embeddings"),
        labels: name("labels"),
        text_embeddings: name("text_embeddings"),
        domains: domains.as_ref().map(|_| name("domains")),
    };
    write(&dir.join(&files.embeddings), &emb)?;
    write(&dir.join(&files.labels), &labels)?;
    write(&dir.join(&files.text_embeddings), &text)?;
    if let (Some(bytes), Some(file)) = (&domains, &files.domains) {
        write(&dir.join(file), bytes)?;
    }
    let manifest = Manifest {
        magic: MAGIC.into(),
        version: VERSION,
        dim: dataset.dim,
        num_samples: dataset.len(),
        num_classes: dataset.num_classes(),
        class_names: dataset.classifier.class_names().to_vec(),
        dtype: DTYPE.into(),
        logit_scale: dataset.classifier.scale(),
        raw: dataset.raw,
        crc32: ManifestChecksums {
            embeddings: crc32fast::hash(&emb),
            labels: crc32fast::hash(&labels),
            text_embeddings: crc32fast::hash(&text),
            domains: domains.as_deref().map(crc32fast::hash),
        },
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(manifest_path, format!("{json}\n").as_bytes())?;
    Ok(manifest)
}

fn manifest_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Manifest {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad_magic = |detail: String| Error::BadMagic {
        path: path.to_path_buf(),
        detail,
    };
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| bad_magic(format!("not a JSON manifest: {e}")))?;
    match value.get("magic").and_then(|m| m.as_str()) {
        Some(MAGIC) => {}
        Some(other) => return Err(bad_magic(format!("expected {MAGIC:?}, found {other:?}"))),
        None => return Err(bad_magic("missing magic field".into())),
    }
    let m: Manifest = serde_json::from_value(value).map_err(|e| manifest_err(path, e.to_string()))?;
    if m.version != VERSION {
        return Err(manifest_err(path, format!("unsupported version {}", m.version)));
    }
    if m.dtype != DTYPE {
        return Err(manifest_err(path, format!("unsupported dtype {:?}", m.dtype)));
    }
    if m.class_names.len() != m.num_classes {
        return Err(manifest_err(
            path,
            format!("{} class names for {} classes", m.class_names.len(), m.num_classes),
        ));
    }
    Ok(m)
}

fn read_checked(path: &Path, expected_len: u64, crc: u32) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let found = bytes.len() as u64;
    if found < expected_len {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            expected: expected_len,
            found,
        });
    }
    if found > expected_len {
        return Err(manifest_err(
            path,
            format!("{found} bytes where the manifest implies {expected_len}"),
        ));
    }
    let actual = crc32fast::hash(&bytes);
    if actual != crc {
        return Err(Error::ChecksumMismatch {
            path: path.to_path_buf(),
            expected: crc,
            found: actual,
        });
    }
    Ok(bytes)
}

fn parse_f32(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
        .collect()
}

fn parse_u32(bytes: &[u8]) -> Vec<u32> {
    bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect()
}

fn check_rows(path: &Path, values: &mut [f64], dim: usize, raw: bool) -> Result<()> {
    for (row, chunk) in values.chunks_exact_mut(dim).enumerate() {
        if chunk.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteRow {
                path: path.to_path_buf(),
                row,
            });
        }
        if !raw && !is_unit(chunk) {
            let n = norm(chunk);
            if n <= crate::math::NORM_EPS {
                return Err(Error::ZeroRow {
                    path: path.to_path_buf(),
                    row,
                });
            }
            chunk.iter_mut().for_each(|v| *v /= n);
        }
    }
    Ok(())
}

/// Loads and validates a dataset: sizes, checksums, finiteness, label
/// range. Rows are normalized unless the manifest marks them raw.
pub fn load_dataset(manifest_path: &Path) -> Result<EmbeddingDataset> {
    let m = read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let (n, d, c) = (m.num_samples as u64, m.dim as u64, m.num_classes as u64);
    if d == 0 || c < 2 {
        return Err(manifest_err(manifest_path, format!("dim {d}, classes {c}")));
    }

    let emb_path = dir.join(&m.files.embeddings);
    let mut emb = parse_f32(&read_checked(&emb_path, 4 * n * d, m.crc32.embeddings)?);
    check_rows(&emb_path, &mut emb, m.dim, m.raw)?;

    let label_path = dir.join(&m.files.labels);
    let labels = parse_u32(&read_checked(&label_path, 4 * n, m.crc32.labels)?);
    for (row, &label) in labels.iter().enumerate() {
        if label as u64 >= c {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                classes: m.num_classes,
            });
        }
    }

    let text_path = dir.join(&m.files.text_embeddings);
    let mut text = parse_f32(&read_checked(&text_path, 4 * c * d, m.crc32.text_embeddings)?);
    check_rows(&text_path, &mut text, m.dim, false)?;
    let rows = text.chunks_exact(m.dim).map(<[f64]>::to_vec).collect();
    let classifier = TextClassifier::new(rows, m.class_names.clone(), m.logit_scale)?;

    let domains = match (&m.files.domains, m.crc32.domains) {
        (Some(file), Some(crc)) => Some(parse_u32(&read_checked(&dir.join(file), 4 * n, crc)?)),
        (None, None) => None,
        _ => {
            return Err(manifest_err(
                manifest_path,
                "domains file and checksum must be given together",
            ))
        }
    };

    EmbeddingDataset::new(m.dim, emb, labels, domains, classifier, m.raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EmbeddingDataset {
        let clf = TextClassifier::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec!["cat".into(), "dog".into()],
            100.0,
        )
        .unwrap();
        EmbeddingDataset::new(
            2,
            vec![0.6, 0.8, 1.0, 0.0, 0.0, 1.0],
            vec![1, 0, 1],
            Some(vec![0, 0, 1]),
            clf,
            false,
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_small() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.json");
        let ds = tiny();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, ds.to_stored_precision().unwrap());
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.domains(), ds.domains());
    }

    #[test]
    fn short_labels_file_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.json");
        let m = save_dataset(&tiny(), &path).unwrap();
        let lp = dir.path().join(&m.files.labels);
        let bytes = fs::read(&lp).unwrap();
        fs::write(&lp, &bytes[..8]).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::TruncatedFile { .. })));
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.json");
        let m = save_dataset(&tiny(), &path).unwrap();
        let ep = dir.path().join(&m.files.embeddings);
        let mut bytes = fs::read(&ep).unwrap();
        bytes[3] ^= 0x10;
        fs::write(&ep, &bytes).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::ChecksumMismatch { .. })));
    }

    #[test]
    fn raw_rows_are_not_normalized() {
        let clf = TextClassifier::new(
            vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
            vec!["0".into(), "1".into()],
            50.0,
        )
        .unwrap();
        let ds = EmbeddingDataset::new(2, vec![1.5, 0.25, -0.5, 0.5], vec![1, 0], None, clf, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.json");
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.row(0), &[1.5, 0.25]);
        assert!(back.is_raw());
        assert_eq!(back.classifier().scale(), 50.0);
    }
}
