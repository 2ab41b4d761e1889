//! Server side: the class × client prototype table and top-`k_e` retrieval.

use std::cmp::Ordering;
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::math::{cosine, Embedding};
use crate::scalar::Scalar;
use crate::wire::{self, Opcode, Record};

#[derive(Clone, Debug, PartialEq)]
pub struct Retrieved<T> {
    pub origin: usize,
    pub prototype: Embedding<T>,
    pub similarity: T,
}

/// Per class, at most `k_e` foreign prototypes ordered by decreasing
/// similarity to the query (ascending origin on ties).
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalResponse<T> {
    pub per_class: Vec<Vec<Retrieved<T>>>,
}

/// Global memory: one prototype slot per (class, client).
///
/// Each class row sits behind its own lock, so uploads from different
/// clients can proceed concurrently and a retrieval never observes a
/// half-written slot. Slots are only ever overwritten: a client that cannot
/// summarize a class this round leaves its previous prototype in place.
#[derive(Debug)]
pub struct GlobalMemory<T> {
    dim: usize,
    clients: usize,
    require_unit: bool,
    rows: Vec<RwLock<Vec<Option<Embedding<T>>>>>,
}

impl<T: Scalar> GlobalMemory<T> {
    pub fn new(num_classes: usize, clients: usize, dim: usize) -> Self {
        Self {
            dim,
            clients,
            require_unit: false,
            rows: (0..num_classes)
                .map(|_| RwLock::new(vec![None; clients]))
                .collect(),
        }
    }

    /// Rejects uploads that are not unit-norm (benchmark mode).
    pub fn requiring_unit_norm(mut self, on: bool) -> Self {
        self.require_unit = on;
        self
    }

    pub fn num_classes(&self) -> usize {
        self.rows.len()
    }

    pub fn clients(&self) -> usize {
        self.clients
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check_client(&self, client: usize) -> Result<()> {
        if client >= self.clients {
            Err(Error::BadClient {
                client,
                clients: self.clients,
            })
        } else {
            Ok(())
        }
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.rows.len() {
            Err(Error::BadClass {
                class,
                classes: self.rows.len(),
            })
        } else {
            Ok(())
        }
    }

    fn check_proto(&self, proto: &Embedding<T>) -> Result<()> {
        if proto.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: proto.dim(),
            });
        }
        if self.require_unit && !proto.is_unit() {
            return Err(Error::InvalidParams(format!(
                "uploaded prototype has norm {}",
                proto.norm()
            )));
        }
        Ok(())
    }

    pub fn upload_slot(&self, client: usize, class: usize, proto: Embedding<T>) -> Result<()> {
        self.check_client(client)?;
        self.check_class(class)?;
        self.check_proto(&proto)?;
        let mut row = self.rows[class].write().expect("global memory lock poisoned");
        row[client] = Some(proto);
        Ok(())
    }

    /// Writes every present prototype into the client's column; `None`
    /// entries leave the existing slot untouched.
    pub fn upload(&self, client: usize, protos: &[Option<Embedding<T>>]) -> Result<()> {
        self.check_client(client)?;
        if protos.len() != self.rows.len() {
            return Err(Error::DimMismatch {
                expected: self.rows.len(),
                found: protos.len(),
            });
        }
        for p in protos.iter().flatten() {
            self.check_proto(p)?;
        }
        for (class, p) in protos.iter().enumerate() {
            if let Some(p) = p {
                self.upload_slot(client, class, p.clone())?;
            }
        }
        Ok(())
    }

    pub fn slot(&self, class: usize, client: usize) -> Option<Embedding<T>> {
        self.rows[class].read().expect("global memory lock poisoned")[client].clone()
    }

    pub fn filled(&self, class: usize) -> usize {
        self.rows[class]
            .read()
            .expect("global memory lock poisoned")
            .iter()
            .filter(|s| s.is_some())
            .count()
    }

    /// Top-`k_e` foreign prototypes per class by cosine similarity to the
    /// class query. Classes without a query get an empty list.
    pub fn retrieve(
        &self,
        client: usize,
        queries: &[Option<Embedding<T>>],
        k_e: usize,
    ) -> Result<RetrievalResponse<T>> {
        self.check_client(client)?;
        if queries.len() != self.rows.len() {
            return Err(Error::DimMismatch {
                expected: self.rows.len(),
                found: queries.len(),
            });
        }
        let mut per_class = Vec::with_capacity(queries.len());
        for (class, query) in queries.iter().enumerate() {
            let Some(query) = query else {
                per_class.push(Vec::new());
                continue;
            };
            if query.dim() != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    found: query.dim(),
                });
            }
            if k_e == 0 {
                per_class.push(Vec::new());
                continue;
            }
            let row = self.rows[class].read().expect("global memory lock poisoned");
            let mut hits: Vec<Retrieved<T>> = row
                .iter()
                .enumerate()
                .filter(|&(origin, _)| origin != client)
                .filter_map(|(origin, slot)| {
                    slot.as_ref().map(|p| Retrieved {
                        origin,
                        similarity: cosine(p.as_slice(), query.as_slice()),
                        prototype: p.clone(),
                    })
                })
                .collect();
            drop(row);
            hits.sort_by(|a, b| {
                b.similarity
                    .partial_cmp(&a.similarity)
                    .unwrap_or(Ordering::Equal)
                    .then(a.origin.cmp(&b.origin))
            });
            hits.truncate(k_e);
            per_class.push(hits);
        }
        Ok(RetrievalResponse { per_class })
    }

    /// Handles one encoded request (uploads followed by a retrieve record)
    /// and returns the encoded download records. The uploaded prototypes
    /// are the retrieval queries.
    pub fn serve(&self, request: &[u8]) -> Result<Vec<u8>> {
        let records = wire::decode_all(request)?;
        let mut requester: Option<usize> = None;
        let mut queries: Vec<Option<Embedding<T>>> = vec![None; self.rows.len()];
        let mut out = Vec::new();
        for rec in records {
            let client = rec.client as usize;
            match rec.opcode {
                Opcode::Upload => {
                    if requester.is_some_and(|r| r != client) {
                        return Err(Error::Wire(format!(
                            "request mixes clients {} and {client}",
                            requester.unwrap_or_default()
                        )));
                    }
                    requester = Some(client);
                    let class = rec.class as usize;
                    self.check_class(class)?;
                    let proto =
                        Embedding::new(rec.payload.iter().map(|&v| T::of(v as f64)).collect())?;
                    self.upload_slot(client, class, proto.clone())?;
                    queries[class] = Some(proto);
                }
                Opcode::Retrieve => {
                    let k_e = rec.class as usize;
                    let resp = self.retrieve(client, &queries, k_e)?;
                    let mut downloads = Vec::new();
                    for (class, hits) in resp.per_class.iter().enumerate() {
                        for hit in hits {
                            downloads.push(Record {
                                opcode: Opcode::Download,
                                client: hit.origin as u32,
                                class: class as u32,
                                payload: hit.prototype.as_slice().iter().map(|v| v.as_f32()).collect(),
                            });
                        }
                    }
                    out.extend(wire::encode_all(&downloads));
                }
                Opcode::Download => {
                    return Err(Error::Wire("download record sent to server".into()));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(v: &[f64]) -> Embedding<f64> {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn upload_examples() {
        let g = GlobalMemory::<f64>::new(3, 3, 2);
        g.upload(2, &[None, Some(e(&[1.0, 0.0])), None]).unwrap();
        assert_eq!(g.slot(1, 2), Some(e(&[1.0, 0.0])));
        assert_eq!((0..3).map(|c| g.filled(c)).sum::<usize>(), 1);

        g.upload(2, &[None, Some(e(&[0.0, 1.0])), Some(e(&[0.6, 0.8]))]).unwrap();
        assert_eq!(g.slot(1, 2), Some(e(&[0.0, 1.0])));
        g.upload(2, &[None, None, None]).unwrap();
        assert_eq!(g.slot(2, 2), Some(e(&[0.6, 0.8])));

        assert!(matches!(
            g.upload(3, &[None, None, None]),
            Err(Error::BadClient { client: 3, clients: 3 })
        ));
        assert!(matches!(
            g.upload(0, &[Some(e(&[1.0, 0.0, 0.0])), None, None]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn unit_norm_enforced_when_requested() {
        let g = GlobalMemory::<f64>::new(1, 2, 2).requiring_unit_norm(true);
        assert!(g.upload(0, &[Some(e(&[2.0, 0.0]))]).is_err());
        assert!(g.upload(0, &[Some(e(&[1.0, 0.0]))]).is_ok());
    }

    #[test]
    fn retrieve_examples() {
        let g = GlobalMemory::<f64>::new(1, 3, 2);
        g.upload(0, &[Some(e(&[1.0, 0.0]))]).unwrap();
        let r = g.retrieve(0, &[Some(e(&[1.0, 0.0]))], 5).unwrap();
        assert!(r.per_class[0].is_empty());

        g.upload(1, &[Some(e(&[1.0, 0.0]))]).unwrap();
        g.upload(2, &[Some(e(&[0.0, 1.0]))]).unwrap();
        let r = g.retrieve(0, &[Some(e(&[1.0, 0.0]))], 1).unwrap();
        assert_eq!(r.per_class[0].len(), 1);
        assert_eq!(r.per_class[0][0].origin, 1);
        assert_eq!(r.per_class[0][0].similarity, 1.0);

        let r = g.retrieve(0, &[Some(e(&[1.0, 0.0]))], 2).unwrap();
        let origins: Vec<usize> = r.per_class[0].iter().map(|h| h.origin).collect();
        assert_eq!(origins, vec![1, 2]);

        let r = g.retrieve(0, &[Some(e(&[1.0, 0.0]))], 0).unwrap();
        assert!(r.per_class[0].is_empty());
        assert!(g.retrieve(5, &[None], 1).is_err());
    }

    #[test]
    fn similarity_ties_break_by_client_index() {
        let g = GlobalMemory::<f64>::new(1, 4, 2);
        for c in [3, 1, 2] {
            g.upload(c, &[Some(e(&[0.0, 1.0]))]).unwrap();
        }
        let r = g.retrieve(0, &[Some(e(&[0.6, 0.8]))], 2).unwrap();
        let origins: Vec<usize> = r.per_class[0].iter().map(|h| h.origin).collect();
        assert_eq!(origins, vec![1, 2]);
    }

    #[test]
    fn serve_uses_uploads_as_queries() {
        let g = GlobalMemory::<f64>::new(2, 3, 2);
        g.upload(1, &[Some(e(&[1.0, 0.0])), Some(e(&[0.0, 1.0]))]).unwrap();
        let req = wire::encode_all(&[
            Record {
                opcode: Opcode::Upload,
                client: 0,
                class: 0,
                payload: vec![1.0, 0.0],
            },
            Record {
                opcode: Opcode::Retrieve,
                client: 0,
                class: 4,
                payload: vec![],
            },
        ]);
        let resp = wire::decode_all(&g.serve(&req).unwrap()).unwrap();
        // class 1 had no query this round, so only class 0 is answered
        assert_eq!(resp.len(), 1);
        assert_eq!(resp[0].opcode, Opcode::Download);
        assert_eq!(resp[0].client, 1);
        assert_eq!(resp[0].class, 0);
        assert_eq!(g.slot(0, 0), Some(e(&[1.0, 0.0])));
    }

    #[test]
    fn concurrent_uploads_land_in_their_own_slots() {
        let g = GlobalMemory::<f64>::new(4, 8, 3);
        std::thread::scope(|s| {
            for client in 0..8 {
                let g = &g;
                s.spawn(move || {
                    for round in 0..50 {
                        let v = vec![client as f64 + 1.0, round as f64, 1.0];
                        g.upload(client, &vec![Some(e(&v)); 4]).unwrap();
                        let _ = g.retrieve(client, &vec![Some(e(&v)); 4], 3).unwrap();
                    }
                });
            }
        });
        for class in 0..4 {
            for client in 0..8 {
                let s = g.slot(class, client).unwrap();
                assert_eq!(s.as_slice()[0], client as f64 + 1.0);
                assert_eq!(s.as_slice()[1], 49.0);
            }
        }
    }
}
