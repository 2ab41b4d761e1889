use latte_core::data::partition::partition_domains;
use latte_core::data::{load_dataset, save_dataset, synthesize, SyntheticSpec};
use latte_core::Error;
use proptest::prelude::*;

proptest! {
    #[test]
    fn partition_is_a_balanced_cover(
        domains in prop::collection::vec(0u32..4, 1..200),
        m in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut counts = std::collections::BTreeMap::new();
        for &d in &domains {
            *counts.entry(d).or_insert(0usize) += 1;
        }
        let shards = match partition_domains(&domains, m, seed) {
            Ok(s) => s,
            Err(Error::EmptyDomain { samples, .. }) => {
                prop_assert!(samples < m);
                return Ok(());
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert_eq!(shards.len(), counts.len() * m);
        let mut seen = vec![false; domains.len()];
        for (i, s) in shards.iter().enumerate() {
            prop_assert_eq!(s.client, i);
            for &ix in &s.indices {
                prop_assert!(!seen[ix]);
                seen[ix] = true;
                prop_assert_eq!(domains[ix], s.domain);
            }
        }
        prop_assert!(seen.iter().all(|&b| b));
        for (d, n) in counts {
            let sizes: Vec<usize> = shards.iter().filter(|s| s.domain == d).map(|s| s.indices.len()).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        }
        prop_assert_eq!(partition_domains(&domains, m, seed).unwrap(), shards);
    }
}

#[test]
fn synthetic_datasets_are_seeded_and_storable() {
    let spec = SyntheticSpec {
        classes: 4,
        dim: 10,
        domains: 3,
        samples_per_domain: 25,
        signal: 1.0,
        domain_shift: 0.5,
        noise: 0.3,
        logit_scale: 100.0,
    };
    let a = synthesize(&spec, 5).unwrap();
    assert_eq!(a, synthesize(&spec, 5).unwrap());
    assert_ne!(a, synthesize(&spec, 6).unwrap());
    assert_eq!((a.len(), a.dim(), a.num_classes()), (75, 10, 4));
    for i in 0..a.len() {
        let n: f64 = a.row(i).iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-9);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synthetic.json");
    save_dataset(&a, &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), a.to_stored_precision().unwrap());
}
