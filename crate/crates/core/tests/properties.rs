mod common;

use std::collections::BTreeMap;

use neuacf::model::fusion::{attention_combine, self_attention_coefficients};
use neuacf::{build_graph, commuting_matrix, parse_metapath, pathsim, SparseMatrix};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sparse_strategy(rows: usize, cols: usize) -> impl Strategy<Value = SparseMatrix> {
    prop::collection::vec((0..rows, 0..cols, 1u8..4), 0..rows * cols).prop_map(move |t| {
        let t = t.into_iter().map(|(r, c, v)| (r, c, v as f64)).collect();
        SparseMatrix::from_triplets(rows, cols, t).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn commuting_matches_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hin = common::random_hin(&mut rng, 12, 3);
        if let Some(expr) = hin.random_metapath(&mut rng, 3) {
            let path = parse_metapath(&expr, &hin.schema).unwrap();
            let m = commuting_matrix(&hin.graph, &path).unwrap();
            prop_assert_eq!(common::dense_rows(&m), hin.brute_force_commuting(&expr));
            prop_assert!(m.is_symmetric());
        }
    }

    #[test]
    fn pathsim_bounds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hin = common::random_hin(&mut rng, 10, 3);
        if let Some(expr) = hin.random_metapath(&mut rng, 2) {
            let path = parse_metapath(&expr, &hin.schema).unwrap();
            let s = common::dense_rows(&pathsim(&commuting_matrix(&hin.graph, &path).unwrap()).unwrap());
            for (a, row) in s.iter().enumerate() {
                prop_assert!(s[a][a] == 0.0 || s[a][a] == 1.0);
                for (b, &v) in row.iter().enumerate() {
                    prop_assert!((0.0..=1.0).contains(&v));
                    prop_assert_eq!(v.to_bits(), s[b][a].to_bits());
                }
            }
        }
    }

    #[test]
    fn matmul_associates(
        a in sparse_strategy(5, 4),
        b in sparse_strategy(4, 6),
        c in sparse_strategy(6, 3),
    ) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert_eq!(left.to_dense(), right.to_dense());
    }

    #[test]
    fn transpose_of_product(a in sparse_strategy(4, 5), b in sparse_strategy(5, 3)) {
        let ab_t = a.matmul(&b).unwrap().transpose();
        let bt_at = b.transpose().matmul(&a.transpose()).unwrap();
        prop_assert_eq!(ab_t, bt_at);
    }

    #[test]
    fn edge_order_is_irrelevant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hin = common::random_hin(&mut rng, 8, 3);
        let mut shuffled: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
        for (label, (_, _, list)) in &hin.edges {
            let mut l = list.clone();
            l.shuffle(&mut rng);
            shuffled.insert(label.clone(), l);
        }
        let g = build_graph(hin.schema.clone(), &hin.counts, &shuffled).unwrap();
        for label in hin.edges.keys() {
            prop_assert_eq!(
                g.relation_matrix(label, false).unwrap(),
                hin.graph.relation_matrix(label, false).unwrap()
            );
        }
    }

    #[test]
    fn fusion_weights_normalised(
        factors in prop::collection::vec(prop::collection::vec(0.0f64..5.0, 4), 1..6),
        scores in prop::collection::vec(-30.0f64..30.0, 6),
    ) {
        let l = factors.len();
        let (_, w) = attention_combine(&factors, &scores[..l]);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let (coeffs, _) = self_attention_coefficients(&factors);
        for b in 0..l {
            let row: f64 = (0..l).map(|c| coeffs[(b, c)]).sum();
            prop_assert!((row - 1.0).abs() < 1e-9);
            if l > 1 {
                prop_assert_eq!(coeffs[(b, b)], 0.0);
            }
        }
    }
}
