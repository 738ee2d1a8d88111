//! Properties of the similarity, quality and kernel matrices over random profiles.

use fedmil::linalg::Mat;
use fedmil::selection::{build_kernel, quality_scores, similarity_matrix, ClientProfile};
use proptest::prelude::*;

fn profiles(raw: &[(Vec<f64>, f64)]) -> Vec<ClientProfile<f64>> {
    raw.iter()
        .enumerate()
        .map(|(i, (f, l))| ClientProfile { client_id: i, mean_feature: f.clone(), mean_loss: *l, shard_size: 1 })
        .collect()
}

fn profile_sets() -> impl Strategy<Value = Vec<(Vec<f64>, f64)>> {
    (2usize..12, 1usize..6)
        .prop_flat_map(|(n, d)| prop::collection::vec((prop::collection::vec(-10.0f64..10.0, d), 0.0f64..5.0), n))
}

fn det(m: &Mat<f64>) -> f64 {
    let n = m.rows();
    let mut a = m.to_rows();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            d = -d;
        }
        d *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            let (top, rest) = a.split_at_mut(r);
            for (x, p) in rest[0][c..].iter_mut().zip(&top[c][c..]) {
                *x -= f * p;
            }
        }
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn kernel_is_psd_with_bounded_factors(raw in profile_sets(), eps in 0.0f64..0.5) {
        let ps = profiles(&raw);
        let s = match similarity_matrix(&ps) {
            Ok(s) => s,
            // Every feature vector identical: nothing to check.
            Err(_) => return Ok(()),
        };
        let n = ps.len();
        for r in 0..n {
            prop_assert_eq!(s[(r, r)], 1.0);
            for t in 0..n {
                prop_assert!((0.0..=1.0).contains(&s[(r, t)]));
                prop_assert_eq!(s[(r, t)], s[(t, r)]);
            }
        }
        let q = quality_scores(&ps, eps).unwrap();
        prop_assert!(q.iter().all(|&x| x >= eps && x <= 1.0));
        let k = build_kernel(s, q, eps).unwrap();
        let top = *k.eig.values.last().unwrap();
        prop_assert!(k.eig.values[0] >= -1e-8 * top.max(1.0));
    }

    #[test]
    fn quality_is_shift_and_scale_invariant(raw in profile_sets(), shift in -3.0f64..3.0, scale in 0.1f64..10.0) {
        let ps = profiles(&raw);
        let moved: Vec<_> = ps.iter().map(|p| ClientProfile { mean_loss: p.mean_loss * scale + shift, ..p.clone() }).collect();
        let a = quality_scores(&ps, 0.01).unwrap();
        let b = quality_scores(&moved, 0.01).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn near_duplicate_pairs_have_small_determinant() {
    // Clients 0 and 1 nearly coincide; 2 and 3 are spread out.
    let ps = profiles(&[(vec![0.0, 0.0], 1.0), (vec![0.01, 0.0], 1.0), (vec![5.0, 0.0], 1.0), (vec![0.0, 5.0], 1.0)]);
    let s = similarity_matrix(&ps).unwrap();
    let k = build_kernel(s, vec![1.0; 4], 0.0).unwrap();
    let minor = |a: usize, b: usize| {
        det(&Mat::from_rows(&[vec![k.matrix[(a, a)], k.matrix[(a, b)]], vec![k.matrix[(b, a)], k.matrix[(b, b)]]])
            .unwrap())
    };
    assert!(minor(0, 1) < minor(0, 2));
    assert!(minor(0, 1) < minor(2, 3));
    assert!(minor(0, 1) < 1e-3);
}

#[test]
fn higher_quality_raises_subset_weight() {
    let ps = profiles(&[(vec![0.0], 0.0), (vec![1.0], 0.5), (vec![3.0], 1.0)]);
    let s = similarity_matrix(&ps).unwrap();
    let flat = build_kernel(s.clone(), vec![1.0; 3], 0.0).unwrap();
    let q = quality_scores(&ps, 0.01).unwrap();
    let weighted = build_kernel(s, q.clone(), 0.01).unwrap();
    // det(L_G) scales by Π q_i² over G.
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let pick =
            |m: &Mat<f64>| det(&Mat::from_rows(&[vec![m[(a, a)], m[(a, b)]], vec![m[(b, a)], m[(b, b)]]]).unwrap());
        let ratio = pick(&weighted.matrix) / pick(&flat.matrix);
        assert!((ratio - (q[a] * q[b]).powi(2)).abs() < 1e-12 * ratio.max(1.0));
    }
}
