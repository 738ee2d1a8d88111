use num_traits::{One, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::SymEig;
use crate::scalar::Scalar;

/// Table `e[n][l]` of elementary symmetric polynomials of order `l` in the
/// first `n` values, for `n ≤ N`, `l ≤ k`.
pub fn elementary_symmetric<T>(values: &[T], k: usize) -> Vec<Vec<T>>
where
    T: Clone + Zero + One,
{
    let n = values.len();
    let mut e = vec![vec![T::zero(); k + 1]; n + 1];
    for row in e.iter_mut() {
        row[0] = T::one();
    }
    for i in 1..=n {
        for l in 1..=k {
            e[i][l] = e[i - 1][l].clone() + values[i - 1].clone() * e[i - 1][l - 1].clone();
        }
    }
    e
}

/// Eigenvalues at or below this are treated as zero.
pub fn rank_threshold<T: Scalar>(values: &[T]) -> T {
    let top = values.iter().copied().fold(T::zero(), T::max);
    T::lit(1e-12) * top.max(T::one())
}

/// Exact draw of a `k`-subset `Y` with `P(Y) ∝ det(L_Y)`, given the
/// eigendecomposition of `L`. Returns ascending indices.
///
/// Phase one picks `k` eigenvectors, keeping vector `n` (scanning from the
/// last) with probability `λ_n e_{l-1}^{n-1} / e_l^n`. Phase two samples one
/// item per pass from the spanned projection DPP.
pub fn sample_kdpp<T: Scalar, R: Rng + ?Sized>(eig: &SymEig<T>, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = eig.values.len();
    if k == 0 {
        return Err(Error::Config("cohort size must be >= 1".into()));
    }
    let threshold = rank_threshold(&eig.values);
    let rank = eig.values.iter().filter(|&&v| v > threshold).count();
    if k > rank || k > n {
        return Err(Error::InfeasibleK { requested: k, rank });
    }
    // Scaling by the top eigenvalue keeps the table in range; the ratios are unchanged.
    let top = eig.values.iter().copied().fold(T::zero(), T::max);
    let lambda: Vec<T> = eig.values.iter().map(|&v| if v > threshold { v / top } else { T::zero() }).collect();
    let e = elementary_symmetric(&lambda, k);

    let mut chosen = Vec::with_capacity(k);
    let mut left = k;
    for i in (1..=n).rev() {
        if left == 0 {
            break;
        }
        let denom = e[i][left];
        let p = if denom > T::zero() { lambda[i - 1] * e[i - 1][left - 1] / denom } else { T::zero() };
        let u = T::lit(rng.random::<f64>());
        if u < p || i == left && lambda[i - 1] > T::zero() {
            chosen.push(i - 1);
            left -= 1;
        }
    }
    if left > 0 {
        return Err(Error::InfeasibleK { requested: k, rank });
    }

    let basis: Vec<Vec<T>> = chosen.iter().map(|&c| eig.vector(c)).collect();
    let mut items = project_sample(basis, rng)?;
    items.sort_unstable();
    Ok(items)
}

/// Samples from the projection DPP onto the span of orthonormal `basis`.
fn project_sample<T: Scalar, R: Rng + ?Sized>(mut basis: Vec<Vec<T>>, rng: &mut R) -> Result<Vec<usize>> {
    let mut items = Vec::with_capacity(basis.len());
    while !basis.is_empty() {
        let n = basis[0].len();
        let weights: Vec<T> = (0..n)
            .map(|i| if items.contains(&i) { T::zero() } else { basis.iter().map(|v| v[i] * v[i]).sum() })
            .collect();
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(Error::NonFinite("projection DPP has no mass left".into()));
        }
        let mut target = T::lit(rng.random::<f64>()) * total;
        let mut pick = None;
        for (i, &w) in weights.iter().enumerate() {
            if w > T::zero() {
                pick = Some(i);
                if target < w {
                    break;
                }
                target = target - w;
            }
        }
        let item = pick.expect("positive total implies a positive weight");
        items.push(item);

        // Drop the vector with the largest entry at `item`, then eliminate
        // that coordinate from the rest and re-orthonormalize.
        let pivot =
            (0..basis.len()).max_by(|&a, &b| basis[a][item].abs().partial_cmp(&basis[b][item].abs()).unwrap()).unwrap();
        let pv = basis.swap_remove(pivot);
        for v in basis.iter_mut() {
            let f = v[item] / pv[item];
            for (x, &p) in v.iter_mut().zip(&pv) {
                *x = *x - f * p;
            }
            v[item] = T::zero();
        }
        orthonormalize(&mut basis);
    }
    Ok(items)
}

/// Modified Gram–Schmidt, two passes.
fn orthonormalize<T: Scalar>(basis: &mut [Vec<T>]) {
    for j in 0..basis.len() {
        for _ in 0..2 {
            for i in 0..j {
                let (head, tail) = basis.split_at_mut(j);
                let d: T = head[i].iter().zip(tail[0].iter()).map(|(a, b)| *a * *b).sum();
                for (x, &q) in tail[0].iter_mut().zip(head[i].iter()) {
                    *x = *x - d * q;
                }
            }
        }
        let norm = basis[j].iter().map(|x| *x * *x).sum::<T>().sqrt();
        if norm > T::zero() {
            let inv = T::one() / norm;
            basis[j].iter_mut().for_each(|x| *x = *x * inv);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_eig, Mat};
    use crate::rng;
    use num_rational::Ratio;
    use std::collections::HashMap;

    fn det(m: &[Vec<f64>]) -> f64 {
        // Partial-pivot Gaussian elimination.
        let n = m.len();
        let mut a = m.to_vec();
        let mut d = 1.0;
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| a[x][c].abs().partial_cmp(&a[y][c].abs()).unwrap()).unwrap();
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

    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
            .collect()
    }

    /// Exact k-DPP law by enumerating every minor.
    fn enumerated(l: &Mat<f64>, k: usize) -> HashMap<Vec<usize>, f64> {
        let all = subsets(l.rows(), k);
        let dets: Vec<f64> = all
            .iter()
            .map(|s| det(&s.iter().map(|&i| s.iter().map(|&j| l[(i, j)]).collect()).collect::<Vec<_>>()).max(0.0))
            .collect();
        let z: f64 = dets.iter().sum();
        all.into_iter().zip(dets).map(|(s, d)| (s, d / z)).collect()
    }

    fn total_variation(l: &Mat<f64>, k: usize, draws: usize, seed: u64) -> f64 {
        let exact = enumerated(l, k);
        let eig = sym_eig(l).unwrap();
        let mut r = rng::stream(seed, &[]);
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..draws {
            let s = sample_kdpp(&eig, k, &mut r).unwrap();
            assert_eq!(s.len(), k);
            *counts.entry(s).or_default() += 1;
        }
        for s in counts.keys() {
            assert!(exact.contains_key(s));
        }
        0.5 * exact.iter().map(|(s, p)| (p - *counts.get(s).unwrap_or(&0) as f64 / draws as f64).abs()).sum::<f64>()
    }

    fn random_psd(n: usize, seed: u64) -> Mat<f64> {
        let mut r = rng::stream(seed, &[1]);
        let b = Mat::from_fn(n, n, |_, _| r.random::<f64>() * 2.0 - 1.0);
        b.transpose().matmul(&b).unwrap()
    }

    #[test]
    fn esp_exact_in_rationals() {
        let v: Vec<Ratio<i64>> = [1, 2, 3].iter().map(|&x| Ratio::from_integer(x)).collect();
        let e = elementary_symmetric(&v, 3);
        assert_eq!(e[3][1], Ratio::from_integer(6));
        assert_eq!(e[3][2], Ratio::from_integer(11));
        assert_eq!(e[3][3], Ratio::from_integer(6));
        assert_eq!(e[2][2], Ratio::from_integer(2));
        let halves: Vec<Ratio<i64>> = vec![Ratio::new(1, 2); 4];
        assert_eq!(elementary_symmetric(&halves, 2)[4][2], Ratio::new(6, 4));
    }

    #[test]
    fn diagonal_kernel_matches_enumeration() {
        let l = Mat::from_diag(&[1.0, 2.0, 3.0, 4.0]);
        let exact = enumerated(&l, 2);
        assert!((exact[&vec![2, 3]] - 12.0 / 35.0).abs() < 1e-12);
        assert!(total_variation(&l, 2, 100_000, 5) < 0.01);
    }

    #[test]
    fn matches_enumeration_n4_k2() {
        assert!(total_variation(&random_psd(4, 11), 2, 200_000, 12) < 0.01);
    }

    #[test]
    fn matches_enumeration_n6_k3() {
        assert!(total_variation(&random_psd(6, 21), 3, 200_000, 22) < 0.01);
    }

    #[test]
    fn identity_kernel_is_uniform() {
        let tv = total_variation(&Mat::identity(5), 2, 100_000, 3);
        assert!(tv < 0.01, "{tv}");
    }

    #[test]
    fn k_equal_rank_is_deterministic_set() {
        let l = Mat::from_diag(&[0.0, 2.0, 0.0, 5.0]);
        let eig = sym_eig(&l).unwrap();
        let mut r = rng::stream(0, &[]);
        for _ in 0..50 {
            assert_eq!(sample_kdpp(&eig, 2, &mut r).unwrap(), vec![1, 3]);
        }
        assert!(matches!(sample_kdpp(&eig, 3, &mut r), Err(Error::InfeasibleK { requested: 3, rank: 2 })));
        assert!(sample_kdpp(&eig, 0, &mut r).is_err());
    }

    #[test]
    fn kernel_scale_does_not_change_law() {
        let l = random_psd(5, 31);
        let big = Mat::from_fn(5, 5, |i, j| l[(i, j)] * 1e6);
        let (a, b) = (sym_eig(&l).unwrap(), sym_eig(&big).unwrap());
        let (mut ra, mut rb) = (rng::stream(9, &[]), rng::stream(9, &[]));
        let mut same = 0;
        for _ in 0..500 {
            same += (sample_kdpp(&a, 2, &mut ra).unwrap() == sample_kdpp(&b, 2, &mut rb).unwrap()) as usize;
        }
        // Same uniforms, eigenvalue ratios equal up to rounding.
        assert!(same >= 495, "{same}");
    }

    #[test]
    fn all_subsets_have_k_distinct_items() {
        let eig = sym_eig(&random_psd(12, 41)).unwrap();
        let mut r = rng::stream(1, &[]);
        for k in 1..=12 {
            let s = sample_kdpp(&eig, k, &mut r).unwrap();
            assert_eq!(s.len(), k);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
