use log::warn;
use serde::Serialize;

use super::profile::ClientProfile;
use crate::error::{Error, Result};
use crate::linalg::{sq_dist, sym_eig, Mat, SymEig};
use crate::scalar::Scalar;

/// `L = Q SᵀS Q` with its eigendecomposition.
#[derive(Clone, Debug)]
pub struct Kernel<T> {
    pub similarity: Mat<T>,
    pub quality: Vec<T>,
    pub epsilon: T,
    pub matrix: Mat<T>,
    pub eig: SymEig<T>,
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelDump {
    pub similarity: Vec<Vec<f64>>,
    pub quality: Vec<f64>,
    pub epsilon: f64,
    pub kernel: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl<T: Scalar> Kernel<T> {
    pub fn len(&self) -> usize {
        self.quality.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quality.is_empty()
    }

    pub fn dump(&self) -> KernelDump {
        let rows = |m: &Mat<T>| -> Vec<Vec<f64>> {
            m.to_rows().into_iter().map(|r| r.into_iter().map(Scalar::as_f64).collect()).collect()
        };
        KernelDump {
            similarity: rows(&self.similarity),
            quality: self.quality.iter().map(|q| q.as_f64()).collect(),
            epsilon: self.epsilon.as_f64(),
            kernel: rows(&self.matrix),
            eigenvalues: self.eig.values.iter().map(|v| v.as_f64()).collect(),
        }
    }
}

fn need_two<T>(profiles: &[ClientProfile<T>]) -> Result<()> {
    if profiles.len() < 2 {
        return Err(Error::Config(format!("selection needs at least two clients, got {}", profiles.len())));
    }
    Ok(())
}

/// `s_rt = 1 − (d_rt − min d)/(max d − min d)` over pairwise Euclidean
/// distances of the mean features. Min and max range over the full matrix,
/// zero diagonal included, so `diag(S) = 1` and the farthest pair maps to 0.
pub fn similarity_matrix<T: Scalar>(profiles: &[ClientProfile<T>]) -> Result<Mat<T>> {
    need_two(profiles)?;
    let n = profiles.len();
    let mut dist = Mat::zeros(n, n);
    for r in 0..n {
        for t in r + 1..n {
            let d = sq_dist(&profiles[r].mean_feature, &profiles[t].mean_feature).sqrt();
            dist[(r, t)] = d;
            dist[(t, r)] = d;
        }
    }
    let (min, max) =
        dist.as_slice().iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if !(max > min) {
        return Err(Error::DegenerateSimilarity);
    }
    let span = max - min;
    Ok(Mat::from_fn(n, n, |r, t| T::one() - (dist[(r, t)] - min) / span))
}

/// [`similarity_matrix`], falling back to the identity when every profile coincides.
pub fn similarity_or_identity<T: Scalar>(profiles: &[ClientProfile<T>]) -> Result<Mat<T>> {
    match similarity_matrix(profiles) {
        Err(Error::DegenerateSimilarity) => {
            warn!("all client profiles coincide; using S = I");
            Ok(Mat::identity(profiles.len()))
        }
        other => other,
    }
}

/// `q_p = ε + (L_p − L_min)/(L_max − L_min) · (1 − ε)`; all `ε` when every loss is equal.
pub fn quality_scores<T: Scalar>(profiles: &[ClientProfile<T>], epsilon: T) -> Result<Vec<T>> {
    need_two(profiles)?;
    if !(epsilon >= T::zero() && epsilon <= T::one()) {
        return Err(Error::Config(format!("quality floor must lie in [0, 1], got {epsilon}")));
    }
    let losses: Vec<T> = profiles.iter().map(|p| p.mean_loss).collect();
    if let Some(bad) = losses.iter().find(|l| !l.is_finite()) {
        return Err(Error::Config(format!("non-finite client loss {bad}")));
    }
    let lo = losses.iter().copied().fold(T::infinity(), T::min);
    let hi = losses.iter().copied().fold(T::neg_infinity(), T::max);
    if !(hi > lo) {
        warn!("all client losses are equal; every quality set to the floor");
        return Ok(vec![epsilon; losses.len()]);
    }
    let span = hi - lo;
    Ok(losses.iter().map(|&l| (epsilon + (l - lo) / span * (T::one() - epsilon)).max(epsilon).min(T::one())).collect())
}

/// Forms `L = Q SᵀS Q`, decomposes it and checks it is numerically PSD.
pub fn build_kernel<T: Scalar>(similarity: Mat<T>, quality: Vec<T>, epsilon: T) -> Result<Kernel<T>> {
    let n = quality.len();
    if similarity.rows() != n || similarity.cols() != n {
        return Err(Error::ShapeMismatch(format!(
            "similarity is {}x{} but there are {n} quality values",
            similarity.rows(),
            similarity.cols()
        )));
    }
    let mut matrix = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let gram: T = (0..n).map(|k| similarity[(k, i)] * similarity[(k, j)]).sum();
            let v = quality[i] * gram * quality[j];
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    let eig = sym_eig(&matrix)?;
    let top = eig.values.last().copied().unwrap_or_else(T::zero);
    let floor = -T::lit(1e-8) * top.max(T::one());
    if let Some(&low) = eig.values.first() {
        if low < floor {
            return Err(Error::Malformed(format!("kernel is not positive semidefinite: min eigenvalue {low}")));
        }
    }
    Ok(Kernel { similarity, quality, epsilon, matrix, eig })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(id: usize, feature: Vec<f64>, loss: f64) -> ClientProfile<f64> {
        ClientProfile { client_id: id, mean_feature: feature, mean_loss: loss, shard_size: 1 }
    }

    fn losses(ls: &[f64]) -> Vec<ClientProfile<f64>> {
        ls.iter().enumerate().map(|(i, &l)| profile(i, vec![i as f64], l)).collect()
    }

    #[test]
    fn two_clients_give_identity_similarity() {
        let s = similarity_matrix(&[profile(0, vec![0.0, 1.0], 0.0), profile(1, vec![2.0, 5.0], 0.0)]).unwrap();
        assert_eq!(s, Mat::identity(2));
    }

    #[test]
    fn equilateral_profiles_are_mutually_dissimilar() {
        // Unit-side equilateral triangle in the plane.
        let h = 3f64.sqrt() / 2.0;
        let ps = [profile(0, vec![0.0, 0.0], 0.0), profile(1, vec![1.0, 0.0], 0.0), profile(2, vec![0.5, h], 0.0)];
        let s = similarity_matrix(&ps).unwrap();
        for r in 0..3 {
            for t in 0..3 {
                let want = if r == t { 1.0 } else { 0.0 };
                assert!((s[(r, t)] - want).abs() < 1e-12, "{r},{t}: {}", s[(r, t)]);
            }
        }
    }

    #[test]
    fn similarity_is_scale_invariant() {
        let ps: Vec<_> = (0..5).map(|i| profile(i, vec![i as f64, (i * i) as f64 * 0.3], 0.0)).collect();
        let scaled: Vec<_> =
            ps.iter().map(|p| profile(p.client_id, p.mean_feature.iter().map(|x| x * 4.0).collect(), 0.0)).collect();
        let (a, b) = (similarity_matrix(&ps).unwrap(), similarity_matrix(&scaled).unwrap());
        assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn identical_profiles_are_degenerate() {
        let ps = [profile(0, vec![1.0], 0.0), profile(1, vec![1.0], 0.0)];
        assert!(matches!(similarity_matrix(&ps), Err(Error::DegenerateSimilarity)));
        assert_eq!(similarity_or_identity(&ps).unwrap(), Mat::identity(2));
    }

    #[test]
    fn single_client_rejected() {
        assert!(similarity_matrix(&losses(&[1.0])).is_err());
        assert!(quality_scores(&losses(&[1.0]), 0.01).is_err());
    }

    #[test]
    fn quality_endpoints() {
        assert_eq!(quality_scores(&losses(&[0.2, 0.8]), 0.01).unwrap(), vec![0.01, 1.0]);
        assert_eq!(quality_scores(&losses(&[1.0, 2.0, 3.0]), 0.0).unwrap(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn quality_shift_invariant_and_flat_case() {
        let a = quality_scores(&losses(&[0.3, 0.9, 0.4]), 0.05).unwrap();
        let b = quality_scores(&losses(&[10.3, 10.9, 10.4]), 0.05).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
        assert_eq!(quality_scores(&losses(&[2.0, 2.0, 2.0]), 0.05).unwrap(), vec![0.05; 3]);
        assert!(quality_scores(&losses(&[1.0, 2.0]), 1.5).is_err());
    }

    #[test]
    fn kernel_special_cases() {
        let s = Mat::from_rows(&[vec![1.0, 0.3, 0.1], vec![0.3, 1.0, 0.6], vec![0.1, 0.6, 1.0]]).unwrap();
        let k = build_kernel(s.clone(), vec![1.0; 3], 0.0).unwrap();
        assert_eq!(k.matrix, s.transpose().matmul(&s).unwrap());
        let q = vec![0.2, 1.0, 0.5];
        let k = build_kernel(Mat::identity(3), q.clone(), 0.0).unwrap();
        assert_eq!(k.matrix, Mat::from_diag(&q.iter().map(|x| x * x).collect::<Vec<_>>()));
        assert!(build_kernel(Mat::identity(2), q, 0.0).is_err());
    }
}
