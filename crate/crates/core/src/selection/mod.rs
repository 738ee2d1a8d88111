//! Client selection.
//!
//! Every client reports a profile once: the mean extractor embedding of its
//! bags and its mean loss under the initial global model. The server turns the
//! embeddings into a min-max normalized similarity matrix `S`, the losses into
//! min-max scaled qualities `q ∈ [ε, 1]`, and samples the cohort from the
//! k-DPP with kernel `L = Q SᵀS Q` (`Q = diag(q)`).
//!
//! Baselines: uniform random subsets, and the same k-DPP with `Q = I`.

mod kdpp;
mod kernel;
mod profile;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use kdpp::{elementary_symmetric, rank_threshold, sample_kdpp};
pub use kernel::{build_kernel, quality_scores, similarity_matrix, similarity_or_identity, Kernel, KernelDump};
pub use profile::{profile_clients, ClientProfile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Random,
    Dpp,
    Dppq,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 3] = [SelectionMethod::Random, SelectionMethod::Dpp, SelectionMethod::Dppq];

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMethod::Random => "random",
            SelectionMethod::Dpp => "dpp",
            SelectionMethod::Dppq => "dppq",
        }
    }
}

impl std::fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(SelectionMethod::Random),
            "dpp" => Ok(SelectionMethod::Dpp),
            "dppq" => Ok(SelectionMethod::Dppq),
            other => Err(Error::Config(format!("unknown selection method {other:?}"))),
        }
    }
}

/// A cohort: distinct client indices in ascending order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subset {
    pub indices: Vec<usize>,
    pub method: SelectionMethod,
}

impl Subset {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Uniform `size`-subset of `0..n` from a partial Fisher–Yates shuffle.
pub fn sample_random<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Result<Subset> {
    if size == 0 {
        return Err(Error::Config("cohort size must be >= 1".into()));
    }
    if size > n {
        return Err(Error::Config(format!("cannot pick {size} of {n} clients")));
    }
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..size {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    let mut indices = pool[..size].to_vec();
    indices.sort_unstable();
    Ok(Subset { indices, method: SelectionMethod::Random })
}

/// Exact k-DPP draw from the quality-diversity kernel.
pub fn sample_dppq<T: Scalar, R: Rng + ?Sized>(kernel: &Kernel<T>, size: usize, rng: &mut R) -> Result<Subset> {
    Ok(Subset { indices: sample_kdpp(&kernel.eig, size, rng)?, method: SelectionMethod::Dppq })
}

/// Diversity-only baseline: the k-DPP with kernel `SᵀS`.
pub fn sample_dpp_baseline<T: Scalar, R: Rng + ?Sized>(
    profiles: &[ClientProfile<T>],
    size: usize,
    rng: &mut R,
) -> Result<Subset> {
    let kernel = diversity_kernel(profiles)?;
    Ok(Subset { indices: sample_kdpp(&kernel.eig, size, rng)?, method: SelectionMethod::Dpp })
}

pub fn diversity_kernel<T: Scalar>(profiles: &[ClientProfile<T>]) -> Result<Kernel<T>> {
    let s = similarity_or_identity(profiles)?;
    build_kernel(s, vec![T::one(); profiles.len()], T::zero())
}

pub fn quality_diversity_kernel<T: Scalar>(profiles: &[ClientProfile<T>], epsilon: T) -> Result<Kernel<T>> {
    let s = similarity_or_identity(profiles)?;
    let q = quality_scores(profiles, epsilon)?;
    build_kernel(s, q, epsilon)
}

/// Runs `method` over the profiles. Returns the kernel for the DPP methods.
pub fn select<T: Scalar, R: Rng + ?Sized>(
    method: SelectionMethod,
    profiles: &[ClientProfile<T>],
    size: usize,
    epsilon: T,
    rng: &mut R,
) -> Result<(Subset, Option<Kernel<T>>)> {
    match method {
        SelectionMethod::Random => Ok((sample_random(profiles.len(), size, rng)?, None)),
        SelectionMethod::Dpp | SelectionMethod::Dppq => {
            let kernel = if method == SelectionMethod::Dpp {
                diversity_kernel(profiles)?
            } else {
                quality_diversity_kernel(profiles, epsilon)?
            };
            let indices = sample_kdpp(&kernel.eig, size, rng)?;
            Ok((Subset { indices, method }, Some(kernel)))
        }
    }
}
