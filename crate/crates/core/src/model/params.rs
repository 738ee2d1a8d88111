use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelShape {
    /// Instance feature dimension `d`.
    pub input_dim: usize,
    /// Embedding width `M`.
    pub embed_dim: usize,
    /// Attention hidden width `L`.
    pub attn_dim: usize,
    pub num_classes: usize,
}

/// Named slices of the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    /// Extractor weight, stored input-major: `[j·M + m] = W[m][j]`.
    ExtractorWeight,
    ExtractorBias,
    /// Tanh branch, stored embed-major: `[m·L + l] = V[l][m]`.
    AttentionV,
    /// Sigmoid gate, stored embed-major like `AttentionV`.
    AttentionU,
    AttentionW,
    /// Classifier weight, row-major `[c·M + m]`.
    ClassifierWeight,
    ClassifierBias,
}

impl Segment {
    pub const ALL: [Segment; 7] = [
        Segment::ExtractorWeight,
        Segment::ExtractorBias,
        Segment::AttentionV,
        Segment::AttentionU,
        Segment::AttentionW,
        Segment::ClassifierWeight,
        Segment::ClassifierBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Segment::ExtractorWeight => "extractor.weight",
            Segment::ExtractorBias => "extractor.bias",
            Segment::AttentionV => "attention.v",
            Segment::AttentionU => "attention.u",
            Segment::AttentionW => "attention.w",
            Segment::ClassifierWeight => "classifier.weight",
            Segment::ClassifierBias => "classifier.bias",
        }
    }
}

impl ModelShape {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embed_dim == 0 || self.attn_dim == 0 || self.num_classes == 0 {
            return Err(Error::Config(format!("all model dimensions must be >= 1: {self:?}")));
        }
        Ok(())
    }

    fn len_of(&self, seg: Segment) -> usize {
        let (d, m, l, c) = (self.input_dim, self.embed_dim, self.attn_dim, self.num_classes);
        match seg {
            Segment::ExtractorWeight => d * m,
            Segment::ExtractorBias => m,
            Segment::AttentionV | Segment::AttentionU => m * l,
            Segment::AttentionW => l,
            Segment::ClassifierWeight => c * m,
            Segment::ClassifierBias => c,
        }
    }

    pub fn range(&self, seg: Segment) -> Range<usize> {
        let start: usize = Segment::ALL.iter().take_while(|&&s| s != seg).map(|&s| self.len_of(s)).sum();
        start..start + self.len_of(seg)
    }

    pub fn num_params(&self) -> usize {
        Segment::ALL.iter().map(|&s| self.len_of(s)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub embed_dim: usize,
    pub attn_dim: usize,
    pub num_classes: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { input_dim: 64, embed_dim: 128, attn_dim: 64, num_classes: 2, init_seed: 0 }
    }
}

impl ModelConfig {
    pub fn shape(&self) -> ModelShape {
        ModelShape {
            input_dim: self.input_dim,
            embed_dim: self.embed_dim,
            attn_dim: self.attn_dim,
            num_classes: self.num_classes,
        }
    }
}

/// Every trainable weight of the network in one contiguous vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    shape: ModelShape,
    data: Vec<T>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(shape: ModelShape) -> Self {
        Self { shape, data: vec![T::zero(); shape.num_params()] }
    }

    pub fn from_vec(shape: ModelShape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a model with {} parameters",
                data.len(),
                shape.num_params()
            )));
        }
        Ok(Self { shape, data })
    }

    /// Weight matrices uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        let shape = cfg.shape();
        shape.validate()?;
        let mut p = Self::zeros(shape);
        let mut rng = rng::stream(cfg.init_seed, &[rng::tag::MODEL_INIT]);
        let (d, m, l, c) = (shape.input_dim, shape.embed_dim, shape.attn_dim, shape.num_classes);
        let fans = [
            (Segment::ExtractorWeight, d, m),
            (Segment::AttentionV, m, l),
            (Segment::AttentionU, m, l),
            (Segment::AttentionW, l, 1),
            (Segment::ClassifierWeight, m, c),
        ];
        for (seg, fan_in, fan_out) in fans {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in p.segment_mut(seg) {
                *w = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(p)
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn segment(&self, seg: Segment) -> &[T] {
        &self.data[self.shape.range(seg)]
    }

    pub fn segment_mut(&mut self, seg: Segment) -> &mut [T] {
        let r = self.shape.range(seg);
        &mut self.data[r]
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) -> Result<()> {
        self.check_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for a in &mut self.data {
            *a = *a * factor;
        }
    }

    pub fn scaled(&self, factor: T) -> Self {
        let mut out = self.clone();
        out.scale(factor);
        out
    }

    /// `self ← self + t·(target − self)`.
    pub fn interpolate_toward(&mut self, target: &Self, t: T) -> Result<()> {
        self.check_shape(target)?;
        if t == T::one() {
            self.data.copy_from_slice(&target.data);
            return Ok(());
        }
        for (a, &b) in self.data.iter_mut().zip(&target.data) {
            *a = *a + t * (b - *a);
        }
        Ok(())
    }

    pub fn norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Segment name and in-segment index of the first NaN/Inf, if any.
    pub fn first_non_finite(&self) -> Option<(Segment, usize)> {
        let i = self.data.iter().position(|x| !x.is_finite())?;
        Segment::ALL.iter().find_map(|&seg| {
            let r = self.shape.range(seg);
            r.contains(&i).then(|| (seg, i - r.start))
        })
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        match self.first_non_finite() {
            None => Ok(()),
            Some((seg, i)) => {
                Err(Error::NonFinite(format!("{context}: {}[{i}] = {}", seg.name(), self.segment(seg)[i])))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> ModelShape {
        ModelShape { input_dim: 3, embed_dim: 4, attn_dim: 2, num_classes: 2 }
    }

    #[test]
    fn segments_tile_the_vector() {
        let s = shape();
        let mut end = 0;
        for seg in Segment::ALL {
            let r = s.range(seg);
            assert_eq!(r.start, end);
            end = r.end;
        }
        assert_eq!(end, s.num_params());
        assert_eq!(s.num_params(), 12 + 4 + 8 + 8 + 2 + 8 + 2);
    }

    #[test]
    fn init_respects_bounds_and_zero_biases() {
        let cfg = ModelConfig { input_dim: 3, embed_dim: 4, attn_dim: 2, num_classes: 2, init_seed: 3 };
        let p: Params<f64> = Params::init(&cfg).unwrap();
        let bound = (6.0f64 / 7.0).sqrt();
        assert!(p.segment(Segment::ExtractorWeight).iter().all(|w| w.abs() <= bound));
        assert!(p.segment(Segment::ExtractorBias).iter().all(|&b| b == 0.0));
        assert!(p.segment(Segment::ClassifierBias).iter().all(|&b| b == 0.0));
        assert!(p.segment(Segment::AttentionW).iter().any(|&w| w != 0.0));
        assert_eq!(p, Params::init(&cfg).unwrap());
    }

    #[test]
    fn rejects_zero_dims() {
        let cfg = ModelConfig { embed_dim: 0, ..ModelConfig::default() };
        assert!(Params::<f64>::init(&cfg).is_err());
    }

    #[test]
    fn vector_space_ops() {
        let mut a = Params::<f64>::zeros(shape());
        let mut b = Params::<f64>::zeros(shape());
        b.as_mut_slice().iter_mut().enumerate().for_each(|(i, x)| *x = i as f64);
        a.add_scaled(&b, 2.0).unwrap();
        assert_eq!(a, b.scaled(2.0));
        a.interpolate_toward(&b, 0.5).unwrap();
        assert_eq!(a, b.scaled(1.5));
        let other = Params::<f64>::zeros(ModelShape { num_classes: 3, ..shape() });
        assert!(a.add_scaled(&other, 1.0).is_err());
    }

    #[test]
    fn non_finite_is_located() {
        let mut p = Params::<f64>::zeros(shape());
        p.segment_mut(Segment::AttentionU)[5] = f64::NAN;
        assert_eq!(p.first_non_finite(), Some((Segment::AttentionU, 5)));
        assert!(matches!(p.ensure_finite("t"), Err(Error::NonFinite(_))));
    }
}
