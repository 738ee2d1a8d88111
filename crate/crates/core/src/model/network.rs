use super::params::{Params, Segment};
use crate::datasets::Bag;
use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, sigmoid, softmax_in_place, Scalar};

/// Activations of one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    n: usize,
    /// Extractor pre-activations, `n × M`.
    pre: Vec<T>,
    /// ReLU embeddings, `n × M`.
    h: Vec<T>,
    /// `tanh(V h_i)`, `n × L`; empty for single-instance bags.
    tanh_v: Vec<T>,
    /// `sigm(U h_i)`, `n × L`; empty for single-instance bags.
    gate_u: Vec<T>,
    attn: Vec<T>,
    z: Vec<T>,
    logits: Vec<T>,
    probs: Vec<T>,
    label: usize,
    loss: T,
}

impl<T: Scalar> Trace<T> {
    pub fn loss(&self) -> T {
        self.loss
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    pub fn attention(&self) -> &[T] {
        &self.attn
    }

    pub fn pooled(&self) -> &[T] {
        &self.z
    }

    pub fn embedding(&self, i: usize) -> &[T] {
        let m = self.z.len();
        &self.h[i * m..(i + 1) * m]
    }

    pub fn num_instances(&self) -> usize {
        self.n
    }

    /// Instance-mean of the extractor embeddings.
    pub fn mean_embedding(&self) -> Vec<T> {
        let m = self.z.len();
        let inv = T::one() / T::from_count(self.n);
        (0..m).map(|k| (0..self.n).map(|i| self.h[i * m + k]).sum::<T>() * inv).collect()
    }

    pub fn predicted_class(&self) -> usize {
        argmax(&self.probs)
    }
}

pub(crate) fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

fn check_dim<T: Scalar>(params: &Params<T>, bag: &Bag) -> Result<()> {
    let d = params.shape().input_dim;
    if bag.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: bag.dim() });
    }
    Ok(())
}

/// Writes pre-activations and ReLU embeddings for every instance.
fn extract_into<T: Scalar>(params: &Params<T>, bag: &Bag, pre: &mut Vec<T>, h: &mut Vec<T>) {
    let m = params.shape().embed_dim;
    let w = params.segment(Segment::ExtractorWeight);
    let b = params.segment(Segment::ExtractorBias);
    pre.clear();
    h.clear();
    for x in bag.instances() {
        let start = pre.len();
        pre.extend_from_slice(b);
        let row = &mut pre[start..];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                axpy(row, T::from_feature(xj), &w[j * m..(j + 1) * m]);
            }
        }
        h.extend(row.iter().map(|&v| v.max(T::zero())));
    }
}

/// `h_i = ReLU(W x_i + b)` for every instance of `bag`.
pub fn extract_features<T: Scalar>(params: &Params<T>, bag: &Bag) -> Result<Vec<Vec<T>>> {
    check_dim(params, bag)?;
    let (mut pre, mut h) = (Vec::new(), Vec::new());
    extract_into(params, bag, &mut pre, &mut h);
    Ok(h.chunks_exact(params.shape().embed_dim).map(<[T]>::to_vec).collect())
}

/// Gated branch activations for one embedding; returns the attention score.
fn gate<T: Scalar>(params: &Params<T>, h: &[T], tanh_v: &mut [T], gate_u: &mut [T]) -> T {
    let l = params.shape().attn_dim;
    let v = params.segment(Segment::AttentionV);
    let u = params.segment(Segment::AttentionU);
    let w = params.segment(Segment::AttentionW);
    tanh_v.fill(T::zero());
    gate_u.fill(T::zero());
    for (k, &hk) in h.iter().enumerate() {
        if hk != T::zero() {
            axpy(tanh_v, hk, &v[k * l..(k + 1) * l]);
            axpy(gate_u, hk, &u[k * l..(k + 1) * l]);
        }
    }
    for t in tanh_v.iter_mut() {
        *t = t.tanh();
    }
    for g in gate_u.iter_mut() {
        *g = sigmoid(*g);
    }
    w.iter().zip(tanh_v.iter().zip(gate_u.iter())).fold(T::zero(), |s, (&wl, (&t, &g))| s + wl * t * g)
}

/// Attention weights over `h` (flat `n × M`) and the pooled vector.
fn pool_into<T: Scalar>(
    params: &Params<T>,
    h: &[T],
    n: usize,
    tanh_v: &mut Vec<T>,
    gate_u: &mut Vec<T>,
) -> (Vec<T>, Vec<T>) {
    let m = params.shape().embed_dim;
    let l = params.shape().attn_dim;
    let attn = if n == 1 {
        // Softmax of a singleton is exactly 1.
        tanh_v.clear();
        gate_u.clear();
        vec![T::one()]
    } else {
        tanh_v.resize(n * l, T::zero());
        gate_u.resize(n * l, T::zero());
        let mut scores: Vec<T> = (0..n)
            .map(|i| {
                gate(params, &h[i * m..(i + 1) * m], &mut tanh_v[i * l..(i + 1) * l], &mut gate_u[i * l..(i + 1) * l])
            })
            .collect();
        softmax_in_place(&mut scores);
        scores
    };
    let mut z = vec![T::zero(); m];
    for (i, &a) in attn.iter().enumerate() {
        axpy(&mut z, a, &h[i * m..(i + 1) * m]);
    }
    (z, attn)
}

/// Gated attention pooling: returns `(z, a)` with `a = softmax(scores)` and
/// `z = Σ a_i h_i`.
pub fn attention_pool<T: Scalar>(params: &Params<T>, embeddings: &[Vec<T>]) -> Result<(Vec<T>, Vec<T>)> {
    let m = params.shape().embed_dim;
    if embeddings.is_empty() {
        return Err(Error::Config("attention pooling needs at least one instance".into()));
    }
    if let Some(bad) = embeddings.iter().find(|e| e.len() != m) {
        return Err(Error::DimensionMismatch { expected: m, actual: bad.len() });
    }
    let flat = embeddings.concat();
    let (mut tv, mut gu) = (Vec::new(), Vec::new());
    Ok(pool_into(params, &flat, embeddings.len(), &mut tv, &mut gu))
}

/// Full forward pass against the bag's own label.
pub fn forward<T: Scalar>(params: &Params<T>, bag: &Bag) -> Result<Trace<T>> {
    check_dim(params, bag)?;
    let shape = params.shape();
    if bag.label >= shape.num_classes {
        return Err(Error::Malformed(format!(
            "bag {} label {} outside model's {} classes",
            bag.bag_id, bag.label, shape.num_classes
        )));
    }
    let n = bag.len();
    let (mut pre, mut h) = (Vec::with_capacity(n * shape.embed_dim), Vec::with_capacity(n * shape.embed_dim));
    extract_into(params, bag, &mut pre, &mut h);
    let (mut tanh_v, mut gate_u) = (Vec::new(), Vec::new());
    let (z, attn) = pool_into(params, &h, n, &mut tanh_v, &mut gate_u);

    let wc = params.segment(Segment::ClassifierWeight);
    let bc = params.segment(Segment::ClassifierBias);
    let m = shape.embed_dim;
    let logits: Vec<T> = (0..shape.num_classes).map(|c| bc[c] + dot(&wc[c * m..(c + 1) * m], &z)).collect();
    let loss = log_sum_exp(&logits) - logits[bag.label];
    let mut probs = logits.clone();
    softmax_in_place(&mut probs);
    Ok(Trace { n, pre, h, tanh_v, gate_u, attn, z, logits, probs, label: bag.label, loss })
}

/// Cross-entropy of the bag's label plus the trace for [`backward`].
pub fn forward_loss<T: Scalar>(params: &Params<T>, bag: &Bag) -> Result<(T, Trace<T>)> {
    let trace = forward(params, bag)?;
    Ok((trace.loss, trace))
}

/// Adds the gradient of this bag's loss into `grad`.
pub fn accumulate_gradient<T: Scalar>(
    params: &Params<T>,
    bag: &Bag,
    trace: &Trace<T>,
    grad: &mut Params<T>,
) -> Result<()> {
    check_dim(params, bag)?;
    let shape = params.shape();
    if grad.shape() != shape {
        return Err(Error::ShapeMismatch("gradient buffer shape differs from model".into()));
    }
    if trace.n != bag.len() || trace.label != bag.label || trace.z.len() != shape.embed_dim {
        return Err(Error::ShapeMismatch("trace does not belong to this bag".into()));
    }
    let (m, l, c_n) = (shape.embed_dim, shape.attn_dim, shape.num_classes);
    let n = trace.n;

    // Classifier.
    let mut dlogits = trace.probs.clone();
    dlogits[trace.label] = dlogits[trace.label] - T::one();
    let wc = params.segment(Segment::ClassifierWeight);
    let mut dz = vec![T::zero(); m];
    {
        let gwc = grad.segment_mut(Segment::ClassifierWeight);
        for c in 0..c_n {
            axpy(&mut gwc[c * m..(c + 1) * m], dlogits[c], &trace.z);
        }
    }
    for (g, &d) in grad.segment_mut(Segment::ClassifierBias).iter_mut().zip(&dlogits) {
        *g = *g + d;
    }
    for c in 0..c_n {
        axpy(&mut dz, dlogits[c], &wc[c * m..(c + 1) * m]);
    }

    // Pooling: z = Σ a_i h_i.
    let mut dh = vec![T::zero(); n * m];
    for i in 0..n {
        axpy(&mut dh[i * m..(i + 1) * m], trace.attn[i], &dz);
    }

    if n > 1 {
        // Through the softmax: ds_i = a_i (da_i − Σ_j a_j da_j), da_i = dz·h_i.
        let da: Vec<T> = (0..n).map(|i| dot(&dz, trace.embedding(i))).collect();
        let mean = trace.attn.iter().zip(&da).fold(T::zero(), |s, (&a, &d)| s + a * d);
        let v = params.segment(Segment::AttentionV);
        let u = params.segment(Segment::AttentionU);
        let w = params.segment(Segment::AttentionW).to_vec();
        let (mut dpv, mut dpu) = (vec![T::zero(); l], vec![T::zero(); l]);
        for i in 0..n {
            let ds = trace.attn[i] * (da[i] - mean);
            if ds == T::zero() {
                continue;
            }
            let t = &trace.tanh_v[i * l..(i + 1) * l];
            let g = &trace.gate_u[i * l..(i + 1) * l];
            {
                let gw = grad.segment_mut(Segment::AttentionW);
                for k in 0..l {
                    gw[k] = gw[k] + ds * t[k] * g[k];
                }
            }
            for k in 0..l {
                let dt = ds * w[k] * g[k];
                let dg = ds * w[k] * t[k];
                dpv[k] = dt * (T::one() - t[k] * t[k]);
                dpu[k] = dg * g[k] * (T::one() - g[k]);
            }
            let hi = trace.embedding(i);
            {
                let gv = grad.segment_mut(Segment::AttentionV);
                for (k, &hk) in hi.iter().enumerate() {
                    if hk != T::zero() {
                        axpy(&mut gv[k * l..(k + 1) * l], hk, &dpv);
                    }
                }
            }
            {
                let gu = grad.segment_mut(Segment::AttentionU);
                for (k, &hk) in hi.iter().enumerate() {
                    if hk != T::zero() {
                        axpy(&mut gu[k * l..(k + 1) * l], hk, &dpu);
                    }
                }
            }
            let dhi = &mut dh[i * m..(i + 1) * m];
            for k in 0..m {
                dhi[k] = dhi[k] + dot(&v[k * l..(k + 1) * l], &dpv) + dot(&u[k * l..(k + 1) * l], &dpu);
            }
        }
    }

    // ReLU (subgradient 0 at 0) and the extractor.
    for (d, &p) in dh.iter_mut().zip(&trace.pre) {
        if p <= T::zero() {
            *d = T::zero();
        }
    }
    {
        let gw = grad.segment_mut(Segment::ExtractorWeight);
        for (i, x) in bag.instances().enumerate() {
            let dpre = &dh[i * m..(i + 1) * m];
            for (j, &xj) in x.iter().enumerate() {
                if xj != 0.0 {
                    axpy(&mut gw[j * m..(j + 1) * m], T::from_feature(xj), dpre);
                }
            }
        }
    }
    {
        let gb = grad.segment_mut(Segment::ExtractorBias);
        for i in 0..n {
            for (g, &d) in gb.iter_mut().zip(&dh[i * m..(i + 1) * m]) {
                *g = *g + d;
            }
        }
    }
    Ok(())
}

/// Gradient of one bag's loss with respect to every parameter.
pub fn backward<T: Scalar>(params: &Params<T>, bag: &Bag, trace: &Trace<T>) -> Result<Params<T>> {
    let mut grad = Params::zeros(params.shape());
    accumulate_gradient(params, bag, trace, &mut grad)?;
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelShape};

    fn cfg(classes: usize) -> ModelConfig {
        ModelConfig { input_dim: 6, embed_dim: 5, attn_dim: 4, num_classes: classes, init_seed: 1 }
    }

    fn bag(n: usize, label: usize) -> Bag {
        let inst: Vec<Vec<f32>> =
            (0..n).map(|i| (0..6).map(|j| ((i * 7 + j * 3) % 5) as f32 * 0.3 - 0.6).collect()).collect();
        Bag::from_instances(0, label, &inst).unwrap()
    }

    #[test]
    fn zero_extractor_gives_zero_embeddings() {
        let mut p = Params::<f64>::init(&cfg(2)).unwrap();
        p.segment_mut(Segment::ExtractorWeight).fill(0.0);
        p.segment_mut(Segment::ExtractorBias).fill(0.0);
        assert!(extract_features(&p, &bag(3, 0)).unwrap().iter().flatten().all(|&v| v == 0.0));
        p.segment_mut(Segment::ExtractorBias).fill(-0.5);
        assert!(extract_features(&p, &bag(3, 0)).unwrap().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let p = Params::<f64>::init(&cfg(2)).unwrap();
        let b = Bag::new(0, 0, 3, vec![0.0; 6]).unwrap();
        assert!(matches!(extract_features(&p, &b), Err(Error::DimensionMismatch { expected: 6, actual: 3 })));
        assert!(forward(&p, &b).is_err());
    }

    #[test]
    fn singleton_attention_is_one() {
        let p = Params::<f64>::init(&cfg(2)).unwrap();
        let h = vec![vec![0.3, 0.0, 1.2, 0.4, 0.9]];
        let (z, a) = attention_pool(&p, &h).unwrap();
        assert_eq!(a, vec![1.0]);
        assert_eq!(z, h[0]);
    }

    #[test]
    fn identical_embeddings_get_uniform_attention() {
        let p = Params::<f64>::init(&cfg(2)).unwrap();
        let h = vec![vec![0.3, 0.1, 1.2, 0.4, 0.9]; 4];
        let (z, a) = attention_pool(&p, &h).unwrap();
        assert!(a.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        assert!(z.iter().zip(&h[0]).all(|(x, y)| (x - y).abs() < 1e-15));
    }

    #[test]
    fn zero_classifier_loss_is_log_classes() {
        for classes in [2usize, 10] {
            let mut p = Params::<f64>::init(&cfg(classes)).unwrap();
            p.segment_mut(Segment::ClassifierWeight).fill(0.0);
            let (loss, _) = forward_loss(&p, &bag(3, 1)).unwrap();
            assert!((loss - (classes as f64).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn label_outside_model_classes() {
        let p = Params::<f64>::init(&cfg(2)).unwrap();
        assert!(forward(&p, &bag(2, 3)).is_err());
    }

    #[test]
    fn trace_from_another_bag_is_rejected() {
        let p = Params::<f64>::init(&cfg(2)).unwrap();
        let t = forward(&p, &bag(3, 0)).unwrap();
        assert!(backward(&p, &bag(2, 0), &t).is_err());
    }

    #[test]
    fn duplicated_bag_mean_gradient_equals_single() {
        let p = Params::<f64>::init(&cfg(2)).unwrap();
        let b = bag(3, 1);
        let t = forward(&p, &b).unwrap();
        let single = backward(&p, &b, &t).unwrap();
        let mut sum = Params::zeros(p.shape());
        accumulate_gradient(&p, &b, &t, &mut sum).unwrap();
        accumulate_gradient(&p, &b, &t, &mut sum).unwrap();
        sum.scale(0.5);
        // Segments are accumulated term by term, so only rounding may differ.
        assert!(sum.max_abs_diff(&single) < 1e-15);
    }

    #[test]
    fn runs_in_f32() {
        let c = cfg(2);
        let p = Params::<f32>::init(&c).unwrap();
        let b = bag(4, 1);
        let t = forward(&p, &b).unwrap();
        let g = backward(&p, &b, &t).unwrap();
        assert!(t.loss().is_finite() && g.norm().is_finite());
        assert_eq!(p.shape(), ModelShape { input_dim: 6, embed_dim: 5, attn_dim: 4, num_classes: 2 });
    }
}
