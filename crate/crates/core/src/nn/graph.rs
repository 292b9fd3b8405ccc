//! Tape-based reverse-mode differentiation.
//!
//! Each operation appends a node holding its forward value and, when any
//! input needs a gradient, a closure that maps the node's output gradient to
//! gradients of its inputs. `backward` replays the closures in reverse order.

use rand::Rng as _;

use super::params::{ParamId, ParamStore};
use super::tensor::{sum64, Mat, MatMut, Real, Tensor};
use crate::error::{Error, Result};
use crate::seed::{rng_from, Rng};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) struct Node<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub needs_grad: bool,
    pub param: Option<ParamId>,
}

pub(crate) type BackFn<T> = Box<dyn Fn(&[Node<T>], &[T], &mut Grads<T>)>;

/// Gradient buffers, allocated lazily per node.
pub(crate) struct Grads<T> {
    bufs: Vec<Option<Vec<T>>>,
    sizes: Vec<usize>,
    needs: Vec<bool>,
}

impl<T: Real> Grads<T> {
    pub fn wants(&self, v: Var) -> bool {
        self.needs[v.0]
    }

    pub fn acc(&mut self, v: Var) -> &mut [T] {
        let n = self.sizes[v.0];
        self.bufs[v.0].get_or_insert_with(|| vec![T::zero(); n])
    }
}

pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
    backs: Vec<Option<BackFn<T>>>,
    training: bool,
    record: bool,
    rng: Rng,
}

impl<T: Real> Graph<T> {
    /// A recording graph. `training` selects batch statistics and active
    /// dropout; `seed` drives the dropout masks.
    pub fn new(training: bool, seed: u64) -> Self {
        Self { nodes: Vec::new(), backs: Vec::new(), training, record: true, rng: rng_from(seed) }
    }

    /// Evaluation-mode graph that records no backward closures.
    pub fn inference() -> Self {
        Self { nodes: Vec::new(), backs: Vec::new(), training: false, record: false, rng: rng_from(0) }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, data: Vec<T>, parents: &[Var], back: impl Fn(&[Node<T>], &[T], &mut Grads<T>) + 'static) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let needs_grad = self.record && parents.iter().any(|&p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node { shape, data, needs_grad, param: None });
        self.backs.push(if needs_grad { Some(Box::new(back)) } else { None });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, t: &Tensor<T>) -> Var {
        self.input_data(t.shape().to_vec(), t.data().to_vec())
    }

    pub fn input_data(&mut self, shape: Vec<usize>, data: Vec<T>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node { shape, data, needs_grad: false, param: None });
        self.backs.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Bind a stored parameter as a leaf; its gradient flows back into the
    /// store on [`Graph::backward`].
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let t = store.get(id);
        let needs_grad = self.record && t.requires_grad();
        self.nodes.push(Node { shape: t.shape().to_vec(), data: t.data().to_vec(), needs_grad, param: Some(id) });
        self.backs.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.data.clone()).expect("node shape is consistent")
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].data[0]
    }

    /// Populate gradients of every reachable trainable parameter. Gradients
    /// add onto whatever is already stored, so two calls accumulate.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::shape(format!("backward needs a scalar loss, got shape {:?}", self.nodes[loss.0].shape)));
        }
        if !self.record {
            return Err(Error::invalid("backward on an inference graph"));
        }
        let mut grads = Grads {
            bufs: (0..self.nodes.len()).map(|_| None).collect(),
            sizes: self.nodes.iter().map(|n| n.data.len()).collect(),
            needs: self.nodes.iter().map(|n| n.needs_grad).collect(),
        };
        grads.bufs[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads.bufs[i].take() else { continue };
            if let Some(id) = self.nodes[i].param {
                if store.get(id).requires_grad() {
                    store.get_mut(id).accumulate_grad(&g);
                }
            }
            if let Some(back) = &self.backs[i] {
                back(&self.nodes, &g, &mut grads);
            }
        }
        Ok(())
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!("{op}: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        Ok(self.push(self.shape(a).to_vec(), data, &[a, b], move |_, g, gr| {
            for v in [a, b] {
                if gr.wants(v) {
                    gr.acc(v).iter_mut().zip(g).for_each(|(d, &x)| *d += x);
                }
            }
        }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let data = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x - y).collect();
        Ok(self.push(self.shape(a).to_vec(), data, &[a, b], move |_, g, gr| {
            if gr.wants(a) {
                gr.acc(a).iter_mut().zip(g).for_each(|(d, &x)| *d += x);
            }
            if gr.wants(b) {
                gr.acc(b).iter_mut().zip(g).for_each(|(d, &x)| *d -= x);
            }
        }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        Ok(self.push(self.shape(a).to_vec(), data, &[a, b], move |n, g, gr| {
            if gr.wants(a) {
                let other = &n[b.0].data;
                gr.acc(a).iter_mut().zip(g.iter().zip(other)).for_each(|(d, (&x, &y))| *d += x * y);
            }
            if gr.wants(b) {
                let other = &n[a.0].data;
                gr.acc(b).iter_mut().zip(g.iter().zip(other)).for_each(|(d, (&x, &y))| *d += x * y);
            }
        }))
    }

    /// Elementwise product with a constant buffer.
    pub fn mul_const(&mut self, a: Var, c: Vec<T>) -> Result<Var> {
        if c.len() != self.value(a).len() {
            return Err(Error::shape(format!("mul_const: {} vs {}", self.value(a).len(), c.len())));
        }
        let data = self.value(a).iter().zip(&c).map(|(&x, &y)| x * y).collect();
        Ok(self.push(self.shape(a).to_vec(), data, &[a], move |_, g, gr| {
            gr.acc(a).iter_mut().zip(g.iter().zip(&c)).for_each(|(d, (&x, &y))| *d += x * y);
        }))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let s = T::of(s);
        let data = self.value(a).iter().map(|&x| x * s).collect();
        self.push(self.shape(a).to_vec(), data, &[a], move |_, g, gr| {
            gr.acc(a).iter_mut().zip(g).for_each(|(d, &x)| *d += x * s);
        })
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let s = T::of(s);
        let data = self.value(a).iter().map(|&x| x + s).collect();
        self.push(self.shape(a).to_vec(), data, &[a], move |_, g, gr| {
            gr.acc(a).iter_mut().zip(g).for_each(|(d, &x)| *d += x);
        })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let data: Vec<T> = self.value(a).iter().map(|&x| x.exp()).collect();
        let out = data.clone();
        self.push(self.shape(a).to_vec(), data, &[a], move |_, g, gr| {
            gr.acc(a).iter_mut().zip(g.iter().zip(&out)).for_each(|(d, (&x, &y))| *d += x * y);
        })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let data: Vec<T> = self.value(a).iter().map(|&x| x.tanh()).collect();
        let out = data.clone();
        self.push(self.shape(a).to_vec(), data, &[a], move |_, g, gr| {
            gr.acc(a).iter_mut().zip(g.iter().zip(&out)).for_each(|(d, (&x, &y))| *d += x * (T::one() - y * y));
        })
    }

    pub fn square(&mut self, a: Var) -> Var {
        let data = self.value(a).iter().map(|&x| x * x).collect();
        self.push(self.shape(a).to_vec(), data, &[a], move |n, g, gr| {
            let two = T::of(2.0);
            let x = &n[a.0].data;
            gr.acc(a).iter_mut().zip(g.iter().zip(x)).for_each(|(d, (&gg, &xx))| *d += two * gg * xx);
        })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data = self.value(a).iter().map(|&x| if x > T::zero() { x } else { T::zero() }).collect();
        self.push(self.shape(a).to_vec(), data, &[a], move |n, g, gr| {
            let x = &n[a.0].data;
            gr.acc(a).iter_mut().zip(g.iter().zip(x)).for_each(|(d, (&gg, &xx))| {
                if xx > T::zero() {
                    *d += gg
                }
            });
        })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = T::of(sum64(self.value(a)));
        self.push(vec![1], vec![s], &[a], move |_, g, gr| {
            let g0 = g[0];
            gr.acc(a).iter_mut().for_each(|d| *d += g0);
        })
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let s = T::of(sum64(self.value(a)) / n as f64);
        self.push(vec![1], vec![s], &[a], move |_, g, gr| {
            let g0 = g[0] / T::of(n as f64);
            gr.acc(a).iter_mut().for_each(|d| *d += g0);
        })
    }

    /// Weighted sum of scalars, `Σ w_i · x_i`.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        for &(v, w) in terms {
            if self.value(v).len() != 1 {
                return Err(Error::shape("weighted_sum expects scalars"));
            }
            total += w * self.scalar(v).f64();
        }
        let parents: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let terms = terms.to_vec();
        Ok(self.push(vec![1], vec![T::of(total)], &parents, move |_, g, gr| {
            for &(v, w) in &terms {
                if gr.wants(v) {
                    gr.acc(v)[0] += g[0] * T::of(w);
                }
            }
        }))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(Error::shape(format!("reshape {:?} -> {shape:?}", self.shape(a))));
        }
        let data = self.value(a).to_vec();
        Ok(self.push(shape, data, &[a], move |_, g, gr| {
            gr.acc(a).iter_mut().zip(g).for_each(|(d, &x)| *d += x);
        }))
    }

    /// Collapse all but the leading (batch) axis.
    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        let b = s[0];
        let rest = s[1..].iter().product();
        self.reshape(a, vec![b, rest])
    }

    /// Concatenate along the leading axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.shape(parts[0]).to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        let mut offsets = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s[1..] != first[1..] {
                return Err(Error::shape(format!("concat_rows: {:?} vs {:?}", s, first)));
            }
            offsets.push((p, data.len()));
            rows += s[0];
            data.extend_from_slice(self.value(p));
        }
        let mut shape = first;
        shape[0] = rows;
        Ok(self.push(shape, data, parts, move |n, g, gr| {
            for &(p, off) in &offsets {
                if gr.wants(p) {
                    let len = n[p.0].data.len();
                    gr.acc(p).iter_mut().zip(&g[off..off + len]).for_each(|(d, &x)| *d += x);
                }
            }
        }))
    }

    /// Rows `start..end` of the leading axis.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if start >= end || end > s[0] {
            return Err(Error::shape(format!("slice_rows {start}..{end} of {:?}", s)));
        }
        let row: usize = s[1..].iter().product();
        let data = self.value(a)[start * row..end * row].to_vec();
        let mut shape = s;
        shape[0] = end - start;
        Ok(self.push(shape, data, &[a], move |_, g, gr| {
            gr.acc(a)[start * row..end * row].iter_mut().zip(g).for_each(|(d, &x)| *d += x);
        }))
    }

    /// Average over the length axis: `[B, C, L] -> [B, C]`.
    pub fn mean_pool(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 3 {
            return Err(Error::shape(format!("mean_pool expects [B, C, L], got {s:?}")));
        }
        let (bc, l) = (s[0] * s[1], s[2]);
        let x = self.value(a);
        let data = (0..bc).map(|i| T::of(sum64(&x[i * l..(i + 1) * l]) / l as f64)).collect();
        Ok(self.push(vec![s[0], s[1]], data, &[a], move |_, g, gr| {
            let inv = T::of(1.0 / l as f64);
            let d = gr.acc(a);
            for i in 0..bc {
                let gi = g[i] * inv;
                d[i * l..(i + 1) * l].iter_mut().for_each(|v| *v += gi);
            }
        }))
    }

    /// Elementwise maximum over the channel axis: `[B, C, L] -> [B, L]`.
    pub fn channel_max(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 3 {
            return Err(Error::shape(format!("channel_max expects [B, C, L], got {s:?}")));
        }
        let (b, c, l) = (s[0], s[1], s[2]);
        let x = self.value(a);
        let mut data = vec![T::zero(); b * l];
        let mut arg = vec![0usize; b * l];
        for bi in 0..b {
            for li in 0..l {
                let mut best = 0;
                let mut bv = x[bi * c * l + li];
                for ci in 1..c {
                    let v = x[(bi * c + ci) * l + li];
                    if v > bv {
                        bv = v;
                        best = ci;
                    }
                }
                data[bi * l + li] = bv;
                arg[bi * l + li] = (bi * c + best) * l + li;
            }
        }
        Ok(self.push(vec![b, l], data, &[a], move |_, g, gr| {
            let d = gr.acc(a);
            for (i, &src) in arg.iter().enumerate() {
                d[src] += g[i];
            }
        }))
    }

    /// Inverted dropout; identity outside training or when `rate == 0`.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Var {
        if !self.training || rate <= 0.0 {
            return a;
        }
        let keep = 1.0 - rate;
        let n = self.value(a).len();
        let scale = T::of(1.0 / keep);
        let mask: Vec<T> = (0..n).map(|_| if self.rng.random::<f64>() < keep { scale } else { T::zero() }).collect();
        let data = self.value(a).iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        self.push(self.shape(a).to_vec(), data, &[a], move |_, g, gr| {
            gr.acc(a).iter_mut().zip(g.iter().zip(&mask)).for_each(|(d, (&x, &m))| *d += x * m);
        })
    }

    /// `x W^T + b` for `x: [B, In]`, `w: [Out, In]`, `b: [Out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::shape(format!("linear: input {xs:?}, weight {ws:?}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[0]] {
                return Err(Error::shape(format!("linear: bias {:?} for {} outputs", self.shape(b), ws[0])));
            }
        }
        let (bn, din, dout) = (xs[0], xs[1], ws[0]);
        let mut data = vec![T::zero(); bn * dout];
        T::gemm(Mat::rows(self.value(x), bn, din), Mat::rows(self.value(w), dout, din).t(), T::zero(), MatMut::rows(&mut data, bn, dout));
        if let Some(b) = b {
            let bv = self.value(b);
            for row in data.chunks_mut(dout) {
                row.iter_mut().zip(bv).for_each(|(y, &c)| *y += c);
            }
        }
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(vec![bn, dout], data, &parents, move |n, g, gr| {
            let grad = Mat::rows(g, bn, dout);
            if gr.wants(x) {
                T::gemm(grad, Mat::rows(&n[w.0].data, dout, din), T::one(), MatMut::rows(gr.acc(x), bn, din));
            }
            if gr.wants(w) {
                T::gemm(grad.t(), Mat::rows(&n[x.0].data, bn, din), T::one(), MatMut::rows(gr.acc(w), dout, din));
            }
            if let Some(b) = b {
                if gr.wants(b) {
                    let db = gr.acc(b);
                    for row in g.chunks(dout) {
                        db.iter_mut().zip(row).for_each(|(d, &x)| *d += x);
                    }
                }
            }
        }))
    }

    /// Per-channel batch normalization over `[B, C]` or `[B, C, L]`.
    ///
    /// In training mode batch statistics are used and the running buffers
    /// are updated with `momentum`; otherwise the running buffers normalize.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &mut [T],
        running_var: &mut [T],
        momentum: f64,
        eps: f64,
    ) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 || s.len() > 3 {
            return Err(Error::shape(format!("batch_norm expects [B, C] or [B, C, L], got {s:?}")));
        }
        let (b, c) = (s[0], s[1]);
        let l = if s.len() == 3 { s[2] } else { 1 };
        if self.shape(gamma) != [c] || self.shape(beta) != [c] || running_mean.len() != c || running_var.len() != c {
            return Err(Error::shape(format!("batch_norm: {c} channels but parameters sized {:?}", self.shape(gamma))));
        }
        let count = (b * l) as f64;
        let xv = self.value(x);
        let gv = self.value(gamma).to_vec();
        let bv = self.value(beta).to_vec();
        let mut data = vec![T::zero(); xv.len()];

        if self.training {
            let mut xhat = vec![T::zero(); xv.len()];
            let mut inv_std = vec![T::zero(); c];
            for ci in 0..c {
                let mut sum = 0.0;
                let mut sq = 0.0;
                for bi in 0..b {
                    for &v in &xv[(bi * c + ci) * l..(bi * c + ci + 1) * l] {
                        let v = v.f64();
                        sum += v;
                        sq += v * v;
                    }
                }
                let mean = sum / count;
                let var = (sq / count - mean * mean).max(0.0);
                let istd = 1.0 / (var + eps).sqrt();
                inv_std[ci] = T::of(istd);
                let (mt, it) = (T::of(mean), T::of(istd));
                for bi in 0..b {
                    let r = (bi * c + ci) * l..(bi * c + ci + 1) * l;
                    for (k, &v) in r.clone().zip(&xv[r]) {
                        let h = (v - mt) * it;
                        xhat[k] = h;
                        data[k] = gv[ci] * h + bv[ci];
                    }
                }
                let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
                let m = T::of(momentum);
                running_mean[ci] = (T::one() - m) * running_mean[ci] + m * T::of(mean);
                running_var[ci] = (T::one() - m) * running_var[ci] + m * T::of(unbiased);
            }
            Ok(self.push(s, data, &[x, gamma, beta], move |n, g, gr| {
                let gam = &n[gamma.0].data;
                let mut sum_g = vec![0.0; c];
                let mut sum_gx = vec![0.0; c];
                for bi in 0..b {
                    for ci in 0..c {
                        let r = (bi * c + ci) * l..(bi * c + ci + 1) * l;
                        for (gg, h) in g[r.clone()].iter().zip(&xhat[r]) {
                            sum_g[ci] += gg.f64();
                            sum_gx[ci] += gg.f64() * h.f64();
                        }
                    }
                }
                if gr.wants(gamma) {
                    gr.acc(gamma).iter_mut().zip(&sum_gx).for_each(|(d, &v)| *d += T::of(v));
                }
                if gr.wants(beta) {
                    gr.acc(beta).iter_mut().zip(&sum_g).for_each(|(d, &v)| *d += T::of(v));
                }
                if gr.wants(x) {
                    let dx = gr.acc(x);
                    for ci in 0..c {
                        let k = gam[ci] * inv_std[ci] / T::of(count);
                        let mg = T::of(sum_g[ci]);
                        let mgx = T::of(sum_gx[ci]);
                        let nn = T::of(count);
                        for bi in 0..b {
                            let r = (bi * c + ci) * l..(bi * c + ci + 1) * l;
                            for (k2, (&gg, &h)) in r.clone().zip(g[r.clone()].iter().zip(&xhat[r])) {
                                dx[k2] += k * (nn * gg - mg - h * mgx);
                            }
                        }
                    }
                }
            }))
        } else {
            let scale: Vec<T> = (0..c).map(|ci| gv[ci] / (running_var[ci] + T::of(eps)).sqrt()).collect();
            let rm: Vec<T> = running_mean.to_vec();
            let rv: Vec<T> = running_var.to_vec();
            for bi in 0..b {
                for ci in 0..c {
                    let r = (bi * c + ci) * l..(bi * c + ci + 1) * l;
                    for k in r {
                        data[k] = (xv[k] - rm[ci]) * scale[ci] + bv[ci];
                    }
                }
            }
            Ok(self.push(s, data, &[x, gamma, beta], move |n, g, gr| {
                let xv = &n[x.0].data;
                let mut dgam = vec![T::zero(); c];
                let mut dbet = vec![T::zero(); c];
                let wants_x = gr.wants(x);
                for bi in 0..b {
                    for ci in 0..c {
                        let istd = T::one() / (rv[ci] + T::of(eps)).sqrt();
                        for k in (bi * c + ci) * l..(bi * c + ci + 1) * l {
                            dgam[ci] += g[k] * (xv[k] - rm[ci]) * istd;
                            dbet[ci] += g[k];
                        }
                    }
                }
                if wants_x {
                    let dx = gr.acc(x);
                    for bi in 0..b {
                        for ci in 0..c {
                            for k in (bi * c + ci) * l..(bi * c + ci + 1) * l {
                                dx[k] += g[k] * scale[ci];
                            }
                        }
                    }
                }
                if gr.wants(gamma) {
                    gr.acc(gamma).iter_mut().zip(&dgam).for_each(|(d, &v)| *d += v);
                }
                if gr.wants(beta) {
                    gr.acc(beta).iter_mut().zip(&dbet).for_each(|(d, &v)| *d += v);
                }
            }))
        }
    }
}
