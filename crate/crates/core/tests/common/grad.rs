//! Finite-difference gradient checks in f64 for every layer kind, the graph
//! primitives, the losses and the four detector objectives.

use ood_core::detectors::ar::{ar_nll_elems, ArNet, ArShape};
use ood_core::detectors::backbone::BackboneShape;
use ood_core::detectors::dml::{dml_loss, DmlNet};
use ood_core::detectors::inputs::{ar_input, AR_CHANNELS};
use ood_core::detectors::msp::{msp_loss, MspNet};
use ood_core::detectors::vae::{vae_loss, vae_oe_hinge, VaeNet, VaeShape};
use ood_core::nn::{Graph, Layer, LayerSpec, ParamId, ParamStore, ProxyAnchorArgs, Tensor, Var};
use ood_core::seed::{derive, rng_from};
use rand::Rng as _;

type Store = ParamStore<f64>;

fn random(seed: u64, n: usize, scale: f64) -> Vec<f64> {
    let mut r = rng_from(seed);
    (0..n).map(|_| r.random_range(-scale..scale)).collect()
}

fn leaf(store: &mut Store, name: &str, shape: &[usize], seed: u64) -> ParamId {
    let n = shape.iter().product();
    store.push(name, Tensor::new(shape.to_vec(), random(seed, n, 1.0)).unwrap().with_grad())
}

fn eval(store: &mut Store, seed: u64, f: &dyn Fn(&mut Graph<f64>, &mut Store) -> Var) -> f64 {
    let mut g = Graph::new(true, seed);
    let v = f(&mut g, store);
    g.scalar(v)
}

/// Compares backprop gradients of every trainable tensor with central
/// differences on up to `per_tensor` coordinates each.
fn check(store: &mut Store, seed: u64, per_tensor: usize, f: &dyn Fn(&mut Graph<f64>, &mut Store) -> Var) {
    store.zero_grad();
    let mut g = Graph::new(true, seed);
    let loss = f(&mut g, store);
    assert!(g.scalar(loss).is_finite());
    g.backward(loss, store).unwrap();
    let ids = store.trainable_ids();
    assert!(!ids.is_empty());
    for id in ids {
        let grad = store.get(id).grad().expect("gradient recorded").to_vec();
        let n = grad.len();
        let stride = (n / per_tensor).max(1);
        for i in (0..n).step_by(stride).take(per_tensor) {
            let agree = [1e-6, 1e-7, 1e-5].iter().any(|&h| {
                let x0 = store.get(id).data()[i];
                store.get_mut(id).data_mut()[i] = x0 + h;
                let up = eval(store, seed, f);
                store.get_mut(id).data_mut()[i] = x0 - h;
                let down = eval(store, seed, f);
                store.get_mut(id).data_mut()[i] = x0;
                let num = (up - down) / (2.0 * h);
                (num - grad[i]).abs() <= 1e-6 + 1e-4 * num.abs().max(grad[i].abs())
            });
            assert!(agree, "{}[{i}]: analytic {} disagrees with finite differences", store.name(id), grad[i]);
        }
    }
}

/// `sum(w * layer(x))` with fixed random `w`, checked for the input and
/// the layer's own parameters.
fn check_layer(spec: LayerSpec, input: &[usize], seed: u64) {
    let mut store = Store::new();
    let x = leaf(&mut store, "x", input, derive(seed, &[1]));
    let layer = Layer::build(spec, &mut store, &mut rng_from(derive(seed, &[2])), "layer").unwrap();
    let out: usize = layer.spec.output_shape(input).unwrap().iter().product();
    let w = random(derive(seed, &[3]), out, 1.0);
    check(&mut store, seed, 12, &|g, s| {
        let xv = g.param(s, x);
        let y = layer.forward(g, s, xv).unwrap();
        let p = g.mul_const(y, w.clone()).unwrap();
        g.sum(p)
    });
}

pub fn conv1d_gradients() {
    for seed in 0..10 {
        let spec = LayerSpec::Conv1d { in_channels: 3, out_channels: 4, kernel: 3, stride: 1 + seed as usize % 3, dilation: 1 + seed as usize % 2, padding: 2, causal: false };
        check_layer(spec, &[2, 3, 11], seed);
    }
}

pub fn causal_conv1d_gradients() {
    for seed in 0..10 {
        check_layer(LayerSpec::conv_causal(2, 3, 2, 1 << (seed % 3)), &[2, 2, 9], seed);
    }
}

pub fn conv_transpose1d_gradients() {
    for seed in 0..10 {
        let spec = LayerSpec::ConvTranspose1d { in_channels: 3, out_channels: 2, kernel: 3, stride: 2, dilation: 1, padding: 1, output_padding: (seed % 2) as usize };
        check_layer(spec, &[2, 3, 5], seed);
    }
}

pub fn linear_gradients() {
    for seed in 0..10 {
        check_layer(LayerSpec::Linear { in_features: 5, out_features: 3 }, &[4, 5], seed);
    }
}

pub fn batch_norm_gradients() {
    for seed in 0..10 {
        check_layer(LayerSpec::BatchNorm1d { features: 3 }, &[4, 3, 5], seed);
        check_layer(LayerSpec::BatchNorm1d { features: 3 }, &[5, 3], seed);
    }
}

pub fn shape_and_pointwise_layer_gradients() {
    for seed in 0..10 {
        check_layer(LayerSpec::Relu, &[3, 2, 4], seed);
        check_layer(LayerSpec::Dropout { rate: 0.3 }, &[3, 2, 4], seed);
        check_layer(LayerSpec::Flatten, &[3, 2, 4], seed);
        check_layer(LayerSpec::Reshape { shape: vec![4, 2] }, &[3, 2, 4], seed);
        check_layer(LayerSpec::ChannelMax, &[3, 5, 4], seed);
        check_layer(LayerSpec::MeanPool, &[3, 2, 6], seed);
    }
}

pub fn graph_primitive_gradients() {
    for seed in 0..10 {
        let mut store = Store::new();
        let a = leaf(&mut store, "a", &[3, 4], derive(seed, &[1]));
        let b = leaf(&mut store, "b", &[3, 4], derive(seed, &[2]));
        let c = leaf(&mut store, "c", &[2, 4], derive(seed, &[3]));
        check(&mut store, seed, 12, &|g, s| {
            let (a, b, c) = (g.param(s, a), g.param(s, b), g.param(s, c));
            let e = g.exp(a);
            let t = g.tanh(b);
            let m = g.mul(e, t).unwrap();
            let d = g.sub(m, a).unwrap();
            let q = g.square(d);
            let cat = g.concat_rows(&[q, c]).unwrap();
            let sl = g.slice_rows(cat, 1, 4).unwrap();
            let sh = g.add_scalar(sl, 0.3);
            let sc = g.scale(sh, -1.7);
            let s1 = g.mean(sc);
            let s2 = g.sum(c);
            g.weighted_sum(&[(s1, 0.8), (s2, -0.2)]).unwrap()
        });
    }
}

pub fn loss_gradients() {
    for seed in 0..10 {
        let mut store = Store::new();
        let z = leaf(&mut store, "z", &[5, 4], derive(seed, &[1]));
        let mu = leaf(&mut store, "mu", &[5, 3], derive(seed, &[2]));
        let lv = leaf(&mut store, "lv", &[5, 3], derive(seed, &[3]));
        let emb = leaf(&mut store, "emb", &[5, 6], derive(seed, &[4]));
        let prox = leaf(&mut store, "prox", &[3, 6], derive(seed, &[5]));
        let out = leaf(&mut store, "out", &[2, 6], derive(seed, &[6]));
        let targets: Vec<f64> = (0..20).map(|i| if i % 4 == (i / 4 + seed as usize) % 4 { 1.0 } else { 0.0 }).collect();
        let xs = random(derive(seed, &[7]), 15, 2.0);
        let rows = random(derive(seed, &[8]), 15, 1.0);
        let labels = [0, 1, 2, (seed % 3) as usize, 1];
        check(&mut store, seed, 12, &|g, s| {
            let (z, mu, lv) = (g.param(s, z), g.param(s, mu), g.param(s, lv));
            let (emb, prox, out) = (g.param(s, emb), g.param(s, prox), g.param(s, out));
            let ce = g.softmax_cross_entropy(z, targets.clone()).unwrap();
            let nll = g.gaussian_nll(xs.clone(), mu, lv).unwrap();
            let nll = g.mean(nll);
            let kl = g.kl_std_normal(mu, lv).unwrap();
            let kl = g.mean(kl);
            let mse = g.mse_rows(mu, rows.clone()).unwrap();
            let mse = g.mean(mse);
            let args = ProxyAnchorArgs { alpha: 8.0, delta: 0.1, outlier_weight: 0.7 };
            let pa = g.proxy_anchor(emb, prox, &labels, Some(out), args).unwrap();
            g.weighted_sum(&[(ce, 1.0), (nll, 0.5), (kl, 0.3), (mse, 0.9), (pa, 0.4)]).unwrap()
        });
    }
}

fn small_backbone() -> BackboneShape {
    BackboneShape { in_channels: 3, stem: 4, width: 4, stride: 2, kernel: 3, dilations: vec![[1, 2]], dropout: 0.2 }
}

pub fn classifier_objective_gradients() {
    for seed in 0..10 {
        let mut store = Store::new();
        let net = MspNet::build(&small_backbone(), &mut store, &mut rng_from(seed)).unwrap();
        let x = random(derive(seed, &[1]), 6 * 3 * 16, 1.0);
        let labels = [0, 1, 2, 3];
        check(&mut store, seed, 6, &|g, s| {
            let xv = g.input_data(vec![6, 3, 16], x.clone());
            let z = net.logits(g, s, xv).unwrap();
            msp_loss(g, z, &labels, 2, 0.5).unwrap().0
        });
    }
}

pub fn metric_objective_gradients() {
    for seed in 0..10 {
        let mut store = Store::new();
        let net = DmlNet::build(&small_backbone(), 5, &mut store, &mut rng_from(seed)).unwrap();
        let x = random(derive(seed, &[1]), 6 * 3 * 16, 1.0);
        let labels = [0, 1, 2, 3];
        check(&mut store, seed, 6, &|g, s| {
            let xv = g.input_data(vec![6, 3, 16], x.clone());
            let e = net.embed(g, s, xv).unwrap();
            dml_loss(g, s, &net, e, &labels, 2, 8.0, 0.1, 0.5).unwrap()
        });
    }
}

pub fn vae_objective_gradients() {
    for seed in 0..10 {
        let mut store = Store::new();
        let net = VaeNet::build(&VaeShape { k: 16, channels: [3, 4], latent: 3 }, &mut store, &mut rng_from(seed)).unwrap();
        let x = random(derive(seed, &[1]), 4 * 2 * 16, 1.0);
        let t: Vec<f64> = random(derive(seed, &[2]), 4 * 16, 1.0).iter().map(|v| v.abs()).collect();
        let xo = random(derive(seed, &[3]), 3 * 2 * 16, 1.0);
        let to: Vec<f64> = random(derive(seed, &[4]), 3 * 16, 1.0).iter().map(|v| v.abs()).collect();
        check(&mut store, seed, 6, &|g, s| {
            let xv = g.input_data(vec![4, 2, 16], x.clone());
            let parts = vae_loss(g, s, &net, xv, &t, 0.5, 2, &mut rng_from(derive(seed, &[5]))).unwrap();
            let xo = g.input_data(vec![3, 2, 16], xo.clone());
            let (mu, _) = net.encode(g, s, xo).unwrap();
            let y = net.decode(g, s, mu).unwrap();
            let r = g.mse_rows(y, to.clone()).unwrap();
            let h = vae_oe_hinge(g, r, 10.0, 0.5).unwrap();
            g.add(parts.loss, h).unwrap()
        });
    }
}

pub fn autoregressive_objective_gradients() {
    for seed in 0..10 {
        let mut store = Store::new();
        let shape = ArShape { in_channels: AR_CHANNELS, width: 4, kernel: 2, dilations: vec![[1, 2], [4, 1]], dropout: 0.2 };
        let net = ArNet::build(&shape, &mut store, &mut rng_from(seed)).unwrap();
        let l = 12;
        let x = random(derive(seed, &[1]), 3 * 2 * l, 1.0);
        let mask: Vec<f32> = (0..l).map(|i| (i % 3 != 0) as u8 as f32).collect();
        let input = ar_input(&x, &mask, 5);
        check(&mut store, seed, 6, &|g, s| {
            let iv = g.input_data(vec![3, AR_CHANNELS, l], input.clone());
            let e = ar_nll_elems(g, s, &net, iv, x.clone()).unwrap();
            g.mean(e)
        });
    }
}

#[allow(dead_code)]
pub const ALL: &[(&str, fn())] = &[
    ("conv1d_gradients", conv1d_gradients),
    ("causal_conv1d_gradients", causal_conv1d_gradients),
    ("conv_transpose1d_gradients", conv_transpose1d_gradients),
    ("linear_gradients", linear_gradients),
    ("batch_norm_gradients", batch_norm_gradients),
    ("shape_and_pointwise_layer_gradients", shape_and_pointwise_layer_gradients),
    ("graph_primitive_gradients", graph_primitive_gradients),
    ("loss_gradients", loss_gradients),
    ("classifier_objective_gradients", classifier_objective_gradients),
    ("metric_objective_gradients", metric_objective_gradients),
    ("vae_objective_gradients", vae_objective_gradients),
    ("autoregressive_objective_gradients", autoregressive_objective_gradients),
];
