use ood_core::dataset::{generate, Dataset, DatasetKind, DatasetSpec};
use ood_core::detectors::ar::{ar_nll_elems, step_nll, ArNet, ArShape, LV_CENTER, LV_SPAN};
use ood_core::detectors::dml::dml_scores;
use ood_core::detectors::inputs::{ar_input, vae_batch, AR_CHANNELS};
use ood_core::detectors::msp::{msp_loss, msp_scores};
use ood_core::detectors::vae::elbo;
use ood_core::detectors::{score_dataset, train, train_until, DetectorConfig, Detector, Net, OeConfig};
use ood_core::error::Error;
use ood_core::nn::{Checkpoint, Graph, ModelKind, ParamStore, ProxyAnchorArgs, Tensor};
use ood_core::seed::{derive, rng_from};
use ood_core::signal::ofdm::OfdmConfig;
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

fn small_spec(seed: u64) -> DatasetSpec {
    DatasetSpec { n_sir_bins: 2, n_batches: 1, batch_size: 6, sir_db: vec![0.0, 20.0], base_seed: seed, ..DatasetSpec::default() }
}

fn data() -> (Dataset, Dataset) {
    let spec = small_spec(3);
    (generate(&spec, DatasetKind::Din).unwrap(), generate(&spec, DatasetKind::DoutOe).unwrap())
}

fn tiny(model: ModelKind) -> DetectorConfig {
    DetectorConfig {
        steps: 5,
        batch_size: 8,
        stem: 4,
        width: 6,
        dilations: vec![[1, 2]],
        embed_dim: 8,
        latent: 4,
        vae_channels: [4, 8],
        ar_width: 4,
        ar_dilations: vec![[1, 2]],
        background_steps: 3,
        log_every: 2,
        ..DetectorConfig::for_model(model)
    }
}

fn with_oe(mut c: DetectorConfig, lambda: f64) -> DetectorConfig {
    c.oe = OeConfig { enabled: true, lambda, ..OeConfig::default() };
    c
}

fn run(cfg: &DetectorConfig, din: &Dataset, oe: &Dataset) -> (Detector, Vec<f64>) {
    let det = Detector::<f32>::new(cfg, &din.spec.ofdm).unwrap();
    let t = train(det, vec![], din, Some(oe), &mut |_| {}).unwrap();
    let losses = t.log.iter().map(|r| r.loss).collect();
    (t.detector, losses)
}

#[test]
fn zero_lambda_trains_like_disabled_oe() {
    let (din, oe) = data();
    for model in ModelKind::ALL {
        let (a, la) = run(&tiny(model), &din, &oe);
        let (b, lb) = run(&with_oe(tiny(model), 0.0), &din, &oe);
        assert_eq!(la, lb, "{model:?}");
        assert_eq!(a.store, b.store, "{model:?}");
        assert!(b.background.is_none());
    }
}

#[test]
fn training_is_deterministic_and_oe_changes_it() {
    let (din, oe) = data();
    for model in ModelKind::ALL {
        let cfg = with_oe(tiny(model), 0.5);
        let (a, la) = run(&cfg, &din, &oe);
        let (b, lb) = run(&cfg, &din, &oe);
        assert_eq!(la, lb, "{model:?}");
        assert_eq!(a.store, b.store);
        assert_eq!(a.background, b.background);
        let (c, _) = run(&tiny(model), &din, &oe);
        if model == ModelKind::Ar {
            // outliers only reach the background twin
            assert_eq!(a.store, c.store);
            assert!(a.background.is_some() && c.background.is_none());
        } else {
            assert_ne!(a.store, c.store, "{model:?}: OE had no effect");
        }
    }
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let (din, oe) = data();
    for model in ModelKind::ALL {
        let cfg = with_oe(tiny(model), 0.5);
        let (straight, _) = run(&cfg, &din, &oe);
        let det = Detector::<f32>::new(&cfg, &din.spec.ofdm).unwrap();
        let half = train_until(det, vec![], &din, Some(&oe), 2, &mut |_| {}).unwrap();
        assert_eq!(half.optimizers[0].step, 2);
        let ck = Checkpoint::from_bytes(&half.detector.to_checkpoint(half.optimizers).to_bytes()).unwrap();
        let det = Detector::from_checkpoint(&ck).unwrap();
        let mut steps = Vec::new();
        let rest = train(det, ck.optimizers.clone(), &din, Some(&oe), &mut |r| steps.push(r.step)).unwrap();
        assert_eq!(steps.first(), Some(&4), "{model:?}");
        assert_eq!(rest.detector.store, straight.store, "{model:?}");
        assert_eq!(rest.detector.background, straight.background, "{model:?}");
    }
}

#[test]
fn empty_or_missing_data_is_rejected() {
    let (din, oe) = data();
    let mut empty = din.clone();
    empty.iq.clear();
    empty.meta.clear();
    for model in ModelKind::ALL {
        let det = Detector::<f32>::new(&tiny(model), &din.spec.ofdm).unwrap();
        assert!(matches!(train(det.clone(), vec![], &empty, None, &mut |_| {}), Err(Error::Training(_))));
        let det = Detector::<f32>::new(&with_oe(tiny(model), 0.5), &din.spec.ofdm).unwrap();
        assert!(matches!(train(det.clone(), vec![], &din, None, &mut |_| {}), Err(Error::Training(_))));
        assert!(matches!(train(det, vec![], &din, Some(&empty), &mut |_| {}), Err(Error::Training(_))));
    }
    let _ = oe;
}

#[test]
fn untrained_models_give_bounded_finite_scores_on_silence() {
    let (mut din, _) = data();
    din.iq.iter_mut().for_each(|x| *x = 0.0);
    let idx: Vec<usize> = (0..din.len()).collect();
    for model in ModelKind::ALL {
        let mut det = Detector::<f32>::new(&with_oe(tiny(model), 0.5), &din.spec.ofdm).unwrap();
        let s = det.score(&din, &idx).unwrap();
        assert!(s.iter().all(|v| v.is_finite()), "{model:?}");
        match model {
            ModelKind::Msp => assert!(s.iter().all(|&v| (0.0..=0.75 + 1e-9).contains(&v))),
            ModelKind::Dml => assert!(s.iter().all(|&v| (0.0..=2.0).contains(&v))),
            ModelKind::Vae => assert!(s.iter().all(|&v| v >= 0.0)),
            ModelKind::Ar => {}
        }
    }
}

#[test]
fn score_tables_cover_every_example_and_repeat() {
    let (din, oe) = data();
    let (mut det, _) = run(&tiny(ModelKind::Msp), &din, &oe);
    let a = score_dataset(&mut det, &din).unwrap();
    let b = score_dataset(&mut det, &din).unwrap();
    assert_eq!(a.rows.len(), din.spec.n_examples());
    assert_eq!(a, b);
    assert_eq!(a.cell(3, 1).unwrap().len(), 6);
}

#[test]
fn checkpoint_round_trip_preserves_scores() {
    let (din, oe) = data();
    let idx: Vec<usize> = (0..din.len()).collect();
    for model in ModelKind::ALL {
        let (mut det, _) = run(&with_oe(tiny(model), 0.5), &din, &oe);
        let before = det.score(&din, &idx).unwrap();
        let ck = Checkpoint::from_bytes(&det.to_checkpoint(vec![]).to_bytes()).unwrap();
        let mut back = Detector::<f32>::from_checkpoint(&ck).unwrap();
        assert_eq!(back.score(&din, &idx).unwrap(), before, "{model:?}");
    }
}

#[test]
fn architecture_and_framing_mismatches_are_rejected() {
    let (din, _) = data();
    let det = Detector::<f32>::new(&with_oe(tiny(ModelKind::Ar), 0.5), &din.spec.ofdm).unwrap();
    let mut ck = det.to_checkpoint(vec![]);
    ck.config = ck.config.replace("ar_width = 4", "ar_width = 5");
    assert!(matches!(Detector::<f32>::from_checkpoint(&ck), Err(Error::Data(_))));

    let mut other = Detector::<f32>::new(&tiny(ModelKind::Msp), &OfdmConfig { n_symbols: 6, ..OfdmConfig::default() }).unwrap();
    assert!(matches!(other.score(&din, &[0]), Err(Error::Data(_))));
}

#[test]
fn vae_score_ignores_global_phase() {
    let (din, _) = data();
    let mut rotated = din.clone();
    let (c, s) = (1.1f64.cos(), 1.1f64.sin());
    for z in rotated.iq.chunks_exact_mut(2) {
        let (i, q) = (z[0] as f64, z[1] as f64);
        z[0] = (i * c - q * s) as f32;
        z[1] = (i * s + q * c) as f32;
    }
    let idx: Vec<usize> = (0..din.len()).collect();
    let (xa, pa) = vae_batch::<f64>(&din, &idx).unwrap();
    let (xb, pb) = vae_batch::<f64>(&rotated, &idx).unwrap();
    assert!(xa.iter().zip(&xb).all(|(a, b)| (a - b).abs() < 1e-5));
    assert!(pa.iter().zip(&pb).all(|(a, b)| (a - b).abs() < 1e-5));
    let mut det = Detector::<f32>::new(&tiny(ModelKind::Vae), &din.spec.ofdm).unwrap();
    let sa = det.score(&din, &idx).unwrap();
    let sb = det.score(&rotated, &idx).unwrap();
    for (a, b) in sa.iter().zip(&sb) {
        assert!(*a >= 0.0);
        assert!((a - b).abs() <= 1e-4 * a.abs().max(1e-3), "{a} vs {b}");
    }
}

#[test]
fn llr_of_identical_twins_is_zero() {
    let (din, _) = data();
    let mut det = Detector::<f32>::new(&with_oe(tiny(ModelKind::Ar), 0.5), &din.spec.ofdm).unwrap();
    det.background = Some(det.store.clone());
    let idx: Vec<usize> = (0..din.len()).collect();
    assert!(det.score(&din, &idx).unwrap().iter().all(|&s| s == 0.0));
}

#[test]
fn ar_nll_of_standard_normal_head_is_closed_form() {
    let (mut din, _) = data();
    din.iq.iter_mut().for_each(|x| *x = 0.0);
    let mut det = Detector::<f64>::new(&tiny(ModelKind::Ar), &din.spec.ofdm).unwrap();
    let Net::Ar(net) = det.net.clone() else { unreachable!() };
    for &id in net.mean.params().iter().chain(net.logvar.params()) {
        det.store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let bias = net.logvar.params()[1];
    let raw = ((0.0 - LV_CENTER) / LV_SPAN).atanh();
    det.store.get_mut(bias).data_mut().iter_mut().for_each(|v| *v = raw);
    let nll = det.sequence_nll(&din, &[0, 1, 2]).unwrap();
    let t = din.spec.block_size() as f64;
    let want = t * 2.0 * 0.5 * (2.0 * std::f64::consts::PI).ln();
    for v in nll {
        assert!((v - want).abs() < 1e-9 * want, "{v} vs {want}");
    }
}

#[test]
fn ar_per_step_densities_are_causal() {
    let shape = ArShape { in_channels: AR_CHANNELS, width: 6, kernel: 2, dilations: vec![[1, 2], [4, 8]], dropout: 0.1 };
    let mut store = ParamStore::<f32>::new();
    let net = ArNet::build(&shape, &mut store, &mut rng_from(5)).unwrap();
    let l = 64;
    let mut rng = rng_from(9);
    let x: Vec<f32> = (0..2 * l).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mask: Vec<f32> = (0..l).map(|i| (i % 5 != 0) as u8 as f32).collect();
    let steps = |store: &mut ParamStore<f32>, x: &[f32]| {
        let mut g = Graph::<f32>::inference();
        let iv = g.input_data(vec![1, AR_CHANNELS, l], ar_input(x, &mask, 7));
        let e = ar_nll_elems(&mut g, store, &net, iv, x.to_vec()).unwrap();
        let v: Vec<f64> = g.value(e).iter().map(|&v| v as f64).collect();
        step_nll(&v, l).remove(0)
    };
    let base = steps(&mut store, &x);
    for t in 0..l {
        let mut y = x.clone();
        for c in 0..2 {
            for s in t..l {
                y[c * l + s] += rng.random_range(0.5..1.5);
            }
        }
        let p = steps(&mut store, &y);
        assert_eq!(&p[..t], &base[..t], "leak into positions before {t}");
        assert_ne!(p[t], base[t]);
    }
}

#[test]
fn uniform_target_term_is_ln4_at_zero_logits() {
    let mut g = Graph::<f64>::inference();
    let z = g.input_data(vec![5, 4], vec![0.0; 20]);
    let (_, ce, u) = msp_loss(&mut g, z, &[0, 1, 2], 2, 0.5).unwrap();
    assert!((u - 4f64.ln()).abs() < 1e-12);
    assert!((ce - 4f64.ln()).abs() < 1e-12);
}

/// ELBO with a linear decoder `y = W z + b`, whose expected squared error has
/// the closed form `|W mu + b - p|^2 + sum_jd W_jd^2 sigma_d^2`.
#[test]
fn monte_carlo_elbo_matches_closed_form_for_linear_decoder() {
    let (rows, d, k) = (3, 4, 6);
    let mut r = rng_from(21);
    let mut draw = |n: usize, s: f64| -> Vec<f64> { (0..n).map(|_| r.random_range(-s..s)).collect() };
    let (mu, lv, w, b, p) = (draw(rows * d, 1.0), draw(rows * d, 1.0), draw(k * d, 1.0), draw(k, 0.5), draw(rows * k, 1.0));
    let beta = 0.5;
    let mut g = Graph::<f64>::inference();
    let (muv, lvv) = (g.input_data(vec![rows, d], mu.clone()), g.input_data(vec![rows, d], lv.clone()));
    let (wv, bv) = (g.input_data(vec![k, d], w.clone()), g.input_data(vec![k], b.clone()));
    let parts = elbo(&mut g, muv, lvv, &p, beta, 1000, &mut rng_from(22), &mut |g, z| g.linear(z, wv, Some(bv))).unwrap();

    let mut kl = 0.0;
    let mut mse = 0.0;
    for i in 0..rows {
        let (m, v) = (&mu[i * d..(i + 1) * d], &lv[i * d..(i + 1) * d]);
        kl += 0.5 * (0..d).map(|j| m[j] * m[j] + v[j].exp() - 1.0 - v[j]).sum::<f64>();
        for o in 0..k {
            let mean: f64 = (0..d).map(|j| w[o * d + j] * m[j]).sum::<f64>() + b[o];
            let var: f64 = (0..d).map(|j| w[o * d + j].powi(2) * v[j].exp()).sum();
            mse += ((mean - p[i * k + o]).powi(2) + var) / k as f64;
        }
    }
    let want = beta * kl / rows as f64 + mse / rows as f64;
    let got = g.scalar(parts.loss);
    assert!((got - want).abs() < 0.02 * want, "{got} vs {want}");
}

/// Proxy-anchor loss evaluated by direct summation of exponentials.
fn proxy_anchor_direct(emb: &[f64], prox: &[f64], out: &[f64], labels: &[usize], e: usize, a: ProxyAnchorArgs) -> f64 {
    let unit = |v: &[f64]| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect::<Vec<_>>()
    };
    let cos = |x: &[f64], p: &[f64]| unit(x).iter().zip(unit(p)).map(|(a, b)| a * b).sum::<f64>();
    let np = prox.len() / e;
    let pos: Vec<usize> = (0..np).filter(|p| labels.contains(p)).collect();
    let mut l = 0.0;
    for &p in &pos {
        let s: f64 = labels.iter().enumerate().filter(|(_, &y)| y == p).map(|(r, _)| (-a.alpha * (cos(&emb[r * e..(r + 1) * e], &prox[p * e..(p + 1) * e]) - a.delta)).exp()).sum();
        l += (1.0 + s).ln() / pos.len() as f64;
    }
    for p in 0..np {
        let pv = &prox[p * e..(p + 1) * e];
        let s: f64 = labels.iter().enumerate().filter(|(_, &y)| y != p).map(|(r, _)| (a.alpha * (cos(&emb[r * e..(r + 1) * e], pv) + a.delta)).exp()).sum();
        let so: f64 = out.chunks_exact(e).map(|o| a.outlier_weight * (a.alpha * (cos(o, pv) + a.delta)).exp()).sum();
        l += (1.0 + s + so).ln() / np as f64;
    }
    l
}

fn proxy_anchor_graph(emb: &[f64], prox: &[f64], out: &[f64], labels: &[usize], e: usize, a: ProxyAnchorArgs) -> f64 {
    let mut g = Graph::<f64>::inference();
    let ev = g.input(&Tensor::new(vec![labels.len(), e], emb.to_vec()).unwrap());
    let pv = g.input(&Tensor::new(vec![prox.len() / e, e], prox.to_vec()).unwrap());
    let ov = (!out.is_empty()).then(|| g.input_data(vec![out.len() / e, e], out.to_vec()));
    let l = g.proxy_anchor(ev, pv, labels, ov, a).unwrap();
    g.scalar(l)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn proxy_anchor_matches_direct_summation(seed in any::<u64>(), b in 1usize..7, n_out in 0usize..4, alpha in 1.0f64..16.0, lam in 0.0f64..1.0) {
        let e = 5;
        let mut r = rng_from(seed);
        let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut r)).collect() };
        let (emb, prox, out) = (v(b * e), v(4 * e), v(n_out * e));
        let labels: Vec<usize> = (0..b).map(|i| (derive(seed, &[i as u64]) % 4) as usize).collect();
        let a = ProxyAnchorArgs { alpha, delta: 0.1, outlier_weight: lam };
        let want = proxy_anchor_direct(&emb, &prox, &out, &labels, e, a);
        let got = proxy_anchor_graph(&emb, &prox, &out, &labels, e, a);
        prop_assert!((got - want).abs() <= 1e-5 * want.abs().max(1.0), "{} vs {}", got, want);
    }

    #[test]
    fn proxy_anchor_falls_as_positive_similarity_rises(seed in any::<u64>(), t in 0.05f64..0.9) {
        let e = 3;
        let prox: Vec<f64> = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0];
        let other: Vec<f64> = {
            let mut r = rng_from(seed);
            (0..e).map(|_| r.random_range(-1.0..1.0)).collect()
        };
        let at = |t: f64| {
            let mut emb = vec![t.cos(), t.sin(), 0.0];
            emb.extend(&other);
            proxy_anchor_graph(&emb, &prox, &[], &[0, 2], e, ProxyAnchorArgs { alpha: 8.0, delta: 0.1, outlier_weight: 0.0 })
        };
        // rotating the first embedding towards proxy 0 raises its positive similarity
        prop_assert!(at(t * 0.5) < at(t));
    }

    #[test]
    fn msp_scores_are_bounded(z in prop::collection::vec(-50.0f64..50.0, 4..40)) {
        let n = z.len() / 4 * 4;
        for s in msp_scores(&z[..n], 4) {
            prop_assert!((0.0..=0.75 + 1e-12).contains(&s));
        }
    }

    #[test]
    fn dml_scores_are_bounded(e in prop::collection::vec(-5.0f64..5.0, 6), p in prop::collection::vec(-5.0f64..5.0, 24)) {
        prop_assume!(e.iter().any(|v| v.abs() > 1e-3));
        for s in dml_scores(&e, &p, 6) {
            prop_assert!((-1e-12..=2.0 + 1e-12).contains(&s));
        }
    }
}
