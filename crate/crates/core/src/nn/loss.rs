//! Loss operations with hand-written gradients.

use super::graph::{Graph, Var};
use super::tensor::Real;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Hyperparameters of the proxy-anchor loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxyAnchorArgs {
    /// Scale `α`.
    pub alpha: f64,
    /// Margin `δ`.
    pub delta: f64,
    /// Weight of outlier embeddings inside every proxy's negative sum.
    pub outlier_weight: f64,
}

/// `log(1 + Σ exp(a_i))`, shifted for range safety.
fn log1p_sum_exp(a: &[f64]) -> f64 {
    let m = a.iter().copied().fold(0.0_f64, f64::max);
    let s: f64 = (-m).exp() + a.iter().map(|&v| (v - m).exp()).sum::<f64>();
    m + s.ln()
}

fn rows_normalized<T: Real>(v: &[T], rows: usize, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut unit = vec![0.0; rows * dim];
    let mut norms = vec![0.0; rows];
    for r in 0..rows {
        let row = &v[r * dim..(r + 1) * dim];
        let n = row.iter().map(|x| x.f64() * x.f64()).sum::<f64>().sqrt().max(1e-12);
        norms[r] = n;
        for (u, x) in unit[r * dim..(r + 1) * dim].iter_mut().zip(row) {
            *u = x.f64() / n;
        }
    }
    (unit, norms)
}

impl<T: Real> Graph<T> {
    /// Mean over rows of `-Σ_k t_k log softmax(z)_k` for logits `[B, K]` and
    /// target distributions `[B, K]` (one-hot labels or the uniform law).
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: Vec<T>) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || targets.len() != s[0] * s[1] {
            return Err(Error::shape(format!("softmax_cross_entropy: logits {s:?}, {} targets", targets.len())));
        }
        let (b, k) = (s[0], s[1]);
        let z = self.value(logits);
        let mut probs = vec![T::zero(); b * k];
        let mut total = 0.0;
        for r in 0..b {
            let row = &z[r * k..(r + 1) * k];
            let m = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v.f64() - m).exp()).sum::<f64>().ln();
            for j in 0..k {
                let lp = row[j].f64() - lse;
                probs[r * k + j] = T::of(lp.exp());
                total -= targets[r * k + j].f64() * lp;
            }
        }
        let loss = T::of(total / b as f64);
        Ok(self.push(vec![1], vec![loss], &[logits], move |_, g, gr| {
            let scale = g[0] / T::of(b as f64);
            let d = gr.acc(logits);
            for r in 0..b {
                let tsum: T = targets[r * k..(r + 1) * k].iter().copied().sum();
                for j in 0..k {
                    d[r * k + j] += scale * (probs[r * k + j] * tsum - targets[r * k + j]);
                }
            }
        }))
    }

    /// Elementwise Gaussian negative log density of constant data `x` under
    /// `N(mean, exp(logvar))`. Output has the shape of `mean`.
    pub fn gaussian_nll(&mut self, x: Vec<T>, mean: Var, logvar: Var) -> Result<Var> {
        if self.shape(mean) != self.shape(logvar) || x.len() != self.value(mean).len() {
            return Err(Error::shape("gaussian_nll: data, mean and logvar must match"));
        }
        let (m, lv) = (self.value(mean), self.value(logvar));
        let half = T::of(0.5);
        let c = T::of(LN_2PI);
        let data = x
            .iter()
            .zip(m.iter().zip(lv))
            .map(|(&xx, (&mm, &ll))| {
                let r = xx - mm;
                half * (c + ll + r * r * (-ll).exp())
            })
            .collect();
        Ok(self.push(self.shape(mean).to_vec(), data, &[mean, logvar], move |n, g, gr| {
            let (m, lv) = (&n[mean.0].data, &n[logvar.0].data);
            if gr.wants(mean) {
                let d = gr.acc(mean);
                for i in 0..d.len() {
                    d[i] -= g[i] * (x[i] - m[i]) * (-lv[i]).exp();
                }
            }
            if gr.wants(logvar) {
                let d = gr.acc(logvar);
                for i in 0..d.len() {
                    let r = x[i] - m[i];
                    d[i] += g[i] * half * (T::one() - r * r * (-lv[i]).exp());
                }
            }
        }))
    }

    /// Per-row `KL(N(μ, σ²) || N(0, I)) = -½ Σ_d (1 + log σ² - μ² - σ²)` for
    /// `[B, D]` inputs; output `[B]`.
    pub fn kl_std_normal(&mut self, mu: Var, logvar: Var) -> Result<Var> {
        let s = self.shape(mu).to_vec();
        if s.len() != 2 || self.shape(logvar) != s.as_slice() {
            return Err(Error::shape(format!("kl_std_normal: mu {s:?}, logvar {:?}", self.shape(logvar))));
        }
        let (b, d) = (s[0], s[1]);
        let (m, lv) = (self.value(mu), self.value(logvar));
        let data = (0..b)
            .map(|r| {
                let kl: f64 = (0..d)
                    .map(|j| {
                        let (mm, ll) = (m[r * d + j].f64(), lv[r * d + j].f64());
                        -0.5 * (1.0 + ll - mm * mm - ll.exp())
                    })
                    .sum();
                T::of(kl)
            })
            .collect();
        Ok(self.push(vec![b], data, &[mu, logvar], move |n, g, gr| {
            if gr.wants(mu) {
                let m = &n[mu.0].data;
                let dm = gr.acc(mu);
                for i in 0..b * d {
                    dm[i] += g[i / d] * m[i];
                }
            }
            if gr.wants(logvar) {
                let lv = &n[logvar.0].data;
                let dl = gr.acc(logvar);
                for i in 0..b * d {
                    dl[i] += g[i / d] * T::of(0.5) * (lv[i].exp() - T::one());
                }
            }
        }))
    }

    /// Per-row mean squared error against constant targets: `[B, N] -> [B]`.
    pub fn mse_rows(&mut self, a: Var, target: Vec<T>) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 || target.len() != s[0] * s[1] {
            return Err(Error::shape(format!("mse_rows: input {s:?}, {} targets", target.len())));
        }
        let (b, n) = (s[0], s[1]);
        let av = self.value(a);
        let data = (0..b)
            .map(|r| {
                let e: f64 = (0..n).map(|j| (av[r * n + j].f64() - target[r * n + j].f64()).powi(2)).sum();
                T::of(e / n as f64)
            })
            .collect();
        Ok(self.push(vec![b], data, &[a], move |nodes, g, gr| {
            let av = &nodes[a.0].data;
            let d = gr.acc(a);
            let k = T::of(2.0 / n as f64);
            for i in 0..b * n {
                d[i] += g[i / n] * k * (av[i] - target[i]);
            }
        }))
    }

    /// Proxy-anchor loss over embeddings `[B, E]`, proxies `[P, E]` and class
    /// labels. Optional outlier embeddings `[B', E]` join every proxy's
    /// negative set with weight `outlier_weight`.
    pub fn proxy_anchor(&mut self, emb: Var, proxies: Var, labels: &[usize], outliers: Option<Var>, args: ProxyAnchorArgs) -> Result<Var> {
        let es = self.shape(emb).to_vec();
        let ps = self.shape(proxies).to_vec();
        if es.len() != 2 || ps.len() != 2 || es[1] != ps[1] || labels.len() != es[0] {
            return Err(Error::shape(format!("proxy_anchor: embeddings {es:?}, proxies {ps:?}, {} labels", labels.len())));
        }
        let (b, e, np) = (es[0], es[1], ps[0]);
        if let Some(&bad) = labels.iter().find(|&&y| y >= np) {
            return Err(Error::invalid(format!("proxy_anchor: label {bad} with {np} proxies")));
        }
        let nout = match outliers {
            Some(o) => {
                let os = self.shape(o);
                if os.len() != 2 || os[1] != e {
                    return Err(Error::shape(format!("proxy_anchor: outliers {os:?}")));
                }
                os[0]
            }
            None => 0,
        };
        let (xu, xn) = rows_normalized(self.value(emb), b, e);
        let (pu, pn) = rows_normalized(self.value(proxies), np, e);
        let (ou, on) = match outliers {
            Some(o) => rows_normalized(self.value(o), nout, e),
            None => (Vec::new(), Vec::new()),
        };
        let cos = |a: &[f64], ai: usize, p: usize| -> f64 { (0..e).map(|j| a[ai * e + j] * pu[p * e + j]).sum() };
        let sx: Vec<f64> = (0..b * np).map(|i| cos(&xu, i / np, i % np)).collect();
        let so: Vec<f64> = (0..nout * np).map(|i| cos(&ou, i / np, i % np)).collect();
        let (alpha, delta, lam) = (args.alpha, args.delta, args.outlier_weight);

        // dL/ds for every (row, proxy) pair
        let mut dsx = vec![0.0; b * np];
        let mut dso = vec![0.0; nout * np];
        let positives: Vec<usize> = (0..np).filter(|&p| labels.contains(&p)).collect();
        let mut loss = 0.0;
        if !positives.is_empty() {
            let wpos = 1.0 / positives.len() as f64;
            for &p in &positives {
                let rows: Vec<usize> = (0..b).filter(|&r| labels[r] == p).collect();
                let a: Vec<f64> = rows.iter().map(|&r| -alpha * (sx[r * np + p] - delta)).collect();
                let l = log1p_sum_exp(&a);
                loss += wpos * l;
                for (&r, &ai) in rows.iter().zip(&a) {
                    dsx[r * np + p] += wpos * (ai - l).exp() * -alpha;
                }
            }
        }
        let wneg = 1.0 / np as f64;
        for p in 0..np {
            let rows: Vec<usize> = (0..b).filter(|&r| labels[r] != p).collect();
            let mut a: Vec<f64> = rows.iter().map(|&r| alpha * (sx[r * np + p] + delta)).collect();
            let na = a.len();
            if lam > 0.0 {
                a.extend((0..nout).map(|r| alpha * (so[r * np + p] + delta) + lam.ln()));
            }
            if a.is_empty() {
                continue;
            }
            let l = log1p_sum_exp(&a);
            loss += wneg * l;
            for (&r, &ai) in rows.iter().zip(&a[..na]) {
                dsx[r * np + p] += wneg * (ai - l).exp() * alpha;
            }
            if lam > 0.0 {
                for r in 0..nout {
                    dso[r * np + p] += wneg * (a[na + r] - l).exp() * alpha;
                }
            }
        }

        let mut parents = vec![emb, proxies];
        parents.extend(outliers);
        Ok(self.push(vec![1], vec![T::of(loss)], &parents, move |_, g, gr| {
            let g0 = g[0].f64();
            // s = <u, q>, d s / d x = (q - s u) / |x|
            let mut dp = vec![0.0; np * e];
            let mut side = |unit: &[f64], norms: &[f64], sims: &[f64], ds: &[f64], rows: usize, var: Var, gr: &mut super::graph::Grads<T>| {
                let wants = gr.wants(var);
                let mut dx = vec![0.0; rows * e];
                for r in 0..rows {
                    for p in 0..np {
                        let d = g0 * ds[r * np + p];
                        if d == 0.0 {
                            continue;
                        }
                        let s = sims[r * np + p];
                        for j in 0..e {
                            let (u, q) = (unit[r * e + j], pu[p * e + j]);
                            dx[r * e + j] += d * (q - s * u) / norms[r];
                            dp[p * e + j] += d * (u - s * q) / pn[p];
                        }
                    }
                }
                if wants {
                    gr.acc(var).iter_mut().zip(&dx).for_each(|(a, &v)| *a += T::of(v));
                }
            };
            side(&xu, &xn, &sx, &dsx, b, emb, gr);
            if let Some(o) = outliers {
                side(&ou, &on, &so, &dso, nout, o, gr);
            }
            if gr.wants(proxies) {
                gr.acc(proxies).iter_mut().zip(&dp).for_each(|(a, &v)| *a += T::of(v));
            }
        }))
    }
}
