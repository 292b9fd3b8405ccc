//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `OODCKPT1`, format version, model kind,
//! training echo (OE flag, seed, lambda, beta), free-form config text, the
//! layer list, named `f32` tensors in declaration order, then zero or more
//! optimizer states.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::LayerSpec;
use super::optim::{OptimizerConfig, OptimizerKind, OptimizerState};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"OODCKPT1";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Msp,
    Dml,
    Vae,
    Ar,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Msp, ModelKind::Dml, ModelKind::Vae, ModelKind::Ar];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Msp => "msp",
            ModelKind::Dml => "dml",
            ModelKind::Vae => "vae",
            ModelKind::Ar => "ar",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown model '{s}' (expected msp, dml, vae or ar)")))
    }

    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(t: u8) -> Option<Self> {
        Self::ALL.get(t as usize).copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub oe: bool,
    pub seed: u64,
    pub lambda: f64,
    pub beta: f64,
    /// `key = value` lines describing the detector hyperparameters.
    pub config: String,
    pub layers: Vec<(String, LayerSpec)>,
    pub params: ParamStore<f32>,
    pub optimizers: Vec<OptimizerState>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u8(self.kind.tag());
        w.u8(self.oe as u8);
        w.u64(self.seed);
        w.f64(self.lambda);
        w.f64(self.beta);
        w.str(&self.config);
        w.u32(self.layers.len() as u32);
        for (name, spec) in &self.layers {
            w.str(name);
            write_spec(&mut w, spec);
        }
        w.u32(self.params.len() as u32);
        for e in self.params.entries() {
            w.str(&e.name);
            w.u8(e.tensor.requires_grad() as u8);
            w.u32(e.tensor.shape().len() as u32);
            for &d in e.tensor.shape() {
                w.u64(d as u64);
            }
            for &x in e.tensor.data() {
                w.f32(x);
            }
        }
        w.u32(self.optimizers.len() as u32);
        for o in &self.optimizers {
            w.u8(match o.config.kind {
                OptimizerKind::Adam => 0,
                OptimizerKind::RAdam => 1,
            });
            for x in [o.config.lr, o.config.beta1, o.config.beta2, o.config.eps] {
                w.f64(x);
            }
            w.u64(o.step);
            w.u32(o.m.len() as u32);
            for (m, v) in o.m.iter().zip(&o.v) {
                w.u64(m.len() as u64);
                m.iter().chain(v).for_each(|&x| w.f64(x));
            }
        }
        w.buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        if r.take(8, "magic")? != MAGIC {
            return Err(Error::format(0, "not a checkpoint (bad magic)"));
        }
        let at = r.offset();
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::format(at, format!("unsupported checkpoint version {version}")));
        }
        let at = r.offset();
        let kind = ModelKind::from_tag(r.u8("model kind")?).ok_or_else(|| Error::format(at, "unknown model kind"))?;
        let oe = r.u8("oe flag")? != 0;
        let seed = r.u64("seed")?;
        let lambda = r.f64("lambda")?;
        let beta = r.f64("beta")?;
        let config = r.str("config")?;
        let n_layers = r.u32("layer count")?;
        let mut layers = Vec::new();
        for _ in 0..n_layers {
            let name = r.str("layer name")?;
            layers.push((name, read_spec(&mut r)?));
        }
        let n_params = r.u32("tensor count")?;
        let mut params = ParamStore::new();
        for _ in 0..n_params {
            let name = r.str("tensor name")?;
            let trainable = r.u8("trainable flag")? != 0;
            let rank = r.u32("rank")? as usize;
            let at = r.offset();
            let shape = (0..rank).map(|_| r.usize("extent")).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            if n.checked_mul(4).is_none_or(|b| b > r.remaining()) {
                return Err(Error::format(at, format!("tensor {name} of shape {shape:?} exceeds file")));
            }
            let data = (0..n).map(|_| r.f32("tensor data")).collect::<Result<Vec<_>>>()?;
            let mut t = Tensor::new(shape, data).map_err(|e| Error::format(at, e.to_string()))?;
            t.set_requires_grad(trainable);
            params.push(name, t);
        }
        let n_opt = r.u32("optimizer count")?;
        let mut optimizers = Vec::new();
        for _ in 0..n_opt {
            let at = r.offset();
            let kind = match r.u8("optimizer kind")? {
                0 => OptimizerKind::Adam,
                1 => OptimizerKind::RAdam,
                t => return Err(Error::format(at, format!("unknown optimizer tag {t}"))),
            };
            let config = OptimizerConfig { kind, lr: r.f64("lr")?, beta1: r.f64("beta1")?, beta2: r.f64("beta2")?, eps: r.f64("eps")? };
            let step = r.u64("step")?;
            let k = r.u32("moment count")?;
            let (mut m, mut v) = (Vec::new(), Vec::new());
            for _ in 0..k {
                let at = r.offset();
                let n = r.usize("moment length")?;
                if n.checked_mul(16).is_none_or(|b| b > r.remaining()) {
                    return Err(Error::format(at, "moment buffer exceeds file"));
                }
                m.push((0..n).map(|_| r.f64("moment")).collect::<Result<Vec<_>>>()?);
                v.push((0..n).map(|_| r.f64("moment")).collect::<Result<Vec<_>>>()?);
            }
            optimizers.push(OptimizerState { config, step, m, v });
        }
        if r.remaining() != 0 {
            return Err(r.err(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self { kind, oe, seed, lambda, beta, config, layers, params, optimizers })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Value of `key` in the config text.
    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config.lines().find_map(|l| {
            let (k, v) = l.split_once('=')?;
            (k.trim() == key).then(|| v.trim())
        })
    }
}

fn write_spec(w: &mut Writer, spec: &LayerSpec) {
    let mut nums = |tag: u8, xs: &[usize]| {
        w.u8(tag);
        w.u32(xs.len() as u32);
        xs.iter().for_each(|&x| w.u64(x as u64));
    };
    match spec {
        LayerSpec::Conv1d { in_channels, out_channels, kernel, stride, dilation, padding, causal } => {
            nums(0, &[*in_channels, *out_channels, *kernel, *stride, *dilation, *padding, *causal as usize])
        }
        LayerSpec::ConvTranspose1d { in_channels, out_channels, kernel, stride, dilation, padding, output_padding } => {
            nums(1, &[*in_channels, *out_channels, *kernel, *stride, *dilation, *padding, *output_padding])
        }
        LayerSpec::Linear { in_features, out_features } => nums(2, &[*in_features, *out_features]),
        LayerSpec::BatchNorm1d { features } => nums(3, &[*features]),
        LayerSpec::Relu => nums(4, &[]),
        LayerSpec::Dropout { rate } => nums(5, &[rate.to_bits() as usize]),
        LayerSpec::Flatten => nums(6, &[]),
        LayerSpec::Reshape { shape } => nums(7, shape),
        LayerSpec::ChannelMax => nums(8, &[]),
        LayerSpec::MeanPool => nums(9, &[]),
    }
}

fn read_spec(r: &mut Reader) -> Result<LayerSpec> {
    let at = r.offset();
    let tag = r.u8("layer tag")?;
    let n = r.u32("layer field count")? as usize;
    if n > r.remaining() / 8 {
        return Err(Error::format(at, "layer fields exceed file"));
    }
    let x = (0..n).map(|_| r.usize("layer field")).collect::<Result<Vec<_>>>()?;
    let want = |k: usize| if x.len() == k { Ok(()) } else { Err(Error::format(at, format!("layer tag {tag} expects {k} fields, got {}", x.len()))) };
    let spec = match tag {
        0 => {
            want(7)?;
            LayerSpec::Conv1d { in_channels: x[0], out_channels: x[1], kernel: x[2], stride: x[3], dilation: x[4], padding: x[5], causal: x[6] != 0 }
        }
        1 => {
            want(7)?;
            LayerSpec::ConvTranspose1d {
                in_channels: x[0],
                out_channels: x[1],
                kernel: x[2],
                stride: x[3],
                dilation: x[4],
                padding: x[5],
                output_padding: x[6],
            }
        }
        2 => {
            want(2)?;
            LayerSpec::Linear { in_features: x[0], out_features: x[1] }
        }
        3 => {
            want(1)?;
            LayerSpec::BatchNorm1d { features: x[0] }
        }
        4 => LayerSpec::Relu,
        5 => {
            want(1)?;
            LayerSpec::Dropout { rate: f64::from_bits(x[0] as u64) }
        }
        6 => LayerSpec::Flatten,
        7 => LayerSpec::Reshape { shape: x },
        8 => LayerSpec::ChannelMax,
        9 => LayerSpec::MeanPool,
        _ => return Err(Error::format(at, format!("unknown layer tag {tag}"))),
    };
    spec.validate().map_err(|e| Error::format(at, e.to_string()))?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::Layer;
    use crate::seed::rng_from;

    fn sample() -> Checkpoint {
        let mut params = ParamStore::new();
        let specs = vec![
            LayerSpec::conv_causal(2, 4, 2, 4),
            LayerSpec::BatchNorm1d { features: 4 },
            LayerSpec::Dropout { rate: 0.1 },
            LayerSpec::ConvTranspose1d { in_channels: 4, out_channels: 2, kernel: 3, stride: 2, dilation: 1, padding: 1, output_padding: 1 },
            LayerSpec::Reshape { shape: vec![8, 2] },
        ];
        let mut rng = rng_from(3);
        let layers: Vec<_> = specs
            .into_iter()
            .enumerate()
            .map(|(i, s)| (format!("l{i}"), Layer::build(s, &mut params, &mut rng, &format!("l{i}")).unwrap().spec))
            .collect();
        let mut opt = OptimizerState::new(OptimizerConfig::radam(1e-3), &params).unwrap();
        opt.step = 7;
        opt.m[0][1] = 0.25;
        Checkpoint {
            kind: ModelKind::Ar,
            oe: true,
            seed: 42,
            lambda: 0.5,
            beta: 0.5,
            config: "width = 16\n".into(),
            layers,
            params,
            optimizers: vec![opt],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.config_value("width"), Some("16"));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = sample().to_bytes();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
        assert!(Checkpoint::from_bytes(b"NOPE").is_err());
    }
}
