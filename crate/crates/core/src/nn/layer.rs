use super::conv::{conv_out_len, conv_transpose_out_len};
use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use crate::seed::Rng;

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Hyperparameters of one layer.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    /// Cross-correlation. `padding` is applied on both sides unless `causal`,
    /// in which case `(kernel - 1) * dilation` zeros go on the left only.
    Conv1d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, dilation: usize, padding: usize, causal: bool },
    ConvTranspose1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        padding: usize,
        output_padding: usize,
    },
    Linear { in_features: usize, out_features: usize },
    BatchNorm1d { features: usize },
    Relu,
    Dropout { rate: f64 },
    Flatten,
    /// Reshape every example to `shape` (batch axis kept).
    Reshape { shape: Vec<usize> },
    ChannelMax,
    MeanPool,
}

impl LayerSpec {
    /// Same-length, non-causal convolution (odd kernels).
    pub fn conv_same(in_channels: usize, out_channels: usize, kernel: usize, dilation: usize) -> Self {
        LayerSpec::Conv1d { in_channels, out_channels, kernel, stride: 1, dilation, padding: dilation * (kernel - 1) / 2, causal: false }
    }

    pub fn conv_causal(in_channels: usize, out_channels: usize, kernel: usize, dilation: usize) -> Self {
        LayerSpec::Conv1d { in_channels, out_channels, kernel, stride: 1, dilation, padding: 0, causal: true }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LayerSpec::Conv1d { in_channels, out_channels, kernel, stride, dilation, padding, causal } => {
                if *kernel == 0 || *stride == 0 || *dilation == 0 || *in_channels == 0 || *out_channels == 0 {
                    return Err(Error::invalid(format!("{self:?}: sizes must be >= 1")));
                }
                if *causal && (*stride != 1 || *padding != 0) {
                    return Err(Error::invalid("causal conv1d needs stride 1 and no explicit padding"));
                }
            }
            LayerSpec::ConvTranspose1d { in_channels, out_channels, kernel, stride, dilation, output_padding, .. } => {
                if *kernel == 0 || *stride == 0 || *dilation == 0 || *in_channels == 0 || *out_channels == 0 {
                    return Err(Error::invalid(format!("{self:?}: sizes must be >= 1")));
                }
                if *output_padding >= (*stride).max(*dilation) {
                    return Err(Error::invalid("output_padding must be smaller than stride or dilation"));
                }
            }
            LayerSpec::Linear { in_features, out_features } => {
                if *in_features == 0 || *out_features == 0 {
                    return Err(Error::invalid("linear sizes must be >= 1"));
                }
            }
            LayerSpec::BatchNorm1d { features } => {
                if *features == 0 {
                    return Err(Error::invalid("batchnorm needs >= 1 feature"));
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
                }
            }
            LayerSpec::Reshape { shape } => {
                if shape.is_empty() || shape.contains(&0) {
                    return Err(Error::invalid(format!("bad reshape target {shape:?}")));
                }
            }
            LayerSpec::Relu | LayerSpec::Flatten | LayerSpec::ChannelMax | LayerSpec::MeanPool => {}
        }
        Ok(())
    }

    /// Closed-form output shape for an input shape (batch axis included).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = || Error::shape(format!("{self:?} cannot take input {input:?}"));
        match self {
            LayerSpec::Conv1d { in_channels, out_channels, kernel, stride, dilation, padding, causal } => {
                if input.len() != 3 || input[1] != *in_channels {
                    return Err(bad());
                }
                let (pl, pr) = if *causal { ((kernel - 1) * dilation, 0) } else { (*padding, *padding) };
                let l = conv_out_len(input[2], *kernel, *stride, *dilation, pl, pr).ok_or_else(bad)?;
                Ok(vec![input[0], *out_channels, l])
            }
            LayerSpec::ConvTranspose1d { in_channels, out_channels, kernel, stride, dilation, padding, output_padding } => {
                if input.len() != 3 || input[1] != *in_channels {
                    return Err(bad());
                }
                let l = conv_transpose_out_len(input[2], *kernel, *stride, *dilation, *padding, *output_padding).ok_or_else(bad)?;
                Ok(vec![input[0], *out_channels, l])
            }
            LayerSpec::Linear { in_features, out_features } => {
                if input.len() != 2 || input[1] != *in_features {
                    return Err(bad());
                }
                Ok(vec![input[0], *out_features])
            }
            LayerSpec::BatchNorm1d { features } => {
                if !(2..=3).contains(&input.len()) || input[1] != *features {
                    return Err(bad());
                }
                Ok(input.to_vec())
            }
            LayerSpec::Relu | LayerSpec::Dropout { .. } => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input[0], input[1..].iter().product()]),
            LayerSpec::Reshape { shape } => {
                if shape.iter().product::<usize>() != input[1..].iter().product::<usize>() {
                    return Err(bad());
                }
                let mut s = vec![input[0]];
                s.extend(shape);
                Ok(s)
            }
            LayerSpec::ChannelMax => {
                if input.len() != 3 {
                    return Err(bad());
                }
                Ok(vec![input[0], input[2]])
            }
            LayerSpec::MeanPool => {
                if input.len() != 3 {
                    return Err(bad());
                }
                Ok(vec![input[0], input[1]])
            }
        }
    }
}

/// A layer bound to its tensors in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub name: String,
    pub spec: LayerSpec,
    params: Vec<ParamId>,
}

impl Layer {
    /// Allocate and initialize the layer's tensors in `store`.
    pub fn build<T: Real>(spec: LayerSpec, store: &mut ParamStore<T>, rng: &mut Rng, name: &str) -> Result<Self> {
        spec.validate()?;
        let params = match &spec {
            LayerSpec::Conv1d { in_channels, out_channels, kernel, .. } => {
                let fan = in_channels * kernel;
                vec![
                    store.push_uniform(format!("{name}.weight"), &[*out_channels, *in_channels, *kernel], fan, rng),
                    store.push_uniform(format!("{name}.bias"), &[*out_channels], fan, rng),
                ]
            }
            LayerSpec::ConvTranspose1d { in_channels, out_channels, kernel, .. } => {
                let fan = out_channels * kernel;
                vec![
                    store.push_uniform(format!("{name}.weight"), &[*in_channels, *out_channels, *kernel], fan, rng),
                    store.push_uniform(format!("{name}.bias"), &[*out_channels], fan, rng),
                ]
            }
            LayerSpec::Linear { in_features, out_features } => vec![
                store.push_uniform(format!("{name}.weight"), &[*out_features, *in_features], *in_features, rng),
                store.push_uniform(format!("{name}.bias"), &[*out_features], *in_features, rng),
            ],
            LayerSpec::BatchNorm1d { features } => vec![
                store.push_const(format!("{name}.weight"), &[*features], 1.0, true),
                store.push_const(format!("{name}.bias"), &[*features], 0.0, true),
                store.push_const(format!("{name}.running_mean"), &[*features], 0.0, false),
                store.push_const(format!("{name}.running_var"), &[*features], 1.0, false),
            ],
            _ => Vec::new(),
        };
        Ok(Self { name: name.to_string(), spec, params })
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &mut ParamStore<T>, x: Var) -> Result<Var> {
        let expect = self.spec.output_shape(g.shape(x))?;
        let y = match &self.spec {
            LayerSpec::Conv1d { kernel, stride, dilation, padding, causal, .. } => {
                let (w, b) = (g.param(store, self.params[0]), g.param(store, self.params[1]));
                let (pl, pr) = if *causal { ((kernel - 1) * dilation, 0) } else { (*padding, *padding) };
                g.conv1d(x, w, Some(b), *stride, *dilation, pl, pr)?
            }
            LayerSpec::ConvTranspose1d { stride, dilation, padding, output_padding, .. } => {
                let (w, b) = (g.param(store, self.params[0]), g.param(store, self.params[1]));
                g.conv_transpose1d(x, w, Some(b), *stride, *dilation, *padding, *output_padding)?
            }
            LayerSpec::Linear { .. } => {
                let (w, b) = (g.param(store, self.params[0]), g.param(store, self.params[1]));
                g.linear(x, w, Some(b))?
            }
            LayerSpec::BatchNorm1d { .. } => {
                let (gamma, beta) = (g.param(store, self.params[0]), g.param(store, self.params[1]));
                let mut rm = store.get(self.params[2]).data().to_vec();
                let mut rv = store.get(self.params[3]).data().to_vec();
                let y = g.batch_norm(x, gamma, beta, &mut rm, &mut rv, BN_MOMENTUM, BN_EPS)?;
                if g.is_training() {
                    store.get_mut(self.params[2]).data_mut().copy_from_slice(&rm);
                    store.get_mut(self.params[3]).data_mut().copy_from_slice(&rv);
                }
                y
            }
            LayerSpec::Relu => g.relu(x),
            LayerSpec::Dropout { rate } => g.dropout(x, *rate),
            LayerSpec::Flatten => g.flatten(x)?,
            LayerSpec::Reshape { .. } => g.reshape(x, expect.clone())?,
            LayerSpec::ChannelMax => g.channel_max(x)?,
            LayerSpec::MeanPool => g.mean_pool(x)?,
        };
        debug_assert_eq!(g.shape(y), expect.as_slice());
        Ok(y)
    }

    /// One-off forward pass outside of a larger graph.
    pub fn apply<T: Real>(&self, store: &mut ParamStore<T>, input: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let mut g = Graph::new(training, 0);
        let x = g.input(input);
        let y = self.forward(&mut g, store, x)?;
        Ok(g.tensor(y))
    }
}

/// Layers applied in order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn build<T: Real>(specs: Vec<LayerSpec>, store: &mut ParamStore<T>, rng: &mut Rng, name: &str) -> Result<Self> {
        let layers = specs
            .into_iter()
            .enumerate()
            .map(|(i, s)| Layer::build(s, store, rng, &format!("{name}.{i}")))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &mut ParamStore<T>, mut x: Var) -> Result<Var> {
        for l in &self.layers {
            x = l.forward(g, store, x)?;
        }
        Ok(x)
    }

    pub fn specs(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().map(|l| &l.spec)
    }
}
