//! Pre-activation residual convolution stacks.

use crate::error::Result;
use crate::nn::layer::{Layer, Sequential};
use crate::nn::{Graph, LayerSpec, ParamStore, Real, Var};
use crate::seed::Rng;

/// `x + conv2(drop(relu(bn2(conv1(relu(bn1(x)))))))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResBlock {
    bn1: Layer,
    conv1: Layer,
    bn2: Layer,
    drop: Layer,
    conv2: Layer,
}

impl ResBlock {
    /// `causal` selects left-padded convolutions; otherwise same-padding with
    /// an odd kernel.
    pub fn build<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut Rng,
        name: &str,
        width: usize,
        kernel: usize,
        dilations: [usize; 2],
        dropout: f64,
        causal: bool,
    ) -> Result<Self> {
        let conv = |d| if causal { LayerSpec::conv_causal(width, width, kernel, d) } else { LayerSpec::conv_same(width, width, kernel, d) };
        Ok(Self {
            bn1: Layer::build(LayerSpec::BatchNorm1d { features: width }, store, rng, &format!("{name}.bn1"))?,
            conv1: Layer::build(conv(dilations[0]), store, rng, &format!("{name}.conv1"))?,
            bn2: Layer::build(LayerSpec::BatchNorm1d { features: width }, store, rng, &format!("{name}.bn2"))?,
            drop: Layer::build(LayerSpec::Dropout { rate: dropout }, store, rng, &format!("{name}.drop"))?,
            conv2: Layer::build(conv(dilations[1]), store, rng, &format!("{name}.conv2"))?,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &mut ParamStore<T>, x: Var) -> Result<Var> {
        let mut h = self.bn1.forward(g, store, x)?;
        h = g.relu(h);
        h = self.conv1.forward(g, store, h)?;
        h = self.bn2.forward(g, store, h)?;
        h = g.relu(h);
        h = self.drop.forward(g, store, h)?;
        h = self.conv2.forward(g, store, h)?;
        g.add(x, h)
    }

    pub fn layers(&self) -> [&Layer; 5] {
        [&self.bn1, &self.conv1, &self.bn2, &self.drop, &self.conv2]
    }
}

/// Shared feature extractor of the classifier and metric-learning models:
/// pointwise stem, strided patch convolution, residual blocks, then
/// normalization and global average pooling to `[B, width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    stem: Sequential,
    blocks: Vec<ResBlock>,
    tail: Sequential,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneShape {
    pub in_channels: usize,
    pub stem: usize,
    pub width: usize,
    pub stride: usize,
    pub kernel: usize,
    pub dilations: Vec<[usize; 2]>,
    pub dropout: f64,
}

impl Backbone {
    pub fn build<T: Real>(s: &BackboneShape, store: &mut ParamStore<T>, rng: &mut Rng) -> Result<Self> {
        let stem = Sequential::build(
            vec![
                LayerSpec::conv_same(s.in_channels, s.stem, 1, 1),
                LayerSpec::Relu,
                LayerSpec::Conv1d {
                    in_channels: s.stem,
                    out_channels: s.width,
                    kernel: s.stride,
                    stride: s.stride,
                    dilation: 1,
                    padding: 0,
                    causal: false,
                },
            ],
            store,
            rng,
            "backbone.stem",
        )?;
        let blocks = s
            .dilations
            .iter()
            .enumerate()
            .map(|(i, &d)| ResBlock::build(store, rng, &format!("backbone.block{i}"), s.width, s.kernel, d, s.dropout, false))
            .collect::<Result<_>>()?;
        let tail = Sequential::build(
            vec![LayerSpec::BatchNorm1d { features: s.width }, LayerSpec::Relu, LayerSpec::MeanPool],
            store,
            rng,
            "backbone.tail",
        )?;
        Ok(Self { stem, blocks, tail })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &mut ParamStore<T>, x: Var) -> Result<Var> {
        let mut h = self.stem.forward(g, store, x)?;
        for b in &self.blocks {
            h = b.forward(g, store, h)?;
        }
        self.tail.forward(g, store, h)
    }

    pub fn layers(&self) -> Vec<&Layer> {
        let mut v: Vec<&Layer> = self.stem.layers.iter().collect();
        self.blocks.iter().for_each(|b| v.extend(b.layers()));
        v.extend(self.tail.layers.iter());
        v
    }
}
