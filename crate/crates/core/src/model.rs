//! The seven-block dual-feedback network and its classification head.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::blocks::{DfBlock, Pathways};
use crate::error::{Error, Result};
use crate::params::{ConvLayer, DenseLayer, ParamStore};
use crate::tensor::{Real, Shape, Tensor};

/// Default filter schedule; only the first entry is fixed by the design,
/// the rest rise so that the total lands near 7.3M parameters.
pub const DEFAULT_FILTERS: [usize; 7] = [32, 48, 64, 96, 128, 128, 128];

/// Predictions at or above this probability are labelled opacity.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Items per forward pass inside [`predict`].
const PREDICT_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub filters: usize,
    pub pool: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    /// Kernel of the convolution applied to the final side output.
    pub side_kernel: usize,
    /// Width of the hidden dense layer before the single sigmoid unit.
    pub dense_width: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            side_kernel: 3,
            dense_width: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub input_size: usize,
    pub input_channels: usize,
    pub blocks: Vec<BlockConfig>,
    pub use_p2: bool,
    pub use_p3: bool,
    pub head: HeadConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::scaled(&DEFAULT_FILTERS, 256)
    }
}

impl NetworkConfig {
    /// Blocks with the given filters, each pooling by 2.
    pub fn scaled(filters: &[usize], input_size: usize) -> Self {
        Self {
            input_size,
            input_channels: 3,
            blocks: filters.iter().map(|&f| BlockConfig { filters: f, pool: 2 }).collect(),
            use_p2: true,
            use_p3: true,
            head: HeadConfig::default(),
        }
    }

    pub fn with_pathways(mut self, pathways: Pathways) -> Self {
        self.use_p2 = pathways.p2;
        self.use_p3 = pathways.p3;
        self
    }

    pub fn pathways(&self) -> Pathways {
        Pathways::new(self.use_p2, self.use_p3)
    }

    pub fn pool_product(&self) -> usize {
        self.blocks.iter().map(|b| b.pool).product()
    }

    /// Spatial side length after the last block.
    pub fn final_size(&self) -> usize {
        self.input_size / self.pool_product().max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.blocks.is_empty() {
            return bad("at least one block is required".into());
        }
        if self.input_size == 0 || self.input_channels == 0 {
            return bad("input size and channels must be positive".into());
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.filters == 0 || b.filters % 2 != 0 {
                return bad(format!("block {} filter count {} must be even", i + 1, b.filters));
            }
            if b.pool == 0 {
                return bad(format!("block {} pool size must be at least 1", i + 1));
            }
        }
        if self.blocks.windows(2).any(|w| w[1].filters < w[0].filters) {
            return bad("filter counts must be non-decreasing".into());
        }
        let product = self.pool_product();
        if self.input_size % product != 0 {
            return bad(format!(
                "pool product {product} does not divide input size {}",
                self.input_size
            ));
        }
        if self.head.side_kernel % 2 == 0 || self.head.dense_width == 0 {
            return bad("head needs an odd side kernel and a positive dense width".into());
        }
        Ok(())
    }

    /// Seven blocks starting at `(32, 2)` on a 256×256×3 input.
    pub fn is_full_scale(&self) -> bool {
        self.blocks.len() == 7
            && self.blocks[0] == BlockConfig { filters: 32, pool: 2 }
            && self.input_size == 256
            && self.input_channels == 3
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Head {
    pub side_conv: Option<ConvLayer>,
    pub hidden: DenseLayer,
    pub output: DenseLayer,
    /// Width of `concat(gap(y), flatten(conv(y_s)))`.
    pub feature_width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    config: NetworkConfig,
    store: ParamStore<T>,
    blocks: Vec<DfBlock>,
    head: Head,
}

/// One row of the architecture summary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSummary {
    pub name: String,
    pub kind: String,
    /// `(h, w, c)` per batch item.
    pub output: (usize, usize, usize),
    pub params: usize,
}

/// Build the network with deterministic initialization under `seed`.
pub fn build_network<T: Real>(config: &NetworkConfig, seed: u64) -> Result<Network<T>> {
    Network::new(config.clone(), seed)
}

pub fn count_params<T: Real>(network: &Network<T>) -> usize {
    network.param_count()
}

/// Opacity probability per batch item.
pub fn predict<T: Real>(network: &Network<T>, batch: &Tensor<T>) -> Result<Vec<T>> {
    network.predict(batch)
}

impl<T: Real> Network<T> {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let pathways = config.pathways();

        let mut blocks = Vec::with_capacity(config.blocks.len());
        let mut in_x = config.input_channels;
        let mut in_s = 0;
        for (i, b) in config.blocks.iter().enumerate() {
            let block = DfBlock::create(&mut store, i + 1, in_x, in_s, b.filters, b.pool, pathways, &mut rng)?;
            in_x = block.out_channels();
            in_s = block.out_side_channels();
            blocks.push(block);
        }

        let side = config.final_size();
        let side_conv = (in_s > 0)
            .then(|| ConvLayer::create(&mut store, "head.side_conv", config.head.side_kernel, 1, in_s, in_s, &mut rng))
            .transpose()?;
        let feature_width = in_x + side * side * in_s;
        let hidden = DenseLayer::create(&mut store, "head.dense", feature_width, config.head.dense_width, &mut rng);
        let output = DenseLayer::create(&mut store, "head.out", config.head.dense_width, 1, &mut rng);

        Ok(Self {
            config,
            store,
            blocks,
            head: Head {
                side_conv,
                hidden,
                output,
                feature_width,
            },
        })
    }

    /// Rebuild a network around an existing parameter set. Names and shapes
    /// must match the layout implied by `config` exactly.
    pub fn from_params(config: NetworkConfig, params: ParamStore<T>) -> Result<Self> {
        let mut net = Self::new(config, 0)?;
        if net.store.len() != params.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameter tensors, found {}",
                net.store.len(),
                params.len()
            )));
        }
        for (want, got) in net.store.entries().iter().zip(params.entries()) {
            if want.name != got.name || want.value.shape() != got.value.shape() {
                return Err(Error::InvalidConfig(format!(
                    "parameter {} {} does not match layout entry {} {}",
                    got.name,
                    got.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        net.store = params;
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn blocks(&self) -> &[DfBlock] {
        &self.blocks
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn param_count(&self) -> usize {
        self.store.scalar_count()
    }

    pub fn params_millions(&self) -> f64 {
        self.param_count() as f64 / 1e6
    }

    pub fn input_shape(&self, batch: usize) -> Shape {
        Shape::new(batch, self.config.input_size, self.config.input_size, self.config.input_channels)
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            store: self.store.cast(),
            blocks: self.blocks.clone(),
            head: self.head.clone(),
        }
    }

    /// Record the forward graph; returns the `(n, 1, 1, 1)` probability node.
    pub fn forward(&self, tape: &mut Tape<T>, vars: &[Var], input: Var) -> Result<Var> {
        let logit = self.forward_logit(tape, vars, input)?;
        Ok(tape.sigmoid(logit))
    }

    /// Forward graph up to the pre-sigmoid `(n, 1, 1, 1)` logit node.
    pub fn forward_logit(&self, tape: &mut Tape<T>, vars: &[Var], input: Var) -> Result<Var> {
        let s = tape.shape(input);
        let want = self.input_shape(s.n);
        if s != want {
            return Err(Error::ShapeMismatch {
                op: "network input",
                detail: format!("expected {want}, found {s}"),
            });
        }
        let mut x = input;
        let mut x_s = tape.constant(Tensor::zeros(s.with_channels(0)));
        for block in &self.blocks {
            (x, x_s) = block.forward(tape, vars, x, x_s)?;
        }

        let pooled = tape.global_avg_pool(x);
        let features = match &self.head.side_conv {
            Some(conv) => {
                let side = conv.forward_relu(tape, vars, x_s)?;
                let flat = tape.flatten(side);
                tape.concat_channels(&[pooled, flat])?
            }
            None => pooled,
        };
        let hidden = self.head.hidden.forward(tape, vars, features)?;
        let hidden = tape.relu(hidden);
        self.head.output.forward(tape, vars, hidden)
    }

    pub fn predict(&self, batch: &Tensor<T>) -> Result<Vec<T>> {
        let s = batch.shape();
        let want = self.input_shape(s.n);
        if s != want {
            return Err(Error::ShapeMismatch {
                op: "predict",
                detail: format!("expected {want}, found {s}"),
            });
        }
        let mut out = Vec::with_capacity(s.n);
        let mut start = 0;
        while start < s.n {
            let end = (start + PREDICT_CHUNK).min(s.n);
            let items: Vec<Tensor<T>> = (start..end).map(|b| batch.batch_item(b)).collect();
            let chunk = Tensor::stack(&items)?;
            let mut tape = Tape::new();
            let vars = self.store.bind(&mut tape);
            let x = tape.constant(chunk);
            let p = self.forward(&mut tape, &vars, x)?;
            out.extend_from_slice(tape.value(p).data());
            start = end;
        }
        Ok(out)
    }

    /// Mean BCE loss on a batch and the gradient of every parameter, in
    /// store order.
    pub fn loss_and_gradients(&self, batch: &Tensor<T>, labels: &[T]) -> Result<(T, Vec<Tensor<T>>)> {
        let mut tape = Tape::new();
        let vars = self.store.bind(&mut tape);
        let x = tape.constant(batch.clone());
        let p = self.forward(&mut tape, &vars, x)?;
        let loss = tape.bce_loss(p, labels)?;
        let mut grads = tape.backward(loss)?;
        let value = tape.value(loss).data()[0];
        Ok((value, vars.iter().map(|&v| grads.take(v)).collect()))
    }

    /// Mean BCE loss without recording gradients.
    pub fn loss(&self, batch: &Tensor<T>, labels: &[T]) -> Result<T> {
        let p = self.predict(batch)?;
        let p = Tensor::from_vec(Shape::new(p.len(), 1, 1, 1), p)?;
        crate::ops::bce_loss(&p, labels)
    }

    /// Per-layer output shapes and parameter counts, derived from the layout.
    pub fn summary(&self) -> Vec<LayerSummary> {
        let mut rows = Vec::new();
        let mut size = self.config.input_size;
        let conv_row = |layer: &ConvLayer, size: usize| LayerSummary {
            name: layer.name.clone(),
            kind: format!("conv{}x{} d{}", layer.kernel, layer.kernel, layer.dilation),
            output: (size, size, layer.out_channels),
            params: layer.param_count(),
        };
        for block in &self.blocks {
            for layer in block.first.layers().chain(block.second.layers()) {
                rows.push(conv_row(layer, size));
            }
            size /= block.pool;
            rows.push(LayerSummary {
                name: format!("df{}.y", block.index),
                kind: format!("maxpool{}", block.pool),
                output: (size, size, block.out_channels()),
                params: 0,
            });
            rows.push(LayerSummary {
                name: format!("df{}.y_s", block.index),
                kind: format!("maxpool{}", block.pool),
                output: (size, size, block.out_side_channels()),
                params: 0,
            });
        }
        let last = self.blocks.last().map(DfBlock::out_channels).unwrap_or(0);
        rows.push(LayerSummary {
            name: "head.gap".into(),
            kind: "global_avg_pool".into(),
            output: (1, 1, last),
            params: 0,
        });
        if let Some(conv) = &self.head.side_conv {
            rows.push(conv_row(conv, size));
        }
        rows.push(LayerSummary {
            name: "head.features".into(),
            kind: "concat".into(),
            output: (1, 1, self.head.feature_width),
            params: 0,
        });
        for layer in [&self.head.hidden, &self.head.output] {
            rows.push(LayerSummary {
                name: layer.name.clone(),
                kind: "dense".into(),
                output: (1, 1, layer.outputs),
                params: layer.param_count(),
            });
        }
        rows
    }

    /// Plain-text table of [`Network::summary`] with a total line.
    pub fn render_summary(&self) -> String {
        let rows = self.summary();
        let mut out = String::new();
        let _ = writeln!(out, "{:<20} {:<16} {:>18} {:>10}", "layer", "kind", "output", "params");
        for r in &rows {
            let shape = format!("({}, {}, {})", r.output.0, r.output.1, r.output.2);
            let _ = writeln!(out, "{:<20} {:<16} {:>18} {:>10}", r.name, r.kind, shape, r.params);
        }
        let _ = writeln!(out, "total parameters: {}", self.param_count());
        out
    }
}
