//! Process-convolution (Pro_Conv) and dual-feedback (DF) blocks.
//!
//! A Pro_Conv unit maps one input to three same-sized feature maps:
//!
//! * `p1`: three chained 3×3 convolutions with `f` filters,
//! * `p2`: a 1×1 convolution with `f/2` filters,
//! * `p3`: a 5×5 convolution at dilation 2 with `f/2` filters.
//!
//! Every convolution is followed by ReLU.
//!
//! A DF block takes a main input `x` and a side input `x_s` and wires two
//! Pro_Conv units together:
//!
//! ```text
//! p11, p21, p31 = ProConv1(x)
//! xc1           = concat(x_s, p11, p21)
//! p12, p22, p32 = ProConv2(xc1)
//! xc2           = concat(p31, p12, p22)
//! y             = maxpool_m(xc2)        // 2f channels
//! y_s           = maxpool_m(p32)        // f/2 channels
//! ```
//!
//! Disabling the `p2` pathway drops both `p2` terms from the concatenations.
//! Disabling `p3` drops `p31` from `xc2` and turns `y_s` into a zero-channel
//! tensor, which removes the side path from every later block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{ConvLayer, ParamStore};
use crate::tensor::{Real, Shape, Tensor};

/// Which optional Pro_Conv branches are wired in. `p1` is always present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pathways {
    pub p2: bool,
    pub p3: bool,
}

impl Pathways {
    pub const ALL: Pathways = Pathways { p2: true, p3: true };

    pub const fn new(p2: bool, p3: bool) -> Self {
        Self { p2, p3 }
    }

    /// All four on/off combinations.
    pub fn every() -> [Pathways; 4] {
        [
            Pathways::new(true, true),
            Pathways::new(false, true),
            Pathways::new(true, false),
            Pathways::new(false, false),
        ]
    }

    /// Channels of `xc1 = concat(x_s, p11, p21)`.
    pub fn xc1_channels(&self, side_channels: usize, filters: usize) -> usize {
        side_channels + filters + if self.p2 { filters / 2 } else { 0 }
    }

    /// Channels of `y = maxpool(concat(p31, p12, p22))`.
    pub fn y_channels(&self, filters: usize) -> usize {
        filters + if self.p2 { filters / 2 } else { 0 } + if self.p3 { filters / 2 } else { 0 }
    }

    /// Channels of `y_s = maxpool(p32)`.
    pub fn side_channels(&self, filters: usize) -> usize {
        if self.p3 {
            filters / 2
        } else {
            0
        }
    }
}

impl Default for Pathways {
    fn default() -> Self {
        Self::ALL
    }
}

/// Layer layout of one Pro_Conv unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProConv {
    pub in_channels: usize,
    pub filters: usize,
    pub chain: [ConvLayer; 3],
    pub pointwise: Option<ConvLayer>,
    pub dilated: Option<ConvLayer>,
}

#[derive(Clone, Copy, Debug)]
pub struct ProConvOutput {
    pub p1: Var,
    pub p2: Option<Var>,
    pub p3: Option<Var>,
}

impl ProConv {
    pub fn create<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        in_channels: usize,
        filters: usize,
        pathways: Pathways,
        rng: &mut R,
    ) -> Result<Self> {
        if filters == 0 || filters % 2 != 0 {
            return Err(Error::OddFilters(filters));
        }
        let half = filters / 2;
        let chain = [
            ConvLayer::create(store, format!("{prefix}.p1a"), 3, 1, in_channels, filters, rng)?,
            ConvLayer::create(store, format!("{prefix}.p1b"), 3, 1, filters, filters, rng)?,
            ConvLayer::create(store, format!("{prefix}.p1c"), 3, 1, filters, filters, rng)?,
        ];
        let pointwise = pathways
            .p2
            .then(|| ConvLayer::create(store, format!("{prefix}.p2"), 1, 1, in_channels, half, rng))
            .transpose()?;
        let dilated = pathways
            .p3
            .then(|| ConvLayer::create(store, format!("{prefix}.p3"), 5, 2, in_channels, half, rng))
            .transpose()?;
        Ok(Self {
            in_channels,
            filters,
            chain,
            pointwise,
            dilated,
        })
    }

    pub fn pathways(&self) -> Pathways {
        Pathways::new(self.pointwise.is_some(), self.dilated.is_some())
    }

    pub fn layers(&self) -> impl Iterator<Item = &ConvLayer> {
        self.chain.iter().chain(&self.pointwise).chain(&self.dilated)
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(ConvLayer::param_count).sum()
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, vars: &[Var], input: Var) -> Result<ProConvOutput> {
        let c = tape.shape(input).c;
        if c != self.in_channels {
            return Err(Error::ChannelMismatch {
                op: "pro_conv",
                expected: self.in_channels,
                found: c,
            });
        }
        let mut p1 = input;
        for layer in &self.chain {
            p1 = layer.forward_relu(tape, vars, p1)?;
        }
        let p2 = self
            .pointwise
            .as_ref()
            .map(|l| l.forward_relu(tape, vars, input))
            .transpose()?;
        let p3 = self
            .dilated
            .as_ref()
            .map(|l| l.forward_relu(tape, vars, input))
            .transpose()?;
        Ok(ProConvOutput { p1, p2, p3 })
    }
}

/// Layer layout of one DF block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DfBlock {
    pub index: usize,
    pub filters: usize,
    pub pool: usize,
    pub in_channels: usize,
    pub side_channels: usize,
    pub pathways: Pathways,
    pub first: ProConv,
    pub second: ProConv,
}

impl DfBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn create<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        index: usize,
        in_channels: usize,
        side_channels: usize,
        filters: usize,
        pool: usize,
        pathways: Pathways,
        rng: &mut R,
    ) -> Result<Self> {
        if pool == 0 {
            return Err(Error::InvalidConfig("pool size must be at least 1".into()));
        }
        let prefix = format!("df{index}");
        let first = ProConv::create(store, &format!("{prefix}.pc1"), in_channels, filters, pathways, rng)?;
        let mid = pathways.xc1_channels(side_channels, filters);
        let second = ProConv::create(store, &format!("{prefix}.pc2"), mid, filters, pathways, rng)?;
        Ok(Self {
            index,
            filters,
            pool,
            in_channels,
            side_channels,
            pathways,
            first,
            second,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.pathways.y_channels(self.filters)
    }

    pub fn out_side_channels(&self) -> usize {
        self.pathways.side_channels(self.filters)
    }

    pub fn param_count(&self) -> usize {
        self.first.param_count() + self.second.param_count()
    }

    /// Build the block's graph; returns `(y, y_s)`.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, vars: &[Var], x: Var, x_s: Var) -> Result<(Var, Var)> {
        let xs = tape.shape(x);
        let ss = tape.shape(x_s);
        if !xs.same_grid(&ss) {
            return Err(Error::ShapeMismatch {
                op: "df_block",
                detail: format!("x {xs} vs x_s {ss}"),
            });
        }
        if ss.c != self.side_channels {
            return Err(Error::ChannelMismatch {
                op: "df_block side input",
                expected: self.side_channels,
                found: ss.c,
            });
        }
        if xs.h % self.pool != 0 || xs.w % self.pool != 0 {
            return Err(Error::NotDivisible {
                op: "df_block",
                h: xs.h,
                w: xs.w,
                m: self.pool,
            });
        }

        let a = self.first.forward(tape, vars, x)?;
        let mut xc1 = vec![x_s, a.p1];
        xc1.extend(a.p2);
        let xc1 = tape.concat_channels(&xc1)?;

        let b = self.second.forward(tape, vars, xc1)?;
        let mut xc2 = Vec::with_capacity(3);
        xc2.extend(a.p3);
        xc2.push(b.p1);
        xc2.extend(b.p2);
        let xc2 = tape.concat_channels(&xc2)?;

        let y = tape.maxpool2d(xc2, self.pool)?;
        let y_s = match b.p3 {
            Some(p32) => tape.maxpool2d(p32, self.pool)?,
            None => tape.constant(Tensor::zeros(Shape::new(xs.n, xs.h / self.pool, xs.w / self.pool, 0))),
        };
        Ok((y, y_s))
    }
}

/// A standalone Pro_Conv unit with its own parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ProConvParams<T> {
    pub layout: ProConv,
    pub store: ParamStore<T>,
}

impl<T: Real> ProConvParams<T> {
    pub fn new(in_channels: usize, filters: usize, pathways: Pathways, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let layout = ProConv::create(&mut store, "pc", in_channels, filters, pathways, &mut rng)?;
        Ok(Self { layout, store })
    }
}

/// A standalone DF block with its own parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DfParams<T> {
    pub layout: DfBlock,
    pub store: ParamStore<T>,
}

impl<T: Real> DfParams<T> {
    pub fn new(
        in_channels: usize,
        side_channels: usize,
        filters: usize,
        pool: usize,
        pathways: Pathways,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let layout = DfBlock::create(&mut store, 1, in_channels, side_channels, filters, pool, pathways, &mut rng)?;
        Ok(Self { layout, store })
    }
}

/// Evaluate a Pro_Conv unit, returning `(p1, p2, p3)`; disabled branches are `None`.
#[allow(clippy::type_complexity)]
pub fn pro_conv<T: Real>(
    input: &Tensor<T>,
    params: &ProConvParams<T>,
) -> Result<(Tensor<T>, Option<Tensor<T>>, Option<Tensor<T>>)> {
    let mut tape = Tape::new();
    let vars = params.store.bind(&mut tape);
    let x = tape.constant(input.clone());
    let out = params.layout.forward(&mut tape, &vars, x)?;
    let fetch = |v: Var| tape.value(v).clone();
    Ok((fetch(out.p1), out.p2.map(fetch), out.p3.map(fetch)))
}

/// Evaluate a DF block with every pathway present; returns `(y, y_s)`.
pub fn df_block<T: Real>(x: &Tensor<T>, x_s: &Tensor<T>, params: &DfParams<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    df_block_ablated(x, x_s, params, true, true)
}

/// Evaluate a DF block whose optional pathways are switched by `use_p2` and
/// `use_p3`. The parameters must have been built for the same pathways since
/// the channel widths inside the block depend on them.
pub fn df_block_ablated<T: Real>(
    x: &Tensor<T>,
    x_s: &Tensor<T>,
    params: &DfParams<T>,
    use_p2: bool,
    use_p3: bool,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let wanted = Pathways::new(use_p2, use_p3);
    if params.layout.pathways != wanted {
        return Err(Error::InvalidConfig(format!(
            "block was built for {:?}, evaluated with {:?}",
            params.layout.pathways, wanted
        )));
    }
    let mut tape = Tape::new();
    let vars = params.store.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let sv = tape.constant(x_s.clone());
    let (y, y_s) = params.layout.forward(&mut tape, &vars, xv, sv)?;
    Ok((tape.value(y).clone(), tape.value(y_s).clone()))
}
