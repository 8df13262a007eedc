use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::kan::{KanNetwork, KanTrace, SplineGrid};
use crate::nn::param::{join, Param, Trainable};
use crate::nn::{gelu_backward, gelu_forward, BatchNorm1d, BnCache, LinearLayer, Matrix};
use crate::rng;
use crate::scalar::{sc, Scalar};

/// Hidden-layer structure shared by both variants.
pub const DEFAULT_WIDTHS: [usize; 4] = [512, 1024, 3072, 512];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Mlp,
    Kan,
}

impl Variant {
    pub fn tag(self) -> u8 {
        match self {
            Variant::Mlp => 0,
            Variant::Kan => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Variant::Mlp),
            1 => Some(Variant::Kan),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Mlp => "mlp",
            Variant::Kan => "kan",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(Variant::Mlp),
            "kan" => Ok(Variant::Kan),
            other => Err(Error::InvalidArgument(format!(
                "unknown model variant {other:?} (mlp|kan)"
            ))),
        }
    }
}

/// Architecture of a mapping network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FemConfig {
    /// Full width sequence, input and output included.
    pub widths: Vec<usize>,
    pub grid: SplineGrid,
}

impl Default for FemConfig {
    fn default() -> Self {
        Self {
            widths: DEFAULT_WIDTHS.to_vec(),
            grid: SplineGrid::default(),
        }
    }
}

impl FemConfig {
    pub fn with_widths(widths: &[usize]) -> Self {
        Self {
            widths: widths.to_vec(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.widths;
        if w.len() < 2 || w.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "invalid width sequence {w:?}"
            )));
        }
        if w[0] != w[w.len() - 1] {
            return Err(Error::InvalidArgument(format!(
                "input and output widths must both equal the embedding dimension: {w:?}"
            )));
        }
        self.grid.validate()
    }
}

/// Linear → BatchNorm → GELU.
#[derive(Clone, Debug)]
pub struct MlpBlock<T> {
    pub linear: LinearLayer<T>,
    pub norm: BatchNorm1d<T>,
}

/// Stack of [`MlpBlock`]s followed by a plain linear head.
#[derive(Clone, Debug)]
pub struct MlpNetwork<T> {
    pub blocks: Vec<MlpBlock<T>>,
    pub head: LinearLayer<T>,
}

struct BlockTrace<T> {
    input: Matrix<T>,
    cache: BnCache<T>,
    normed: Matrix<T>,
}

pub struct MlpTrace<T> {
    blocks: Vec<BlockTrace<T>>,
    head_input: Matrix<T>,
}

impl<T: Scalar> MlpNetwork<T> {
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "MLP needs at least two widths, got {widths:?}"
            )));
        }
        let n = widths.len() - 1;
        let mut blocks = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let mut r = rng::stream(seed, "mlp.init", i as u64);
            blocks.push(MlpBlock {
                linear: LinearLayer::new(widths[i], widths[i + 1], &mut r),
                norm: BatchNorm1d::new(widths[i + 1]),
            });
        }
        let mut r = rng::stream(seed, "mlp.init", (n - 1) as u64);
        let head = LinearLayer::new(widths[n - 1], widths[n], &mut r);
        Ok(Self { blocks, head })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.blocks.iter().map(|b| b.linear.input_dim()).collect();
        w.push(self.head.input_dim());
        w.push(self.head.output_dim());
        w
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut h = x.clone();
        for b in &self.blocks {
            let z = b.linear.forward(&h)?;
            h = gelu_forward(&b.norm.forward_eval(&z)?);
        }
        self.head.forward(&h)
    }

    pub fn forward_train(&mut self, x: &Matrix<T>) -> Result<(Matrix<T>, MlpTrace<T>)> {
        let mut traces = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for b in &mut self.blocks {
            let z = b.linear.forward(&h)?;
            let (normed, cache) = b.norm.forward_train(&z)?;
            let next = gelu_forward(&normed);
            traces.push(BlockTrace {
                input: std::mem::replace(&mut h, next),
                cache,
                normed,
            });
        }
        let out = self.head.forward(&h)?;
        Ok((
            out,
            MlpTrace {
                blocks: traces,
                head_input: h,
            },
        ))
    }

    pub fn backward(&mut self, trace: &MlpTrace<T>, grad_out: &Matrix<T>) -> Result<Matrix<T>> {
        let mut g = self.head.backward(&trace.head_input, grad_out)?;
        for (b, t) in self.blocks.iter_mut().zip(&trace.blocks).rev() {
            let g_norm = gelu_backward(&t.normed, &g);
            let g_lin = b.norm.backward(&t.cache, &g_norm)?;
            g = b.linear.backward(&t.input, &g_lin)?;
        }
        Ok(g)
    }
}

impl<T: Scalar> Trainable<T> for MlpNetwork<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(Param<'_, T>)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.linear
                .visit_params(&join(prefix, &format!("block{i}.linear")), f);
            b.norm
                .visit_params(&join(prefix, &format!("block{i}.norm")), f);
        }
        self.head.visit_params(&join(prefix, "head"), f);
    }
}

#[derive(Clone, Debug)]
pub enum FemNet<T> {
    Mlp(MlpNetwork<T>),
    Kan(KanNetwork<T>),
}

/// Trained or freshly initialized embedding-mapping network `M(·)`.
///
/// Embeddings are unit-norm, so their coordinates are of order `1/√d`. The
/// network works on coordinates multiplied by `√d` (order one, which spans the
/// spline grid) and divides its output by the same factor, so inputs and
/// outputs stay in embedding units.
#[derive(Clone, Debug)]
pub struct FemModel<T> {
    pub net: FemNet<T>,
    pub embedding_dim: usize,
}

pub enum FemTrace<T> {
    Mlp(MlpTrace<T>),
    Kan(KanTrace<T>),
}

impl<T: Scalar> FemModel<T> {
    /// Seeded construction of either variant.
    pub fn build(variant: Variant, config: &FemConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let net = match variant {
            Variant::Mlp => FemNet::Mlp(MlpNetwork::init(&config.widths, seed)?),
            Variant::Kan => FemNet::Kan(KanNetwork::init(&config.widths, config.grid, seed)?),
        };
        Ok(Self {
            net,
            embedding_dim: config.widths[0],
        })
    }

    pub fn from_net(net: FemNet<T>) -> Result<Self> {
        let widths = match &net {
            FemNet::Mlp(m) => m.widths(),
            FemNet::Kan(k) => k.widths(),
        };
        if widths[0] != widths[widths.len() - 1] {
            return Err(Error::InvalidArgument(format!(
                "input and output widths differ: {widths:?}"
            )));
        }
        Ok(Self {
            embedding_dim: widths[0],
            net,
        })
    }

    pub fn variant(&self) -> Variant {
        match self.net {
            FemNet::Mlp(_) => Variant::Mlp,
            FemNet::Kan(_) => Variant::Kan,
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        match &self.net {
            FemNet::Mlp(m) => m.widths(),
            FemNet::Kan(k) => k.widths(),
        }
    }

    pub fn config(&self) -> FemConfig {
        FemConfig {
            widths: self.widths(),
            grid: match &self.net {
                FemNet::Kan(k) => k.grid(),
                FemNet::Mlp(_) => SplineGrid::default(),
            },
        }
    }

    /// Factor applied to coordinates on the way in (and removed on the way out).
    pub fn coordinate_scale(&self) -> f64 {
        (self.embedding_dim as f64).sqrt()
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.embedding_dim {
            return Err(shape_err(
                "map_embedding",
                format!("input {}", x.shape_str()),
                format!("embedding_dim {}", self.embedding_dim),
            ));
        }
        Ok(())
    }

    /// Deterministic inference pass (batch norm in eval mode).
    pub fn map_embedding(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        let s = self.coordinate_scale();
        let xs = x.map(|v| v * sc(s));
        let mut y = match &self.net {
            FemNet::Mlp(m) => m.forward(&xs)?,
            FemNet::Kan(k) => k.forward(&xs)?,
        };
        y.scale(sc(1.0 / s));
        Ok(y)
    }

    /// Map a single embedding.
    pub fn map_one(&self, v: &[T]) -> Result<Vec<T>> {
        Ok(self
            .map_embedding(&Matrix::from_vec(1, v.len(), v.to_vec())?)?
            .into_vec())
    }

    /// Training-mode forward pass that records what [`backward`](Self::backward) needs.
    pub fn forward_train(&mut self, x: &Matrix<T>) -> Result<(Matrix<T>, FemTrace<T>)> {
        self.check_input(x)?;
        let s = self.coordinate_scale();
        let xs = x.map(|v| v * sc(s));
        let (mut y, trace) = match &mut self.net {
            FemNet::Mlp(m) => {
                let (y, t) = m.forward_train(&xs)?;
                (y, FemTrace::Mlp(t))
            }
            FemNet::Kan(k) => {
                let (y, t) = k.forward_train(&xs)?;
                (y, FemTrace::Kan(t))
            }
        };
        y.scale(sc(1.0 / s));
        Ok((y, trace))
    }

    /// Accumulates parameter gradients given `∂L/∂ê`; returns `∂L/∂x`.
    pub fn backward(&mut self, trace: &FemTrace<T>, grad_out: &Matrix<T>) -> Result<Matrix<T>> {
        let s = self.coordinate_scale();
        let g = grad_out.map(|v| v * sc(1.0 / s));
        let mut gx = match (&mut self.net, trace) {
            (FemNet::Mlp(m), FemTrace::Mlp(t)) => m.backward(t, &g)?,
            (FemNet::Kan(k), FemTrace::Kan(t)) => k.backward(t, &g)?,
            _ => {
                return Err(Error::InvalidArgument(
                    "trace from a different model variant".into(),
                ))
            }
        };
        gx.scale(sc(s));
        Ok(gx)
    }

    /// Number of batch-norm layers (always zero for the KAN variant).
    pub fn batchnorm_count(&self) -> usize {
        match &self.net {
            FemNet::Mlp(m) => m.blocks.len(),
            FemNet::Kan(_) => 0,
        }
    }

    pub fn cast<U: Scalar>(&self) -> FemModel<U> {
        let net = match &self.net {
            FemNet::Mlp(m) => FemNet::Mlp(MlpNetwork {
                blocks: m
                    .blocks
                    .iter()
                    .map(|b| MlpBlock {
                        linear: cast_linear(&b.linear),
                        norm: cast_bn(&b.norm),
                    })
                    .collect(),
                head: cast_linear(&m.head),
            }),
            FemNet::Kan(k) => FemNet::Kan(KanNetwork {
                layers: k
                    .layers
                    .iter()
                    .map(|l| {
                        crate::kan::KanLayer::from_parts(
                            l.grid,
                            l.base_weight.cast(),
                            l.spline_weight.cast(),
                        )
                        .expect("shapes preserved by cast")
                    })
                    .collect(),
            }),
        };
        FemModel {
            net,
            embedding_dim: self.embedding_dim,
        }
    }
}

fn cast_vec<T: Scalar, U: Scalar>(v: &[T]) -> Vec<U> {
    v.iter().map(|&x| U::from_f64c(x.to_f64c())).collect()
}

fn cast_linear<T: Scalar, U: Scalar>(l: &LinearLayer<T>) -> LinearLayer<U> {
    LinearLayer::from_parts(l.weight.cast(), cast_vec(&l.bias)).expect("shapes preserved by cast")
}

fn cast_bn<T: Scalar, U: Scalar>(b: &BatchNorm1d<T>) -> BatchNorm1d<U> {
    let mut out = BatchNorm1d::new(b.features());
    out.gamma = cast_vec(&b.gamma);
    out.beta = cast_vec(&b.beta);
    out.running_mean = cast_vec(&b.running_mean);
    out.running_var = cast_vec(&b.running_var);
    out.eps = b.eps;
    out.momentum = b.momentum;
    out
}

impl<T: Scalar> Trainable<T> for FemModel<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(Param<'_, T>)) {
        match &mut self.net {
            FemNet::Mlp(m) => m.visit_params(prefix, f),
            FemNet::Kan(k) => k.visit_params(prefix, f),
        }
    }
}

/// Closed-form trainable parameter count of the MLP variant.
pub fn mlp_param_count(widths: &[usize]) -> usize {
    let linear: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let norms: usize = widths[1..widths.len() - 1].iter().map(|w| 2 * w).sum();
    linear + norms
}
