use crate::error::{Error, Result};
use crate::kan::{KanLayer, SplineGrid};
use crate::nn::param::{Param, Trainable};
use crate::nn::Matrix;
use crate::rng;
use crate::scalar::Scalar;

/// A chain of [`KanLayer`]s sharing one grid configuration.
#[derive(Clone, Debug)]
pub struct KanNetwork<T> {
    pub layers: Vec<KanLayer<T>>,
}

/// Inputs to every layer, kept by [`KanNetwork::forward_train`].
pub struct KanTrace<T> {
    inputs: Vec<Matrix<T>>,
}

impl<T: Scalar> KanNetwork<T> {
    /// Seeded initialization over the full width sequence (input and output included).
    pub fn init(widths: &[usize], grid: SplineGrid, seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "KAN needs at least two widths, got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("zero width in {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                KanLayer::new(
                    w[0],
                    w[1],
                    grid,
                    &mut rng::stream(seed, "kan.init", i as u64),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<KanLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("KAN without layers".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(crate::error::shape_err(
                    "kan chain",
                    format!("layer {i} out {}", w[0].output_dim()),
                    format!("layer {} in {}", i + 1, w[1].input_dim()),
                ));
            }
        }
        Ok(Self { layers })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].input_dim()];
        w.extend(self.layers.iter().map(|l| l.output_dim()));
        w
    }

    pub fn grid(&self) -> SplineGrid {
        self.layers[0].grid
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut h = self.layers[0].forward(x)?;
        for l in &self.layers[1..] {
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    pub fn forward_train(&self, x: &Matrix<T>) -> Result<(Matrix<T>, KanTrace<T>)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in &self.layers {
            let next = l.forward(&h)?;
            inputs.push(std::mem::replace(&mut h, next));
        }
        Ok((h, KanTrace { inputs }))
    }

    pub fn backward(&mut self, trace: &KanTrace<T>, grad_out: &Matrix<T>) -> Result<Matrix<T>> {
        let mut g = grad_out.clone();
        for (l, x) in self.layers.iter_mut().zip(&trace.inputs).rev() {
            g = l.backward(x, &g)?;
        }
        Ok(g)
    }
}

impl<T: Scalar> Trainable<T> for KanNetwork<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(Param<'_, T>)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_params(&crate::nn::param::join(prefix, &format!("kan{i}")), f);
        }
    }
}
