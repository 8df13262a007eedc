//! `FEMW` model files.
//!
//! ```text
//! "FEMW" | version u16 | variant u8 (0 = MLP, 1 = KAN) | embedding_dim u32
//! | width count u32 | widths u32… | [KAN: grid_size u32, order u32, lo f32, hi f32]
//! | parameters f32… | checksum u64
//! ```
//!
//! Parameters follow layer order. MLP blocks store linear weight and bias,
//! then batch-norm gamma, beta, running mean and running variance; the head
//! stores weight and bias. KAN layers store base weights then spline weights.
//! All integers and floats are little-endian.

use std::path::Path;

use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::fem::model::{FemModel, FemNet, MlpBlock, MlpNetwork, Variant};
use crate::kan::{KanLayer, KanNetwork, SplineGrid};
use crate::nn::{BatchNorm1d, LinearLayer, Matrix};
use crate::scalar::Scalar;

pub const FEMW_MAGIC: &[u8; 4] = b"FEMW";
pub const FEMW_VERSION: u16 = 1;

fn put<T: Scalar>(w: &mut ByteWriter, v: &[T]) {
    w.f32s(v.iter().map(|x| x.to_f64c() as f32));
}

pub fn model_to_bytes<T: Scalar>(model: &FemModel<T>) -> Vec<u8> {
    let widths = model.widths();
    let mut w = ByteWriter::default();
    w.bytes(FEMW_MAGIC);
    w.u16(FEMW_VERSION);
    w.u8(model.variant().tag());
    w.u32(model.embedding_dim as u32);
    w.u32(widths.len() as u32);
    widths.iter().for_each(|&x| w.u32(x as u32));
    match &model.net {
        FemNet::Mlp(m) => {
            for b in &m.blocks {
                put(&mut w, b.linear.weight.as_slice());
                put(&mut w, &b.linear.bias);
                put(&mut w, &b.norm.gamma);
                put(&mut w, &b.norm.beta);
                put(&mut w, &b.norm.running_mean);
                put(&mut w, &b.norm.running_var);
            }
            put(&mut w, m.head.weight.as_slice());
            put(&mut w, &m.head.bias);
        }
        FemNet::Kan(k) => {
            let g = k.grid();
            w.u32(g.grid_size as u32);
            w.u32(g.order as u32);
            w.f32(g.lo as f32);
            w.f32(g.hi as f32);
            for l in &k.layers {
                put(&mut w, l.base_weight.as_slice());
                put(&mut w, l.spline_weight.as_slice());
            }
        }
    }
    w.finish()
}

fn body_len(variant: Variant, widths: &[usize], grid: Option<&SplineGrid>) -> Option<usize> {
    let mut n: usize = 0;
    for (i, p) in widths.windows(2).enumerate() {
        let (a, b) = (p[0], p[1]);
        let layer = match variant {
            Variant::Mlp => {
                let lin = a.checked_mul(b)?.checked_add(b)?;
                if i + 2 < widths.len() {
                    lin.checked_add(4 * b)?
                } else {
                    lin
                }
            }
            Variant::Kan => a.checked_mul(b)?.checked_mul(1 + grid?.num_basis())?,
        };
        n = n.checked_add(layer)?;
    }
    n.checked_mul(4)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<FemModel<f32>> {
    let mut r = ByteReader::new("FEMW", bytes);
    r.magic(FEMW_MAGIC)?;
    let version = r.u16()?;
    if version != FEMW_VERSION {
        return Err(Error::Version {
            format: "FEMW",
            found: version,
            supported: FEMW_VERSION.to_string(),
        });
    }
    let tag = r.u8()?;
    let variant =
        Variant::from_tag(tag).ok_or_else(|| r.malformed(&format!("unknown variant tag {tag}")))?;
    let dim = r.u32()? as usize;
    let count = r.u32()? as usize;
    if !(2..=64).contains(&count) {
        return Err(r.malformed(&format!("implausible width count {count}")));
    }
    let widths = (0..count)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    if widths[0] != dim || widths[count - 1] != dim || widths.contains(&0) {
        return Err(r.malformed(&format!(
            "widths {widths:?} inconsistent with embedding_dim {dim}"
        )));
    }
    let grid = match variant {
        Variant::Kan => {
            let g = r.u32()? as usize;
            let k = r.u32()? as usize;
            let lo = r.f32s(2)?;
            let grid = SplineGrid::new(g, k, lo[0] as f64, lo[1] as f64)
                .map_err(|e| r.malformed(&e.to_string()))?;
            Some(grid)
        }
        Variant::Mlp => None,
    };
    let body = body_len(variant, &widths, grid.as_ref())
        .ok_or_else(|| r.malformed("parameter size overflow"))?;
    r.expect_remaining_and_verify(body)?;

    let mat = |r: &mut ByteReader<'_>, rows: usize, cols: usize| -> Result<Matrix<f32>> {
        Matrix::from_vec(rows, cols, r.f32s(rows * cols)?)
    };
    let net = match variant {
        Variant::Mlp => {
            let n = widths.len() - 1;
            let mut blocks = Vec::with_capacity(n - 1);
            for i in 0..n - 1 {
                let (a, b) = (widths[i], widths[i + 1]);
                let weight = mat(&mut r, b, a)?;
                let bias = r.f32s(b)?;
                let mut norm = BatchNorm1d::new(b);
                norm.gamma = r.f32s(b)?;
                norm.beta = r.f32s(b)?;
                norm.running_mean = r.f32s(b)?;
                norm.running_var = r.f32s(b)?;
                blocks.push(MlpBlock {
                    linear: LinearLayer::from_parts(weight, bias)?,
                    norm,
                });
            }
            let weight = mat(&mut r, widths[n], widths[n - 1])?;
            let bias = r.f32s(widths[n])?;
            FemNet::Mlp(MlpNetwork {
                blocks,
                head: LinearLayer::from_parts(weight, bias)?,
            })
        }
        Variant::Kan => {
            let grid = grid.expect("parsed above");
            let nb = grid.num_basis();
            let mut layers = Vec::with_capacity(widths.len() - 1);
            for p in widths.windows(2) {
                let base = mat(&mut r, p[1], p[0])?;
                let spline = mat(&mut r, p[1], p[0] * nb)?;
                layers.push(KanLayer::from_parts(grid, base, spline)?);
            }
            FemNet::Kan(KanNetwork::from_layers(layers)?)
        }
    };
    FemModel::from_net(net)
}

pub fn save_model<T: Scalar>(model: &FemModel<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FemModel<f32>> {
    model_from_bytes(&std::fs::read(path)?)
}
