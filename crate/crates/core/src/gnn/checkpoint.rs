//! Parameter checkpoint file (`MAWT`, version 1).
//!
//! ```text
//! frame: "MAWT" | u32 version | u64 payload_len | payload | u32 crc32(payload)
//!
//! payload:
//!   u64 hidden, u64 layers, f64 dropout, f64 epsilon,
//!   u8 activation (0 relu, 1 identity), u8 edge_update, u8 output_mask,
//!   u8 residual, u64 node_in, u64 edge_in,
//!   u64 n_params, n_params × f64 (raw bits, parameter layout order)
//! ```

use std::path::Path;

use super::{Activation, GatedGcnParams, GnnHyper, ParamLayout};
use crate::binfmt::{frame, unframe, Reader, Writer};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MAWT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(params: &GatedGcnParams) -> Vec<u8> {
    let h = &params.hyper;
    let mut w = Writer::new();
    w.len(h.hidden);
    w.len(h.layers);
    w.f64(h.dropout);
    w.f64(h.epsilon);
    w.u8(match h.activation {
        Activation::Relu => 0,
        Activation::Identity => 1,
    });
    w.u8(h.edge_update as u8);
    w.u8(h.output_mask as u8);
    w.u8(h.residual as u8);
    w.len(params.node_in);
    w.len(params.edge_in);
    w.f64s(&params.values);
    frame(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, &w.0)
}

fn flag(r: &mut Reader<'_>, what: &str) -> Result<bool> {
    match r.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(Error::Integrity(format!("{what} flag has value {v}"))),
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<GatedGcnParams> {
    let payload = unframe(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, bytes)?;
    let mut r = Reader::new(payload);
    let hidden = r.u64()? as usize;
    let layers = r.u64()? as usize;
    let dropout = r.f64()?;
    let epsilon = r.f64()?;
    let activation = match r.u8()? {
        0 => Activation::Relu,
        1 => Activation::Identity,
        v => return Err(Error::Integrity(format!("unknown activation code {v}"))),
    };
    let hyper = GnnHyper {
        hidden,
        layers,
        dropout,
        epsilon,
        activation,
        edge_update: flag(&mut r, "edge_update")?,
        output_mask: flag(&mut r, "output_mask")?,
        residual: flag(&mut r, "residual")?,
    };
    hyper.validate().map_err(|e| Error::Integrity(format!("stored hyperparameters: {e}")))?;
    let node_in = r.u64()? as usize;
    let edge_in = r.u64()? as usize;
    let values = r.f64s()?;
    r.finish()?;
    let expected = ParamLayout::new(&hyper, node_in, edge_in).total();
    if values.len() != expected {
        return Err(Error::Integrity(format!(
            "{} stored parameters, layout needs {expected}",
            values.len()
        )));
    }
    Ok(GatedGcnParams {
        hyper,
        node_in,
        edge_in,
        values,
    })
}

pub fn write_checkpoint(params: &GatedGcnParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<GatedGcnParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
