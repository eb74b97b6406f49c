//! Binary checkpoints of a [`NetState`], stored in the named-blob container
//! of [`crate::dump`] under the magic `AFCK`.
//!
//! Parameters are stored as `param.<name>` with the shapes reported by
//! [`Tensor::shape`]; running batch-norm statistics as `bn.<name>`;
//! `meta.phase_mode` is 0 (unit), 1 (relaxed) or 2 (fixed LoS),
//! `meta.ris_sizes` lists the surface sizes and `meta.frozen_phases` holds
//! the frozen coefficients when present.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::state::{BnRunning, NetState, Params, PhaseMode, PhaseParams, Tensor};
use crate::channel::{ReflectionMode, RisPhases};
use crate::dump::{decode, encode, find, Blob};
use crate::error::{Error, Result};
use crate::numerics::CVector;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"AFCK";

fn tensor_blob(name: String, t: &dyn Tensor) -> Blob {
    let mut data = Vec::with_capacity(t.numel());
    t.write(&mut data);
    Blob {
        name,
        shape: t.shape(),
        data,
    }
}

fn vector(blobs: &[Blob], name: &str) -> Result<DVector<f64>> {
    Ok(DVector::from_vec(find(blobs, name)?.data.clone()))
}

fn real_matrix(blobs: &[Blob], name: &str) -> Result<DMatrix<f64>> {
    let b = find(blobs, name)?;
    match b.shape[..] {
        [r, c] => Ok(DMatrix::from_row_slice(r, c, &b.data)),
        _ => Err(Error::Format(format!(
            "{name}: expected a matrix, got shape {:?}",
            b.shape
        ))),
    }
}

pub fn to_blobs(state: &NetState) -> Vec<Blob> {
    let mut out: Vec<Blob> = state
        .params
        .tensors()
        .into_iter()
        .map(|(name, t)| tensor_blob(format!("param.{name}"), t))
        .collect();
    let r = &state.bn_running;
    for (name, v) in [
        ("mean_re", &r.mean_re),
        ("mean_im", &r.mean_im),
        ("var_re", &r.var_re),
        ("var_im", &r.var_im),
    ] {
        out.push(tensor_blob(format!("bn.{name}"), v));
    }
    let mode = match state.phase_mode {
        PhaseMode::Unit => 0.0,
        PhaseMode::Relaxed => 1.0,
        PhaseMode::FixedLos => 2.0,
    };
    out.push(Blob::scalar("meta.phase_mode", mode));
    out.push(Blob {
        name: "meta.ris_sizes".into(),
        shape: vec![state.ris_sizes.len()],
        data: state.ris_sizes.iter().map(|&m| m as f64).collect(),
    });
    if let Some(p) = &state.frozen_phases {
        out.push(Blob::from_cvector("meta.frozen_phases", &p.flat()));
    }
    out
}

pub fn from_blobs(blobs: &[Blob]) -> Result<NetState> {
    let phase_mode = match find(blobs, "meta.phase_mode")?.as_scalar()? as i64 {
        0 => PhaseMode::Unit,
        1 => PhaseMode::Relaxed,
        2 => PhaseMode::FixedLos,
        other => return Err(Error::Format(format!("unknown phase mode {other}"))),
    };
    let ris_sizes: Vec<usize> = find(blobs, "meta.ris_sizes")?
        .data
        .iter()
        .map(|&m| m as usize)
        .collect();
    let p = |name: &str| format!("param.{name}");
    let phases = match phase_mode {
        PhaseMode::Unit => PhaseParams::Angles(vector(blobs, &p("phases"))?),
        PhaseMode::Relaxed => PhaseParams::Free(find(blobs, &p("phases"))?.to_cvector()?),
        PhaseMode::FixedLos => PhaseParams::Frozen,
    };
    let frozen_phases = match blobs.iter().find(|b| b.name == "meta.frozen_phases") {
        Some(b) => {
            let flat = b.to_cvector()?;
            let mut at = 0;
            let values: Vec<CVector<f64>> = ris_sizes
                .iter()
                .map(|&m| {
                    let v = flat.rows(at, m).into_owned();
                    at += m;
                    v
                })
                .collect();
            Some(RisPhases::new(ReflectionMode::UnitModulus, values)?)
        }
        None => None,
    };
    let params = Params {
        conv_w: vector(blobs, &p("conv_w"))?,
        conv_b: vector(blobs, &p("conv_b"))?,
        fc_w: find(blobs, &p("fc_w"))?.to_cmatrix()?,
        fc_b: find(blobs, &p("fc_b"))?.to_cvector()?,
        bn_gamma_re: vector(blobs, &p("bn_gamma_re"))?,
        bn_gamma_im: vector(blobs, &p("bn_gamma_im"))?,
        bn_beta_re: vector(blobs, &p("bn_beta_re"))?,
        bn_beta_im: vector(blobs, &p("bn_beta_im"))?,
        f1: find(blobs, &p("f1"))?.to_cmatrix()?,
        f2: find(blobs, &p("f2"))?.to_cmatrix()?,
        phases,
        p_tx: find(blobs, &p("p_tx"))?.as_scalar()?,
        out_w: real_matrix(blobs, &p("out_w"))?,
        out_b: vector(blobs, &p("out_b"))?,
    };
    if !params.all_finite() {
        return Err(Error::NonFinite("checkpoint parameters".into()));
    }
    Ok(NetState {
        params,
        bn_running: BnRunning {
            mean_re: vector(blobs, "bn.mean_re")?,
            mean_im: vector(blobs, "bn.mean_im")?,
            var_re: vector(blobs, "bn.var_re")?,
            var_im: vector(blobs, "bn.var_im")?,
        },
        phase_mode,
        ris_sizes,
        frozen_phases,
    })
}

pub fn save(path: impl AsRef<Path>, state: &NetState) -> Result<()> {
    std::fs::write(path, encode(CHECKPOINT_MAGIC, &to_blobs(state)))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<NetState> {
    from_blobs(&decode(CHECKPOINT_MAGIC, &std::fs::read(path)?)?)
}
