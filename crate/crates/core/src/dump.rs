//! Binary and JSON dumps of channels and transmission parameters, plus the
//! named-blob container the checkpoint format is built on.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! magic    [u8; 4]
//! version  u32
//! count    u32
//! count × {
//!     name_len u32, name [u8; name_len] (UTF-8)
//!     ndim     u32, dims [u64; ndim]
//!     data     [f64; prod(dims)]           row-major
//! }
//! ```
//!
//! Complex matrices are stored with shape `[rows, cols, 2]`, i.e. row-major
//! `(re, im)` pairs.

use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, ReflectionMode, RicianFactor, RisLink, RisPhases};
use crate::emulator::TransmissionParams;
use crate::error::{Error, Result};
use crate::numerics::{CMatrix, CVector};

pub const CHANNEL_MAGIC: [u8; 4] = *b"AFCH";
pub const PARAMS_MAGIC: [u8; 4] = *b"AFTP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Blob {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Format(format!(
                "blob {name}: shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        Ok(Blob { name, shape, data })
    }

    pub fn scalar(name: impl Into<String>, x: f64) -> Self {
        Blob {
            name: name.into(),
            shape: vec![1],
            data: vec![x],
        }
    }

    pub fn from_cmatrix(name: impl Into<String>, m: &CMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(2 * m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)].re);
                data.push(m[(r, c)].im);
            }
        }
        Blob {
            name: name.into(),
            shape: vec![m.nrows(), m.ncols(), 2],
            data,
        }
    }

    pub fn to_cmatrix(&self) -> Result<CMatrix<f64>> {
        match self.shape[..] {
            [rows, cols, 2] => Ok(CMatrix::from_fn(rows, cols, |r, c| {
                let k = 2 * (r * cols + c);
                Complex::new(self.data[k], self.data[k + 1])
            })),
            _ => Err(Error::Format(format!(
                "blob {} with shape {:?} is not a complex matrix",
                self.name, self.shape
            ))),
        }
    }

    pub fn from_cvector(name: impl Into<String>, v: &CVector<f64>) -> Self {
        let mut b = Blob::from_cmatrix(name, &CMatrix::from_column_slice(v.len(), 1, v.as_slice()));
        b.shape = vec![v.len(), 2];
        b
    }

    pub fn to_cvector(&self) -> Result<CVector<f64>> {
        match self.shape[..] {
            [n, 2] => Ok(CVector::from_fn(n, |i, _| {
                Complex::new(self.data[2 * i], self.data[2 * i + 1])
            })),
            _ => Err(Error::Format(format!(
                "blob {} with shape {:?} is not a complex vector",
                self.name, self.shape
            ))),
        }
    }

    pub fn as_scalar(&self) -> Result<f64> {
        match self.data[..] {
            [x] => Ok(x),
            _ => Err(Error::Format(format!("blob {} is not a scalar", self.name))),
        }
    }
}

pub fn encode(magic: [u8; 4], blobs: &[Blob]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(blobs.len() as u32).to_le_bytes());
    for b in blobs {
        out.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
        out.extend_from_slice(b.name.as_bytes());
        out.extend_from_slice(&(b.shape.len() as u32).to_le_bytes());
        for &d in &b.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &b.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::TruncatedFile(format!("need {n} bytes at offset {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(magic: [u8; 4], bytes: &[u8]) -> Result<Vec<Blob>> {
    let mut r = Reader { bytes, at: 0 };
    let found = r.take(4)?;
    if found != magic {
        return Err(Error::BadMagic {
            found: u32::from_be_bytes(found.try_into().unwrap()),
            expected: u32::from_be_bytes(magic),
        });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut blobs = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::Format(format!("blob name: {e}")))?
            .to_owned();
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let total = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&t| t.saturating_mul(8) <= bytes.len())
            .ok_or_else(|| Error::Format(format!("blob {name}: implausible shape {shape:?}")))?;
        let data = (0..total).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        blobs.push(Blob { name, shape, data });
    }
    if r.at != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    Ok(blobs)
}

pub fn find<'a>(blobs: &'a [Blob], name: &str) -> Result<&'a Blob> {
    blobs
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::Format(format!("missing blob {name}")))
}

fn rician_code(k: RicianFactor) -> f64 {
    match k {
        RicianFactor::PureLos => f64::INFINITY,
        RicianFactor::Rayleigh => 0.0,
        RicianFactor::Linear(x) => x,
    }
}

fn rician_from_code(x: f64) -> RicianFactor {
    if x == f64::INFINITY {
        RicianFactor::PureLos
    } else if x == 0.0 {
        RicianFactor::Rayleigh
    } else {
        RicianFactor::Linear(x)
    }
}

pub fn channel_blobs(ch: &ChannelRealization<f64>) -> Vec<Blob> {
    let mut out = vec![
        Blob::scalar("n", ch.n() as f64),
        Blob::scalar("rician_k", rician_code(ch.rician())),
        Blob::scalar("num_ris", ch.links().len() as f64),
    ];
    for (i, l) in ch.links().iter().enumerate() {
        out.push(Blob::from_cmatrix(format!("ris{i}.tx_to_ris"), &l.tx_to_ris));
        out.push(Blob::from_cmatrix(format!("ris{i}.ris_to_rx"), &l.ris_to_rx));
        out.push(Blob::from_cmatrix(format!("ris{i}.tx_to_ris_los"), &l.tx_to_ris_los));
        out.push(Blob::from_cmatrix(format!("ris{i}.ris_to_rx_los"), &l.ris_to_rx_los));
    }
    out
}

pub fn channel_from_blobs(blobs: &[Blob]) -> Result<ChannelRealization<f64>> {
    let n = find(blobs, "n")?.as_scalar()? as usize;
    let k = rician_from_code(find(blobs, "rician_k")?.as_scalar()?);
    let count = find(blobs, "num_ris")?.as_scalar()? as usize;
    let links = (0..count)
        .map(|i| {
            let get = |s: &str| find(blobs, &format!("ris{i}.{s}"))?.to_cmatrix();
            Ok(RisLink {
                tx_to_ris: get("tx_to_ris")?,
                ris_to_rx: get("ris_to_rx")?,
                tx_to_ris_los: get("tx_to_ris_los")?,
                ris_to_rx_los: get("ris_to_rx_los")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ChannelRealization::from_links(n, k, links)
}

pub fn params_blobs(p: &TransmissionParams<f64>) -> Vec<Blob> {
    let relaxed = matches!(p.phases.mode(), ReflectionMode::Relaxed);
    let mut out = vec![
        Blob::from_cmatrix("f1", &p.f1),
        Blob::from_cmatrix("f2", &p.f2),
        Blob::scalar("relaxed", if relaxed { 1.0 } else { 0.0 }),
        Blob::scalar("num_ris", p.phases.values().len() as f64),
    ];
    for (i, v) in p.phases.values().iter().enumerate() {
        out.push(Blob::from_cvector(format!("ris{i}.v"), v));
    }
    out
}

pub fn params_from_blobs(blobs: &[Blob]) -> Result<TransmissionParams<f64>> {
    let mode = if find(blobs, "relaxed")?.as_scalar()? != 0.0 {
        ReflectionMode::Relaxed
    } else {
        ReflectionMode::UnitModulus
    };
    let count = find(blobs, "num_ris")?.as_scalar()? as usize;
    let values = (0..count)
        .map(|i| find(blobs, &format!("ris{i}.v"))?.to_cvector())
        .collect::<Result<Vec<_>>>()?;
    Ok(TransmissionParams {
        f1: find(blobs, "f1")?.to_cmatrix()?,
        f2: find(blobs, "f2")?.to_cmatrix()?,
        phases: RisPhases::new(mode, values)?,
    })
}

/// Row-major complex matrix for the JSON dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonMatrix {
    pub rows: usize,
    pub cols: usize,
    /// `[re, im]` pairs in row-major order.
    pub data: Vec<[f64; 2]>,
}

impl From<&CMatrix<f64>> for JsonMatrix {
    fn from(m: &CMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push([m[(r, c)].re, m[(r, c)].im]);
            }
        }
        JsonMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl JsonMatrix {
    pub fn to_cmatrix(&self) -> Result<CMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Format(format!(
                "{}x{} matrix with {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(CMatrix::from_fn(self.rows, self.cols, |r, c| {
            let [re, im] = self.data[r * self.cols + c];
            Complex::new(re, im)
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonLink {
    pub tx_to_ris: JsonMatrix,
    pub ris_to_rx: JsonMatrix,
    pub tx_to_ris_los: JsonMatrix,
    pub ris_to_rx_los: JsonMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonChannel {
    pub n: usize,
    /// Linear Rician factor; `null` encodes pure line-of-sight.
    pub rician_k: Option<f64>,
    pub links: Vec<JsonLink>,
}

impl From<&ChannelRealization<f64>> for JsonChannel {
    fn from(ch: &ChannelRealization<f64>) -> Self {
        JsonChannel {
            n: ch.n(),
            rician_k: match ch.rician() {
                RicianFactor::PureLos => None,
                k => Some(rician_code(k)),
            },
            links: ch
                .links()
                .iter()
                .map(|l| JsonLink {
                    tx_to_ris: (&l.tx_to_ris).into(),
                    ris_to_rx: (&l.ris_to_rx).into(),
                    tx_to_ris_los: (&l.tx_to_ris_los).into(),
                    ris_to_rx_los: (&l.ris_to_rx_los).into(),
                })
                .collect(),
        }
    }
}

impl JsonChannel {
    pub fn to_channel(&self) -> Result<ChannelRealization<f64>> {
        let links = self
            .links
            .iter()
            .map(|l| {
                Ok(RisLink {
                    tx_to_ris: l.tx_to_ris.to_cmatrix()?,
                    ris_to_rx: l.ris_to_rx.to_cmatrix()?,
                    tx_to_ris_los: l.tx_to_ris_los.to_cmatrix()?,
                    ris_to_rx_los: l.ris_to_rx_los.to_cmatrix()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let k = self.rician_k.map_or(RicianFactor::PureLos, rician_from_code);
        ChannelRealization::from_links(self.n, k, links)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonParams {
    pub f1: JsonMatrix,
    pub f2: JsonMatrix,
    pub relaxed: bool,
    /// One `[re, im]` list per RIS.
    pub phases: Vec<Vec<[f64; 2]>>,
}

impl From<&TransmissionParams<f64>> for JsonParams {
    fn from(p: &TransmissionParams<f64>) -> Self {
        JsonParams {
            f1: (&p.f1).into(),
            f2: (&p.f2).into(),
            relaxed: matches!(p.phases.mode(), ReflectionMode::Relaxed),
            phases: p
                .phases
                .values()
                .iter()
                .map(|v| v.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }
}

impl JsonParams {
    pub fn to_params(&self) -> Result<TransmissionParams<f64>> {
        let mode = if self.relaxed {
            ReflectionMode::Relaxed
        } else {
            ReflectionMode::UnitModulus
        };
        let values = self
            .phases
            .iter()
            .map(|v| CVector::from_iterator(v.len(), v.iter().map(|&[re, im]| Complex::new(re, im))))
            .collect();
        Ok(TransmissionParams {
            f1: self.f1.to_cmatrix()?,
            f2: self.f2.to_cmatrix()?,
            phases: RisPhases::new(mode, values)?,
        })
    }
}

pub fn write_channel(path: impl AsRef<Path>, ch: &ChannelRealization<f64>) -> Result<()> {
    std::fs::write(path, encode(CHANNEL_MAGIC, &channel_blobs(ch)))?;
    Ok(())
}

pub fn read_channel(path: impl AsRef<Path>) -> Result<ChannelRealization<f64>> {
    channel_from_blobs(&decode(CHANNEL_MAGIC, &std::fs::read(path)?)?)
}

pub fn write_params(path: impl AsRef<Path>, p: &TransmissionParams<f64>) -> Result<()> {
    std::fs::write(path, encode(PARAMS_MAGIC, &params_blobs(p)))?;
    Ok(())
}

pub fn read_params(path: impl AsRef<Path>) -> Result<TransmissionParams<f64>> {
    params_from_blobs(&decode(PARAMS_MAGIC, &std::fs::read(path)?)?)
}
