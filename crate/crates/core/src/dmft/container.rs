//! Self-describing binary container for kernels.
//!
//! ```text
//! magic "DMFTKERN" | version u32 | record count u32
//! per record:
//!   name (u32 length + UTF-8) | kind u8 | endianness u8 (1 = little)
//!   points u64 | rows u64 | cols u64 | horizon f64 | delta f64
//!   payload: row-major f64
//! ```
//! Integers and the payload are little-endian. Two-time kernels store the
//! full `(P·rows) × (P·cols)` matrix, per-time arrays `P` blocks, and plain
//! matrices a single block.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;

use super::grid::TimeGrid;
use super::kernel::{DMFTState, KernelKind, ThetaKernels, TwoTimeKernel, XiKernels};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DMFTKERN";
const VERSION: u32 = 1;
const LITTLE_ENDIAN: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Kernel(TwoTimeKernel),
    /// One block per grid time.
    PerTime {
        grid: TimeGrid,
        blocks: Vec<DMatrix<f64>>,
    },
    Matrix(DMatrix<f64>),
}

impl Record {
    fn kind_tag(&self) -> u8 {
        match self {
            Record::Kernel(k) => match k.kind() {
                KernelKind::Covariance => 0,
                KernelKind::Response => 1,
            },
            Record::PerTime { .. } => 2,
            Record::Matrix(_) => 3,
        }
    }
}

fn write_row_major<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_f64::<LittleEndian>(m[(i, j)])?;
        }
    }
    Ok(())
}

fn read_row_major<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut data = vec![0.0; rows * cols];
    r.read_f64_into::<LittleEndian>(&mut data)?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_records<W: Write>(w: &mut W, records: &[(String, Record)]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(records.len() as u32)?;
    for (name, rec) in records {
        w.write_u32::<LittleEndian>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        w.write_u8(rec.kind_tag())?;
        w.write_u8(LITTLE_ENDIAN)?;
        let (grid, rows, cols) = match rec {
            Record::Kernel(k) => (Some(*k.grid()), k.rows(), k.cols()),
            Record::PerTime { grid, blocks } => {
                let (r, c) = blocks.first().map_or((0, 0), |b| b.shape());
                (Some(*grid), r, c)
            }
            Record::Matrix(m) => (None, m.nrows(), m.ncols()),
        };
        w.write_u64::<LittleEndian>(grid.map_or(1, |g| g.points()) as u64)?;
        w.write_u64::<LittleEndian>(rows as u64)?;
        w.write_u64::<LittleEndian>(cols as u64)?;
        w.write_f64::<LittleEndian>(grid.map_or(0.0, |g| g.horizon()))?;
        w.write_f64::<LittleEndian>(grid.map_or(0.0, |g| g.delta()))?;
        match rec {
            Record::Kernel(k) => write_row_major(w, k.matrix())?,
            Record::PerTime { blocks, .. } => {
                for b in blocks {
                    write_row_major(w, b)?;
                }
            }
            Record::Matrix(m) => write_row_major(w, m)?,
        }
    }
    Ok(())
}

pub fn read_records<R: Read>(r: &mut R) -> Result<Vec<(String, Record)>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a kernel container".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let count = r.read_u32::<LittleEndian>()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = r.read_u32::<LittleEndian>()? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
        let kind = r.read_u8()?;
        if r.read_u8()? != LITTLE_ENDIAN {
            return Err(Error::Format(format!("record {name}: unsupported endianness")));
        }
        let points = r.read_u64::<LittleEndian>()? as usize;
        let rows = r.read_u64::<LittleEndian>()? as usize;
        let cols = r.read_u64::<LittleEndian>()? as usize;
        let horizon = r.read_f64::<LittleEndian>()?;
        let delta = r.read_f64::<LittleEndian>()?;
        let grid = || -> Result<TimeGrid> {
            let g = TimeGrid::new(horizon, delta)?;
            if g.points() != points {
                return Err(Error::Format(format!("record {name}: grid/point count mismatch")));
            }
            Ok(g)
        };
        let rec = match kind {
            0 | 1 => {
                let kk = if kind == 0 { KernelKind::Covariance } else { KernelKind::Response };
                let m = read_row_major(r, points * rows, points * cols)?;
                Record::Kernel(TwoTimeKernel::from_matrix(grid()?, rows, cols, kk, m)?)
            }
            2 => {
                let g = grid()?;
                let blocks = (0..points).map(|_| read_row_major(r, rows, cols)).collect::<Result<Vec<_>>>()?;
                Record::PerTime { grid: g, blocks }
            }
            3 => Record::Matrix(read_row_major(r, rows, cols)?),
            other => return Err(Error::Format(format!("record {name}: unknown kind {other}"))),
        };
        out.push((name, rec));
    }
    Ok(out)
}

fn state_records(state: &DMFTState) -> Vec<(String, Record)> {
    let grid = *state.theta.grid();
    vec![
        ("C_theta".into(), Record::Kernel(state.theta.c.clone())),
        ("C_theta_star".into(), Record::PerTime { grid, blocks: state.theta.c_star.clone() }),
        ("C_star_star".into(), Record::Matrix(state.theta.c_star_star.clone())),
        ("R_theta".into(), Record::Kernel(state.theta.r.clone())),
        ("C_f".into(), Record::Kernel(state.xi.c_f.clone())),
        ("R_f".into(), Record::Kernel(state.xi.r_f.clone())),
        ("R_f_star".into(), Record::PerTime { grid, blocks: state.xi.r_f_star.clone() }),
        ("Gamma".into(), Record::PerTime { grid, blocks: state.xi.gamma.clone() }),
    ]
}

pub fn write_state<W: Write>(w: &mut W, state: &DMFTState) -> Result<()> {
    write_records(w, &state_records(state))
}

pub fn read_state<R: Read>(r: &mut R) -> Result<DMFTState> {
    let mut records = read_records(r)?;
    let mut take = |name: &str| -> Result<Record> {
        let i = records
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Format(format!("missing record {name}")))?;
        Ok(records.swap_remove(i).1)
    };
    let kernel = |r: Record, name: &str| match r {
        Record::Kernel(k) => Ok(k),
        _ => Err(Error::Format(format!("record {name} is not a two-time kernel"))),
    };
    let per_time = |r: Record, name: &str| match r {
        Record::PerTime { blocks, .. } => Ok(blocks),
        _ => Err(Error::Format(format!("record {name} is not a per-time array"))),
    };
    let theta = ThetaKernels {
        c: kernel(take("C_theta")?, "C_theta")?,
        c_star: per_time(take("C_theta_star")?, "C_theta_star")?,
        c_star_star: match take("C_star_star")? {
            Record::Matrix(m) => m,
            _ => return Err(Error::Format("record C_star_star is not a matrix".into())),
        },
        r: kernel(take("R_theta")?, "R_theta")?,
    };
    let xi = XiKernels {
        c_f: kernel(take("C_f")?, "C_f")?,
        r_f: kernel(take("R_f")?, "R_f")?,
        r_f_star: per_time(take("R_f_star")?, "R_f_star")?,
        gamma: per_time(take("Gamma")?, "Gamma")?,
    };
    Ok(DMFTState { theta, xi })
}

pub fn save_state(path: &Path, state: &DMFTState) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_state(&mut w, state)?;
    w.flush()?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<DMFTState> {
    read_state(&mut BufReader::new(File::open(path)?))
}
