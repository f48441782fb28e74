//! Binary snapshot file format for cell-centered fields.
//!
//! Layout, all little-endian:
//! magic `KSLG`, u16 version (= 1), u8 dims, one u32 cell count per axis,
//! f64 time, then the cell values as f64 in row-major order (x fastest).
//!
//! Domain extents are not stored; they come from the experiment
//! configuration when a snapshot is bound to a grid.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const MAGIC: [u8; 4] = *b"KSLG";
pub const VERSION: u16 = 1;

/// Raw decoded snapshot, not yet bound to a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dims: u8,
    pub cells: Vec<u32>,
    pub time: f64,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn from_field(field: &Field, time: f64) -> Self {
        let g = field.grid;
        Snapshot {
            dims: g.dims() as u8,
            cells: g.cells().iter().map(|&c| c as u32).collect(),
            time,
            values: field.values.clone(),
        }
    }

    /// Binds the stored values to a grid carrying the extents.
    pub fn into_field(self, grid: &Grid) -> Result<Field> {
        if grid.dims() != self.dims as usize {
            return Err(Error::Snapshot(format!(
                "snapshot dims {} do not match grid dims {}",
                self.dims,
                grid.dims()
            )));
        }
        for (ax, (&want, &have)) in grid
            .cells()
            .iter()
            .zip(&self.cells)
            .enumerate()
        {
            if want as u32 != have {
                return Err(Error::Snapshot(format!(
                    "snapshot cell count {have} on axis {ax} does not match grid {want}"
                )));
            }
        }
        grid.field_from_values(self.values)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf =
            Vec::with_capacity(4 + 2 + 1 + 4 * self.cells.len() + 8 + 8 * self.values.len());
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.push(self.dims);
        for &c in &self.cells {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        buf.extend_from_slice(&self.time.to_le_bytes());
        for &v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    pub fn decode(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(Error::Snapshot(format!("bad magic {magic:?}")));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        let version = u16::from_le_bytes(b2);
        if version != VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let dims = b1[0];
        if dims != 1 && dims != 2 {
            return Err(Error::Snapshot(format!("bad dims {dims}")));
        }
        let mut cells = Vec::with_capacity(dims as usize);
        let mut count = 1usize;
        for _ in 0..dims {
            let mut b4 = [0u8; 4];
            r.read_exact(&mut b4)?;
            let c = u32::from_le_bytes(b4);
            if c == 0 {
                return Err(Error::Snapshot("zero cell count".into()));
            }
            cells.push(c);
            count = count
                .checked_mul(c as usize)
                .ok_or_else(|| Error::Snapshot("cell count overflow".into()))?;
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let time = f64::from_le_bytes(b8);
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        // Trailing bytes mean a corrupt writer; reject rather than ignore.
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(Error::Snapshot("trailing bytes after cell values".into()));
        }
        Ok(Snapshot {
            dims,
            cells,
            time,
            values,
        })
    }
}

pub fn write_snapshot(path: impl AsRef<Path>, field: &Field, time: f64) -> Result<()> {
    let snap = Snapshot::from_field(field, time);
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&snap.encode())?;
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Snapshot> {
    Snapshot::decode(BufReader::new(File::open(path)?))
}
