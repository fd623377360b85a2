//! CSV output and binary snapshots.
//!
//! Diagnostics CSV columns: `step,t,energy,kinetic_energy,grad_max,iterations,residual`.
//! Error-table CSV columns: `h,err_d,err_w,err_energy,rate_d,rate_w,rate_energy`,
//! rates empty on the first row. Floats are written with 17 significant digits.
//!
//! Snapshot layout (all little-endian):
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0  | 8  | magic `WAVEMAP\0` |
//! | 8  | 4  | version (`u32`, currently 1) |
//! | 12 | 4  | dim (`u32`) |
//! | 16 | 8  | M (`u64`) |
//! | 24 | 4  | boundary (`u32`: 0 periodic, 1 neumann) |
//! | 28 | 4  | reserved, zero |
//! | 32 | 24 | origin (3 × `f64`) |
//! | 56 | 8  | extent (`f64`) |
//! | 64 | 8  | t (`f64`) |
//! | 72 | 8  | step index (`u64`) |
//! | 80 | 24·N | d, one `f64` triplet per node in row-major order |
//! |    | 24·N | w, same layout |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::analytic::ErrorSample;
use crate::error::{Error, Result};
use crate::fixedpoint::{SolverState, StepReport};
use crate::grid::{Boundary, Grid, VectorField};
use crate::integrator::{Diagnostics, DiagnosticsSink, StepObserver};
use crate::scalar::{Scalar, Vec3};
use crate::scenario::ErrorTable;

pub const DIAGNOSTICS_HEADER: &str = "step,t,energy,kinetic_energy,grad_max,iterations,residual";
pub const ERROR_TABLE_HEADER: &str = "h,err_d,err_w,err_energy,rate_d,rate_w,rate_energy";
pub const ERROR_HISTORY_HEADER: &str = "t,err_d,err_w,err_energy";

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"WAVEMAP\0";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const SNAPSHOT_HEADER_LEN: usize = 80;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Streams diagnostics rows to a CSV file as they arrive.
pub struct DiagnosticsCsv {
    path: PathBuf,
    out: BufWriter<File>,
    rows: usize,
}

impl DiagnosticsCsv {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut out = create(&path)?;
        writeln!(out, "{DIAGNOSTICS_HEADER}").map_err(|e| Error::io(&path, e))?;
        Ok(DiagnosticsCsv { path, out, rows: 0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

impl<T: Scalar> DiagnosticsSink<T> for DiagnosticsCsv {
    fn record(&mut self, r: &Diagnostics<T>) -> Result<()> {
        self.rows += 1;
        writeln!(
            self.out,
            "{},{},{},{},{},{},{}",
            r.step,
            num(r.t.to_f64_lossy()),
            num(r.energy.to_f64_lossy()),
            num(r.kinetic_energy.to_f64_lossy()),
            num(r.grad_max.to_f64_lossy()),
            r.iterations,
            num(r.residual.to_f64_lossy())
        )
        .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_diagnostics_csv<T: Scalar>(rows: &[Diagnostics<T>], path: &Path) -> Result<()> {
    let mut w = DiagnosticsCsv::create(path)?;
    for r in rows {
        w.record(r)?;
    }
    w.finish()
}

pub fn write_error_table_csv(table: &ErrorTable, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{ERROR_TABLE_HEADER}").map_err(io)?;
    for (row, rate) in table.rows.iter().zip(table.rates()) {
        let rates = match rate {
            Some([a, b, c]) => format!("{},{},{}", num(a), num(b), num(c)),
            None => ",,".to_string(),
        };
        writeln!(out, "{},{},{},{},{rates}", num(row.h), num(row.err_d), num(row.err_w), num(row.err_energy)).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_error_history_csv(samples: &[ErrorSample], path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{ERROR_HISTORY_HEADER}").map_err(io)?;
    for s in samples {
        writeln!(out, "{},{},{},{}", num(s.t), num(s.err_d), num(s.err_w), num(s.err_energy)).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Serialises a state in the snapshot format; values are widened to `f64`.
pub fn encode_snapshot<T: Scalar>(state: &SolverState<T>) -> Vec<u8> {
    let g = state.grid();
    let n = g.node_count();
    let mut buf = Vec::with_capacity(SNAPSHOT_HEADER_LEN + 48 * n);
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(g.m() as u64).to_le_bytes());
    let bc: u32 = match g.boundary() {
        Boundary::Periodic => 0,
        Boundary::Neumann => 1,
    };
    buf.extend_from_slice(&bc.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for o in g.origin() {
        buf.extend_from_slice(&o.to_f64_lossy().to_le_bytes());
    }
    buf.extend_from_slice(&g.extent().to_f64_lossy().to_le_bytes());
    buf.extend_from_slice(&state.t().to_f64_lossy().to_le_bytes());
    buf.extend_from_slice(&state.step_index().to_le_bytes());
    for field in [state.d(), state.w()] {
        for v in field.values() {
            for c in v.0 {
                buf.extend_from_slice(&c.to_f64_lossy().to_le_bytes());
            }
        }
    }
    buf
}

pub fn write_snapshot<T: Scalar>(state: &SolverState<T>, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(&encode_snapshot(state)).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn fail<X>(&self, message: impl Into<String>) -> Result<X> {
        Err(Error::Snapshot {
            offset: self.pos as u64,
            message: message.into(),
        })
    }

    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        match self.buf.get(self.pos..self.pos + N) {
            Some(b) => {
                self.pos += N;
                Ok(b.try_into().expect("length checked"))
            }
            None => self.fail(format!("truncated while reading {what}")),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.take::<8>(what).map(u64::from_le_bytes)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.take::<8>(what).map(f64::from_le_bytes)
    }
}

/// Parses a snapshot. Values must be finite; unit length of `d` is not
/// enforced so that states written from single precision load as well.
pub fn decode_snapshot(bytes: &[u8]) -> Result<SolverState<f64>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take::<8>("magic")? != *SNAPSHOT_MAGIC {
        c.pos = 0;
        return c.fail("bad magic, not a snapshot file");
    }
    let version = c.u32("version")?;
    if version != SNAPSHOT_VERSION {
        c.pos -= 4;
        return c.fail(format!("unsupported version {version}"));
    }
    let dim = c.u32("dim")? as usize;
    let m = c.u64("M")?;
    let bc = match c.u32("boundary")? {
        0 => Boundary::Periodic,
        1 => Boundary::Neumann,
        other => {
            c.pos -= 4;
            return c.fail(format!("unknown boundary code {other}"));
        }
    };
    c.u32("reserved")?;
    let origin = [c.f64("origin")?, c.f64("origin")?, c.f64("origin")?];
    let extent = c.f64("extent")?;
    let t = c.f64("t")?;
    let step_index = c.u64("step index")?;
    let m = usize::try_from(m).or_else(|_| c.fail("M does not fit in memory"))?;
    let grid = Grid::new(dim, m, bc, origin, extent).or_else(|e| {
        c.pos = 12;
        c.fail(format!("invalid grid: {e}"))
    })?;
    let n = grid.node_count();
    let expected = SNAPSHOT_HEADER_LEN + 48 * n;
    if bytes.len() < expected {
        c.pos = bytes.len();
        return c.fail(format!("truncated: {n} nodes need {expected} bytes, file has {}", bytes.len()));
    }
    let read_field = |c: &mut Cursor, name: &str| -> Result<VectorField<f64>> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let start = c.pos;
            let x = Vec3::new(c.f64(name)?, c.f64(name)?, c.f64(name)?);
            if !x.is_finite() {
                c.pos = start;
                return c.fail(format!("non-finite value in {name}"));
            }
            v.push(x);
        }
        Ok(VectorField::from_vec_unchecked(grid, v))
    };
    let d = read_field(&mut c, "d")?;
    let w = read_field(&mut c, "w")?;
    if c.pos != bytes.len() {
        return c.fail(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    Ok(SolverState::from_parts_unchecked(d, w, step_index, t))
}

pub fn read_snapshot(path: &Path) -> Result<SolverState<f64>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes).map_err(|e| e.context(path.display().to_string()))
}

/// Writes `<dir>/<prefix>_<step>.wmsnap` for the initial state and every
/// `every`-th step.
pub struct SnapshotWriter {
    dir: PathBuf,
    prefix: String,
    every: u64,
    written: Vec<PathBuf>,
}

impl SnapshotWriter {
    pub fn new(dir: impl Into<PathBuf>, prefix: impl Into<String>, every: u64) -> Self {
        SnapshotWriter {
            dir: dir.into(),
            prefix: prefix.into(),
            every: every.max(1),
            written: Vec::new(),
        }
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn save<T: Scalar>(&mut self, s: &SolverState<T>) -> Result<()> {
        let path = self.dir.join(format!("{}_{:08}.wmsnap", self.prefix, s.step_index()));
        write_snapshot(s, &path)?;
        self.written.push(path);
        Ok(())
    }
}

impl<T: Scalar> StepObserver<T> for SnapshotWriter {
    fn on_step(&mut self, before: &SolverState<T>, after: &SolverState<T>, _: &StepReport<T>, _: T) -> Result<()> {
        if self.written.is_empty() {
            self.save(before)?;
        }
        if after.step_index().is_multiple_of(self.every) {
            self.save(after)?;
        }
        Ok(())
    }

    fn on_finish(&mut self, last: &SolverState<T>, _: Option<&SolverState<T>>, _: T) -> Result<()> {
        if self.written.is_empty() {
            self.save(last)?;
        }
        Ok(())
    }
}
