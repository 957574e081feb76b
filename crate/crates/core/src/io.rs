//! On-disk formats: DOTF lattice fields, DtN matrices, boundary-basis caches
//! and CGO solutions.
//!
//! DOTF layout (little-endian): `b"DOTF"`, `u32` version = 1, `u8` n, `u32` N,
//! `f64` R_box, `u8` dtype (0 real, 1 complex as interleaved pairs), then the
//! row-major payload. The other formats are one JSON header line followed by
//! a raw little-endian `f64` block.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use crate::boundary::{BoundaryBasis, DtNMatrix};
use crate::cgo::CgoSolution;
use crate::error::{Error, Result};
use crate::field::{ComplexField, Field, RealField};
use crate::grid::Grid;
use crate::spectral::CVec;

const MAGIC: &[u8; 4] = b"DOTF";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 4 + 8 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    Real = 0,
    Complex = 1,
}

/// Decoded DOTF header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DotfHeader {
    pub dim: usize,
    pub n: usize,
    pub r_box: f64,
    pub dtype: Dtype,
}

impl DotfHeader {
    fn matches(&self, grid: &Grid) -> bool {
        self.dim == grid.dim() && self.n == grid.n() && self.r_box == grid.r_box()
    }
}

fn format_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Format { offset, msg: msg.into() }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(format_err(self.pos, format!("truncated while reading {what}")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(8 * count, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(format_err(self.pos, format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn push_f64s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn encode_header(grid: &Grid, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(grid.dim() as u8);
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    out.extend_from_slice(&grid.r_box().to_le_bytes());
    out.push(dtype as u8);
    out
}

pub fn encode_real(field: &RealField) -> Vec<u8> {
    let mut out = encode_header(field.grid(), Dtype::Real);
    push_f64s(&mut out, field.values().iter().copied());
    out
}

pub fn encode_complex(field: &ComplexField) -> Vec<u8> {
    let mut out = encode_header(field.grid(), Dtype::Complex);
    push_f64s(&mut out, field.values().iter().flat_map(|c| [c.re, c.im]));
    out
}

fn decode_header(r: &mut Reader) -> Result<DotfHeader> {
    if r.take(4, "magic")? != MAGIC {
        return Err(format_err(0, "bad magic, expected DOTF"));
    }
    let at = r.pos;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(format_err(at, format!("unsupported version {version}")));
    }
    let at = r.pos;
    let dim = r.u8("dimension")? as usize;
    if dim != 2 && dim != 3 {
        return Err(format_err(at, format!("dimension {dim} not in {{2, 3}}")));
    }
    let n = r.u32("N")? as usize;
    let r_box = r.f64("R_box")?;
    let at = r.pos;
    let dtype = match r.u8("dtype")? {
        0 => Dtype::Real,
        1 => Dtype::Complex,
        d => return Err(format_err(at, format!("unknown dtype {d}"))),
    };
    Ok(DotfHeader { dim, n, r_box, dtype })
}

fn decode_payload(bytes: &[u8], grid: &Grid, want: Dtype) -> Result<(DotfHeader, Vec<f64>)> {
    let mut r = Reader { bytes, pos: 0 };
    let header = decode_header(&mut r)?;
    if !header.matches(grid) {
        return Err(format_err(
            4,
            format!("header (n={}, N={}, R_box={}) does not match the grid", header.dim, header.n, header.r_box),
        ));
    }
    if header.dtype != want {
        return Err(format_err(HEADER_LEN - 1, format!("dtype {:?}, expected {want:?}", header.dtype)));
    }
    let per = if want == Dtype::Real { 1 } else { 2 };
    let values = r.f64s(per * grid.len(), "payload")?;
    r.finish()?;
    Ok((header, values))
}

/// Read only the header of a DOTF byte stream.
pub fn peek_header(bytes: &[u8]) -> Result<DotfHeader> {
    decode_header(&mut Reader { bytes, pos: 0 })
}

pub fn decode_real(bytes: &[u8], grid: &Grid) -> Result<RealField> {
    let (_, values) = decode_payload(bytes, grid, Dtype::Real)?;
    Field::from_values(*grid, values)
}

pub fn decode_complex(bytes: &[u8], grid: &Grid) -> Result<ComplexField> {
    let (_, values) = decode_payload(bytes, grid, Dtype::Complex)?;
    Field::from_values(*grid, values.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

pub fn write_real(path: impl AsRef<Path>, field: &RealField) -> Result<()> {
    Ok(fs::write(path, encode_real(field))?)
}

pub fn write_complex(path: impl AsRef<Path>, field: &ComplexField) -> Result<()> {
    Ok(fs::write(path, encode_complex(field))?)
}

pub fn read_real(path: impl AsRef<Path>, grid: &Grid) -> Result<RealField> {
    decode_real(&fs::read(path)?, grid)
}

pub fn read_complex(path: impl AsRef<Path>, grid: &Grid) -> Result<ComplexField> {
    decode_complex(&fs::read(path)?, grid)
}

fn split_header(bytes: &[u8]) -> Result<(&[u8], Reader<'_>)> {
    let end = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| format_err(0, "missing JSON header line"))?;
    Ok((&bytes[..end], Reader { bytes, pos: end + 1 }))
}

fn parse_header<T: for<'de> Deserialize<'de>>(line: &[u8]) -> Result<T> {
    serde_json::from_slice(line).map_err(|e| format_err(e.column().saturating_sub(1), format!("header: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtnHeader {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub m_modes: usize,
    pub k: f64,
    pub basis_id: String,
}

/// JSON header line, then `m×m` entries row-major and `m` eigenvalues.
pub fn encode_dtn(grid: &Grid, dtn: &DtNMatrix) -> Result<Vec<u8>> {
    let m = dtn.modes();
    let header = DtnHeader { n: grid.dim(), big_n: grid.n(), m_modes: m, k: dtn.k, basis_id: dtn.id.clone() };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    push_f64s(&mut out, (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| dtn.entries[(i, j)]));
    push_f64s(&mut out, dtn.lambda.iter().copied());
    Ok(out)
}

pub fn decode_dtn(bytes: &[u8]) -> Result<(DtnHeader, DtNMatrix)> {
    let (line, mut r) = split_header(bytes)?;
    let header: DtnHeader = parse_header(line)?;
    let m = header.m_modes;
    let flat = r.f64s(m * m, "DtN entries")?;
    let lambda = r.f64s(m, "DtN eigenvalues")?;
    r.finish()?;
    let entries = DMatrix::from_row_slice(m, m, &flat);
    let dtn = DtNMatrix { entries, lambda, k: header.k, id: header.basis_id.clone() };
    Ok((header, dtn))
}

pub fn write_dtn(path: impl AsRef<Path>, grid: &Grid, dtn: &DtNMatrix) -> Result<()> {
    Ok(fs::write(path, encode_dtn(grid, dtn)?)?)
}

pub fn read_dtn(path: impl AsRef<Path>) -> Result<(DtnHeader, DtNMatrix)> {
    decode_dtn(&fs::read(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BasisHeader {
    grid: Grid,
    nodes: usize,
}

/// Cache file name keyed by `(n, N, L_Ω)`.
pub fn basis_cache_name(grid: &Grid) -> String {
    format!("basis_n{}_N{}_L{}.bin", grid.dim(), grid.n(), grid.l_omega())
}

/// JSON header line, then node indices (as `f64`), eigenvalues and the
/// eigenvector block column-major.
pub fn encode_basis(basis: &BoundaryBasis) -> Result<Vec<u8>> {
    let header = BasisHeader { grid: *basis.grid(), nodes: basis.len() };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    push_f64s(&mut out, basis.nodes.iter().map(|&i| i as f64));
    push_f64s(&mut out, basis.lambda.iter().copied());
    push_f64s(&mut out, basis.phi.iter().copied());
    Ok(out)
}

pub fn decode_basis(bytes: &[u8]) -> Result<BoundaryBasis> {
    let (line, mut r) = split_header(bytes)?;
    let header: BasisHeader = parse_header(line)?;
    let nb = header.nodes;
    let nodes = r.f64s(nb, "node indices")?.into_iter().map(|v| v as usize).collect();
    let lambda = r.f64s(nb, "eigenvalues")?;
    let phi = DMatrix::from_vec(nb, nb, r.f64s(nb * nb, "eigenvectors")?);
    r.finish()?;
    Ok(BoundaryBasis::from_parts(header.grid, nodes, lambda, phi))
}

/// Load the basis for `grid` from `dir`, building and storing it on a miss.
pub fn cached_basis(dir: impl AsRef<Path>, grid: &Grid) -> Result<BoundaryBasis> {
    let path = dir.as_ref().join(basis_cache_name(grid));
    if let Ok(bytes) = fs::read(&path) {
        if let Ok(basis) = decode_basis(&bytes) {
            if basis.grid() == grid {
                return Ok(basis);
            }
        }
    }
    let basis = BoundaryBasis::new(*grid);
    fs::create_dir_all(dir.as_ref())?;
    fs::write(&path, encode_basis(&basis)?)?;
    Ok(basis)
}

/// Metadata written next to the `ψ` payload of a CGO solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgoMeta {
    pub zeta: CVec,
    pub tau: f64,
    pub r: f64,
    pub xnorm_psi: f64,
    pub xnorm_q: f64,
    pub residual: f64,
    pub relative_residual: f64,
    pub iterations: usize,
    pub contraction: f64,
    pub log_scale: f64,
    pub psi_file: String,
}

/// Write `<stem>.json` and `<stem>_psi.dotf` into `dir`.
pub fn write_cgo(dir: impl AsRef<Path>, stem: &str, sol: &CgoSolution, tau: f64, r: f64) -> Result<CgoMeta> {
    let psi_file = format!("{stem}_psi.dotf");
    write_complex(dir.as_ref().join(&psi_file), &sol.psi)?;
    let meta = CgoMeta {
        zeta: sol.zeta,
        tau,
        r,
        xnorm_psi: sol.xnorm_psi,
        xnorm_q: sol.xnorm_q,
        residual: sol.residual,
        relative_residual: sol.relative_residual(),
        iterations: sol.iterations,
        contraction: sol.contraction,
        log_scale: sol.log_scale,
        psi_file,
    };
    fs::write(dir.as_ref().join(format!("{stem}.json")), serde_json::to_string_pretty(&meta)?)?;
    Ok(meta)
}
