//! The sampler's preprocessed state: spectral approximation A (as its
//! Cholesky-of-(I+A) form), the proposal weights l̃ with their alias table,
//! and the derived scalars s̃ and q. Serializes to a small binary file so
//! preprocessing and sampling can run as separate commands.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::alias::AliasTable;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, CholeskyFactor, SymMatrix};

const MAGIC: &[u8; 4] = b"RDPP";
const VERSION: u8 = 1;

#[derive(Clone, Debug)]
pub struct PreprocessedState {
    a: SymMatrix,
    chol_iplusa: CholeskyFactor,
    logdet_iplusa: f64,
    s_tilde: f64,
    q: u64,
    l_tilde: Vec<f64>,
    l_tilde_sum: f64,
    table: AliasTable,
    eta: f64,
    index_map: Vec<usize>,
}

impl PreprocessedState {
    /// Assemble a state from its independent parts, deriving everything else:
    /// chol(I+A), logdet, s̃ = d − tr((I+A)⁻¹), q = ⌈2·d·s̃⌉, the alias table.
    pub fn from_parts(
        a: SymMatrix,
        l_tilde: Vec<f64>,
        eta: f64,
        index_map: Vec<usize>,
    ) -> Result<Self> {
        if l_tilde.len() != index_map.len() {
            return Err(Error::DimensionMismatch {
                expected: index_map.len(),
                got: l_tilde.len(),
            });
        }
        if l_tilde.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        for (i, &l) in l_tilde.iter().enumerate() {
            if !l.is_finite() || l <= 0.0 {
                return Err(Error::CorruptState(format!("l̃[{i}] = {l} must be positive")));
            }
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidParameter(format!("eta = {eta} out of range")));
        }

        let d = a.dim();
        let chol_iplusa = cholesky(&a.plus_identity())
            .map_err(|e| Error::CorruptState(format!("I+A not positive definite: {e}")))?;
        let logdet_iplusa = chol_iplusa.logdet();
        // tr(A(I+A)⁻¹) through the trace identity tr((I+A)⁻¹) = d − s̃
        let s_tilde = (d as f64 - chol_iplusa.inv_trace()).max(0.0);
        // guarded ceiling: 2d·s̃ lands within a few ulp of an integer whenever
        // s̃ is one (e.g. orthonormal rows), and the ceiling must not jump up
        let target = 2.0 * d as f64 * s_tilde;
        let q = (target - 1e-9 * target.max(1.0)).ceil() as u64;
        let l_tilde_sum = l_tilde.iter().sum();
        let table = AliasTable::new(&l_tilde)?;

        Ok(PreprocessedState {
            a,
            chol_iplusa,
            logdet_iplusa,
            s_tilde,
            q,
            l_tilde,
            l_tilde_sum,
            table,
            eta,
            index_map,
        })
    }

    pub fn n(&self) -> usize {
        self.l_tilde.len()
    }

    pub fn d(&self) -> usize {
        self.a.dim()
    }

    pub fn a(&self) -> &SymMatrix {
        &self.a
    }

    pub fn chol_iplusa(&self) -> &CholeskyFactor {
        &self.chol_iplusa
    }

    pub fn logdet_iplusa(&self) -> f64 {
        self.logdet_iplusa
    }

    pub fn s_tilde(&self) -> f64 {
        self.s_tilde
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn l_tilde(&self) -> &[f64] {
        &self.l_tilde
    }

    pub fn l_tilde_sum(&self) -> f64 {
        self.l_tilde_sum
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn index_map(&self) -> &[usize] {
        &self.index_map
    }

    /// One O(1) draw from the l̃ proposal distribution.
    pub fn sample_proposal_index(&self, rng: &mut impl Rng) -> usize {
        self.table.sample(rng)
    }

    /// Exact pmf of the proposal table (diagnostics/tests).
    pub fn proposal_pmf(&self) -> Vec<f64> {
        self.table.implied_pmf()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.n() as u64;
        let d = self.d() as u64;
        let mut out = Vec::with_capacity(
            5 + 3 * 8 + 3 * 8 + (self.d() * self.d() + 2 * self.n()) * 8,
        );
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&d.to_le_bytes());
        out.extend_from_slice(&self.q.to_le_bytes());
        out.extend_from_slice(&self.s_tilde.to_le_bytes());
        out.extend_from_slice(&self.eta.to_le_bytes());
        out.extend_from_slice(&self.logdet_iplusa.to_le_bytes());
        for v in self.a.to_dense_rows() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &v in &self.l_tilde {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &i in &self.index_map {
            out.extend_from_slice(&(i as u64).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != MAGIC {
            return Err(Error::CorruptState("bad magic bytes".into()));
        }
        let version = cur.take(1)?[0];
        if version != VERSION {
            return Err(Error::CorruptState(format!("unsupported version {version}")));
        }
        let n = cur.read_u64()? as usize;
        let d = cur.read_u64()? as usize;
        let q = cur.read_u64()?;
        let s_tilde = cur.read_f64()?;
        let eta = cur.read_f64()?;
        let logdet = cur.read_f64()?;

        let expected = 5 + 6 * 8 + (d * d + 2 * n) * 8;
        if bytes.len() != expected {
            return Err(Error::CorruptState(format!(
                "file is {} bytes, header implies {expected}",
                bytes.len()
            )));
        }

        let mut a_data = Vec::with_capacity(d * d);
        for _ in 0..d * d {
            a_data.push(cur.read_f64()?);
        }
        let a = SymMatrix::from_dense_rows(d, &a_data)?.tag_psd();
        let mut l_tilde = Vec::with_capacity(n);
        for _ in 0..n {
            l_tilde.push(cur.read_f64()?);
        }
        let mut index_map = Vec::with_capacity(n);
        for _ in 0..n {
            index_map.push(cur.read_u64()? as usize);
        }

        let state = Self::from_parts(a, l_tilde, eta, index_map)?;
        // the derived scalars must reproduce the header
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-8 * b.abs().max(1.0);
        if state.q != q || !close(state.s_tilde, s_tilde) || !close(state.logdet_iplusa, logdet)
        {
            return Err(Error::CorruptState(
                "stored scalars disagree with the stored matrix".into(),
            ));
        }
        Ok(state)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(Error::CorruptState("file truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn read_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn read_f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
