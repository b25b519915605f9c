//! Line-of-sight channel coefficients and matrices.
//!
//! In normalized units the coefficient between nodes at distance `r` is
//! `exp(2 pi i r) / r`. The phase is computed from the fractional part of
//! `r`, which keeps it exact modulo 2 pi even at large distances.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::TAU;
use std::io::{Read, Write};

use crate::netgeom::NodeSet;
use crate::{Error, Result};

/// Magic header of the binary matrix dump format.
pub const DUMP_MAGIC: &[u8; 5] = b"LOSM1";

/// Dense complex channel matrix between two indexed node sets
/// (row = receiver, column = transmitter).
#[derive(Debug, Clone)]
pub struct ChannelMatrix {
    pub entries: DMatrix<Complex64>,
    pub rx_indices: Vec<usize>,
    pub tx_indices: Vec<usize>,
    /// Matching distances `r_jk`, retained for verification.
    pub distances: DMatrix<f64>,
}

impl ChannelMatrix {
    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    /// Wraps a raw matrix (used by tests and the synthetic-matrix suites).
    pub fn from_entries(entries: DMatrix<Complex64>) -> Self {
        let (r, c) = entries.shape();
        ChannelMatrix {
            entries,
            rx_indices: (0..r).collect(),
            tx_indices: (0..c).collect(),
            distances: DMatrix::zeros(r, c),
        }
    }

    /// Binary dump: `LOSM1`, two little-endian u64 dims, then row-major
    /// little-endian `(re, im)` f64 pairs.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&(self.nrows() as u64).to_le_bytes())?;
        w.write_all(&(self.ncols() as u64).to_le_bytes())?;
        for r in 0..self.nrows() {
            for c in 0..self.ncols() {
                let z = self.entries[(r, c)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a matrix written by [`ChannelMatrix::write_binary`].
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::InvalidMatrix(format!(
                "bad magic {magic:?}, expected {DUMP_MAGIC:?}"
            )));
        }
        let mut dim = [0u8; 8];
        r.read_exact(&mut dim)?;
        let rows = u64::from_le_bytes(dim) as usize;
        r.read_exact(&mut dim)?;
        let cols = u64::from_le_bytes(dim) as usize;
        let mut entries = DMatrix::zeros(rows, cols);
        let mut buf = [0u8; 16];
        for i in 0..rows {
            for j in 0..cols {
                r.read_exact(&mut buf)?;
                let re = f64::from_le_bytes(buf[..8].try_into().unwrap());
                let im = f64::from_le_bytes(buf[8..].try_into().unwrap());
                entries[(i, j)] = Complex64::new(re, im);
            }
        }
        Ok(Self::from_entries(entries))
    }
}

/// Euclidean distance between two points.
pub fn pair_distance(p: (f64, f64), q: (f64, f64)) -> f64 {
    let dx = p.0 - q.0;
    let dy = p.1 - q.1;
    dx.hypot(dy)
}

/// LOS coefficient `exp(2 pi i r) / r` for `r > 0`.
pub fn los_coefficient(r: f64) -> Result<Complex64> {
    if !(r > 0.0) {
        return Err(Error::InvalidMatrix(format!(
            "LOS coefficient needs r > 0, got {r}"
        )));
    }
    Ok(Complex64::from_polar(1.0 / r, TAU * r.fract()))
}

/// Full-network channel matrix: `h_jj = 0`, `h_jk = exp(2 pi i r_jk)/r_jk`.
pub fn network_channel_matrix(nodes: &NodeSet) -> Result<ChannelMatrix> {
    let n = nodes.len();
    let mut entries = DMatrix::zeros(n, n);
    let mut distances = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            if j == k {
                continue;
            }
            let r = pair_distance(nodes.positions[j], nodes.positions[k]);
            if r == 0.0 {
                return Err(Error::CoincidentNodes(j, k));
            }
            distances[(j, k)] = r;
            entries[(j, k)] = los_coefficient(r)?;
        }
    }
    Ok(ChannelMatrix {
        entries,
        rx_indices: (0..n).collect(),
        tx_indices: (0..n).collect(),
        distances,
    })
}

/// Channel matrix between disjoint receiver and transmitter index sets.
pub fn intercluster_matrix(
    nodes: &NodeSet,
    rx: &[usize],
    tx: &[usize],
) -> Result<ChannelMatrix> {
    for &j in rx {
        if tx.contains(&j) {
            return Err(Error::InvalidMatrix(format!(
                "rx and tx index sets overlap at node {j}"
            )));
        }
    }
    let mut entries = DMatrix::zeros(rx.len(), tx.len());
    let mut distances = DMatrix::zeros(rx.len(), tx.len());
    for (a, &j) in rx.iter().enumerate() {
        for (b, &k) in tx.iter().enumerate() {
            let r = pair_distance(nodes.positions[j], nodes.positions[k]);
            if r == 0.0 {
                return Err(Error::CoincidentNodes(j, k));
            }
            distances[(a, b)] = r;
            entries[(a, b)] = los_coefficient(r)?;
        }
    }
    Ok(ChannelMatrix {
        entries,
        rx_indices: rx.to_vec(),
        tx_indices: tx.to_vec(),
        distances,
    })
}
