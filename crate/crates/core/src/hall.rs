//! The linear-coefficient matrix of the reduced alignment constraints.
//!
//! After normalizing U_k and V_j to `[I; U~_k]` and `[I; V~_j]`, each cross
//! constraint (k, j, p, q) becomes
//!
//! ```text
//! f_kjpq = h_kj(p,q)
//!        + sum_n h_kj(d_k+n, q)       * u~H_k(n,p)
//!        + sum_m h_kj(p, d_j+m)       * v~_j(m,q)
//!        + sum_{n,m} h_kj(d_k+n, d_j+m) * u~H_k(n,p) * v~_j(m,q)
//! ```
//!
//! The matrix built here holds the coefficients of the linear terms: one row
//! per constraint, one column per reduced variable. It is the Jacobian of the
//! constraint vector at the origin.
//!
//! Rows are ordered by k, then j (skipping k), then p, then q. Columns list
//! every u~H_k(n,p) first (n fastest, then p, blocks by k), followed by every
//! v~_j(m,q) (m fastest, then q, blocks by j).

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::model::{hall_dims, ChannelSet, NetworkConfig, ReducedTransceivers, TransceiverSet, C64};

/// One cross constraint, 1-based: Rx `k`, Tx `j`, Rx stream `p`, Tx stream `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkIndex {
    pub k: usize,
    pub j: usize,
    pub p: usize,
    pub q: usize,
}

impl LinkIndex {
    pub const fn new(k: usize, j: usize, p: usize, q: usize) -> Self {
        Self { k, j, p, q }
    }
}

impl std::fmt::Display for LinkIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.k, self.j, self.p, self.q)
    }
}

impl std::str::FromStr for LinkIndex {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::MalformedAllocation(format!("bad index tuple {s:?}")))?;
        match parts[..] {
            [k, j, p, q] => Ok(Self { k, j, p, q }),
            _ => Err(Error::MalformedAllocation(format!("bad index tuple {s:?}"))),
        }
    }
}

/// A reduced variable, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "block", rename_all = "lowercase")]
pub enum Variable {
    /// Conjugated decorrelator entry u~H_k(n, p).
    U { k: usize, n: usize, p: usize },
    /// Precoder entry v~_j(m, q).
    V { j: usize, m: usize, q: usize },
}

/// Row and column index maps of the coefficient matrix for one configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HallLayout {
    cfg: NetworkConfig,
    rows: usize,
    cols: usize,
    /// Row offset of block (k, j), zero-based, indexed k * K + j.
    row_offset: Vec<usize>,
    u_offset: Vec<usize>,
    v_offset: Vec<usize>,
    d_u: usize,
}

impl HallLayout {
    pub fn new(cfg: &NetworkConfig) -> Result<Self> {
        cfg.ensure_admissible()?;
        let k = cfg.k();
        let mut row_offset = vec![0; k * k];
        let mut acc = 0;
        for rx in 0..k {
            for tx in 0..k {
                row_offset[rx * k + tx] = acc;
                if rx != tx {
                    acc += cfg.pair(rx).d * cfg.pair(tx).d;
                }
            }
        }
        let mut u_offset = Vec::with_capacity(k);
        let mut col = 0;
        for p in cfg.pairs() {
            u_offset.push(col);
            col += p.rx_free() * p.d;
        }
        let d_u = col;
        let mut v_offset = Vec::with_capacity(k);
        for p in cfg.pairs() {
            v_offset.push(col);
            col += p.tx_free() * p.d;
        }
        let (rows, cols) = hall_dims(cfg);
        debug_assert_eq!((acc, col), (rows, cols));
        Ok(Self {
            cfg: cfg.clone(),
            rows,
            cols,
            row_offset,
            u_offset,
            v_offset,
            d_u,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of decorrelator columns; the precoder block starts after it.
    pub fn d_u(&self) -> usize {
        self.d_u
    }

    /// 1-based row of constraint (k, j, p, q).
    pub fn row_index(&self, link: LinkIndex) -> Result<usize> {
        let LinkIndex { k, j, p, q } = link;
        let kk = self.cfg.k();
        if k == 0 || j == 0 || k > kk || j > kk || k == j {
            return Err(Error::IndexOutOfRange(format!("pair indices ({k}, {j})")));
        }
        let (dk, dj) = (self.cfg.pair(k - 1).d, self.cfg.pair(j - 1).d);
        if p == 0 || q == 0 || p > dk || q > dj {
            return Err(Error::IndexOutOfRange(format!(
                "stream indices ({p}, {q}) for link ({k}, {j})"
            )));
        }
        Ok(self.row0(k - 1, j - 1, p - 1, q - 1) + 1)
    }

    /// 1-based column of a reduced variable.
    pub fn col_index(&self, var: Variable) -> Result<usize> {
        let kk = self.cfg.k();
        match var {
            Variable::U { k, n, p } => {
                if k == 0 || k > kk {
                    return Err(Error::IndexOutOfRange(format!("pair {k}")));
                }
                let pc = self.cfg.pair(k - 1);
                if n == 0 || n > pc.rx_free() || p == 0 || p > pc.d {
                    return Err(Error::IndexOutOfRange(format!(
                        "decorrelator entry ({n}, {p}) of pair {k}"
                    )));
                }
                Ok(self.ucol0(k - 1, n - 1, p - 1) + 1)
            }
            Variable::V { j, m, q } => {
                if j == 0 || j > kk {
                    return Err(Error::IndexOutOfRange(format!("pair {j}")));
                }
                let pc = self.cfg.pair(j - 1);
                if m == 0 || m > pc.tx_free() || q == 0 || q > pc.d {
                    return Err(Error::IndexOutOfRange(format!("precoder entry ({m}, {q}) of pair {j}")));
                }
                Ok(self.vcol0(j - 1, m - 1, q - 1) + 1)
            }
        }
    }

    /// Inverse of [`col_index`](Self::col_index).
    pub fn variable(&self, col: usize) -> Result<Variable> {
        if col == 0 || col > self.cols {
            return Err(Error::IndexOutOfRange(format!("column {col}")));
        }
        let c0 = col - 1;
        let (offsets, is_u) = if c0 < self.d_u {
            (&self.u_offset, true)
        } else {
            (&self.v_offset, false)
        };
        let k = offsets
            .iter()
            .rposition(|&o| o <= c0)
            .expect("offset table starts at or below c0");
        // skip empty blocks that share the same offset
        let k = (0..=k)
            .rev()
            .find(|&i| {
                let pc = self.cfg.pair(i);
                let width = if is_u { pc.rx_free() } else { pc.tx_free() } * pc.d;
                offsets[i] <= c0 && c0 < offsets[i] + width
            })
            .expect("column lies in some block");
        let pc = self.cfg.pair(k);
        let width = if is_u { pc.rx_free() } else { pc.tx_free() };
        let local = c0 - offsets[k];
        let (a, b) = (local % width + 1, local / width + 1);
        Ok(if is_u {
            Variable::U { k: k + 1, n: a, p: b }
        } else {
            Variable::V { j: k + 1, m: a, q: b }
        })
    }

    /// Every constraint in row order.
    pub fn links(&self) -> impl Iterator<Item = LinkIndex> + '_ {
        let kk = self.cfg.k();
        (0..kk).flat_map(move |k| {
            (0..kk).filter(move |&j| j != k).flat_map(move |j| {
                let (dk, dj) = (self.cfg.pair(k).d, self.cfg.pair(j).d);
                (0..dk).flat_map(move |p| (0..dj).map(move |q| LinkIndex::new(k + 1, j + 1, p + 1, q + 1)))
            })
        })
    }

    /// Zero-based row of zero-based (k, j, p, q).
    pub(crate) fn row0(&self, k: usize, j: usize, p: usize, q: usize) -> usize {
        self.row_offset[k * self.cfg.k() + j] + p * self.cfg.pair(j).d + q
    }

    pub(crate) fn ucol0(&self, k: usize, n: usize, p: usize) -> usize {
        self.u_offset[k] + p * self.cfg.pair(k).rx_free() + n
    }

    pub(crate) fn vcol0(&self, j: usize, m: usize, q: usize) -> usize {
        self.v_offset[j] + q * self.cfg.pair(j).tx_free() + m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HallData {
    Complex(DMatrix<C64>),
    Prime { modulus: u64, data: DMatrix<u64> },
}

/// The C x V coefficient matrix together with its index maps.
#[derive(Debug, Clone, PartialEq)]
pub struct HallMatrix {
    pub layout: HallLayout,
    pub data: HallData,
}

/// Places every linear coefficient of the reduced constraints.
///
/// Row (k, j, p, q) holds h_kj(d_k + n, q) in the column of u~H_k(n, p) and
/// h_kj(p, d_j + m) in the column of v~_j(m, q); everything else is zero.
pub fn build_hall(cfg: &NetworkConfig, channels: &ChannelSet) -> Result<HallMatrix> {
    let layout = HallLayout::new(cfg)?;
    channels.check_shapes(cfg)?;
    let (rows, cols) = (layout.rows(), layout.cols());
    let data = match channels.field() {
        ScalarField::Complex => {
            let mut m = DMatrix::<C64>::zeros(rows, cols);
            fill(
                &layout,
                |rx, tx, a, b| channels.complex(rx, tx)[(a, b)],
                |r, c, v| m[(r, c)] = v,
            );
            HallData::Complex(m)
        }
        ScalarField::Prime(p) => {
            let mut m = DMatrix::<u64>::zeros(rows, cols);
            fill(
                &layout,
                |rx, tx, a, b| channels.prime(rx, tx)[(a, b)],
                |r, c, v| m[(r, c)] = v,
            );
            HallData::Prime { modulus: p, data: m }
        }
    };
    Ok(HallMatrix { layout, data })
}

fn fill<T>(layout: &HallLayout, entry: impl Fn(usize, usize, usize, usize) -> T, mut put: impl FnMut(usize, usize, T)) {
    let cfg = layout.config();
    let kk = cfg.k();
    for k in 0..kk {
        let pk = cfg.pair(k);
        for j in (0..kk).filter(|&j| j != k) {
            let pj = cfg.pair(j);
            for p in 0..pk.d {
                for q in 0..pj.d {
                    let r = layout.row0(k, j, p, q);
                    for n in 0..pk.rx_free() {
                        put(r, layout.ucol0(k, n, p), entry(k, j, pk.d + n, q));
                    }
                    for m in 0..pj.tx_free() {
                        put(r, layout.vcol0(j, m, q), entry(k, j, p, pj.d + m));
                    }
                }
            }
        }
    }
}

impl HallMatrix {
    pub fn rows(&self) -> usize {
        self.layout.rows()
    }

    pub fn cols(&self) -> usize {
        self.layout.cols()
    }

    pub fn field(&self) -> ScalarField {
        match self.data {
            HallData::Complex(_) => ScalarField::Complex,
            HallData::Prime { modulus, .. } => ScalarField::Prime(modulus),
        }
    }

    pub fn nonzero_count(&self) -> usize {
        match &self.data {
            HallData::Complex(m) => m.iter().filter(|z| **z != C64::new(0.0, 0.0)).count(),
            HallData::Prime { data, .. } => data.iter().filter(|z| **z != 0).count(),
        }
    }

    /// Sparse triplet export: `(row, col, value)` with 1-based indices, row-major.
    pub fn complex_triplets(&self) -> Option<Vec<(usize, usize, C64)>> {
        match &self.data {
            HallData::Complex(m) => Some(
                (0..m.nrows())
                    .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
                    .filter(|&(r, c)| m[(r, c)] != C64::new(0.0, 0.0))
                    .map(|(r, c)| (r + 1, c + 1, m[(r, c)]))
                    .collect(),
            ),
            HallData::Prime { .. } => None,
        }
    }

    /// Text dump: header `C V field`, then one `r c value` line per nonzero.
    /// Complex values print as `re im`, field values as an integer; the field
    /// token is `complex` or `prime:<p>`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let field = match self.field() {
            ScalarField::Complex => "complex".to_string(),
            ScalarField::Prime(p) => format!("prime:{p}"),
        };
        let _ = writeln!(out, "{} {} {}", self.rows(), self.cols(), field);
        match &self.data {
            HallData::Complex(m) => {
                for r in 0..m.nrows() {
                    for c in 0..m.ncols() {
                        let z = m[(r, c)];
                        if z != C64::new(0.0, 0.0) {
                            let _ = writeln!(out, "{} {} {:e} {:e}", r + 1, c + 1, z.re, z.im);
                        }
                    }
                }
            }
            HallData::Prime { data, .. } => {
                for r in 0..data.nrows() {
                    for c in 0..data.ncols() {
                        if data[(r, c)] != 0 {
                            let _ = writeln!(out, "{} {} {}", r + 1, c + 1, data[(r, c)]);
                        }
                    }
                }
            }
        }
        out
    }
}

fn complex_field_check(channels: &ChannelSet) -> Result<()> {
    if channels.is_complex() {
        Ok(())
    } else {
        Err(Error::WrongField {
            expected: "complex",
            found: "prime",
        })
    }
}

/// Evaluates every reduced constraint polynomial, in row order.
pub fn residual(cfg: &NetworkConfig, channels: &ChannelSet, tilde: &ReducedTransceivers) -> Result<Vec<C64>> {
    complex_field_check(channels)?;
    channels.check_shapes(cfg)?;
    tilde.check_shapes(cfg)?;
    let layout = HallLayout::new(cfg)?;
    let mut out = vec![C64::new(0.0, 0.0); layout.rows()];
    let kk = cfg.k();
    for k in 0..kk {
        let pk = cfg.pair(k);
        let uk = &tilde.u_conj[k];
        for j in (0..kk).filter(|&j| j != k) {
            let pj = cfg.pair(j);
            let h = channels.complex(k, j);
            let vj = &tilde.v[j];
            for p in 0..pk.d {
                for q in 0..pj.d {
                    let mut f = h[(p, q)];
                    for n in 0..pk.rx_free() {
                        f += h[(pk.d + n, q)] * uk[(n, p)];
                    }
                    for m in 0..pj.tx_free() {
                        f += h[(p, pj.d + m)] * vj[(m, q)];
                    }
                    for n in 0..pk.rx_free() {
                        let mut inner = C64::new(0.0, 0.0);
                        for m in 0..pj.tx_free() {
                            inner += h[(pk.d + n, pj.d + m)] * vj[(m, q)];
                        }
                        f += uk[(n, p)] * inner;
                    }
                    out[layout.row0(k, j, p, q)] = f;
                }
            }
        }
    }
    Ok(out)
}

/// Jacobian of [`residual`] with respect to the variable vector, evaluated at
/// `tilde`. Equals the coefficient matrix when `tilde` is zero.
pub fn jacobian(cfg: &NetworkConfig, channels: &ChannelSet, tilde: &ReducedTransceivers) -> Result<DMatrix<C64>> {
    complex_field_check(channels)?;
    channels.check_shapes(cfg)?;
    tilde.check_shapes(cfg)?;
    let layout = HallLayout::new(cfg)?;
    let mut jac = DMatrix::<C64>::zeros(layout.rows(), layout.cols());
    let kk = cfg.k();
    for k in 0..kk {
        let pk = cfg.pair(k);
        let uk = &tilde.u_conj[k];
        for j in (0..kk).filter(|&j| j != k) {
            let pj = cfg.pair(j);
            let h = channels.complex(k, j);
            let vj = &tilde.v[j];
            for p in 0..pk.d {
                for q in 0..pj.d {
                    let r = layout.row0(k, j, p, q);
                    for n in 0..pk.rx_free() {
                        let mut g = h[(pk.d + n, q)];
                        for m in 0..pj.tx_free() {
                            g += h[(pk.d + n, pj.d + m)] * vj[(m, q)];
                        }
                        jac[(r, layout.ucol0(k, n, p))] = g;
                    }
                    for m in 0..pj.tx_free() {
                        let mut g = h[(p, pj.d + m)];
                        for n in 0..pk.rx_free() {
                            g += h[(pk.d + n, pj.d + m)] * uk[(n, p)];
                        }
                        jac[(r, layout.vcol0(j, m, q))] = g;
                    }
                }
            }
        }
    }
    Ok(jac)
}

/// Flattens reduced variables into the column order of the coefficient matrix.
pub fn to_vector(layout: &HallLayout, tilde: &ReducedTransceivers) -> Vec<C64> {
    let cfg = layout.config();
    let mut x = vec![C64::new(0.0, 0.0); layout.cols()];
    for (k, pc) in cfg.pairs().iter().enumerate() {
        for p in 0..pc.d {
            for n in 0..pc.rx_free() {
                x[layout.ucol0(k, n, p)] = tilde.u_conj[k][(n, p)];
            }
            for m in 0..pc.tx_free() {
                x[layout.vcol0(k, m, p)] = tilde.v[k][(m, p)];
            }
        }
    }
    x
}

/// Inverse of [`to_vector`].
pub fn from_vector(layout: &HallLayout, x: &[C64]) -> Result<ReducedTransceivers> {
    if x.len() != layout.cols() {
        return Err(Error::ShapeMismatch(format!(
            "variable vector has length {}, expected {}",
            x.len(),
            layout.cols()
        )));
    }
    let cfg = layout.config();
    let mut tilde = ReducedTransceivers::zeros(cfg);
    for (k, pc) in cfg.pairs().iter().enumerate() {
        for p in 0..pc.d {
            for n in 0..pc.rx_free() {
                tilde.u_conj[k][(n, p)] = x[layout.ucol0(k, n, p)];
            }
            for m in 0..pc.tx_free() {
                tilde.v[k][(m, p)] = x[layout.vcol0(k, m, p)];
            }
        }
    }
    Ok(tilde)
}

/// Rebuilds full transceivers: U_k = [I; conj(u_conj_k)], V_k = [I; v_k].
pub fn reconstruct(cfg: &NetworkConfig, tilde: &ReducedTransceivers) -> Result<TransceiverSet> {
    tilde.check_shapes(cfg)?;
    let stack = |d: usize, lower: &DMatrix<C64>| {
        let mut out = DMatrix::<C64>::zeros(d + lower.nrows(), d);
        out.view_mut((0, 0), (d, d)).fill_with_identity();
        out.view_mut((d, 0), (lower.nrows(), d)).copy_from(lower);
        out
    };
    Ok(TransceiverSet {
        u: cfg
            .pairs()
            .iter()
            .zip(&tilde.u_conj)
            .map(|(p, u)| stack(p.d, &u.map(|z| z.conj())))
            .collect(),
        v: cfg.pairs().iter().zip(&tilde.v).map(|(p, v)| stack(p.d, v)).collect(),
    })
}
