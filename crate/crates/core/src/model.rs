//! Network configurations, channel realizations, and transceivers.
//!
//! Pair indices in public index tuples and in every serialized format are
//! 1-based (`k`, `j` in `1..=K`). Matrix accessors on [`ChannelSet`] and
//! [`TransceiverSet`] take 0-based pair indices because they index Rust
//! vectors directly.
//!
//! Channel sampling uses ChaCha20 (`rand_chacha` 0.9, `seed_from_u64`) and
//! fills each cross link H_kj row by row, visiting pairs in the order
//! `k = 1..K`, `j = 1..K`, `j != k`. Complex entries are circularly-symmetric
//! standard normal (real and imaginary parts each N(0, 1/2)); prime-field
//! entries are uniform over `0..p`. Direct links H_kk come from a separate
//! stream keyed on the same seed, so requesting them never perturbs the cross
//! links.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;

pub type C64 = nalgebra::Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairConfig {
    /// Transmit antennas.
    #[serde(rename = "M")]
    pub m: usize,
    /// Receive antennas.
    #[serde(rename = "N")]
    pub n: usize,
    /// Data streams.
    pub d: usize,
}

impl PairConfig {
    pub const fn new(m: usize, n: usize, d: usize) -> Self {
        Self { m, n, d }
    }

    /// Free entries of the reduced decorrelator, N - d (0 if inadmissible).
    pub fn rx_free(&self) -> usize {
        self.n.saturating_sub(self.d)
    }

    /// Free entries of the reduced precoder, M - d (0 if inadmissible).
    pub fn tx_free(&self) -> usize {
        self.m.saturating_sub(self.d)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct NetworkConfig {
    pairs: Vec<PairConfig>,
}

#[derive(Serialize, Deserialize)]
struct RawConfig {
    pairs: Vec<PairConfig>,
}

impl TryFrom<RawConfig> for NetworkConfig {
    type Error = Error;
    fn try_from(raw: RawConfig) -> Result<Self> {
        NetworkConfig::new(raw.pairs)
    }
}

impl From<NetworkConfig> for RawConfig {
    fn from(cfg: NetworkConfig) -> Self {
        RawConfig { pairs: cfg.pairs }
    }
}

impl NetworkConfig {
    pub fn new(pairs: Vec<PairConfig>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidConfig("at least one pair is required".into()));
        }
        if let Some((i, _)) = pairs.iter().enumerate().find(|(_, p)| p.m == 0 || p.n == 0 || p.d == 0) {
            return Err(Error::InvalidConfig(format!(
                "pair {} has a zero antenna or stream count",
                i + 1
            )));
        }
        Ok(Self { pairs })
    }

    /// The symmetric network (M x N, d)^K.
    pub fn symmetric(k: usize, m: usize, n: usize, d: usize) -> Result<Self> {
        Self::new(vec![PairConfig::new(m, n, d); k])
    }

    pub fn pairs(&self) -> &[PairConfig] {
        &self.pairs
    }

    /// Zero-based access.
    pub fn pair(&self, k: usize) -> &PairConfig {
        &self.pairs[k]
    }

    pub fn k(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_admissible(&self) -> bool {
        self.pairs.iter().all(|p| p.m.min(p.n) >= p.d)
    }

    pub fn ensure_admissible(&self) -> Result<()> {
        match self.pairs.iter().enumerate().find(|(_, p)| p.m.min(p.n) < p.d) {
            None => Ok(()),
            Some((i, p)) => Err(Error::NotAdmissible {
                pair: i + 1,
                min: p.m.min(p.n),
                d: p.d,
            }),
        }
    }

    /// `Some((M, N, d))` when every pair has the same triple.
    pub fn symmetric_triple(&self) -> Option<(usize, usize, usize)> {
        let first = self.pairs[0];
        self.pairs
            .iter()
            .all(|p| *p == first)
            .then_some((first.m, first.n, first.d))
    }

    /// `Some(d)` when every pair carries the same number of streams.
    pub fn uniform_streams(&self) -> Option<usize> {
        let d = self.pairs[0].d;
        self.pairs.iter().all(|p| p.d == d).then_some(d)
    }

    pub fn total_streams(&self) -> usize {
        self.pairs.iter().map(|p| p.d).sum()
    }
}

impl std::fmt::Display for NetworkConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some((m, n, d)) = self.symmetric_triple() {
            return write!(f, "({m}x{n},{d})^{}", self.k());
        }
        write!(f, "{{")?;
        for (i, p) in self.pairs.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "({},{},{})", p.m, p.n, p.d)?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamViolation {
    /// 1-based pair index.
    pub pair: usize,
    pub m: usize,
    pub n: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub admissible: bool,
    pub violations: Vec<StreamViolation>,
}

/// Checks min{M_k, N_k} >= d_k for every pair.
pub fn validate_config(cfg: &NetworkConfig) -> ValidationReport {
    let violations: Vec<_> = cfg
        .pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.m.min(p.n) < p.d)
        .map(|(i, p)| StreamViolation {
            pair: i + 1,
            m: p.m,
            n: p.n,
            d: p.d,
        })
        .collect();
    ValidationReport {
        admissible: violations.is_empty(),
        violations,
    }
}

/// Multiplies every antenna and stream count by `c`.
pub fn scale_config(cfg: &NetworkConfig, c: usize) -> Result<NetworkConfig> {
    if c == 0 {
        return Err(Error::InvalidConfig("scale factor must be positive".into()));
    }
    let scale = |x: usize| x.checked_mul(c).ok_or(Error::ScaleOverflow { factor: c });
    let pairs = cfg
        .pairs
        .iter()
        .map(|p| Ok(PairConfig::new(scale(p.m)?, scale(p.n)?, scale(p.d)?)))
        .collect::<Result<Vec<_>>>()?;
    NetworkConfig::new(pairs)
}

/// Row and column counts of the linear-coefficient matrix:
/// C = sum_k sum_{j != k} d_k d_j and V = sum_k d_k (M_k + N_k - 2 d_k).
pub fn hall_dims(cfg: &NetworkConfig) -> (usize, usize) {
    let total: usize = cfg.total_streams();
    let c = cfg.pairs.iter().map(|p| p.d * (total - p.d)).sum::<usize>();
    let v = cfg
        .pairs
        .iter()
        .map(|p| p.d * (p.rx_free() + p.tx_free()))
        .sum::<usize>();
    (c, v)
}

/// SplitMix64 finalizer, used to derive independent sub-seeds from a master
/// seed (trial `i`, restart `i`, ...).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn complex_normal(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub(crate) fn random_complex_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<C64> {
    let data: Vec<C64> = (0..rows * cols).map(|_| complex_normal(rng)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

const DIRECT_LINK_STREAM: u64 = 0xD1EC_7000;

#[derive(Debug, Clone, PartialEq)]
enum Links {
    Complex(Vec<DMatrix<C64>>),
    Prime(Vec<DMatrix<u64>>),
}

/// Cross-link channel matrices H_kj (k != j), plus optional direct links.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    field: ScalarField,
    seed: u64,
    k: usize,
    links: Links,
    direct: Option<Vec<DMatrix<C64>>>,
}

/// Samples every cross link of `cfg`. Deterministic in `(cfg, seed, field)`.
pub fn sample_channels(cfg: &NetworkConfig, seed: u64, field: ScalarField) -> Result<ChannelSet> {
    cfg.ensure_admissible()?;
    field.validate()?;
    let k = cfg.k();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let links = match field {
        ScalarField::Complex => Links::Complex(
            (0..k * k)
                .map(|idx| {
                    let (rx, tx) = (idx / k, idx % k);
                    if rx == tx {
                        DMatrix::zeros(0, 0)
                    } else {
                        random_complex_matrix(cfg.pair(rx).n, cfg.pair(tx).m, &mut rng)
                    }
                })
                .collect(),
        ),
        ScalarField::Prime(p) => Links::Prime(
            (0..k * k)
                .map(|idx| {
                    let (rx, tx) = (idx / k, idx % k);
                    if rx == tx {
                        DMatrix::zeros(0, 0)
                    } else {
                        let (rows, cols) = (cfg.pair(rx).n, cfg.pair(tx).m);
                        let data: Vec<u64> = (0..rows * cols).map(|_| rng.random_range(0..p)).collect();
                        DMatrix::from_row_slice(rows, cols, &data)
                    }
                })
                .collect(),
        ),
    };
    Ok(ChannelSet {
        field,
        seed,
        k,
        links,
        direct: None,
    })
}

impl ChannelSet {
    /// Builds a complex channel set from explicit matrices. `cross` is indexed
    /// `rx * K + tx`; diagonal entries are ignored.
    pub fn from_complex(cfg: &NetworkConfig, cross: Vec<DMatrix<C64>>) -> Result<Self> {
        let k = cfg.k();
        if cross.len() != k * k {
            return Err(Error::ShapeMismatch(format!(
                "expected {} link slots, got {}",
                k * k,
                cross.len()
            )));
        }
        let set = ChannelSet {
            field: ScalarField::Complex,
            seed: 0,
            k,
            links: Links::Complex(cross),
            direct: None,
        };
        set.check_shapes(cfg)?;
        Ok(set)
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Cross link H_kj, zero-based. Panics on a prime-field set or k == j.
    pub fn complex(&self, rx: usize, tx: usize) -> &DMatrix<C64> {
        assert_ne!(rx, tx, "cross links only");
        match &self.links {
            Links::Complex(m) => &m[rx * self.k + tx],
            Links::Prime(_) => panic!("complex link requested from a prime-field channel set"),
        }
    }

    /// Cross link H_kj over GF(p), zero-based. Panics on a complex set or k == j.
    pub fn prime(&self, rx: usize, tx: usize) -> &DMatrix<u64> {
        assert_ne!(rx, tx, "cross links only");
        match &self.links {
            Links::Prime(m) => &m[rx * self.k + tx],
            Links::Complex(_) => panic!("prime link requested from a complex channel set"),
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self.links, Links::Complex(_))
    }

    /// Direct link H_kk, zero-based.
    pub fn direct(&self, k: usize) -> Option<&DMatrix<C64>> {
        self.direct.as_ref().map(|d| &d[k])
    }

    pub fn has_direct_links(&self) -> bool {
        self.direct.is_some()
    }

    /// Samples the direct links H_kk. Complex mode only.
    pub fn with_direct_links(mut self, cfg: &NetworkConfig) -> Result<Self> {
        if !self.is_complex() {
            return Err(Error::WrongField {
                expected: "complex",
                found: "prime",
            });
        }
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(self.seed, DIRECT_LINK_STREAM));
        self.direct = Some(
            cfg.pairs()
                .iter()
                .map(|p| random_complex_matrix(p.n, p.m, &mut rng))
                .collect(),
        );
        Ok(self)
    }

    /// Installs explicit direct links.
    pub fn set_direct_links(&mut self, direct: Vec<DMatrix<C64>>) {
        self.direct = Some(direct);
    }

    /// Confirms every cross link has shape N_k x M_j.
    pub fn check_shapes(&self, cfg: &NetworkConfig) -> Result<()> {
        if cfg.k() != self.k {
            return Err(Error::ShapeMismatch(format!(
                "channel set has {} pairs, configuration has {}",
                self.k,
                cfg.k()
            )));
        }
        for rx in 0..self.k {
            for tx in (0..self.k).filter(|&t| t != rx) {
                let shape = match &self.links {
                    Links::Complex(m) => m[rx * self.k + tx].shape(),
                    Links::Prime(m) => m[rx * self.k + tx].shape(),
                };
                let want = (cfg.pair(rx).n, cfg.pair(tx).m);
                if shape != want {
                    return Err(Error::ShapeMismatch(format!(
                        "H_{}{} is {}x{}, expected {}x{}",
                        rx + 1,
                        tx + 1,
                        shape.0,
                        shape.1,
                        want.0,
                        want.1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Full decorrelators U_k (N_k x d_k) and precoders V_k (M_k x d_k).
#[derive(Debug, Clone, PartialEq)]
pub struct TransceiverSet {
    pub u: Vec<DMatrix<C64>>,
    pub v: Vec<DMatrix<C64>>,
}

/// Reduced transceiver variables after normalizing the top d x d blocks to
/// the identity.
///
/// `u_conj[k]` is (N_k - d_k) x d_k and holds the *conjugated* decorrelator
/// entries: `u_conj[k][(n, p)]` is the unknown that multiplies
/// h_kj(d_k + n, q) in the reduced constraint polynomial. `v[j]` is
/// (M_j - d_j) x d_j and holds the precoder entries as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTransceivers {
    pub u_conj: Vec<DMatrix<C64>>,
    pub v: Vec<DMatrix<C64>>,
}

impl ReducedTransceivers {
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        Self {
            u_conj: cfg.pairs().iter().map(|p| DMatrix::zeros(p.rx_free(), p.d)).collect(),
            v: cfg.pairs().iter().map(|p| DMatrix::zeros(p.tx_free(), p.d)).collect(),
        }
    }

    /// Entries drawn i.i.d. circularly-symmetric standard normal.
    pub fn random(cfg: &NetworkConfig, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let u_conj = cfg
            .pairs()
            .iter()
            .map(|p| random_complex_matrix(p.rx_free(), p.d, &mut rng))
            .collect();
        let v = cfg
            .pairs()
            .iter()
            .map(|p| random_complex_matrix(p.tx_free(), p.d, &mut rng))
            .collect();
        Self { u_conj, v }
    }

    pub fn check_shapes(&self, cfg: &NetworkConfig) -> Result<()> {
        if self.u_conj.len() != cfg.k() || self.v.len() != cfg.k() {
            return Err(Error::ShapeMismatch("reduced transceiver count differs from K".into()));
        }
        for (k, p) in cfg.pairs().iter().enumerate() {
            if self.u_conj[k].shape() != (p.rx_free(), p.d) || self.v[k].shape() != (p.tx_free(), p.d) {
                return Err(Error::ShapeMismatch(format!(
                    "reduced transceivers of pair {} have the wrong shape",
                    k + 1
                )));
            }
        }
        Ok(())
    }
}

/// Config file shared with the CLI:
/// `{ "pairs": [{"M":..,"N":..,"d":..}, ...], "seed": int, "field": "complex" | {"prime": int} }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub config: NetworkConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<ScalarField>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::DEFAULT_PRIME;

    fn sym(k: usize, m: usize, n: usize, d: usize) -> NetworkConfig {
        NetworkConfig::symmetric(k, m, n, d).unwrap()
    }

    #[test]
    fn validation_examples() {
        assert!(validate_config(&sym(3, 2, 2, 1)).admissible);
        let bad = NetworkConfig::new(vec![PairConfig::new(1, 2, 2)]).unwrap();
        let report = validate_config(&bad);
        assert!(!report.admissible);
        assert_eq!(report.violations[0].pair, 1);
        assert!(validate_config(&sym(1, 4, 4, 2)).admissible);
    }

    #[test]
    fn rejects_degenerate_configs() {
        assert!(NetworkConfig::new(vec![]).is_err());
        assert!(NetworkConfig::new(vec![PairConfig::new(0, 2, 1)]).is_err());
        assert!(serde_json::from_str::<NetworkConfig>(r#"{"pairs":[]}"#).is_err());
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(scale_config(&sym(3, 2, 2, 1), 2).unwrap(), sym(3, 4, 4, 2));
        let cfg = NetworkConfig::new(vec![PairConfig::new(2, 3, 1), PairConfig::new(3, 2, 1)]).unwrap();
        assert_eq!(scale_config(&cfg, 1).unwrap(), cfg);
        let scaled = scale_config(&cfg, 3).unwrap();
        assert_eq!(scaled.pairs(), &[PairConfig::new(6, 9, 3), PairConfig::new(9, 6, 3)]);
        assert!(matches!(
            scale_config(&sym(2, usize::MAX / 2, 2, 1), 3),
            Err(Error::ScaleOverflow { .. })
        ));
    }

    #[test]
    fn dims_examples() {
        assert_eq!(hall_dims(&sym(3, 2, 2, 1)), (6, 6));
        // 4*3*9 rows, 4*3*(7+8-6) columns
        assert_eq!(hall_dims(&sym(4, 7, 8, 3)), (108, 108));
        assert_eq!(hall_dims(&sym(1, 4, 4, 2)), (0, 8));
        assert_eq!(hall_dims(&sym(4, 2, 2, 1)), (12, 8));
    }

    #[test]
    fn sampling_shapes_and_determinism() {
        let cfg = sym(3, 2, 2, 1);
        let a = sample_channels(&cfg, 7, ScalarField::Complex).unwrap();
        let b = sample_channels(&cfg, 7, ScalarField::Complex).unwrap();
        assert_eq!(a, b);
        let mut count = 0;
        for rx in 0..3 {
            for tx in (0..3).filter(|&t| t != rx) {
                assert_eq!(a.complex(rx, tx).shape(), (2, 2));
                count += 1;
            }
        }
        assert_eq!(count, 6);
        assert!(!a.has_direct_links());
    }

    #[test]
    fn prime_entries_in_range() {
        let cfg = NetworkConfig::new(vec![PairConfig::new(3, 2, 1), PairConfig::new(2, 4, 2)]).unwrap();
        let ch = sample_channels(&cfg, 1, ScalarField::Prime(DEFAULT_PRIME)).unwrap();
        assert_eq!(ch.prime(0, 1).shape(), (2, 2));
        assert_eq!(ch.prime(1, 0).shape(), (4, 3));
        assert!(ch.prime(1, 0).iter().all(|&x| x < DEFAULT_PRIME));
        assert!(sample_channels(&cfg, 1, ScalarField::Prime(65_537)).is_err());
    }

    #[test]
    fn sampling_rejects_inadmissible() {
        let bad = NetworkConfig::new(vec![PairConfig::new(1, 2, 2), PairConfig::new(2, 2, 1)]).unwrap();
        assert!(matches!(
            sample_channels(&bad, 0, ScalarField::Complex),
            Err(Error::NotAdmissible { pair: 1, .. })
        ));
    }

    #[test]
    fn direct_links_do_not_perturb_cross_links() {
        let cfg = sym(3, 3, 2, 1);
        let plain = sample_channels(&cfg, 11, ScalarField::Complex).unwrap();
        let full = plain.clone().with_direct_links(&cfg).unwrap();
        assert_eq!(plain.complex(0, 2), full.complex(0, 2));
        assert_eq!(full.direct(1).unwrap().shape(), (2, 3));
    }

    #[test]
    fn distinct_seeds_give_distinct_channels() {
        let cfg = sym(2, 2, 2, 1);
        let mut seen: Vec<DMatrix<C64>> = Vec::new();
        for seed in 0..100 {
            let ch = sample_channels(&cfg, seed, ScalarField::Complex).unwrap();
            let m = ch.complex(0, 1).clone();
            assert!(seen.iter().all(|s| *s != m));
            seen.push(m);
        }
    }

    #[test]
    fn config_file_round_trip() {
        let text = r#"{"pairs":[{"M":2,"N":2,"d":1},{"M":3,"N":2,"d":1}],"seed":7,"field":"complex"}"#;
        let file = ConfigFile::parse(text).unwrap();
        assert_eq!(file.seed, Some(7));
        assert_eq!(file.field, Some(ScalarField::Complex));
        assert_eq!(file.config.pair(1), &PairConfig::new(3, 2, 1));
        let minimal = ConfigFile::parse(r#"{"pairs":[{"M":4,"N":4,"d":2}]}"#).unwrap();
        assert_eq!(minimal.seed, None);
        assert!(ConfigFile::parse(r#"{"pairs":[{"M":4,"N":4"#).is_err());
    }

    #[test]
    fn display_forms() {
        assert_eq!(sym(4, 7, 8, 3).to_string(), "(7x8,3)^4");
        let cfg = NetworkConfig::new(vec![PairConfig::new(2, 3, 1), PairConfig::new(3, 2, 1)]).unwrap();
        assert_eq!(cfg.to_string(), "{(2,3,1),(3,2,1)}");
    }
}
