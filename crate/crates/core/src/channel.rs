//! System configuration, exchange patterns and random channel draws.
//!
//! Node identities are 1-based everywhere in the public API: node `i`
//! ranges over `1..=K` and pair `(i, K+1-i)` means what it says.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block_diagonal, complex_gaussian, ComplexMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of source nodes.
    pub k: usize,
    /// Antennas per source node.
    pub m: usize,
    /// Antennas at the relay.
    pub n: usize,
}

impl SystemConfig {
    pub fn new(k: usize, m: usize, n: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidConfig(format!("K must be >= 2, got {k}")));
        }
        if m == 0 || n == 0 {
            return Err(Error::InvalidConfig(format!(
                "M and N must be >= 1, got M={m}, N={n}"
            )));
        }
        Ok(Self { k, m, n })
    }
}

/// The three special exchange models with closed-form DoF results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Every node exchanges with every other node.
    Y,
    /// Node `i` exchanges only with node `K+1-i`.
    Pairwise,
    /// Two halves; every node exchanges with every node of the other half.
    X,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Y => "y",
            Model::Pairwise => "pairwise",
            Model::X => "x",
        }
    }

    /// Number of partners each node exchanges with.
    pub fn degree(self, k: usize) -> usize {
        match self {
            Model::Y => k - 1,
            Model::Pairwise => 1,
            Model::X => k / 2,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "y" => Ok(Model::Y),
            "pairwise" => Ok(Model::Pairwise),
            "x" => Ok(Model::X),
            other => Err(Error::InvalidConfig(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    Y,
    Pairwise,
    X,
    LCluster,
}

impl Pattern {
    pub fn model(self) -> Option<Model> {
        match self {
            Pattern::Y => Some(Model::Y),
            Pattern::Pairwise => Some(Model::Pairwise),
            Pattern::X => Some(Model::X),
            Pattern::LCluster => None,
        }
    }
}

impl From<Model> for Pattern {
    fn from(m: Model) -> Self {
        match m {
            Model::Y => Pattern::Y,
            Model::Pairwise => Pattern::Pairwise,
            Model::X => Pattern::X,
        }
    }
}

impl std::str::FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l-cluster" | "lcluster" => Ok(Pattern::LCluster),
            other => other.parse::<Model>().map(Pattern::from),
        }
    }
}

/// Unordered node pair `(i, j)` with `i < j`, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
}

impl Pair {
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "a pair needs two distinct nodes");
        Self {
            i: a.min(b),
            j: a.max(b),
        }
    }

    pub fn contains(&self, node: usize) -> bool {
        self.i == node || self.j == node
    }

    /// The other end of the pair as seen from `node`.
    pub fn partner(&self, node: usize) -> Option<usize> {
        if node == self.i {
            Some(self.j)
        } else if node == self.j {
            Some(self.i)
        } else {
            None
        }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

/// Stream counts per directed node pair. Always symmetric with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct DataSwitchMatrix {
    d: Vec<Vec<usize>>,
}

impl TryFrom<Vec<Vec<usize>>> for DataSwitchMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<usize>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<DataSwitchMatrix> for Vec<Vec<usize>> {
    fn from(d: DataSwitchMatrix) -> Self {
        d.d
    }
}

impl DataSwitchMatrix {
    pub fn from_rows(rows: Vec<Vec<usize>>) -> Result<Self> {
        let k = rows.len();
        if k < 2 {
            return Err(Error::InvalidSwitchMatrix(format!("need K >= 2 rows, got {k}")));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidSwitchMatrix(format!(
                    "row {} has {} entries, expected {k}",
                    i + 1,
                    row.len()
                )));
            }
            if row[i] != 0 {
                return Err(Error::InvalidSwitchMatrix(format!(
                    "diagonal entry ({0},{0}) is {1}, must be 0",
                    i + 1,
                    row[i]
                )));
            }
        }
        let asymmetric = (0..k)
            .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
            .find(|&(i, j)| rows[i][j] != rows[j][i]);
        if let Some((i, j)) = asymmetric {
            return Err(Error::InvalidSwitchMatrix(format!(
                "asymmetric entries ({},{})={} and ({},{})={}",
                i + 1,
                j + 1,
                rows[i][j],
                j + 1,
                i + 1,
                rows[j][i]
            )));
        }
        Ok(Self { d: rows })
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            d: vec![vec![0; k]; k],
        }
    }

    pub fn k(&self) -> usize {
        self.d.len()
    }

    /// Streams from node `i` to node `j` (1-based).
    pub fn streams(&self, i: usize, j: usize) -> usize {
        self.d[i - 1][j - 1]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.d
    }

    pub fn d_total(&self) -> usize {
        self.d.iter().flatten().sum()
    }

    /// Streams node `i` sends in total, `Σ_j d_{i,j}`.
    pub fn node_streams(&self, i: usize) -> usize {
        self.d[i - 1].iter().sum()
    }

    pub fn max_node_streams(&self) -> usize {
        (1..=self.k()).map(|i| self.node_streams(i)).max().unwrap_or(0)
    }

    pub fn max_streams(&self) -> usize {
        self.d.iter().flatten().copied().max().unwrap_or(0)
    }

    /// Active pairs in lexicographic order of `(min, max)`. This order fixes
    /// the block layout of the compression matrix, the effective matrix and
    /// the network-coded symbol vector.
    pub fn pair_order(&self) -> Vec<Pair> {
        let k = self.k();
        let mut out = Vec::new();
        for i in 1..=k {
            for j in (i + 1)..=k {
                if self.streams(i, j) > 0 {
                    out.push(Pair { i, j });
                }
            }
        }
        out
    }

    /// Partners of node `i` in increasing order.
    pub fn partners(&self, i: usize) -> Vec<usize> {
        (1..=self.k()).filter(|&j| self.streams(i, j) > 0).collect()
    }

    /// The common per-pair stream count if every active pair carries the same number.
    pub fn uniform_streams(&self) -> Option<usize> {
        let mut values = self.d.iter().flatten().copied().filter(|&v| v > 0);
        let first = values.next()?;
        values.all(|v| v == first).then_some(first)
    }

    /// Same support, every active entry replaced by `streams`.
    pub fn with_uniform_streams(&self, streams: usize) -> Self {
        Self {
            d: self
                .d
                .iter()
                .map(|row| row.iter().map(|&v| if v > 0 { streams } else { 0 }).collect())
                .collect(),
        }
    }

    /// Which special model this matrix follows, judged by its support.
    pub fn detect_model(&self) -> Option<Model> {
        let x = self.uniform_streams()?;
        [Model::Y, Model::Pairwise, Model::X]
            .into_iter()
            .find(|&m| make_pattern(m.into(), self.k(), x, None).is_ok_and(|p| &p == self))
    }
}

/// Builds the data switch matrix of a named exchange pattern.
///
/// `clusters` is required for [`Pattern::LCluster`] and ignored otherwise.
pub fn make_pattern(
    pattern: Pattern,
    k: usize,
    per_pair_streams: usize,
    clusters: Option<usize>,
) -> Result<DataSwitchMatrix> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("K must be >= 2, got {k}")));
    }
    if per_pair_streams == 0 {
        return Err(Error::InvalidConfig("per_pair_streams must be >= 1".into()));
    }
    let exchanges: Box<dyn Fn(usize, usize) -> bool> = match pattern {
        Pattern::Y => Box::new(|i, j| i != j),
        Pattern::Pairwise => {
            if !k.is_multiple_of(2) {
                return Err(Error::InvalidConfig(format!("pairwise pattern needs even K, got {k}")));
            }
            Box::new(move |i, j| i + j == k + 1)
        }
        Pattern::X => {
            if !k.is_multiple_of(2) {
                return Err(Error::InvalidConfig(format!("x pattern needs even K, got {k}")));
            }
            let half = k / 2;
            Box::new(move |i, j| (i <= half) != (j <= half))
        }
        Pattern::LCluster => {
            let l = clusters
                .ok_or_else(|| Error::InvalidConfig("l-cluster pattern needs L".into()))?;
            if l == 0 || !k.is_multiple_of(l) {
                return Err(Error::InvalidConfig(format!("K={k} is not divisible by L={l}")));
            }
            let size = k / l;
            if size < 2 {
                return Err(Error::InvalidConfig(format!(
                    "clusters of size {size} cannot exchange anything"
                )));
            }
            Box::new(move |i, j| i != j && (i - 1) / size == (j - 1) / size)
        }
    };
    let d = (1..=k)
        .map(|i| {
            (1..=k)
                .map(|j| if exchanges(i, j) { per_pair_streams } else { 0 })
                .collect()
        })
        .collect();
    DataSwitchMatrix::from_rows(d)
}

pub fn d_total(d: &DataSwitchMatrix) -> usize {
    d.d_total()
}

/// One draw of all uplink (`N x M`) and downlink (`M x N`) channel matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub uplink: Vec<ComplexMatrix>,
    pub downlink: Vec<ComplexMatrix>,
    pub seed: u64,
}

impl ChannelRealization {
    pub fn k(&self) -> usize {
        self.uplink.len()
    }

    /// Antennas per source.
    pub fn m(&self) -> usize {
        self.uplink.first().map_or(0, |h| h.ncols())
    }

    /// Antennas at the relay.
    pub fn n(&self) -> usize {
        self.uplink.first().map_or(0, |h| h.nrows())
    }

    /// Uplink channel from node `i` (1-based) to the relay.
    pub fn h(&self, i: usize) -> &ComplexMatrix {
        &self.uplink[i - 1]
    }

    /// Downlink channel from the relay to node `i` (1-based).
    pub fn g(&self, i: usize) -> &ComplexMatrix {
        &self.downlink[i - 1]
    }

    /// Swaps roles: uplinks become the transposed downlinks. The
    /// broadcast phase is designed as the uplink problem of this realization.
    pub fn transposed_downlink(&self) -> ChannelRealization {
        ChannelRealization {
            uplink: self.downlink.iter().map(|g| g.transpose()).collect(),
            downlink: self.uplink.iter().map(|h| h.transpose()).collect(),
            seed: self.seed ^ 0x5bd1_e995_0000_0001,
        }
    }
}

/// Draws `K` uplinks then `K` downlinks from one seeded stream.
pub fn sample_channels(cfg: &SystemConfig, seed: u64) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uplink = (0..cfg.k)
        .map(|_| complex_gaussian(cfg.n, cfg.m, &mut rng))
        .collect();
    let downlink = (0..cfg.k)
        .map(|_| complex_gaussian(cfg.m, cfg.n, &mut rng))
        .collect();
    ChannelRealization {
        uplink,
        downlink,
        seed,
    }
}

/// `t`-slot symbol extension: every channel becomes block diagonal with `t`
/// identical copies (the channel stays constant over the extension).
pub fn symbol_extend(ch: &ChannelRealization, t: usize) -> ChannelRealization {
    assert!(t >= 1, "extension factor must be >= 1");
    let extend = |m: &ComplexMatrix| block_diagonal(std::iter::repeat_n(m, t));
    ChannelRealization {
        uplink: ch.uplink.iter().map(extend).collect(),
        downlink: ch.downlink.iter().map(extend).collect(),
        seed: ch.seed,
    }
}

/// Keeps the first `m_used` source antennas and the first `n_used` relay
/// antennas of every channel.
pub fn deactivate_antennas(
    ch: &ChannelRealization,
    m_used: usize,
    n_used: usize,
) -> Result<ChannelRealization> {
    let (m, n) = (ch.m(), ch.n());
    if m_used == 0 || n_used == 0 || m_used > m || n_used > n {
        return Err(Error::InvalidConfig(format!(
            "cannot use {m_used} of {m} source antennas and {n_used} of {n} relay antennas"
        )));
    }
    Ok(ChannelRealization {
        uplink: ch
            .uplink
            .iter()
            .map(|h| h.view((0, 0), (n_used, m_used)).into_owned())
            .collect(),
        downlink: ch
            .downlink
            .iter()
            .map(|g| g.view((0, 0), (m_used, n_used)).into_owned())
            .collect(),
        seed: ch.seed,
    })
}

/// JSON scenario description consumed by the command-line front-end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Pattern>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit_d: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_pair_streams: Option<usize>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("scenario JSON: {e}")))
    }

    /// Validates the scenario and builds its configuration and switch matrix.
    pub fn resolve(&self) -> Result<(SystemConfig, DataSwitchMatrix)> {
        let cfg = SystemConfig::new(self.k, self.m, self.n)?;
        let d = match (&self.pattern, &self.explicit_d) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "give either 'pattern' or 'explicit_d', not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "one of 'pattern' or 'explicit_d' is required".into(),
                ))
            }
            (Some(p), None) => {
                let streams = self.per_pair_streams.ok_or_else(|| {
                    Error::InvalidConfig("'per_pair_streams' is required with 'pattern'".into())
                })?;
                make_pattern(*p, self.k, streams, self.l)?
            }
            (None, Some(rows)) => DataSwitchMatrix::from_rows(rows.clone())?,
        };
        if d.k() != cfg.k {
            return Err(Error::InvalidConfig(format!(
                "explicit_d is {0}x{0} but K={1}",
                d.k(),
                cfg.k
            )));
        }
        Ok((cfg, d))
    }
}
