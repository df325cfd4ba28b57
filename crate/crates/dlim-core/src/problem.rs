//! Ising problem instances, benchmark graph generators, and the exhaustive
//! ground-state oracle used as the denominator reference for success
//! statistics.
//!
//! Energies follow the ordered-pair convention
//!
//! ```text
//! H = -sum_{i != j} J_ij s_i s_j + sum_i h_i s_i
//! ```
//!
//! so each unordered coupling contributes twice. Success statistics only
//! depend on the energy ordering, which is convention-invariant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Real;

/// Largest spin count the exhaustive oracle will enumerate.
pub const ORACLE_MAX_SPINS: usize = 24;

/// Retry budget for connected random-graph generation.
const CONNECT_RETRIES: usize = 1000;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("spin count must be at least 2, got {0}")]
    TooFewSpins(usize),
    #[error("coupling matrix must be symmetric (J[{i}][{j}] != J[{j}][{i}])")]
    NotSymmetric { i: usize, j: usize },
    #[error("coupling matrix must have zero diagonal (J[{0}][{0}] != 0)")]
    NonzeroDiagonal(usize),
    #[error("configuration length {got} does not match problem size {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("spin values must be exactly -1 or +1, got {0} at index {1}")]
    BadSpinValue(i8, usize),
    #[error("Moebius ladder needs an even node count >= 4, got {0}")]
    BadLadderSize(usize),
    #[error("edge density must lie in (0, 1], got {0}")]
    BadDensity(f64),
    #[error("weight set must not be empty")]
    EmptyWeightSet,
    #[error("could not generate a connected graph in {0} attempts")]
    Disconnected(usize),
    #[error("enumeration too large: n = {n} exceeds oracle guard of {max} spins")]
    EnumerationTooLarge { n: usize, max: usize },
    #[error("problem file parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown fixture graph `{0}`")]
    UnknownFixture(String),
}

/// A configuration of `n` binary spins, each exactly -1 or +1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    s: Vec<i8>,
}

impl SpinConfig {
    pub fn new(s: Vec<i8>) -> Result<Self, ProblemError> {
        for (i, &v) in s.iter().enumerate() {
            if v != 1 && v != -1 {
                return Err(ProblemError::BadSpinValue(v, i));
            }
        }
        Ok(Self { s })
    }

    /// All spins up.
    pub fn all_up(n: usize) -> Self {
        Self { s: vec![1; n] }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.s
    }

    /// The globally flipped configuration -s.
    pub fn flipped(&self) -> Self {
        Self {
            s: self.s.iter().map(|&v| -v).collect(),
        }
    }

    /// Compact +-+ rendering for logs and CLI output.
    pub fn compact(&self) -> String {
        self.s
            .iter()
            .map(|&v| if v > 0 { '+' } else { '-' })
            .collect()
    }
}

/// An Ising instance: symmetric couplings `J`, bias fields `h`, and a
/// provenance label.
#[derive(Debug, Clone)]
pub struct IsingProblem<T: Real> {
    n: usize,
    j: Vec<T>,
    h: Vec<T>,
    label: String,
}

impl<T: Real> IsingProblem<T> {
    /// Build a problem from a dense row-major `n x n` coupling matrix.
    pub fn new(n: usize, j: Vec<T>, h: Vec<T>, label: impl Into<String>) -> Result<Self, ProblemError> {
        if n < 2 {
            return Err(ProblemError::TooFewSpins(n));
        }
        if j.len() != n * n {
            return Err(ProblemError::DimensionMismatch {
                expected: n * n,
                got: j.len(),
            });
        }
        if h.len() != n {
            return Err(ProblemError::DimensionMismatch {
                expected: n,
                got: h.len(),
            });
        }
        for i in 0..n {
            if j[i * n + i] != T::zero() {
                return Err(ProblemError::NonzeroDiagonal(i));
            }
            for k in (i + 1)..n {
                if j[i * n + k] != j[k * n + i] {
                    return Err(ProblemError::NotSymmetric { i, j: k });
                }
            }
        }
        Ok(Self {
            n,
            j,
            h,
            label: label.into(),
        })
    }

    /// Build from the upper-triangle edge list; `h = 0`.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize, T)],
        label: impl Into<String>,
    ) -> Result<Self, ProblemError> {
        let mut j = vec![T::zero(); n * n];
        for &(a, b, w) in edges {
            j[a * n + b] = w;
            j[b * n + a] = w;
        }
        Self::new(n, j, vec![T::zero(); n], label)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn coupling(&self, i: usize, j: usize) -> T {
        self.j[i * self.n + j]
    }

    /// Row `i` of the coupling matrix.
    #[inline]
    pub fn coupling_row(&self, i: usize) -> &[T] {
        &self.j[i * self.n..(i + 1) * self.n]
    }

    pub fn bias(&self, i: usize) -> T {
        self.h[i]
    }

    pub fn biases(&self) -> &[T] {
        &self.h
    }

    /// True when every bias field is exactly zero.
    pub fn zero_bias(&self) -> bool {
        self.h.iter().all(|&v| v == T::zero())
    }

    /// Number of unordered nonzero couplings.
    pub fn edge_count(&self) -> usize {
        let mut count = 0;
        for i in 0..self.n {
            for k in (i + 1)..self.n {
                if self.coupling(i, k) != T::zero() {
                    count += 1;
                }
            }
        }
        count
    }

    /// Vertex degree in the coupling graph.
    pub fn degree(&self, i: usize) -> usize {
        self.coupling_row(i)
            .iter()
            .filter(|&&w| w != T::zero())
            .count()
    }

    /// Ising energy of `config` under the ordered-pair convention.
    pub fn energy(&self, config: &SpinConfig) -> Result<T, ProblemError> {
        if config.len() != self.n {
            return Err(ProblemError::DimensionMismatch {
                expected: self.n,
                got: config.len(),
            });
        }
        let s = config.spins();
        let mut pair = T::zero();
        for i in 0..self.n {
            let si = T::of(s[i] as f64);
            let row = self.coupling_row(i);
            for k in (i + 1)..self.n {
                pair = pair + row[k] * si * T::of(s[k] as f64);
            }
        }
        let mut bias = T::zero();
        for i in 0..self.n {
            bias = bias + self.h[i] * T::of(s[i] as f64);
        }
        // each unordered pair appears twice in the ordered sum
        Ok(-(pair + pair) + bias)
    }

    /// Serialize to the plain-text exchange format: `n`, then `n` rows of
    /// `J`, then one row of `h`, whitespace separated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{}\n", self.n));
        for i in 0..self.n {
            let row: Vec<String> = self
                .coupling_row(i)
                .iter()
                .map(|w| format!("{}", w))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        let hrow: Vec<String> = self.h.iter().map(|w| format!("{}", w)).collect();
        out.push_str(&hrow.join(" "));
        out.push('\n');
        out
    }

    /// Parse the plain-text exchange format produced by [`Self::to_text`].
    pub fn from_text(text: &str, label: impl Into<String>) -> Result<Self, ProblemError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (line_no, first) = lines.next().ok_or(ProblemError::Parse {
            line: 1,
            message: "empty file".into(),
        })?;
        let n: usize = first.parse().map_err(|_| ProblemError::Parse {
            line: line_no + 1,
            message: format!("expected spin count, got `{first}`"),
        })?;
        let parse_row = |line_no: usize, line: &str| -> Result<Vec<T>, ProblemError> {
            line.split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map(T::of).map_err(|_| ProblemError::Parse {
                        line: line_no + 1,
                        message: format!("bad number `{tok}`"),
                    })
                })
                .collect()
        };
        let mut j = Vec::with_capacity(n * n);
        for _ in 0..n {
            let (line_no, line) = lines.next().ok_or(ProblemError::Parse {
                line: 0,
                message: "truncated coupling matrix".into(),
            })?;
            let row = parse_row(line_no, line)?;
            if row.len() != n {
                return Err(ProblemError::Parse {
                    line: line_no + 1,
                    message: format!("expected {n} entries, got {}", row.len()),
                });
            }
            j.extend(row);
        }
        let (line_no, line) = lines.next().ok_or(ProblemError::Parse {
            line: 0,
            message: "missing bias row".into(),
        })?;
        let h = parse_row(line_no, line)?;
        if h.len() != n {
            return Err(ProblemError::Parse {
                line: line_no + 1,
                message: format!("expected {n} bias entries, got {}", h.len()),
            });
        }
        Self::new(n, j, h, label)
    }
}

/// Result of exhaustive ground-state search.
#[derive(Debug, Clone)]
pub struct GroundTruth<T: Real> {
    /// Exact global minimum of the Hamiltonian.
    pub energy: T,
    /// Every configuration attaining the minimum.
    pub configs: Vec<SpinConfig>,
    /// Number of states examined by the enumeration.
    pub enumerated: u64,
}

impl<T: Real> GroundTruth<T> {
    pub fn degeneracy(&self) -> usize {
        self.configs.len()
    }
}

/// Moebius ladder on `n_nodes` vertices: the even cycle plus all antipodal
/// rungs, every edge set to `coupling`; biases zero.
pub fn mobius_ladder<T: Real>(n_nodes: usize, coupling: T) -> Result<IsingProblem<T>, ProblemError> {
    if n_nodes < 4 || n_nodes % 2 != 0 {
        return Err(ProblemError::BadLadderSize(n_nodes));
    }
    let mut edges = Vec::with_capacity(n_nodes + n_nodes / 2);
    for i in 0..n_nodes {
        edges.push((i, (i + 1) % n_nodes, coupling));
    }
    for i in 0..n_nodes / 2 {
        edges.push((i, i + n_nodes / 2, coupling));
    }
    IsingProblem::from_edges(n_nodes, &edges, format!("mobius{n_nodes}"))
}

/// Seeded Erdos-Renyi-style instance: each unordered pair becomes an edge
/// with probability `density`, weights drawn uniformly from `weight_set`.
/// Resamples until the graph is connected; deterministic in `seed`.
pub fn random_graph<T: Real>(
    n: usize,
    density: f64,
    weight_set: &[T],
    seed: u64,
) -> Result<IsingProblem<T>, ProblemError> {
    if n < 2 {
        return Err(ProblemError::TooFewSpins(n));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(ProblemError::BadDensity(density));
    }
    if weight_set.is_empty() {
        return Err(ProblemError::EmptyWeightSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..CONNECT_RETRIES {
        let mut edges = Vec::new();
        for i in 0..n {
            for k in (i + 1)..n {
                if rng.random::<f64>() < density {
                    let w = weight_set[rng.random_range(0..weight_set.len())];
                    edges.push((i, k, w));
                }
            }
        }
        if connected(n, &edges) {
            let label = format!("random-n{n}-d{density}-s{seed}");
            return IsingProblem::from_edges(n, &edges, label);
        }
    }
    Err(ProblemError::Disconnected(CONNECT_RETRIES))
}

fn connected<T>(n: usize, edges: &[(usize, usize, T)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b, _) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                stack.push(u);
            }
        }
    }
    count == n
}

/// Exhaustive ground-state search over all `2^n` configurations (or
/// `2^(n-1)` using the global-flip symmetry when all biases vanish).
///
/// Enumeration walks a Gray code with incremental energy updates; the
/// returned minimum and its attaining set are re-evaluated with the direct
/// energy sum, so they are bit-consistent with [`IsingProblem::energy`].
pub fn brute_force_ground<T: Real>(problem: &IsingProblem<T>) -> Result<GroundTruth<T>, ProblemError> {
    let n = problem.n();
    if n > ORACLE_MAX_SPINS {
        return Err(ProblemError::EnumerationTooLarge {
            n,
            max: ORACLE_MAX_SPINS,
        });
    }
    let symmetric = problem.zero_bias();
    // With the flip shortcut, spin 0 stays pinned at +1 and bit k of the
    // Gray counter drives spin k+1.
    let free = if symmetric { n - 1 } else { n };
    let offset = if symmetric { 1 } else { 0 };
    let total: u64 = 1u64 << free;

    let mut s: Vec<i8> = vec![1; n];
    let mut energy = problem
        .energy(&SpinConfig::all_up(n))
        .expect("dimensions match")
        .to_f64_lossy();
    let mut best = energy;
    // Loose capture band; candidates are re-checked exactly below.
    let band = 1e-9 * (1.0 + energy.abs());
    let mut candidates: Vec<SpinConfig> = vec![SpinConfig::all_up(n)];

    for m in 1..total {
        let k = offset + m.trailing_zeros() as usize;
        // Energy delta for flipping spin k while the rest stay put.
        let mut field = 0.0;
        let row = problem.coupling_row(k);
        for (idx, &w) in row.iter().enumerate() {
            field += w.to_f64_lossy() * s[idx] as f64;
        }
        let sk = s[k] as f64;
        energy += 4.0 * sk * field - 2.0 * problem.bias(k).to_f64_lossy() * sk;
        s[k] = -s[k];
        if energy < best + band {
            if energy < best {
                best = energy;
            }
            candidates.push(SpinConfig {
                s: s.clone(),
            });
        }
    }

    // Exact pass: direct evaluation removes incremental round-off.
    let mut exact_min: Option<T> = None;
    for cfg in &candidates {
        let e = problem.energy(cfg).expect("dimensions match");
        if exact_min.map_or(true, |m| e < m) {
            exact_min = Some(e);
        }
    }
    let exact_min = exact_min.expect("at least one candidate");
    let mut configs: Vec<SpinConfig> = Vec::new();
    for cfg in candidates {
        if problem.energy(&cfg).expect("dimensions match") == exact_min {
            if !configs.contains(&cfg) {
                configs.push(cfg);
            }
        }
    }
    if symmetric {
        let flipped: Vec<SpinConfig> = configs.iter().map(SpinConfig::flipped).collect();
        for cfg in flipped {
            if !configs.contains(&cfg) {
                configs.push(cfg);
            }
        }
    }
    configs.sort_by(|a, b| a.spins().cmp(b.spins()));

    Ok(GroundTruth {
        energy: exact_min,
        configs,
        enumerated: total,
    })
}

/// Frozen benchmark instances shipped with the crate.
///
/// `mobius8` is the antiferromagnetic Moebius ladder; `fig1b`-`fig1d` are
/// committed random instances standing in for unpublished benchmark
/// topologies. `fig1d` is the reference instance for coupling-strength
/// sweeps.
pub fn fixture<T: Real>(name: &str) -> Result<IsingProblem<T>, ProblemError> {
    match name {
        "mobius8" => mobius_ladder(8, T::of(-1.0)),
        "fig1b" => IsingProblem::from_text(include_str!("../data/fig1b.txt"), "fig1b"),
        "fig1c" => IsingProblem::from_text(include_str!("../data/fig1c.txt"), "fig1c"),
        "fig1d" => IsingProblem::from_text(include_str!("../data/fig1d.txt"), "fig1d"),
        other => Err(ProblemError::UnknownFixture(other.to_string())),
    }
}

/// Names accepted by [`fixture`].
pub const FIXTURE_NAMES: [&str; 4] = ["mobius8", "fig1b", "fig1c", "fig1d"];
