//! Unlabeled simple graphs, induced subgraph densities, and the
//! vertex-duplication up-down dynamics.
//!
//! States are stored in canonical form: the lexicographically smallest
//! upper-triangle adjacency bitstring (row-major) over all vertex labelings.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_traits::Zero;
use rand::Rng;
use serde::Deserialize;

use crate::chain::Instance;
use crate::error::{Error, Result};
use crate::rational::{binomial, binomial_f64, Rational};

/// Largest vertex count accepted by [`canonical_form`]. The search is exact
/// and exponential in the worst case.
pub const MAX_CANONICAL_VERTICES: usize = 16;

/// Number of bits in the upper triangle of an `n`-vertex adjacency matrix.
pub fn triangle_len(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Row-major index of the pair `i < j` in the upper triangle.
fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// A labeled simple graph, used for trajectories and as canonicalization input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledGraph {
    adj: Vec<Vec<bool>>,
}

impl LabeledGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            adj: vec![vec![false; n]; n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                g.set_edge(i, j, true);
            }
        }
        g
    }

    /// Validates symmetry and absence of loops.
    pub fn from_adjacency(adj: Vec<Vec<bool>>) -> Result<Self> {
        let n = adj.len();
        for (i, row) in adj.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidAdjacency(format!("row {i} has length {}", row.len())));
            }
            if row[i] {
                return Err(Error::InvalidAdjacency(format!("self-loop at {i}")));
            }
            for j in 0..i {
                if adj[i][j] != adj[j][i] {
                    return Err(Error::InvalidAdjacency(format!("asymmetric at ({j}, {i})")));
                }
            }
        }
        Ok(Self { adj })
    }

    /// Edges are 0-based vertex pairs.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::OutOfRange { index: i.max(j), len: n });
            }
            if i == j {
                return Err(Error::InvalidAdjacency(format!("self-loop at {i}")));
            }
            g.set_edge(i, j, true);
        }
        Ok(g)
    }

    /// Labeled graph whose upper triangle is `bits` (row-major).
    pub fn from_bits(n: usize, bits: &[bool]) -> Result<Self> {
        if bits.len() != triangle_len(n) {
            return Err(Error::Parse(format!(
                "{} bits given, {} expected for {n} vertices",
                bits.len(),
                triangle_len(n)
            )));
        }
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                g.set_edge(i, j, bits[pair_index(n, i, j)]);
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i][j]
    }

    pub fn set_edge(&mut self, i: usize, j: usize, on: bool) {
        assert_ne!(i, j, "no self-loops");
        self.adj[i][j] = on;
        self.adj[j][i] = on;
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].iter().filter(|&&b| b).count()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n()).map(|v| self.degree(v)).sum::<usize>() / 2
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.adj[i][j])
            .collect()
    }

    pub fn bits(&self) -> Vec<bool> {
        let n = self.n();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| self.adj[i][j])
            .collect()
    }

    /// Subgraph induced on `vertices`, relabeled in the given order.
    pub fn induced(&self, vertices: &[usize]) -> LabeledGraph {
        LabeledGraph {
            adj: vertices
                .iter()
                .map(|&a| vertices.iter().map(|&b| self.adj[a][b]).collect())
                .collect(),
        }
    }

    /// Upper-triangle mask of the subgraph induced on `vertices`, bit `t` for
    /// the `t`-th pair in row-major order.
    fn induced_mask(&self, vertices: &[usize]) -> usize {
        let mut mask = 0;
        let mut bit = 0;
        for (a, &u) in vertices.iter().enumerate() {
            for &w in &vertices[a + 1..] {
                if self.adj[u][w] {
                    mask |= 1 << bit;
                }
                bit += 1;
            }
        }
        mask
    }

    /// Appends a copy of vertex `v` (0-based) as the last vertex.
    pub fn duplicate_in_place(&mut self, v: usize, connect: bool) {
        let n = self.n();
        let mut row = self.adj[v].clone();
        row.push(false);
        for (u, r) in self.adj.iter_mut().enumerate() {
            r.push(row[u]);
        }
        row[v] = connect;
        self.adj[v][n] = connect;
        self.adj.push(row);
    }

    /// Removes vertex `v` (0-based); the last vertex takes its label.
    pub fn delete_in_place(&mut self, v: usize) {
        self.adj.swap_remove(v);
        for r in &mut self.adj {
            r.swap_remove(v);
        }
    }

    pub fn up_step_in_place<R: Rng + ?Sized>(&mut self, p: f64, rng: &mut R) {
        let v = rng.random_range(0..self.n());
        let connect = rng.random::<f64>() >= p;
        self.duplicate_in_place(v, connect);
    }

    pub fn down_step_in_place<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        assert!(self.n() >= 2, "down-step needs at least two vertices");
        let v = rng.random_range(0..self.n());
        self.delete_in_place(v);
    }

    pub fn try_canonical(&self) -> Result<UGraph> {
        canonical_form(&self.adj)
    }

    /// Panics above [`MAX_CANONICAL_VERTICES`].
    pub fn canonical(&self) -> UGraph {
        self.try_canonical().expect("graph too large to canonicalize")
    }

    /// Relabels so that vertex `perm[i]` becomes vertex `i`.
    pub fn relabel(&self, perm: &[usize]) -> LabeledGraph {
        self.induced(perm)
    }
}

/// An unlabeled simple graph in canonical form.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UGraph {
    n: usize,
    bits: Vec<bool>,
}

impl UGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.bits[pair_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.bits[pair_index(self.n, j, i)],
            std::cmp::Ordering::Equal => false,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn to_labeled(&self) -> LabeledGraph {
        LabeledGraph::from_bits(self.n, &self.bits).expect("stored bits have the right length")
    }

    pub fn bitstring(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    /// Canonical graph from an edge-list JSON document
    /// `{"n": 4, "edges": [[0, 1], [1, 2]]}` with 0-based vertices.
    pub fn from_edge_list_json(text: &str) -> Result<UGraph> {
        #[derive(Deserialize)]
        struct EdgeList {
            n: usize,
            edges: Vec<(usize, usize)>,
        }
        let doc: EdgeList = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if doc.n == 0 {
            return Err(Error::Parse("graph needs at least one vertex".into()));
        }
        LabeledGraph::from_edges(doc.n, &doc.edges)?.try_canonical()
    }

    /// Graph named `Kn` (complete), `En` or `nK1` (empty), `Pn` (path) or
    /// `Cn` (cycle, n ≥ 3).
    pub fn named(name: &str) -> Result<UGraph> {
        let bad = || Error::Parse(format!("unknown graph name {name:?}"));
        let (kind, count) = if let Some(k) = name.strip_suffix("K1").filter(|k| !k.is_empty()) {
            ('E', k)
        } else {
            let mut chars = name.chars();
            let kind = chars.next().ok_or_else(bad)?;
            (kind, chars.as_str())
        };
        let n: usize = count.parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        let g = match kind {
            'K' => LabeledGraph::complete(n),
            'E' => LabeledGraph::empty(n),
            'P' => LabeledGraph::from_edges(n, &(1..n).map(|i| (i - 1, i)).collect::<Vec<_>>())?,
            'C' if n >= 3 => {
                LabeledGraph::from_edges(n, &(0..n).map(|i| (i, (i + 1) % n)).collect::<Vec<_>>())?
            }
            _ => return Err(bad()),
        };
        g.try_canonical()
    }

    /// Removes vertex `v` (1-based) and canonicalizes.
    pub fn delete_vertex(&self, v: usize) -> Result<UGraph> {
        if self.n < 2 {
            return Err(Error::SizeMismatch("cannot delete from a one-vertex graph".into()));
        }
        if v == 0 || v > self.n {
            return Err(Error::OutOfRange { index: v, len: self.n });
        }
        let keep: Vec<usize> = (0..self.n).filter(|&u| u + 1 != v).collect();
        self.to_labeled().induced(&keep).try_canonical()
    }

    /// Adds a copy of vertex `v` (1-based) with the same neighbourhood,
    /// joined to `v` iff `connect`.
    pub fn duplicate_vertex(&self, v: usize, connect: bool) -> Result<UGraph> {
        if v == 0 || v > self.n {
            return Err(Error::OutOfRange { index: v, len: self.n });
        }
        let mut g = self.to_labeled();
        g.duplicate_in_place(v - 1, connect);
        g.try_canonical()
    }

    pub fn up_step_sample<R: Rng + ?Sized>(&self, p: f64, rng: &mut R) -> UGraph {
        let mut g = self.to_labeled();
        g.up_step_in_place(p, rng);
        g.canonical()
    }

    pub fn down_step_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> UGraph {
        let mut g = self.to_labeled();
        g.down_step_in_place(rng);
        g.canonical()
    }

    /// Pairs of vertices (0-based, `u < w`) with identical neighbourhoods
    /// outside the pair.
    pub fn twin_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        let mut out = Vec::new();
        for u in 0..n {
            for w in u + 1..n {
                if (0..n).all(|x| x == u || x == w || self.has_edge(u, x) == self.has_edge(w, x)) {
                    out.push((u, w));
                }
            }
        }
        out
    }

    /// Induced subgraph isomorphic to `P4` exists.
    pub fn has_induced_p4(&self) -> bool {
        let p4 = UGraph::named("P4").expect("P4 is a valid name");
        induced_occ(&p4, &self.to_labeled()) > 0
    }
}

impl fmt::Display for UGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.n, self.bitstring())
    }
}

impl fmt::Debug for UGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UGraph({self})")
    }
}

/// Accepts `n:bitstring` (any labeling, canonicalized on parse), a graph
/// name understood by [`UGraph::named`], or edge-list JSON.
impl FromStr for UGraph {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.starts_with('{') {
            return UGraph::from_edge_list_json(text);
        }
        let Some((n, bits)) = text.split_once(':') else {
            return UGraph::named(text);
        };
        let n: usize = n
            .parse()
            .map_err(|_| Error::Parse(format!("bad vertex count in {text:?}")))?;
        if n == 0 {
            return Err(Error::Parse("graph needs at least one vertex".into()));
        }
        let bits: Vec<bool> = bits
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Parse(format!("bad bit {c:?} in {text:?}"))),
            })
            .collect::<Result<_>>()?;
        LabeledGraph::from_bits(n, &bits)?.try_canonical()
    }
}

/// Canonical form of a symmetric, loop-free adjacency matrix.
///
/// Exact branch and bound. Position `i` of the labeling is filled from the
/// cell of vertices that agree on adjacency to positions `0..i`; each later
/// cell is then split into non-neighbours followed by neighbours of the new
/// vertex, which fixes row `i` of the bitstring and allows pruning against
/// the best row prefix found so far. Twin candidates are explored once.
pub fn canonical_form(adj: &[Vec<bool>]) -> Result<UGraph> {
    let g = LabeledGraph::from_adjacency(adj.to_vec())?;
    let n = g.n();
    if n == 0 {
        return Err(Error::InvalidAdjacency("graph needs at least one vertex".into()));
    }
    if n > MAX_CANONICAL_VERTICES {
        return Err(Error::InvalidArgument(format!(
            "canonical form supports at most {MAX_CANONICAL_VERTICES} vertices, got {n}"
        )));
    }
    let masks: Vec<u32> = (0..n)
        .map(|u| (0..n).filter(|&w| g.adj[u][w]).fold(0u32, |m, w| m | 1 << w))
        .collect();
    let mut search = CanonSearch {
        n,
        masks,
        best: None,
    };
    let order: Vec<usize> = (0..n).collect();
    let cell_end = vec![n; n];
    search.descend(0, order, cell_end, Vec::with_capacity(triangle_len(n)));
    Ok(UGraph {
        n,
        bits: search.best.expect("search visits at least one leaf"),
    })
}

struct CanonSearch {
    n: usize,
    masks: Vec<u32>,
    best: Option<Vec<bool>>,
}

impl CanonSearch {
    /// `order[depth..]` holds unplaced vertices grouped into cells;
    /// `cell_end[j]` is the exclusive end of the cell containing position `j`.
    fn descend(&mut self, depth: usize, order: Vec<usize>, cell_end: Vec<usize>, prefix: Vec<bool>) {
        let n = self.n;
        if depth == n {
            if self.best.as_ref().is_none_or(|b| prefix < *b) {
                self.best = Some(prefix);
            }
            return;
        }
        let end = cell_end[depth];
        let mut tried: Vec<usize> = Vec::new();
        for c in depth..end {
            let u = order[c];
            if tried.iter().any(|&t| self.twins(t, u)) {
                continue;
            }
            tried.push(u);

            let mut next = order.clone();
            next.swap(depth, c);
            let mut next_end = vec![n; n];
            let mut row = Vec::with_capacity(n - depth - 1);
            let mut start = depth + 1;
            while start < n {
                let stop = if start < end { end } else { cell_end[start] };
                let (non, nbr): (Vec<usize>, Vec<usize>) = next[start..stop]
                    .iter()
                    .partition(|&&w| self.masks[u] & (1 << w) == 0);
                let split = start + non.len();
                for (slot, w) in non.iter().chain(&nbr).enumerate() {
                    next[start + slot] = *w;
                }
                for j in start..split {
                    next_end[j] = split;
                }
                for j in split..stop {
                    next_end[j] = stop;
                }
                row.extend(std::iter::repeat_n(false, non.len()));
                row.extend(std::iter::repeat_n(true, nbr.len()));
                start = stop;
            }

            let mut next_prefix = prefix.clone();
            next_prefix.extend(row);
            if let Some(best) = &self.best {
                if next_prefix.as_slice() > &best[..next_prefix.len()] {
                    continue;
                }
            }
            self.descend(depth + 1, next, next_end, next_prefix);
        }
    }

    fn twins(&self, a: usize, b: usize) -> bool {
        let ignore = !((1u32 << a) | (1u32 << b));
        (self.masks[a] ^ self.masks[b]) & ignore == 0
    }
}

/// Canonical forms of all labeled graphs on `k ≤ 4` vertices, by triangle mask.
fn small_table(k: usize) -> &'static [UGraph] {
    static TABLES: [OnceLock<Vec<UGraph>>; 5] =
        [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    TABLES[k].get_or_init(|| {
        let len = triangle_len(k);
        (0..1usize << len)
            .map(|mask| {
                let bits: Vec<bool> = (0..len).map(|b| mask >> b & 1 == 1).collect();
                LabeledGraph::from_bits(k, &bits).unwrap().canonical()
            })
            .collect()
    })
}

/// Number of `|H|`-subsets of `G`'s vertices inducing a copy of `H`.
/// Brute force over `C(|G|, |H|)` subsets.
pub fn induced_occ(h: &UGraph, g: &LabeledGraph) -> u64 {
    let k = h.n();
    let n = g.n();
    if k > n {
        return 0;
    }
    if k == 1 {
        return n as u64;
    }
    if k == 2 {
        let edges = g.edge_count() as u64;
        let pairs = (n * (n - 1) / 2) as u64;
        return if h.edge_count() == 1 { edges } else { pairs - edges };
    }
    let target_edges = h.edge_count();
    let mut count = 0;
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        count += u64::from(matches_subset(h, g, &subset, target_edges));
        if !next_combination(&mut subset, n) {
            break;
        }
    }
    count
}

fn matches_subset(h: &UGraph, g: &LabeledGraph, subset: &[usize], target_edges: usize) -> bool {
    let k = subset.len();
    if k <= 4 {
        return small_table(k)[g.induced_mask(subset)] == *h;
    }
    let sub = g.induced(subset);
    sub.edge_count() == target_edges && sub.canonical() == *h
}

/// Advances a sorted `k`-subset of `0..n` in lexicographic order.
pub(crate) fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    let Some(i) = (0..k).rev().find(|&i| subset[i] < n - k + i) else {
        return false;
    };
    subset[i] += 1;
    for j in i + 1..k {
        subset[j] = subset[j - 1] + 1;
    }
    true
}

/// `d_H(G) = occ(H, G) / C(|G|, |H|)`, and 0 when `|H| > |G|`.
pub fn graph_density(h: &UGraph, g: &UGraph) -> Rational {
    if h.n() > g.n() {
        return Rational::zero();
    }
    Rational::new(
        BigInt::from(induced_occ(h, &g.to_labeled())),
        binomial(g.n(), h.n()),
    )
}

pub fn graph_density_f64(h: &UGraph, g: &LabeledGraph) -> f64 {
    if h.n() > g.n() {
        return 0.0;
    }
    induced_occ(h, g) as f64 / binomial_f64(g.n(), h.n())
}

/// `n − 1` up-steps from a single vertex: a labeled sample from the
/// stationary law.
pub fn cograph_sample<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> LabeledGraph {
    assert!(n >= 1, "size must be positive");
    let mut g = LabeledGraph::empty(1);
    for _ in 1..n {
        g.up_step_in_place(p, rng);
    }
    g
}

/// All unlabeled graphs on `n` vertices, sorted by canonical bitstring.
pub fn enumerate_graphs(n: usize) -> Vec<UGraph> {
    assert!(n >= 1, "size must be positive");
    let mut level: BTreeSet<UGraph> = BTreeSet::from([LabeledGraph::empty(1).canonical()]);
    for size in 2..=n {
        let mut next = BTreeSet::new();
        for g in &level {
            let base = g.to_labeled();
            for nbhd in 0..1usize << (size - 1) {
                let mut h = base.clone();
                h.adj.iter_mut().for_each(|r| r.push(false));
                h.adj.push(vec![false; size]);
                for v in 0..size - 1 {
                    if nbhd >> v & 1 == 1 {
                        h.set_edge(v, size - 1, true);
                    }
                }
                next.insert(h.canonical());
            }
        }
        level = next;
    }
    level.into_iter().collect()
}

/// The graph chain: duplicate a uniform vertex, joining the copy to it with
/// probability `1 − p`, then delete a uniform vertex.
///
/// With a cache directory, enumerated levels are memoized on disk as one
/// canonical encoding per line.
#[derive(Clone, Debug, Default)]
pub struct GraphInstance {
    pub cache_dir: Option<PathBuf>,
}

impl GraphInstance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_cache_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            cache_dir: Some(dir.into()),
        }
    }

    /// Uses `UPDOWN_CACHE_DIR` when set.
    pub fn from_env() -> Self {
        Self {
            cache_dir: std::env::var_os("UPDOWN_CACHE_DIR").map(PathBuf::from),
        }
    }

    fn cache_path(&self, n: usize) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| d.join(format!("graphs_n{n}.txt")))
    }

    fn read_cache(&self, n: usize) -> Option<Vec<UGraph>> {
        let text = std::fs::read_to_string(self.cache_path(n)?).ok()?;
        let graphs: Option<Vec<UGraph>> = text.lines().map(|l| l.parse().ok()).collect();
        graphs.filter(|g| !g.is_empty() && g.iter().all(|x| x.n() == n))
    }

    fn write_cache(&self, n: usize, graphs: &[UGraph]) {
        let Some(path) = self.cache_path(n) else {
            return;
        };
        let body: String = graphs.iter().map(|g| format!("{g}\n")).collect();
        let result = std::fs::create_dir_all(path.parent().expect("cache file has a parent"))
            .and_then(|_| {
                let tmp = path.with_extension(format!("tmp{}", std::process::id()));
                std::fs::write(&tmp, body)?;
                std::fs::rename(&tmp, &path)
            });
        if let Err(e) = result {
            log::warn!("could not write graph cache {}: {e}", path.display());
        }
    }
}

impl Instance for GraphInstance {
    type State = UGraph;

    fn name(&self) -> &'static str {
        "graph"
    }

    fn size(&self, state: &UGraph) -> usize {
        state.n()
    }

    fn root(&self) -> UGraph {
        LabeledGraph::empty(1).canonical()
    }

    fn enumerate(&self, n: usize) -> Vec<UGraph> {
        if let Some(hit) = self.read_cache(n) {
            return hit;
        }
        let graphs = enumerate_graphs(n);
        self.write_cache(n, &graphs);
        graphs
    }

    fn up_transitions(&self, state: &UGraph, p: &Rational) -> Vec<(UGraph, Rational)> {
        let n = Rational::from_integer(BigInt::from(state.n()));
        let apart = p / &n;
        let joined = (Rational::from_integer(1.into()) - p) / &n;
        (1..=state.n())
            .flat_map(|v| {
                [
                    (state.duplicate_vertex(v, true).unwrap(), joined.clone()),
                    (state.duplicate_vertex(v, false).unwrap(), apart.clone()),
                ]
            })
            .collect()
    }

    fn down_transitions(&self, state: &UGraph) -> Vec<(UGraph, Rational)> {
        let w = Rational::new(1.into(), BigInt::from(state.n()));
        (1..=state.n())
            .map(|v| (state.delete_vertex(v).unwrap(), w.clone()))
            .collect()
    }

    fn predecessors(&self, state: &UGraph) -> Vec<UGraph> {
        let mut out: Vec<UGraph> = state
            .twin_pairs()
            .into_iter()
            .map(|(_, w)| state.delete_vertex(w + 1).unwrap())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    fn encode(&self, state: &UGraph) -> String {
        state.to_string()
    }

    fn decode(&self, text: &str) -> Result<UGraph> {
        text.parse()
    }

    fn sample_up<R: Rng + ?Sized>(&self, state: &UGraph, p: f64, rng: &mut R) -> UGraph {
        state.up_step_sample(p, rng)
    }

    fn sample_down<R: Rng + ?Sized>(&self, state: &UGraph, rng: &mut R) -> UGraph {
        state.down_step_sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm::Permutation;
    use crate::rational::{int, rat};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(name: &str) -> UGraph {
        name.parse().unwrap()
    }

    /// Minimum bitstring over all `n!` labelings.
    fn brute_canonical(graph: &LabeledGraph) -> Vec<bool> {
        let n = graph.n();
        Permutation::all(n)
            .into_iter()
            .map(|p| {
                let order: Vec<usize> = p.values().iter().map(|&v| v as usize - 1).collect();
                graph.relabel(&order).bits()
            })
            .min()
            .unwrap()
    }

    #[test]
    fn canonical_matches_exhaustive_minimum() {
        for n in 1..=5 {
            let len = triangle_len(n);
            for mask in 0..1usize << len {
                let bits: Vec<bool> = (0..len).map(|b| mask >> b & 1 == 1).collect();
                let graph = LabeledGraph::from_bits(n, &bits).unwrap();
                assert_eq!(graph.canonical().bits, brute_canonical(&graph), "n={n} mask={mask}");
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let bits: Vec<bool> = (0..triangle_len(6)).map(|_| rng.random_bool(0.5)).collect();
            let graph = LabeledGraph::from_bits(6, &bits).unwrap();
            assert_eq!(graph.canonical().bits, brute_canonical(&graph));
        }
    }

    #[test]
    fn canonical_is_relabeling_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c5 = UGraph::named("C5").unwrap();
        let base = c5.to_labeled();
        for _ in 0..100 {
            let mut order: Vec<usize> = (0..5).collect();
            order.shuffle(&mut rng);
            assert_eq!(base.relabel(&order).canonical(), c5);
        }
        for n in 2..=8 {
            for _ in 0..20 {
                let bits: Vec<bool> = (0..triangle_len(n)).map(|_| rng.random_bool(0.4)).collect();
                let graph = LabeledGraph::from_bits(n, &bits).unwrap();
                let canon = graph.canonical();
                assert_eq!(canon.to_labeled().canonical(), canon, "idempotent");
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                assert_eq!(graph.relabel(&order).canonical(), canon);
            }
        }
    }

    #[test]
    fn canonical_examples() {
        assert_eq!(LabeledGraph::empty(4).canonical().bitstring(), "000000");
        let k2_plus_k1 = LabeledGraph::from_edges(3, &[(0, 1)]).unwrap().canonical();
        assert_ne!(g("P3"), k2_plus_k1);
        let asym = vec![vec![false, true], vec![false, false]];
        assert!(matches!(canonical_form(&asym), Err(Error::InvalidAdjacency(_))));
        let looped = vec![vec![true]];
        assert!(matches!(canonical_form(&looped), Err(Error::InvalidAdjacency(_))));
    }

    #[test]
    fn enumeration_counts() {
        let counts: Vec<usize> = (1..=6).map(|n| enumerate_graphs(n).len()).collect();
        assert_eq!(counts, vec![1, 2, 4, 11, 34, 156]);
    }

    #[test]
    fn density_examples() {
        assert_eq!(graph_density(&g("K1"), &g("C5")), int(1));
        assert_eq!(graph_density(&g("K2"), &g("P3")), rat(2, 3));
        assert_eq!(graph_density(&g("K3"), &g("K4")), int(1));
        assert_eq!(graph_density(&g("P4"), &g("C5")), int(1));
        assert_eq!(graph_density(&g("K4"), &g("K3")), int(0));
    }

    #[test]
    fn small_table_agrees_with_direct_canonicalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let bits: Vec<bool> = (0..triangle_len(7)).map(|_| rng.random_bool(0.5)).collect();
            let graph = LabeledGraph::from_bits(7, &bits).unwrap();
            for h in enumerate_graphs(4).iter().chain(&enumerate_graphs(3)) {
                let mut direct = 0;
                let mut subset: Vec<usize> = (0..h.n()).collect();
                loop {
                    direct += u64::from(graph.induced(&subset).canonical() == *h);
                    if !next_combination(&mut subset, 7) {
                        break;
                    }
                }
                assert_eq!(induced_occ(h, &graph), direct);
            }
        }
    }

    #[test]
    fn duplication_examples() {
        assert_eq!(g("K1").duplicate_vertex(1, true).unwrap(), g("K2"));
        assert_eq!(g("K2").duplicate_vertex(1, true).unwrap(), g("K3"));
        assert_eq!(g("K2").duplicate_vertex(2, false).unwrap(), g("P3"));
        assert_eq!(g("E2").duplicate_vertex(1, false).unwrap(), g("E3"));
        assert!(g("K2").duplicate_vertex(3, true).is_err());
    }

    #[test]
    fn duplication_deletion_duality() {
        for graph in enumerate_graphs(5) {
            let labeled = graph.to_labeled();
            for v in 0..5 {
                for connect in [false, true] {
                    let mut h = labeled.clone();
                    h.duplicate_in_place(v, connect);
                    let mut a = h.clone();
                    a.delete_in_place(v);
                    let mut b = h.clone();
                    b.delete_in_place(5);
                    assert_eq!(a.canonical(), graph);
                    assert_eq!(b.canonical(), graph);
                }
            }
        }
    }

    #[test]
    fn deletion_examples() {
        assert_eq!(g("K2").delete_vertex(1).unwrap(), g("K1"));
        assert_eq!(g("P3").delete_vertex(3).unwrap(), g("E2"));
        assert_eq!(g("P3").delete_vertex(1).unwrap(), g("K2"));
        assert!(g("K1").delete_vertex(1).is_err());
    }

    #[test]
    fn text_forms() {
        let p3 = g("P3");
        assert_eq!(p3.to_string().parse::<UGraph>().unwrap(), p3);
        assert_eq!(g("2K1"), g("E2"));
        assert_eq!("3:110".parse::<UGraph>().unwrap(), p3);
        assert_eq!(
            UGraph::from_edge_list_json(r#"{"n": 3, "edges": [[0, 2], [1, 2]]}"#).unwrap(),
            p3
        );
        assert!("3:11".parse::<UGraph>().is_err());
        assert!("3:1x0".parse::<UGraph>().is_err());
        assert!(r#"{"n": 2, "edges": [[0, 0]]}"#.parse::<UGraph>().is_err());
    }

    #[test]
    fn cograph_samples_avoid_p4() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let sample = cograph_sample(7, 0.5, &mut rng).canonical();
            assert!(!sample.has_induced_p4());
        }
        assert!(g("P4").has_induced_p4());
    }

    #[test]
    fn twin_predecessors() {
        let inst = GraphInstance::new();
        assert_eq!(inst.predecessors(&g("K3")), vec![g("K2")]);
        assert!(inst.predecessors(&g("P4")).is_empty());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let inst = GraphInstance::with_cache_dir(dir.path());
        let first = inst.enumerate(4);
        assert!(dir.path().join("graphs_n4.txt").exists());
        assert_eq!(inst.enumerate(4), first);
    }
}
