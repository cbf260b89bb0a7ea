//! Permutations in one-line notation, patterns, and the point-inflation
//! up-down dynamics.
//!
//! Pattern counting is brute force over index subsets (with prefix pruning),
//! so it is only meant for small patterns: `occ` costs `O(C(n, k))` in the
//! worst case. Keep `k ≤ 6`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::Zero;
use rand::Rng;

use crate::chain::Instance;
use crate::error::{Error, Result};
use crate::graph::{LabeledGraph, UGraph};
use crate::rational::{binomial, Rational};

/// A permutation of `{1, …, n}` in one-line notation, `n ≥ 1`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation(Vec<u32>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Increasing,
    Decreasing,
}

impl Permutation {
    pub fn new(values: Vec<u32>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::Parse("empty permutation".into()));
        }
        let mut seen = vec![false; n + 1];
        for &v in &values {
            let v = v as usize;
            if v == 0 || v > n || seen[v] {
                return Err(Error::Parse(format!("{values:?} is not a permutation of 1..={n}")));
            }
            seen[v] = true;
        }
        Ok(Self(values))
    }

    pub fn identity(n: usize) -> Self {
        Self((1..=n as u32).collect())
    }

    pub fn reverse(n: usize) -> Self {
        Self((1..=n as u32).rev().collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[u32] {
        &self.0
    }

    /// `σ(i)` for 1-based `i`.
    pub fn at(&self, i: usize) -> u32 {
        self.0[i - 1]
    }

    /// All permutations of size `n` in lexicographic order.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut current: Vec<u32> = (1..=n as u32).collect();
        let mut out = vec![Self(current.clone())];
        while next_permutation(&mut current) {
            out.push(Self(current.clone()));
        }
        out
    }

    /// Uniformly random permutation of size `n` (Fisher–Yates).
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut v: Vec<u32> = (1..=n as u32).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            v.swap(i, j);
        }
        Self(v)
    }

    /// `pat_I(σ)` for sorted 0-based positions.
    pub fn pattern(&self, positions: &[usize]) -> Permutation {
        Self(standardize(positions.iter().map(|&i| self.0[i])))
    }

    /// Inflates the point at 1-based position `i` into two points that are
    /// consecutive in position and value. The new points sit at positions
    /// `i, i+1` with values `σ(i), σ(i)+1`; `dir` decides which of the two
    /// carries the lower value.
    pub fn inflate(&self, i: usize, dir: Direction) -> Result<Permutation> {
        self.replace_by_run(i, 2, dir)
    }

    /// Replaces the point at 1-based position `i` by a monotone run of `m ≥ 1`
    /// points, consecutive in position and value.
    pub fn replace_by_run(&self, i: usize, m: usize, dir: Direction) -> Result<Permutation> {
        let n = self.len();
        if i == 0 || i > n {
            return Err(Error::OutOfRange { index: i, len: n });
        }
        if m == 0 {
            return Err(Error::InvalidArgument("run length must be positive".into()));
        }
        let v = self.0[i - 1];
        let shift = (m - 1) as u32;
        let mut out = Vec::with_capacity(n + m - 1);
        for (pos, &x) in self.0.iter().enumerate() {
            if pos + 1 == i {
                match dir {
                    Direction::Increasing => out.extend((0..m as u32).map(|t| v + t)),
                    Direction::Decreasing => out.extend((0..m as u32).rev().map(|t| v + t)),
                }
            } else if x > v {
                out.push(x + shift);
            } else {
                out.push(x);
            }
        }
        Ok(Self(out))
    }

    /// Removes the point at 1-based position `j` and standardizes.
    pub fn delete(&self, j: usize) -> Result<Permutation> {
        let n = self.len();
        if n < 2 {
            return Err(Error::SizeMismatch("cannot delete from a size-1 permutation".into()));
        }
        if j == 0 || j > n {
            return Err(Error::OutOfRange { index: j, len: n });
        }
        let removed = self.0[j - 1];
        Ok(Self(
            self.0
                .iter()
                .enumerate()
                .filter(|&(pos, _)| pos + 1 != j)
                .map(|(_, &x)| if x > removed { x - 1 } else { x })
                .collect(),
        ))
    }

    /// In-place delete used by the simulator; `j` is 0-based.
    pub(crate) fn delete_in_place(&mut self, j: usize) {
        let removed = self.0.remove(j);
        for x in &mut self.0 {
            if *x > removed {
                *x -= 1;
            }
        }
    }

    /// In-place inflation used by the simulator; `i` is 0-based.
    pub(crate) fn inflate_in_place(&mut self, i: usize, dir: Direction) {
        let v = self.0[i];
        for x in &mut self.0 {
            if *x > v {
                *x += 1;
            }
        }
        let (first, second) = match dir {
            Direction::Increasing => (v, v + 1),
            Direction::Decreasing => (v + 1, v),
        };
        self.0[i] = first;
        self.0.insert(i + 1, second);
    }

    /// One draw from the up kernel: uniform point, increasing with probability `p`.
    pub fn up_step_sample<R: Rng + ?Sized>(&self, p: f64, rng: &mut R) -> Permutation {
        let mut next = self.clone();
        next.up_step_in_place(p, rng);
        next
    }

    /// One draw from the down kernel: delete a uniform point.
    pub fn down_step_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Permutation {
        let mut next = self.clone();
        next.down_step_in_place(rng);
        next
    }

    pub(crate) fn up_step_in_place<R: Rng + ?Sized>(&mut self, p: f64, rng: &mut R) {
        let i = rng.random_range(0..self.len());
        let dir = if rng.random::<f64>() < p {
            Direction::Increasing
        } else {
            Direction::Decreasing
        };
        self.inflate_in_place(i, dir);
    }

    pub(crate) fn down_step_in_place<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        assert!(self.len() >= 2, "down-step needs at least two points");
        let j = rng.random_range(0..self.len());
        self.delete_in_place(j);
    }

    /// 0-based positions `i` such that `(i, i+1)` is an adjacency.
    pub fn adjacencies(&self) -> Vec<usize> {
        self.0
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0].abs_diff(w[1]) == 1)
            .map(|(i, _)| i)
            .collect()
    }

    /// Merges the adjacency at 0-based positions `(i, i+1)` into one point.
    pub fn shrink_adjacency(&self, i: usize) -> Result<Permutation> {
        if i + 1 >= self.len() || self.0[i].abs_diff(self.0[i + 1]) != 1 {
            return Err(Error::InvalidArgument(format!("no adjacency at position {i}")));
        }
        self.delete(i + 2)
    }

    /// Fixed point of repeatedly shrinking adjacencies, leftmost first.
    pub fn nonseparable_core(&self) -> Permutation {
        let mut current = self.clone();
        while let Some(&i) = current.adjacencies().first() {
            current = current.delete(i + 2).expect("adjacency implies size >= 2");
        }
        current
    }

    pub fn is_separable(&self) -> bool {
        self.nonseparable_core().len() == 1
    }

    /// Inversion graph on labels `1..=n`: `{i, j}` is an edge iff
    /// `(j − i)(σ(j) − σ(i)) < 0`.
    pub fn inversion_graph_labeled(&self) -> LabeledGraph {
        let n = self.len();
        let mut g = LabeledGraph::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                if self.0[j] < self.0[i] {
                    g.set_edge(i, j, true);
                }
            }
        }
        g
    }

    pub fn inversion_graph(&self) -> UGraph {
        self.inversion_graph_labeled().canonical()
    }
}

fn next_permutation(v: &mut [u32]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot exists");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Relative order of a sequence of distinct values, 1-based.
fn standardize(values: impl Iterator<Item = u32>) -> Vec<u32> {
    let vals: Vec<u32> = values.collect();
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by_key(|&i| vals[i]);
    let mut out = vec![0; vals.len()];
    for (rank, i) in order.into_iter().enumerate() {
        out[i] = rank as u32 + 1;
    }
    out
}

/// Number of index sets `I` with `pat_I(σ) = π`; 0 when `|π| > |σ|`.
pub fn occ(pi: &Permutation, sigma: &Permutation) -> u64 {
    let k = pi.len();
    let n = sigma.len();
    if k > n {
        return 0;
    }
    let mut chosen = Vec::with_capacity(k);
    count_occurrences(pi.values(), sigma.values(), 0, &mut chosen)
}

/// Backtracking over increasing index tuples; a partial choice survives only
/// if its values are ordered like the corresponding prefix of `pi`.
fn count_occurrences(pi: &[u32], sigma: &[u32], start: usize, chosen: &mut Vec<u32>) -> u64 {
    let depth = chosen.len();
    if depth == pi.len() {
        return 1;
    }
    let remaining = pi.len() - depth;
    let target = pi[depth];
    let mut total = 0;
    for pos in start..=sigma.len() - remaining {
        let x = sigma[pos];
        let consistent = chosen
            .iter()
            .zip(pi)
            .all(|(&c, &q)| (c < x) == (q < target));
        if consistent {
            chosen.push(x);
            total += count_occurrences(pi, sigma, pos + 1, chosen);
            chosen.pop();
        }
    }
    total
}

/// `d_π(σ) = occ(π, σ) / C(|σ|, |π|)`, and 0 when `|π| > |σ|`.
pub fn pattern_density(pi: &Permutation, sigma: &Permutation) -> Rational {
    if pi.len() > sigma.len() {
        return Rational::zero();
    }
    Rational::new(BigInt::from(occ(pi, sigma)), binomial(sigma.len(), pi.len()))
}

pub fn pattern_density_f64(pi: &Permutation, sigma: &Permutation) -> f64 {
    if pi.len() > sigma.len() {
        return 0.0;
    }
    occ(pi, sigma) as f64 / crate::rational::binomial_f64(sigma.len(), pi.len())
}

/// Exact stationary sampler: `n − 1` up-steps from the size-1 permutation.
pub fn recursive_separable_sample<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Permutation {
    assert!(n >= 1, "size must be positive");
    let mut sigma = Permutation::identity(1);
    for _ in 1..n {
        sigma.up_step_in_place(p, rng);
    }
    sigma
}

/// Pairs `(τ, i)` (1-based `i`) such that replacing the point `(i, τ(i))` by a
/// monotone run of length `m` yields `π`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunInsertionSets {
    pub increasing: Vec<(Permutation, usize)>,
    pub decreasing: Vec<(Permutation, usize)>,
}

/// Direct scan for runs of length `m` inside `π`.
pub fn run_insertion_sets(pi: &Permutation, m: usize) -> Result<RunInsertionSets> {
    let k = pi.len();
    if m == 0 || m > k {
        return Err(Error::InvalidArgument(format!("run length {m} outside 1..={k}")));
    }
    let mut sets = RunInsertionSets::default();
    let v = pi.values();
    for a in 0..=k - m {
        let window = &v[a..a + m];
        let inc = window.windows(2).all(|w| w[1] == w[0] + 1);
        let dec = window.windows(2).all(|w| w[0] == w[1] + 1);
        if !inc && !dec {
            continue;
        }
        let tau = shrink_window(pi, a, m);
        if inc {
            sets.increasing.push((tau.clone(), a + 1));
        }
        if dec {
            sets.decreasing.push((tau, a + 1));
        }
    }
    Ok(sets)
}

/// Collapses positions `a..a+m` (0-based, a run) into a single point.
fn shrink_window(pi: &Permutation, a: usize, m: usize) -> Permutation {
    let mut kept: Vec<u32> = Vec::with_capacity(pi.len() - m + 1);
    for (pos, &x) in pi.values().iter().enumerate() {
        if pos < a || pos >= a + m {
            kept.push(x);
        } else if pos == a {
            kept.push(pi.values()[a..a + m].iter().copied().min().unwrap());
        }
    }
    Permutation(standardize(kept.into_iter()))
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len() <= 9 {
            for v in &self.0 {
                write!(f, "{v}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation({self})")
    }
}

impl FromStr for Permutation {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let values: Vec<u32> = if text.contains(',') {
            text.split(',')
                .map(|t| t.trim().parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse(format!("bad permutation {text:?}")))?
        } else {
            text.chars()
                .map(|c| c.to_digit(10))
                .collect::<Option<_>>()
                .ok_or_else(|| Error::Parse(format!("bad permutation {text:?}")))?
        };
        Permutation::new(values)
    }
}

/// The permutation chain: inflate a uniform point (increasing with
/// probability `p`), then delete a uniform point.
#[derive(Clone, Copy, Debug, Default)]
pub struct PermInstance;

impl Instance for PermInstance {
    type State = Permutation;

    fn name(&self) -> &'static str {
        "perm"
    }

    fn size(&self, state: &Permutation) -> usize {
        state.len()
    }

    fn root(&self) -> Permutation {
        Permutation::identity(1)
    }

    fn enumerate(&self, n: usize) -> Vec<Permutation> {
        Permutation::all(n)
    }

    fn up_transitions(&self, state: &Permutation, p: &Rational) -> Vec<(Permutation, Rational)> {
        let n = BigInt::from(state.len());
        let inc = p / Rational::from_integer(n.clone());
        let dec = (Rational::from_integer(1.into()) - p) / Rational::from_integer(n);
        (1..=state.len())
            .flat_map(|i| {
                [
                    (state.inflate(i, Direction::Increasing).unwrap(), inc.clone()),
                    (state.inflate(i, Direction::Decreasing).unwrap(), dec.clone()),
                ]
            })
            .collect()
    }

    fn down_transitions(&self, state: &Permutation) -> Vec<(Permutation, Rational)> {
        let w = Rational::new(1.into(), BigInt::from(state.len()));
        (1..=state.len())
            .map(|j| (state.delete(j).unwrap(), w.clone()))
            .collect()
    }

    fn predecessors(&self, state: &Permutation) -> Vec<Permutation> {
        state
            .adjacencies()
            .into_iter()
            .map(|i| state.shrink_adjacency(i).unwrap())
            .collect()
    }

    fn encode(&self, state: &Permutation) -> String {
        state.to_string()
    }

    fn decode(&self, text: &str) -> Result<Permutation> {
        text.parse()
    }

    fn sample_up<R: Rng + ?Sized>(&self, state: &Permutation, p: f64, rng: &mut R) -> Permutation {
        state.up_step_sample(p, rng)
    }

    fn sample_down<R: Rng + ?Sized>(&self, state: &Permutation, rng: &mut R) -> Permutation {
        state.down_step_sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn perm(s: &str) -> Permutation {
        s.parse().unwrap()
    }

    /// Plain enumeration of all k-subsets, independent of the pruned search.
    fn occ_naive(pi: &Permutation, sigma: &Permutation) -> u64 {
        fn rec(pi: &Permutation, sigma: &Permutation, start: usize, chosen: &mut Vec<usize>) -> u64 {
            if chosen.len() == pi.len() {
                return u64::from(sigma.pattern(chosen) == *pi);
            }
            (start..sigma.len())
                .map(|i| {
                    chosen.push(i);
                    let c = rec(pi, sigma, i + 1, chosen);
                    chosen.pop();
                    c
                })
                .sum()
        }
        rec(pi, sigma, 0, &mut Vec::new())
    }

    #[test]
    fn occurrence_examples() {
        let s = perm("2413");
        assert_eq!(occ(&perm("1"), &s), 4);
        assert_eq!(occ(&perm("12"), &s), 3);
        assert_eq!(occ(&perm("21"), &perm("321")), 3);
        assert_eq!(occ(&perm("123"), &perm("12")), 0);
        assert_eq!(pattern_density(&perm("12"), &s), crate::rational::rat(1, 2));
        assert_eq!(pattern_density(&perm("21"), &perm("321")), crate::rational::int(1));
    }

    #[test]
    fn pruned_occ_matches_subset_enumeration() {
        for n in 1..=6 {
            for sigma in Permutation::all(n) {
                for k in 1..=n.min(4) {
                    for pi in Permutation::all(k) {
                        assert_eq!(occ(&pi, &sigma), occ_naive(&pi, &sigma), "{pi} in {sigma}");
                    }
                }
            }
        }
    }

    #[test]
    fn inflation_examples() {
        use Direction::*;
        assert_eq!(perm("1").inflate(1, Increasing).unwrap(), perm("12"));
        assert_eq!(perm("1").inflate(1, Decreasing).unwrap(), perm("21"));
        assert_eq!(perm("12").inflate(1, Decreasing).unwrap(), perm("213"));
        assert_eq!(perm("21").inflate(2, Increasing).unwrap(), perm("312"));
        assert!(perm("12").inflate(3, Increasing).is_err());
    }

    #[test]
    fn deletion_examples() {
        assert_eq!(perm("213").delete(3).unwrap(), perm("21"));
        assert_eq!(perm("12").delete(1).unwrap(), perm("1"));
        assert_eq!(perm("2413").delete(2).unwrap(), perm("213"));
        assert!(perm("1").delete(1).is_err());
    }

    #[test]
    fn in_place_ops_agree() {
        let s = perm("35142");
        for i in 0..5 {
            for dir in [Direction::Increasing, Direction::Decreasing] {
                let mut t = s.clone();
                t.inflate_in_place(i, dir);
                assert_eq!(t, s.inflate(i + 1, dir).unwrap());
            }
            let mut t = s.clone();
            t.delete_in_place(i);
            assert_eq!(t, s.delete(i + 1).unwrap());
        }
    }

    #[test]
    fn core_examples() {
        assert_eq!(perm("2413").nonseparable_core(), perm("2413"));
        assert_eq!(perm("3412").nonseparable_core(), perm("1"));
        assert_eq!(perm("25314").nonseparable_core(), perm("25314"));
        assert_eq!(perm("23514").nonseparable_core(), perm("2413"));
        assert_eq!(perm("352614").nonseparable_core(), perm("352614"));
        assert!(perm("1").is_separable());
    }

    #[test]
    fn core_is_independent_of_shrink_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=6 {
            for sigma in Permutation::all(n) {
                let expected = sigma.nonseparable_core();
                for _ in 0..3 {
                    let mut current = sigma.clone();
                    loop {
                        let adj = current.adjacencies();
                        if adj.is_empty() {
                            break;
                        }
                        let i = adj[rng.random_range(0..adj.len())];
                        current = current.shrink_adjacency(i).unwrap();
                    }
                    assert_eq!(current, expected, "core of {sigma}");
                }
            }
        }
    }

    #[test]
    fn inversion_graph_examples() {
        assert_eq!(perm("123").inversion_graph(), LabeledGraph::empty(3).canonical());
        let k2 = LabeledGraph::from_edges(2, &[(0, 1)]).unwrap().canonical();
        assert_eq!(perm("21").inversion_graph(), k2);
        let path = LabeledGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap().canonical();
        assert_eq!(perm("2413").inversion_graph(), path);
        let labeled = perm("2413").inversion_graph_labeled();
        let mut edges = labeled.edges();
        edges.sort();
        assert_eq!(edges, vec![(0, 2), (1, 2), (1, 3)]);
    }

    #[test]
    fn run_insertion_examples() {
        let pi = perm("123");
        let one = run_insertion_sets(&pi, 1).unwrap();
        assert_eq!(one.increasing, (1..=3).map(|i| (pi.clone(), i)).collect::<Vec<_>>());
        assert_eq!(one.decreasing, one.increasing);
        let two = run_insertion_sets(&pi, 2).unwrap();
        assert_eq!(two.increasing, vec![(perm("12"), 1), (perm("12"), 2)]);
        assert!(two.decreasing.is_empty());
        assert!(run_insertion_sets(&pi, 4).is_err());
    }

    /// Reconstruction side: try every `(τ, i)` and keep those that produce `π`.
    fn run_insertion_by_reconstruction(pi: &Permutation, m: usize) -> RunInsertionSets {
        let mut sets = RunInsertionSets::default();
        let size = pi.len() + 1 - m;
        for tau in Permutation::all(size) {
            for i in 1..=size {
                if tau.replace_by_run(i, m, Direction::Increasing).unwrap() == *pi {
                    sets.increasing.push((tau.clone(), i));
                }
                if tau.replace_by_run(i, m, Direction::Decreasing).unwrap() == *pi {
                    sets.decreasing.push((tau.clone(), i));
                }
            }
        }
        sets
    }

    #[test]
    fn run_insertion_scan_matches_reconstruction() {
        for k in 1..=6 {
            for pi in Permutation::all(k) {
                for m in 1..=k {
                    let mut scan = run_insertion_sets(&pi, m).unwrap();
                    let mut rec = run_insertion_by_reconstruction(&pi, m);
                    scan.increasing.sort();
                    scan.decreasing.sort();
                    rec.increasing.sort();
                    rec.decreasing.sort();
                    assert_eq!(scan, rec, "pi={pi} m={m}");
                }
            }
        }
    }

    #[test]
    fn parsing_and_display() {
        assert_eq!(perm("2413").to_string(), "2413");
        let big = Permutation::reverse(10);
        assert_eq!(big.to_string(), "10,9,8,7,6,5,4,3,2,1");
        assert_eq!(big.to_string().parse::<Permutation>().unwrap(), big);
        assert!("1224".parse::<Permutation>().is_err());
        assert!("1a".parse::<Permutation>().is_err());
        assert!("".parse::<Permutation>().is_err());
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let all = Permutation::all(3);
        let text: Vec<String> = all.iter().map(ToString::to_string).collect();
        assert_eq!(text, ["123", "132", "213", "231", "312", "321"]);
        assert_eq!(Permutation::all(1), vec![perm("1")]);
    }

    #[test]
    fn samplers_produce_valid_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = recursive_separable_sample(30, 0.3, &mut rng);
        assert_eq!(s.len(), 30);
        assert!(s.is_separable());
        assert_eq!(perm("12").down_step_sample(&mut rng), perm("1"));
        let up = perm("1").up_step_sample(0.5, &mut rng);
        assert!(up == perm("12") || up == perm("21"));
    }
}
