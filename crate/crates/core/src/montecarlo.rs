//! Trajectory simulation of the permutation and graph chains at scaled time,
//! density-curve estimation, and frame output.
//!
//! Reproducibility contract: trajectory `i` draws from a ChaCha8 stream
//! seeded by [`substream_seed`]`(master_seed, i)`, results are collected by
//! trajectory index, and all reductions are pairwise sums in index order, so
//! outputs do not depend on the worker count.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::chain::{Chain, ChainSpec};
use crate::error::{Error, Result};
use crate::graph::{cograph_sample, graph_density_f64, next_combination, GraphInstance, LabeledGraph, UGraph};
use crate::perm::{pattern_density_f64, recursive_separable_sample, PermInstance, Permutation};
use crate::rational::{binomial_f64, check_probability, format_rational, to_f64, Rational};

/// Golden-ratio increment of the splitmix64 generator.
pub const SEED_INCREMENT: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `mix64(mix64(master) + (index + 1) · 0x9E3779B97F4A7C15)`, wrapping.
pub fn substream_seed(master_seed: u64, index: u64) -> u64 {
    mix64(mix64(master_seed).wrapping_add(index.wrapping_add(1).wrapping_mul(SEED_INCREMENT)))
}

pub fn substream(master_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(master_seed, index))
}

/// Stream tag for auxiliary draws (pattern subsampling) so that they never
/// perturb the trajectory stream itself.
const AUX_STREAM_TAG: u64 = 0xA5A5_5A5A_0F0F_F0F0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Perm,
    Graph,
}

impl fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InstanceKind::Perm => "perm",
            InstanceKind::Graph => "graph",
        })
    }
}

impl FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perm" => Ok(InstanceKind::Perm),
            "graph" => Ok(InstanceKind::Graph),
            _ => Err(Error::Parse(format!("unknown instance {s:?}; expected perm or graph"))),
        }
    }
}

/// Starting state of every trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// An encoded state of size `n`.
    Explicit(String),
    /// Uniform permutation, or `G(n, 1/2)` for graphs.
    Uniform,
    /// Exact draw from the stationary law.
    Stationary,
    /// `n (n−1) ⋯ 1`, or the complete graph (its inversion graph).
    Reverse,
}

impl FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "uniform" => InitialState::Uniform,
            "stationary" => InitialState::Stationary,
            "reverse" => InitialState::Reverse,
            other => InitialState::Explicit(other.strip_prefix("state:").unwrap_or(other).to_string()),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SimConfig {
    pub instance: InstanceKind,
    pub n: usize,
    #[serde(serialize_with = "serialize_rational")]
    pub p: Rational,
    pub t_grid: Vec<f64>,
    pub trajectories: usize,
    pub master_seed: u64,
    pub initial: InitialState,
}

fn serialize_rational<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(r))
}

/// Guard against binary representation error in decimal grid points when
/// flooring `c_n t` (e.g. `0.7 · 10100`).
const STEP_GUARD: f64 = 1e-9;

/// `⌊n (n+1) t⌋`, the cumulative step budget at scaled time `t`.
pub fn steps_at(n: usize, t: f64) -> u64 {
    let c = (n * (n + 1)) as f64;
    (c * t * (1.0 + STEP_GUARD)).floor() as u64
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::LevelTooSmall { level: 0, min: 1 });
        }
        if self.trajectories == 0 {
            return Err(Error::InvalidArgument("need at least one trajectory".into()));
        }
        check_probability(&self.p)?;
        if self.t_grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidArgument("time grid must be finite and nonnegative".into()));
        }
        if self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("time grid must be increasing".into()));
        }
        if let InitialState::Explicit(text) = &self.initial {
            let state = SimState::decode(self.instance, text)?;
            if state.size() != self.n {
                return Err(Error::SizeMismatch(format!(
                    "initial state has size {}, expected {}",
                    state.size(),
                    self.n
                )));
            }
        }
        Ok(())
    }

    pub fn p_f64(&self) -> f64 {
        to_f64(&self.p)
    }

    pub fn step_budget(&self) -> Vec<u64> {
        self.t_grid.iter().map(|&t| steps_at(self.n, t)).collect()
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> Result<SimState> {
        let n = self.n;
        let p = self.p_f64();
        Ok(match (&self.initial, self.instance) {
            (InitialState::Explicit(text), kind) => SimState::decode(kind, text)?,
            (InitialState::Uniform, InstanceKind::Perm) => SimState::Perm(Permutation::random(n, rng)),
            (InitialState::Uniform, InstanceKind::Graph) => {
                let mut g = LabeledGraph::empty(n);
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.random_bool(0.5) {
                            g.set_edge(i, j, true);
                        }
                    }
                }
                SimState::Graph(g)
            }
            (InitialState::Stationary, InstanceKind::Perm) => SimState::Perm(recursive_separable_sample(n, p, rng)),
            (InitialState::Stationary, InstanceKind::Graph) => SimState::Graph(cograph_sample(n, p, rng)),
            (InitialState::Reverse, InstanceKind::Perm) => SimState::Perm(Permutation::reverse(n)),
            (InitialState::Reverse, InstanceKind::Graph) => SimState::Graph(LabeledGraph::complete(n)),
        })
    }
}

/// A trajectory state. Graphs carry a labeled representative so a step
/// costs `O(n)`; canonical forms are computed only on demand.
#[derive(Clone, Debug, PartialEq)]
pub enum SimState {
    Perm(Permutation),
    Graph(LabeledGraph),
}

impl SimState {
    pub fn decode(kind: InstanceKind, text: &str) -> Result<SimState> {
        Ok(match kind {
            InstanceKind::Perm => SimState::Perm(text.parse()?),
            InstanceKind::Graph => SimState::Graph(text.parse::<UGraph>()?.to_labeled()),
        })
    }

    pub fn size(&self) -> usize {
        match self {
            SimState::Perm(s) => s.len(),
            SimState::Graph(g) => g.n(),
        }
    }

    /// One up-step followed by one down-step.
    pub fn step<R: Rng + ?Sized>(&mut self, p: f64, rng: &mut R) {
        match self {
            SimState::Perm(s) => {
                s.up_step_in_place(p, rng);
                s.down_step_in_place(rng);
            }
            SimState::Graph(g) => {
                g.up_step_in_place(p, rng);
                g.down_step_in_place(rng);
            }
        }
    }

    /// Canonical text encoding (graphs are canonicalized, so keep them small).
    pub fn encode(&self) -> Result<String> {
        Ok(match self {
            SimState::Perm(s) => s.to_string(),
            SimState::Graph(g) => g.try_canonical()?.to_string(),
        })
    }

    /// Pattern density; see [`density_estimate`] for large patterns.
    pub fn density<R: Rng + ?Sized>(&self, pattern: &Pattern, rng: &mut R) -> Result<f64> {
        density_estimate(self, pattern, rng)
    }

    /// Square greyscale picture, dark on white.
    ///
    /// Permutations: the point `(i, σ(i))` is the pixel in column `i − 1`
    /// and row `n − σ(i)` counted from the top, so the identity is the
    /// diagonal from bottom-left to top-right. Graphs: adjacency matrix with
    /// vertices ordered by decreasing degree, ties by label.
    pub fn frame(&self) -> Vec<u8> {
        let n = self.size();
        let mut pixels = vec![255u8; n * n];
        match self {
            SimState::Perm(s) => {
                for (i, &v) in s.values().iter().enumerate() {
                    let row = n - v as usize;
                    pixels[row * n + i] = 0;
                }
            }
            SimState::Graph(g) => {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by_key(|&v| (std::cmp::Reverse(g.degree(v)), v));
                for (a, &u) in order.iter().enumerate() {
                    for (b, &w) in order.iter().enumerate() {
                        if u != w && g.has_edge(u, w) {
                            pixels[a * n + b] = 0;
                        }
                    }
                }
            }
        }
        pixels
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pattern {
    Perm(Permutation),
    Graph(UGraph),
}

impl Pattern {
    pub fn parse(kind: InstanceKind, text: &str) -> Result<Pattern> {
        Ok(match kind {
            InstanceKind::Perm => Pattern::Perm(text.parse()?),
            InstanceKind::Graph => Pattern::Graph(text.parse()?),
        })
    }

    pub fn size(&self) -> usize {
        match self {
            Pattern::Perm(p) => p.len(),
            Pattern::Graph(h) => h.n(),
        }
    }

    fn kind(&self) -> InstanceKind {
        match self {
            Pattern::Perm(_) => InstanceKind::Perm,
            Pattern::Graph(_) => InstanceKind::Graph,
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Perm(p) => write!(f, "{p}"),
            Pattern::Graph(h) => write!(f, "{h}"),
        }
    }
}

/// Patterns of size at most this are counted exactly on every subset.
pub const EXACT_PATTERN_SIZE: usize = 4;

/// Subsets drawn per state when a larger pattern has too many subsets.
pub const SUBSAMPLE_COUNT: usize = 20_000;

/// Above this many subsets, patterns of size > [`EXACT_PATTERN_SIZE`] are
/// estimated from [`SUBSAMPLE_COUNT`] uniform subsets. The subsampling noise
/// is part of each trajectory's value and therefore already included in the
/// across-trajectory standard error.
pub const SUBSAMPLE_THRESHOLD: f64 = 2.0e6;

pub fn density_estimate<R: Rng + ?Sized>(state: &SimState, pattern: &Pattern, rng: &mut R) -> Result<f64> {
    let k = pattern.size();
    let n = state.size();
    if k > n {
        return Err(Error::InvalidArgument(format!("pattern of size {k} exceeds state size {n}")));
    }
    let exact = k <= EXACT_PATTERN_SIZE || binomial_f64(n, k) <= SUBSAMPLE_THRESHOLD;
    match (state, pattern) {
        (SimState::Perm(s), Pattern::Perm(pi)) if exact => Ok(pattern_density_f64(pi, s)),
        (SimState::Graph(g), Pattern::Graph(h)) if exact => Ok(graph_density_f64(h, g)),
        (SimState::Perm(s), Pattern::Perm(pi)) => {
            let hits = (0..SUBSAMPLE_COUNT)
                .filter(|_| s.pattern(&random_subset(n, k, rng)) == *pi)
                .count();
            Ok(hits as f64 / SUBSAMPLE_COUNT as f64)
        }
        (SimState::Graph(g), Pattern::Graph(h)) => {
            let mut hits = 0;
            for _ in 0..SUBSAMPLE_COUNT {
                hits += usize::from(g.induced(&random_subset(n, k, rng)).try_canonical()? == *h);
            }
            Ok(hits as f64 / SUBSAMPLE_COUNT as f64)
        }
        _ => Err(Error::InvalidArgument("pattern and state belong to different instances".into())),
    }
}

/// Sorted uniform `k`-subset of `0..n` (Floyd's algorithm).
fn random_subset<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut chosen = std::collections::BTreeSet::new();
    for j in n - k..n {
        let t = rng.random_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    chosen.into_iter().collect()
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} workers: {e}")))
}

/// Runs every trajectory through the grid and calls
/// `observe(trajectory, grid_index, state, aux_rng)` at each grid point.
/// Results are returned per trajectory in index order.
pub fn simulate<T, F>(config: &SimConfig, workers: usize, observe: F) -> Result<Vec<Vec<T>>>
where
    T: Send,
    F: Fn(usize, usize, &SimState, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    config.validate()?;
    let budget = config.step_budget();
    let p = config.p_f64();
    let pool = thread_pool(workers)?;
    pool.install(|| {
        (0..config.trajectories)
            .into_par_iter()
            .map(|traj| {
                let mut rng = substream(config.master_seed, traj as u64);
                let mut aux = substream(config.master_seed ^ AUX_STREAM_TAG, traj as u64);
                let mut state = config.initial_state(&mut rng)?;
                let mut done = 0u64;
                let mut out = Vec::with_capacity(budget.len());
                for (idx, &target) in budget.iter().enumerate() {
                    while done < target {
                        state.step(p, &mut rng);
                        done += 1;
                    }
                    out.push(observe(traj, idx, &state, &mut aux)?);
                }
                Ok(out)
            })
            .collect()
    })
}

/// Sum in a fixed binary tree over the slice order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        len => {
            let (a, b) = values.split_at(len / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let squares: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let variance = pairwise_sum(&squares) / (n - 1.0);
    (mean, (variance / n).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionKind {
    /// `M_2(π)(1 − e^{−2t}) + e^{−2t} E[d_π(X(0))]`.
    Exact,
    /// `M_k(π) + B e^{−t j(j−1)}`, with `B` fitted on small `t`.
    Envelope,
    None,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityCurve {
    pub pattern: String,
    pub t: Vec<f64>,
    pub steps: Vec<u64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub prediction: Vec<Option<f64>>,
    pub prediction_kind: PredictionKind,
    /// Limit value `M_k(π)` of the expected density.
    pub stationary_value: Option<f64>,
    /// Exponent `j (j − 1)` of the slowest mode.
    pub decay_rate: Option<f64>,
    pub envelope_constant: Option<f64>,
    pub initial_mean: f64,
}

/// Grid points at or below this time are used to fit the envelope constant.
pub const ENVELOPE_FIT_WINDOW: f64 = 0.5;

impl DensityCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pattern,t,steps,mean,stderr,prediction,prediction_kind\n");
        let kind = match self.prediction_kind {
            PredictionKind::Exact => "exact",
            PredictionKind::Envelope => "envelope",
            PredictionKind::None => "none",
        };
        for i in 0..self.t.len() {
            let pred = self.prediction[i].map(|v| format!("{v:.12e}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{:.12e},{:.12e},{},{}\n",
                self.pattern, self.t[i], self.steps[i], self.mean[i], self.stderr[i], pred, kind
            ));
        }
        out
    }
}

/// Exact `M_k(π)` and the decay exponent for the slowest mode of `d_π`.
fn stationary_and_rate(pattern: &Pattern, p: &Rational) -> Result<(f64, Option<f64>)> {
    let k = pattern.size();
    fn lookup<I: crate::chain::Instance>(chain: Chain<I>, s: &I::State) -> Result<(f64, Option<f64>)> {
        let m = chain.stationary(chain.instance().size(s))?;
        let value = to_f64(&m[chain.index_of(s)?]);
        let rate = chain.decay_order(s).map(|j| (j * (j - 1)) as f64);
        Ok((value, rate))
    }
    match pattern {
        Pattern::Perm(pi) => lookup(Chain::new(ChainSpec::new(PermInstance, p.clone(), k)?), pi),
        Pattern::Graph(h) => lookup(Chain::new(ChainSpec::new(GraphInstance::from_env(), p.clone(), k)?), h),
    }
}

/// Largest pattern size for which `M_k(π)` is computed exactly.
pub const MAX_PREDICTION_SIZE: usize = 6;

pub fn estimate_density_curve(config: &SimConfig, pattern: &Pattern, workers: usize) -> Result<DensityCurve> {
    config.validate()?;
    if pattern.kind() != config.instance {
        return Err(Error::InvalidArgument("pattern does not match the instance".into()));
    }
    if pattern.size() > config.n {
        return Err(Error::InvalidArgument(format!(
            "pattern of size {} exceeds n = {}",
            pattern.size(),
            config.n
        )));
    }
    let mut internal = config.clone();
    let prepend_zero = config.t_grid.first() != Some(&0.0);
    if prepend_zero {
        internal.t_grid.insert(0, 0.0);
    }
    let values = simulate(&internal, workers, |_, _, state, aux| state.density(pattern, aux))?;
    let points = internal.t_grid.len();
    let mut mean = Vec::with_capacity(points);
    let mut stderr = Vec::with_capacity(points);
    for idx in 0..points {
        let column: Vec<f64> = values.iter().map(|v| v[idx]).collect();
        let (m, s) = mean_stderr(&column);
        mean.push(m);
        stderr.push(s);
    }
    let initial_mean = mean[0];
    if prepend_zero {
        mean.remove(0);
        stderr.remove(0);
    }
    let t = config.t_grid.clone();
    let k = pattern.size();

    let (stationary_value, decay_rate) = if k <= MAX_PREDICTION_SIZE {
        let (m, r) = stationary_and_rate(pattern, &config.p)?;
        (Some(m), r)
    } else {
        (None, None)
    };
    let (prediction, kind, envelope_constant) = match (k, stationary_value, decay_rate) {
        (1, _, _) => (vec![Some(1.0); t.len()], PredictionKind::Exact, None),
        (2, Some(m), _) => (
            t.iter()
                .map(|&x| Some(m * (1.0 - (-2.0 * x).exp()) + (-2.0 * x).exp() * initial_mean))
                .collect(),
            PredictionKind::Exact,
            None,
        ),
        (_, Some(m), Some(rate)) => {
            let mut b = (initial_mean - m).abs();
            for (x, v) in t.iter().zip(&mean) {
                if *x <= ENVELOPE_FIT_WINDOW {
                    b = b.max((v - m).abs() * (rate * x).exp());
                }
            }
            (
                t.iter().map(|&x| Some(m + b * (-rate * x).exp())).collect(),
                PredictionKind::Envelope,
                Some(b),
            )
        }
        _ => (vec![None; t.len()], PredictionKind::None, None),
    };
    Ok(DensityCurve {
        pattern: pattern.to_string(),
        steps: config.step_budget(),
        t,
        mean,
        stderr,
        prediction,
        prediction_kind: kind,
        stationary_value,
        decay_rate,
        envelope_constant,
        initial_mean,
    })
}

/// Binary P5 image.
pub fn encode_pgm(side: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), side * side, "pixel count");
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Runs trajectory 0 of `config` and writes one PGM per entry of
/// `frame_steps` (cumulative step counts, nondecreasing) as
/// `frame_0000.pgm`, `frame_0001.pgm`, ….
pub fn emit_frames(config: &SimConfig, frame_steps: &[u64], out_dir: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    if frame_steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("frame steps must be nondecreasing".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut rng = substream(config.master_seed, 0);
    let mut state = config.initial_state(&mut rng)?;
    let p = config.p_f64();
    let mut done = 0;
    let mut paths = Vec::with_capacity(frame_steps.len());
    for (idx, &target) in frame_steps.iter().enumerate() {
        while done < target {
            state.step(p, &mut rng);
            done += 1;
        }
        let path = out_dir.join(format!("frame_{idx:04}.pgm"));
        std::fs::write(&path, encode_pgm(config.n, &state.frame()))?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Clone, Debug, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub critical: f64,
    /// Observations in cells of probability zero.
    pub impossible: u64,
    pub pass: bool,
}

/// Pearson goodness of fit at the given confidence level (e.g. 0.99).
pub fn chi_square_test(observed: &[u64], probabilities: &[f64], level: f64) -> Result<ChiSquareResult> {
    if observed.len() != probabilities.len() {
        return Err(Error::SizeMismatch("observed vs expected cells".into()));
    }
    let total: u64 = observed.iter().sum();
    let mut statistic = 0.0;
    let mut cells = 0;
    let mut impossible = 0;
    for (&o, &q) in observed.iter().zip(probabilities) {
        if q <= 0.0 {
            impossible += o;
            continue;
        }
        let e = q * total as f64;
        statistic += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    let dof = cells.max(2) - 1;
    let critical = ChiSquared::new(dof as f64)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .inverse_cdf(level);
    Ok(ChiSquareResult {
        statistic,
        dof,
        critical,
        impossible,
        pass: impossible == 0 && statistic <= critical,
    })
}

/// Reference law for [`distribution_check`].
#[derive(Clone, Debug, PartialEq)]
pub enum Reference {
    /// Exact `M_n`.
    Stationary,
    /// Exact row of `T_n` at the given encoded state.
    OneStep(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct DistributionCheck {
    pub states: Vec<String>,
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
    pub chi_square: ChiSquareResult,
    /// Largest per-state deviation in binomial standard deviations.
    pub max_sigma: f64,
}

fn exact_law<I: crate::chain::Instance>(chain: &Chain<I>, n: usize, reference: &Reference) -> Result<(Vec<String>, Vec<f64>)> {
    let states = chain.encode_level(n)?;
    let probs = match reference {
        Reference::Stationary => chain.stationary(n)?.iter().map(to_f64).collect(),
        Reference::OneStep(text) => {
            let i = chain.index_of(&chain.decode(text)?)?;
            chain.updown_operator(n)?.matrix.row(i).iter().map(to_f64).collect()
        }
    };
    Ok((states, probs))
}

/// Compares the law of the state at the last grid point of `config` (one
/// sample per trajectory) with an exact reference by Pearson chi-square at
/// 99% and per-state binomial deviations.
pub fn distribution_check(config: &SimConfig, reference: &Reference, workers: usize) -> Result<DistributionCheck> {
    config.validate()?;
    let n = config.n;
    let cap = if matches!(reference, Reference::OneStep(_)) { n + 1 } else { n };
    let (states, expected) = match config.instance {
        InstanceKind::Perm => exact_law(&Chain::new(ChainSpec::new(PermInstance, config.p.clone(), cap)?), n, reference)?,
        InstanceKind::Graph => exact_law(
            &Chain::new(ChainSpec::new(GraphInstance::from_env(), config.p.clone(), cap)?),
            n,
            reference,
        )?,
    };
    let last = config.t_grid.len().saturating_sub(1);
    let finals = simulate(config, workers, |_, idx, state, _| if idx == last { state.encode() } else { Ok(String::new()) })?;
    let index: std::collections::HashMap<&str, usize> = states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut observed = vec![0u64; states.len()];
    for traj in &finals {
        let key = traj.last().ok_or_else(|| Error::InvalidArgument("empty time grid".into()))?;
        let i = *index.get(key.as_str()).ok_or_else(|| Error::UnknownState(key.clone(), n))?;
        observed[i] += 1;
    }
    let total = config.trajectories as f64;
    let mut max_sigma: f64 = 0.0;
    for (&o, &q) in observed.iter().zip(&expected) {
        let dev = (o as f64 - q * total).abs();
        let sd = (total * q * (1.0 - q)).sqrt();
        let z = if sd > 0.0 { dev / sd } else if dev > 0.0 { f64::INFINITY } else { 0.0 };
        max_sigma = max_sigma.max(z);
    }
    let chi_square = chi_square_test(&observed, &expected, 0.99)?;
    Ok(DistributionCheck { states, observed, expected, chi_square, max_sigma })
}

/// Every labeled `k`-subset in lexicographic order, for small exhaustive checks.
pub fn all_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        out.push(subset.clone());
        if !next_combination(&mut subset, n) {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn config(instance: InstanceKind, n: usize, initial: InitialState) -> SimConfig {
        SimConfig {
            instance,
            n,
            p: rat(1, 2),
            t_grid: vec![0.0, 0.5, 1.0],
            trajectories: 8,
            master_seed: 42,
            initial,
        }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(mix64(0), 0);
        let a: Vec<u64> = (0..100).map(|i| substream_seed(7, i)).collect();
        let mut sorted = a.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 100);
        assert_ne!(substream_seed(7, 0), substream_seed(8, 0));
        assert_eq!(substream_seed(7, 3), a[3]);
    }

    #[test]
    fn step_budget_is_cumulative() {
        assert_eq!(steps_at(100, 0.7), 7070);
        assert_eq!(steps_at(100, 0.1), 1010);
        assert_eq!(steps_at(3, 0.0), 0);
        let c = config(InstanceKind::Perm, 10, InitialState::Reverse);
        assert_eq!(c.step_budget(), vec![0, 55, 110]);
    }

    #[test]
    fn size_one_is_constant() {
        let c = config(InstanceKind::Perm, 1, InitialState::Reverse);
        let out = simulate(&c, 2, |_, _, s, _| s.encode()).unwrap();
        assert!(out.iter().flatten().all(|s| s == "1"));
        let c = config(InstanceKind::Graph, 1, InitialState::Uniform);
        let out = simulate(&c, 2, |_, _, s, _| s.encode()).unwrap();
        assert!(out.iter().flatten().all(|s| s == "1:"));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        for kind in [InstanceKind::Perm, InstanceKind::Graph] {
            let c = config(kind, 9, InitialState::Uniform);
            let one = simulate(&c, 1, |_, _, s, _| s.encode()).unwrap();
            let eight = simulate(&c, 8, |_, _, s, _| s.encode()).unwrap();
            assert_eq!(one, eight);
        }
    }

    #[test]
    fn validation() {
        let mut c = config(InstanceKind::Perm, 5, InitialState::Explicit("1234".into()));
        assert!(c.validate().is_err());
        c.initial = InitialState::Explicit("54321".into());
        assert!(c.validate().is_ok());
        c.t_grid = vec![1.0, 0.5];
        assert!(c.validate().is_err());
        c.t_grid = vec![0.0];
        c.trajectories = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn frames_follow_orientation() {
        let id = SimState::Perm(Permutation::identity(3));
        assert_eq!(id.frame(), vec![255, 255, 0, 255, 0, 255, 0, 255, 255]);
        let empty = SimState::Graph(LabeledGraph::empty(4));
        assert!(empty.frame().iter().all(|&p| p == 255));
        let pgm = encode_pgm(3, &id.frame());
        assert!(pgm.starts_with(b"P5\n3 3\n255\n"));
        assert_eq!(pgm.len(), 11 + 9);
    }

    #[test]
    fn subsampled_density_is_close() {
        let mut rng = substream(1, 0);
        let s = SimState::Perm(Permutation::random(40, &mut rng));
        let pi: Permutation = "12345".parse().unwrap();
        let exact = pattern_density_f64(&pi, match &s {
            SimState::Perm(x) => x,
            SimState::Graph(_) => unreachable!(),
        });
        let subsets = random_subset(40, 5, &mut rng);
        assert_eq!(subsets.len(), 5);
        assert!(subsets.windows(2).all(|w| w[0] < w[1]));
        let mut hits = 0usize;
        for _ in 0..SUBSAMPLE_COUNT {
            if let SimState::Perm(x) = &s {
                hits += usize::from(x.pattern(&random_subset(40, 5, &mut rng)) == pi);
            }
        }
        let est = hits as f64 / SUBSAMPLE_COUNT as f64;
        let sd = (exact * (1.0 - exact) / SUBSAMPLE_COUNT as f64).sqrt();
        assert!((est - exact).abs() < 5.0 * sd + 1e-9);
    }

    #[test]
    fn pairwise_statistics() {
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0, 4.0]), 10.0);
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn chi_square_basics() {
        let r = chi_square_test(&[500, 500, 0], &[0.5, 0.5, 0.0], 0.99).unwrap();
        assert!(r.pass);
        assert_eq!(r.dof, 1);
        assert!((r.critical - 6.634_896_601_021_214).abs() < 1e-9);
        let r = chi_square_test(&[500, 499, 1], &[0.5, 0.5, 0.0], 0.99).unwrap();
        assert!(!r.pass);
        let r = chi_square_test(&[900, 100], &[0.5, 0.5], 0.99).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn subsets_enumerated() {
        assert_eq!(all_subsets(4, 2).len(), 6);
        assert!(all_subsets(2, 3).is_empty());
    }
}
