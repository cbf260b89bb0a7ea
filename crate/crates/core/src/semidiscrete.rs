//! The ε-inflation approximation of the permuton diffusion: a finite measure
//! representation closed under inflation, the exact expected-density
//! polynomial in ε, and its generator limit.

use num_traits::{One, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{Chain, ChainSpec};
use crate::error::{Error, Result};
use crate::montecarlo::{mean_stderr, substream};
use crate::perm::{run_insertion_sets, Direction, PermInstance, Permutation};
use crate::rational::{binomial, format_rational, int, pow, to_f64, Rational};

/// `(1−ε)x` for `x ≤ s`, `(1−ε)x + ε` for `x > s`.
pub fn phi_map(s: f64, eps: f64, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&x) {
        return Err(Error::ParameterOutOfRange(format!("s = {s} and x = {x} must lie in [0, 1]")));
    }
    check_eps(eps)?;
    Ok(phi(s, eps, x))
}

fn phi(s: f64, eps: f64, x: f64) -> f64 {
    if x <= s {
        (1.0 - eps) * x
    } else {
        (1.0 - eps) * x + eps
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange(format!("eps = {eps} must lie in (0, 1)")))
    }
}

/// Orientation of a slope ±1 segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Up,
    Down,
}

impl From<Direction> for Orientation {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Increasing => Orientation::Up,
            Direction::Decreasing => Orientation::Down,
        }
    }
}

/// A probability measure on the unit square. Segments and boxes are given
/// by the lower-left corner of their bounding rectangle. An `up` segment
/// runs from `(x, y)` to `(x+ℓ, y+ℓ)`, a `down` one from `(x, y+ℓ)` to
/// `(x+ℓ, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Primitive {
    Point { coords: [f64; 2] },
    Segment { coords: [f64; 2], length: f64, orientation: Orientation },
    Box { coords: [f64; 2], width: f64, height: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: f64,
    #[serde(flatten)]
    pub primitive: Primitive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutonMeasure {
    pub atoms: Vec<Atom>,
    /// Set when both marginals are uniform.
    #[serde(default)]
    pub permuton: bool,
}

const WEIGHT_TOLERANCE: f64 = 1e-9;
const SUPPORT_TOLERANCE: f64 = 1e-12;

impl PermutonMeasure {
    pub fn new(atoms: Vec<Atom>, permuton: bool) -> Result<Self> {
        let m = PermutonMeasure { atoms, permuton };
        m.validate()?;
        Ok(m)
    }

    /// Uniform measure on the increasing diagonal.
    pub fn diagonal() -> Self {
        PermutonMeasure {
            atoms: vec![Atom {
                weight: 1.0,
                primitive: Primitive::Segment { coords: [0.0, 0.0], length: 1.0, orientation: Orientation::Up },
            }],
            permuton: true,
        }
    }

    /// `μ_σ`: mass `1/n` spread uniformly on each square
    /// `[(i−1)/n, i/n] × [(σ(i)−1)/n, σ(i)/n]`.
    pub fn from_permutation(sigma: &Permutation) -> Self {
        let n = sigma.len() as f64;
        let atoms = sigma
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| Atom {
                weight: 1.0 / n,
                primitive: Primitive::Box {
                    coords: [i as f64 / n, (v - 1) as f64 / n],
                    width: 1.0 / n,
                    height: 1.0 / n,
                },
            })
            .collect();
        PermutonMeasure { atoms, permuton: true }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: PermutonMeasure = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("measure serializes")
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::EmptySupport);
        }
        for atom in &self.atoms {
            if atom.weight.is_nan() || atom.weight <= 0.0 {
                return Err(Error::InvalidArgument(format!("nonpositive weight {}", atom.weight)));
            }
            let (x0, y0, x1, y1) = atom.primitive.bounds();
            let inside = |v: f64| (-SUPPORT_TOLERANCE..=1.0 + SUPPORT_TOLERANCE).contains(&v);
            if ![x0, y0, x1, y1].into_iter().all(inside) || x1 < x0 || y1 < y0 {
                return Err(Error::InvalidArgument(format!("atom {:?} leaves the unit square", atom.primitive)));
            }
        }
        let total = self.total_weight();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    /// `(1−ε)(φ^{x0,ε}, φ^{y0,ε})_# μ + ε δ`, where `δ` is uniform on the
    /// increasing or decreasing diagonal of
    /// `[(1−ε)x0, (1−ε)x0+ε] × [(1−ε)y0, (1−ε)y0+ε]`. Segments and boxes
    /// are first cut along `x = x0` and `y = y0`; the piece on the cut
    /// line itself has measure zero and follows the `x ≤ s` branch.
    pub fn inflate(&self, x0: f64, y0: f64, eps: f64, dir: Orientation) -> Result<PermutonMeasure> {
        check_eps(eps)?;
        if !(0.0..=1.0).contains(&x0) || !(0.0..=1.0).contains(&y0) {
            return Err(Error::ParameterOutOfRange(format!("({x0}, {y0}) outside the unit square")));
        }
        let mut atoms = Vec::with_capacity(self.atoms.len() + 1);
        for atom in &self.atoms {
            for (fraction, piece) in atom.primitive.split(x0, y0) {
                atoms.push(Atom {
                    weight: (1.0 - eps) * atom.weight * fraction,
                    primitive: piece.push_forward(x0, y0, eps),
                });
            }
        }
        atoms.push(Atom {
            weight: eps,
            primitive: Primitive::Segment {
                coords: [(1.0 - eps) * x0, (1.0 - eps) * y0],
                length: eps,
                orientation: dir,
            },
        });
        Ok(PermutonMeasure { atoms, permuton: self.permuton })
    }

    /// Random `Inf^ε(μ)`: inflation at a `μ`-distributed point, increasing
    /// with probability `p`.
    pub fn random_inflation<R: Rng + ?Sized>(&self, p: f64, eps: f64, rng: &mut R) -> Result<PermutonMeasure> {
        let (x0, y0) = self.sample(rng);
        let dir = if rng.random_bool(p) { Orientation::Up } else { Orientation::Down };
        self.inflate(x0, y0, eps, dir)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let total = self.total_weight();
        let mut u = rng.random::<f64>() * total;
        let mut chosen = self.atoms.last().expect("nonempty measure");
        for atom in &self.atoms {
            if u < atom.weight {
                chosen = atom;
                break;
            }
            u -= atom.weight;
        }
        chosen.primitive.sample(rng)
    }

    /// Exact `(E X, E X², E Y, E Y²)`.
    pub fn marginal_moments(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for atom in &self.atoms {
            let m = atom.primitive.moments();
            for (o, v) in out.iter_mut().zip(m) {
                *o += atom.weight * v;
            }
        }
        out
    }

    /// Monte Carlo `(E X, E X², E Y, E Y²)` with standard errors.
    pub fn marginal_moments_mc(&self, samples: usize, seed: u64) -> [(f64, f64); 4] {
        let mut rng = substream(seed, 0);
        let mut cols: [Vec<f64>; 4] = Default::default();
        for _ in 0..samples {
            let (x, y) = self.sample(&mut rng);
            cols[0].push(x);
            cols[1].push(x * x);
            cols[2].push(y);
            cols[3].push(y * y);
        }
        cols.map(|c| mean_stderr(&c))
    }

    /// Pattern formed by `k` i.i.d. points; ties are broken uniformly.
    pub fn sample_pattern<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Permutation {
        let points: Vec<(f64, f64, f64, f64)> = (0..k)
            .map(|_| {
                let (x, y) = self.sample(rng);
                (x, rng.random::<f64>(), y, rng.random::<f64>())
            })
            .collect();
        pattern_of_points(&points)
    }
}

/// Standardized pattern of `(x, x_tiebreak, y, y_tiebreak)` points.
fn pattern_of_points(points: &[(f64, f64, f64, f64)]) -> Permutation {
    let k = points.len();
    let mut by_x: Vec<usize> = (0..k).collect();
    by_x.sort_by(|&a, &b| (points[a].0, points[a].1).partial_cmp(&(points[b].0, points[b].1)).unwrap());
    let mut by_y: Vec<usize> = (0..k).collect();
    by_y.sort_by(|&a, &b| (points[a].2, points[a].3).partial_cmp(&(points[b].2, points[b].3)).unwrap());
    let mut rank = vec![0u32; k];
    for (r, &i) in by_y.iter().enumerate() {
        rank[i] = r as u32 + 1;
    }
    Permutation::new(by_x.iter().map(|&i| rank[i]).collect()).expect("ranks form a permutation")
}

impl Primitive {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            Primitive::Point { coords: [x, y] } => (x, y, x, y),
            Primitive::Segment { coords: [x, y], length, .. } => (x, y, x + length, y + length),
            Primitive::Box { coords: [x, y], width, height } => (x, y, x + width, y + height),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match *self {
            Primitive::Point { coords: [x, y] } => (x, y),
            Primitive::Segment { coords: [x, y], length, orientation } => {
                let u = rng.random::<f64>() * length;
                match orientation {
                    Orientation::Up => (x + u, y + u),
                    Orientation::Down => (x + u, y + length - u),
                }
            }
            Primitive::Box { coords: [x, y], width, height } => {
                (x + rng.random::<f64>() * width, y + rng.random::<f64>() * height)
            }
        }
    }

    /// `(E X, E X², E Y, E Y²)` of the normalized primitive.
    fn moments(&self) -> [f64; 4] {
        // Uniform on [a, a+w]: mean a + w/2, second moment a² + a w + w²/3.
        let uniform = |a: f64, w: f64| (a + w / 2.0, a * a + a * w + w * w / 3.0);
        let (mx, sx, my, sy) = match *self {
            Primitive::Point { coords: [x, y] } => (x, x * x, y, y * y),
            Primitive::Segment { coords: [x, y], length, .. } => {
                let (a, b) = uniform(x, length);
                let (c, d) = uniform(y, length);
                (a, b, c, d)
            }
            Primitive::Box { coords: [x, y], width, height } => {
                let (a, b) = uniform(x, width);
                let (c, d) = uniform(y, height);
                (a, b, c, d)
            }
        };
        [mx, sx, my, sy]
    }

    /// Pieces on each side of the cut lines, with their mass fractions.
    fn split(&self, x0: f64, y0: f64) -> Vec<(f64, Primitive)> {
        match *self {
            Primitive::Point { .. } => vec![(1.0, self.clone())],
            Primitive::Segment { coords: [x, y], length, orientation } => {
                if length == 0.0 {
                    return vec![(1.0, self.clone())];
                }
                // Parameter u ∈ [0, ℓ] along the horizontal extent.
                let cross_y = match orientation {
                    Orientation::Up => y0 - y,
                    Orientation::Down => y + length - y0,
                };
                let mut cuts = vec![0.0, length];
                for c in [x0 - x, cross_y] {
                    if c > 0.0 && c < length {
                        cuts.push(c);
                    }
                }
                cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                cuts.dedup();
                cuts.windows(2)
                    .map(|w| {
                        let (a, b) = (w[0], w[1]);
                        let corner_y = match orientation {
                            Orientation::Up => y + a,
                            Orientation::Down => y + length - b,
                        };
                        (
                            (b - a) / length,
                            Primitive::Segment { coords: [x + a, corner_y], length: b - a, orientation },
                        )
                    })
                    .collect()
            }
            Primitive::Box { coords: [x, y], width, height } => {
                let xs = cut_interval(x, width, x0);
                let ys = cut_interval(y, height, y0);
                let mut out = Vec::with_capacity(4);
                for &(xa, w) in &xs {
                    for &(ya, h) in &ys {
                        let fx = if width > 0.0 { w / width } else { 1.0 };
                        let fy = if height > 0.0 { h / height } else { 1.0 };
                        out.push((fx * fy, Primitive::Box { coords: [xa, ya], width: w, height: h }));
                    }
                }
                out
            }
        }
    }

    /// Image of a piece lying on one side of both cut lines.
    fn push_forward(&self, x0: f64, y0: f64, eps: f64) -> Primitive {
        let (bx0, by0, bx1, by1) = self.bounds();
        // The side of the cut is read off the piece's centre.
        let side_x = phi(x0, eps, (bx0 + bx1) / 2.0) - (1.0 - eps) * (bx0 + bx1) / 2.0;
        let side_y = phi(y0, eps, (by0 + by1) / 2.0) - (1.0 - eps) * (by0 + by1) / 2.0;
        let map = |[x, y]: [f64; 2]| [(1.0 - eps) * x + side_x, (1.0 - eps) * y + side_y];
        match *self {
            Primitive::Point { coords } => Primitive::Point { coords: map(coords) },
            Primitive::Segment { coords, length, orientation } => Primitive::Segment {
                coords: map(coords),
                length: (1.0 - eps) * length,
                orientation,
            },
            Primitive::Box { coords, width, height } => Primitive::Box {
                coords: map(coords),
                width: (1.0 - eps) * width,
                height: (1.0 - eps) * height,
            },
        }
    }
}

/// Splits `[a, a+w]` at `s` when `s` is interior.
fn cut_interval(a: f64, w: f64, s: f64) -> Vec<(f64, f64)> {
    if s > a && s < a + w {
        vec![(a, s - a), (s, a + w - s)]
    } else {
        vec![(a, w)]
    }
}

/// Largest pattern size for exact block densities.
pub const MAX_EXACT_PATTERN: usize = 6;
/// Largest permutation size for exact block densities.
pub const MAX_EXACT_SIGMA: usize = 12;

/// `d°_π(μ_σ)`: probability that `|π|` i.i.d. points of `μ_σ` form `π`.
///
/// Sums over the occupation counts `c_b` of the `n` blocks. Such counts
/// have probability `k!/(∏ c_b! n^k)`; given them, the points in a block
/// are in uniformly random relative order, so the pattern is `π` with
/// probability `1/∏ c_b!` when the blocks' value intervals line up with
/// `π`, and `0` otherwise.
pub fn permuton_density_exact(sigma: &Permutation, pi: &Permutation) -> Result<Rational> {
    let n = sigma.len();
    let k = pi.len();
    if k > MAX_EXACT_PATTERN || n > MAX_EXACT_SIGMA {
        return Err(Error::LevelCapExceeded {
            level: if k > MAX_EXACT_PATTERN { k } else { n },
            cap: if k > MAX_EXACT_PATTERN { MAX_EXACT_PATTERN } else { MAX_EXACT_SIGMA },
        });
    }
    if n == 0 {
        return Err(Error::EmptySupport);
    }
    let factorials: Vec<u64> = (0..=k as u64).scan(1u64, |f, i| {
        if i > 0 {
            *f *= i;
        }
        Some(*f)
    })
    .collect();
    let mut counts = vec![0usize; n];
    let mut total = Rational::zero();
    let denominator = pow(&int(n as i64), k as u64);
    loop_compositions(&mut counts, 0, k, &mut |c| {
        if consistent(sigma, pi, c) {
            let prod: u64 = c.iter().map(|&x| factorials[x]).product();
            total += Rational::new(factorials[k].into(), (prod * prod).into());
        }
    });
    Ok(total / denominator)
}

fn loop_compositions(counts: &mut Vec<usize>, b: usize, left: usize, f: &mut impl FnMut(&[usize])) {
    if b + 1 == counts.len() {
        counts[b] = left;
        f(counts);
        counts[b] = 0;
        return;
    }
    for c in 0..=left {
        counts[b] = c;
        loop_compositions(counts, b + 1, left - c, f);
    }
    counts[b] = 0;
}

/// Whether `π` arises from `σ` with block `b` holding `c_b` consecutive
/// positions whose values fill the interval prescribed by `σ`.
fn consistent(sigma: &Permutation, pi: &Permutation, counts: &[usize]) -> bool {
    let v = pi.values();
    let mut pos = 0;
    for (b, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let offset: usize = counts
            .iter()
            .enumerate()
            .filter(|&(b2, _)| sigma.at(b2 + 1) < sigma.at(b + 1))
            .map(|(_, &c2)| c2)
            .sum();
        if v[pos..pos + c].iter().any(|&x| (x as usize) <= offset || (x as usize) > offset + c) {
            return false;
        }
        pos += c;
    }
    true
}

/// Polynomial in ε with exact coefficients, lowest degree first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpsPolynomial {
    pub coefficients: Vec<Rational>,
}

impl EpsPolynomial {
    pub fn zero(degree: usize) -> Self {
        EpsPolynomial { coefficients: vec![Rational::zero(); degree + 1] }
    }

    pub fn degree_bound(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn coefficient(&self, d: usize) -> Rational {
        self.coefficients.get(d).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn evaluate(&self, eps: &Rational) -> Rational {
        self.coefficients.iter().rev().fold(Rational::zero(), |acc, c| acc * eps + c)
    }

    pub fn evaluate_f64(&self, eps: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * eps + to_f64(c))
    }

    /// Adds `scale · ε^m (1−ε)^j`.
    fn add_term(&mut self, scale: &Rational, m: usize, j: usize) {
        for i in 0..=j {
            let sign = if i % 2 == 0 { int(1) } else { int(-1) };
            let c = Rational::from_integer(binomial(j, i)) * sign * scale;
            self.coefficients[m + i] += c;
        }
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.coefficients.iter().map(format_rational).collect()
    }
}

/// `E[d°_π(Inf^ε(μ))]` as a polynomial in ε, given exact `d°_τ(μ)` for the
/// patterns `τ` obtained by collapsing monotone runs of `π`.
pub fn inf_eps_expected_polynomial(
    pi: &Permutation,
    p: &Rational,
    density: &mut impl FnMut(&Permutation) -> Result<Rational>,
) -> Result<EpsPolynomial> {
    let k = pi.len();
    if k == 0 {
        return Err(Error::InvalidArgument("empty pattern".into()));
    }
    let mut poly = EpsPolynomial::zero(k);
    poly.add_term(&density(pi)?, 0, k);
    let q = Rational::one() - p;
    for m in 1..=k {
        let sets = run_insertion_sets(pi, m)?;
        let mut sum_inc = Rational::zero();
        for (tau, _) in &sets.increasing {
            sum_inc += density(tau)?;
        }
        let mut sum_dec = Rational::zero();
        for (tau, _) in &sets.decreasing {
            sum_dec += density(tau)?;
        }
        let weight = Rational::new(binomial(k, m), ((k - m + 1) as i64).into());
        let scale = weight * (p * sum_inc + &q * sum_dec);
        poly.add_term(&scale, m, k - m);
    }
    Ok(poly)
}

/// Numeric evaluation of the same expansion from floating densities
/// (for instance Monte Carlo estimates).
pub fn inf_eps_expected_density(
    pi: &Permutation,
    p: f64,
    eps: f64,
    density: &mut impl FnMut(&Permutation) -> Result<f64>,
) -> Result<f64> {
    let k = pi.len();
    if k == 0 {
        return Err(Error::InvalidArgument("empty pattern".into()));
    }
    let mut value = (1.0 - eps).powi(k as i32) * density(pi)?;
    for m in 1..=k {
        let sets = run_insertion_sets(pi, m)?;
        let mut sum_inc = 0.0;
        for (tau, _) in &sets.increasing {
            sum_inc += density(tau)?;
        }
        let mut sum_dec = 0.0;
        for (tau, _) in &sets.decreasing {
            sum_dec += density(tau)?;
        }
        let weight = crate::rational::binomial_f64(k, m) / (k - m + 1) as f64;
        value += weight * (1.0 - eps).powi((k - m) as i32) * eps.powi(m as i32) * (p * sum_inc + (1.0 - p) * sum_dec);
    }
    Ok(value)
}

/// `2 ε⁻² (E[d°_π(Inf^ε(μ_σ))] − d°_π(μ_σ))`, exactly.
pub fn generator_eps(sigma: &Permutation, pi: &Permutation, p: &Rational, eps: &Rational) -> Result<Rational> {
    if !(eps > &Rational::zero() && eps < &Rational::one()) {
        return Err(Error::ParameterOutOfRange(format!("eps = {} must lie in (0, 1)", format_rational(eps))));
    }
    let poly = inf_eps_expected_polynomial(pi, p, &mut |tau| permuton_density_exact(sigma, tau))?;
    let d = permuton_density_exact(sigma, pi)?;
    Ok((poly.evaluate(eps) - d) * int(2) / (eps * eps))
}

/// `k(k−1) (−d°_π(μ) + Σ_τ U(τ, π) d°_τ(μ))` with `U` the up-kernel of
/// `chain` into size `k` and `μ = μ_σ`.
pub fn limit_generator(chain: &Chain<PermInstance>, sigma: &Permutation, pi: &Permutation) -> Result<Rational> {
    let k = pi.len();
    if k < 2 {
        return Ok(Rational::zero());
    }
    let up = chain.up_kernel(k - 1)?;
    let level = chain.enumerate_level(k - 1)?;
    let j = chain.index_of(pi)?;
    let mut sum = Rational::zero();
    for (i, tau) in level.states.iter().enumerate() {
        let u = up.get(i, j);
        if !u.is_zero() {
            sum += u * permuton_density_exact(sigma, tau)?;
        }
    }
    let d = permuton_density_exact(sigma, pi)?;
    Ok(int((k * (k - 1)) as i64) * (sum - d))
}

/// Chain used for the up-kernel in [`limit_generator`].
pub fn generator_chain(p: &Rational) -> Result<Chain<PermInstance>> {
    Ok(Chain::new(ChainSpec::new(PermInstance, p.clone(), MAX_EXACT_PATTERN)?))
}

#[derive(Clone, Debug, Serialize)]
pub struct GeneratorReport {
    pub sigma: String,
    pub pi: String,
    pub p: String,
    /// Coefficients of `E[d°_π(Inf^ε(μ_σ))] − d°_π(μ_σ)`, lowest degree first.
    pub difference_coefficients: Vec<String>,
    pub density: String,
    pub constant_vanishes: bool,
    pub linear_vanishes: bool,
    /// `2 ×` the ε² coefficient, i.e. the ε⁰ term of `A_ε d°_π`.
    pub generator_leading: String,
    pub limit_generator: String,
    pub limit_matches: bool,
    pub eps: Option<String>,
    pub generator_at_eps: Option<String>,
    pub generator_at_eps_f64: Option<f64>,
}

impl GeneratorReport {
    pub fn passed(&self) -> bool {
        self.constant_vanishes && self.linear_vanishes && self.limit_matches
    }
}

/// Expands `E[d°_π(Inf^ε(μ_σ))] − d°_π(μ_σ)` in ε and compares twice its
/// ε² coefficient with [`limit_generator`].
pub fn generator_limit_check(
    chain: &Chain<PermInstance>,
    sigma: &Permutation,
    pi: &Permutation,
    eps: Option<&Rational>,
) -> Result<GeneratorReport> {
    let p = chain.p();
    let d = permuton_density_exact(sigma, pi)?;
    let mut poly = inf_eps_expected_polynomial(pi, p, &mut |tau| permuton_density_exact(sigma, tau))?;
    poly.coefficients[0] -= &d;
    let leading = poly.coefficient(2) * int(2);
    let limit = limit_generator(chain, sigma, pi)?;
    let at_eps = eps.map(|e| generator_eps(sigma, pi, p, e)).transpose()?;
    Ok(GeneratorReport {
        sigma: sigma.to_string(),
        pi: pi.to_string(),
        p: format_rational(p),
        difference_coefficients: poly.to_strings(),
        density: format_rational(&d),
        constant_vanishes: poly.coefficient(0).is_zero(),
        linear_vanishes: poly.coefficient(1).is_zero(),
        generator_leading: format_rational(&leading),
        limit_matches: leading == limit,
        limit_generator: format_rational(&limit),
        eps: eps.map(format_rational),
        generator_at_eps_f64: at_eps.as_ref().map(to_f64),
        generator_at_eps: at_eps.as_ref().map(format_rational),
    })
}

/// Samples per random stream in the estimators below; fixed so results do
/// not depend on the worker count.
pub const MC_CHUNK: usize = 4096;

fn chunked_indicator<F>(samples: usize, seed: u64, workers: usize, draw: F) -> Result<(f64, f64)>
where
    F: Fn(&mut ChaCha8Rng) -> Result<bool> + Sync,
{
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let hits: Vec<u64> = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = substream(seed, c as u64);
                let len = MC_CHUNK.min(samples - c * MC_CHUNK);
                let mut h = 0u64;
                for _ in 0..len {
                    h += u64::from(draw(&mut rng)?);
                }
                Ok(h)
            })
            .collect::<Result<_>>()
    })?;
    let total: u64 = hits.iter().sum();
    let mean = total as f64 / samples as f64;
    let stderr = (mean * (1.0 - mean) / samples as f64).sqrt();
    Ok((mean, stderr))
}

/// Monte Carlo `d°_π(μ)` with its standard error.
pub fn mc_density(mu: &PermutonMeasure, pi: &Permutation, samples: usize, seed: u64, workers: usize) -> Result<(f64, f64)> {
    chunked_indicator(samples, seed, workers, |rng| Ok(mu.sample_pattern(pi.len(), rng) == *pi))
}

/// Monte Carlo `E[d°_π(Inf^ε(μ))]`: each sample draws `(X₀, Y₀)` and the
/// orientation, builds the inflated measure and tests `|π|` fresh points.
pub fn mc_inflated_density(
    mu: &PermutonMeasure,
    pi: &Permutation,
    p: f64,
    eps: f64,
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<(f64, f64)> {
    check_eps(eps)?;
    chunked_indicator(samples, seed, workers, |rng| {
        let inflated = mu.random_inflation(p, eps, rng)?;
        Ok(inflated.sample_pattern(pi.len(), rng) == *pi)
    })
}
