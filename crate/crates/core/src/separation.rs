//! Separation distances: definitional brute force on enumerated levels,
//! closed forms for rates `c_n`, the continuous-time variant, and the
//! large-size limit `Δ_F` with its eta-product form.
//!
//! Closed forms are alternating sums with large cancellation. Exact
//! rationals are used up to [`EXACT_SIZE_LIMIT`]; beyond that the sums are
//! evaluated with Neumaier compensation and a first-order error bound, and a
//! result whose bound exceeds [`RELATIVE_BUDGET`] of its magnitude is refused.

use std::f64::consts::PI;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{Chain, Instance};
use crate::error::{Error, Result};
use crate::rational::{format_rational, int, is_open_unit, pow, to_f64, Rational};

/// Largest size for which closed forms are summed in exact rationals.
pub const EXACT_SIZE_LIMIT: usize = 30;

/// Largest accepted ratio of error bound to result magnitude.
pub const RELATIVE_BUDGET: f64 = 1e-9;

/// Truncation threshold for the limit series and the eta product.
pub const SERIES_CUTOFF: f64 = 1e-18;

/// `1 − Δ_F` is reported instead of `Δ_F` when smaller than this.
pub const COMPLEMENT_THRESHOLD: f64 = 1e-12;

/// `max_z 1 − P(z)/Q(z)` over `Q(z) > 0`.
pub fn sep(p: &[Rational], q: &[Rational]) -> Result<Rational> {
    if p.len() != q.len() {
        return Err(Error::SizeMismatch(format!("{} vs {} entries", p.len(), q.len())));
    }
    p.iter()
        .zip(q)
        .filter(|(_, qz)| qz.is_positive())
        .map(|(pz, qz)| Rational::one() - pz / qz)
        .max()
        .ok_or(Error::EmptySupport)
}

pub fn sep_f64(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SizeMismatch(format!("{} vs {} entries", p.len(), q.len())));
    }
    p.iter()
        .zip(q)
        .filter(|(_, &qz)| qz > 0.0)
        .map(|(pz, qz)| 1.0 - pz / qz)
        .reduce(f64::max)
        .ok_or(Error::EmptySupport)
}

/// `Δ_n(m) = max_{r,s} 1 − T_n^m(r, s) / M_n(s)` for `m = 0..=m_max`.
///
/// `T_n` is scaled to an integer matrix `A = L T_n` by the least common
/// denominator `L`, so the powers are computed in integers and only the final
/// ratios are rational.
pub fn sepdist_bruteforce_curve<I: Instance>(chain: &Chain<I>, n: usize, m_max: u64) -> Result<Vec<Rational>> {
    if !is_open_unit(chain.p()) {
        return Err(Error::DegenerateParameter(format_rational(chain.p())));
    }
    let stationary = chain.stationary(n)?;
    let size = stationary.len();
    if size == 1 {
        return Ok(vec![Rational::zero(); m_max as usize + 1]);
    }
    let t = chain.updown_operator(n)?;
    let lcd = (0..size)
        .flat_map(|i| t.matrix.row(i).iter().map(|v| v.denom().clone()))
        .fold(BigInt::one(), |acc, d| acc.lcm(&d));
    let scaled: Vec<Vec<(usize, BigInt)>> = (0..size)
        .map(|i| {
            t.matrix
                .row_support(i)
                .map(|(j, v)| (j, v.numer() * (&lcd / v.denom())))
                .collect()
        })
        .collect();
    let support: Vec<usize> = (0..size).filter(|&s| stationary[s].is_positive()).collect();

    let mut rows: Vec<Vec<BigInt>> = (0..size)
        .map(|r| (0..size).map(|c| BigInt::from(u8::from(r == c))).collect())
        .collect();
    let mut scale = BigInt::one();
    let mut out = Vec::with_capacity(m_max as usize + 1);
    for m in 0..=m_max {
        if m > 0 {
            rows = rows
                .par_iter()
                .map(|row| {
                    let mut next = vec![BigInt::zero(); size];
                    for (k, a) in row.iter().enumerate() {
                        if a.is_zero() {
                            continue;
                        }
                        for (j, b) in &scaled[k] {
                            next[*j] += a * b;
                        }
                    }
                    next
                })
                .collect();
            scale *= &lcd;
        }
        let value = support
            .iter()
            .map(|&s| {
                let worst = rows.iter().map(|row| &row[s]).min().expect("nonempty level");
                Rational::one() - Rational::new(worst.clone(), scale.clone()) / &stationary[s]
            })
            .max()
            .expect("stationary law has support");
        out.push(value);
    }
    Ok(out)
}

pub fn sepdist_bruteforce<I: Instance>(chain: &Chain<I>, n: usize, m: u64) -> Result<Rational> {
    Ok(sepdist_bruteforce_curve(chain, n, m)?.pop().expect("curve has m + 1 points"))
}

fn check_rates(rates: &[Rational]) -> Result<()> {
    if rates.is_empty() {
        return Err(Error::InvalidRates("need at least c_1".into()));
    }
    if !rates[0].is_positive() {
        return Err(Error::InvalidRates("rates must be positive".into()));
    }
    if let Some(w) = rates.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidRates(format!(
            "rates must increase strictly, got {} then {}",
            format_rational(&w[0]),
            format_rational(&w[1])
        )));
    }
    Ok(())
}

/// `Π_{j ≠ i, j < n} c_j / (c_j − c_i)` for `i = 1..n−1`, given `c_1..c_n`.
pub fn separation_coefficients(rates: &[Rational]) -> Result<Vec<Rational>> {
    check_rates(rates)?;
    let n = rates.len();
    Ok((0..n - 1)
        .map(|i| {
            (0..n - 1)
                .filter(|&j| j != i)
                .fold(Rational::one(), |acc, j| acc * &rates[j] / (&rates[j] - &rates[i]))
        })
        .collect())
}

/// `Δ_n(m) = Σ_{i<n} (1 − c_i/c_n)^m Π_{j≠i} c_j/(c_j − c_i)` from rates `c_1..c_n`.
pub fn sepdist_formula_exact(rates: &[Rational], m: u64) -> Result<Rational> {
    let coeffs = separation_coefficients(rates)?;
    let cn = rates.last().expect("checked nonempty");
    Ok(coeffs
        .iter()
        .zip(rates)
        .fold(Rational::zero(), |acc, (a, ci)| acc + a * pow(&(Rational::one() - ci / cn), m)))
}

/// Rates `c_k = k (k + 1)` for `k = 1..=n`.
pub fn quadratic_rates(n: usize) -> Vec<Rational> {
    (1..=n).map(|k| int((k * (k + 1)) as i64)).collect()
}

/// `(−1)^{j−1} (2j + 1) Π_{i=1}^{j} (n − i)/(n + i)`.
pub fn quadratic_coefficient_exact(n: usize, j: usize) -> Rational {
    let sign = if j % 2 == 1 { int(1) } else { int(-1) };
    (1..=j).fold(sign * int(2 * j as i64 + 1), |acc, i| {
        acc * Rational::new(BigInt::from(n - i), BigInt::from(n + i))
    })
}

/// Float version of [`quadratic_coefficient_exact`]; relative error at most
/// `(2j + 2) ε`.
pub fn quadratic_coefficient_f64(n: usize, j: usize) -> f64 {
    let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
    (1..=j).fold(sign * (2 * j + 1) as f64, |acc, i| acc * ((n - i) as f64 / (n + i) as f64))
}

/// Exact `Δ_n(m)` for rates `k (k + 1)` via the simplified coefficients.
pub fn sepdist_quadratic_exact(n: usize, m: u64) -> Rational {
    let cn = int((n * (n + 1)) as i64);
    (1..n).fold(Rational::zero(), |acc, j| {
        let x = Rational::one() - int((j * (j + 1)) as i64) / &cn;
        acc + quadratic_coefficient_exact(n, j) * pow(&x, m)
    })
}

/// Neumaier-compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
    abs_sum: f64,
    count: usize,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
        self.abs_sum += x.abs();
        self.count += 1;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }

    /// Rounding error of the summation itself: `2ε|S| + n ε² Σ|x|`.
    pub fn rounding_bound(&self) -> f64 {
        2.0 * f64::EPSILON * self.value().abs() + self.count as f64 * f64::EPSILON * f64::EPSILON * self.abs_sum
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactRational,
    Compensated,
    Series,
    ProductComplement,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ExactRational => "exact-rational",
            Method::Compensated => "compensated",
            Method::Series => "series",
            Method::ProductComplement => "product-complement",
        })
    }
}

/// A float value with an absolute error bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub value: f64,
    pub err_bound: f64,
    pub method: Method,
    /// Exact value as `num/den`, when available.
    pub exact: Option<String>,
}

fn finish(acc: CompensatedSum, term_error: f64) -> Result<Evaluation> {
    let value = acc.value();
    let err_bound = term_error + acc.rounding_bound();
    if err_bound > RELATIVE_BUDGET * value.abs() {
        return Err(Error::PrecisionLoss { value, bound: err_bound });
    }
    Ok(Evaluation {
        value,
        err_bound,
        method: Method::Compensated,
        exact: None,
    })
}

fn exact_evaluation(r: Rational) -> Evaluation {
    let value = to_f64(&r);
    Evaluation {
        value,
        err_bound: f64::EPSILON * value.abs(),
        method: Method::ExactRational,
        exact: Some(format_rational(&r)),
    }
}

/// `Δ_n(m)` for rates `k (k + 1)`: exact up to [`EXACT_SIZE_LIMIT`],
/// compensated float beyond.
pub fn sepdist_discrete(n: usize, m: u64) -> Result<Evaluation> {
    if n == 0 {
        return Err(Error::LevelTooSmall { level: 0, min: 1 });
    }
    if n <= EXACT_SIZE_LIMIT {
        return Ok(exact_evaluation(sepdist_quadratic_exact(n, m)));
    }
    let cn = (n * (n + 1)) as f64;
    let mut acc = CompensatedSum::default();
    let mut term_error = 0.0;
    for j in 1..n {
        let log_x = (-((j * (j + 1)) as f64) / cn).ln_1p();
        let exponent = m as f64 * log_x;
        let term = quadratic_coefficient_f64(n, j) * exponent.exp();
        acc.add(term);
        let rel = (2 * j + 6) as f64 * f64::EPSILON + 3.0 * exponent.abs() * f64::EPSILON;
        term_error += term.abs() * rel;
    }
    finish(acc, term_error)
}

/// `Δ_n*(t) = Σ_{j<n} e^{−c_j t} Π_{i≠j} c_i/(c_i − c_j)` for rates `k (k + 1)`.
pub fn sepdist_continuous(n: usize, t: f64) -> Result<Evaluation> {
    if n == 0 {
        return Err(Error::LevelTooSmall { level: 0, min: 1 });
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("time must be finite and nonnegative, got {t}")));
    }
    if n == 1 {
        return Ok(exact_evaluation(Rational::zero()));
    }
    let mut acc = CompensatedSum::default();
    let mut term_error = 0.0;
    for j in 1..n {
        let exponent = -((j * (j + 1)) as f64) * t;
        let term = quadratic_coefficient_f64(n, j) * exponent.exp();
        acc.add(term);
        let rel = (2 * j + 6) as f64 * f64::EPSILON + 2.0 * exponent.abs() * f64::EPSILON;
        term_error += term.abs() * rel;
    }
    finish(acc, term_error)
}

/// [`sepdist_continuous`] for arbitrary rates `c_1..c_n`; the coefficients are
/// exact and rounded once.
pub fn sepdist_continuous_generic(rates: &[Rational], t: f64) -> Result<Evaluation> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("time must be finite and nonnegative, got {t}")));
    }
    let coeffs = separation_coefficients(rates)?;
    if coeffs.is_empty() {
        return Ok(exact_evaluation(Rational::zero()));
    }
    let mut acc = CompensatedSum::default();
    let mut term_error = 0.0;
    for (a, c) in coeffs.iter().zip(rates) {
        let exponent = -to_f64(c) * t;
        let term = to_f64(a) * exponent.exp();
        acc.add(term);
        term_error += term.abs() * (4.0 + 2.0 * exponent.abs()) * f64::EPSILON;
    }
    finish(acc, term_error)
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::InvalidArgument(format!("time must be positive and finite, got {t}")));
    }
    Ok(())
}

/// `Δ_F(t) = Σ_{j≥1} (−1)^{j−1} (2j+1) e^{−t j(j+1)}`, truncated once a term
/// drops below [`SERIES_CUTOFF`].
pub fn sepdist_limit(t: f64) -> Result<f64> {
    check_time(t)?;
    let mut acc = CompensatedSum::default();
    for j in 1usize.. {
        let magnitude = (2 * j + 1) as f64 * (-t * (j * (j + 1)) as f64).exp();
        if magnitude < SERIES_CUTOFF && (j * (j + 1)) as f64 * t > 1.0 {
            break;
        }
        acc.add(if j % 2 == 1 { magnitude } else { -magnitude });
    }
    Ok(acc.value())
}

/// `Π_{j≥1} (1 − e^{−2jt})³`, which equals `e^{t/4} η³(it/π)`.
pub fn eta_cube_scaled(t: f64) -> Result<f64> {
    check_time(t)?;
    let mut log_product = CompensatedSum::default();
    for j in 1usize.. {
        let q = (-2.0 * j as f64 * t).exp();
        if q < SERIES_CUTOFF {
            break;
        }
        log_product.add((-q).ln_1p());
    }
    Ok((3.0 * log_product.value()).exp())
}

/// Dedekind eta on the imaginary axis, `η(iy) = e^{−πy/12} Π (1 − e^{−2πjy})`.
pub fn dedekind_eta_imag(y: f64) -> Result<f64> {
    check_time(y)?;
    let mut log_product = CompensatedSum::default();
    log_product.add(-PI * y / 12.0);
    for j in 1usize.. {
        let q = (-2.0 * PI * j as f64 * y).exp();
        if q < SERIES_CUTOFF {
            break;
        }
        log_product.add((-q).ln_1p());
    }
    Ok(log_product.value().exp())
}

/// `1 − Δ_F(t)` from the product form, accurate when `Δ_F` is close to 1.
pub fn one_minus_limit(t: f64) -> Result<f64> {
    eta_cube_scaled(t)
}

/// `|Δ_F(t) − (1 − Π (1 − e^{−2jt})³)|`.
pub fn product_residual(t: f64) -> Result<f64> {
    Ok((sepdist_limit(t)? - (1.0 - eta_cube_scaled(t)?)).abs())
}

/// `|(1 − Δ_F(t)) − e^{−π²/4t + t/4} (π/t)^{3/2} (1 − Δ_F(π²/t))|`.
pub fn symmetry_residual(t: f64) -> Result<f64> {
    let lhs = one_minus_limit(t)?;
    let dual = PI * PI / t;
    let rhs = (-PI * PI / (4.0 * t) + t / 4.0).exp() * (PI / t).powf(1.5) * one_minus_limit(dual)?;
    Ok((lhs - rhs).abs())
}

/// `e^{−π²/4t} (π/t)^{3/2}`, the leading small-time behaviour of `1 − Δ_F`.
pub fn small_time_law(t: f64) -> Result<f64> {
    check_time(t)?;
    Ok((-PI * PI / (4.0 * t)).exp() * (PI / t).powf(1.5))
}

/// `|(1 − Δ_F(t)) / law(t) − 1|` for [`small_time_law`].
pub fn small_time_relative_error(t: f64) -> Result<f64> {
    Ok((one_minus_limit(t)? / small_time_law(t)? - 1.0).abs())
}

/// `Δ_F(t) / (3 e^{−2t})`.
pub fn large_time_ratio(t: f64) -> Result<f64> {
    Ok(sepdist_limit(t)? / (3.0 * (-2.0 * t).exp()))
}

/// `Δ_F(t)`, switching to its complement when `Δ_F` is within
/// [`COMPLEMENT_THRESHOLD`] of 1.
pub fn limit_evaluation(t: f64) -> Result<Evaluation> {
    let complement = one_minus_limit(t)?;
    if complement < COMPLEMENT_THRESHOLD {
        return Ok(Evaluation {
            value: complement,
            err_bound: 16.0 * f64::EPSILON * complement * (1.0 + 1.0 / t),
            method: Method::ProductComplement,
            exact: None,
        });
    }
    let value = sepdist_limit(t)?;
    Ok(Evaluation {
        value,
        err_bound: 8.0 * f64::EPSILON * (1.0 + t.recip().sqrt()),
        method: Method::Series,
        exact: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Discrete,
    Continuous,
    Limit,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Discrete => "discrete",
            Mode::Continuous => "continuous",
            Mode::Limit => "limit",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SepPoint {
    pub abscissa: f64,
    pub evaluation: Evaluation,
    /// Product-form and symmetry residuals, limit mode only.
    pub eta_residuals: Option<(f64, Option<f64>)>,
}

/// A separation-distance curve over steps (discrete) or times.
#[derive(Clone, Debug, Serialize)]
pub struct SepCurve {
    pub mode: Mode,
    pub n: Option<usize>,
    pub p: Option<String>,
    pub points: Vec<SepPoint>,
}

/// Symmetry residuals are only meaningful where both sides are resolvable.
const SYMMETRY_WINDOW: (f64, f64) = (0.3, 3.0);

impl SepCurve {
    /// Evaluates in parallel; output order follows `abscissae`.
    pub fn evaluate(mode: Mode, n: Option<usize>, p: Option<String>, abscissae: &[f64], check_eta: bool) -> Result<SepCurve> {
        if mode != Mode::Limit && n.is_none() {
            return Err(Error::InvalidArgument(format!("{mode} mode needs a size n")));
        }
        let points = abscissae
            .par_iter()
            .map(|&x| {
                let evaluation = match mode {
                    Mode::Discrete => {
                        if x < 0.0 || x.fract() != 0.0 {
                            return Err(Error::InvalidArgument(format!("step count must be a nonnegative integer, got {x}")));
                        }
                        sepdist_discrete(n.expect("checked"), x as u64)?
                    }
                    Mode::Continuous => sepdist_continuous(n.expect("checked"), x)?,
                    Mode::Limit => limit_evaluation(x)?,
                };
                let eta_residuals = if mode == Mode::Limit && check_eta {
                    let symmetry = (SYMMETRY_WINDOW.0..=SYMMETRY_WINDOW.1)
                        .contains(&x)
                        .then(|| symmetry_residual(x))
                        .transpose()?;
                    Some((product_residual(x)?, symmetry))
                } else {
                    None
                };
                Ok(SepPoint {
                    abscissa: x,
                    evaluation,
                    eta_residuals,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SepCurve { mode, n, p, points })
    }

    pub fn to_csv(&self) -> String {
        let with_exact = self.points.iter().any(|pt| pt.evaluation.exact.is_some());
        let with_eta = self.points.iter().any(|pt| pt.eta_residuals.is_some());
        let mut out = String::from("mode,n,p,abscissa,value,method,err_bound");
        if with_exact {
            out.push_str(",exact");
        }
        if with_eta {
            out.push_str(",product_residual,symmetry_residual");
        }
        out.push('\n');
        let n = self.n.map(|n| n.to_string()).unwrap_or_default();
        let p = self.p.clone().unwrap_or_default();
        for pt in &self.points {
            let e = &pt.evaluation;
            out.push_str(&format!(
                "{},{},{},{},{:.17e},{},{:.3e}",
                self.mode, n, p, pt.abscissa, e.value, e.method, e.err_bound
            ));
            if with_exact {
                out.push(',');
                out.push_str(e.exact.as_deref().unwrap_or(""));
            }
            if let Some((product, symmetry)) = pt.eta_residuals {
                out.push_str(&format!(",{product:.3e},"));
                if let Some(s) = symmetry {
                    out.push_str(&format!("{s:.3e}"));
                }
            }
            out.push('\n');
        }
        out
    }
}
