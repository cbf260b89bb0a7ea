//! Exact verification suite over the levels `1..=n_max` of a chain.

use num_traits::{One, Zero};
use serde::Serialize;

use crate::chain::{Chain, Instance};
use crate::error::{Error, Result};
use crate::rational::{format_rational, Rational};

#[derive(Clone, Debug, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub checked: usize,
    /// First failing case, if any.
    pub counterexample: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub instance: String,
    pub p: String,
    pub n_max: usize,
    pub cap: usize,
    pub properties: Vec<PropertyResult>,
    pub all_passed: bool,
}

struct Tally {
    name: &'static str,
    checked: usize,
    counterexample: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally { name, checked: 0, counterexample: None }
    }

    fn record(&mut self, ok: bool, case: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok && self.counterexample.is_none() {
            self.counterexample = Some(case());
        }
    }

    fn finish(self) -> PropertyResult {
        PropertyResult {
            name: self.name.to_string(),
            passed: self.counterexample.is_none(),
            checked: self.checked,
            counterexample: self.counterexample,
        }
    }
}

/// Runs stochasticity, commutation, factorization, extended commutation,
/// density, eigenfunction, spectrum, stationarity, triangular-action and
/// η/θ checks. Levels up to `n_max + 1` are enumerated, so
/// `n_max + 1 ≤ cap` is required.
pub fn verify_suite<I: Instance>(chain: &Chain<I>, n_max: usize) -> Result<VerifyReport> {
    if n_max < 2 {
        return Err(Error::LevelTooSmall { level: n_max, min: 2 });
    }
    if n_max + 1 > chain.cap() {
        return Err(Error::LevelCapExceeded { level: n_max + 1, cap: chain.cap() });
    }
    let inst = chain.instance();
    let mut properties = Vec::new();

    let mut stoch = Tally::new("stochastic kernels");
    for n in 1..=n_max {
        stoch.record(chain.up_kernel(n)?.matrix.is_row_stochastic(), || format!("up kernel from level {n}"));
        if n >= 2 {
            stoch.record(chain.down_kernel(n)?.matrix.is_row_stochastic(), || format!("down kernel from level {n}"));
        }
    }
    properties.push(stoch.finish());

    let mut comm = Tally::new("commutation");
    let mut fact = Tally::new("factorization");
    for n in 2..=n_max {
        let report = chain.verify_commutation(n)?;
        comm.record(report.holds, || {
            let v = &report.violations[0];
            format!("level {n}, entry ({}, {}): {} vs {}", v.row, v.col, v.lhs, v.rhs)
        });
        fact.record(chain.check_factorization(n)?, || format!("level {n}"));
    }
    properties.push(comm.finish());
    properties.push(fact.finish());

    let mut ext = Tally::new("extended commutation");
    for n in 2..=n_max {
        for k in 2..=n {
            ext.record(chain.check_extended_commutation(n, k)?, || format!("n = {n}, k = {k}"));
        }
    }
    properties.push(ext.finish());

    let mut unity = Tally::new("density partition of unity");
    let mut delta = Tally::new("density delta at own level");
    for n in 1..=n_max {
        for k in 1..=n {
            let level = chain.enumerate_level(k)?;
            let mut sum = vec![Rational::zero(); chain.enumerate_level(n)?.len()];
            for s in &level.states {
                let d = chain.density_vector(s, n)?;
                for (acc, v) in sum.iter_mut().zip(&d.values) {
                    *acc += v;
                }
                if k == n {
                    let own = chain.index_of(s)?;
                    let ok = d.values.iter().enumerate().all(|(i, v)| *v == if i == own { Rational::one() } else { Rational::zero() });
                    delta.record(ok, || format!("pattern {} at level {n}", inst.encode(s)));
                }
            }
            unity.record(sum.iter().all(|v| v.is_one()), || format!("patterns of size {k} at level {n}"));
        }
    }
    properties.push(unity.finish());
    properties.push(delta.finish());

    let mut eigen = Tally::new("eigenfunctions");
    let mut spectrum = Tally::new("spectrum multiplicities");
    for n in 1..=n_max {
        for k in 1..=n {
            for s in &chain.enumerate_level(k)?.states {
                let ev = chain.eigenfunction(s, n)?;
                eigen.record(chain.check_eigen(&ev)?, || {
                    format!("h_{} at level {n}, eigenvalue {}", inst.encode(s), format_rational(&ev.eigenvalue))
                });
            }
        }
        let report = chain.spectrum_report(n)?;
        spectrum.record(report.consistent(), || format!("level {n}: {:?}", report.entries));
    }
    properties.push(eigen.finish());
    properties.push(spectrum.finish());

    let mut stat = Tally::new("stationary measure");
    for n in 1..=n_max {
        stat.record(chain.check_stationary(n)?, || format!("level {n}"));
    }
    properties.push(stat.finish());

    let mut tri = Tally::new("triangular action");
    for n in 2..=n_max {
        for k in 1..=n {
            for s in &chain.enumerate_level(k)?.states {
                tri.record(chain.triangular_action_check(s, n)?, || format!("d_{} at level {n}", inst.encode(s)));
            }
        }
    }
    properties.push(tri.finish());

    let spec = chain.spec();
    let mut inverse = Tally::new("eta theta inverse");
    for i in 1..=n_max + 2 {
        for j in i..=n_max + 2 {
            let sum: Rational = (i..=j).map(|k| spec.eta(i, k) * spec.theta(k, j)).sum();
            let expected = if i == j { Rational::one() } else { Rational::zero() };
            inverse.record(sum == expected, || format!("i = {i}, j = {j}"));
        }
    }
    properties.push(inverse.finish());

    let all_passed = properties.iter().all(|p| p.passed);
    Ok(VerifyReport {
        instance: inst.name().to_string(),
        p: format_rational(chain.p()),
        n_max,
        cap: chain.cap(),
        properties,
        all_passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainSpec;
    use crate::perm::PermInstance;
    use crate::rational::rat;

    #[test]
    fn small_suite_passes() {
        let chain = Chain::new(ChainSpec::new(PermInstance, rat(1, 3), 4).unwrap());
        let report = verify_suite(&chain, 3).unwrap();
        assert!(report.all_passed, "{report:?}");
        assert_eq!(report.properties.len(), 11);
        assert!(matches!(verify_suite(&chain, 4), Err(Error::LevelCapExceeded { .. })));
    }
}
