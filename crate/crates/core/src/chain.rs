//! Generic up-down chain algebra on enumerated levels.
//!
//! Levels are indexed by object size, with a single root state at size 1.
//! Rates are `c_n` with `c_0 = 0`; the commutation constant is
//! `β_n = c_{n-1} / c_n` and the extended weights are `ω_{k,n} = c_{k-1} / c_n`.
//!
//! Every routine here is exact: kernels, density functions, eigenfunctions
//! and stationary measures are all built over `Rational`.

use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::Hash;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{rank, KernelExport, Matrix, StochKernel};
use crate::rational::{check_probability, format_rational, int, Rational};

/// A concrete family of state spaces with up and down steps.
pub trait Instance: Send + Sync {
    type State: Clone + Ord + Eq + Hash + Debug + Send + Sync;

    fn name(&self) -> &'static str;

    fn size(&self, state: &Self::State) -> usize;

    fn root(&self) -> Self::State;

    /// Every state of size `n`, without duplicates. Order is not significant;
    /// the chain sorts.
    fn enumerate(&self, n: usize) -> Vec<Self::State>;

    /// Weighted outcomes of one up-step. Outcomes may repeat; weights are summed.
    fn up_transitions(&self, state: &Self::State, p: &Rational) -> Vec<(Self::State, Rational)>;

    /// Weighted outcomes of one down-step.
    fn down_transitions(&self, state: &Self::State) -> Vec<(Self::State, Rational)>;

    /// States that reach `state` with positive probability in one up-step.
    fn predecessors(&self, state: &Self::State) -> Vec<Self::State>;

    fn encode(&self, state: &Self::State) -> String;

    fn decode(&self, text: &str) -> Result<Self::State>;

    fn sample_up<R: Rng + ?Sized>(&self, state: &Self::State, p: f64, rng: &mut R) -> Self::State;

    fn sample_down<R: Rng + ?Sized>(&self, state: &Self::State, rng: &mut R) -> Self::State;

    /// `c_n`; both shipped instances use `n (n + 1)`.
    fn rate(&self, n: usize) -> Rational {
        int((n * (n + 1)) as i64)
    }
}

/// Default enumeration cap: 720 permutations or 156 graphs at the top level.
pub const DEFAULT_CAP: usize = 6;

/// An instance together with its parameter `p` and enumeration cap.
#[derive(Clone, Debug)]
pub struct ChainSpec<I: Instance> {
    pub instance: I,
    pub p: Rational,
    pub max_exact_level: usize,
}

impl<I: Instance> ChainSpec<I> {
    pub fn new(instance: I, p: Rational, max_exact_level: usize) -> Result<Self> {
        check_probability(&p)?;
        if max_exact_level == 0 {
            return Err(Error::LevelTooSmall { level: 0, min: 1 });
        }
        let spec = Self {
            instance,
            p,
            max_exact_level,
        };
        spec.validate_rates()?;
        Ok(spec)
    }

    fn validate_rates(&self) -> Result<()> {
        if !self.rate(0).is_zero() {
            return Err(Error::InvalidRates("c_0 must be 0".into()));
        }
        for n in 1..=self.max_exact_level + 2 {
            if self.rate(n) <= self.rate(n - 1) {
                return Err(Error::InvalidRates(format!("c_{n} is not larger than c_{}", n - 1)));
            }
            if n >= 2 {
                let beta = self.beta(n);
                if !beta.is_positive() || beta >= Rational::one() {
                    return Err(Error::InvalidRates(format!("beta_{n} outside (0, 1)")));
                }
            }
        }
        Ok(())
    }

    pub fn rate(&self, n: usize) -> Rational {
        self.instance.rate(n)
    }

    /// `β_n = c_{n-1} / c_n`.
    pub fn beta(&self, n: usize) -> Rational {
        self.rate(n - 1) / self.rate(n)
    }

    /// `ω_{k,n} = c_{k-1} / c_n`, defined for `k ≥ 1`.
    pub fn omega(&self, k: usize, n: usize) -> Rational {
        self.rate(k - 1) / self.rate(n)
    }

    /// `η_{i,j} = Π_{m=i}^{j-1} c_m / (c_{m-1} − c_{j-1})`.
    pub fn eta(&self, i: usize, j: usize) -> Rational {
        assert!(1 <= i && i <= j, "eta needs 1 <= i <= j");
        let cj = self.rate(j - 1);
        (i..j).fold(Rational::one(), |acc, m| {
            let den = self.rate(m - 1) - &cj;
            assert!(!den.is_zero(), "repeated rates");
            acc * self.rate(m) / den
        })
    }

    /// `θ_{i,j} = Π_{m=i}^{j-1} c_m / (c_m − c_{i-1})`.
    pub fn theta(&self, i: usize, j: usize) -> Rational {
        assert!(1 <= i && i <= j, "theta needs 1 <= i <= j");
        let ci = self.rate(i - 1);
        (i..j).fold(Rational::one(), |acc, m| {
            let cm = self.rate(m);
            let den = &cm - &ci;
            assert!(!den.is_zero(), "repeated rates");
            acc * cm / den
        })
    }
}

/// The enumerated states of one level, in canonical sorted order.
#[derive(Clone, Debug)]
pub struct LevelSpace<S> {
    pub level: usize,
    pub states: Vec<S>,
    index_of: HashMap<S, usize>,
}

impl<S: Clone + Ord + Eq + Hash> LevelSpace<S> {
    pub fn new(level: usize, mut states: Vec<S>) -> Self {
        states.sort();
        states.dedup();
        let index_of = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Self {
            level,
            states,
            index_of,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, s: &S) -> Option<usize> {
        self.index_of.get(s).copied()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub row: String,
    pub col: String,
    pub lhs: String,
    pub rhs: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CommutationReport {
    pub level: usize,
    pub holds: bool,
    pub beta_checked: String,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug)]
pub struct DensityVector<S> {
    pub pattern: S,
    pub level: usize,
    pub values: Vec<Rational>,
}

#[derive(Clone, Debug)]
pub struct EigenVector<S> {
    pub pattern: S,
    pub level: usize,
    pub values: Vec<Rational>,
    pub eigenvalue: Rational,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumEntry {
    /// Size of the patterns whose eigenfunctions span this eigenspace.
    pub pattern_size: usize,
    pub eigenvalue: String,
    pub multiplicity: usize,
    pub expected_multiplicity: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub level: usize,
    pub entries: Vec<SpectrumEntry>,
    /// All `T_n h_s = λ h_s` relations held exactly.
    pub eigen_relations_hold: bool,
    pub total_multiplicity: usize,
    pub level_size: usize,
}

impl SpectrumReport {
    pub fn consistent(&self) -> bool {
        self.eigen_relations_hold
            && self.total_multiplicity == self.level_size
            && self
                .entries
                .iter()
                .all(|e| e.multiplicity == e.expected_multiplicity)
    }
}

type KernelCache = Mutex<HashMap<(usize, usize), Arc<StochKernel>>>;

/// Exact chain over an instance, memoizing levels and kernels.
pub struct Chain<I: Instance> {
    spec: ChainSpec<I>,
    levels: Vec<OnceLock<Arc<LevelSpace<I::State>>>>,
    up: Vec<OnceLock<Arc<StochKernel>>>,
    down: Vec<OnceLock<Arc<StochKernel>>>,
    up_products: KernelCache,
    down_products: KernelCache,
}

impl<I: Instance> Chain<I> {
    pub fn new(spec: ChainSpec<I>) -> Self {
        let slots = spec.max_exact_level + 2;
        Self {
            levels: (0..slots).map(|_| OnceLock::new()).collect(),
            up: (0..slots).map(|_| OnceLock::new()).collect(),
            down: (0..slots).map(|_| OnceLock::new()).collect(),
            up_products: Mutex::new(HashMap::new()),
            down_products: Mutex::new(HashMap::new()),
            spec,
        }
    }

    pub fn spec(&self) -> &ChainSpec<I> {
        &self.spec
    }

    pub fn instance(&self) -> &I {
        &self.spec.instance
    }

    pub fn p(&self) -> &Rational {
        &self.spec.p
    }

    pub fn cap(&self) -> usize {
        self.spec.max_exact_level
    }

    fn check_level(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::LevelTooSmall { level: 0, min: 1 });
        }
        if n > self.cap() {
            return Err(Error::LevelCapExceeded {
                level: n,
                cap: self.cap(),
            });
        }
        Ok(())
    }

    pub fn enumerate_level(&self, n: usize) -> Result<Arc<LevelSpace<I::State>>> {
        self.check_level(n)?;
        let level = self.levels[n].get_or_init(|| {
            let space = LevelSpace::new(n, self.instance().enumerate(n));
            log::info!(
                "{} level {n}: {} states, dense kernel to level {} ~{} entries",
                self.instance().name(),
                space.len(),
                n + 1,
                space.len() * space.len() * (n + 1)
            );
            Arc::new(space)
        });
        Ok(level.clone())
    }

    pub fn index_of(&self, state: &I::State) -> Result<usize> {
        let n = self.instance().size(state);
        self.enumerate_level(n)?
            .index_of(state)
            .ok_or_else(|| Error::UnknownState(self.instance().encode(state), n))
    }

    pub fn decode(&self, text: &str) -> Result<I::State> {
        let s = self.instance().decode(text)?;
        self.index_of(&s)?;
        Ok(s)
    }

    fn build_kernel(
        &self,
        from: usize,
        to: usize,
        transitions: impl Fn(&I::State) -> Vec<(I::State, Rational)>,
    ) -> Result<StochKernel> {
        let src = self.enumerate_level(from)?;
        let dst = self.enumerate_level(to)?;
        let mut m = Matrix::zeros(src.len(), dst.len());
        for (i, s) in src.states.iter().enumerate() {
            for (t, w) in transitions(s) {
                let j = dst
                    .index_of(&t)
                    .ok_or_else(|| Error::UnknownState(self.instance().encode(&t), to))?;
                m.add_at(i, j, &w);
            }
        }
        StochKernel::new(from, to, m)
    }

    fn cached(
        slot: &OnceLock<Arc<StochKernel>>,
        build: impl FnOnce() -> Result<StochKernel>,
    ) -> Result<Arc<StochKernel>> {
        if let Some(k) = slot.get() {
            return Ok(k.clone());
        }
        let k = Arc::new(build()?);
        Ok(slot.get_or_init(|| k).clone())
    }

    /// `U_n`: level `n` to level `n + 1`.
    pub fn up_kernel(&self, n: usize) -> Result<Arc<StochKernel>> {
        self.check_level(n + 1)?;
        self.check_level(n)?;
        Self::cached(&self.up[n], || {
            let p = self.p().clone();
            self.build_kernel(n, n + 1, |s| self.instance().up_transitions(s, &p))
        })
    }

    /// `D_n`: level `n` to level `n − 1`, for `n ≥ 2`.
    pub fn down_kernel(&self, n: usize) -> Result<Arc<StochKernel>> {
        self.check_level(n)?;
        if n < 2 {
            return Err(Error::LevelTooSmall { level: n, min: 2 });
        }
        Self::cached(&self.down[n], || {
            self.build_kernel(n, n - 1, |s| self.instance().down_transitions(s))
        })
    }

    /// `T_n = U_n D_{n+1}`.
    pub fn updown_operator(&self, n: usize) -> Result<StochKernel> {
        self.up_kernel(n)?.compose(&*self.down_kernel(n + 1)?)
    }

    fn level_size(&self, n: usize) -> Result<usize> {
        Ok(self.enumerate_level(n)?.len())
    }

    /// `D_{n,k} = D_n D_{n−1} ⋯ D_{k+1}`, with `D_{n,n} = I`.
    pub fn extended_down(&self, n: usize, k: usize) -> Result<Arc<StochKernel>> {
        self.check_level(n)?;
        self.check_level(k)?;
        if k > n {
            return Err(Error::InvalidArgument(format!("extended_down needs k <= n, got {k} > {n}")));
        }
        if let Some(hit) = self.down_products.lock().unwrap().get(&(n, k)) {
            return Ok(hit.clone());
        }
        let kernel = if k == n {
            StochKernel::identity(n, self.level_size(n)?)
        } else {
            self.down_kernel(n)?.compose(&*self.extended_down(n - 1, k)?)?
        };
        let kernel = Arc::new(kernel);
        self.down_products.lock().unwrap().insert((n, k), kernel.clone());
        Ok(kernel)
    }

    /// `U_{k,n} = U_k U_{k+1} ⋯ U_{n−1}`, with `U_{n,n} = I`.
    pub fn up_product(&self, k: usize, n: usize) -> Result<Arc<StochKernel>> {
        self.check_level(n)?;
        self.check_level(k)?;
        if k > n {
            return Err(Error::InvalidArgument(format!("up_product needs k <= n, got {k} > {n}")));
        }
        if let Some(hit) = self.up_products.lock().unwrap().get(&(k, n)) {
            return Ok(hit.clone());
        }
        let kernel = if k == n {
            StochKernel::identity(n, self.level_size(n)?)
        } else {
            self.up_product(k, n - 1)?.compose(&*self.up_kernel(n - 1)?)?
        };
        let kernel = Arc::new(kernel);
        self.up_products.lock().unwrap().insert((k, n), kernel.clone());
        Ok(kernel)
    }

    fn violations(&self, n: usize, lhs: &Matrix, rhs: &Matrix, limit: usize) -> Result<Vec<Violation>> {
        let level = self.enumerate_level(n)?;
        let mut out = Vec::new();
        for i in 0..lhs.rows() {
            for j in 0..lhs.cols() {
                if lhs.get(i, j) != rhs.get(i, j) {
                    out.push(Violation {
                        row: self.instance().encode(&level.states[i]),
                        col: self.instance().encode(&level.states[j]),
                        lhs: format_rational(lhs.get(i, j)),
                        rhs: format_rational(rhs.get(i, j)),
                    });
                    if out.len() == limit {
                        return Ok(out);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Checks `U_n D_{n+1} = β_n D_n U_{n−1} + (1 − β_n) I` entrywise.
    pub fn verify_commutation(&self, n: usize) -> Result<CommutationReport> {
        if n < 2 {
            return Err(Error::LevelTooSmall { level: n, min: 2 });
        }
        let beta = self.spec.beta(n);
        let lhs = self.updown_operator(n)?.matrix;
        let down_up = self.down_kernel(n)?.compose(&*self.up_kernel(n - 1)?)?.matrix;
        let size = lhs.rows();
        let rhs = down_up
            .scale(&beta)
            .add(&Matrix::identity(size).scale(&(Rational::one() - &beta)))?;
        let violations = self.violations(n, &lhs, &rhs, 10)?;
        Ok(CommutationReport {
            level: n,
            holds: violations.is_empty(),
            beta_checked: format_rational(&beta),
            violations,
        })
    }

    /// `c_{n−1}(D_n U_{n−1} − I) = c_n(T_n − I)`.
    pub fn check_factorization(&self, n: usize) -> Result<bool> {
        if n < 2 {
            return Err(Error::LevelTooSmall { level: n, min: 2 });
        }
        let t = self.updown_operator(n)?.matrix;
        let id = Matrix::identity(t.rows());
        let du = self.down_kernel(n)?.compose(&*self.up_kernel(n - 1)?)?.matrix;
        let lhs = du.sub(&id)?.scale(&self.spec.rate(n - 1));
        let rhs = t.sub(&id)?.scale(&self.spec.rate(n));
        Ok(lhs == rhs)
    }

    /// `U_n D_{n+1,k} = ω_{k,n} D_{n,k−1} U_{k−1} + (1 − ω_{k,n}) D_{n,k}`
    /// for `2 ≤ k ≤ n`.
    pub fn check_extended_commutation(&self, n: usize, k: usize) -> Result<bool> {
        if k < 2 || k > n {
            return Err(Error::InvalidArgument(format!("need 2 <= k <= n, got k={k}, n={n}")));
        }
        let omega = self.spec.omega(k, n);
        let lhs = self.up_kernel(n)?.compose(&*self.extended_down(n + 1, k)?)?.matrix;
        let first = self
            .extended_down(n, k - 1)?
            .compose(&*self.up_kernel(k - 1)?)?
            .matrix
            .scale(&omega);
        let second = self.extended_down(n, k)?.matrix.scale(&(Rational::one() - &omega));
        Ok(lhs == first.add(&second)?)
    }

    /// `(d_s)_n(u) = D_{n,|s|}(u, s)`.
    pub fn density_vector(&self, s: &I::State, n: usize) -> Result<DensityVector<I::State>> {
        let k = self.instance().size(s);
        let col = self.index_of(s)?;
        let values = self.extended_down(n, k)?.matrix.column(col);
        Ok(DensityVector {
            pattern: s.clone(),
            level: n,
            values,
        })
    }

    /// `h_s = Σ_{|r| ≤ |s|} U_{|r|,|s|}(r, s) η_{|r|,|s|} d_r`, evaluated on level `n`.
    pub fn eigenfunction(&self, s: &I::State, n: usize) -> Result<EigenVector<I::State>> {
        let k = self.instance().size(s);
        if k > n {
            return Err(Error::InvalidArgument(format!("pattern size {k} exceeds level {n}")));
        }
        let col = self.index_of(s)?;
        let mut values = vec![Rational::zero(); self.level_size(n)?];
        for j in 1..=k {
            let eta = self.spec.eta(j, k);
            let up = self.up_product(j, k)?;
            let down = self.extended_down(n, j)?;
            for r in 0..self.level_size(j)? {
                let weight = up.get(r, col);
                if weight.is_zero() {
                    continue;
                }
                let coeff = weight * &eta;
                for (u, v) in values.iter_mut().enumerate() {
                    let d = down.get(u, r);
                    if !d.is_zero() {
                        *v += &coeff * d;
                    }
                }
            }
        }
        let eigenvalue = Rational::one() - self.spec.rate(k - 1) / self.spec.rate(n);
        Ok(EigenVector {
            pattern: s.clone(),
            level: n,
            values,
            eigenvalue,
        })
    }

    /// Exact check of `T_n h = λ h`.
    pub fn check_eigen(&self, ev: &EigenVector<I::State>) -> Result<bool> {
        let t = self.updown_operator(ev.level)?;
        let lhs = t.matrix.apply(&ev.values);
        Ok(lhs
            .iter()
            .zip(&ev.values)
            .all(|(a, b)| *a == &ev.eigenvalue * b))
    }

    /// Eigenvalues `1 − c_{k−1}/c_n` with multiplicities from exact ranks of
    /// `span{(h_s)_n : |s| = k}`.
    pub fn spectrum_report(&self, n: usize) -> Result<SpectrumReport> {
        let mut entries = Vec::new();
        let mut all_hold = true;
        let mut total = 0;
        let mut prev_size = 0;
        for k in 1..=n {
            let level = self.enumerate_level(k)?;
            let mut vectors = Vec::with_capacity(level.len());
            let mut eigenvalue = Rational::zero();
            for s in &level.states {
                let ev = self.eigenfunction(s, n)?;
                all_hold &= self.check_eigen(&ev)?;
                eigenvalue = ev.eigenvalue.clone();
                vectors.push(ev.values);
            }
            let multiplicity = rank(vectors);
            total += multiplicity;
            entries.push(SpectrumEntry {
                pattern_size: k,
                eigenvalue: format_rational(&eigenvalue),
                multiplicity,
                expected_multiplicity: level.len() - prev_size,
            });
            prev_size = level.len();
        }
        Ok(SpectrumReport {
            level: n,
            entries,
            eigen_relations_hold: all_hold,
            total_multiplicity: total,
            level_size: self.level_size(n)?,
        })
    }

    /// `M_n = U_{1,n}(∂, ·)`.
    pub fn stationary(&self, n: usize) -> Result<Vec<Rational>> {
        Ok(self.up_product(1, n)?.matrix.row(0).to_vec())
    }

    /// `M_n T_n = M_n`, `M_n U_n = M_{n+1}` and `M_{n+1} D_{n+1} = M_n`.
    pub fn check_stationary(&self, n: usize) -> Result<bool> {
        let m = self.stationary(n)?;
        let next = self.stationary(n + 1)?;
        let fixed = self.updown_operator(n)?.matrix.push(&m) == m;
        let up = self.up_kernel(n)?.matrix.push(&m) == next;
        let down = self.down_kernel(n + 1)?.matrix.push(&next) == m;
        Ok(fixed && up && down)
    }

    /// `T_n (d_s)_n = (1 − ω)(d_s)_n + ω Σ_{|r|=|s|−1} (d_r)_n U_{|r|}(r, s)`
    /// with `ω = ω_{|s|,n}`.
    pub fn triangular_action_check(&self, s: &I::State, n: usize) -> Result<bool> {
        let k = self.instance().size(s);
        let d = self.density_vector(s, n)?;
        let lhs = self.updown_operator(n)?.matrix.apply(&d.values);
        let omega = self.spec.omega(k, n);
        let keep = Rational::one() - &omega;
        let mut rhs: Vec<Rational> = d.values.iter().map(|v| v * &keep).collect();
        if k >= 2 {
            let col = self.index_of(s)?;
            let up = self.up_kernel(k - 1)?;
            let lower = self.extended_down(n, k - 1)?;
            for r in 0..self.level_size(k - 1)? {
                let w = up.get(r, col);
                if w.is_zero() {
                    continue;
                }
                let coeff = w * &omega;
                for (u, v) in rhs.iter_mut().enumerate() {
                    *v += &coeff * lower.get(u, r);
                }
            }
        }
        Ok(lhs == rhs)
    }

    /// Smallest size `j ≥ 2` of a state `ρ` with `U_{|ρ|,|s|}(ρ, s) > 0`;
    /// the exponent of the slowest mode in the expansion of `d_s` is
    /// `c_{j-1}`. Returns `None` for the root.
    pub fn decay_order(&self, s: &I::State) -> Option<usize> {
        let size = self.instance().size(s);
        if size <= 1 {
            return None;
        }
        let mut frontier = vec![s.clone()];
        let mut min_size = size;
        let mut seen = std::collections::HashSet::new();
        while let Some(state) = frontier.pop() {
            for pred in self.instance().predecessors(&state) {
                if seen.insert(pred.clone()) {
                    min_size = min_size.min(self.instance().size(&pred));
                    frontier.push(pred);
                }
            }
        }
        Some(min_size.max(2))
    }

    pub fn encode_level(&self, n: usize) -> Result<Vec<String>> {
        Ok(self
            .enumerate_level(n)?
            .states
            .iter()
            .map(|s| self.instance().encode(s))
            .collect())
    }

    pub fn export(&self, kernel: &StochKernel) -> Result<KernelExport> {
        Ok(KernelExport::new(
            kernel.from_level,
            kernel.to_level,
            self.encode_level(kernel.from_level)?,
            self.encode_level(kernel.to_level)?,
            &kernel.matrix,
        ))
    }
}
