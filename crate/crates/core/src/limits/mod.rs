//! Limit distributions: the geometric conditional limit, the compound-Poisson
//! limit with immigration in both its `(1 - s)`-series and `s`-series forms,
//! and the conversions between `λ_k`, `q_j` and `μ_k`.

pub mod stirling;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::pgf::binomial_f64;
use crate::pmf::Pmf;

pub use stirling::{stirling1, stirling1_signed, stirling2};

/// Tail tolerance used when choosing series truncations.
pub const SERIES_TOLERANCE: f64 = 1e-12;

/// Tail tolerance for `Σ_{n>N} A_n` in [`limit_law`]; the compound-Poisson
/// pmf beyond `N` is only as accurate as the rates it is built from.
pub const LIMIT_LAW_TOLERANCE: f64 = 1e-16;

/// Hard stop for generator-backed `λ` sums.
const MAX_LAMBDA_TERMS: usize = 1_000_000;

pub type LambdaGenerator = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum LambdaTail {
    /// `λ_k = 0` beyond the stored values.
    Vanishing,
    /// `λ_k = generator(k)` beyond the stored values, with a declared bound
    /// on `limsup λ_k^{1/k}`.
    Generated {
        generator: LambdaGenerator,
        growth_rate: f64,
    },
}

impl fmt::Debug for LambdaTail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Vanishing => f.write_str("Vanishing"),
            Self::Generated { growth_rate, .. } => f
                .debug_struct("Generated")
                .field("growth_rate", growth_rate)
                .finish_non_exhaustive(),
        }
    }
}

/// Normalized immigration factorial-moment limits `λ_1, λ_2, …`.
#[derive(Debug, Clone)]
pub struct LambdaSequence {
    values: Vec<f64>,
    tail: LambdaTail,
}

fn check_nonnegative(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        Some(i) => Err(Error::InvalidParameter(format!(
            "{what}_{} = {} must be finite and >= 0",
            i + 1,
            values[i]
        ))),
        None => Ok(()),
    }
}

impl LambdaSequence {
    /// Finitely many nonzero values; stored with exactly one trailing zero.
    pub fn finite(mut values: Vec<f64>) -> Result<Self> {
        check_nonnegative(&values, "lambda")?;
        while values.last() == Some(&0.0) {
            values.pop();
        }
        values.push(0.0);
        Ok(Self {
            values,
            tail: LambdaTail::Vanishing,
        })
    }

    /// Infinitely many values: `prefix` followed by `generator(k)` for
    /// `k > prefix.len()`. `growth_rate` certifies `limsup λ_k^{1/k}` and must
    /// not exceed one.
    pub fn generated(
        prefix: Vec<f64>,
        generator: LambdaGenerator,
        growth_rate: f64,
    ) -> Result<Self> {
        check_nonnegative(&prefix, "lambda")?;
        if !(0.0..=1.0).contains(&growth_rate) {
            return Err(Error::InvalidParameter(format!(
                "growth rate {growth_rate} must lie in [0, 1]"
            )));
        }
        Ok(Self {
            values: prefix,
            tail: LambdaTail::Generated {
                generator,
                growth_rate,
            },
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tail(&self) -> &LambdaTail {
        &self.tail
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.tail, LambdaTail::Vanishing)
    }

    /// Declared `limsup λ_k^{1/k}` (zero for finite sequences).
    pub fn growth_rate(&self) -> f64 {
        match &self.tail {
            LambdaTail::Vanishing => 0.0,
            LambdaTail::Generated { growth_rate, .. } => *growth_rate,
        }
    }

    /// Whether the `s`-power-series rewrite of the limit applies
    /// (growth rate at most one half).
    pub fn admits_power_series(&self) -> bool {
        self.growth_rate() <= 0.5
    }

    /// `λ_k`, 1-based.
    pub fn get(&self, k: usize) -> f64 {
        assert!(k >= 1, "lambda is indexed from 1");
        if let Some(v) = self.values.get(k - 1) {
            return *v;
        }
        match &self.tail {
            LambdaTail::Vanishing => 0.0,
            LambdaTail::Generated { generator, .. } => generator(k).max(0.0),
        }
    }
}

/// Limits `q_j = lim P(ε_n = j) / (1 - f̄_n)`, finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct QSequence {
    values: Vec<f64>,
}

impl QSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_nonnegative(&values, "q")?;
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `q_j`, 1-based.
    pub fn get(&self, j: usize) -> f64 {
        assert!(j >= 1, "q is indexed from 1");
        self.values.get(j - 1).copied().unwrap_or(0.0)
    }

    fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &q)| (i + 1, q))
    }
}

/// `λ_k = Σ_{j≥k} C(j, k) q_j` for `k = 1..=max(min_len, J)`.
pub fn lambda_from_q(q: &QSequence, min_len: usize) -> LambdaSequence {
    let len = min_len.max(q.len());
    let values = (1..=len)
        .map(|k| {
            q.iter()
                .skip(k - 1)
                .map(|(j, qj)| binomial_f64(j, k) * qj)
                .sum()
        })
        .collect();
    LambdaSequence::finite(values).expect("sums of nonnegative terms")
}

/// Inverse binomial transform `q_j = Σ_{k≥j} (-1)^{k-j} C(k, j) λ_k`.
///
/// Entries down to `-1e-9` are treated as rounding and clamped to zero.
pub fn q_from_lambda(lambda: &LambdaSequence) -> Result<QSequence> {
    if !lambda.is_finite() {
        return Err(Error::InvalidParameter(
            "q can only be recovered from a finite lambda sequence".into(),
        ));
    }
    let vals = lambda.values();
    let mut q = Vec::with_capacity(vals.len());
    for j in 1..=vals.len() {
        let v: f64 = (j..=vals.len())
            .map(|k| {
                let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
                sign * binomial_f64(k, j) * vals[k - 1]
            })
            .sum();
        if v < -1e-9 {
            return Err(Error::Negativity { index: j, value: v });
        }
        q.push(v.max(0.0));
    }
    while q.last() == Some(&0.0) {
        q.pop();
    }
    QSequence::new(q)
}

/// `Geom(2/(2+ν))` on `{1, 2, …}`, truncated at `cap` with the tail in `lost_mass`.
pub fn geometric_limit(nu: f64, cap: usize) -> Result<Pmf> {
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(Error::Domain(format!("nu = {nu} must be >= 0")));
    }
    if cap < 1 {
        return Err(Error::Domain("cap must be >= 1".into()));
    }
    let p = 2.0 / (2.0 + nu);
    let ratio = 1.0 - p;
    let mut probs = vec![0.0; cap + 1];
    let mut term = p;
    for prob in probs.iter_mut().skip(1) {
        *prob = term;
        term *= ratio;
    }
    Pmf::new(probs, ratio.powi(cap as i32))
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "nu = {nu}: the immigration limit is only available for nu > 0"
        )))
    }
}

/// `(2/ν)^k (log(1 + x) + Σ_{i=1}^{k-1} (-1)^i x^i / i)` with `x = ν (1 - s) / 2`.
///
/// The bracket is the tail `Σ_{i≥k} (-1)^{i+1} x^i / i` of the logarithm
/// series; for small `x` it is summed in that form, which avoids dividing a
/// tiny difference by `(ν/2)^k`.
fn log_tail_term(k: usize, nu: f64, s: f64) -> f64 {
    let y = 1.0 - s;
    let x = nu * y / 2.0;
    if x < 0.75 {
        let mut acc = 0.0;
        let mut xm = 1.0;
        for m in 0..2000 {
            let term = xm / (k + m) as f64;
            acc += if m % 2 == 0 { term } else { -term };
            if term < 1e-18 * acc.abs() {
                break;
            }
            xm *= x;
        }
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sign * y.powi(k as i32) * acc
    } else {
        let mut partial = x.ln_1p();
        let mut xi = 1.0;
        for i in 1..k {
            xi *= x;
            let term = xi / i as f64;
            partial += if i % 2 == 0 { term } else { -term };
        }
        (2.0 / nu).powi(k as i32) * partial
    }
}

/// Closed-form limit pgf
/// `f_Y(s) = exp{-Σ_k (2^k λ_k / ν^k)(log(1 + ν(1-s)/2) + Σ_{i<k} (-1)^i ν^i (1-s)^i / (i 2^i))}`.
///
/// Generator-backed sequences are summed until the remainder bound
/// `λ_k (1-s)^k / k` drops below [`SERIES_TOLERANCE`].
pub fn fy_closed_form(lambda: &LambdaSequence, nu: f64, s: f64) -> Result<f64> {
    check_nu(nu)?;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("s = {s} is outside [0, 1]")));
    }
    let mut log = 0.0;
    for (idx, &lam) in lambda.values().iter().enumerate() {
        if lam > 0.0 {
            log -= lam * log_tail_term(idx + 1, nu, s);
        }
    }
    if !lambda.is_finite() {
        let y = 1.0 - s;
        let mut k = lambda.values().len() + 1;
        loop {
            let lam = lambda.get(k);
            if lam > 0.0 {
                log -= lam * log_tail_term(k, nu, s);
            }
            if lam * y.powi(k as i32) / (k as f64) < SERIES_TOLERANCE {
                break;
            }
            k += 1;
            if k > MAX_LAMBDA_TERMS {
                return Err(Error::NoConvergence(format!(
                    "lambda series at s = {s} not below tolerance after {MAX_LAMBDA_TERMS} terms"
                )));
            }
        }
    }
    Ok(log.exp())
}

/// `B(n, j) = ν^n / ((2+ν)^n n) [(1 + 2/ν)^{min(n,j)} - 1]`,
/// evaluated as `(ρ^{n-m} - ρ^n) / n` with `ρ = ν/(2+ν)`, `m = min(n, j)`.
pub fn b_closed_form(n: usize, j: usize, nu: f64) -> Result<f64> {
    check_nu(nu)?;
    if n == 0 || j == 0 {
        return Err(Error::Domain(format!(
            "B(n, j) needs n, j >= 1, got ({n}, {j})"
        )));
    }
    let rho = nu / (2.0 + nu);
    let m = n.min(j);
    Ok((rho.powi((n - m) as i32) - rho.powi(n as i32)) / n as f64)
}

/// `Σ_{n≥start} ρ^{n-j} / n` for `start >= j`.
fn shifted_log_tail(rho: f64, j: usize, start: usize) -> f64 {
    let mut acc = 0.0;
    let mut pow = rho.powi((start - j) as i32);
    let mut n = start;
    while pow > 0.0 {
        let term = pow / n as f64;
        acc += term;
        if term < 1e-18 * acc {
            break;
        }
        pow *= rho;
        n += 1;
    }
    acc
}

/// `Σ_{n>from} B(n, j)` in closed form up to a rapidly convergent series.
fn b_tail(j: usize, rho: f64, from: usize) -> f64 {
    let head: f64 = (from + 1..j)
        .map(|n| (1.0 - rho.powi(n as i32)) / n as f64)
        .sum();
    let start = (from + 1).max(j);
    head + (1.0 - rho.powi(j as i32)) * shifted_log_tail(rho, j, start)
}

/// Compound-Poisson law with pgf `exp{Σ_{n≥1} A_n (s^n - 1)}`, storing
/// `A_1..A_N`, the full sum `a0 = Σ_{n≥1} A_n`, and `tail = Σ_{n>N} A_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundPoissonLaw {
    a0: f64,
    a: Vec<f64>,
    tail: f64,
}

impl CompoundPoissonLaw {
    /// Finitely many rates; `a0` is their sum.
    pub fn from_rates(a: Vec<f64>) -> Result<Self> {
        check_nonnegative(&a, "A")?;
        Ok(Self {
            a0: a.iter().sum(),
            a,
            tail: 0.0,
        })
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    /// `A_1..A_N` (entry `n - 1`).
    pub fn rates(&self) -> &[f64] {
        &self.a
    }

    pub fn truncation(&self) -> usize {
        self.a.len()
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    /// `exp{Σ_{n≤N} A_n s^n - a0}`; low by at most `tail` in the exponent.
    pub fn pgf(&self, s: f64) -> f64 {
        let series = self.a.iter().rev().fold(0.0, |acc, &an| (acc + an) * s);
        (series - self.a0).exp()
    }

    /// Mean `Σ n A_n` over the stored rates.
    pub fn mean(&self) -> f64 {
        self.a
            .iter()
            .enumerate()
            .map(|(i, an)| (i + 1) as f64 * an)
            .sum()
    }
}

/// Smallest `N >= max(J, 1)` with `Σ_{n>N} A_n < tol`.
pub fn truncation_for(q: &QSequence, nu: f64, tol: f64) -> Result<usize> {
    check_nu(nu)?;
    let rho = nu / (2.0 + nu);
    let mut n = q.len().max(1);
    loop {
        let tail: f64 = q.iter().map(|(j, qj)| qj * b_tail(j, rho, n)).sum();
        if tail < tol {
            return Ok(n);
        }
        n += 1;
        if n > MAX_LAMBDA_TERMS {
            return Err(Error::NoConvergence(format!(
                "A_n tail not below {tol} by N = {MAX_LAMBDA_TERMS}"
            )));
        }
    }
}

/// `A_n = Σ_j q_j B(n, j)` for `n = 1..=N`, with `a0` and the tail summed analytically.
pub fn a_coefficients(q: &QSequence, nu: f64, truncation: usize) -> Result<CompoundPoissonLaw> {
    check_nu(nu)?;
    if truncation == 0 {
        return Err(Error::Domain("truncation N must be >= 1".into()));
    }
    let rho = nu / (2.0 + nu);
    let a = (1..=truncation)
        .map(|n| {
            q.iter()
                .map(|(j, qj)| Ok(qj * b_closed_form(n, j, nu)?))
                .sum::<Result<f64>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let a0 = q.iter().map(|(j, qj)| qj * b_tail(j, rho, 0)).sum();
    let tail = q
        .iter()
        .map(|(j, qj)| qj * b_tail(j, rho, truncation))
        .sum();
    Ok(CompoundPoissonLaw { a0, a, tail })
}

/// [`a_coefficients`] with `N` from [`truncation_for`] at [`LIMIT_LAW_TOLERANCE`].
pub fn limit_law(q: &QSequence, nu: f64) -> Result<CompoundPoissonLaw> {
    let n = truncation_for(q, nu, LIMIT_LAW_TOLERANCE)?;
    a_coefficients(q, nu, n)
}

/// Panjer-type recursion `p_0 = e^{-a0}`, `p_m = (1/m) Σ_{n=1}^{min(m,N)} n A_n p_{m-n}`.
pub fn cp_pmf(law: &CompoundPoissonLaw, cap: usize) -> Result<Pmf> {
    if cap < 1 {
        return Err(Error::Domain("cap must be >= 1".into()));
    }
    let weighted: Vec<f64> = law
        .a
        .iter()
        .enumerate()
        .map(|(i, an)| (i + 1) as f64 * an)
        .collect();
    let mut probs = Vec::with_capacity(cap + 1);
    probs.push((-law.a0).exp());
    for m in 1..=cap {
        let top = m.min(weighted.len());
        let acc: f64 = (1..=top).map(|n| weighted[n - 1] * probs[m - n]).sum();
        probs.push(acc / m as f64);
    }
    Pmf::with_residual_loss(probs)
}

/// Negative binomial with `r = 2 λ_1 / ν` and `p = 2 / (2 + ν)`:
/// `P(m) = C(m + r - 1, m) p^r (1 - p)^m`.
pub fn negbin_limit(lambda1: f64, nu: f64, cap: usize) -> Result<Pmf> {
    check_nu(nu)?;
    if !(lambda1 > 0.0 && lambda1.is_finite()) {
        return Err(Error::Domain(format!(
            "lambda1 = {lambda1} must be positive"
        )));
    }
    let r = 2.0 * lambda1 / nu;
    let p = 2.0 / (2.0 + nu);
    let mut probs = Vec::with_capacity(cap + 1);
    probs.push(p.powf(r));
    for m in 1..=cap {
        let prev = probs[m - 1];
        probs.push(prev * (m as f64 - 1.0 + r) / m as f64 * (1.0 - p));
    }
    Pmf::with_residual_loss(probs)
}
