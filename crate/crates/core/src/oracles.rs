//! Exact-rational identity checks and double-precision analytic diagnostics.
//!
//! The identity checks return both sides so callers can assert equality;
//! the diagnostics return a deviation meant to be watched as `n` grows.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::environment::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::limits::stirling::{stirling1_row, stirling2_row};
use crate::pgf::{
    accompanying_pgf, factorial_moment, immigration_pgf, mean_product, phi_composite,
    shape_function, tail_compose,
};
use crate::pmf::Pmf;

pub type RationalValue = BigRational;

/// Seed for the committed random-rational corpus.
pub const IDENTITY_SEED: u64 = 0x5eed_0001;

fn int(v: impl Into<BigInt>) -> RationalValue {
    BigRational::from_integer(v.into())
}

fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    (0..k).fold(BigInt::one(), |acc, i| acc * (n - i) / (i + 1))
}

fn sign(even: bool) -> BigInt {
    if even {
        BigInt::one()
    } else {
        -BigInt::one()
    }
}

/// `Σ_{i=1}^{k-1} C(k-1, i) (-1)^i ((1+x)^i - 1) / i` against `Σ_{i=1}^{k-1} (-1)^i x^i / i`.
pub fn lemma_sum_check(k: usize, x: &RationalValue) -> (RationalValue, RationalValue) {
    let one_plus = int(1) + x;
    let mut lhs = RationalValue::zero();
    let mut rhs = RationalValue::zero();
    let (mut pow_x, mut pow_1x) = (RationalValue::one(), RationalValue::one());
    for i in 1..k {
        pow_x *= x;
        pow_1x *= &one_plus;
        let s = int(sign(i % 2 == 0));
        let inv_i = RationalValue::new(BigInt::one(), BigInt::from(i));
        lhs += int(binomial(k - 1, i)) * &s * (&pow_1x - int(1)) * &inv_i;
        rhs += &s * &pow_x * &inv_i;
    }
    (lhs, rhs)
}

/// `Σ_{j=1}^{L} Σ_{ℓ=1}^{j} (-1)^{ℓ+j} C(L+n, j+n) C(j-ℓ+n-1, n-1) x^ℓ` against `(1+x)^L - 1`.
pub fn lemma_binom3_check(l: usize, n: usize, x: &RationalValue) -> (RationalValue, RationalValue) {
    assert!(l >= 1 && n >= 1, "L and n must be >= 1");
    let powers: Vec<RationalValue> = (0..=l)
        .scan(RationalValue::one(), |acc, i| {
            if i > 0 {
                *acc *= x;
            }
            Some(acc.clone())
        })
        .collect();
    let mut lhs = RationalValue::zero();
    for j in 1..=l {
        for (ell, power) in powers.iter().enumerate().take(j + 1).skip(1) {
            let c = sign((ell + j).is_multiple_of(2))
                * binomial(l + n, j + n)
                * binomial(j - ell + n - 1, n - 1);
            lhs += int(c) * power;
        }
    }
    let mut rhs = RationalValue::one();
    for _ in 0..l {
        rhs *= int(1) + x;
    }
    (lhs, rhs - int(1))
}

fn signed_first_kind(k: usize) -> Result<Vec<BigInt>> {
    Ok(stirling1_row(k)?
        .into_iter()
        .enumerate()
        .map(|(i, c)| sign((k + i).is_multiple_of(2)) * BigInt::from(c))
        .collect())
}

/// Checks `Σ_i S(k,i) s(i,j) = δ_{kj}` and `Σ_i s(k,i) S(i,j) = δ_{kj}` for all `j, k ≤ max_k`.
pub fn stirling_inversion_check(max_k: usize) -> Result<bool> {
    let second: Vec<Vec<BigInt>> = (0..=max_k)
        .map(|k| Ok(stirling2_row(k)?.into_iter().map(BigInt::from).collect()))
        .collect::<Result<_>>()?;
    let first: Vec<Vec<BigInt>> = (0..=max_k).map(signed_first_kind).collect::<Result<_>>()?;
    let entry = |m: &Vec<Vec<BigInt>>, r: usize, c: usize| m[r].get(c).cloned().unwrap_or_default();
    for k in 0..=max_k {
        for j in 0..=max_k {
            let delta = if j == k {
                BigInt::one()
            } else {
                BigInt::zero()
            };
            let a: BigInt = (0..=max_k)
                .map(|i| entry(&second, k, i) * entry(&first, i, j))
                .sum();
            let b: BigInt = (0..=max_k)
                .map(|i| entry(&first, k, i) * entry(&second, i, j))
                .sum();
            if a != delta || b != delta {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn falling(j: i64, k: usize) -> BigInt {
    (0..k as i64).fold(BigInt::one(), |acc, i| acc * (j - i))
}

/// `j^k = Σ_i S(k,i) j(j-1)…(j-i+1)` and `j(j-1)…(j-k+1) = Σ_i s(k,i) j^i`, exactly.
pub fn falling_factorial_check(j: i64, k: usize) -> Result<bool> {
    let jb = BigInt::from(j);
    let power = |e: usize| (0..e).fold(BigInt::one(), |acc, _| acc * &jb);
    let via_second: BigInt = stirling2_row(k)?
        .into_iter()
        .enumerate()
        .map(|(i, s)| BigInt::from(s) * falling(j, i))
        .sum();
    let via_first: BigInt = signed_first_kind(k)?
        .into_iter()
        .enumerate()
        .map(|(i, s)| s * power(i))
        .sum();
    Ok(via_second == power(k) && via_first == falling(j, k))
}

/// Exact `λ_k = Σ_j C(j,k) q_j`, `k = 1..=len(q)`; `q` is 1-based.
pub fn lambda_from_q_exact(q: &[RationalValue]) -> Vec<RationalValue> {
    (1..=q.len())
        .map(|k| {
            q.iter()
                .enumerate()
                .map(|(idx, qj)| int(binomial(idx + 1, k)) * qj)
                .sum()
        })
        .collect()
}

/// Exact inverse binomial transform `q_j = Σ_{k≥j} (-1)^{k-j} C(k,j) λ_k`.
pub fn q_from_lambda_exact(lambda: &[RationalValue]) -> Vec<RationalValue> {
    let len = lambda.len();
    (1..=len)
        .map(|j| {
            (j..=len)
                .map(|k| int(sign((k - j) % 2 == 0) * binomial(k, j)) * &lambda[k - 1])
                .sum()
        })
        .collect()
}

/// `μ_k = Σ_i S(k,i) i! λ_i` (λ is 1-based).
pub fn mu_from_lambda_exact(lambda: &[RationalValue], k: usize) -> Result<RationalValue> {
    let row = stirling2_row(k)?;
    let mut fact = BigInt::one();
    let mut total = RationalValue::zero();
    for (i, s) in row.into_iter().enumerate().skip(1) {
        fact *= i;
        if let Some(l) = lambda.get(i - 1) {
            total += int(BigInt::from(s) * &fact) * l;
        }
    }
    Ok(total)
}

/// `μ_k = Σ_j q_j j^k` (q is 1-based).
pub fn mu_from_q_exact(q: &[RationalValue], k: usize) -> RationalValue {
    q.iter()
        .enumerate()
        .map(|(idx, qj)| {
            let j = BigInt::from(idx + 1);
            let pow = (0..k).fold(BigInt::one(), |acc, _| acc * &j);
            int(pow) * qj
        })
        .sum()
}

/// `k! λ_k = Σ_i s(k,i) μ_i`, the first-kind inversion of [`mu_from_lambda_exact`].
pub fn lambda_from_mu_exact(mu: &[RationalValue], k: usize) -> Result<RationalValue> {
    let first = signed_first_kind(k)?;
    let fact = (1..=k).fold(BigInt::one(), |acc, i| acc * i);
    let total: RationalValue = first
        .into_iter()
        .enumerate()
        .skip(1)
        .map(|(i, s)| int(s) * mu.get(i - 1).cloned().unwrap_or_default())
        .sum();
    Ok(total / int(fact))
}

/// `max_s |R_ℓ(s)| - (m_ℓ/ℓ!) |s-1|^ℓ` with `R_ℓ(s) = h(s) - Σ_{k<ℓ} m_k (s-1)^k / k!`.
pub fn taylor_remainder_check(law: &Pmf, ell: usize, s_grid: &[f64]) -> Result<f64> {
    let coeffs: Vec<f64> = (0..=ell)
        .map(|k| factorial_moment(law, k) / (1..=k).map(|i| i as f64).product::<f64>())
        .collect();
    let mut worst = f64::NEG_INFINITY;
    for &s in s_grid {
        let h = crate::pgf::eval_pgf(law, s)?;
        let u = s - 1.0;
        let poly: f64 = coeffs[..ell]
            .iter()
            .enumerate()
            .map(|(k, c)| c * u.powi(k as i32))
            .sum();
        let bound = coeffs[ell] * u.abs().powi(ell as i32);
        worst = worst.max((h - poly).abs() - bound);
    }
    Ok(worst)
}

/// `|Σ_{j=1}^n a_{n,j}^{(k)} x_j - x/k|`.
pub fn toeplitz_limit_check(
    env: &EnvironmentSpec,
    k: u32,
    x_seq: impl Fn(usize) -> f64,
    x_limit: f64,
    n: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("k must be >= 1".into()));
    }
    let weights = env.toeplitz_weights(n, k)?;
    let sum: f64 = weights
        .iter()
        .enumerate()
        .map(|(i, w)| w * x_seq(i + 1))
        .sum();
    Ok((sum - x_limit / k as f64).abs())
}

/// `max_s |φ_n(1) - φ_n(s)| / (1 - f̄_n)`; zero when `f̄_n = 1`.
pub fn phi_uniformity_diag(env: &EnvironmentSpec, n: usize, s_grid: &[f64]) -> Result<f64> {
    let law = env.offspring_at(n)?;
    let d = 1.0 - law.mean();
    if d <= 0.0 {
        return Ok(0.0);
    }
    let at_one = shape_function(&law, 1.0)?;
    let mut worst: f64 = 0.0;
    for &s in s_grid {
        worst = worst.max((at_one - shape_function(&law, s)?).abs());
    }
    Ok(worst / d)
}

/// `|f̄_{0,n} / (1 - f_{0,n}(s)) - (1/(1-s) + ν/2)|` for the declared `ν`.
pub fn f_conv_deviation(env: &EnvironmentSpec, n: usize, s: f64) -> Result<f64> {
    let nu = env
        .declared_nu()
        .ok_or_else(|| Error::InvalidParameter("environment declares no nu".into()))?;
    if s >= 1.0 {
        return Err(Error::Domain("s must be < 1".into()));
    }
    let ratio = mean_product(env, 0, n)? / (1.0 - tail_compose(env, 0, n, s)?);
    Ok((ratio - (1.0 / (1.0 - s) + nu / 2.0)).abs())
}

/// `|g_n(s) - ĝ_n(s)|`: exact immigration pgf against the accompanying law.
pub fn accompanying_gap(env: &EnvironmentSpec, n: usize, s: f64) -> Result<f64> {
    Ok((immigration_pgf(env, n, s)? - accompanying_pgf(env, n, s)?).abs())
}

/// `|1/(1 - f_{j,n}(s)) - 1/(f̄_{j,n}(1-s)) - φ_{j,n}(s)|` for `s < 1`.
pub fn shape_identity_residual(env: &EnvironmentSpec, j: usize, n: usize, s: f64) -> Result<f64> {
    let lhs = 1.0 / (1.0 - tail_compose(env, j, n, s)?);
    let linear = 1.0 / (mean_product(env, j, n)? * (1.0 - s));
    Ok((lhs - linear - phi_composite(env, j, n, s)?).abs())
}

/// Random rational with numerator in `[-20, 20]` and denominator in `[1, 20]`.
pub fn random_rational(rng: &mut impl Rng) -> RationalValue {
    RationalValue::new(
        BigInt::from(rng.random_range(-20i64..=20)),
        BigInt::from(rng.random_range(1i64..=20)),
    )
}

/// The seeded corpus of `count` rationals used by the identity suite.
pub fn rational_corpus(seed: u64, count: usize) -> Vec<RationalValue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_rational(&mut rng)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdentityReport {
    pub seed: u64,
    pub max_k: usize,
    pub checks: Vec<CheckOutcome>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }
}

struct Tally {
    name: &'static str,
    cases: usize,
    failures: usize,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            failures: 0,
        }
    }

    fn record(&mut self, ok: bool) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
        }
    }

    fn finish(self) -> CheckOutcome {
        CheckOutcome {
            name: self.name.into(),
            cases: self.cases,
            failures: self.failures,
        }
    }
}

/// Runs every exact identity for orders up to `max_k` (binomial checks use
/// `L, n ≤ min(max_k, 10)`) over `samples` seeded rationals.
pub fn run_identity_suite(max_k: usize, samples: usize, seed: u64) -> Result<IdentityReport> {
    let corpus = rational_corpus(seed, samples);
    let mut sum = Tally::new("lemma_sum");
    for k in 1..=max_k {
        for x in &corpus {
            let (l, r) = lemma_sum_check(k, x);
            sum.record(l == r);
        }
    }
    let mut binom = Tally::new("lemma_binom3");
    let top = max_k.min(10);
    for l in 1..=top {
        for n in 1..=top {
            for x in &corpus {
                let (a, b) = lemma_binom3_check(l, n, x);
                binom.record(a == b);
            }
        }
    }
    let mut inversion = Tally::new("stirling_inversion");
    inversion.record(stirling_inversion_check(max_k)?);
    let mut falling_check = Tally::new("falling_factorial");
    for j in -(max_k as i64)..=(max_k as i64) {
        for k in 0..=max_k {
            falling_check.record(falling_factorial_check(j, k)?);
        }
    }
    // q vectors with nonnegative entries built from the corpus
    let qs: Vec<Vec<RationalValue>> = corpus
        .chunks(3)
        .map(|c| c.iter().map(|x| x.abs()).collect())
        .collect();
    let mut mu_lambda = Tally::new("mu_lambda_consistency");
    let mut mu_inverse = Tally::new("lambda_from_mu");
    let mut round_trip = Tally::new("lambda_q_round_trip");
    for q in &qs {
        let lambda = lambda_from_q_exact(q);
        round_trip.record(&q_from_lambda_exact(&lambda) == q);
        let mu: Vec<RationalValue> = (1..=max_k).map(|k| mu_from_q_exact(q, k)).collect();
        for k in 1..=max_k {
            mu_lambda.record(mu_from_lambda_exact(&lambda, k)? == mu[k - 1]);
            let expected = lambda.get(k - 1).cloned().unwrap_or_default();
            mu_inverse.record(lambda_from_mu_exact(&mu, k)? == expected);
        }
    }
    Ok(IdentityReport {
        seed,
        max_k,
        checks: vec![
            sum.finish(),
            binom.finish(),
            inversion.finish(),
            falling_check.finish(),
            mu_lambda.finish(),
            mu_inverse.finish(),
            round_trip.finish(),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{ImmigrationFamily, QuadraticFamily};

    fn r(n: i64, d: i64) -> RationalValue {
        RationalValue::new(n.into(), d.into())
    }

    #[test]
    fn lemma_sum_examples() {
        assert_eq!(lemma_sum_check(1, &r(7, 3)), (int(0), int(0)));
        assert_eq!(lemma_sum_check(2, &int(3)), (int(-3), int(-3)));
        let (l, rr) = lemma_sum_check(5, &r(7, 3));
        assert_eq!(l, rr);
        // independent: -x + x²/2 - x³/3 + x⁴/4 at x = 7/3
        let x = r(7, 3);
        let direct =
            -x.clone() + &x * &x / int(2) - &x * &x * &x / int(3) + &x * &x * &x * &x / int(4);
        assert_eq!(l, direct);
    }

    #[test]
    fn lemma_binom3_examples() {
        assert_eq!(lemma_binom3_check(1, 4, &r(-5, 2)), (r(-5, 2), r(-5, 2)));
        assert_eq!(lemma_binom3_check(2, 1, &int(1)), (int(3), int(3)));
        let (l, rr) = lemma_binom3_check(6, 4, &r(-5, 2));
        assert_eq!(l, rr);
        assert_eq!(rr, r(-3, 2).pow(6) - int(1));
    }

    #[test]
    fn stirling_identities() {
        assert!(stirling_inversion_check(12).unwrap());
        for j in 0..=10 {
            for k in 0..=10 {
                assert!(falling_factorial_check(j, k).unwrap());
            }
        }
    }

    #[test]
    fn lambda_q_exact() {
        let q = vec![int(1), int(0), int(3)];
        let lambda = lambda_from_q_exact(&q);
        assert_eq!(lambda, vec![int(1 + 3 * 3), int(3 * 3), int(3)]);
        assert_eq!(q_from_lambda_exact(&lambda), q);
        for k in 1..=8 {
            let mu = mu_from_q_exact(&q, k);
            assert_eq!(mu_from_lambda_exact(&lambda, k).unwrap(), mu);
            assert_eq!(mu, int(1 + 3 * 3i64.pow(k as u32)));
        }
    }

    #[test]
    fn taylor_examples() {
        let grid: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let zero = Pmf::point_mass(0);
        for ell in 1..5 {
            assert!(taylor_remainder_check(&zero, ell, &grid).unwrap() <= 0.0);
        }
        let bern = Pmf::new(vec![0.7, 0.3], 0.0).unwrap();
        assert!(taylor_remainder_check(&bern, 2, &grid).unwrap() <= 1e-15);
        let pois = crate::environment::poisson_pmf(0.5, 40);
        assert!(taylor_remainder_check(&pois, 3, &grid).unwrap() <= 1e-12);
    }

    #[test]
    fn toeplitz_examples() {
        let env = EnvironmentSpec::quadratic(QuadraticFamily::new(1.0, 2, 2.0).unwrap());
        assert_eq!(
            toeplitz_limit_check(&env, 1, |_| 0.0, 0.0, 50).unwrap(),
            0.0
        );
        let n = 300;
        let dev = toeplitz_limit_check(&env, 1, |_| 1.0, 1.0, n).unwrap();
        let closed = mean_product(&env, 0, n).unwrap();
        assert!((dev - closed).abs() < 1e-12);
        let dev =
            toeplitz_limit_check(&env, 2, |j| j as f64 / (j + 1) as f64, 1.0, 10_000).unwrap();
        assert!(dev < 0.05);
    }

    #[test]
    fn phi_uniformity_trend() {
        let env = EnvironmentSpec::identity();
        assert_eq!(phi_uniformity_diag(&env, 10, &[0.0, 0.5]).unwrap(), 0.0);
        let env = EnvironmentSpec::quadratic(QuadraticFamily::new(1.0, 2, 2.0).unwrap());
        let grid: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let early = phi_uniformity_diag(&env, 100, &grid).unwrap();
        let late = phi_uniformity_diag(&env, 10_000, &grid).unwrap();
        assert!(late < early);
    }

    #[test]
    fn f_conv_and_gap_trends() {
        let env = EnvironmentSpec::quadratic(QuadraticFamily::new(1.0, 2, 2.0).unwrap());
        for s in [0.0, 0.5] {
            assert!(
                f_conv_deviation(&env, 10_000, s).unwrap()
                    < f_conv_deviation(&env, 100, s).unwrap()
            );
        }
        let env = env
            .with_immigration(ImmigrationFamily::FiniteSupport { q: vec![1.0, 0.5] })
            .unwrap();
        let gaps: Vec<f64> = [100, 1000, 10_000]
            .iter()
            .map(|&n| accompanying_gap(&env, n, 0.5).unwrap())
            .collect();
        assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1]);
    }

    #[test]
    fn suite_passes_and_is_seeded() {
        let a = run_identity_suite(6, 10, IDENTITY_SEED).unwrap();
        assert!(a.passed());
        assert_eq!(a, run_identity_suite(6, 10, IDENTITY_SEED).unwrap());
        assert_eq!(rational_corpus(1, 5), rational_corpus(1, 5));
    }
}
