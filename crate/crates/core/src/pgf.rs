//! Generating-function primitives: evaluation, factorial moments, shape
//! functions and backward composition `f_{j,n} = f_{j+1} ∘ … ∘ f_n`.

use crate::environment::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::pmf::Pmf;

/// Upper slack accepted on a pgf value (lost mass rounding).
const PGF_SLACK: f64 = 1e-9;

fn check_unit(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::Domain(format!("s = {s} is outside [0, 1]")))
    }
}

/// `E s^V`, with the truncated tail placed at the cap `M`.
///
/// This overestimates the true pgf by at most `lost_mass`.
pub fn eval_pgf(law: &Pmf, s: f64) -> Result<f64> {
    check_unit(s)?;
    let probs = law.probs();
    let top = probs.len() - 1;
    let mut acc = probs[top] + law.lost_mass();
    for &p in probs[..top].iter().rev() {
        acc = acc * s + p;
    }
    debug_assert!(acc <= 1.0 + PGF_SLACK);
    Ok(acc)
}

/// `E[V (V-1) … (V-k+1)]` over the stored support; `k = 0` gives the stored mass.
pub fn factorial_moment(law: &Pmf, k: usize) -> f64 {
    law.probs()
        .iter()
        .enumerate()
        .skip(k)
        .map(|(j, &p)| falling_factorial(j, k) * p)
        .sum()
}

pub(crate) fn falling_factorial(j: usize, k: usize) -> f64 {
    (0..k).map(|i| (j - i) as f64).product()
}

/// Binomial coefficient as a float; exact for the small arguments used here.
pub(crate) fn binomial_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// One generation's reproduction law with its cached factorial moments.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    pmf: Pmf,
    mean: f64,
    second_factorial: f64,
    third_factorial: f64,
    /// `T_i = P(ξ > i)`, so that `1 - f(s) = (1 - s) Σ_i T_i s^i`.
    tails: Vec<f64>,
    /// `R_l = Σ_{i>l} T_i`, so that `f̄ - Σ_i T_i s^i = (1 - s) Σ_l R_l s^l`.
    double_tails: Vec<f64>,
}

impl OffspringLaw {
    /// Offspring laws must be fully specified; a nonzero truncation loss
    /// would leave the moments undefined.
    pub fn new(pmf: Pmf) -> Result<Self> {
        if pmf.lost_mass() > 1e-12 {
            return Err(Error::InvalidPmf(format!(
                "offspring law has truncation loss {:.3e}; moments would be unbounded",
                pmf.lost_mass()
            )));
        }
        let probs = &pmf.probs()[..=pmf.max_support()];
        let mut tails = vec![0.0; probs.len()];
        for i in (0..probs.len() - 1).rev() {
            tails[i] = tails[i + 1] + probs[i + 1];
        }
        let mut double_tails = vec![0.0; tails.len()];
        for l in (0..tails.len() - 1).rev() {
            double_tails[l] = double_tails[l + 1] + tails[l + 1];
        }
        Ok(Self {
            mean: factorial_moment(&pmf, 1),
            second_factorial: factorial_moment(&pmf, 2),
            third_factorial: factorial_moment(&pmf, 3),
            tails,
            double_tails,
            pmf,
        })
    }

    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        Self::new(Pmf::new(probs, 0.0)?)
    }

    /// The deterministic single-offspring law `f(s) = s`.
    pub fn identity() -> Self {
        Self::new(Pmf::point_mass(1)).expect("point mass is a valid law")
    }

    pub fn pmf(&self) -> &Pmf {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn second_factorial(&self) -> f64 {
        self.second_factorial
    }

    pub fn third_factorial(&self) -> f64 {
        self.third_factorial
    }

    /// `f(s)`; `s` is assumed to lie in `[0, 1]`.
    pub fn eval(&self, s: f64) -> f64 {
        let probs = self.pmf.probs();
        probs.iter().rev().fold(0.0, |acc, &p| acc * s + p)
    }
}

/// `φ(s) = 1/(1 - f(s)) - 1/(f̄ (1 - s))`, with `φ(1) = f''(1) / (2 f̄²)`.
///
/// Both differences are divided by `1 - s` exactly, through tail sums:
/// with `G(s) = Σ_i P(ξ > i) s^i` and `H(s) = Σ_l Σ_{i>l} P(ξ > i) s^l`,
/// `φ(s) = H(s) / (G(s) f̄)`. Every term is nonnegative, so there is no
/// cancellation near `s = 1`.
pub fn shape_function(law: &OffspringLaw, s: f64) -> Result<f64> {
    check_unit(s)?;
    if law.mean <= 0.0 {
        return Err(Error::Singularity(
            "law has zero mean (all mass at 0), f(s) = 1 identically".into(),
        ));
    }
    let horner = |c: &[f64]| c.iter().rev().fold(0.0, |acc, &x| acc * s + x);
    let g = horner(&law.tails);
    if g <= 0.0 {
        return Err(Error::Singularity(format!("f({s}) = 1 with s < 1")));
    }
    Ok(horner(&law.double_tails) / (g * law.mean))
}

/// `f_{j,n}(s)` by backward iteration `t ← f_k(t)`, `k = n, …, j+1`.
pub fn tail_compose(env: &EnvironmentSpec, j: usize, n: usize, s: f64) -> Result<f64> {
    check_unit(s)?;
    if j > n {
        return Err(Error::Domain(format!(
            "tail_compose needs j <= n, got {j} > {n}"
        )));
    }
    let mut t = s;
    for k in (j + 1..=n).rev() {
        t = env.offspring_at(k)?.eval(t);
    }
    Ok(t)
}

/// `f̄_{j,n} = f̄_{j+1} ⋯ f̄_n`, one for `j = n`.
pub fn mean_product(env: &EnvironmentSpec, j: usize, n: usize) -> Result<f64> {
    if j > n {
        return Err(Error::Domain(format!(
            "mean_product needs j <= n, got {j} > {n}"
        )));
    }
    (j + 1..=n).try_fold(1.0, |acc, k| Ok(acc * env.mean_at(k)?))
}

/// `φ_{j,n}(s) = Σ_{k=j+1}^{n} φ_k(f_{k,n}(s)) / f̄_{j,k-1}`.
pub fn phi_composite(env: &EnvironmentSpec, j: usize, n: usize, s: f64) -> Result<f64> {
    check_unit(s)?;
    if j >= n {
        return Err(Error::Domain(format!(
            "phi_composite needs j < n, got {j} >= {n}"
        )));
    }
    // prefix[i] = f̄_{j, j+i}
    let mut prefix = Vec::with_capacity(n - j + 1);
    prefix.push(1.0);
    for k in j + 1..=n {
        let last = *prefix.last().unwrap();
        prefix.push(last * env.mean_at(k)?);
    }
    let mut t = s;
    let mut sum = 0.0;
    for k in (j + 1..=n).rev() {
        let law = env.offspring_at(k)?;
        sum += shape_function(&law, t)? / prefix[k - 1 - j];
        t = law.eval(t);
    }
    Ok(sum)
}

/// Backward pass producing `h_j(f_{j,n}(s))` for `j = n, n-1, …, 1`.
fn immigration_terms(env: &EnvironmentSpec, n: usize, s: f64) -> Result<Vec<f64>> {
    check_unit(s)?;
    let mut t = s;
    let mut out = Vec::with_capacity(n);
    for j in (1..=n).rev() {
        let h = env.immigration_at(j)?;
        out.push(eval_pgf(&h, t)?.min(1.0));
        t = env.offspring_at(j)?.eval(t);
    }
    Ok(out)
}

/// `g_n(s) = Π_{j=1}^{n} h_j(f_{j,n}(s))`, the pgf of `Y_n`.
pub fn immigration_pgf(env: &EnvironmentSpec, n: usize, s: f64) -> Result<f64> {
    Ok(immigration_terms(env, n, s)?.into_iter().product())
}

/// Accompanying compound-Poisson pgf `ĝ_n(s) = Π_j exp(h_j(f_{j,n}(s)) - 1)`.
pub fn accompanying_pgf(env: &EnvironmentSpec, n: usize, s: f64) -> Result<f64> {
    let log: f64 = immigration_terms(env, n, s)?
        .into_iter()
        .map(|h| h - 1.0)
        .sum();
    Ok(log.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvironmentSpec, QuadraticFamily};

    fn half_zero_half_two() -> OffspringLaw {
        OffspringLaw::from_probs(vec![0.5, 0.0, 0.5]).unwrap()
    }

    fn poisson(mu: f64, cap: usize) -> Pmf {
        let mut probs = vec![(-mu).exp()];
        for k in 1..=cap {
            let prev = probs[k - 1];
            probs.push(prev * mu / k as f64);
        }
        Pmf::with_residual_loss(probs).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert!((eval_pgf(&Pmf::point_mass(1), 0.37).unwrap() - 0.37).abs() < 1e-15);
        assert!((eval_pgf(half_zero_half_two().pmf(), 0.5).unwrap() - 0.625).abs() < 1e-15);
        let p = poisson(1.0, 30);
        assert!((eval_pgf(&p, 0.5).unwrap() - (-0.5f64).exp()).abs() < 1e-10);
        assert!(matches!(eval_pgf(&p, 1.5), Err(Error::Domain(_))));
        assert!(matches!(eval_pgf(&p, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn factorial_moment_examples() {
        assert_eq!(factorial_moment(&Pmf::point_mass(3), 2), 6.0);
        assert_eq!(factorial_moment(half_zero_half_two().pmf(), 1), 1.0);
        assert_eq!(factorial_moment(&Pmf::point_mass(1), 2), 0.0);
        let mu: f64 = 0.7;
        let p = poisson(mu, 40);
        for k in 1..=5 {
            assert!((factorial_moment(&p, k) - mu.powi(k as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_of_symmetric_quadratic() {
        // f(s) = (1 + s²)/2 has φ(s) = 1/(1 + s).
        let law = half_zero_half_two();
        for s in [0.0, 0.25, 0.5, 0.9, 0.99, 1.0 - 1e-7, 1.0] {
            let got = shape_function(&law, s).unwrap();
            assert!((got - 1.0 / (1.0 + s)).abs() < 1e-9, "s = {s}: {got}");
        }
        assert!((shape_function(&law, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn shape_identity_and_boundary() {
        let id = OffspringLaw::identity();
        for s in [0.0, 0.3, 1.0] {
            assert_eq!(shape_function(&id, s).unwrap(), 0.0);
        }
        // f''(1) = 0.02, f̄ = 0.99: put 0.01 on 2, 0.97 on 1, 0.02 on 0.
        let law = OffspringLaw::from_probs(vec![0.02, 0.97, 0.01]).unwrap();
        assert!((law.mean() - 0.99).abs() < 1e-15);
        let phi1 = shape_function(&law, 1.0).unwrap();
        assert!((phi1 - 0.02 / (2.0 * 0.9801)).abs() < 1e-12);
        assert!((phi1 - 0.010_203_0).abs() < 1e-7);
    }

    #[test]
    fn shape_is_continuous_across_switch() {
        let law = OffspringLaw::from_probs(vec![0.2, 0.5, 0.2, 0.1]).unwrap();
        let below = shape_function(&law, 1.0 - 1.01e-6).unwrap();
        let above = shape_function(&law, 1.0 - 0.99e-6).unwrap();
        assert!((below - above).abs() < 1e-6);
        let at_one = shape_function(&law, 1.0).unwrap();
        let expected = law.second_factorial() / (2.0 * law.mean() * law.mean());
        assert!((at_one - expected).abs() < 1e-14);
    }

    #[test]
    fn shape_rejects_extinct_law() {
        let dead = OffspringLaw::new(Pmf::point_mass(0)).unwrap();
        assert!(matches!(
            shape_function(&dead, 0.3),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn compose_and_means() {
        let env = EnvironmentSpec::identity();
        assert_eq!(tail_compose(&env, 0, 50, 0.3).unwrap(), 0.3);
        let quad = EnvironmentSpec::quadratic(QuadraticFamily::new(1.0, 2, 2.0).unwrap());
        assert_eq!(tail_compose(&quad, 7, 7, 0.42).unwrap(), 0.42);
        assert_eq!(mean_product(&quad, 7, 7).unwrap(), 1.0);
        // f̄_k = 1 - 1/(k+2): (2/3)(3/4) = 1/2
        let bern = EnvironmentSpec::quadratic(QuadraticFamily::new(1.0, 2, 0.0).unwrap());
        assert!((mean_product(&bern, 0, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!(tail_compose(&quad, 3, 2, 0.1).is_err());
    }

    #[test]
    fn phi_composite_single_step_and_identity() {
        let quad = EnvironmentSpec::quadratic(QuadraticFamily::new(1.0, 2, 2.0).unwrap());
        let law = quad.offspring_at(5).unwrap();
        for s in [0.0, 0.5, 0.9] {
            let one = phi_composite(&quad, 4, 5, s).unwrap();
            assert!((one - shape_function(&law, s).unwrap()).abs() < 1e-15);
        }
        let id = EnvironmentSpec::identity();
        assert_eq!(phi_composite(&id, 0, 20, 0.4).unwrap(), 0.0);
    }
}
