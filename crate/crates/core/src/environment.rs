//! Offspring and immigration sequences indexed by generation.
//!
//! The canonical family has harmonic decay `d_n = 1 - f̄_n = a / (n + n0)` and
//! quadratic offspring generating functions. Immigration laws are expressed
//! relative to the same `d_n`, so the normalized factorial moments
//! `m_{n,k} / (k! d_n)` equal their limits at every generation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits::{lambda_from_q, LambdaSequence, QSequence};
use crate::pgf::{factorial_moment, OffspringLaw};
use crate::pmf::Pmf;

/// `f_n(s) = f_n[0] + f_n[1] s + f_n[2] s²` with `d_n = a / (n + n0)`,
/// `f_n[2] = ν d_n / 2` and `f_n[0] = d_n (1 + ν/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticFamily {
    pub a: f64,
    pub n0: usize,
    pub nu: f64,
}

impl QuadraticFamily {
    /// Checks that every generation `n >= 1` yields a valid law with mean in `(0, 1)`.
    /// Since `d_n` is decreasing it suffices to check `n = 1`.
    pub fn new(a: f64, n0: usize, nu: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scale a = {a} must be positive"
            )));
        }
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("nu = {nu} must be >= 0")));
        }
        let d1 = a / (1 + n0) as f64;
        if d1 >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "d_1 = {d1} must be < 1 so that the mean stays positive"
            )));
        }
        if d1 * (1.0 + nu) > 1.0 + 1e-15 {
            return Err(Error::InvalidParameter(format!(
                "d_1 (1 + nu) = {} exceeds 1: f_1[1] would be negative",
                d1 * (1.0 + nu)
            )));
        }
        Ok(Self { a, n0, nu })
    }

    pub fn decay(&self, n: usize) -> f64 {
        self.a / (n + self.n0) as f64
    }

    pub fn coefficients(&self, n: usize) -> [f64; 3] {
        let d = self.decay(n);
        let two = self.nu * d / 2.0;
        let zero = d * (1.0 + self.nu / 2.0);
        // Clamp rounding at the boundary d (1 + ν) = 1.
        let one = (1.0 - zero - two).max(0.0);
        [zero, one, two]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OffspringFamily {
    Quadratic(QuadraticFamily),
    /// `f_n(s) = s` for every `n`.
    Identity,
    /// Generation `n` uses `laws[n - 1]`; generations past the table are an error.
    Explicit(Vec<OffspringLaw>),
}

/// Immigration laws coupled to the environment's decay `d_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImmigrationFamily {
    /// `P(ε_n = j) = q_j d_n` for `j = 1..=J`, remaining mass at zero.
    FiniteSupport { q: Vec<f64> },
    /// `ε_n ~ Poisson(lambda1 · d_n)`.
    PoissonMean { lambda1: f64 },
}

impl ImmigrationFamily {
    fn validate(&self) -> Result<()> {
        match self {
            Self::FiniteSupport { q } => {
                if q.is_empty() {
                    return Err(Error::InvalidParameter("q must be non-empty".into()));
                }
                if let Some(v) = q.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                    return Err(Error::InvalidParameter(format!("q entry {v} must be >= 0")));
                }
            }
            Self::PoissonMean { lambda1 } => {
                if !(*lambda1 > 0.0 && lambda1.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "lambda1 = {lambda1} must be positive"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The limits `q_j = lim P(ε_n = j) / d_n`.
    pub fn q(&self) -> QSequence {
        match self {
            Self::FiniteSupport { q } => QSequence::new(q.clone()).expect("validated"),
            Self::PoissonMean { lambda1 } => QSequence::new(vec![*lambda1]).expect("validated"),
        }
    }

    /// The limits `λ_k = lim m_{n,k} / (k! d_n)`.
    pub fn lambda(&self) -> LambdaSequence {
        let q = self.q();
        lambda_from_q(&q, q.len().max(1))
    }
}

/// Poisson truncation point `mean + 20 sqrt(mean) + 20`.
pub fn poisson_cap(mean: f64) -> usize {
    (mean + 20.0 * mean.sqrt() + 20.0).ceil() as usize
}

pub(crate) fn poisson_pmf(mean: f64, cap: usize) -> Pmf {
    let mut probs = Vec::with_capacity(cap + 1);
    probs.push((-mean).exp());
    for k in 1..=cap {
        let prev = probs[k - 1];
        probs.push(prev * mean / k as f64);
    }
    let lost = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    Pmf::from_parts(probs, lost)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    offspring: OffspringFamily,
    immigration: Option<ImmigrationFamily>,
}

impl EnvironmentSpec {
    pub fn quadratic(family: QuadraticFamily) -> Self {
        Self {
            offspring: OffspringFamily::Quadratic(family),
            immigration: None,
        }
    }

    pub fn identity() -> Self {
        Self {
            offspring: OffspringFamily::Identity,
            immigration: None,
        }
    }

    /// Laws must have mean in `(0, 1]`.
    pub fn explicit(laws: Vec<OffspringLaw>) -> Result<Self> {
        for (i, law) in laws.iter().enumerate() {
            if !(law.mean() > 0.0 && law.mean() <= 1.0) {
                return Err(Error::Construction {
                    generation: i + 1,
                    reason: format!("mean {} outside (0, 1]", law.mean()),
                });
            }
        }
        Ok(Self {
            offspring: OffspringFamily::Explicit(laws),
            immigration: None,
        })
    }

    pub fn with_immigration(mut self, family: ImmigrationFamily) -> Result<Self> {
        family.validate()?;
        if let ImmigrationFamily::FiniteSupport { q } = &family {
            let total: f64 = q.iter().sum();
            let max_decay = match &self.offspring {
                OffspringFamily::Quadratic(f) => f.decay(1),
                OffspringFamily::Identity => 0.0,
                OffspringFamily::Explicit(laws) => {
                    laws.iter().map(|l| 1.0 - l.mean()).fold(0.0, f64::max)
                }
            };
            if max_decay * total > 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "d_n * sum(q) = {} exceeds 1",
                    max_decay * total
                )));
            }
        }
        self.immigration = Some(family);
        Ok(self)
    }

    pub fn offspring_family(&self) -> &OffspringFamily {
        &self.offspring
    }

    pub fn immigration_family(&self) -> Option<&ImmigrationFamily> {
        self.immigration.as_ref()
    }

    /// Number of generations available (`None` = unbounded).
    pub fn horizon_limit(&self) -> Option<usize> {
        match &self.offspring {
            OffspringFamily::Explicit(laws) => Some(laws.len()),
            _ => None,
        }
    }

    /// ν declared by the family, if it has one.
    pub fn declared_nu(&self) -> Option<f64> {
        match &self.offspring {
            OffspringFamily::Quadratic(f) => Some(f.nu),
            OffspringFamily::Identity => Some(0.0),
            OffspringFamily::Explicit(_) => None,
        }
    }

    fn check_generation(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::Domain("generations are indexed from 1".into()));
        }
        if let Some(limit) = self.horizon_limit() {
            if n > limit {
                return Err(Error::Construction {
                    generation: n,
                    reason: format!("explicit environment only defines {limit} generations"),
                });
            }
        }
        Ok(())
    }

    pub fn offspring_at(&self, n: usize) -> Result<OffspringLaw> {
        self.check_generation(n)?;
        match &self.offspring {
            OffspringFamily::Quadratic(f) => {
                let c = f.coefficients(n);
                let law = if c[2] == 0.0 {
                    OffspringLaw::from_probs(vec![c[0], c[1]])
                } else {
                    OffspringLaw::from_probs(c.to_vec())
                };
                law.map_err(|e| Error::Construction {
                    generation: n,
                    reason: e.to_string(),
                })
            }
            OffspringFamily::Identity => Ok(OffspringLaw::identity()),
            OffspringFamily::Explicit(laws) => Ok(laws[n - 1].clone()),
        }
    }

    /// `f̄_n`, without materializing the law.
    pub fn mean_at(&self, n: usize) -> Result<f64> {
        self.check_generation(n)?;
        Ok(match &self.offspring {
            OffspringFamily::Quadratic(f) => {
                let c = f.coefficients(n);
                c[1] + 2.0 * c[2]
            }
            OffspringFamily::Identity => 1.0,
            OffspringFamily::Explicit(laws) => laws[n - 1].mean(),
        })
    }

    /// `d_n = 1 - f̄_n`.
    pub fn decay(&self, n: usize) -> Result<f64> {
        self.check_generation(n)?;
        Ok(match &self.offspring {
            OffspringFamily::Quadratic(f) => f.decay(n),
            OffspringFamily::Identity => 0.0,
            OffspringFamily::Explicit(laws) => 1.0 - laws[n - 1].mean(),
        })
    }

    /// Law of `ε_n`.
    pub fn immigration_at(&self, n: usize) -> Result<Pmf> {
        let family = self.immigration.as_ref().ok_or(Error::NoImmigration)?;
        let d = self.decay(n)?;
        match family {
            ImmigrationFamily::FiniteSupport { q } => {
                let mut probs = Vec::with_capacity(q.len() + 1);
                probs.push(1.0 - d * q.iter().sum::<f64>());
                probs.extend(q.iter().map(|qj| qj * d));
                Pmf::new(probs, 0.0).map_err(|e| Error::Construction {
                    generation: n,
                    reason: e.to_string(),
                })
            }
            ImmigrationFamily::PoissonMean { lambda1 } => {
                let mean = lambda1 * d;
                Ok(poisson_pmf(mean, poisson_cap(mean)))
            }
        }
    }

    /// `a_{n,j}^{(k)} = d_j Π_{i=j+1}^{n} f̄_i^k`.
    pub fn toeplitz_weight(&self, n: usize, j: usize, k: u32) -> Result<f64> {
        if j == 0 || j > n {
            return Err(Error::Domain(format!(
                "toeplitz weight needs 1 <= j <= n, got j={j}, n={n}"
            )));
        }
        let tail = (j + 1..=n).try_fold(1.0, |acc, i| Ok::<_, Error>(acc * self.mean_at(i)?))?;
        Ok(self.decay(j)? * tail.powi(k as i32))
    }

    /// All weights `a_{n,j}^{(k)}` for `j = 1..=n` (entry `j - 1`), in O(n).
    pub fn toeplitz_weights(&self, n: usize, k: u32) -> Result<Vec<f64>> {
        let mut out = vec![0.0; n];
        let mut tail: f64 = 1.0;
        for j in (1..=n).rev() {
            out[j - 1] = self.decay(j)? * tail.powi(k as i32);
            tail *= self.mean_at(j)?;
        }
        Ok(out)
    }

    /// Finite-horizon diagnostics for the nearly-critical conditions.
    pub fn check_conditions(&self, horizon: usize) -> Result<ConditionReport> {
        if horizon < 10 {
            return Err(Error::Domain(format!("horizon {horizon} must be >= 10")));
        }
        let declared_lambda: Vec<f64> = self
            .immigration
            .as_ref()
            .map(|f| {
                let lam = f.lambda();
                let len = lam.values().len().max(2);
                (1..=len).map(|k| lam.get(k)).collect()
            })
            .unwrap_or_default();
        let mut max_mean = f64::NEG_INFINITY;
        let mut decay_partial_sum = 0.0;
        let mut nu_ratio = Vec::with_capacity(horizon);
        let mut third_ratio = Vec::with_capacity(horizon);
        let mut lambda_ratios = vec![Vec::with_capacity(horizon); declared_lambda.len()];
        for n in 1..=horizon {
            let law = self.offspring_at(n)?;
            let d = self.decay(n)?;
            max_mean = max_mean.max(law.mean());
            decay_partial_sum += d;
            let ratio = |x: f64| if d > 0.0 { x / d } else { f64::NAN };
            nu_ratio.push(ratio(law.second_factorial()));
            third_ratio.push(ratio(law.third_factorial()));
            if !declared_lambda.is_empty() {
                let eps = self.immigration_at(n)?;
                let mut kfact = 1.0;
                for (idx, row) in lambda_ratios.iter_mut().enumerate() {
                    let k = idx + 1;
                    kfact *= k as f64;
                    row.push(ratio(factorial_moment(&eps, k) / kfact));
                }
            }
        }
        let declared_nu = self.declared_nu();
        let terminal_nu_deviation = declared_nu
            .zip(nu_ratio.last().copied())
            .map(|(nu, r)| (r - nu).abs());
        let terminal_lambda_deviation = lambda_ratios
            .iter()
            .zip(&declared_lambda)
            .map(|(row, lam)| (row.last().copied().unwrap_or(f64::NAN) - lam).abs())
            .collect();
        let divergence = match &self.offspring {
            OffspringFamily::Quadratic(_) => Divergence::ByConstruction,
            OffspringFamily::Identity => Divergence::Violated,
            OffspringFamily::Explicit(_) => Divergence::NotAsserted,
        };
        Ok(ConditionReport {
            horizon,
            max_mean,
            decay_partial_sum,
            divergence,
            declared_nu,
            nu_ratio,
            terminal_nu_deviation,
            third_ratio,
            declared_lambda,
            lambda_ratios,
            terminal_lambda_deviation,
        })
    }
}

/// How divergence of `Σ d_n` is known; it cannot be checked numerically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    /// Harmonic decay: the partial sums grow like `a log n`.
    ByConstruction,
    /// `d_n ≡ 0`.
    Violated,
    /// Finite explicit table; nothing can be said.
    NotAsserted,
}

/// Trajectories are indexed by `n - 1`. Ratios are `NaN` where `d_n = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub horizon: usize,
    pub max_mean: f64,
    pub decay_partial_sum: f64,
    pub divergence: Divergence,
    pub declared_nu: Option<f64>,
    /// `f_n''(1) / d_n`.
    pub nu_ratio: Vec<f64>,
    pub terminal_nu_deviation: Option<f64>,
    /// `f_n'''(1) / d_n`.
    pub third_ratio: Vec<f64>,
    pub declared_lambda: Vec<f64>,
    /// `lambda_ratios[k-1][n-1] = m_{n,k} / (k! d_n)`.
    pub lambda_ratios: Vec<Vec<f64>>,
    pub terminal_lambda_deviation: Vec<f64>,
}
