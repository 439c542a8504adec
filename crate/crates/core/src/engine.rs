//! Exact forward evolution of the laws of `X_n` (no immigration, `X_0 = 1`)
//! and `Y_n` (with immigration, `Y_0 = 0`) by truncated convolution.
//!
//! Mass that would land beyond the cap `M` is moved to `lost_mass` and never
//! redistributed, so every reported probability is a lower bound and the
//! total error is the accumulated loss.

use crate::environment::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::pmf::Pmf;

/// Default ceiling on accumulated truncation loss.
pub const DEFAULT_MAX_LOST: f64 = 0.01;

/// Convolution powers are abandoned once the mixture weight still to come
/// falls below this (the weight is booked as lost).
pub const MIXTURE_CUTOFF: f64 = 1e-16;

/// Survival below this is treated as extinction when conditioning.
pub const SURVIVAL_FLOOR: f64 = 1e-300;

pub const MIN_CAP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub cap: usize,
    pub max_lost_mass: f64,
}

impl Truncation {
    pub fn new(cap: usize) -> Self {
        Self {
            cap,
            max_lost_mass: DEFAULT_MAX_LOST,
        }
    }

    pub fn with_max_lost(mut self, max_lost_mass: f64) -> Self {
        self.max_lost_mass = max_lost_mass;
        self
    }
}

impl From<usize> for Truncation {
    fn from(cap: usize) -> Self {
        Self::new(cap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionResult {
    pub pmf: Pmf,
    pub generation: usize,
    /// Cumulative truncation loss; equals `pmf.lost_mass()`.
    pub lost_mass_bound: f64,
    /// `P(V > 0)` with lost mass counted as positive, i.e. `1 - P(V = 0)`.
    pub survival: f64,
}

impl EvolutionResult {
    pub fn from_pmf(pmf: Pmf, generation: usize) -> Self {
        let survival = pmf.probs()[1..].iter().sum::<f64>() + pmf.lost_mass();
        Self {
            lost_mass_bound: pmf.lost_mass(),
            survival: survival.min(1.0),
            pmf,
            generation,
        }
    }
}

/// Truncated convolution; returns the kept coefficients and the mass beyond `cap`.
fn convolve(a: &[f64], b: &[f64], cap: usize) -> (Vec<f64>, f64) {
    let full = a.len() + b.len() - 1;
    let kept = full.min(cap + 1);
    let mut out = vec![0.0; kept];
    let mut overflow = 0.0;
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            let idx = i + j;
            if idx < kept {
                out[idx] += x * y;
            } else {
                overflow += x * y;
            }
        }
    }
    (out, overflow)
}

fn trimmed(probs: &[f64]) -> &[f64] {
    let end = probs.iter().rposition(|&p| p > 0.0).map_or(1, |i| i + 1);
    &probs[..end]
}

/// Law of `Σ_{i=1}^{V} ξ_i` for `V ~ law`, i.e. the mixture `Σ_k P(V=k) ξ^{*k}`.
fn branch(law: &Pmf, offspring: &[f64], cap: usize) -> Pmf {
    let p = trimmed(law.probs());
    let offspring = trimmed(offspring);
    // tail[k] = Σ_{k' > k} p[k']
    let mut tail = vec![0.0; p.len()];
    for k in (0..p.len() - 1).rev() {
        tail[k] = tail[k + 1] + p[k + 1];
    }
    let mut out = vec![0.0; cap + 1];
    let mut lost = law.lost_mass();
    let mut power = vec![1.0];
    let mut power_lost = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        if pk > 0.0 {
            for (slot, &v) in out.iter_mut().zip(&power) {
                *slot += pk * v;
            }
            lost += pk * power_lost;
        }
        if tail[k] < MIXTURE_CUTOFF {
            lost += tail[k];
            break;
        }
        let (next, overflow) = convolve(&power, offspring, cap);
        power = next;
        power_lost += overflow;
    }
    Pmf::from_parts(out, lost)
}

/// Law of `U + ε` for independent `U ~ law`, `ε ~ immigrants`.
fn add_independent(law: &Pmf, immigrants: &Pmf, cap: usize) -> Pmf {
    let (mut out, overflow) = convolve(trimmed(law.probs()), trimmed(immigrants.probs()), cap);
    out.resize(cap + 1, 0.0);
    let lost = law.lost_mass() + law.stored_mass() * immigrants.lost_mass() + overflow;
    Pmf::from_parts(out, lost)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Process {
    Branching,
    Immigration,
}

/// Step-by-step evolution, for callers that need the law at several generations.
#[derive(Debug, Clone)]
pub struct Evolution<'a> {
    env: &'a EnvironmentSpec,
    process: Process,
    truncation: Truncation,
    generation: usize,
    pmf: Pmf,
}

impl<'a> Evolution<'a> {
    /// `X_0 = 1`.
    pub fn branching(env: &'a EnvironmentSpec, truncation: impl Into<Truncation>) -> Result<Self> {
        Self::start(
            env,
            Process::Branching,
            truncation.into(),
            Pmf::point_mass(1),
        )
    }

    /// `Y_0 = 0`.
    pub fn with_immigration(
        env: &'a EnvironmentSpec,
        truncation: impl Into<Truncation>,
    ) -> Result<Self> {
        if env.immigration_family().is_none() {
            return Err(Error::NoImmigration);
        }
        Self::start(
            env,
            Process::Immigration,
            truncation.into(),
            Pmf::point_mass(0),
        )
    }

    fn start(
        env: &'a EnvironmentSpec,
        process: Process,
        truncation: Truncation,
        initial: Pmf,
    ) -> Result<Self> {
        if truncation.cap < MIN_CAP {
            return Err(Error::Domain(format!(
                "cap {} must be >= {MIN_CAP}",
                truncation.cap
            )));
        }
        let (mut probs, lost) = initial.into_parts();
        probs.resize(truncation.cap + 1, 0.0);
        Ok(Self {
            env,
            process,
            truncation,
            generation: 0,
            pmf: Pmf::from_parts(probs, lost),
        })
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn step(&mut self) -> Result<()> {
        let n = self.generation + 1;
        let cap = self.truncation.cap;
        let offspring = self.env.offspring_at(n)?;
        let mut next = branch(&self.pmf, offspring.pmf().probs(), cap);
        if self.process == Process::Immigration {
            next = add_independent(&next, &self.env.immigration_at(n)?, cap);
        }
        if next.lost_mass() > self.truncation.max_lost_mass {
            return Err(Error::CapExceeded {
                generation: n,
                lost_mass: next.lost_mass(),
                limit: self.truncation.max_lost_mass,
            });
        }
        self.pmf = next;
        self.generation = n;
        Ok(())
    }

    pub fn advance_to(&mut self, n: usize) -> Result<()> {
        if n < self.generation {
            return Err(Error::Domain(format!(
                "cannot go back from generation {} to {n}",
                self.generation
            )));
        }
        while self.generation < n {
            self.step()?;
        }
        Ok(())
    }

    pub fn result(&self) -> EvolutionResult {
        EvolutionResult::from_pmf(self.pmf.clone(), self.generation)
    }
}

/// Law of `X_n` for `X_0 = 1`, `X_n = Σ_{j=1}^{X_{n-1}} ξ_{n,j}`.
pub fn evolve_x(
    env: &EnvironmentSpec,
    n: usize,
    truncation: impl Into<Truncation>,
) -> Result<EvolutionResult> {
    let mut ev = Evolution::branching(env, truncation)?;
    ev.advance_to(n)?;
    Ok(ev.result())
}

/// Law of `Y_n` for `Y_0 = 0`, `Y_n = Σ_{j=1}^{Y_{n-1}} ξ_{n,j} + ε_n`.
pub fn evolve_y(
    env: &EnvironmentSpec,
    n: usize,
    truncation: impl Into<Truncation>,
) -> Result<EvolutionResult> {
    let mut ev = Evolution::with_immigration(env, truncation)?;
    ev.advance_to(n)?;
    Ok(ev.result())
}

fn checked_survival(result: &EvolutionResult) -> Result<f64> {
    if result.survival > SURVIVAL_FLOOR {
        Ok(result.survival)
    } else {
        Err(Error::Extinct(result.survival))
    }
}

/// `L(V | V > 0)`; the lost mass is rescaled along with the probabilities.
pub fn conditional_law(result: &EvolutionResult) -> Result<Pmf> {
    let survival = checked_survival(result)?;
    let mut probs: Vec<f64> = result.pmf.probs().iter().map(|p| p / survival).collect();
    probs[0] = 0.0;
    let lost = result.pmf.lost_mass() / survival;
    Pmf::new(probs, lost)
}

/// `E[V | V > 0]` over the stored support.
pub fn conditional_mean(result: &EvolutionResult) -> Result<f64> {
    let survival = checked_survival(result)?;
    Ok(result.pmf.mean() / survival)
}

/// Kersting-type regularity ratio
/// `E(V² 1{V≥2}) / (E(V 1{V≥2}) E[V | V ≥ 1])`; `None` when undefined.
pub fn regularity_ratio(result: &EvolutionResult) -> Option<f64> {
    let probs = result.pmf.probs();
    let (mut second, mut first) = (0.0, 0.0);
    for (k, &p) in probs.iter().enumerate().skip(2) {
        let k = k as f64;
        first += k * p;
        second += k * k * p;
    }
    let cond = conditional_mean(result).ok()?;
    (first > 0.0).then(|| second / (first * cond))
}

/// Total-variation distance over the stored supports, plus the separate bound
/// `(lost_p + lost_q) / 2` for mass neither side accounts for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvDistance {
    pub distance: f64,
    pub lost_bound: f64,
}

impl TvDistance {
    pub fn upper(&self) -> f64 {
        self.distance + self.lost_bound
    }
}

pub fn tv_distance(p: &Pmf, q: &Pmf) -> TvDistance {
    let len = p.probs().len().max(q.probs().len());
    let sum: f64 = (0..len).map(|k| (p.get(k) - q.get(k)).abs()).sum();
    TvDistance {
        distance: 0.5 * sum,
        lost_bound: 0.5 * (p.lost_mass() + q.lost_mass()),
    }
}
