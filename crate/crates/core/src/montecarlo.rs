//! Seeded trajectory simulation of `X_n` and `Y_n`.
//!
//! Replicate `r` draws from a ChaCha8 stream keyed by `(seed, r)`, so each
//! trajectory is fixed by the configuration alone and the merged counts do
//! not depend on how replicates are spread over threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::pmf::Pmf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub replicates: u64,
    pub horizon: usize,
    pub population_cap: u64,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be >= 1".into()));
        }
        if self.population_cap == 0 {
            return Err(Error::InvalidParameter(
                "population_cap must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Occurrence counts of the terminal value over all replicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmpiricalLaw {
    pub counts: BTreeMap<u64, u64>,
    pub replicates_total: u64,
    /// Replicates with a positive terminal value.
    pub survivors: u64,
}

impl EmpiricalLaw {
    fn from_counts(counts: BTreeMap<u64, u64>) -> Self {
        let replicates_total = counts.values().sum();
        let survivors = counts.iter().filter(|(&v, _)| v > 0).map(|(_, c)| c).sum();
        Self {
            counts,
            replicates_total,
            survivors,
        }
    }

    /// The law restricted to positive values.
    pub fn conditional(&self) -> Result<Self> {
        if self.survivors == 0 {
            return Err(Error::EmptyConditional);
        }
        let mut counts = self.counts.clone();
        counts.remove(&0);
        Ok(Self::from_counts(counts))
    }

    pub fn survival_fraction(&self) -> f64 {
        self.survivors as f64 / self.replicates_total as f64
    }

    pub fn mean(&self) -> f64 {
        let total: f64 = self.counts.iter().map(|(&v, &c)| v as f64 * c as f64).sum();
        total / self.replicates_total as f64
    }

    /// Sample variance of the terminal value.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let ss: f64 = self
            .counts
            .iter()
            .map(|(&v, &c)| (v as f64 - m).powi(2) * c as f64)
            .sum();
        ss / (self.replicates_total as f64 - 1.0).max(1.0)
    }
}

/// Inverse-transform sampler over a finite pmf.
#[derive(Debug, Clone)]
struct Sampler {
    cdf: Vec<f64>,
}

impl Sampler {
    fn new(pmf: &Pmf) -> Self {
        let cdf = pmf
            .probs()
            .iter()
            .scan(0.0, |acc, &p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Self { cdf }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        let u: f64 = rng.random();
        let k = self.cdf.partition_point(|&c| c <= u);
        k.min(self.cdf.len() - 1) as u64
    }
}

struct Tables {
    offspring: Vec<Sampler>,
    immigration: Option<Vec<Sampler>>,
}

impl Tables {
    fn build(env: &EnvironmentSpec, horizon: usize, with_immigration: bool) -> Result<Self> {
        let offspring = (1..=horizon)
            .map(|n| Ok(Sampler::new(env.offspring_at(n)?.pmf())))
            .collect::<Result<_>>()?;
        let immigration = if with_immigration {
            Some(
                (1..=horizon)
                    .map(|n| Ok(Sampler::new(&env.immigration_at(n)?)))
                    .collect::<Result<_>>()?,
            )
        } else {
            None
        };
        Ok(Self {
            offspring,
            immigration,
        })
    }

    fn run(&self, cfg: &SimConfig, replicate: u64, start: u64) -> Result<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(replicate);
        let mut pop = start;
        for (g, offspring) in self.offspring.iter().enumerate() {
            let mut next = 0u64;
            for _ in 0..pop {
                next += offspring.sample(&mut rng);
            }
            if let Some(imm) = &self.immigration {
                next += imm[g].sample(&mut rng);
            } else if next == 0 {
                return Ok(0);
            }
            if next > cfg.population_cap {
                return Err(Error::PopulationCap {
                    replicate,
                    generation: g + 1,
                    population: next,
                    cap: cfg.population_cap,
                });
            }
            pop = next;
        }
        Ok(pop)
    }
}

fn merge(mut a: BTreeMap<u64, u64>, b: BTreeMap<u64, u64>) -> BTreeMap<u64, u64> {
    for (v, c) in b {
        *a.entry(v).or_default() += c;
    }
    a
}

fn simulate(tables: &Tables, cfg: &SimConfig, start: u64) -> Result<EmpiricalLaw> {
    let counts = (0..cfg.replicates)
        .into_par_iter()
        .try_fold(BTreeMap::new, |mut m, r| {
            *m.entry(tables.run(cfg, r, start)?).or_default() += 1;
            Ok::<_, Error>(m)
        })
        .try_reduce(BTreeMap::new, |a, b| Ok(merge(a, b)))?;
    Ok(EmpiricalLaw::from_counts(counts))
}

fn in_pool<T: Send>(threads: usize, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?
        .install(job)
}

/// `R` trajectories from `X_0 = 1` on the global rayon pool.
pub fn simulate_x(env: &EnvironmentSpec, cfg: &SimConfig) -> Result<EmpiricalLaw> {
    cfg.validate()?;
    let tables = Tables::build(env, cfg.horizon, false)?;
    simulate(&tables, cfg, 1)
}

/// `R` trajectories from `Y_0 = 0` with per-generation immigration.
pub fn simulate_y(env: &EnvironmentSpec, cfg: &SimConfig) -> Result<EmpiricalLaw> {
    cfg.validate()?;
    if env.immigration_family().is_none() {
        return Err(Error::NoImmigration);
    }
    let tables = Tables::build(env, cfg.horizon, true)?;
    simulate(&tables, cfg, 0)
}

/// [`simulate_x`] on a dedicated pool of `threads` workers.
pub fn simulate_x_with_threads(
    env: &EnvironmentSpec,
    cfg: &SimConfig,
    threads: usize,
) -> Result<EmpiricalLaw> {
    in_pool(threads, || simulate_x(env, cfg))
}

/// [`simulate_y`] on a dedicated pool of `threads` workers.
pub fn simulate_y_with_threads(
    env: &EnvironmentSpec,
    cfg: &SimConfig,
    threads: usize,
) -> Result<EmpiricalLaw> {
    in_pool(threads, || simulate_y(env, cfg))
}

/// TV distance between normalized counts and `exact` over the union support.
pub fn empirical_tv(emp: &EmpiricalLaw, exact: &Pmf) -> Result<f64> {
    let total = emp.counts.values().sum::<u64>();
    if total == 0 {
        return Err(Error::EmptyConditional);
    }
    let total = total as f64;
    let mut sum = 0.0;
    let mut seen = 0.0;
    for (&v, &c) in &emp.counts {
        let p = exact.get(v as usize);
        sum += (c as f64 / total - p).abs();
        seen += p;
    }
    // exact mass on values never observed
    sum += (exact.stored_mass() - seen).max(0.0);
    Ok(0.5 * sum)
}
