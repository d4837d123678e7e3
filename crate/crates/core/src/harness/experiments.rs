//! Batch experiments over problem sets. Work is spread over a rayon pool and
//! results are collected in input order, so every run is reproducible for a
//! fixed seed regardless of the worker count.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::stats::{bootstrap_median_ci, mean, median, quantile, Interval};
use crate::controller::ControllerConfig;
use crate::error::{Error, Result};
use crate::geometry::Problem;
use crate::simulator::{reference_time, run_trial, Mode, SimConfig, TrialRecord};
use crate::solver::{solve, SolverConfig};
use crate::trajectory::{cost_bv, ControlParams};

/// Maps `f` over `0..n` on `workers` threads (all cores when `None`).
pub fn run_parallel<T, F>(n: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers == Some(0) {
        return Err(Error::InvalidConfig("workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
}

pub fn write_csv<T: Serialize, W: Write>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned, R: Read>(reader: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Version of the column layouts of every CSV written here.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub use_t_max: bool,
    pub use_initial_guess: bool,
    pub use_stage1: bool,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub mean_solve_ms: f64,
}

/// One solve per problem for each ablation row. Solver settings other than
/// the three switches come from `base`.
pub fn ablate(problems: &[Problem], base: &SolverConfig, workers: Option<usize>) -> Result<Vec<AblationRow>> {
    base.validate()?;
    SolverConfig::ablation_grid()
        .into_iter()
        .map(|(label, row)| {
            let cfg = SolverConfig {
                use_t_max: row.use_t_max,
                use_initial_guess: row.use_initial_guess,
                use_stage1: row.use_stage1,
                ..*base
            };
            let results = run_parallel(problems.len(), workers, |i| solve(&problems[i], &cfg))?;
            let failures = results.iter().filter(|r| !r.success).count();
            let times: Vec<f64> = results.iter().map(|r| r.wall_time * 1e3).collect();
            Ok(AblationRow {
                label: label.to_string(),
                use_t_max: cfg.use_t_max,
                use_initial_guess: cfg.use_initial_guess,
                use_stage1: cfg.use_stage1,
                trials: problems.len(),
                failures,
                failure_rate: if problems.is_empty() {
                    0.0
                } else {
                    failures as f64 / problems.len() as f64
                },
                mean_solve_ms: mean(&times),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSpec {
    pub modes: Vec<Mode>,
    pub noise_levels: Vec<f64>,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
    pub bootstrap_seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            modes: vec![Mode::Tsocs, Mode::Baseline],
            noise_levels: vec![0.0, 0.05],
            bootstrap_resamples: 10_000,
            confidence: 0.95,
            bootstrap_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        Self {
            p50: quantile(values, 0.5),
            p90: quantile(values, 0.9),
            p99: quantile(values, 0.99),
            max: quantile(values, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub mode: Mode,
    pub noise: f64,
    pub trials: usize,
    /// Trials without a reference time, excluded from the `t_rel` statistics.
    pub unsolved: usize,
    pub timed_out: usize,
    pub median_t_rel: f64,
    pub t_rel_ci: Interval,
    pub ci_method: String,
    pub final_pos_err: Quantiles,
    pub final_vel_err: Quantiles,
    /// Mean over all solves of all trials.
    pub mean_solve_ms: f64,
    pub max_solve_ms: f64,
}

impl BenchSummary {
    pub fn from_records(mode: Mode, noise: f64, records: &[&TrialRecord], spec: &BenchSpec) -> Self {
        let t_rel: Vec<f64> = records.iter().map(|r| r.t_rel).collect();
        let pos: Vec<f64> = records.iter().map(|r| r.final_pos_err).collect();
        let vel: Vec<f64> = records.iter().map(|r| r.final_vel_err).collect();
        let solves: u64 = records.iter().map(|r| r.solves).sum();
        let total_ms: f64 = records.iter().map(|r| r.mean_solve_ms * r.solves as f64).sum();
        Self {
            mode,
            noise,
            trials: records.len(),
            unsolved: records.iter().filter(|r| !r.t_o.is_finite()).count(),
            timed_out: records.iter().filter(|r| r.timed_out).count(),
            median_t_rel: median(&t_rel),
            t_rel_ci: bootstrap_median_ci(&t_rel, spec.bootstrap_resamples, spec.confidence, spec.bootstrap_seed),
            ci_method: format!(
                "percentile bootstrap of the median, {} resamples, {}% level",
                spec.bootstrap_resamples,
                spec.confidence * 100.0
            ),
            final_pos_err: Quantiles::of(&pos),
            final_vel_err: Quantiles::of(&vel),
            mean_solve_ms: if solves > 0 { total_ms / solves as f64 } else { 0.0 },
            max_solve_ms: records.iter().map(|r| r.max_solve_ms).fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutput {
    pub csv_schema_version: u32,
    pub seed: u64,
    pub rate: f64,
    pub summaries: Vec<BenchSummary>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

/// Noise-free optimal times for `T_rel`; NaN where the solver fails.
pub fn reference_times(problems: &[Problem], controller: &ControllerConfig, workers: Option<usize>) -> Result<Vec<f64>> {
    run_parallel(problems.len(), workers, |i| {
        reference_time(&problems[i], controller).unwrap_or(f64::NAN)
    })
}

/// Every problem under every mode and noise level. Trial `i` draws its noise
/// from stream `i` of `sim.seed`, shared across modes.
pub fn bench(
    problems: &[Problem],
    controller: &ControllerConfig,
    sim: &SimConfig,
    spec: &BenchSpec,
    workers: Option<usize>,
) -> Result<BenchOutput> {
    controller.validate()?;
    sim.validate()?;
    let t_o = reference_times(problems, controller, workers)?;
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for &noise in &spec.noise_levels {
        let sim = SimConfig {
            noise_level: noise,
            ..*sim
        };
        sim.validate()?;
        for &mode in &spec.modes {
            let batch = run_parallel(problems.len(), workers, |i| {
                run_trial(&problems[i], controller, &sim, mode, t_o[i], i as u64)
            })?;
            let refs: Vec<&TrialRecord> = batch.iter().collect();
            summaries.push(BenchSummary::from_records(mode, noise, &refs, spec));
            records.extend(batch);
        }
    }
    Ok(BenchOutput {
        csv_schema_version: CSV_SCHEMA_VERSION,
        seed: sim.seed,
        rate: sim.rate,
        summaries,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub beta_min: f64,
    pub trials: usize,
    pub median_final_pos_err: f64,
    pub median_final_vel_err: f64,
}

/// Closed-loop runs for each `β_min`, on the same noise streams.
pub fn tradeoff(
    problems: &[Problem],
    controller: &ControllerConfig,
    sim: &SimConfig,
    beta_mins: &[f64],
    workers: Option<usize>,
) -> Result<Vec<TradeoffRow>> {
    sim.validate()?;
    beta_mins
        .iter()
        .map(|&beta_min| {
            if !(beta_min > 0.0 && beta_min <= 1.0) {
                return Err(Error::InvalidConfig(format!("beta_min must lie in (0, 1], got {beta_min}")));
            }
            let cfg = ControllerConfig { beta_min, ..*controller };
            cfg.validate()?;
            let records = run_parallel(problems.len(), workers, |i| {
                run_trial(&problems[i], &cfg, sim, Mode::Tsocs, f64::NAN, i as u64)
            })?;
            let pos: Vec<f64> = records.iter().map(|r| r.final_pos_err).collect();
            let vel: Vec<f64> = records.iter().map(|r| r.final_vel_err).collect();
            Ok(TradeoffRow {
                beta_min,
                trials: records.len(),
                median_final_pos_err: median(&pos),
                median_final_vel_err: median(&vel),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count }
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.count <= 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max || self.count == 0 {
            return Err(Error::InvalidConfig(format!("bad {name} axis {self:?}")));
        }
        Ok(())
    }
}

/// Grid over `(α₁, α₄, T)` with `α₂` and `α₃` held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSpec {
    pub alpha1: Axis,
    pub alpha4: Axis,
    pub duration: Axis,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl LandscapeSpec {
    /// Grid centred on `solution` rescaled to `α₂ = 1`, spanning
    /// `±half_width` in each free α and `[0, 2T]` in time.
    pub fn around(solution: &ControlParams, half_width: f64, count: usize) -> Self {
        let a = solution.alpha();
        let scale = if a[1].abs() > 1e-9 { 1.0 / a[1] } else { 1.0 };
        let centre = a.map(|v| v * scale);
        Self {
            alpha1: Axis::new(centre[0] - half_width, centre[0] + half_width, count),
            alpha4: Axis::new(centre[3] - half_width, centre[3] + half_width, count),
            duration: Axis::new(0.0, 2.0 * solution.duration, count),
            alpha2: centre[1],
            alpha3: centre[2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.alpha1.validate("alpha1")?;
        self.alpha4.validate("alpha4")?;
        self.duration.validate("duration")?;
        if self.duration.min < 0.0 {
            return Err(Error::InvalidConfig("durations must be non-negative".into()));
        }
        if !(self.alpha2.is_finite() && self.alpha3.is_finite()) {
            return Err(Error::InvalidConfig("fixed alphas must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.alpha1.count * self.alpha4.count * self.duration.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid indices of flat cell `k`, with `α₁` varying slowest and `T` fastest.
    pub fn unflatten(&self, k: usize) -> [usize; 3] {
        let nt = self.duration.count;
        let n4 = self.alpha4.count;
        [k / (n4 * nt), (k / nt) % n4, k % nt]
    }

    pub fn flatten(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.alpha4.count + idx[1]) * self.duration.count + idx[2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeCell {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub duration: f64,
    /// `F_BV`, NaN on singular cells.
    pub cost: f64,
    pub singular: bool,
}

/// `F_BV` at every grid point, flattened as in [`LandscapeSpec::unflatten`].
pub fn landscape(problem: &Problem, spec: &LandscapeSpec) -> Result<Vec<LandscapeCell>> {
    spec.validate()?;
    Ok((0..spec.len())
        .map(|k| {
            let [i, j, l] = spec.unflatten(k);
            let (alpha1, alpha4, duration) = (spec.alpha1.value(i), spec.alpha4.value(j), spec.duration.value(l));
            let params = ControlParams::new([alpha1, spec.alpha2, spec.alpha3, alpha4], duration);
            let cost = cost_bv(&params, problem)
                .ok()
                .map(|c| c.total)
                .filter(|c| c.is_finite());
            LandscapeCell {
                alpha1,
                alpha2: spec.alpha2,
                alpha3: spec.alpha3,
                alpha4,
                duration,
                cost: cost.unwrap_or(f64::NAN),
                singular: cost.is_none(),
            }
        })
        .collect())
}

/// Flat indices of cells no costlier than any non-singular neighbour in the
/// surrounding 3×3×3 block, with at least one neighbour strictly costlier.
pub fn local_minima(spec: &LandscapeSpec, cells: &[LandscapeCell]) -> Vec<usize> {
    let dims = [spec.alpha1.count, spec.alpha4.count, spec.duration.count];
    (0..cells.len())
        .filter(|&k| {
            if cells[k].singular {
                return false;
            }
            let idx = spec.unflatten(k);
            let mut strictly_lower = false;
            for d0 in -1i64..=1 {
                for d1 in -1i64..=1 {
                    for d2 in -1i64..=1 {
                        if (d0, d1, d2) == (0, 0, 0) {
                            continue;
                        }
                        let n = [idx[0] as i64 + d0, idx[1] as i64 + d1, idx[2] as i64 + d2];
                        if n.iter().zip(dims).any(|(&v, d)| v < 0 || v >= d as i64) {
                            continue;
                        }
                        let other = &cells[spec.flatten([n[0] as usize, n[1] as usize, n[2] as usize])];
                        if other.singular {
                            continue;
                        }
                        if other.cost < cells[k].cost {
                            return false;
                        }
                        strictly_lower |= other.cost > cells[k].cost;
                    }
                }
            }
            strictly_lower
        })
        .collect()
}
