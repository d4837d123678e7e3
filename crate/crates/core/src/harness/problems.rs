//! Versioned problem files and the random problem sampler.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Problem, State, Vec2};

pub const PROBLEM_SCHEMA_VERSION: u32 = 1;

/// One problem as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub x0: [f64; 2],
    pub v0: [f64; 2],
    pub xf: [f64; 2],
    pub vf: [f64; 2],
    pub u_max: f64,
}

impl From<&Problem> for ProblemRecord {
    fn from(p: &Problem) -> Self {
        Self {
            x0: p.initial.pos.into(),
            v0: p.initial.vel.into(),
            xf: p.goal.pos.into(),
            vf: p.goal.vel.into(),
            u_max: p.u_max,
        }
    }
}

impl TryFrom<&ProblemRecord> for Problem {
    type Error = Error;
    fn try_from(r: &ProblemRecord) -> Result<Self> {
        Problem::new(
            State::new(r.x0.into(), r.v0.into()),
            State::new(r.xf.into(), r.vf.into()),
            r.u_max,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub problems: Vec<ProblemRecord>,
}

impl ProblemFile {
    pub fn new(problems: &[Problem], seed: Option<u64>) -> Self {
        Self {
            schema_version: PROBLEM_SCHEMA_VERSION,
            seed,
            problems: problems.iter().map(ProblemRecord::from).collect(),
        }
    }

    /// Validated problems, in file order.
    pub fn problems(&self) -> Result<Vec<Problem>> {
        self.problems
            .iter()
            .enumerate()
            .map(|(i, r)| {
                Problem::try_from(r).map_err(|e| Error::InvalidProblem(format!("problem {i}: {e}")))
            })
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text)?;
        if file.schema_version != PROBLEM_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: file.schema_version,
                expected: PROBLEM_SCHEMA_VERSION,
            });
        }
        file.problems()?;
        Ok(file)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalVelocityMode {
    #[default]
    Zero,
    Sampled,
}

impl std::str::FromStr for FinalVelocityMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "sampled" => Ok(Self::Sampled),
            other => Err(Error::InvalidConfig(format!("unknown final velocity mode {other:?}"))),
        }
    }
}

/// Problems start anywhere in a square with a random velocity and end at the
/// origin, at rest or with a random velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerSpec {
    /// Half-width of the square of initial positions, m.
    pub pos_range: f64,
    /// Radius of the disk of sampled velocities, m/s.
    pub vel_max: f64,
    pub u_max: f64,
    pub final_vel_mode: FinalVelocityMode,
    pub count: usize,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self {
            pos_range: 5.0,
            vel_max: 2.0,
            u_max: 1.0,
            final_vel_mode: FinalVelocityMode::Zero,
            count: 1000,
        }
    }
}

impl SamplerSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("pos_range", self.pos_range), ("vel_max", self.vel_max), ("u_max", self.u_max)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.count == 0 {
            return Err(Error::InvalidConfig("count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Problem {
        let pos = Vec2::new(
            rng.gen_range(-self.pos_range..=self.pos_range),
            rng.gen_range(-self.pos_range..=self.pos_range),
        );
        let v0 = sample_disk(self.vel_max, rng);
        let vf = match self.final_vel_mode {
            FinalVelocityMode::Zero => Vec2::ZERO,
            FinalVelocityMode::Sampled => sample_disk(self.vel_max, rng),
        };
        Problem {
            initial: State::new(pos, v0),
            goal: State::new(Vec2::ZERO, vf),
            u_max: self.u_max,
        }
    }
}

/// Uniform on the disk of the given radius.
pub fn sample_disk<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> Vec2 {
    let r = radius * rng.gen::<f64>().sqrt();
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    Vec2::new(r * angle.cos(), r * angle.sin())
}

pub fn sample_problems(spec: &SamplerSpec, seed: u64) -> Result<Vec<Problem>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..spec.count).map(|_| spec.sample(&mut rng)).collect())
}

pub fn gen(spec: &SamplerSpec, seed: u64) -> Result<ProblemFile> {
    Ok(ProblemFile::new(&sample_problems(spec, seed)?, Some(seed)))
}
