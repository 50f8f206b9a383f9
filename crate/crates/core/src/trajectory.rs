//! Uniformly sampled planar trajectories.

use crate::error::{Error, Result};

/// One planar sample: position and velocity in normalized workspace units.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlanarSample {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

impl PlanarSample {
    pub fn new(position: [f64; 2], velocity: [f64; 2]) -> Self {
        Self { position, velocity }
    }

    pub fn at(x: f64, y: f64) -> Self {
        Self {
            position: [x, y],
            velocity: [0.0; 2],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(&self.velocity).all(|v| v.is_finite())
    }
}

/// A uniformly sampled series of planar samples.
///
/// Timestamps are never stored: sample `j` sits at `t0 + j * dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dt: f64,
    t0: f64,
    samples: Vec<PlanarSample>,
}

impl Trajectory {
    pub fn new(dt: f64, t0: f64, samples: Vec<PlanarSample>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("sample period must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::Config(format!("start time must be finite, got {t0}")));
        }
        if let Some(j) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidState(format!("non-finite sample at index {j}")));
        }
        Ok(Self { dt, t0, samples })
    }

    /// Builds a trajectory from positions only; velocities are left at zero.
    pub fn from_positions(dt: f64, t0: f64, positions: &[[f64; 2]]) -> Result<Self> {
        let samples = positions
            .iter()
            .map(|&p| PlanarSample::new(p, [0.0; 2]))
            .collect();
        Self::new(dt, t0, samples)
    }

    pub fn empty(dt: f64, t0: f64) -> Result<Self> {
        Self::new(dt, t0, Vec::new())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    /// Time of the last sample, or `t0` when empty.
    pub fn end_time(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn samples(&self) -> &[PlanarSample] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [PlanarSample] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<PlanarSample> {
        self.samples
    }

    pub fn push(&mut self, sample: PlanarSample) -> Result<()> {
        if !sample.is_finite() {
            return Err(Error::InvalidState(format!(
                "non-finite sample at index {}",
                self.samples.len()
            )));
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn positions(&self) -> impl ExactSizeIterator<Item = [f64; 2]> + '_ {
        self.samples.iter().map(|s| s.position)
    }

    pub fn velocities(&self) -> impl ExactSizeIterator<Item = [f64; 2]> + '_ {
        self.samples.iter().map(|s| s.velocity)
    }

    /// One scalar channel: 0 = x, 1 = y, 2 = vx, 3 = vy.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| match c {
                0 => s.position[0],
                1 => s.position[1],
                2 => s.velocity[0],
                3 => s.velocity[1],
                _ => panic!("channel index {c} out of range"),
            })
            .collect()
    }

    /// Sub-trajectory `[start, end)`, re-based so its first sample keeps its time.
    pub fn slice(&self, start: usize, end: usize) -> Trajectory {
        let end = end.min(self.len());
        let start = start.min(end);
        Trajectory {
            dt: self.dt,
            t0: self.time(start),
            samples: self.samples[start..end].to_vec(),
        }
    }

    /// Checks that two trajectories share length and period.
    pub fn check_aligned(&self, other: &Trajectory) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Alignment {
                expected: self.len(),
                found: other.len(),
            });
        }
        if self.dt != other.dt {
            return Err(Error::Config(format!(
                "sample periods differ: {} vs {}",
                self.dt, other.dt
            )));
        }
        Ok(())
    }
}

/// Number of grid points for horizon `horizon` at period `dt`, endpoints inclusive.
pub fn sample_count(horizon: f64, dt: f64) -> usize {
    let steps = horizon / dt;
    // absorb representation error such as 0.3 / 0.1 = 2.9999999999999996
    let rounded = steps.round();
    let steps = if (steps - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded
    } else {
        steps.floor()
    };
    steps as usize + 1
}
