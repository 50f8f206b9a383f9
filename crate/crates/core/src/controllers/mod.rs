//! Controllers for the virtual player: the feature-prescribed ILC law, its
//! online variant, and the PD and receding-horizon baselines.

mod ilc;
mod online;
mod opc;

pub use ilc::{ilc_update, run_ilc_trial, IlcTrialResult, IterationBuffer};
pub use online::{online_step, ControllerKind, HpView, OnlineConfig, OnlineDiagnostics, OnlineLoop, OnlineState};
pub use opc::{discretize_affine, optimal_tracking_baseline, OpcConfig};

use std::path::Path;

use crate::error::{Error, Result};
use crate::hkb::ControlInput;
use crate::kv::KvRecord;
use crate::sigproc;
use crate::trajectory::Trajectory;

/// Learning gains of the ILC law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IlcGains {
    /// Position-error gain.
    pub kp: f64,
    /// Velocity-error gain.
    pub kv: f64,
    /// Feature-mismatch gain.
    pub ks: f64,
}

impl IlcGains {
    pub const DYAD1: IlcGains = IlcGains { kp: 0.31, kv: 0.01, ks: 0.02 };
    pub const DYAD2: IlcGains = IlcGains { kp: 0.45, kv: 0.02, ks: 0.03 };
    pub const DYAD3: IlcGains = IlcGains { kp: 0.16, kv: 0.02, ks: 0.01 };
    pub const DYAD4: IlcGains = IlcGains { kp: 0.41, kv: 0.04, ks: 0.03 };

    pub fn new(kp: f64, kv: f64, ks: f64) -> Result<Self> {
        let g = Self { kp, kv, ks };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.kp, self.kv, self.ks].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite gain in {self:?}")));
        }
        if self.ks < 0.0 {
            return Err(Error::InvalidParams(format!(
                "feature gain must be non-negative, got {}",
                self.ks
            )));
        }
        Ok(())
    }

    /// Preset by dyad number (1-based).
    pub fn preset(dyad: usize) -> Option<Self> {
        [Self::DYAD1, Self::DYAD2, Self::DYAD3, Self::DYAD4]
            .get(dyad.checked_sub(1)?)
            .copied()
    }

    pub fn with_ks(mut self, ks: f64) -> Self {
        self.ks = ks;
        self
    }
}

impl Default for IlcGains {
    fn default() -> Self {
        Self::DYAD1
    }
}

/// Named gain sets stored as `<name>.kp`, `<name>.kv`, `<name>.ks` keys.
#[derive(Clone, Debug, PartialEq)]
pub struct GainPresets {
    pub entries: Vec<(String, IlcGains)>,
}

impl GainPresets {
    /// The four per-dyad presets.
    pub fn dyads() -> Self {
        Self {
            entries: (1..=4)
                .map(|d| (format!("dyad{d}"), IlcGains::preset(d).unwrap()))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<IlcGains> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, g)| *g)
    }

    pub fn to_kv(&self) -> KvRecord {
        let mut rec = KvRecord::new();
        for (name, g) in &self.entries {
            rec.set(&format!("{name}.kp"), g.kp);
            rec.set(&format!("{name}.kv"), g.kv);
            rec.set(&format!("{name}.ks"), g.ks);
        }
        rec
    }

    pub fn from_kv(rec: &KvRecord) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        for key in rec.keys() {
            let (name, field) = key
                .rsplit_once('.')
                .ok_or_else(|| Error::Config(format!("gain key `{key}` lacks a `<name>.` prefix")))?;
            if !matches!(field, "kp" | "kv" | "ks") {
                return Err(Error::Config(format!("unknown gain field in `{key}`")));
            }
            if !names.iter().any(|n| n == name) {
                names.push(name.to_string());
            }
        }
        let entries = names
            .into_iter()
            .map(|name| {
                let g = IlcGains::new(
                    rec.require(&format!("{name}.kp"))?,
                    rec.require(&format!("{name}.kv"))?,
                    rec.require(&format!("{name}.ks"))?,
                )?;
                Ok((name, g))
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KvRecord::load(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_kv().save(path)
    }
}

/// Which channel of the solo recording the feature term compares against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FeatureChannel {
    /// `s = v - y`, compared with VP positions.
    #[default]
    Position,
    /// `s = v - y'`, compared with VP velocities.
    Velocity,
}

impl std::str::FromStr for FeatureChannel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "position" => Ok(Self::Position),
            "velocity" => Ok(Self::Velocity),
            other => Err(Error::Config(format!("unknown feature channel `{other}`"))),
        }
    }
}

/// A pre-recorded solo trajectory resampled onto the trial grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSignal {
    pub source: Trajectory,
    pub channel: FeatureChannel,
    pub v: Vec<[f64; 2]>,
}

impl FeatureSignal {
    /// Resamples `source` to `dt` and aligns it to `n` grid points. A recording
    /// shorter than the trial holds its last value.
    pub fn from_recording(
        source: Trajectory,
        channel: FeatureChannel,
        dt: f64,
        n: usize,
    ) -> Result<Self> {
        let aligned = if source.len() >= 2 && source.dt() == dt {
            sigproc::estimate_velocity(&source)?
        } else {
            sigproc::resample(&source, dt)?
        };
        let series: Vec<[f64; 2]> = match channel {
            FeatureChannel::Position => aligned.positions().collect(),
            FeatureChannel::Velocity => aligned.velocities().collect(),
        };
        let last = *series
            .last()
            .ok_or_else(|| Error::InsufficientData("empty solo recording".into()))?;
        if series.len() < n {
            log::debug!(
                "solo recording covers {} of {n} grid points; holding the last value",
                series.len()
            );
        }
        let v = (0..n).map(|j| series.get(j).copied().unwrap_or(last)).collect();
        Ok(Self { source, channel, v })
    }

    /// A feature that is already on the grid.
    pub fn from_grid(v: Vec<[f64; 2]>, channel: FeatureChannel, dt: f64) -> Result<Self> {
        let source = Trajectory::from_positions(dt, 0.0, &v)?;
        Ok(Self { source, channel, v })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// `s = v - y` (or `v - y'`) at grid index `j` for a VP position/velocity.
    pub fn mismatch(&self, j: usize, position: [f64; 2], velocity: [f64; 2]) -> [f64; 2] {
        let v = self.v.get(j).or(self.v.last()).copied().unwrap_or([0.0; 2]);
        let y = match self.channel {
            FeatureChannel::Position => position,
            FeatureChannel::Velocity => velocity,
        };
        [v[0] - y[0], v[1] - y[1]]
    }
}

/// PD law `u = kp e + kv e'`; the ILC law with a single iteration from rest.
pub fn pd_control(e: [f64; 2], edot: [f64; 2], gains: &IlcGains) -> ControlInput {
    ControlInput::new(
        gains.kp * e[0] + gains.kv * edot[0],
        gains.kp * e[1] + gains.kv * edot[1],
    )
}

/// Relative position error `|p_h - p_k| / max(|p_h|, floor)`.
pub fn error_rate(p_h: [f64; 2], p_k: [f64; 2], eps_floor: f64) -> f64 {
    let num = (p_h[0] - p_k[0]).hypot(p_h[1] - p_k[1]);
    num / p_h[0].hypot(p_h[1]).max(eps_floor)
}
