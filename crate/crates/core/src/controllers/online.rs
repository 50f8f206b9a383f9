//! Tick-driven online controller.
//!
//! Each tick starts from a base control (the warm-start buffer at that tick,
//! or zero). When the position error rate exceeds the threshold the control
//! is refined with the learning increment up to the inner cap, using the
//! error measured at the start of the tick. The plant then advances one step
//! and the inner counter is reset.

use std::str::FromStr;
use std::time::{Duration, Instant};

use super::{error_rate, optimal_tracking_baseline, pd_control, FeatureSignal, IlcGains, OpcConfig};
use crate::error::{Error, Result};
use crate::hkb::{ControlInput, Plant, State4};
use crate::kv::KvRecord;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OnlineConfig {
    /// Error-rate threshold above which the control is refined.
    pub eps_th: f64,
    /// Nominal trial duration in seconds.
    pub horizon: f64,
    /// Refinements allowed per tick.
    pub max_inner_iters: usize,
    /// Floor of the error-rate denominator.
    pub eps_floor: f64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            eps_th: 0.05,
            horizon: 30.0,
            max_inner_iters: 10,
            eps_floor: 1e-3,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_th.is_nan() || self.eps_th <= 0.0 {
            return Err(Error::Config(format!("eps_th must be positive, got {}", self.eps_th)));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::Config("max_inner_iters must be at least 1".into()));
        }
        if !(self.eps_floor.is_finite() && self.eps_floor > 0.0) {
            return Err(Error::Config(format!("eps_floor must be positive, got {}", self.eps_floor)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        Ok(())
    }

    /// Reads `online.*` keys; missing keys keep defaults. `inf` is a valid threshold.
    pub fn from_kv(rec: &KvRecord) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            eps_th: rec.parse_opt("online.eps_th")?.unwrap_or(d.eps_th),
            horizon: rec.parse_opt("online.horizon")?.unwrap_or(d.horizon),
            max_inner_iters: rec.parse_opt("online.max_inner_iters")?.unwrap_or(d.max_inner_iters),
            eps_floor: rec.parse_opt("online.eps_floor")?.unwrap_or(d.eps_floor),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write_kv(&self, rec: &mut KvRecord) {
        rec.set("online.eps_th", self.eps_th);
        rec.set("online.horizon", self.horizon);
        rec.set("online.max_inner_iters", self.max_inner_iters);
        rec.set("online.eps_floor", self.eps_floor);
    }
}

/// Which control law drives the virtual player.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ControllerKind {
    #[default]
    Ilc,
    Pdc,
    Opc,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [Self::Ilc, Self::Pdc, Self::Opc];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ilc => "ilc",
            Self::Pdc => "pdc",
            Self::Opc => "opc",
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ilc" => Ok(Self::Ilc),
            "pdc" => Ok(Self::Pdc),
            "opc" => Ok(Self::Opc),
            other => Err(Error::Config(format!("unknown controller `{other}`"))),
        }
    }
}

/// The latest filtered human sample visible to the controller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HpView {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

/// Mutable state of one online session.
#[derive(Clone, Debug)]
pub struct OnlineState {
    pub plant: Plant,
    pub dt: f64,
    pub tick: usize,
    pub x: State4,
    pub feature: Option<FeatureSignal>,
    pub warm_start: Option<Vec<[f64; 2]>>,
}

impl OnlineState {
    pub fn new(plant: Plant, dt: f64, x0: State4) -> Result<Self> {
        plant.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("tick period must be positive, got {dt}")));
        }
        if !x0.is_finite() {
            return Err(Error::InvalidState("non-finite initial state".into()));
        }
        Ok(Self {
            plant,
            dt,
            tick: 0,
            x: x0,
            feature: None,
            warm_start: None,
        })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    fn base_control(&self) -> [f64; 2] {
        self.warm_start
            .as_ref()
            .and_then(|w| w.get(self.tick))
            .copied()
            .unwrap_or([0.0; 2])
    }

    fn mismatch(&self) -> [f64; 2] {
        self.feature
            .as_ref()
            .map_or([0.0; 2], |f| f.mismatch(self.tick, self.x.position(), self.x.velocity()))
    }
}

/// What happened during one tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OnlineDiagnostics {
    pub tick: usize,
    /// Time of the emitted VP sample.
    pub t: f64,
    /// VP state the tick's control was computed from.
    pub vp: State4,
    /// Error rate, or `None` before any human sample arrived.
    pub eps: Option<f64>,
    /// Refinements performed this tick.
    pub k: usize,
    pub u: ControlInput,
    pub elapsed: Duration,
    pub overrun: bool,
}

/// One tick of the online learning law. On error the state is left unchanged.
pub fn online_step(
    state: &mut OnlineState,
    hp: Option<&HpView>,
    cfg: &OnlineConfig,
    gains: &IlcGains,
) -> Result<(ControlInput, OnlineDiagnostics)> {
    let base = state.base_control();
    let mut u = base;
    let mut k = 0;
    let eps = hp.map(|h| error_rate(h.position, state.x.position(), cfg.eps_floor));
    if let (Some(h), Some(eps)) = (hp, eps) {
        if eps > cfg.eps_th {
            let (p, v) = (state.x.position(), state.x.velocity());
            let s = state.mismatch();
            for c in 0..2 {
                let inc = gains.kp * (h.position[c] - p[c])
                    + gains.kv * (h.velocity[c] - v[c])
                    + gains.ks * s[c];
                // the error is not re-measured inside the tick, so each
                // refinement adds the same increment
                for _ in 0..cfg.max_inner_iters {
                    u[c] += inc;
                }
            }
            k = cfg.max_inner_iters;
        }
    }
    let u = ControlInput::from_array(u);
    advance(state, u, eps, k)
}

fn advance(
    state: &mut OnlineState,
    u: ControlInput,
    eps: Option<f64>,
    k: usize,
) -> Result<(ControlInput, OnlineDiagnostics)> {
    let t = state.time();
    let next = state
        .plant
        .step(&state.x, &u, state.dt)
        .map_err(|e| e.at(Some(t + state.dt), None))?;
    let diag = OnlineDiagnostics {
        tick: state.tick,
        t,
        vp: state.x,
        eps,
        k,
        u,
        elapsed: Duration::ZERO,
        overrun: false,
    };
    state.x = next;
    state.tick += 1;
    Ok((u, diag))
}

/// An online session with a selectable control law and tick timing.
#[derive(Clone, Debug)]
pub struct OnlineLoop {
    pub state: OnlineState,
    pub cfg: OnlineConfig,
    pub gains: IlcGains,
    pub controller: ControllerKind,
    pub opc: OpcConfig,
    overruns: usize,
}

impl OnlineLoop {
    pub fn new(
        state: OnlineState,
        cfg: OnlineConfig,
        gains: IlcGains,
        controller: ControllerKind,
    ) -> Result<Self> {
        cfg.validate()?;
        gains.validate()?;
        Ok(Self {
            state,
            cfg,
            gains,
            controller,
            opc: OpcConfig::default(),
            overruns: 0,
        })
    }

    pub fn with_opc(mut self, opc: OpcConfig) -> Result<Self> {
        opc.validate()?;
        self.opc = opc;
        Ok(self)
    }

    pub fn set_gains(&mut self, gains: IlcGains) -> Result<()> {
        gains.validate()?;
        self.gains = gains;
        Ok(())
    }

    pub fn overruns(&self) -> usize {
        self.overruns
    }

    pub fn tick(&mut self, hp: Option<&HpView>) -> Result<OnlineDiagnostics> {
        let started = Instant::now();
        let (_, mut diag) = match self.controller {
            ControllerKind::Ilc => online_step(&mut self.state, hp, &self.cfg, &self.gains)?,
            ControllerKind::Pdc => {
                let s = &self.state;
                let eps = hp.map(|h| error_rate(h.position, s.x.position(), self.cfg.eps_floor));
                let u = hp.map_or(ControlInput::ZERO, |h| {
                    let (p, v) = (s.x.position(), s.x.velocity());
                    pd_control(
                        [h.position[0] - p[0], h.position[1] - p[1]],
                        [h.velocity[0] - v[0], h.velocity[1] - v[1]],
                        &self.gains,
                    )
                });
                advance(&mut self.state, u, eps, 0)?
            }
            ControllerKind::Opc => {
                let s = &self.state;
                let eps = hp.map(|h| error_rate(h.position, s.x.position(), self.cfg.eps_floor));
                let u = match hp {
                    None => ControlInput::ZERO,
                    Some(h) => {
                        // the future of the human path is unknown; extrapolate it
                        let reference: Vec<[f64; 2]> = (1..=self.opc.horizon)
                            .map(|i| {
                                let tau = i as f64 * s.dt;
                                [
                                    h.position[0] + h.velocity[0] * tau,
                                    h.position[1] + h.velocity[1] * tau,
                                ]
                            })
                            .collect();
                        optimal_tracking_baseline(&s.x, &s.plant.params, &reference, s.dt, &self.opc)
                            .map_err(|e| e.at(Some(s.time()), None))?
                    }
                };
                advance(&mut self.state, u, eps, 0)?
            }
        };
        diag.elapsed = started.elapsed();
        diag.overrun = diag.elapsed.as_secs_f64() > self.state.dt;
        if diag.overrun {
            self.overruns += 1;
            log::warn!(
                "tick {} took {:?}, budget {:.6} s",
                diag.tick,
                diag.elapsed,
                self.state.dt
            );
        }
        Ok(diag)
    }
}
