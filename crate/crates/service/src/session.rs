//! One mirror-game session: tick-aligned ingestion, the online controller,
//! running metrics and the archive written on close.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use waggle_core::controllers::{
    ControllerKind, FeatureChannel, FeatureSignal, GainPresets, HpView, IlcGains, OnlineConfig,
    OnlineDiagnostics, OnlineLoop, OnlineState, OpcConfig,
};
use waggle_core::kv::KvRecord;
use waggle_core::metrics::{circular_variance, estimate_phase, relative_phase, MetricsReport};
use waggle_core::sigproc::{self, FilterMode, FilterSpec};
use waggle_core::{HkbParams, PlanarSample, Plant, State4, Trajectory};

use crate::error::{Result, ServiceError};
use crate::protocol::{ServerMessage, WireConfig};

/// Periods of HP motion covered by the live CV window.
pub const CV_WINDOW_PERIODS: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SessionConfig {
    pub dt_tick: f64,
    pub controller: ControllerKind,
    pub gains: IlcGains,
    pub hkb: HkbParams,
    pub online: OnlineConfig,
    pub opc: OpcConfig,
    pub filter: FilterSpec,
    pub feature_channel: FeatureChannel,
    pub solo_feature: Option<Trajectory>,
    pub x0: State4,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            dt_tick: 1.0 / 60.0,
            controller: ControllerKind::Ilc,
            gains: IlcGains::DYAD1,
            hkb: HkbParams::REFERENCE,
            online: OnlineConfig::default(),
            opc: OpcConfig::default(),
            filter: FilterSpec {
                window: sigproc::DEFAULT_WINDOW,
                mode: FilterMode::Causal,
            },
            feature_channel: FeatureChannel::Position,
            solo_feature: None,
            x0: State4::ZERO,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Config(e.to_string())
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_tick.is_finite() && self.dt_tick > 0.0) {
            return Err(config_err(format!("dt_tick must be positive, got {}", self.dt_tick)));
        }
        if self.filter.mode != FilterMode::Causal {
            return Err(config_err("live sessions need a causal filter"));
        }
        self.filter.validate().map_err(config_err)?;
        self.gains.validate().map_err(config_err)?;
        self.hkb.validate().map_err(config_err)?;
        self.online.validate().map_err(config_err)?;
        self.opc.validate().map_err(config_err)?;
        if !self.x0.is_finite() {
            return Err(config_err("initial state must be finite"));
        }
        Ok(())
    }

    pub fn from_wire(w: &WireConfig) -> Result<Self> {
        let d = Self::default();
        let mut gains = match &w.preset {
            Some(p) => GainPresets::dyads()
                .get(p)
                .ok_or_else(|| config_err(format!("unknown gain preset `{p}`")))?,
            None => d.gains,
        };
        gains.kp = w.kp.unwrap_or(gains.kp);
        gains.kv = w.kv.unwrap_or(gains.kv);
        gains.ks = w.ks.unwrap_or(gains.ks);
        let mut opc = d.opc;
        opc.horizon = w.opc_horizon.unwrap_or(opc.horizon);
        let cfg = Self {
            dt_tick: w.dt_tick.unwrap_or(d.dt_tick),
            controller: match &w.controller {
                Some(c) => c.parse().map_err(config_err)?,
                None => d.controller,
            },
            gains,
            hkb: HkbParams {
                alpha: w.alpha.unwrap_or(d.hkb.alpha),
                beta: w.beta.unwrap_or(d.hkb.beta),
                gamma: w.gamma.unwrap_or(d.hkb.gamma),
                omega: w.omega.unwrap_or(d.hkb.omega),
            },
            online: OnlineConfig {
                eps_th: w.eps_th.unwrap_or(d.online.eps_th),
                horizon: w.horizon.unwrap_or(d.online.horizon),
                max_inner_iters: w.max_inner_iters.unwrap_or(d.online.max_inner_iters),
                eps_floor: w.eps_floor.unwrap_or(d.online.eps_floor),
            },
            opc,
            filter: FilterSpec {
                window: w.filter_window.unwrap_or(d.filter.window),
                mode: FilterMode::Causal,
            },
            feature_channel: match &w.feature_channel {
                Some(c) => c.parse().map_err(config_err)?,
                None => d.feature_channel,
            },
            solo_feature: None,
            x0: w.x0.map(State4::from_array).unwrap_or(d.x0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Flat record of everything except the solo feature.
    pub fn to_kv(&self) -> KvRecord {
        let mut rec = self.hkb.to_kv();
        rec.set("dt_tick", self.dt_tick);
        rec.set("controller", self.controller);
        rec.set("kp", self.gains.kp);
        rec.set("kv", self.gains.kv);
        rec.set("ks", self.gains.ks);
        self.online.write_kv(&mut rec);
        rec.set("opc.q", self.opc.q[(0, 0)]);
        rec.set("opc.r", self.opc.r[(0, 0)]);
        rec.set("opc.horizon", self.opc.horizon);
        rec.set("filter.window", self.filter.window);
        rec.set(
            "feature.channel",
            match self.feature_channel {
                FeatureChannel::Position => "position",
                FeatureChannel::Velocity => "velocity",
            },
        );
        for (i, v) in self.x0.as_array().iter().enumerate() {
            rec.set(&format!("x0.{}", i + 1), v);
        }
        rec
    }

    pub fn from_kv(rec: &KvRecord) -> Result<Self> {
        let d = Self::default();
        let get = |k: &str, dv: f64| -> Result<f64> { Ok(rec.parse_opt(k).map_err(config_err)?.unwrap_or(dv)) };
        let x0 = d.x0.as_array();
        let cfg = Self {
            dt_tick: get("dt_tick", d.dt_tick)?,
            controller: rec.parse_opt("controller").map_err(config_err)?.unwrap_or(d.controller),
            gains: IlcGains {
                kp: get("kp", d.gains.kp)?,
                kv: get("kv", d.gains.kv)?,
                ks: get("ks", d.gains.ks)?,
            },
            hkb: HkbParams::from_kv(rec).map_err(config_err)?,
            online: OnlineConfig::from_kv(rec).map_err(config_err)?,
            opc: OpcConfig::from_kv(rec).map_err(config_err)?,
            filter: FilterSpec {
                window: rec.parse_opt("filter.window").map_err(config_err)?.unwrap_or(d.filter.window),
                mode: FilterMode::Causal,
            },
            feature_channel: rec
                .parse_opt("feature.channel")
                .map_err(config_err)?
                .unwrap_or(d.feature_channel),
            solo_feature: None,
            x0: State4::new(
                get("x0.1", x0[0])?,
                get("x0.2", x0[1])?,
                get("x0.3", x0[2])?,
                get("x0.4", x0[3])?,
            ),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Running metrics emitted with each tick. `None` while undefined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiveMetrics {
    pub t: f64,
    pub rmse: Option<f64>,
    pub cv: Option<f64>,
    pub svm: Option<f64>,
    pub eps: Option<f64>,
    pub k: usize,
}

impl LiveMetrics {
    pub fn to_message(&self) -> ServerMessage {
        ServerMessage::Metrics {
            t: self.t,
            rmse: self.rmse,
            cv: self.cv,
            svm: self.svm,
            eps: self.eps,
            k: self.k,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaultInfo {
    pub code: String,
    pub message: String,
    pub t: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    Open,
    Faulted(FaultInfo),
    Closed,
}

/// Mid-session change that replay has to re-apply at the same tick.
#[derive(Clone, Debug, PartialEq)]
pub enum SessionEvent {
    SetGains(IlcGains),
    SoloUpload(Trajectory),
}

#[derive(Clone, Debug)]
pub struct TickOutput {
    pub vp: PlanarSample,
    pub t: f64,
    pub metrics: LiveMetrics,
    pub diagnostics: OnlineDiagnostics,
}

impl TickOutput {
    pub fn vp_message(&self) -> ServerMessage {
        ServerMessage::Vp {
            t: self.t,
            x: self.vp.position[0],
            y: self.vp.position[1],
        }
    }
}

/// CV of the relative phase over the last `CV_WINDOW_PERIODS` periods of HP motion.
///
/// `hp` holds raw positions; its velocities are estimated here. `vp` must be
/// aligned with `hp`. Returns `None` while the period cannot be estimated.
pub fn live_cv(hp: &Trajectory, vp: &Trajectory) -> Option<f64> {
    if hp.len() < 3 || hp.len() != vp.len() {
        return None;
    }
    let hp = sigproc::estimate_velocity(hp).ok()?;
    let [px, _] = estimate_phase(&hp).ok()?;
    let period = 2.0 * std::f64::consts::PI / px.omega_hat;
    let w = ((CV_WINDOW_PERIODS * period / hp.dt()).ceil() as usize).clamp(2, hp.len());
    let start = hp.len() - w;
    let d = relative_phase(&hp.slice(start, hp.len()), &vp.slice(start, vp.len())).ok()?;
    Some(circular_variance(&d))
}

#[derive(Debug)]
pub struct Session {
    id: u64,
    cfg: SessionConfig,
    ctl: OnlineLoop,
    status: Status,
    pending: Option<[f64; 2]>,
    last_t: Option<f64>,
    drops: usize,
    first_hp_tick: Option<usize>,
    hp_raw: Vec<[f64; 2]>,
    hp_view: Vec<PlanarSample>,
    vp: Vec<PlanarSample>,
    sum_sq: f64,
    max_abs: [f64; 2],
    last_metrics: Option<LiveMetrics>,
    events: Vec<(usize, SessionEvent)>,
}

impl Session {
    pub fn open(id: u64, cfg: SessionConfig) -> Result<Self> {
        cfg.validate()?;
        let mut state = OnlineState::new(Plant::new(cfg.hkb), cfg.dt_tick, cfg.x0)?;
        if let Some(solo) = &cfg.solo_feature {
            state.feature = Some(feature_for(&cfg, solo.clone())?);
        }
        let ctl = OnlineLoop::new(state, cfg.online, cfg.gains, cfg.controller)?.with_opc(cfg.opc)?;
        Ok(Self {
            id,
            cfg,
            ctl,
            status: Status::Open,
            pending: None,
            last_t: None,
            drops: 0,
            first_hp_tick: None,
            hp_raw: Vec::new(),
            hp_view: Vec::new(),
            vp: Vec::new(),
            sum_sq: 0.0,
            max_abs: [0.0; 2],
            last_metrics: None,
            events: Vec::new(),
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn status(&self) -> &Status {
        &self.status
    }

    pub fn drops(&self) -> usize {
        self.drops
    }

    pub fn overruns(&self) -> usize {
        self.ctl.overruns()
    }

    pub fn ticks(&self) -> usize {
        self.vp.len()
    }

    pub fn gains(&self) -> IlcGains {
        self.ctl.gains
    }

    fn ensure_open(&self) -> Result<()> {
        match &self.status {
            Status::Open => Ok(()),
            Status::Closed => Err(ServiceError::Closed),
            Status::Faulted(f) => Err(ServiceError::Faulted(f.message.clone())),
        }
    }

    /// Queues a human sample for the next tick. Returns `false` when the
    /// sample is not newer than the last accepted one and was dropped.
    pub fn ingest(&mut self, t: f64, x: f64, y: f64) -> Result<bool> {
        self.ensure_open()?;
        if !(t.is_finite() && x.is_finite() && y.is_finite()) {
            return Err(ServiceError::Protocol("hp sample must be finite".into()));
        }
        if self.last_t.is_some_and(|last| t <= last) {
            self.drops += 1;
            return Ok(false);
        }
        self.last_t = Some(t);
        self.pending = Some([x, y]);
        Ok(true)
    }

    pub fn set_gains(&mut self, gains: IlcGains) -> Result<()> {
        self.ensure_open()?;
        self.ctl.set_gains(gains)?;
        self.events.push((self.ticks(), SessionEvent::SetGains(gains)));
        Ok(())
    }

    /// Installs a solo recording given as `[t, x, y]` rows at a uniform period.
    pub fn upload_solo(&mut self, rows: &[[f64; 3]]) -> Result<()> {
        self.ensure_open()?;
        let solo = solo_from_rows(rows)?;
        self.ctl.state.feature = Some(feature_for(&self.cfg, solo.clone())?);
        self.events.push((self.ticks(), SessionEvent::SoloUpload(solo)));
        Ok(())
    }

    fn filtered_view(&self) -> PlanarSample {
        let w = self.cfg.filter.window.min(self.hp_raw.len());
        let tail = &self.hp_raw[self.hp_raw.len() - w..];
        let mut p = [0.0; 2];
        for s in tail {
            p[0] += s[0];
            p[1] += s[1];
        }
        let p = [p[0] / w as f64, p[1] / w as f64];
        let v = match self.hp_view.last() {
            Some(prev) => [
                (p[0] - prev.position[0]) / self.cfg.dt_tick,
                (p[1] - prev.position[1]) / self.cfg.dt_tick,
            ],
            None => [0.0; 2],
        };
        PlanarSample::new(p, v)
    }

    pub fn tick(&mut self) -> Result<TickOutput> {
        self.ensure_open()?;
        let tick = self.ticks();
        let t = tick as f64 * self.cfg.dt_tick;
        match self.pending.take() {
            Some(p) => {
                self.first_hp_tick.get_or_insert(tick);
                self.hp_raw.push(p);
            }
            None => {
                if let Some(&last) = self.hp_raw.last() {
                    self.hp_raw.push(last);
                }
            }
        }
        let view = if self.hp_raw.len() > self.hp_view.len() {
            let s = self.filtered_view();
            self.hp_view.push(s);
            Some(HpView {
                position: s.position,
                velocity: s.velocity,
            })
        } else {
            None
        };

        let diag = match self.ctl.tick(view.as_ref()) {
            Ok(d) => d,
            Err(e) => {
                let err = ServiceError::Core(e);
                self.status = Status::Faulted(FaultInfo {
                    code: err.code().to_string(),
                    message: err.to_string(),
                    t: Some(t),
                });
                log::warn!("session {} faulted at t = {t}: {err}", self.id);
                return Err(err);
            }
        };
        let vp = diag.vp.to_sample();
        self.vp.push(vp);

        let (mut rmse, mut svm, mut cv) = (None, None, None);
        if let Some(&h) = self.hp_raw.last() {
            let p = vp.position;
            self.sum_sq += (h[0] - p[0]).powi(2) + (h[1] - p[1]).powi(2);
            self.max_abs = [self.max_abs[0].max(p[0].abs()), self.max_abs[1].max(p[1].abs())];
            rmse = Some((self.sum_sq / self.hp_raw.len() as f64).sqrt());
            svm = Some(self.max_abs[0] * self.max_abs[1]);
            cv = live_cv(&self.hp_trajectory_raw()?, &self.paired_vp()?);
        }
        let metrics = LiveMetrics {
            t,
            rmse,
            cv,
            svm,
            eps: diag.eps,
            k: diag.k,
        };
        self.last_metrics = Some(metrics);
        Ok(TickOutput {
            vp,
            t,
            metrics,
            diagnostics: diag,
        })
    }

    fn hp_trajectory_raw(&self) -> Result<Trajectory> {
        let t0 = self.first_hp_tick.unwrap_or(0) as f64 * self.cfg.dt_tick;
        Ok(Trajectory::from_positions(self.cfg.dt_tick, t0, &self.hp_raw)?)
    }

    /// VP samples from the first tick with a human sample on.
    fn paired_vp(&self) -> Result<Trajectory> {
        let vp = Trajectory::new(self.cfg.dt_tick, 0.0, self.vp.clone())?;
        let start = self.first_hp_tick.unwrap_or(self.vp.len());
        Ok(vp.slice(start, vp.len()))
    }

    /// Closes the session and returns its archive. A faulted session can be closed.
    pub fn close(&mut self) -> Result<SessionArchive> {
        if self.status == Status::Closed {
            return Err(ServiceError::Closed);
        }
        let fault = match &self.status {
            Status::Faulted(f) => Some(f.clone()),
            _ => None,
        };
        self.status = Status::Closed;
        let hp_raw = self.hp_trajectory_raw()?;
        let hp = if hp_raw.len() >= 2 {
            sigproc::estimate_velocity(&hp_raw)?
        } else {
            hp_raw
        };
        let vp = Trajectory::new(self.cfg.dt_tick, 0.0, self.vp.clone())?;
        let paired = self.paired_vp()?;
        let report = MetricsReport::compute(&hp, &paired)?;
        Ok(SessionArchive {
            session_id: self.id,
            config: self.cfg.clone(),
            hp,
            vp,
            report,
            streamed: self.last_metrics,
            ticks: self.ticks(),
            drops: self.drops,
            overruns: self.overruns(),
            fault,
            events: self.events.clone(),
        })
    }
}

fn feature_for(cfg: &SessionConfig, solo: Trajectory) -> Result<FeatureSignal> {
    let n = waggle_core::trajectory::sample_count(cfg.online.horizon, cfg.dt_tick);
    Ok(FeatureSignal::from_recording(solo, cfg.feature_channel, cfg.dt_tick, n)?)
}

fn solo_from_rows(rows: &[[f64; 3]]) -> Result<Trajectory> {
    if rows.len() < 2 {
        return Err(ServiceError::Protocol("solo upload needs at least 2 samples".into()));
    }
    let mut text = String::from("t,x,y\n");
    for r in rows {
        let _ = writeln!(text, "{},{},{}", r[0], r[1], r[2]);
    }
    Ok(sigproc::parse_csv(&text)?)
}

/// Everything persisted when a session closes.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionArchive {
    pub session_id: u64,
    pub config: SessionConfig,
    /// Tick-aligned raw human positions, starting at the first tick that had one.
    pub hp: Trajectory,
    /// One VP sample per tick.
    pub vp: Trajectory,
    /// Offline metrics of the paired part.
    pub report: MetricsReport,
    /// The last streamed metrics.
    pub streamed: Option<LiveMetrics>,
    pub ticks: usize,
    pub drops: usize,
    pub overruns: usize,
    pub fault: Option<FaultInfo>,
    pub events: Vec<(usize, SessionEvent)>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn load_traj(path: &Path, dt: f64) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path)?;
    if text.lines().filter(|l| !l.trim().is_empty()).count() <= 1 {
        return Ok(Trajectory::empty(dt, 0.0)?);
    }
    let tr = sigproc::parse_csv(&text)?;
    // the stored timestamps are derived from the tick period; keep it exact
    Ok(Trajectory::new(dt, tr.t0(), tr.into_samples())?)
}

impl SessionArchive {
    /// Offline recomputation of the streamed metrics from the archived trajectories.
    pub fn recompute(&self) -> Result<LiveMetrics> {
        let start = self.vp.len() - self.hp.len();
        let paired = self.vp.slice(start, self.vp.len());
        let hp_pos = Trajectory::from_positions(self.hp.dt(), self.hp.t0(), &self.hp.positions().collect::<Vec<_>>())?;
        let (rmse, svm, cv) = if self.hp.is_empty() {
            (None, None, None)
        } else {
            (
                Some(waggle_core::metrics::rmse(&self.hp, &paired)?),
                Some(waggle_core::metrics::svm(&paired)),
                live_cv(&hp_pos, &paired),
            )
        };
        let last = self.streamed;
        Ok(LiveMetrics {
            t: self.vp.end_time(),
            rmse,
            cv,
            svm,
            eps: last.and_then(|m| m.eps),
            k: last.map_or(0, |m| m.k),
        })
    }

    /// Writes `hp.csv`, `vp.csv`, `metrics.txt`, `diagnostics.txt`,
    /// `config.txt`, `events.txt` and one `solo_<tick>.csv` per upload.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        sigproc::save_csv(&self.hp, dir.join("hp.csv"))?;
        sigproc::save_csv(&self.vp, dir.join("vp.csv"))?;

        let mut metrics = self.report.to_kv();
        if let Some(m) = &self.streamed {
            metrics.set("streamed.t", m.t);
            for (k, v) in [("rmse", m.rmse), ("cv", m.cv), ("svm", m.svm), ("eps", m.eps)] {
                if let Some(v) = v {
                    metrics.set(&format!("streamed.{k}"), v);
                }
            }
            metrics.set("streamed.k", m.k);
        }
        metrics.save(dir.join("metrics.txt"))?;

        let mut diag = KvRecord::new();
        diag.set("session_id", self.session_id);
        diag.set("ticks", self.ticks);
        diag.set("drops", self.drops);
        diag.set("overruns", self.overruns);
        if let Some(f) = &self.fault {
            diag.set("fault.code", &f.code);
            diag.set("fault.message", &f.message);
            if let Some(t) = f.t {
                diag.set("fault.t", t);
            }
        }
        diag.save(dir.join("diagnostics.txt"))?;
        self.config.to_kv().save(dir.join("config.txt"))?;

        let mut events = String::new();
        for (tick, e) in &self.events {
            match e {
                SessionEvent::SetGains(g) => {
                    let _ = writeln!(events, "{tick} set_gains {} {} {}", g.kp, g.kv, g.ks);
                }
                SessionEvent::SoloUpload(tr) => {
                    let name = format!("solo_{tick}.csv");
                    sigproc::save_csv(tr, dir.join(&name))?;
                    let _ = writeln!(events, "{tick} solo_upload {name}");
                }
            }
        }
        write(&dir.join("events.txt"), &events)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let config = SessionConfig::from_kv(&KvRecord::load(dir.join("config.txt"))?)?;
        let dt = config.dt_tick;
        let hp = load_traj(&dir.join("hp.csv"), dt)?;
        let vp = load_traj(&dir.join("vp.csv"), dt)?;
        let mrec = KvRecord::load(dir.join("metrics.txt"))?;
        let report = MetricsReport::from_kv(&mrec)?;
        let streamed = match mrec.parse_opt::<f64>("streamed.t")? {
            None => None,
            Some(t) => Some(LiveMetrics {
                t,
                rmse: mrec.parse_opt("streamed.rmse")?,
                cv: mrec.parse_opt("streamed.cv")?,
                svm: mrec.parse_opt("streamed.svm")?,
                eps: mrec.parse_opt("streamed.eps")?,
                k: mrec.parse_opt("streamed.k")?.unwrap_or(0),
            }),
        };
        let drec = KvRecord::load(dir.join("diagnostics.txt"))?;
        let fault = match drec.get("fault.code") {
            None => None,
            Some(code) => Some(FaultInfo {
                code: code.to_string(),
                message: drec.get("fault.message").unwrap_or_default().to_string(),
                t: drec.parse_opt("fault.t")?,
            }),
        };
        let mut events = Vec::new();
        for line in std::fs::read_to_string(dir.join("events.txt"))?.lines() {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || ServiceError::Protocol(format!("malformed event line `{line}`"));
            let tick = usize::from_str(f.first().ok_or_else(bad)?).map_err(|_| bad())?;
            let event = match f.get(1..) {
                Some(["set_gains", kp, kv, ks]) => SessionEvent::SetGains(IlcGains {
                    kp: kp.parse().map_err(|_| bad())?,
                    kv: kv.parse().map_err(|_| bad())?,
                    ks: ks.parse().map_err(|_| bad())?,
                }),
                Some(["solo_upload", name]) => SessionEvent::SoloUpload(sigproc::load_csv(dir.join(name))?),
                _ => return Err(bad()),
            };
            events.push((tick, event));
        }
        Ok(Self {
            session_id: drec.require("session_id")?,
            config,
            hp,
            vp,
            report,
            streamed,
            ticks: drec.require("ticks")?,
            drops: drec.require("drops")?,
            overruns: drec.require("overruns")?,
            fault,
            events,
        })
    }

    /// Feeds the archived HP stream and events through a fresh session with
    /// the same config, tick for tick.
    pub fn replay(&self) -> Result<Session> {
        let mut s = Session::open(self.session_id, self.config.clone())?;
        let first = self.ticks - self.hp.len();
        let mut events = self.events.iter().peekable();
        for tick in 0..self.ticks {
            while let Some((_, e)) = events.next_if(|(t, _)| *t == tick) {
                match e {
                    SessionEvent::SetGains(g) => s.set_gains(*g)?,
                    SessionEvent::SoloUpload(tr) => {
                        s.ctl.state.feature = Some(feature_for(&s.cfg, tr.clone())?);
                        s.events.push((tick, e.clone()));
                    }
                }
            }
            if tick >= first {
                let p = self.hp.samples()[tick - first].position;
                s.ingest(tick as f64 * self.config.dt_tick, p[0], p[1])?;
            }
            s.tick()?;
        }
        Ok(s)
    }
}
