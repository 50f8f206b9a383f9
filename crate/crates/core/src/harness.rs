//! Batch experiments: synthetic leaders, dyad runs against a benchmark pair,
//! aggregation and the error-rate / radar report.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::controllers::{
    ControllerKind, FeatureChannel, FeatureSignal, GainPresets, HpView, IlcGains, OnlineConfig,
    OnlineLoop, OnlineState, OpcConfig,
};
use crate::error::{Error, Result};
use crate::hkb::{HkbParams, Plant, State4};
use crate::kv::KvRecord;
use crate::metrics::{error_rate_vs_benchmark, radar_area, MeanStd, MetricsReport, RadarInput};
use crate::sigproc;
use crate::trajectory::{sample_count, PlanarSample, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub enum LeaderPattern {
    /// Figure-eight `x = A_x sin(2 pi f t)`, `y = A_y sin(4 pi f t)`.
    Lemniscate,
    /// A recorded trajectory file.
    Recorded(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeaderSpec {
    pub pattern: LeaderPattern,
    pub amplitude: [f64; 2],
    /// Hz.
    pub freq: f64,
    pub center: [f64; 2],
    /// Phase offset of the x component in radians; y runs at twice the rate.
    pub phase: f64,
}

impl Default for LeaderSpec {
    fn default() -> Self {
        Self {
            pattern: LeaderPattern::Lemniscate,
            amplitude: [0.6, 0.3],
            freq: 0.2,
            center: [0.0, 0.0],
            phase: 0.0,
        }
    }
}

impl LeaderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.pattern == LeaderPattern::Lemniscate {
            if !self.amplitude.iter().all(|a| a.is_finite() && *a > 0.0) {
                return Err(Error::Config(format!(
                    "lemniscate amplitudes must be positive, got {:?}",
                    self.amplitude
                )));
            }
            if !(self.freq.is_finite() && self.freq > 0.0) {
                return Err(Error::Config(format!("leader frequency must be positive, got {}", self.freq)));
            }
        }
        if !(self.center.iter().all(|c| c.is_finite()) && self.phase.is_finite()) {
            return Err(Error::Config("leader center and phase must be finite".into()));
        }
        Ok(())
    }

    /// Position and velocity at time `t`.
    pub fn sample(&self, t: f64) -> PlanarSample {
        let w = 2.0 * PI * self.freq;
        let (ax, ay) = (self.amplitude[0], self.amplitude[1]);
        let a = w * t + self.phase;
        PlanarSample::new(
            [
                self.center[0] + ax * a.sin(),
                self.center[1] + ay * (2.0 * a).sin(),
            ],
            [ax * w * a.cos(), 2.0 * ay * w * (2.0 * a).cos()],
        )
    }
}

/// The leader trajectory on `[0, horizon]` at period `dt`.
///
/// A recorded leader is resampled to `dt` and holds its last sample when it
/// is shorter than the horizon.
pub fn synth_leader(spec: &LeaderSpec, horizon: f64, dt: f64) -> Result<Trajectory> {
    spec.validate()?;
    let n = sample_count(horizon, dt);
    match &spec.pattern {
        LeaderPattern::Lemniscate => {
            let samples = (0..n).map(|j| spec.sample(j as f64 * dt)).collect();
            Trajectory::new(dt, 0.0, samples)
        }
        LeaderPattern::Recorded(path) => {
            let rec = sigproc::load_csv(path)?;
            let rec = if rec.dt() == dt {
                rec
            } else {
                sigproc::resample(&rec, dt)?
            };
            let last = *rec
                .samples()
                .last()
                .ok_or_else(|| Error::InsufficientData(format!("{} has no samples", path.display())))?;
            let samples = (0..n)
                .map(|j| rec.samples().get(j).copied().unwrap_or(last))
                .collect();
            Trajectory::new(dt, 0.0, samples)
        }
    }
}

/// One dyad experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadConfig {
    pub id: String,
    pub gains: IlcGains,
    pub controller: ControllerKind,
    pub solo_feature: Option<PathBuf>,
    pub feature_channel: FeatureChannel,
    pub leader: LeaderSpec,
    pub trials: usize,
    pub trial_t: f64,
    pub dt: f64,
    pub seed: u64,
    pub hkb: HkbParams,
    pub online: OnlineConfig,
    pub opc: OpcConfig,
    /// Delay of the synthetic benchmark follower behind the leader, s.
    pub benchmark_lag: f64,
}

impl Default for DyadConfig {
    fn default() -> Self {
        Self {
            id: "dyad1".into(),
            gains: IlcGains::DYAD1,
            controller: ControllerKind::Ilc,
            solo_feature: None,
            feature_channel: FeatureChannel::Position,
            leader: LeaderSpec::default(),
            trials: 5,
            trial_t: 30.0,
            dt: 1.0 / 60.0,
            seed: 0,
            hkb: HkbParams::REFERENCE,
            online: OnlineConfig::default(),
            opc: OpcConfig::default(),
            benchmark_lag: 0.1,
        }
    }
}

impl DyadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.trial_t.is_finite() && self.trial_t > 0.0) {
            return Err(Error::Config(format!("trial duration must be positive, got {}", self.trial_t)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.benchmark_lag.is_finite() && self.benchmark_lag >= 0.0) {
            return Err(Error::Config(format!(
                "benchmark lag must be non-negative, got {}",
                self.benchmark_lag
            )));
        }
        self.gains.validate()?;
        self.hkb.validate()?;
        self.online.validate()?;
        self.opc.validate()?;
        self.leader.validate()
    }

    /// Reads a key-value config; relative paths resolve against `base`.
    ///
    /// Gains come from `preset = dyadN` or from `kp`, `kv`, `ks` (which
    /// override the preset field by field).
    pub fn from_kv(rec: &KvRecord, base: &Path) -> Result<Self> {
        let d = Self::default();
        let mut gains = match rec.get("preset") {
            Some(name) => GainPresets::dyads()
                .get(name)
                .ok_or_else(|| Error::Config(format!("unknown gain preset `{name}`")))?,
            None => d.gains,
        };
        gains.kp = rec.parse_opt("kp")?.unwrap_or(gains.kp);
        gains.kv = rec.parse_opt("kv")?.unwrap_or(gains.kv);
        gains.ks = rec.parse_opt("ks")?.unwrap_or(gains.ks);
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let pattern = match rec.get("leader.pattern").unwrap_or("lemniscate") {
            "lemniscate" => LeaderPattern::Lemniscate,
            "recorded" => LeaderPattern::Recorded(resolve(
                rec.get("leader.path")
                    .ok_or_else(|| Error::Config("recorded leader needs `leader.path`".into()))?,
            )),
            other => return Err(Error::Config(format!("unknown leader pattern `{other}`"))),
        };
        let dl = &d.leader;
        let leader = LeaderSpec {
            pattern,
            amplitude: [
                rec.parse_opt("leader.ax")?.unwrap_or(dl.amplitude[0]),
                rec.parse_opt("leader.ay")?.unwrap_or(dl.amplitude[1]),
            ],
            freq: rec.parse_opt("leader.freq")?.unwrap_or(dl.freq),
            center: [
                rec.parse_opt("leader.cx")?.unwrap_or(dl.center[0]),
                rec.parse_opt("leader.cy")?.unwrap_or(dl.center[1]),
            ],
            phase: rec.parse_opt("leader.phase")?.unwrap_or(dl.phase),
        };
        let cfg = Self {
            id: rec.get("id").unwrap_or(&d.id).to_string(),
            gains,
            controller: rec.parse_opt("controller")?.unwrap_or(d.controller),
            solo_feature: rec.get("feature.path").map(resolve),
            feature_channel: rec.parse_opt("feature.channel")?.unwrap_or(d.feature_channel),
            leader,
            trials: rec.parse_opt("trials")?.unwrap_or(d.trials),
            trial_t: rec.parse_opt("trial_t")?.unwrap_or(d.trial_t),
            dt: rec.parse_opt("dt")?.unwrap_or(d.dt),
            seed: rec.parse_opt("seed")?.unwrap_or(d.seed),
            hkb: HkbParams::from_kv(rec)?,
            online: OnlineConfig::from_kv(rec)?,
            opc: OpcConfig::from_kv(rec)?,
            benchmark_lag: rec.parse_opt("benchmark.lag")?.unwrap_or(d.benchmark_lag),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_kv(&KvRecord::load(path)?, base)
    }

    /// The leader of trial `trial`: random phase offset and +-5% amplitude.
    pub fn trial_leader(&self, trial: usize) -> LeaderSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(trial as u64));
        let mut spec = self.leader.clone();
        spec.phase += rng.random_range(0.0..2.0 * PI);
        for a in &mut spec.amplitude {
            *a *= 1.0 + rng.random_range(-0.05..=0.05);
        }
        spec
    }
}

/// A human trajectory the plant can reproduce: the response to a known input.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizableTarget {
    pub u_h: Vec<[f64; 2]>,
    pub states: Vec<State4>,
    pub hp: Trajectory,
}

/// Drives the plant from `x0` with `u_h(t) = (a1 sin(w1 t), a2 sin(w2 t))`.
pub fn realizable_target(
    plant: &Plant,
    x0: &State4,
    amplitude: [f64; 2],
    omega: [f64; 2],
    dt: f64,
    horizon: f64,
) -> Result<RealizableTarget> {
    let n = sample_count(horizon, dt);
    let u_h: Vec<[f64; 2]> = (0..n)
        .map(|j| {
            let t = j as f64 * dt;
            [amplitude[0] * (omega[0] * t).sin(), amplitude[1] * (omega[1] * t).sin()]
        })
        .collect();
    let controls: Vec<_> = u_h.iter().map(|u| crate::ControlInput::from_array(*u)).collect();
    let states = plant.simulate_states(x0, &controls, dt, horizon)?;
    let hp = crate::hkb::states_to_trajectory(&states, dt, 0.0)?;
    Ok(RealizableTarget { u_h, states, hp })
}

/// Artifacts of one successful trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub leader: Trajectory,
    pub vp: Trajectory,
    pub benchmark: Trajectory,
    pub report: MetricsReport,
    pub benchmark_report: MetricsReport,
    /// Ticks whose error rate exceeded the threshold.
    pub exceedances: usize,
}

/// Drives the virtual player with `cfg.controller` against `leader`, one tick per sample.
pub fn run_online_against(cfg: &DyadConfig, leader: &Trajectory) -> Result<(Trajectory, usize)> {
    let n = leader.len();
    let first = leader
        .samples()
        .first()
        .ok_or_else(|| Error::InsufficientData("empty leader".into()))?;
    // the virtual player starts where the human starts
    let x0 = State4::from_planar(first.position, first.velocity);
    let mut state = OnlineState::new(Plant::new(cfg.hkb), leader.dt(), x0)?;
    if let Some(path) = &cfg.solo_feature {
        let solo = sigproc::load_csv(path)?;
        state.feature = Some(FeatureSignal::from_recording(solo, cfg.feature_channel, leader.dt(), n)?);
    }
    let mut lp = OnlineLoop::new(state, cfg.online, cfg.gains, cfg.controller)?.with_opc(cfg.opc)?;
    let mut vp = Vec::with_capacity(n);
    let mut exceed = 0;
    for s in leader.samples() {
        let hp = HpView {
            position: s.position,
            velocity: s.velocity,
        };
        let d = lp.tick(Some(&hp))?;
        if d.eps.is_some_and(|e| e > cfg.online.eps_th) {
            exceed += 1;
        }
        vp.push(d.vp.to_sample());
    }
    Ok((Trajectory::new(leader.dt(), leader.t0(), vp)?, exceed))
}

pub fn run_trial(cfg: &DyadConfig, trial: usize) -> Result<TrialOutcome> {
    let spec = cfg.trial_leader(trial);
    let leader = synth_leader(&spec, cfg.trial_t, cfg.dt)?;
    let benchmark = match spec.pattern {
        LeaderPattern::Lemniscate => {
            let samples = (0..leader.len())
                .map(|j| spec.sample(j as f64 * cfg.dt - cfg.benchmark_lag))
                .collect();
            Trajectory::new(cfg.dt, 0.0, samples)?
        }
        LeaderPattern::Recorded(_) => {
            let lag = (cfg.benchmark_lag / cfg.dt).round() as usize;
            let s = leader.samples();
            Trajectory::new(cfg.dt, 0.0, (0..s.len()).map(|j| s[j.saturating_sub(lag)]).collect())?
        }
    };
    let (vp, exceedances) = run_online_against(cfg, &leader)?;
    Ok(TrialOutcome {
        trial,
        report: MetricsReport::compute(&leader, &vp)?,
        benchmark_report: MetricsReport::compute(&leader, &benchmark)?,
        leader,
        vp,
        benchmark,
        exceedances,
    })
}

/// Mean and standard deviation of each metric.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricStats {
    pub rmse: MeanStd,
    pub cv: MeanStd,
    pub svm: MeanStd,
}

impl MetricStats {
    pub fn of(reports: &[&MetricsReport]) -> Self {
        let col = |f: fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
        Self {
            rmse: col(|r| r.rmse),
            cv: col(|r| r.cv),
            svm: col(|r| r.svm),
        }
    }

    pub fn means(&self) -> [f64; 3] {
        [self.rmse.mean, self.cv.mean, self.svm.mean]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DyadResult {
    pub id: String,
    pub controller: ControllerKind,
    pub attempted: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub failures: Vec<(usize, String)>,
    pub trials: Vec<TrialOutcome>,
    pub stats: MetricStats,
    pub benchmark: MetricStats,
}

/// Runs every trial; failed trials are counted and excluded from the statistics.
pub fn run_dyad(cfg: &DyadConfig) -> Result<DyadResult> {
    cfg.validate()?;
    let results: Vec<Result<TrialOutcome>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t))
        .collect();
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => trials.push(o),
            Err(e @ Error::Divergence { .. }) => {
                log::warn!("{} trial {t} failed: {e}", cfg.id);
                failures.push((t, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    let reports: Vec<&MetricsReport> = trials.iter().map(|t| &t.report).collect();
    let bench: Vec<&MetricsReport> = trials.iter().map(|t| &t.benchmark_report).collect();
    Ok(DyadResult {
        id: cfg.id.clone(),
        controller: cfg.controller,
        attempted: cfg.trials,
        succeeded: trials.len(),
        failed: failures.len(),
        failures,
        stats: MetricStats::of(&reports),
        benchmark: MetricStats::of(&bench),
        trials,
    })
}

/// Per-dyad statistics of the benchmark pair and each strategy.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchmarkTable {
    pub benchmark: BTreeMap<String, MetricStats>,
    /// strategy -> dyad -> stats
    pub strategies: BTreeMap<String, BTreeMap<String, MetricStats>>,
}

impl BenchmarkTable {
    pub fn add(&mut self, r: &DyadResult) {
        self.benchmark.entry(r.id.clone()).or_insert(r.benchmark);
        self.strategies
            .entry(r.controller.to_string())
            .or_default()
            .insert(r.id.clone(), r.stats);
    }

    pub const CSV_HEADER: &'static str =
        "dyad,strategy,rmse_mean,rmse_std,cv_mean,cv_std,svm_mean,svm_std";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        let mut row = |dyad: &str, strat: &str, s: &MetricStats| {
            let _ = writeln!(
                out,
                "{dyad},{strat},{},{},{},{},{},{}",
                s.rmse.mean, s.rmse.std, s.cv.mean, s.cv.std, s.svm.mean, s.svm.std
            );
        };
        for (dyad, s) in &self.benchmark {
            row(dyad, "benchmark", s);
        }
        for (strat, dyads) in &self.strategies {
            for (dyad, s) in dyads {
                row(dyad, strat, s);
            }
        }
        out
    }
}

pub const METRIC_NAMES: [&str; 3] = ["rmse", "cv", "svm"];

/// Error rates indexed by strategy, metric and dyad.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchingReport {
    pub dyads: Vec<String>,
    pub metrics: Vec<String>,
    pub strategies: Vec<String>,
    /// `rates[s][m][d]`, fractions.
    pub rates: Vec<Vec<Vec<f64>>>,
}

impl MatchingReport {
    /// Builds the report from already computed error rates.
    pub fn from_rates(
        dyads: Vec<String>,
        metrics: Vec<String>,
        strategies: Vec<String>,
        rates: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if rates.len() != strategies.len() {
            return Err(Error::Alignment {
                expected: strategies.len(),
                found: rates.len(),
            });
        }
        for per_metric in &rates {
            if per_metric.len() != metrics.len() {
                return Err(Error::Alignment {
                    expected: metrics.len(),
                    found: per_metric.len(),
                });
            }
            for per_dyad in per_metric {
                if per_dyad.len() != dyads.len() {
                    return Err(Error::Alignment {
                        expected: dyads.len(),
                        found: per_dyad.len(),
                    });
                }
            }
        }
        Ok(Self {
            dyads,
            metrics,
            strategies,
            rates,
        })
    }

    /// Error rates of each strategy's per-dyad means against the benchmark means.
    pub fn from_table(table: &BenchmarkTable) -> Result<Self> {
        let dyads: Vec<String> = table.benchmark.keys().cloned().collect();
        let strategies: Vec<String> = table.strategies.keys().cloned().collect();
        let mut rates = Vec::new();
        for strat in &strategies {
            let per = &table.strategies[strat];
            let mut by_metric = vec![Vec::new(); METRIC_NAMES.len()];
            for dyad in &dyads {
                let s = per.get(dyad).ok_or_else(|| {
                    Error::Config(format!("strategy {strat} has no entry for dyad {dyad}"))
                })?;
                let b = table.benchmark[dyad].means();
                for (m, v) in s.means().iter().enumerate() {
                    by_metric[m].push(error_rate_vs_benchmark(*v, b[m])?);
                }
            }
            rates.push(by_metric);
        }
        for (strat, per) in &table.strategies {
            if let Some(d) = per.keys().find(|d| !table.benchmark.contains_key(*d)) {
                return Err(Error::Config(format!("no benchmark entry for dyad {d} ({strat})")));
            }
        }
        Self::from_rates(
            dyads,
            METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
            strategies,
            rates,
        )
    }

    fn index(names: &[String], name: &str) -> Result<usize> {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("unknown entry `{name}`")))
    }

    /// Mean error rate across dyads.
    pub fn strategy_mean(&self, strategy: &str, metric: &str) -> Result<f64> {
        let s = Self::index(&self.strategies, strategy)?;
        let m = Self::index(&self.metrics, metric)?;
        Ok(MeanStd::of(&self.rates[s][m]).mean)
    }

    /// Polygon over dyads for one metric; needs at least 3 dyads.
    pub fn dyad_radar(&self, strategy: &str, metric: &str) -> Result<RadarInput> {
        let s = Self::index(&self.strategies, strategy)?;
        let m = Self::index(&self.metrics, metric)?;
        RadarInput::new(self.dyads.clone(), self.rates[s][m].clone())
    }

    /// Polygon over metrics of the per-metric mean error rates.
    pub fn metric_radar(&self, strategy: &str) -> Result<RadarInput> {
        let radii = self
            .metrics
            .iter()
            .map(|m| self.strategy_mean(strategy, m))
            .collect::<Result<_>>()?;
        RadarInput::new(self.metrics.clone(), radii)
    }

    /// `strategy,metric,dyad,error_rate` rows, then `mean` rows per metric.
    pub fn rates_csv(&self) -> String {
        let mut out = String::from("strategy,metric,dyad,error_rate\n");
        for (s, strat) in self.strategies.iter().enumerate() {
            for (m, metric) in self.metrics.iter().enumerate() {
                for (d, dyad) in self.dyads.iter().enumerate() {
                    let _ = writeln!(out, "{strat},{metric},{dyad},{}", self.rates[s][m][d]);
                }
                let _ = writeln!(out, "{strat},{metric},mean,{}", MeanStd::of(&self.rates[s][m]).mean);
            }
        }
        out
    }

    /// `strategy,polygon,area`; `polygon` is a metric name (over dyads) or `metrics`.
    pub fn radar_csv(&self) -> Result<String> {
        let mut out = String::from("strategy,polygon,area\n");
        for strat in &self.strategies {
            if self.dyads.len() >= 3 {
                for metric in &self.metrics {
                    let a = radar_area(&self.dyad_radar(strat, metric)?)?;
                    let _ = writeln!(out, "{strat},{metric},{a}");
                }
            }
            if self.metrics.len() >= 3 {
                let _ = writeln!(out, "{strat},metrics,{}", radar_area(&self.metric_radar(strat)?)?);
            }
        }
        Ok(out)
    }

    /// Polygon vertices for plotting: `strategy,polygon,axis,x,y`.
    pub fn plot_data(&self) -> Result<String> {
        let mut out = String::from("strategy,polygon,axis,x,y\n");
        let mut emit = |strat: &str, poly: &str, r: &RadarInput| {
            let m = r.radii.len();
            for (i, (label, rad)) in r.labels.iter().zip(&r.radii).enumerate() {
                let a = 2.0 * PI * i as f64 / m as f64;
                let _ = writeln!(out, "{strat},{poly},{label},{},{}", rad * a.cos(), rad * a.sin());
            }
        };
        for strat in &self.strategies {
            if self.dyads.len() >= 3 {
                for metric in &self.metrics {
                    emit(strat, metric, &self.dyad_radar(strat, metric)?);
                }
            }
            if self.metrics.len() >= 3 {
                emit(strat, "metrics", &self.metric_radar(strat)?);
            }
        }
        Ok(out)
    }
}

/// Runs every dyad under every strategy and writes the report files to `dir`.
pub fn run_benchmark(configs: &[DyadConfig], strategies: &[ControllerKind], dir: &Path) -> Result<(BenchmarkTable, MatchingReport)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut table = BenchmarkTable::default();
    let mut trial_rows = String::from("dyad,strategy,trial,rmse,cv,svm,n\n");
    for cfg in configs {
        for &kind in strategies {
            let c = DyadConfig {
                controller: kind,
                ..cfg.clone()
            };
            let r = run_dyad(&c)?;
            for t in &r.trials {
                let _ = writeln!(trial_rows, "{},{},{},{}", r.id, kind, t.trial, t.report.csv_row());
                let tdir = dir.join("trials").join(&r.id).join(kind.as_str());
                std::fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
                sigproc::save_csv(&t.vp, tdir.join(format!("trial{}_vp.csv", t.trial)))?;
                sigproc::save_csv(&t.leader, tdir.join(format!("trial{}_hp.csv", t.trial)))?;
            }
            if r.failed > 0 {
                log::warn!("{} / {kind}: {} of {} trials failed", r.id, r.failed, r.attempted);
            }
            table.add(&r);
        }
    }
    let report = MatchingReport::from_table(&table)?;
    let write = |name: &str, text: &str| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("report.csv", &table.to_csv())?;
    write("trials.csv", &trial_rows)?;
    write("error_rates.csv", &report.rates_csv())?;
    write("radar.csv", &report.radar_csv()?)?;
    write("radar_plot.csv", &report.plot_data()?)?;
    Ok((table, report))
}
