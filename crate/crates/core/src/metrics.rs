//! Coordination metrics: RMSE, circular variance of relative phase, spatial
//! variation of motion, error rates and radar-polygon areas.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kv::KvRecord;
use crate::trajectory::Trajectory;

/// Root-mean-square planar distance between two aligned trajectories.
pub fn rmse(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    a.check_aligned(b)?;
    if a.is_empty() {
        return Err(Error::InsufficientData("rmse of empty trajectories".into()));
    }
    let sum: f64 = a
        .positions()
        .zip(b.positions())
        .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
        .sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Per-axis RMSE, `[x, y]`.
pub fn rmse_axes(a: &Trajectory, b: &Trajectory) -> Result<[f64; 2]> {
    a.check_aligned(b)?;
    if a.is_empty() {
        return Err(Error::InsufficientData("rmse of empty trajectories".into()));
    }
    let mut acc = [0.0; 2];
    for (p, q) in a.positions().zip(b.positions()) {
        acc[0] += (p[0] - q[0]).powi(2);
        acc[1] += (p[1] - q[1]).powi(2);
    }
    let n = a.len() as f64;
    Ok([(acc[0] / n).sqrt(), (acc[1] / n).sqrt()])
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Instantaneous phase of one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSeries {
    pub axis: Axis,
    pub phases: Vec<f64>,
    pub center: f64,
    pub omega_hat: f64,
}

/// Upward zero crossings of `c`, as fractional sample indices.
fn upward_crossings(c: &[f64]) -> Vec<f64> {
    c.windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] < 0.0 && w[1] >= 0.0)
        .map(|(j, w)| j as f64 + w[0] / (w[0] - w[1]))
        .collect()
}

fn axis_phase(traj: &Trajectory, axis: Axis) -> Result<PhaseSeries> {
    let (pc, vc) = match axis {
        Axis::X => (0, 2),
        Axis::Y => (1, 3),
    };
    let p = traj.channel(pc);
    let v = traj.channel(vc);
    if p.is_empty() {
        return Err(Error::InsufficientData("phase of an empty trajectory".into()));
    }
    let center = p.iter().sum::<f64>() / p.len() as f64;
    let centered: Vec<f64> = p.iter().map(|x| x - center).collect();
    let cross = upward_crossings(&centered);
    if cross.len() < 2 {
        return Err(Error::DegenerateMotion(format!(
            "{axis:?} axis has {} upward zero crossings, need at least 2",
            cross.len()
        )));
    }
    if cross.len() < 3 {
        log::warn!("{axis:?} axis covers fewer than two periods; frequency estimate is rough");
    }
    let mean_interval = (cross[cross.len() - 1] - cross[0]) / (cross.len() - 1) as f64 * traj.dt();
    let omega_hat = 2.0 * PI / mean_interval;
    let phases = centered
        .iter()
        .zip(&v)
        .map(|(c, v)| (v / omega_hat).atan2(*c))
        .map(wrap_angle)
        .collect();
    Ok(PhaseSeries {
        axis,
        phases,
        center,
        omega_hat,
    })
}

/// Phase per axis, `[x, y]`.
pub fn estimate_phase(traj: &Trajectory) -> Result<[PhaseSeries; 2]> {
    Ok([axis_phase(traj, Axis::X)?, axis_phase(traj, Axis::Y)?])
}

/// Modulus of the mean unit phasor. Empty input gives 0.
pub fn circular_variance(delta_phi: &[f64]) -> f64 {
    if delta_phi.is_empty() {
        return 0.0;
    }
    let (s, c) = delta_phi
        .iter()
        .fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    let n = delta_phi.len() as f64;
    (s / n).hypot(c / n).min(1.0)
}

/// Cross-axis sum of the per-axis relative phases, wrapped once.
pub fn relative_phase(leader: &Trajectory, follower: &Trajectory) -> Result<Vec<f64>> {
    leader.check_aligned(follower)?;
    let [lx, ly] = estimate_phase(leader)?;
    let [fx, fy] = estimate_phase(follower)?;
    Ok((0..leader.len())
        .map(|j| wrap_angle((lx.phases[j] - fx.phases[j]) + (ly.phases[j] - fy.phases[j])))
        .collect())
}

/// Per-axis maxima of absolute position, `[x, y]`.
pub fn max_abs(traj: &Trajectory) -> [f64; 2] {
    traj.positions().fold([0.0f64; 2], |m, p| {
        [m[0].max(p[0].abs()), m[1].max(p[1].abs())]
    })
}

/// Spatial variation of motion: `max|x| * max|y|`. Empty input gives 0.
pub fn svm(traj: &Trajectory) -> f64 {
    let m = max_abs(traj);
    m[0] * m[1]
}

/// `|value - benchmark| / |benchmark|`.
pub fn error_rate_vs_benchmark(value: f64, benchmark: f64) -> Result<f64> {
    if benchmark == 0.0 || !benchmark.is_finite() {
        return Err(Error::UndefinedBenchmark(format!(
            "benchmark value {benchmark} cannot normalize an error rate"
        )));
    }
    Ok((value - benchmark).abs() / benchmark.abs())
}

/// Radii of a radar chart, one per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct RadarInput {
    pub labels: Vec<String>,
    pub radii: Vec<f64>,
}

impl RadarInput {
    pub fn new(labels: Vec<String>, radii: Vec<f64>) -> Result<Self> {
        let input = Self { labels, radii };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii.len() < 3 {
            return Err(Error::Config(format!(
                "a radar chart needs at least 3 axes, got {}",
                self.radii.len()
            )));
        }
        if self.labels.len() != self.radii.len() {
            return Err(Error::Alignment {
                expected: self.radii.len(),
                found: self.labels.len(),
            });
        }
        if self.radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Config(format!(
                "radar radii must be finite and non-negative: {:?}",
                self.radii
            )));
        }
        Ok(())
    }
}

/// Area of the polygon with vertex `i` at radius `r_i` on equally spaced axes.
pub fn radar_area(input: &RadarInput) -> Result<f64> {
    input.validate()?;
    let m = input.radii.len();
    let sin = (2.0 * PI / m as f64).sin();
    let sum: f64 = (0..m)
        .map(|i| input.radii[i] * input.radii[(i + 1) % m])
        .sum();
    Ok(0.5 * sum * sin)
}

/// Sample mean and (n - 1) standard deviation. One sample has std 0.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let (mut mean, mut m2) = (0.0, 0.0);
        for (i, v) in values.iter().enumerate() {
            let d = v - mean;
            mean += d / (i + 1) as f64;
            m2 += d * (v - mean);
        }
        let n = values.len();
        let std = if n > 1 { (m2 / (n - 1) as f64).sqrt() } else { 0.0 };
        Self { mean, std, n }
    }
}

/// Metrics of one leader/follower pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub rmse: f64,
    pub cv: f64,
    pub svm: f64,
    pub n: usize,
    pub rmse_axes: [f64; 2],
    /// Follower's `max|x|`, `max|y|`.
    pub max_abs: [f64; 2],
    /// False when the relative phase was undefined and `cv` was set to 0.
    pub cv_defined: bool,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "rmse,cv,svm,n";

    pub fn empty() -> Self {
        Self {
            rmse: 0.0,
            cv: 0.0,
            svm: 0.0,
            n: 0,
            rmse_axes: [0.0; 2],
            max_abs: [0.0; 2],
            cv_defined: false,
        }
    }

    /// RMSE and CV compare the pair; SVM describes the follower's motion.
    pub fn compute(leader: &Trajectory, follower: &Trajectory) -> Result<Self> {
        leader.check_aligned(follower)?;
        if leader.is_empty() {
            return Ok(Self::empty());
        }
        let (cv, cv_defined) = match relative_phase(leader, follower) {
            Ok(d) => (circular_variance(&d), true),
            Err(Error::DegenerateMotion(msg)) => {
                log::warn!("relative phase undefined, reporting cv = 0: {msg}");
                (0.0, false)
            }
            Err(e) => return Err(e),
        };
        Ok(Self {
            rmse: rmse(leader, follower)?,
            cv,
            svm: svm(follower),
            n: leader.len(),
            rmse_axes: rmse_axes(leader, follower)?,
            max_abs: max_abs(follower),
            cv_defined,
        })
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.rmse, self.cv, self.svm, self.n)
    }

    pub fn to_kv(&self) -> KvRecord {
        let mut rec = KvRecord::new();
        rec.set("rmse", self.rmse);
        rec.set("cv", self.cv);
        rec.set("svm", self.svm);
        rec.set("n", self.n);
        rec.set("rmse_x", self.rmse_axes[0]);
        rec.set("rmse_y", self.rmse_axes[1]);
        rec.set("max_abs_x", self.max_abs[0]);
        rec.set("max_abs_y", self.max_abs[1]);
        rec.set("cv_defined", self.cv_defined);
        rec
    }

    pub fn from_kv(rec: &KvRecord) -> Result<Self> {
        Ok(Self {
            rmse: rec.require("rmse")?,
            cv: rec.require("cv")?,
            svm: rec.require("svm")?,
            n: rec.require("n")?,
            rmse_axes: [
                rec.parse_opt("rmse_x")?.unwrap_or(0.0),
                rec.parse_opt("rmse_y")?.unwrap_or(0.0),
            ],
            max_abs: [
                rec.parse_opt("max_abs_x")?.unwrap_or(0.0),
                rec.parse_opt("max_abs_y")?.unwrap_or(0.0),
            ],
            cv_defined: rec.parse_opt("cv_defined")?.unwrap_or(true),
        })
    }

    /// CSV table of several reports, one row each.
    pub fn to_csv(reports: &[MetricsReport]) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in reports {
            let _ = writeln!(out, "{}", r.csv_row());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::PlanarSample;
    use proptest::prelude::*;

    fn sine(n: usize, dt: f64, amp: [f64; 2], w: [f64; 2], lag: f64) -> Trajectory {
        let samples = (0..n)
            .map(|j| {
                let t = j as f64 * dt - lag;
                PlanarSample::new(
                    [amp[0] * (w[0] * t).sin(), amp[1] * (w[1] * t).sin()],
                    [amp[0] * w[0] * (w[0] * t).cos(), amp[1] * w[1] * (w[1] * t).cos()],
                )
            })
            .collect();
        Trajectory::new(dt, 0.0, samples).unwrap()
    }

    #[test]
    fn rmse_examples() {
        let a = Trajectory::from_positions(0.1, 0.0, &[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let b = Trajectory::from_positions(0.1, 0.0, &[[3.0, 4.0], [4.0, 5.0]]).unwrap();
        assert_eq!(rmse(&a, &b).unwrap(), 5.0);
        let c = Trajectory::from_positions(0.1, 0.0, &[[0.0, 0.0]]).unwrap();
        assert!(matches!(rmse(&a, &c), Err(Error::Alignment { .. })));
    }

    #[test]
    fn phase_of_sinusoid() {
        let w = 2.0 * PI * 0.5;
        let dt = 0.01;
        let tr = sine(2001, dt, [0.7, 0.3], [w, 2.0 * w], 0.0);
        let [px, py] = estimate_phase(&tr).unwrap();
        assert!((px.omega_hat - w).abs() / w < 0.01);
        assert!((py.omega_hat - 2.0 * w).abs() / (2.0 * w) < 0.01);
        // atan2(cos, sin): the angle runs backwards from pi/2 at rate w
        for j in (0..2001).step_by(97) {
            let expect = wrap_angle(PI / 2.0 - w * j as f64 * dt);
            let d = wrap_angle(px.phases[j] - expect);
            assert!(d.abs() < 0.02, "j={j} d={d}");
        }
        assert!(px.phases.iter().all(|p| p.abs() <= PI));
    }

    #[test]
    fn constant_motion_is_degenerate() {
        let tr = Trajectory::from_positions(0.1, 0.0, &[[0.2, 0.3]; 50]).unwrap();
        assert!(matches!(estimate_phase(&tr), Err(Error::DegenerateMotion(_))));
    }

    #[test]
    fn phase_is_scale_invariant() {
        let w = 1.3;
        let tr = sine(800, 0.02, [0.5, 0.5], [w, 2.0 * w], 0.0);
        let scaled = Trajectory::new(
            0.02,
            0.0,
            tr.samples()
                .iter()
                .map(|s| {
                    PlanarSample::new(
                        [3.0 * s.position[0], 3.0 * s.position[1]],
                        [3.0 * s.velocity[0], 3.0 * s.velocity[1]],
                    )
                })
                .collect(),
        )
        .unwrap();
        let (a, b) = (estimate_phase(&tr).unwrap(), estimate_phase(&scaled).unwrap());
        for (p, q) in a[0].phases.iter().zip(&b[0].phases) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn cv_boundaries() {
        assert_eq!(circular_variance(&[0.7; 10]), 1.0);
        let n = 360;
        let spread: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
        assert!(circular_variance(&spread) < 1e-12);
    }

    #[test]
    fn relative_phase_oracles() {
        let w = 2.0 * PI * 0.4;
        let lead = sine(3000, 0.01, [0.6, 0.3], [w, 2.0 * w], 0.0);
        let d = relative_phase(&lead, &lead).unwrap();
        assert!(d.iter().all(|v| *v == 0.0));
        assert_eq!(circular_variance(&d), 1.0);

        let quarter = 0.25 / 0.4;
        let lag = sine(3000, 0.01, [0.6, 0.3], [w, 2.0 * w], quarter);
        assert!(circular_variance(&relative_phase(&lead, &lag).unwrap()) > 0.99);

        let other = sine(3000, 0.01, [0.6, 0.3], [w * 1.37, 2.0 * w * 1.61], 0.0);
        assert!(circular_variance(&relative_phase(&lead, &other).unwrap()) < 0.2);
    }

    #[test]
    fn svm_examples() {
        assert_eq!(svm(&Trajectory::from_positions(0.1, 0.0, &[[0.0; 2]; 4]).unwrap()), 0.0);
        let tr = Trajectory::from_positions(0.1, 0.0, &[[2.0, 0.1], [-1.0, -0.5]]).unwrap();
        assert_eq!(svm(&tr), 1.0);
    }

    #[test]
    fn benchmark_error_rates() {
        assert_eq!(error_rate_vs_benchmark(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(error_rate_vs_benchmark(2.0, 1.0).unwrap(), 1.0);
        assert!(matches!(
            error_rate_vs_benchmark(1.0, 0.0),
            Err(Error::UndefinedBenchmark(_))
        ));
    }

    fn radar(r: &[f64]) -> RadarInput {
        RadarInput::new((0..r.len()).map(|i| format!("a{i}")).collect(), r.to_vec()).unwrap()
    }

    #[test]
    fn radar_examples() {
        assert_eq!(radar_area(&radar(&[0.0; 5])).unwrap(), 0.0);
        let tri = radar_area(&radar(&[1.0; 3])).unwrap();
        assert!((tri - 3.0 * 3f64.sqrt() / 4.0).abs() < 1e-15);
        assert!(RadarInput::new(vec!["a".into(), "b".into()], vec![1.0, 1.0]).is_err());
        assert!(RadarInput::new(vec!["a".into(); 3], vec![1.0, -1.0, 1.0]).is_err());
    }

    #[test]
    fn mean_std_matches_two_pass() {
        let v = [0.17, 0.175, 0.165, 0.18, 0.16];
        let m = MeanStd::of(&v);
        let mean = v.iter().sum::<f64>() / 5.0;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((m.mean - mean).abs() < 1e-15);
        assert!((m.std - var.sqrt()).abs() < 1e-15);
        assert_eq!(MeanStd::of(&[3.0]).std, 0.0);
    }

    #[test]
    fn report_kv_round_trip_and_empty() {
        let w = 2.0;
        let a = sine(1000, 0.01, [0.5, 0.4], [w, 2.0 * w], 0.0);
        let b = sine(1000, 0.01, [0.45, 0.4], [w, 2.0 * w], 0.1);
        let r = MetricsReport::compute(&a, &b).unwrap();
        assert!(r.cv_defined && r.cv <= 1.0 && r.rmse > 0.0);
        assert_eq!(MetricsReport::from_kv(&r.to_kv()).unwrap(), r);
        let e = Trajectory::empty(0.01, 0.0).unwrap();
        let empty = MetricsReport::compute(&e, &e).unwrap();
        assert_eq!(empty.n, 0);
        assert!(MetricsReport::to_csv(&[empty]).starts_with("rmse,cv,svm,n\n"));
    }

    #[test]
    fn degenerate_follower_reports_zero_cv() {
        let a = sine(500, 0.01, [0.5, 0.4], [3.0, 6.0], 0.0);
        let b = Trajectory::from_positions(0.01, 0.0, &vec![[0.1, 0.1]; 500]).unwrap();
        let r = MetricsReport::compute(&a, &b).unwrap();
        assert_eq!(r.cv, 0.0);
        assert!(!r.cv_defined);
    }

    proptest! {
        #[test]
        fn cv_in_unit_interval_and_shift_invariant(
            phases in prop::collection::vec(-10.0f64..10.0, 1..200),
            shift in -10.0f64..10.0,
        ) {
            let cv = circular_variance(&phases);
            prop_assert!((0.0..=1.0).contains(&cv));
            let shifted: Vec<f64> = phases.iter().map(|p| p + shift).collect();
            prop_assert!((circular_variance(&shifted) - cv).abs() < 1e-12);
        }

        #[test]
        fn radar_rotation_and_reversal_invariant(
            radii in prop::collection::vec(0.0f64..2.0, 3..10),
            rot in 0usize..10,
        ) {
            let base = radar_area(&radar(&radii)).unwrap();
            let mut r = radii.clone();
            r.rotate_left(rot % radii.len());
            prop_assert!((radar_area(&radar(&r)).unwrap() - base).abs() < 1e-12);
            r.reverse();
            prop_assert!((radar_area(&radar(&r)).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn rmse_is_a_metric(
            pts in prop::collection::vec(prop::array::uniform6(-1.0f64..1.0), 1..50),
        ) {
            let mk = |o: usize| Trajectory::from_positions(
                0.1, 0.0, &pts.iter().map(|p| [p[o], p[o + 1]]).collect::<Vec<_>>()).unwrap();
            let (a, b, c) = (mk(0), mk(2), mk(4));
            let ab = rmse(&a, &b).unwrap();
            prop_assert!((ab - rmse(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!(rmse(&a, &c).unwrap() <= ab + rmse(&b, &c).unwrap() + 1e-12);
        }

        #[test]
        fn svm_homogeneous(
            pts in prop::collection::vec(prop::array::uniform2(-1.0f64..1.0), 1..50),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let tr = Trajectory::from_positions(0.1, 0.0, &pts).unwrap();
            let sc: Vec<[f64; 2]> = pts.iter().map(|p| [a * p[0], b * p[1]]).collect();
            let ts = Trajectory::from_positions(0.1, 0.0, &sc).unwrap();
            prop_assert!((svm(&ts) - (a * b).abs() * svm(&tr)).abs() < 1e-12);
        }
    }
}
