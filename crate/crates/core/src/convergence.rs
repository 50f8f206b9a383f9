//! Convergence-bound checker for the learning law.
//!
//! Computes the Lipschitz constant of the drift, the time-weighted norms of
//! iteration errors, the contraction constants and the terminal bounds, and
//! checks the Gronwall and contraction inequalities on measured runs.

use std::fmt::Write as _;

use nalgebra::{Matrix2, Matrix2x4};

use crate::controllers::{IlcGains, IlcTrialResult};
use crate::error::{Error, Result};
use crate::hkb::{input_matrix, jacobian, output_matrix, velocity_output_matrix, HkbParams, State4};

/// Which output matrix the constants are computed with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputVariant {
    /// Positions, rows 1 and 3.
    #[default]
    Position,
    /// Velocities, rows 2 and 4.
    Velocity,
}

impl OutputVariant {
    pub fn matrix(&self) -> Matrix2x4<f64> {
        match self {
            Self::Position => output_matrix(),
            Self::Velocity => velocity_output_matrix(),
        }
    }
}

impl std::str::FromStr for OutputVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "position" => Ok(Self::Position),
            "velocity" => Ok(Self::Velocity),
            other => Err(Error::Config(format!("unknown output variant `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundConfig {
    /// Time-weighting rate, 1/s.
    pub lambda: f64,
    /// Horizon, s.
    pub horizon: f64,
    pub output: OutputVariant,
}

impl BoundConfig {
    pub const LAMBDA_SWEEP: [f64; 3] = [0.1, 1.0, 10.0];

    pub fn new(lambda: f64, horizon: f64, output: OutputVariant) -> Result<Self> {
        let cfg = Self {
            lambda,
            horizon,
            output,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        Ok(())
    }
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            horizon: 30.0,
            output: OutputVariant::Position,
        }
    }
}

/// Maximum Frobenius norm of the Jacobian over the given states.
pub fn lipschitz_constant(states: &[State4], xi: &HkbParams) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::Config("empty state envelope".into()));
    }
    states.iter().try_fold(0.0f64, |m, x| Ok(m.max(jacobian(x, xi)?.norm())))
}

/// A box of states plus explicitly visited states.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
    pub states: Vec<State4>,
}

impl Envelope {
    pub const DEFAULT_MARGIN: f64 = 0.1;
    const GRID: usize = 101;

    /// Bounding box of `states` widened by `margin` times its extent per coordinate.
    pub fn from_states(states: Vec<State4>, margin: f64) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Config("empty state envelope".into()));
        }
        let mut lo = [f64::INFINITY; 4];
        let mut hi = [f64::NEG_INFINITY; 4];
        for x in &states {
            for (i, v) in x.as_array().into_iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        for i in 0..4 {
            let pad = margin * (hi[i] - lo[i]);
            lo[i] -= pad;
            hi[i] += pad;
        }
        Ok(Self { lo, hi, states })
    }

    pub fn from_box(lo: [f64; 4], hi: [f64; 4]) -> Result<Self> {
        if (0..4).any(|i| !(lo[i].is_finite() && hi[i].is_finite() && lo[i] <= hi[i])) {
            return Err(Error::Config(format!("invalid state box {lo:?}..{hi:?}")));
        }
        Ok(Self {
            lo,
            hi,
            states: Vec::new(),
        })
    }

    /// Union of two envelopes: the covering box and both state sets.
    pub fn union(mut self, other: &Envelope) -> Self {
        for i in 0..4 {
            self.lo[i] = self.lo[i].min(other.lo[i]);
            self.hi[i] = self.hi[i].max(other.hi[i]);
        }
        self.states.extend_from_slice(&other.states);
        self
    }

    /// Grid maximum over the box together with the visited states.
    ///
    /// The Jacobian is block diagonal per axis, so the squared norm splits
    /// into two terms that are maximized on separate 2-D grids.
    pub fn lipschitz(&self, xi: &HkbParams) -> Result<f64> {
        let origin_half = jacobian(&State4::ZERO, xi)?.norm_squared() / 2.0;
        let axis_max = |i: usize| -> Result<f64> {
            let mut best = 0.0f64;
            for a in 0..Self::GRID {
                for b in 0..Self::GRID {
                    let p = grid_point(self.lo[i], self.hi[i], a, Self::GRID);
                    let v = grid_point(self.lo[i + 1], self.hi[i + 1], b, Self::GRID);
                    let mut x = [0.0; 4];
                    x[i] = p;
                    x[i + 1] = v;
                    let block = jacobian(&State4::from_array(x), xi)?.norm_squared() - origin_half;
                    best = best.max(block);
                }
            }
            Ok(best)
        };
        let grid = (axis_max(0)? + axis_max(2)?).sqrt();
        let visited = if self.states.is_empty() {
            0.0
        } else {
            lipschitz_constant(&self.states, xi)?
        };
        Ok(grid.max(visited))
    }
}

fn grid_point(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    lo + (hi - lo) * i as f64 / (n - 1) as f64
}

/// `max_j e^{-lambda t_j} |s_j|` with `t_j = j dt` and the Frobenius norm per sample.
pub fn lambda_norm<S: AsRef<[f64]>>(series: &[S], lambda: f64, dt: f64) -> f64 {
    series
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let norm = s.as_ref().iter().map(|v| v * v).sum::<f64>().sqrt();
            (-lambda * j as f64 * dt).exp() * norm
        })
        .fold(0.0, f64::max)
}

/// Contraction constants of the convergence argument.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundConstants {
    pub c_h: f64,
    pub lambda: f64,
    pub horizon: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub sigma: f64,
    pub eta: f64,
    /// `|B|^2 e^{(2 C_H + 1) T} / (2 lambda)`, the state-from-input factor.
    pub gronwall: f64,
}

/// Computes the constants; `feature_gap_sq` is `|v - y_h|_lambda^2`.
pub fn sigma_components(
    gains: &IlcGains,
    c_h: f64,
    cfg: &BoundConfig,
    feature_gap_sq: f64,
) -> Result<BoundConstants> {
    cfg.validate()?;
    if !(c_h.is_finite() && c_h >= 0.0) {
        return Err(Error::Config(format!("Lipschitz constant must be finite and non-negative, got {c_h}")));
    }
    let b = input_matrix();
    let c = cfg.output.matrix();
    let b2 = b.norm_squared();
    let c2 = c.norm_squared();
    let growth = ((2.0 * c_h + 1.0) * cfg.horizon).exp();
    let lam = cfg.lambda;

    let sigma1 = 4.0 * (Matrix2::identity() - gains.kv * c * b).norm_squared();
    let sigma2 = b2 * growth * (4.0 * gains.kp.powi(2) * c2 + 4.0 * c_h.powi(2) * gains.kv.powi(2) * c2)
        / (2.0 * lam);
    let sigma3 = 4.0 * c2 * b2 * gains.ks.powi(2) * growth / lam;
    let eta = 8.0 * gains.ks.powi(2) * feature_gap_sq;
    Ok(BoundConstants {
        c_h,
        lambda: lam,
        horizon: cfg.horizon,
        sigma1,
        sigma2,
        sigma3,
        sigma: sigma1 + sigma2 + sigma3,
        eta,
        gronwall: b2 * growth / (2.0 * lam),
    })
}

/// Terminal bounds on `|du|^2_lambda` and `|dx|^2_lambda`; both infinite when `sigma >= 1`.
pub fn terminal_bounds(k: &BoundConstants) -> (f64, f64) {
    if k.sigma.is_nan() || k.sigma >= 1.0 {
        return (f64::INFINITY, f64::INFINITY);
    }
    let u = k.eta / (1.0 - k.sigma);
    (u, k.gronwall * u)
}

/// `|v - y_h|^2_lambda` for a feature and a human trajectory on the same grid.
pub fn feature_gap_sq(v: &[[f64; 2]], y_h: &[[f64; 2]], lambda: f64, dt: f64) -> Result<f64> {
    if v.len() != y_h.len() {
        return Err(Error::Alignment {
            expected: y_h.len(),
            found: v.len(),
        });
    }
    let gap: Vec<[f64; 2]> = v
        .iter()
        .zip(y_h)
        .map(|(a, b)| [a[0] - b[0], a[1] - b[1]])
        .collect();
    Ok(lambda_norm(&gap, lambda, dt).powi(2))
}

/// Measured iteration errors against the known reference input and state.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalContraction {
    pub du_sq: Vec<f64>,
    pub dx_sq: Vec<f64>,
    /// Gronwall right-hand side per iteration.
    pub rhs: Vec<f64>,
    /// Iterations where `dx_sq > slack * rhs`.
    pub gronwall_violations: Vec<usize>,
    /// Iterations `k` where `du_sq[k + 1] > sigma du_sq[k] + eta`.
    pub recursion_violations: Vec<usize>,
}

/// Slack applied to the Gronwall comparison.
pub const GRONWALL_SLACK: f64 = 1.01;

/// Evaluates the Gronwall and contraction inequalities on a trial run.
///
/// `u_h` and `x_h` are the input and state sequences that generated the
/// human trajectory; they only exist for synthetic targets.
pub fn empirical_contraction(
    run: &IlcTrialResult,
    u_h: Option<&[[f64; 2]]>,
    x_h: Option<&[State4]>,
    k: &BoundConstants,
    dt: f64,
) -> Result<EmpiricalContraction> {
    let (u_h, x_h) = match (u_h, x_h) {
        (Some(u), Some(x)) => (u, x),
        _ => {
            return Err(Error::Config(
                "contraction check needs the generating input and state of a synthetic target".into(),
            ))
        }
    };
    let mut out = EmpiricalContraction {
        du_sq: Vec::new(),
        dx_sq: Vec::new(),
        rhs: Vec::new(),
        gronwall_violations: Vec::new(),
        recursion_violations: Vec::new(),
    };
    for (it, (u, x)) in run.controls.iter().zip(&run.states).enumerate() {
        if u.len() != u_h.len() || x.len() != x_h.len() {
            return Err(Error::Alignment {
                expected: u_h.len(),
                found: u.len(),
            });
        }
        let du: Vec<[f64; 2]> = u_h
            .iter()
            .zip(u)
            .map(|(a, b)| [a[0] - b[0], a[1] - b[1]])
            .collect();
        let dx: Vec<[f64; 4]> = x_h
            .iter()
            .zip(x)
            .map(|(a, b)| {
                let (a, b) = (a.as_array(), b.as_array());
                [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
            })
            .collect();
        let du_sq = lambda_norm(&du, k.lambda, dt).powi(2);
        let dx_sq = lambda_norm(&dx, k.lambda, dt).powi(2);
        let rhs = k.gronwall * du_sq;
        if dx_sq > GRONWALL_SLACK * rhs {
            out.gronwall_violations.push(it);
        }
        out.du_sq.push(du_sq);
        out.dx_sq.push(dx_sq);
        out.rhs.push(rhs);
    }
    for it in 1..out.du_sq.len() {
        if out.du_sq[it] > k.sigma * out.du_sq[it - 1] + k.eta {
            out.recursion_violations.push(it - 1);
        }
    }
    Ok(out)
}

/// Constants, terminal bounds and optional measurements for one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub constants: BoundConstants,
    pub contraction_holds: bool,
    pub terminal_u_bound: f64,
    pub terminal_x_bound: f64,
    pub empirical: Option<EmpiricalContraction>,
}

impl BoundReport {
    pub const CSV_HEADER: &'static str = "k,du_lambda_sq,dx_lambda_sq,rhs_bound";

    pub fn new(constants: BoundConstants, empirical: Option<EmpiricalContraction>) -> Self {
        let (u, x) = terminal_bounds(&constants);
        Self {
            contraction_holds: constants.sigma < 1.0,
            terminal_u_bound: u,
            terminal_x_bound: x,
            constants,
            empirical,
        }
    }

    pub fn to_text(&self) -> String {
        let k = &self.constants;
        let mut s = String::new();
        let _ = writeln!(s, "c_h = {}", k.c_h);
        let _ = writeln!(s, "lambda = {}", k.lambda);
        let _ = writeln!(s, "horizon = {}", k.horizon);
        let _ = writeln!(s, "sigma1 = {}", k.sigma1);
        let _ = writeln!(s, "sigma2 = {}", k.sigma2);
        let _ = writeln!(s, "sigma3 = {}", k.sigma3);
        let _ = writeln!(s, "sigma = {}", k.sigma);
        let _ = writeln!(s, "eta = {}", k.eta);
        let _ = writeln!(s, "contraction_holds = {}", self.contraction_holds);
        let _ = writeln!(s, "terminal_u_bound = {}", self.terminal_u_bound);
        let _ = writeln!(s, "terminal_x_bound = {}", self.terminal_x_bound);
        if let Some(e) = &self.empirical {
            let _ = writeln!(s, "iterations = {}", e.du_sq.len());
            let _ = writeln!(s, "gronwall_violations = {}", e.gronwall_violations.len());
            let _ = writeln!(s, "recursion_violations = {}", e.recursion_violations.len());
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        if let Some(e) = &self.empirical {
            for i in 0..e.du_sq.len() {
                let _ = writeln!(s, "{},{},{},{}", i, e.du_sq[i], e.dx_sq[i], e.rhs[i]);
            }
        }
        s
    }
}

/// Reports for each `lambda` in `lambdas`, other settings from `cfg`.
pub fn lambda_sweep(
    gains: &IlcGains,
    c_h: f64,
    cfg: &BoundConfig,
    lambdas: &[f64],
    gap: impl Fn(f64) -> Result<f64>,
) -> Result<Vec<BoundReport>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let c = BoundConfig { lambda, ..*cfg };
            Ok(BoundReport::new(sigma_components(gains, c_h, &c, gap(lambda)?)?, None))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn origin_lipschitz_is_hand_value() {
        let xi = HkbParams::REFERENCE;
        let c = lipschitz_constant(&[State4::ZERO], &xi).unwrap();
        let expect = (2.0 * (1.0 + xi.omega.powi(4) + xi.gamma.powi(2))).sqrt();
        assert!((c - expect).abs() < 1e-15);
        assert!((c - 1.41435).abs() < 2e-4);
        assert!(matches!(lipschitz_constant(&[], &xi), Err(Error::Config(_))));
    }

    #[test]
    fn envelope_grid_matches_brute_force() {
        let xi = HkbParams::new(0.3, 0.7, 0.2, 1.1).unwrap();
        let env = Envelope::from_box([-1.0, -0.5, -0.2, -1.0], [1.0, 0.5, 0.8, 1.0]).unwrap();
        let fast = env.lipschitz(&xi).unwrap();
        // full 4-D scan on a coarser grid that shares the corner points
        let n = 11;
        let mut brute = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let x = [a, b, c, d]
                            .iter()
                            .enumerate()
                            .map(|(i, &k)| grid_point(env.lo[i], env.hi[i], k, n))
                            .collect::<Vec<_>>();
                        let s = State4::new(x[0], x[1], x[2], x[3]);
                        brute = brute.max(jacobian(&s, &xi).unwrap().norm());
                    }
                }
            }
        }
        assert!(fast >= brute - 1e-12);
        assert!(fast <= brute * 1.01);
    }

    #[test]
    fn margin_widens_box() {
        let env = Envelope::from_states(
            vec![State4::new(0.0, 0.0, 0.0, 0.0), State4::new(1.0, 2.0, -1.0, 0.0)],
            0.1,
        )
        .unwrap();
        assert_eq!(env.lo, [-0.1, -0.2, -1.1, 0.0]);
        assert_eq!(env.hi, [1.1, 2.2, 0.1, 0.0]);
    }

    #[test]
    fn lambda_norm_examples() {
        assert_eq!(lambda_norm(&[[3.0, 4.0]; 10], 2.0, 0.1), 5.0);
        let lam = 0.7;
        let dt = 0.05;
        let grow: Vec<[f64; 1]> = (0..100).map(|j| [(lam * j as f64 * dt).exp()]).collect();
        assert!((lambda_norm(&grow, lam, dt) - 1.0).abs() < 1e-12);
        assert_eq!(lambda_norm::<[f64; 2]>(&[], 1.0, 0.1), 0.0);
    }

    #[test]
    fn sigma1_with_position_output_is_eight() {
        for kv in [-3.0, 0.0, 0.01, 0.5, 7.0] {
            let g = IlcGains::new(0.3, kv, 0.02).unwrap();
            let k = sigma_components(&g, 1.4, &BoundConfig::default(), 0.0).unwrap();
            assert_eq!(k.sigma1, 8.0);
        }
    }

    #[test]
    fn sigma1_with_velocity_output() {
        let cfg = BoundConfig {
            output: OutputVariant::Velocity,
            ..BoundConfig::default()
        };
        for kv in [0.0, 0.25, 1.0, 2.0] {
            let g = IlcGains::new(0.3, kv, 0.0).unwrap();
            let k = sigma_components(&g, 1.0, &cfg, 0.0).unwrap();
            assert!((k.sigma1 - 8.0 * (1.0 - kv).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_feature_gain_zeroes_sigma3_and_eta() {
        let g = IlcGains::DYAD1.with_ks(0.0);
        let k = sigma_components(&g, 1.4, &BoundConfig::default(), 3.0).unwrap();
        assert_eq!(k.sigma3, 0.0);
        assert_eq!(k.eta, 0.0);
    }

    #[test]
    fn constants_match_hand_formulas() {
        let g = IlcGains::DYAD4;
        let cfg = BoundConfig::new(2.0, 1.5, OutputVariant::Position).unwrap();
        let c_h = 0.8;
        let k = sigma_components(&g, c_h, &cfg, 0.25).unwrap();
        let growth = ((2.0 * c_h + 1.0) * 1.5f64).exp();
        // |B|^2 = |C|^2 = 2
        let s2 = 2.0 * growth * (4.0 * 0.41f64.powi(2) * 2.0 + 4.0 * c_h * c_h * 0.04f64.powi(2) * 2.0) / 4.0;
        let s3 = 4.0 * 2.0 * 2.0 * 0.03f64.powi(2) * growth / 2.0;
        assert!((k.sigma2 - s2).abs() < 1e-12 * s2);
        assert!((k.sigma3 - s3).abs() < 1e-12 * s3);
        assert!((k.eta - 8.0 * 0.03f64.powi(2) * 0.25).abs() < 1e-15);
        assert!((k.gronwall - 2.0 * growth / 4.0).abs() < 1e-12 * growth);
    }

    fn constants(sigma: f64, eta: f64) -> BoundConstants {
        BoundConstants {
            c_h: 1.0,
            lambda: 1.0,
            horizon: 1.0,
            sigma1: sigma,
            sigma2: 0.0,
            sigma3: 0.0,
            sigma,
            eta,
            gronwall: 1.0,
        }
    }

    #[test]
    fn terminal_bounds_arithmetic() {
        assert_eq!(terminal_bounds(&constants(0.5, 1.0)), (2.0, 2.0));
        assert_eq!(terminal_bounds(&constants(0.3, 0.0)), (0.0, 0.0));
        assert_eq!(terminal_bounds(&constants(1.0, 1.0)), (f64::INFINITY, f64::INFINITY));
        let r = BoundReport::new(constants(8.0, 0.0), None);
        assert!(!r.contraction_holds && r.terminal_u_bound.is_infinite());
        assert!(r.to_text().contains("contraction_holds = false"));
        assert_eq!(r.to_csv(), "k,du_lambda_sq,dx_lambda_sq,rhs_bound\n");
    }

    #[test]
    fn sweep_shrinks_sigma2_with_lambda() {
        let reports = lambda_sweep(
            &IlcGains::DYAD1,
            1.4,
            &BoundConfig { horizon: 2.0, ..BoundConfig::default() },
            &BoundConfig::LAMBDA_SWEEP,
            |_| Ok(0.0),
        )
        .unwrap();
        assert_eq!(reports.len(), 3);
        assert!(reports[0].constants.sigma2 > reports[1].constants.sigma2);
        assert!(reports[1].constants.sigma2 > reports[2].constants.sigma2);
    }

    #[test]
    fn contraction_check_requires_oracle() {
        let run = IlcTrialResult {
            trajectories: vec![],
            states: vec![],
            controls: vec![],
            errors: vec![],
            buffer: crate::controllers::IterationBuffer::zeros(0, 0.1),
        };
        assert!(matches!(
            empirical_contraction(&run, None, None, &constants(0.5, 0.0), 0.1),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn lambda_norm_matches_scan_and_is_monotone(
            series in prop::collection::vec(prop::array::uniform2(-5.0f64..5.0), 1..100),
            bump in prop::collection::vec(0.0f64..1.0, 100),
            lam in 0.01f64..5.0,
        ) {
            let dt = 0.05;
            let mut scan = 0.0f64;
            for (j, s) in series.iter().enumerate() {
                let w = (-lam * (j as f64) * dt).exp();
                scan = scan.max(w * (s[0] * s[0] + s[1] * s[1]).sqrt());
            }
            prop_assert_eq!(lambda_norm(&series, lam, dt), scan);
            // pointwise larger magnitude
            let bigger: Vec<[f64; 2]> = series.iter().zip(&bump)
                .map(|(s, b)| [s[0] * (1.0 + b), s[1] * (1.0 + b)]).collect();
            prop_assert!(lambda_norm(&bigger, lam, dt) >= scan);
            prop_assert!(lambda_norm(&series, lam * 2.0, dt) <= scan);
        }

        #[test]
        fn enlarging_envelope_never_decreases_c_h(
            pts in prop::collection::vec(prop::array::uniform4(-2.0f64..2.0), 1..20),
            extra in prop::array::uniform4(-2.0f64..2.0),
        ) {
            let xi = HkbParams::REFERENCE;
            let states: Vec<State4> = pts.iter().map(|p| State4::from_array(*p)).collect();
            let base = lipschitz_constant(&states, &xi).unwrap();
            let mut more = states.clone();
            more.push(State4::from_array(extra));
            prop_assert!(lipschitz_constant(&more, &xi).unwrap() >= base);
        }
    }
}
