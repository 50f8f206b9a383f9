//! The coupled-HKB coordination model of the virtual player.
//!
//! Each planar axis of the end effector is a forced HKB oscillator
//!
//! ```text
//! z'' + (alpha z'^2 + beta z^2 - gamma) z' + omega^2 z = u
//! ```
//!
//! written in first-order form with state `(x1, x2, x3, x4) = (z1, z1', z2, z2')`.
//! The axes interact only through the control input.

use nalgebra::{Matrix2x4, Matrix4, Matrix4x2, Vector4};

use crate::error::{Error, Result};
use crate::kv::KvRecord;
use crate::trajectory::{sample_count, PlanarSample, Trajectory};

/// Oscillator parameters. Fields are named; the tuple order is never relied on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HkbParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Natural frequency in rad per time unit.
    pub omega: f64,
}

impl HkbParams {
    /// Values used for the waggle-dance experiments.
    pub const REFERENCE: HkbParams = HkbParams {
        alpha: 0.01,
        beta: 0.01,
        gamma: 0.01,
        omega: 0.02,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64, omega: f64) -> Result<Self> {
        let p = HkbParams {
            alpha,
            beta,
            gamma,
            omega,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.omega];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite HKB parameter in {self:?}")));
        }
        if self.omega <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvRecord {
        let mut rec = KvRecord::new();
        rec.set("alpha", self.alpha);
        rec.set("beta", self.beta);
        rec.set("gamma", self.gamma);
        rec.set("omega", self.omega);
        rec
    }

    /// Reads `alpha, beta, gamma, omega`; missing keys fall back to the
    /// reference values.
    pub fn from_kv(rec: &KvRecord) -> Result<Self> {
        let d = Self::REFERENCE;
        Self::new(
            rec.parse_opt("alpha")?.unwrap_or(d.alpha),
            rec.parse_opt("beta")?.unwrap_or(d.beta),
            rec.parse_opt("gamma")?.unwrap_or(d.gamma),
            rec.parse_opt("omega")?.unwrap_or(d.omega),
        )
    }
}

impl Default for HkbParams {
    fn default() -> Self {
        Self::REFERENCE
    }
}

/// Oscillator state `(x-position, x-velocity, y-position, y-velocity)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct State4 {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
}

impl State4 {
    pub const ZERO: State4 = State4 {
        x1: 0.0,
        x2: 0.0,
        x3: 0.0,
        x4: 0.0,
    };

    pub fn new(x1: f64, x2: f64, x3: f64, x4: f64) -> Self {
        Self { x1, x2, x3, x4 }
    }

    pub fn from_planar(position: [f64; 2], velocity: [f64; 2]) -> Self {
        Self::new(position[0], velocity[0], position[1], velocity[1])
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x1, self.x2, self.x3, self.x4]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x1, self.x2, self.x3, self.x4)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x1, self.x3]
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.x2, self.x4]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.as_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_sample(&self) -> PlanarSample {
        PlanarSample::new(self.position(), self.velocity())
    }

    fn check(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidState(format!("non-finite state {self:?}")))
        }
    }
}

/// Forcing on the two velocity equations (acceleration units).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlInput {
    pub u1: f64,
    pub u2: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput { u1: 0.0, u2: 0.0 };

    pub fn new(u1: f64, u2: f64) -> Self {
        Self { u1, u2 }
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.u1, self.u2]
    }

    pub fn is_finite(&self) -> bool {
        self.u1.is_finite() && self.u2.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.u1.hypot(self.u2)
    }

    /// Componentwise clamp to `[-limit, limit]`.
    pub fn saturate(&self, limit: f64) -> Self {
        Self::new(self.u1.clamp(-limit, limit), self.u2.clamp(-limit, limit))
    }
}

/// Input matrix `B`: the control enters the two velocity equations.
pub fn input_matrix() -> Matrix4x2<f64> {
    Matrix4x2::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
}

/// Output matrix `C` selecting the two positions.
pub fn output_matrix() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0)
}

/// Output matrix selecting the two velocities (rows 2 and 4 of the state).
pub fn velocity_output_matrix() -> Matrix2x4<f64> {
    Matrix2x4::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
}

#[inline]
fn axis_accel(p: f64, v: f64, xi: &HkbParams) -> f64 {
    -(xi.alpha * v * v + xi.beta * p * p - xi.gamma) * v - xi.omega * xi.omega * p
}

#[inline]
fn field(x: &[f64; 4], xi: &HkbParams, u: &ControlInput) -> [f64; 4] {
    [
        x[1],
        axis_accel(x[0], x[1], xi) + u.u1,
        x[3],
        axis_accel(x[2], x[3], xi) + u.u2,
    ]
}

/// Unforced vector field `H(x, xi)`.
pub fn drift(x: &State4, xi: &HkbParams) -> Result<State4> {
    x.check()?;
    Ok(State4::from_array(field(&x.as_array(), xi, &ControlInput::ZERO)))
}

/// Analytic Jacobian of [`drift`].
///
/// The damping entry carries `+gamma`, as obtained by differentiating the
/// vector field.
pub fn jacobian(x: &State4, xi: &HkbParams) -> Result<Matrix4<f64>> {
    x.check()?;
    let w2 = xi.omega * xi.omega;
    let block = |p: f64, v: f64| {
        (
            -2.0 * xi.beta * p * v - w2,
            -3.0 * xi.alpha * v * v - xi.beta * p * p + xi.gamma,
        )
    };
    let (a21, a22) = block(x.x1, x.x2);
    let (a43, a44) = block(x.x3, x.x4);
    #[rustfmt::skip]
    let j = Matrix4::new(
        0.0, 1.0, 0.0, 0.0,
        a21, a22, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, a43, a44,
    );
    Ok(j)
}

fn rk4(x: &[f64; 4], xi: &HkbParams, u: &ControlInput, dt: f64) -> [f64; 4] {
    let add = |a: &[f64; 4], k: &[f64; 4], h: f64| {
        [a[0] + h * k[0], a[1] + h * k[1], a[2] + h * k[2], a[3] + h * k[3]]
    };
    let k1 = field(x, xi, u);
    let k2 = field(&add(x, &k1, 0.5 * dt), xi, u);
    let k3 = field(&add(x, &k2, 0.5 * dt), xi, u);
    let k4 = field(&add(x, &k3, dt), xi, u);
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// One classical RK4 step of `x' = H(x) + B u` with `u` held over the step.
pub fn step(x: &State4, xi: &HkbParams, u: &ControlInput, dt: f64) -> Result<State4> {
    x.check()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {dt}")));
    }
    if !u.is_finite() {
        return Err(Error::InvalidState(format!("non-finite control {u:?}")));
    }
    let next = State4::from_array(rk4(&x.as_array(), xi, u, dt));
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::Divergence {
            time: None,
            iteration: None,
        })
    }
}

/// Integrates over `[0, horizon]` and returns every grid state,
/// `sample_count(horizon, dt)` of them. `controls[j]` acts on step `j`.
pub fn simulate_states(
    x0: &State4,
    xi: &HkbParams,
    controls: &[ControlInput],
    dt: f64,
    horizon: f64,
) -> Result<Vec<State4>> {
    Plant::new(*xi).simulate_states(x0, controls, dt, horizon)
}

/// Integrates and packages positions `(x1, x3)` and velocities `(x2, x4)`.
pub fn simulate(
    x0: &State4,
    xi: &HkbParams,
    controls: &[ControlInput],
    dt: f64,
    horizon: f64,
) -> Result<Trajectory> {
    Plant::new(*xi).simulate(x0, controls, dt, horizon)
}

pub fn states_to_trajectory(states: &[State4], dt: f64, t0: f64) -> Result<Trajectory> {
    Trajectory::new(dt, t0, states.iter().map(State4::to_sample).collect())
}

/// The virtual player's plant: parameters plus an optional input limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plant {
    pub params: HkbParams,
    pub u_max: Option<f64>,
}

impl Plant {
    pub fn new(params: HkbParams) -> Self {
        Self {
            params,
            u_max: None,
        }
    }

    pub fn with_saturation(mut self, u_max: f64) -> Self {
        self.u_max = Some(u_max);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        match self.u_max {
            Some(l) if !(l.is_finite() && l >= 0.0) => Err(Error::InvalidParams(format!(
                "saturation limit must be finite and non-negative, got {l}"
            ))),
            _ => Ok(()),
        }
    }

    /// The control actually applied after saturation.
    pub fn applied(&self, u: &ControlInput) -> ControlInput {
        match self.u_max {
            Some(l) => u.saturate(l),
            None => *u,
        }
    }

    pub fn step(&self, x: &State4, u: &ControlInput, dt: f64) -> Result<State4> {
        step(x, &self.params, &self.applied(u), dt)
    }

    pub fn simulate_states(
        &self,
        x0: &State4,
        controls: &[ControlInput],
        dt: f64,
        horizon: f64,
    ) -> Result<Vec<State4>> {
        self.validate()?;
        x0.check()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {dt}")));
        }
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::Config(format!("horizon must be non-negative, got {horizon}")));
        }
        let n = sample_count(horizon, dt);
        if controls.len() < n - 1 {
            return Err(Error::Alignment {
                expected: n - 1,
                found: controls.len(),
            });
        }
        let mut states = Vec::with_capacity(n);
        let mut x = *x0;
        states.push(x);
        for (j, u) in controls.iter().take(n - 1).enumerate() {
            x = self
                .step(&x, u, dt)
                .map_err(|e| e.at(Some((j + 1) as f64 * dt), None))?;
            states.push(x);
        }
        Ok(states)
    }

    pub fn simulate(
        &self,
        x0: &State4,
        controls: &[ControlInput],
        dt: f64,
        horizon: f64,
    ) -> Result<Trajectory> {
        let states = self.simulate_states(x0, controls, dt, horizon)?;
        states_to_trajectory(&states, dt, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const P: HkbParams = HkbParams::REFERENCE;

    #[test]
    fn origin_is_equilibrium() {
        for xi in [P, HkbParams::new(1.0, 2.0, 3.0, 4.0).unwrap()] {
            assert_eq!(drift(&State4::ZERO, &xi).unwrap(), State4::ZERO);
            for dt in [1e-3, 0.01, 0.5, 3.0] {
                let next = step(&State4::ZERO, &xi, &ControlInput::ZERO, dt).unwrap();
                assert_eq!(next, State4::ZERO);
            }
        }
    }

    #[test]
    fn drift_hand_evaluations() {
        let d = drift(&State4::new(1.0, 0.0, 0.0, 0.0), &P).unwrap();
        assert_eq!(d.x1, 0.0);
        assert_relative_eq!(d.x2, -0.0004, epsilon = 1e-18);
        assert_eq!((d.x3, d.x4), (0.0, 0.0));

        let ones = HkbParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let d = drift(&State4::new(0.0, 1.0, 0.0, 0.0), &ones).unwrap();
        assert_eq!(d, State4::new(1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn non_finite_state_is_rejected() {
        let bad = State4::new(f64::NAN, 0.0, 0.0, 0.0);
        assert!(matches!(drift(&bad, &P), Err(Error::InvalidState(_))));
        assert!(matches!(jacobian(&bad, &P), Err(Error::InvalidState(_))));
        let inf = State4::new(0.0, 0.0, f64::INFINITY, 0.0);
        assert!(step(&inf, &P, &ControlInput::ZERO, 0.1).is_err());
    }

    #[test]
    fn params_validate() {
        assert!(HkbParams::new(0.1, 0.1, 0.1, 0.0).is_err());
        assert!(HkbParams::new(0.1, f64::NAN, 0.1, 1.0).is_err());
        assert!(HkbParams::new(-0.1, 0.1, 0.1, 1.0).is_ok());
    }

    #[test]
    fn params_kv_round_trip_is_bit_exact() {
        let xi = HkbParams::new(0.1 + 0.2, 1.0 / 3.0, 1e-300, std::f64::consts::PI).unwrap();
        let back = HkbParams::from_kv(&KvRecord::parse(&xi.to_kv().to_string()).unwrap()).unwrap();
        assert_eq!(back.alpha.to_bits(), xi.alpha.to_bits());
        assert_eq!(back.beta.to_bits(), xi.beta.to_bits());
        assert_eq!(back.gamma.to_bits(), xi.gamma.to_bits());
        assert_eq!(back.omega.to_bits(), xi.omega.to_bits());
    }

    #[test]
    fn jacobian_at_origin() {
        let j = jacobian(&State4::ZERO, &P).unwrap();
        for b in [0, 2] {
            assert_eq!(j[(b, b)], 0.0);
            assert_eq!(j[(b, b + 1)], 1.0);
            assert_relative_eq!(j[(b + 1, b)], -0.0004, epsilon = 1e-18);
            assert_relative_eq!(j[(b + 1, b + 1)], 0.01, epsilon = 1e-18);
        }
    }

    #[test]
    fn jacobian_axes_uncoupled() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x = State4::from_array(std::array::from_fn(|_| rng.random_range(-3.0..3.0)));
            let j = jacobian(&x, &P).unwrap();
            for r in 0..2 {
                for c in 2..4 {
                    assert_eq!(j[(r, c)], 0.0);
                    assert_eq!(j[(c, r)], 0.0);
                }
            }
        }
    }

    fn fd_jacobian(x: &State4, xi: &HkbParams, h: f64) -> Matrix4<f64> {
        let mut j = Matrix4::zeros();
        for c in 0..4 {
            let mut plus = x.as_array();
            let mut minus = x.as_array();
            plus[c] += h;
            minus[c] -= h;
            let fp = drift(&State4::from_array(plus), xi).unwrap().as_array();
            let fm = drift(&State4::from_array(minus), xi).unwrap().as_array();
            for r in 0..4 {
                j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        j
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for xi in [P, HkbParams::new(0.7, 1.3, 0.9, 1.1).unwrap()] {
            for _ in 0..100 {
                let x = State4::from_array(std::array::from_fn(|_| rng.random_range(-2.0..2.0)));
                let exact = jacobian(&x, &xi).unwrap();
                let fd = fd_jacobian(&x, &xi, 1e-5);
                let rel = (exact - fd).norm() / exact.norm();
                assert!(rel < 1e-6, "relative error {rel} at {x:?}");
            }
        }
    }

    #[test]
    fn control_enters_velocity_to_first_order() {
        // Compare one RK4 step against many tiny Euler steps.
        let x0 = State4::new(0.3, -0.1, 0.2, 0.05);
        let u = ControlInput::new(0.7, 0.0);
        let dt = 1e-3;
        let rk = step(&x0, &P, &u, dt).unwrap();
        let free = step(&x0, &P, &ControlInput::ZERO, dt).unwrap();
        assert_relative_eq!(rk.x2 - free.x2, 0.7 * dt, max_relative = 1e-3);

        let mut e = x0.as_array();
        let h = 1e-6;
        for _ in 0..1000 {
            let f = field(&e, &P, &u);
            for i in 0..4 {
                e[i] += h * f[i];
            }
        }
        for (a, b) in rk.as_array().iter().zip(e) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let x0 = State4::new(0.1, 0.0, 0.1, 0.0);
        let horizon = 10.0;
        let run = |dt: f64| {
            let n = sample_count(horizon, dt);
            let u = vec![ControlInput::ZERO; n - 1];
            *simulate_states(&x0, &P, &u, dt, horizon).unwrap().last().unwrap()
        };
        let reference = run(1e-5);
        let err = |dt: f64| (run(dt).to_vector() - reference.to_vector()).norm();
        let (e1, e2) = (err(1.0), err(0.5));
        let order = (e1 / e2).log2();
        assert!((3.5..=4.5).contains(&order), "order {order} ({e1} / {e2})");
    }

    #[test]
    fn simulate_counts_samples() {
        let u = vec![ControlInput::ZERO; 100];
        let tr = simulate(&State4::ZERO, &P, &u, 0.01, 1.0).unwrap();
        assert_eq!(tr.len(), 101);
        assert!(tr.samples().iter().all(|s| *s == PlanarSample::default()));
        assert_eq!(tr.end_time(), 1.0);
    }

    #[test]
    fn simulate_rejects_short_control_series() {
        let u = vec![ControlInput::ZERO; 99];
        let err = simulate(&State4::ZERO, &P, &u, 0.01, 1.0).unwrap_err();
        assert!(matches!(err, Error::Alignment { expected: 100, found: 99 }));
    }

    #[test]
    fn divergence_reports_time() {
        let xi = HkbParams::new(0.0, 0.0, 50.0, 1.0).unwrap();
        let n = sample_count(100.0, 0.1);
        let u = vec![ControlInput::ZERO; n];
        let err = simulate(&State4::new(1.0, 0.0, 0.0, 0.0), &xi, &u, 0.1, 100.0).unwrap_err();
        match err {
            Error::Divergence { time: Some(t), .. } => assert!(t > 0.0 && t <= 100.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn y_axis_stays_zero_under_x_forcing() {
        let n = sample_count(50.0, 0.05);
        let u: Vec<_> = (0..n).map(|j| ControlInput::new((j as f64 * 0.01).sin(), 0.0)).collect();
        let tr = simulate(&State4::new(0.4, 0.1, 0.0, 0.0), &P, &u, 0.05, 50.0).unwrap();
        assert!(tr.samples().iter().all(|s| s.position[1] == 0.0 && s.velocity[1] == 0.0));
        assert!(tr.samples().iter().any(|s| s.position[0] != 0.4));
    }

    #[test]
    fn saturation_clamps_applied_input() {
        let plant = Plant::new(P).with_saturation(0.5);
        assert_eq!(plant.applied(&ControlInput::new(2.0, -3.0)), ControlInput::new(0.5, -0.5));
        assert!(Plant::new(P).with_saturation(-1.0).validate().is_err());
    }
}
