//! Receding-horizon quadratic tracking baseline.
//!
//! The plant is linearized at the current state and discretized exactly under
//! zero-order hold, giving `x+ = A x + B u + c`. A backward Riccati sweep with
//! affine tracking terms yields the first input of the horizon.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, SMatrix, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::hkb::{drift, input_matrix, jacobian, output_matrix, ControlInput, HkbParams, State4};
use crate::kv::KvRecord;

/// Weights and horizon of the tracking baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpcConfig {
    /// Output tracking weight.
    pub q: Matrix2<f64>,
    /// Input effort weight.
    pub r: Matrix2<f64>,
    /// Horizon in steps.
    pub horizon: usize,
}

impl Default for OpcConfig {
    fn default() -> Self {
        Self {
            q: Matrix2::identity(),
            r: Matrix2::identity() * 0.1,
            horizon: 20,
        }
    }
}

impl OpcConfig {
    pub fn diagonal(q: f64, r: f64, horizon: usize) -> Result<Self> {
        let cfg = Self {
            q: Matrix2::identity() * q,
            r: Matrix2::identity() * r,
            horizon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("tracking horizon must be at least one step".into()));
        }
        if self.q.iter().chain(self.r.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite tracking weight".into()));
        }
        if self.r.cholesky().is_none() || (self.r - self.r.transpose()).abs().max() > 0.0 {
            return Err(Error::Config(format!(
                "input weight must be symmetric positive definite, got {:?}",
                self.r.as_slice()
            )));
        }
        let eig = self.q.symmetric_eigenvalues();
        if (self.q - self.q.transpose()).abs().max() > 0.0 || eig.min() < -1e-12 {
            return Err(Error::Config(format!(
                "output weight must be symmetric positive semidefinite, got {:?}",
                self.q.as_slice()
            )));
        }
        Ok(())
    }

    /// Reads `opc.q`, `opc.r` (diagonal values) and `opc.horizon`; missing keys keep defaults.
    pub fn from_kv(rec: &KvRecord) -> Result<Self> {
        let d = Self::default();
        let q = rec.parse_opt::<f64>("opc.q")?.unwrap_or(d.q[(0, 0)]);
        let r = rec.parse_opt::<f64>("opc.r")?.unwrap_or(d.r[(0, 0)]);
        let horizon = rec.parse_opt::<usize>("opc.horizon")?.unwrap_or(d.horizon);
        Self::diagonal(q, r, horizon)
    }
}

/// Exact ZOH discretization of the dynamics linearized at `x_bar`.
///
/// Returns `(A, B, c)` with `x+ = A x + B u + c` for a step of length `dt`.
pub fn discretize_affine(
    x_bar: &State4,
    xi: &HkbParams,
    dt: f64,
) -> Result<(Matrix4<f64>, Matrix4x2<f64>, Vector4<f64>)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {dt}")));
    }
    let j = jacobian(x_bar, xi)?;
    let h = drift(x_bar, xi)?.to_vector() - j * x_bar.to_vector();
    let mut m = SMatrix::<f64, 7, 7>::zeros();
    m.fixed_view_mut::<4, 4>(0, 0).copy_from(&j);
    m.fixed_view_mut::<4, 2>(0, 4).copy_from(&input_matrix());
    m.fixed_view_mut::<4, 1>(0, 6).copy_from(&h);
    let e = (m * dt).exp();
    let a: Matrix4<f64> = e.fixed_view::<4, 4>(0, 0).into_owned();
    let b: Matrix4x2<f64> = e.fixed_view::<4, 2>(0, 4).into_owned();
    let c: Vector4<f64> = e.fixed_view::<4, 1>(0, 6).into_owned();
    if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            time: None,
            iteration: None,
        });
    }
    Ok((a, b, c))
}

/// First input of the finite-horizon tracking problem
///
/// ```text
/// min  sum_{i=1..N} |y_i - r_i|_Q^2 + sum_{i=0..N-1} |u_i|_R^2
/// ```
///
/// on the affine model at `x`. `reference[i]` is the target for `y_{i+1}`;
/// a reference shorter than the horizon holds its last value.
pub fn optimal_tracking_baseline(
    x: &State4,
    xi: &HkbParams,
    reference: &[[f64; 2]],
    dt: f64,
    cfg: &OpcConfig,
) -> Result<ControlInput> {
    cfg.validate()?;
    let last = *reference
        .last()
        .ok_or_else(|| Error::InsufficientData("empty tracking reference".into()))?;
    let (a, b, c) = discretize_affine(x, xi, dt)?;
    let cm: Matrix2x4<f64> = output_matrix();
    let ctqc = cm.transpose() * cfg.q * cm;
    let r_at = |i: usize| -> Vector2<f64> {
        let r = reference.get(i).copied().unwrap_or(last);
        Vector2::new(r[0], r[1])
    };

    let n = cfg.horizon;
    // value function at step N
    let mut p = ctqc;
    let mut pv = -(cm.transpose() * cfg.q * r_at(n - 1));

    let gain = |p: &Matrix4<f64>, pv: &Vector4<f64>| -> Result<(Matrix2<f64>, Vector2<f64>, Matrix2x4<f64>)> {
        let s = cfg.r + b.transpose() * p * b;
        let chol = s.cholesky().ok_or_else(|| {
            Error::Config("tracking recursion is not solvable: input Hessian is not positive definite".into())
        })?;
        let s_inv = chol.inverse();
        let g_aff = b.transpose() * (p * c + pv);
        let g_lin = b.transpose() * p * a;
        Ok((s_inv, g_aff, g_lin))
    };

    for j in (1..n).rev() {
        let (s_inv, g_aff, g_lin) = gain(&p, &pv)?;
        let apb = a.transpose() * p * b;
        let p_next = ctqc + a.transpose() * p * a - apb * s_inv * g_lin;
        let pv_next = -(cm.transpose() * cfg.q * r_at(j - 1)) + a.transpose() * (p * c + pv)
            - apb * s_inv * g_aff;
        p = (p_next + p_next.transpose()) * 0.5;
        pv = pv_next;
    }

    let (s_inv, g_aff, g_lin) = gain(&p, &pv)?;
    let u = -(s_inv * (g_lin * x.to_vector() + g_aff));
    let u = ControlInput::new(u[0], u[1]);
    if !u.is_finite() {
        return Err(Error::Divergence {
            time: None,
            iteration: None,
        });
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector, Matrix2x1};

    const FREE: HkbParams = HkbParams {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
        omega: 1e-9,
    };

    #[test]
    fn discretization_of_double_integrator() {
        let dt = 0.1;
        let (a, b, c) = discretize_affine(&State4::new(0.3, -0.2, 0.1, 0.5), &FREE, dt).unwrap();
        let expect_a = Matrix4::new(
            1.0, dt, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, dt, //
            0.0, 0.0, 0.0, 1.0,
        );
        assert!((a - expect_a).abs().max() < 1e-12);
        assert!((b[(0, 0)] - dt * dt / 2.0).abs() < 1e-14);
        assert!((b[(1, 0)] - dt).abs() < 1e-14);
        assert_eq!(b[(0, 1)], 0.0);
        assert!(c.abs().max() < 1e-12);
    }

    #[test]
    fn discretization_matches_rk4_for_small_steps() {
        let xi = HkbParams::REFERENCE;
        let x = State4::new(0.4, 0.1, -0.3, 0.2);
        let dt = 0.01;
        let (a, b, c) = discretize_affine(&x, &xi, dt).unwrap();
        let u = ControlInput::new(0.2, -0.1);
        let lin = a * x.to_vector() + b * Vector2::new(u.u1, u.u2) + c;
        let rk = crate::hkb::step(&x, &xi, &u, dt).unwrap().to_vector();
        // linearization error is second order in the step
        assert!((lin - rk).abs().max() < 1e-7);
    }

    #[test]
    fn on_reference_with_heavy_effort_weight_is_idle() {
        let cfg = OpcConfig::diagonal(1.0, 1e6, 20).unwrap();
        let x = State4::new(0.5, 0.0, -0.25, 0.0);
        let u = optimal_tracking_baseline(&x, &FREE, &[[0.5, -0.25]], 0.01, &cfg).unwrap();
        assert!(u.norm() < 1e-6, "{u:?}");
    }

    // Per-axis double integrator, lifted to a batch least-squares problem.
    fn batch_first_input(x0: [f64; 2], refs: &[f64], dt: f64, q: f64, r: f64) -> f64 {
        let n = refs.len();
        let a = nalgebra::Matrix2::new(1.0, dt, 0.0, 1.0);
        let b = Matrix2x1::new(dt * dt / 2.0, dt);
        let x0 = nalgebra::Vector2::new(x0[0], x0[1]);
        // y_i = [1 0] (A^i x0 + sum_{l<i} A^{i-1-l} B u_l), i = 1..N
        let mut g = DMatrix::<f64>::zeros(n, n);
        let mut free = DVector::<f64>::zeros(n);
        for i in 1..=n {
            free[i - 1] = (a.pow(i as u32) * x0)[0];
            for l in 0..i {
                g[(i - 1, l)] = (a.pow((i - 1 - l) as u32) * b)[0];
            }
        }
        let rv = DVector::from_column_slice(refs);
        let h = g.transpose() * &g * q + DMatrix::identity(n, n) * r;
        let rhs = g.transpose() * (rv - free) * q;
        h.lu().solve(&rhs).unwrap()[0]
    }

    #[test]
    fn matches_batch_least_squares_on_double_integrator() {
        let dt = 0.05;
        let n = 15;
        let cfg = OpcConfig::diagonal(2.0, 0.3, n).unwrap();
        let x = State4::new(0.1, -0.4, 0.7, 0.2);
        let refs: Vec<[f64; 2]> = (1..=n)
            .map(|i| {
                let t = i as f64 * dt;
                [(2.0 * t).sin(), 0.5 - t]
            })
            .collect();
        let u = optimal_tracking_baseline(&x, &FREE, &refs, dt, &cfg).unwrap();
        let rx: Vec<f64> = refs.iter().map(|r| r[0]).collect();
        let ry: Vec<f64> = refs.iter().map(|r| r[1]).collect();
        let ux = batch_first_input([0.1, -0.4], &rx, dt, 2.0, 0.3);
        let uy = batch_first_input([0.7, 0.2], &ry, dt, 2.0, 0.3);
        assert!((u.u1 - ux).abs() < 1e-8 * ux.abs().max(1.0), "{} vs {ux}", u.u1);
        assert!((u.u2 - uy).abs() < 1e-8 * uy.abs().max(1.0), "{} vs {uy}", u.u2);
    }

    #[test]
    fn horizon_one_is_one_step_least_squares() {
        let xi = HkbParams::REFERENCE;
        let x = State4::new(0.3, 0.2, -0.6, 0.1);
        let dt = 0.02;
        let cfg = OpcConfig {
            q: Matrix2::new(3.0, 0.5, 0.5, 1.0),
            r: Matrix2::new(0.2, 0.0, 0.0, 0.4),
            horizon: 1,
        };
        let target = [0.35, -0.55];
        let u = optimal_tracking_baseline(&x, &xi, &[target], dt, &cfg).unwrap();

        let (a, b, c) = discretize_affine(&x, &xi, dt).unwrap();
        let cm = output_matrix();
        let cb = cm * b;
        let resid = Vector2::new(target[0], target[1]) - cm * (a * x.to_vector() + c);
        let expect = (cb.transpose() * cfg.q * cb + cfg.r)
            .try_inverse()
            .unwrap()
            * cb.transpose()
            * cfg.q
            * resid;
        assert!((u.u1 - expect[0]).abs() < 1e-10);
        assert!((u.u2 - expect[1]).abs() < 1e-10);
    }

    #[test]
    fn indefinite_weights_are_config_errors() {
        let x = State4::ZERO;
        let bad_r = OpcConfig {
            r: Matrix2::new(-1.0, 0.0, 0.0, 1.0),
            ..OpcConfig::default()
        };
        let bad_q = OpcConfig {
            q: Matrix2::new(-1.0, 0.0, 0.0, 1.0),
            ..OpcConfig::default()
        };
        let zero_h = OpcConfig {
            horizon: 0,
            ..OpcConfig::default()
        };
        for cfg in [bad_r, bad_q, zero_h] {
            assert!(matches!(
                optimal_tracking_baseline(&x, &FREE, &[[0.0; 2]], 0.01, &cfg),
                Err(Error::Config(_))
            ));
        }
        assert!(optimal_tracking_baseline(&x, &FREE, &[], 0.01, &OpcConfig::default()).is_err());
    }

    #[test]
    fn config_from_kv() {
        let rec = KvRecord::parse("opc.r = 0.5\nopc.horizon = 7\n").unwrap();
        let cfg = OpcConfig::from_kv(&rec).unwrap();
        assert_eq!(cfg.horizon, 7);
        assert_eq!(cfg.r, Matrix2::identity() * 0.5);
        assert_eq!(cfg.q, Matrix2::identity());
    }
}
