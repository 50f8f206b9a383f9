//! Trial-domain iterative learning control.
//!
//! Each iteration replays the whole trial from the same initial state, then
//! updates the control sequence pointwise on the trial grid:
//!
//! ```text
//! u_k(t) = u_{k-1}(t) + kp e_{k-1}(t) + kv e'_{k-1}(t) + ks s_{k-1}(t)
//! ```
//!
//! with `e = y_h - y`, `e'` the velocity error and `s` the feature mismatch.

use std::io::Write as _;
use std::path::Path;

use super::{FeatureSignal, IlcGains};
use crate::error::{Error, Result};
use crate::hkb::{states_to_trajectory, ControlInput, Plant, State4};
use crate::trajectory::Trajectory;

/// Signals of one iteration, aligned to the trial grid.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationBuffer {
    pub k: usize,
    pub dt: f64,
    pub u: Vec<[f64; 2]>,
    pub e: Vec<[f64; 2]>,
    pub edot: Vec<[f64; 2]>,
    pub s: Vec<[f64; 2]>,
}

impl IterationBuffer {
    /// Iteration-0 buffer: zero control, errors not yet measured.
    pub fn zeros(n: usize, dt: f64) -> Self {
        Self {
            k: 0,
            dt,
            u: vec![[0.0; 2]; n],
            e: vec![[0.0; 2]; n],
            edot: vec![[0.0; 2]; n],
            s: vec![[0.0; 2]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.u.len();
        for series in [&self.e, &self.edot, &self.s] {
            if series.len() != n {
                return Err(Error::Alignment {
                    expected: n,
                    found: series.len(),
                });
            }
        }
        let finite = [&self.u, &self.e, &self.edot, &self.s]
            .iter()
            .all(|s| s.iter().flatten().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidState("non-finite value in iteration buffer".into()));
        }
        Ok(())
    }

    /// One row per grid point: `u1,u2,e1,e2,ed1,ed2,s1,s2`.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("u1,u2,e1,e2,ed1,ed2,s1,s2\n");
        for j in 0..self.len() {
            let (u, e, d, s) = (self.u[j], self.e[j], self.edot[j], self.s[j]);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                u[0], u[1], e[0], e[1], d[0], d[1], s[0], s[1]
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Reads a buffer written by [`save_csv`](Self::save_csv). The iteration
    /// index and period are not part of the file.
    pub fn load_csv(path: impl AsRef<Path>, k: usize, dt: f64) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        match lines.next() {
            Some("u1,u2,e1,e2,ed1,ed2,s1,s2") => {}
            other => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("unexpected header {other:?}"),
                })
            }
        }
        let mut buf = Self::zeros(0, dt);
        buf.k = k;
        for (idx, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: idx + 2,
                    message: e.to_string(),
                })?;
            if vals.len() != 8 {
                return Err(Error::Parse {
                    line: idx + 2,
                    message: format!("expected 8 fields, found {}", vals.len()),
                });
            }
            buf.u.push([vals[0], vals[1]]);
            buf.e.push([vals[2], vals[3]]);
            buf.edot.push([vals[4], vals[5]]);
            buf.s.push([vals[6], vals[7]]);
        }
        buf.validate()?;
        Ok(buf)
    }
}

/// Pointwise ILC update producing `u_k` from the stored iteration `k - 1`.
pub fn ilc_update(prev: &IterationBuffer, gains: &IlcGains) -> Result<Vec<[f64; 2]>> {
    prev.validate()?;
    let IlcGains { kp, kv, ks } = *gains;
    Ok((0..prev.len())
        .map(|j| {
            let (u, e, d, s) = (prev.u[j], prev.e[j], prev.edot[j], prev.s[j]);
            [
                u[0] + kp * e[0] + kv * d[0] + ks * s[0],
                u[1] + kp * e[1] + kv * d[1] + ks * s[1],
            ]
        })
        .collect())
}

/// Everything recorded during a multi-iteration trial. Index `k` of each
/// vector belongs to iteration `k`; iteration 0 is the warm-start run.
#[derive(Clone, Debug)]
pub struct IlcTrialResult {
    pub trajectories: Vec<Trajectory>,
    pub states: Vec<Vec<State4>>,
    pub controls: Vec<Vec<[f64; 2]>>,
    pub errors: Vec<Vec<[f64; 2]>>,
    pub buffer: IterationBuffer,
}

impl IlcTrialResult {
    pub fn iterations(&self) -> usize {
        self.trajectories.len() - 1
    }

    /// RMSE of the position error of each iteration.
    pub fn rmse_per_iteration(&self) -> Vec<f64> {
        self.errors
            .iter()
            .map(|e| {
                let sum: f64 = e.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum();
                (sum / e.len() as f64).sqrt()
            })
            .collect()
    }
}

fn to_controls(u: &[[f64; 2]]) -> Vec<ControlInput> {
    u.iter().map(|&a| ControlInput::from_array(a)).collect()
}

/// Runs `iters` learning iterations against the human trajectory `hp`.
///
/// The grid is `hp`'s grid; every iteration restarts from `x0`. The velocity
/// channels of `hp` must already be populated. `warm_start` replaces the
/// zero iteration-0 control when given.
pub fn run_ilc_trial(
    plant: &Plant,
    x0: &State4,
    hp: &Trajectory,
    feature: Option<&FeatureSignal>,
    gains: &IlcGains,
    iters: usize,
    warm_start: Option<&[[f64; 2]]>,
) -> Result<IlcTrialResult> {
    gains.validate()?;
    let n = hp.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "trial needs at least 2 grid points, got {n}"
        )));
    }
    if let Some(f) = feature {
        if f.len() != n {
            return Err(Error::Alignment {
                expected: n,
                found: f.len(),
            });
        }
    }
    let dt = hp.dt();
    let horizon = (n - 1) as f64 * dt;
    let mut u: Vec<[f64; 2]> = match warm_start {
        Some(w) if w.len() != n => {
            return Err(Error::Alignment {
                expected: n,
                found: w.len(),
            })
        }
        Some(w) => w.to_vec(),
        None => vec![[0.0; 2]; n],
    };

    let mut out = IlcTrialResult {
        trajectories: Vec::with_capacity(iters + 1),
        states: Vec::with_capacity(iters + 1),
        controls: Vec::with_capacity(iters + 1),
        errors: Vec::with_capacity(iters + 1),
        buffer: IterationBuffer::zeros(n, dt),
    };

    for k in 0..=iters {
        let states = plant
            .simulate_states(x0, &to_controls(&u), dt, horizon)
            .map_err(|e| e.at(None, Some(k)))?;
        debug_assert_eq!(states.len(), n);

        let mut buf = IterationBuffer {
            k,
            dt,
            u: u.clone(),
            e: Vec::with_capacity(n),
            edot: Vec::with_capacity(n),
            s: Vec::with_capacity(n),
        };
        for (j, (x, h)) in states.iter().zip(hp.samples()).enumerate() {
            let (p, v) = (x.position(), x.velocity());
            buf.e.push([h.position[0] - p[0], h.position[1] - p[1]]);
            buf.edot.push([h.velocity[0] - v[0], h.velocity[1] - v[1]]);
            buf.s.push(feature.map_or([0.0; 2], |f| f.mismatch(j, p, v)));
        }

        out.trajectories.push(states_to_trajectory(&states, dt, hp.t0())?);
        out.errors.push(buf.e.clone());
        out.controls.push(std::mem::take(&mut u));
        out.states.push(states);

        if k < iters {
            u = ilc_update(&buf, gains).map_err(|e| e.at(None, Some(k + 1)))?;
            if u.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    time: None,
                    iteration: Some(k + 1),
                });
            }
        }
        out.buffer = buf;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{pd_control, FeatureChannel};
    use crate::hkb::HkbParams;
    use crate::trajectory::sample_count;

    fn buffer(n: usize, u: [f64; 2], e: [f64; 2], d: [f64; 2], s: [f64; 2]) -> IterationBuffer {
        IterationBuffer {
            k: 1,
            dt: 0.01,
            u: vec![u; n],
            e: vec![e; n],
            edot: vec![d; n],
            s: vec![s; n],
        }
    }

    #[test]
    fn zero_errors_are_a_fixed_point() {
        let prev = buffer(7, [0.3, -1.2], [0.0; 2], [0.0; 2], [0.0; 2]);
        assert_eq!(ilc_update(&prev, &IlcGains::DYAD2).unwrap(), prev.u);
    }

    #[test]
    fn update_hand_evaluation() {
        let prev = buffer(5, [0.0; 2], [1.0, 0.0], [0.0; 2], [0.0, 1.0]);
        let g = IlcGains::new(0.31, 0.01, 0.02).unwrap();
        for u in ilc_update(&prev, &g).unwrap() {
            assert_eq!(u, [0.31, 0.02]);
        }
    }

    #[test]
    fn first_iteration_is_pd_plus_feature() {
        let g = IlcGains::DYAD4;
        let (e, d, s) = ([0.2, -0.7], [1.1, 0.05], [-0.3, 0.4]);
        let u = ilc_update(&buffer(1, [0.0; 2], e, d, s), &g).unwrap()[0];
        let pd = pd_control(e, d, &g);
        assert_eq!(u, [pd.u1 + g.ks * s[0], pd.u2 + g.ks * s[1]]);
    }

    #[test]
    fn increment_scales_with_operands() {
        let g = IlcGains::DYAD3;
        let base = buffer(3, [0.5, 0.5], [0.1, -0.2], [0.3, 0.4], [0.05, 0.0]);
        let inc = |b: &IterationBuffer| {
            ilc_update(b, &g).unwrap()[0]
                .iter()
                .zip(b.u[0])
                .map(|(a, u)| a - u)
                .collect::<Vec<_>>()
        };
        let c = -2.5;
        let sc = |v: [f64; 2]| [c * v[0], c * v[1]];
        let scaled = buffer(3, [0.5, 0.5], sc(base.e[0]), sc(base.edot[0]), sc(base.s[0]));
        for (a, b) in inc(&scaled).iter().zip(inc(&base)) {
            assert!((a - c * b).abs() < 1e-15);
        }
    }

    #[test]
    fn misaligned_buffer_is_rejected() {
        let mut prev = buffer(4, [0.0; 2], [0.0; 2], [0.0; 2], [0.0; 2]);
        prev.s.pop();
        assert!(matches!(
            ilc_update(&prev, &IlcGains::DYAD1),
            Err(Error::Alignment { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn buffer_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("buf.csv");
        let mut b = buffer(4, [0.1, 0.2], [0.3, 0.4], [0.5, 0.6], [0.7, 0.8]);
        b.u[2] = [1.0 / 3.0, -2.0 / 7.0];
        b.save_csv(&path).unwrap();
        assert_eq!(IterationBuffer::load_csv(&path, 1, 0.01).unwrap(), b);
    }

    fn synthetic_hp(x0: &State4, dt: f64, horizon: f64) -> (Trajectory, Vec<[f64; 2]>) {
        let n = sample_count(horizon, dt);
        let uh: Vec<[f64; 2]> = (0..n)
            .map(|j| {
                let t = j as f64 * dt;
                [0.05 * (0.4 * t).sin(), 0.05 * (0.8 * t).sin()]
            })
            .collect();
        let hp = Plant::new(HkbParams::REFERENCE)
            .simulate(x0, &to_controls(&uh), dt, horizon)
            .unwrap();
        (hp, uh)
    }

    #[test]
    fn zero_iterations_is_open_loop() {
        let x0 = State4::new(0.2, 0.0, -0.1, 0.0);
        let (hp, _) = synthetic_hp(&x0, 0.05, 5.0);
        let plant = Plant::new(HkbParams::REFERENCE);
        let r = run_ilc_trial(&plant, &x0, &hp, None, &IlcGains::DYAD1, 0, None).unwrap();
        assert_eq!(r.iterations(), 0);
        let n = hp.len();
        let open = plant.simulate(&x0, &vec![ControlInput::ZERO; n], 0.05, 5.0).unwrap();
        assert_eq!(r.trajectories[0], open);
        assert!(r.buffer.u.iter().all(|u| *u == [0.0; 2]));
    }

    #[test]
    fn oracle_warm_start_tracks_exactly() {
        let x0 = State4::ZERO;
        let (hp, uh) = synthetic_hp(&x0, 0.05, 10.0);
        let plant = Plant::new(HkbParams::REFERENCE);
        let r = run_ilc_trial(&plant, &x0, &hp, None, &IlcGains::DYAD1, 3, Some(&uh)).unwrap();
        for e in &r.errors {
            assert!(e.iter().all(|v| *v == [0.0; 2]));
        }
        assert!(r.controls.iter().all(|u| *u == uh));
    }

    #[test]
    fn records_every_iteration_and_feature_mismatch() {
        let x0 = State4::ZERO;
        let (hp, _) = synthetic_hp(&x0, 0.05, 4.0);
        let n = hp.len();
        let feature = FeatureSignal::from_grid(vec![[0.1, -0.1]; n], FeatureChannel::Position, 0.05).unwrap();
        let plant = Plant::new(HkbParams::REFERENCE);
        let r = run_ilc_trial(&plant, &x0, &hp, Some(&feature), &IlcGains::DYAD1, 2, None).unwrap();
        assert_eq!(r.trajectories.len(), 3);
        assert_eq!(r.buffer.k, 2);
        // iteration-0 state is the origin, so the mismatch is v itself at t=0
        let r0 = run_ilc_trial(&plant, &x0, &hp, Some(&feature), &IlcGains::DYAD1, 0, None).unwrap();
        assert_eq!(r0.buffer.s[0], [0.1, -0.1]);
        // iteration 1 used u_1 = kp e_0 + kv e'_0 + ks s_0
        let g = IlcGains::DYAD1;
        let expect = ilc_update(&r0.buffer, &g).unwrap();
        assert_eq!(r.controls[1], expect);
    }

    #[test]
    fn misaligned_feature_and_warm_start_rejected() {
        let (hp, _) = synthetic_hp(&State4::ZERO, 0.05, 1.0);
        let plant = Plant::new(HkbParams::REFERENCE);
        let f = FeatureSignal::from_grid(vec![[0.0; 2]; 3], FeatureChannel::Position, 0.05).unwrap();
        assert!(run_ilc_trial(&plant, &State4::ZERO, &hp, Some(&f), &IlcGains::DYAD1, 1, None).is_err());
        assert!(run_ilc_trial(&plant, &State4::ZERO, &hp, None, &IlcGains::DYAD1, 1, Some(&[[0.0; 2]; 2])).is_err());
    }

    #[test]
    fn divergence_reports_iteration() {
        let (hp, _) = synthetic_hp(&State4::ZERO, 0.1, 20.0);
        let plant = Plant::new(HkbParams::new(0.0, 0.0, 0.0, 0.02).unwrap());
        let wild = IlcGains::new(1e150, 0.0, 0.0).unwrap();
        match run_ilc_trial(&plant, &State4::ZERO, &hp, None, &wild, 5, None) {
            Err(Error::Divergence { iteration: Some(k), .. }) => assert!(k >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
