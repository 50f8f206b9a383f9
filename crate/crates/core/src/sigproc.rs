//! Human-player signal pipeline: smoothing, velocity estimation, resampling
//! and trajectory CSV persistence.
//!
//! CSV layout is `t,x,y,vx,vy` with `.` radix and `\n` line ends. The velocity
//! columns are optional on read; when absent they are estimated by finite
//! differences.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::trajectory::{PlanarSample, Trajectory};

/// Smoothing window used when none is configured.
pub const DEFAULT_WINDOW: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterMode {
    /// Symmetric window, shrinking symmetrically at the edges. Offline only.
    Centered,
    /// Trailing window; needs no future samples.
    Causal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterSpec {
    pub window: usize,
    pub mode: FilterMode,
}

impl FilterSpec {
    pub fn centered(window: usize) -> Result<Self> {
        let spec = Self {
            window,
            mode: FilterMode::Centered,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn causal(window: usize) -> Result<Self> {
        let spec = Self {
            window,
            mode: FilterMode::Causal,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("filter window must be at least 1".into()));
        }
        if self.mode == FilterMode::Centered && self.window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "centered filter window must be odd, got {}",
                self.window
            )));
        }
        Ok(())
    }
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            mode: FilterMode::Centered,
        }
    }
}

/// Moving average of every channel. Length, `dt` and `t0` are preserved.
pub fn moving_average(series: &Trajectory, spec: &FilterSpec) -> Result<Trajectory> {
    spec.validate()?;
    if series.is_empty() {
        return Err(Error::InsufficientData("cannot filter an empty series".into()));
    }
    let n = series.len();
    let channels: Vec<Vec<f64>> = (0..4).map(|c| series.channel(c)).collect();
    let filtered: Vec<Vec<f64>> = channels
        .iter()
        .map(|ch| match spec.mode {
            FilterMode::Centered => centered_mean(ch, spec.window / 2),
            FilterMode::Causal => causal_mean(ch, spec.window),
        })
        .collect();
    let samples = (0..n)
        .map(|j| {
            PlanarSample::new(
                [filtered[0][j], filtered[1][j]],
                [filtered[2][j], filtered[3][j]],
            )
        })
        .collect();
    Trajectory::new(series.dt(), series.t0(), samples)
}

fn centered_mean(x: &[f64], half: usize) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|j| {
            let r = half.min(j).min(n - 1 - j);
            let w = &x[j - r..=j + r];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

fn causal_mean(x: &[f64], window: usize) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let start = (j + 1).saturating_sub(window);
            let w = &x[start..=j];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// Difference-method velocity: central differences inside, one-sided
/// first-order differences at the two ends. Positions are kept.
pub fn estimate_velocity(positions: &Trajectory) -> Result<Trajectory> {
    let n = positions.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "velocity estimation needs at least 2 samples, got {n}"
        )));
    }
    let dt = positions.dt();
    let p: Vec<[f64; 2]> = positions.positions().collect();
    let diff = |a: [f64; 2], b: [f64; 2], h: f64| [(b[0] - a[0]) / h, (b[1] - a[1]) / h];
    let samples = (0..n)
        .map(|j| {
            let v = if j == 0 {
                diff(p[0], p[1], dt)
            } else if j == n - 1 {
                diff(p[n - 2], p[n - 1], dt)
            } else {
                diff(p[j - 1], p[j + 1], 2.0 * dt)
            };
            PlanarSample::new(p[j], v)
        })
        .collect();
    Trajectory::new(dt, positions.t0(), samples)
}

/// Linear interpolation of the positions onto a grid of period `dt_new`
/// followed by velocity re-estimation. Both endpoints are kept.
pub fn resample(series: &Trajectory, dt_new: f64) -> Result<Trajectory> {
    if !(dt_new.is_finite() && dt_new > 0.0) {
        return Err(Error::Config(format!("resample period must be positive, got {dt_new}")));
    }
    let n = series.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "resampling needs at least 2 samples, got {n}"
        )));
    }
    let span = (n - 1) as f64 * series.dt();
    let count = crate::trajectory::sample_count(span, dt_new);
    // fractional index into the source grid; the ratio keeps dt_new == dt exact
    let ratio = dt_new / series.dt();
    let p: Vec<[f64; 2]> = series.positions().collect();
    let mut out = Vec::with_capacity(count.max(2));
    for i in 0..count {
        let mut s = i as f64 * ratio;
        if (s - (n - 1) as f64).abs() < 1e-9 {
            s = (n - 1) as f64;
        }
        let base = (s.floor() as usize).min(n - 1);
        let frac = s - base as f64;
        let pos = if frac == 0.0 || base == n - 1 {
            p[base]
        } else {
            let (a, b) = (p[base], p[base + 1]);
            [a[0] + frac * (b[0] - a[0]), a[1] + frac * (b[1] - a[1])]
        };
        out.push(PlanarSample::new(pos, [0.0; 2]));
    }
    if out.len() < 2 {
        return Err(Error::InsufficientData(
            "resample period longer than the series span".into(),
        ));
    }
    estimate_velocity(&Trajectory::new(dt_new, series.t0(), out)?)
}

/// Writes `t,x,y,vx,vy` using shortest round-trip decimal formatting.
pub fn save_csv(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(traj, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_csv(traj: &Trajectory, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "t,x,y,vx,vy")?;
    for (j, s) in traj.samples().iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{}",
            traj.time(j),
            s.position[0],
            s.position[1],
            s.velocity[0],
            s.velocity[1]
        )?;
    }
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

/// Parses the trajectory CSV format.
pub fn parse_csv(text: &str) -> Result<Trajectory> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    let has_velocity = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["t", "x", "y", "vx", "vy"] => true,
        ["t", "x", "y"] => false,
        other => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `t,x,y,vx,vy` or `t,x,y`, got `{}`", other.join(",")),
            })
        }
    };
    let width = if has_velocity { 5 } else { 3 };

    let mut times = Vec::new();
    let mut time_text = Vec::new();
    let mut samples = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let mut vals = [0.0f64; 5];
        for (k, field) in record.iter().enumerate() {
            vals[k] = field.parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("field {} `{field}`: {e}", k + 1),
            })?;
            if !vals[k].is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value `{field}`"),
                });
            }
        }
        times.push(vals[0]);
        time_text.push(record[0].to_string());
        samples.push(PlanarSample::new([vals[1], vals[2]], [vals[3], vals[4]]));
    }

    if samples.is_empty() {
        return Err(Error::InsufficientData("trajectory file has no samples".into()));
    }
    let t0 = times[0];
    let dt = if samples.len() == 1 {
        // a single sample carries no period; keep a unit placeholder
        1.0
    } else {
        recover_period(&times, &time_text)?
    };
    let traj = Trajectory::new(dt, t0, samples)?;
    if has_velocity {
        Ok(traj)
    } else {
        estimate_velocity(&traj)
    }
}

/// Recovers the sample period from stored timestamps, preferring a value that
/// regenerates every stored timestamp exactly.
fn recover_period(times: &[f64], text: &[String]) -> Result<f64> {
    let n = times.len();
    let t0 = times[0];
    let estimate = (times[n - 1] - t0) / (n - 1) as f64;
    if !(estimate.is_finite() && estimate > 0.0) {
        return Err(Error::Format("timestamps must be strictly increasing".into()));
    }

    // shortest decimal and whole-rate candidates first, raw differences last
    let rounded = |digits: usize| format!("{estimate:.*e}", digits - 1).parse::<f64>().ok();
    let mut candidates: Vec<f64> = (1..=12).filter_map(rounded).collect();
    let rate = (1.0 / estimate).round();
    if rate > 0.0 {
        candidates.push(1.0 / rate);
    }
    candidates.extend((13..=17).filter_map(rounded));
    candidates.extend([times[1] - t0, estimate]);
    let exact = candidates.into_iter().find(|&dt| {
        dt > 0.0
            && text
                .iter()
                .enumerate()
                .all(|(j, s)| (t0 + j as f64 * dt).to_string() == *s)
    });
    let dt = exact.unwrap_or(estimate);

    for (j, &t) in times.iter().enumerate() {
        let dev = (t - (t0 + j as f64 * dt)).abs() / dt;
        if dev > 1e-9 {
            return Err(Error::Format(format!(
                "non-uniform timestamps: sample {} at t = {t} deviates by {dev:e} periods",
                j + 1
            )));
        }
    }
    Ok(dt)
}

/// Which side of a dyad a recording belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Leader,
    Follower,
    Solo,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Leader => "leader",
            Role::Follower => "follower",
            Role::Solo => "solo",
        }
    }
}

/// A directory of recordings laid out as `<dyad>/<role>/<trial>.csv`.
#[derive(Clone, Debug)]
pub struct Corpus {
    root: PathBuf,
}

impl Corpus {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, dyad: &str, role: Role, trial: &str) -> PathBuf {
        self.root.join(dyad).join(role.as_str()).join(format!("{trial}.csv"))
    }

    pub fn save(&self, dyad: &str, role: Role, trial: &str, traj: &Trajectory) -> Result<PathBuf> {
        let path = self.path(dyad, role, trial);
        save_csv(traj, &path)?;
        Ok(path)
    }

    pub fn load(&self, dyad: &str, role: Role, trial: &str) -> Result<Trajectory> {
        load_csv(self.path(dyad, role, trial))
    }

    /// Trial names under `<dyad>/<role>`, sorted.
    pub fn trials(&self, dyad: &str, role: Role) -> Result<Vec<String>> {
        let dir = self.root.join(dyad).join(role.as_str());
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut names = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let p = entry.path();
            if p.extension().and_then(|e| e.to_str()) == Some("csv") {
                if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                    names.push(stem.to_string());
                }
            }
        }
        names.sort();
        Ok(names)
    }
}
