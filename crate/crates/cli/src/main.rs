use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use waggle_core::controllers::{run_ilc_trial, ControllerKind, GainPresets, IlcGains};
use waggle_core::convergence::{
    empirical_contraction, feature_gap_sq, sigma_components, BoundConfig, BoundReport, Envelope, OutputVariant,
};
use waggle_core::harness::{realizable_target, run_benchmark, DyadConfig};
use waggle_core::kv::KvRecord;
use waggle_core::metrics::MetricsReport;
use waggle_core::{sigproc, ControlInput, HkbParams, Plant, State4};
use waggle_service::server::{serve_tcp, serve_ws, Hub};

#[derive(Parser, Debug)]
#[command(name = "waggle", version, about = "Virtual player for the 2-D mirror game")]
struct Cli {
    /// Root of the output tree.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Output subdirectory; defaults to `<command>-<unix seconds>`.
    #[arg(long, global = true)]
    run_id: Option<String>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Unforced (or constant-input) plant run.
    Simulate(SimulateArgs),
    /// Batch learning iterations against a recorded or synthetic target.
    Ilc(IlcArgs),
    /// RMSE, CV and SVM of a follower against a leader.
    Metrics(MetricsArgs),
    /// Convergence constants, optionally checked against a learning run.
    Bounds(BoundsArgs),
    /// Dyad benchmark over strategies, with error-rate and radar tables.
    Bench(BenchArgs),
    /// Session server.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct PlantArgs {
    /// Key-value file with `alpha`, `beta`, `gamma`, `omega`.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Initial state `x,vx,y,vy`.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.0, 0.1, 0.0])]
    x0: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Duration, s.
    #[arg(long, default_value_t = 30.0)]
    horizon: f64,
}

impl PlantArgs {
    fn params(&self) -> Result<HkbParams> {
        Ok(match &self.params {
            Some(p) => HkbParams::from_kv(&KvRecord::load(p)?)?,
            None => HkbParams::REFERENCE,
        })
    }

    fn x0(&self) -> Result<State4> {
        let [a, b, c, d] = fixed::<4>("x0", &self.x0)?;
        Ok(State4::new(a, b, c, d))
    }
}

#[derive(Args, Debug)]
struct GainArgs {
    /// `dyad1` .. `dyad4`.
    #[arg(long, default_value = "dyad1")]
    preset: String,
    #[arg(long)]
    kp: Option<f64>,
    #[arg(long)]
    kv: Option<f64>,
    #[arg(long)]
    ks: Option<f64>,
}

impl GainArgs {
    fn gains(&self) -> Result<IlcGains> {
        let g = GainPresets::dyads()
            .get(&self.preset)
            .with_context(|| format!("unknown gain preset `{}`", self.preset))?;
        Ok(IlcGains::new(
            self.kp.unwrap_or(g.kp),
            self.kv.unwrap_or(g.kv),
            self.ks.unwrap_or(g.ks),
        )?)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    plant: PlantArgs,
    /// Constant input `u1,u2`.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0])]
    u: Vec<f64>,
}

#[derive(Args, Debug)]
struct TargetArgs {
    /// Human trajectory CSV; without it the target is the plant's response to a known input.
    #[arg(long)]
    hp: Option<PathBuf>,
    /// Amplitudes of the synthetic input.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.05])]
    target_amp: Vec<f64>,
    /// Angular frequencies of the synthetic input, rad/s.
    #[arg(long, value_delimiter = ',', default_values_t = [0.4, 0.8])]
    target_omega: Vec<f64>,
}

#[derive(Args, Debug)]
struct IlcArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[command(flatten)]
    gains: GainArgs,
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, default_value_t = 20)]
    iters: usize,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    leader: PathBuf,
    #[arg(long)]
    follower: PathBuf,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[command(flatten)]
    gains: GainArgs,
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, value_delimiter = ',', default_values_t = BoundConfig::LAMBDA_SWEEP)]
    lambda: Vec<f64>,
    /// `position` or `velocity`.
    #[arg(long, default_value = "position")]
    output: OutputVariant,
    /// Learning iterations checked against the inequalities; 0 skips the run.
    #[arg(long, default_value_t = 20)]
    iters: usize,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Dyad config files; defaults to the four gain presets.
    #[arg(long = "config")]
    configs: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = ControllerKind::ALL)]
    strategies: Vec<ControllerKind>,
    /// Overrides the trial count of every dyad.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// Line-delimited JSON over TCP.
    #[arg(long, default_value = "127.0.0.1:7878")]
    tcp: String,
    /// WebSocket endpoint at `/ws`.
    #[arg(long)]
    ws: Option<String>,
}

fn run_dir(cli: &Cli, name: &str) -> Result<PathBuf> {
    let id = match &cli.run_id {
        Some(id) => id.clone(),
        None => format!("{name}-{}", SystemTime::now().duration_since(UNIX_EPOCH)?.as_secs()),
    };
    let dir = cli.out.join(id);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn fixed<const N: usize>(name: &str, v: &[f64]) -> Result<[f64; N]> {
    v.try_into()
        .map_err(|_| anyhow::anyhow!("--{name} takes {N} comma-separated values, got {}", v.len()))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
}

/// Human trajectory plus the input and states that generated it, when known.
type Target = (waggle_core::Trajectory, Option<Vec<[f64; 2]>>, Option<Vec<State4>>);

fn load_target(plant: &Plant, args: &PlantArgs, target: &TargetArgs) -> Result<Target> {
    match &target.hp {
        Some(p) => {
            let hp = sigproc::load_csv(p)?;
            let hp = sigproc::resample(&hp, args.dt)?;
            Ok((hp, None, None))
        }
        None => {
            let t = realizable_target(
                plant,
                &args.x0()?,
                fixed("target-amp", &target.target_amp)?,
                fixed("target-omega", &target.target_omega)?,
                args.dt,
                args.horizon,
            )?;
            Ok((t.hp, Some(t.u_h), Some(t.states)))
        }
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let plant = Plant::new(a.plant.params()?);
    let n = waggle_core::trajectory::sample_count(a.plant.horizon, a.plant.dt);
    let u = vec![ControlInput::from_array(fixed("u", &a.u)?); n];
    let tr = plant.simulate(&a.plant.x0()?, &u, a.plant.dt, a.plant.horizon)?;
    let dir = run_dir(cli, "simulate")?;
    sigproc::save_csv(&tr, dir.join("trajectory.csv"))?;
    plant.params.to_kv().save(dir.join("params.txt"))?;
    println!("{} samples written to {}", tr.len(), dir.display());
    Ok(())
}

fn ilc(cli: &Cli, a: &IlcArgs) -> Result<()> {
    let plant = Plant::new(a.plant.params()?);
    let gains = a.gains.gains()?;
    let (hp, _, _) = load_target(&plant, &a.plant, &a.target)?;
    let r = run_ilc_trial(&plant, &a.plant.x0()?, &hp, None, &gains, a.iters, None)?;
    let dir = run_dir(cli, "ilc")?;
    let mut csv = String::from("iteration,rmse\n");
    for (k, e) in r.rmse_per_iteration().iter().enumerate() {
        csv.push_str(&format!("{k},{e}\n"));
        println!("iteration {k:>3}  rmse {e:.6}");
    }
    write(&dir, "rmse.csv", &csv)?;
    sigproc::save_csv(&hp, dir.join("hp.csv"))?;
    if let Some(last) = r.trajectories.last() {
        sigproc::save_csv(last, dir.join("vp.csv"))?;
    }
    r.buffer.save_csv(dir.join("buffer.csv"))?;
    Ok(())
}

fn metrics(cli: &Cli, a: &MetricsArgs) -> Result<()> {
    let leader = sigproc::load_csv(&a.leader)?;
    let follower = sigproc::load_csv(&a.follower)?;
    let leader = if leader.samples().iter().all(|s| s.velocity == [0.0; 2]) && leader.len() >= 2 {
        sigproc::estimate_velocity(&leader)?
    } else {
        leader
    };
    let report = MetricsReport::compute(&leader, &follower)?;
    let dir = run_dir(cli, "metrics")?;
    report.to_kv().save(dir.join("metrics.txt"))?;
    write(&dir, "metrics.csv", &MetricsReport::to_csv(std::slice::from_ref(&report)))?;
    println!("rmse {}  cv {}  svm {}  n {}", report.rmse, report.cv, report.svm, report.n);
    Ok(())
}

fn bounds(cli: &Cli, a: &BoundsArgs) -> Result<()> {
    let plant = Plant::new(a.plant.params()?);
    let gains = a.gains.gains()?;
    let (hp, u_h, x_h) = load_target(&plant, &a.plant, &a.target)?;
    let dt = hp.dt();
    let horizon = hp.end_time() - hp.t0();
    let run = if a.iters > 0 {
        Some(run_ilc_trial(&plant, &a.plant.x0()?, &hp, None, &gains, a.iters, None)?)
    } else {
        None
    };
    let mut visited: Vec<State4> = hp
        .samples()
        .iter()
        .map(|s| State4::from_planar(s.position, s.velocity))
        .collect();
    if let Some(r) = &run {
        visited.extend(r.states.iter().flatten().copied());
    }
    let c_h = Envelope::from_states(visited, Envelope::DEFAULT_MARGIN)?.lipschitz(&plant.params)?;
    // without a solo feature the prescribed signal is zero
    let y_h: Vec<[f64; 2]> = hp.positions().collect();
    let zero = vec![[0.0; 2]; y_h.len()];

    let dir = run_dir(cli, "bounds")?;
    let mut summary = String::new();
    for &lambda in &a.lambda {
        let cfg = BoundConfig::new(lambda, horizon, a.output)?;
        let k = sigma_components(&gains, c_h, &cfg, feature_gap_sq(&zero, &y_h, lambda, dt)?)?;
        let empirical = match (&run, &u_h, &x_h) {
            (Some(r), Some(u), Some(x)) => Some(empirical_contraction(r, Some(u), Some(x), &k, dt)?),
            _ => None,
        };
        let report = BoundReport::new(k, empirical);
        write(&dir, &format!("bounds_lambda{lambda}.txt"), &report.to_text())?;
        if lambda == a.lambda[0] {
            write(&dir, "bounds.csv", &report.to_csv())?;
        }
        summary.push_str(&format!(
            "lambda {lambda}: sigma {} (sigma1 {}, sigma2 {}, sigma3 {}), contraction {}\n",
            report.constants.sigma,
            report.constants.sigma1,
            report.constants.sigma2,
            report.constants.sigma3,
            report.contraction_holds
        ));
    }
    print!("{summary}");
    write(&dir, "summary.txt", &summary)
}

fn bench(cli: &Cli, a: &BenchArgs) -> Result<()> {
    let mut configs = if a.configs.is_empty() {
        (1..=4)
            .map(|d| DyadConfig {
                id: format!("dyad{d}"),
                gains: IlcGains::preset(d).expect("presets 1..=4 exist"),
                seed: d as u64,
                ..DyadConfig::default()
            })
            .collect()
    } else {
        a.configs.iter().map(DyadConfig::load).collect::<waggle_core::Result<Vec<_>>>()?
    };
    if let Some(t) = a.trials {
        if t == 0 {
            bail!("--trials must be at least 1");
        }
        for c in &mut configs {
            c.trials = t;
        }
    }
    let dir = run_dir(cli, "bench")?;
    let (_, report) = run_benchmark(&configs, &a.strategies, &dir)?;
    for s in &report.strategies {
        let means: Vec<String> = report
            .metrics
            .iter()
            .map(|m| Ok(format!("{m} {:.2}%", 100.0 * report.strategy_mean(s, m)?)))
            .collect::<waggle_core::Result<_>>()?;
        println!("{s}: {}", means.join(", "));
    }
    println!("reports in {}", dir.display());
    Ok(())
}

async fn serve(cli: &Cli, a: &ServeArgs) -> Result<()> {
    let dir = run_dir(cli, "serve")?;
    let hub = Hub::new(Some(dir.join("sessions")));
    let tcp = tokio::net::TcpListener::bind(&a.tcp).await?;
    log::info!("tcp sessions on {}", tcp.local_addr()?);
    let tcp_task = tokio::spawn(serve_tcp(tcp, hub.clone()));
    match &a.ws {
        Some(addr) => {
            let ws = tokio::net::TcpListener::bind(addr).await?;
            log::info!("websocket sessions on ws://{}/ws", ws.local_addr()?);
            tokio::select! {
                r = tcp_task => r??,
                r = serve_ws(ws, hub) => r?,
            }
        }
        None => tcp_task.await??,
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.cmd {
        Command::Simulate(a) => simulate(&cli, a),
        Command::Ilc(a) => ilc(&cli, a),
        Command::Metrics(a) => metrics(&cli, a),
        Command::Bounds(a) => bounds(&cli, a),
        Command::Bench(a) => bench(&cli, a),
        Command::Serve(a) => tokio::runtime::Runtime::new()?.block_on(serve(&cli, a)),
    }
}
