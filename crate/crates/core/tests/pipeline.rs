use std::fs;

use waggle_core::controllers::{run_ilc_trial, ControllerKind, FeatureChannel, IlcGains};
use waggle_core::harness::{run_dyad, synth_leader, DyadConfig, LeaderPattern, LeaderSpec};
use waggle_core::metrics::MetricsReport;
use waggle_core::sigproc::{self, FilterSpec};
use waggle_core::{HkbParams, Plant, State4};

#[test]
fn recorded_csv_through_learning_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hp.csv");
    let leader = synth_leader(&LeaderSpec::default(), 10.0, 0.02).unwrap();
    sigproc::save_csv(&leader, &path).unwrap();

    let raw = sigproc::load_csv(&path).unwrap();
    assert_eq!(raw, leader);
    let smooth = sigproc::moving_average(&raw, &FilterSpec::default()).unwrap();
    let hp = sigproc::estimate_velocity(&smooth).unwrap();
    let hp = sigproc::resample(&hp, 0.01).unwrap();

    let first = hp.samples()[0];
    let x0 = State4::from_planar(first.position, first.velocity);
    let plant = Plant::new(HkbParams::REFERENCE);
    let run = run_ilc_trial(&plant, &x0, &hp, None, &IlcGains::DYAD2, 3, None).unwrap();
    assert_eq!(run.trajectories.len(), 4);
    let report = MetricsReport::compute(&hp, run.trajectories.last().unwrap()).unwrap();
    assert_eq!(report.n, hp.len());
    assert!(report.rmse.is_finite() && report.svm > 0.0);
    assert!((0.0..=1.0).contains(&report.cv));
}

#[test]
fn dyad_config_file_drives_a_recorded_leader() {
    let dir = tempfile::tempdir().unwrap();
    let leader = synth_leader(&LeaderSpec { freq: 0.5, ..LeaderSpec::default() }, 8.0, 1.0 / 60.0).unwrap();
    sigproc::save_csv(&leader, dir.path().join("lead.csv")).unwrap();
    sigproc::save_csv(&leader, dir.path().join("solo.csv")).unwrap();
    fs::write(
        dir.path().join("dyad.txt"),
        "id = rec\npreset = dyad3\nks = 0.05\ncontroller = pdc\nleader.pattern = recorded\n\
         leader.path = lead.csv\nfeature.path = solo.csv\nfeature.channel = velocity\n\
         trials = 2\ntrial_t = 8\nseed = 3\n",
    )
    .unwrap();
    let cfg = DyadConfig::load(dir.path().join("dyad.txt")).unwrap();
    assert_eq!(cfg.gains, IlcGains::DYAD3.with_ks(0.05));
    assert_eq!(cfg.controller, ControllerKind::Pdc);
    assert_eq!(cfg.feature_channel, FeatureChannel::Velocity);
    assert_eq!(cfg.leader.pattern, LeaderPattern::Recorded(dir.path().join("lead.csv")));

    let r = run_dyad(&cfg).unwrap();
    assert_eq!(r.attempted, 2);
    assert_eq!(r.attempted, r.succeeded + r.failed);
    assert_eq!(r.trials[0].leader.len(), leader.len());
}

#[test]
fn bad_config_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for (i, body) in ["preset = dyad7\n", "trials = 0\n", "leader.pattern = recorded\n", "kp = fast\n"]
        .iter()
        .enumerate()
    {
        let p = dir.path().join(format!("bad{i}.txt"));
        fs::write(&p, body).unwrap();
        assert!(DyadConfig::load(&p).is_err(), "{body}");
    }
}
