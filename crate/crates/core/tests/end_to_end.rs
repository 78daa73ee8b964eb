mod common;

use std::time::{Duration, Instant};

use kneelink_core::emg::counts_to_volts;
use kneelink_core::protocol::{FrameParser, LossModel, MemoryLink};
use kneelink_core::session::{export_csv, SessionRecord, TrialStore};
use kneelink_core::simulator::{device_ticks, run_device, DeviceConfig, NoiseModel, SquatProfile};

use common::{ingest, run_trial};

fn short_profile() -> SquatProfile {
    SquatProfile {
        n_reps: 1,
        trial_s: 2.0,
        standing_s: 1.0,
        ..SquatProfile::default()
    }
}

fn dump(profile: &SquatProfile, model: LossModel, realtime: bool) -> Vec<u8> {
    let config = DeviceConfig {
        calibration_window_s: profile.standing_s,
        ..DeviceConfig::default()
    };
    let ticks = device_ticks(profile, &NoiseModel::default(), &config).unwrap();
    let (mut tx, _rx) = MemoryLink::pair(model).unwrap();
    let mut out = Vec::new();
    run_device(&ticks, profile.dt_s, &mut tx, realtime, Some(&mut out)).unwrap();
    out
}

#[test]
fn realtime_and_fast_runs_emit_identical_bytes() {
    let profile = short_profile();
    let model = LossModel {
        drop_prob: 0.1,
        jitter_max: Duration::from_micros(200),
        seed: 5,
    };
    let fast = dump(&profile, model, false);
    let start = Instant::now();
    let slow = dump(&profile, model, true);
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(fast, slow);
    assert!(elapsed >= 0.9 * (profile.sample_count() - 1) as f64 * profile.dt_s, "{elapsed}");
    assert_ne!(fast, dump(&SquatProfile { rng_seed: 2, ..profile }, model, false));
}

#[test]
fn default_trial_reaches_target_and_counts_five() {
    let run = run_trial(&SquatProfile::default(), &NoiseModel::default(), 0.0);
    let s = run.record.summary().unwrap();
    assert_eq!(s.rep_count, 5);
    assert!((115.0..=135.0).contains(&s.peak_flexion_deg), "{}", s.peak_flexion_deg);
    assert!((s.emg1_peak_v - 1.6).abs() < 0.05, "{}", s.emg1_peak_v);
    assert!(s.emg2_peak_v < s.emg1_peak_v);
    // Quiet stance sits near the baseline.
    let quiet = counts_to_volts(f64::from(run.ticks[100].packet.emg1_counts)).unwrap();
    assert!(quiet < 0.2, "{quiet}");
    assert_eq!(run.live.len(), 667);
    assert_eq!(run.record.packets().len(), 667 - 133);
}

#[test]
fn velocity_peaks_straddle_each_flexion_peak() {
    // Flexion-positive angles: velocity is largest while descending into
    // the squat and most negative while rising out of it.
    let run = run_trial(&SquatProfile::default(), &NoiseModel::default(), 0.0);
    let derived = run.record.derived();
    let reps = run.record.repetitions().unwrap();
    assert_eq!(reps.spans.len(), 5);
    for span in reps.spans {
        let range = span.start..=span.end;
        let by = |key: &dyn Fn(usize) -> f64| range.clone().max_by(|&a, &b| key(a).total_cmp(&key(b))).unwrap();
        let peak = by(&|i| derived[i].angle_deg);
        let vmax = by(&|i| derived[i].velocity_dps);
        let vmin = by(&|i| -derived[i].velocity_dps);
        assert!(vmax < peak && peak < vmin, "{vmax} {peak} {vmin}");
        assert!(derived[vmax].velocity_dps > 0.0 && derived[vmin].velocity_dps < 0.0);
    }
}

#[test]
fn live_angles_equal_recorded_angles() {
    let run = run_trial(&SquatProfile::default(), &NoiseModel::default(), 0.0);
    let recorded: Vec<f64> = run.live[133..].iter().map(|l| l.knee.angle_deg).collect();
    assert_eq!(recorded, run.record.angles());
    // Backward and central differences agree to within the stencil error
    // on the smooth parts of the trace.
    let derived = run.record.derived();
    let worst = run.live[133..]
        .iter()
        .zip(derived)
        .skip(2)
        .map(|(l, d)| (l.knee.velocity_dps - d.velocity_dps).abs())
        .fold(0.0, f64::max);
    let peak = run.record.summary().unwrap().peak_velocity_dps;
    assert!(worst < 0.25 * peak, "{worst} vs {peak}");
    let times: Vec<f64> = run.live.iter().map(|l| l.knee.t).collect();
    assert!(times.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn lossy_link_shrinks_the_record_but_keeps_it_consistent() {
    let run = run_trial(&SquatProfile::default(), &NoiseModel::default(), 0.1);
    let sent = run.link.sent as f64;
    let received = run.link.received as f64;
    let sigma = (sent * 0.1 * 0.9).sqrt();
    assert!((received - 0.9 * sent).abs() <= 3.0 * sigma);
    assert_eq!(run.live.len() as u64, run.link.received);
    assert!(run.receiver.dropped <= run.link.dropped);
    assert_eq!(run.record.derived().len(), run.record.packets().len());
}

#[test]
fn replaying_a_dump_reproduces_the_export() {
    let profile = SquatProfile {
        rng_seed: 77,
        ..SquatProfile::default()
    };
    let run = run_trial(&profile, &NoiseModel::default(), 0.05);
    let dir = tempfile::tempdir().unwrap();
    let export = |record: &SessionRecord, name: &str| {
        let path = dir.path().join(name);
        export_csv(record, &path).unwrap();
        std::fs::read(path).unwrap()
    };
    let first = export(&run.record, "first.csv");
    let (again, _, stats) = ingest(&run.delivered, "S01");
    assert_eq!(stats, run.receiver);
    assert_eq!(export(&again, "second.csv"), first);
}

#[test]
fn five_trials_become_five_files() {
    let dir = tempfile::tempdir().unwrap();
    let store = TrialStore::new(dir.path());
    for seed in 10..15 {
        let run = run_trial(
            &SquatProfile {
                rng_seed: seed,
                ..SquatProfile::default()
            },
            &NoiseModel::default(),
            0.0,
        );
        store.save(&run.record).unwrap();
    }
    let files = store.trials("S01").unwrap();
    assert_eq!(files.len(), 5);
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["trial_001.csv", "trial_002.csv", "trial_003.csv", "trial_004.csv", "trial_005.csv"]);
    for f in &files {
        assert!(f.with_extension("json").exists());
    }
}

#[test]
fn dump_parses_back_to_the_delivered_ticks() {
    let profile = SquatProfile::default();
    let ticks = device_ticks(&profile, &NoiseModel::default(), &DeviceConfig::default()).unwrap();
    let (mut tx, _rx) = MemoryLink::pair(LossModel::with_drop_prob(0.3, 8)).unwrap();
    let mut out = Vec::new();
    let stats = run_device(&ticks, profile.dt_s, &mut tx, false, Some(&mut out)).unwrap();
    let (frames, _) = FrameParser::parse_all(&out);
    assert_eq!(frames.len() as u64, stats.received);
    for f in frames {
        assert_eq!(f.packet(), ticks[f.seq as usize].packet);
    }
}
