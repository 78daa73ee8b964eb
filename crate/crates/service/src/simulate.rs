use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;

use kneelink_core::protocol::{LinkStats, LossModel, UdpSender};
use kneelink_core::simulator::{device_ticks, run_device, DeviceConfig, NoiseModel, SquatProfile};

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub profile: SquatProfile,
    pub noise: NoiseModel,
    pub drop_prob: f64,
    pub jitter: Duration,
    pub dest: String,
    pub realtime: bool,
    pub dump: Option<PathBuf>,
}

/// Runs one simulated trial and sends it to `dest` over UDP.
pub fn simulate(opts: &SimulateOptions) -> anyhow::Result<LinkStats> {
    let ticks = device_ticks(&opts.profile, &opts.noise, &DeviceConfig::default())?;
    let model = LossModel {
        drop_prob: opts.drop_prob,
        jitter_max: opts.jitter,
        seed: opts.profile.rng_seed,
    };
    let mut link = UdpSender::connect(opts.dest.as_str(), model).with_context(|| format!("connecting to {}", opts.dest))?;
    let mut dump = match &opts.dump {
        Some(path) => Some(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => None,
    };
    let stats = run_device(
        &ticks,
        opts.profile.dt_s,
        &mut link,
        opts.realtime,
        dump.as_mut().map(|w| w as &mut dyn Write),
    )?;
    if let Some(mut w) = dump {
        w.flush()?;
    }
    Ok(stats)
}
