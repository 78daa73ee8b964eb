#![allow(dead_code)]

use std::time::Duration;

use futures::StreamExt;
use serde_json::{json, Value};

use kneelink_core::protocol::{LossModel, MemoryLink};
use kneelink_core::simulator::{device_ticks, run_device, DeviceConfig, NoiseModel, SquatProfile};
use kneelink_service::{LiveFeedEvent, RunningService, ServeConfig};

/// Frames the simulator would have delivered for a default trial.
pub fn dump(seed: u64, drop_prob: f64) -> (Vec<u8>, u64) {
    let profile = SquatProfile {
        rng_seed: seed,
        ..SquatProfile::default()
    };
    let ticks = device_ticks(&profile, &NoiseModel::default(), &DeviceConfig::default()).unwrap();
    let (mut tx, _rx) = MemoryLink::pair(LossModel::with_drop_prob(drop_prob, seed)).unwrap();
    let mut out = Vec::new();
    let stats = run_device(&ticks, profile.dt_s, &mut tx, false, Some(&mut out)).unwrap();
    (out, stats.sent)
}

pub async fn start_service(data_dir: &std::path::Path) -> RunningService {
    kneelink_service::start(ServeConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        http: "127.0.0.1:0".parse().unwrap(),
        data_dir: data_dir.to_path_buf(),
        ..ServeConfig::default()
    })
    .await
    .unwrap()
}

pub struct Client {
    pub base: String,
    pub http: reqwest::Client,
}

impl Client {
    pub fn new(svc: &RunningService) -> Self {
        Self {
            base: format!("http://{}", svc.http_addr),
            http: reqwest::Client::new(),
        }
    }

    pub async fn post(&self, path: &str, body: Option<Value>) -> (u16, Value) {
        let mut req = self.http.post(format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let resp = self.http.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn replay(&self, bytes: Vec<u8>) -> Value {
        let resp = self
            .http
            .post(format!("{}/replay", self.base))
            .body(bytes)
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status().as_u16(), 200);
        resp.json().await.unwrap()
    }

    /// Creates a session and starts calibrating; returns its id.
    pub async fn calibrating_session(&self, subject: &str, auto_record: bool) -> String {
        let (status, v) = self
            .post(
                "/sessions",
                Some(json!({
                    "subject_id": subject,
                    "age_range": "25-34",
                    "sex": "F",
                    "dominant_leg": "Right",
                    "auto_record": auto_record,
                })),
            )
            .await;
        assert_eq!(status, 201, "{v}");
        let id = v["session_id"].as_str().unwrap().to_string();
        let (status, v) = self.post(&format!("/sessions/{id}/calibrate"), None).await;
        assert_eq!(status, 200, "{v}");
        id
    }

    /// Opens the live feed and returns a task collecting `n` sample events.
    pub async fn collect_live(&self, n: usize) -> tokio::task::JoinHandle<Vec<LiveFeedEvent>> {
        let resp = self.http.get(format!("{}/live", self.base)).send().await.unwrap();
        assert_eq!(resp.status().as_u16(), 200);
        let mut body = resp.bytes_stream();
        tokio::spawn(async move {
            let mut buf = String::new();
            let mut out = Vec::new();
            while out.len() < n {
                let chunk = match tokio::time::timeout(Duration::from_secs(30), body.next()).await {
                    Ok(Some(Ok(c))) => c,
                    _ => break,
                };
                buf.push_str(std::str::from_utf8(&chunk).unwrap());
                while let Some(end) = buf.find("\n\n") {
                    let block: String = buf.drain(..end + 2).collect();
                    let mut kind = "message";
                    let mut data = String::new();
                    for line in block.lines() {
                        if let Some(k) = line.strip_prefix("event:") {
                            kind = if k.trim() == "sample" { "sample" } else { "other" };
                        } else if let Some(d) = line.strip_prefix("data:") {
                            data.push_str(d.trim_start());
                        }
                    }
                    if kind == "sample" {
                        out.push(serde_json::from_str(&data).unwrap());
                    }
                }
            }
            out
        })
    }
}

/// Polls the stats endpoint until `done` holds or the timeout passes.
pub async fn wait_for_stats(client: &Client, timeout: Duration, done: impl Fn(&Value) -> bool) -> Value {
    let deadline = tokio::time::Instant::now() + timeout;
    loop {
        let (_, stats) = client.get("/stats").await;
        if done(&stats) || tokio::time::Instant::now() > deadline {
            return stats;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
}
