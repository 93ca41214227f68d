//! In-process API server and a small blocking client for service tests.

use std::io::{BufRead, BufReader};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use coig_core::backends::BackendProfile;
use coig_core::engine::{CliConfig, Engine};
use coig_core::service::Server;
use serde_json::Value;

pub struct TestServer {
    pub base: String,
    pub engine: Arc<Engine>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

/// Config with the plain mock profile plus `slow`, whose image calls each
/// take `latency_ms`.
pub fn config(store: &std::path::Path, latency_ms: u64) -> CliConfig {
    let mut slow = BackendProfile::mock();
    slow.image.mock_latency_ms = latency_ms;
    let mut config = CliConfig {
        store_root: store.to_path_buf(),
        ..CliConfig::default()
    };
    config.backend_profiles.insert("slow".into(), slow);
    config
}

impl TestServer {
    pub fn start(config: CliConfig) -> Self {
        let engine = Arc::new(Engine::new(config).unwrap());
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let served = engine.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let server = Server::bind(served, "127.0.0.1:0").await.unwrap();
                addr_tx.send(server.local_addr().unwrap()).unwrap();
                server
                    .run(async {
                        let _ = stop_rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        let addr = addr_rx
            .recv_timeout(Duration::from_secs(10))
            .expect("server bound");
        Self {
            base: format!("http://{addr}"),
            engine,
            shutdown: Some(stop_tx),
            thread: Some(thread),
        }
    }

    /// Graceful shutdown: waits for in-flight steps to checkpoint.
    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    fn agent() -> ureq::Agent {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build();
        ureq::Agent::new_with_config(config)
    }

    pub fn get_raw(
        &self,
        path: &str,
        token: Option<&str>,
    ) -> (u16, Vec<(String, String)>, Vec<u8>) {
        let mut req = Self::agent().get(format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.call().unwrap();
        let headers = resp
            .headers()
            .iter()
            .map(|(k, v)| (k.as_str().to_string(), v.to_str().unwrap_or("").to_string()))
            .collect();
        let status = resp.status().as_u16();
        (status, headers, resp.body_mut().read_to_vec().unwrap())
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        let (status, _, body) = self.get_raw(path, None);
        (status, serde_json::from_slice(&body).unwrap_or(Value::Null))
    }

    pub fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        let mut resp = Self::agent()
            .post(format!("{}{path}", self.base))
            .content_type("application/json")
            .send(serde_json::to_vec(body).unwrap().as_slice())
            .unwrap();
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    /// Reads the event stream of a run until the server closes it. Returns
    /// `(event name, data)` pairs.
    pub fn events(&self, run_id: &str) -> Vec<(String, String)> {
        let resp = Self::agent()
            .get(format!("{}/runs/{run_id}/events", self.base))
            .call()
            .unwrap();
        assert_eq!(resp.status().as_u16(), 200);
        let reader = BufReader::new(resp.into_body().into_reader());
        let mut out = Vec::new();
        let mut name = String::new();
        for line in reader.lines() {
            let line = line.unwrap();
            if let Some(n) = line.strip_prefix("event:") {
                name = n.trim().to_string();
            } else if let Some(d) = line.strip_prefix("data:") {
                out.push((name.clone(), d.trim().to_string()));
            }
        }
        out
    }

    /// Polls until the run leaves the running state.
    pub fn wait_settled(&self, run_id: &str) -> Value {
        for _ in 0..500 {
            let (_, run) = self.get(&format!("/runs/{run_id}"));
            if run["status"] != "running" {
                return run;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        panic!("run {run_id} never settled");
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}
