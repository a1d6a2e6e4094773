//! Serves a generated log directory over HTTP.
//!
//! `cargo run --example serve_logdir [port]`, then e.g.
//! `curl localhost:6070/api/runs` or
//! `curl -XPOST localhost:6070/api/fairness -d '{"run":"baseline","axes":["gender"]}' -H 'content-type: application/json'`.

use std::net::SocketAddr;

use fairboard::server::{serve, RouterOptions, ServeConfig, DEFAULT_RESCAN};
use fairboard::synthgen::{generate_scenario, Scenario};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let port: u16 = std::env::args().nth(1).map_or(Ok(6070), |p| p.parse())?;
    let logdir = tempfile::tempdir()?;
    for scenario in [
        Scenario::Baseline,
        Scenario::Mitigated,
        Scenario::Table2,
        Scenario::Detection,
    ] {
        generate_scenario(scenario, logdir.path(), 0, None)?;
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    serve(ServeConfig {
        logdir: logdir.path().to_path_buf(),
        addr: SocketAddr::from(([127, 0, 0, 1], port)),
        rescan_interval: DEFAULT_RESCAN,
        seed: 0,
        router: RouterOptions::default(),
    })
    .await?;
    Ok(())
}
