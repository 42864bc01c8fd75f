use std::collections::BTreeMap;
use std::net::TcpStream;
use std::time::Duration;

use jade_client::api::{Bundle, RenderMode, RunRequest, RunState, Verdict};
use jade_client::{Client, ClientError};
use jade_core::env::wire::serve_agent;
use jade_core::env::{load_config, run, Assets, RunOptions};
use jade_core::scenarios::{chase, make_policy};
use jade_server::{router, ServerConfig};

async fn start() -> Client {
    start_with(ServerConfig::default()).await
}

async fn start_with(config: ServerConfig) -> Client {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(config)).await.unwrap() });
    Client::new(format!("http://{addr}"))
}

fn chase_bundle(max_ticks: u64, seed: u64) -> Bundle {
    let p = chase::ChaseParams {
        max_ticks,
        ..Default::default()
    };
    Bundle {
        config: chase::chase_config(&p, seed),
        assets: BTreeMap::new(),
    }
}

fn local_log(bundle: &Bundle) -> String {
    let cfg = load_config(&bundle.config, &Assets::new()).unwrap();
    run(&cfg, &RunOptions::default()).unwrap().1
}

fn api_status(e: ClientError) -> u16 {
    e.status().unwrap_or_else(|| panic!("not an api error: {e}"))
}

#[tokio::test]
async fn health_and_catalog() {
    let c = start().await;
    assert_eq!(c.health().await.unwrap().status, "ok");
    let cat = c.catalog().await.unwrap();
    assert!(cat.scenarios.contains(&"mushrooms".to_string()));
    assert!(cat.behaviors.contains(&"wall_follower".to_string()));
    assert!(cat.policies.contains(&"chase_predator".to_string()));
}

#[tokio::test]
async fn validate_reports_problems_without_failing() {
    let c = start().await;
    let good = c.validate(&chase_bundle(100, 0)).await.unwrap();
    assert!(good.valid);
    assert_eq!(good.agents, ["predator", "prey"]);
    assert_eq!(good.scenario.as_deref(), Some("chase"));
    assert_eq!(good.digest.unwrap().len(), 16);

    let bad = Bundle {
        config: r#"<jade><run tick="0.1"/><world w="5" h="5"/><agent name="a" x="1" y="1" csm="missing.csm"/></jade>"#
            .into(),
        assets: BTreeMap::new(),
    };
    let resp = c.validate(&bad).await.unwrap();
    assert!(!resp.valid);
    assert!(!resp.diagnostics.is_empty());
    assert!(resp.diagnostics.iter().all(|d| d.line > 0));
}

#[tokio::test]
async fn waited_run_matches_an_in_process_run() {
    let c = start().await;
    let bundle = chase_bundle(300, 4);
    let status = c
        .start_run(&RunRequest {
            bundle: bundle.clone(),
            wait: true,
            ..Default::default()
        })
        .await
        .unwrap();
    assert_eq!(status.state, RunState::Finished);
    let report = status.report.unwrap();
    assert!(report.ticks <= 300);
    let log = c.run_log(status.id).await.unwrap();
    assert_eq!(log, local_log(&bundle));
    assert_eq!(c.run_status(status.id).await.unwrap().report.unwrap(), report);
    assert_eq!(c.runs().await.unwrap().len(), 1);
}

#[tokio::test]
async fn background_run_can_be_polled() {
    let c = start().await;
    let status = c
        .start_run(&RunRequest {
            bundle: chase_bundle(200, 1),
            seed: Some(9),
            max_ticks: Some(50),
            ..Default::default()
        })
        .await
        .unwrap();
    let done = c.wait_run(status.id, Duration::from_millis(20)).await.unwrap();
    assert_eq!(done.state, RunState::Finished);
    let report = done.report.unwrap();
    assert_eq!(report.seed, 9);
    assert!(report.ticks <= 50);
}

#[tokio::test]
async fn remote_agent_gives_a_byte_identical_log() {
    let c = start().await;
    let bundle = chase_bundle(400, 6);
    let status = c
        .start_run(&RunRequest {
            bundle: bundle.clone(),
            remote: vec!["predator".into()],
            wait: true,
            ..Default::default()
        })
        .await
        .unwrap();
    assert_eq!(status.state, RunState::Running);
    let addr = status.wire_addr.clone().unwrap();
    let cfg = load_config(&bundle.config, &Assets::new()).unwrap();
    let spec = cfg.agents.iter().find(|a| a.name == "predator").unwrap().clone();
    let agent = std::thread::spawn(move || {
        let mut stream = TcpStream::connect(addr).unwrap();
        serve_agent(&mut stream, &spec, make_policy(&spec.policy).unwrap()).unwrap()
    });
    let done = c.wait_run(status.id, Duration::from_millis(20)).await.unwrap();
    assert_eq!(done.state, RunState::Finished, "{:?}", done.error);
    let session = tokio::task::spawn_blocking(move || agent.join().unwrap())
        .await
        .unwrap();
    assert_eq!(session.ticks, done.report.unwrap().ticks);
    assert_eq!(c.run_log(status.id).await.unwrap(), local_log(&bundle));
}

#[tokio::test]
async fn absent_remote_agent_fails_the_run() {
    let c = start().await;
    let status = c
        .start_run(&RunRequest {
            bundle: chase_bundle(100, 0),
            remote: vec!["prey".into()],
            attach_timeout_secs: Some(0),
            ..Default::default()
        })
        .await
        .unwrap();
    let done = c.wait_run(status.id, Duration::from_millis(20)).await.unwrap();
    assert_eq!(done.state, RunState::Failed);
    assert!(done.error.unwrap().contains("prey"));
    assert_eq!(api_status(c.run_log(status.id).await.unwrap_err()), 409);
}

#[tokio::test]
async fn bad_requests_get_matching_statuses() {
    let c = start().await;
    let broken = Bundle {
        config: "<jade>".into(),
        assets: BTreeMap::new(),
    };
    let e = c
        .start_run(&RunRequest {
            bundle: broken,
            ..Default::default()
        })
        .await
        .unwrap_err();
    assert!(!e.diagnostics().is_empty());
    assert_eq!(api_status(e), 422);

    let e = c
        .start_run(&RunRequest {
            bundle: chase_bundle(10, 0),
            remote: vec!["ghost".into()],
            ..Default::default()
        })
        .await
        .unwrap_err();
    assert_eq!(api_status(e), 400);

    assert_eq!(api_status(c.run_status(77).await.unwrap_err()), 404);
    assert_eq!(api_status(c.run_log(77).await.unwrap_err()), 404);
    assert_eq!(
        api_status(c.render("nonsense", RenderMode::Overview).await.unwrap_err()),
        400
    );
    let e = c
        .generate("chase", 0, BTreeMap::from([("arnea".into(), "3".into())]))
        .await
        .unwrap_err();
    assert_eq!(api_status(e), 400);
}

#[tokio::test]
async fn replay_passes_then_catches_tampering() {
    let c = start().await;
    let bundle = chase_bundle(200, 2);
    let log = local_log(&bundle);
    assert!(matches!(c.replay(&bundle, &log).await.unwrap(), Verdict::Pass { .. }));

    // nudge the first predator command
    let line = log.lines().find(|l| l.contains("|cmd|predator|")).unwrap();
    let tick: u64 = line.split('|').next().unwrap().parse().unwrap();
    let payload = line.rsplit('|').next().unwrap();
    let left: f64 = payload.split(' ').next().unwrap().parse().unwrap();
    let nudged = line.replacen(
        payload,
        &payload.replacen(&left.to_string(), &(left + 0.01).to_string(), 1),
        1,
    );
    let tampered = log.replacen(line, &nudged, 1);
    assert_ne!(tampered, log);
    match c.replay(&bundle, &tampered).await.unwrap() {
        Verdict::Fail { tick: t, .. } => assert_eq!(t, tick),
        other => panic!("expected a failure, got {other:?}"),
    }

    let other = chase_bundle(201, 2);
    assert_eq!(api_status(c.replay(&other, &log).await.unwrap_err()), 409);
}

#[tokio::test]
async fn render_and_generate_round_trip() {
    let c = start().await;
    let config = c
        .generate(
            "maze",
            3,
            BTreeMap::from([("cols".into(), "4".into()), ("rows".into(), "4".into())]),
        )
        .await
        .unwrap();
    assert!(config.contains(r#"name="maze""#));
    let bundle = Bundle {
        config,
        assets: BTreeMap::new(),
    };
    let status = c
        .start_run(&RunRequest {
            bundle,
            max_ticks: Some(40),
            wait: true,
            ..Default::default()
        })
        .await
        .unwrap();
    let log = c.run_log(status.id).await.unwrap();
    let docs = c.render(&log, RenderMode::Every(10)).await.unwrap();
    assert_eq!(docs.len(), 4);
    assert!(docs.iter().all(|d| d.starts_with("<svg ")));
}
