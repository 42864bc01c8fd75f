use std::sync::{Arc, Mutex};

use jade_core::agent::{AgentError, AgentMind, AgentOutput, AgentSpec, Attachment, Message, Outgoing};
use jade_core::csm::{CsmDocument, Payload};
use jade_core::devices::{roundie_suite, DriveParams, Readings};
use jade_core::env::{
    load_config, parse_log, replay, run, Assets, EnvError, EnvironmentMap, GroupCommand, Mode, RunOptions, SimSettings,
    Verdict,
};
use jade_core::geometry::{AgentId, Pose, WheelSpeeds, WorldMap};

fn settings() -> SimSettings {
    SimSettings {
        seed: 1,
        dt: 0.1,
        near_threshold: 1.0,
        checkpoint_every: 1,
        pose_every: 1,
        digest: 0,
    }
}

fn spec(name: &str, x: f64, y: f64, heading: f64) -> AgentSpec {
    AgentSpec {
        name: name.into(),
        color: "blue".into(),
        body_radius: 0.2,
        initial_pose: Pose::new(x, y, heading),
        drive: DriveParams {
            max_accel: f64::INFINITY,
            ..DriveParams::default()
        },
        devices: roundie_suite(),
        behavior_source: String::new(),
        behavior: CsmDocument::default(),
        policy: Default::default(),
        thresholds: Vec::new(),
        reflexes: Vec::new(),
        memory_capacity: 8,
    }
}

type Log = Arc<Mutex<Vec<(u64, Readings, Vec<Message>)>>>;

/// Scripted mind: fixed drive, sends per a schedule, records what it saw.
struct Script {
    drive: WheelSpeeds,
    sends: Vec<(u64, &'static str)>,
    seen: Log,
}

impl AgentMind for Script {
    fn step(&mut self, tick: u64, readings: &Readings, inbox: &[Message]) -> Result<AgentOutput, AgentError> {
        self.seen.lock().unwrap().push((tick, readings.clone(), inbox.to_vec()));
        Ok(AgentOutput {
            drive: self.drive,
            messages: self
                .sends
                .iter()
                .filter(|(t, _)| *t == tick)
                .map(|(t, to)| Outgoing {
                    to: to.to_string(),
                    payload: Some(Payload::Scalar(*t as f64)),
                })
                .collect(),
            ..AgentOutput::default()
        })
    }
}

fn script(drive: WheelSpeeds, sends: Vec<(u64, &'static str)>) -> (Box<dyn AgentMind>, Log) {
    let seen = Log::default();
    (
        Box::new(Script {
            drive,
            sends,
            seen: seen.clone(),
        }),
        seen,
    )
}

type AgentSetup<'a> = (&'a str, f64, f64, f64, WheelSpeeds, Vec<(u64, &'static str)>);

fn env_with(agents: &[AgentSetup]) -> (EnvironmentMap, Vec<Log>) {
    let mut env = EnvironmentMap::new(settings(), WorldMap::empty(10.0, 10.0).unwrap());
    let mut logs = Vec::new();
    for (name, x, y, h, drive, sends) in agents {
        let (mind, log) = script(*drive, sends.clone());
        env.register(spec(name, *x, *y, *h), Attachment::InProcess, mind)
            .unwrap();
        logs.push(log);
    }
    (env, logs)
}

#[test]
fn registration_ids_are_dense() {
    let (env, _) = env_with(&[
        ("a", 1.0, 1.0, 0.0, WheelSpeeds::STOP, vec![]),
        ("b", 3.0, 1.0, 0.0, WheelSpeeds::STOP, vec![]),
    ]);
    assert_eq!(env.directory().id("a"), Some(AgentId(0)));
    assert_eq!(env.directory().id("b"), Some(AgentId(1)));
}

#[test]
fn registration_at_occupied_pose_is_rejected() {
    let (mut env, _) = env_with(&[("a", 1.0, 1.0, 0.0, WheelSpeeds::STOP, vec![])]);
    let (mind, _) = script(WheelSpeeds::STOP, vec![]);
    let err = env
        .register(spec("b", 1.1, 1.0, 0.0), Attachment::InProcess, mind)
        .unwrap_err();
    assert!(matches!(err, EnvError::Placement { .. }));
    let (mind, _) = script(WheelSpeeds::STOP, vec![]);
    let err = env
        .register(spec("a", 5.0, 5.0, 0.0), Attachment::InProcess, mind)
        .unwrap_err();
    assert!(matches!(err, EnvError::Directory(_)));
    assert_eq!(env.agents().len(), 1);
}

#[test]
fn idle_tick_changes_nothing_but_the_counter() {
    let (mut env, _) = env_with(&[("a", 1.0, 1.0, 0.3, WheelSpeeds::STOP, vec![])]);
    let before = env.agents()[0].pose;
    env.tick().unwrap();
    assert_eq!(env.tick_count(), 1);
    assert_eq!(env.agents()[0].pose, before);
}

#[test]
fn messages_arrive_exactly_one_tick_later() {
    let (mut env, logs) = env_with(&[
        ("a", 1.0, 1.0, 0.0, WheelSpeeds::STOP, vec![(0, "b"), (3, "b")]),
        ("b", 3.0, 1.0, 0.0, WheelSpeeds::STOP, vec![]),
    ]);
    for _ in 0..6 {
        env.tick().unwrap();
    }
    let seen = logs[1].lock().unwrap();
    let got: Vec<(u64, u64)> = seen
        .iter()
        .flat_map(|(t, _, inbox)| inbox.iter().map(move |m| (*t, m.sent_tick)))
        .collect();
    assert_eq!(got, vec![(1, 0), (4, 3)]);
}

#[test]
fn head_on_agents_stop_with_front_touch_in_the_same_tick() {
    let fwd = WheelSpeeds::new(0.5, 0.5);
    let (mut env, logs) = env_with(&[
        ("a", 4.0, 5.0, 0.0, fwd, vec![]),
        ("b", 6.0, 5.0, std::f64::consts::PI, fwd, vec![]),
    ]);
    let first_touch = |log: &Log| {
        log.lock()
            .unwrap()
            .iter()
            .find(|(_, r, _)| r.touched("touch_fl") && r.touched("touch_fr"))
            .map(|(t, _, _)| *t)
    };
    for _ in 0..40 {
        env.tick().unwrap();
    }
    let (ta, tb) = (first_touch(&logs[0]), first_touch(&logs[1]));
    assert!(ta.is_some());
    assert_eq!(ta, tb);
    let gap = env.agents()[0].pose.position.distance(env.agents()[1].pose.position);
    assert!((gap - 0.4).abs() < 1e-6, "gap {gap}");
    // symmetric about the midpoint
    let mid = (env.agents()[0].pose.position.x + env.agents()[1].pose.position.x) / 2.0;
    assert!((mid - 5.0).abs() < 1e-6, "mid {mid}");
}

#[test]
fn unknown_destination_is_dropped_with_a_warning() {
    let (mut env, logs) = env_with(&[
        ("a", 1.0, 1.0, 0.0, WheelSpeeds::STOP, vec![(0, "nobody")]),
        ("b", 3.0, 1.0, 0.0, WheelSpeeds::STOP, vec![]),
    ]);
    env.tick().unwrap();
    env.tick().unwrap();
    assert!(env
        .log_text()
        .contains("0|warn|a|dropped message to unknown destination `nobody`"));
    assert!(logs[1].lock().unwrap().iter().all(|(_, _, inbox)| inbox.is_empty()));
}

#[test]
fn group_and_broadcast_routing() {
    let (mut env, logs) = env_with(&[
        (
            "a",
            1.0,
            1.0,
            0.0,
            WheelSpeeds::STOP,
            vec![(0, "team"), (1, "*"), (2, "team")],
        ),
        ("b", 3.0, 1.0, 0.0, WheelSpeeds::STOP, vec![]),
        ("c", 5.0, 1.0, 0.0, WheelSpeeds::STOP, vec![]),
    ]);
    env.manage_group(GroupCommand::Create, "team", None).unwrap();
    env.manage_group(GroupCommand::Join, "team", Some("a")).unwrap();
    env.manage_group(GroupCommand::Join, "team", Some("b")).unwrap();
    env.tick().unwrap();
    env.tick().unwrap();
    env.manage_group(GroupCommand::Dissolve, "team", None).unwrap();
    env.tick().unwrap();
    env.tick().unwrap();
    let received = |i: usize| -> Vec<u64> {
        logs[i]
            .lock()
            .unwrap()
            .iter()
            .flat_map(|(_, _, inbox)| inbox.iter().map(|m| m.sent_tick))
            .collect()
    };
    assert!(
        received(0).is_empty(),
        "sender never receives its own group or broadcast message"
    );
    assert_eq!(received(1), vec![0, 1]);
    assert_eq!(received(2), vec![1]);
    assert!(env
        .log_text()
        .contains("2|warn|a|dropped message to unknown destination `team`"));
}

#[test]
fn offline_mode_never_mutates() {
    let (mut env, _) = env_with(&[("a", 1.0, 1.0, 0.0, WheelSpeeds::new(1.0, 1.0), vec![])]);
    env.tick().unwrap();
    let sum = env.checksum();
    let text = env.log_text().to_string();
    env.set_mode(Mode::Offline);
    assert!(matches!(env.tick(), Err(EnvError::Offline)));
    let (mind, _) = script(WheelSpeeds::STOP, vec![]);
    assert!(env
        .register(spec("b", 5.0, 5.0, 0.0), Attachment::InProcess, mind)
        .is_err());
    assert!(env.manage_group(GroupCommand::Create, "g", None).is_err());
    assert_eq!(env.checksum(), sum);
    assert_eq!(env.log_text(), text);
    env.set_mode(Mode::Online);
    env.tick().unwrap();
    assert_ne!(env.checksum(), sum);
}

const WANDER: &str = "machine m { initial A; state A { on TICK -> A do set_wheels(rand() * 2 - 1, rand() * 2 - 1) } }";

fn config_xml(extra_agent: &str) -> String {
    format!(
        r#"<jade>
  <run seed="7" tick="0.1" max_ticks="60" checkpoint_every="1"/>
  <world w="8" h="8">
    <rect x="3" y="3" w="1" h="1"/>
  </world>
  <agent name="a" x="1" y="1" csm="wander.csm"/>
  <agent name="b" x="6" y="6" heading="3" csm="wander.csm"/>
  {extra_agent}
</jade>"#
    )
}

fn assets() -> Assets {
    Assets::from([("wander.csm".to_string(), WANDER.to_string())])
}

fn codes(xml: &str) -> Vec<String> {
    load_config(xml, &assets())
        .unwrap_err()
        .into_iter()
        .map(|d| d.code)
        .collect()
}

#[test]
fn config_minimal_is_valid() {
    let cfg = load_config(
        r#"<jade><run seed="1" max_ticks="5"/><world w="4" h="4"/><agent name="x" x="1" y="1"/></jade>"#,
        &Assets::new(),
    )
    .unwrap();
    assert_eq!(cfg.agents.len(), 1);
    assert_eq!(cfg.agents[0].devices, roundie_suite());
}

#[test]
fn config_diagnostics() {
    assert_eq!(
        codes(&config_xml(r#"<agent name="a" x="4" y="6"/>"#)),
        vec!["duplicate-name"]
    );
    assert_eq!(
        codes(&config_xml(r#"<agent name="c" x="3.5" y="3.5"/>"#)),
        vec!["initial-collision"]
    );
    assert_eq!(
        codes(&config_xml(r#"<agent name="c" x="1.2" y="1"/>"#)),
        vec!["overlapping-poses"]
    );
    assert_eq!(
        codes(&config_xml(r#"<agent name="c" x="5" y="1" csm="missing.csm"/>"#)),
        vec!["unknown-asset"]
    );
    assert_eq!(
        codes(&config_xml(r#"<agent name="c" x="5" y="1" strategy="nope"/>"#)),
        vec!["unknown-policy"]
    );
    assert_eq!(
        codes(&config_xml("").replace("max_ticks=\"60\"", "max_ticks=\"0\"")),
        vec!["schema"]
    );
    assert_eq!(codes("<jade><run"), vec!["xml"]);
}

#[test]
fn config_diagnostics_are_located() {
    let diags = load_config(&config_xml(r#"<agent name="a" x="4" y="6"/>"#), &assets()).unwrap_err();
    assert_eq!((diags[0].line, diags[0].col), (8, 3));
    let broken = Assets::from([("wander.csm".to_string(), "machine m {\n initial Q; }".to_string())]);
    let diags = load_config(&config_xml(""), &broken).unwrap_err();
    assert_eq!(diags[0].file.as_deref(), Some("wander.csm"));
    assert_eq!(diags[0].code, "unknown-state");
    assert_eq!(diags[0].line, 2);
}

#[test]
fn run_is_deterministic_and_replays() {
    let cfg = load_config(&config_xml(""), &assets()).unwrap();
    let (report, log) = run(&cfg, &RunOptions::default()).unwrap();
    let (_, again) = run(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(log, again);
    assert_eq!(report.ticks, 60);
    assert_eq!(report.stop_reason, "max_ticks");
    assert_eq!(replay(&log, &cfg).unwrap(), Verdict::Pass { ticks: 60 });

    let parsed = parse_log(&log).unwrap();
    let mut last = 0;
    for r in &parsed.records {
        assert!(r.tick >= last, "records out of tick order");
        last = r.tick;
    }
}

#[test]
fn replay_detects_mutation_truncation_and_foreign_configs() {
    let cfg = load_config(&config_xml(""), &assets()).unwrap();
    let (_, log) = run(&cfg, &RunOptions::default()).unwrap();

    let mutated = log.replacen("17|cmd|b|", "17|cmd|b|0.0", 1);
    assert_ne!(mutated, log);
    match replay(&mutated, &cfg).unwrap() {
        Verdict::Fail { tick, .. } => assert_eq!(tick, 17),
        other => panic!("expected failure, got {other:?}"),
    }

    let cut: String = log
        .lines()
        .take_while(|l| !l.starts_with("30|"))
        .map(|l| format!("{l}\n"))
        .collect();
    assert_eq!(
        replay(&cut, &cfg).unwrap(),
        Verdict::Partial {
            last_verified: Some(29)
        }
    );

    let other = load_config(
        &config_xml("").replace("max_ticks=\"60\"", "max_ticks=\"61\""),
        &assets(),
    )
    .unwrap();
    assert!(matches!(replay(&log, &other), Err(EnvError::DigestMismatch { .. })));
}

#[test]
fn seed_override_is_recorded_and_replayed() {
    let cfg = load_config(&config_xml(""), &assets()).unwrap();
    let opts = RunOptions {
        seed: Some(99),
        max_ticks: Some(20),
        ..RunOptions::default()
    };
    let (report, log) = run(&cfg, &opts).unwrap();
    assert_eq!(report.seed, 99);
    assert!(log.starts_with("#jade-log v1 seed=99 "));
    assert_eq!(replay(&log, &cfg).unwrap(), Verdict::Pass { ticks: 20 });
}
