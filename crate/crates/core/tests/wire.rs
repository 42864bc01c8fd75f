use std::collections::{BTreeSet, VecDeque};
use std::io::{self, Read};
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use proptest::prelude::*;

use jade_core::agent::{AgentOutput, Message, Outgoing, ResourceOp};
use jade_core::csm::Payload;
use jade_core::devices::{Reading, Readings, ScanEntry, ScanReport, Sighting};
use jade_core::env::wire::{run_with_remote, serve_agent, write_frame, Frame, FrameReader, WireError, MAX_FRAME};
use jade_core::env::{load_config, run, Assets, RunOptions};
use jade_core::geometry::{AgentId, Pose, ResourceId, Vec2, WheelSpeeds};
use jade_core::scenarios::{chase, make_policy};

fn finite() -> impl Strategy<Value = f64> {
    -1e6..1e6f64
}

fn name() -> impl Strategy<Value = String> {
    "[a-z*|é ]{0,8}"
}

fn payload() -> impl Strategy<Value = Option<Payload>> {
    prop_oneof![
        Just(None),
        finite().prop_map(|v| Some(Payload::Scalar(v))),
        (finite(), finite()).prop_map(|(x, y)| Some(Payload::Vector(Vec2::new(x, y)))),
    ]
}

fn reading() -> impl Strategy<Value = Reading> {
    prop_oneof![
        finite().prop_map(Reading::Floor),
        any::<bool>().prop_map(Reading::Touch),
        proptest::option::of(0.0..10.0f64).prop_map(Reading::Proximity),
        (any::<i64>(), any::<i64>()).prop_map(|(left, right)| Reading::Odometry { left, right }),
        proptest::collection::vec((name(), -3.0..3.0f64, proptest::option::of(0.0..5.0f64)), 0..4).prop_map(|v| {
            Reading::Scan(ScanReport {
                entries: v
                    .into_iter()
                    .map(|(name, bearing, distance)| ScanEntry {
                        name,
                        bearing,
                        distance,
                    })
                    .collect(),
            })
        }),
        proptest::collection::vec((any::<u32>(), -3.0..3.0f64, 0.0..5.0f64), 0..4).prop_map(|v| {
            Reading::Vision(
                v.into_iter()
                    .map(|(id, bearing, distance)| Sighting {
                        id: ResourceId(id),
                        bearing,
                        distance,
                    })
                    .collect(),
            )
        }),
        (finite(), finite(), -3.0..3.0f64).prop_map(|(x, y, h)| Reading::Position(Pose::new(x, y, h))),
        proptest::option::of(any::<u32>()).prop_map(|c| Reading::Gripper(c.map(ResourceId))),
    ]
}

fn frame() -> impl Strategy<Value = Frame> {
    let message = (name(), name(), payload(), any::<u64>()).prop_map(|(from, to, payload, sent_tick)| Message {
        from,
        to,
        payload,
        sent_tick,
    });
    let op = prop_oneof![
        any::<u32>().prop_map(|i| ResourceOp::Pick(ResourceId(i))),
        Just(ResourceOp::Drop)
    ];
    let output = (
        finite(),
        finite(),
        proptest::collection::vec(
            (name(), payload()).prop_map(|(to, payload)| Outgoing { to, payload }),
            0..3,
        ),
        proptest::collection::vec(op, 0..3),
        proptest::collection::vec(name(), 0..2),
    )
        .prop_map(|(l, r, messages, ops, notes)| AgentOutput {
            drive: WheelSpeeds::new(l, r),
            messages,
            ops,
            notes,
        });
    prop_oneof![
        name().prop_map(|name| Frame::Register { name }),
        (any::<u32>(), any::<u64>(), any::<u64>()).prop_map(|(id, seed, tick)| Frame::Registered {
            id: AgentId(id),
            seed,
            tick
        }),
        (
            any::<u64>(),
            proptest::collection::vec((name(), reading()), 0..5),
            proptest::collection::vec(message, 0..3)
        )
            .prop_map(|(tick, values, inbox)| Frame::TickInputs {
                tick,
                readings: Readings { values },
                inbox
            }),
        (any::<u64>(), output).prop_map(|(tick, output)| Frame::TickOutputs { tick, output }),
        name().prop_map(|reason| Frame::Disconnect { reason }),
    ]
}

/// Hands out at most `step` bytes per read and reports a timeout between reads.
struct Trickle {
    data: VecDeque<u8>,
    step: usize,
    stall: bool,
}

impl Read for Trickle {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        self.stall = !self.stall;
        if self.stall {
            return Err(io::ErrorKind::WouldBlock.into());
        }
        let n = self.step.min(buf.len()).min(self.data.len());
        for b in buf.iter_mut().take(n) {
            *b = self.data.pop_front().unwrap();
        }
        Ok(n)
    }
}

proptest! {
    #[test]
    fn frames_round_trip(f in frame()) {
        let bytes = f.encode();
        let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        prop_assert_eq!(len, bytes.len() - 4);
        prop_assert_eq!(bytes[4], f.kind());
        prop_assert_eq!(Frame::decode(bytes[4], &bytes[5..]).unwrap(), f);
    }

    #[test]
    fn split_reads_reassemble(frames in proptest::collection::vec(frame(), 1..4), step in 1usize..7) {
        let data: VecDeque<u8> = frames.iter().flat_map(|f| f.encode()).collect();
        let mut src = Trickle { data, step, stall: false };
        let mut reader = FrameReader::default();
        let mut got = Vec::new();
        while got.len() < frames.len() {
            if let Some(f) = reader.read(&mut src).unwrap() {
                got.push(f);
            }
        }
        prop_assert_eq!(got, frames);
    }

    #[test]
    fn truncated_bodies_are_rejected(f in frame(), cut in 1usize..64) {
        let bytes = f.encode();
        let body = &bytes[5..];
        prop_assume!(cut <= body.len());
        prop_assert!(Frame::decode(bytes[4], &body[..body.len() - cut]).is_err());
    }
}

#[test]
fn bad_lengths_and_kinds_are_rejected() {
    let mut reader = FrameReader::default();
    assert!(matches!(
        reader.read(&mut &[0u8, 0, 0, 0][..]),
        Err(WireError::Malformed(_))
    ));
    let mut reader = FrameReader::default();
    let big = (MAX_FRAME + 1).to_le_bytes();
    assert!(matches!(reader.read(&mut &big[..]), Err(WireError::Malformed(_))));
    assert!(matches!(Frame::decode(99, &[]), Err(WireError::UnexpectedKind(99))));

    let mut bytes = Frame::Disconnect { reason: "x".into() }.encode();
    bytes.push(0);
    assert!(matches!(
        Frame::decode(bytes[4], &bytes[5..]),
        Err(WireError::Malformed(_))
    ));
}

#[test]
fn closed_stream_is_a_disconnect() {
    let bytes = Frame::Register { name: "a".into() }.encode();
    let mut reader = FrameReader::default();
    let mut src = &bytes[..bytes.len() - 1];
    assert!(matches!(reader.read(&mut src), Err(WireError::Disconnected(_))));
}

fn chase_config() -> jade_core::env::RunConfig {
    let p = chase::ChaseParams {
        max_ticks: 400,
        ..Default::default()
    };
    load_config(&chase::chase_config(&p, 5), &Assets::new()).unwrap()
}

#[test]
fn remote_predator_gives_the_same_log() {
    let cfg = chase_config();
    let (_, local) = run(&cfg, &RunOptions::default()).unwrap();

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let spec = cfg.agents.iter().find(|a| a.name == "predator").unwrap().clone();
    let agent = thread::spawn(move || {
        let mut stream = TcpStream::connect(addr).unwrap();
        serve_agent(&mut stream, &spec, make_policy(&spec.policy).unwrap()).unwrap()
    });
    let options = RunOptions {
        remote: BTreeSet::from(["predator".to_string()]),
        ..RunOptions::default()
    };
    let (_, remote) = run_with_remote(&cfg, &options, &listener, Duration::from_secs(10)).unwrap();
    let session = agent.join().unwrap();
    assert_eq!(session.id, AgentId(0));
    assert_eq!(remote, local);
}

#[test]
fn unexpected_agent_is_turned_away() {
    let cfg = chase_config();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let spec = cfg.agents[0].clone();
    let stranger = thread::spawn(move || {
        let mut stream = TcpStream::connect(addr).unwrap();
        write_frame(&mut stream, &Frame::Register { name: "nobody".into() }).unwrap();
        let mut reader = FrameReader::default();
        let reply = loop {
            if let Some(f) = reader.read(&mut stream).unwrap() {
                break f;
            }
        };
        assert!(matches!(reply, Frame::Disconnect { .. }));
        // then the real one
        let mut stream = TcpStream::connect(addr).unwrap();
        serve_agent(&mut stream, &spec, make_policy(&spec.policy).unwrap()).unwrap()
    });
    let options = RunOptions {
        remote: BTreeSet::from(["predator".to_string()]),
        max_ticks: Some(20),
        ..RunOptions::default()
    };
    let (report, _) = run_with_remote(&cfg, &options, &listener, Duration::from_secs(10)).unwrap();
    assert_eq!(report.ticks, 20);
    assert_eq!(stranger.join().unwrap().ticks, 20);
}

#[test]
fn remote_needs_a_known_agent() {
    let cfg = chase_config();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let options = RunOptions {
        remote: BTreeSet::from(["ghost".to_string()]),
        ..RunOptions::default()
    };
    assert!(run_with_remote(&cfg, &options, &listener, Duration::from_secs(1)).is_err());
    assert!(run(
        &cfg,
        &RunOptions {
            remote: BTreeSet::from(["predator".to_string()]),
            ..RunOptions::default()
        }
    )
    .is_err());
}

#[test]
fn nobody_attaching_times_out() {
    let cfg = chase_config();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let options = RunOptions {
        remote: BTreeSet::from(["predator".to_string()]),
        ..RunOptions::default()
    };
    let started = std::time::Instant::now();
    let err = run_with_remote(&cfg, &options, &listener, Duration::from_millis(200)).unwrap_err();
    assert!(err.to_string().contains("predator"), "{err}");
    assert!(started.elapsed() < Duration::from_secs(5));
}
