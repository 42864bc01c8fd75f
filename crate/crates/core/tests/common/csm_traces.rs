//! Hand-written automaton traces. Each step lists the externally supplied
//! events, the machine states after the step, and the observable output.
//! Events emitted by machines are fed back on the following step only.

use jade_core::csm::{parse_csm, validate_csm, CsmRuntime, Effect, EventInstance, Memory, Origin, Payload, Value};
use jade_core::geometry::Vec2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Step {
    /// `NAME` or `NAME=number`.
    pub inputs: &'static [&'static str],
    /// Comma separated current states, one per machine.
    pub states: &'static str,
    /// Space separated effects then emitted events (`>NAME` / `>NAME(payload)`).
    pub output: &'static str,
    /// Space separated `var=value` checks after the step.
    pub memory: &'static str,
}

pub struct Trace {
    pub name: &'static str,
    pub csm: &'static str,
    pub steps: &'static [Step],
}

const fn step(
    inputs: &'static [&'static str],
    states: &'static str,
    output: &'static str,
    memory: &'static str,
) -> Step {
    Step {
        inputs,
        states,
        output,
        memory,
    }
}

pub const TRACES: &[Trace] = &[
    Trace {
        name: "no matching trigger leaves everything unchanged",
        csm: "input GO, OTHER;\nmachine m { initial A; state A { on GO -> B do set_wheels(1, 1) } state B {} }",
        steps: &[
            step(&["OTHER"], "A", "", ""),
            step(&[], "A", "", ""),
            step(&["GO"], "B", "wheels(1,1)", ""),
        ],
    },
    Trace {
        name: "emitted events are invisible in the producing step",
        csm: "input GO;\n\
              machine a { initial A0; state A0 { on GO -> A1 do emit(X) } state A1 {} }\n\
              machine b { initial B0; state B0 { on X -> B1 do set_wheels(0.5, 0.5) } state B1 {} }",
        steps: &[
            step(&["GO"], "A1,B0", ">X", ""),
            step(&[], "A1,B1", "wheels(0.5,0.5)", ""),
            step(&[], "A1,B1", "", ""),
        ],
    },
    Trace {
        name: "first declared transition wins",
        csm: "input GO; var gate = 0;\n\
              machine m { initial S;\n\
                state S { on GO if gate > 0 -> P; on GO -> Q; on GO -> R }\n\
                state P { on GO -> S do gate = 0 }\n\
                state Q { on GO -> S do gate = 1 }\n\
                state R {} }",
        steps: &[
            step(&["GO"], "Q", "", "gate=0"),
            step(&["GO"], "S", "", "gate=1"),
            step(&["GO"], "P", "", "gate=1"),
            step(&["GO"], "S", "", "gate=0"),
        ],
    },
    Trace {
        name: "concurrent machines fire together in declaration order",
        csm: "input GO;\n\
              machine first { initial A; state A { on GO -> A do set_wheels(1, 2), send(\"left\", 1) } }\n\
              machine second { initial A; state A { on GO -> A do set_wheels(3, 4), send(\"right\", 2) } }",
        steps: &[step(
            &["GO"],
            "A,A",
            "wheels(1,2) send(left,1) wheels(3,4) send(right,2)",
            "",
        )],
    },
    Trace {
        name: "ANY needs a non-empty event set",
        csm: "input E1, E2;\nmachine m { initial A; state A { on ANY -> B } state B { on ANY -> A } }",
        steps: &[
            step(&[], "A", "", ""),
            step(&["E1"], "B", "", ""),
            step(&["E2", "E1"], "A", "", ""),
            step(&[], "A", "", ""),
        ],
    },
    Trace {
        name: "TICK driven timeout",
        csm: "var n = 0;\n\
              machine timer { initial WAIT;\n\
                state WAIT { on TICK if n >= 2 -> DONE do emit(TIMEOUT); on TICK -> WAIT do n = n + 1 }\n\
                state DONE {} }\n\
              machine watcher { initial IDLE; state IDLE { on TIMEOUT -> FIRED do set_wheels(0, 0) } state FIRED {} }",
        steps: &[
            step(&["TICK"], "WAIT,IDLE", "", "n=1"),
            step(&["TICK"], "WAIT,IDLE", "", "n=2"),
            step(&["TICK"], "DONE,IDLE", ">TIMEOUT", "n=2"),
            step(&["TICK"], "DONE,FIRED", "wheels(0,0)", "n=2"),
        ],
    },
    Trace {
        name: "guards read the step-start snapshot, actions read live memory",
        csm: "input GO; var v = 0;\n\
              machine writer { initial A; state A { on GO -> A do v = v + 1 } }\n\
              machine reader { initial A; state A { on GO if v == 0 -> B do set_wheels(v, v) } state B {} }",
        steps: &[
            step(&["GO"], "A,B", "wheels(1,1)", "v=1"),
            step(&["GO"], "A,B", "", "v=2"),
        ],
    },
    Trace {
        name: "payload selects the first matching instance",
        csm: "input SEE; var seen = 0;\n\
              machine m { initial S; state S { on SEE if payload > 0.5 -> S do seen = payload } }",
        steps: &[
            step(&["SEE=0.1", "SEE=0.75", "SEE=0.9"], "S", "", "seen=0.75"),
            step(&["SEE=0.2"], "S", "", "seen=0.75"),
        ],
    },
    Trace {
        name: "vector payloads flow through emit",
        csm: "pos target = (0, 0); var d = 0;\n\
              machine a { initial A; state A { on TICK -> B do emit(AT, vec(3, 4)) } state B {} }\n\
              machine b { initial A; state A { on AT -> A do target = payload, d = len(payload - vec(0, 0)) } }",
        steps: &[
            step(&["TICK"], "B,A", ">AT(3,4)", "d=0"),
            step(&["TICK"], "B,A", "", "d=5 target=(3,4)"),
        ],
    },
    Trace {
        name: "at most one transition per machine per step",
        csm: "input GO;\nmachine m { initial A; state A { on GO -> B } state B { on GO -> C } state C {} }",
        steps: &[
            step(&["GO", "GO"], "B", "", ""),
            step(&["GO"], "C", "", ""),
            step(&["GO"], "C", "", ""),
        ],
    },
    Trace {
        name: "messages and resource actions keep action order",
        csm: "input MSG_ME;\n\
              machine m { initial S;\n\
                state S { on MSG if payload == 7 -> H do pick, send(\"*\", payload * 2), drop }\n\
                state H { on MSG -> S do send(\"team\") } }",
        steps: &[
            step(&["MSG=3"], "S", "", ""),
            step(&["MSG=3", "MSG=7"], "H", "pick send(*,14) drop", ""),
            step(&["MSG=1"], "S", "send(team,-)", ""),
        ],
    },
    Trace {
        name: "ping pong across steps",
        csm: "input START; var hits = 0;\n\
              machine ping { initial IDLE;\n\
                state IDLE { on START -> WAIT do emit(PING) }\n\
                state WAIT { on PONG if hits < 2 -> WAIT do emit(PING), hits = hits + 1; on PONG -> IDLE } }\n\
              machine pong { initial S; state S { on PING -> S do emit(PONG) } }",
        steps: &[
            step(&["START"], "WAIT,S", ">PING", "hits=0"),
            step(&[], "WAIT,S", ">PONG", "hits=0"),
            step(&[], "WAIT,S", ">PING", "hits=1"),
            step(&[], "WAIT,S", ">PONG", "hits=1"),
            step(&[], "WAIT,S", ">PING", "hits=2"),
            step(&[], "WAIT,S", ">PONG", "hits=2"),
            step(&[], "IDLE,S", "", "hits=2"),
            step(&[], "IDLE,S", "", "hits=2"),
        ],
    },
];

fn parse_input(spec: &str) -> EventInstance {
    match spec.split_once('=') {
        Some((name, v)) => {
            EventInstance::new(name, Origin::Sensor).with_payload(Payload::Scalar(v.parse().expect("numeric payload")))
        }
        None => EventInstance::new(spec, Origin::Sensor),
    }
}

fn payload_text(p: &Option<Payload>) -> String {
    match p {
        None => "-".into(),
        Some(Payload::Scalar(n)) => format!("{n}"),
        Some(Payload::Vector(v)) => format!("{},{}", v.x, v.y),
    }
}

fn value_text(v: Value) -> String {
    match v {
        Value::Num(n) => format!("{n}"),
        Value::Bool(b) => format!("{b}"),
        Value::Vec(Vec2 { x, y }) => format!("({x},{y})"),
    }
}

/// Replay one trace, returning the first mismatch.
pub fn run_trace(trace: &Trace) -> Result<(), String> {
    let doc = parse_csm(trace.csm).map_err(|d| format!("parse: {d:?}"))?;
    let diags = validate_csm(&doc);
    if !diags.is_empty() {
        return Err(format!("validation: {diags:?}"));
    }
    let mut runtime = CsmRuntime::new(&doc);
    let mut memory = Memory::for_document(&doc, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut pending: Vec<EventInstance> = Vec::new();

    for (i, s) in trace.steps.iter().enumerate() {
        let mut events: Vec<EventInstance> = s.inputs.iter().map(|e| parse_input(e)).collect();
        events.append(&mut pending);
        let out = runtime
            .step(&events, &mut memory, &mut rng)
            .map_err(|e| format!("step {i}: {e}"))?;

        let states = runtime.states().join(",");
        if states != s.states {
            return Err(format!("step {i}: states {states}, expected {}", s.states));
        }
        let mut parts: Vec<String> = out
            .effects
            .iter()
            .map(|e| match e {
                Effect::SetWheels { left, right } => format!("wheels({left},{right})"),
                Effect::Send { dest, payload } => format!("send({dest},{})", payload_text(payload)),
                Effect::Pick => "pick".into(),
                Effect::Drop => "drop".into(),
            })
            .collect();
        parts.extend(out.emitted.iter().map(|e| match e.payload {
            None => format!(">{}", e.name),
            Some(_) => format!(">{}({})", e.name, payload_text(&e.payload)),
        }));
        let output = parts.join(" ");
        if output != s.output {
            return Err(format!("step {i}: output `{output}`, expected `{}`", s.output));
        }
        for check in s.memory.split_whitespace() {
            let (name, want) = check.split_once('=').expect("var=value");
            let got = memory.get(name).map(value_text).unwrap_or_else(|| "unset".into());
            if got != want {
                return Err(format!("step {i}: {name} = {got}, expected {want}"));
            }
        }
        pending = out.emitted;
    }
    Ok(())
}
