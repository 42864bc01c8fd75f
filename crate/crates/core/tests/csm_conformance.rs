mod common;

use common::csm_traces::{run_trace, TRACES};
use jade_core::csm::*;
use jade_core::geometry::Vec2;
use proptest::prelude::*;

#[test]
fn hand_written_traces() {
    assert_eq!(TRACES.len(), 12);
    let failures: Vec<String> = TRACES
        .iter()
        .filter_map(|t| run_trace(t).err().map(|e| format!("{}: {e}", t.name)))
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn printer_output_is_canonical() {
    let doc = parse_csm(
        "input GO;var k=2;pos p=(1,-1);\
         machine m{initial A;state A{on GO if not (k>1 and true)or -k<=(1-2)-3->B do set_wheels(-(1+k), k*(2+3)),emit(X,p.x),send(\"g\");}state B{}}",
    )
    .unwrap();
    let expected = r#"input GO;
var k = 2;
pos p = (1, -1);

machine m {
  initial A;
  state A {
    on GO if not (k > 1 and true) or -k <= 1 - 2 - 3 -> B do set_wheels(-(1 + k), k * (2 + 3)), emit(X, p.x), send("g");
  }
  state B {}
}
"#;
    assert_eq!(print_csm(&doc), expected);
}

#[test]
fn right_nested_operators_keep_parentheses() {
    let doc =
        parse_csm("var a = 0; machine m { initial A; state A { on TICK if a - (a - 1) > a / (a * 2) -> A } }").unwrap();
    let text = print_csm(&doc);
    assert!(text.contains("a - (a - 1) > a / (a * 2)"), "{text}");
    assert_eq!(parse_csm(&text).unwrap(), doc);
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,5}".prop_filter("reserved", |s| !is_keyword(s))
}

fn event() -> impl Strategy<Value = String> {
    "[A-Z][A-Z_]{0,4}".prop_filter("reserved", |s| s != ANY)
}

fn number() -> impl Strategy<Value = f64> {
    prop_oneof![(0u32..1000).prop_map(f64::from), (0.0f64..1e6), (0.0f64..1e-3),]
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        number().prop_map(Expr::Num),
        any::<bool>().prop_map(Expr::Bool),
        Just(Expr::Pi),
        Just(Expr::Payload),
        ident().prop_map(Expr::Var),
    ];
    leaf.prop_recursive(4, 32, 3, |inner| {
        let binop = prop_oneof![
            Just(BinaryOp::Or),
            Just(BinaryOp::And),
            Just(BinaryOp::Eq),
            Just(BinaryOp::Ne),
            Just(BinaryOp::Lt),
            Just(BinaryOp::Le),
            Just(BinaryOp::Gt),
            Just(BinaryOp::Ge),
            Just(BinaryOp::Add),
            Just(BinaryOp::Sub),
            Just(BinaryOp::Mul),
            Just(BinaryOp::Div),
        ];
        let axis = prop_oneof![Just(Axis::X), Just(Axis::Y)];
        let unop = prop_oneof![Just(UnaryOp::Neg), Just(UnaryOp::Not)];
        prop_oneof![
            (binop, inner.clone(), inner.clone()).prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
            (unop, inner.clone()).prop_map(|(op, e)| Expr::Unary(op, Box::new(e))),
            (inner.clone(), axis).prop_map(|(e, a)| Expr::Field(Box::new(e), a)),
            (
                prop::sample::select(Func::ALL.to_vec()),
                prop::collection::vec(inner, 3)
            )
                .prop_map(|(f, mut args)| {
                    args.truncate(f.arity());
                    Expr::Call(f, args)
                }),
        ]
    })
}

fn action() -> impl Strategy<Value = Action> {
    prop_oneof![
        (expr(), expr()).prop_map(|(l, r)| Action::SetWheels(l, r)),
        (ident(), expr()).prop_map(|(v, e)| Action::Assign(v, e)),
        (event(), prop::option::of(expr())).prop_map(|(n, e)| Action::Emit(n, e)),
        ("[a-z*][a-z0-9_]{0,5}", prop::option::of(expr())).prop_map(|(d, e)| Action::Send(d, e)),
        Just(Action::Pick),
        Just(Action::Drop),
    ]
}

fn machine(name: String) -> impl Strategy<Value = Machine> {
    (1usize..4).prop_flat_map(move |n_states| {
        let name = name.clone();
        let names: Vec<String> = (0..n_states).map(|i| format!("S{i}")).collect();
        let transition = (
            prop_oneof![Just(Trigger::Any), event().prop_map(Trigger::Event)],
            prop::option::of(expr()),
            0..n_states,
            prop::collection::vec(action(), 0..3),
        );
        (
            0..n_states,
            prop::collection::vec(prop::collection::vec(transition, 0..3), n_states),
        )
            .prop_map(move |(initial, per_state)| Machine {
                name: name.clone(),
                initial: names[initial].clone(),
                states: per_state
                    .into_iter()
                    .enumerate()
                    .map(|(i, ts)| State {
                        name: names[i].clone(),
                        transitions: ts
                            .into_iter()
                            .map(|(trigger, guard, target, actions)| Transition {
                                trigger,
                                guard,
                                target: names[target].clone(),
                                actions,
                                span: Span::default(),
                            })
                            .collect(),
                        span: Span::default(),
                    })
                    .collect(),
                span: Span::default(),
                initial_span: Span::default(),
            })
    })
}

fn document() -> impl Strategy<Value = CsmDocument> {
    let var = (
        ident(),
        prop_oneof![
            (-1e3f64..1e3).prop_map(VarInit::Scalar),
            (-1e3f64..1e3, -1e3f64..1e3).prop_map(|(x, y)| VarInit::Position(Vec2::new(x, y))),
        ],
    );
    (
        prop::collection::vec(event(), 0..3),
        prop::collection::btree_map(ident(), var.prop_map(|v| v.1), 0..3),
        (0usize..3).prop_flat_map(|n| (0..n).map(|i| machine(format!("m{i}"))).collect::<Vec<_>>()),
    )
        .prop_map(|(inputs, vars, machines)| CsmDocument {
            inputs,
            vars: vars
                .into_iter()
                .map(|(name, init)| VarDecl {
                    name,
                    init,
                    span: Span::default(),
                })
                .collect(),
            machines,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn print_parse_round_trip(doc in document()) {
        let text = print_csm(&doc);
        let parsed = parse_csm(&text).map_err(|d| TestCaseError::fail(format!("{d:?}\n{text}")))?;
        prop_assert_eq!(&parsed, &doc);
        prop_assert_eq!(print_csm(&parsed), text);
    }

    #[test]
    fn step_is_deterministic(doc in document(), events in prop::collection::vec(event(), 0..4), seed in any::<u64>()) {
        use rand::SeedableRng;
        let run = || {
            let mut rt = CsmRuntime::new(&doc);
            let mut mem = Memory::for_document(&doc, 8);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let evs: Vec<EventInstance> = events
                .iter()
                .map(|e| EventInstance::new(e.clone(), Origin::Sensor).with_payload(Payload::Scalar(1.0)))
                .collect();
            let out = rt.step(&evs, &mut mem, &mut rng);
            (out.map(|o| (o.effects, o.emitted, o.fired.len())), rt.states().join(","), mem)
        };
        let a = run();
        let b = run();
        prop_assert_eq!(&a.1, &b.1);
        prop_assert_eq!(&a.2, &b.2);
        match (&a.0, &b.0) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x, y);
                prop_assert!(x.2 <= doc.machines.len());
            }
            (Err(x), Err(y)) => prop_assert_eq!(x, y),
            _ => prop_assert!(false, "outcomes differ"),
        }
    }
}
