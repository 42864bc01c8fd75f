use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::*;
use crate::geometry::{normalize_angle, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Num(f64),
    Bool(bool),
    Vec(Vec2),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::Bool(_) => "bool",
            Value::Vec(_) => "vector",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Vec(v) => write!(f, "({}, {})", v.x, v.y),
        }
    }
}

/// Data carried by an event or a message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Scalar(f64),
    Vector(Vec2),
}

impl Payload {
    pub fn to_value(self) -> Value {
        match self {
            Payload::Scalar(n) => Value::Num(n),
            Payload::Vector(v) => Value::Vec(v),
        }
    }

    pub fn from_value(v: Value) -> Option<Payload> {
        match v {
            Value::Num(n) => Some(Payload::Scalar(n)),
            Value::Vec(v) => Some(Payload::Vector(v)),
            Value::Bool(b) => Some(Payload::Scalar(if b { 1.0 } else { 0.0 })),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Sensor,
    Machine,
    Message,
    Strategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventInstance {
    pub name: String,
    pub payload: Option<Payload>,
    pub origin: Origin,
}

impl EventInstance {
    pub fn new(name: impl Into<String>, origin: Origin) -> Self {
        Self {
            name: name.into(),
            payload: None,
            origin,
        }
    }

    pub fn with_payload(mut self, payload: Payload) -> Self {
        self.payload = Some(payload);
        self
    }
}

/// Agent memory: named scalars and positions plus a bounded event history.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Memory {
    vars: BTreeMap<String, Value>,
    history: VecDeque<(u64, String)>,
    capacity: usize,
}

impl Memory {
    pub fn new(capacity: usize) -> Self {
        Self {
            vars: BTreeMap::new(),
            history: VecDeque::with_capacity(capacity.min(1024)),
            capacity,
        }
    }

    /// Memory pre-populated with the document's declared variables.
    pub fn for_document(doc: &CsmDocument, capacity: usize) -> Self {
        let mut m = Self::new(capacity);
        for v in &doc.vars {
            let value = match v.init {
                VarInit::Scalar(n) => Value::Num(n),
                VarInit::Position(p) => Value::Vec(p),
            };
            m.vars.insert(v.name.clone(), value);
        }
        m
    }

    pub fn get(&self, name: &str) -> Option<Value> {
        self.vars.get(name).copied()
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        match self.vars.get(name) {
            Some(Value::Num(n)) => Some(*n),
            _ => None,
        }
    }

    pub fn position(&self, name: &str) -> Option<Vec2> {
        match self.vars.get(name) {
            Some(Value::Vec(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn set_scalar(&mut self, name: &str, value: f64) {
        self.vars.insert(name.to_string(), Value::Num(value));
    }

    pub fn set_position(&mut self, name: &str, value: Vec2) {
        self.vars.insert(name.to_string(), Value::Vec(value));
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, Value)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn record(&mut self, tick: u64, event: &str) {
        if self.capacity == 0 {
            return;
        }
        while self.history.len() >= self.capacity {
            self.history.pop_front();
        }
        self.history.push_back((tick, event.to_string()));
    }

    /// Oldest first.
    pub fn history(&self) -> impl Iterator<Item = (u64, &str)> {
        self.history.iter().map(|(t, e)| (*t, e.as_str()))
    }

    /// Assignment keeps a variable's declared kind.
    fn assign(&mut self, name: &str, value: Value) -> Result<(), EvalError> {
        match (self.vars.get_mut(name), value) {
            (None, _) => Err(EvalError::UnknownVariable(name.to_string())),
            (Some(slot @ Value::Num(_)), Value::Num(_)) | (Some(slot @ Value::Vec(_)), Value::Vec(_)) => {
                *slot = value;
                Ok(())
            }
            (Some(slot), v) => Err(EvalError::Type {
                context: format!("assignment to `{name}`"),
                expected: slot.type_name(),
                found: v.type_name(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("{context}: expected {expected}, found {found}")]
    Type {
        context: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("`payload` used without a triggering event payload")]
    NoPayload,
    #[error("{0} produced a non-finite number")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("machine `{machine}`, state `{state}`: {source}")]
pub struct CsmError {
    pub machine: String,
    pub state: String,
    pub source: EvalError,
}

struct Ctx<'a> {
    memory: &'a Memory,
    payload: Option<Payload>,
}

fn num(v: Value, context: &str) -> Result<f64, EvalError> {
    match v {
        Value::Num(n) => Ok(n),
        other => Err(EvalError::Type {
            context: context.to_string(),
            expected: "number",
            found: other.type_name(),
        }),
    }
}

fn boolean(v: Value, context: &str) -> Result<bool, EvalError> {
    match v {
        Value::Bool(b) => Ok(b),
        other => Err(EvalError::Type {
            context: context.to_string(),
            expected: "bool",
            found: other.type_name(),
        }),
    }
}

fn vector(v: Value, context: &str) -> Result<Vec2, EvalError> {
    match v {
        Value::Vec(p) => Ok(p),
        other => Err(EvalError::Type {
            context: context.to_string(),
            expected: "vector",
            found: other.type_name(),
        }),
    }
}

fn finite(v: Value, context: &str) -> Result<Value, EvalError> {
    let ok = match v {
        Value::Num(n) => n.is_finite(),
        Value::Vec(p) => p.x.is_finite() && p.y.is_finite(),
        Value::Bool(_) => true,
    };
    if ok {
        Ok(v)
    } else {
        Err(EvalError::NonFinite(context.to_string()))
    }
}

fn eval(e: &Expr, ctx: &Ctx, rng: &mut dyn RngCore) -> Result<Value, EvalError> {
    match e {
        Expr::Num(n) => Ok(Value::Num(*n)),
        Expr::Bool(b) => Ok(Value::Bool(*b)),
        Expr::Pi => Ok(Value::Num(std::f64::consts::PI)),
        Expr::Payload => ctx.payload.map(Payload::to_value).ok_or(EvalError::NoPayload),
        Expr::Var(name) => ctx
            .memory
            .get(name)
            .ok_or_else(|| EvalError::UnknownVariable(name.clone())),
        Expr::Field(inner, axis) => {
            let v = vector(eval(inner, ctx, rng)?, "field access")?;
            Ok(Value::Num(match axis {
                Axis::X => v.x,
                Axis::Y => v.y,
            }))
        }
        Expr::Unary(UnaryOp::Neg, inner) => match eval(inner, ctx, rng)? {
            Value::Num(n) => Ok(Value::Num(-n)),
            Value::Vec(v) => Ok(Value::Vec(-v)),
            other => Err(EvalError::Type {
                context: "negation".into(),
                expected: "number or vector",
                found: other.type_name(),
            }),
        },
        Expr::Unary(UnaryOp::Not, inner) => Ok(Value::Bool(!boolean(eval(inner, ctx, rng)?, "not")?)),
        Expr::Binary(op, l, r) => eval_binary(*op, l, r, ctx, rng),
        Expr::Call(func, args) => {
            let mut vals = Vec::with_capacity(args.len());
            for a in args {
                vals.push(eval(a, ctx, rng)?);
            }
            eval_call(*func, &vals, rng)
        }
    }
}

fn eval_binary(op: BinaryOp, l: &Expr, r: &Expr, ctx: &Ctx, rng: &mut dyn RngCore) -> Result<Value, EvalError> {
    let sym = op.symbol();
    match op {
        BinaryOp::And => {
            if !boolean(eval(l, ctx, rng)?, sym)? {
                return Ok(Value::Bool(false));
            }
            return Ok(Value::Bool(boolean(eval(r, ctx, rng)?, sym)?));
        }
        BinaryOp::Or => {
            if boolean(eval(l, ctx, rng)?, sym)? {
                return Ok(Value::Bool(true));
            }
            return Ok(Value::Bool(boolean(eval(r, ctx, rng)?, sym)?));
        }
        _ => {}
    }
    let a = eval(l, ctx, rng)?;
    let b = eval(r, ctx, rng)?;
    let v = match (op, a, b) {
        (BinaryOp::Eq, a, b) | (BinaryOp::Ne, a, b) => {
            if a.type_name() != b.type_name() {
                return Err(EvalError::Type {
                    context: format!("`{sym}`"),
                    expected: a.type_name(),
                    found: b.type_name(),
                });
            }
            Value::Bool((a == b) == (op == BinaryOp::Eq))
        }
        (BinaryOp::Lt, a, b) => Value::Bool(num(a, sym)? < num(b, sym)?),
        (BinaryOp::Le, a, b) => Value::Bool(num(a, sym)? <= num(b, sym)?),
        (BinaryOp::Gt, a, b) => Value::Bool(num(a, sym)? > num(b, sym)?),
        (BinaryOp::Ge, a, b) => Value::Bool(num(a, sym)? >= num(b, sym)?),
        (BinaryOp::Add, Value::Vec(x), Value::Vec(y)) => Value::Vec(x + y),
        (BinaryOp::Sub, Value::Vec(x), Value::Vec(y)) => Value::Vec(x - y),
        (BinaryOp::Mul, Value::Vec(x), Value::Num(k)) | (BinaryOp::Mul, Value::Num(k), Value::Vec(x)) => {
            Value::Vec(x * k)
        }
        (BinaryOp::Div, Value::Vec(x), Value::Num(k)) => Value::Vec(x / k),
        (BinaryOp::Add, a, b) => Value::Num(num(a, sym)? + num(b, sym)?),
        (BinaryOp::Sub, a, b) => Value::Num(num(a, sym)? - num(b, sym)?),
        (BinaryOp::Mul, a, b) => Value::Num(num(a, sym)? * num(b, sym)?),
        (BinaryOp::Div, a, b) => Value::Num(num(a, sym)? / num(b, sym)?),
        (BinaryOp::And | BinaryOp::Or, ..) => unreachable!("short-circuit handled above"),
    };
    finite(v, &format!("`{sym}`"))
}

fn eval_call(func: Func, args: &[Value], rng: &mut dyn RngCore) -> Result<Value, EvalError> {
    let name = func.name();
    let n = |i: usize| num(args[i], name);
    let v = match func {
        Func::Abs => Value::Num(n(0)?.abs()),
        Func::Sqrt => Value::Num(n(0)?.sqrt()),
        Func::Sin => Value::Num(n(0)?.sin()),
        Func::Cos => Value::Num(n(0)?.cos()),
        Func::Atan2 => Value::Num(n(0)?.atan2(n(1)?)),
        Func::Min => Value::Num(n(0)?.min(n(1)?)),
        Func::Max => Value::Num(n(0)?.max(n(1)?)),
        Func::Clamp => {
            let (x, lo, hi) = (n(0)?, n(1)?, n(2)?);
            Value::Num(x.max(lo).min(hi))
        }
        Func::Wrap => Value::Num(normalize_angle(n(0)?)),
        Func::Rand => Value::Num(rng.gen::<f64>()),
        Func::Vec => Value::Vec(Vec2::new(n(0)?, n(1)?)),
        Func::Len => Value::Num(vector(args[0], name)?.length()),
        Func::Angle => Value::Num(vector(args[0], name)?.angle()),
        Func::Dist => Value::Num(vector(args[0], name)?.distance(vector(args[1], name)?)),
    };
    finite(v, &format!("`{name}`"))
}

/// Evaluate an expression against memory outside of a machine step.
pub fn evaluate(
    e: &Expr,
    memory: &Memory,
    payload: Option<Payload>,
    rng: &mut dyn RngCore,
) -> Result<Value, EvalError> {
    eval(e, &Ctx { memory, payload }, rng)
}

/// Externally visible consequence of a fired transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Effect {
    SetWheels { left: f64, right: f64 },
    Send { dest: String, payload: Option<Payload> },
    Pick,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fired {
    pub machine: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepResult {
    pub effects: Vec<Effect>,
    /// Events for the next step only.
    pub emitted: Vec<EventInstance>,
    pub fired: Vec<Fired>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineInstance {
    pub machine: Machine,
    pub current: usize,
    pub fired: u64,
}

impl MachineInstance {
    pub fn current_state(&self) -> &str {
        &self.machine.states[self.current].name
    }
}

/// Synchronously composed machines of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct CsmRuntime {
    machines: Vec<MachineInstance>,
}

impl CsmRuntime {
    /// Build from a document whose cross references were resolved by the parser.
    pub fn new(doc: &CsmDocument) -> Self {
        let machines = doc
            .machines
            .iter()
            .map(|m| MachineInstance {
                current: m.state_index(&m.initial).unwrap_or(0),
                machine: m.clone(),
                fired: 0,
            })
            .collect();
        Self { machines }
    }

    pub fn machines(&self) -> &[MachineInstance] {
        &self.machines
    }

    pub fn states(&self) -> Vec<&str> {
        self.machines.iter().map(MachineInstance::current_state).collect()
    }

    /// One synchronous step.
    ///
    /// Each machine picks the first transition of its current state whose
    /// trigger is present (`ANY` needs a non-empty set) and whose guard holds.
    /// All guards see memory as it was when the step began; the chosen
    /// transitions then run their actions in machine declaration order on live
    /// memory. Emitted events are returned for the caller to feed into the next
    /// step.
    pub fn step(
        &mut self,
        events: &[EventInstance],
        memory: &mut Memory,
        rng: &mut dyn RngCore,
    ) -> Result<StepResult, CsmError> {
        let snapshot = memory.clone();
        let mut chosen: Vec<(usize, usize, Option<Payload>)> = Vec::new();

        for (mi, inst) in self.machines.iter().enumerate() {
            let state = &inst.machine.states[inst.current];
            let err = |source| CsmError {
                machine: inst.machine.name.clone(),
                state: state.name.clone(),
                source,
            };
            'transitions: for (ti, t) in state.transitions.iter().enumerate() {
                let candidates: Vec<Option<Payload>> = match &t.trigger {
                    Trigger::Any if events.is_empty() => continue,
                    Trigger::Any => vec![None],
                    Trigger::Event(name) => events.iter().filter(|e| &e.name == name).map(|e| e.payload).collect(),
                };
                for payload in candidates {
                    let holds = match &t.guard {
                        None => true,
                        Some(g) => {
                            let ctx = Ctx {
                                memory: &snapshot,
                                payload,
                            };
                            boolean(eval(g, &ctx, rng).map_err(err)?, "guard").map_err(err)?
                        }
                    };
                    if holds {
                        chosen.push((mi, ti, payload));
                        break 'transitions;
                    }
                }
            }
        }

        let mut result = StepResult::default();
        for (mi, ti, payload) in chosen {
            let inst = &mut self.machines[mi];
            let from = inst.current;
            let t = &inst.machine.states[from].transitions[ti];
            let err = |source| CsmError {
                machine: inst.machine.name.clone(),
                state: inst.machine.states[from].name.clone(),
                source,
            };
            for action in &t.actions {
                let value = |e: &Expr, memory: &Memory, rng: &mut dyn RngCore| {
                    eval(e, &Ctx { memory, payload }, rng).map_err(err)
                };
                match action {
                    Action::SetWheels(l, r) => {
                        let left = num(value(l, memory, rng)?, "set_wheels").map_err(err)?;
                        let right = num(value(r, memory, rng)?, "set_wheels").map_err(err)?;
                        result.effects.push(Effect::SetWheels { left, right });
                    }
                    Action::Assign(name, e) => {
                        let v = value(e, memory, rng)?;
                        memory.assign(name, v).map_err(err)?;
                    }
                    Action::Emit(name, e) => {
                        let payload = match e {
                            Some(e) => Payload::from_value(value(e, memory, rng)?),
                            None => None,
                        };
                        result.emitted.push(EventInstance {
                            name: name.clone(),
                            payload,
                            origin: Origin::Machine,
                        });
                    }
                    Action::Send(dest, e) => {
                        let payload = match e {
                            Some(e) => Payload::from_value(value(e, memory, rng)?),
                            None => None,
                        };
                        result.effects.push(Effect::Send {
                            dest: dest.clone(),
                            payload,
                        });
                    }
                    Action::Pick => result.effects.push(Effect::Pick),
                    Action::Drop => result.effects.push(Effect::Drop),
                }
            }
            let to = inst
                .machine
                .state_index(&t.target)
                .expect("transition targets are resolved at parse time");
            inst.current = to;
            inst.fired += 1;
            result.fired.push(Fired { machine: mi, from, to });
        }
        Ok(result)
    }
}
