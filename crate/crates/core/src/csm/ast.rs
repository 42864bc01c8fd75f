use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

/// Source location. Locations are metadata: they never affect equality.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinaryOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 3,
            BinaryOp::Add | BinaryOp::Sub => 4,
            BinaryOp::Mul | BinaryOp::Div => 5,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Or => "or",
            BinaryOp::And => "and",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// Built-in functions of the guard/action language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Func {
    Abs,
    Sqrt,
    Sin,
    Cos,
    Atan2,
    Min,
    Max,
    Clamp,
    /// Wrap an angle into `[-π, π)`.
    Wrap,
    /// Uniform sample in `[0, 1)` from the agent's random stream.
    Rand,
    Vec,
    Len,
    Angle,
    Dist,
}

impl Func {
    pub const ALL: [Func; 14] = [
        Func::Abs,
        Func::Sqrt,
        Func::Sin,
        Func::Cos,
        Func::Atan2,
        Func::Min,
        Func::Max,
        Func::Clamp,
        Func::Wrap,
        Func::Rand,
        Func::Vec,
        Func::Len,
        Func::Angle,
        Func::Dist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Atan2 => "atan2",
            Func::Min => "min",
            Func::Max => "max",
            Func::Clamp => "clamp",
            Func::Wrap => "wrap",
            Func::Rand => "rand",
            Func::Vec => "vec",
            Func::Len => "len",
            Func::Angle => "angle",
            Func::Dist => "dist",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Rand => 0,
            Func::Abs | Func::Sqrt | Func::Sin | Func::Cos | Func::Wrap | Func::Len | Func::Angle => 1,
            Func::Atan2 | Func::Min | Func::Max | Func::Vec | Func::Dist => 2,
            Func::Clamp => 3,
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    Bool(bool),
    Pi,
    /// Payload of the event that triggered the transition.
    Payload,
    Var(String),
    Field(Box<Expr>, Axis),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    /// Binding strength used by the printer; atoms bind tightest.
    pub fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Unary(..) => 6,
            Expr::Field(..) => 7,
            _ => 8,
        }
    }

    pub fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Var(name) => f(name),
            Expr::Field(e, _) | Expr::Unary(_, e) => e.visit_vars(f),
            Expr::Binary(_, l, r) => {
                l.visit_vars(f);
                r.visit_vars(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit_vars(f)),
            Expr::Num(_) | Expr::Bool(_) | Expr::Pi | Expr::Payload => {}
        }
    }

    pub fn uses_payload(&self) -> bool {
        match self {
            Expr::Payload => true,
            Expr::Field(e, _) | Expr::Unary(_, e) => e.uses_payload(),
            Expr::Binary(_, l, r) => l.uses_payload() || r.uses_payload(),
            Expr::Call(_, args) => args.iter().any(Expr::uses_payload),
            Expr::Num(_) | Expr::Bool(_) | Expr::Pi | Expr::Var(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    SetWheels(Expr, Expr),
    Assign(String, Expr),
    Emit(String, Option<Expr>),
    /// Destination is an agent name, a group name, or `*` for broadcast.
    Send(String, Option<Expr>),
    Pick,
    Drop,
}

impl Action {
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            Action::SetWheels(l, r) => vec![l, r],
            Action::Assign(_, e) => vec![e],
            Action::Emit(_, e) | Action::Send(_, e) => e.iter().collect(),
            Action::Pick | Action::Drop => vec![],
        }
    }
}

pub const ANY: &str = "ANY";
pub const TICK: &str = "TICK";
pub const MSG: &str = "MSG";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trigger {
    Event(String),
    /// Matches any non-empty event set.
    Any,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub trigger: Trigger,
    pub guard: Option<Expr>,
    pub target: String,
    pub actions: Vec<Action>,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub name: String,
    /// Outgoing transitions in declaration order.
    pub transitions: Vec<Transition>,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub name: String,
    pub initial: String,
    pub states: Vec<State>,
    #[serde(skip)]
    pub span: Span,
    /// Where the initial state is named.
    #[serde(skip)]
    pub initial_span: Span,
}

impl Machine {
    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VarInit {
    Scalar(f64),
    Position(Vec2),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDecl {
    pub name: String,
    pub init: VarInit,
    #[serde(skip)]
    pub span: Span,
}

/// A behavior document: declared external events, memory variables, and a
/// set of concurrently stepped machines.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CsmDocument {
    pub inputs: Vec<String>,
    pub vars: Vec<VarDecl>,
    pub machines: Vec<Machine>,
}

impl CsmDocument {
    /// Every event name the document can react to from outside or produce itself.
    pub fn event_scope(&self) -> Vec<&str> {
        let mut scope: Vec<&str> = vec![TICK, MSG];
        scope.extend(self.inputs.iter().map(String::as_str));
        for m in &self.machines {
            for s in &m.states {
                for t in &s.transitions {
                    for a in &t.actions {
                        if let Action::Emit(name, _) = a {
                            scope.push(name);
                        }
                    }
                }
            }
        }
        scope.sort_unstable();
        scope.dedup();
        scope
    }

    pub fn is_empty(&self) -> bool {
        self.machines.is_empty()
    }
}
