use std::fmt::Write;

use super::ast::*;

fn number(n: f64) -> String {
    format!("{n}")
}

fn operand(out: &mut String, e: &Expr, needs_parens: bool) {
    if needs_parens {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

pub fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Num(n) => out.push_str(&number(*n)),
        Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Pi => out.push_str("pi"),
        Expr::Payload => out.push_str("payload"),
        Expr::Var(v) => out.push_str(v),
        Expr::Field(inner, axis) => {
            operand(out, inner, inner.precedence() < e.precedence());
            out.push_str(match axis {
                Axis::X => ".x",
                Axis::Y => ".y",
            });
        }
        Expr::Unary(op, inner) => {
            out.push_str(match op {
                UnaryOp::Neg => "-",
                UnaryOp::Not => "not ",
            });
            operand(out, inner, inner.precedence() < e.precedence());
        }
        Expr::Binary(op, l, r) => {
            let p = op.precedence();
            operand(out, l, l.precedence() < p);
            let _ = write!(out, " {} ", op.symbol());
            operand(out, r, r.precedence() <= p);
        }
        Expr::Call(func, args) => {
            out.push_str(func.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a);
            }
            out.push(')');
        }
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn write_action(out: &mut String, a: &Action) {
    match a {
        Action::SetWheels(l, r) => {
            let _ = write!(out, "set_wheels({}, {})", expr_to_string(l), expr_to_string(r));
        }
        Action::Assign(v, e) => {
            let _ = write!(out, "{v} = {}", expr_to_string(e));
        }
        Action::Emit(ev, payload) => {
            let _ = write!(out, "emit({ev}");
            if let Some(p) = payload {
                let _ = write!(out, ", {}", expr_to_string(p));
            }
            out.push(')');
        }
        Action::Send(dest, payload) => {
            let _ = write!(out, "send(\"{dest}\"");
            if let Some(p) = payload {
                let _ = write!(out, ", {}", expr_to_string(p));
            }
            out.push(')');
        }
        Action::Pick => out.push_str("pick"),
        Action::Drop => out.push_str("drop"),
    }
}

/// Canonical text of a behavior document; parsing it yields the same document.
pub fn print_csm(doc: &CsmDocument) -> String {
    let mut out = String::new();
    if !doc.inputs.is_empty() {
        let _ = writeln!(out, "input {};", doc.inputs.join(", "));
    }
    for v in &doc.vars {
        match v.init {
            VarInit::Scalar(n) => {
                let _ = writeln!(out, "var {} = {};", v.name, number(n));
            }
            VarInit::Position(p) => {
                let _ = writeln!(out, "pos {} = ({}, {});", v.name, number(p.x), number(p.y));
            }
        }
    }
    for m in &doc.machines {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "machine {} {{", m.name);
        let _ = writeln!(out, "  initial {};", m.initial);
        for s in &m.states {
            if s.transitions.is_empty() {
                let _ = writeln!(out, "  state {} {{}}", s.name);
                continue;
            }
            let _ = writeln!(out, "  state {} {{", s.name);
            for t in &s.transitions {
                out.push_str("    on ");
                match &t.trigger {
                    Trigger::Any => out.push_str(ANY),
                    Trigger::Event(ev) => out.push_str(ev),
                }
                if let Some(g) = &t.guard {
                    let _ = write!(out, " if {}", expr_to_string(g));
                }
                let _ = write!(out, " -> {}", t.target);
                for (i, a) in t.actions.iter().enumerate() {
                    out.push_str(if i == 0 { " do " } else { ", " });
                    write_action(&mut out, a);
                }
                out.push_str(";\n");
            }
            out.push_str("  }\n");
        }
        out.push_str("}\n");
    }
    out
}
