use std::collections::{BTreeSet, VecDeque};

use super::ast::*;
use super::diag::{DiagCode, Diagnostic};

/// Semantic checks over a parsed document.
///
/// Unreachable states and unproduced triggers are warnings; reads or writes of
/// undeclared variables and payload use under `ANY` are errors because the
/// interpreter could not execute them.
pub fn validate_csm(doc: &CsmDocument) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let scope: BTreeSet<&str> = doc.event_scope().into_iter().collect();
    let vars: BTreeSet<&str> = doc.vars.iter().map(|v| v.name.as_str()).collect();

    for m in &doc.machines {
        for name in unreachable_states(m) {
            let span = m
                .states
                .iter()
                .find(|s| s.name == name)
                .map(|s| s.span)
                .unwrap_or_default();
            diags.push(Diagnostic::warning(
                DiagCode::UnreachableState,
                span,
                format!("state `{name}` of machine `{}` is unreachable", m.name),
            ));
        }
        for s in &m.states {
            for t in &s.transitions {
                if let Trigger::Event(ev) = &t.trigger {
                    if !scope.contains(ev.as_str()) {
                        diags.push(Diagnostic::warning(
                            DiagCode::UnknownTrigger,
                            t.span,
                            format!("trigger `{ev}` is never produced by any declared source"),
                        ));
                    }
                }
                let mut exprs: Vec<&Expr> = t.guard.iter().collect();
                for a in &t.actions {
                    exprs.extend(a.exprs());
                    if let Action::Assign(v, _) = a {
                        if !vars.contains(v.as_str()) {
                            diags.push(Diagnostic::error(
                                DiagCode::UndeclaredVariable,
                                t.span,
                                format!("assignment to undeclared variable `{v}`"),
                            ));
                        }
                    }
                }
                let mut missing = BTreeSet::new();
                for e in &exprs {
                    e.visit_vars(&mut |v| {
                        if !vars.contains(v) {
                            missing.insert(v.to_string());
                        }
                    });
                }
                for v in missing {
                    diags.push(Diagnostic::error(
                        DiagCode::UndeclaredVariable,
                        t.span,
                        format!("expression reads undeclared variable `{v}`"),
                    ));
                }
                if t.trigger == Trigger::Any && exprs.iter().any(|e| e.uses_payload()) {
                    diags.push(Diagnostic::error(
                        DiagCode::PayloadWithoutEvent,
                        t.span,
                        "`payload` is undefined under an ANY trigger",
                    ));
                }
            }
        }
    }
    diags
}

fn unreachable_states(m: &Machine) -> Vec<&str> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([m.initial.as_str()]);
    while let Some(s) = queue.pop_front() {
        if !seen.insert(s) {
            continue;
        }
        if let Some(state) = m.states.iter().find(|st| st.name == s) {
            queue.extend(state.transitions.iter().map(|t| t.target.as_str()));
        }
    }
    m.states
        .iter()
        .map(|s| s.name.as_str())
        .filter(|s| !seen.contains(s))
        .collect()
}
