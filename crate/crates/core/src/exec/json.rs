use serde_json::{json, Value as Json};

use super::trace::{AppTail, AugExpr, AugNode, AugStmt, Trace, Value};
use crate::format_rational;
use crate::lang::print_expr;

/// JSON form of a value. Rationals are strings.
pub fn value_to_json(v: &Value) -> Json {
    match v {
        Value::Symbol(x) => json!({ "symbol": &**x }),
        Value::Rational(r) => json!({ "rational": format_rational(r) }),
        Value::Stuck(f, a) => json!({ "stuck": [value_to_json(f), value_to_json(a)] }),
        Value::Closure(c) => {
            let env: serde_json::Map<String, Json> = c
                .env
                .iter()
                .map(|(k, b)| (k.to_string(), json!({ "value": value_to_json(&b.value), "id": b.id.0 })))
                .collect();
            json!({ "closure": { "param": &*c.param, "body": print_expr(&c.body), "env": env } })
        }
    }
}

fn aug_to_json(e: &AugExpr) -> Json {
    let mut obj = match &e.node {
        AugNode::FreeVar(x) => json!({ "kind": "free-var", "name": &**x }),
        AugNode::BoundVar { name, binder } => json!({ "kind": "bound-var", "name": &**name, "binder": binder.0 }),
        AugNode::Literal(r) => json!({ "kind": "literal", "rational": format_rational(r) }),
        AugNode::Lambda { param, body } => json!({ "kind": "lambda", "param": &**param, "body": print_expr(body) }),
        AugNode::App { func, arg, tail } => {
            let tail = match tail {
                AppTail::Opaque => json!("opaque"),
                AppTail::Beta { bound, body } => json!({ "bound": &**bound, "body": aug_to_json(body) }),
            };
            json!({ "kind": "app", "func": aug_to_json(func), "arg": aug_to_json(arg), "tail": tail })
        }
        AugNode::Dist { dist, label, param, choice, result } => json!({
            "kind": "dist",
            "dist": &**dist,
            "label": &**label,
            "choice": choice.0,
            "param": aug_to_json(param),
            "result": aug_to_json(result),
        }),
    };
    obj["id"] = json!(e.id.0);
    obj["value"] = value_to_json(&e.value);
    obj
}

/// JSON form of a trace.
pub fn trace_to_json(t: &Trace) -> Json {
    let stmts: Vec<Json> = t
        .stmts
        .iter()
        .map(|s| match s {
            AugStmt::Assume { name, expr } => json!({ "assume": &**name, "expr": aug_to_json(expr) }),
            AugStmt::Observe { dist, label, param, obs, value } => json!({
                "observe": &**dist,
                "label": &**label,
                "obs": obs.0,
                "param": aug_to_json(param),
                "value": print_expr(value),
            }),
        })
        .collect();
    json!({ "statements": stmts })
}
