use serde_json::{json, Value as Json};
use thiserror::Error;

use super::{Clause, Kernel, Metaprogram, Strategy};
use crate::lang::{parse_expr, print_expr};

/// A malformed metaprogram description, with the JSON path of the fault.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: &str, message: &str) -> Self {
        ConfigError { path: if path.is_empty() { "$".into() } else { path.into() }, message: message.into() }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn single_key<'a>(v: &'a Json, path: &str) -> Result<(&'a str, &'a Json), ConfigError> {
    match v.as_object() {
        Some(m) if m.len() == 1 => {
            let (k, v) = m.iter().next().expect("one entry");
            Ok((k.as_str(), v))
        }
        _ => Err(ConfigError::new(path, "expected an object with exactly one key")),
    }
}

/// Parses a metaprogram such as
/// `{"mix":[{"weight":"1/2","strategy":{"by-labels":["x"]},"sub":{"blackbox":"prior-mh"}}]}`.
pub fn metaprogram_from_json(v: &Json) -> Result<Metaprogram, ConfigError> {
    let mp = parse_meta(v, "")?;
    mp.validate()?;
    Ok(mp)
}

fn parse_meta(v: &Json, path: &str) -> Result<Metaprogram, ConfigError> {
    let (key, body) = single_key(v, path)?;
    match key {
        "blackbox" => {
            let p = join(path, "blackbox");
            match body.as_str() {
                Some("enum-gibbs") => Ok(Metaprogram::BlackBox(Kernel::EnumGibbs)),
                Some("prior-mh") => Ok(Metaprogram::BlackBox(Kernel::PriorMh)),
                _ => Err(ConfigError::new(&p, "expected \"enum-gibbs\" or \"prior-mh\"")),
            }
        }
        "mix" => {
            let p = join(path, "mix");
            let items = body.as_array().ok_or_else(|| ConfigError::new(&p, "expected an array of clauses"))?;
            let mut clauses = Vec::new();
            for (i, item) in items.iter().enumerate() {
                let cp = format!("{p}[{i}]");
                let obj = item.as_object().ok_or_else(|| ConfigError::new(&cp, "expected an object"))?;
                for k in obj.keys() {
                    if !matches!(k.as_str(), "weight" | "strategy" | "sub") {
                        return Err(ConfigError::new(&join(&cp, k), "unknown field"));
                    }
                }
                let wp = join(&cp, "weight");
                let weight = match obj.get("weight") {
                    Some(Json::String(s)) => crate::parse_rational(s),
                    Some(Json::Number(n)) if n.is_u64() => n.as_u64().map(|n| crate::Rational::from_integer(n.into())),
                    None => return Err(ConfigError::new(&wp, "missing")),
                    _ => None,
                }
                .ok_or_else(|| ConfigError::new(&wp, "expected a rational string such as \"1/2\""))?;
                let sp = join(&cp, "strategy");
                let strategy = parse_strategy(obj.get("strategy").ok_or_else(|| ConfigError::new(&sp, "missing"))?, &sp)?;
                let subp = join(&cp, "sub");
                let sub = parse_meta(obj.get("sub").ok_or_else(|| ConfigError::new(&subp, "missing"))?, &subp)?;
                clauses.push(Clause { weight, strategy, sub });
            }
            Ok(Metaprogram::Mix(clauses))
        }
        other => Err(ConfigError::new(&join(path, other), "expected \"blackbox\" or \"mix\"")),
    }
}

/// Parses a strategy such as `{"by-labels":["x"]}` or `"all-choices"`.
pub fn strategy_from_json(v: &Json) -> Result<Strategy, ConfigError> {
    parse_strategy(v, "")
}

fn parse_strategy(v: &Json, path: &str) -> Result<Strategy, ConfigError> {
    if v.as_str() == Some("all-choices") {
        return Ok(Strategy::AllChoices);
    }
    let (key, body) = single_key(v, path)?;
    let p = join(path, key);
    match key {
        "all-choices" => Ok(Strategy::AllChoices),
        "by-labels" => {
            let items = body.as_array().ok_or_else(|| ConfigError::new(&p, "expected an array of labels"))?;
            let mut labels = std::collections::BTreeSet::new();
            for (i, l) in items.iter().enumerate() {
                let l = l.as_str().ok_or_else(|| ConfigError::new(&format!("{p}[{i}]"), "expected a string"))?;
                labels.insert(l.to_string());
            }
            Ok(Strategy::ByLabels(labels))
        }
        "single-site" => body
            .as_str()
            .map(|s| Strategy::SingleSite(s.to_string()))
            .ok_or_else(|| ConfigError::new(&p, "expected a label string")),
        "if-choice" => {
            let obj = body.as_object().ok_or_else(|| ConfigError::new(&p, "expected an object"))?;
            let field = |k: &str| obj.get(k).ok_or_else(|| ConfigError::new(&join(&p, k), "missing"));
            let label = field("label")?
                .as_str()
                .ok_or_else(|| ConfigError::new(&join(&p, "label"), "expected a string"))?
                .to_string();
            let eq_path = join(&p, "equals");
            let equals_src = field("equals")?.as_str().ok_or_else(|| ConfigError::new(&eq_path, "expected a string"))?;
            let equals = parse_expr(equals_src).map_err(|e| ConfigError::new(&eq_path, &e.to_string()))?;
            let then = parse_strategy(field("then")?, &join(&p, "then"))?;
            let otherwise = parse_strategy(field("else")?, &join(&p, "else"))?;
            Ok(Strategy::IfChoice { label, equals, then: Box::new(then), otherwise: Box::new(otherwise) })
        }
        _ => Err(ConfigError::new(&p, "unknown strategy")),
    }
}

/// JSON form accepted by [`strategy_from_json`].
pub fn strategy_to_json(s: &Strategy) -> Json {
    match s {
        Strategy::AllChoices => json!("all-choices"),
        Strategy::ByLabels(ls) => json!({ "by-labels": ls.iter().collect::<Vec<_>>() }),
        Strategy::SingleSite(l) => json!({ "single-site": l }),
        Strategy::IfChoice { label, equals, then, otherwise } => json!({
            "if-choice": {
                "label": label,
                "equals": print_expr(equals),
                "then": strategy_to_json(then),
                "else": strategy_to_json(otherwise),
            }
        }),
    }
}

/// JSON form accepted by [`metaprogram_from_json`].
pub fn metaprogram_to_json(mp: &Metaprogram) -> Json {
    match mp {
        Metaprogram::BlackBox(Kernel::EnumGibbs) => json!({ "blackbox": "enum-gibbs" }),
        Metaprogram::BlackBox(Kernel::PriorMh) => json!({ "blackbox": "prior-mh" }),
        Metaprogram::Mix(clauses) => json!({
            "mix": clauses.iter().map(|c| json!({
                "weight": crate::format_rational(&c.weight),
                "strategy": strategy_to_json(&c.strategy),
                "sub": metaprogram_to_json(&c.sub),
            })).collect::<Vec<_>>()
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let v: Json = serde_json::from_str(
            r##"{"mix":[
                {"weight":"1/2","strategy":{"by-labels":["x"]},"sub":{"blackbox":"prior-mh"}},
                {"weight":"1/2","strategy":{"if-choice":{"label":"y","equals":"#t","then":{"by-labels":["x","y"]},"else":"all-choices"}},
                 "sub":{"mix":[{"weight":"1","strategy":{"single-site":"x"},"sub":{"blackbox":"enum-gibbs"}}]}}
            ]}"##,
        )
        .unwrap();
        let mp = metaprogram_from_json(&v).unwrap();
        assert_eq!(metaprogram_from_json(&metaprogram_to_json(&mp)).unwrap(), mp);
    }

    #[test]
    fn errors_carry_paths() {
        let bad = |s: &str| metaprogram_from_json(&serde_json::from_str(s).unwrap()).unwrap_err();
        let e = bad(r#"{"mix":[{"weight":"x","strategy":"all-choices","sub":{"blackbox":"prior-mh"}}]}"#);
        assert_eq!(e.path, "mix[0].weight");
        let e = bad(r#"{"mix":[{"weight":"1/2","strategy":"all-choices","sub":{"blackbox":"prior-mh"}}]}"#);
        assert_eq!(e.path, "mix");
        assert!(e.message.contains("1/2"));
        let e = bad(r#"{"mix":[{"weight":"1","strategy":{"by-labels":[3]},"sub":{"blackbox":"prior-mh"}}]}"#);
        assert_eq!(e.path, "mix[0].strategy.by-labels[0]");
        let e = bad(r#"{"mix":[{"weight":"1","strategy":"all-choices","sub":{"blackbox":"gibbs"}}]}"#);
        assert_eq!(e.path, "mix[0].sub.blackbox");
        let e = bad(r#"{"mix":[{"weight":"-1","strategy":"all-choices","sub":{"blackbox":"prior-mh"}},{"weight":"2","strategy":"all-choices","sub":{"blackbox":"prior-mh"}}]}"#);
        assert_eq!(e.path, "mix[0].weight");
        let e = bad(r#"{"mix":[]}"#);
        assert_eq!(e.path, "mix");
    }
}
