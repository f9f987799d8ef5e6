//! Instance and trace files.
//!
//! Instance files look like `{"speeds": ["17", "7"], "jobs": ["16", ["3", "5"]]}`:
//! every entry is a decimal integer string or a `[num, den]` pair of decimal strings.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::Instance;
use crate::rat::{to_instance_json, Rat};

fn parse_entry(v: &Value, field: &str) -> Result<Rat> {
    let bad = |reason: String| Error::Parse {
        field: field.to_string(),
        reason,
    };
    match v {
        Value::String(s) => {
            if s.contains('/') {
                return Err(bad(format!("expected an integer string or [num, den] pair, got {s:?}")));
            }
            s.parse().map_err(|e: crate::rat::ParseRatError| bad(e.to_string()))
        }
        Value::Array(pair) if pair.len() == 2 => {
            let part = |x: &Value| -> Result<String> {
                x.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| bad(format!("pair entries must be strings, got {x}")))
            };
            let (n, d) = (part(&pair[0])?, part(&pair[1])?);
            if d.trim() == "0" {
                return Err(bad("zero denominator".into()));
            }
            format!("{n}/{d}")
                .parse()
                .map_err(|e: crate::rat::ParseRatError| bad(e.to_string()))
        }
        other => Err(bad(format!("expected a string or [num, den] pair, got {other}"))),
    }
}

fn parse_list(root: &Value, key: &str) -> Result<Vec<Rat>> {
    let arr = root.get(key).and_then(Value::as_array).ok_or_else(|| Error::Parse {
        field: key.into(),
        reason: "missing array".into(),
    })?;
    arr.iter()
        .enumerate()
        .map(|(i, v)| parse_entry(v, &format!("{key}[{i}]")))
        .collect()
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    let root: Value = serde_json::from_str(text)?;
    if !root.is_object() {
        return Err(Error::Parse {
            field: "$".into(),
            reason: "expected an object".into(),
        });
    }
    Instance::new(parse_list(&root, "speeds")?, parse_list(&root, "jobs")?)
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    parse_instance(&text)
}

pub fn instance_to_json(inst: &Instance) -> Value {
    serde_json::json!({
        "speeds": inst.speeds.iter().map(to_instance_json).collect::<Vec<_>>(),
        "jobs": inst.jobs.iter().map(to_instance_json).collect::<Vec<_>>(),
    })
}

/// An instance file that also records the fixture's name, parameters and
/// perturbation; the extra keys are ignored by [`parse_instance`].
pub fn fixture_to_json(fx: &crate::baselines::fixtures::Fixture) -> Value {
    use crate::baselines::fixtures::Perturbation;
    let mut v = instance_to_json(&fx.instance);
    v["name"] = Value::String(fx.name.clone());
    v["params"] = fx
        .params
        .iter()
        .map(|(k, x)| (k.clone(), to_instance_json(x)))
        .collect::<serde_json::Map<_, _>>()
        .into();
    v["perturbation"] = match &fx.perturbation {
        None => Value::Null,
        Some(Perturbation::Machine { id, speed }) => {
            serde_json::json!({ "kind": "machine", "index": id, "speed": to_instance_json(speed) })
        }
        Some(Perturbation::Job { index, size }) => {
            serde_json::json!({ "kind": "job", "index": index, "size": to_instance_json(size) })
        }
    };
    v
}

pub fn save_instance(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    write_json(&instance_to_json(inst), path)
}

pub fn save_trace<T: Serialize>(trace: &T, path: impl AsRef<Path>) -> Result<()> {
    write_json(trace, path)
}

fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}
