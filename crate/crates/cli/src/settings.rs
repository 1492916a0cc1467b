//! Flags over config file over defaults.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::Usage;

/// Loads a `--config` file: a JSON object with one optional section per
/// subcommand, e.g. `{"train": {"hidden_dim": 64}}`.
pub fn load_config_file(path: &Path) -> Result<Value, Usage> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Usage(format!("cannot read config {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    if !v.is_object() {
        return Err(Usage(format!("config {} must be a JSON object", path.display())));
    }
    Ok(v)
}

fn overlay(base: &mut Map<String, Value>, top: &Map<String, Value>) {
    for (k, v) in top {
        base.insert(k.clone(), v.clone());
    }
}

/// Starts from `S::default()`, applies the `section` of the config file,
/// then every flag that was given. Unknown config keys are usage errors.
pub fn resolve<S, A>(section: &str, config: Option<&Value>, flags: &A) -> Result<S, Usage>
where
    S: Serialize + DeserializeOwned + Default,
    A: Serialize,
{
    let Value::Object(mut merged) = serde_json::to_value(S::default()).expect("settings serialize") else {
        unreachable!("settings are structs");
    };
    if let Some(sec) = config.and_then(|c| c.get(section)) {
        let obj = sec
            .as_object()
            .ok_or_else(|| Usage(format!("config section `{section}` must be an object")))?;
        overlay(&mut merged, obj);
    }
    if let Value::Object(given) = serde_json::to_value(flags).expect("flags serialize") {
        overlay(&mut merged, &given);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Usage(format!("{section} settings: {e}")))
}

/// Relative paths resolve against the data directory when one is set.
pub fn data_path(data_dir: Option<&Path>, p: &Path) -> PathBuf {
    match data_dir {
        Some(d) if p.is_relative() => d.join(p),
        _ => p.to_path_buf(),
    }
}

/// Reads a required setting, or fails with a usage error naming the flag.
pub fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T, Usage> {
    v.as_ref().ok_or_else(|| Usage(format!("missing required option --{flag}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    #[serde(deny_unknown_fields, default)]
    struct S {
        a: usize,
        b: String,
        c: Option<f64>,
    }

    impl Default for S {
        fn default() -> Self {
            Self {
                a: 1,
                b: "x".into(),
                c: None,
            }
        }
    }

    #[derive(Serialize)]
    struct F {
        #[serde(skip_serializing_if = "Option::is_none")]
        a: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    }

    #[test]
    fn precedence() {
        let none = F { a: None, c: None };
        assert_eq!(resolve::<S, _>("t", None, &none).unwrap(), S::default());
        let cfg = serde_json::json!({"t": {"a": 5, "b": "y"}, "other": {"zzz": 1}});
        let s: S = resolve("t", Some(&cfg), &none).unwrap();
        assert_eq!((s.a, s.b.as_str()), (5, "y"));
        let s: S = resolve("t", Some(&cfg), &F { a: Some(9), c: Some(0.5) }).unwrap();
        assert_eq!((s.a, s.b.as_str(), s.c), (9, "y", Some(0.5)));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let cfg = serde_json::json!({"t": {"nope": 1}});
        let none = F { a: None, c: None };
        assert!(resolve::<S, _>("t", Some(&cfg), &none).is_err());
    }

    #[test]
    fn data_dir_joins_relative_paths() {
        let d = Path::new("/data");
        assert_eq!(data_path(Some(d), Path::new("a.json")), PathBuf::from("/data/a.json"));
        assert_eq!(data_path(Some(d), Path::new("/x/a.json")), PathBuf::from("/x/a.json"));
        assert_eq!(data_path(None, Path::new("a.json")), PathBuf::from("a.json"));
    }
}
