use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{PlanError, VideoPlan, PLAN_SCHEMA};

/// Canonical pretty-printed JSON with a trailing newline. Field order follows
/// the struct declarations and maps are sorted, so output is byte-stable.
pub fn serialize_plan(plan: &VideoPlan) -> Vec<u8> {
    to_canonical_json(plan)
}

pub fn deserialize_plan(bytes: &[u8]) -> Result<VideoPlan, PlanError> {
    let plan: VideoPlan = from_json_with_path(bytes)?;
    if plan.schema != PLAN_SCHEMA {
        return Err(PlanError::Parse {
            path: "schema".into(),
            line: 0,
            column: 0,
            message: format!("unsupported schema {:?}, expected {PLAN_SCHEMA:?}", plan.schema),
        });
    }
    Ok(plan)
}

pub fn to_canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("in-memory JSON serialization");
    out.push(b'\n');
    out
}

/// Deserializes any document, reporting failures with a dotted field path.
pub fn from_json_with_path<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, PlanError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        let message = inner.to_string();
        let path = match missing_field(&message) {
            Some(field) if path == "." => field.to_string(),
            Some(field) => format!("{path}.{field}"),
            None => path,
        };
        PlanError::Parse {
            path,
            line: inner.line(),
            column: inner.column(),
            message,
        }
    })
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::testutil::sample_plan;

    #[test]
    fn round_trip_is_identity() {
        let plan = sample_plan();
        let bytes = serialize_plan(&plan);
        let back = deserialize_plan(&bytes).unwrap();
        assert_eq!(back, plan);
        assert_eq!(serialize_plan(&back), bytes);
    }

    #[test]
    fn missing_scenes_reports_field() {
        let doc = br#"{"schema": "vdgpt-plan/1", "source_prompt": "x"}"#;
        let err = deserialize_plan(doc).unwrap_err();
        match err {
            PlanError::Parse { ref path, .. } => assert_eq!(path, "scenes"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(err.code(), "PARSE_ERROR");
    }

    #[test]
    fn nested_errors_carry_path_and_line() {
        let doc = br#"{
  "schema": "vdgpt-plan/1",
  "source_prompt": "x",
  "scenes": [
    {"index": 1, "description": "d", "entities": [{"id": "a", "name": "a", "keyframes": [[0, "x", 0, 1, 1]]}]}
  ]
}"#;
        match deserialize_plan(doc).unwrap_err() {
            PlanError::Parse { path, line, .. } => {
                assert!(path.starts_with("scenes[0].entities[0].keyframes[0]"), "{path}");
                assert_eq!(line, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let mut plan = sample_plan();
        plan.schema = "other/2".into();
        let bytes = serialize_plan(&plan);
        match deserialize_plan(&bytes).unwrap_err() {
            PlanError::Parse { path, .. } => assert_eq!(path, "schema"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn keyframes_use_flat_arrays() {
        let bytes = serialize_plan(&sample_plan());
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let kf = &v["scenes"][0]["entities"][0]["keyframes"][0];
        assert!(kf.is_array());
        assert_eq!(kf.as_array().unwrap().len(), 5);
        assert_eq!(kf[0], 0);
    }
}
