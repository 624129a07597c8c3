//! The JSON schemas shipped in `schemas/`.

use std::sync::OnceLock;

use jsonschema::Validator;
use serde_json::Value;

use crate::CliError;

pub const CONFIG_SCHEMA: &str = include_str!("../../../schemas/job-config.schema.json");
pub const REPORT_SCHEMA: &str = include_str!("../../../schemas/report.schema.json");

fn compile(text: &str) -> Validator {
    let schema: Value = serde_json::from_str(text).expect("shipped schema is JSON");
    jsonschema::validator_for(&schema).expect("shipped schema compiles")
}

fn errors(validator: &Validator, instance: &Value) -> Vec<String> {
    validator
        .iter_errors(instance)
        .take(8)
        .map(|e| {
            let path = e.instance_path.to_string();
            if path.is_empty() {
                e.to_string()
            } else {
                format!("{path}: {e}")
            }
        })
        .collect()
}

pub fn validate_config(instance: &Value) -> Result<(), CliError> {
    static V: OnceLock<Validator> = OnceLock::new();
    let found = errors(V.get_or_init(|| compile(CONFIG_SCHEMA)), instance);
    if found.is_empty() {
        Ok(())
    } else {
        Err(CliError::ConfigInvalid(found.join("; ")))
    }
}

/// Schema violations of a report document, empty when it conforms.
pub fn report_violations(instance: &Value) -> Vec<String> {
    static V: OnceLock<Validator> = OnceLock::new();
    errors(V.get_or_init(|| compile(REPORT_SCHEMA)), instance)
}
