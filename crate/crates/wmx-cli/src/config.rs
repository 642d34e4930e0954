//! JSON run configuration layered under command-line flags.
//!
//! A config file is a JSON object. Top-level scalar and array entries apply
//! to every command that has a parameter of that name; an object entry keyed
//! by the command path (e.g. `"rgae fit"`) applies to that command only and
//! wins over top-level entries. Flags given on the command line always win.

use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Default)]
pub struct Config {
    entries: Map<String, Value>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(entries)) => Ok(Self { entries }),
            Ok(_) => Err(CliError::usage(format!(
                "{}: config must be a JSON object",
                path.display()
            ))),
            Err(e) => Err(CliError::usage(format!("{}: {e}", path.display()))),
        }
    }

    /// Fills every parameter not set on the command line from the config.
    pub fn merge<A: Serialize + DeserializeOwned>(&self, args: &A, leaf: &ArgMatches, command: &str) -> Result<A> {
        let mut value = serde_json::to_value(args)?;
        let Some(fields) = value.as_object_mut() else {
            return Ok(serde_json::from_value(value)?);
        };
        let global = self.entries.iter().filter(|(_, v)| !v.is_object());
        let section = self
            .entries
            .get(command)
            .and_then(Value::as_object)
            .into_iter()
            .flatten();
        for (key, v) in global.chain(section) {
            if fields.contains_key(key) && leaf.value_source(key) != Some(ValueSource::CommandLine) {
                fields.insert(key.clone(), v.clone());
            }
        }
        serde_json::from_value(value).map_err(|e| CliError::usage(format!("config for `{command}`: {e}")))
    }
}
