use std::fs;
use std::path::Path;

use divforge_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

/// Parameters from a TOML file. Keys are the flag names, with `-` or `_`;
/// a `[<subcommand>]` table takes precedence over top-level keys.
#[derive(Debug, Default)]
pub struct Config {
    table: toml::Table,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table = raw.parse::<toml::Table>().map_err(|e| Error::format("config file", e))?;
        Ok(Self { table })
    }

    fn lookup(&self, section: &str, key: &str) -> Option<&toml::Value> {
        let variants = [key.replace('_', "-"), key.replace('-', "_")];
        let section = self.table.get(section).and_then(toml::Value::as_table);
        section
            .and_then(|t| variants.iter().find_map(|k| t.get(k)))
            .or_else(|| variants.iter().find_map(|k| self.table.get(k)))
    }

    pub fn get<T: DeserializeOwned>(&self, section: &str, key: &str) -> Result<Option<T>> {
        self.lookup(section, key)
            .map(|v| {
                v.clone().try_into().map_err(|e: toml::de::Error| Error::format("config file", format!("{key}: {e}")))
            })
            .transpose()
    }
}

/// Resolves flag > config > default and records the effective value.
pub struct Resolver<'a> {
    config: &'a Config,
    section: &'static str,
    pub echo: Map<String, Value>,
}

impl<'a> Resolver<'a> {
    pub fn new(config: &'a Config, section: &'static str) -> Self {
        Self {
            config,
            section,
            echo: Map::new(),
        }
    }

    pub fn opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: DeserializeOwned + serde::Serialize,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.config.get(self.section, key)?,
        };
        if let Some(v) = &v {
            self.echo
                .insert(key.replace('-', "_"), serde_json::to_value(v).expect("serializable"));
        }
        Ok(v)
    }

    pub fn or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: DeserializeOwned + serde::Serialize,
    {
        let v = self.opt(key, flag)?.unwrap_or(default);
        self.echo
            .insert(key.replace('-', "_"), serde_json::to_value(&v).expect("serializable"));
        Ok(v)
    }

    pub fn required<T>(&mut self, key: &str, flag: Option<T>, why: &str) -> Result<T>
    where
        T: DeserializeOwned + serde::Serialize,
    {
        self.opt(key, flag)?
            .ok_or_else(|| Error::precondition(format!("--{} is required{why}", key.replace('_', "-"))))
    }
}
