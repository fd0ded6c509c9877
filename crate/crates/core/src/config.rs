//! INI-style settings files.
//!
//! Keys outside any section apply to every subcommand; a `[train]` (etc.)
//! section overrides them for that subcommand. Command-line flags override
//! both.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Settings {
    general: BTreeMap<String, String>,
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Malformed { line, detail, .. } => Error::Malformed {
                context: path.display().to_string(),
                line,
                detail,
            },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Malformed {
            context: "settings".into(),
            line: e.line,
            detail: e.msg.to_string(),
        })?;
        let mut s = Settings::default();
        for (section, props) in ini.iter() {
            let map: BTreeMap<String, String> = props
                .iter()
                .map(|(k, v)| {
                    (
                        k.trim().to_ascii_lowercase().replace('-', "_"),
                        v.trim().to_string(),
                    )
                })
                .collect();
            match section {
                None => s.general.extend(map),
                Some(name) => s
                    .sections
                    .entry(name.trim().to_ascii_lowercase())
                    .or_default()
                    .extend(map),
            }
        }
        Ok(s)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|m| m.get(key))
            .or_else(|| self.general.get(key))
            .map(String::as_str)
    }

    pub fn section(&self, section: &str) -> BTreeMap<String, String> {
        self.sections.get(section).cloned().unwrap_or_default()
    }

    pub fn parsed<T>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.get(section, key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::InvalidArgument(format!("setting `{key}` = `{v}`: {e}")))
            })
            .transpose()
    }

    /// Flag if given, else the file value, else `default`.
    pub fn resolve<T>(&self, flag: Option<T>, section: &str, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.parsed(section, key)?.unwrap_or(default)),
        }
    }
}
