//! Minimal `key = value` configuration documents.
//!
//! Lines before the first `[section]` header belong to the global block.
//! `#` starts a comment. Keys may repeat (pickup lists rely on that).

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("config line {line}: key `{key}` has invalid value `{value}`: {message}")]
    Value {
        line: usize,
        key: String,
        value: String,
        message: String,
    },
    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("config section [{section}]: missing key `{key}`")]
    MissingKey { section: String, key: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

impl Entry {
    pub fn parse_f64(&self) -> Result<f64, ConfigError> {
        self.value.parse::<f64>().map_err(|e| self.invalid(e.to_string()))
    }

    /// Parses `(a, b)` into a pair of numbers.
    pub fn parse_pair(&self) -> Result<(f64, f64), ConfigError> {
        let inner = self
            .value
            .trim()
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| self.invalid("expected `(a, b)`".into()))?;
        let mut parts = inner.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(self.invalid("expected exactly two comma-separated numbers".into()));
        };
        let a = a.parse::<f64>().map_err(|e| self.invalid(e.to_string()))?;
        let b = b.parse::<f64>().map_err(|e| self.invalid(e.to_string()))?;
        Ok((a, b))
    }

    pub fn invalid(&self, message: String) -> ConfigError {
        ConfigError::Value {
            line: self.line,
            key: self.key.clone(),
            value: self.value.clone(),
            message,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.key == key)
    }

    pub fn require(&self, key: &str) -> Result<&Entry, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::MissingKey {
            section: self.name.clone(),
            key: key.to_string(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigDocument {
    pub global: Vec<Entry>,
    pub sections: Vec<Section>,
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut doc = ConfigDocument::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line,
                    message: "unterminated section header".into(),
                })?;
                let name = name.trim();
                if name.is_empty() {
                    return Err(ConfigError::Syntax {
                        line,
                        message: "empty section name".into(),
                    });
                }
                doc.sections.push(Section {
                    name: name.to_string(),
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, found `{content}`"),
            })?;
            let entry = Entry {
                key: key.trim().to_string(),
                value: value.trim().to_string(),
                line,
            };
            if entry.key.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    message: "empty key".into(),
                });
            }
            match doc.sections.last_mut() {
                Some(section) => section.entries.push(entry),
                None => doc.global.push(entry),
            }
        }
        Ok(doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn global_value(&self, key: &str) -> Option<&Entry> {
        self.global.iter().rev().find(|e| e.key == key)
    }
}
