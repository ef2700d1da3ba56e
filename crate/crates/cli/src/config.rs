//! Flat INI-style configuration: `[section]` headers and `key = value`
//! pairs, parsed by hand so every diagnostic carries the offending line
//! number.  Full-line comments start with `#` or `;`; there are no inline
//! comments, no quoting and no nesting — values are plain scalars or
//! comma-separated lists.

use std::collections::BTreeMap;

use dynbc_core::{Error, Result};

/// A parsed configuration file plus the raw bytes it came from (the raw
/// text is what gets hashed into output headers, so artifacts can be traced
/// back to the exact configuration that produced them).
#[derive(Debug, Clone)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
    raw: String,
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut sections: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    Error::config(format!("line {line_no}: unterminated section header '{line}'"))
                })?;
                let name = name.trim();
                if name.is_empty() {
                    return Err(Error::config(format!("line {line_no}: empty section name")));
                }
                sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!(
                    "line {line_no}: expected 'key = value' or '[section]', found '{line}'"
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::config(format!("line {line_no}: empty key")));
            }
            let Some(section) = &current else {
                return Err(Error::config(format!(
                    "line {line_no}: key '{key}' appears before any [section] header"
                )));
            };
            let entries = sections.get_mut(section).expect("section was inserted");
            if let Some(previous) = entries.get(key) {
                return Err(Error::config(format!(
                    "line {line_no}: duplicate key '{key}' in [{section}] \
                     (first set at line {})",
                    previous.line
                )));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line: line_no,
                },
            );
        }
        Ok(Config {
            sections,
            raw: text.to_string(),
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read config file '{}': {e}", path.display()))
        })?;
        Config::parse(&text)
    }

    /// The raw file contents, hashed into every CSV header.
    pub fn raw(&self) -> &str {
        &self.raw
    }

    /// Reject unknown sections and keys so typos fail loudly instead of
    /// silently falling back to defaults.
    pub fn check_known(&self, allowed: &[(&str, &[&str])]) -> Result<()> {
        for (section, entries) in &self.sections {
            let Some((_, keys)) = allowed.iter().find(|(s, _)| s == section) else {
                let known: Vec<&str> = allowed.iter().map(|(s, _)| *s).collect();
                return Err(Error::config(format!(
                    "unknown section [{section}]; known sections: {}",
                    known.join(", ")
                )));
            };
            for (key, entry) in entries {
                if !keys.contains(&key.as_str()) {
                    return Err(Error::config(format!(
                        "line {}: unknown key '{key}' in [{section}]; known keys: {}",
                        entry.line,
                        keys.join(", ")
                    )));
                }
            }
        }
        Ok(())
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section)?.get(key)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entry(section, key).map(|e| e.value.as_str())
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key).ok_or_else(|| {
            Error::config(format!("missing required key '{key}' in section [{section}]"))
        })
    }

    fn parse_with<T, F>(&self, section: &str, key: &str, what: &str, f: F) -> Result<Option<T>>
    where
        F: Fn(&str) -> Option<T>,
    {
        match self.entry(section, key) {
            None => Ok(None),
            Some(entry) => f(&entry.value).map(Some).ok_or_else(|| {
                Error::config(format!(
                    "line {}: [{section}] {key} = '{}' is not {what}",
                    entry.line, entry.value
                ))
            }),
        }
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.parse_with(section, key, "a number", |v| v.parse::<f64>().ok())
    }

    pub fn get_usize(&self, section: &str, key: &str) -> Result<Option<usize>> {
        self.parse_with(section, key, "a non-negative integer", |v| {
            v.parse::<usize>().ok()
        })
    }

    pub fn get_bool(&self, section: &str, key: &str) -> Result<Option<bool>> {
        self.parse_with(section, key, "'true' or 'false'", |v| match v {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        })
    }

    pub fn get_f64_list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        self.parse_with(section, key, "a comma-separated list of numbers", |v| {
            v.split(',')
                .map(|p| p.trim().parse::<f64>().ok())
                .collect::<Option<Vec<f64>>>()
                .filter(|l| !l.is_empty())
        })
    }

    pub fn get_usize_list(&self, section: &str, key: &str) -> Result<Option<Vec<usize>>> {
        self.parse_with(section, key, "a comma-separated list of integers", |v| {
            v.split(',')
                .map(|p| p.trim().parse::<usize>().ok())
                .collect::<Option<Vec<usize>>>()
                .filter(|l| !l.is_empty())
        })
    }
}
