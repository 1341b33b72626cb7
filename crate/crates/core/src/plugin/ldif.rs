//! Minimal LDIF reader for information-service dumps.

use indexmap::IndexMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LdifError {
    #[error("record {0} has no dn")]
    MissingDn(usize),
    #[error("line {0}: expected `name: value`")]
    MalformedLine(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdifEntry {
    pub dn: String,
    /// Attribute names are folded to lower case.
    pub attributes: IndexMap<String, Vec<String>>,
}

impl LdifEntry {
    pub fn values(&self, name: &str) -> &[String] {
        self.attributes
            .get(&name.to_ascii_lowercase())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Records are separated by blank lines; a line starting with one space
/// continues the previous line; `#` lines are comments; a leading
/// `version:` line is skipped.
pub fn parse_ldif(text: &str) -> Result<Vec<LdifEntry>, LdifError> {
    // (line number, unfolded logical line) grouped per record
    let mut records: Vec<Vec<(usize, String)>> = Vec::new();
    let mut current: Vec<(usize, String)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.is_empty() {
            if !current.is_empty() {
                records.push(std::mem::take(&mut current));
            }
            continue;
        }
        if let Some(cont) = raw.strip_prefix(' ') {
            match current.last_mut() {
                Some((_, prev)) => prev.push_str(cont),
                None => return Err(LdifError::MalformedLine(line_no)),
            }
            continue;
        }
        if raw.starts_with('#') {
            continue;
        }
        current.push((line_no, raw.to_string()));
    }
    if !current.is_empty() {
        records.push(current);
    }

    let mut entries = Vec::with_capacity(records.len());
    for (index, mut lines) in records.into_iter().enumerate() {
        if index == 0 && lines.first().is_some_and(|(_, l)| l.to_ascii_lowercase().starts_with("version:")) {
            lines.remove(0);
            if lines.is_empty() {
                continue;
            }
        }
        let mut pairs = Vec::with_capacity(lines.len());
        for (line_no, line) in &lines {
            let (name, value) = line.split_once(':').ok_or(LdifError::MalformedLine(*line_no))?;
            let name = name.trim();
            if name.is_empty() || name.contains(' ') {
                return Err(LdifError::MalformedLine(*line_no));
            }
            pairs.push((name.to_ascii_lowercase(), value.trim_start().to_string()));
        }
        let mut pairs = pairs.into_iter();
        let dn = match pairs.next() {
            Some((name, value)) if name == "dn" && !value.is_empty() => value,
            _ => return Err(LdifError::MissingDn(entries.len())),
        };
        let mut attributes: IndexMap<String, Vec<String>> = IndexMap::new();
        for (name, value) in pairs {
            attributes.entry(name).or_default().push(value);
        }
        entries.push(LdifEntry { dn, attributes });
    }
    Ok(entries)
}
