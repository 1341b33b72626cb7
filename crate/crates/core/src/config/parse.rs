use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use super::ObjectKind;

/// Where a block was opened.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceLocation {
    pub file: String,
    pub line: usize,
}

impl std::fmt::Display for SourceLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

/// A `define <kind> { ... }` block whose kind has not been interpreted yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawBlock {
    pub kind: String,
    pub attributes: IndexMap<String, String>,
    pub location: SourceLocation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObjectBlock {
    pub kind: ObjectKind,
    pub attributes: IndexMap<String, String>,
    pub location: SourceLocation,
}

impl ObjectBlock {
    pub fn get(&self, attr: &str) -> Option<&str> {
        self.attributes.get(attr).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{file}:{line}: unknown object kind {kind:?}")]
    UnknownKind {
        file: String,
        line: usize,
        kind: String,
    },
    #[error("{file}:{line}: block is never closed")]
    UnterminatedBlock { file: String, line: usize },
    #[error("{file}:{line}: attribute {name:?} repeated in block")]
    DuplicateAttribute {
        file: String,
        line: usize,
        name: String,
    },
    #[error("{file}:{line}: expected `define <kind> {{`")]
    UnexpectedLine { file: String, line: usize },
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::UnknownKind { line, .. }
            | ParseError::UnterminatedBlock { line, .. }
            | ParseError::DuplicateAttribute { line, .. }
            | ParseError::UnexpectedLine { line, .. } => *line,
        }
    }
}

/// Parses monitor configuration text into object blocks, in source order.
pub fn parse_objects(text: &str) -> Result<Vec<ObjectBlock>, ParseError> {
    parse_objects_in(text, "<config>")
}

pub fn parse_objects_in(text: &str, file: &str) -> Result<Vec<ObjectBlock>, ParseError> {
    let kinds: Vec<&str> = ObjectKind::ALL.iter().map(|k| k.as_str()).collect();
    parse_blocks(text, file, &kinds)?
        .into_iter()
        .map(|b| {
            let kind = b.kind.parse().expect("kind was checked against the known set");
            Ok(ObjectBlock {
                kind,
                attributes: b.attributes,
                location: b.location,
            })
        })
        .collect()
}

/// The block grammar, independent of which kinds are meaningful.
///
/// `#` starts a comment that runs to end of line. Openers match
/// `define\s+(\w+)\s*\{`, attributes are `key<whitespace>value` and a block
/// closes with `}` alone on its line.
pub fn parse_blocks(text: &str, file: &str, known_kinds: &[&str]) -> Result<Vec<RawBlock>, ParseError> {
    let mut blocks = Vec::new();
    let mut open: Option<RawBlock> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }

        match open.as_mut() {
            None => {
                let kind = opener_kind(line).ok_or_else(|| ParseError::UnexpectedLine {
                    file: file.to_string(),
                    line: line_no,
                })?;
                if !known_kinds.contains(&kind) {
                    return Err(ParseError::UnknownKind {
                        file: file.to_string(),
                        line: line_no,
                        kind: kind.to_string(),
                    });
                }
                open = Some(RawBlock {
                    kind: kind.to_string(),
                    attributes: IndexMap::new(),
                    location: SourceLocation {
                        file: file.to_string(),
                        line: line_no,
                    },
                });
            }
            Some(block) => {
                if line == "}" {
                    blocks.push(open.take().expect("block is open"));
                    continue;
                }
                if opener_kind(line).is_some() {
                    return Err(ParseError::UnterminatedBlock {
                        file: file.to_string(),
                        line: block.location.line,
                    });
                }
                let (key, value) = match line.split_once(char::is_whitespace) {
                    Some((k, v)) => (k, v.trim()),
                    None => (line, ""),
                };
                if block.attributes.contains_key(key) {
                    return Err(ParseError::DuplicateAttribute {
                        file: file.to_string(),
                        line: line_no,
                        name: key.to_string(),
                    });
                }
                block.attributes.insert(key.to_string(), value.to_string());
            }
        }
    }

    if let Some(block) = open {
        return Err(ParseError::UnterminatedBlock {
            file: file.to_string(),
            line: block.location.line,
        });
    }
    Ok(blocks)
}

fn opener_kind(line: &str) -> Option<&str> {
    let rest = line.strip_prefix("define")?;
    if !rest.starts_with(char::is_whitespace) {
        return None;
    }
    let rest = rest.trim_start();
    let end = rest
        .find(|c: char| !(c.is_alphanumeric() || c == '_'))
        .unwrap_or(rest.len());
    if end == 0 {
        return None;
    }
    let (kind, tail) = rest.split_at(end);
    (tail.trim_start() == "{").then_some(kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn host_block() {
        let blocks =
            parse_objects("define host{\n host_name ce01\n address 10.0.0.1\n parents router1\n}")
                .unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].kind, ObjectKind::Host);
        assert_eq!(blocks[0].get("host_name"), Some("ce01"));
        assert_eq!(blocks[0].get("parents"), Some("router1"));
        assert_eq!(blocks[0].location.line, 1);
    }

    #[test]
    fn empty_input() {
        assert!(parse_objects("").unwrap().is_empty());
        assert!(parse_objects("\n  # only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn comments_and_spacing() {
        let text = "# header\ndefine   site   {   # trailing\n  site_name   cnaf  \n latitude 44.5\n}\n";
        let blocks = parse_objects(text).unwrap();
        assert_eq!(blocks[0].get("site_name"), Some("cnaf"));
        assert_eq!(blocks[0].get("latitude"), Some("44.5"));
    }

    #[test]
    fn value_keeps_inner_whitespace() {
        let blocks =
            parse_objects("define command{\n command_name n\n command_line /bin/echo a  b\n}").unwrap();
        assert_eq!(blocks[0].get("command_line"), Some("/bin/echo a  b"));
    }

    #[test]
    fn unknown_kind() {
        let err = parse_objects("\ndefine hostgroup{\n}").unwrap_err();
        assert!(matches!(err, ParseError::UnknownKind { line: 2, ref kind, .. } if kind == "hostgroup"));
    }

    #[test]
    fn unterminated() {
        let err = parse_objects("define host{\n host_name a\n").unwrap_err();
        assert!(matches!(err, ParseError::UnterminatedBlock { line: 1, .. }));
        let err = parse_objects("define host{\n host_name a\ndefine host{\n}").unwrap_err();
        assert!(matches!(err, ParseError::UnterminatedBlock { line: 1, .. }));
    }

    #[test]
    fn duplicate_attribute() {
        let err = parse_objects("define host{\n host_name a\n host_name b\n}").unwrap_err();
        assert!(matches!(err, ParseError::DuplicateAttribute { line: 3, .. }));
    }

    #[test]
    fn stray_line() {
        let err = parse_objects("host_name a\n").unwrap_err();
        assert!(matches!(err, ParseError::UnexpectedLine { line: 1, .. }));
        let err = parse_objects("definehost{\n}").unwrap_err();
        assert!(matches!(err, ParseError::UnexpectedLine { line: 1, .. }));
    }

    #[test]
    fn closer_must_be_alone() {
        let err = parse_objects("define host{\n host_name a }\n").unwrap_err();
        assert!(matches!(err, ParseError::UnterminatedBlock { .. }));
    }
}
