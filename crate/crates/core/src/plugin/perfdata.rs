use std::fmt;

use serde::{Deserialize, Serialize};

use crate::Range;

/// One `label=value[uom];warn;crit;min;max` sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfDatum {
    pub label: String,
    pub value: f64,
    pub uom: Option<String>,
    pub warn: Option<Range>,
    pub crit: Option<Range>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl PerfDatum {
    pub fn new(label: impl Into<String>, value: f64) -> Self {
        PerfDatum {
            label: label.into(),
            value,
            uom: None,
            warn: None,
            crit: None,
            min: None,
            max: None,
        }
    }

    pub fn with_uom(mut self, uom: &str) -> Self {
        self.uom = (!uom.is_empty()).then(|| uom.to_string());
        self
    }
}

impl fmt::Display for PerfDatum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.label.contains([' ', '=', '\'']) {
            write!(f, "'{}'", self.label.replace('\'', "''"))?;
        } else {
            f.write_str(&self.label)?;
        }
        write!(f, "={}{}", self.value, self.uom.as_deref().unwrap_or(""))?;

        let fields = [
            self.warn.map(|r| r.to_string()),
            self.crit.map(|r| r.to_string()),
            self.min.map(|v| v.to_string()),
            self.max.map(|v| v.to_string()),
        ];
        let used = fields.iter().rposition(Option::is_some).map_or(0, |i| i + 1);
        for field in &fields[..used] {
            write!(f, ";{}", field.as_deref().unwrap_or(""))?;
        }
        Ok(())
    }
}

/// Parsed first line of plugin output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PluginOutput {
    pub summary: String,
    pub perfdata: Vec<PerfDatum>,
    /// Tokens that did not match the perfdata grammar; they are dropped.
    pub malformed: Vec<String>,
}

/// Splits `SUMMARY | perfdata` at the first `|` and parses the perfdata tokens.
pub fn parse_plugin_output(line: &str) -> PluginOutput {
    let line = line.lines().next().unwrap_or("");
    let (summary, perf) = match line.split_once('|') {
        Some((s, p)) => (s, p),
        None => (line, ""),
    };
    let mut out = PluginOutput {
        summary: summary.trim().to_string(),
        ..Default::default()
    };
    for token in tokenize(perf) {
        match parse_datum(&token) {
            Some(d) => out.perfdata.push(d),
            None => out.malformed.push(token),
        }
    }
    out
}

/// Renders a summary plus perfdata in the same grammar `parse_plugin_output` reads.
pub fn render_plugin_output(summary: &str, perfdata: &[PerfDatum]) -> String {
    if perfdata.is_empty() {
        return summary.to_string();
    }
    let tokens: Vec<String> = perfdata.iter().map(ToString::to_string).collect();
    format!("{} | {}", summary, tokens.join(" "))
}

/// Space-separated tokens; a leading single-quoted label may contain spaces
/// (`''` inside it is an escaped quote).
fn tokenize(perf: &str) -> Vec<String> {
    let chars: Vec<char> = perf.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let mut tok = String::new();
        if chars[i] == '\'' {
            tok.push('\'');
            i += 1;
            while i < chars.len() {
                if chars[i] == '\'' {
                    if chars.get(i + 1) == Some(&'\'') {
                        tok.push_str("''");
                        i += 2;
                        continue;
                    }
                    tok.push('\'');
                    i += 1;
                    break;
                }
                tok.push(chars[i]);
                i += 1;
            }
        }
        while i < chars.len() && !chars[i].is_whitespace() {
            tok.push(chars[i]);
            i += 1;
        }
        tokens.push(tok);
    }
    tokens
}

fn parse_datum(token: &str) -> Option<PerfDatum> {
    let (label, rest) = if let Some(quoted) = token.strip_prefix('\'') {
        let mut label = String::new();
        let mut chars = quoted.char_indices().peekable();
        let mut end = None;
        while let Some((i, c)) = chars.next() {
            if c == '\'' {
                if matches!(chars.peek(), Some((_, '\''))) {
                    label.push('\'');
                    chars.next();
                    continue;
                }
                end = Some(i + 1);
                break;
            }
            label.push(c);
        }
        let rest = quoted[end?..].strip_prefix('=')?;
        (label, rest)
    } else {
        let (l, r) = token.split_once('=')?;
        (l.to_string(), r)
    };
    if label.is_empty() {
        return None;
    }

    let mut fields = rest.split(';');
    let (value, uom) = split_value_uom(fields.next()?)?;
    let warn = range_field(fields.next())?;
    let crit = range_field(fields.next())?;
    let min = number_field(fields.next())?;
    let max = number_field(fields.next())?;
    if fields.next().is_some() {
        return None;
    }
    if let (Some(lo), Some(hi)) = (min, max) {
        if lo > hi {
            return None;
        }
    }
    Some(PerfDatum {
        label,
        value,
        uom,
        warn,
        crit,
        min,
        max,
    })
}

fn numeric_prefix_len(s: &str) -> usize {
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'-' || b[i] == b'+') {
        i += 1;
    }
    let digits_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    if i < b.len() && b[i] == b'.' {
        i += 1;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
    }
    if !s[digits_start..i].bytes().any(|c| c.is_ascii_digit()) {
        return 0;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'-' || b[j] == b'+') {
            j += 1;
        }
        let exp_start = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_start {
            i = j;
        }
    }
    i
}

fn split_value_uom(field: &str) -> Option<(f64, Option<String>)> {
    let n = numeric_prefix_len(field);
    if n == 0 {
        return None;
    }
    let value: f64 = field[..n].parse().ok().filter(|v: &f64| v.is_finite())?;
    let uom = &field[n..];
    if !uom.chars().all(|c| c.is_ascii_alphabetic() || c == '%') {
        return None;
    }
    Some((value, (!uom.is_empty()).then(|| uom.to_string())))
}

// Outer None = malformed, inner None = field absent or empty.
fn range_field(field: Option<&str>) -> Option<Option<Range>> {
    match field {
        None | Some("") => Some(None),
        Some(text) => Range::parse(text).ok().map(Some),
    }
}

fn number_field(field: Option<&str>) -> Option<Option<f64>> {
    match field {
        None | Some("") => Some(None),
        Some(text) => {
            let n = numeric_prefix_len(text);
            if n == 0 || n != text.len() {
                return None;
            }
            text.parse().ok().filter(|v: &f64| v.is_finite()).map(Some)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_example() {
        let out = parse_plugin_output("DISK OK - 42% free | disk=42%;80;90;0;100");
        assert_eq!(out.summary, "DISK OK - 42% free");
        assert_eq!(out.perfdata.len(), 1);
        let d = &out.perfdata[0];
        assert_eq!(d.label, "disk");
        assert_eq!(d.value, 42.0);
        assert_eq!(d.uom.as_deref(), Some("%"));
        assert_eq!(d.warn, Some(Range::new(0.0, 80.0, false).unwrap()));
        assert_eq!(d.crit, Some(Range::new(0.0, 90.0, false).unwrap()));
        assert_eq!((d.min, d.max), (Some(0.0), Some(100.0)));
    }

    #[test]
    fn summary_only() {
        let out = parse_plugin_output("PING OK");
        assert_eq!(out.summary, "PING OK");
        assert!(out.perfdata.is_empty() && out.malformed.is_empty());
    }

    #[test]
    fn two_values() {
        let out = parse_plugin_output("OK | a=1 b=2.5s");
        assert_eq!(out.perfdata.len(), 2);
        assert_eq!(out.perfdata[0].value, 1.0);
        assert_eq!(out.perfdata[0].uom, None);
        assert_eq!(out.perfdata[1].value, 2.5);
        assert_eq!(out.perfdata[1].uom.as_deref(), Some("s"));
    }

    #[test]
    fn quoted_label() {
        let out = parse_plugin_output("OK | 'disk usage'=7GB;;;0 'it''s'=1");
        assert_eq!(out.perfdata[0].label, "disk usage");
        assert_eq!(out.perfdata[0].uom.as_deref(), Some("GB"));
        assert_eq!(out.perfdata[0].min, Some(0.0));
        assert_eq!(out.perfdata[1].label, "it's");
    }

    #[test]
    fn bad_tokens_are_dropped_and_counted() {
        let out = parse_plugin_output("WARN - x | good=1 =2 bad=abc worse=1;2;3;4;5;6 rev=1;;;5;1");
        assert_eq!(out.summary, "WARN - x");
        assert_eq!(out.perfdata.len(), 1);
        assert_eq!(out.malformed, ["=2", "bad=abc", "worse=1;2;3;4;5;6", "rev=1;;;5;1"]);
    }

    #[test]
    fn only_first_line_is_read() {
        let out = parse_plugin_output("OK | a=1\nlong output | b=2");
        assert_eq!(out.perfdata.len(), 1);
    }

    #[test]
    fn render_skips_trailing_empty_fields() {
        let mut d = PerfDatum::new("time", 0.5).with_uom("s");
        assert_eq!(d.to_string(), "time=0.5s");
        d.crit = Some(Range::parse("1:").unwrap());
        assert_eq!(d.to_string(), "time=0.5s;;1:");
    }
}
