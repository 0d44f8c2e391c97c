//! Whitespace-delimited text formats with `#` comments.
//!
//! ```text
//! protocol:  <utt> <speaker> <bonafide|replay>
//! trials:    <enroll> <test> <target|zero_effort|replay>
//! scores:    <enroll> <test> <type> <score>
//! pad:       <utt> <bona fide probability>
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use isv_core::trials::{Trial, TrialType};
use isv_core::SpoofLabel;

use crate::error::{Error, Result};
use crate::fsio::{read_text, write_bytes};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolRecord {
    pub utt: String,
    pub speaker: String,
    pub label: SpoofLabel,
}

/// Non-empty, comment-stripped lines as `(1-based line number, tokens)`.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let body = line.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = body.split_whitespace().collect();
        (!tokens.is_empty()).then_some((i + 1, tokens))
    })
}

fn parse_err(source: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source.to_string(),
        line,
        msg: msg.into(),
    }
}

pub fn parse_protocol(text: &str, source: &str) -> Result<Vec<ProtocolRecord>> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::new();
    for (line, tokens) in content_lines(text) {
        let [utt, speaker, label] = tokens[..] else {
            return Err(parse_err(source, line, format!("expected 3 fields, found {}", tokens.len())));
        };
        let label: SpoofLabel = label.parse().map_err(|e: isv_core::Error| parse_err(source, line, e.to_string()))?;
        if let Some(first) = seen.insert(utt, line) {
            return Err(Error::Duplicate {
                source_name: source.to_string(),
                id: utt.to_string(),
                first,
                second: line,
            });
        }
        out.push(ProtocolRecord {
            utt: utt.to_string(),
            speaker: speaker.to_string(),
            label,
        });
    }
    Ok(out)
}

pub fn format_protocol(records: &[ProtocolRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = writeln!(s, "{} {} {}", r.utt, r.speaker, r.label);
    }
    s
}

pub fn read_protocol(path: &Path) -> Result<Vec<ProtocolRecord>> {
    parse_protocol(&read_text(path)?, &path.display().to_string())
}

pub fn write_protocol(path: &Path, records: &[ProtocolRecord]) -> Result<()> {
    write_bytes(path, format_protocol(records).as_bytes())
}

/// Where the enroll, test and type columns sit, and how type tokens map.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub enroll: usize,
    pub test: usize,
    pub kind: usize,
    pub tokens: Vec<(String, TrialType)>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            enroll: 0,
            test: 1,
            kind: 2,
            tokens: TrialType::ALL.iter().map(|k| (k.as_str().to_string(), *k)).collect(),
        }
    }
}

impl ColumnMap {
    /// `columns` like `enroll:0,test:1,type:2`; `tokens` like `genuine:target,spoof:replay`.
    /// Empty strings keep the native layout.
    pub fn parse(columns: &str, tokens: &str) -> Result<Self> {
        let mut map = ColumnMap::default();
        for part in columns.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, idx) = part
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("column mapping `{part}` is not name:index")))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("column index `{idx}` is not a number")))?;
            match name.trim() {
                "enroll" => map.enroll = idx,
                "test" => map.test = idx,
                "type" => map.kind = idx,
                other => return Err(Error::Config(format!("unknown trial column `{other}`"))),
            }
        }
        let custom: Vec<(String, TrialType)> = tokens
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|part| {
                let (tok, kind) = part
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("token mapping `{part}` is not token:type")))?;
                let kind: TrialType = kind.trim().parse().map_err(|e: isv_core::Error| Error::Config(e.to_string()))?;
                Ok((tok.trim().to_string(), kind))
            })
            .collect::<Result<_>>()?;
        if !custom.is_empty() {
            map.tokens = custom;
        }
        Ok(map)
    }

    fn width(&self) -> usize {
        self.enroll.max(self.test).max(self.kind) + 1
    }

    fn kind_of(&self, token: &str) -> Option<TrialType> {
        self.tokens.iter().find(|(t, _)| t == token).map(|(_, k)| *k)
    }
}

pub fn parse_trials(text: &str, map: &ColumnMap, source: &str) -> Result<Vec<Trial>> {
    let mut out = Vec::new();
    for (line, tokens) in content_lines(text) {
        if tokens.len() < map.width() {
            return Err(parse_err(source, line, format!("expected >= {} fields, found {}", map.width(), tokens.len())));
        }
        let kind = map
            .kind_of(tokens[map.kind])
            .ok_or_else(|| parse_err(source, line, format!("unknown trial type `{}`", tokens[map.kind])))?;
        out.push(Trial {
            enroll: tokens[map.enroll].to_string(),
            test: tokens[map.test].to_string(),
            kind,
        });
    }
    Ok(out)
}

pub fn format_trials(trials: &[Trial]) -> String {
    let mut s = String::new();
    for t in trials {
        let _ = writeln!(s, "{} {} {}", t.enroll, t.test, t.kind);
    }
    s
}

pub fn read_trials(path: &Path, map: &ColumnMap) -> Result<Vec<Trial>> {
    parse_trials(&read_text(path)?, map, &path.display().to_string())
}

pub fn write_trials(path: &Path, trials: &[Trial]) -> Result<()> {
    write_bytes(path, format_trials(trials).as_bytes())
}

/// One scored trial as written to a score file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLine {
    pub trial: Trial,
    pub score: f64,
}

pub fn format_scores(lines: &[ScoreLine]) -> String {
    let mut s = String::new();
    for l in lines {
        let _ = writeln!(s, "{} {} {} {}", l.trial.enroll, l.trial.test, l.trial.kind, l.score);
    }
    s
}

pub fn parse_scores(text: &str, source: &str) -> Result<Vec<ScoreLine>> {
    let mut out = Vec::new();
    for (line, tokens) in content_lines(text) {
        let [enroll, test, kind, score] = tokens[..] else {
            return Err(parse_err(source, line, format!("expected 4 fields, found {}", tokens.len())));
        };
        let kind: TrialType = kind.parse().map_err(|e: isv_core::Error| parse_err(source, line, e.to_string()))?;
        let score: f64 = score
            .parse()
            .map_err(|_| parse_err(source, line, format!("bad score `{score}`")))?;
        out.push(ScoreLine {
            trial: Trial {
                enroll: enroll.to_string(),
                test: test.to_string(),
                kind,
            },
            score,
        });
    }
    Ok(out)
}

pub fn format_pad_scores(scores: &[(String, f64)]) -> String {
    let mut s = String::new();
    for (utt, p) in scores {
        let _ = writeln!(s, "{utt} {p}");
    }
    s
}

pub fn parse_pad_scores(text: &str, source: &str) -> Result<Vec<(String, f64)>> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::new();
    for (line, tokens) in content_lines(text) {
        let [utt, p] = tokens[..] else {
            return Err(parse_err(source, line, format!("expected 2 fields, found {}", tokens.len())));
        };
        let p: f64 = p.parse().map_err(|_| parse_err(source, line, format!("bad probability `{p}`")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(parse_err(source, line, format!("probability {p} outside [0, 1]")));
        }
        if let Some(first) = seen.insert(utt, line) {
            return Err(Error::Duplicate {
                source_name: source.to_string(),
                id: utt.to_string(),
                first,
                second: line,
            });
        }
        out.push((utt.to_string(), p));
    }
    Ok(out)
}
