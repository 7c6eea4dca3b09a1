//! Blueprint documents: the compact line format and its structured equivalent.
//!
//! A line carries one or more entries, each introduced by `material:`:
//!
//! ```text
//! [material:oak_trapdoor facing:E positions:[[-8 -60 -1] [-8 -60 0]] material:oak_trapdoor facing:S position:[-9 -60 2]]
//! [material:grass_block facing: None positions:[start:[-9 -60 -1] end:[-9 -60 1]]]
//! ```
//!
//! `start`/`end` boxes are expanded to explicit cells on load.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::catalogue::is_material;
use crate::geom::{Axis, Facing, Pos};

#[derive(Debug, Error, PartialEq)]
pub enum BlueprintError {
    #[error("blueprint line {line}: {message} (`{text}`)")]
    Line { line: usize, text: String, message: String },
    #[error("blueprint document: {0}")]
    Document(String),
}

/// A single block as it should appear in the world.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockTuple {
    pub position: Pos,
    pub material: String,
    #[serde(default)]
    pub facing: Facing,
    #[serde(default)]
    pub axis: Axis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlueprintEntry {
    pub material: String,
    #[serde(default)]
    pub facing: Facing,
    #[serde(default)]
    pub axis: Axis,
    pub positions: Vec<Pos>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blueprint {
    pub entries: Vec<BlueprintEntry>,
}

/// Structured entry form: either explicit positions or a start/end box.
#[derive(Debug, Deserialize)]
struct StructuredEntry {
    material: String,
    #[serde(default)]
    facing: Option<String>,
    #[serde(default)]
    axis: Option<String>,
    #[serde(default)]
    positions: Option<Vec<Pos>>,
    #[serde(default)]
    position: Option<Pos>,
    #[serde(default)]
    start: Option<Pos>,
    #[serde(default)]
    end: Option<Pos>,
}

impl Blueprint {
    /// Parses blueprint lines in the compact text format.
    pub fn parse_lines<S: AsRef<str>>(lines: &[S]) -> Result<Self, BlueprintError> {
        let mut entries = Vec::new();
        for (i, line) in lines.iter().enumerate() {
            let line = line.as_ref();
            if line.trim().is_empty() {
                continue;
            }
            let parsed = parse_line(line).map_err(|message| BlueprintError::Line {
                line: i + 1,
                text: line.trim().to_string(),
                message,
            })?;
            entries.extend(parsed);
        }
        Ok(Self { entries })
    }

    /// Parses a multi-line text document (one blueprint line per line).
    pub fn parse_text(text: &str) -> Result<Self, BlueprintError> {
        let lines: Vec<&str> = text.lines().collect();
        Self::parse_lines(&lines)
    }

    /// Loads any supported document shape: an array of lines, an object with a
    /// single task key mapping to lines, or `{"entries": [...]}`.
    pub fn from_document(doc: &Value) -> Result<Self, BlueprintError> {
        match doc {
            Value::Array(items) => {
                let lines = items
                    .iter()
                    .map(|v| {
                        v.as_str()
                            .map(str::to_string)
                            .ok_or_else(|| BlueprintError::Document("expected an array of line strings".into()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Self::parse_lines(&lines)
            }
            Value::Object(map) if map.contains_key("entries") => {
                let raw: Vec<StructuredEntry> = serde_json::from_value(map["entries"].clone())
                    .map_err(|e| BlueprintError::Document(e.to_string()))?;
                let mut entries = Vec::with_capacity(raw.len());
                for (i, e) in raw.into_iter().enumerate() {
                    entries.push(structured_entry(e).map_err(|message| BlueprintError::Line {
                        line: i + 1,
                        text: "structured entry".into(),
                        message,
                    })?);
                }
                Ok(Self { entries })
            }
            Value::Object(map) => {
                let mut arrays = map.values().filter(|v| v.is_array());
                match (arrays.next(), arrays.next()) {
                    (Some(lines), None) => Self::from_document(lines),
                    _ => Err(BlueprintError::Document(
                        "expected exactly one task key holding blueprint lines".into(),
                    )),
                }
            }
            _ => Err(BlueprintError::Document("unsupported blueprint document".into())),
        }
    }

    /// Every cell of the blueprint in declaration order.
    pub fn cells(&self) -> Vec<BlockTuple> {
        self.entries
            .iter()
            .flat_map(|e| {
                e.positions.iter().map(move |&p| BlockTuple {
                    position: p,
                    material: e.material.clone(),
                    facing: e.facing,
                    axis: e.axis,
                })
            })
            .collect()
    }

    pub fn block_set(&self) -> BTreeSet<BlockTuple> {
        self.cells().into_iter().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.iter().map(|e| e.positions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Material counts required to build the blueprint.
    pub fn material_counts(&self) -> crate::items::ItemBag {
        self.cells().iter().map(|c| (c.material.clone(), 1)).collect()
    }

    /// Renders the compact line format, one entry per line.
    pub fn to_lines(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| {
                let mut s = format!("[material:{} facing:{}", e.material, e.facing.token());
                if e.axis != Axis::None {
                    s.push_str(&format!(" axis:{}", e.axis.token()));
                }
                if e.positions.len() == 1 {
                    let p = e.positions[0];
                    s.push_str(&format!(" position:[{} {} {}]]", p.x, p.y, p.z));
                } else {
                    let ps: Vec<String> = e
                        .positions
                        .iter()
                        .map(|p| format!("[{} {} {}]", p.x, p.y, p.z))
                        .collect();
                    s.push_str(&format!(" positions:[{}]]", ps.join(" ")));
                }
                s
            })
            .collect()
    }
}

fn structured_entry(e: StructuredEntry) -> Result<BlueprintEntry, String> {
    if !is_material(&e.material) {
        return Err(format!("unknown material `{}`", e.material));
    }
    let facing = e.facing.as_deref().unwrap_or("none").parse::<Facing>()?;
    let axis = e.axis.as_deref().unwrap_or("none").parse::<Axis>()?;
    let positions = match (e.positions, e.position, e.start, e.end) {
        (Some(ps), _, _, _) => ps,
        (None, Some(p), _, _) => vec![p],
        (None, None, Some(a), Some(b)) => expand_box(a, b),
        _ => return Err("entry has no positions".into()),
    };
    if positions.is_empty() {
        return Err("entry has no positions".into());
    }
    Ok(BlueprintEntry {
        material: e.material,
        facing,
        axis,
        positions,
    })
}

/// All cells of the inclusive box spanned by two corners, x-major then y then z.
pub fn expand_box(a: Pos, b: Pos) -> Vec<Pos> {
    let (x0, x1) = (a.x.min(b.x), a.x.max(b.x));
    let (y0, y1) = (a.y.min(b.y), a.y.max(b.y));
    let (z0, z1) = (a.z.min(b.z), a.z.max(b.z));
    let mut out = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            for z in z0..=z1 {
                out.push(Pos::new(x, y, z));
            }
        }
    }
    out
}

fn parse_line(line: &str) -> Result<Vec<BlueprintEntry>, String> {
    let starts: Vec<usize> = line.match_indices("material:").map(|(i, _)| i).collect();
    if starts.is_empty() {
        return Err("no `material:` entry".into());
    }
    let mut out = Vec::new();
    for (k, &s) in starts.iter().enumerate() {
        let end = starts.get(k + 1).copied().unwrap_or(line.len());
        out.push(parse_entry(&line[s..end])?);
    }
    Ok(out)
}

fn value_after<'a>(segment: &'a str, key: &str) -> Option<&'a str> {
    let idx = find_key(segment, key)?;
    let rest = segment[idx + key.len()..].trim_start();
    let end = rest
        .find(|c: char| c.is_whitespace() || c == ']' || c == '[')
        .unwrap_or(rest.len());
    Some(&rest[..end])
}

/// Finds `key` at a word boundary so `position:` does not match inside `positions:`.
fn find_key(segment: &str, key: &str) -> Option<usize> {
    segment.match_indices(key).map(|(i, _)| i).find(|&i| {
        i == 0
            || !segment[..i]
                .chars()
                .next_back()
                .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
    })
}

fn parse_entry(segment: &str) -> Result<BlueprintEntry, String> {
    let material = value_after(segment, "material:")
        .filter(|m| !m.is_empty())
        .ok_or("missing material name")?
        .to_string();
    if !is_material(&material) {
        return Err(format!("unknown material `{material}`"));
    }
    let facing = match value_after(segment, "facing:") {
        Some(v) => v.parse::<Facing>()?,
        None => Facing::None,
    };
    let axis = match value_after(segment, "axis:") {
        Some(v) => v.parse::<Axis>()?,
        None => Axis::None,
    };
    let positions = if let Some(i) = find_key(segment, "positions:") {
        parse_positions(&segment[i + "positions:".len()..])?
    } else if let Some(i) = find_key(segment, "position:") {
        let mut cur = Cursor::new(&segment[i + "position:".len()..]);
        vec![cur.triple()?]
    } else {
        return Err(format!("entry `{material}` has no positions"));
    };
    if positions.is_empty() {
        return Err(format!("entry `{material}` has no positions"));
    }
    Ok(BlueprintEntry {
        material,
        facing,
        axis,
        positions,
    })
}

fn parse_positions(text: &str) -> Result<Vec<Pos>, String> {
    let mut cur = Cursor::new(text);
    cur.expect('[')?;
    cur.skip_ws();
    if cur.eat_word("start:") {
        let a = cur.triple()?;
        cur.skip_ws();
        if !cur.eat_word("end:") {
            return Err("box is missing `end:`".into());
        }
        let b = cur.triple()?;
        return Ok(expand_box(a, b));
    }
    let mut out = Vec::new();
    loop {
        cur.skip_ws();
        match cur.peek() {
            Some('[') => out.push(cur.triple()?),
            Some(']') => break,
            Some(c) => return Err(format!("unexpected `{c}` in positions")),
            None => return Err("unterminated positions list".into()),
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    text: &'a str,
    at: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, at: 0 }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.at..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() || c == ',' {
                self.at += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn expect(&mut self, want: char) -> Result<(), String> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c == want => {
                self.at += c.len_utf8();
                Ok(())
            }
            Some(c) => Err(format!("expected `{want}`, found `{c}`")),
            None => Err(format!("expected `{want}`, found end of line")),
        }
    }

    fn eat_word(&mut self, word: &str) -> bool {
        if self.text[self.at..].starts_with(word) {
            self.at += word.len();
            true
        } else {
            false
        }
    }

    fn int(&mut self) -> Result<i32, String> {
        self.skip_ws();
        let rest = &self.text[self.at..];
        let len = rest
            .char_indices()
            .take_while(|&(i, c)| c.is_ascii_digit() || (i == 0 && (c == '-' || c == '+')))
            .map(|(i, c)| i + c.len_utf8())
            .last()
            .unwrap_or(0);
        let tok = &rest[..len];
        let v = tok
            .parse::<i32>()
            .map_err(|_| format!("expected integer near `{}`", rest.chars().take(8).collect::<String>()))?;
        self.at += len;
        Ok(v)
    }

    fn triple(&mut self) -> Result<Pos, String> {
        self.expect('[')?;
        let x = self.int()?;
        let y = self.int()?;
        let z = self.int()?;
        self.expect(']')?;
        Ok(Pos::new(x, y, z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_block_line() {
        let bp = Blueprint::parse_lines(&["[material:poppy facing: None position:[-9 -59 -1]]"]).unwrap();
        assert_eq!(bp.entries.len(), 1);
        assert_eq!(bp.entries[0].positions, vec![Pos::new(-9, -59, -1)]);
        assert_eq!(bp.entries[0].facing, Facing::None);
    }

    #[test]
    fn box_expands_to_cells() {
        let bp = Blueprint::parse_lines(&["[material:stone facing: None positions:[start:[0 -60 0] end:[1 -60 1]]]"])
            .unwrap();
        // 2x1x2 box, enumerated independently
        let mut expect = Vec::new();
        for x in 0..=1 {
            for z in 0..=1 {
                expect.push(Pos::new(x, -60, z));
            }
        }
        let mut got = bp.entries[0].positions.clone();
        got.sort();
        expect.sort();
        assert_eq!(got, expect);
    }

    #[test]
    fn multiple_entries_on_one_line() {
        let bp = Blueprint::parse_lines(&[
            "[material:oak_trapdoor facing:E positions:[[-8 -60 -1] [-8 -60 0]] material:oak_trapdoor facing:S position:[-9 -60 2]]",
        ])
        .unwrap();
        assert_eq!(bp.entries.len(), 2);
        assert_eq!(bp.entries[0].facing, Facing::East);
        assert_eq!(bp.entries[0].positions.len(), 2);
        assert_eq!(bp.entries[1].facing, Facing::South);
        assert_eq!(bp.len(), 3);
    }

    #[test]
    fn axis_token_is_read() {
        let bp = Blueprint::parse_lines(&["[material:oak_log facing: None axis:x positions:[[0 -60 0] [1 -60 0]]]"])
            .unwrap();
        assert_eq!(bp.entries[0].axis, Axis::X);
    }

    #[test]
    fn unknown_material_names_the_line() {
        let err = Blueprint::parse_lines(&[
            "[material:stone facing: None position:[0 -60 0]]",
            "[material:moonrock facing: None position:[0 -59 0]]",
        ])
        .unwrap_err();
        match err {
            BlueprintError::Line { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("moonrock"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn structured_form_matches_line_form() {
        let doc = serde_json::json!({"entries": [
            {"material": "stone", "start": [0, -60, 0], "end": [1, -60, 0]},
            {"material": "oak_trapdoor", "facing": "N", "position": [0, -60, -1]}
        ]});
        let a = Blueprint::from_document(&doc).unwrap();
        let b = Blueprint::parse_lines(&[
            "[material:stone facing: None positions:[start:[0 -60 0] end:[1 -60 0]]]",
            "[material:oak_trapdoor facing:N position:[0 -60 -1]]",
        ])
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn to_lines_reparses() {
        let bp = Blueprint::parse_lines(&[
            "[material:oak_log facing:W axis:z positions:[[0 -60 0] [0 -60 1]]]",
            "[material:poppy facing: None position:[0 -59 0]]",
        ])
        .unwrap();
        let again = Blueprint::parse_lines(&bp.to_lines()).unwrap();
        assert_eq!(again, bp);
    }
}
