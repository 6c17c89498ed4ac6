//! Extended-XYZ reading and writing.
//!
//! Only the subset used by this project is understood: a `Lattice` key, an
//! optional `Properties` key of the form `species:S:1:pos:R:3[:tags:I:1]`,
//! an optional `pbc` key, and an optional `adsorbate_indices` key. Unknown
//! header keys are preserved in [`parse_header`] but otherwise ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Atom, Lattice, Structure, StructureError, Tag, Vec3};
use crate::elements;

#[derive(Debug, Clone, Default)]
pub struct WriteOptions {
    /// Always emit the tags column, even when every tag is 1.
    pub always_tags: bool,
    /// Extra `key=value` pairs appended to the header line, in order.
    pub extra: Vec<(String, String)>,
}

pub fn write_extxyz(s: &Structure) -> String {
    write_extxyz_with(s, &WriteOptions::default())
}

pub fn write_extxyz_with(s: &Structure, opts: &WriteOptions) -> String {
    let with_tags = opts.always_tags || s.atoms.iter().any(|a| a.tag != Tag::Surface);
    let mut out = String::new();
    let _ = writeln!(out, "{}", s.atoms.len());

    let cell: Vec<String> = s
        .lattice
        .cell
        .iter()
        .flat_map(|row| row.iter().map(|v| format!("{v:.6}")))
        .collect();
    let pbc: Vec<&str> = s.lattice.pbc.iter().map(|&p| if p { "T" } else { "F" }).collect();
    let props = if with_tags {
        "species:S:1:pos:R:3:tags:I:1"
    } else {
        "species:S:1:pos:R:3"
    };
    let _ = write!(
        out,
        "Lattice=\"{}\" Properties={} pbc=\"{}\"",
        cell.join(" "),
        props,
        pbc.join(" ")
    );
    for (k, v) in &opts.extra {
        let _ = write!(out, " {}={}", k, quote(v));
    }
    out.push('\n');

    for a in &s.atoms {
        let p = a.position;
        let _ = write!(out, "{:<2} {:14.6} {:14.6} {:14.6}", a.symbol(), p.x, p.y, p.z);
        if with_tags {
            let _ = write!(out, " {}", a.tag as u8);
        }
        out.push('\n');
    }
    out
}

fn quote(v: &str) -> String {
    if v.is_empty() || v.contains(char::is_whitespace) || v.contains('=') {
        format!("\"{}\"", v.replace('"', "'"))
    } else {
        v.to_string()
    }
}

/// Splits a header line into `key=value` pairs; values may be double-quoted.
pub fn parse_header(line: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    let mut chars = line.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if chars.peek().is_none() {
            break;
        }
        let mut key = String::new();
        while let Some(&c) = chars.peek() {
            if c == '=' || c.is_whitespace() {
                break;
            }
            key.push(c);
            chars.next();
        }
        if chars.peek() != Some(&'=') {
            // bare flag, e.g. a comment word
            out.insert(key, String::new());
            continue;
        }
        chars.next();
        let mut value = String::new();
        if chars.peek() == Some(&'"') {
            chars.next();
            let mut closed = false;
            for c in chars.by_ref() {
                if c == '"' {
                    closed = true;
                    break;
                }
                value.push(c);
            }
            if !closed {
                return Err(format!("unterminated quote in value of '{key}'"));
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                value.push(c);
                chars.next();
            }
        }
        out.insert(key, value);
    }
    Ok(out)
}

fn parse_err(line: usize, message: impl Into<String>) -> StructureError {
    StructureError::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_extxyz(text: &str) -> Result<Structure, StructureError> {
    let lines: Vec<&str> = text.lines().collect();
    let (s, _, consumed) = parse_frame(&lines, 0)?;
    if lines[consumed..].iter().any(|l| !l.trim().is_empty()) {
        return Err(parse_err(consumed + 1, "trailing content after the last atom line"));
    }
    Ok(s)
}

/// A structure with its comment-line key/value map.
pub type Frame = (Structure, BTreeMap<String, String>);

/// Parses every frame of a multi-frame file.
pub fn parse_extxyz_frames(text: &str) -> Result<Vec<Frame>, StructureError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut frames = Vec::new();
    let mut start = 0;
    while start < lines.len() {
        if lines[start].trim().is_empty() {
            start += 1;
            continue;
        }
        let (s, header, next) = parse_frame(&lines, start)?;
        frames.push((s, header));
        start = next;
    }
    Ok(frames)
}

fn parse_frame(lines: &[&str], start: usize) -> Result<(Structure, BTreeMap<String, String>, usize), StructureError> {
    let count_line = start + 1;
    let n: usize = lines
        .get(start)
        .ok_or_else(|| parse_err(count_line, "empty input"))?
        .trim()
        .parse()
        .map_err(|_| parse_err(count_line, "malformed atom count"))?;
    if n == 0 {
        return Err(parse_err(count_line, "atom count must be at least 1"));
    }
    let header_line = start + 2;
    let header_text = lines
        .get(start + 1)
        .ok_or_else(|| parse_err(header_line, "missing header line"))?;
    let header = parse_header(header_text).map_err(|m| parse_err(header_line, m))?;

    let lattice_text = header
        .get("Lattice")
        .ok_or_else(|| parse_err(header_line, "missing Lattice key"))?;
    let values: Vec<f64> = lattice_text
        .split_whitespace()
        .map(|v| v.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| parse_err(header_line, "Lattice must hold 9 numbers"))?;
    if values.len() != 9 || values.iter().any(|v| !v.is_finite()) {
        return Err(parse_err(header_line, "Lattice must hold 9 finite numbers"));
    }
    let cell = [
        [values[0], values[1], values[2]],
        [values[3], values[4], values[5]],
        [values[6], values[7], values[8]],
    ];
    let pbc = match header.get("pbc") {
        Some(p) => {
            let flags: Vec<bool> = p
                .split_whitespace()
                .map(|f| matches!(f, "T" | "True" | "true" | "1"))
                .collect();
            if flags.len() != 3 {
                return Err(parse_err(header_line, "pbc must hold 3 flags"));
            }
            [flags[0], flags[1], flags[2]]
        }
        None => [true; 3],
    };
    let lattice = Lattice::new(cell, pbc).map_err(|e| parse_err(header_line, e.to_string()))?;

    let tags_declared = match header.get("Properties") {
        Some(p) => {
            let p = p.as_str();
            if p == "species:S:1:pos:R:3" {
                Some(false)
            } else if p == "species:S:1:pos:R:3:tags:I:1" {
                Some(true)
            } else {
                return Err(parse_err(header_line, format!("unsupported Properties '{p}'")));
            }
        }
        None => None,
    };

    let adsorbate_indices: Option<Vec<usize>> = match header.get("adsorbate_indices") {
        Some(v) => Some(
            v.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| parse_err(header_line, "adsorbate_indices must be integers"))?,
        ),
        None => None,
    };

    let mut atoms = Vec::with_capacity(n);
    for k in 0..n {
        let idx = start + 2 + k;
        let line_no = idx + 1;
        let line = lines
            .get(idx)
            .ok_or_else(|| parse_err(line_no, format!("expected {n} atom lines, found {k}")))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let has_tag = match tags_declared {
            Some(t) => t,
            None => fields.len() == 5,
        };
        let expected = if has_tag { 5 } else { 4 };
        if fields.len() != expected {
            return Err(parse_err(
                line_no,
                format!("expected {expected} columns, found {}", fields.len()),
            ));
        }
        let symbol = fields[0];
        let z = elements::atomic_number(symbol).ok_or_else(|| StructureError::UnknownElement {
            symbol: symbol.to_string(),
            line: line_no,
        })?;
        let mut pos = [0.0; 3];
        for d in 0..3 {
            let v: f64 = fields[1 + d]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad coordinate '{}'", fields[1 + d])))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, "non-finite coordinate"));
            }
            pos[d] = v;
        }
        let tag = if has_tag {
            let t: u8 = fields[4]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad tag '{}'", fields[4])))?;
            Tag::try_from(t).map_err(|m| parse_err(line_no, m))?
        } else if adsorbate_indices.as_ref().is_some_and(|ix| ix.contains(&k)) {
            Tag::Adsorbate
        } else {
            Tag::Surface
        };
        atoms.push(Atom {
            z,
            position: Vec3::from(pos),
            tag,
        });
    }
    let s = Structure::new(lattice, atoms).map_err(|e| parse_err(count_line, e.to_string()))?;
    Ok((s, header, start + 2 + n))
}
