//! TNTP network and trips file parsing and serialization.
//!
//! The TNTP plain-text conventions: a metadata block of `<TAG> value` lines
//! closed by `<END OF METADATA>`, `~` starting a comment that runs to end of
//! line, and whitespace-separated records terminated by `;`. Network files
//! carry one link per record (ten standard fields); trips files carry
//! `Origin o` blocks of `destination : flow;` pairs.
//!
//! Parsing is strict about structure (malformed headers, non-numeric fields,
//! out-of-range node ids and negative demands are hard errors) but lenient
//! about presentation: comments, blank lines and arbitrary horizontal
//! whitespace never matter, and recoverable oddities (extra trailing link
//! fields, a declared total that disagrees with the entry sum) are surfaced
//! as warnings instead of failures.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

/// Number of standard fields in a TNTP link record.
const LINK_FIELDS: usize = 10;

/// Relative tolerance for reconciling a declared `<TOTAL OD FLOW>` with the
/// sum of parsed entries before a warning is raised.
const TOTAL_FLOW_RTOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TntpError {
    #[error("line {line}: malformed header: {detail}")]
    MalformedHeader { line: usize, detail: String },
    #[error("link count mismatch: metadata declares {declared}, file contains {found}")]
    LinkCountMismatch { declared: usize, found: usize },
    #[error("line {line}: field `{field}` is not numeric: `{text}`")]
    NonNumericField {
        line: usize,
        field: &'static str,
        text: String,
    },
    #[error("line {line}: node id {node} outside [1, {max}]")]
    NodeIdOutOfRange { line: usize, node: i64, max: u32 },
    #[error("line {line}: link record has {found} fields, expected at least {LINK_FIELDS}")]
    ShortLinkRecord { line: usize, found: usize },
    #[error("line {line}: invalid link value: {field} = {value}")]
    InvalidLinkValue {
        line: usize,
        field: &'static str,
        value: f64,
    },
    #[error("line {line}: malformed origin block: {detail}")]
    MalformedOriginBlock { line: usize, detail: String },
    #[error("line {line}: negative demand {value} for OD ({origin}, {destination})")]
    NegativeDemand {
        line: usize,
        origin: u32,
        destination: u32,
        value: f64,
    },
}

/// A recoverable diagnostic attached to a successful parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl Warning {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Warning {
            line,
            message: message.into(),
        }
    }
}

/// One link record of a TNTP network file, fields in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLink {
    pub init_node: u32,
    pub term_node: u32,
    pub capacity: f64,
    pub length: f64,
    pub free_flow_time: f64,
    pub b: f64,
    pub power: f64,
    pub speed: f64,
    pub toll: f64,
    pub link_type: f64,
}

/// A parsed TNTP network file: metadata plus all links in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawNetworkFile {
    pub node_count: u32,
    pub zone_count: u32,
    pub first_through_node: u32,
    pub links: Vec<RawLink>,
}

/// Successful network parse: the file plus any warning-level diagnostics.
#[derive(Debug)]
pub struct NetworkParse {
    pub raw: RawNetworkFile,
    pub warnings: Vec<Warning>,
}

/// Origin-destination demand table parsed from a trips file.
///
/// Entries are keyed by 1-based zone ids and include diagonal (intrazonal)
/// records; those are excluded from assignment by the callers but retained
/// here so declared totals reconcile.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemandTable {
    pub entries: BTreeMap<(u32, u32), f64>,
    pub zone_count: Option<u32>,
    pub declared_total: Option<f64>,
}

impl DemandTable {
    /// Sum of all entries, diagonal included, accumulated in key order.
    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Sum of diagonal (origin == destination) entries.
    pub fn diagonal_total(&self) -> f64 {
        self.entries
            .iter()
            .filter(|((o, d), _)| o == d)
            .map(|(_, v)| v)
            .sum()
    }

    /// Off-diagonal entries with strictly positive demand, in key order.
    pub fn assignment_entries(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.entries
            .iter()
            .filter(|((o, d), &v)| o != d && v > 0.0)
            .map(|(&od, &v)| (od, v))
    }

    /// Number of off-diagonal entries with strictly positive demand.
    pub fn positive_od_count(&self) -> usize {
        self.assignment_entries().count()
    }
}

/// Successful trips parse: the table plus any warning-level diagnostics.
#[derive(Debug)]
pub struct TripsParse {
    pub table: DemandTable,
    pub warnings: Vec<Warning>,
}

/// Strips a `~` comment (to end of line) and returns the payload.
fn strip_comment(line: &str) -> &str {
    match line.find('~') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

/// Metadata block: `<TAG> value` lines until `<END OF METADATA>`.
///
/// Returns the collected tags (uppercased, single-spaced) and the index of
/// the first line after the terminator.
/// Tag name → (line number, value) for the metadata block.
type MetadataTags = BTreeMap<String, (usize, String)>;

fn parse_metadata(lines: &[&str]) -> Result<(MetadataTags, usize), TntpError> {
    let mut tags: MetadataTags = BTreeMap::new();
    for (idx, raw_line) in lines.iter().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw_line).trim();
        if line.is_empty() {
            continue;
        }
        if !line.starts_with('<') {
            return Err(TntpError::MalformedHeader {
                line: line_no,
                detail: format!("expected `<TAG>` metadata before records, found `{line}`"),
            });
        }
        let close = line.find('>').ok_or_else(|| TntpError::MalformedHeader {
            line: line_no,
            detail: "unterminated metadata tag".into(),
        })?;
        let tag = line[1..close]
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_uppercase();
        let value = line[close + 1..].trim().to_string();
        if tag == "END OF METADATA" {
            return Ok((tags, idx + 1));
        }
        if let Some((prev_line, _)) = tags.get(&tag) {
            return Err(TntpError::MalformedHeader {
                line: line_no,
                detail: format!("duplicate metadata tag <{tag}> (first on line {prev_line})"),
            });
        }
        tags.insert(tag, (line_no, value));
    }
    Err(TntpError::MalformedHeader {
        line: lines.len(),
        detail: "missing <END OF METADATA>".into(),
    })
}

fn require_uint_tag(tags: &BTreeMap<String, (usize, String)>, tag: &str) -> Result<u32, TntpError> {
    let (line, value) = tags.get(tag).ok_or_else(|| TntpError::MalformedHeader {
        line: 0,
        detail: format!("missing metadata tag <{tag}>"),
    })?;
    parse_uint(value, *line, "metadata value")
}

fn parse_uint(text: &str, line: usize, field: &'static str) -> Result<u32, TntpError> {
    // Some files write integer metadata as `24.0`; accept any numeral that is
    // an exact nonnegative integer.
    let as_float: f64 = text.parse().map_err(|_| TntpError::NonNumericField {
        line,
        field,
        text: text.to_string(),
    })?;
    if as_float < 0.0 || as_float.fract() != 0.0 || as_float > u32::MAX as f64 {
        return Err(TntpError::NonNumericField {
            line,
            field,
            text: text.to_string(),
        });
    }
    Ok(as_float as u32)
}

fn parse_float(text: &str, line: usize, field: &'static str) -> Result<f64, TntpError> {
    text.parse().map_err(|_| TntpError::NonNumericField {
        line,
        field,
        text: text.to_string(),
    })
}

fn parse_node_id(text: &str, line: usize, field: &'static str, max: u32) -> Result<u32, TntpError> {
    let value = parse_float(text, line, field)?;
    if value.fract() != 0.0 {
        return Err(TntpError::NonNumericField {
            line,
            field,
            text: text.to_string(),
        });
    }
    let node = value as i64;
    if node < 1 || node > max as i64 {
        return Err(TntpError::NodeIdOutOfRange { line, node, max });
    }
    Ok(node as u32)
}

/// Parses a TNTP network file.
pub fn parse_network(input: &str) -> Result<NetworkParse, TntpError> {
    let lines: Vec<&str> = input.lines().collect();
    let mut warnings = Vec::new();
    let (tags, body_start) = parse_metadata(&lines)?;

    let node_count = require_uint_tag(&tags, "NUMBER OF NODES")?;
    let zone_count = require_uint_tag(&tags, "NUMBER OF ZONES")?;
    let first_through_node = require_uint_tag(&tags, "FIRST THRU NODE")?;
    let declared_links = require_uint_tag(&tags, "NUMBER OF LINKS")? as usize;
    for (tag, (line, _)) in &tags {
        if !matches!(
            tag.as_str(),
            "NUMBER OF NODES" | "NUMBER OF ZONES" | "FIRST THRU NODE" | "NUMBER OF LINKS"
        ) {
            warnings.push(Warning::new(
                *line,
                format!("ignoring metadata tag <{tag}>"),
            ));
        }
    }
    if node_count == 0 || zone_count == 0 || zone_count > node_count {
        return Err(TntpError::MalformedHeader {
            line: 0,
            detail: format!(
                "inconsistent metadata: {node_count} nodes, {zone_count} zones (need nodes ≥ zones ≥ 1)"
            ),
        });
    }

    let mut links = Vec::with_capacity(declared_links);
    for (idx, raw_line) in lines.iter().enumerate().skip(body_start) {
        let line_no = idx + 1;
        let payload = strip_comment(raw_line).trim();
        if payload.is_empty() {
            continue;
        }
        for record in payload.split(';') {
            let fields: Vec<&str> = record.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() < LINK_FIELDS {
                return Err(TntpError::ShortLinkRecord {
                    line: line_no,
                    found: fields.len(),
                });
            }
            if fields.len() > LINK_FIELDS {
                warnings.push(Warning::new(
                    line_no,
                    format!(
                        "ignoring {} extra link field(s) beyond the {LINK_FIELDS} standard ones",
                        fields.len() - LINK_FIELDS
                    ),
                ));
            }
            let link = RawLink {
                init_node: parse_node_id(fields[0], line_no, "init_node", node_count)?,
                term_node: parse_node_id(fields[1], line_no, "term_node", node_count)?,
                capacity: parse_float(fields[2], line_no, "capacity")?,
                length: parse_float(fields[3], line_no, "length")?,
                free_flow_time: parse_float(fields[4], line_no, "free_flow_time")?,
                b: parse_float(fields[5], line_no, "b")?,
                power: parse_float(fields[6], line_no, "power")?,
                speed: parse_float(fields[7], line_no, "speed")?,
                toll: parse_float(fields[8], line_no, "toll")?,
                link_type: parse_float(fields[9], line_no, "link_type")?,
            };
            check_link_values(&link, line_no)?;
            links.push(link);
        }
    }

    if links.len() != declared_links {
        return Err(TntpError::LinkCountMismatch {
            declared: declared_links,
            found: links.len(),
        });
    }

    Ok(NetworkParse {
        raw: RawNetworkFile {
            node_count,
            zone_count,
            first_through_node,
            links,
        },
        warnings,
    })
}

fn check_link_values(link: &RawLink, line: usize) -> Result<(), TntpError> {
    if link.capacity <= 0.0 || link.capacity.is_nan() {
        return Err(TntpError::InvalidLinkValue {
            line,
            field: "capacity",
            value: link.capacity,
        });
    }
    for (field, value) in [
        ("free_flow_time", link.free_flow_time),
        ("b", link.b),
        ("power", link.power),
    ] {
        if value < 0.0 || !value.is_finite() {
            return Err(TntpError::InvalidLinkValue { line, field, value });
        }
    }
    Ok(())
}

/// Parses a TNTP trips file.
pub fn parse_trips(input: &str) -> Result<TripsParse, TntpError> {
    let lines: Vec<&str> = input.lines().collect();
    let mut warnings = Vec::new();
    let (tags, body_start) = parse_metadata(&lines)?;

    let zone_count = match tags.get("NUMBER OF ZONES") {
        Some((line, value)) => Some(parse_uint(value, *line, "metadata value")?),
        None => {
            warnings.push(Warning::new(0, "trips file declares no <NUMBER OF ZONES>"));
            None
        }
    };
    let declared_total = match tags.get("TOTAL OD FLOW") {
        Some((line, value)) => Some(parse_float(value, *line, "metadata value")?),
        None => None,
    };
    for (tag, (line, _)) in &tags {
        if !matches!(tag.as_str(), "NUMBER OF ZONES" | "TOTAL OD FLOW") {
            warnings.push(Warning::new(
                *line,
                format!("ignoring metadata tag <{tag}>"),
            ));
        }
    }

    let mut entries: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut current_origin: Option<u32> = None;
    let max_zone = zone_count.unwrap_or(u32::MAX);

    for (idx, raw_line) in lines.iter().enumerate().skip(body_start) {
        let line_no = idx + 1;
        let payload = strip_comment(raw_line).trim();
        if payload.is_empty() {
            continue;
        }
        if let Some(rest) = payload.strip_prefix("Origin") {
            let origin_text = rest.trim();
            let origin =
                parse_node_id(origin_text, line_no, "origin", max_zone).map_err(|e| match e {
                    TntpError::NonNumericField { .. } => TntpError::MalformedOriginBlock {
                        line: line_no,
                        detail: format!("unreadable origin id `{origin_text}`"),
                    },
                    other => other,
                })?;
            current_origin = Some(origin);
            continue;
        }
        let origin = current_origin.ok_or_else(|| TntpError::MalformedOriginBlock {
            line: line_no,
            detail: "demand record before any `Origin` header".into(),
        })?;
        for record in payload.split(';') {
            let record = record.trim();
            if record.is_empty() {
                continue;
            }
            let (dest_text, flow_text) =
                record
                    .split_once(':')
                    .ok_or_else(|| TntpError::MalformedOriginBlock {
                        line: line_no,
                        detail: format!("expected `destination : flow`, found `{record}`"),
                    })?;
            let destination = parse_node_id(dest_text.trim(), line_no, "destination", max_zone)?;
            let flow = parse_float(flow_text.trim(), line_no, "demand")?;
            if flow < 0.0 {
                return Err(TntpError::NegativeDemand {
                    line: line_no,
                    origin,
                    destination,
                    value: flow,
                });
            }
            if origin == destination && flow > 0.0 {
                warnings.push(Warning::new(
                    line_no,
                    format!("intrazonal demand ({origin}, {destination}) = {flow} is excluded from assignment"),
                ));
            }
            if let Some(previous) = entries.insert((origin, destination), flow) {
                warnings.push(Warning::new(
                    line_no,
                    format!(
                        "duplicate entry for OD ({origin}, {destination}); keeping the later value (was {previous})"
                    ),
                ));
            }
        }
    }

    let table = DemandTable {
        entries,
        zone_count,
        declared_total,
    };
    if let Some(declared) = declared_total {
        let total = table.total();
        if (total - declared).abs() > TOTAL_FLOW_RTOL * declared.abs().max(1.0) {
            warnings.push(Warning::new(
                0,
                format!(
                    "total OD flow mismatch: declared {declared}, parsed entries sum to {total}"
                ),
            ));
        }
    }

    Ok(TripsParse { table, warnings })
}

/// Serializes a network back to TNTP text.
///
/// Floats are written with Rust's shortest round-trip formatting, so parsing
/// the output reproduces the input structure field for field.
pub fn write_network(raw: &RawNetworkFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "<NUMBER OF ZONES> {}", raw.zone_count);
    let _ = writeln!(out, "<NUMBER OF NODES> {}", raw.node_count);
    let _ = writeln!(out, "<FIRST THRU NODE> {}", raw.first_through_node);
    let _ = writeln!(out, "<NUMBER OF LINKS> {}", raw.links.len());
    let _ = writeln!(out, "<END OF METADATA>");
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "~\tinit_node\tterm_node\tcapacity\tlength\tfree_flow_time\tb\tpower\tspeed\ttoll\tlink_type\t;"
    );
    for link in &raw.links {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t;",
            link.init_node,
            link.term_node,
            link.capacity,
            link.length,
            link.free_flow_time,
            link.b,
            link.power,
            link.speed,
            link.toll,
            link.link_type
        );
    }
    out
}

/// Serializes a demand table back to TNTP trips text.
pub fn write_trips(table: &DemandTable) -> String {
    let mut out = String::new();
    if let Some(zones) = table.zone_count {
        let _ = writeln!(out, "<NUMBER OF ZONES> {zones}");
    }
    let _ = writeln!(out, "<TOTAL OD FLOW> {}", table.total());
    let _ = writeln!(out, "<END OF METADATA>");
    let _ = writeln!(out);
    let mut last_origin = None;
    let mut on_line = 0usize;
    for (&(origin, destination), &flow) in &table.entries {
        if last_origin != Some(origin) {
            if last_origin.is_some() {
                out.push('\n');
            }
            let _ = writeln!(out, "Origin {origin}");
            last_origin = Some(origin);
            on_line = 0;
        }
        let _ = write!(out, "    {destination} : {flow};");
        on_line += 1;
        if on_line.is_multiple_of(5) {
            out.push('\n');
        }
    }
    if !on_line.is_multiple_of(5) {
        out.push('\n');
    }
    out
}
