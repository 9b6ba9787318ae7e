//! Command log for subarray operations. Every event is exactly one
//! ACTIVATE-ACTIVATE-PRECHARGE (AAP).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AapKind {
    Copy,
    AndStage,
    TripleActivate,
    QuintupleActivate,
    WriteRow0,
}

impl AapKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AapKind::Copy => "copy",
            AapKind::AndStage => "and_stage",
            AapKind::TripleActivate => "triple_activate",
            AapKind::QuintupleActivate => "quintuple_activate",
            AapKind::WriteRow0 => "write_row0",
        }
    }
}

impl FromStr for AapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "copy" => AapKind::Copy,
            "and_stage" => AapKind::AndStage,
            "triple_activate" => AapKind::TripleActivate,
            "quintuple_activate" => AapKind::QuintupleActivate,
            "write_row0" => AapKind::WriteRow0,
            other => return Err(Error::Parse(format!("unknown AAP kind `{other}`"))),
        })
    }
}

/// A row as seen by the first ACTIVATE: either its true port or the negated
/// port of a dual-contact cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowRef {
    Plain(usize),
    Negated(usize),
}

impl RowRef {
    pub fn row(self) -> usize {
        match self {
            RowRef::Plain(r) | RowRef::Negated(r) => r,
        }
    }
}

impl fmt::Display for RowRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowRef::Plain(r) => write!(f, "{r}"),
            RowRef::Negated(r) => write!(f, "~{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AapEvent {
    pub kind: AapKind,
    /// Rows raised by the first ACTIVATE (source of a copy, or the charge-sharing set).
    pub activated: Vec<RowRef>,
    /// Rows raised by the second ACTIVATE, which latch the sensed value.
    pub written: Vec<usize>,
}

impl AapEvent {
    pub fn affected_rows(&self) -> Vec<usize> {
        self.activated
            .iter()
            .map(|r| r.row())
            .chain(self.written.iter().copied())
            .collect()
    }
}

impl fmt::Display for AapEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.as_str())?;
        for r in &self.activated {
            write!(f, " {r}")?;
        }
        write!(f, " ->")?;
        for r in &self.written {
            write!(f, " {r}")?;
        }
        Ok(())
    }
}

impl FromStr for AapEvent {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let mut tokens = line.split_whitespace();
        let kind: AapKind = tokens
            .next()
            .ok_or_else(|| Error::Parse("empty trace line".into()))?
            .parse()?;
        let parse_row = |t: &str| -> Result<usize> {
            t.parse()
                .map_err(|_| Error::Parse(format!("bad row id `{t}` in `{line}`")))
        };
        let mut activated = Vec::new();
        let mut written = Vec::new();
        let mut after_arrow = false;
        for t in tokens {
            if t == "->" {
                after_arrow = true;
            } else if after_arrow {
                written.push(parse_row(t)?);
            } else if let Some(rest) = t.strip_prefix('~') {
                activated.push(RowRef::Negated(parse_row(rest)?));
            } else {
                activated.push(RowRef::Plain(parse_row(t)?));
            }
        }
        if !after_arrow {
            return Err(Error::Parse(format!("missing `->` in `{line}`")));
        }
        Ok(AapEvent { kind, activated, written })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpKind {
    And,
    Add,
}

/// Half-open range of event indices belonging to one AND or ADD operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpSpan {
    pub kind: OpKind,
    pub start: usize,
    pub end: usize,
}

impl OpSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TraceSummary {
    pub total_aap: u64,
    pub and_ops: u64,
    pub add_ops: u64,
}

impl fmt::Display for TraceSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "# total_aap={} and_ops={} add_ops={}",
            self.total_aap, self.and_ops, self.add_ops
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AapTrace {
    events: Vec<AapEvent>,
    spans: Vec<OpSpan>,
    and_ops: u64,
    add_ops: u64,
    #[serde(skip)]
    open: Option<(OpKind, usize)>,
}

impl AapTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn push(&mut self, event: AapEvent) {
        self.events.push(event);
    }

    pub(crate) fn begin(&mut self, kind: OpKind) {
        debug_assert!(self.open.is_none(), "nested operation span");
        self.open = Some((kind, self.events.len()));
    }

    pub(crate) fn end(&mut self) {
        let (kind, start) = self.open.take().expect("no open operation span");
        match kind {
            OpKind::And => self.and_ops += 1,
            OpKind::Add => self.add_ops += 1,
        }
        self.spans.push(OpSpan { kind, start, end: self.events.len() });
    }

    pub fn events(&self) -> &[AapEvent] {
        &self.events
    }

    pub fn spans(&self) -> &[OpSpan] {
        &self.spans
    }

    pub fn total_aap(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn and_ops(&self) -> u64 {
        self.and_ops
    }

    pub fn add_ops(&self) -> u64 {
        self.add_ops
    }

    pub fn count_kind(&self, kind: AapKind) -> u64 {
        self.events.iter().filter(|e| e.kind == kind).count() as u64
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            total_aap: self.total_aap(),
            and_ops: self.and_ops,
            add_ops: self.add_ops,
        }
    }

    /// Counters captured now; subtract a later summary to get the delta of an operation.
    pub fn mark(&self) -> TraceSummary {
        self.summary()
    }

    pub fn since(&self, mark: TraceSummary) -> TraceSummary {
        TraceSummary {
            total_aap: self.total_aap() - mark.total_aap,
            and_ops: self.and_ops - mark.and_ops,
            add_ops: self.add_ops - mark.add_ops,
        }
    }

    /// Sub-trace of everything logged after `mark`.
    pub fn slice_from(&self, mark: TraceSummary) -> AapTrace {
        let start = mark.total_aap as usize;
        let spans: Vec<OpSpan> = self
            .spans
            .iter()
            .filter(|s| s.start >= start)
            .map(|s| OpSpan { kind: s.kind, start: s.start - start, end: s.end - start })
            .collect();
        AapTrace {
            events: self.events[start..].to_vec(),
            and_ops: spans.iter().filter(|s| s.kind == OpKind::And).count() as u64,
            add_ops: spans.iter().filter(|s| s.kind == OpKind::Add).count() as u64,
            spans,
            open: None,
        }
    }

    pub fn clear(&mut self) {
        *self = AapTrace::default();
    }

    /// One event per line followed by a `#` summary line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out.push_str(&self.summary().to_string());
        out.push('\n');
        out
    }

    /// Parses the line format written by [`AapTrace::to_text`]. Operation spans are
    /// not part of the text format; the summary counters are restored from the
    /// trailing summary line and checked against the event count.
    pub fn from_text(text: &str) -> Result<(Vec<AapEvent>, TraceSummary)> {
        let mut events = Vec::new();
        let mut summary = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix('#') {
                let mut s = TraceSummary::default();
                for field in rest.split_whitespace() {
                    let (key, value) = field
                        .split_once('=')
                        .ok_or_else(|| Error::Parse(format!("bad summary field `{field}`")))?;
                    let value: u64 = value
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad summary value `{field}`")))?;
                    match key {
                        "total_aap" => s.total_aap = value,
                        "and_ops" => s.and_ops = value,
                        "add_ops" => s.add_ops = value,
                        other => return Err(Error::Parse(format!("unknown summary key `{other}`"))),
                    }
                }
                summary = Some(s);
            } else {
                events.push(line.parse()?);
            }
        }
        let summary = summary.ok_or_else(|| Error::Parse("missing summary line".into()))?;
        if summary.total_aap != events.len() as u64 {
            return Err(Error::Parse(format!(
                "summary says {} AAPs but {} events listed",
                summary.total_aap,
                events.len()
            )));
        }
        Ok((events, summary))
    }
}
