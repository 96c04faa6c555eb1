//! Session state, cart lines, receipts and the events that change them.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineSource {
    Model,
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartLine {
    /// 1-based position in the cart.
    pub line_no: u32,
    pub item_id: usize,
    pub name: String,
    pub unit_price: u64,
    /// Model probability; present only for model lines.
    pub confidence: Option<f64>,
    pub source: LineSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiptLine {
    pub name: String,
    pub unit_price: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub number: u64,
    pub session_id: String,
    pub lines: Vec<ReceiptLine>,
    pub total: u64,
    pub currency: String,
    pub issued_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub state: SessionState,
    pub lines: Vec<CartLine>,
    pub opened_at: DateTime<Utc>,
    pub closed_at: Option<DateTime<Utc>>,
    pub receipt: Option<Receipt>,
}

impl Session {
    pub fn new(id: String, opened_at: DateTime<Utc>) -> Self {
        Self {
            id,
            state: SessionState::Open,
            lines: Vec::new(),
            opened_at,
            closed_at: None,
            receipt: None,
        }
    }

    pub fn total(&self) -> u64 {
        self.lines.iter().map(|l| l.unit_price).sum()
    }

    pub fn is_open(&self) -> bool {
        self.state == SessionState::Open
    }

    fn next_line_no(&self) -> u32 {
        self.lines.len() as u32 + 1
    }

    /// Applies an event that was produced for this session.
    pub fn apply(&mut self, event: &Event) -> Result<(), String> {
        if !self.is_open() {
            return Err(format!("session {} is closed", self.id));
        }
        match event {
            Event::Opened { .. } => return Err(format!("session {} already open", self.id)),
            Event::LineAdded { line, .. } => {
                if line.line_no != self.next_line_no() {
                    return Err(format!("line {} out of sequence", line.line_no));
                }
                self.lines.push(line.clone());
            }
            Event::LineReplaced { line, .. } => {
                let slot = self
                    .lines
                    .get_mut((line.line_no as usize).wrapping_sub(1))
                    .ok_or_else(|| format!("no line {}", line.line_no))?;
                *slot = line.clone();
            }
            Event::Closed { at, receipt, .. } => {
                if receipt.total != self.total() {
                    return Err(format!(
                        "receipt total {} differs from cart total {}",
                        receipt.total,
                        self.total()
                    ));
                }
                self.state = SessionState::Closed;
                self.closed_at = Some(*at);
                self.receipt = Some(receipt.clone());
            }
        }
        Ok(())
    }
}

/// One entry of the append-only log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Opened {
        session_id: String,
        at: DateTime<Utc>,
    },
    LineAdded {
        session_id: String,
        line: CartLine,
    },
    LineReplaced {
        session_id: String,
        line: CartLine,
    },
    Closed {
        session_id: String,
        at: DateTime<Utc>,
        receipt: Receipt,
    },
}

impl Event {
    pub fn session_id(&self) -> &str {
        match self {
            Event::Opened { session_id, .. }
            | Event::LineAdded { session_id, .. }
            | Event::LineReplaced { session_id, .. }
            | Event::Closed { session_id, .. } => session_id,
        }
    }
}
