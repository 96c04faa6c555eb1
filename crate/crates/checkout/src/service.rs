//! Session registry and the checkout operations.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use arc_core::dataset::Catalog;
use arc_core::Raster;
use chrono::Utc;
use thiserror::Error;

use crate::journal::EventLog;
use crate::model::{Classifier, ClassifyError};
use crate::session::{CartLine, Event, LineSource, Receipt, ReceiptLine, Session};

pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CheckoutError {
    #[error("session {0} not found")]
    SessionNotFound(String),
    #[error("session {0} is closed")]
    SessionClosed(String),
    #[error("image could not be decoded: {0}")]
    BadImage(String),
    #[error("no object detected: {0}")]
    NoObject(String),
    #[error("item {0} is not in the catalog")]
    UnknownItem(usize),
    #[error("line {0} does not exist")]
    UnknownLine(u32),
    #[error("cart is empty")]
    EmptyCart,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model failure: {0}")]
    Model(String),
    #[error("persistence failure: {0}")]
    Persistence(String),
}

impl CheckoutError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            CheckoutError::SessionNotFound(_) => "SessionNotFound",
            CheckoutError::SessionClosed(_) => "SessionClosed",
            CheckoutError::BadImage(_) => "BadImage",
            CheckoutError::NoObject(_) => "NoObject",
            CheckoutError::UnknownItem(_) => "UnknownItem",
            CheckoutError::UnknownLine(_) => "UnknownLine",
            CheckoutError::EmptyCart => "EmptyCart",
            CheckoutError::Config(_) => "ConfigError",
            CheckoutError::Model(_) => "ModelError",
            CheckoutError::Persistence(_) => "PersistenceError",
        }
    }
}

fn persistence(e: impl std::fmt::Display) -> CheckoutError {
    CheckoutError::Persistence(e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyResult {
    pub top1: usize,
    pub confidence: f64,
    /// Up to five `(item_id, probability)` pairs, most probable first.
    pub top5: Vec<(usize, f64)>,
    pub accepted: bool,
}

/// Ranks class probabilities; ties go to the lower item id.
pub fn identify(probs: &[f64], tau: f64) -> IdentifyResult {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let top5: Vec<(usize, f64)> = order.iter().take(5).map(|&i| (i, probs[i])).collect();
    let (top1, confidence) = top5[0];
    IdentifyResult {
        top1,
        confidence,
        top5,
        accepted: confidence >= tau,
    }
}

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    /// Minimum top-1 probability for an automatic cart line.
    pub tau: f64,
    /// Event log to replay on start and append to.
    pub log_path: Option<PathBuf>,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            log_path: None,
        }
    }
}

pub struct CheckoutService {
    catalog: Catalog,
    classifier: Arc<dyn Classifier>,
    tau: f64,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    log: Option<Mutex<EventLog>>,
    next_receipt: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // state is only ever replaced whole, so a poisoned value is still consistent
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl CheckoutService {
    pub fn new(catalog: Catalog, classifier: Arc<dyn Classifier>, opts: ServiceOptions) -> Result<Self, CheckoutError> {
        catalog.validate().map_err(|e| CheckoutError::Config(e.to_string()))?;
        if classifier.classes() != catalog.len() {
            return Err(CheckoutError::Config(format!(
                "model has {} classes but the catalog lists {} items",
                classifier.classes(),
                catalog.len()
            )));
        }
        if !(opts.tau >= 0.0 && opts.tau <= 1.0) {
            return Err(CheckoutError::Config(format!("threshold {} outside [0, 1]", opts.tau)));
        }
        let mut sessions = HashMap::new();
        let mut next_receipt = 1;
        let log = match &opts.log_path {
            Some(path) => {
                let (log, events) = EventLog::open(path).map_err(persistence)?;
                next_receipt = replay(&mut sessions, &events)?;
                log::info!("replayed {} events from {}", events.len(), path.display());
                Some(Mutex::new(log))
            }
            None => None,
        };
        Ok(Self {
            catalog,
            classifier,
            tau: opts.tau,
            sessions: RwLock::new(
                sessions
                    .into_iter()
                    .map(|(k, v)| (k, Arc::new(Mutex::new(v))))
                    .collect(),
            ),
            log,
            next_receipt: AtomicU64::new(next_receipt),
        })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn handle(&self, id: &str) -> Result<Arc<Mutex<Session>>, CheckoutError> {
        let map = self.sessions.read().unwrap_or_else(|p| p.into_inner());
        map.get(id)
            .cloned()
            .ok_or_else(|| CheckoutError::SessionNotFound(id.to_string()))
    }

    // validate on a copy, persist, then publish
    fn commit(&self, session: &mut Session, event: Event) -> Result<(), CheckoutError> {
        let mut next = session.clone();
        next.apply(&event).map_err(CheckoutError::Config)?;
        if let Some(log) = &self.log {
            lock(log).append(&event).map_err(persistence)?;
        }
        *session = next;
        Ok(())
    }

    pub fn begin_session(&self) -> Result<Session, CheckoutError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let at = Utc::now();
        if let Some(log) = &self.log {
            let event = Event::Opened {
                session_id: id.clone(),
                at,
            };
            lock(log).append(&event).map_err(persistence)?;
        }
        let session = Session::new(id.clone(), at);
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, Arc::new(Mutex::new(session.clone())));
        Ok(session)
    }

    pub fn session(&self, id: &str) -> Result<Session, CheckoutError> {
        let h = self.handle(id)?;
        let s = lock(&h).clone();
        Ok(s)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    fn open_session(&self, id: &str) -> Result<Arc<Mutex<Session>>, CheckoutError> {
        let h = self.handle(id)?;
        if !lock(&h).is_open() {
            return Err(CheckoutError::SessionClosed(id.to_string()));
        }
        Ok(h)
    }

    fn item_line(&self, line_no: u32, item_id: usize, confidence: Option<f64>) -> Result<CartLine, CheckoutError> {
        let item = self.catalog.get(item_id).ok_or(CheckoutError::UnknownItem(item_id))?;
        Ok(CartLine {
            line_no,
            item_id,
            name: item.name.clone(),
            unit_price: item.unit_price,
            source: if confidence.is_some() {
                LineSource::Model
            } else {
                LineSource::Override
            },
            confidence,
        })
    }

    /// Identifies the item in an encoded image and bills it when the model
    /// is confident enough.
    pub fn submit_item(&self, id: &str, image: &[u8]) -> Result<(IdentifyResult, Session), CheckoutError> {
        self.open_session(id)?;
        let frame = Raster::decode(image).map_err(|e| CheckoutError::BadImage(e.to_string()))?;
        self.submit_frame(id, &frame)
    }

    pub fn submit_frame(&self, id: &str, frame: &Raster) -> Result<(IdentifyResult, Session), CheckoutError> {
        let h = self.open_session(id)?;
        let mut session = lock(&h);
        if !session.is_open() {
            return Err(CheckoutError::SessionClosed(id.to_string()));
        }
        let probs = self.classifier.classify(frame).map_err(|e| match e {
            ClassifyError::NoObject(m) => CheckoutError::NoObject(m),
            ClassifyError::BadFrame(m) => CheckoutError::BadImage(m),
            ClassifyError::Failed(m) => CheckoutError::Model(m),
        })?;
        if probs.len() != self.catalog.len() || probs.iter().any(|p| !p.is_finite()) {
            return Err(CheckoutError::Model(format!(
                "malformed output of length {}",
                probs.len()
            )));
        }
        let result = identify(&probs, self.tau);
        if result.accepted {
            let line = self.item_line(session.lines.len() as u32 + 1, result.top1, Some(result.confidence))?;
            self.commit(
                &mut session,
                Event::LineAdded {
                    session_id: id.to_string(),
                    line,
                },
            )?;
        }
        Ok((result, session.clone()))
    }

    /// Replaces line `line_no` with `item_id`, or appends a new line when
    /// no line is given.
    pub fn override_line(&self, id: &str, line_no: Option<u32>, item_id: usize) -> Result<Session, CheckoutError> {
        let h = self.open_session(id)?;
        let mut session = lock(&h);
        if !session.is_open() {
            return Err(CheckoutError::SessionClosed(id.to_string()));
        }
        let event = match line_no {
            Some(n) => {
                if n == 0 || n as usize > session.lines.len() {
                    return Err(CheckoutError::UnknownLine(n));
                }
                Event::LineReplaced {
                    session_id: id.to_string(),
                    line: self.item_line(n, item_id, None)?,
                }
            }
            None => Event::LineAdded {
                session_id: id.to_string(),
                line: self.item_line(session.lines.len() as u32 + 1, item_id, None)?,
            },
        };
        self.commit(&mut session, event)?;
        Ok(session.clone())
    }

    /// Closes the session and issues its receipt.
    pub fn checkout(&self, id: &str) -> Result<Receipt, CheckoutError> {
        let h = self.open_session(id)?;
        let mut session = lock(&h);
        if !session.is_open() {
            return Err(CheckoutError::SessionClosed(id.to_string()));
        }
        if session.lines.is_empty() {
            return Err(CheckoutError::EmptyCart);
        }
        let at = Utc::now();
        let receipt = Receipt {
            number: self.next_receipt.fetch_add(1, Ordering::SeqCst),
            session_id: id.to_string(),
            lines: session
                .lines
                .iter()
                .map(|l| ReceiptLine {
                    name: l.name.clone(),
                    unit_price: l.unit_price,
                })
                .collect(),
            total: session.total(),
            currency: self.catalog.currency.clone(),
            issued_at: at,
        };
        self.commit(
            &mut session,
            Event::Closed {
                session_id: id.to_string(),
                at,
                receipt: receipt.clone(),
            },
        )?;
        Ok(receipt)
    }
}

/// Rebuilds sessions from logged events; returns the next receipt number.
fn replay(sessions: &mut HashMap<String, Session>, events: &[Event]) -> Result<u64, CheckoutError> {
    let mut next_receipt = 1;
    for (i, e) in events.iter().enumerate() {
        let bad = |m: String| CheckoutError::Persistence(format!("event {}: {m}", i + 1));
        match e {
            Event::Opened { session_id, at } => {
                if sessions.contains_key(session_id) {
                    return Err(bad(format!("session {session_id} opened twice")));
                }
                sessions.insert(session_id.clone(), Session::new(session_id.clone(), *at));
            }
            e => {
                let s = sessions
                    .get_mut(e.session_id())
                    .ok_or_else(|| bad(format!("unknown session {}", e.session_id())))?;
                s.apply(e).map_err(bad)?;
                if let Event::Closed { receipt, .. } = e {
                    next_receipt = next_receipt.max(receipt.number + 1);
                }
            }
        }
    }
    Ok(next_receipt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_and_threshold() {
        let r = identify(&[0.1, 0.6, 0.1, 0.2], 0.5);
        assert_eq!(r.top1, 1);
        assert!(r.accepted);
        assert_eq!(r.top5.iter().map(|t| t.0).collect::<Vec<_>>(), vec![1, 3, 0, 2]);
        let uniform = vec![0.01; 100];
        let r = identify(&uniform, 0.5);
        assert!(!r.accepted);
        assert_eq!(r.top5.len(), 5);
        assert_eq!(r.top1, 0);
        assert!(identify(&[0.5, 0.5], 0.5).accepted);
    }
}
