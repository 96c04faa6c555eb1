//! Checkout sessions over item images: identification, billing in integer
//! minor units, operator overrides, receipts, a JSON-lines event log for
//! restart recovery, and the HTTP API used by the operator console.

pub mod http;
pub mod journal;
pub mod model;
pub mod money;
pub mod receipt;
pub mod service;
pub mod session;

pub use model::{Classifier, ClassifyError, NetworkClassifier};
pub use money::{format_minor, parse_minor};
pub use receipt::{parse_receipt, render_receipt, ParsedReceipt};
pub use service::{identify, CheckoutError, CheckoutService, IdentifyResult, ServiceOptions, DEFAULT_TAU};
pub use session::{CartLine, Event, LineSource, Receipt, ReceiptLine, Session, SessionState};
