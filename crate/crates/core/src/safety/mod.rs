//! Privacy handling (resident IDs, mobile numbers) and toxicity flagging.

mod pii;
mod toxicity;

pub use pii::{detect_pii, national_id_check_char, redact, PiiKind, PiiSpan, RedactError, RedactPolicy, Redaction};
pub use toxicity::{score_toxicity, LexiconScorer, ToxicityAnnotation, ToxicityError, DEFAULT_SATURATION_PER_1000};
