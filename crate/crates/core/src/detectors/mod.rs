//! Feedback-loop detection: contraction estimation on a simulated
//! transition, a frozen-baseline trend monitor, a Page-Hinkley drift
//! detector, and the checklist that combines their evidence.

pub mod baseline;
pub mod checklist;
pub mod contraction;
pub mod page_hinkley;

pub use baseline::{BaselineConfig, BaselineMonitor};
pub use checklist::{build_checklist, Answer, ChecklistReport, RuntimeFlags, UsageAnswer, Verdict};
pub use contraction::{
    estimate_contraction, ContractionConfig, ContractionOutcome, ContractionReport, HeldOutR2,
    LoopTransition, Performance, Transition,
};
pub use page_hinkley::PageHinkley;
