//! Scenario runner, attack × profile matrix, offline trace auditor and
//! human-readable explanations.

mod audit;
mod explain;
mod matrix;
mod scenario;

pub use audit::{audit_text, audit_trace, AuditFinding, RuleId, Severity};
pub use explain::{explain, topics, UnknownTopic};
pub use matrix::{cell_seed, conformance_matrix, MatrixError, MatrixReport, COMBINED_SA};
pub use scenario::{paging_scenario, registration_scenario};
