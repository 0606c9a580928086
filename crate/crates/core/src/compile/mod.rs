//! Validation, automaton construction, header rendering, and graph export.

pub mod formats;
pub mod graph;
pub mod header;
pub mod pda;
pub mod validate;

pub use formats::{FormatKind, FormatRegistry, FormatSpec};
pub use graph::to_dot;
pub use header::{render_formats_block, render_header, render_mechanics, HeaderSlots};
pub use pda::{build_pda, terminal_prefix, Pda, PdaNode, Transition, NodeId, ROOT};
pub use validate::{validate, CompiledProgram, CompiledPrompt, ValidateError};
