//! STA: a low-level prompt-programming language and execution engine for
//! auto-regressive language models.
//!
//! A program is a set of *prompts*. Each prompt is a statically-bound
//! questionnaire — a tree of named, counted, formatted states — that compiles
//! to a push-down automaton. Executing a prompt runs its communication
//! channels, then walks the automaton line by line: the language model fills
//! each state under its declared format, and a token-level choice algorithm
//! picks the branch whenever more than one transition is possible. Every run
//! produces a structured document per prompt and a replayable execution trace.
//!
//! Crate layout follows the pipeline:
//! - [`lang`]: lexer/parser, macro expansion, canonical printer.
//! - [`compile`]: validation, automaton construction, header rendering, DOT
//!   export.
//! - [`lm`]: backend contract, choice algorithm, scripted and HTTP backends.
//! - [`runtime`]: channels, questionnaire execution, traces and replay.
//! - [`cli`]: the `sta` command-line front end.

pub mod cli;
pub mod compile;
pub mod lang;
pub mod lm;
pub mod runtime;
