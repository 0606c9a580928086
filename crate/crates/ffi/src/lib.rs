//! C ABI over the STA compiler and runtime.
//!
//! Conventions:
//! - `StaProgram` is an opaque handle created by [`sta_program_compile`] and
//!   released with [`sta_program_free`].
//! - Every function returns a [`StaStatus`]; on failure
//!   [`sta_last_error_message`] yields a human-readable description for the
//!   calling thread.
//! - Strings returned through out-parameters are NUL-terminated, UTF-8, and
//!   owned by the caller, who must release them with [`sta_string_free`].
//! - Structured data crosses the boundary as JSON text: macro bindings as an
//!   object of ints/strings, inputs as an object of strings or string arrays,
//!   outputs and traces in the engine's documented formats.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use sta_core::compile::{to_dot, validate, CompiledProgram};
use sta_core::lang::{expand_macros, parse_program, MacroBindings, MacroValue};
use sta_core::runtime::{
    replay_trace, run_program, BackendSet, RunOptions, TraceRecord, Value,
};

/// Result codes of every FFI entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StaStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8 or not valid JSON.
    InvalidArgument = 2,
    /// Macro expansion, parsing, or validation rejected the program.
    Diagnostics = 3,
    /// The requested prompt or object does not exist.
    NotFound = 4,
    /// Execution or replay failed.
    RuntimeError = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl std::fmt::Display) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(CString::new(text).expect("NULs stripped"));
    });
}

fn clear_error() {
    LAST_ERROR.with(|slot| slot.borrow_mut().take());
}

/// Last error message raised on this thread, or NULL when the previous call
/// succeeded. The caller owns the string (release with `sta_string_free`).
#[no_mangle]
pub extern "C" fn sta_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(message) => message.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by one of this library's
/// functions, not yet freed; NULL is accepted and ignored.
#[no_mangle]
pub unsafe extern "C" fn sta_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// A compiled program: parsed, validated, headers rendered.
pub struct StaProgram {
    program: CompiledProgram,
    macros: MacroBindings,
}

unsafe fn utf8_arg<'a>(ptr: *const c_char) -> Result<&'a str, StaStatus> {
    if ptr.is_null() {
        set_error("NULL string argument");
        return Err(StaStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| {
        set_error(format!("argument is not UTF-8: {e}"));
        StaStatus::InvalidArgument
    })
}

fn out_string(out: *mut *mut c_char, text: String) -> StaStatus {
    let text = text.replace('\0', " ");
    unsafe {
        *out = CString::new(text).expect("NULs stripped").into_raw();
    }
    StaStatus::Ok
}

fn parse_macros_json(text: &str) -> Result<MacroBindings, String> {
    if text.trim().is_empty() {
        return Ok(MacroBindings::new());
    }
    let raw: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(text).map_err(|e| format!("macro bindings: {e}"))?;
    let mut bindings = MacroBindings::new();
    for (name, value) in raw {
        let value = match value {
            serde_json::Value::Number(n) => MacroValue::Int(
                n.as_i64()
                    .ok_or_else(|| format!("macro {name}: not an integer"))?,
            ),
            serde_json::Value::String(s) => MacroValue::Str(s),
            other => return Err(format!("macro {name}: unsupported value {other}")),
        };
        bindings.insert(name, value);
    }
    Ok(bindings)
}

/// Compile STA source text. `macros_json` is a JSON object binding macro
/// names to integers or strings (NULL or empty for none). On success the
/// handle is stored in `out_program`.
///
/// # Safety
/// `source` must be a NUL-terminated string; `macros_json` NULL or a
/// NUL-terminated string; `out_program` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sta_program_compile(
    source: *const c_char,
    macros_json: *const c_char,
    out_program: *mut *mut StaProgram,
) -> StaStatus {
    clear_error();
    if out_program.is_null() {
        set_error("NULL out_program");
        return StaStatus::NullArgument;
    }
    let source = match utf8_arg(source) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let macros_text = if macros_json.is_null() {
        ""
    } else {
        match utf8_arg(macros_json) {
            Ok(s) => s,
            Err(status) => return status,
        }
    };
    let macros = match parse_macros_json(macros_text) {
        Ok(m) => m,
        Err(e) => {
            set_error(e);
            return StaStatus::InvalidArgument;
        }
    };
    let expanded = match expand_macros(source, &macros) {
        Ok(t) => t,
        Err(e) => {
            set_error(e);
            return StaStatus::Diagnostics;
        }
    };
    let ast = match parse_program(&expanded) {
        Ok(ast) => ast,
        Err(e) => {
            set_error(e);
            return StaStatus::Diagnostics;
        }
    };
    match validate(&ast) {
        Ok(program) => {
            *out_program = Box::into_raw(Box::new(StaProgram { program, macros }));
            StaStatus::Ok
        }
        Err(e) => {
            set_error(e);
            StaStatus::Diagnostics
        }
    }
}

/// Release a program handle. NULL is accepted and ignored.
///
/// # Safety
/// `program` must come from `sta_program_compile` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sta_program_free(program: *mut StaProgram) {
    if !program.is_null() {
        drop(Box::from_raw(program));
    }
}

/// Number of prompts in the program.
///
/// # Safety
/// `program` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sta_program_prompt_count(program: *const StaProgram) -> usize {
    if program.is_null() {
        return 0;
    }
    (*program).program.prompts().len()
}

/// Name of the prompt at `index` (declaration order).
///
/// # Safety
/// `program` must be a live handle and `out_name` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sta_program_prompt_name(
    program: *const StaProgram,
    index: usize,
    out_name: *mut *mut c_char,
) -> StaStatus {
    clear_error();
    if program.is_null() || out_name.is_null() {
        set_error("NULL argument");
        return StaStatus::NullArgument;
    }
    match (*program).program.prompts().get(index) {
        Some(prompt) => out_string(out_name, prompt.decl.name.clone()),
        None => {
            set_error(format!("no prompt at index {index}"));
            StaStatus::NotFound
        }
    }
}

/// Rendered header of one prompt, byte for byte.
///
/// # Safety
/// `program` must be a live handle; `prompt` a NUL-terminated string;
/// `out_header` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sta_program_render_header(
    program: *const StaProgram,
    prompt: *const c_char,
    out_header: *mut *mut c_char,
) -> StaStatus {
    clear_error();
    if program.is_null() || out_header.is_null() {
        set_error("NULL argument");
        return StaStatus::NullArgument;
    }
    let name = match utf8_arg(prompt) {
        Ok(s) => s,
        Err(status) => return status,
    };
    match (*program).program.prompt(name) {
        Some(compiled) => out_string(out_header, compiled.header_text.clone()),
        None => {
            set_error(format!("unknown prompt `{name}`"));
            StaStatus::NotFound
        }
    }
}

/// DOT rendering of the control-flow graph and per-prompt automata.
///
/// # Safety
/// `program` must be a live handle and `out_dot` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sta_program_graph_dot(
    program: *const StaProgram,
    out_dot: *mut *mut c_char,
) -> StaStatus {
    clear_error();
    if program.is_null() || out_dot.is_null() {
        set_error("NULL argument");
        return StaStatus::NullArgument;
    }
    out_string(out_dot, to_dot(&(*program).program))
}

fn parse_inputs_json(text: &str) -> Result<BTreeMap<String, Value>, String> {
    if text.trim().is_empty() {
        return Ok(BTreeMap::new());
    }
    serde_json::from_str(text).map_err(|e| format!("inputs: {e}"))
}

/// Run the program. `inputs_json` is a JSON object of strings or string
/// arrays; `backends_path` names a backend configuration file. On success
/// `out_outputs_json` holds the outputs array and, when `out_trace_json` is
/// not NULL, the full execution trace is returned there too.
///
/// # Safety
/// `program` must be a live handle; string arguments NUL-terminated;
/// `out_outputs_json` valid; `out_trace_json` NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn sta_program_run(
    program: *const StaProgram,
    inputs_json: *const c_char,
    backends_path: *const c_char,
    out_outputs_json: *mut *mut c_char,
    out_trace_json: *mut *mut c_char,
) -> StaStatus {
    clear_error();
    if program.is_null() || out_outputs_json.is_null() {
        set_error("NULL argument");
        return StaStatus::NullArgument;
    }
    let handle = &*program;
    let inputs_text = if inputs_json.is_null() {
        ""
    } else {
        match utf8_arg(inputs_json) {
            Ok(s) => s,
            Err(status) => return status,
        }
    };
    let inputs = match parse_inputs_json(inputs_text) {
        Ok(i) => i,
        Err(e) => {
            set_error(e);
            return StaStatus::InvalidArgument;
        }
    };
    let mut options = RunOptions {
        macros: handle.macros.clone(),
        ..RunOptions::default()
    };
    if !backends_path.is_null() {
        let path = match utf8_arg(backends_path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        options.backends = match BackendSet::from_config_file(Path::new(path)) {
            Ok(set) => set,
            Err(e) => {
                set_error(e);
                return StaStatus::RuntimeError;
            }
        };
    }
    match run_program(&handle.program, inputs, &options) {
        Ok(result) => {
            let outputs =
                serde_json::to_string_pretty(&result.outputs).expect("outputs serialize");
            if !out_trace_json.is_null() {
                let status = out_string(out_trace_json, result.trace.to_json());
                if status != StaStatus::Ok {
                    return status;
                }
            }
            out_string(out_outputs_json, outputs)
        }
        Err(failure) => {
            if !out_trace_json.is_null() {
                let _ = out_string(out_trace_json, failure.partial_trace.to_json());
            }
            set_error(&failure.error);
            StaStatus::RuntimeError
        }
    }
}

/// Replay a recorded trace against this program and return the reconstructed
/// outputs. Fails with `RuntimeError` on any divergence from the recording.
///
/// # Safety
/// `program` must be a live handle; `trace_json` NUL-terminated;
/// `out_outputs_json` valid.
#[no_mangle]
pub unsafe extern "C" fn sta_program_replay(
    program: *const StaProgram,
    trace_json: *const c_char,
    out_outputs_json: *mut *mut c_char,
) -> StaStatus {
    clear_error();
    if program.is_null() || out_outputs_json.is_null() {
        set_error("NULL argument");
        return StaStatus::NullArgument;
    }
    let text = match utf8_arg(trace_json) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let trace = match TraceRecord::from_json(text) {
        Ok(t) => t,
        Err(e) => {
            set_error(e);
            return StaStatus::InvalidArgument;
        }
    };
    match replay_trace(&(*program).program, &trace) {
        Ok(outcome) => out_string(
            out_outputs_json,
            serde_json::to_string_pretty(&outcome.outputs).expect("outputs serialize"),
        ),
        Err(e) => {
            set_error(e);
            StaStatus::RuntimeError
        }
    }
}
