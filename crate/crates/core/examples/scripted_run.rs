//! Run a small program against a scripted backend through the library API:
//! compile, execute, inspect the trace, and replay it.
//!
//! ```sh
//! cargo run -p sta-core --example scripted_run
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;

use sta_core::compile::validate;
use sta_core::lang::{expand_macros, parse_program, MacroBindings, MacroValue};
use sta_core::lm::ScriptedLm;
use sta_core::runtime::{replay_trace, run_program, BackendSet, RunOptions, Value};

const SOURCE: &str = "\
entry(brainstorm): Collect a few short ideas about a topic

prompt(brainstorm): list ideas, then keep the best one
- target(topic)
> topic(text): the topic to think about
> idea[{K}](thought): one idea per line
> best(text): restate the strongest idea
__exit(best):
";

fn main() {
    let mut macros = MacroBindings::new();
    macros.insert("K".to_string(), MacroValue::Int(3));
    let expanded = expand_macros(SOURCE, &macros).expect("macros bound");
    let program = validate(&parse_program(&expanded).expect("parses")).expect("validates");

    // Scripted stand-in for a model: two mid-list choices (add another idea
    // or move on) and four completions.
    let lm = Arc::new(ScriptedLm::with_transcript(vec![
        ("> idea[1](thought):", " teach by analogy"),
        ("", "> idea[2](thought):"),
        ("> idea[2](thought):", " show a worked example"),
        ("", "> best(text):"),
        ("> best(text):", " show a worked example"),
    ]));
    let options = RunOptions {
        backends: BackendSet::uniform(lm, &["text", "thought", "next"]),
        macros,
        ..RunOptions::default()
    };

    let inputs: BTreeMap<String, Value> = [(
        "topic".to_string(),
        Value::Text("explaining recursion".to_string()),
    )]
    .into();
    let result = run_program(&program, inputs, &options).expect("run succeeds");

    println!("outputs: {}", serde_json::to_string_pretty(&result.outputs).unwrap());
    println!("events:  {}", result.trace.events.len());

    let replay = replay_trace(&program, &result.trace).expect("replay matches");
    assert_eq!(replay.outputs, result.outputs);
    println!("replay:  identical outputs reconstructed from the trace");
}
