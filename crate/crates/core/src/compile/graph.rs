//! DOT export: the inter-prompt control-flow graph plus one automaton
//! subgraph per prompt. Hierarchy edges are dotted; transition edges are
//! solid with pushes in green and pops in red.

use std::fmt::Write;

use super::pda::{Pda, Transition, ROOT};
use super::validate::CompiledProgram;

/// Statically enumerated transition edges of one automaton, deduplicated
/// across instance indices.
pub fn pda_edges(pda: &Pda) -> Vec<(usize, usize, EdgeKind)> {
    let mut out = Vec::new();
    let push = |edge: (usize, usize, EdgeKind), out: &mut Vec<_>| {
        if !out.contains(&edge) {
            out.push(edge);
        }
    };
    // Entering the questionnaire and entering any record pushes.
    if let Some(first) = pda.node(ROOT).first_child {
        push((ROOT, first, EdgeKind::Push), &mut out);
    }
    for id in pda.document_order() {
        if let Some(child) = pda.node(id).first_child {
            push((id, child, EdgeKind::Push), &mut out);
        }
        // Union of candidates over every reachable instance index: the index
        // only toggles the self-repeat, so two probes cover all cases.
        for index in [1, pda.node(id).max_count] {
            let stack = stack_to(pda, id, index);
            for t in pda.candidates_after(&stack) {
                match t {
                    Transition::Enter { node, .. } => {
                        let kind = if node == id {
                            EdgeKind::Repeat
                        } else if pda.node(node).depth < pda.node(id).depth
                            || (pda.node(node).depth == pda.node(id).depth
                                && pda.node(id).successor != Some(node))
                        {
                            EdgeKind::Pop
                        } else {
                            EdgeKind::Advance
                        };
                        push((id, node, kind), &mut out);
                    }
                    Transition::Terminal => push((id, usize::MAX, EdgeKind::Pop), &mut out),
                }
            }
        }
    }
    out
}

/// Stack of ancestors (all at index 1) down to `(id, index)`.
fn stack_to(pda: &Pda, id: usize, index: u32) -> Vec<(usize, u32)> {
    let mut chain = vec![(id, index)];
    let mut cur = pda.node(id).parent;
    while let Some(p) = cur {
        if p == ROOT {
            break;
        }
        chain.push((p, 1));
        cur = pda.node(p).parent;
    }
    chain.reverse();
    chain
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Push,
    Pop,
    Advance,
    Repeat,
}

impl EdgeKind {
    fn color(self) -> &'static str {
        match self {
            EdgeKind::Push => "green",
            EdgeKind::Pop => "red",
            EdgeKind::Advance | EdgeKind::Repeat => "black",
        }
    }
}

/// Render the whole program as a DOT digraph.
pub fn to_dot(program: &CompiledProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph sta {{");
    let _ = writeln!(out, "  rankdir=TB;");
    let _ = writeln!(out, "  subgraph cluster_cfg {{");
    let _ = writeln!(out, "    label=\"control flow\";");
    for prompt in program.prompts() {
        let shape = if prompt.decl.leaf.is_next() {
            "box"
        } else {
            "doublecircle"
        };
        let _ = writeln!(out, "    \"cfg_{0}\" [label=\"{0}\" shape={1}];", prompt.decl.name, shape);
    }
    for prompt in program.prompts() {
        for branch in &prompt.successors {
            let label = match branch.trip_limit {
                Some(limit) => format!(" [label=\"<={limit}\"]"),
                None => String::new(),
            };
            let _ = writeln!(
                out,
                "    \"cfg_{}\" -> \"cfg_{}\"{label};",
                prompt.decl.name, branch.prompt
            );
        }
    }
    let _ = writeln!(out, "  }}");

    for prompt in program.prompts() {
        let name = &prompt.decl.name;
        let pda = &prompt.pda;
        let _ = writeln!(out, "  subgraph cluster_pda_{name} {{");
        let _ = writeln!(out, "    label=\"{name}\";");
        // Numeric ids keep nodes distinct when subtrees reuse state names.
        let node_id = |id: usize| -> String {
            if id == usize::MAX {
                format!("\"{name}.exit\"")
            } else if id == ROOT {
                format!("\"{name}.start\"")
            } else {
                format!("\"{name}.s{id}.{}\"", pda.node(id).name)
            }
        };
        let _ = writeln!(out, "    {} [label=\"start\" shape=circle];", node_id(ROOT));
        for id in pda.document_order() {
            let node = pda.node(id);
            let count = if node.max_count > 1 {
                format!("[{}]", node.max_count)
            } else {
                String::new()
            };
            let _ = writeln!(
                out,
                "    {} [label=\"{}{count}({})\"];",
                node_id(id),
                node.name,
                node.format
            );
        }
        let _ = writeln!(out, "    {} [label=\"exit\" shape=doublecircle];", node_id(usize::MAX));
        // Dotted hierarchy edges mirror the questionnaire tree.
        for id in pda.document_order() {
            let parent = pda.node(id).parent.unwrap();
            let _ = writeln!(out, "    {} -> {} [style=dotted arrowhead=none];", node_id(parent), node_id(id));
        }
        for (from, to, kind) in pda_edges(pda) {
            let _ = writeln!(
                out,
                "    {} -> {} [color={}];",
                node_id(from),
                node_id(to),
                kind.color()
            );
        }
        let _ = writeln!(out, "  }}");
    }
    let _ = writeln!(out, "}}");
    out
}
