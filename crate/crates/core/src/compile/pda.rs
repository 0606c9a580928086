//! Push-down automaton over a prompt's questionnaire.
//!
//! The node tree mirrors the questionnaire exactly; the root stands for the
//! `start(record):` line and is the initial state. Entering a state with
//! children pushes, finishing the last child can pop, and every state may
//! repeat up to its declared count. Counts are upper bounds with an implied
//! minimum of one: a state can never be skipped entirely, so an advance
//! always stops at the first successor found while popping.

use crate::lang::{LeafDecl, PromptDecl, StateDecl};

pub type NodeId = usize;

#[derive(Debug, Clone)]
pub struct PdaNode {
    pub name: String,
    pub max_count: u32,
    /// Resolved format name (`record`/`text` defaults applied).
    pub format: String,
    pub annotation: String,
    pub depth: usize,
    pub parent: Option<NodeId>,
    pub successor: Option<NodeId>,
    pub first_child: Option<NodeId>,
}

impl PdaNode {
    pub fn is_record(&self) -> bool {
        self.first_child.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct Pda {
    nodes: Vec<PdaNode>,
}

pub const ROOT: NodeId = 0;

/// One admissible move after completing a state instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    /// Start instance `index` of `node` (repeat, advance, descend, or a pop
    /// that re-enters or advances past an ancestor).
    Enter { node: NodeId, index: u32 },
    /// Leave the questionnaire through the prompt's leaf line.
    Terminal,
}

/// Build the automaton for a prompt. Structure is guaranteed by the parser,
/// so this cannot fail; format names are resolved by validation separately.
pub fn build_pda(prompt: &PromptDecl) -> Pda {
    let mut nodes = vec![PdaNode {
        name: "start".to_string(),
        max_count: 1,
        format: "record".to_string(),
        annotation: String::new(),
        depth: 0,
        parent: None,
        successor: None,
        first_child: None,
    }];
    let first = add_states(&mut nodes, &prompt.states, ROOT, 1);
    nodes[ROOT].first_child = first;
    Pda { nodes }
}

fn add_states(
    nodes: &mut Vec<PdaNode>,
    states: &[StateDecl],
    parent: NodeId,
    depth: usize,
) -> Option<NodeId> {
    let mut first = None;
    let mut previous: Option<NodeId> = None;
    for state in states {
        let id = nodes.len();
        nodes.push(PdaNode {
            name: state.name.clone(),
            max_count: state.max_count,
            format: state.effective_format().to_string(),
            annotation: state.annotation.clone(),
            depth,
            parent: Some(parent),
            successor: None,
            first_child: None,
        });
        let child = add_states(nodes, &state.children, id, depth + 1);
        nodes[id].first_child = child;
        if let Some(prev) = previous {
            nodes[prev].successor = Some(id);
        }
        first.get_or_insert(id);
        previous = Some(id);
    }
    first
}

impl Pda {
    pub fn node(&self, id: NodeId) -> &PdaNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 1
    }

    /// Node ids in document order (pre-order), root excluded.
    pub fn document_order(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len().saturating_sub(1));
        let mut next = self.nodes[ROOT].first_child;
        let mut stack = Vec::new();
        while let Some(id) = next {
            out.push(id);
            if let Some(child) = self.nodes[id].first_child {
                stack.push(id);
                next = Some(child);
                continue;
            }
            next = self.nodes[id].successor;
            while next.is_none() {
                match stack.pop() {
                    Some(up) => next = self.nodes[up].successor,
                    None => break,
                }
            }
        }
        out
    }

    /// Top-level state ids in declaration order.
    pub fn top_level(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut next = self.nodes[ROOT].first_child;
        while let Some(id) = next {
            out.push(id);
            next = self.nodes[id].successor;
        }
        out
    }

    pub fn find_top_level(&self, name: &str) -> Option<NodeId> {
        self.top_level()
            .into_iter()
            .find(|&id| self.nodes[id].name == name)
    }

    /// Line prefix used both when rendering an instance line and as a choice
    /// candidate: `> > name[index](format):`. The index bracket appears only
    /// for states that can repeat.
    pub fn line_prefix(&self, id: NodeId, index: u32) -> String {
        let node = &self.nodes[id];
        let count = if node.max_count > 1 {
            format!("[{index}]")
        } else {
            String::new()
        };
        format!(
            "{}{}{}({}):",
            "> ".repeat(node.depth),
            node.name,
            count,
            node.format
        )
    }

    /// Admissible transitions once instance `stack.last()` has completed
    /// (for a record state: once its whole subtree has completed).
    ///
    /// `stack` is the live nesting from a top-level state down to the just
    /// finished one, each with its 1-based instance index. Candidate order:
    /// repeat the state itself, then while popping towards the root at each
    /// level re-enter the ancestor (if under its count) or advance to its
    /// successor, stopping at the first successor found; the terminal
    /// transition appears when the root is reached with no successor left.
    pub fn candidates_after(&self, stack: &[(NodeId, u32)]) -> Vec<Transition> {
        let (current, index) = *stack.last().expect("candidates_after on empty stack");
        let mut out = Vec::new();
        if index < self.nodes[current].max_count {
            out.push(Transition::Enter {
                node: current,
                index: index + 1,
            });
        }
        let mut level = stack.len() - 1;
        let mut node = current;
        loop {
            if let Some(successor) = self.nodes[node].successor {
                out.push(Transition::Enter {
                    node: successor,
                    index: 1,
                });
                break;
            }
            if level == 0 {
                out.push(Transition::Terminal);
                break;
            }
            level -= 1;
            let (ancestor, ancestor_index) = stack[level];
            debug_assert_eq!(Some(ancestor), self.nodes[node].parent);
            if ancestor_index < self.nodes[ancestor].max_count {
                out.push(Transition::Enter {
                    node: ancestor,
                    index: ancestor_index + 1,
                });
            }
            node = ancestor;
        }
        out
    }
}

/// Prefix of the line that terminates a questionnaire. Next-kind leaves are
/// followed by the chosen branch name; exit-kind leaves close the record.
pub fn terminal_prefix(leaf: &LeafDecl) -> &'static str {
    if leaf.is_next() {
        "exit(next):"
    } else {
        "exit(record):"
    }
}
