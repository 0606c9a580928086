//! Token-level choice: given a prompt and candidate continuations, pick the
//! most likely candidate.
//!
//! Candidates share a prefix tree over their token sequences. A depth-first
//! evaluation queries the backend's one-step distribution once per node that
//! has children (plus once at the root), accumulating per-token
//! probabilities. A leaf scores the geometric mean of its path,
//! `cumul^(1/depth)`, accumulated in log space so long candidates do not
//! underflow. All candidate tokens are scored, including the first.
//!
//! Backends without a full next-token distribution fall back to, in order:
//! per-token log-probabilities of each forced continuation when the service
//! exposes them, else one greedy completion and the longest exact prefix
//! match against it.

use std::collections::BTreeMap;

use super::{complete_line, LmBackend, LmError, SamplingConfig, TokenId};

#[derive(Debug, Clone)]
struct Node {
    token: Option<TokenId>,
    depth: usize,
    children: BTreeMap<TokenId, usize>,
    proba: Option<f64>,
    /// ln of the cumulative product along the path; 0 at the root.
    log_cumul: f64,
}

/// Prefix tree over candidate token sequences.
#[derive(Debug, Clone)]
pub struct TokenChoiceTree {
    nodes: Vec<Node>,
}

impl Default for TokenChoiceTree {
    fn default() -> Self {
        Self::new()
    }
}

impl TokenChoiceTree {
    pub fn new() -> Self {
        TokenChoiceTree {
            nodes: vec![Node {
                token: None,
                depth: 0,
                children: BTreeMap::new(),
                proba: None,
                log_cumul: 0.0,
            }],
        }
    }

    /// Insert a candidate's token path, sharing prefixes, and return the leaf
    /// node handle.
    pub fn add(&mut self, backend: &dyn LmBackend, text: &str) -> Result<usize, LmError> {
        if text.is_empty() {
            return Err(LmError::EmptyCandidate);
        }
        let tokens = backend.tokenize(text)?;
        if tokens.is_empty() {
            return Err(LmError::EmptyCandidate);
        }
        let mut at = 0usize;
        for token in tokens {
            let depth = self.nodes[at].depth + 1;
            let next = match self.nodes[at].children.get(&token) {
                Some(&id) => id,
                None => {
                    let id = self.nodes.len();
                    self.nodes.push(Node {
                        token: Some(token),
                        depth,
                        children: BTreeMap::new(),
                        proba: None,
                        log_cumul: 0.0,
                    });
                    self.nodes[at].children.insert(token, id);
                    id
                }
            };
            at = next;
        }
        Ok(at)
    }

    /// Number of nodes that have children, the root included. This equals the
    /// number of `greedy` calls [`eval`](Self::eval) makes.
    pub fn internal_node_count(&self) -> usize {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(id, n)| *id == 0 || !n.children.is_empty())
            .count()
    }

    /// Depth-first evaluation: set every node's probability and cumulative
    /// product from one-step distributions. The root always queries once;
    /// childless nodes are never queried (their distribution is unused).
    pub fn eval(&mut self, backend: &dyn LmBackend, prompt: &str) -> Result<(), LmError> {
        self.eval_node(backend, 0, prompt.to_string())
    }

    fn eval_node(
        &mut self,
        backend: &dyn LmBackend,
        id: usize,
        prompt: String,
    ) -> Result<(), LmError> {
        if id != 0 && self.nodes[id].children.is_empty() {
            return Ok(());
        }
        let logprobs = backend.greedy(&prompt)?;
        let children: Vec<(TokenId, usize)> = self.nodes[id]
            .children
            .iter()
            .map(|(t, c)| (*t, *c))
            .collect();
        let base = self.nodes[id].log_cumul;
        for (_, child) in children {
            let token = self.nodes[child].token.expect("non-root nodes carry tokens");
            let lp = *logprobs.get(token as usize).ok_or_else(|| {
                LmError::backend(format!(
                    "distribution of `{}` has no entry for token {token}",
                    backend.name()
                ))
            })?;
            self.nodes[child].proba = Some(lp.exp());
            self.nodes[child].log_cumul = base + lp;
            let extended = format!("{prompt}{}", backend.detokenize(&[token])?);
            self.eval_node(backend, child, extended)?;
        }
        Ok(())
    }

    /// Geometric-mean score of a node's path, `cumul^(1/depth)`. Undefined at
    /// the root and before evaluation.
    pub fn score(&self, id: usize) -> Option<f64> {
        let node = &self.nodes[id];
        if node.depth == 0 || node.proba.is_none() {
            return None;
        }
        Some((node.log_cumul / node.depth as f64).exp())
    }

    pub fn proba(&self, id: usize) -> Option<f64> {
        self.nodes[id].proba
    }

    pub fn cumul(&self, id: usize) -> f64 {
        self.nodes[id].log_cumul.exp()
    }

    pub fn depth(&self, id: usize) -> usize {
        self.nodes[id].depth
    }
}

/// How a choice was decided, with per-candidate scores when available.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceOutcome {
    pub index: usize,
    /// Geometric-mean probabilities (tree or forced scoring), or match
    /// lengths for the completion fallback.
    pub scores: Option<Vec<f64>>,
    pub method: ChoiceMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChoiceMethod {
    Tree,
    ForcedScoring,
    PrefixMatch,
}

/// Pick the most likely of `candidates` after `prompt`. Ties break to the
/// lowest index; a single candidate returns immediately without scoring.
/// `config` drives the completion used by the prefix-match fallback.
pub fn choose(
    backend: &dyn LmBackend,
    prompt: &str,
    candidates: &[&str],
    config: &SamplingConfig,
) -> Result<ChoiceOutcome, LmError> {
    assert!(!candidates.is_empty(), "choose needs at least one candidate");
    if candidates.len() == 1 {
        return Ok(ChoiceOutcome {
            index: 0,
            scores: None,
            method: ChoiceMethod::Tree,
        });
    }
    if backend.capabilities().supports_full_distribution {
        let mut tree = TokenChoiceTree::new();
        let leaves = candidates
            .iter()
            .map(|c| tree.add(backend, c))
            .collect::<Result<Vec<_>, _>>()?;
        tree.eval(backend, prompt)?;
        let scores: Vec<f64> = leaves
            .iter()
            .map(|&leaf| tree.score(leaf).unwrap_or(0.0))
            .collect();
        return Ok(ChoiceOutcome {
            index: argmax(&scores),
            scores: Some(scores),
            method: ChoiceMethod::Tree,
        });
    }

    // Tier 1: services that can score a forced continuation.
    let mut forced: Vec<f64> = Vec::with_capacity(candidates.len());
    let mut all_scored = true;
    for candidate in candidates {
        match backend.forced_logprobs(prompt, candidate)? {
            Some(logprobs) if !logprobs.is_empty() => {
                let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
                forced.push(mean.exp());
            }
            _ => {
                all_scored = false;
                break;
            }
        }
    }
    if all_scored {
        return Ok(ChoiceOutcome {
            index: argmax(&forced),
            scores: Some(forced),
            method: ChoiceMethod::ForcedScoring,
        });
    }

    // Tier 2: one greedy completion, longest exact prefix match.
    let completion = complete_line(backend, prompt, config)?;
    let trimmed = completion.trim_start();
    let scores: Vec<f64> = candidates
        .iter()
        .map(|c| {
            let c = c.trim();
            if trimmed.starts_with(c) {
                c.len() as f64
            } else {
                common_prefix_len(trimmed, c) as f64
            }
        })
        .collect();
    Ok(ChoiceOutcome {
        index: argmax(&scores),
        scores: Some(scores),
        method: ChoiceMethod::PrefixMatch,
    })
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

fn common_prefix_len(a: &str, b: &str) -> usize {
    a.bytes().zip(b.bytes()).take_while(|(x, y)| x == y).count()
}

#[cfg(test)]
mod tests {
    use super::super::scripted::ScriptedLm;
    use super::super::Capabilities;
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// The distribution fixture used across the choice tests:
    /// P(a)=0.5, P(b)=0.3, P(c)=0.2 anywhere, except P(c|…b)=0.9.
    fn fixture_lm() -> ScriptedLm {
        ScriptedLm::with_rules(
            vec!["a", "b", "c"],
            vec![
                ("", vec![0.5, 0.3, 0.2]),
                ("b", vec![0.05, 0.05, 0.9]),
            ],
        )
    }

    /// Brute-force oracle: score a candidate by walking its token sequence
    /// and multiplying rule probabilities, no tree involved.
    fn oracle_score(lm: &ScriptedLm, prompt: &str, candidate: &str) -> f64 {
        let tokens = lm.tokenize(candidate).unwrap();
        let mut text = prompt.to_string();
        let mut log_cumul = 0.0;
        for t in &tokens {
            let lp = lm.greedy(&text).unwrap()[*t as usize];
            log_cumul += lp;
            text.push_str(&lm.detokenize(&[*t]).unwrap());
        }
        (log_cumul / tokens.len() as f64).exp()
    }

    #[test]
    fn shared_prefixes_share_nodes() {
        let lm = fixture_lm();
        let mut tree = TokenChoiceTree::new();
        let l1 = tree.add(&lm, "ab").unwrap();
        let l2 = tree.add(&lm, "ac").unwrap();
        assert_ne!(l1, l2);
        // root + a + b + c
        assert_eq!(tree.nodes.len(), 4);
        assert_eq!(tree.internal_node_count(), 2);
    }

    #[test]
    fn single_candidate_single_node_path() {
        let lm = fixture_lm();
        let mut tree = TokenChoiceTree::new();
        let leaf = tree.add(&lm, "a").unwrap();
        assert_eq!(tree.depth(leaf), 1);
        assert_eq!(tree.nodes.len(), 2);
    }

    #[test]
    fn eval_sets_hand_computed_cumulative_products() {
        let lm = fixture_lm();
        let mut tree = TokenChoiceTree::new();
        let a = tree.add(&lm, "a").unwrap();
        let bc = tree.add(&lm, "bc").unwrap();
        tree.eval(&lm, "p").unwrap();
        assert!((tree.cumul(a) - 0.5).abs() < 1e-12);
        assert!((tree.cumul(bc) - 0.27).abs() < 1e-12);
        assert!((tree.score(bc).unwrap() - 0.27f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_depth_tree_queries_greedy_exactly_once() {
        let lm = fixture_lm();
        let mut tree = TokenChoiceTree::new();
        tree.eval(&lm, "p").unwrap();
        assert_eq!(lm.greedy_calls(), 1);
    }

    #[test]
    fn greedy_calls_equal_internal_node_count() {
        let lm = fixture_lm();
        let mut tree = TokenChoiceTree::new();
        for c in ["ab", "ac", "abc", "b"] {
            tree.add(&lm, c).unwrap();
        }
        tree.eval(&lm, "p").unwrap();
        assert_eq!(lm.greedy_calls(), tree.internal_node_count());
        // Independent prefix-set oracle: distinct non-empty proper prefixes
        // of the token sequences, plus one for the root.
        let mut prefixes = std::collections::BTreeSet::new();
        for c in ["ab", "ac", "abc", "b"] {
            let toks = lm.tokenize(c).unwrap();
            for cut in 1..toks.len() {
                prefixes.insert(toks[..cut].to_vec());
            }
        }
        assert_eq!(lm.greedy_calls(), prefixes.len() + 1);
    }

    #[test]
    fn internal_node_count_matches_prefix_set_oracle_on_random_sets() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let lm = fixture_lm();
        for seed in 0..50u64 {
            let mut rng = StdRng::seed_from_u64(seed);
            let candidates: Vec<String> = (0..rng.gen_range(1..6))
                .map(|_| {
                    let len = rng.gen_range(1..5);
                    (0..len)
                        .map(|_| ["a", "b", "c"][rng.gen_range(0..3)])
                        .collect()
                })
                .collect();
            let mut tree = TokenChoiceTree::new();
            for c in &candidates {
                tree.add(&lm, c).unwrap();
            }
            let mut prefixes = std::collections::BTreeSet::new();
            for c in &candidates {
                let toks = lm.tokenize(c).unwrap();
                for cut in 1..toks.len() {
                    prefixes.insert(toks[..cut].to_vec());
                }
                // A candidate that prefixes another candidate makes that
                // leaf internal too.
                if candidates
                    .iter()
                    .any(|other| other != c && other.starts_with(c.as_str()))
                {
                    prefixes.insert(toks.clone());
                }
            }
            assert_eq!(
                tree.internal_node_count(),
                prefixes.len() + 1,
                "seed {seed}: candidates {candidates:?}"
            );
        }
    }

    #[test]
    fn choose_picks_geometric_mean_winner() {
        let lm = fixture_lm();
        let candidates = ["a", "c", "bc"];
        let outcome = choose(&lm, "p", &candidates, &SamplingConfig::new(8, 0.0)).unwrap();
        assert_eq!(outcome.index, 2);
        let scores = outcome.scores.unwrap();
        for (i, c) in candidates.iter().enumerate() {
            let expect = oracle_score(&lm, "p", c);
            assert!(
                (scores[i] - expect).abs() < 1e-9,
                "candidate {c}: {} vs oracle {expect}",
                scores[i]
            );
        }
    }

    #[test]
    fn choose_is_permutation_stable() {
        let lm = fixture_lm();
        let base = ["a", "c", "bc"];
        let perms = [
            [0usize, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for perm in perms {
            let candidates: Vec<&str> = perm.iter().map(|&i| base[i]).collect();
            let outcome =
                choose(&lm, "p", &candidates, &SamplingConfig::new(8, 0.0)).unwrap();
            assert_eq!(candidates[outcome.index], "bc", "perm {perm:?}");
        }
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let lm = fixture_lm();
        let outcome = choose(&lm, "p", &["a", "a"], &SamplingConfig::new(8, 0.0)).unwrap();
        assert_eq!(outcome.index, 0);
    }

    #[test]
    fn single_candidate_needs_no_scoring() {
        let lm = fixture_lm();
        let outcome = choose(&lm, "p", &["a"], &SamplingConfig::new(8, 0.0)).unwrap();
        assert_eq!(outcome.index, 0);
        assert_eq!(lm.greedy_calls(), 0);
        assert_eq!(lm.complete_calls(), 0);
    }

    #[test]
    fn equal_length_candidates_agree_with_raw_cumul() {
        let lm = fixture_lm();
        let candidates = ["ab", "bc", "ca"];
        let outcome = choose(&lm, "p", &candidates, &SamplingConfig::new(8, 0.0)).unwrap();
        let raw: Vec<f64> = candidates
            .iter()
            .map(|c| {
                let toks = lm.tokenize(c).unwrap();
                let mut text = "p".to_string();
                let mut prod = 1.0;
                for t in &toks {
                    prod *= lm.greedy(&text).unwrap()[*t as usize].exp();
                    text.push_str(&lm.detokenize(&[*t]).unwrap());
                }
                prod
            })
            .collect();
        let raw_best = super::argmax(&raw);
        assert_eq!(outcome.index, raw_best);
    }

    #[test]
    fn empty_candidate_is_rejected() {
        let lm = fixture_lm();
        let mut tree = TokenChoiceTree::new();
        assert!(matches!(tree.add(&lm, ""), Err(LmError::EmptyCandidate)));
    }

    #[test]
    fn fallback_prefix_match_selects_completed_candidate() {
        let lm = ScriptedLm::with_transcript(vec![("", "> issues(thought):  no more")]);
        let candidates = ["> answer[2](sentence):", "> issues(thought):"];
        let outcome = choose(&lm, "p\n", &candidates, &SamplingConfig::new(20, 0.0)).unwrap();
        assert_eq!(outcome.index, 1);
        assert_eq!(outcome.method, ChoiceMethod::PrefixMatch);
    }

    #[test]
    fn fallback_trims_leading_whitespace_for_bare_names() {
        let lm = ScriptedLm::with_transcript(vec![("exit(next):", "submit")]);
        let outcome = choose(
            &lm,
            "exit(next): ",
            &["edit", "submit"],
            &SamplingConfig::new(20, 0.0),
        )
        .unwrap();
        assert_eq!(outcome.index, 1);
    }

    #[test]
    fn fallback_unmatched_completion_breaks_to_lowest_index() {
        let lm = ScriptedLm::with_transcript(vec![("", "zzz")]);
        let outcome = choose(
            &lm,
            "p\n",
            &["edit", "submit"],
            &SamplingConfig::new(20, 0.0),
        )
        .unwrap();
        assert_eq!(outcome.index, 0);
    }

    /// Backend wrapper exposing forced-continuation scoring for tier-1 tests.
    struct ForcedScorer {
        calls: AtomicUsize,
    }

    impl LmBackend for ForcedScorer {
        fn name(&self) -> &str {
            "forced"
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities {
                supports_full_distribution: false,
                supports_concurrent_calls: false,
            }
        }
        fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, LmError> {
            Err(LmError::Tokenize {
                text: text.to_string(),
                reason: "no tokenizer".to_string(),
            })
        }
        fn detokenize(&self, _tokens: &[TokenId]) -> Result<String, LmError> {
            Err(LmError::backend("no detokenizer"))
        }
        fn greedy(&self, _prompt: &str) -> Result<Vec<f64>, LmError> {
            Err(LmError::Capability {
                backend: "forced".to_string(),
                operation: "greedy",
            })
        }
        fn complete(&self, _prompt: &str, _config: &SamplingConfig) -> Result<String, LmError> {
            Err(LmError::backend("complete should not be needed"))
        }
        fn forced_logprobs(
            &self,
            _prompt: &str,
            continuation: &str,
        ) -> Result<Option<Vec<f64>>, LmError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            // Longer continuations score better in this toy scorer.
            Ok(Some(vec![-(1.0 / continuation.len() as f64); 2]))
        }
    }

    #[test]
    fn forced_scoring_tier_is_preferred_over_prefix_match() {
        let lm = ForcedScorer {
            calls: AtomicUsize::new(0),
        };
        let outcome = choose(
            &lm,
            "p",
            &["ab", "abcd", "abc"],
            &SamplingConfig::new(8, 0.0),
        )
        .unwrap();
        assert_eq!(outcome.method, ChoiceMethod::ForcedScoring);
        assert_eq!(outcome.index, 1);
        assert_eq!(lm.calls.load(Ordering::SeqCst), 3);
    }
}
