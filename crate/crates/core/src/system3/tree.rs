//! Tree-of-thought search with guardian supervision.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::System3Error;
use crate::backend::{parse_children, BackendError, CognitionBackend, GenerationRequest, Role, Verdict};
use crate::kernel::Goal;
use crate::models::Creed;
use crate::prompts::{self, Tags};
use crate::system2::creed_section;

/// Directive attached when the guardian itself fails.
pub const GUARDIAN_FAILSAFE: &str = "re-verify";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    Open,
    Pruned,
    Annotated,
    Selected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThoughtNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub depth: u32,
    pub plan: String,
    /// Value estimate V̂ in [0, 1].
    pub value: f64,
    pub status: NodeStatus,
    pub verdict: Option<Verdict>,
    /// Corrective directive written on the edge from the parent.
    pub directive: Option<String>,
    pub children: Vec<NodeId>,
    pub expanded: bool,
}

impl ThoughtNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn is_pruned(&self) -> bool {
        self.status == NodeStatus::Pruned
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThoughtTree {
    nodes: Vec<ThoughtNode>,
}

impl ThoughtTree {
    pub fn new(root_plan: impl Into<String>, root_value: f64) -> Self {
        Self {
            nodes: vec![ThoughtNode {
                id: NodeId(0),
                parent: None,
                depth: 0,
                plan: root_plan.into(),
                value: root_value.clamp(0.0, 1.0),
                status: NodeStatus::Open,
                verdict: None,
                directive: None,
                children: Vec::new(),
                expanded: false,
            }],
        }
    }

    pub const ROOT: NodeId = NodeId(0);

    pub fn node(&self, id: NodeId) -> Option<&ThoughtNode> {
        self.nodes.get(id.0)
    }

    pub fn nodes(&self) -> &[ThoughtNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a child; pruned parents cannot grow.
    pub fn add_child(&mut self, parent: NodeId, plan: impl Into<String>, value: f64) -> Result<NodeId, System3Error> {
        let p = self.nodes.get(parent.0).ok_or(System3Error::UnknownNode(parent))?;
        if p.is_pruned() {
            return Err(System3Error::PrunedParent(parent));
        }
        let id = NodeId(self.nodes.len());
        let depth = p.depth + 1;
        self.nodes.push(ThoughtNode {
            id,
            parent: Some(parent),
            depth,
            plan: plan.into(),
            value: value.clamp(0.0, 1.0),
            status: NodeStatus::Open,
            verdict: None,
            directive: None,
            children: Vec::new(),
            expanded: false,
        });
        self.nodes[parent.0].children.push(id);
        Ok(id)
    }

    pub fn apply_verdict(&mut self, id: NodeId, verdict: Verdict) {
        let node = &mut self.nodes[id.0];
        match &verdict {
            Verdict::Sound => {}
            Verdict::MinorDefect(d) => {
                node.status = NodeStatus::Annotated;
                node.directive = Some(d.clone());
            }
            Verdict::Unsound(_) => {
                debug_assert!(node.children.is_empty());
                node.status = NodeStatus::Pruned;
            }
        }
        node.verdict = Some(verdict);
    }

    /// Marks a node whose expansion failed.
    pub fn annotate_defect(&mut self, id: NodeId, directive: String) {
        let node = &mut self.nodes[id.0];
        if node.status == NodeStatus::Open {
            node.status = NodeStatus::Annotated;
        }
        node.directive = Some(directive);
    }

    pub fn patch_value(&mut self, id: NodeId, value: f64) {
        if let Some(n) = self.nodes.get_mut(id.0) {
            n.value = value.clamp(0.0, 1.0);
        }
    }

    /// Unexpanded, unpruned nodes.
    pub fn frontier(&self) -> impl Iterator<Item = &ThoughtNode> {
        self.nodes.iter().filter(|n| !n.expanded && !n.is_pruned())
    }

    /// Beam choice: highest V̂ on the frontier, ties by smallest id.
    pub fn best_open(&self) -> Option<NodeId> {
        argmax(self.frontier())
    }

    pub fn unpruned_leaves(&self) -> impl Iterator<Item = &ThoughtNode> {
        self.nodes.iter().filter(|n| n.is_leaf() && !n.is_pruned())
    }

    /// Root-to-node id path.
    pub fn path(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur.0].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn path_is_clean(&self, id: NodeId) -> bool {
        self.path(id).iter().all(|n| !self.nodes[n.0].is_pruned())
    }
}

fn argmax<'a>(nodes: impl Iterator<Item = &'a ThoughtNode>) -> Option<NodeId> {
    let mut best: Option<&ThoughtNode> = None;
    for n in nodes {
        best = match best {
            Some(b) if b.value > n.value || (b.value == n.value && b.id < n.id) => Some(b),
            _ => Some(n),
        };
    }
    best.map(|n| n.id)
}

/// Argmax of V̂ over unpruned leaves, ties by smallest id.
pub fn select_leaf(tree: &ThoughtTree) -> Option<NodeId> {
    argmax(tree.unpruned_leaves())
}

pub fn select(tree: &mut ThoughtTree) -> Result<NodeId, System3Error> {
    let id = select_leaf(tree).ok_or(System3Error::EmptyFrontier)?;
    tree.nodes[id.0].status = NodeStatus::Selected;
    debug_assert!(tree.path_is_clean(id));
    Ok(id)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_expansions: u32,
    pub branching: u32,
    pub tau_util: f64,
}

impl SearchBudget {
    pub fn new(max_expansions: u32, branching: u32, tau_util: f64) -> Result<Self, System3Error> {
        if max_expansions == 0 || branching == 0 || !(tau_util > 0.0 && tau_util < 1.0) {
            return Err(System3Error::InvalidBudget {
                max_expansions,
                branching,
                tau_util,
            });
        }
        Ok(Self {
            max_expansions,
            branching,
            tau_util,
        })
    }

    /// Same budget with τ lowered by `by`, kept inside (0, 1).
    pub fn relaxed(&self, by: f64) -> Self {
        Self {
            tau_util: (self.tau_util - by).max(0.05),
            ..*self
        }
    }
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            max_expansions: 32,
            branching: 3,
            tau_util: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Halt {
    /// An unpruned leaf crossed τ.
    Threshold(NodeId),
    Budget,
    /// No open node left to expand.
    Exhausted,
}

impl fmt::Display for Halt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Halt::Threshold(id) => write!(f, "threshold at {id}"),
            Halt::Budget => f.write_str("budget spent"),
            Halt::Exhausted => f.write_str("frontier exhausted"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub halt: Halt,
    pub expansions: u32,
}

/// What expansion and supervision prompts need.
#[derive(Clone, Copy)]
pub struct SearchContext<'a> {
    pub goal: &'a Goal,
    pub creed: &'a Creed,
    pub backend: &'a dyn CognitionBackend,
    pub tags: &'a Tags,
    pub seed: u64,
}

fn crossing_leaf(tree: &ThoughtTree, tau: f64) -> Option<NodeId> {
    argmax(tree.unpruned_leaves().filter(|n| n.value > tau))
}

/// Expands the best open node until a leaf crosses τ, the budget runs out,
/// or the frontier empties. Guardian calls for the children of one
/// expansion run in parallel; verdicts are applied in node-id order.
pub fn expand(tree: &mut ThoughtTree, ctx: &SearchContext<'_>, budget: &SearchBudget) -> SearchOutcome {
    let mut expansions = 0;
    loop {
        if let Some(id) = crossing_leaf(tree, budget.tau_util) {
            return SearchOutcome {
                halt: Halt::Threshold(id),
                expansions,
            };
        }
        if expansions >= budget.max_expansions {
            return SearchOutcome {
                halt: Halt::Budget,
                expansions,
            };
        }
        let Some(best) = tree.best_open() else {
            return SearchOutcome {
                halt: Halt::Exhausted,
                expansions,
            };
        };
        expansions += 1;
        tree.nodes[best.0].expanded = true;
        let children = match propose(tree, best, ctx, budget) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("expansion of {best} failed: {e}");
                tree.annotate_defect(best, format!("expansion failed: {e}"));
                continue;
            }
        };
        let ids: Vec<NodeId> = children
            .into_iter()
            .take(budget.branching as usize)
            .map(|(score, plan)| tree.add_child(best, plan, score).expect("expanded node is unpruned"))
            .collect();
        let plans: Vec<(NodeId, String)> = ids.iter().map(|id| (*id, tree.nodes[id.0].plan.clone())).collect();
        let mut verdicts: Vec<(NodeId, Verdict)> = std::thread::scope(|s| {
            let handles: Vec<_> = plans
                .iter()
                .map(|(id, plan)| s.spawn(move || (*id, supervise(plan, ctx))))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("guardian worker panicked"))
                .collect()
        });
        verdicts.sort_by_key(|(id, _)| *id);
        for (id, v) in verdicts {
            tree.apply_verdict(id, v);
        }
    }
}

fn propose(
    tree: &ThoughtTree,
    node: NodeId,
    ctx: &SearchContext<'_>,
    budget: &SearchBudget,
) -> Result<Vec<(f64, String)>, BackendError> {
    let n = &tree.nodes[node.0];
    let tags = ctx
        .tags
        .clone()
        .with("mode", "expand")
        .with("template", &ctx.goal.template)
        .with("depth", n.depth)
        .with("node", node.0)
        .with("branching", budget.branching);
    let prompt = prompts::render(
        &prompts::EXPAND,
        &[
            ("tags", &tags.render()),
            ("goal", &ctx.goal.text),
            ("creed", &creed_section(ctx.creed, ctx.goal)),
            ("depth", &n.depth.to_string()),
            ("partial", &n.plan),
            ("branching", &budget.branching.to_string()),
        ],
    );
    let response = ctx.backend.generate(&GenerationRequest::new(Role::Planner, prompt, ctx.seed))?;
    parse_children(&response.text)
}

/// Guardian checklist review. Any backend or grammar failure yields the
/// fail-safe minor defect, never `sound`.
pub fn supervise(plan: &str, ctx: &SearchContext<'_>) -> Verdict {
    let tags = ctx.tags.clone().with("candidate", plan);
    let prompt = prompts::render(
        &prompts::GUARDIAN,
        &[
            ("tags", &tags.render()),
            ("goal", &ctx.goal.text),
            ("creed", &creed_section(ctx.creed, ctx.goal)),
            ("candidate", plan),
        ],
    );
    match ctx
        .backend
        .generate(&GenerationRequest::new(Role::Guardian, prompt, ctx.seed))
        .and_then(|r| Verdict::parse(&r.text))
    {
        Ok(v) => v,
        Err(e) => {
            log::warn!("guardian failed ({e}); defaulting to minor defect");
            Verdict::MinorDefect(GUARDIAN_FAILSAFE.to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{GenerationResponse, Health, ScriptedBackend};
    use crate::kernel::{GoalId, Origin};
    use crate::sandbox::DEFAULT_CREED;

    struct Flat(f64);

    impl CognitionBackend for Flat {
        fn name(&self) -> &str {
            "flat"
        }
        fn generate(&self, r: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
            let text = match r.role {
                Role::Planner => format!("- [{0}] a\n- [{0}] b\n- [{0}] c\n", self.0),
                _ => "sound".to_string(),
            };
            Ok(GenerationResponse { text, value: None })
        }
        fn healthcheck(&self) -> Health {
            Health::ok(None)
        }
    }

    struct Broken;

    impl CognitionBackend for Broken {
        fn name(&self) -> &str {
            "broken"
        }
        fn generate(&self, _: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
            Err(BackendError::Unavailable("offline".into()))
        }
        fn healthcheck(&self) -> Health {
            Health::down("offline")
        }
    }

    fn fixture() -> (Goal, Creed, Tags) {
        let mut goal = Goal::new(GoalId(1), "calm the user [creed:2]", Origin::Intrinsic, "stress-relief");
        goal.creed_refs.insert(2);
        (goal, Creed::new(DEFAULT_CREED.map(String::from)), Tags::new())
    }

    #[test]
    fn one_expansion_adds_branching_children() {
        let (goal, creed, tags) = fixture();
        let backend = Flat(0.5);
        let ctx = SearchContext { goal: &goal, creed: &creed, backend: &backend, tags: &tags, seed: 1 };
        let mut tree = ThoughtTree::new("root", 0.0);
        let budget = SearchBudget::new(1, 3, 0.8).unwrap();
        let out = expand(&mut tree, &ctx, &budget);
        assert_eq!(out, SearchOutcome { halt: Halt::Budget, expansions: 1 });
        assert_eq!(tree.node(ThoughtTree::ROOT).unwrap().children.len(), 3);
    }

    #[test]
    fn threshold_halts_immediately() {
        let (goal, creed, tags) = fixture();
        let backend = Flat(0.92);
        let ctx = SearchContext { goal: &goal, creed: &creed, backend: &backend, tags: &tags, seed: 1 };
        let mut tree = ThoughtTree::new("root", 0.0);
        let out = expand(&mut tree, &ctx, &SearchBudget::default());
        assert_eq!(out.expansions, 1);
        assert_eq!(out.halt, Halt::Threshold(NodeId(1)));
    }

    #[test]
    fn budget_is_exhausted_exactly() {
        let (goal, creed, tags) = fixture();
        let backend = Flat(0.5);
        let ctx = SearchContext { goal: &goal, creed: &creed, backend: &backend, tags: &tags, seed: 1 };
        let mut tree = ThoughtTree::new("root", 0.0);
        let out = expand(&mut tree, &ctx, &SearchBudget::default());
        assert_eq!(out, SearchOutcome { halt: Halt::Budget, expansions: 32 });
        assert_eq!(tree.len(), 1 + 32 * 3);
    }

    #[test]
    fn backend_failure_annotates_and_guardian_fails_safe() {
        let (goal, creed, tags) = fixture();
        let ctx = SearchContext { goal: &goal, creed: &creed, backend: &Broken, tags: &tags, seed: 1 };
        let mut tree = ThoughtTree::new("root", 0.0);
        let out = expand(&mut tree, &ctx, &SearchBudget::default());
        assert_eq!(out, SearchOutcome { halt: Halt::Exhausted, expansions: 1 });
        assert_eq!(tree.node(ThoughtTree::ROOT).unwrap().status, NodeStatus::Annotated);
        assert_eq!(supervise("anything", &ctx), Verdict::MinorDefect(GUARDIAN_FAILSAFE.into()));
    }

    #[test]
    fn scripted_search_prunes_the_trap_and_selects_a_clean_path() {
        let (goal, creed, tags) = fixture();
        let backend = ScriptedBackend::default();
        let ctx = SearchContext { goal: &goal, creed: &creed, backend: &backend, tags: &tags, seed: 7 };
        let mut tree = ThoughtTree::new("root", 0.0);
        let out = expand(&mut tree, &ctx, &SearchBudget::default());
        assert!(matches!(out.halt, Halt::Threshold(_)));
        assert!(tree.nodes().iter().any(|n| n.is_pruned()));
        assert!(tree.nodes().iter().any(|n| n.status == NodeStatus::Annotated));
        let id = select(&mut tree).unwrap();
        assert!(tree.path_is_clean(id));
        assert!(tree.node(id).unwrap().value > 0.8);
    }

    #[test]
    fn select_ties_break_to_smaller_id() {
        let mut tree = ThoughtTree::new("root", 0.0);
        let a = tree.add_child(ThoughtTree::ROOT, "a", 0.8).unwrap();
        let b = tree.add_child(ThoughtTree::ROOT, "b", 0.8).unwrap();
        assert!(a < b);
        assert_eq!(select_leaf(&tree), Some(a));
        tree.apply_verdict(a, Verdict::Unsound("x".into()));
        assert_eq!(select_leaf(&tree), Some(b));
        tree.apply_verdict(b, Verdict::Unsound("x".into()));
        assert_eq!(select(&mut tree), Err(System3Error::EmptyFrontier));
        assert!(matches!(tree.add_child(a, "c", 0.1), Err(System3Error::PrunedParent(_))));
    }

    #[test]
    fn budget_validation() {
        assert!(SearchBudget::new(0, 3, 0.8).is_err());
        assert!(SearchBudget::new(32, 3, 1.0).is_err());
        assert!((SearchBudget::default().relaxed(0.2).tau_util - 0.6).abs() < 1e-12);
    }
}
