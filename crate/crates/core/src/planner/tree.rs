use super::{safety_score, Footstep, PlanError, SafetyScorer};
use crate::terrain::SteppableGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct FootstepNode {
    pub footstep: Footstep,
    pub parent: Option<usize>,
    pub depth: usize,
}

/// Footstep tree rooted at the current support foot. Node 0 is the root;
/// children are always appended, so a parent index is smaller than its
/// child's and the tree cannot contain cycles.
#[derive(Debug, Clone)]
pub struct FootstepTree {
    nodes: Vec<FootstepNode>,
    has_child: Vec<bool>,
    extendable: Vec<usize>,
    max_depth: usize,
}

impl FootstepTree {
    pub fn new(root: Footstep, max_depth: usize) -> Self {
        Self {
            nodes: vec![FootstepNode {
                footstep: root,
                parent: None,
                depth: 0,
            }],
            has_child: vec![false],
            extendable: if max_depth > 0 { vec![0] } else { Vec::new() },
            max_depth,
        }
    }

    pub fn nodes(&self) -> &[FootstepNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Nodes with depth below the maximum, in insertion order.
    pub fn extendable(&self) -> &[usize] {
        &self.extendable
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        !self.has_child[i]
    }

    /// Append `step` as a child of `parent`; returns the new index.
    pub fn insert(&mut self, step: Footstep, parent: usize) -> usize {
        let depth = self.nodes[parent].depth + 1;
        let idx = self.nodes.len();
        self.nodes.push(FootstepNode {
            footstep: step,
            parent: Some(parent),
            depth,
        });
        self.has_child.push(false);
        self.has_child[parent] = true;
        if depth < self.max_depth {
            self.extendable.push(idx);
        }
        idx
    }

    /// Footsteps from the root's child down to `leaf`.
    pub fn chain(&self, leaf: usize) -> Vec<Footstep> {
        let mut steps = Vec::with_capacity(self.nodes[leaf].depth);
        let mut i = leaf;
        while let Some(p) = self.nodes[i].parent {
            steps.push(self.nodes[i].footstep);
            i = p;
        }
        steps.reverse();
        steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FootstepPath {
    pub steps: Vec<Footstep>,
    pub score: f64,
    /// Tree index of the last step.
    pub leaf: usize,
}

/// One candidate per leaf (root excluded), in increasing leaf index. The
/// score is left at 0 until ranked.
pub fn footstep_path_candidates(tree: &FootstepTree) -> Vec<FootstepPath> {
    (1..tree.len())
        .filter(|&i| tree.is_leaf(i))
        .map(|leaf| FootstepPath {
            steps: tree.chain(leaf),
            score: 0.0,
            leaf,
        })
        .collect()
}

/// Score every candidate and keep the best by (length, score); remaining
/// ties go to the smallest leaf index.
pub fn best_footstep_path(
    candidates: Vec<FootstepPath>,
    grid: &SteppableGrid,
    scorer: &SafetyScorer,
) -> Result<FootstepPath, PlanError> {
    let mut best: Option<FootstepPath> = None;
    for mut c in candidates {
        if c.steps.is_empty() {
            continue;
        }
        c.score = safety_score(&c.steps, grid, scorer);
        let better = match &best {
            None => true,
            Some(b) => {
                let (lc, lb) = (c.steps.len(), b.steps.len());
                lc > lb || (lc == lb && (c.score > b.score || (c.score == b.score && c.leaf < b.leaf)))
            }
        };
        if better {
            best = Some(c);
        }
    }
    best.ok_or(PlanError::NoFeasiblePath)
}
