//! LCA-reconciliation and duplication+loss cost.
//!
//! The cost of a gene tree is a sum of local terms, one per internal node,
//! computed from the species images of the node and of its two children.

use std::fmt;

use thiserror::Error;

use crate::tree::{EventLabel, GeneTree, NodeId, SpeciesTree};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReconciliationError {
    #[error("species node {parent} is not the lca of {left} and {right}")]
    InvalidLcaTriple {
        parent: NodeId,
        left: NodeId,
        right: NodeId,
    },
    #[error("internal node {0} has no event label")]
    UnlabeledNode(NodeId),
    #[error("node {0} is labeled Spec but its children are not separated in the species tree")]
    InvalidSpeciation(NodeId),
}

/// Duplication and loss counts of a (partial) reconciliation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Cost {
    pub duplications: u64,
    pub losses: u64,
}

impl Cost {
    pub const ZERO: Cost = Cost {
        duplications: 0,
        losses: 0,
    };

    pub fn new(duplications: u64, losses: u64) -> Self {
        Cost {
            duplications,
            losses,
        }
    }

    pub fn total(&self) -> u64 {
        self.duplications + self.losses
    }
}

impl std::ops::Add for Cost {
    type Output = Cost;

    fn add(self, o: Cost) -> Cost {
        Cost::new(self.duplications + o.duplications, self.losses + o.losses)
    }
}

impl std::ops::AddAssign for Cost {
    fn add_assign(&mut self, o: Cost) {
        *self = *self + o;
    }
}

impl std::iter::Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cost={}+{}={}",
            self.duplications,
            self.losses,
            self.total()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalCost {
    pub cost: Cost,
    pub label: EventLabel,
}

impl LocalCost {
    pub fn total(&self) -> u64 {
        self.cost.total()
    }
}

/// Local cost of a node mapped to `parent` whose children map to `left` and
/// `right`, under the LCA labeling.
pub fn local_cost(
    s: &SpeciesTree,
    parent: NodeId,
    left: NodeId,
    right: NodeId,
) -> Result<LocalCost, ReconciliationError> {
    if parent >= s.len() || left >= s.len() || right >= s.len() || s.lca(left, right) != parent {
        return Err(ReconciliationError::InvalidLcaTriple {
            parent,
            left,
            right,
        });
    }
    Ok(local_cost_unchecked(s, parent, left, right))
}

pub(crate) fn local_cost_unchecked(
    s: &SpeciesTree,
    parent: NodeId,
    left: NodeId,
    right: NodeId,
) -> LocalCost {
    let inter = (s.inter_unchecked(parent, left) + s.inter_unchecked(parent, right)) as u64;
    match (parent == left, parent == right) {
        (false, false) => LocalCost {
            cost: Cost::new(0, inter),
            label: EventLabel::Spec,
        },
        (true, true) => LocalCost {
            cost: Cost::new(1, inter),
            label: EventLabel::Dup,
        },
        _ => LocalCost {
            cost: Cost::new(1, 1 + inter),
            label: EventLabel::Dup,
        },
    }
}

/// Local cost when the node's event may be imposed by input trees.
///
/// A forced duplication on a node whose children are separated costs one
/// duplication plus a loss on each child lineage. A forced speciation is only
/// admissible where the LCA labeling is already a speciation; `None` marks the
/// incompatible case.
pub fn labeled_local_cost(
    s: &SpeciesTree,
    parent: NodeId,
    left: NodeId,
    right: NodeId,
    forced: Option<EventLabel>,
) -> Option<LocalCost> {
    let base = local_cost_unchecked(s, parent, left, right);
    match (forced, base.label) {
        (Some(EventLabel::Dup), EventLabel::Spec) => Some(LocalCost {
            cost: Cost::new(1, 2 + base.cost.losses),
            label: EventLabel::Dup,
        }),
        (Some(EventLabel::Spec), EventLabel::Dup) => None,
        _ => Some(base),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeReport {
    pub node: NodeId,
    pub label: EventLabel,
    pub image: NodeId,
    pub cost: Cost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconciliationReport {
    pub cost: Cost,
    pub nodes: Vec<NodeReport>,
}

impl ReconciliationReport {
    pub fn duplications(&self) -> u64 {
        self.cost.duplications
    }

    pub fn losses(&self) -> u64 {
        self.cost.losses
    }

    pub fn total(&self) -> u64 {
        self.cost.total()
    }

    pub fn labels(&self, len: usize) -> Vec<Option<EventLabel>> {
        let mut out = vec![None; len];
        for n in &self.nodes {
            out[n.node] = Some(n.label);
        }
        out
    }
}

/// LCA-reconciliation: Spec iff the children's images are separated.
pub fn lca_reconcile(g: &GeneTree) -> GeneTree {
    let s = g.species();
    let labels: Vec<_> = (0..g.len())
        .map(|v| {
            g.children(v).map(|[l, r]| {
                if s.separated(g.image(l), g.image(r)) {
                    EventLabel::Spec
                } else {
                    EventLabel::Dup
                }
            })
        })
        .collect();
    g.with_labels(&labels)
}

/// Duplication+loss cost of `g` under its LCA-reconciliation.
pub fn reconciliation_cost(g: &GeneTree) -> ReconciliationReport {
    let s = g.species();
    let nodes: Vec<_> = g
        .internal_nodes()
        .map(|v| {
            let [l, r] = g.children(v).unwrap();
            let lc = local_cost_unchecked(s, g.image(v), g.image(l), g.image(r));
            NodeReport {
                node: v,
                label: lc.label,
                image: g.image(v),
                cost: lc.cost,
            }
        })
        .collect();
    ReconciliationReport {
        cost: nodes.iter().map(|n| n.cost).sum(),
        nodes,
    }
}

/// Cost of `g` under its own event labels, which must cover every internal
/// node. Fails when a speciation label sits on a non-separated node.
pub fn labeled_reconciliation_cost(
    g: &GeneTree,
) -> Result<ReconciliationReport, ReconciliationError> {
    let s = g.species();
    let mut nodes = Vec::new();
    for v in g.internal_nodes() {
        let label = g.label(v).ok_or(ReconciliationError::UnlabeledNode(v))?;
        let [l, r] = g.children(v).unwrap();
        let lc = labeled_local_cost(s, g.image(v), g.image(l), g.image(r), Some(label))
            .ok_or(ReconciliationError::InvalidSpeciation(v))?;
        nodes.push(NodeReport {
            node: v,
            label: lc.label,
            image: g.image(v),
            cost: lc.cost,
        });
    }
    Ok(ReconciliationReport {
        cost: nodes.iter().map(|n| n.cost).sum(),
        nodes,
    })
}

/// Duplication nodes all of whose strict ancestors are duplications, counted
/// on the LCA-reconciliation of `g`.
pub fn highest_duplications(g: &GeneTree) -> usize {
    let labeled = lca_reconcile(g);
    let mut count = 0;
    let mut stack = vec![labeled.root()];
    while let Some(v) = stack.pop() {
        if labeled.label(v) == Some(EventLabel::Dup) {
            count += 1;
            let [l, r] = labeled.children(v).unwrap();
            stack.push(l);
            stack.push(r);
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;

    fn species() -> Arc<SpeciesTree> {
        Arc::new(SpeciesTree::parse("((((s,b),h),m),r);").unwrap())
    }

    #[test]
    fn local_cost_cases() {
        let s = species();
        let h = s.leaf("h").unwrap();
        let x = s.leaf("s").unwrap();
        let b = s.leaf("b").unwrap();
        let sb = s.lca(x, b);
        let lc = local_cost(&s, h, h, h).unwrap();
        assert_eq!((lc.total(), lc.label), (1, EventLabel::Dup));
        let lc = local_cost(&s, sb, x, b).unwrap();
        assert_eq!((lc.total(), lc.label), (0, EventLabel::Spec));
        let lc = local_cost(&s, sb, sb, x).unwrap();
        assert_eq!(lc.cost, Cost::new(1, 1));
        assert_eq!(lc.label, EventLabel::Dup);
        assert!(matches!(
            local_cost(&s, s.root(), x, b),
            Err(ReconciliationError::InvalidLcaTriple { .. })
        ));
    }

    #[test]
    fn forced_dup_on_speciation() {
        let s = species();
        let x = s.leaf("s").unwrap();
        let b = s.leaf("b").unwrap();
        let sb = s.lca(x, b);
        let lc = labeled_local_cost(&s, sb, x, b, Some(EventLabel::Dup)).unwrap();
        assert_eq!(lc.cost, Cost::new(1, 2));
        assert_eq!(
            labeled_local_cost(&s, sb, x, b, Some(EventLabel::Spec)),
            Some(local_cost(&s, sb, x, b).unwrap())
        );
        assert_eq!(labeled_local_cost(&s, sb, sb, x, Some(EventLabel::Spec)), None);
    }

    #[test]
    fn unforced_equals_local_cost_for_every_triple() {
        let s = SpeciesTree::parse("((a,b),((c,d),e));").unwrap();
        for l in 0..s.len() {
            for r in 0..s.len() {
                let p = s.lca(l, r);
                assert_eq!(
                    labeled_local_cost(&s, p, l, r, None),
                    Some(local_cost(&s, p, l, r).unwrap())
                );
            }
        }
    }

    #[test]
    fn cherry_costs() {
        let s = species();
        let dup = GeneTree::parse("(h1__h,h2__h);", &s).unwrap();
        let rep = reconciliation_cost(&dup);
        assert_eq!(rep.cost, Cost::new(1, 0));
        let labeled = lca_reconcile(&dup);
        assert_eq!(labeled.label(labeled.root()), Some(EventLabel::Dup));
        let spec = GeneTree::parse("(s1__s,b1__b);", &s).unwrap();
        assert_eq!(reconciliation_cost(&spec).total(), 0);
        assert_eq!(
            lca_reconcile(&spec).label(spec.root()),
            Some(EventLabel::Spec)
        );
    }

    #[test]
    fn congruent_tree_costs_nothing() {
        let s = species();
        let g = GeneTree::parse("((((s1__s,b1__b),h1__h),m1__m),r1__r);", &s).unwrap();
        assert_eq!(reconciliation_cost(&g).total(), 0);
        assert_eq!(highest_duplications(&g), 0);
    }

    #[test]
    fn labeled_cost_of_lca_labels_is_lca_cost() {
        let s = species();
        let g = GeneTree::parse("(((s1__s,h1__h),(s2__s,m1__m)),(r1__r,h2__h));", &s).unwrap();
        let rep = reconciliation_cost(&g);
        let lab = labeled_reconciliation_cost(&lca_reconcile(&g)).unwrap();
        assert_eq!(rep.cost, lab.cost);
        assert!(matches!(
            labeled_reconciliation_cost(&g),
            Err(ReconciliationError::UnlabeledNode(_))
        ));
    }

    #[test]
    fn highest_duplication_count() {
        let s = species();
        // Dup root over a Dup and a Spec: two highest duplications
        let g = GeneTree::parse("(((h1__h,h2__h),h3__h),(h4__h,s1__s));", &s).unwrap();
        let lab = lca_reconcile(&g);
        assert_eq!(lab.label(lab.root()), Some(EventLabel::Dup));
        assert_eq!(highest_duplications(&g), 3);
    }
}
