//! Triplet-respecting recombination of separated subtrees of one gene tree.
//!
//! The recursion walks the initial tree top-down over nodes covering at least
//! two subtrees. A node covering exactly two hands them to the supertree DP;
//! a node with one single-subtree child grafts the other side's solution into
//! that subtree at its cheapest position; otherwise both sides are solved
//! independently and joined.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::reconciliation::{
    highest_duplications, labeled_local_cost, labeled_reconciliation_cost, lca_reconcile,
    reconciliation_cost, Cost,
};
use crate::supertree::{self, Solution, SolveOptions, SolveStats, SupertreeError};
use crate::tree::{EventLabel, GeneTree, GeneTreeBuilder, NodeId, SpeciesTree, TreeError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TripletError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Supertree(#[from] SupertreeError),
    #[error("decomposition has no subtrees")]
    NoSubtrees,
    #[error("subtree roots {0} and {1} are not separated")]
    NotSeparated(NodeId, NodeId),
    #[error("gene '{0}' is not covered by any subtree")]
    Uncovered(String),
    #[error("internal node {0} has no event label")]
    UnlabeledNode(NodeId),
    #[error("graft node {node} is not in the subtree rooted at {host}")]
    GraftNodeOutsideHost { node: NodeId, host: NodeId },
    #[error("no triplet-respecting tree is label-compatible with the subtrees")]
    NoLabelCompatibleSolution,
}

/// Pairwise separated subtrees of an initial tree covering all its leaves.
#[derive(Debug, Clone)]
pub struct SubtreeDecomposition {
    init: GeneTree,
    roots: Vec<NodeId>,
    /// Number of subtrees meeting the leafset of each node.
    counts: Vec<usize>,
}

impl SubtreeDecomposition {
    pub fn new(init: GeneTree, mut roots: Vec<NodeId>) -> Result<Self, TripletError> {
        if roots.is_empty() {
            return Err(TripletError::NoSubtrees);
        }
        roots.sort_unstable();
        roots.dedup();
        for &r in &roots {
            if r >= init.len() {
                return Err(TreeError::NodeNotInTree(r).into());
            }
        }
        for (i, &a) in roots.iter().enumerate() {
            for &b in &roots[i + 1..] {
                if init.is_ancestor(a, b) || init.is_ancestor(b, a) {
                    return Err(TripletError::NotSeparated(a, b));
                }
            }
        }
        let mut counts = vec![0; init.len()];
        let mut inside = vec![false; init.len()];
        for &r in &roots {
            for v in init.preorder_from(r) {
                inside[v] = true;
                counts[v] = 1;
            }
        }
        for v in init.postorder() {
            if inside[v] {
                continue;
            }
            match init.children(v) {
                None => {
                    return Err(TripletError::Uncovered(init.gene(v).unwrap().name.clone()));
                }
                Some([l, r]) => counts[v] = counts[l] + counts[r],
            }
        }
        Ok(SubtreeDecomposition {
            init,
            roots,
            counts,
        })
    }

    pub fn init(&self) -> &GeneTree {
        &self.init
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn k(&self) -> usize {
        self.roots.len()
    }

    pub fn count(&self, x: NodeId) -> usize {
        self.counts[x]
    }

    /// The subtrees as standalone trees, labels included.
    pub fn subtrees(&self) -> Vec<GeneTree> {
        self.roots.iter().map(|&r| self.init.subtree(r)).collect()
    }
}

/// Cuts `g` at its highest speciations: speciation nodes (or leaves) all of
/// whose strict ancestors are duplications.
pub fn decompose_at_highest_speciations(
    g: &GeneTree,
) -> Result<SubtreeDecomposition, TripletError> {
    let mut roots = Vec::new();
    let mut stack = vec![g.root()];
    while let Some(v) = stack.pop() {
        match g.children(v) {
            None => roots.push(v),
            Some([l, r]) => match g.label(v) {
                None => return Err(TripletError::UnlabeledNode(v)),
                Some(EventLabel::Spec) => roots.push(v),
                Some(EventLabel::Dup) => {
                    stack.push(r);
                    stack.push(l);
                }
            },
        }
    }
    SubtreeDecomposition::new(g.clone(), roots)
}

/// True iff `candidate` has the initial tree's topology on every gene triple
/// drawn from three distinct subtrees.
pub fn triplet_respecting(candidate: &GeneTree, decomposition: &SubtreeDecomposition) -> bool {
    let init = &decomposition.init;
    let groups: Vec<Vec<(NodeId, NodeId)>> = decomposition
        .roots
        .iter()
        .map(|&r| {
            init.leaves_under(r)
                .into_iter()
                .map(|v| {
                    let name = &init.gene(v).unwrap().name;
                    (v, candidate.leaf_by_name(name).unwrap_or(usize::MAX))
                })
                .collect()
        })
        .collect();
    if groups.iter().flatten().any(|&(_, c)| c == usize::MAX) {
        return false;
    }
    // the deeper pair of a triple identifies its rooted topology
    let shape = |t: &GeneTree, a: NodeId, b: NodeId, c: NodeId| {
        let (ab, ac, bc) = (t.depth(t.lca(a, b)), t.depth(t.lca(a, c)), t.depth(t.lca(b, c)));
        if ab > ac {
            0
        } else if ac > ab {
            1
        } else {
            debug_assert!(bc > ab);
            2
        }
    };
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            for k in j + 1..groups.len() {
                for &(a, ca) in &groups[i] {
                    for &(b, cb) in &groups[j] {
                        for &(c, cc) in &groups[k] {
                            if shape(init, a, b, c) != shape(candidate, ca, cb, cc) {
                                return false;
                            }
                        }
                    }
                }
            }
        }
    }
    true
}

/// Best graft position found by [`graft_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Graft {
    x_star: NodeId,
    total: u64,
}

/// Local cost at host node `u` when its children map to `l`, `r`.
fn host_cost(
    g: &GeneTree,
    u: NodeId,
    l: NodeId,
    r: NodeId,
    labeled: bool,
) -> Option<u64> {
    let s = g.species();
    let forced = if labeled { g.label(u) } else { None };
    labeled_local_cost(s, s.lca(l, r), l, r, forced).map(|c| c.total())
}

fn join_cost(s: &SpeciesTree, a: NodeId, b: NodeId) -> u64 {
    labeled_local_cost(s, s.lca(a, b), a, b, None).unwrap().total()
}

/// All graft positions of the host in one depth-first pass. Returns the
/// cheapest, ties broken toward the deepest and then the leftmost node.
fn graft_scan(g: &GeneTree, host: NodeId, r_img: NodeId, labeled: bool) -> Option<Graft> {
    let s = g.species();
    // base cost of every host internal node; an inadmissible forced label stays inadmissible under re-imaging:
    // both child images only move to ancestors of the same species node
    let mut base = 0;
    for u in g.preorder_from(host) {
        if let Some([l, r]) = g.children(u) {
            base += host_cost(g, u, g.image(l), g.image(r), labeled)?;
        }
    }
    // path delta: sum over strict ancestors (within host) of new - base cost;
    // None once an ancestor becomes infeasible
    let mut best: Option<(Graft, u32)> = None;
    let mut stack: Vec<(NodeId, Option<i64>)> = vec![(host, Some(0))];
    while let Some((x, delta)) = stack.pop() {
        if let Some(d) = delta {
            let total = (base as i64 + d) as u64 + join_cost(s, g.image(x), r_img);
            let depth = g.depth(x);
            let better = match best {
                None => true,
                Some((bg, bd)) => total < bg.total || (total == bg.total && depth > bd),
            };
            if better {
                best = Some((Graft { x_star: x, total }, depth));
            }
        }
        if let Some([l, r]) = g.children(x) {
            let step = |toward: NodeId| -> Option<i64> {
                let d = delta?;
                let (il, ir) = if toward == l {
                    (s.lca(g.image(l), r_img), g.image(r))
                } else {
                    (g.image(l), s.lca(g.image(r), r_img))
                };
                let new = host_cost(g, x, il, ir, labeled)? as i64;
                let old = host_cost(g, x, g.image(l), g.image(r), labeled)? as i64;
                Some(d + new - old)
            };
            // right pushed first so the left side is visited first
            stack.push((r, step(r)));
            stack.push((l, step(l)));
        }
    }
    best.map(|(g, _)| g)
}

/// Reconciliation cost contributed by the host subtree at `host` and the new
/// joining node when a tree on the leaves under `grafted` is grafted as the
/// sibling of `x_star`. The grafted tree's internal nodes are not included.
pub fn cost_tr_graft(
    init: &GeneTree,
    host: NodeId,
    grafted: NodeId,
    x_star: NodeId,
) -> Result<Cost, TripletError> {
    graft_cost_checked(init, host, grafted, x_star, false)?
        .ok_or(TripletError::NoLabelCompatibleSolution)
}

/// [`cost_tr_graft`] with host nodes forced to their own labels; `None` when
/// a forced speciation stops being admissible.
pub fn labeled_cost_tr_graft(
    init: &GeneTree,
    host: NodeId,
    grafted: NodeId,
    x_star: NodeId,
) -> Result<Option<Cost>, TripletError> {
    graft_cost_checked(init, host, grafted, x_star, true)
}

fn graft_cost_checked(
    g: &GeneTree,
    host: NodeId,
    grafted: NodeId,
    x_star: NodeId,
    labeled: bool,
) -> Result<Option<Cost>, TripletError> {
    for v in [host, grafted, x_star] {
        if v >= g.len() {
            return Err(TreeError::NodeNotInTree(v).into());
        }
    }
    if !g.is_ancestor(host, x_star) {
        return Err(TripletError::GraftNodeOutsideHost { node: x_star, host });
    }
    if labeled {
        if let Some(u) = g.preorder_from(host).into_iter().find(|&u| !g.is_leaf(u) && g.label(u).is_none()) {
            return Err(TripletError::UnlabeledNode(u));
        }
    }
    // recompute with full cost breakdown
    let s = g.species();
    let r_img = g.image(grafted);
    let on_path = |u: NodeId| g.is_ancestor(u, x_star);
    let mut cost = Cost::ZERO;
    for u in g.preorder_from(host) {
        let Some([l, r]) = g.children(u) else { continue };
        let img = |c: NodeId| if on_path(c) { s.lca(g.image(c), r_img) } else { g.image(c) };
        let (il, ir) = if u != x_star && on_path(u) {
            (img(l), img(r))
        } else {
            (g.image(l), g.image(r))
        };
        let forced = if labeled { g.label(u) } else { None };
        match labeled_local_cost(s, s.lca(il, ir), il, ir, forced) {
            Some(c) => cost += c.cost,
            None => return Ok(None),
        }
    }
    let (a, b) = (g.image(x_star), r_img);
    cost += labeled_local_cost(s, s.lca(a, b), a, b, None).unwrap().cost;
    Ok(Some(cost))
}

struct Trs<'a> {
    d: &'a SubtreeDecomposition,
    species: &'a Arc<SpeciesTree>,
    labeled: bool,
    b: GeneTreeBuilder,
    stats: SolveStats,
}

impl Trs<'_> {
    fn roots_under(&self, x: NodeId) -> Vec<NodeId> {
        self.d
            .roots
            .iter()
            .copied()
            .filter(|&r| self.d.init.is_ancestor(x, r))
            .collect()
    }

    /// Copies the host subtree, grafting `grafted` next to `x_star` (on the
    /// left of the joining node when `grafted_left`).
    fn build_graft(&mut self, host: NodeId, x_star: NodeId, grafted: usize, grafted_left: bool) -> usize {
        let g = &self.d.init;
        let mut ids: HashMap<NodeId, usize> = HashMap::new();
        for u in g.preorder_from(host).into_iter().rev() {
            let label = if self.labeled { g.label(u) } else { None };
            let mut id = match g.children(u) {
                None => self.b.leaf(g.gene(u).unwrap().clone()),
                Some([l, r]) => self.b.join(ids[&l], ids[&r], label),
            };
            if u == x_star {
                id = if grafted_left {
                    self.b.join(grafted, id, None)
                } else {
                    self.b.join(id, grafted, None)
                };
            }
            ids.insert(u, id);
        }
        ids[&host]
    }

    /// Optimal cost and built subtree for the leaves under `x`, or `None`
    /// when no label-compatible choice exists.
    fn solve(&mut self, x: NodeId) -> Result<Option<(u64, usize)>, TripletError> {
        let g = &self.d.init;
        let [xl, xr] = g.children(x).expect("node covering two subtrees is internal");
        let (cl, cr) = (self.d.count(xl), self.d.count(xr));
        if cl == 1 && cr == 1 {
            let roots = self.roots_under(x);
            debug_assert_eq!(roots, vec![xl, xr]);
            let pair = [g.subtree(xl), g.subtree(xr)];
            let opts = SolveOptions {
                labeled: self.labeled,
                core: false,
            };
            let sol = match supertree::solve(&pair, self.species, opts) {
                Ok(sol) => sol,
                Err(SupertreeError::NoLabelCompatibleSolution) => return Ok(None),
                Err(e) => return Err(e.into()),
            };
            self.merge_stats(&sol.stats);
            let id = self.b.copy_subtree(&sol.tree, sol.tree.root());
            return Ok(Some((sol.cost.total(), id)));
        }
        if cl == 1 || cr == 1 {
            let (host, other, grafted_left) = if cl == 1 { (xl, xr, false) } else { (xr, xl, true) };
            let Some((sub, sub_id)) =
                stacker::maybe_grow(128 * 1024, 4 * 1024 * 1024, || self.solve(other))?
            else {
                return Ok(None);
            };
            let Some(best) = graft_scan(&self.d.init, host, self.d.init.image(other), self.labeled)
            else {
                return Ok(None);
            };
            let id = self.build_graft(host, best.x_star, sub_id, grafted_left);
            return Ok(Some((best.total + sub, id)));
        }
        let Some((a, la)) = stacker::maybe_grow(128 * 1024, 4 * 1024 * 1024, || self.solve(xl))? else {
            return Ok(None);
        };
        let Some((b, lb)) = stacker::maybe_grow(128 * 1024, 4 * 1024 * 1024, || self.solve(xr))? else {
            return Ok(None);
        };
        let g = &self.d.init;
        let here = join_cost(self.species, g.image(xl), g.image(xr));
        let id = self.b.join(la, lb, None);
        Ok(Some((a + b + here, id)))
    }

    fn merge_stats(&mut self, s: &SolveStats) {
        self.stats.subproblems += s.subproblems;
        self.stats.memo_cells += s.memo_cells;
        self.stats.candidates += s.candidates;
        self.stats.bipartitions += s.bipartitions;
        self.stats.max_bipartitions = self.stats.max_bipartitions.max(s.max_bipartitions);
    }
}

fn run_trs(
    decomposition: &SubtreeDecomposition,
    species: &Arc<SpeciesTree>,
    labeled: bool,
) -> Result<Solution, TripletError> {
    let start = Instant::now();
    let remapped;
    let d = if Arc::ptr_eq(decomposition.init.species(), species) {
        decomposition
    } else {
        remapped = SubtreeDecomposition::new(
            decomposition.init.map_to_species(species)?,
            decomposition.roots.clone(),
        )?;
        &remapped
    };
    if labeled {
        for &r in &d.roots {
            if let Some(u) = d.init.preorder_from(r).into_iter().find(|&u| !d.init.is_leaf(u) && d.init.label(u).is_none()) {
                return Err(TripletError::UnlabeledNode(u));
            }
        }
    }
    if d.k() < 2 {
        let tree = d.init.clone();
        let cost = if labeled {
            labeled_reconciliation_cost(&tree)
                .map_err(|_| TripletError::NoLabelCompatibleSolution)?
                .cost
        } else {
            reconciliation_cost(&tree).cost
        };
        return Ok(Solution {
            cost,
            tree,
            stats: SolveStats {
                elapsed: start.elapsed(),
                ..Default::default()
            },
        });
    }
    let mut trs = Trs {
        d,
        species,
        labeled,
        b: GeneTreeBuilder::new(),
        stats: SolveStats::default(),
    };
    let Some((total, root)) = trs.solve(d.init.root())? else {
        return Err(TripletError::NoLabelCompatibleSolution);
    };
    let built = trs.b.build(root, species)?;
    // fill unforced nodes with LCA labels
    let lca = lca_reconcile(&built);
    let labels: Vec<_> = (0..built.len())
        .map(|v| if labeled { built.label(v).or(lca.label(v)) } else { lca.label(v) })
        .collect();
    let tree = built.with_labels(&labels);
    let report = labeled_reconciliation_cost(&tree).expect("solver labels are admissible");
    debug_assert_eq!(report.total(), total);
    let mut stats = trs.stats;
    stats.elapsed = start.elapsed();
    Ok(Solution {
        cost: report.cost,
        tree,
        stats,
    })
}

/// Minimum-cost triplet-respecting tree displaying every subtree of the
/// decomposition.
pub fn min_trs(
    decomposition: &SubtreeDecomposition,
    species: &Arc<SpeciesTree>,
) -> Result<Solution, TripletError> {
    run_trs(decomposition, species, false)
}

/// [`min_trs`] restricted to trees label-compatible with the (labeled)
/// subtrees.
pub fn min_ltrs(
    decomposition: &SubtreeDecomposition,
    species: &Arc<SpeciesTree>,
) -> Result<Solution, TripletError> {
    run_trs(decomposition, species, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Trs,
    Ltrs,
    Sgt,
    Lsgt,
}

impl Mode {
    pub fn is_labeled(self) -> bool {
        matches!(self, Mode::Ltrs | Mode::Lsgt)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Trs => "trs",
            Mode::Ltrs => "ltrs",
            Mode::Sgt => "sgt",
            Mode::Lsgt => "lsgt",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trs" => Ok(Mode::Trs),
            "ltrs" => Ok(Mode::Ltrs),
            "sgt" => Ok(Mode::Sgt),
            "lsgt" => Ok(Mode::Lsgt),
            _ => Err(format!("unknown mode '{s}' (expected trs, ltrs, sgt or lsgt)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorrectionReport {
    pub name: Option<String>,
    pub n_leaves: usize,
    /// Number of subtrees recombined (1 when the tree was left unchanged).
    pub k: usize,
    pub original_cost: Cost,
    pub corrected: GeneTree,
    pub corrected_cost: Cost,
    pub high_dups_before: usize,
    pub high_dups_after: usize,
    pub elapsed: Duration,
    /// Set when the tree was returned unchanged.
    pub notice: Option<String>,
}

impl CorrectionReport {
    pub fn reduction(&self) -> i64 {
        self.original_cost.total() as i64 - self.corrected_cost.total() as i64
    }

    pub fn reduction_pct(&self) -> f64 {
        match self.original_cost.total() {
            0 => 0.0,
            orig => self.reduction() as f64 / orig as f64 * 100.0,
        }
    }
}

/// Recombines the subtrees below the highest duplications of `g`. Input
/// labels are used when every internal node has one; otherwise the LCA
/// labeling decides where to cut.
pub fn correct(
    g: &GeneTree,
    species: &Arc<SpeciesTree>,
    mode: Mode,
) -> Result<CorrectionReport, TripletError> {
    let start = Instant::now();
    let g = if Arc::ptr_eq(g.species(), species) {
        g.clone()
    } else {
        g.map_to_species(species)?
    };
    let labeled = if g.is_labeled() { g.clone() } else { lca_reconcile(&g) };
    let original_cost = if mode.is_labeled() {
        labeled_reconciliation_cost(&labeled)
            .map_err(|_| TripletError::NoLabelCompatibleSolution)?
            .cost
    } else {
        reconciliation_cost(&g).cost
    };
    let before = highest_duplications(&g);
    let unchanged = |notice: &str| CorrectionReport {
        name: g.name().map(str::to_string),
        n_leaves: g.leaves().len(),
        k: 1,
        original_cost,
        corrected: labeled.clone(),
        corrected_cost: original_cost,
        high_dups_before: before,
        high_dups_after: before,
        elapsed: start.elapsed(),
        notice: Some(notice.to_string()),
    };
    if labeled.label(labeled.root()) != Some(EventLabel::Dup) {
        return Ok(unchanged("root is not a duplication; tree left unchanged"));
    }
    let d = decompose_at_highest_speciations(&labeled)?;
    let sol = match mode {
        Mode::Trs => min_trs(&d, species)?,
        Mode::Ltrs => min_ltrs(&d, species)?,
        Mode::Sgt => supertree::min_sgt(&d.subtrees(), species)?,
        Mode::Lsgt => supertree::min_lsgt(&d.subtrees(), species)?,
    };
    let corrected = sol.tree.with_name(g.name().map(str::to_string));
    Ok(CorrectionReport {
        name: g.name().map(str::to_string),
        n_leaves: g.leaves().len(),
        k: d.k(),
        original_cost,
        high_dups_after: highest_duplications(&corrected),
        corrected,
        corrected_cost: sol.cost,
        high_dups_before: before,
        elapsed: start.elapsed(),
        notice: None,
    })
}
