//! Brute-force reference solvers for small instances.
//!
//! Everything here enumerates all rooted binary topologies on the gene union
//! and filters them. Costs are computed by counting lost lineages along the
//! species-tree path of each gene-tree edge, independently of the local-cost
//! formulas used by the solvers.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::reconciliation::Cost;
use crate::tree::{EventLabel, Gene, GeneTree, GeneTreeBuilder, NodeId, SpeciesTree, TreeError};

/// Hard cap on the number of leaves handled by the oracle.
pub const MAX_ORACLE_LEAVES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("{n} leaves exceed the oracle cap of {max}")]
    TooManyLeaves { n: usize, max: usize },
    #[error("no leaves to enumerate")]
    NoLeaves,
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("gene '{gene}' is assigned to species '{first}' in one tree and '{second}' in another")]
    SharedGeneSpeciesMismatch {
        gene: String,
        first: String,
        second: String,
    },
}

/// A rooted binary topology over leaves `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    children: Vec<Option<[usize; 2]>>,
    leaf: Vec<usize>,
    root: usize,
}

impl Topology {
    pub fn n_leaves(&self) -> usize {
        self.children.iter().filter(|c| c.is_none()).count()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn children(&self, v: usize) -> Option<[usize; 2]> {
        self.children[v]
    }

    /// Leaf index carried by node `v` (meaningless for internal nodes).
    pub fn leaf_index(&self, v: usize) -> usize {
        self.leaf[v]
    }

    fn postorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.children.len());
        let mut stack = vec![(self.root, false)];
        while let Some((v, done)) = stack.pop() {
            match (self.children[v], done) {
                (Some([l, r]), false) => {
                    stack.push((v, true));
                    stack.push((r, false));
                    stack.push((l, false));
                }
                _ => out.push(v),
            }
        }
        out
    }

    pub fn to_gene_tree(
        &self,
        genes: &[Gene],
        species: &Arc<SpeciesTree>,
        labels: Option<&[Option<EventLabel>]>,
    ) -> Result<GeneTree, TreeError> {
        let mut b = GeneTreeBuilder::new();
        let mut ids = vec![0; self.children.len()];
        for v in self.postorder() {
            ids[v] = match self.children[v] {
                None => b.leaf(genes[self.leaf[v]].clone()),
                Some([l, r]) => b.join(ids[l], ids[r], labels.and_then(|ls| ls[v])),
            };
        }
        b.build(ids[self.root], species)
    }
}

/// All rooted binary topologies on `n` leaves, in leaf-insertion order: leaf
/// `i` is inserted above every node of each topology on leaves `0..i`.
pub fn enumerate_topology_shapes(n: usize) -> Result<Vec<Topology>, OracleError> {
    if n == 0 {
        return Err(OracleError::NoLeaves);
    }
    if n > MAX_ORACLE_LEAVES {
        return Err(OracleError::TooManyLeaves {
            n,
            max: MAX_ORACLE_LEAVES,
        });
    }
    // parent-array form during construction
    #[derive(Clone)]
    struct Partial {
        parent: Vec<Option<usize>>,
        children: Vec<Option<[usize; 2]>>,
        leaf: Vec<usize>,
        root: usize,
    }
    let mut layer = vec![Partial {
        parent: vec![None],
        children: vec![None],
        leaf: vec![0],
        root: 0,
    }];
    for i in 1..n {
        let mut next = Vec::with_capacity(layer.len() * (2 * i - 1));
        for t in &layer {
            for j in 0..t.children.len() {
                let mut u = t.clone();
                let leaf = u.children.len();
                u.children.push(None);
                u.parent.push(None);
                u.leaf.push(i);
                let p = u.children.len();
                u.children.push(Some([j, leaf]));
                u.parent.push(t.parent[j]);
                u.leaf.push(usize::MAX);
                match t.parent[j] {
                    None => u.root = p,
                    Some(q) => {
                        let ch = u.children[q].as_mut().unwrap();
                        if ch[0] == j {
                            ch[0] = p;
                        } else {
                            ch[1] = p;
                        }
                    }
                }
                u.parent[j] = Some(p);
                u.parent[leaf] = Some(p);
                next.push(u);
            }
        }
        layer = next;
    }
    Ok(layer
        .into_iter()
        .map(|p| Topology {
            children: p.children,
            leaf: p.leaf,
            root: p.root,
        })
        .collect())
}

/// Every rooted binary gene tree on `genes`.
pub fn enumerate_topologies(
    genes: &[Gene],
    species: &Arc<SpeciesTree>,
) -> Result<Vec<GeneTree>, OracleError> {
    enumerate_topology_shapes(genes.len())?
        .iter()
        .map(|t| t.to_gene_tree(genes, species, None).map_err(OracleError::from))
        .collect()
}

/// Constraint set applied by [`brute_min`].
#[derive(Debug, Clone, Copy)]
pub enum Constraint<'a> {
    /// Display every input tree.
    Display,
    /// Display every input tree and honor its event labels.
    DisplayLabels,
    /// Display every input tree and keep the initial tree's topology on every
    /// triple drawn from three distinct input trees.
    DisplayTriplets(&'a GeneTree),
    /// Labels and triplets together.
    All(&'a GeneTree),
}

#[derive(Debug, Clone)]
pub enum OracleOutcome {
    Feasible { cost: Cost, tree: GeneTree },
    Infeasible,
}

impl OracleOutcome {
    pub fn cost(&self) -> Option<Cost> {
        match self {
            OracleOutcome::Feasible { cost, .. } => Some(*cost),
            OracleOutcome::Infeasible => None,
        }
    }
}

fn naive_lca(s: &SpeciesTree, mut a: NodeId, mut b: NodeId) -> NodeId {
    while s.depth(a) > s.depth(b) {
        a = s.parent(a).unwrap();
    }
    while s.depth(b) > s.depth(a) {
        b = s.parent(b).unwrap();
    }
    while a != b {
        a = s.parent(a).unwrap();
        b = s.parent(b).unwrap();
    }
    a
}

/// Cost of embedding one edge whose endpoints map to `p` and `c`: a lost
/// lineage for each species node skipped, plus the lineage leaving a
/// duplication when the child already sits lower.
fn edge_losses(s: &SpeciesTree, p: NodeId, c: NodeId, dup: bool) -> u64 {
    let d = (s.depth(c) - s.depth(p)) as u64;
    if dup {
        d
    } else {
        d.saturating_sub(1)
    }
}

/// Reconciliation cost from explicit edge embeddings. With `use_labels` the
/// tree's own labels are used (every internal node must carry one); returns
/// `None` if a speciation sits on a node whose children are not separated.
pub fn embedding_cost(g: &GeneTree, use_labels: bool) -> Option<Cost> {
    let s = g.species();
    let mut image = vec![0; g.len()];
    let mut cost = Cost::ZERO;
    for v in g.postorder() {
        match g.children(v) {
            None => image[v] = s.leaf(&g.gene(v).unwrap().species).unwrap(),
            Some([l, r]) => {
                let p = naive_lca(s, image[l], image[r]);
                image[v] = p;
                let separated = p != image[l] && p != image[r];
                let label = if use_labels {
                    g.label(v)?
                } else if separated {
                    EventLabel::Spec
                } else {
                    EventLabel::Dup
                };
                if label == EventLabel::Spec && !separated {
                    return None;
                }
                let dup = label == EventLabel::Dup;
                cost.duplications += u64::from(dup);
                cost.losses += edge_losses(s, p, image[l], dup) + edge_losses(s, p, image[r], dup);
            }
        }
    }
    Some(cost)
}

/// ab|c as gene indices.
type Triple = (usize, usize, usize);

fn tree_triples(t: &GeneTree, index: &HashMap<&str, usize>, out: &mut Vec<Triple>) {
    let leaves = t.leaves();
    for (i, &a) in leaves.iter().enumerate() {
        for (j, &b) in leaves.iter().enumerate().skip(i + 1) {
            for &c in leaves.iter().skip(j + 1) {
                out.push(resolve(t, index, a, b, c));
            }
        }
    }
}

fn resolve(t: &GeneTree, index: &HashMap<&str, usize>, a: NodeId, b: NodeId, c: NodeId) -> Triple {
    let id = |v: NodeId| index[t.gene(v).unwrap().name.as_str()];
    let (ab, ac, bc) = (t.lca(a, b), t.lca(a, c), t.lca(b, c));
    let (dab, dac, dbc) = (t.depth(ab), t.depth(ac), t.depth(bc));
    if dab > dac {
        (id(a), id(b), id(c))
    } else if dac > dab {
        (id(a), id(c), id(b))
    } else {
        debug_assert!(dbc > dab);
        (id(b), id(c), id(a))
    }
}

/// Minimum-cost tree on the union of `trees`' genes among those satisfying
/// `constraint`. Ties go to the first topology in enumeration order.
pub fn brute_min(
    trees: &[GeneTree],
    species: &Arc<SpeciesTree>,
    constraint: Constraint<'_>,
) -> Result<OracleOutcome, OracleError> {
    let mut genes: Vec<Gene> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for t in trees {
        for v in t.leaves() {
            let g = t.gene(v).unwrap();
            if let Some(&i) = index.get(g.name.as_str()) {
                if genes[i].species != g.species {
                    return Err(OracleError::SharedGeneSpeciesMismatch {
                        gene: g.name.clone(),
                        first: genes[i].species.clone(),
                        second: g.species.clone(),
                    });
                }
            } else {
                index.insert(g.name.as_str(), genes.len());
                genes.push(g.clone());
            }
        }
    }
    let n = genes.len();
    if n > MAX_ORACLE_LEAVES {
        return Err(OracleError::TooManyLeaves {
            n,
            max: MAX_ORACLE_LEAVES,
        });
    }
    let leaf_image: Vec<NodeId> = genes
        .iter()
        .map(|g| {
            species.leaf(&g.species).ok_or_else(|| TreeError::UnknownSpecies {
                gene: g.name.clone(),
                species: g.species.clone(),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut triples = Vec::new();
    for t in trees {
        tree_triples(t, &index, &mut triples);
    }
    let (labels, init) = match constraint {
        Constraint::Display => (false, None),
        Constraint::DisplayLabels => (true, None),
        Constraint::DisplayTriplets(g) => (false, Some(g)),
        Constraint::All(g) => (true, Some(g)),
    };
    if let Some(init) = init {
        let owner: HashMap<&str, usize> = trees
            .iter()
            .enumerate()
            .flat_map(|(i, t)| t.gene_names().into_iter().map(move |g| (g, i)))
            .collect();
        let leaves = init.leaves();
        for (i, &a) in leaves.iter().enumerate() {
            for (j, &b) in leaves.iter().enumerate().skip(i + 1) {
                for &c in leaves.iter().skip(j + 1) {
                    let o = |v: NodeId| owner.get(init.gene(v).unwrap().name.as_str()).copied();
                    let (oa, ob, oc) = (o(a), o(b), o(c));
                    if oa.is_some() && ob.is_some() && oc.is_some() && oa != ob && oa != oc && ob != oc
                    {
                        triples.push(resolve(init, &index, a, b, c));
                    }
                }
            }
        }
    }
    // (gene mask, label) per input internal node
    let mut forced: Vec<(u16, EventLabel)> = Vec::new();
    if labels {
        for (ti, t) in trees.iter().enumerate() {
            let mut mask = vec![0u16; t.len()];
            for v in t.postorder() {
                match t.children(v) {
                    None => mask[v] = 1 << index[t.gene(v).unwrap().name.as_str()],
                    Some([l, r]) => {
                        mask[v] = mask[l] | mask[r];
                        let label = t.label(v).ok_or_else(|| {
                            TreeError::BadEventLabel(format!("missing label in tree {ti}"))
                        })?;
                        forced.push((mask[v], label));
                    }
                }
            }
        }
    }

    let mut best: Option<(Cost, Topology, Vec<Option<EventLabel>>)> = None;
    let shapes = if n == 0 {
        Vec::new()
    } else {
        enumerate_topology_shapes(n)?
    };
    for topo in shapes {
        let m = topo.children.len();
        let mut mask = vec![0u16; m];
        let mut depth = vec![0u32; m];
        let mut image = vec![0usize; m];
        let mut lca = vec![[0usize; MAX_ORACLE_LEAVES]; MAX_ORACLE_LEAVES];
        let post = topo.postorder();
        for &v in post.iter().rev() {
            if let Some([l, r]) = topo.children[v] {
                depth[l] = depth[v] + 1;
                depth[r] = depth[v] + 1;
            }
        }
        for &v in &post {
            match topo.children[v] {
                None => {
                    mask[v] = 1 << topo.leaf[v];
                    image[v] = leaf_image[topo.leaf[v]];
                }
                Some([l, r]) => {
                    mask[v] = mask[l] | mask[r];
                    image[v] = naive_lca(species, image[l], image[r]);
                    for a in bits(mask[l]) {
                        for b in bits(mask[r]) {
                            lca[a][b] = v;
                            lca[b][a] = v;
                        }
                    }
                }
            }
        }
        let ok = triples
            .iter()
            .all(|&(a, b, c)| depth[lca[a][b]] > depth[lca[a][c]]);
        if !ok {
            continue;
        }
        let mut label: Vec<Option<EventLabel>> = vec![None; m];
        let mut feasible = true;
        for &(fm, fl) in &forced {
            // lca of the gene set: deepest node whose mask covers it
            let y = post
                .iter()
                .copied()
                .find(|&v| mask[v] & fm == fm)
                .unwrap();
            match label[y] {
                Some(l) if l != fl => {
                    feasible = false;
                    break;
                }
                _ => label[y] = Some(fl),
            }
        }
        if !feasible {
            continue;
        }
        let mut cost = Cost::ZERO;
        for &v in &post {
            let Some([l, r]) = topo.children[v] else { continue };
            let p = image[v];
            let separated = p != image[l] && p != image[r];
            let ev = match label[v] {
                Some(EventLabel::Spec) if !separated => {
                    feasible = false;
                    break;
                }
                Some(ev) => ev,
                None if separated => EventLabel::Spec,
                None => EventLabel::Dup,
            };
            label[v] = Some(ev);
            let dup = ev == EventLabel::Dup;
            cost.duplications += u64::from(dup);
            cost.losses += edge_losses(species, p, image[l], dup) + edge_losses(species, p, image[r], dup);
        }
        if !feasible {
            continue;
        }
        if best.as_ref().map_or(true, |b| cost.total() < b.0.total()) {
            best = Some((cost, topo, label));
        }
    }
    Ok(match best {
        None => OracleOutcome::Infeasible,
        Some((cost, topo, label)) => OracleOutcome::Feasible {
            cost,
            tree: topo.to_gene_tree(&genes, species, Some(&label))?,
        },
    })
}

fn bits(mut m: u16) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::reconciliation::{labeled_reconciliation_cost, lca_reconcile, reconciliation_cost};

    fn species() -> Arc<SpeciesTree> {
        Arc::new(SpeciesTree::parse("((((s,b),h),m),r);").unwrap())
    }

    #[test]
    fn double_factorial_counts() {
        for (n, want) in [(1, 1), (2, 1), (3, 3), (4, 15), (5, 105), (6, 945), (7, 10395)] {
            let shapes = enumerate_topology_shapes(n).unwrap();
            assert_eq!(shapes.len(), want, "n = {n}");
        }
        assert!(matches!(
            enumerate_topology_shapes(9),
            Err(OracleError::TooManyLeaves { n: 9, .. })
        ));
    }

    #[test]
    fn topologies_are_distinct() {
        let s = species();
        let genes: Vec<Gene> = ["a__s", "b__b", "c__h", "d__m", "e__r"]
            .iter()
            .map(|n| Gene::new(*n, &n[3..]))
            .collect();
        let trees = enumerate_topologies(&genes, &s).unwrap();
        let set: HashSet<String> = trees.iter().map(|t| t.canonical()).collect();
        assert_eq!(set.len(), 105);
    }

    #[test]
    fn embedding_matches_local_costs() {
        let s = species();
        let srcs = [
            "(((s1__s,h1__h),(s2__s,m1__m)),(r1__r,h2__h));",
            "((h1__h,h2__h),((s1__s,b1__b),r1__r));",
            "(((s1__s,s2__s),s3__s),r1__r);",
        ];
        for src in srcs {
            let g = GeneTree::parse(src, &s).unwrap();
            assert_eq!(embedding_cost(&g, false), Some(reconciliation_cost(&g).cost));
            let l = lca_reconcile(&g);
            // force every node to Dup and compare with the labeled cost
            let all_dup = l.with_labels(
                &l.labels()
                    .iter()
                    .map(|x| x.map(|_| EventLabel::Dup))
                    .collect::<Vec<_>>(),
            );
            assert_eq!(
                embedding_cost(&all_dup, true),
                Some(labeled_reconciliation_cost(&all_dup).unwrap().cost)
            );
        }
    }

    #[test]
    fn single_tree_display_only() {
        let s = species();
        let g = GeneTree::parse("((s1__s,h1__h),(b1__b,m1__m));", &s).unwrap();
        let out = brute_min(&[g.clone()], &s, Constraint::Display).unwrap();
        assert_eq!(out.cost(), Some(reconciliation_cost(&g).cost));
    }

    #[test]
    fn inconsistent_pair_is_infeasible() {
        let s = species();
        let a = GeneTree::parse("((s1__s,b1__b),h1__h);", &s).unwrap();
        let b = GeneTree::parse("((s1__s,h1__h),b1__b);", &s).unwrap();
        assert!(matches!(
            brute_min(&[a, b], &s, Constraint::Display).unwrap(),
            OracleOutcome::Infeasible
        ));
    }

    #[test]
    fn conflicting_forced_labels_are_infeasible() {
        let s = species();
        // both cherries must have their lca at the root of any 2-leaf tree
        let a = GeneTree::parse("(s1__s,b1__b)[&&NHX:Ev=Dup];", &s).unwrap();
        let b = GeneTree::parse("(s1__s,b1__b)[&&NHX:Ev=Spec];", &s).unwrap();
        assert!(matches!(
            brute_min(&[a, b], &s, Constraint::DisplayLabels).unwrap(),
            OracleOutcome::Infeasible
        ));
    }
}
