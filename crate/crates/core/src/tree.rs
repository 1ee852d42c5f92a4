//! Rooted binary species and gene trees over immutable arenas.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::lca::LcaIndex;
use crate::newick::{self, NewickError, RawNode, RawTree};

pub type NodeId = usize;

/// Event carried by an internal gene-tree node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventLabel {
    Dup,
    Spec,
}

impl fmt::Display for EventLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventLabel::Dup => "Dup",
            EventLabel::Spec => "Spec",
        })
    }
}

impl FromStr for EventLabel {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Dup" | "D" | "dup" => Ok(EventLabel::Dup),
            "Spec" | "S" | "spec" => Ok(EventLabel::Spec),
            _ => Err(TreeError::BadEventLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error(transparent)]
    Newick(#[from] NewickError),
    #[error("node '{label}' has {children} children; only binary trees are supported")]
    NonBinary { label: String, children: usize },
    #[error("species '{0}' appears more than once in the species tree")]
    DuplicateSpecies(String),
    #[error("gene '{0}' has no species (no S= tag and no '__' suffix)")]
    MissingSpecies(String),
    #[error("gene '{gene}' maps to species '{species}' which is not in the species tree")]
    UnknownSpecies { gene: String, species: String },
    #[error("unknown event label '{0}'")]
    BadEventLabel(String),
    #[error("leaf '{0}' carries an event label")]
    LabelOnLeaf(String),
    #[error("node {0} is not in the tree")]
    NodeNotInTree(NodeId),
    #[error("node {anc} is not an ancestor of node {desc}")]
    NotAncestor { anc: NodeId, desc: NodeId },
    #[error("restriction to an empty leaf set")]
    EmptyRestriction,
    #[error("leaf '{0}' is not present in the tree")]
    LeafNotPresent(String),
    #[error("lca of an empty node set")]
    EmptyNodeSet,
}

fn children_lists(children: &[Option<[NodeId; 2]>]) -> Vec<Vec<usize>> {
    children
        .iter()
        .map(|c| c.map(|[l, r]| vec![l, r]).unwrap_or_default())
        .collect()
}

fn binary_children(raw: &RawTree, v: usize) -> Result<Option<[usize; 2]>, TreeError> {
    match raw.nodes[v].children.as_slice() {
        [] => Ok(None),
        &[l, r] => Ok(Some([l, r])),
        other => Err(TreeError::NonBinary {
            label: raw.nodes[v].label.clone(),
            children: other.len(),
        }),
    }
}

#[derive(Debug, Clone)]
pub struct SpeciesTree {
    names: Vec<String>,
    parent: Vec<Option<NodeId>>,
    children: Vec<Option<[NodeId; 2]>>,
    by_name: HashMap<String, NodeId>,
    lca: LcaIndex,
    root: NodeId,
}

impl SpeciesTree {
    pub fn from_raw(raw: &RawTree) -> Result<Self, TreeError> {
        let order = raw.preorder();
        let mut id = vec![usize::MAX; raw.nodes.len()];
        for (i, &v) in order.iter().enumerate() {
            id[v] = i;
        }
        let n = order.len();
        let mut names = Vec::with_capacity(n);
        let mut parent = vec![None; n];
        let mut children = vec![None; n];
        let mut by_name = HashMap::new();
        for (i, &v) in order.iter().enumerate() {
            names.push(raw.nodes[v].label.clone());
            if let Some([l, r]) = binary_children(raw, v)? {
                children[i] = Some([id[l], id[r]]);
                parent[id[l]] = Some(i);
                parent[id[r]] = Some(i);
            } else if by_name.insert(raw.nodes[v].label.clone(), i).is_some() {
                return Err(TreeError::DuplicateSpecies(raw.nodes[v].label.clone()));
            }
        }
        let lca = LcaIndex::new(&children_lists(&children), 0);
        Ok(SpeciesTree {
            names,
            parent,
            children,
            by_name,
            lca,
            root: 0,
        })
    }

    pub fn parse(src: &str) -> Result<Self, TreeError> {
        Self::from_raw(&newick::parse_newick(src)?)
    }

    pub fn to_raw(&self) -> RawTree {
        let mut raw = RawTree {
            nodes: Vec::with_capacity(self.len()),
            root: self.root,
        };
        for v in 0..self.len() {
            raw.nodes.push(RawNode {
                label: self.names[v].clone(),
                children: self.children[v].map(|c| c.to_vec()).unwrap_or_default(),
                annotations: Vec::new(),
            });
        }
        raw
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.names[v]
    }

    pub fn leaf(&self, species: &str) -> Option<NodeId> {
        self.by_name.get(species).copied()
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.len()).filter(|&v| self.children[v].is_none())
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent[v]
    }

    pub fn children(&self, v: NodeId) -> Option<[NodeId; 2]> {
        self.children[v]
    }

    pub fn is_leaf(&self, v: NodeId) -> bool {
        self.children[v].is_none()
    }

    pub fn depth(&self, v: NodeId) -> u32 {
        self.lca.depth(v)
    }

    pub fn lca(&self, a: NodeId, b: NodeId) -> NodeId {
        self.lca.lca(a, b)
    }

    pub fn lca_of(&self, nodes: impl IntoIterator<Item = NodeId>) -> Result<NodeId, TreeError> {
        let mut it = nodes.into_iter();
        let first = it.next().ok_or(TreeError::EmptyNodeSet)?;
        let mut acc = self.check(first)?;
        for v in it {
            acc = self.lca(acc, self.check(v)?);
        }
        Ok(acc)
    }

    fn check(&self, v: NodeId) -> Result<NodeId, TreeError> {
        if v < self.len() {
            Ok(v)
        } else {
            Err(TreeError::NodeNotInTree(v))
        }
    }

    pub fn is_ancestor(&self, anc: NodeId, desc: NodeId) -> bool {
        self.lca.is_ancestor(anc, desc)
    }

    /// Neither node is an ancestor of the other.
    pub fn separated(&self, a: NodeId, b: NodeId) -> bool {
        let l = self.lca(a, b);
        l != a && l != b
    }

    /// Number of nodes strictly between ancestor `x` and descendant `y`.
    pub fn inter(&self, x: NodeId, y: NodeId) -> Result<u32, TreeError> {
        self.check(x)?;
        self.check(y)?;
        if !self.is_ancestor(x, y) {
            return Err(TreeError::NotAncestor { anc: x, desc: y });
        }
        Ok((self.depth(y) - self.depth(x)).saturating_sub(1))
    }

    /// `inter` for callers that already know `x` is an ancestor of `y`.
    pub(crate) fn inter_unchecked(&self, x: NodeId, y: NodeId) -> u32 {
        (self.depth(y) - self.depth(x)).saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Gene {
    pub name: String,
    pub species: String,
}

impl Gene {
    pub fn new(name: impl Into<String>, species: impl Into<String>) -> Self {
        Gene {
            name: name.into(),
            species: species.into(),
        }
    }

    /// Species from an `S` annotation, else from the suffix after the last `__`.
    fn from_raw(node: &RawNode) -> Result<Self, TreeError> {
        let species = match node.annotation("S") {
            Some(s) => s.to_string(),
            None => match node.label.rsplit_once("__") {
                Some((_, s)) if !s.is_empty() => s.to_string(),
                _ => return Err(TreeError::MissingSpecies(node.label.clone())),
            },
        };
        Ok(Gene::new(node.label.clone(), species))
    }
}

#[derive(Debug, Clone)]
struct GeneNode {
    parent: Option<NodeId>,
    children: Option<[NodeId; 2]>,
    gene: Option<Gene>,
    label: Option<EventLabel>,
    /// s(x): lca in the species tree of the species under x.
    image: NodeId,
    leaves: u32,
}

/// Rooted binary gene tree, mapped into a species tree.
#[derive(Debug, Clone)]
pub struct GeneTree {
    name: Option<String>,
    nodes: Vec<GeneNode>,
    root: NodeId,
    lca: LcaIndex,
    by_gene: HashMap<String, NodeId>,
    species: Arc<SpeciesTree>,
}

impl GeneTree {
    pub fn from_raw(raw: &RawTree, species: &Arc<SpeciesTree>) -> Result<Self, TreeError> {
        let mut b = GeneTreeBuilder::new();
        fn rec(raw: &RawTree, v: usize, b: &mut GeneTreeBuilder) -> Result<usize, TreeError> {
            let node = &raw.nodes[v];
            let label = node
                .annotation("Ev")
                .map(EventLabel::from_str)
                .transpose()?;
            match binary_children(raw, v)? {
                None => {
                    if label.is_some() {
                        return Err(TreeError::LabelOnLeaf(node.label.clone()));
                    }
                    Ok(b.leaf(Gene::from_raw(node)?))
                }
                Some([l, r]) => {
                    let (l, r) = stacker::maybe_grow(64 * 1024, 1024 * 1024, || {
                        Ok::<_, TreeError>((rec(raw, l, b)?, rec(raw, r, b)?))
                    })?;
                    Ok(b.join(l, r, label))
                }
            }
        }
        let root = rec(raw, raw.root, &mut b)?;
        let mut tree = b.build(root, species)?;
        let root_label = &raw.nodes[raw.root].label;
        if !raw.nodes[raw.root].is_leaf() && !root_label.is_empty() {
            tree.name = Some(root_label.clone());
        }
        Ok(tree)
    }

    pub fn parse(src: &str, species: &Arc<SpeciesTree>) -> Result<Self, TreeError> {
        Self::from_raw(&newick::parse_newick(src)?, species)
    }

    /// NHX form: leaves carry `S=`, labeled internal nodes carry `Ev=`.
    pub fn to_raw(&self) -> RawTree {
        let mut raw = RawTree {
            nodes: Vec::with_capacity(self.len()),
            root: self.root,
        };
        for v in 0..self.len() {
            let n = &self.nodes[v];
            let mut node = RawNode {
                children: n.children.map(|c| c.to_vec()).unwrap_or_default(),
                ..Default::default()
            };
            if let Some(g) = &n.gene {
                node.label = g.name.clone();
                node.annotations.push(("S".into(), g.species.clone()));
            } else if let Some(ev) = n.label {
                node.annotations.push(("Ev".into(), ev.to_string()));
            }
            raw.nodes.push(node);
        }
        if let (Some(name), false) = (&self.name, self.is_leaf(self.root)) {
            raw.nodes[self.root].label = name.clone();
        }
        raw
    }

    pub fn to_newick(&self) -> String {
        newick::serialize_newick(&self.to_raw())
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn with_name(mut self, name: Option<String>) -> Self {
        self.name = name;
        self
    }

    pub fn species(&self) -> &Arc<SpeciesTree> {
        &self.species
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.nodes[v].parent
    }

    pub fn children(&self, v: NodeId) -> Option<[NodeId; 2]> {
        self.nodes[v].children
    }

    pub fn is_leaf(&self, v: NodeId) -> bool {
        self.nodes[v].children.is_none()
    }

    pub fn gene(&self, v: NodeId) -> Option<&Gene> {
        self.nodes[v].gene.as_ref()
    }

    pub fn label(&self, v: NodeId) -> Option<EventLabel> {
        self.nodes[v].label
    }

    /// s(x), the cached species image.
    pub fn image(&self, v: NodeId) -> NodeId {
        self.nodes[v].image
    }

    pub fn depth(&self, v: NodeId) -> u32 {
        self.lca.depth(v)
    }

    pub fn leaf_count(&self, v: NodeId) -> usize {
        self.nodes[v].leaves as usize
    }

    pub fn leaf_by_name(&self, gene: &str) -> Option<NodeId> {
        self.by_gene.get(gene).copied()
    }

    pub fn lca(&self, a: NodeId, b: NodeId) -> NodeId {
        self.lca.lca(a, b)
    }

    pub fn lca_of(&self, nodes: impl IntoIterator<Item = NodeId>) -> Result<NodeId, TreeError> {
        let mut it = nodes.into_iter();
        let first = it.next().ok_or(TreeError::EmptyNodeSet)?;
        let check = |v: NodeId| {
            if v < self.len() {
                Ok(v)
            } else {
                Err(TreeError::NodeNotInTree(v))
            }
        };
        let mut acc = check(first)?;
        for v in it {
            acc = self.lca(acc, check(v)?);
        }
        Ok(acc)
    }

    pub fn is_ancestor(&self, anc: NodeId, desc: NodeId) -> bool {
        self.lca.is_ancestor(anc, desc)
    }

    pub fn preorder(&self) -> Vec<NodeId> {
        self.preorder_from(self.root)
    }

    pub fn preorder_from(&self, v: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![v];
        while let Some(v) = stack.pop() {
            out.push(v);
            if let Some([l, r]) = self.children(v) {
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }

    pub fn postorder(&self) -> Vec<NodeId> {
        let mut out = self.preorder();
        // reversed pre-order with children swapped is a valid post-order
        out.reverse();
        out
    }

    /// Leaves under `v`, left to right.
    pub fn leaves_under(&self, v: NodeId) -> Vec<NodeId> {
        self.preorder_from(v)
            .into_iter()
            .filter(|&u| self.is_leaf(u))
            .collect()
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        self.leaves_under(self.root)
    }

    pub fn gene_names(&self) -> Vec<&str> {
        self.leaves()
            .into_iter()
            .map(|v| self.nodes[v].gene.as_ref().unwrap().name.as_str())
            .collect()
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.len()).filter(|&v| !self.is_leaf(v))
    }

    /// Every internal node carries an event label.
    pub fn is_labeled(&self) -> bool {
        self.internal_nodes().all(|v| self.nodes[v].label.is_some())
    }

    /// Replaces event labels; `labels[v]` is ignored for leaves.
    pub fn with_labels(&self, labels: &[Option<EventLabel>]) -> GeneTree {
        let mut t = self.clone();
        for (v, node) in t.nodes.iter_mut().enumerate() {
            node.label = if node.children.is_some() { labels[v] } else { None };
        }
        t
    }

    pub fn labels(&self) -> Vec<Option<EventLabel>> {
        self.nodes.iter().map(|n| n.label).collect()
    }

    pub fn without_labels(&self) -> GeneTree {
        self.with_labels(&vec![None; self.len()])
    }

    /// Copy with the two children of `v` exchanged.
    pub fn swap_children(&self, v: NodeId) -> GeneTree {
        let mut t = self.clone();
        if let Some([l, r]) = t.nodes[v].children {
            t.nodes[v].children = Some([r, l]);
        }
        t.lca = LcaIndex::new(&children_lists(&t.children_vec()), t.root);
        t
    }

    fn children_vec(&self) -> Vec<Option<[NodeId; 2]>> {
        self.nodes.iter().map(|n| n.children).collect()
    }

    /// T|L': the subtree at lca(L') with other leaves pruned and unary nodes
    /// suppressed. Event labels of surviving nodes are kept.
    pub fn restrict(&self, leaves: &[NodeId]) -> Result<GeneTree, TreeError> {
        if leaves.is_empty() {
            return Err(TreeError::EmptyRestriction);
        }
        let mut keep = vec![false; self.len()];
        for &v in leaves {
            if v >= self.len() {
                return Err(TreeError::NodeNotInTree(v));
            }
            keep[v] = self.is_leaf(v);
        }
        let mut b = GeneTreeBuilder::new();
        let mut image: Vec<Option<usize>> = vec![None; self.len()];
        for v in self.postorder() {
            image[v] = match self.children(v) {
                None => keep[v].then(|| b.leaf(self.nodes[v].gene.clone().unwrap())),
                Some([l, r]) => match (image[l], image[r]) {
                    (Some(a), Some(c)) => Some(b.join(a, c, self.nodes[v].label)),
                    (Some(a), None) | (None, Some(a)) => Some(a),
                    (None, None) => None,
                },
            };
        }
        let root = image[self.root].ok_or(TreeError::EmptyRestriction)?;
        b.build(root, &self.species)
    }

    pub fn restrict_to_names<S: AsRef<str>>(&self, genes: &[S]) -> Result<GeneTree, TreeError> {
        let ids = genes
            .iter()
            .map(|g| {
                self.leaf_by_name(g.as_ref())
                    .ok_or_else(|| TreeError::LeafNotPresent(g.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.restrict(&ids)
    }

    /// The complete subtree rooted at `v` as a standalone tree.
    pub fn subtree(&self, v: NodeId) -> GeneTree {
        self.restrict(&self.leaves_under(v))
            .expect("a complete subtree is never empty")
    }

    /// Label-free topology in a child-order independent form.
    pub fn canonical(&self) -> String {
        self.canonical_from(self.root)
    }

    pub fn canonical_from(&self, v: NodeId) -> String {
        match self.children(v) {
            None => self.nodes[v].gene.as_ref().unwrap().name.clone(),
            Some([l, r]) => {
                let (mut a, mut b) = stacker::maybe_grow(64 * 1024, 1024 * 1024, || {
                    (self.canonical_from(l), self.canonical_from(r))
                });
                if b < a {
                    std::mem::swap(&mut a, &mut b);
                }
                format!("({a},{b})")
            }
        }
    }

    /// True iff restricting `self` to the leaves of `small` yields `small`'s
    /// topology. Event labels are ignored.
    pub fn displays(&self, small: &GeneTree) -> Result<bool, TreeError> {
        let names = small.gene_names();
        let restricted = self.restrict_to_names(&names)?;
        Ok(restricted.canonical() == small.canonical())
    }

    /// Re-resolves leaf species against `species` and recomputes every s(x).
    pub fn map_to_species(&self, species: &Arc<SpeciesTree>) -> Result<GeneTree, TreeError> {
        let mut b = GeneTreeBuilder::new();
        let mut ids = vec![0; self.len()];
        for v in self.postorder() {
            ids[v] = match self.children(v) {
                None => b.leaf(self.nodes[v].gene.clone().unwrap()),
                Some([l, r]) => b.join(ids[l], ids[r], self.nodes[v].label),
            };
        }
        Ok(b.build(ids[self.root], species)?.with_name(self.name.clone()))
    }
}

/// Bottom-up construction of gene trees.
#[derive(Debug, Default, Clone)]
pub struct GeneTreeBuilder {
    nodes: Vec<(Option<[usize; 2]>, Option<Gene>, Option<EventLabel>)>,
}

impl GeneTreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn leaf(&mut self, gene: Gene) -> usize {
        self.nodes.push((None, Some(gene), None));
        self.nodes.len() - 1
    }

    pub fn join(&mut self, left: usize, right: usize, label: Option<EventLabel>) -> usize {
        self.nodes.push((Some([left, right]), None, label));
        self.nodes.len() - 1
    }

    /// Copies the subtree of `tree` under `v`, labels included.
    pub fn copy_subtree(&mut self, tree: &GeneTree, v: NodeId) -> usize {
        let mut ids = HashMap::new();
        for u in tree.preorder_from(v).into_iter().rev() {
            let id = match tree.children(u) {
                None => self.leaf(tree.gene(u).unwrap().clone()),
                Some([l, r]) => self.join(ids[&l], ids[&r], tree.label(u)),
            };
            ids.insert(u, id);
        }
        ids[&v]
    }

    pub fn set_label(&mut self, node: usize, label: Option<EventLabel>) {
        self.nodes[node].2 = label;
    }

    /// Finalizes the tree rooted at `root`; nodes not under `root` are dropped.
    pub fn build(&self, root: usize, species: &Arc<SpeciesTree>) -> Result<GeneTree, TreeError> {
        // pre-order renumbering
        let mut order = Vec::new();
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            order.push(v);
            if let Some([l, r]) = self.nodes[v].0 {
                stack.push(r);
                stack.push(l);
            }
        }
        let mut id = HashMap::with_capacity(order.len());
        for (i, &v) in order.iter().enumerate() {
            id.insert(v, i);
        }
        let mut nodes: Vec<GeneNode> = order
            .iter()
            .map(|&v| {
                let (ch, gene, label) = &self.nodes[v];
                GeneNode {
                    parent: None,
                    children: ch.map(|[l, r]| [id[&l], id[&r]]),
                    gene: gene.clone(),
                    label: if ch.is_some() { *label } else { None },
                    image: 0,
                    leaves: 0,
                }
            })
            .collect();
        let mut by_gene = HashMap::new();
        for i in (0..nodes.len()).rev() {
            match nodes[i].children {
                None => {
                    let g = nodes[i].gene.as_ref().unwrap();
                    let image =
                        species
                            .leaf(&g.species)
                            .ok_or_else(|| TreeError::UnknownSpecies {
                                gene: g.name.clone(),
                                species: g.species.clone(),
                            })?;
                    by_gene.insert(g.name.clone(), i);
                    nodes[i].image = image;
                    nodes[i].leaves = 1;
                }
                Some([l, r]) => {
                    nodes[l].parent = Some(i);
                    nodes[r].parent = Some(i);
                    nodes[i].image = species.lca(nodes[l].image, nodes[r].image);
                    nodes[i].leaves = nodes[l].leaves + nodes[r].leaves;
                }
            }
        }
        let children: Vec<_> = nodes.iter().map(|n| n.children).collect();
        Ok(GeneTree {
            name: None,
            lca: LcaIndex::new(&children_lists(&children), 0),
            nodes,
            root: 0,
            by_gene,
            species: Arc::clone(species),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn species() -> Arc<SpeciesTree> {
        Arc::new(SpeciesTree::parse("((((s,b),h),m),r);").unwrap())
    }

    fn gt(src: &str, s: &Arc<SpeciesTree>) -> GeneTree {
        GeneTree::parse(src, s).unwrap()
    }

    #[test]
    fn lca_basics() {
        let s = Arc::new(SpeciesTree::parse("((a,b),c);").unwrap());
        let g = gt("((a__a,b__b),c__c);", &s);
        let a = g.leaf_by_name("a__a").unwrap();
        let c = g.leaf_by_name("c__c").unwrap();
        assert_eq!(g.lca_of([a]).unwrap(), a);
        assert_eq!(g.lca_of(g.leaves()).unwrap(), g.root());
        assert_eq!(g.lca(a, c), g.root());
        assert!(matches!(g.lca_of([99]), Err(TreeError::NodeNotInTree(99))));
        assert!(matches!(
            g.lca_of(std::iter::empty()),
            Err(TreeError::EmptyNodeSet)
        ));
    }

    #[test]
    fn inter_on_caterpillar() {
        let s = SpeciesTree::parse("(((a,b),c),d);").unwrap();
        let a = s.leaf("a").unwrap();
        assert_eq!(s.depth(a), 3);
        assert_eq!(s.inter(s.root(), a).unwrap(), 2);
        assert_eq!(s.inter(a, a).unwrap(), 0);
        let p = s.parent(a).unwrap();
        assert_eq!(s.inter(p, a).unwrap(), 0);
        assert!(matches!(
            s.inter(a, s.root()),
            Err(TreeError::NotAncestor { .. })
        ));
        let b = s.leaf("b").unwrap();
        assert!(s.inter(a, b).is_err());
    }

    #[test]
    fn inter_matches_path_length() {
        let s = SpeciesTree::parse("(((a,b),(c,(d,e))),(f,g));").unwrap();
        for y in 0..s.len() {
            let mut path = 1;
            let mut v = y;
            while let Some(p) = s.parent(v) {
                path += 1;
                v = p;
                assert_eq!(s.inter(p, y).unwrap() + 2, path);
            }
        }
    }

    #[test]
    fn species_from_tag_or_suffix() {
        let s = species();
        let g = gt("(x[&&NHX:S=h],y__m);", &s);
        let x = g.leaf_by_name("x").unwrap();
        let y = g.leaf_by_name("y__m").unwrap();
        assert_eq!(s.name(g.image(x)), "h");
        assert_eq!(s.name(g.image(y)), "m");
        assert!(matches!(
            GeneTree::parse("(x,y__m);", &s),
            Err(TreeError::MissingSpecies(_))
        ));
        assert!(matches!(
            GeneTree::parse("(x__q,y__m);", &s),
            Err(TreeError::UnknownSpecies { .. })
        ));
        assert!(matches!(
            GeneTree::parse("(a__s,b__b,c__h);", &s),
            Err(TreeError::NonBinary { .. })
        ));
    }

    #[test]
    fn mapping_examples() {
        let s = species();
        let single = gt("h1__h;", &s);
        assert_eq!(single.image(single.root()), s.leaf("h").unwrap());
        let same = gt("(h1__h,h2__h);", &s);
        assert_eq!(same.image(same.root()), s.leaf("h").unwrap());
        // all species of the five-species tree present
        let all = gt(
            "((((s1__s,b1__b),(h1__h,h2__h)),((m3__m,h3__h),r3__r)),(s2__s,b2__b));",
            &s,
        );
        assert_eq!(all.image(all.root()), s.root());
    }

    #[test]
    fn cached_images_match_recomputation() {
        let s = species();
        let g = gt("(((s1__s,h1__h),(b1__b,m1__m)),(r1__r,s2__s));", &s);
        for v in 0..g.len() {
            let species_leaves: Vec<_> = g
                .leaves_under(v)
                .into_iter()
                .map(|u| s.leaf(&g.gene(u).unwrap().species).unwrap())
                .collect();
            assert_eq!(g.image(v), s.lca_of(species_leaves).unwrap());
        }
    }

    #[test]
    fn restriction() {
        let s = Arc::new(SpeciesTree::parse("((a,b),c);").unwrap());
        let g = gt("((a__a,b__b)[&&NHX:Ev=Spec],c__c)[&&NHX:Ev=Spec];", &s);
        assert_eq!(g.restrict(&g.leaves()).unwrap().canonical(), g.canonical());
        let r = g.restrict_to_names(&["a__a", "c__c"]).unwrap();
        assert_eq!(r.canonical(), "(a__a,c__c)");
        assert_eq!(r.label(r.root()), Some(EventLabel::Spec));
        let one = g.restrict_to_names(&["b__b"]).unwrap();
        assert_eq!(one.len(), 1);
        assert!(matches!(g.restrict(&[]), Err(TreeError::EmptyRestriction)));
    }

    #[test]
    fn display_examples() {
        let s = Arc::new(SpeciesTree::parse("((a,b),c);").unwrap());
        let g = gt("((a__a,b__b),c__c);", &s);
        assert!(g.displays(&g).unwrap());
        assert!(g.displays(&gt("(a__a,c__c);", &s)).unwrap());
        assert!(!g.displays(&gt("((a__a,c__c),b__b);", &s)).unwrap());
        assert!(matches!(
            g.displays(&gt("(a__a,d__c);", &s)),
            Err(TreeError::LeafNotPresent(_))
        ));
    }

    #[test]
    fn nhx_round_trip_keeps_labels_and_species() {
        let s = species();
        let src = "((h1[&&NHX:S=h],m1[&&NHX:S=m])[&&NHX:Ev=Spec],h2[&&NHX:S=h])fam[&&NHX:Ev=Dup];";
        let g = gt(src, &s);
        assert_eq!(g.name(), Some("fam"));
        assert_eq!(g.to_newick(), src);
        assert_eq!(g.label(g.root()), Some(EventLabel::Dup));
    }
}
