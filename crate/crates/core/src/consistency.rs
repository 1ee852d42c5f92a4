//! Consistency of rooted gene trees: BUILD with an explicit conflict witness.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::newick::{RawNode, RawTree};
use crate::tree::{GeneTree, NodeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsistencyError {
    #[error("no input trees")]
    NoTrees,
    #[error("gene '{gene}' is assigned to species '{first}' in one tree and '{second}' in another")]
    SharedGeneSpeciesMismatch {
        gene: String,
        first: String,
        second: String,
    },
}

/// Rooted topology `(pair | outgroup)` on three distinct genes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TripletConstraint {
    pub pair: (String, String),
    pub outgroup: String,
}

impl TripletConstraint {
    pub fn new(a: &str, b: &str, outgroup: &str) -> Self {
        let pair = if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        };
        TripletConstraint {
            pair,
            outgroup: outgroup.to_string(),
        }
    }

    /// The three genes in sorted order.
    pub fn genes(&self) -> [&str; 3] {
        let mut g = [
            self.pair.0.as_str(),
            self.pair.1.as_str(),
            self.outgroup.as_str(),
        ];
        g.sort_unstable();
        g
    }
}

impl fmt::Display for TripletConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{}|{})", self.pair.0, self.pair.1, self.outgroup)
    }
}

/// Topology `tree` induces on three of its leaves.
pub(crate) fn triplet_of(tree: &GeneTree, a: NodeId, b: NodeId, c: NodeId) -> TripletConstraint {
    let name = |v: NodeId| tree.gene(v).unwrap().name.as_str();
    let (dab, dac, dbc) = (
        tree.depth(tree.lca(a, b)),
        tree.depth(tree.lca(a, c)),
        tree.depth(tree.lca(b, c)),
    );
    if dab > dac && dab > dbc {
        TripletConstraint::new(name(a), name(b), name(c))
    } else if dac > dbc {
        TripletConstraint::new(name(a), name(c), name(b))
    } else {
        TripletConstraint::new(name(b), name(c), name(a))
    }
}

/// All C(n,3) rooted triplets displayed by a binary tree.
pub fn extract_triplets(tree: &GeneTree) -> Vec<TripletConstraint> {
    let leaves = tree.leaves();
    let mut out = Vec::new();
    for i in 0..leaves.len() {
        for j in i + 1..leaves.len() {
            for k in j + 1..leaves.len() {
                out.push(triplet_of(tree, leaves[i], leaves[j], leaves[k]));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Witness {
    /// Two input trees resolve the same gene triple differently.
    Conflict {
        genes: [String; 3],
        first: (usize, TripletConstraint),
        second: (usize, TripletConstraint),
    },
    /// BUILD could not split this gene set, but no two trees disagree on a
    /// single triple; the conflict involves several triples at once.
    Unsplittable { genes: Vec<String> },
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::Conflict {
                genes,
                first,
                second,
            } => write!(
                f,
                "genes {{{}, {}, {}}}: tree {} has {} but tree {} has {}",
                genes[0], genes[1], genes[2], first.0, first.1, second.0, second.1
            ),
            Witness::Unsplittable { genes } => {
                write!(f, "no tree can split genes {{{}}}", genes.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum Consistency {
    /// A possibly non-binary tree displaying every input.
    Consistent(RawTree),
    Inconsistent(Witness),
}

impl Consistency {
    pub fn is_consistent(&self) -> bool {
        matches!(self, Consistency::Consistent(_))
    }
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut v = x;
        while self.0[v] != r {
            let next = self.0[v];
            self.0[v] = r;
            v = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra] = rb;
        }
    }
}

struct Build<'a> {
    trees: &'a [GeneTree],
    names: Vec<String>,
    species: Vec<String>,
    /// occurrence[g] = (tree, leaf) pairs
    occurrence: Vec<Vec<(usize, NodeId)>>,
}

impl Build<'_> {
    /// Returns the tree node for `genes`, or the gene set BUILD cannot split.
    fn run(&self, genes: &[usize], out: &mut RawTree) -> Result<usize, Vec<usize>> {
        if genes.len() == 1 {
            let g = genes[0];
            return Ok(out.push(RawNode {
                label: self.names[g].clone(),
                children: Vec::new(),
                annotations: vec![("S".into(), self.species[g].clone())],
            }));
        }
        let pos: HashMap<usize, usize> = genes.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        let mut dsu = Dsu((0..genes.len()).collect());
        for (t, tree) in self.trees.iter().enumerate() {
            let here: Vec<(usize, NodeId)> = genes
                .iter()
                .filter_map(|&g| {
                    self.occurrence[g]
                        .iter()
                        .find(|(i, _)| *i == t)
                        .map(|&(_, leaf)| (g, leaf))
                })
                .collect();
            if here.len() < 2 {
                continue;
            }
            let top = tree.lca_of(here.iter().map(|&(_, l)| l)).unwrap();
            let [left, _] = tree.children(top).unwrap();
            let mut first_of = [None, None];
            for &(g, leaf) in &here {
                let side = usize::from(!tree.is_ancestor(left, leaf));
                match first_of[side] {
                    None => first_of[side] = Some(pos[&g]),
                    Some(f) => dsu.union(f, pos[&g]),
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &g) in genes.iter().enumerate() {
            groups.entry(dsu.find(i)).or_default().push(g);
        }
        if groups.len() == 1 {
            return Err(genes.to_vec());
        }
        let mut components: Vec<Vec<usize>> = groups.into_values().collect();
        components.sort_by_key(|c| c[0]);
        let mut children = Vec::with_capacity(components.len());
        for c in &components {
            children.push(stacker::maybe_grow(64 * 1024, 1024 * 1024, || {
                self.run(c, out)
            })?);
        }
        Ok(out.push(RawNode {
            children,
            ..Default::default()
        }))
    }

    fn witness(&self, genes: &[usize]) -> Witness {
        let mut seen: BTreeMap<[String; 3], (usize, TripletConstraint)> = BTreeMap::new();
        let mut best: Option<Witness> = None;
        for (t, tree) in self.trees.iter().enumerate() {
            let leaves: Vec<NodeId> = genes
                .iter()
                .filter_map(|&g| {
                    self.occurrence[g]
                        .iter()
                        .find(|(i, _)| *i == t)
                        .map(|&(_, l)| l)
                })
                .collect();
            for i in 0..leaves.len() {
                for j in i + 1..leaves.len() {
                    for k in j + 1..leaves.len() {
                        let tc = triplet_of(tree, leaves[i], leaves[j], leaves[k]);
                        let key = tc.genes().map(str::to_string);
                        match seen.get(&key) {
                            None => {
                                seen.insert(key, (t, tc));
                            }
                            Some((t0, tc0)) if *tc0 != tc => {
                                let better = match &best {
                                    Some(Witness::Conflict { genes, .. }) => key < *genes,
                                    _ => true,
                                };
                                if better {
                                    best = Some(Witness::Conflict {
                                        genes: key,
                                        first: (*t0, tc0.clone()),
                                        second: (t, tc),
                                    });
                                }
                            }
                            Some(_) => {}
                        }
                    }
                }
            }
        }
        best.unwrap_or_else(|| {
            let mut names: Vec<String> = genes.iter().map(|&g| self.names[g].clone()).collect();
            names.sort();
            Witness::Unsplittable { genes: names }
        })
    }
}

/// Runs BUILD on the union of the input trees' genes.
pub fn check_consistency(trees: &[GeneTree]) -> Result<Consistency, ConsistencyError> {
    if trees.is_empty() {
        return Err(ConsistencyError::NoTrees);
    }
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut names = Vec::new();
    let mut species = Vec::new();
    let mut occurrence: Vec<Vec<(usize, NodeId)>> = Vec::new();
    for (t, tree) in trees.iter().enumerate() {
        for leaf in tree.leaves() {
            let gene = tree.gene(leaf).unwrap();
            let g = *index.entry(gene.name.clone()).or_insert_with(|| {
                names.push(gene.name.clone());
                species.push(gene.species.clone());
                occurrence.push(Vec::new());
                names.len() - 1
            });
            if species[g] != gene.species {
                return Err(ConsistencyError::SharedGeneSpeciesMismatch {
                    gene: gene.name.clone(),
                    first: species[g].clone(),
                    second: gene.species.clone(),
                });
            }
            occurrence[g].push((t, leaf));
        }
    }
    let build = Build {
        trees,
        names,
        species,
        occurrence,
    };
    let all: Vec<usize> = (0..build.names.len()).collect();
    let mut out = RawTree {
        nodes: Vec::new(),
        root: 0,
    };
    match build.run(&all, &mut out) {
        Ok(root) => {
            out.root = root;
            Ok(Consistency::Consistent(out))
        }
        Err(stuck) => Ok(Consistency::Inconsistent(build.witness(&stuck))),
    }
}
