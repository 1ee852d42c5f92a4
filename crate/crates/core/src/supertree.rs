//! Minimum-cost supergenetrees by dynamic programming over compatible root
//! bipartitions.
//!
//! A subproblem is one complete subtree (or nothing) per input tree. At each
//! subproblem every input tree either goes wholly to one side or is split at
//! its current root, which yields at most `4^k / 2 - 1` candidate bipartitions.
//! Candidates whose sides overlap (a shared gene sent both ways) are rejected
//! by comparing side sizes against the size of the union.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use fixedbitset::FixedBitSet;
use rustc_hash::FxHashMap;
use smallvec::{smallvec, SmallVec};
use thiserror::Error;

use crate::consistency::{check_consistency, Consistency};
use crate::reconciliation::{
    labeled_local_cost, labeled_reconciliation_cost, Cost, LocalCost,
};
use crate::tree::{EventLabel, Gene, GeneTree, GeneTreeBuilder, NodeId, SpeciesTree, TreeError};

const ABSENT: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SupertreeError {
    #[error("no input trees")]
    NoTrees,
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("gene '{gene}' is assigned to species '{first}' in one tree and '{second}' in another")]
    SharedGeneSpeciesMismatch {
        gene: String,
        first: String,
        second: String,
    },
    #[error("input trees are inconsistent: no compatible bipartition exists")]
    InconsistentInput,
    #[error("internal node {node} of input tree {tree} has no event label")]
    UnlabeledNode { tree: usize, node: NodeId },
    #[error("no supertree is label-compatible with the input trees")]
    NoLabelCompatibleSolution,
    #[error("root assignment has {got} entries for {expected} trees")]
    AssignmentLength { expected: usize, got: usize },
}

/// Where one input tree's current subtree goes in a bipartition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Placement {
    Absent,
    AllLeft,
    AllRight,
    /// Left child to the left side, right child to the right side.
    SplitLeftRight,
    SplitRightLeft,
}

impl Placement {
    pub fn is_split(self) -> bool {
        matches!(self, Placement::SplitLeftRight | Placement::SplitRightLeft)
    }
}

/// A compatible bipartition of the current gene union.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bipartition {
    pub left: Vec<String>,
    pub right: Vec<String>,
    pub assignment: Vec<Placement>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolveStats {
    /// Memoized non-trivial subproblems.
    pub subproblems: usize,
    /// Key entries stored in the memo table (subproblems times key width).
    pub memo_cells: usize,
    /// Raw assignments generated before the size check.
    pub candidates: u64,
    /// Assignments that passed the size check.
    pub bipartitions: u64,
    /// Largest number of compatible bipartitions at one subproblem.
    pub max_bipartitions: usize,
    pub elapsed: Duration,
}

impl fmt::Display for SolveStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "subproblems={} memo_cells={} candidates={} bipartitions={} max_bipartitions={} millis={}",
            self.subproblems,
            self.memo_cells,
            self.candidates,
            self.bipartitions,
            self.max_bipartitions,
            self.elapsed.as_millis()
        )
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub cost: Cost,
    /// Output tree; internal nodes carry the events used for the cost.
    pub tree: GeneTree,
    pub stats: SolveStats,
}

/// Which DP variant to run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveOptions {
    /// Honor input event labels (label-compatible bipartitions only).
    pub labeled: bool,
    /// Key the DP on a covering subset of the inputs.
    pub core: bool,
}

struct Flat {
    children: Vec<Option<[u32; 2]>>,
    gene: Vec<u32>,
    image: Vec<u32>,
    label: Vec<Option<EventLabel>>,
    size: Vec<u32>,
    unshared: Vec<u32>,
    shared: Vec<FixedBitSet>,
    full: Vec<FixedBitSet>,
    root: u32,
}

struct Prepared {
    genes: Vec<Gene>,
    trees: Vec<Flat>,
}

fn prepare(
    trees: &[GeneTree],
    species: &SpeciesTree,
    keyed: &[usize],
    need_full: bool,
) -> Result<Prepared, SupertreeError> {
    let mut index: FxHashMap<&str, u32> = FxHashMap::default();
    let mut genes: Vec<Gene> = Vec::new();
    let mut keyed_occurrences: Vec<u32> = Vec::new();
    let is_keyed: HashSet<usize> = keyed.iter().copied().collect();
    for (t, tree) in trees.iter().enumerate() {
        for leaf in tree.leaves() {
            let gene = tree.gene(leaf).unwrap();
            let g = *index.entry(gene.name.as_str()).or_insert_with(|| {
                genes.push(gene.clone());
                keyed_occurrences.push(0);
                (genes.len() - 1) as u32
            });
            let known = &genes[g as usize];
            if known.species != gene.species {
                return Err(SupertreeError::SharedGeneSpeciesMismatch {
                    gene: gene.name.clone(),
                    first: known.species.clone(),
                    second: gene.species.clone(),
                });
            }
            if is_keyed.contains(&t) {
                keyed_occurrences[g as usize] += 1;
            }
        }
    }
    let mut shared_index = vec![u32::MAX; genes.len()];
    let mut n_shared = 0;
    for (g, &occ) in keyed_occurrences.iter().enumerate() {
        if occ > 1 {
            shared_index[g] = n_shared;
            n_shared += 1;
        }
    }
    let mut leaf_image = Vec::with_capacity(genes.len());
    for g in &genes {
        leaf_image.push(species.leaf(&g.species).ok_or_else(|| TreeError::UnknownSpecies {
            gene: g.name.clone(),
            species: g.species.clone(),
        })? as u32);
    }
    let flats = trees
        .iter()
        .map(|tree| {
            let n = tree.len();
            let mut f = Flat {
                children: vec![None; n],
                gene: vec![u32::MAX; n],
                image: vec![0; n],
                label: vec![None; n],
                size: vec![0; n],
                unshared: vec![0; n],
                shared: vec![FixedBitSet::with_capacity(n_shared as usize); n],
                full: if need_full {
                    vec![FixedBitSet::with_capacity(genes.len()); n]
                } else {
                    Vec::new()
                },
                root: tree.root() as u32,
            };
            for v in tree.postorder() {
                match tree.children(v) {
                    None => {
                        let g = index[tree.gene(v).unwrap().name.as_str()];
                        f.gene[v] = g;
                        f.image[v] = leaf_image[g as usize];
                        f.size[v] = 1;
                        match shared_index[g as usize] {
                            u32::MAX => f.unshared[v] = 1,
                            s => f.shared[v].insert(s as usize),
                        }
                        if need_full {
                            f.full[v].insert(g as usize);
                        }
                    }
                    Some([l, r]) => {
                        f.children[v] = Some([l as u32, r as u32]);
                        f.image[v] = species.lca(f.image[l] as usize, f.image[r] as usize) as u32;
                        f.label[v] = tree.label(v);
                        f.size[v] = f.size[l] + f.size[r];
                        f.unshared[v] = f.unshared[l] + f.unshared[r];
                        let mut sh = f.shared[l].clone();
                        sh.union_with(&f.shared[r]);
                        f.shared[v] = sh;
                        if need_full {
                            let mut full = f.full[l].clone();
                            full.union_with(&f.full[r]);
                            f.full[v] = full;
                        }
                    }
                }
            }
            f
        })
        .collect();
    Ok(Prepared {
        genes,
        trees: flats,
    })
}

/// One component per tree; inline for the common small-k case.
type Comps = SmallVec<[u32; 4]>;

struct Candidate {
    placements: SmallVec<[Placement; 4]>,
    left: Comps,
    right: Comps,
    local: Option<LocalCost>,
}

#[derive(Debug)]
struct Best {
    total: u64,
    label: EventLabel,
    left: Comps,
    right: Comps,
}

struct Engine<'a> {
    species: &'a SpeciesTree,
    p: Prepared,
    keyed: Vec<usize>,
    checked: Vec<usize>,
    labeled: bool,
    memo: FxHashMap<Comps, Option<Best>>,
    stats: SolveStats,
}

impl<'a> Engine<'a> {
    fn new(
        trees: &[GeneTree],
        species: &'a SpeciesTree,
        keyed: Vec<usize>,
        labeled: bool,
    ) -> Result<Self, SupertreeError> {
        let checked: Vec<usize> = (0..trees.len()).filter(|t| !keyed.contains(t)).collect();
        let p = prepare(trees, species, &keyed, !checked.is_empty())?;
        Ok(Engine {
            species,
            p,
            keyed,
            checked,
            labeled,
            memo: FxHashMap::default(),
            stats: SolveStats::default(),
        })
    }

    fn root_state(&self) -> Vec<u32> {
        self.p.trees.iter().map(|f| f.root).collect()
    }

    /// Size of the gene union and its species image.
    fn summarize(&self, comps: &[u32]) -> (usize, usize) {
        let (n, image) = self.side_stats(comps);
        (n, image.expect("subproblem with no trees"))
    }

    fn side_stats(&self, side: &[u32]) -> (usize, Option<usize>) {
        let mut unshared = 0usize;
        let mut first: Option<&FixedBitSet> = None;
        let mut union: Option<FixedBitSet> = None;
        let mut image: Option<usize> = None;
        for &t in &self.keyed {
            let c = side[t];
            if c == ABSENT {
                continue;
            }
            let f = &self.p.trees[t];
            unshared += f.unshared[c as usize] as usize;
            let s = &f.shared[c as usize];
            // only materialize a union when two sides actually carry shared genes
            if !s.is_clear() {
                match (&mut union, first) {
                    (Some(u), _) => u.union_with(s),
                    (None, Some(a)) => {
                        let mut u = a.clone();
                        u.union_with(s);
                        union = Some(u);
                    }
                    (None, None) => first = Some(s),
                }
            }
            let im = f.image[c as usize] as usize;
            image = Some(image.map_or(im, |acc| self.species.lca(acc, im)));
        }
        let shared = match (union, first) {
            (Some(u), _) => u.count_ones(..),
            (None, Some(a)) => a.count_ones(..),
            (None, None) => 0,
        };
        (unshared + shared, image)
    }

    /// Compatible bipartitions of the union at `comps`, in canonical order.
    /// With `score`, local costs are attached and label-incompatible
    /// candidates are dropped.
    fn candidates(&mut self, comps: &[u32], score: bool) -> Vec<Candidate> {
        let k = comps.len();
        let (total, image) = self.summarize(comps);
        let active: SmallVec<[usize; 4]> = self
            .keyed
            .iter()
            .copied()
            .filter(|&t| comps[t] != ABSENT)
            .collect();
        let options: SmallVec<[&[Placement]; 4]> = active
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let internal = self.p.trees[t].children[comps[t] as usize].is_some();
                match (i == 0, internal) {
                    (true, false) => &[Placement::AllLeft][..],
                    (true, true) => &[Placement::AllLeft, Placement::SplitLeftRight][..],
                    (false, false) => &[Placement::AllLeft, Placement::AllRight][..],
                    (false, true) => &[
                        Placement::AllLeft,
                        Placement::AllRight,
                        Placement::SplitLeftRight,
                        Placement::SplitRightLeft,
                    ][..],
                }
            })
            .collect();
        let mut digits: SmallVec<[usize; 4]> = smallvec![0; active.len()];
        let mut out = Vec::new();
        let mut compatible = 0usize;
        'odometer: loop {
            self.stats.candidates += 1;
            let mut placements: SmallVec<[Placement; 4]> = smallvec![Placement::Absent; k];
            let mut left: Comps = smallvec![ABSENT; k];
            let mut right: Comps = smallvec![ABSENT; k];
            for (i, &t) in active.iter().enumerate() {
                let p = options[i][digits[i]];
                placements[t] = p;
                let c = comps[t];
                let ch = self.p.trees[t].children[c as usize];
                match p {
                    Placement::AllLeft => left[t] = c,
                    Placement::AllRight => right[t] = c,
                    Placement::SplitLeftRight => {
                        let [a, b] = ch.unwrap();
                        left[t] = a;
                        right[t] = b;
                    }
                    Placement::SplitRightLeft => {
                        let [a, b] = ch.unwrap();
                        left[t] = b;
                        right[t] = a;
                    }
                    Placement::Absent => unreachable!(),
                }
            }
            if let Some(c) = self.evaluate(comps, total, image, placements, left, right, score) {
                compatible += usize::from(c.1);
                if let Some(cand) = c.0 {
                    out.push(cand);
                }
            }
            // advance, last tree fastest
            let mut i = active.len();
            loop {
                if i == 0 {
                    break 'odometer;
                }
                i -= 1;
                digits[i] += 1;
                if digits[i] < options[i].len() {
                    break;
                }
                digits[i] = 0;
            }
        }
        debug_assert!(
            compatible < (1usize << (2 * active.len() - 1)),
            "{compatible} bipartitions for {} trees",
            active.len()
        );
        self.stats.max_bipartitions = self.stats.max_bipartitions.max(compatible);
        out
    }

    /// Returns `None` when the split is not a bipartition; otherwise the
    /// scored candidate (if it survives label checks) and whether it counted
    /// as compatible.
    #[allow(clippy::too_many_arguments)]
    fn evaluate(
        &mut self,
        comps: &[u32],
        total: usize,
        image: usize,
        mut placements: SmallVec<[Placement; 4]>,
        mut left: Comps,
        mut right: Comps,
        score: bool,
    ) -> Option<(Option<Candidate>, bool)> {
        let (nl, il) = self.side_stats(&left);
        let (nr, ir) = self.side_stats(&right);
        if nl == 0 || nr == 0 || nl + nr != total {
            return None;
        }
        if !self.checked.is_empty() {
            let mut left_full = FixedBitSet::with_capacity(self.p.genes.len());
            for &t in &self.keyed {
                if left[t] != ABSENT {
                    left_full.union_with(&self.p.trees[t].full[left[t] as usize]);
                }
            }
            for &t in &self.checked {
                let c = comps[t];
                if c == ABSENT {
                    continue;
                }
                let f = &self.p.trees[t];
                let inside = |v: u32| f.full[v as usize].intersection_count(&left_full);
                let n_in = inside(c);
                if n_in == f.size[c as usize] as usize {
                    placements[t] = Placement::AllLeft;
                    left[t] = c;
                } else if n_in == 0 {
                    placements[t] = Placement::AllRight;
                    right[t] = c;
                } else {
                    let [a, b] = f.children[c as usize]?;
                    let (ia, ib) = (inside(a), inside(b));
                    if ia == f.size[a as usize] as usize && ib == 0 {
                        placements[t] = Placement::SplitLeftRight;
                        left[t] = a;
                        right[t] = b;
                    } else if ia == 0 && ib == f.size[b as usize] as usize {
                        placements[t] = Placement::SplitRightLeft;
                        left[t] = b;
                        right[t] = a;
                    } else {
                        return None;
                    }
                }
            }
        }
        self.stats.bipartitions += 1;
        let local = if score {
            let mut forced = None;
            if self.labeled {
                for (t, p) in placements.iter().enumerate() {
                    if p.is_split() {
                        let l = self.p.trees[t].label[comps[t] as usize];
                        match (forced, l) {
                            (None, l) => forced = l,
                            (Some(a), Some(b)) if a != b => return Some((None, true)),
                            _ => {}
                        }
                    }
                }
            }
            match labeled_local_cost(self.species, image, il.unwrap(), ir.unwrap(), forced) {
                Some(lc) => Some(lc),
                None => return Some((None, true)),
            }
        } else {
            None
        };
        Some((
            Some(Candidate {
                placements,
                left,
                right,
                local,
            }),
            true,
        ))
    }

    fn key(&self, comps: &[u32]) -> Comps {
        self.keyed.iter().map(|&t| comps[t]).collect()
    }

    fn solve(&mut self, comps: &[u32]) -> Option<u64> {
        let key = self.key(comps);
        if let Some(e) = self.memo.get(key.as_slice()) {
            return e.as_ref().map(|b| b.total);
        }
        if self.summarize(comps).0 == 1 {
            return Some(0);
        }
        let mut best: Option<Best> = None;
        for cand in self.candidates(comps, true) {
            let local = cand.local.unwrap();
            let Some(l) = stacker::maybe_grow(128 * 1024, 4 * 1024 * 1024, || self.solve(&cand.left))
            else {
                continue;
            };
            let Some(r) = stacker::maybe_grow(128 * 1024, 4 * 1024 * 1024, || self.solve(&cand.right))
            else {
                continue;
            };
            let total = local.total() + l + r;
            if best.as_ref().map_or(true, |b| total < b.total) {
                best = Some(Best {
                    total,
                    label: local.label,
                    left: cand.left,
                    right: cand.right,
                });
            }
        }
        let result = best.as_ref().map(|b| b.total);
        self.memo.insert(key, best);
        result
    }

    fn build(&self, comps: &[u32], b: &mut GeneTreeBuilder) -> usize {
        if self.summarize(comps).0 == 1 {
            let (t, c) = self
                .keyed
                .iter()
                .map(|&t| (t, comps[t]))
                .find(|&(_, c)| c != ABSENT)
                .unwrap();
            let g = self.p.trees[t].gene[c as usize];
            return b.leaf(self.p.genes[g as usize].clone());
        }
        let best = self.memo[self.key(comps).as_slice()]
            .as_ref()
            .expect("build follows a feasible solve");
        let l = stacker::maybe_grow(128 * 1024, 4 * 1024 * 1024, || self.build(&best.left, b));
        let r = stacker::maybe_grow(128 * 1024, 4 * 1024 * 1024, || self.build(&best.right, b));
        b.join(l, r, Some(best.label))
    }
}

fn check_labels(trees: &[GeneTree]) -> Result<(), SupertreeError> {
    for (t, tree) in trees.iter().enumerate() {
        if let Some(v) = tree.internal_nodes().find(|&v| tree.label(v).is_none()) {
            return Err(SupertreeError::UnlabeledNode { tree: t, node: v });
        }
    }
    Ok(())
}

/// Runs the DP variant selected by `options`.
pub fn solve(
    trees: &[GeneTree],
    species: &Arc<SpeciesTree>,
    options: SolveOptions,
) -> Result<Solution, SupertreeError> {
    if trees.is_empty() {
        return Err(SupertreeError::NoTrees);
    }
    if options.labeled {
        check_labels(trees)?;
    }
    let start = Instant::now();
    let keyed = if options.core {
        find_core(trees)
    } else {
        (0..trees.len()).collect()
    };
    let mut engine = Engine::new(trees, species, keyed, options.labeled)?;
    let root = engine.root_state();
    let total = engine.solve(&root);
    let Some(total) = total else {
        if options.labeled {
            if let Ok(Consistency::Consistent(_)) = check_consistency(trees) {
                return Err(SupertreeError::NoLabelCompatibleSolution);
            }
        }
        return Err(SupertreeError::InconsistentInput);
    };
    let mut b = GeneTreeBuilder::new();
    let top = engine.build(&root, &mut b);
    let tree = b.build(top, species)?;
    let report = labeled_reconciliation_cost(&tree)
        .expect("DP labels are admissible on the tree they build");
    debug_assert_eq!(report.total(), total);
    let mut stats = engine.stats;
    stats.subproblems = engine.memo.len();
    stats.memo_cells = engine.memo.len() * engine.keyed.len();
    stats.elapsed = start.elapsed();
    Ok(Solution {
        cost: report.cost,
        tree,
        stats,
    })
}

/// Minimum LCA-reconciliation cost supertree of `trees`.
pub fn min_sgt(trees: &[GeneTree], species: &Arc<SpeciesTree>) -> Result<Solution, SupertreeError> {
    solve(trees, species, SolveOptions::default())
}

/// Minimum-cost supertree that is label-compatible with every labeled input.
pub fn min_lsgt(
    trees: &[GeneTree],
    species: &Arc<SpeciesTree>,
) -> Result<Solution, SupertreeError> {
    solve(
        trees,
        species,
        SolveOptions {
            labeled: true,
            core: false,
        },
    )
}

/// [`min_sgt`] with the DP keyed on a greedy core of the inputs.
pub fn min_sgt_core(
    trees: &[GeneTree],
    species: &Arc<SpeciesTree>,
) -> Result<Solution, SupertreeError> {
    solve(
        trees,
        species,
        SolveOptions {
            labeled: false,
            core: true,
        },
    )
}

/// [`min_lsgt`] keyed on a greedy core.
pub fn min_lsgt_core(
    trees: &[GeneTree],
    species: &Arc<SpeciesTree>,
) -> Result<Solution, SupertreeError> {
    solve(
        trees,
        species,
        SolveOptions {
            labeled: true,
            core: true,
        },
    )
}

/// Greedy cover of the gene union: a largest tree first, then repeatedly the
/// tree adding the most uncovered genes. Ties go to the earlier input.
pub fn find_core(trees: &[GeneTree]) -> Vec<usize> {
    let sets: Vec<HashSet<&str>> = trees
        .iter()
        .map(|t| t.gene_names().into_iter().collect())
        .collect();
    let universe: HashSet<&str> = sets.iter().flatten().copied().collect();
    let mut core = Vec::new();
    let mut covered: HashSet<&str> = HashSet::new();
    while covered.len() < universe.len() {
        let (best, gain) = sets
            .iter()
            .enumerate()
            .filter(|(i, _)| !core.contains(i))
            .map(|(i, s)| (i, s.difference(&covered).count()))
            .fold((usize::MAX, 0), |acc, (i, g)| if g > acc.1 { (i, g) } else { acc });
        if gain == 0 {
            break;
        }
        core.push(best);
        covered.extend(sets[best].iter().copied());
    }
    if core.is_empty() && !trees.is_empty() {
        core.push(0);
    }
    core
}

/// Compatible bipartitions for the subproblem whose current subtree in tree
/// `i` is `roots[i]` (`None` for an empty tree).
pub fn enumerate_bipartitions(
    trees: &[GeneTree],
    roots: &[Option<NodeId>],
) -> Result<Vec<Bipartition>, SupertreeError> {
    if trees.is_empty() {
        return Err(SupertreeError::NoTrees);
    }
    if roots.len() != trees.len() {
        return Err(SupertreeError::AssignmentLength {
            expected: trees.len(),
            got: roots.len(),
        });
    }
    let species = trees[0].species();
    let engine_trees: Vec<GeneTree> = trees
        .iter()
        .map(|t| {
            if Arc::ptr_eq(t.species(), species) {
                Ok(t.clone())
            } else {
                t.map_to_species(species)
            }
        })
        .collect::<Result<_, _>>()?;
    let mut engine = Engine::new(&engine_trees, species, (0..trees.len()).collect(), false)?;
    let comps: Vec<u32> = roots
        .iter()
        .map(|r| r.map_or(ABSENT, |v| v as u32))
        .collect();
    if comps.iter().all(|&c| c == ABSENT) {
        return Ok(Vec::new());
    }
    let names = |side: &[u32]| {
        let mut out: Vec<String> = Vec::new();
        for (t, &c) in side.iter().enumerate() {
            if c != ABSENT {
                out.extend(
                    trees[t]
                        .leaves_under(c as usize)
                        .into_iter()
                        .map(|v| trees[t].gene(v).unwrap().name.clone()),
                );
            }
        }
        out.sort();
        out.dedup();
        out
    };
    Ok(engine
        .candidates(&comps, false)
        .into_iter()
        .map(|c| Bipartition {
            left: names(&c.left),
            right: names(&c.right),
            assignment: c.placements.into_vec(),
        })
        .collect())
}
