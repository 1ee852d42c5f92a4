//! Seeded instance generators: random species trees, birth–death gene
//! families, shattered inputs, label perturbations and stress shapes.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::newick::{RawNode, RawTree};
use crate::reconciliation::lca_reconcile;
use crate::tree::{EventLabel, Gene, GeneTree, GeneTreeBuilder, NodeId, SpeciesTree};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random binary species tree on `S0..S{n-1}`, built by repeatedly splitting
/// a uniformly chosen leaf.
pub fn random_species_tree(rng: &mut impl Rng, n: usize) -> SpeciesTree {
    assert!(n >= 1);
    let mut raw = RawTree::leaf("S0");
    let mut leaves = vec![raw.root];
    for i in 1..n {
        let at = rng.gen_range(0..leaves.len());
        let v = leaves[at];
        let old = std::mem::take(&mut raw.nodes[v].label);
        let a = raw.push(RawNode {
            label: old,
            ..Default::default()
        });
        let b = raw.push(RawNode {
            label: format!("S{i}"),
            ..Default::default()
        });
        raw.nodes[v].children = if rng.gen_bool(0.5) { vec![a, b] } else { vec![b, a] };
        leaves[at] = a;
        leaves.push(b);
    }
    SpeciesTree::from_raw(&raw).expect("generated species tree is valid")
}

/// Caterpillar species tree `(((S0,S1),S2),...)`.
pub fn caterpillar_species_tree(n: usize) -> SpeciesTree {
    SpeciesTree::parse(&format!("{};", caterpillar_newick(&(0..n).map(|i| format!("S{i}")).collect::<Vec<_>>())))
        .expect("caterpillar is valid")
}

fn caterpillar_newick(labels: &[String]) -> String {
    let mut s = labels[0].clone();
    for l in &labels[1..] {
        s = format!("({s},{l})");
    }
    s
}

/// Birth–death evolution of one gene family along `species`. Each lineage
/// duplicates with probability `dup_rate` before speciating and each lineage
/// entering a species child is lost with probability `loss_rate`. Returns
/// `None` if everything is lost.
pub fn simulate_family(
    rng: &mut impl Rng,
    species: &Arc<SpeciesTree>,
    dup_rate: f64,
    loss_rate: f64,
) -> Option<GeneTree> {
    let mut b = GeneTreeBuilder::new();
    let mut counter = 0usize;
    let root = evolve(rng, species, species.root(), dup_rate.min(0.95), loss_rate, &mut b, &mut counter, 0)?;
    Some(b.build(root, species).expect("simulated genes map to the species tree"))
}

#[allow(clippy::too_many_arguments)]
fn evolve(
    rng: &mut impl Rng,
    s: &SpeciesTree,
    v: NodeId,
    dup_rate: f64,
    loss_rate: f64,
    b: &mut GeneTreeBuilder,
    counter: &mut usize,
    depth: usize,
) -> Option<usize> {
    if depth < 64 && rng.gen_bool(dup_rate) {
        let l = evolve(rng, s, v, dup_rate, loss_rate, b, counter, depth + 1);
        let r = evolve(rng, s, v, dup_rate, loss_rate, b, counter, depth + 1);
        return match (l, r) {
            (Some(l), Some(r)) => Some(b.join(l, r, Some(EventLabel::Dup))),
            (x, None) | (None, x) => x,
        };
    }
    match s.children(v) {
        None => {
            *counter += 1;
            Some(b.leaf(Gene::new(format!("g{}__{}", counter, s.name(v)), s.name(v))))
        }
        Some([cl, cr]) => {
            let mut side = |c| {
                if rng.gen_bool(loss_rate) {
                    None
                } else {
                    evolve(rng, s, c, dup_rate, loss_rate, b, counter, depth)
                }
            };
            let l = side(cl);
            let r = side(cr);
            match (l, r) {
                (Some(l), Some(r)) => Some(b.join(l, r, Some(EventLabel::Spec))),
                (x, None) | (None, x) => x,
            }
        }
    }
}

/// Restricts `g` to a random subset of `n` leaves (all of them if fewer).
pub fn random_restriction(rng: &mut impl Rng, g: &GeneTree, n: usize) -> GeneTree {
    let mut leaves = g.leaves();
    if leaves.len() <= n {
        return g.clone();
    }
    leaves.shuffle(rng);
    leaves.truncate(n);
    g.restrict(&leaves).expect("non-empty restriction")
}

/// A family with between 2 and `n_genes` leaves; retries the simulation and
/// falls back to a random topology when the rates keep producing tiny trees.
pub fn random_gene_tree(
    rng: &mut impl Rng,
    species: &Arc<SpeciesTree>,
    n_genes: usize,
    dup_rate: f64,
    loss_rate: f64,
) -> GeneTree {
    for _ in 0..100 {
        if let Some(g) = simulate_family(rng, species, dup_rate, loss_rate) {
            if g.leaves().len() >= n_genes.min(2) {
                return random_restriction(rng, &g, n_genes);
            }
        }
    }
    random_topology(rng, species, n_genes)
}

/// Uniform random leaf-insertion topology on `n` genes with random species.
pub fn random_topology(rng: &mut impl Rng, species: &Arc<SpeciesTree>, n: usize) -> GeneTree {
    let sp: Vec<NodeId> = species.leaves().collect();
    let mut parent: Vec<Option<usize>> = vec![None];
    let mut kids: Vec<Option<[usize; 2]>> = vec![None];
    let mut leaf_of = vec![0usize];
    let mut root = 0;
    for i in 1..n {
        let j = rng.gen_range(0..kids.len());
        let leaf = kids.len();
        kids.push(None);
        parent.push(None);
        leaf_of.push(i);
        let p = kids.len();
        kids.push(Some(if rng.gen_bool(0.5) { [j, leaf] } else { [leaf, j] }));
        parent.push(parent[j]);
        leaf_of.push(usize::MAX);
        match parent[j] {
            None => root = p,
            Some(q) => {
                let ch = kids[q].as_mut().unwrap();
                if ch[0] == j {
                    ch[0] = p
                } else {
                    ch[1] = p
                }
            }
        }
        parent[j] = Some(p);
        parent[leaf] = Some(p);
    }
    let mut b = GeneTreeBuilder::new();
    let mut ids = vec![usize::MAX; kids.len()];
    for v in postorder(&kids, root) {
        ids[v] = match kids[v] {
            None => {
                let name = species.name(*sp.choose(rng).unwrap()).to_string();
                b.leaf(Gene::new(format!("g{}__{}", leaf_of[v] + 1, name), name))
            }
            Some([l, r]) => b.join(ids[l], ids[r], None),
        };
    }
    b.build(ids[root], species).expect("random genes map to the species tree")
}

fn postorder(kids: &[Option<[usize; 2]>], root: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![(root, false)];
    while let Some((v, done)) = stack.pop() {
        match (kids[v], done) {
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

/// Splits the leaves of `g` into `k` overlapping, jointly covering subsets
/// and returns the corresponding restrictions of `g`. Each gene lands in one
/// random tree and is copied into each other tree with probability
/// `overlap`.
pub fn shatter(rng: &mut impl Rng, g: &GeneTree, k: usize, overlap: f64) -> Vec<GeneTree> {
    let mut leaves = g.leaves();
    leaves.shuffle(rng);
    let k = k.max(1).min(leaves.len());
    let mut parts: Vec<Vec<NodeId>> = vec![Vec::new(); k];
    for (i, &v) in leaves.iter().enumerate() {
        let home = if i < k { i } else { rng.gen_range(0..k) };
        for (j, part) in parts.iter_mut().enumerate() {
            if j == home || rng.gen_bool(overlap) {
                part.push(v);
            }
        }
    }
    parts
        .iter()
        .map(|p| g.restrict(p).expect("non-empty part"))
        .collect()
}

/// LCA labels with each speciation flipped to a duplication with
/// probability `p`. The result is always a valid labeling of `g`.
pub fn perturb_labels(rng: &mut impl Rng, g: &GeneTree, p: f64) -> GeneTree {
    let l = lca_reconcile(g);
    let labels: Vec<_> = l
        .labels()
        .into_iter()
        .map(|x| match x {
            Some(EventLabel::Spec) if rng.gen_bool(p) => Some(EventLabel::Dup),
            x => x,
        })
        .collect();
    l.with_labels(&labels)
}

/// Random pairwise-separated subtree roots covering all leaves of `g`; the
/// root itself is never chosen unless `g` is a single leaf.
pub fn random_decomposition(rng: &mut impl Rng, g: &GeneTree, stop: f64) -> Vec<NodeId> {
    let mut roots = Vec::new();
    let mut stack = vec![g.root()];
    while let Some(v) = stack.pop() {
        match g.children(v) {
            Some([l, r]) if v == g.root() || !rng.gen_bool(stop) => {
                stack.push(r);
                stack.push(l);
            }
            _ => roots.push(v),
        }
    }
    roots.sort_unstable();
    roots
}

/// Applies `moves` random prune-and-regraft moves, each pruning a node
/// within `depth` edges of the root.
pub fn perturb_tree(rng: &mut impl Rng, g: &GeneTree, moves: usize, depth: u32) -> GeneTree {
    let mut g = g.without_labels();
    for _ in 0..moves {
        let candidates: Vec<NodeId> = g
            .preorder()
            .into_iter()
            .filter(|&v| v != g.root() && g.depth(v) <= depth)
            .collect();
        let Some(&v) = candidates.choose(rng) else {
            break;
        };
        if let Some(next) = spr(rng, &g, v) {
            g = next;
        }
    }
    g
}

fn spr(rng: &mut impl Rng, g: &GeneTree, v: NodeId) -> Option<GeneTree> {
    let p = g.parent(v)?;
    let [a, b] = g.children(p).unwrap();
    let sib = if a == v { b } else { a };
    // targets: edges above nodes outside v's subtree, other than p and sib's
    // current position
    let targets: Vec<NodeId> = g
        .preorder()
        .into_iter()
        .filter(|&u| !g.is_ancestor(v, u) && u != p && u != sib)
        .collect();
    let &t = targets.choose(rng)?;
    let mut bld = GeneTreeBuilder::new();
    let moved = bld.copy_subtree(g, v);
    let root = rebuild(g, g.root(), v, p, sib, t, moved, &mut bld);
    Some(bld.build(root, g.species()).unwrap().with_name(g.name().map(str::to_string)))
}

#[allow(clippy::too_many_arguments)]
fn rebuild(
    g: &GeneTree,
    u: NodeId,
    v: NodeId,
    p: NodeId,
    sib: NodeId,
    t: NodeId,
    moved: usize,
    b: &mut GeneTreeBuilder,
) -> usize {
    if u == p {
        return rebuild(g, sib, v, p, sib, t, moved, b);
    }
    let here = match g.children(u) {
        None => b.leaf(g.gene(u).unwrap().clone()),
        Some([l, r]) => {
            let l = rebuild(g, l, v, p, sib, t, moved, b);
            let r = rebuild(g, r, v, p, sib, t, moved, b);
            b.join(l, r, None)
        }
    };
    if u == t {
        b.join(here, moved, None)
    } else {
        here
    }
}

/// Generated solver input with its ground truth.
#[derive(Debug, Clone)]
pub struct Instance {
    pub species: Arc<SpeciesTree>,
    pub truth: GeneTree,
    pub trees: Vec<GeneTree>,
}

/// Species tree, a simulated family restricted to `n_genes` genes and `k`
/// overlapping restrictions of it. Deterministic per seed.
pub fn gen_instance(
    seed: u64,
    n_species: usize,
    n_genes: usize,
    k: usize,
    dup_rate: f64,
    loss_rate: f64,
) -> Instance {
    let mut rng = rng(seed);
    let species = Arc::new(random_species_tree(&mut rng, n_species.max(1)));
    let truth = random_gene_tree(&mut rng, &species, n_genes.max(1), dup_rate, loss_rate);
    let trees = shatter(&mut rng, &truth, k, 0.3);
    Instance {
        species,
        truth,
        trees,
    }
}

/// Stress instance for the triplet-respecting solver: four caterpillar
/// subtrees of `n / 4` genes each, congruent with a caterpillar species
/// tree, hung on a duplication spine `(((G1,G2),G3),G4)`. Returns the tree
/// and the four subtree roots.
pub fn caterpillar_instance(n: usize) -> (Arc<SpeciesTree>, GeneTree, Vec<NodeId>) {
    let m = (n / 4).max(2);
    let species = Arc::new(caterpillar_species_tree(m));
    let parts: Vec<String> = (0..4)
        .map(|i| {
            let labels: Vec<String> = (0..m).map(|j| format!("g{i}_{j}__S{j}")).collect();
            caterpillar_newick(&labels)
        })
        .collect();
    let src = format!("((({},{}),{}),{});", parts[0], parts[1], parts[2], parts[3]);
    let g = GeneTree::parse(&src, &species).expect("caterpillar instance is valid");
    let mut roots = Vec::new();
    let mut v = g.root();
    // walk down the spine: the right child of each spine node is a part
    for _ in 0..3 {
        let [l, r] = g.children(v).unwrap();
        roots.push(r);
        v = l;
    }
    roots.push(v);
    roots.sort_unstable();
    (species, g, roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consistency::check_consistency;
    use crate::reconciliation::reconciliation_cost;

    #[test]
    fn deterministic_per_seed() {
        let a = gen_instance(11, 6, 7, 3, 0.2, 0.1);
        let b = gen_instance(11, 6, 7, 3, 0.2, 0.1);
        assert_eq!(a.truth.to_newick(), b.truth.to_newick());
        let na: Vec<_> = a.trees.iter().map(|t| t.to_newick()).collect();
        let nb: Vec<_> = b.trees.iter().map(|t| t.to_newick()).collect();
        assert_eq!(na, nb);
    }

    #[test]
    fn no_events_means_congruent() {
        for seed in 0..20 {
            let inst = gen_instance(seed, 6, 6, 2, 0.0, 0.0);
            assert_eq!(inst.truth.leaves().len(), 6);
            assert_eq!(reconciliation_cost(&inst.truth).total(), 0);
        }
    }

    #[test]
    fn shattered_inputs_are_consistent_and_cover() {
        for seed in 0..50 {
            let inst = gen_instance(seed, 5, 7, 3, 0.3, 0.1);
            assert!(check_consistency(&inst.trees).unwrap().is_consistent());
            let mut covered: Vec<&str> = inst.trees.iter().flat_map(|t| t.gene_names()).collect();
            covered.sort();
            covered.dedup();
            assert_eq!(covered.len(), inst.truth.leaves().len());
        }
    }

    #[test]
    fn random_topology_has_n_leaves() {
        let mut r = rng(3);
        let s = Arc::new(random_species_tree(&mut r, 4));
        for n in 1..9 {
            let t = random_topology(&mut r, &s, n);
            assert_eq!(t.leaves().len(), n);
        }
    }

    #[test]
    fn decompositions_are_separated_and_cover() {
        let mut r = rng(5);
        for _ in 0..50 {
            let inst = gen_instance(r.gen(), 5, 7, 1, 0.3, 0.1);
            let roots = random_decomposition(&mut r, &inst.truth, 0.5);
            let mut n = 0;
            for (i, &a) in roots.iter().enumerate() {
                n += inst.truth.leaf_count(a);
                for &b in &roots[i + 1..] {
                    assert!(!inst.truth.is_ancestor(a, b) && !inst.truth.is_ancestor(b, a));
                }
            }
            assert_eq!(n, inst.truth.leaves().len());
        }
    }

    #[test]
    fn perturbation_keeps_leafset() {
        let mut r = rng(9);
        let inst = gen_instance(1, 6, 8, 1, 0.3, 0.0);
        let p = perturb_tree(&mut r, &inst.truth, 3, 3);
        let mut a = p.gene_names();
        let mut b = inst.truth.gene_names();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn caterpillar_shape() {
        let (_, g, roots) = caterpillar_instance(40);
        assert_eq!(g.leaves().len(), 40);
        assert_eq!(roots.len(), 4);
        assert!(roots.iter().all(|&r| g.leaf_count(r) == 10));
    }
}
