use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;

use suget_core::newick::{parse_newick, serialize_newick};
use suget_core::reconciliation::{highest_duplications, labeled_reconciliation_cost, lca_reconcile, reconciliation_cost};
use suget_core::simulate::{
    gen_instance, perturb_labels, random_decomposition, random_gene_tree, random_species_tree, random_topology, rng,
};
use suget_core::supertree::{enumerate_bipartitions, min_lsgt, min_sgt};
use suget_core::tree::GeneTree;
use suget_core::triplet::{min_ltrs, min_trs, triplet_respecting, SubtreeDecomposition, TripletError};

fn decomposed(seed: u64, n: usize) -> (Arc<suget_core::tree::SpeciesTree>, SubtreeDecomposition) {
    let mut r = rng(seed);
    loop {
        let ns = r.gen_range(2..7);
        let species = Arc::new(random_species_tree(&mut r, ns));
        let g = random_gene_tree(&mut r, &species, n, 0.3, 0.1);
        let roots = random_decomposition(&mut r, &g, 0.4);
        if roots.len() >= 2 {
            return (species, SubtreeDecomposition::new(g, roots).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn newick_round_trip(seed in any::<u64>(), n in 1usize..20) {
        let mut r = rng(seed);
        let species = Arc::new(random_species_tree(&mut r, 5));
        let g = random_topology(&mut r, &species, n);
        let g = perturb_labels(&mut r, &g, 0.3);
        let text = g.to_newick();
        let again = serialize_newick(&parse_newick(&text).unwrap());
        prop_assert_eq!(&text, &again);
        let back = GeneTree::parse(&text, &species).unwrap();
        prop_assert_eq!(back.canonical(), g.canonical());
        prop_assert_eq!(back.labels(), g.labels());
    }

    #[test]
    fn reconciliation_cost_is_sum_of_local_terms(seed in any::<u64>(), n in 1usize..30) {
        let mut r = rng(seed);
        let species = Arc::new(random_species_tree(&mut r, 6));
        let g = random_topology(&mut r, &species, n);
        let rep = reconciliation_cost(&g);
        let sum: u64 = rep.nodes.iter().map(|x| x.cost.total()).sum();
        prop_assert_eq!(sum, rep.total());
        prop_assert_eq!(labeled_reconciliation_cost(&lca_reconcile(&g)).unwrap().cost, rep.cost);
        prop_assert!(highest_duplications(&g) <= rep.duplications() as usize);
    }

    #[test]
    fn bipartitions_within_bound(seed in any::<u64>(), k in 1usize..4) {
        let inst = gen_instance(seed, 5, 8, k, 0.3, 0.1);
        let mut r = rng(seed ^ 1);
        // random subproblem: a random node (or nothing) per tree
        let roots: Vec<Option<usize>> = inst
            .trees
            .iter()
            .map(|t| if r.gen_bool(0.2) { None } else { Some(r.gen_range(0..t.len())) })
            .collect();
        if let Ok(bips) = enumerate_bipartitions(&inst.trees, &roots) {
            let m = roots.iter().filter(|x| x.is_some()).count();
            if m > 0 {
                prop_assert!(bips.len() < 1 << (2 * m - 1));
            }
            for b in &bips {
                prop_assert!(!b.left.is_empty() && !b.right.is_empty());
                prop_assert!(b.left.iter().all(|g| !b.right.contains(g)));
            }
        }
    }

    #[test]
    fn supertree_displays_inputs(seed in any::<u64>()) {
        let inst = gen_instance(seed, 6, 9, 3, 0.3, 0.1);
        let sol = min_sgt(&inst.trees, &inst.species).unwrap();
        for t in &inst.trees {
            prop_assert!(sol.tree.displays(t).unwrap());
        }
        prop_assert!(sol.cost.total() <= reconciliation_cost(&inst.truth).total());
        let mut r = rng(seed);
        let labeled: Vec<_> = inst.trees.iter().map(|t| perturb_labels(&mut r, t, 0.2)).collect();
        if let Ok(l) = min_lsgt(&labeled, &inst.species) {
            prop_assert!(l.cost.total() >= sol.cost.total());
        }
    }

    #[test]
    fn trs_invariants(seed in any::<u64>(), n in 3usize..16) {
        let (s, d) = decomposed(seed, n);
        let sol = min_trs(&d, &s).unwrap();
        prop_assert!(triplet_respecting(&sol.tree, &d));
        for t in d.subtrees() {
            prop_assert!(sol.tree.displays(&t).unwrap());
        }
        // every node covering two or more subtrees keeps its leafset
        let init = d.init();
        for x in init.internal_nodes().filter(|&x| d.count(x) >= 2) {
            let leaves: Vec<usize> = init
                .leaves_under(x)
                .iter()
                .map(|&v| sol.tree.leaf_by_name(&init.gene(v).unwrap().name).unwrap())
                .collect();
            let y = sol.tree.lca_of(leaves.iter().copied()).unwrap();
            prop_assert_eq!(sol.tree.leaf_count(y), leaves.len());
        }
        let sgt = min_sgt(&d.subtrees(), &s).unwrap();
        prop_assert!(sgt.cost.total() <= sol.cost.total());
        prop_assert!(sol.cost.total() <= reconciliation_cost(init).total());
        let mut r = rng(seed);
        let labeled = SubtreeDecomposition::new(perturb_labels(&mut r, init, 0.3), d.roots().to_vec()).unwrap();
        match min_ltrs(&labeled, &s) {
            Ok(l) => prop_assert!(l.cost.total() >= sol.cost.total()),
            Err(TripletError::NoLabelCompatibleSolution) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}
