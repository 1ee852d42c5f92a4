use rand::Rng;

use suget_core::oracle::{brute_min, Constraint, OracleOutcome};
use suget_core::simulate::{gen_instance, perturb_labels, rng};
use suget_core::supertree::{min_lsgt, min_lsgt_core, min_sgt, min_sgt_core, SupertreeError};

#[test]
fn min_sgt_matches_brute_force() {
    let mut r = rng(101);
    for _ in 0..150 {
        let inst = gen_instance(r.gen(), r.gen_range(2..6), r.gen_range(2..8), r.gen_range(1..4), 0.3, 0.15);
        let sol = min_sgt(&inst.trees, &inst.species).unwrap();
        let want = brute_min(&inst.trees, &inst.species, Constraint::Display).unwrap();
        assert_eq!(Some(sol.cost.total()), want.cost().map(|c| c.total()), "trees: {:?}", inst.trees.iter().map(|t| t.to_newick()).collect::<Vec<_>>());
        for t in &inst.trees {
            assert!(sol.tree.displays(t).unwrap());
        }
        let core = min_sgt_core(&inst.trees, &inst.species).unwrap();
        assert_eq!(core.cost.total(), sol.cost.total());
    }
}

#[test]
fn min_lsgt_matches_brute_force() {
    let mut r = rng(202);
    let (mut feasible, mut infeasible) = (0, 0);
    for _ in 0..150 {
        let inst = gen_instance(r.gen(), r.gen_range(2..6), r.gen_range(2..8), r.gen_range(1..4), 0.3, 0.15);
        let trees: Vec<_> = inst.trees.iter().map(|t| perturb_labels(&mut r, t, 0.3)).collect();
        let want = brute_min(&trees, &inst.species, Constraint::DisplayLabels).unwrap();
        let got = min_lsgt(&trees, &inst.species);
        let core = min_lsgt_core(&trees, &inst.species);
        match (&got, &want) {
            (Ok(sol), OracleOutcome::Feasible { cost, .. }) => {
                feasible += 1;
                assert_eq!(sol.cost.total(), cost.total());
                assert_eq!(core.as_ref().unwrap().cost.total(), cost.total());
                for t in &trees {
                    assert!(sol.tree.displays(t).unwrap());
                }
            }
            (Err(SupertreeError::NoLabelCompatibleSolution), OracleOutcome::Infeasible) => {
                infeasible += 1;
                assert!(matches!(core, Err(SupertreeError::NoLabelCompatibleSolution)));
            }
            _ => panic!(
                "solver {:?} vs oracle {:?} on {:?}",
                got.map(|s| s.cost),
                want.cost(),
                trees.iter().map(|t| t.to_newick()).collect::<Vec<_>>()
            ),
        }
    }
    assert!(feasible > 0);
    eprintln!("feasible={feasible} infeasible={infeasible}");
}
