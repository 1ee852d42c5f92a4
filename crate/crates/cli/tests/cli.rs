use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn suget(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_suget"))
        .args(args)
        .env_remove("SUGET_MAX_K")
        .env_remove("SUGET_MAX_ORACLE_N")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Blanks the timing column, which varies between runs.
fn mask_millis(tsv: &str) -> String {
    tsv.lines()
        .enumerate()
        .map(|(i, line)| {
            if i == 0 {
                return line.to_string();
            }
            let mut cols: Vec<&str> = line.split('\t').collect();
            let last = cols.len() - 1;
            cols[last] = "*";
            cols.join("\t")
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

#[test]
fn correct_tsv_golden() {
    let s = fixture("species.nwk");
    let g = fixture("families.nwk");
    let out = suget(&["correct", "--mode=trs", "--report=tsv", "-s", s.to_str().unwrap(), g.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = mask_millis(&stdout(&out));
    assert_eq!(got.lines().count(), 4);
    let want = std::fs::read_to_string(fixture("families.correct.tsv")).unwrap();
    assert_eq!(got, want);
}

#[test]
fn check_exit_codes() {
    let s = fixture("species_abcd.nwk");
    let ok = suget(&["check", "-s", s.to_str().unwrap(), fixture("consistent.nwk").to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).starts_with("consistent"));
    let bad = suget(&["check", "-s", s.to_str().unwrap(), fixture("conflict.nwk").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    let err = String::from_utf8(bad.stderr).unwrap();
    assert!(err.contains("a1__a") && err.contains("b1__b") && err.contains("c1__c"), "{err}");
}

#[test]
fn minsgt_prints_tree_and_cost() {
    let s = fixture("species_abcd.nwk");
    let out = suget(&["minsgt", "--stats", "-s", s.to_str().unwrap(), fixture("consistent.nwk").to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].ends_with(';'));
    // the only supertree is ((a,b),(c,d)): a duplication at the root
    assert_eq!(lines[1], "cost=1+3=4");
    assert!(String::from_utf8(out.stderr).unwrap().contains("subproblems="));
}

#[test]
fn max_k_refusal() {
    let s = fixture("species_abcd.nwk");
    let g = fixture("consistent.nwk");
    let out = suget(&["minsgt", "--max-k", "1", "-s", s.to_str().unwrap(), g.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("4^k/2"));
    let via_env = Command::new(env!("CARGO_BIN_EXE_suget"))
        .args(["minsgt", "-s", s.to_str().unwrap(), g.to_str().unwrap()])
        .env("SUGET_MAX_K", "1")
        .output()
        .unwrap();
    assert_eq!(via_env.status.code(), Some(2));
}

#[test]
fn inconsistent_minsgt_fails_per_instance() {
    let s = fixture("species_abcd.nwk");
    let out = suget(&["minsgt", "-s", s.to_str().unwrap(), fixture("conflict.nwk").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn parse_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.nwk");
    std::fs::write(&bad, "((a1__a,b1__b);\n").unwrap();
    let s = fixture("species_abcd.nwk");
    let out = suget(&["reconcile", "-s", s.to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("bad.nwk"));
    let missing = suget(&["reconcile", "-s", "/nonexistent/species.nwk", bad.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn oracle_agrees_with_solver_and_refuses_large_inputs() {
    let s = fixture("species.nwk");
    let g = fixture("families.nwk");
    let solver = suget(&["mintrs", "-s", s.to_str().unwrap(), g.to_str().unwrap()]);
    let oracle = suget(&["oracle", "--problem", "trs", "-s", s.to_str().unwrap(), g.to_str().unwrap()]);
    // 9 genes per family is above the cap of 8
    assert_eq!(oracle.status.code(), Some(2));
    assert!(solver.status.success());
    let small = fixture("consistent.nwk");
    let abcd = fixture("species_abcd.nwk");
    let a = suget(&["minsgt", "-s", abcd.to_str().unwrap(), small.to_str().unwrap()]);
    let b = suget(&["oracle", "-s", abcd.to_str().unwrap(), small.to_str().unwrap()]);
    assert_eq!(stdout(&a).lines().nth(1), stdout(&b).lines().nth(1));
    let capped = Command::new(env!("CARGO_BIN_EXE_suget"))
        .args(["oracle", "-s", abcd.to_str().unwrap(), small.to_str().unwrap()])
        .env("SUGET_MAX_ORACLE_N", "3")
        .output()
        .unwrap();
    assert_eq!(capped.status.code(), Some(2));
}

#[test]
fn gen_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = suget(&["gen", "--seed", "42", "--out", d.path().to_str().unwrap()]);
        assert!(out.status.success());
    }
    for f in ["species.nwk", "genes.nwk", "truth.nwk"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
    // generated inputs feed straight into the solvers
    let s = a.path().join("species.nwk");
    let g = a.path().join("genes.nwk");
    let out = suget(&["check", "-s", s.to_str().unwrap(), g.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn batch_output_keeps_input_order() {
    let s = fixture("species.nwk");
    let g = fixture("families.nwk");
    let out = suget(&["reconcile", "-s", s.to_str().unwrap(), g.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    let names: Vec<&str> = text
        .lines()
        .step_by(2)
        .map(|l| l.rsplit(')').next().unwrap().split('[').next().unwrap())
        .collect();
    assert_eq!(names, ["fam1", "fam2", "fam3"]);
}
