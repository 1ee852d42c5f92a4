use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use suget_core::consistency::{check_consistency, Consistency};
use suget_core::newick::{parse_newick_many, serialize_newick};
use suget_core::oracle::{brute_min, Constraint, OracleOutcome, MAX_ORACLE_LEAVES};
use suget_core::reconciliation::{labeled_reconciliation_cost, lca_reconcile, reconciliation_cost};
use suget_core::simulate;
use suget_core::supertree::{self, SolveOptions};
use suget_core::tree::{GeneTree, SpeciesTree};
use suget_core::triplet::{
    self, correct, decompose_at_highest_speciations, CorrectionReport, Mode, SubtreeDecomposition,
};

#[derive(Parser)]
#[command(name = "suget", version, about = "Gene tree construction and correction by minimum-cost supertrees")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct Input {
    /// Species tree (Newick)
    #[arg(short, long)]
    species: PathBuf,
    /// Gene tree files (Newick/NHX, one or more trees each)
    #[arg(required = true)]
    genes: Vec<PathBuf>,
}

#[derive(Args, Clone, Copy)]
struct Limits {
    /// Refuse supertree instances with more input trees than this
    #[arg(long, env = "SUGET_MAX_K", default_value_t = 8)]
    max_k: usize,
    /// Print solver statistics to stderr
    #[arg(long)]
    stats: bool,
}

#[derive(Subcommand)]
enum Command {
    /// LCA-reconcile each tree and print it with its cost
    Reconcile {
        #[command(flatten)]
        input: Input,
        /// Score each tree under its own event labels
        #[arg(long)]
        labeled: bool,
    },
    /// Decide whether all input trees admit a common supertree
    Check {
        #[command(flatten)]
        input: Input,
    },
    /// Minimum-cost supertree of all input trees
    Minsgt {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        limits: Limits,
        /// Run the DP on a covering core of the inputs
        #[arg(long)]
        core: bool,
    },
    /// Minimum-cost label-compatible supertree of all (labeled) input trees
    Minlsgt {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        limits: Limits,
        #[arg(long)]
        core: bool,
    },
    /// Recombine each tree's subtrees below its highest duplications
    Mintrs {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        stats: bool,
    },
    /// As mintrs, honoring the subtrees' event labels
    Minltrs {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        stats: bool,
    },
    /// Correct each tree and report the change in cost
    Correct {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "trs")]
        mode: Mode,
        #[arg(long, value_enum, default_value_t = Report::Nhx)]
        report: Report,
        #[arg(long, env = "SUGET_MAX_K", default_value_t = 8)]
        max_k: usize,
    },
    /// Brute-force reference solution (small instances only)
    Oracle {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = Problem::Sgt)]
        problem: Problem,
        #[arg(long, env = "SUGET_MAX_ORACLE_N", default_value_t = MAX_ORACLE_LEAVES)]
        max_n: usize,
    },
    /// Generate a random instance into a directory
    Gen {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        n_species: usize,
        #[arg(long, default_value_t = 7)]
        n_genes: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0.2)]
        dup: f64,
        #[arg(long, default_value_t = 0.1)]
        loss: f64,
        #[arg(long, value_enum, default_value_t = GenKind::Shatter)]
        kind: GenKind,
        /// Number of trees for `--kind correct`
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time mintrs on caterpillar stress instances
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = vec![200, 400, 800])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Report {
    Nhx,
    Tsv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Problem {
    Sgt,
    Lsgt,
    Trs,
    Ltrs,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    /// One true tree shattered into k overlapping inputs
    Shatter,
    /// Perturbed families for `correct`
    Correct,
}

/// Configuration or parse failure; exits with status 2.
struct Fatal(String);

impl<E: Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

struct Loaded {
    species: Arc<SpeciesTree>,
    /// (origin, tree)
    trees: Vec<(String, GeneTree)>,
}

fn load(input: &Input) -> Result<Loaded, Fatal> {
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|e| Fatal(format!("{}: {e}", p.display())))
    };
    let species = SpeciesTree::parse(read(&input.species)?.trim())
        .map_err(|e| Fatal(format!("{}: {e}", input.species.display())))?;
    let species = Arc::new(species);
    let mut trees = Vec::new();
    for path in &input.genes {
        let raws = parse_newick_many(&read(path)?)
            .map_err(|e| Fatal(format!("{}: {e}", path.display())))?;
        for (i, raw) in raws.iter().enumerate() {
            let origin = format!("{}#{}", path.display(), i + 1);
            let t = GeneTree::from_raw(raw, &species).map_err(|e| Fatal(format!("{origin}: {e}")))?;
            trees.push((origin, t));
        }
    }
    if trees.is_empty() {
        return Err(Fatal("no gene trees in input".into()));
    }
    Ok(Loaded { species, trees })
}

fn refuse_k(k: usize, max_k: usize) -> Result<(), String> {
    if k > max_k {
        Err(format!(
            "{k} input trees exceed --max-k {max_k}: the supertree DP examines up to 4^k/2 - 1 \
             bipartitions per subproblem (raise --max-k or SUGET_MAX_K to proceed)"
        ))
    } else {
        Ok(())
    }
}

/// Input labels when complete, LCA labels otherwise.
fn labeled_or_lca(g: &GeneTree) -> GeneTree {
    if g.is_labeled() {
        g.clone()
    } else {
        lca_reconcile(g)
    }
}

fn decomposition(g: &GeneTree) -> Result<SubtreeDecomposition, triplet::TripletError> {
    decompose_at_highest_speciations(&labeled_or_lca(g))
}

/// Runs `f` on every tree in parallel and prints results in input order.
/// Returns true if any tree failed.
fn batch<F>(trees: &[(String, GeneTree)], f: F) -> bool
where
    F: Fn(&GeneTree) -> Result<(String, Option<String>), String> + Sync,
{
    let results: Vec<_> = trees.par_iter().map(|(_, t)| f(t)).collect();
    let mut failed = false;
    for ((origin, _), r) in trees.iter().zip(results) {
        match r {
            Ok((out, err)) => {
                print!("{out}");
                if let Some(e) = err {
                    eprintln!("{origin}: {e}");
                }
            }
            Err(e) => {
                failed = true;
                eprintln!("error: {origin}: {e}");
            }
        }
    }
    failed
}

fn tsv_row(name: &str, r: &CorrectionReport) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{:.2}\t{}\t{}\t{}\n",
        name,
        r.n_leaves,
        r.k,
        r.original_cost.total(),
        r.corrected_cost.total(),
        r.reduction_pct(),
        r.high_dups_before,
        r.high_dups_after,
        r.elapsed.as_millis()
    )
}

fn run(cli: Cli) -> Result<bool, Fatal> {
    match cli.cmd {
        Command::Reconcile { input, labeled } => {
            let data = load(&input)?;
            Ok(batch(&data.trees, |g| {
                let (tree, cost) = if labeled {
                    let rep = labeled_reconciliation_cost(g).map_err(|e| e.to_string())?;
                    (g.clone(), rep.cost)
                } else {
                    (lca_reconcile(g), reconciliation_cost(g).cost)
                };
                Ok((format!("{}\n{cost}\n", tree.to_newick()), None))
            }))
        }
        Command::Check { input } => {
            let data = load(&input)?;
            let trees: Vec<GeneTree> = data.trees.into_iter().map(|(_, t)| t).collect();
            match check_consistency(&trees)? {
                Consistency::Consistent(raw) => {
                    println!("consistent");
                    println!("{}", serialize_newick(&raw));
                    Ok(false)
                }
                Consistency::Inconsistent(w) => {
                    println!("inconsistent");
                    eprintln!("witness: {w}");
                    Ok(true)
                }
            }
        }
        Command::Minsgt { input, limits, core } => supertree_cmd(&input, limits, false, core),
        Command::Minlsgt { input, limits, core } => supertree_cmd(&input, limits, true, core),
        Command::Mintrs { input, stats } => trs_cmd(&input, stats, false),
        Command::Minltrs { input, stats } => trs_cmd(&input, stats, true),
        Command::Correct {
            input,
            mode,
            report,
            max_k,
        } => {
            let data = load(&input)?;
            let species = &data.species;
            if let Report::Tsv = report {
                println!("name\tn_leaves\tk_subtrees\torig_cost\tnew_cost\treduction_pct\thigh_dups_before\thigh_dups_after\tmillis");
            }
            let names: Vec<String> = data
                .trees
                .iter()
                .enumerate()
                .map(|(i, (_, t))| t.name().map_or_else(|| format!("tree{}", i + 1), str::to_string))
                .collect();
            let results: Vec<_> = data
                .trees
                .par_iter()
                .map(|(_, g)| {
                    if matches!(mode, Mode::Sgt | Mode::Lsgt) {
                        let k = decomposition(g).map_err(|e| e.to_string())?.k();
                        refuse_k(k, max_k)?;
                    }
                    correct(g, species, mode).map_err(|e| e.to_string())
                })
                .collect();
            let mut failed = false;
            for (((origin, _), name), r) in data.trees.iter().zip(&names).zip(results) {
                match r {
                    Ok(rep) => {
                        match report {
                            Report::Tsv => print!("{}", tsv_row(name, &rep)),
                            Report::Nhx => {
                                println!("{}", rep.corrected.to_newick());
                                println!("{}", rep.corrected_cost);
                            }
                        }
                        if let Some(n) = &rep.notice {
                            eprintln!("{origin}: {n}");
                        }
                    }
                    Err(e) => {
                        failed = true;
                        eprintln!("error: {origin}: {e}");
                    }
                }
            }
            Ok(failed)
        }
        Command::Oracle {
            input,
            problem,
            max_n,
        } => {
            let data = load(&input)?;
            let cap = max_n.min(MAX_ORACLE_LEAVES);
            let species = &data.species;
            let show = |out: OracleOutcome| match out {
                OracleOutcome::Feasible { cost, tree } => Ok((format!("{}\n{cost}\n", tree.to_newick()), None)),
                OracleOutcome::Infeasible => Err("infeasible: no tree satisfies the constraints".to_string()),
            };
            match problem {
                Problem::Sgt | Problem::Lsgt => {
                    let trees: Vec<GeneTree> = data.trees.iter().map(|(_, t)| t.clone()).collect();
                    let mut genes: Vec<&str> = trees.iter().flat_map(|t| t.gene_names()).collect();
                    genes.sort_unstable();
                    genes.dedup();
                    if genes.len() > cap {
                        return Err(Fatal(format!(
                            "{} genes exceed the oracle cap of {cap}",
                            genes.len()
                        )));
                    }
                    let c = if let Problem::Sgt = problem {
                        Constraint::Display
                    } else {
                        Constraint::DisplayLabels
                    };
                    match brute_min(&trees, species, c).map_err(|e| e.to_string()).and_then(show) {
                        Ok((out, _)) => {
                            print!("{out}");
                            Ok(false)
                        }
                        Err(e) => {
                            eprintln!("error: {e}");
                            Ok(true)
                        }
                    }
                }
                Problem::Trs | Problem::Ltrs => {
                    if let Some((o, t)) = data.trees.iter().find(|(_, t)| t.leaves().len() > cap) {
                        return Err(Fatal(format!(
                            "{o}: {} genes exceed the oracle cap of {cap}",
                            t.leaves().len()
                        )));
                    }
                    Ok(batch(&data.trees, |g| {
                        let d = decomposition(g).map_err(|e| e.to_string())?;
                        let c = if let Problem::Trs = problem {
                            Constraint::DisplayTriplets(d.init())
                        } else {
                            Constraint::All(d.init())
                        };
                        brute_min(&d.subtrees(), species, c)
                            .map_err(|e| e.to_string())
                            .and_then(show)
                    }))
                }
            }
        }
        Command::Gen {
            seed,
            n_species,
            n_genes,
            k,
            dup,
            loss,
            kind,
            count,
            out,
        } => {
            fs::create_dir_all(&out)?;
            let write = |name: &str, lines: Vec<String>| -> Result<PathBuf, Fatal> {
                let p = out.join(name);
                fs::write(&p, lines.join("\n") + "\n").map_err(|e| Fatal(format!("{}: {e}", p.display())))?;
                Ok(p)
            };
            let mut written = Vec::new();
            match kind {
                GenKind::Shatter => {
                    let inst = simulate::gen_instance(seed, n_species, n_genes, k, dup, loss);
                    written.push(write("species.nwk", vec![serialize_newick(&inst.species.to_raw())])?);
                    written.push(write("genes.nwk", inst.trees.iter().map(|t| t.to_newick()).collect())?);
                    written.push(write("truth.nwk", vec![inst.truth.to_newick()])?);
                }
                GenKind::Correct => {
                    let mut rng = simulate::rng(seed);
                    let species = Arc::new(simulate::random_species_tree(&mut rng, n_species.max(1)));
                    let mut truths = Vec::new();
                    let mut perturbed = Vec::new();
                    for i in 0..count {
                        let g = simulate::random_gene_tree(&mut rng, &species, n_genes, dup, loss)
                            .with_name(Some(format!("fam{}", i + 1)));
                        let p = simulate::perturb_tree(&mut rng, &g, 2, 3);
                        truths.push(g.without_labels().to_newick());
                        perturbed.push(p.to_newick());
                    }
                    written.push(write("species.nwk", vec![serialize_newick(&species.to_raw())])?);
                    written.push(write("genes.nwk", perturbed)?);
                    written.push(write("truth.nwk", truths)?);
                }
            }
            for p in written {
                println!("{}", p.display());
            }
            Ok(false)
        }
        Command::Bench { sizes, repeats } => {
            println!("n_leaves\tk_subtrees\tcost\tmillis\tratio");
            let mut prev: Option<f64> = None;
            for n in sizes {
                let (species, g, roots) = simulate::caterpillar_instance(n);
                let leaves = g.leaves().len();
                let d = SubtreeDecomposition::new(g, roots)?;
                let mut best = f64::INFINITY;
                let mut cost = 0;
                for _ in 0..repeats.max(1) {
                    let t = Instant::now();
                    let sol = triplet::min_trs(&d, &species)?;
                    best = best.min(t.elapsed().as_secs_f64() * 1000.0);
                    cost = sol.cost.total();
                }
                let ratio = prev.map_or_else(|| "-".to_string(), |p| format!("{:.2}", best / p));
                println!("{leaves}\t{}\t{cost}\t{best:.1}\t{ratio}", d.k());
                prev = Some(best);
            }
            Ok(false)
        }
    }
}

fn supertree_cmd(input: &Input, limits: Limits, labeled: bool, core: bool) -> Result<bool, Fatal> {
    let data = load(input)?;
    let trees: Vec<GeneTree> = data.trees.into_iter().map(|(_, t)| t).collect();
    if let Err(e) = refuse_k(trees.len(), limits.max_k) {
        return Err(Fatal(e));
    }
    match supertree::solve(&trees, &data.species, SolveOptions { labeled, core }) {
        Ok(sol) => {
            println!("{}", sol.tree.to_newick());
            println!("{}", sol.cost);
            if limits.stats {
                eprintln!("stats: {}", sol.stats);
            }
            Ok(false)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(true)
        }
    }
}

fn trs_cmd(input: &Input, stats: bool, labeled: bool) -> Result<bool, Fatal> {
    let data = load(input)?;
    let species = &data.species;
    Ok(batch(&data.trees, |g| {
        let d = decomposition(g).map_err(|e| e.to_string())?;
        let sol = if labeled {
            triplet::min_ltrs(&d, species)
        } else {
            triplet::min_trs(&d, species)
        }
        .map_err(|e| e.to_string())?;
        let note = stats.then(|| format!("k={} {}", d.k(), sol.stats));
        Ok((format!("{}\n{}\n", sol.tree.to_newick(), sol.cost), note))
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(Fatal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
