use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use asap_core::autodiff::Tensor;
use asap_core::graph::{known_stats, load_tu_dataset, synthetic_motif_dataset, Dataset, DatasetStats, Graph};
use asap_core::theory;
use asap_core::train::{
    evaluate, load_checkpoint, parse_grid, save_checkpoint, sweep, train, MetricsWriter, TrainConfig,
};

#[derive(Parser)]
#[command(name = "asap", version, about = "ASAP hierarchical graph pooling: training and theory checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a TU-format dataset and print its statistics.
    Ingest {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        name: String,
        /// Compare against the published statistics of the dataset.
        #[arg(long)]
        check_stats: bool,
    },
    /// Cross-validated training.
    Train {
        /// `synthetic` or a TU directory (the dataset name is the last path component).
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
        /// Where metrics.csv (and checkpoints) are written.
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
        /// Save the best-validation model of every fold.
        #[arg(long)]
        checkpoints: bool,
    },
    /// Train every point of a grid and rank by validation accuracy.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "synthetic")]
        dataset: String,
        #[arg(long, default_value = "runs/sweep")]
        out: PathBuf,
    },
    /// Accuracy of a saved checkpoint on a whole dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: String,
    },
    /// Brute-force checks of the connectivity and equivariance results.
    Theory {
        #[command(subcommand)]
        command: TheoryCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Path,
    Star,
    File,
}

#[derive(Subcommand)]
enum TheoryCommand {
    /// Optimum-nodes counts against the closed forms.
    Optimum {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long)]
        h: usize,
        /// Largest graph size for path/star families.
        #[arg(long, default_value_t = 20)]
        nmax: usize,
        /// Edge list ("u v" per line, 0-based) for `--family file`.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Worst-case minimum sampling ratio over all trees up to `nmax` nodes.
    Kstar {
        #[arg(long, default_value_t = 9)]
        nmax: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Medoid reach of pooled edges on a path after a power-p augmentation.
    Power {
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long, default_value_t = 1)]
        h: usize,
    },
    /// Permutation equivariance of the pooling operator on random graphs.
    Equivariance {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn load_dataset(spec: &str) -> Result<Dataset> {
    if spec == "synthetic" {
        return Ok(synthetic_motif_dataset(200, 7)?);
    }
    let path = Path::new(spec);
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .with_context(|| format!("cannot take a dataset name from {spec:?}"))?;
    // accept both DIR/NAME and DIR/NAME/raw layouts
    let dir =
        if path.join("raw").join(format!("{name}_A.txt")).exists() { path.join("raw") } else { path.to_path_buf() };
    load_tu_dataset(&dir, name).with_context(|| format!("loading {name} from {}", dir.display()))
}

fn print_stats(name: &str, s: &DatasetStats) {
    println!(
        "{name}: {} graphs, {} classes, mean nodes {:.2}, mean edges {:.2}",
        s.n_graphs, s.n_classes, s.mean_nodes, s.mean_edges
    );
}

fn run_train(
    dataset: &str,
    config: Option<&Path>,
    seeds: Option<usize>,
    folds: Option<usize>,
    out: &Path,
    checkpoints: bool,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    if let Some(f) = folds {
        cfg.folds = f;
    }
    cfg.validate()?;
    let ds = load_dataset(dataset)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.txt"), cfg.to_text())?;
    let mut writer = MetricsWriter::create(out.join("metrics.csv"))?;
    let start = Instant::now();
    let metrics = train(&cfg, &ds, Some(&mut writer), &mut |o| {
        println!(
            "seed {} fold {}: best epoch {}, val {:.4}, test {:.4}",
            o.result.seed, o.result.fold, o.result.best_epoch, o.result.val_acc, o.result.test_acc
        );
        if checkpoints {
            let path = out.join(format!("seed{}_fold{}.ckpt", o.result.seed, o.result.fold));
            save_checkpoint(path, &cfg, &o.model)?;
        }
        Ok(())
    })?;
    println!("{}", metrics.summary_line().trim_start_matches("# "));
    println!("metrics written to {} in {:.1}s", out.join("metrics.csv").display(), start.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest { dir, name, check_stats } => {
            let ds = load_tu_dataset(&dir, &name)?;
            let stats = ds.stats();
            print_stats(&name, &stats);
            if check_stats {
                let Some(reference) = known_stats(&name) else {
                    bail!("no published statistics for {name}");
                };
                print_stats("published", &reference);
                if !stats.matches(&reference) {
                    bail!("statistics of {name} differ from the published table");
                }
                println!("statistics match");
            }
        }
        Command::Train { dataset, config, seeds, folds, out, checkpoints } => {
            run_train(&dataset, config.as_deref(), seeds, folds, &out, checkpoints)?
        }
        Command::Sweep { grid, dataset, out } => {
            let text = std::fs::read_to_string(&grid).with_context(|| format!("reading {}", grid.display()))?;
            let grid = parse_grid(&text)?;
            let ds = load_dataset(&dataset)?;
            std::fs::create_dir_all(&out)?;
            let rows = sweep(&grid, &ds, Some(&out))?;
            let mut csv = csv::Writer::from_path(out.join("sweep.csv"))?;
            csv.write_record(["label", "pool", "val_mean", "val_std", "test_mean", "test_std"])?;
            println!("{:<40} {:<28} {:>15} {:>15}", "point", "pooling", "val", "test");
            for row in &rows {
                let (vm, vs) = row.metrics.val();
                let (tm, ts) = row.metrics.test();
                println!(
                    "{:<40} {:<28} {:>7.4}±{:<7.4} {:>7.4}±{:<7.4}",
                    row.label,
                    row.config.pool_label(),
                    vm,
                    vs,
                    tm,
                    ts
                );
                csv.write_record([
                    row.label.clone(),
                    row.config.pool_label(),
                    vm.to_string(),
                    vs.to_string(),
                    tm.to_string(),
                    ts.to_string(),
                ])?;
            }
            csv.flush()?;
        }
        Command::Evaluate { checkpoint, dataset } => {
            let (cfg, model) = load_checkpoint(&checkpoint)?;
            let ds = load_dataset(&dataset)?;
            let all: Vec<usize> = (0..ds.len()).collect();
            let (acc, loss) = evaluate(&model, &ds, &all, cfg.batch_size)?;
            println!("accuracy {acc:.4}, loss {loss:.4} on {} graphs", ds.len());
        }
        Command::Theory { command } => theory(command)?,
    }
    Ok(())
}

/// Prints rows as an aligned table and optionally writes them as CSV.
fn emit(header: &[&str], rows: &[Vec<String>], csv_path: Option<&Path>) -> Result<()> {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line =
        |cells: Vec<&str>| cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ");
    println!("{}", line(header.to_vec()));
    for r in rows {
        println!("{}", line(r.iter().map(String::as_str).collect()));
    }
    if let Some(path) = csv_path {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        println!("table written to {}", path.display());
    }
    Ok(())
}

fn read_edge_list(path: &Path) -> Result<Graph> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let ends: Vec<usize> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{} line {}: expected two node ids", path.display(), i + 1))?;
        let [u, v] = ends[..] else { bail!("{} line {}: expected two node ids", path.display(), i + 1) };
        edges.push((u, v));
    }
    let n = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
    Ok(Graph::from_edges(n, &edges, Tensor::ones(n, 1), None)?)
}

fn yes(b: bool) -> String {
    if b { "yes" } else { "NO" }.to_string()
}

fn theory(command: TheoryCommand) -> Result<()> {
    match command {
        TheoryCommand::Optimum { family, h, nmax, graph, csv } => {
            let (closed, build): (Option<theory::Family>, fn(usize, usize) -> asap_core::Result<Graph>) = match family {
                Family::Path => (Some(theory::Family::Path), |n, _| theory::path_graph(n)),
                Family::Star => (Some(theory::Family::BalancedStarlike), theory::balanced_starlike),
                Family::File => (None, |_, _| unreachable!()),
            };
            let Some(closed) = closed else {
                let path = graph.context("--family file needs --graph PATH")?;
                let r = theory::optimum_nodes_bruteforce(&read_edge_list(&path)?, h)?;
                let witness = r.witness.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
                return emit(
                    &["n", "h", "n_star", "witness"],
                    &[vec![r.n_nodes.to_string(), h.to_string(), r.n_star.to_string(), witness]],
                    csv.as_deref(),
                );
            };
            let mut rows = Vec::new();
            let mut mismatches = 0;
            for n in 1..=nmax {
                let brute = theory::optimum_nodes_bruteforce(&build(n, h)?, h)?.n_star;
                let formula = theory::closed_form_optimum(closed, n, h)?;
                mismatches += usize::from(brute != formula);
                rows.push(vec![
                    n.to_string(),
                    h.to_string(),
                    brute.to_string(),
                    formula.to_string(),
                    yes(brute == formula),
                ]);
            }
            emit(&["n", "h", "brute_force", "closed_form", "match"], &rows, csv.as_deref())?;
            if mismatches > 0 {
                bail!("{mismatches} sizes disagree with the closed form for {closed}");
            }
            println!("{closed}: closed form matches brute force for N = 1..={nmax}, h = {h}");
        }
        TheoryCommand::Kstar { nmax, csv } => {
            let report = theory::verify_tree_theorem(nmax)?;
            let rows: Vec<Vec<String>> = report
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        r.labeled_trees.to_string(),
                        r.trees.to_string(),
                        r.topk_worst.to_string(),
                        r.topk_bound.to_string(),
                        r.asap_worst.to_string(),
                        r.asap_bound.to_string(),
                        yes(r.star_attains_topk),
                        yes(r.starlike_attains_asap),
                        yes(r.asap_never_worse),
                    ]
                })
                .collect();
            emit(
                &[
                    "n",
                    "labeled",
                    "trees",
                    "topk_worst",
                    "topk_bound",
                    "asap_worst",
                    "asap_bound",
                    "star_worst",
                    "starlike_worst",
                    "asap<=topk",
                ],
                &rows,
                csv.as_deref(),
            )?;
            println!();
            println!(
                "paths (k* tends to 1/(rf+1): {} for rf=1, {} for rf=3)",
                theory::PathRow::TOPK_LIMIT,
                theory::PathRow::ASAP_LIMIT
            );
            let paths: Vec<Vec<String>> = report
                .paths
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        r.topk.to_string(),
                        format!("{:.3}", r.topk.value()),
                        r.asap.to_string(),
                        format!("{:.3}", r.asap.value()),
                    ]
                })
                .collect();
            emit(&["n", "topk", "topk_value", "asap", "asap_value"], &paths, None)?;
            if !report.pass() {
                bail!("the tree enumeration contradicts the bound");
            }
            println!("worst-case k* matches the starlike bound for N = 2..={nmax}; ASAP never needs more than TopK");
        }
        TheoryCommand::Power { n, p, h } => {
            let r = theory::verify_graph_power(&theory::path_graph(n)?, p, h)?;
            emit(
                &["n", "p", "h", "topk_reach", "expected", "asap_reach", "expected"],
                &[vec![
                    n.to_string(),
                    p.to_string(),
                    h.to_string(),
                    r.topk_reach.to_string(),
                    r.expected_topk().to_string(),
                    r.asap_reach.to_string(),
                    r.expected_asap().to_string(),
                ]],
                None,
            )?;
            if !r.pass() {
                bail!("graph-power reach differs from p and p + 2h");
            }
        }
        TheoryCommand::Equivariance { trials, seed, csv } => {
            let r = theory::verify_equivariance(trials, seed)?;
            let tie = theory::tie_counterexample()?;
            let rows = vec![
                vec![
                    "distinct_fitness".into(),
                    r.trials.to_string(),
                    r.passed.to_string(),
                    format!("{:.3e}", r.max_error),
                    r.resampled.to_string(),
                ],
                vec!["tied_fitness".into(), "1".into(), "0".into(), format!("{:.3e}", tie.error), "0".into()],
            ];
            emit(&["case", "trials", "passed", "max_error", "redrawn"], &rows, csv.as_deref())?;
            println!(
                "tied case: selected {:?} before and {:?} after reversing node order",
                tie.selected, tie.relabeled_selected
            );
            if !r.pass() {
                bail!("equivariance failed on trials {:?}", r.failures);
            }
        }
    }
    Ok(())
}
