//! Command-line front end. Every command is a thin shell over library calls.
//!
//! Exit codes: 0 success or isomorphic, 1 mismatch, 2 budget or protocol
//! fault, 64 usage.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::constructs::Character;
use crate::engine::{EngineError, Transcript};
use crate::mapper::reconstruct;
use crate::portgraph::{
    directed_cycle, random_strongly_connected, rooted_port_isomorphic, tree_loop_family, validate, Edge, PortGraph,
};
use crate::protocol::{budget_mult_from_env, run_bca_isolated, run_gtd_checked, run_rca_isolated, tick_budget};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_FAULT: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "snakenet", version, about = "Simulate self-mapping networks of anonymous finite-state processors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a generated graph as JSON.
    Generate {
        #[command(flatten)]
        gen: GenSpec,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Map a network from its root and compare the map with the network.
    Run {
        #[command(flatten)]
        src: GraphSource,
        /// Reconstruct from a saved transcript instead of simulating.
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long)]
        transcript_out: Option<PathBuf>,
        #[arg(long)]
        map_out: Option<PathBuf>,
        #[arg(long)]
        budget_mult: Option<u64>,
    },
    /// Run one isolated root call and print its trace.
    Rca {
        #[command(flatten)]
        src: GraphSource,
        /// Calling node.
        #[arg(long)]
        node: usize,
        /// Payload token, e.g. `FWD(1,2)` or `BACK`.
        #[arg(long, default_value = "BACK")]
        payload: String,
        /// Write the trace as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one isolated backwards call over a wire and print its trace.
    Bca {
        #[command(flatten)]
        src: GraphSource,
        /// Index of the wire in the graph's edge list.
        #[arg(long)]
        edge: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time full runs over a family and print CSV.
    Bench {
        #[arg(long, value_enum)]
        family: Family,
        /// Node counts (random, cycle) or depths (treeloop), comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        delta: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        budget_mult: Option<u64>,
    },
    /// Write a graph in Graphviz DOT.
    ExportDot {
        #[command(flatten)]
        src: GraphSource,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    Random,
    Cycle,
    Treeloop,
}

#[derive(Args, Debug)]
struct GenSpec {
    #[arg(long, value_enum)]
    family: Option<Family>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 3)]
    delta: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    depth: Option<usize>,
    /// Leaf order for treeloop, comma separated; identity when omitted.
    #[arg(long, value_delimiter = ',')]
    perm: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
struct GraphSource {
    /// Graph JSON file.
    #[arg(long, conflicts_with = "family")]
    graph: Option<PathBuf>,
    #[command(flatten)]
    gen: GenSpec,
}

struct Failure {
    code: i32,
    msg: String,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, msg: msg.into() }
}

fn fault(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_FAULT, msg: msg.into() }
}

fn engine_fault(e: EngineError) -> Failure {
    match e {
        EngineError::InvalidGraph(m) => usage(format!("invalid graph: {m}")),
        e => fault(e.to_string()),
    }
}

impl GenSpec {
    fn build(&self) -> Result<PortGraph, Failure> {
        let family = self.family.ok_or_else(|| usage("give --graph or --family"))?;
        let g = match family {
            Family::Random => {
                let n = self.n.ok_or_else(|| usage("--family random needs --n"))?;
                random_strongly_connected(n, self.delta, self.seed)
            }
            Family::Cycle => directed_cycle(self.n.ok_or_else(|| usage("--family cycle needs --n"))?),
            Family::Treeloop => {
                let depth = self.depth.ok_or_else(|| usage("--family treeloop needs --depth"))?;
                let leaves = 1usize.checked_shl(depth as u32).filter(|&l| depth < 16 && l > 0).ok_or_else(|| usage("depth too large"))?;
                let perm = self.perm.clone().unwrap_or_else(|| (1..=leaves).collect());
                tree_loop_family(depth, &perm)
            }
        };
        g.map_err(|e| usage(e.to_string()))
    }
}

impl GraphSource {
    fn load(&self) -> Result<PortGraph, Failure> {
        let g = match &self.graph {
            Some(p) => PortGraph::from_json(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
            None => self.gen.build()?,
        };
        let report = validate(&g);
        if !report.is_valid() {
            return Err(usage(format!("invalid graph: {report}")));
        }
        Ok(g)
    }
}

fn read(p: &Path) -> Result<String, Failure> {
    fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))
}

fn emit(out: &mut dyn Write, path: &Option<PathBuf>, body: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, body).map_err(|e| fault(format!("{}: {e}", p.display()))),
        None => writeln!(out, "{body}").map_err(|e| fault(e.to_string())),
    }
}

fn resolve_mult(flag: Option<u64>) -> Result<u64, Failure> {
    match flag {
        Some(0) => Err(usage("--budget-mult must be at least 1")),
        Some(k) => Ok(k),
        None => budget_mult_from_env().map_err(usage),
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.msg);
            f.code
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    match cmd {
        Command::Generate { gen, out: path } => {
            let g = gen.build()?;
            emit(out, &path, &g.to_json())?;
            let _ = writeln!(err, "N={} delta={} D={}", g.nodes, g.delta, g.diameter());
            Ok(EXIT_OK)
        }
        Command::Run { src, replay, transcript_out, map_out, budget_mult } => {
            let g = src.load()?;
            let mult = resolve_mult(budget_mult)?;
            let (transcript, ticks) = match &replay {
                Some(p) => (Transcript::from_json(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?, 0),
                None => {
                    let budget = tick_budget(&g, mult);
                    let r = run_gtd_checked(&g, budget, false).map_err(|e| match e {
                        EngineError::TickBudgetExceeded(b) => fault(format!(
                            "tick budget {b} exceeded (N={}, delta={}, D={}, multiplier {mult})",
                            g.nodes,
                            g.delta,
                            g.diameter()
                        )),
                        e => engine_fault(e),
                    })?;
                    (r.transcript, r.ticks)
                }
            };
            if let Some(p) = &transcript_out {
                fs::write(p, transcript.to_json()).map_err(|e| fault(format!("{}: {e}", p.display())))?;
            }
            let map = reconstruct(&transcript);
            let iso = match &map {
                Ok(h) => rooted_port_isomorphic(&g, h),
                Err(e) => {
                    let _ = writeln!(err, "reconstruction failed: {e}");
                    false
                }
            };
            if let (Some(p), Ok(h)) = (&map_out, &map) {
                fs::write(p, h.to_json()).map_err(|e| fault(format!("{}: {e}", p.display())))?;
            }
            let verdict = if iso { "ISOMORPHIC" } else { "MISMATCH" };
            let _ = writeln!(out, "VERDICT={verdict}\nTICKS={ticks}\nN={}\nD={}", g.nodes, g.diameter());
            Ok(if iso { EXIT_OK } else { EXIT_MISMATCH })
        }
        Command::Rca { src, node, payload, out: path } => {
            let g = src.load()?;
            let payload: Character = payload.parse().map_err(|e| usage(format!("payload: {e}")))?;
            let t = run_rca_isolated(&g, node, payload).map_err(|e| match e {
                crate::protocol::CallError::Engine(e) => engine_fault(e),
                e => usage(e.to_string()),
            })?;
            let _ = writeln!(out, "{}", t.log.join("\n"));
            let _ = writeln!(out, "TICKS={} L={} CLEAN={}", t.ticks, t.loop_len(), t.clean_after);
            if path.is_some() {
                emit(out, &path, &t.to_json())?;
            }
            Ok(EXIT_OK)
        }
        Command::Bca { src, edge, out: path } => {
            let g = src.load()?;
            let e: Edge = *g.edges.get(edge).ok_or_else(|| usage(format!("no edge with index {edge}")))?;
            let payload = Character::dfs(Some(e.out_port), Some(e.in_port));
            let t = run_bca_isolated(&g, e, payload).map_err(|e| match e {
                crate::protocol::CallError::Engine(e) => engine_fault(e),
                e => usage(e.to_string()),
            })?;
            let _ = writeln!(out, "{}", t.log.join("\n"));
            let _ = writeln!(out, "TICKS={} DELIVERED={:?} CLEAN={}", t.ticks, t.delivered_to, t.clean_after);
            if path.is_some() {
                emit(out, &path, &t.to_json())?;
            }
            Ok(if t.delivered_to == Some(e.src) { EXIT_OK } else { EXIT_FAULT })
        }
        Command::Bench { family, sizes, delta, seed, out: path, budget_mult } => {
            let mult = resolve_mult(budget_mult)?;
            let graphs: Vec<PortGraph> = sizes
                .iter()
                .map(|&s| {
                    let gen = GenSpec { family: Some(family), n: Some(s), delta, seed, depth: Some(s), perm: None };
                    gen.build()
                })
                .collect::<Result<_, _>>()?;
            let rows: Vec<Result<String, String>> = graphs
                .par_iter()
                .map(|g| {
                    let d = g.diameter();
                    let r = run_gtd_checked(g, tick_budget(g, mult), false).map_err(|e| format!("n={}: {e}", g.nodes))?;
                    let per = r.ticks as f64 / (g.nodes * d.max(1)) as f64;
                    Ok(format!("{},{},{},{},{:.3}", g.nodes, d, g.edges.len(), r.ticks, per))
                })
                .collect();
            let mut csv = String::from("n,d,edges,ticks,ticks_per_nd\n");
            let mut failed = None;
            for r in rows {
                match r {
                    Ok(line) => csv.push_str(&line),
                    Err(e) => {
                        csv.push_str("# FAILED ");
                        csv.push_str(&e);
                        failed.get_or_insert(e);
                    }
                }
                csv.push('\n');
            }
            emit(out, &path, csv.trim_end())?;
            match failed {
                Some(e) => Err(fault(format!("bench incomplete: {e}"))),
                None => Ok(EXIT_OK),
            }
        }
        Command::ExportDot { src, out: path } => {
            let g = src.load()?;
            emit(out, &path, g.to_dot().trim_end())?;
            Ok(EXIT_OK)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run_cli(std::iter::once("snakenet").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn generate_is_deterministic() {
        let a = cli(&["generate", "--family", "random", "--n", "16", "--delta", "3", "--seed", "7"]);
        let b = cli(&["generate", "--family", "random", "--n", "16", "--delta", "3", "--seed", "7"]);
        assert_eq!(a.0, 0);
        assert_eq!(a.1, b.1);
        assert!(PortGraph::from_json(&a.1).is_ok());
    }

    #[test]
    fn treeloop_has_seven_nodes() {
        let (code, json, _) = cli(&["generate", "--family", "treeloop", "--depth", "2", "--perm", "1,3,2,4"]);
        assert_eq!(code, 0);
        assert_eq!(PortGraph::from_json(&json).unwrap().nodes, 7);
    }

    #[test]
    fn one_node_is_usage_error() {
        assert_eq!(cli(&["generate", "--family", "random", "--n", "1"]).0, EXIT_USAGE);
    }

    #[test]
    fn unknown_command_is_usage_error() {
        assert_eq!(cli(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(cli(&[]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = cli(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("export-dot"));
    }

    #[test]
    fn run_two_cycle() {
        let (code, out, _) = cli(&["run", "--family", "cycle", "--n", "2"]);
        assert_eq!(code, 0);
        assert!(out.contains("VERDICT=ISOMORPHIC"));
    }

    #[test]
    fn budget_one_is_fault() {
        let (code, _, err) = cli(&["run", "--family", "cycle", "--n", "3", "--budget-mult", "1"]);
        assert_eq!(code, EXIT_FAULT, "{err}");
        assert!(err.contains("budget"));
    }

    #[test]
    fn zero_multiplier_is_usage() {
        assert_eq!(cli(&["run", "--family", "cycle", "--n", "3", "--budget-mult", "0"]).0, EXIT_USAGE);
    }

    #[test]
    fn bench_rows() {
        let (code, csv, _) = cli(&["bench", "--family", "cycle", "--sizes", "2,4"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,d,edges,ticks,ticks_per_nd");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("2,1,2,"));
    }

    #[test]
    fn dot_export() {
        let (code, dot, _) = cli(&["export-dot", "--family", "cycle", "--n", "3"]);
        assert_eq!(code, 0);
        assert!(dot.starts_with("digraph"));
    }

    #[test]
    fn rca_needs_non_root() {
        assert_eq!(cli(&["rca", "--family", "cycle", "--n", "3", "--node", "0"]).0, EXIT_USAGE);
        let (code, out, _) = cli(&["rca", "--family", "cycle", "--n", "3", "--node", "1", "--payload", "FWD(1,1)"]);
        assert_eq!(code, 0);
        assert!(out.contains("Loop:FWD(1,1)"));
    }

    #[test]
    fn bca_delivers() {
        let (code, out, _) = cli(&["bca", "--family", "cycle", "--n", "3", "--edge", "0"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("DELIVERED=Some(0)"));
    }
}
