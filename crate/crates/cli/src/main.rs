mod commands;
mod config;
mod record;
mod sets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Config, ConfigError};

#[derive(Parser, Debug)]
#[command(name = "acl", version, about = "Numerical experiments for averages over dilated polynomial curves")]
struct Cli {
    /// Base seed of all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to ACL_THREADS, then the core count).
    #[arg(long, global = true, env = "ACL_THREADS")]
    threads: Option<usize>,
    /// TOML or JSON config; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving `runs/<id>/`.
    #[arg(long, global = true, default_value = ".")]
    runs_dir: PathBuf,
    /// Curve as JSON (`{"preset":"moment","dim":3}` or explicit coefficients),
    /// inline or as a file path.
    #[arg(long, global = true)]
    curve: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Torsion-based interval decomposition with sampled geometric constants.
    Decompose(DecomposeArgs),
    /// Ratio slope of one extremizer family at one `(p, q)`.
    Riesz(RieszArgs),
    /// Verdict map over the `(1/p, 1/q)` square.
    RieszDiagram(DiagramArgs),
    /// U-sequence, parameter tower and contract checks on one instance.
    Refine(RefineArgs),
    /// Refinement plus the lower-bound chain.
    WeakType(RefineArgs),
    /// Refinement plus all Jacobian-level checks.
    JacobianVerify(RefineArgs),
    /// Extremal constants and truncation parameters.
    TruncationTable(TruncationArgs),
    /// Runs the command named in a config file.
    Run {
        /// Config file with a `command` key.
        file: PathBuf,
    },
}

#[derive(Args, Debug, Default)]
struct DecomposeArgs {
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    max_intervals: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct GridArgs {
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    nr: Option<usize>,
    #[arg(long)]
    max_nodes: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct RieszArgs {
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Comma-separated dyadic scales.
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug, Default)]
struct DiagramArgs {
    #[arg(long)]
    lattice: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug, Default)]
struct RefineArgs {
    #[arg(long)]
    dim: Option<usize>,
    /// `random` or `ball`.
    #[arg(long)]
    instance: Option<String>,
    /// Instance index within the seed.
    #[arg(long)]
    stream: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    max_retries: Option<usize>,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    nr: Option<usize>,
    #[arg(long)]
    nodes: Option<usize>,
    /// Tower tuples sampled by the Jacobian checks.
    #[arg(long)]
    samples: Option<usize>,
    /// Set file for E (`{"balls":[{"center":[..],"radius":r}]}`).
    #[arg(long = "E")]
    e: Option<PathBuf>,
    /// Set file for F (balls with optional `rRange`, or `{"superlevel":θ}`).
    #[arg(long = "F")]
    f: Option<PathBuf>,
    /// Extra copy of the main artifact (tower or chain report).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tower file written by `refine`; skips the refinement.
    #[arg(long)]
    tower: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct TruncationArgs {
    #[arg(long)]
    max_degree: Option<usize>,
    #[arg(long)]
    max_k: Option<usize>,
    /// Additional copy of the table.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn merge_grid(g: &mut config::FamilyGrid, a: GridArgs) {
    opt(&mut g.res, a.res);
    opt(&mut g.nr, a.nr);
    opt(&mut g.max_nodes, a.max_nodes);
}

fn merge_refine(c: &mut Config, a: RefineArgs) {
    let r = &mut c.refine;
    opt(&mut r.dim, a.dim);
    opt(&mut r.instance, a.instance);
    set(&mut r.stream, a.stream);
    opt(&mut r.delta, a.delta);
    opt(&mut r.max_retries, a.max_retries);
    opt(&mut r.res, a.res);
    opt(&mut r.nr, a.nr);
    opt(&mut r.nodes, a.nodes);
    set(&mut r.samples, a.samples);
    opt(&mut r.e, a.e);
    opt(&mut r.f, a.f);
    opt(&mut r.out, a.out);
    opt(&mut r.tower, a.tower);
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    eprintln!("usage: acl [--config FILE] [--seed N] [--threads N] <command> [flags]; see `acl --help`");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match (&cli.config, &cli.command) {
        (_, Command::Run { file }) => match Config::load(file) {
            Ok(c) => c,
            Err(e) => return usage(e),
        },
        (Some(path), _) => match Config::load(path) {
            Ok(c) => c,
            Err(e) => return usage(e),
        },
        (None, _) => Config::default(),
    };
    let name = match cli.command {
        Command::Run { .. } => match cfg.command.clone() {
            Some(n) if commands::NAMES.contains(&n.as_str()) => n,
            Some(n) => return usage(format!("unknown command {n:?} in config")),
            None => return usage(ConfigError::Parse("missing `command`".into())),
        },
        Command::Decompose(a) => {
            let d = &mut cfg.decompose;
            set(&mut d.clip, a.clip);
            set(&mut d.max_intervals, a.max_intervals);
            set(&mut d.samples, a.samples);
            "decompose".into()
        }
        Command::Riesz(a) => {
            let r = &mut cfg.riesz;
            set(&mut r.family, a.family);
            set(&mut r.p, a.p);
            set(&mut r.q, a.q);
            set(&mut r.deltas, a.deltas);
            merge_grid(&mut r.grid, a.grid);
            "riesz".into()
        }
        Command::RieszDiagram(a) => {
            let r = &mut cfg.diagram;
            set(&mut r.lattice, a.lattice);
            set(&mut r.margin, a.margin);
            set(&mut r.families, a.families);
            merge_grid(&mut r.grid, a.grid);
            "riesz-diagram".into()
        }
        Command::Refine(a) => {
            merge_refine(&mut cfg, a);
            "refine".into()
        }
        Command::WeakType(a) => {
            merge_refine(&mut cfg, a);
            "weak-type".into()
        }
        Command::JacobianVerify(a) => {
            merge_refine(&mut cfg, a);
            "jacobian-verify".into()
        }
        Command::TruncationTable(a) => {
            let t = &mut cfg.truncation;
            set(&mut t.max_degree, a.max_degree);
            set(&mut t.max_k, a.max_k);
            opt(&mut t.out, a.out);
            "truncation-table".into()
        }
    };
    cfg.command = Some(name.clone());
    opt(&mut cfg.seed, cli.seed);
    cfg.seed.get_or_insert(7);
    if let Some(s) = cli.curve {
        let text = if s.trim_start().starts_with('{') {
            s
        } else {
            match std::fs::read_to_string(&s) {
                Ok(t) => t,
                Err(e) => return usage(format!("cannot read --curve {s}: {e}")),
            }
        };
        match serde_json::from_str(&text) {
            Ok(spec) => cfg.curve = Some(spec),
            Err(e) => return usage(format!("invalid --curve: {e}")),
        }
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return usage("--threads must be positive");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return usage(e);
        }
    }
    match commands::execute(&name, &cfg, &cli.runs_dir) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}
