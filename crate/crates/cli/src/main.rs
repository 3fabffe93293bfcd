//! `compnav` command line: scenario generation, single runs, benchmarks and
//! an interactive terminal session.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use compnav::harness::{
    aggregate, generate_scenarios, interactive_session, run_benchmark, run_episode, GeneratorConfig, Mode,
    Strategy, SuiteKind, SUMMARY_FILE,
};
use compnav::world::Scenario;
use compnav::Config;

#[derive(Parser)]
#[command(name = "compnav", version, about = "Interactive instance navigation benchmark")]
struct Cli {
    /// JSON config mirroring every module's keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario suite.
    Gen {
        /// Generator config (JSON). Without it a preset is used.
        #[arg(long = "gen-config")]
        gen_config: Option<PathBuf>,
        #[arg(long, default_value = "separable")]
        suite: String,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "comparative")]
        strategy: Strategy,
        #[arg(long, default_value = "interactive-sim")]
        mode: Mode,
        #[arg(long, env = "COMPNAV_SIDECAR_URL")]
        sidecar_url: Option<String>,
    },
    /// Run strategies over a directory of scenarios.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "comparative,independent,pooled")]
        strategies: Vec<Strategy>,
        #[arg(long, default_value = "interactive-sim")]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, env = "COMPNAV_SIDECAR_URL")]
        sidecar_url: Option<String>,
    },
    /// Answer the agent's questions yourself.
    Interactive {
        #[arg(long)]
        scenario: PathBuf,
        /// Where to save the round transcript.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
}

fn suite_kind(name: &str) -> Result<SuiteKind> {
    Ok(match name {
        "separable" => SuiteKind::Separable,
        "partial" => SuiteKind::Partial,
        "trap" => SuiteKind::Trap,
        "textnav" => SuiteKind::Textnav,
        other => bail!("unknown suite '{other}'"),
    })
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Config::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(Config::default()),
    }
}

fn load_suite(dir: &Path) -> Result<Vec<Scenario>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| Scenario::load(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut cfg = load_config(cli.config.as_deref())?;

    match cli.command {
        Command::Gen {
            gen_config,
            suite,
            count,
            seed,
            out,
        } => {
            let mut g = match gen_config {
                Some(p) => serde_json::from_str::<GeneratorConfig>(&fs::read_to_string(&p)?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => GeneratorConfig::preset(suite_kind(&suite)?, 200),
            };
            if let Some(n) = count {
                g.count = n;
            }
            let scenarios = generate_scenarios(&g, seed)?;
            fs::create_dir_all(&out)?;
            for s in &scenarios {
                s.save(&out.join(format!("{}.json", s.id())))?;
            }
            println!("wrote {} scenarios to {}", scenarios.len(), out.display());
        }
        Command::Run {
            scenario,
            strategy,
            mode,
            sidecar_url,
        } => {
            if sidecar_url.is_some() {
                cfg.oracle.sidecar_url = sidecar_url;
            }
            let s = Scenario::load(&scenario)?;
            let o = run_episode(&s, strategy, mode, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&o.result)?);
            for r in &o.trace.rounds {
                if let (Some(q), Some(a)) = (&r.question, &r.answer) {
                    println!("round {}: {q} -> {a} ({} left)", r.round, r.next_active.len());
                }
            }
        }
        Command::Bench {
            suite,
            strategies,
            mode,
            out,
            jobs,
            sidecar_url,
        } => {
            if let Some(j) = jobs {
                cfg.harness.jobs = j;
            }
            if sidecar_url.is_some() {
                cfg.oracle.sidecar_url = sidecar_url;
            }
            let scenarios = load_suite(&suite)?;
            let b = run_benchmark(&scenarios, &strategies, mode, &cfg, Some(&out))?;
            for (s, m) in &b.metrics {
                println!(
                    "{:<12} SR {:5.1}  SPL {:5.1}  RL {:6.1}  NQ {:4.2}  ({} episodes)",
                    s.name(),
                    m.sr,
                    m.spl,
                    m.rl_mean,
                    m.nq_mean,
                    m.episodes
                );
            }
            println!("summary: {}", out.join(SUMMARY_FILE).display());
        }
        Command::Interactive { scenario, transcript } => {
            let s = Scenario::load(&scenario)?;
            println!("Find the {} the user has in mind. Answer y or n.", s.category());
            let stdin = io::stdin();
            let o = interactive_session(&s, &cfg, stdin.lock(), io::stdout())?;
            let m = aggregate(std::slice::from_ref(&o.result));
            println!(
                "{} after {} steps and {} questions (SPL {:.1})",
                if o.result.success { "success" } else { "failure" },
                o.result.steps,
                o.result.questions,
                m.spl
            );
            let path = transcript.unwrap_or_else(|| scenario.with_extension("transcript.jsonl"));
            let mut f = fs::File::create(&path)?;
            for r in &o.trace.rounds {
                serde_json::to_writer(&mut f, r)?;
                f.write_all(b"\n")?;
            }
            println!("transcript: {}", path.display());
        }
    }
    Ok(())
}
