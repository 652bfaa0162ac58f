//! `scenlib`: batch front end for the scenario toolkit.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Diagnostics go to
//! stderr; artifacts go to the named files or stdout.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scenlib_core::analyze::{importance_scores, ClusterKind};
use scenlib_core::cleanse::parse_rules;
use scenlib_core::density::{Kernel, ParamDensity};
use scenlib_core::enrich::AnnotateConfig;
use scenlib_core::generate::{
    acceleration_factor, build_proposal, combinatorial_generate, is_estimate, min_tests_is, min_tests_naive, Method,
    TestBudget,
};
use scenlib_core::ingest::SyncMethod;
use scenlib_core::ontology::{Domain, Scenario, ScenarioKind};
use scenlib_core::pipeline::{self, read_text, to_json, PipelineConfig};
use scenlib_core::seed::stage_seed;
use scenlib_core::simharness::{cutin_plan, evaluate_kpis, simulate, AebPolicy, CutInScenario};
use scenlib_core::store::{Library, Query, RangePredicate};

#[derive(Parser, Debug)]
#[command(name = "scenlib", version, about = "Scenario library and test generation toolkit")]
struct Cli {
    /// Master seed; each stage derives its own seed from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Parse a raw track CSV, reporting rows that fail to parse.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Apply cleaning rules to every track.
    Clean {
        #[arg(long)]
        input: PathBuf,
        /// JSON list of rules; defaults to dedup + interpolation + speed clamp.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Synchronize ego/lead pairs and derive TTC, THW, TTB and events.
    Enrich {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        hz: f64,
        #[arg(long, default_value = "median")]
        method: SyncMethod,
        /// Annotation settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Cluster the per-episode feature table.
    Cluster {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, value_enum, default_value_t = ClusterArg::Kmeans)]
        method: ClusterArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit parameter densities on the largest cluster.
    Density {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        /// Logical scenario (JSON); defaults to the car-following one.
        #[arg(long)]
        logical: Option<PathBuf>,
        #[arg(long, default_value = "gaussian")]
        kernel: Kernel,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate concrete scenarios or run a danger campaign.
    Generate {
        #[command(subcommand)]
        how: GenerateCmd,
    },
    /// Minimum number of tests for a danger probability and precision.
    MinTests {
        #[arg(long)]
        gamma: f64,
        /// Precision factor; defaults to 95% confidence at 10% half-width.
        #[arg(long)]
        z: Option<f64>,
        /// E[I L²] of an importance-sampling campaign.
        #[arg(long)]
        second_moment: Option<f64>,
    },
    /// Simulate one cut-in scenario under an AEB policy.
    Simulate(SimulateArgs),
    /// Add generated scenarios to a library.
    Store {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        logical: Option<PathBuf>,
        /// Library root; defaults to $SCENLIB_HOME.
        #[arg(long)]
        library: Option<PathBuf>,
    },
    /// Query a library; prints matching ids, one per line.
    Search {
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long = "tag")]
        tags: Vec<String>,
        /// `name:lo:hi`, repeatable.
        #[arg(long = "range")]
        ranges: Vec<String>,
        #[arg(long)]
        kind: Option<ScenarioKind>,
    },
    /// Run every stage from raw logs to the library.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum GenerateCmd {
    /// Draw from fitted densities.
    Random {
        #[arg(long)]
        densities: PathBuf,
        #[arg(long)]
        logical: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Highest-weighted combinations of discrete levels.
    Combinatorial {
        /// Logical scenario whose discrete parameters are combined.
        #[arg(long)]
        logical: PathBuf,
        /// JSON map from parameter to observed levels; uniform when absent.
        #[arg(long)]
        observations: Option<PathBuf>,
        #[arg(long)]
        budget: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the collision probability of the shipped cut-in scenario.
    Danger(DangerArgs),
}

#[derive(Args, Debug)]
struct DangerArgs {
    /// Proposal densities (JSON) or `auto` to build one from a pilot run.
    #[arg(long)]
    proposal: Option<String>,
    /// Importance-sampling draws.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Also run a naive campaign of this size and report the acceleration.
    #[arg(long)]
    naive_n: Option<usize>,
    #[arg(long)]
    z: Option<f64>,
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Samples behind each naturalistic density.
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 60.0)]
    horizon: f64,
    #[arg(long, default_value_t = 20_000)]
    pilot: usize,
    #[arg(long, default_value_t = 4_000)]
    rate_draws: usize,
    #[arg(long, default_value_t = 0.2)]
    target_rate: f64,
    /// Write the proposal used to this file.
    #[arg(long)]
    save_proposal: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Concrete cut-in scenario (JSON); overrides the parameter flags.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 25.0)]
    ego_speed: f64,
    #[arg(long, default_value_t = 20.0)]
    cutin_speed: f64,
    #[arg(long, default_value_t = 30.0)]
    cutin_gap: f64,
    #[arg(long, default_value_t = 0.0)]
    cutin_decel: f64,
    #[arg(long, default_value_t = 1.0)]
    road_friction: f64,
    /// AEB policy (JSON); overrides the policy flags.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    ttc_trigger: f64,
    #[arg(long, default_value_t = 8.0)]
    max_decel: f64,
    #[arg(long, default_value_t = 0.3)]
    actuation_delay: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 30.0)]
    horizon: f64,
    /// Trace CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    kpis: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ClusterArg {
    Kmeans,
    Gmm,
}

impl From<ClusterArg> for ClusterKind {
    fn from(c: ClusterArg) -> Self {
        match c {
            ClusterArg::Kmeans => ClusterKind::Kmeans,
            ClusterArg::Gmm => ClusterKind::Gmm,
        }
    }
}

enum Failure {
    Usage(String),
    Data(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

/// Writes an artifact to `path`, or to stdout.
fn emit(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => pipeline::write_text(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn load_logical(path: Option<&Path>) -> Result<Scenario, Failure> {
    match path {
        Some(p) => Ok(Scenario::from_json(&read_text(p)?)?),
        None => Ok(pipeline::following_logical()),
    }
}

fn library(path: Option<PathBuf>) -> Result<Library, Failure> {
    match path {
        Some(p) => Ok(Library::open(p)?),
        None => Library::from_env().map_err(|e| Failure::Usage(format!("{e}; pass --library or set SCENLIB_HOME"))),
    }
}

fn parse_range(s: &str) -> Result<RangePredicate, Failure> {
    let bad = || Failure::Usage(format!("--range expects name:lo:hi, got {s:?}"));
    let mut it = s.rsplitn(3, ':');
    let hi = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    let lo = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    let name = it.next().filter(|n| !n.is_empty()).ok_or_else(bad)?;
    Ok(RangePredicate {
        name: name.to_string(),
        lo,
        hi,
    })
}

fn run(cli: Cli) -> Outcome {
    let seed = cli.seed.unwrap_or(0);
    match cli.cmd {
        Cmd::Ingest { input, out, report } => {
            let (csv, rep) = pipeline::stage_ingest(&read_text(&input)?)?;
            emit(out.as_deref(), &csv)?;
            if let Some(r) = report {
                emit(Some(&r), &rep)?;
            }
        }
        Cmd::Clean {
            input,
            rules,
            out,
            report,
        } => {
            let rules = match rules {
                Some(p) => parse_rules(&read_text(&p)?)?,
                None => pipeline::default_rules(),
            };
            let (csv, rep) = pipeline::stage_clean(&read_text(&input)?, &rules)?;
            emit(out.as_deref(), &csv)?;
            if let Some(r) = report {
                emit(Some(&r), &rep)?;
            }
        }
        Cmd::Enrich {
            input,
            hz,
            method,
            config,
            out,
            events,
            features,
        } => {
            let cfg: AnnotateConfig = match config {
                Some(p) => serde_json::from_str(&read_text(&p)?)?,
                None => AnnotateConfig::default(),
            };
            let (csv, ev, feats) = pipeline::stage_enrich(&read_text(&input)?, hz, method, &cfg)?;
            emit(out.as_deref(), &csv)?;
            if let Some(p) = events {
                emit(Some(&p), &ev)?;
            }
            if let Some(p) = features {
                emit(Some(&p), &feats)?;
            }
        }
        Cmd::Cluster {
            features,
            k,
            method,
            out,
        } => {
            let json = pipeline::stage_cluster(&read_text(&features)?, k, method.into(), stage_seed(seed, "cluster"))?;
            emit(out.as_deref(), &json)?;
        }
        Cmd::Density {
            features,
            clusters,
            logical,
            kernel,
            out,
        } => {
            let logical = load_logical(logical.as_deref())?;
            let json = pipeline::stage_density(&read_text(&features)?, &read_text(&clusters)?, &logical, kernel)?;
            emit(out.as_deref(), &json)?;
        }
        Cmd::Generate { how } => generate(how, seed)?,
        Cmd::MinTests {
            gamma,
            z,
            second_moment,
        } => {
            let b = TestBudget::new(z.unwrap_or_else(TestBudget::default_z), gamma)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let n = match second_moment {
                Some(m) => min_tests_is(m, &b)?,
                None => min_tests_naive(&b),
            };
            emit(None, &format!("{n}\n"))?;
        }
        Cmd::Simulate(a) => simulate_cmd(a)?,
        Cmd::Store {
            input,
            logical,
            library: root,
        } => {
            let mut lib = library(root)?;
            let scenarios: Vec<Scenario> = serde_json::from_str(&read_text(&input)?)?;
            if let Some(p) = logical {
                let l = Scenario::from_json(&read_text(&p)?)?;
                if !lib.index().entries.contains_key(&l.id) {
                    lib.put(&l)?;
                }
            }
            let ids = lib.put_all(&scenarios)?;
            log::info!("stored {} scenarios in {}", ids.len(), lib.root().display());
        }
        Cmd::Search {
            library: root,
            tags,
            ranges,
            kind,
        } => {
            let lib = library(root)?;
            let ranges = ranges.iter().map(|r| parse_range(r)).collect::<Result<Vec<_>, _>>()?;
            let q = Query::new(tags, ranges, kind).map_err(|e| Failure::Usage(e.to_string()))?;
            let mut text = String::new();
            for id in lib.search(&q) {
                text.push_str(&id);
                text.push('\n');
            }
            emit(None, &text)?;
        }
        Cmd::Pipeline { config, out } => {
            let cfg = match config {
                Some(p) => PipelineConfig::load(&p)?,
                None => PipelineConfig::default(),
            };
            let seed = match (cli.seed, cfg.seed) {
                (Some(s), _) | (None, Some(s)) => s,
                (None, None) => {
                    log::warn!("no --seed and no seed in the config; using 0");
                    0
                }
            };
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let summary = pipeline::run_pipeline(&cfg, seed, &out)?;
            log::info!(
                "{} episodes, {} scenarios generated, {} stored",
                summary.episodes,
                summary.generated,
                summary.stored
            );
        }
    }
    Ok(())
}

fn generate(how: GenerateCmd, seed: u64) -> Outcome {
    match how {
        GenerateCmd::Random {
            densities,
            logical,
            count,
            out,
        } => {
            let logical = load_logical(logical.as_deref())?;
            let json = pipeline::stage_generate(&logical, &read_text(&densities)?, stage_seed(seed, "generate"), count)?;
            emit(out.as_deref(), &json)?;
        }
        GenerateCmd::Combinatorial {
            logical,
            observations,
            budget,
            out,
        } => {
            let logical = Scenario::from_json(&read_text(&logical)?)?;
            let specs: Vec<_> = logical.specs().into_iter().filter(|s| s.domain.is_discrete()).collect();
            let observed: BTreeMap<String, Vec<String>> = match observations {
                Some(p) => serde_json::from_str(&read_text(&p)?)?,
                None => specs
                    .iter()
                    .filter_map(|s| match &s.domain {
                        Domain::Discrete { levels } => Some((s.name.clone(), levels.clone())),
                        Domain::Continuous { .. } => None,
                    })
                    .collect(),
            };
            let weights = importance_scores(&observed)?;
            let scenarios = combinatorial_generate(&specs, &weights, budget)?;
            emit(out.as_deref(), &to_json(&scenarios))?;
        }
        GenerateCmd::Danger(a) => danger(a, seed)?,
    }
    Ok(())
}

fn danger(a: DangerArgs, seed: u64) -> Outcome {
    let Some(proposal) = a.proposal else {
        return Err(Failure::Usage(
            "generate danger needs --proposal <FILE|auto>; use --proposal auto to build one from a pilot run".into(),
        ));
    };
    let policy = match &a.policy {
        Some(p) => serde_json::from_str(&read_text(p)?)?,
        None => AebPolicy::default(),
    };
    let (dt, horizon) = (a.dt, a.horizon);
    let indicator = move |s: &Scenario| {
        CutInScenario::from_scenario(s)
            .and_then(|c| simulate(&c, &policy, dt, horizon))
            .map(|t| t.collision)
            .unwrap_or_else(|e| {
                log::error!("{}: {e}", s.id);
                false
            })
    };
    // fail fast on bad step settings rather than inside the campaign
    let probe = CutInScenario {
        ego_speed_0: 20.0,
        cutin_speed: 20.0,
        cutin_gap_0: 30.0,
        cutin_decel: 0.0,
        road_friction: 1.0,
    };
    simulate(&probe, &policy, dt, horizon).map_err(|e| Failure::Usage(e.to_string()))?;

    let plan = cutin_plan(stage_seed(seed, "danger"), a.samples, 0);
    let densities: BTreeMap<String, ParamDensity> = if proposal == "auto" {
        build_proposal(&plan, indicator, a.pilot, a.rate_draws, a.target_rate, None)?
    } else {
        serde_json::from_str(&read_text(Path::new(&proposal))?)?
    };
    if let Some(p) = &a.save_proposal {
        emit(Some(p), &to_json(&densities))?;
    }
    let plan = plan.with_proposal(densities);
    let is = is_estimate(&plan, indicator, a.n, Method::Importance)?;
    let mut reports = vec![];
    let factor = match a.naive_n {
        Some(n) => {
            let naive = is_estimate(&plan, indicator, n, Method::Naive)?;
            let b = TestBudget::new(a.z.unwrap_or_else(TestBudget::default_z), 0.5)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let f = acceleration_factor(&naive, &is, &b)?;
            reports.push(naive.report(None));
            Some(f)
        }
        None => None,
    };
    reports.insert(0, is.report(factor));
    emit(a.out.as_deref(), &to_json(&reports))
}

fn simulate_cmd(a: SimulateArgs) -> Outcome {
    let scenario = match &a.scenario {
        Some(p) => CutInScenario::from_scenario(&Scenario::from_json(&read_text(p)?)?)?,
        None => CutInScenario {
            ego_speed_0: a.ego_speed,
            cutin_speed: a.cutin_speed,
            cutin_gap_0: a.cutin_gap,
            cutin_decel: a.cutin_decel,
            road_friction: a.road_friction,
        },
    };
    let policy = match &a.policy {
        Some(p) => serde_json::from_str(&read_text(p)?)?,
        None => AebPolicy {
            ttc_trigger: a.ttc_trigger,
            max_decel: a.max_decel,
            actuation_delay: a.actuation_delay,
        },
    };
    let trace = simulate(&scenario, &policy, a.dt, a.horizon)?;
    emit(a.out.as_deref(), &trace.to_csv())?;
    if let Some(p) = &a.kpis {
        emit(Some(p), &to_json(&evaluate_kpis(&trace)?))?;
    }
    Ok(())
}
