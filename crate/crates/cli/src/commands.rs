use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use dna::export::{
    comparison_csv, search_document, to_canonical_json, values_csv, DiffLayer, Environment, OptionRecord,
    OverlayLayer, RenderDocument, SearchDocument, SimulateDocument, TrajectoryRecord, ValueDocument, RENDER_SCHEMA,
    SEARCH_SCHEMA, SIMULATE_SCHEMA,
};
use dna::maps::LAKE10_CELLS;
use dna::qlearn::{q_learning, QLearnConfig};
use dna::search::{SearchConfig, SolverMode};
use dna::sim::{compare_options, sample_trajectories, SimConfig};
use dna::solver::Benchmark;
use dna::suites::{lemma_suite, theorem1_suite, theorem2_suite};
use dna::{GridConfig, GridMdp, GridState};
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::manifest::{manifest_path, write_text, RunManifest};

/// Whether the command's checks held. Errors are reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    PropertyFailure,
}

fn read(path: &Path, what: &str) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {what} {}", path.display()))
}

pub fn load_map(args: &MapArgs) -> Result<GridMdp> {
    let text = read(&args.map, "map")?;
    let implicit = args.map.with_extension("json");
    let config_path = args.config.clone().or_else(|| implicit.is_file().then_some(implicit));
    let config = match &config_path {
        Some(path) => GridConfig::from_json(&read(path, "config")?).with_context(|| format!("{}", path.display()))?,
        None => GridConfig::default(),
    };
    GridMdp::from_text(&text, config).with_context(|| format!("{}", args.map.display()))
}

/// Reads a JSON document, naming the offending field path on mismatch.
fn read_document<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read(path, "document")?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        anyhow!("{}: schema mismatch at {at}: {}", path.display(), e.inner())
    })
}

fn read_search(path: &Path) -> Result<SearchDocument> {
    let doc: SearchDocument = read_document(path)?;
    if doc.schema != SEARCH_SCHEMA {
        bail!("{}: schema mismatch at schema: expected {SEARCH_SCHEMA:?}, found {:?}", path.display(), doc.schema);
    }
    Ok(doc)
}

/// Writes to `out`, or to stdout when there is no path.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_manifest(out: Option<&Path>, manifest: RunManifest, extra: &[&Path]) -> Result<()> {
    let Some(out) = out else { return Ok(()) };
    let mut outputs = vec![out];
    outputs.extend_from_slice(extra);
    manifest.with_outputs(&outputs).write(&manifest_path(out))
}

/// Options picked by id or rank, in the order given; all when `keys` is empty.
fn select<'a>(doc: &'a SearchDocument, keys: &[String], source: &Path) -> Result<Vec<&'a OptionRecord>> {
    if keys.is_empty() {
        return Ok(doc.options.iter().collect());
    }
    keys.iter().map(|k| find_option(doc, k, source)).collect()
}

fn find_option<'a>(doc: &'a SearchDocument, key: &str, source: &Path) -> Result<&'a OptionRecord> {
    doc.options
        .iter()
        .find(|o| o.id == key)
        .or_else(|| key.parse::<usize>().ok().and_then(|rank| doc.options.get(rank)))
        .ok_or_else(|| anyhow!("{}: no option {key:?}", source.display()))
}

pub fn solve(args: &SolveArgs) -> Result<Outcome> {
    let mdp = load_map(&args.map)?;
    let vstar = args.out.join("vstar.json");
    let csv = args.out.join("vstar.csv");
    let qtable = args.out.join("qtable.json");
    let learn = args.mode == Mode::Qlearn;
    let qcfg = QLearnConfig {
        seed: args.seed,
        max_episodes: args.episodes.unwrap_or(QLearnConfig::default().max_episodes),
        ..QLearnConfig::default()
    };
    let inputs = serde_json::json!({
        "environment": Environment::from_mdp(&mdp),
        "tol": args.tol,
        "qlearn": learn.then_some(&qcfg),
    });
    let mut outputs = vec![vstar.as_path(), csv.as_path()];
    if learn {
        outputs.push(qtable.as_path());
    }
    std::fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    RunManifest::new("solve", Some(&args.map.map), &inputs, learn.then_some(args.seed))?
        .with_outputs(&outputs)
        .write(&args.out.join("manifest.json"))?;

    let bench = Benchmark::solve_with_tol(&mdp, args.tol)?;
    let diag = serde_json::json!({
        "tol": args.tol,
        "bellman_residual": bench.q.bellman_residual(&mdp),
    });
    write_text(&vstar, &to_canonical_json(&ValueDocument::new(&mdp, "value_iteration", &bench.q, diag))?)?;
    write_text(&csv, &values_csv(&mdp, &bench.values, &bench.policy)?)?;
    if learn {
        let run = q_learning(&mdp, &qcfg)?;
        let reachable = mdp.reachable_from(mdp.start());
        let gap = run.q.max_gap_on(&bench.q, (0..reachable.len()).filter(|&s| reachable[s]));
        let diag = serde_json::json!({
            "config": qcfg,
            "converged": run.converged,
            "episodes": run.episodes,
            "updates": run.updates,
            "window_change": run.window_change,
            "max_gap_reachable": gap,
        });
        write_text(&qtable, &to_canonical_json(&ValueDocument::new(&mdp, "q_learning", &run.q, diag))?)?;
    }
    Ok(Outcome::Success)
}

pub fn search_query(mdp: &GridMdp, args: &SearchArgs) -> SearchConfig {
    let cfg = mdp.config();
    let mut query = SearchConfig::new(
        GridState::new(args.start.0.clone()),
        args.epsilon,
        args.cells,
        args.d.unwrap_or(cfg.cell_d),
        args.spacing.unwrap_or(cfg.cell_spacing),
    );
    if args.mode == Mode::Qlearn {
        query.mode = SolverMode::QLearning;
        query.qlearn.seed = args.seed;
    }
    query
}

pub fn search(args: &SearchArgs) -> Result<Outcome> {
    let mdp = load_map(&args.map)?;
    let query = search_query(&mdp, args);
    query.validate()?;
    mdp.id(&query.start).context("--start")?;
    let inputs = serde_json::json!({ "environment": Environment::from_mdp(&mdp), "query": &query });
    let seed = (query.mode == SolverMode::QLearning).then_some(args.seed);
    write_manifest(
        args.out.as_deref(),
        RunManifest::new("search", Some(&args.map.map), &inputs, seed)?,
        &[],
    )?;
    let doc = search_document(&mdp, &query)?;
    emit(args.out.as_deref(), &to_canonical_json(&doc)?)?;
    eprintln!("{} options (eps {}, {} cells)", doc.options.len(), query.epsilon, query.max_cells);
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct SampleSet<'a> {
    option: &'a str,
    trajectories: Vec<TrajectoryRecord>,
}

pub fn simulate(args: &SimulateArgs) -> Result<Outcome> {
    let doc = read_search(&args.options)?;
    let mdp = doc.environment.build()?;
    let records = select(&doc, &args.selected, &args.options)?;
    if records.is_empty() {
        bail!("{}: the document holds no options", args.options.display());
    }
    let plans = records.iter().map(|r| r.to_plan(&mdp)).collect::<dna::Result<Vec<_>>>()?;
    let cfg = SimConfig {
        n: args.n,
        base_seed: args.seed,
        step_cap: args.step_cap,
    };
    let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let inputs = serde_json::json!({ "environment": &doc.environment, "options": ids, "config": cfg });
    let extra: Vec<&Path> = [args.csv.as_deref(), args.samples_out.as_deref()].into_iter().flatten().collect();
    write_manifest(
        args.out.as_deref(),
        RunManifest::new("simulate", Some(&args.options), &inputs, Some(args.seed))?,
        &extra,
    )?;

    let bench = Benchmark::solve(&mdp)?;
    let rows = compare_options(&mdp, &plans, &bench.policy, &cfg)?;
    let report = SimulateDocument {
        schema: SIMULATE_SCHEMA.into(),
        environment: doc.environment.clone(),
        config: cfg,
        rows,
    };
    emit(args.out.as_deref(), &to_canonical_json(&report)?)?;
    if let Some(path) = &args.csv {
        write_text(path, &comparison_csv(&report.rows)?)?;
    }
    if let Some(path) = &args.samples_out {
        let sets = plans
            .iter()
            .map(|plan| {
                let ts = sample_trajectories(&mdp, plan, &bench.policy, &cfg, args.samples)?;
                Ok(SampleSet {
                    option: &plan.id,
                    trajectories: ts.iter().map(|t| TrajectoryRecord::new(&mdp, t)).collect(),
                })
            })
            .collect::<dna::Result<Vec<_>>>()?;
        write_text(path, &to_canonical_json(&sets)?)?;
    }
    Ok(Outcome::Success)
}

pub fn verify(args: &VerifyArgs) -> Result<Outcome> {
    let seeds: Vec<u64> = (args.seed..args.seed + args.seeds).collect();
    let (text, passed, total, name) = match args.suite {
        Suite::Lemmas | Suite::Theorem1 => {
            let inputs = serde_json::json!({ "suite": format!("{:?}", args.suite), "seeds": &seeds });
            write_manifest(
                args.out.as_deref(),
                RunManifest::new("verify", None, &inputs, Some(args.seed))?,
                &[],
            )?;
            let report = if args.suite == Suite::Lemmas {
                lemma_suite(&seeds)?
            } else {
                theorem1_suite(&seeds)?
            };
            (to_canonical_json(&report)?, report.passed, report.total, report.suite)
        }
        Suite::Theorem2 => {
            let mdp = match &args.map {
                Some(map) => load_map(&MapArgs {
                    map: map.clone(),
                    config: args.config.clone(),
                })?,
                None => dna::maps::lake10()?,
            };
            let cfg = mdp.config();
            let start = args.start.as_ref().map(|c| GridState::new(c.0.clone())).unwrap_or(mdp.start_state());
            let query = SearchConfig::new(
                start,
                args.epsilon,
                args.cells.unwrap_or(LAKE10_CELLS),
                cfg.cell_d,
                cfg.cell_spacing,
            );
            let sim = SimConfig::new(args.n, args.seed);
            let inputs = serde_json::json!({ "environment": Environment::from_mdp(&mdp), "query": &query, "sim": sim });
            write_manifest(
                args.out.as_deref(),
                RunManifest::new("verify", args.map.as_deref(), &inputs, Some(args.seed))?,
                &[],
            )?;
            let report = theorem2_suite(&mdp, &query, &sim)?;
            (to_canonical_json(&report)?, report.passed, report.total, report.suite)
        }
    };
    emit(args.out.as_deref(), &text)?;
    eprintln!("{name}: {passed}/{total} passed");
    Ok(if passed == total && total > 0 {
        Outcome::Success
    } else {
        Outcome::PropertyFailure
    })
}

pub fn render(args: &RenderArgs) -> Result<Outcome> {
    let doc = read_search(&args.options)?;
    let mdp = doc.environment.build()?;
    let records = select(&doc, &args.selected, &args.options)?;
    let diff = match &args.diff {
        Some(pair) => Some(DiffLayer::new(
            find_option(&doc, &pair[0], &args.options)?,
            find_option(&doc, &pair[1], &args.options)?,
        )),
        None => None,
    };
    let inputs = serde_json::json!({ "document": &doc, "selected": &args.selected, "diff": &args.diff });
    write_manifest(
        args.out.as_deref(),
        RunManifest::new("render", Some(&args.options), &inputs, None)?,
        &[],
    )?;
    let bench = Benchmark::solve(&mdp)?;
    let out = RenderDocument {
        schema: RENDER_SCHEMA.into(),
        environment: doc.environment.clone(),
        tiles: doc.environment.map.clone(),
        benchmark_values: bench.values.0.clone(),
        overlays: records.into_iter().map(OverlayLayer::from).collect(),
        diff,
    };
    emit(args.out.as_deref(), &to_canonical_json(&out)?)?;
    Ok(Outcome::Success)
}

pub fn serve(args: &ServeArgs) -> Result<Outcome> {
    let envs = dna_service::load_envs(&args.maps)?;
    let mut state = dna_service::AppState::new(envs);
    if let Some(dir) = &args.persist {
        state = state.with_persistence(PathBuf::from(dir));
    }
    let state = Arc::new(state);
    let ids: Vec<&str> = state.env_ids().collect();
    let addr = std::net::SocketAddr::new(args.host, args.port);
    eprintln!("serving {} on http://{addr}/api/v1", ids.join(", "));
    let runtime = tokio::runtime::Runtime::new().context("cannot start the async runtime")?;
    runtime
        .block_on(dna_service::serve(state.clone(), addr))
        .with_context(|| format!("cannot serve on {addr}"))?;
    Ok(Outcome::Success)
}
