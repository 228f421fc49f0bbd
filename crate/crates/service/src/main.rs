use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use textpond::api::{BuildLinksRequest, DEFAULT_TOP_TERMS};
use textpond::config::ApiConfig;
use textpond_core::analytics::{AnalysisQuery, TimeGranularity};
use textpond_core::engine::HighlightResult;
use textpond_core::textproc::{Label, TransformationKind};
use textpond_core::{synth, DocumentId, Engine, Page};

/// Metadata engine for a pond of textual documents.
#[derive(Debug, Parser)]
#[command(name = "textpond", version)]
struct Cli {
    /// Store directory; overrides `store_root` from the config file.
    #[arg(long, global = true)]
    store_root: Option<PathBuf>,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest every document under `<pond>/<company>/<category>/`.
    Ingest {
        pond: PathBuf,
        /// Detection languages in priority order, e.g. `fr,en`.
        #[arg(long, value_delimiter = ',')]
        languages: Option<Vec<String>>,
    },
    #[command(subcommand)]
    Manifest(ManifestCommand),
    /// Keyword search over one presentation index.
    Search {
        /// Whitespace-separated terms.
        terms: String,
        #[arg(long, default_value = "original+classic")]
        label: String,
        /// Thesaurus resource name or language code (`fr` means `thesaurus-fr`).
        #[arg(long)]
        thesaurus: Option<String>,
        /// Also print snippets of this many characters around each match.
        #[arg(long)]
        highlight_size: Option<usize>,
        /// Require every term instead of any.
        #[arg(long)]
        all_terms: bool,
    },
    #[command(subcommand)]
    Link(LinkCommand),
    /// Filter documents, or aggregate them with `--aggregate <facet>`.
    Query {
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long)]
        aggregate: Option<String>,
        #[arg(long, default_value = "year")]
        granularity: TimeGranularity,
        #[arg(long, default_value_t = DEFAULT_TOP_TERMS)]
        top: usize,
        #[arg(long, default_value_t = 0)]
        offset: usize,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Walktrap communities of a stored link graph.
    Communities {
        #[arg(long)]
        link: String,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        walk_length: Option<usize>,
        #[command(flatten)]
        filter: FilterArgs,
    },
    /// Degree centrality of a stored link graph.
    Centrality {
        #[arg(long)]
        link: String,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        filter: FilterArgs,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<std::net::SocketAddr>,
        /// Allowed browser origin; repeatable.
        #[arg(long = "cors")]
        cors: Vec<String>,
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Write a synthetic fixture pond.
    Synth {
        dir: PathBuf,
        #[arg(long, default_value_t = synth::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = synth::DEFAULT_DOCUMENTS)]
        count: usize,
    },
}

#[derive(Debug, Subcommand)]
enum ManifestCommand {
    /// Print one manifest as JSON, or verbatim with `--raw`.
    Show {
        id: DocumentId,
        #[arg(long)]
        raw: bool,
    },
    /// Validate manifests against the schema and the store.
    Validate {
        /// Every manifest plus the referential integrity sweep.
        #[arg(long)]
        all: bool,
        ids: Vec<DocumentId>,
    },
}

#[derive(Debug, Subcommand)]
enum LinkCommand {
    /// Compute and store the complete similarity graph.
    Build {
        #[arg(long)]
        presentation: String,
        #[arg(long)]
        measure: String,
    },
    /// Names of stored graphs.
    List,
    /// Print a stored graph.
    Show { name: String },
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// `name=value`; values of one facet are OR-ed, facets are AND-ed.
    #[arg(long = "facet")]
    facets: Vec<String>,
    /// Keywords, whitespace or comma separated; repeatable.
    #[arg(long)]
    keywords: Vec<String>,
    #[arg(long)]
    transform: Option<TransformationKind>,
    #[arg(long)]
    thesaurus: Option<String>,
    #[arg(long)]
    all_terms: bool,
}

impl FilterArgs {
    fn query(&self) -> anyhow::Result<AnalysisQuery> {
        let mut facet_filters: BTreeMap<String, _> = BTreeMap::new();
        for f in &self.facets {
            let (k, v) = f.split_once('=').ok_or_else(|| anyhow!("--facet expects name=value, got {f:?}"))?;
            facet_filters
                .entry(k.to_string())
                .or_insert_with(std::collections::BTreeSet::new)
                .insert(v.to_string());
        }
        Ok(AnalysisQuery {
            facet_filters,
            keyword_terms: split_terms(&self.keywords).into_iter().collect(),
            transformation: self.transform.unwrap_or(TransformationKind::OriginalVersion),
            use_thesaurus: self.thesaurus.clone(),
            all_terms: self.all_terms,
            ..AnalysisQuery::default()
        })
    }
}

fn split_terms(values: &[String]) -> Vec<String> {
    values
        .iter()
        .flat_map(|v| v.split(|c: char| c.is_whitespace() || c == ','))
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

fn print_json(value: &impl Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_config(cli: &Cli) -> anyhow::Result<ApiConfig> {
    let mut config = match &cli.config {
        Some(path) => ApiConfig::from_file(path)?,
        None => ApiConfig::default(),
    };
    if let Some(root) = &cli.store_root {
        config.store_root = root.clone();
    }
    Ok(config)
}

fn open(config: &ApiConfig) -> anyhow::Result<Engine> {
    Ok(textpond::open_engine(config)?)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Ingest { pond, languages } => {
            if let Some(langs) = languages {
                config.languages = langs;
            }
            let engine = Engine::open(config.engine_config())?;
            let report = engine
                .ingest(&pond)
                .with_context(|| format!("ingesting {}", pond.display()))?;
            print_json(&report)?;
        }
        Command::Manifest(ManifestCommand::Show { id, raw }) => {
            let snapshot = open(&config)?.snapshot();
            if raw {
                print!("{}", snapshot.manifest_raw(&id)?);
            } else {
                print_json(&snapshot.manifest(&id)?)?;
            }
        }
        Command::Manifest(ManifestCommand::Validate { all, ids }) => {
            if !all && ids.is_empty() {
                bail!("give --all or at least one document id");
            }
            let snapshot = open(&config)?.snapshot();
            let mut report = if all { snapshot.validate_all() } else { Default::default() };
            for id in &ids {
                report.checked += 1;
                if let Err(e) = snapshot.manifest(id).and_then(|m| Ok(m.validate()?)) {
                    report.problems.push(format!("{id}: {e}"));
                }
            }
            print_json(&report)?;
            if !report.is_ok() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Search {
            terms,
            label,
            thesaurus,
            highlight_size,
            all_terms,
        } => {
            let snapshot = open(&config)?.snapshot();
            let terms = split_terms(&[terms]);
            let label: Label = label.parse()?;
            let result = snapshot.search(&terms, label, thesaurus.as_deref(), all_terms)?;
            match highlight_size {
                None => print_json(&result)?,
                Some(window) => {
                    let highlights = result
                        .ids
                        .iter()
                        .map(|id| snapshot.highlights(id, &terms, label, thesaurus.as_deref(), window))
                        .collect::<Result<Vec<HighlightResult>, _>>()?;
                    print_json(&serde_json::json!({"search": result, "highlights": highlights}))?;
                }
            }
        }
        Command::Link(LinkCommand::Build { presentation, measure }) => {
            let measure = BuildLinksRequest { presentation, measure }.measure()?;
            print_json(&open(&config)?.build_links(measure)?)?;
        }
        Command::Link(LinkCommand::List) => print_json(&open(&config)?.snapshot().stored_graphs())?,
        Command::Link(LinkCommand::Show { name }) => print_json(&open(&config)?.snapshot().graph(&name)?)?,
        Command::Query {
            filter,
            aggregate,
            granularity,
            top,
            offset,
            limit,
        } => {
            let q = filter.query()?;
            let snapshot = open(&config)?.snapshot();
            match aggregate {
                Some(facet) => print_json(&snapshot.aggregate(&q, &facet, granularity, top)?)?,
                None => print_json(&snapshot.documents(&q, Page { offset, limit })?)?,
            }
        }
        Command::Communities {
            link,
            threshold,
            walk_length,
            filter,
        } => {
            if walk_length == Some(0) {
                bail!("--walk-length must be positive");
            }
            let q = filter.query()?;
            print_json(&open(&config)?.snapshot().communities(&link, &q, threshold, walk_length)?)?;
        }
        Command::Centrality { link, threshold, filter } => {
            let q = filter.query()?;
            print_json(&open(&config)?.snapshot().centrality(&link, &q, threshold)?)?;
        }
        Command::Serve { bind, cors, ui_dir } => {
            if let Some(bind) = bind {
                config.bind = bind;
            }
            if !cors.is_empty() {
                config.cors_origins = cors;
            }
            if ui_dir.is_some() {
                config.ui_dir = ui_dir;
            }
            serve(&config)?;
        }
        Command::Synth { dir, seed, count } => {
            let docs = synth::generate(seed, count);
            synth::write_pond(&dir, &docs).with_context(|| format!("writing {}", dir.display()))?;
            println!("{} documents written to {}", docs.len(), dir.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

async fn shutdown_signal() {
    let ctrl_c = tokio::signal::ctrl_c();
    #[cfg(unix)]
    {
        let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
            .expect("SIGTERM handler");
        tokio::select! {
            _ = ctrl_c => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = ctrl_c.await;
}

fn serve(config: &ApiConfig) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let handle = textpond::serve(config).await?;
        eprintln!("listening on http://{}", handle.local_addr());
        shutdown_signal().await;
        eprintln!("shutting down");
        handle.shutdown().await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
