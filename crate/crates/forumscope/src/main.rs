use std::fs;
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use forumscope::io::{write_records, Format};
use forumscope::pipeline::{RankChoice, RunConfig};
use forumscope::report;
use forumscope::store::{RunStatus, Store};
use forumscope::synth::{generate_synthetic, SyntheticSpec};
use forumscope_core::ingest::Granularity;
use forumscope_core::profile::ClassDefinition;

#[derive(Parser)]
#[command(name = "forumscope", version, about = "Event extraction from forum activity")]
struct Cli {
    /// Artifact store directory.
    #[arg(long, global = true, env = "FORUMSCOPE_STORE", default_value = "forumscope-store")]
    store: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum View {
    Storyline,
    Tableview,
    Heatmap,
    Scree,
    Keywords,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
    Html,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a post log into the store.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: Format,
        #[arg(long)]
        dataset: String,
    },
    /// Run the pipeline on a stored dataset.
    Run {
        #[arg(long)]
        dataset: String,
        /// `auto` or a fixed rank [default: auto]
        #[arg(long)]
        rank: Option<RankChoice>,
        /// L1 penalty weight [default: 1]
        #[arg(long)]
        lambda: Option<f64>,
        /// day, week or month [default: week]
        #[arg(long)]
        granularity: Option<Granularity>,
        /// [default: 0]
        #[arg(long)]
        seed: Option<u64>,
        /// Largest candidate rank for automatic selection.
        #[arg(long)]
        r_max: Option<usize>,
        /// JSON run configuration; flags given on the command line override it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Recompute labels with new class bags (JSON list of {label, bag}).
    Relabel {
        #[arg(long)]
        run: String,
        #[arg(long)]
        classes: PathBuf,
    },
    /// Export a view of a finished run.
    Report {
        #[arg(long)]
        run: String,
        #[arg(long, value_enum)]
        view: View,
        #[arg(long, value_enum)]
        format: OutFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic forum from a JSON spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        /// Output file; `.csv` or `.jsonl`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest { input, format, dataset } => {
            let store = Store::open(&cli.store)?;
            let file = fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let info = store.ingest(&dataset, std::io::BufReader::new(file), format)?;
            println!("{}", serde_json::to_string_pretty(&info)?);
        }
        Command::Run { dataset, rank, lambda, granularity, seed, r_max, config } => {
            let store = Store::open(&cli.store)?;
            let mut cfg = match config {
                Some(path) => serde_json::from_slice(&fs::read(&path)?).with_context(|| format!("parsing {}", path.display()))?,
                None => RunConfig::default(),
            };
            cfg.rank = rank.unwrap_or(cfg.rank);
            cfg.lambda = lambda.unwrap_or(cfg.lambda);
            cfg.granularity = granularity.unwrap_or(cfg.granularity);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.r_max = r_max.or(cfg.r_max);
            let record = store.run(&dataset, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&record)?);
            if record.status == RunStatus::Failed {
                bail!("run {} failed at {:?}: {}", record.id, record.stage, record.error.unwrap_or_default());
            }
        }
        Command::Relabel { run, classes } => {
            let store = Store::open(&cli.store)?;
            let classes: Vec<ClassDefinition> = serde_json::from_slice(&fs::read(&classes)?)?;
            let labels = store.relabel(&run, classes)?;
            println!("{}", serde_json::to_string_pretty(&labels)?);
        }
        Command::Report { run, view, format, out } => {
            let store = Store::open(&cli.store)?;
            let v = store.load_run(&run)?;
            fs::create_dir_all(&out)?;
            let written = write_report(&v, view, format, &out)?;
            for p in written {
                println!("{}", p.display());
            }
        }
        Command::Synth { spec, out } => {
            let spec: SyntheticSpec = serde_json::from_slice(&fs::read(&spec)?)?;
            let posts = generate_synthetic(&spec)?;
            let format = Format::from_path(&out).context("output must end in .csv or .jsonl")?;
            let file = fs::File::create(&out)?;
            write_records(std::io::BufWriter::new(file), &posts, format)?;
            println!("{} posts written to {}", posts.len(), out.display());
        }
        Command::Serve { host, port } => {
            let store = Store::open(&cli.store)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(forumscope::server::serve(store, SocketAddr::new(host, port)))?;
        }
    }
    Ok(())
}

fn json<T: serde::Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn write_report(
    v: &forumscope::store::RunView,
    view: View,
    format: OutFormat,
    out: &std::path::Path,
) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    match (view, format) {
        (View::Storyline, OutFormat::Json | OutFormat::Html) => {
            for c in &v.clusters {
                let Ok(s) = v.storyline(c.cluster_id, None) else {
                    log::warn!("cluster {}: storyline unavailable", c.cluster_id);
                    continue;
                };
                if format == OutFormat::Json {
                    files.push((format!("storyline-{}.json", c.cluster_id), json(&s)?));
                } else {
                    files.push((format!("storyline-{}.html", c.cluster_id), report::storyline_html(&s).into_bytes()));
                }
            }
        }
        (View::Tableview, OutFormat::Json) => files.push(("tableview.json".into(), json(&v.tableview)?)),
        (View::Tableview, OutFormat::Csv) => files.push(("tableview.csv".into(), report::tableview_csv(&v.tableview)?)),
        (View::Heatmap, OutFormat::Json) => files.push(("heatmap.json".into(), json(&v.heatmap())?)),
        (View::Heatmap, OutFormat::Csv) => files.push(("heatmap.csv".into(), report::heatmap_csv(&v.profiles)?)),
        (View::Scree, OutFormat::Json) => files.push(("scree.json".into(), json(&v.scree()?)?)),
        (View::Scree, OutFormat::Csv) => files.push(("scree.csv".into(), report::scree_csv(&v.scree()?)?)),
        (View::Keywords, OutFormat::Json) => files.push(("keywords.json".into(), json(&report::word_clouds(&v.keywords))?)),
        _ => bail!("this view has no such format"),
    }
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = out.join(name);
        forumscope::store::write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}
