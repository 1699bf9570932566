//! `cope`: dataset generation, benchmarks and inspection tools for the
//! contextual memory engine.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use cope_core::bench::{
    gen_synthetic, import_embeddings, render_table, run_bench, BenchOptions, Dataset, LabelMap,
    Method, SyntheticDatasetSpec,
};
use cope_core::embfile::read_embedding_file;
use cope_core::recall::RecallMemory;
use cope_core::search::{cope_search_embedding, flat_cope_search_embedding, SearchParams};
use cope_core::tree::ContextualTree;
use cope_core::{ContextualMemory, Modality, Role};

#[derive(Parser)]
#[command(name = "cope", version, about = "Contextual memory engine tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Gen {
        #[arg(long, default_value_t = 100)]
        classes: usize,
        /// Training contexts per class.
        #[arg(long, default_value_t = 100)]
        train: usize,
        /// Queries per class.
        #[arg(long, default_value_t = 10)]
        queries: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run retrieval benchmarks over a dataset directory.
    Bench {
        /// Directory holding contexts.cpme, queries.cpme and labels.json.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "cope_clustered,cope_flat,rag_flat"
        )]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 5)]
        topk: usize,
        #[arg(long, default_value_t = 100)]
        warmup: usize,
        /// Minimum number of timed queries; the query set is cycled.
        #[arg(long, default_value_t = 1000)]
        min_timed: usize,
        /// Threads for a separate throughput pass (off when absent).
        #[arg(long)]
        threads: Option<usize>,
        /// Write one JSON report per line to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build a memory snapshot from an embedding file and label map.
    Import {
        #[arg(long)]
        contexts: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value = "image")]
        modality: Modality,
        /// Snapshot file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the contextual tree of a snapshot as JSON.
    Tree {
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Search a snapshot with every query in an embedding file.
    Search {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_enum, default_value_t = SearchMode::Clustered)]
        mode: SearchMode,
        #[arg(long, default_value_t = 5)]
        topk: usize,
        /// Personalized tags added after retrieval (defaults to topk).
        #[arg(long)]
        personalization_limit: Option<usize>,
        /// Contexts printed per query.
        #[arg(long, default_value_t = 10)]
        show: usize,
    },
    /// Query or extend a conversation log file.
    Recall {
        #[arg(long)]
        log: PathBuf,
        #[command(subcommand)]
        op: RecallOp,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SearchMode {
    Clustered,
    Flat,
}

#[derive(Subcommand)]
enum RecallOp {
    /// Case-insensitive substring search.
    Search {
        query: String,
        #[arg(long, default_value_t = 0)]
        page: usize,
    },
    /// Entries dated within an inclusive YYYY-MM-DD range.
    Date {
        start: String,
        end: String,
        #[arg(long, default_value_t = 0)]
        page: usize,
    },
    /// Append a message stamped with the current time.
    Append {
        #[arg(long, default_value = "user")]
        role: Role,
        text: String,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen {
            classes,
            train,
            queries,
            dim,
            noise,
            seed,
            out,
        } => {
            let dataset = gen_synthetic(&SyntheticDatasetSpec {
                classes,
                train_per_class: train,
                queries_per_class: queries,
                dim,
                noise_scale: noise,
                seed,
            })?;
            dataset.save(&out)?;
            println!(
                "wrote {} contexts and {} queries ({classes} classes, dim {dim}) to {}",
                dataset.contexts.len(),
                dataset.queries.len(),
                out.display()
            );
        }
        Command::Bench {
            dataset,
            methods,
            topk,
            warmup,
            min_timed,
            threads,
            report,
        } => {
            let data = Dataset::load(&dataset)
                .with_context(|| format!("loading dataset from {}", dataset.display()))?;
            let reports = run_bench(
                &data,
                &methods,
                BenchOptions {
                    topk,
                    warmup,
                    min_timed,
                    parallel_threads: threads,
                },
            )?;
            print!("{}", render_table(&reports));
            for r in reports.iter().filter(|r| r.throughput_qps.is_some()) {
                println!(
                    "{} throughput: {:.1} queries/s",
                    r.method.as_str(),
                    r.throughput_qps.unwrap_or_default()
                );
            }
            if let Some(path) = report {
                let mut w = BufWriter::new(File::create(&path)?);
                for r in &reports {
                    writeln!(w, "{}", r.to_ndjson_line())?;
                }
                w.flush()?;
            }
        }
        Command::Import {
            contexts,
            labels,
            modality,
            out,
        } => {
            let file = read_embedding_file(&contexts)?;
            let labels = LabelMap::load(&labels)?;
            let memory = import_embeddings(&file, &labels, modality)?;
            memory.save_snapshot(&out)?;
            println!(
                "imported {} contexts under {} tags into {}",
                memory.context_count(),
                memory.tag_count(),
                out.display()
            );
        }
        Command::Tree { snapshot } => {
            let memory = ContextualMemory::load_snapshot(&snapshot)?;
            let tree = ContextualTree::build_default(&memory)?;
            println!("{}", serde_json::to_string_pretty(&tree.dump())?);
        }
        Command::Search {
            snapshot,
            queries,
            mode,
            topk,
            personalization_limit,
            show,
        } => {
            let memory = ContextualMemory::load_snapshot(&snapshot)?;
            let queries = read_embedding_file(&queries)?;
            let params = SearchParams::new(topk)
                .with_personalization_limit(personalization_limit.unwrap_or(topk));
            let tree = match mode {
                SearchMode::Clustered => Some(ContextualTree::build_default(&memory)?),
                SearchMode::Flat => None,
            };
            let mut out = BufWriter::new(std::io::stdout().lock());
            for (id, query) in &queries.records {
                let mut result = match &tree {
                    Some(tree) => cope_search_embedding(query, &memory, tree, params)?,
                    None => flat_cope_search_embedding(query, &memory, params)?,
                };
                let total = result.contexts.len();
                result.contexts.truncate(show);
                let line = serde_json::json!({
                    "query": id,
                    "tags": result.tags,
                    "contexts": result.contexts,
                    "total_contexts": total,
                });
                writeln!(out, "{line}")?;
            }
            out.flush()?;
        }
        Command::Recall { log, op } => {
            let mut recall = RecallMemory::open(&log)?;
            match op {
                RecallOp::Search { query, page } => {
                    println!("{}", recall.conversation_search(&query, page).render(page));
                }
                RecallOp::Date { start, end, page } => {
                    let found = recall.conversation_search_date(&start, &end, page)?;
                    println!("{}", found.render(page));
                }
                RecallOp::Append { role, text } => {
                    let seq = recall.append_entry(role, text, chrono::Utc::now())?;
                    println!("appended entry {seq}");
                }
            }
        }
    }
    Ok(())
}
