//! Timed retrieval runs over a dataset and their reports.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::embedding::{Embedding, Modality};
use crate::error::{Error, Result};
use crate::memory::ContextualMemory;
use crate::metrics::topk_accuracy;
use crate::rag::{FlatRecord, FlatStore};
use crate::search::{cope_search_embedding, flat_cope_search_embedding, SearchParams};
use crate::tree::ContextualTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CopeClustered,
    CopeFlat,
    RagFlat,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::CopeClustered, Method::CopeFlat, Method::RagFlat];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::CopeClustered => "cope_clustered",
            Method::CopeFlat => "cope_flat",
            Method::RagFlat => "rag_flat",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchOptions {
    pub topk: usize,
    pub warmup: usize,
    /// Timed queries; the query set is cycled when it is smaller.
    pub min_timed: usize,
    /// Extra throughput pass with this many threads. Never feeds latency.
    pub parallel_threads: Option<usize>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            topk: 5,
            warmup: 100,
            min_timed: 1000,
            parallel_threads: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub method: Method,
    pub memory_size: usize,
    pub tags: usize,
    pub queries: usize,
    pub timed_queries: usize,
    pub top1: f64,
    pub top5: f64,
    pub median_latency_ms: f64,
    pub p95_latency_ms: f64,
    pub build_time_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput_qps: Option<f64>,
}

impl BenchReport {
    pub fn to_ndjson_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Nearest-rank percentile of an ascending slice; `p` in `(0, 100]`.
pub fn percentile(sorted: &[Duration], p: f64) -> Duration {
    if sorted.is_empty() {
        return Duration::ZERO;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn median(sorted: &[Duration]) -> Duration {
    match sorted.len() {
        0 => Duration::ZERO,
        n if n % 2 == 1 => sorted[n / 2],
        n => (sorted[n / 2 - 1] + sorted[n / 2]) / 2,
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// A populated store that maps a query to ranked class names.
enum Index {
    Cope {
        memory: ContextualMemory,
        tree: Option<ContextualTree>,
    },
    Rag(FlatStore),
}

impl Index {
    fn build(method: Method, dataset: &Dataset) -> Result<Index> {
        Ok(match method {
            Method::CopeClustered | Method::CopeFlat => {
                let memory = dataset.to_memory(Modality::Image)?;
                let tree = match method {
                    Method::CopeClustered => Some(ContextualTree::build_default(&memory)?),
                    _ => None,
                };
                Index::Cope { memory, tree }
            }
            Method::RagFlat => {
                let mut store = FlatStore::new(dataset.dim);
                for s in &dataset.contexts {
                    store.flat_insert(FlatRecord {
                        id: s.id.clone(),
                        key_embedding: s.embedding.clone(),
                        value: s.class.clone(),
                        payload: None,
                    })?;
                }
                Index::Rag(store)
            }
        })
    }

    fn tag_count(&self) -> usize {
        match self {
            Index::Cope { memory, .. } => memory.tag_count(),
            Index::Rag(_) => 0,
        }
    }

    /// Ranked class names. CoPe ranks the retrieved tags; the flat store
    /// ranks the labels of its top-k records, first occurrence kept.
    fn predict(&self, query: &Embedding, topk: usize) -> Result<Vec<String>> {
        match self {
            Index::Cope { memory, tree } => {
                let params = SearchParams::new(topk);
                let mut result = match tree {
                    Some(tree) => cope_search_embedding(query, memory, tree, params)?,
                    None => flat_cope_search_embedding(query, memory, params)?,
                };
                result.tags.truncate(topk);
                Ok(result.tags)
            }
            Index::Rag(store) => {
                let mut labels: Vec<String> = Vec::with_capacity(topk);
                for hit in store.flat_search(query, topk)? {
                    if !labels.contains(&hit.value) {
                        labels.push(hit.value);
                    }
                }
                Ok(labels)
            }
        }
    }
}

fn throughput(index: &Index, queries: &[Sample], topk: usize, threads: usize) -> Result<f64> {
    let threads = threads.max(1);
    let start = Instant::now();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                s.spawn(move || -> Result<()> {
                    for q in queries.iter().skip(t).step_by(threads) {
                        index.predict(&q.embedding, topk)?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .try_for_each(|h| h.join().expect("bench thread panicked"))
    })?;
    Ok(queries.len() as f64 / start.elapsed().as_secs_f64())
}

/// Score every method on the same queries in the same order. Latency covers
/// the search call only: query embeddings are precomputed, and store
/// population plus tree build are reported as `build_time_ms`.
pub fn run_bench(
    dataset: &Dataset,
    methods: &[Method],
    opts: BenchOptions,
) -> Result<Vec<BenchReport>> {
    if opts.topk == 0 {
        return Err(Error::Validation("topk must be positive".into()));
    }
    if dataset.queries.is_empty() {
        return Err(Error::EmptyInput("dataset has no queries"));
    }
    let gold: Vec<&str> = dataset.queries.iter().map(|q| q.class.as_str()).collect();
    let nq = dataset.queries.len();
    let timed = opts.min_timed.max(nq);

    let mut reports = Vec::with_capacity(methods.len());
    for &method in methods {
        let started = Instant::now();
        let index = Index::build(method, dataset)?;
        let build_time = started.elapsed();

        for q in dataset.queries.iter().cycle().take(opts.warmup) {
            std::hint::black_box(index.predict(&q.embedding, opts.topk)?);
        }
        let mut predictions = Vec::with_capacity(nq);
        let mut latencies = Vec::with_capacity(timed);
        for (i, q) in dataset.queries.iter().cycle().take(timed).enumerate() {
            let t = Instant::now();
            let ranked = index.predict(&q.embedding, opts.topk)?;
            latencies.push(t.elapsed());
            if i < nq {
                predictions.push(ranked);
            } else {
                std::hint::black_box(ranked);
            }
        }
        latencies.sort_unstable();
        let throughput_qps = opts
            .parallel_threads
            .map(|n| throughput(&index, &dataset.queries, opts.topk, n))
            .transpose()?;
        reports.push(BenchReport {
            method,
            memory_size: dataset.contexts.len(),
            tags: index.tag_count(),
            queries: nq,
            timed_queries: timed,
            top1: topk_accuracy(&predictions, &gold, 1)?,
            top5: topk_accuracy(&predictions, &gold, 5)?,
            median_latency_ms: ms(median(&latencies)),
            p95_latency_ms: ms(percentile(&latencies, 95.0)),
            build_time_ms: ms(build_time),
            throughput_qps,
        });
    }
    Ok(reports)
}

/// Fixed-width text table, one row per report.
pub fn render_table(reports: &[BenchReport]) -> String {
    let mut out = format!(
        "{:<16}{:>12}{:>8}{:>9}{:>9}{:>12}{:>12}{:>12}\n",
        "method", "memory_size", "tags", "top1", "top5", "median_ms", "p95_ms", "build_ms"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<16}{:>12}{:>8}{:>9.4}{:>9.4}{:>12.4}{:>12.4}{:>12.1}",
            r.method.as_str(),
            r.memory_size,
            r.tags,
            r.top1,
            r.top5,
            r.median_latency_ms,
            r.p95_latency_ms,
            r.build_time_ms
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{gen_synthetic, SyntheticDatasetSpec};

    fn quick() -> BenchOptions {
        BenchOptions {
            topk: 5,
            warmup: 5,
            min_timed: 20,
            parallel_threads: None,
        }
    }

    #[test]
    fn separable_data_is_perfect() {
        let d = gen_synthetic(&SyntheticDatasetSpec {
            classes: 6,
            train_per_class: 4,
            queries_per_class: 3,
            dim: 16,
            noise_scale: 0.01,
            seed: 5,
        })
        .unwrap();
        let reports = run_bench(&d, &Method::ALL, quick()).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert_eq!(r.top1, 1.0, "{r:?}");
            assert!(r.top1 <= r.top5);
            assert!(r.median_latency_ms > 0.0 && r.p95_latency_ms >= r.median_latency_ms);
            assert_eq!(r.timed_queries, 20);
        }
    }

    #[test]
    fn one_context_per_tag_flat_methods_agree() {
        let d = gen_synthetic(&SyntheticDatasetSpec {
            classes: 30,
            train_per_class: 1,
            queries_per_class: 4,
            dim: 8,
            noise_scale: 0.5,
            seed: 2,
        })
        .unwrap();
        let cope = Index::build(Method::CopeFlat, &d).unwrap();
        let rag = Index::build(Method::RagFlat, &d).unwrap();
        for q in &d.queries {
            assert_eq!(
                cope.predict(&q.embedding, 1).unwrap(),
                rag.predict(&q.embedding, 1).unwrap()
            );
        }
    }

    #[test]
    fn percentiles() {
        let v: Vec<Duration> = (1..=100).map(Duration::from_millis).collect();
        assert_eq!(percentile(&v, 95.0), Duration::from_millis(95));
        assert_eq!(median(&v), Duration::from_micros(50_500));
        assert_eq!(percentile(&v[..1], 95.0), Duration::from_millis(1));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("hnsw".parse::<Method>().is_err());
    }

    #[test]
    fn table_golden() {
        let reports = vec![
            BenchReport {
                method: Method::CopeClustered,
                memory_size: 10000,
                tags: 100,
                queries: 1000,
                timed_queries: 1000,
                top1: 0.987,
                top5: 1.0,
                median_latency_ms: 0.0412,
                p95_latency_ms: 0.05,
                build_time_ms: 1234.56,
                throughput_qps: None,
            },
            BenchReport {
                method: Method::RagFlat,
                memory_size: 10000,
                tags: 0,
                queries: 1000,
                timed_queries: 1000,
                top1: 1.0,
                top5: 1.0,
                median_latency_ms: 1.5,
                p95_latency_ms: 2.25,
                build_time_ms: 3.0,
                throughput_qps: None,
            },
        ];
        let expected = "\
method           memory_size    tags     top1     top5   median_ms      p95_ms    build_ms
cope_clustered         10000     100   0.9870   1.0000      0.0412      0.0500      1234.6
rag_flat               10000       0   1.0000   1.0000      1.5000      2.2500         3.0
";
        assert_eq!(render_table(&reports), expected);
        let line = reports[0].to_ndjson_line();
        assert!(line.starts_with(r#"{"method":"cope_clustered","memory_size":10000"#));
        assert_eq!(
            serde_json::from_str::<BenchReport>(&line).unwrap(),
            reports[0]
        );
    }
}
