//! Command-line front end: build, query, benchmark and inspect index files.
//!
//! Exit codes: 0 on success, 2 when an input cannot be read or parsed, 3 when
//! building or querying fails.

use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use attrfuse::backend::{BackendConfig, GraphParams};
use attrfuse::hybrid::{BuildConfig, HybridIndex, QueryResult};
use attrfuse::io::attributes::{load_attributes, AttributeKind, AttributeTable};
use attrfuse::io::bench::{bench, BenchConfig, BenchQuery};
use attrfuse::io::persist::{load_index, save_index, IndexFile, StoredIndex};
use attrfuse::io::vecs::{load_vectors, VecFormat};
use attrfuse::metric::Points;
use attrfuse::multi::{ChainConfig, MultiIndex, PriorityOrder};
use attrfuse::range::{RangeConfig, RangeIndex};
use attrfuse::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "attrfuse",
    version,
    about = "Filtered nearest neighbor search over attribute-fused vectors"
)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Embedding dimension for categorical attributes declared as bare `cat`
    #[arg(long, global = true, default_value_t = 10)]
    m: usize,

    /// Largest fused distance allowed within one attribute class
    #[arg(long, global = true, default_value_t = 1.0)]
    epsilon_f: f64,

    /// Tolerated miss probability used to size candidate lists
    #[arg(long, global = true, default_value_t = 0.01)]
    epsilon: f64,

    /// Failure probability for range-index tube radii
    #[arg(long, global = true, default_value_t = 0.05)]
    delta: f64,

    /// Angular resolution of the range line index, in radians
    #[arg(long, global = true, default_value_t = std::f64::consts::PI / 180.0)]
    nu: f64,

    /// Fixed alpha instead of the derived one (10.0 when given without a value)
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "10.0")]
    alpha_override: Option<f64>,

    /// Fixed beta instead of the derived one (2.0 when given without a value)
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "2.0")]
    beta_override: Option<f64>,

    #[arg(long, global = true, value_enum, default_value_t = Backend::Flat)]
    backend: Backend,

    #[arg(long, global = true, default_value_t = 0x5eed)]
    seed: u64,

    /// Attribute indices from highest to lowest priority, e.g. `2,0,1`
    #[arg(long, global = true)]
    priority: Option<PriorityOrder>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Backend {
    Flat,
    Graph,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    /// Hybrid for one attribute, multi otherwise
    Auto,
    Hybrid,
    Multi,
    Range,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Fvecs,
    Bvecs,
    Csv,
}

impl From<Format> for VecFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Fvecs => VecFormat::Fvecs,
            Format::Bvecs => VecFormat::Bvecs,
            Format::Csv => VecFormat::Csv,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an index from a vector file and an attribute file
    Build {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        attributes: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Kind::Auto)]
        kind: Kind,
        /// Vector file format; guessed from the extension when omitted
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Exact-match attribute queries
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Attribute file with one row per query
        #[arg(long)]
        query_attributes: PathBuf,
        #[arg(long, short, default_value_t = 10)]
        k: usize,
        /// Allow results whose attributes only approximately match
        #[arg(long)]
        attr_approx: bool,
        #[arg(long)]
        json: bool,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Range queries against a range index
    Range {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Lower bounds, one row per query
        #[arg(long)]
        lower: PathBuf,
        /// Upper bounds, one row per query
        #[arg(long)]
        upper: PathBuf,
        #[arg(long, short, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        json: bool,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Recall and throughput against an exhaustive filtered scan
    Bench {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, conflicts_with_all = ["lower", "upper"])]
        query_attributes: Option<PathBuf>,
        #[arg(long, requires = "upper")]
        lower: Option<PathBuf>,
        #[arg(long, requires = "lower")]
        upper: Option<PathBuf>,
        #[arg(long, short, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        attr_approx: bool,
        /// Worker threads; 0 uses every core
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Line-delimited JSON instead of a table
        #[arg(long)]
        json: bool,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Print index parameters and statistics
    Stats {
        #[arg(long)]
        index: PathBuf,
    },
    /// Reorder the attribute priorities of a multi-attribute index
    UpdatePriority {
        #[arg(long)]
        index: PathBuf,
        /// Output file; defaults to rewriting the input
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Operation(String),
}

type Outcome<T> = std::result::Result<T, Failure>;

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn operation(e: impl std::fmt::Display) -> Failure {
    Failure::Operation(e.to_string())
}

fn vec_format(path: &Path, given: Option<Format>) -> Outcome<VecFormat> {
    match given {
        Some(f) => Ok(f.into()),
        None => VecFormat::from_path(path).ok_or_else(|| {
            input(format!(
                "cannot tell the format of {}; pass --format",
                path.display()
            ))
        }),
    }
}

fn read_points(path: &Path, format: Option<Format>) -> Outcome<Points> {
    load_vectors(path, vec_format(path, format)?)
        .map_err(|e| input(format!("{}: {e}", path.display())))
}

fn read_table(path: &Path) -> Outcome<AttributeTable> {
    load_attributes(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn read_index(path: &Path) -> Outcome<IndexFile> {
    load_index(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn write_index(path: &Path, file: &IndexFile) -> Outcome<()> {
    save_index(path, file).map_err(|e| operation(format!("{}: {e}", path.display())))
}

fn backend_config(g: &Global) -> BackendConfig {
    match g.backend {
        Backend::Flat => BackendConfig::flat(),
        Backend::Graph => BackendConfig::graph(GraphParams {
            seed: g.seed,
            ..GraphParams::default()
        }),
    }
}

fn build(
    g: &Global,
    vectors: &Path,
    attributes: &Path,
    out: &Path,
    kind: Kind,
    format: Option<Format>,
) -> Outcome<()> {
    let contents = read_points(vectors, format)?;
    let table = read_table(attributes)?;
    if table.len() != contents.len() {
        return Err(input(format!(
            "{} vectors but {} attribute rows",
            contents.len(),
            table.len()
        )));
    }
    let (mut attrs, vocabulary) = table.embed(g.seed, g.m).map_err(input)?;
    let kind = match kind {
        Kind::Auto if attrs.len() == 1 => Kind::Hybrid,
        Kind::Auto => Kind::Multi,
        k => k,
    };
    let index = match kind {
        Kind::Hybrid | Kind::Range if attrs.len() != 1 => {
            return Err(input(format!(
                "a {kind:?} index takes one attribute, the file has {}",
                attrs.len()
            )));
        }
        Kind::Hybrid => {
            let cfg = BuildConfig {
                epsilon_f: g.epsilon_f,
                alpha_override: g.alpha_override,
                beta_override: g.beta_override,
                backend: backend_config(g),
            };
            StoredIndex::Hybrid(
                HybridIndex::build_from(contents, attrs.remove(0), &cfg).map_err(operation)?,
            )
        }
        Kind::Range => {
            if matches!(table.schema[0], AttributeKind::Categorical(_)) {
                return Err(input("range indexes need a numeric attribute"));
            }
            let cfg = RangeConfig {
                epsilon_f: g.epsilon_f,
                alpha_override: g.alpha_override,
                beta_override: g.beta_override,
                delta: g.delta,
                nu: g.nu,
                seed: g.seed,
                ..RangeConfig::default()
            };
            StoredIndex::Range(
                RangeIndex::build_from(contents, attrs.remove(0), &cfg).map_err(operation)?,
            )
        }
        Kind::Multi => {
            if g.alpha_override.is_some() || g.beta_override.is_some() {
                return Err(input(
                    "multi-attribute indexes derive alpha and beta per level; drop the overrides",
                ));
            }
            let order = g
                .priority
                .clone()
                .unwrap_or_else(|| PriorityOrder::identity(attrs.len()));
            let cfg = ChainConfig {
                epsilon_f: g.epsilon_f,
                backend: backend_config(g),
                ..ChainConfig::default()
            };
            StoredIndex::Multi(
                MultiIndex::build_from(contents, attrs, order, &cfg).map_err(operation)?,
            )
        }
        Kind::Auto => unreachable!("resolved above"),
    };
    let n = index.len();
    let name = index.kind_name();
    write_index(out, &IndexFile { index, vocabulary })?;
    eprintln!("built {name} index over {n} records -> {}", out.display());
    Ok(())
}

fn exact_queries(
    file: &IndexFile,
    queries: &Path,
    attributes: &Path,
    format: Option<Format>,
) -> Outcome<Vec<BenchQuery>> {
    let qs = read_points(queries, format)?;
    let table = read_table(attributes)?;
    if table.len() != qs.len() {
        return Err(input(format!(
            "{} queries but {} query attribute rows",
            qs.len(),
            table.len()
        )));
    }
    let attrs = if file.vocabulary.is_empty() {
        table.embed(0, 1).map_err(input)?.0
    } else {
        table.embed_with(&file.vocabulary).map_err(operation)?
    };
    Ok(qs
        .rows()
        .enumerate()
        .map(|(i, q)| BenchQuery::Exact {
            q: q.to_vec(),
            attrs: attrs.iter().map(|a| a.row(i).to_vec()).collect(),
        })
        .collect())
}

fn range_queries(
    queries: &Path,
    lower: &Path,
    upper: &Path,
    format: Option<Format>,
) -> Outcome<Vec<BenchQuery>> {
    let qs = read_points(queries, format)?;
    let lo = read_points(lower, None)?;
    let hi = read_points(upper, None)?;
    if lo.len() != qs.len() || hi.len() != qs.len() {
        return Err(input(format!(
            "{} queries but {} lower and {} upper bounds",
            qs.len(),
            lo.len(),
            hi.len()
        )));
    }
    Ok((0..qs.len())
        .map(|i| BenchQuery::Range {
            q: qs.row(i).to_vec(),
            l: lo.row(i).to_vec(),
            u: hi.row(i).to_vec(),
        })
        .collect())
}

fn answer(
    index: &StoredIndex,
    query: &BenchQuery,
    k: usize,
    eps: f64,
    attr_approx: bool,
) -> Result<QueryResult, Error> {
    match (index, query) {
        (StoredIndex::Hybrid(h), BenchQuery::Exact { q, attrs }) if attrs.len() == 1 => {
            h.query(q, &attrs[0], k, eps, attr_approx)
        }
        (StoredIndex::Multi(m), BenchQuery::Exact { q, attrs }) => {
            let refs: Vec<&[f64]> = attrs.iter().map(|a| &a[..]).collect();
            m.query(q, &refs, k, eps, attr_approx)
        }
        (StoredIndex::Range(r), BenchQuery::Range { q, l, u }) => {
            Ok(r.query(q, l, u, k, eps)?.result)
        }
        _ => Err(Error::InvalidArgument(format!(
            "query type does not match a {} index",
            index.kind_name()
        ))),
    }
}

fn print_results(
    file: &IndexFile,
    queries: &[BenchQuery],
    k: usize,
    eps: f64,
    attr_approx: bool,
    json: bool,
) -> Outcome<()> {
    let mut out = BufWriter::new(io::stdout().lock());
    if !json {
        writeln!(out, "query\trank\tid\tdistance\tscore").map_err(operation)?;
    }
    for (qi, q) in queries.iter().enumerate() {
        let res = answer(&file.index, q, k, eps, attr_approx)
            .map_err(|e| operation(format!("query {qi}: {e}")))?;
        for (rank, h) in res.hits.iter().enumerate() {
            if json {
                let line = serde_json::json!({
                    "query": qi,
                    "rank": rank,
                    "id": h.id,
                    "distance": h.content_distance,
                    "attribute_distance": h.attribute_distance,
                    "score": h.score,
                    "k_prime": res.k_prime,
                });
                writeln!(out, "{line}").map_err(operation)?;
            } else {
                writeln!(
                    out,
                    "{qi}\t{rank}\t{}\t{:.6}\t{:.6}",
                    h.id, h.content_distance, h.score
                )
                .map_err(operation)?;
            }
        }
    }
    out.flush().map_err(operation)
}

fn stats(path: &Path) -> Outcome<()> {
    let file = read_index(path)?;
    let size = std::fs::metadata(path).map_err(input)?.len();
    let mut out = BufWriter::new(io::stdout().lock());
    let mut put = |key: &str, value: String| writeln!(out, "{key:<16}{value}").map_err(operation);
    put("kind", file.index.kind_name().into())?;
    put("records", file.index.len().to_string())?;
    put("file bytes", size.to_string())?;
    match &file.index {
        StoredIndex::Hybrid(h) => {
            let p = h.params();
            put("content dim", p.d.to_string())?;
            put("attribute dim", p.m.to_string())?;
            put("alpha", p.alpha.to_string())?;
            put("beta", p.beta.to_string())?;
            put("epsilon_f", p.epsilon_f.to_string())?;
            put("delta_max", p.delta_max.to_string())?;
            put("sigma_min", p.sigma_min.to_string())?;
            put("backend", format!("{:?}", h.backend_kind()).to_lowercase())?;
            let s = h.stats();
            put("classes", s.num_classes().to_string())?;
            let largest = (0..s.num_classes())
                .map(|c| s.class(c).count)
                .max()
                .unwrap_or(0);
            put("largest class", largest.to_string())?;
        }
        StoredIndex::Multi(m) => {
            let order: Vec<String> = m
                .order()
                .as_slice()
                .iter()
                .map(ToString::to_string)
                .collect();
            put("attributes", m.num_attributes().to_string())?;
            put("priority", order.join(","))?;
            put(
                "backend",
                format!("{:?}", m.backend().kind()).to_lowercase(),
            )?;
            let (w, wv) = m.weights();
            for lvl in m.levels() {
                put(
                    &format!("level attr {}", lvl.attribute),
                    format!(
                        "alpha {} beta {} weight {}",
                        lvl.params.alpha, lvl.params.beta, w[lvl.attribute]
                    ),
                )?;
            }
            put("content weight", wv.to_string())?;
        }
        StoredIndex::Range(r) => {
            let p = r.params();
            put("content dim", p.d.to_string())?;
            put("attribute dim", p.m.to_string())?;
            put("alpha", p.alpha.to_string())?;
            put("beta", p.beta.to_string())?;
            put("lines", r.line_index().lines().len().to_string())?;
            put("slack", r.slack().to_string())?;
        }
    }
    let categorical = file.vocabulary.iter().flatten().count();
    if categorical > 0 {
        let tokens: usize = file.vocabulary.iter().flatten().map(|v| v.len()).sum();
        put(
            "vocabulary",
            format!("{tokens} tokens over {categorical} categorical attributes"),
        )?;
    }
    out.flush().map_err(operation)
}

fn update_priority(g: &Global, path: &Path, out: Option<&Path>) -> Outcome<()> {
    let order = g
        .priority
        .clone()
        .ok_or_else(|| input("update-priority needs --priority"))?;
    let file = read_index(path)?;
    let StoredIndex::Multi(m) = file.index else {
        return Err(input(format!(
            "{} is not a multi-attribute index",
            path.display()
        )));
    };
    let updated = m.update_priority(order).map_err(operation)?;
    let target = out.unwrap_or(path);
    write_index(
        target,
        &IndexFile {
            index: StoredIndex::Multi(updated.index),
            vocabulary: file.vocabulary,
        },
    )?;
    eprintln!(
        "recomputed {} levels -> {}",
        updated.recomputed_levels,
        target.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Outcome<()> {
    let g = &cli.global;
    match cli.command {
        Command::Build {
            vectors,
            attributes,
            out,
            kind,
            format,
        } => build(g, &vectors, &attributes, &out, kind, format),
        Command::Query {
            index,
            queries,
            query_attributes,
            k,
            attr_approx,
            json,
            format,
        } => {
            let file = read_index(&index)?;
            let qs = exact_queries(&file, &queries, &query_attributes, format)?;
            print_results(&file, &qs, k, g.epsilon, attr_approx, json)
        }
        Command::Range {
            index,
            queries,
            lower,
            upper,
            k,
            json,
            format,
        } => {
            let file = read_index(&index)?;
            let qs = range_queries(&queries, &lower, &upper, format)?;
            print_results(&file, &qs, k, g.epsilon, false, json)
        }
        Command::Bench {
            index,
            queries,
            query_attributes,
            lower,
            upper,
            k,
            attr_approx,
            threads,
            json,
            format,
        } => {
            let file = read_index(&index)?;
            let qs = match (query_attributes, lower, upper) {
                (Some(a), _, _) => exact_queries(&file, &queries, &a, format)?,
                (None, Some(l), Some(u)) => range_queries(&queries, &l, &u, format)?,
                _ => return Err(input("bench needs --query-attributes or --lower/--upper")),
            };
            let cfg = BenchConfig {
                k,
                eps: g.epsilon,
                attr_approx,
                threads,
            };
            let report = bench(&file.index, &qs, &cfg).map_err(operation)?;
            print!(
                "{}",
                if json {
                    report.json_lines()
                } else {
                    report.table()
                }
            );
            Ok(())
        }
        Command::Stats { index } => stats(&index),
        Command::UpdatePriority { index, out } => update_priority(g, &index, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Operation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
