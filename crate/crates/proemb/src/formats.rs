//! On-disk formats: edge lists, per-node panels, proxy matrices, model
//! checkpoints, estimate reports and RMSE tables.

use crate::error::{csv_err, io_err, json_err, Error, Result};
use proemb_core::estimators::EstimateReport;
use proemb_core::experiment::{ExperimentConfig, GraphKind, Method, Panel, RmseTable};
use proemb_core::graphgen::{EgoNetwork, GraphModel};
use proemb_core::neural::DenseNet;
use proemb_core::numerics::Mat;
use proemb_core::proemb::{EpochStats, ProEmbModel, Standardizer};
use proemb_core::simdata::{OutcomeCoeffs, OutcomePanel, ProxyPanel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const EDGES_FILE: &str = "edges.csv";
pub const PANEL_FILE: &str = "panel.jsonl";
pub const PROXIES_FILE: &str = "proxies.csv";
pub const MODEL_FILE: &str = "model.json";
pub const SIDECAR_FILE: &str = "model.meta.json";
pub const ESTIMATE_FILE: &str = "estimate.json";
pub const ITE_FILE: &str = "ite.csv";
pub const LOCK_FILE: &str = "config.lock";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Pretty JSON with a trailing newline. Floats use the shortest
/// representation that parses back to the same bits.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory JSON serialization");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(json_err(path))
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRow {
    src: usize,
    dst: usize,
}

/// One undirected edge per line, `src < dst`, under a `src,dst` header.
pub fn write_edges(path: &Path, g: &EgoNetwork) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for (src, dst) in g.edges() {
        w.serialize(EdgeRow { src, dst }).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_edges(path: &Path, n: usize, model: GraphModel) -> Result<EgoNetwork> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut edges = Vec::new();
    for (i, row) in r.deserialize::<EdgeRow>().enumerate() {
        let row = row.map_err(csv_err(path))?;
        if row.src >= row.dst {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 2,
                message: format!("expected src < dst, got {},{}", row.src, row.dst),
            });
        }
        edges.push((row.src, row.dst));
    }
    Ok(EgoNetwork::from_edges(n, &edges, model)?)
}

/// One line of `panel.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node: usize,
    pub y_prev: u8,
    pub treat: u8,
    pub y_fact: f64,
    pub y_cf: f64,
}

pub fn write_outcomes(path: &Path, out: &OutcomePanel) -> Result<()> {
    let mut w = create(path)?;
    for node in 0..out.n() {
        let rec = NodeRecord {
            node,
            y_prev: out.y_prev[node],
            treat: out.treat[node],
            y_fact: out.y_fact[node],
            y_cf: out.y_cf[node],
        };
        let line = serde_json::to_string(&rec).expect("in-memory JSON serialization");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads node records, which must list nodes `0..n` in order. The outcome
/// coefficients are not stored; only `tau` and `beta_y` are restored.
pub fn read_outcomes(path: &Path, tau: f64, beta_y: f64) -> Result<OutcomePanel> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = OutcomePanel {
        y_prev: Vec::new(),
        treat: Vec::new(),
        y_fact: Vec::new(),
        y_cf: Vec::new(),
        tau,
        coeffs: OutcomeCoeffs {
            alpha_u: Vec::new(),
            beta_u: Vec::new(),
            beta_y,
        },
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NodeRecord = serde_json::from_str(&line).map_err(json_err(path))?;
        let parse_err = |message: String| Error::Parse {
            path: path.into(),
            line: i + 1,
            message,
        };
        if rec.node != out.y_fact.len() {
            return Err(parse_err(format!("expected node {}, got {}", out.y_fact.len(), rec.node)));
        }
        if rec.y_prev > 1 || rec.treat > 1 {
            return Err(parse_err("y_prev and treat must be 0 or 1".into()));
        }
        out.y_prev.push(rec.y_prev);
        out.treat.push(rec.treat);
        out.y_fact.push(rec.y_fact);
        out.y_cf.push(rec.y_cf);
    }
    Ok(out)
}

/// Layout of `proxies.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProxyFormat {
    /// Header `w0,…,w{V-1}`, one row of counts per node.
    Dense,
    /// Header `node,word,count`, one line per nonzero count.
    Sparse,
}

impl FromStr for ProxyFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Self::Dense),
            "sparse" => Ok(Self::Sparse),
            _ => Err(Error::Usage(format!("proxy format must be dense or sparse, got {s:?}"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CountRow {
    node: usize,
    word: usize,
    count: f64,
}

pub fn write_proxies(path: &Path, z: &Mat, format: ProxyFormat) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(path)?);
    match format {
        ProxyFormat::Dense => {
            w.write_record((0..z.cols()).map(|j| format!("w{j}")))
                .map_err(csv_err(path))?;
            for i in 0..z.rows() {
                w.write_record(z.row(i).iter().map(|v| v.to_string()))
                    .map_err(csv_err(path))?;
            }
        }
        ProxyFormat::Sparse => {
            w.write_record(["node", "word", "count"]).map_err(csv_err(path))?;
            for i in 0..z.rows() {
                for (word, &count) in z.row(i).iter().enumerate() {
                    if count != 0.0 {
                        w.serialize(CountRow { node: i, word, count }).map_err(csv_err(path))?;
                    }
                }
            }
        }
    }
    w.flush().map_err(io_err(path))
}

/// Reads an `n`-row count matrix in either layout, detected from the header.
/// `vocab` sizes sparse files; dense files must have exactly `vocab` columns.
pub fn read_proxies(path: &Path, n: usize, vocab: usize) -> Result<Mat> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    let at = |line: usize, message: String| Error::Parse {
        path: path.into(),
        line,
        message,
    };
    let mut z = Mat::zeros(n, vocab);
    if header.get(0) == Some("node") {
        for (i, row) in r.deserialize::<CountRow>().enumerate() {
            let row = row.map_err(csv_err(path))?;
            if row.node >= n || row.word >= vocab {
                return Err(at(i + 2, format!("entry ({}, {}) outside {n}×{vocab}", row.node, row.word)));
            }
            z.set(row.node, row.word, row.count);
        }
    } else {
        if header.len() != vocab {
            return Err(at(1, format!("expected {vocab} columns, got {}", header.len())));
        }
        let mut rows = 0;
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err(path))?;
            if i >= n {
                return Err(at(i + 2, format!("more than {n} rows")));
            }
            for (j, field) in rec.iter().enumerate() {
                let v = field
                    .parse::<f64>()
                    .map_err(|e| at(i + 2, format!("column {j}: {e}")))?;
                z.set(i, j, v);
            }
            rows += 1;
        }
        if rows != n {
            return Err(at(rows + 1, format!("expected {n} rows, got {rows}")));
        }
    }
    Ok(z)
}

/// Writes the edge list, node records and own-proxy counts of a panel.
pub fn write_panel_dir(dir: &Path, panel: &Panel, format: ProxyFormat) -> Result<()> {
    write_edges(&dir.join(EDGES_FILE), &panel.graph)?;
    write_outcomes(&dir.join(PANEL_FILE), &panel.outcomes)?;
    write_proxies(&dir.join(PROXIES_FILE), &panel.proxies.z, format)
}

/// Reads a panel written by [`write_panel_dir`]. The graph model, vocabulary
/// size, `tau` and `beta_y` come from `config`; the neighbor proxies are
/// recomputed from the graph.
pub fn read_panel_dir(dir: &Path, config: &ExperimentConfig) -> Result<Panel> {
    let outcomes = read_outcomes(&dir.join(PANEL_FILE), config.tau, config.beta_y)?;
    let n = outcomes.n();
    let model = match config.graph {
        GraphKind::Dyads => GraphModel::Dyadic,
        GraphKind::Network => GraphModel::HomophilyBa {
            m0: config.m0,
            m: config.m,
        },
    };
    let graph = read_edges(&dir.join(EDGES_FILE), n, model)?;
    let z = read_proxies(&dir.join(PROXIES_FILE), n, config.vocab)?;
    let proxies = ProxyPanel::from_counts(z, &graph)?;
    Ok(Panel {
        confounders: None,
        graph,
        proxies,
        outcomes,
    })
}

/// Parameters of a trained ProEmb model and its input scaling.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: ProEmbModel,
    pub standardizer: Standardizer,
}

/// Training metadata stored next to a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub d: usize,
    #[serde(rename = "V")]
    pub vocab: usize,
    #[serde(rename = "lambda_rb")]
    pub lambda_rb: f64,
    pub epochs: usize,
    pub seed: u64,
    pub loss_trace: Vec<EpochStats>,
}

/// Writes `model.json` and `model.meta.json` under `dir`.
pub fn save_checkpoint(dir: &Path, ckpt: &Checkpoint, sidecar: &Sidecar) -> Result<()> {
    write_json(&dir.join(MODEL_FILE), ckpt)?;
    write_json(&dir.join(SIDECAR_FILE), sidecar)
}

pub fn load_checkpoint(dir: &Path) -> Result<(Checkpoint, Sidecar)> {
    let ckpt: Checkpoint = read_json(&dir.join(MODEL_FILE))?;
    let sidecar: Sidecar = read_json(&dir.join(SIDECAR_FILE))?;
    if ckpt.model.latent_dim() != sidecar.d || ckpt.model.input_dim() != 2 * sidecar.vocab {
        return Err(Error::Parse {
            path: dir.join(SIDECAR_FILE),
            line: 1,
            message: "sidecar dimensions disagree with the model".into(),
        });
    }
    Ok((ckpt, sidecar))
}

/// Layer shapes and row-major values of a network as JSON.
pub fn save_net(path: &Path, net: &DenseNet) -> Result<()> {
    write_json(path, net)
}

pub fn load_net(path: &Path) -> Result<DenseNet> {
    read_json(path)
}

/// Writes `estimate.json` and, when the report has per-node effects, `ite.csv`.
pub fn write_estimate(dir: &Path, report: &EstimateReport) -> Result<()> {
    write_json(&dir.join(ESTIMATE_FILE), report)?;
    if report.ite.is_empty() {
        return Ok(());
    }
    let path = dir.join(ITE_FILE);
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["node", "ite"]).map_err(csv_err(&path))?;
    for (i, v) in report.ite.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()]).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))
}

/// Output format of [`render_table`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Json,
    Csv,
    Markdown,
}

impl TableFormat {
    pub const ALL: [TableFormat; 3] = [Self::Json, Self::Csv, Self::Markdown];

    pub fn extension(self) -> &'static str {
        match self {
            Self::Json => "json",
            Self::Csv => "csv",
            Self::Markdown => "md",
        }
    }
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            _ => Err(Error::Usage(format!("table format must be json, csv or markdown, got {s:?}"))),
        }
    }
}

pub fn render_table(table: &RmseTable, format: TableFormat) -> String {
    match format {
        TableFormat::Json => to_json(table),
        TableFormat::Csv => table_csv(table),
        TableFormat::Markdown => table_markdown(table),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per (method, setting): `method,setting,runs,successes,rmse,mean,std,estimates`
/// with the per-run estimates joined by `;` (empty for failed runs).
pub fn table_csv(table: &RmseTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = "writing CSV to memory";
    w.write_record(["method", "setting", "runs", "successes", "rmse", "mean", "std", "estimates"])
        .expect(io);
    for r in &table.rows {
        let est: Vec<String> = r.estimates.iter().map(|e| opt(*e)).collect();
        w.write_record([
            r.method.to_string(),
            r.setting.clone(),
            r.estimates.len().to_string(),
            r.successes().to_string(),
            opt(r.rmse),
            opt(r.mean),
            opt(r.std),
            est.join(";"),
        ])
        .expect(io);
    }
    String::from_utf8(w.into_inner().expect(io)).expect("CSV output is UTF-8")
}

fn method_input(m: Method) -> &'static str {
    match m {
        Method::Oracle => "counterfactuals",
        Method::Zero => "none",
        Method::Tsls | Method::Ols => "Z, Zngb",
        Method::TLearner(_) => "[Z \\| Zngb]",
        Method::ProEmb(_) => "embedding",
    }
}

/// `method | base learner | input | runs | <one column per setting>`, cells
/// `rmse ± std`.
pub fn table_markdown(table: &RmseTable) -> String {
    let mut out = String::new();
    let mut header = String::from("| method | base learner | input | runs |");
    let mut rule = String::from("|---|---|---|---|");
    for s in &table.settings {
        let _ = write!(header, " {s} |");
        rule.push_str("---|");
    }
    let _ = writeln!(out, "{header}\n{rule}");
    for m in table.methods() {
        let rows: Vec<_> = table.rows.iter().filter(|r| r.method == m).collect();
        let total: usize = rows.iter().map(|r| r.estimates.len()).sum();
        let ok: usize = rows.iter().map(|r| r.successes()).sum();
        let base = m.base().map_or("-", |b| b.as_str());
        let _ = write!(out, "| {m} | {base} | {} | {ok}/{total} |", method_input(m));
        for s in &table.settings {
            let cell = match table.get(m, s) {
                Some(r) => match (r.rmse, r.std) {
                    (Some(rmse), Some(std)) => format!("{rmse:.3} ± {std:.3}"),
                    _ => "failed".into(),
                },
                None => "-".into(),
            };
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    out
}

/// Writes `table.json`, `table.csv` and `table.md` under `dir`.
pub fn write_table_set(dir: &Path, table: &RmseTable) -> Result<Vec<PathBuf>> {
    TableFormat::ALL
        .iter()
        .map(|&f| {
            let path = dir.join(format!("table.{}", f.extension()));
            write_text(&path, &render_table(table, f))?;
            Ok(path)
        })
        .collect()
}

pub fn read_table(path: &Path) -> Result<RmseTable> {
    read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proemb_core::experiment::MethodSummary;

    fn table() -> RmseTable {
        let rows = vec![
            MethodSummary::from_estimates(Method::Tsls, "a", 1.0, vec![Some(0.1), None, Some(3.0)]),
            MethodSummary::from_estimates(Method::Tsls, "b", 1.0, vec![Some(1.0), Some(2.0), Some(0.5)]),
            MethodSummary::from_estimates(Method::ProEmb(proemb_core::experiment::BaseKind::Gb), "a", 1.0, vec![None; 3]),
        ];
        RmseTable {
            tau: 1.0,
            settings: vec!["a".into(), "b".into()],
            rows,
            digests: Vec::new(),
            config_digest: "0123456789abcdef".into(),
        }
    }

    #[test]
    fn csv_has_one_row_per_method_setting() {
        let t = table();
        let csv = table_csv(&t);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + t.rows.len());
        assert!(lines[1].starts_with("tsls,a,3,2,"));
        assert!(lines[1].ends_with(",0.1;;3"));
    }

    #[test]
    fn markdown_columns() {
        let md = table_markdown(&table());
        for line in md.lines() {
            assert_eq!(line.matches('|').count() - 1, 4 + 2, "{line}");
        }
        assert!(md.contains("| pe-gb | gb | embedding | 0/3 | failed | - |"));
    }

    #[test]
    fn format_names() {
        assert_eq!("md".parse::<TableFormat>().unwrap(), TableFormat::Markdown);
        assert!("xml".parse::<TableFormat>().is_err());
        assert_eq!("sparse".parse::<ProxyFormat>().unwrap(), ProxyFormat::Sparse);
    }
}
