//! Command-line front end: `generate`, `fit`, `cost` and `evaluate`.
//!
//! [`run`] parses arguments and returns the process exit code: 0 on success,
//! 1 for usage errors, 2 for data errors, 3 when the fit degenerates.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, DataGeometry, MaxDistMode};
use crate::error::{Error, Result};
use crate::mdl::{constant_costs, model_cost, ConstantCosts, CostBreakdown, MdlConstants, SubspaceCost};
use crate::metrics::{best_match_score, subspace_labels, LabelMatrix, Metric};
use crate::model::{ModelDocument, NrModel};
use crate::search::{auto_search, write_trace, SearchConfig};
use crate::synth::{generate, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::EmptyCluster { .. } | Error::Degenerate(_) => EXIT_DEGENERATE,
        Error::Io { .. }
        | Error::MalformedRow { .. }
        | Error::TooFewObjects(_)
        | Error::NonFinite { .. }
        | Error::AllFeaturesConstant
        | Error::DimensionMismatch(_)
        | Error::NotOrthogonal(_)
        | Error::Json(_) => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "nrmdl", version, about = "Parameter-free non-redundant clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset with its ground truth.
    Generate(GenerateArgs),
    /// Search for the cheapest non-redundant clustering of a CSV file.
    Fit(FitArgs),
    /// Itemized code length of a stored model on a dataset.
    Cost(CostArgs),
    /// Compare label files subspace by subspace.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// JSON generator spec; replaces the shorthand flags.
    #[arg(long, conflicts_with_all = ["n", "noise_dims", "outliers", "seed"])]
    pub spec: Option<PathBuf>,
    /// Objects before outlier injection.
    #[arg(long, default_value_t = 1500)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub noise_dims: usize,
    /// Uniform outliers injected per cluster subspace.
    #[arg(long, default_value_t = 0)]
    pub outliers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxDistArg {
    Exact,
    Bbox,
}

impl From<MaxDistArg> for MaxDistMode {
    fn from(a: MaxDistArg) -> Self {
        match a {
            MaxDistArg::Exact => MaxDistMode::Exact,
            MaxDistArg::Bbox => MaxDistMode::BboxDiagonal,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Model JSON destination.
    #[arg(long)]
    pub output: PathBuf,
    /// JSON-lines log of every evaluated candidate.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Label CSV, one column per cluster space; outliers get label k.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Run report destination; the report is always printed to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random restarts per candidate evaluation.
    #[arg(long, default_value_t = 15)]
    pub reps: usize,
    /// Worker threads for the restarts; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Accepted for symmetry; detection is on unless `--no-outliers` is given.
    #[arg(long, conflicts_with = "no_outliers")]
    pub outliers: bool,
    #[arg(long)]
    pub no_outliers: bool,
    #[arg(long, value_enum, default_value = "exact")]
    pub max_dist_mode: MaxDistArg,
    /// The input's first line is a header.
    #[arg(long)]
    pub header: bool,
    /// Cap on clusters per subspace.
    #[arg(long)]
    pub max_k: Option<usize>,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CostFormat {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub header: bool,
    #[arg(long, value_enum, default_value = "table")]
    pub format: CostFormat,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "nmi")]
    pub metric: Vec<Metric>,
    /// Add the mean over ground-truth columns.
    #[arg(long)]
    pub average: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceReport {
    pub m: usize,
    pub k: usize,
    pub is_noise: bool,
    pub outliers: usize,
    pub bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub input: PathBuf,
    pub reps: usize,
    pub threads: Option<usize>,
    pub outlier_detection: bool,
    pub max_dist_mode: MaxDistArg,
    pub max_k: Option<usize>,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: PathBuf,
    pub total_bits: f64,
    pub subspaces: Vec<SubspaceReport>,
    pub accepted: usize,
    pub candidates: usize,
    pub wall_time_s: f64,
    pub seed: u64,
    pub config: ConfigEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub m: usize,
    pub k: usize,
    pub is_noise: bool,
    pub outliers: usize,
    #[serde(flatten)]
    pub cost: SubspaceCost,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub j_cost: f64,
    pub subspaces: Vec<CostRow>,
    pub total: f64,
    /// Model-independent; not included in `total`.
    pub constant: ConstantCosts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub variant: String,
    pub per_subspace: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n: usize,
    pub gt_columns: usize,
    pub pred_columns: usize,
    pub scores: Vec<MetricReport>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match dispatch(cli.command, &mut stdout.lock()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn dispatch(cmd: Command, out: &mut impl Write) -> Result<()> {
    let text = match cmd {
        Command::Generate(a) => {
            let written = cmd_generate(&a)?;
            let mut s = String::new();
            for p in written {
                let _ = writeln!(s, "{}", p.display());
            }
            s
        }
        Command::Fit(a) => format!("{}\n", to_json(&cmd_fit(&a)?)?),
        Command::Cost(a) => {
            let report = cmd_cost(&a)?;
            match a.format {
                CostFormat::Json => format!("{}\n", to_json(&report)?),
                CostFormat::Table => cost_table(&report),
            }
        }
        Command::Evaluate(a) => format!("{}\n", to_json(&cmd_evaluate(&a)?)?),
    };
    out.write_all(text.as_bytes()).map_err(|e| Error::io("stdout", e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `data.csv`, `labels.csv`, `model.json` and `spec.json`; returns their paths.
pub fn cmd_generate(a: &GenerateArgs) -> Result<Vec<PathBuf>> {
    let spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<SynthSpec>(&text)?
        }
        None => SynthSpec {
            outliers_per_subspace: a.outliers,
            ..SynthSpec::syn3(a.n, a.noise_dims, a.seed)
        },
    };
    let s = generate(&spec)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let geometry = DataGeometry::compute(&s.data, MaxDistMode::Exact)?;
    let paths: Vec<PathBuf> = ["data.csv", "labels.csv", "model.json", "spec.json"]
        .iter()
        .map(|f| a.out_dir.join(f))
        .collect();
    dataset::write_csv(&s.data, &paths[0])?;
    gt_labels(&s.model)?.write_csv(&paths[1])?;
    write_file(&paths[2], &ModelDocument::from_model(&s.model, &geometry).to_json()?)?;
    write_file(&paths[3], &to_json(&spec)?)?;
    Ok(paths)
}

/// Cluster-space labels with outliers as class k; one all-zero column for a
/// model without cluster spaces.
pub fn gt_labels(model: &NrModel) -> Result<LabelMatrix> {
    if model.subspaces.iter().all(|s| s.is_noise) {
        return LabelMatrix::new(vec![vec![0; model.n()]]);
    }
    subspace_labels(model)
}

pub fn cmd_fit(a: &FitArgs) -> Result<RunReport> {
    if a.threads == Some(0) {
        return Err(Error::InvalidArgument("--threads must be >= 1".into()));
    }
    let start = Instant::now();
    let x = dataset::load_csv(&a.input, a.header)?;
    let geometry = DataGeometry::compute(&x, a.max_dist_mode.into())?;
    let cfg = SearchConfig {
        reps: a.reps,
        master_seed: a.seed,
        outlier_detection: !a.no_outliers,
        max_k: a.max_k,
        max_iter: a.max_iter,
        parallel: a.threads != Some(1),
    };
    let result = match a.threads {
        Some(t) if t > 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| auto_search(&x, &geometry, &cfg))?,
        _ => auto_search(&x, &geometry, &cfg)?,
    };
    write_file(&a.output, &ModelDocument::from_model(&result.model, &geometry).to_json()?)?;
    if let Some(p) = &a.trace {
        let f = fs::File::create(p).map_err(|e| Error::io(p, e))?;
        let mut w = BufWriter::new(f);
        write_trace(&result.trace, &mut w)?;
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    if let Some(p) = &a.labels {
        gt_labels(&result.model)?.write_csv(p)?;
    }
    let report = RunReport {
        model: a.output.clone(),
        total_bits: result.cost.total,
        subspaces: subspace_reports(&result.model, &result.cost),
        accepted: result.accepted_costs.len() - 1,
        candidates: result.trace.len(),
        wall_time_s: start.elapsed().as_secs_f64(),
        seed: a.seed,
        config: ConfigEcho {
            input: a.input.clone(),
            reps: a.reps,
            threads: a.threads,
            outlier_detection: cfg.outlier_detection,
            max_dist_mode: a.max_dist_mode,
            max_k: a.max_k,
            max_iter: a.max_iter,
        },
    };
    if let Some(p) = &a.report {
        write_file(p, &to_json(&report)?)?;
    }
    Ok(report)
}

fn subspace_reports(model: &NrModel, cost: &CostBreakdown) -> Vec<SubspaceReport> {
    model
        .subspaces
        .iter()
        .zip(&cost.per_subspace)
        .map(|(s, c)| SubspaceReport {
            m: s.m(),
            k: s.k,
            is_noise: s.is_noise,
            outliers: s.outliers.len(),
            bits: c.total(),
        })
        .collect()
}

/// Costs are computed with the precision and diameter stored in the model, so
/// a fitted model reproduces its fit-time total.
pub fn cmd_cost(a: &CostArgs) -> Result<CostReport> {
    let text = fs::read_to_string(&a.model).map_err(|e| Error::io(&a.model, e))?;
    let doc = ModelDocument::from_json(&text)?;
    let model = doc.to_model()?;
    let x = dataset::load_csv(&a.input, a.header)?;
    if x.n() != doc.n || x.d() != doc.d {
        return Err(Error::DimensionMismatch(format!(
            "model is {}x{}, data is {}x{}",
            doc.n,
            doc.d,
            x.n(),
            x.d()
        )));
    }
    let consts = MdlConstants::new(doc.delta, doc.max_dist)?;
    let breakdown = model_cost(&model, &x, &consts)?;
    let geometry = DataGeometry {
        delta: doc.delta,
        max_dist: doc.max_dist,
        feature_min: x
            .values()
            .column_iter()
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect(),
    };
    Ok(CostReport {
        j_cost: breakdown.j_cost,
        subspaces: model
            .subspaces
            .iter()
            .zip(&breakdown.per_subspace)
            .map(|(s, c)| CostRow {
                m: s.m(),
                k: s.k,
                is_noise: s.is_noise,
                outliers: s.outliers.len(),
                cost: *c,
                total: c.total(),
            })
            .collect(),
        total: breakdown.total,
        constant: constant_costs(x.n(), &geometry),
    })
}

/// Aligned table in bits with two decimals.
pub fn cost_table(r: &CostReport) -> String {
    const HEAD: [&str; 14] = [
        "space", "m", "k", "|O|", "dims", "k code", "centers", "assign", "objects", "params", "out n",
        "out idx", "out pts", "total",
    ];
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<6}{:>4}{:>5}{:>6}{}",
        HEAD[0],
        HEAD[1],
        HEAD[2],
        HEAD[3],
        HEAD[4..].iter().map(|h| format!("{h:>12}")).collect::<String>()
    );
    for (j, row) in r.subspaces.iter().enumerate() {
        let c = &row.cost;
        let name = if row.is_noise { format!("{j}*") } else { j.to_string() };
        let vals = [
            c.dim_cost,
            c.k_cost,
            c.center_cost,
            c.assignment_cost,
            c.object_cost,
            c.param_cost,
            c.outlier_count_cost,
            c.outlier_index_cost,
            c.outlier_point_cost,
            row.total,
        ];
        let _ = writeln!(
            s,
            "{:<6}{:>4}{:>5}{:>6}{}",
            name,
            row.m,
            row.k,
            row.outliers,
            vals.iter().map(|v| format!("{v:>12.2}")).collect::<String>()
        );
    }
    let _ = writeln!(s, "J code {:>12.2}", r.j_cost);
    let _ = writeln!(s, "total  {:>12.2}", r.total);
    let c = &r.constant;
    let _ = writeln!(
        s,
        "constant (excluded): N {:.2}  d {:.2}  cube {:.2}  rotation {:.2}",
        c.n_cost, c.d_cost, c.cube_cost, c.rotation_cost
    );
    let _ = writeln!(s, "* noise space");
    s
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<EvaluationReport> {
    let gt = LabelMatrix::load_csv(&a.gt)?;
    let pred = LabelMatrix::load_csv(&a.pred)?;
    let mut scores = Vec::new();
    for &metric in &a.metric {
        let per_subspace = best_match_score(&gt, &pred, metric)?;
        let average = a
            .average
            .then(|| per_subspace.iter().sum::<f64>() / per_subspace.len() as f64);
        scores.push(MetricReport {
            metric: metric.name().to_string(),
            variant: metric.variant().to_string(),
            per_subspace,
            average,
        });
    }
    Ok(EvaluationReport {
        n: gt.n(),
        gt_columns: gt.j(),
        pred_columns: pred.j(),
        scores,
    })
}
