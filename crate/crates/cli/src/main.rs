//! `tripartite` command-line driver.
//!
//! Every command writes its tables under `--out`, each with a `.meta.json`
//! sidecar holding the parsed flags and toolkit version, and prints one JSON
//! summary line on stdout. Failures print one JSON error line on stdout and a
//! human-readable message on stderr, and exit with 2 (config), 3 (data) or
//! 4 (numerical).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use tripartite::cohort::{parse_cohort, parse_marker_table, ScoreSource, Schema, VlThreshold};
use tripartite::logistic::{fit_logistic, fit_score, hosmer_lemeshow, LogisticFit};
use tripartite::resample::{bootstrap_se, kfold_cv, lambda_sweep, write_sweep_csv, ResampleConfig, Statistic};
use tripartite::roc::{auc_difference, auc_ecdf, auc_lower_bound, auc_variance_plugin, roc_curve, CurveSource};
use tripartite::simulate::{
    convergence_study, density_table, design_lookup, run_scenario_study, write_density_csv, write_study_csv, GammaScenario,
};
use tripartite::tilt::{gof_overlay, tilt_from_fit};
use tripartite::{ecdf_set, select_rule, Cohort, Error, ErrorKind, Method, SelectionCriterion};

const THREADS_ENV: &str = "TRIPARTITE_THREADS";

#[derive(Parser, Debug, Serialize)]
#[command(name = "tripartite", version, about = "Budget-constrained tripartite rules, ROC/AUC and simulation studies")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,

    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Nonparametric,
    Semiparametric,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Nonparametric => Method::Nonparametric,
            MethodArg::Semiparametric => Method::Semiparametric,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum StatisticArg {
    Cutoffs,
    Risk,
    Auc,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Fit a logistic composite score from marker columns.
    Score(ScoreArgs),
    /// Select the minimum-risk rule under a testing budget.
    Select(SelectArgs),
    /// Tripartite ROC curve points.
    Roc(RocArgs),
    /// AUC against budget, with plug-in standard errors.
    Auc(AucArgs),
    /// K-fold cross-validated error rates of the selection.
    Cv(CvArgs),
    /// Bootstrap standard errors of a selection statistic.
    Bootstrap(BootstrapArgs),
    /// Monte Carlo study over gamma scenarios, prevalences and budgets.
    Simulate(SimulateArgs),
    /// Cutoff spread against sample size for both methods.
    Converge(ConvergeArgs),
    /// Min-lambda rules and cross-validated error rates over a lambda grid.
    Sweep(SweepArgs),
    /// Empirical and tilted CDFs side by side.
    Gof(GofArgs),
    /// Latent gamma densities of a scenario.
    Densities(DensityArgs),
}

#[derive(Args, Debug, Serialize)]
struct InputArgs {
    /// Delimited file with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Column holding the risk score.
    #[arg(long, default_value = "score")]
    score_column: String,
    /// Logistic fit (JSON from `score`) whose composite replaces the score column.
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Negate the score, for markers where smaller means riskier.
    #[arg(long)]
    negate: bool,
    #[arg(long, default_value = "z")]
    status_column: String,
    #[arg(long, default_value = "vl")]
    vl_column: String,
    /// VL threshold; status is 1 when VL exceeds it.
    #[arg(long, default_value_t = 400.0)]
    vl_threshold: f64,
}

#[derive(Args, Debug, Serialize)]
struct RuleArgs {
    /// Testing budget in [0, 1].
    #[arg(long)]
    phi: f64,
    /// Weight on false negatives; omit for minimum total misclassification.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Nonparametric)]
    method: MethodArg,
}

#[derive(Args, Debug, Serialize)]
struct ScoreArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Marker columns, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    markers: Vec<String>,
    /// Risk groups for the Hosmer-Lemeshow test.
    #[arg(long, default_value_t = 10)]
    groups: usize,
}

#[derive(Args, Debug, Serialize)]
struct SelectArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    rule: RuleArgs,
}

#[derive(Args, Debug, Serialize)]
struct RocArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Budgets, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    phi: Vec<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Nonparametric)]
    method: MethodArg,
}

#[derive(Args, Debug, Serialize)]
struct AucArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,0.15,0.3,0.45,0.6")]
    phi: Vec<f64>,
    /// Second score column on the same subjects; reports the paired difference.
    #[arg(long)]
    compare: Option<String>,
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct CvArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    rule: RuleArgs,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Split within each status.
    #[arg(long)]
    stratified: bool,
}

#[derive(Args, Debug, Serialize)]
struct BootstrapArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    rule: RuleArgs,
    #[arg(long, value_enum, default_value_t = StatisticArg::Cutoffs)]
    statistic: StatisticArg,
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Resample within each status.
    #[arg(long)]
    stratified: bool,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// Scenario presets, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "A-1,A-2,B-1,B-2")]
    scenario: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.15,0.25,0.4")]
    p: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4")]
    phi: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    /// Subjects per replicate, split evenly into training and test halves.
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct ConvergeArgs {
    #[arg(long, default_value = "B-2")]
    scenario: String,
    #[arg(long, default_value_t = 0.25)]
    p: f64,
    #[arg(long, default_value_t = 0.2)]
    phi: f64,
    #[arg(long, value_delimiter = ',', default_value = "250,500,1000,2000,5000,10000")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target cutoff SD for the design lookup.
    #[arg(long, default_value_t = 25.0)]
    target_sd: f64,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    phi: f64,
    /// Lambda grid; defaults to 0, 0.05, ..., 1.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Nonparametric)]
    method: MethodArg,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct GofArgs {
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args, Debug, Serialize)]
struct DensityArgs {
    #[arg(long, default_value = "B-2")]
    scenario: String,
    #[arg(long, default_value_t = 2000.0)]
    max_cd4: f64,
    #[arg(long, default_value_t = 5.0)]
    step: f64,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Core(Error),
    Io(PathBuf, std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Core(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            },
            Self::Io(..) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self.code() {
            2 => "config",
            3 => "data",
            _ => "numerical",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "invalid configuration: {m}"),
            Self::Core(e) => write!(f, "{e}"),
            Self::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Core(e)
    }
}

type Res<T> = std::result::Result<T, CliError>;

fn check_unit(name: &str, v: f64) -> Res<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn criterion(lambda: Option<f64>) -> Res<SelectionCriterion> {
    match lambda {
        None => Ok(SelectionCriterion::MinTmr),
        Some(l) => {
            check_unit("lambda", l)?;
            Ok(SelectionCriterion::min_lambda(l)?)
        }
    }
}

fn open(path: &Path) -> Res<File> {
    File::open(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn schema(args: &InputArgs) -> Res<Schema> {
    let score = match &args.fit {
        Some(path) => {
            let fit: LogisticFit = serde_json::from_reader(open(path)?).map_err(|e| CliError::Core(Error::Json(e)))?;
            ScoreSource::Composite(fit)
        }
        None => ScoreSource::Column(args.score_column.clone()),
    };
    Ok(Schema {
        score,
        negate: args.negate,
        markers: Vec::new(),
        status: Some(args.status_column.clone()),
        vl: Some(args.vl_column.clone()),
        threshold: VlThreshold::new(args.vl_threshold)?,
    })
}

fn load(args: &InputArgs) -> Res<Cohort> {
    Ok(parse_cohort(open(&args.input)?, &schema(args)?)?)
}

/// Output writer that records every file it creates.
struct Outputs<'a> {
    dir: &'a Path,
    format: Format,
    meta: Value,
    written: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn create(&self, name: &str) -> Res<(PathBuf, BufWriter<File>)> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| CliError::Io(path.clone(), e))?;
        Ok((path, BufWriter::new(f)))
    }

    fn finish(&mut self, path: PathBuf, mut w: BufWriter<File>) -> Res<()> {
        w.flush().map_err(|e| CliError::Io(path.clone(), e))?;
        let mut meta_name = path.file_name().expect("file path").to_os_string();
        meta_name.push(".meta.json");
        let meta_path = path.with_file_name(meta_name);
        let text = serde_json::to_string_pretty(&self.meta).expect("meta serializes") + "\n";
        std::fs::write(&meta_path, text).map_err(|e| CliError::Io(meta_path.clone(), e))?;
        self.written.push(path.display().to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, stem: &str, value: &T) -> Res<()> {
        let (path, mut w) = self.create(&format!("{stem}.json"))?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Core(Error::Json(e)))?;
        writeln!(w).map_err(|e| CliError::Io(path.clone(), e))?;
        self.finish(path, w)
    }

    /// A table as CSV through `csv_writer`, or as a JSON array of `rows`.
    fn table<T: Serialize>(
        &mut self,
        stem: &str,
        rows: &[T],
        csv_writer: impl FnOnce(&mut BufWriter<File>) -> tripartite::Result<()>,
    ) -> Res<()> {
        match self.format {
            Format::Json => self.json(stem, &rows),
            Format::Csv => {
                let (path, mut w) = self.create(&format!("{stem}.csv"))?;
                csv_writer(&mut w)?;
                self.finish(path, w)
            }
        }
    }
}

fn simple_csv<T: Serialize>(rows: &[T], w: &mut BufWriter<File>) -> tripartite::Result<()> {
    let mut cw = csv::Writer::from_writer(w);
    for r in rows {
        cw.serialize(r)?;
    }
    cw.flush()?;
    Ok(())
}

fn fit_if_needed(cohort: &Cohort, method: Method) -> Res<Option<LogisticFit>> {
    Ok(match method {
        Method::Semiparametric => {
            let fit = fit_score(&cohort.scores(), &cohort.statuses())?;
            if !fit.converged {
                return Err(Error::NotConverged { iterations: fit.iterations, gradient: fit.gradient_norm }.into());
            }
            Some(fit)
        }
        Method::Nonparametric => None,
    })
}

fn run(cli: &Cli, out: &mut Outputs) -> Res<Value> {
    match &cli.command {
        Command::Score(a) => {
            let table = parse_marker_table(open(&a.input.input)?, &a.markers, &Schema { vl: Some(a.input.vl_column.clone()), ..schema(&a.input)? })?;
            let fit = fit_logistic(&table.names, &table.rows, &table.status)?;
            if !fit.converged {
                return Err(Error::NotConverged { iterations: fit.iterations, gradient: fit.gradient_norm }.into());
            }
            let hl = hosmer_lemeshow(&fit, &table.rows, &table.status, a.groups)?;
            out.json("fit", &fit)?;
            #[derive(Serialize)]
            struct Row {
                score: f64,
                z: u8,
            }
            let rows: Vec<Row> = table.rows.iter().zip(&table.status).map(|(x, &z)| Row { score: fit.predict(x), z: z as u8 }).collect();
            out.table("scores", &rows, |w| simple_csv(&rows, w))?;
            Ok(json!({
                "intercept": fit.intercept,
                "coefficients": fit.feature_names.iter().cloned().zip(fit.coefficients.iter().map(|&b| json!(b))).collect::<serde_json::Map<String, Value>>(),
                "hosmer_lemeshow": {"statistic": hl.statistic, "df": hl.df, "p_value": hl.p_value},
            }))
        }
        Command::Select(a) => {
            check_unit("phi", a.rule.phi)?;
            let crit = criterion(a.rule.lambda)?;
            let cohort = load(&a.input)?;
            let method = Method::from(a.rule.method);
            let fit = fit_if_needed(&cohort, method)?;
            let sel = select_rule(&ecdf_set(&cohort)?, fit.as_ref(), a.rule.phi, &crit, method)?;
            let v = sel.to_json();
            out.json("select", &v)?;
            Ok(v)
        }
        Command::Roc(a) => {
            for &phi in &a.phi {
                check_unit("phi", phi)?;
            }
            let cohort = load(&a.input)?;
            let ecdf = ecdf_set(&cohort)?;
            let method = Method::from(a.method);
            let (table, source) = match method {
                Method::Nonparametric => (ecdf.table().clone(), CurveSource::Nonparametric),
                Method::Semiparametric => {
                    let fit = fit_if_needed(&cohort, method)?.expect("semiparametric fit");
                    (tilt_from_fit(&fit, &ecdf)?.table, CurveSource::Semiparametric)
                }
            };
            let curves = a.phi.iter().map(|&phi| roc_curve(&table, phi, source)).collect::<tripartite::Result<Vec<_>>>()?;
            #[derive(Serialize)]
            struct Row {
                phi: f64,
                fpr: f64,
                tpr: f64,
            }
            let rows: Vec<Row> =
                curves.iter().flat_map(|c| c.points.iter().map(move |p| Row { phi: c.phi, fpr: p.fpr, tpr: p.tpr })).collect();
            out.table("roc", &rows, |w| {
                let mut first = true;
                for c in &curves {
                    let mut buf = Vec::new();
                    c.write_csv(&mut buf)?;
                    let text = String::from_utf8(buf).expect("csv is utf-8");
                    let body = if first { text.as_str() } else { text.split_once('\n').map_or("", |x| x.1) };
                    w.write_all(body.as_bytes())?;
                    first = false;
                }
                Ok(())
            })?;
            let areas: Vec<Value> = curves.iter().map(|c| json!({"phi": c.phi, "auc": c.area(), "points": c.points.len()})).collect();
            Ok(json!({ "curves": areas }))
        }
        Command::Auc(a) => {
            for &phi in &a.phi {
                check_unit("phi", phi)?;
            }
            let cohort = load(&a.input)?;
            let ecdf = ecdf_set(&cohort)?;
            #[derive(Serialize)]
            struct Row {
                phi: f64,
                auc: f64,
                se: f64,
                lower_bound: f64,
            }
            let rows = a
                .phi
                .iter()
                .map(|&phi| {
                    Ok(Row {
                        phi,
                        auc: auc_ecdf(&ecdf, phi)?,
                        se: auc_variance_plugin(&cohort, phi)?.sqrt(),
                        lower_bound: auc_lower_bound(phi)?,
                    })
                })
                .collect::<tripartite::Result<Vec<_>>>()?;
            out.table("auc", &rows, |w| simple_csv(&rows, w))?;
            let mut summary = json!({ "auc": rows.iter().map(|r| json!({"phi": r.phi, "auc": r.auc, "se": r.se})).collect::<Vec<_>>() });
            if let Some(other) = &a.compare {
                let b = parse_cohort(
                    open(&a.input.input)?,
                    &Schema { score: ScoreSource::Column(other.clone()), ..schema(&a.input)? },
                )?;
                let diff = auc_difference(&cohort, &b, &a.phi, a.replicates, a.seed)?;
                out.table("auc_difference", &diff, |w| simple_csv(&diff, w))?;
                summary["difference"] = serde_json::to_value(&diff).expect("numbers serialize");
            }
            Ok(summary)
        }
        Command::Cv(a) => {
            check_unit("phi", a.rule.phi)?;
            let crit = criterion(a.rule.lambda)?;
            let cohort = load(&a.input)?;
            let config = ResampleConfig { folds: a.folds, seed: a.seed, stratified: a.stratified, ..ResampleConfig::default() };
            let cv = kfold_cv(&cohort, &crit, a.rule.phi, a.rule.method.into(), &config)?;
            out.json("cv", &cv)?;
            out.table("cv_folds", &cv.folds, |w| simple_csv(&cv.folds, w))?;
            Ok(json!({
                "fnr": cv.report.fnr, "fpr": cv.report.fpr, "tmr": cv.report.tmr,
                "weighted_risk": cv.report.weighted_risk, "test_fraction": cv.report.test_fraction, "folds": a.folds,
            }))
        }
        Command::Bootstrap(a) => {
            check_unit("phi", a.rule.phi)?;
            let crit = criterion(a.rule.lambda)?;
            let cohort = load(&a.input)?;
            let method: Method = a.rule.method.into();
            let stat = match a.statistic {
                StatisticArg::Cutoffs => Statistic::Cutoffs { phi: a.rule.phi, criterion: crit, method },
                StatisticArg::Risk => Statistic::Risk { phi: a.rule.phi, criterion: crit, method },
                StatisticArg::Auc => Statistic::Auc { phi: a.rule.phi },
            };
            let config = ResampleConfig { replicates: a.replicates, seed: a.seed, stratified: a.stratified, ..ResampleConfig::default() };
            let rows = bootstrap_se(&cohort, &stat.names(), |c| stat.evaluate(c), &config)?;
            #[derive(Serialize)]
            struct Row<'r> {
                statistic: &'r str,
                estimate: f64,
                se: f64,
                ci_lo: f64,
                ci_hi: f64,
                replicates_used: usize,
                failures: usize,
            }
            let flat: Vec<Row> = rows
                .iter()
                .map(|r| Row {
                    statistic: &r.statistic,
                    estimate: r.estimate,
                    se: r.se,
                    ci_lo: r.ci.0,
                    ci_hi: r.ci.1,
                    replicates_used: r.replicates_used,
                    failures: r.failures,
                })
                .collect();
            out.table("bootstrap", &flat, |w| simple_csv(&flat, w))?;
            Ok(json!({ "statistics": serde_json::to_value(&flat).expect("numbers serialize") }))
        }
        Command::Simulate(a) => {
            for &phi in &a.phi {
                check_unit("phi", phi)?;
            }
            let names: Vec<&str> = a.scenario.iter().map(String::as_str).collect();
            let rows = run_scenario_study(&names, &a.p, &a.phi, a.replicates, a.n, a.seed)?;
            out.table("study", &rows, |w| write_study_csv(&rows, w))?;
            Ok(json!({ "cells": rows.len(), "replicates": a.replicates, "n": a.n }))
        }
        Command::Converge(a) => {
            check_unit("phi", a.phi)?;
            let sc = GammaScenario::preset(&a.scenario, a.p)?;
            let res = convergence_study(&sc, a.phi, &a.sizes, a.replicates, a.seed)?;
            let design = design_lookup(&res, a.target_sd)?;
            #[derive(Serialize)]
            struct Row<'r> {
                method: &'r str,
                n: usize,
                sigma: f64,
                sigma_lower: f64,
                sigma_upper: f64,
                failures: usize,
            }
            let rows: Vec<Row> = res
                .methods
                .iter()
                .flat_map(|m| {
                    res.sample_sizes.iter().enumerate().map(move |(k, &n)| Row {
                        method: &m.method,
                        n,
                        sigma: m.sigma[k],
                        sigma_lower: m.sigma_lower[k],
                        sigma_upper: m.sigma_upper[k],
                        failures: m.failures[k],
                    })
                })
                .collect();
            out.table("converge", &rows, |w| simple_csv(&rows, w))?;
            let methods: Vec<Value> = res
                .methods
                .iter()
                .zip(&design)
                .map(|(m, d)| json!({"method": m.method, "slope": m.slope, "intercept": m.intercept, "design_n": d.1}))
                .collect();
            Ok(json!({ "methods": methods, "target_sd": a.target_sd }))
        }
        Command::Sweep(a) => {
            check_unit("phi", a.phi)?;
            let grid: Vec<f64> = if a.lambda.is_empty() { (0..=20).map(|k| k as f64 / 20.0).collect() } else { a.lambda.clone() };
            for &l in &grid {
                check_unit("lambda", l)?;
            }
            let cohort = load(&a.input)?;
            let config = ResampleConfig { folds: a.folds, seed: a.seed, ..ResampleConfig::default() };
            let rows = lambda_sweep(&cohort, a.phi, &grid, a.method.into(), &config)?;
            out.table("sweep", &rows, |w| write_sweep_csv(&rows, w))?;
            Ok(json!({ "lambdas": rows.len(), "phi": a.phi }))
        }
        Command::Gof(a) => {
            let cohort = load(&a.input)?;
            let ecdf = ecdf_set(&cohort)?;
            let fit = fit_if_needed(&cohort, Method::Semiparametric)?.expect("semiparametric fit");
            let tilt = tilt_from_fit(&fit, &ecdf)?;
            let overlay = gof_overlay(&tilt, &ecdf, ecdf.support());
            out.table("gof", &overlay.rows, |w| overlay.write_csv(w))?;
            Ok(json!({ "sup_g0": overlay.sup_g0, "sup_g1": overlay.sup_g1, "beta0": tilt.beta0, "beta1": tilt.beta1, "nu": tilt.nu }))
        }
        Command::Densities(a) => {
            let sc = GammaScenario::preset(&a.scenario, 0.5)?;
            let rows = density_table(&sc, a.max_cd4, a.step)?;
            out.table("densities", &rows, |w| write_density_csv(&rows, w))?;
            Ok(json!({ "rows": rows.len(), "scenario": a.scenario }))
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Score(_) => "score",
        Command::Select(_) => "select",
        Command::Roc(_) => "roc",
        Command::Auc(_) => "auc",
        Command::Cv(_) => "cv",
        Command::Bootstrap(_) => "bootstrap",
        Command::Simulate(_) => "simulate",
        Command::Converge(_) => "converge",
        Command::Sweep(_) => "sweep",
        Command::Gof(_) => "gof",
        Command::Densities(_) => "densities",
    }
}

fn fail(err: &CliError, command: Option<&str>) -> ExitCode {
    eprintln!("error: {err}");
    let line = json!({ "status": "error", "command": command, "kind": err.kind(), "code": err.code(), "message": err.to_string() });
    println!("{line}");
    ExitCode::from(err.code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return fail(&CliError::Config(e.kind().to_string()), None);
        }
    };
    let name = command_name(&cli.command);

    if let Some(t) = cli.threads {
        if t == 0 {
            return fail(&CliError::Config("--threads must be positive".into()), Some(name));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            return fail(&CliError::Config(e.to_string()), Some(name));
        }
    }
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        return fail(&CliError::Io(cli.out.clone(), e), Some(name));
    }

    // provenance excludes the thread count, which cannot change results
    let mut flags = serde_json::to_value(&cli.command).expect("flags serialize");
    if let Value::Object(m) = &mut flags {
        m.insert("out".into(), json!(cli.out));
        m.insert("format".into(), json!(cli.format));
    }
    let meta = json!({ "tool": "tripartite", "version": env!("CARGO_PKG_VERSION"), "command": name, "flags": flags });
    let mut out = Outputs { dir: &cli.out, format: cli.format, meta, written: Vec::new() };

    match run(&cli, &mut out) {
        Ok(summary) => {
            eprintln!("{name}: wrote {} file(s) to {}", out.written.len(), cli.out.display());
            println!("{}", json!({ "status": "ok", "command": name, "outputs": out.written, "summary": summary }));
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e, Some(name)),
    }
}
