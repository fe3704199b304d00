//! The subcommands. Each one validates everything it can before fitting,
//! writes its result files, and only then reports a numerical failure.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use psman_core::cdt::{self, DEFAULT_LAMBDA};
use psman_core::classify::Method;
use psman_core::data::{Dataset, LabeledDataset};
use psman_core::mdpca::{self, FitOptions};
use psman_core::sweep;
use psman_core::verify::{self, VerifyConfig};
use psman_core::{checkpoint, Exec, OptimizeReport, Termination};
use serde::Serialize;

use crate::config::{
    load_file, required, CdtArgs, Cli, Command, InfoArgs, MdpcaArgs, RunConfig, SweepArgs, VerifyArgs,
};
use crate::error::{CliError, CliResult};
use crate::ingest::{self, LabelColumn};
use crate::output::{ensure_dir, trace_rows, write_csv, Metadata};

pub const CHECKPOINT_FILE: &str = "point.psman";

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Mdpca(a) => cmd_mdpca(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Cdt(a) => cmd_cdt(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Info(a) => cmd_info(a),
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// File stems, or full paths when two stems collide.
fn dataset_names(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths.iter().map(|p| file_stem(p)).collect();
    let unique: HashSet<&String> = stems.iter().collect();
    if unique.len() == stems.len() {
        stems
    } else {
        paths.iter().map(|p| p.display().to_string()).collect()
    }
}

fn ingest_error(path: &Path) -> impl FnOnce(crate::error::IngestError) -> CliError + '_ {
    move |source| CliError::Ingest { path: path.to_path_buf(), source }
}

fn load_datasets(paths: &[PathBuf], rc: &RunConfig) -> CliResult<Vec<Dataset>> {
    let names = dataset_names(paths);
    let mut out = Vec::with_capacity(paths.len());
    for (path, name) in paths.iter().zip(names) {
        let table = ingest::read_path(path, rc.header, None).map_err(ingest_error(path))?;
        let ds = Dataset::new(name, table.x)?;
        out.push(if rc.normalize { ds.zscored() } else { ds });
    }
    let n = out[0].features();
    for (ds, path) in out.iter().zip(paths) {
        if ds.features() != n {
            return Err(CliError::Data(format!(
                "{}: {} feature columns, expected {n} as in {}",
                path.display(),
                ds.features(),
                paths[0].display()
            )));
        }
        if ds.x().norm_squared() == 0.0 {
            return Err(CliError::Data(format!("{}: every entry is zero", path.display())));
        }
    }
    Ok(out)
}

fn inputs_table(names: &[String], paths: &[PathBuf]) -> toml::Table {
    names.iter().zip(paths).map(|(n, p)| (n.clone(), toml::Value::from(p.display().to_string()))).collect()
}

/// Writes the metadata and maps a failed step search to the numerical exit code.
fn finish(meta: Metadata, out: &Path, start: Instant, terminations: &[Termination]) -> CliResult<()> {
    let path = meta.write(out, start.elapsed().as_secs_f64())?;
    println!("wrote {}", path.display());
    if terminations.contains(&Termination::StepFailure) {
        return Err(CliError::Numerical(
            "no step decreased the loss before the step size underflowed; partial results were written".into(),
        ));
    }
    if terminations.contains(&Termination::MaxIters) {
        eprintln!("warning: iteration limit reached before convergence");
    }
    Ok(())
}

fn fit_summary(label: &str, report: &OptimizeReport) {
    println!("{label}: {} after {} iterations, loss {:e}", report.termination, report.iterations, report.final_loss());
}

#[derive(Serialize)]
struct VarianceCsv<'a> {
    dataset: &'a str,
    partition: &'a str,
    fraction: f64,
}

fn cmd_mdpca(args: MdpcaArgs) -> CliResult<()> {
    let file = load_file(args.common.config.as_deref())?;
    let rc = RunConfig::resolve(&args.common, &file)?;
    let k_pd = required(args.k_pd, file.mdpca.k_pd, "k-pd")?;
    let k_sh = required(args.k_sh, file.mdpca.k_sh, "k-sh")?;
    let start = Instant::now();

    let data = load_datasets(&args.datasets, &rc)?;
    let spec = mdpca::mdpca_spec(data[0].features(), data.len(), k_pd, k_sh)?;
    ensure_dir(&rc.out)?;

    let options = FitOptions { restarts: rc.restarts, exec: rc.exec };
    let (model, report) = mdpca::fit_mdpca_spec(&data, spec, &rc.optimizer, rc.seed, &options)?;
    fit_summary("mdpca", &report);

    let mut meta = Metadata::new("mdpca");
    meta.set("seed", rc.seed as i64);
    let mut cfg = rc.to_toml();
    cfg.insert("k_pd".into(), (k_pd as i64).into());
    cfg.insert("k_sh".into(), (k_sh as i64).into());
    meta.section("config", cfg);
    let names: Vec<String> = data.iter().map(|d| d.name().to_string()).collect();
    meta.section("inputs", inputs_table(&names, &args.datasets));
    meta.report(&report);

    let variance = mdpca::variance_explained(&model, &data)?;
    let path = rc.out.join("variance_explained.csv");
    write_csv(
        &path,
        variance.iter().map(|r| VarianceCsv { dataset: &r.dataset, partition: &r.partition, fraction: r.fraction }),
    )?;
    meta.output(&path);

    let path = rc.out.join("loss_trace.csv");
    write_csv(&path, trace_rows(&report))?;
    meta.output(&path);

    let path = rc.out.join(CHECKPOINT_FILE);
    checkpoint::save(model.point(), &path).map_err(|e| CliError::io(&path, e))?;
    meta.output(&path);

    finish(meta, &rc.out, start, &[report.termination])
}

#[derive(Serialize)]
struct SweepCsv<'a> {
    k_pd: usize,
    dataset: &'a str,
    partition_kind: &'static str,
    fraction: f64,
}

#[derive(Serialize)]
struct SweepRunCsv {
    k_pd: usize,
    k_sh: usize,
    termination: String,
    iterations: usize,
    final_loss: f64,
}

fn cmd_sweep(args: SweepArgs) -> CliResult<()> {
    let file = load_file(args.common.config.as_deref())?;
    let rc = RunConfig::resolve(&args.common, &file)?;
    let k_total = required(args.k_total, file.sweep.k_total, "k-total")?;
    let grid = args
        .grid
        .clone()
        .or_else(|| file.sweep.grid.clone())
        .ok_or_else(|| CliError::Usage("--grid is required (as a flag or in the config file)".into()))?;
    if grid.is_empty() {
        return Err(CliError::Config("the k_pd grid is empty".into()));
    }
    if rc.restarts > 1 {
        eprintln!("warning: sweep runs one start per grid value; restarts is ignored");
    }
    let start = Instant::now();

    let data = load_datasets(&args.datasets, &rc)?;
    let n = data[0].features();
    let (runs, skipped) = sweep::plan(data.len(), k_total, &grid);
    for k_pd in &skipped {
        eprintln!("warning: skipping k_pd={k_pd}: k_sh = k_total - {}*k_pd would be < 1 (or k_pd < 1)", data.len());
    }
    if runs.is_empty() {
        return Err(CliError::Config("no grid value leaves room for a shared partition".into()));
    }
    for &(k_pd, k_sh) in &runs {
        mdpca::mdpca_spec(n, data.len(), k_pd, k_sh)?;
    }
    ensure_dir(&rc.out)?;

    let outcome = sweep::run_sweep(&data, k_total, &grid, &rc.optimizer, rc.seed, rc.exec)?;
    for p in &outcome.points {
        fit_summary(&format!("k_pd={} k_sh={}", p.k_pd, p.k_sh), &p.report);
    }

    let mut meta = Metadata::new("sweep");
    meta.set("seed", rc.seed as i64);
    let mut cfg = rc.to_toml();
    cfg.insert("k_total".into(), (k_total as i64).into());
    cfg.insert("grid".into(), grid.iter().map(|&g| toml::Value::from(g as i64)).collect::<Vec<_>>().into());
    cfg.insert("skipped".into(), skipped.iter().map(|&g| toml::Value::from(g as i64)).collect::<Vec<_>>().into());
    meta.section("config", cfg);
    let names: Vec<String> = data.iter().map(|d| d.name().to_string()).collect();
    meta.section("inputs", inputs_table(&names, &args.datasets));

    let path = rc.out.join("sweep.csv");
    write_csv(
        &path,
        outcome.rows().map(|r| SweepCsv {
            k_pd: r.k_pd,
            dataset: &r.dataset,
            partition_kind: r.kind.name(),
            fraction: r.fraction,
        }),
    )?;
    meta.output(&path);

    let path = rc.out.join("sweep_runs.csv");
    write_csv(
        &path,
        outcome.points.iter().map(|p| SweepRunCsv {
            k_pd: p.k_pd,
            k_sh: p.k_sh,
            termination: p.report.termination.to_string(),
            iterations: p.report.iterations,
            final_loss: p.report.final_loss(),
        }),
    )?;
    meta.output(&path);

    let terminations: Vec<Termination> = outcome.points.iter().map(|p| p.report.termination).collect();
    finish(meta, &rc.out, start, &terminations)
}

#[derive(Serialize)]
struct AccuracyCsv<'a> {
    direction: &'a str,
    method: &'static str,
    features: &'static str,
    accuracy: f64,
}

#[derive(Serialize)]
struct PredictionCsv<'a> {
    sample: usize,
    method: &'static str,
    features: &'static str,
    predicted: &'a str,
    truth: Option<&'a str>,
}

fn cmd_cdt(args: CdtArgs) -> CliResult<()> {
    let file = load_file(args.common.config.as_deref())?;
    let rc = RunConfig::resolve(&args.common, &file)?;
    let lambda = args.lambda.or(file.cdt.lambda).unwrap_or(DEFAULT_LAMBDA);
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(CliError::Config(format!("lambda must be a finite value >= 0, got {lambda}")));
    }
    let label_column = match args.label_column.clone().or_else(|| file.cdt.label_column.clone()) {
        Some(name) if !rc.header => {
            return Err(CliError::Config(format!("label column `{name}` needs --header")));
        }
        Some(name) => LabelColumn::Named(name),
        None => LabelColumn::Last,
    };
    let start = Instant::now();

    let table = ingest::read_path(&args.source, rc.header, Some(&label_column)).map_err(ingest_error(&args.source))?;
    let labels = table.labels.expect("a label column was requested");
    let source = LabeledDataset::new(table.x, labels.indices, labels.classes)?;
    let target = ingest::read_path(&args.target, rc.header, None).map_err(ingest_error(&args.target))?.x;
    if target.ncols() != source.features() {
        return Err(CliError::Data(format!(
            "{}: {} feature columns, the source has {}",
            args.target.display(),
            target.ncols(),
            source.features()
        )));
    }
    let truth = match &args.target_labels {
        Some(path) => {
            let t = ingest::read_label_file(path, rc.header, source.classes()).map_err(ingest_error(path))?;
            if t.len() != target.nrows() {
                return Err(CliError::Data(format!(
                    "{}: {} labels for {} target samples",
                    path.display(),
                    t.len(),
                    target.nrows()
                )));
            }
            Some(t)
        }
        None => None,
    };
    // Each domain is standardized on its own statistics.
    let (source, target) =
        if rc.normalize { (source.zscored(), psman_core::data::zscore(&target).0) } else { (source, target) };
    let k_pc =
        args.k_pc.or(file.cdt.k_pc).unwrap_or_else(|| cdt::default_k_pc(source.features(), source.class_count()));
    cdt::cdt_spec(source.features(), source.class_count(), k_pc)?;
    ensure_dir(&rc.out)?;

    let options = FitOptions { restarts: rc.restarts, exec: rc.exec };
    let (model, report) = cdt::fit_cdt_with(&source, &target, k_pc, lambda, &rc.optimizer, rc.seed, &options)?;
    fit_summary("cdt", &report);

    let direction = format!("{}->{}", file_stem(&args.source), file_stem(&args.target));
    let mut meta = Metadata::new("cdt");
    meta.set("seed", rc.seed as i64);
    let mut cfg = rc.to_toml();
    cfg.insert("k_pc".into(), (k_pc as i64).into());
    cfg.insert("lambda".into(), lambda.into());
    meta.section("config", cfg);
    let mut inputs = toml::Table::new();
    inputs.insert("source".into(), args.source.display().to_string().into());
    inputs.insert("target".into(), args.target.display().to_string().into());
    if let Some(p) = &args.target_labels {
        inputs.insert("target_labels".into(), p.display().to_string().into());
    }
    meta.section("inputs", inputs);
    let classes = source.classes();
    meta.section(
        "labels",
        classes.iter().enumerate().map(|(i, c)| ((i + 1).to_string(), toml::Value::from(c.clone()))).collect(),
    );
    meta.report(&report);

    let mut results = Vec::new();
    for method in Method::ALL {
        results.push(("projected", cdt::classify(&model, method, &source, &target, truth.as_deref())?));
        results.push(("raw", cdt::classify_raw(method, &source, &target, truth.as_deref())?));
    }

    let path = rc.out.join("predictions.csv");
    write_csv(
        &path,
        results.iter().flat_map(|(features, c)| {
            let truth = truth.as_deref();
            c.predictions.iter().enumerate().map(move |(i, &p)| PredictionCsv {
                sample: i + 1,
                method: c.method.name(),
                features,
                predicted: &classes[p],
                truth: truth.map(|t| classes[t[i]].as_str()),
            })
        }),
    )?;
    meta.output(&path);

    if truth.is_some() {
        let path = rc.out.join("accuracy.csv");
        write_csv(
            &path,
            results.iter().map(|(features, c)| AccuracyCsv {
                direction: &direction,
                method: c.method.name(),
                features,
                accuracy: c.accuracy.expect("labels were supplied"),
            }),
        )?;
        meta.output(&path);
        for (features, c) in &results {
            println!("{direction} {} ({features}): {:.4}", c.method.name(), c.accuracy.unwrap_or(f64::NAN));
        }
    }

    let path = rc.out.join("loss_trace.csv");
    write_csv(&path, trace_rows(&report))?;
    meta.output(&path);

    let path = rc.out.join(CHECKPOINT_FILE);
    checkpoint::save(model.point(), &path).map_err(|e| CliError::io(&path, e))?;
    meta.output(&path);

    finish(meta, &rc.out, start, &[report.termination])
}

pub const VERIFY_MIN_N: usize = 3;
pub const VERIFY_MAX_N: usize = 16;

#[derive(Serialize)]
struct VerifyCsv<'a> {
    check: &'static str,
    passed: bool,
    value: f64,
    threshold: f64,
    detail: &'a str,
}

fn cmd_verify(args: VerifyArgs) -> CliResult<()> {
    let file = load_file(args.config.as_deref())?;
    let defaults = VerifyConfig::default();
    let sizes = args.sizes.clone().or_else(|| file.verify.sizes.clone()).unwrap_or(defaults.sizes);
    if sizes.is_empty() {
        return Err(CliError::Config("--sizes is empty".into()));
    }
    if let Some(&bad) = sizes.iter().find(|&&n| !(VERIFY_MIN_N..=VERIFY_MAX_N).contains(&n)) {
        return Err(CliError::Config(format!("verify sizes must lie in {VERIFY_MIN_N}..={VERIFY_MAX_N}, got {bad}")));
    }
    let trials = args.trials.or(file.verify.trials).unwrap_or(defaults.trials);
    if trials == 0 {
        return Err(CliError::Config("trials must be >= 1".into()));
    }
    let parallel = !args.sequential && file.parallel.unwrap_or(true);
    let config = VerifyConfig {
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
        sizes,
        trials,
        exec: if parallel { Exec::Parallel } else { Exec::Sequential },
    };
    let out = args.out.clone().or_else(|| file.out.clone());
    let start = Instant::now();
    let results = verify::run(&config);

    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        println!(
            "{} {:width$}  value {:.3e}  limit {:.1e}  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.value,
            r.threshold,
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} checks passed", results.len() - failed, results.len());

    if let Some(out) = out {
        ensure_dir(&out)?;
        let mut meta = Metadata::new("verify");
        meta.set("seed", config.seed as i64);
        let mut cfg = toml::Table::new();
        cfg.insert(
            "sizes".into(),
            config.sizes.iter().map(|&n| toml::Value::from(n as i64)).collect::<Vec<_>>().into(),
        );
        cfg.insert("trials".into(), (config.trials as i64).into());
        meta.section("config", cfg);
        meta.set("passed", failed == 0);
        let path = out.join("verify.csv");
        write_csv(
            &path,
            results.iter().map(|r| VerifyCsv {
                check: r.name,
                passed: r.passed,
                value: r.value,
                threshold: r.threshold,
                detail: &r.detail,
            }),
        )?;
        meta.output(&path);
        meta.write(&out, start.elapsed().as_secs_f64())?;
    }

    if failed > 0 {
        return Err(CliError::Numerical(format!("{failed} verification check(s) failed")));
    }
    Ok(())
}

fn cmd_info(args: InfoArgs) -> CliResult<()> {
    let p = checkpoint::load(&args.checkpoint).map_err(|e| match e {
        psman_core::Error::Io(_) => CliError::io(&args.checkpoint, e),
        other => CliError::Data(format!("{}: {other}", args.checkpoint.display())),
    })?;
    let spec = p.spec();
    let sizes: Vec<String> = spec.sizes().iter().map(usize::to_string).collect();
    println!("n: {}", spec.n());
    println!("partitions: {}", spec.partition_count());
    println!("sizes: {}", sizes.join(" "));
    println!("complement: {}", spec.remainder());
    println!("manifold dimension: {}", spec.dimension());
    println!("orthonormality defect: {:e}", p.orthonormality_defect());
    Ok(())
}
