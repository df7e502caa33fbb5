use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use seqrisk::experiments::{
    estimate_distribution_experiment, random_chain, synthetic_cohort_eval, variance_sweep, ChainSpec, CohortSpec,
    ExperimentTable, MetricRow, PlotSpec, Series, SweepAxis,
};
use seqrisk::oracle::{
    counterexample_chain, dispersion_probability, enumerate_sub_distribution, exact_bijection_check, exact_moments,
    exact_outcome_probability,
};
use seqrisk::seqmodel::{validate, MarkovModelFile};
use seqrisk::{estimate, EstimatorKind, MarkovModel};

use crate::args::{CohortArgs, DistributionArgs, EstimateArgs, Format, ModelSource, OracleCommand, OutputArgs, SweepArgs};
use crate::error::CliError;
use crate::output::{emit, Run};

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

/// Parses and validates a model file, reporting every violation.
pub fn load_model(path: &Path) -> Result<MarkovModel, CliError> {
    let text = read_input(path)?;
    let model_error = |message: String| CliError::Model {
        path: path.display().to_string(),
        message,
    };
    let file: MarkovModelFile = serde_json::from_str(&text).map_err(|e| model_error(e.to_string()))?;
    if let Err(violations) = validate(&file) {
        for v in &violations {
            eprintln!("{}: {v}", path.display());
        }
        return Err(model_error(format!("{} violation(s)", violations.len())));
    }
    MarkovModel::try_from(file).map_err(|e| model_error(e.to_string()))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = read_input(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{what} {}: {e}", path.display())))
}

/// Loads the model and records its contents in the run config.
fn resolve_model(source: &ModelSource, run: &mut Run) -> Result<MarkovModel, CliError> {
    let model = match (&source.model, &source.spec) {
        (Some(path), _) => load_model(path)?,
        (None, Some(path)) => {
            let spec: ChainSpec = load_json(path, "chain spec")?;
            run.record_input("chain_spec", to_value(&spec));
            random_chain(&spec)?
        }
        (None, None) => return Err(CliError::Config("one of --model or --spec is required".into())),
    };
    run.record_input("model", to_value(&MarkovModelFile::from(model.clone())));
    Ok(model)
}

fn to_value<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("config serializes")
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}

fn table_csv(table: &ExperimentTable) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    Ok(buf)
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    let mut p = path.to_owned().into_os_string();
    p.push(ext);
    PathBuf::from(p)
}

fn stamp_svg(svg: String, seed: u64) -> String {
    match svg.find('>') {
        Some(i) => format!("{}\n<!-- seed {seed} -->{}", &svg[..=i], &svg[i + 1..]),
        None => svg,
    }
}

/// Writes a table in the requested format, or as CSV to stdout without
/// `--out`. SVG output also writes the CSV it was drawn from.
fn emit_table(
    run: &mut Run,
    table: &ExperimentTable,
    output: &OutputArgs,
    plot: Option<(&str, PlotSpec)>,
    seed: u64,
) -> Result<(), CliError> {
    let Some(out) = &output.out else {
        emit(&String::from_utf8_lossy(&table_csv(table)?))?;
        return Ok(());
    };
    match output.format {
        Format::Csv => run.write(out, &table_csv(table)?),
        Format::Json => run.write(out, table.to_json().as_bytes()),
        Format::Svg => {
            let Some((statistic, spec)) = plot else {
                return Err(CliError::Config("this command has no plot; use csv or json".into()));
            };
            run.write(out, stamp_svg(table.plot(statistic, &spec), seed).as_bytes())?;
            run.write(&with_extension(out, ".csv"), &table_csv(table)?)
        }
    }
}

pub fn validate_cmd(model: &Path) -> Result<(), CliError> {
    let m = load_model(model)?;
    emit(&format!(
        "ok: {} states, outcome {}, {} steps\n",
        m.n_states(),
        m.outcome_state(),
        m.steps()
    ))?;
    Ok(())
}

pub fn estimate_cmd(args: &EstimateArgs, mut run: Run) -> Result<(), CliError> {
    let model = resolve_model(&args.source, &mut run)?;
    let kind = EstimatorKind::from(args.kind);
    let report = estimate(model.scenario(), kind, args.n, args.seed, args.clip.into())?;
    emit(&format!("{}\n", report.mean))?;
    eprintln!(
        "{kind}: n={} se={:.3e} above_one={} clipped={}",
        report.n, report.std_error, report.n_above_one, report.n_clipped
    );
    if let Some(path) = &args.sub_values {
        let bytes: Vec<u8> = report.sub_values.iter().flat_map(|v| v.to_le_bytes()).collect();
        run.write(path, &bytes)?;
    }
    if let Some(out) = &args.output.out {
        match args.output.format {
            Format::Csv => {
                let mut table = ExperimentTable::default();
                let (task, k, n, s) = ("estimate", kind.name(), report.n, args.seed);
                let half = 1.959963984540054 * report.std_error;
                table.push(MetricRow::new(task, k, n, "mean", report.mean, s).with_ci(report.mean - half, report.mean + half));
                table.push(MetricRow::new(task, k, n, "sample_variance", report.sample_variance, s));
                table.push(MetricRow::new(task, k, n, "std_error", report.std_error, s));
                table.push(MetricRow::new(task, k, n, "n_above_one", report.n_above_one as f64, s));
                table.push(MetricRow::new(task, k, n, "n_clipped", report.n_clipped as f64, s));
                run.write(out, &table_csv(&table)?)?;
            }
            Format::Json => {
                let mut summary = report.clone();
                summary.sub_values.clear();
                run.write(out, pretty(&summary).as_bytes())?;
            }
            Format::Svg => return Err(CliError::Config("estimate has no plot; use csv or json".into())),
        }
    }
    run.finish()
}

pub fn oracle_cmd(cmd: &OracleCommand, mut run: Run) -> Result<(), CliError> {
    match cmd {
        OracleCommand::Exact { source } => {
            let model = resolve_model(source, &mut run)?;
            emit(&format!("{}\n", exact_outcome_probability(&model)))?;
        }
        OracleCommand::Moments { source, output } => {
            let model = resolve_model(source, &mut run)?;
            let text = pretty(&exact_moments(&model));
            match &output.out {
                Some(out) => run.write(out, text.as_bytes())?,
                None => emit(&format!("{text}\n"))?,
            }
        }
        OracleCommand::Dispersion { n, p_base, p_elev, digits } => {
            let p = dispersion_probability(*n, *p_base, *p_elev)?;
            emit(&format!("{p:.digits$}\n"))?;
        }
        OracleCommand::Enumerate { source, kind, output } => {
            let model = resolve_model(source, &mut run)?;
            let dist = enumerate_sub_distribution(model.scenario(), (*kind).into())?;
            eprintln!(
                "{} atoms, mean {}, variance {}",
                dist.atoms.len(),
                dist.mean(),
                dist.variance()
            );
            let bytes = match output.format {
                Format::Json => pretty(&dist).into_bytes(),
                _ => {
                    let mut buf = Vec::new();
                    dist.write_csv(&mut buf)?;
                    buf
                }
            };
            match &output.out {
                Some(out) => run.write(out, &bytes)?,
                None => emit(&String::from_utf8_lossy(&bytes))?,
            }
        }
        OracleCommand::Bijection { source } => {
            let model = resolve_model(source, &mut run)?;
            emit(&format!("{}\n", pretty(&exact_bijection_check(model.scenario())?)))?;
        }
        OracleCommand::Counterexample { p } => {
            let m = exact_moments(&counterexample_chain(*p)?);
            emit(&format!(
                "{}\n",
                pretty(&json!({
                    "p_outcome": m.probability,
                    "mc_variance": m.mc_variance,
                    "scope_variance": m.scope_variance,
                    "reach_variance": m.reach_variance,
                    "scope_minus_mc": m.scope_variance - m.mc_variance,
                }))
            ))?;
        }
    }
    run.finish()
}

pub fn sweep_cmd(args: &SweepArgs, mut run: Run) -> Result<(), CliError> {
    let axis = SweepAxis::from(args.axis);
    let base = match &args.spec {
        Some(path) => load_json(path, "chain spec")?,
        None => axis.default_base(args.seed),
    };
    let grid = args.grid.clone().unwrap_or_else(|| axis.default_grid());
    run.record_input("base", to_value(&base));
    run.record_input("resolved_grid", to_value(&grid));
    eprintln!(
        "sweeping {} over {} points, {} replications",
        axis.name(),
        grid.len(),
        args.replications
    );
    let table = variance_sweep(axis, &grid, &base, args.replications, args.seed)?;
    let (statistic, spec) = match axis {
        SweepAxis::SampleCount => ("variance", PlotSpec::new("Variance by sample count", "n", "variance").log_log()),
        _ => ("variance", PlotSpec::new(&format!("Variance by {}", axis.name()), axis.name(), "variance")),
    };
    emit_table(&mut run, &table, &args.output, Some((statistic, spec)), args.seed)?;
    run.finish()?;
    if !table.failures.is_empty() {
        for f in &table.failures {
            eprintln!("{}: {}", f.task, f.error);
        }
        return Err(CliError::Infeasible(format!("{} grid point(s) failed", table.failures.len())));
    }
    Ok(())
}

pub fn distribution_cmd(args: &DistributionArgs, mut run: Run) -> Result<(), CliError> {
    if args.bins == 0 {
        return Err(CliError::Config("--bins must be positive".into()));
    }
    let spec = match &args.spec {
        Some(path) => load_json(path, "chain spec")?,
        None => SweepAxis::SampleCount.default_base(args.seed),
    };
    run.record_input("chain_spec", to_value(&spec));
    let exp = estimate_distribution_experiment(&spec, args.n_estimates, args.samples_per_estimate, args.seed)?;
    let table = exp.table();
    let Some(out) = &args.output.out else {
        emit(&String::from_utf8_lossy(&table_csv(&table)?))?;
        return run.finish();
    };
    let histograms: Vec<_> = exp.estimates.keys().flat_map(|k| exp.histogram(*k, args.bins)).collect();
    match args.output.format {
        Format::Csv => {
            run.write(out, &table_csv(&table)?)?;
            let mut buf = Vec::new();
            exp.write_histogram_csv(&mut buf, args.bins)?;
            run.write(&with_extension(out, ".histogram.csv"), &buf)?;
        }
        Format::Json => {
            let body = json!({ "summary": table, "histograms": histograms });
            run.write(out, pretty(&body).as_bytes())?;
        }
        Format::Svg => {
            let series: Vec<Series> = exp
                .estimates
                .keys()
                .map(|k| Series {
                    name: k.name().to_owned(),
                    points: exp
                        .histogram(*k, args.bins)
                        .iter()
                        .map(|b| ((b.lower + b.upper) / 2.0, b.count as f64))
                        .collect(),
                })
                .collect();
            let title = format!("Estimates from {} samples", args.samples_per_estimate);
            let svg = seqrisk::experiments::line_plot(&PlotSpec::new(&title, "estimate", "count"), &series);
            run.write(out, stamp_svg(svg, args.seed).as_bytes())?;
            run.write(&with_extension(out, ".csv"), &table_csv(&table)?)?;
        }
    }
    run.finish()
}

pub fn cohort_cmd(args: &CohortArgs, mut run: Run) -> Result<(), CliError> {
    let mut spec: CohortSpec = match &args.spec {
        Some(path) => load_json(path, "cohort spec")?,
        None => CohortSpec::default(),
    };
    if let Some(n) = args.patients {
        spec.n_patients = n;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    run.record_input("cohort_spec", to_value(&spec));
    eprintln!(
        "simulating {} patients with {} timelines each",
        spec.n_patients, spec.n_timelines
    );
    let report = synthetic_cohort_eval(&spec)?;
    eprintln!(
        "prevalence {:.4}, dropped rounds {}",
        report.prevalence, report.dropped_rounds
    );
    for e in &report.equivalence {
        let (lo, hi) = e.m_interval();
        eprintln!(
            "{} vs {} at n={}: ratio {:.3}, m in [{lo}, {hi}]",
            e.alternative, e.reference, e.reference_n, e.row.value
        );
    }
    for c in &report.calibration {
        eprintln!("calibration {} at n={}: within bounds {}", c.kind, c.n, c.within_bounds());
    }
    match (&args.output.out, args.output.format) {
        (Some(out), Format::Json) => {
            let body = json!({
                "seed": spec.seed,
                "prevalence": report.prevalence,
                "dropped_rounds": report.dropped_rounds,
                "equivalence": report.equivalence.iter().map(|e| json!({
                    "alternative": e.alternative,
                    "reference": e.reference,
                    "reference_n": e.reference_n,
                    "ratio": e.row,
                    "not_reached": e.not_reached,
                })).collect::<Vec<_>>(),
                "calibration": report.calibration,
                "table": report.table,
            });
            run.write(out, pretty(&body).as_bytes())?;
        }
        _ => {
            let spec_plot = PlotSpec::new("AUROC by sample count", "timelines", "AUROC");
            emit_table(&mut run, &report.table, &args.output, Some(("auroc", spec_plot)), spec.seed)?;
        }
    }
    run.finish()
}
