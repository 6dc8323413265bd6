//! Subcommand implementations and their output artifacts.
//!
//! Every artifact is CSV or JSON; plotting stays in external tools. Numeric
//! fields are written with the shortest round-tripping representation, so a
//! rerun with the same config and seed produces byte-identical files.

use std::fs;
use std::path::Path;

use serde::Serialize;

use lorapath::analysis::{
    coefficient_progression, distance_bias, evaluate_models, even_bin_edges,
    gateway_reception_histogram, rmse_convergence, sf_feasibility, ConvergencePoint, EvalReport,
    GatewayStats, ModelBias, ProgressionResult, SfFeasibility,
};
use lorapath::fitting::{fit_ldpl, residual_ecdf, FitSummary};
use lorapath::models::{LdplParams, ModelKind};
use lorapath::pipeline::{
    apply_filters, link_samples, parse_gateways, parse_samples, write_gateways_csv,
    write_samples_csv, FilterOutcome, FilterReport, GatewayRegistry, LinkedSample, ParseOutcome,
    RejectedSample, RowReject, StageShares,
};
use lorapath::synth::{generate, DistanceDistribution, SynthConfig};
use lorapath::{ModelCatalog, ModelSpec, PlPoint};

use crate::config::RunConfig;
use crate::CliError;

pub struct SynthArgs {
    pub count: usize,
    pub sigma_db: f64,
    pub n: f64,
    pub pl_d0_db: f64,
    pub min_distance_m: f64,
    pub max_distance_m: f64,
    pub uniform: bool,
}

fn ensure_out_dir(config: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&config.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", config.out.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serializing {}: {e}", path.display())))?;
    fs::write(path, json + "\n")
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn create_file(path: &Path) -> Result<fs::File, CliError> {
    fs::File::create(path)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn load_raw_samples(config: &RunConfig) -> Result<ParseOutcome, CliError> {
    let path = config.require_samples()?;
    let file = fs::File::open(path)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))?;
    parse_samples(file, &config.columns).map_err(CliError::from)
}

fn load_registry(config: &RunConfig) -> Result<GatewayRegistry, CliError> {
    let path = config.require_gateways()?;
    let file = fs::File::open(path)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))?;
    let gateways = parse_gateways(file)?;
    GatewayRegistry::new(gateways).map_err(CliError::from)
}

fn load_catalog(config: &RunConfig) -> Result<ModelCatalog, CliError> {
    match &config.catalog {
        Some(path) => ModelCatalog::load(path).map_err(CliError::from),
        None => Ok(ModelCatalog::bundled()),
    }
}

fn write_rejects_csv(path: &Path, rejects: &[RowReject]) -> Result<(), CliError> {
    let mut wtr = csv_writer(path)?;
    write_row(&mut wtr, path, &["line", "message"])?;
    for r in rejects {
        write_row(&mut wtr, path, &[&r.line.to_string(), &r.message])?;
    }
    finish(wtr, path)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    Ok(csv::Writer::from_writer(create_file(path)?))
}

fn write_row(
    wtr: &mut csv::Writer<fs::File>,
    path: &Path,
    fields: &[&str],
) -> Result<(), CliError> {
    wtr.write_record(fields)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn finish(mut wtr: csv::Writer<fs::File>, path: &Path) -> Result<(), CliError> {
    wtr.flush()
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

#[derive(Serialize)]
struct IngestSummary {
    samples: usize,
    rejects: usize,
    gateways: Option<usize>,
}

/// `ingest`: parse and validate the inputs, write the reject sidecar.
pub fn run_ingest(config: &RunConfig) -> Result<(), CliError> {
    ensure_out_dir(config)?;
    let parsed = load_raw_samples(config)?;

    // Gateways are optional here; when given, also check that every sample
    // resolves.
    let gateways = match &config.gateways {
        Some(_) => {
            let registry = load_registry(config)?;
            for sample in &parsed.samples {
                registry.resolve(sample)?;
            }
            Some(registry.len())
        }
        None => None,
    };

    write_rejects_csv(&config.out.join("ingest_rejects.csv"), &parsed.rejects)?;
    let summary = IngestSummary {
        samples: parsed.samples.len(),
        rejects: parsed.rejects.len(),
        gateways,
    };
    write_json(&config.out.join("ingest_summary.json"), &summary)?;
    println!(
        "ingest: {} samples, {} rejected rows{}",
        summary.samples,
        summary.rejects,
        summary
            .gateways
            .map(|g| format!(", {g} gateways"))
            .unwrap_or_default()
    );
    Ok(())
}

/// Filter-report JSON: raw counts plus both share conventions.
#[derive(Serialize)]
struct FilterReportJson {
    #[serde(flatten)]
    report: FilterReport,
    shares_of_input: StageShares,
    shares_of_stage_input: StageShares,
}

impl FilterReportJson {
    fn new(report: FilterReport) -> Self {
        Self {
            shares_of_input: report.shares_of_input(),
            shares_of_stage_input: report.shares_of_stage_input(),
            report,
        }
    }
}

fn write_rejected_samples_csv(path: &Path, rejected: &[RejectedSample]) -> Result<(), CliError> {
    let mut wtr = csv_writer(path)?;
    write_row(&mut wtr, path, &["packet_id", "gateway_id", "reason", "detail"])?;
    for r in rejected {
        write_row(
            &mut wtr,
            path,
            &[
                &r.sample.packet_id,
                &r.sample.gateway_id,
                &r.reason.to_string(),
                &r.detail,
            ],
        )?;
    }
    finish(wtr, path)
}

fn run_filter_chain(config: &RunConfig) -> Result<(ParseOutcome, GatewayRegistry, FilterOutcome), CliError> {
    let filter_config = config.filter_config()?;
    let provider = config.snap.build()?;
    let parsed = load_raw_samples(config)?;
    let registry = load_registry(config)?;
    let outcome = apply_filters(&parsed.samples, &registry, &filter_config, provider.as_ref())?;
    Ok((parsed, registry, outcome))
}

fn write_filter_artifacts(config: &RunConfig, outcome: &FilterOutcome) -> Result<(), CliError> {
    write_json(
        &config.out.join("filter_report.json"),
        &FilterReportJson::new(outcome.report),
    )?;
    write_samples_csv(
        &outcome.clean,
        create_file(&config.out.join("clean_samples.csv"))?,
    )?;
    write_rejected_samples_csv(&config.out.join("filter_rejected.csv"), &outcome.rejected)?;

    let quarantined_path = config.out.join("filter_quarantined.csv");
    let mut wtr = csv_writer(&quarantined_path)?;
    write_row(&mut wtr, &quarantined_path, &["packet_id", "gateway_id", "error"])?;
    for q in &outcome.quarantined {
        write_row(
            &mut wtr,
            &quarantined_path,
            &[
                &q.sample.packet_id,
                &q.sample.gateway_id,
                &q.error.to_string(),
            ],
        )?;
    }
    finish(wtr, &quarantined_path)
}

/// `filter`: run the four-stage chain, write the clean corpus, the report,
/// and the reject/quarantine sidecars.
pub fn run_filter(config: &RunConfig) -> Result<(), CliError> {
    ensure_out_dir(config)?;
    let (_, _, outcome) = run_filter_chain(config)?;
    write_filter_artifacts(config, &outcome)?;
    let r = &outcome.report;
    println!(
        "filter: {} in -> {} out (low_satellites {}, snap_offset {}, altitude {}, below_fspl {}, quarantined {})",
        r.input,
        r.output,
        r.rejections.low_satellites,
        r.rejections.snap_offset,
        r.rejections.altitude,
        r.rejections.below_fspl,
        r.quarantined
    );
    Ok(())
}

fn linked_clean(config: &RunConfig) -> Result<(ParseOutcome, GatewayRegistry, FilterOutcome, Vec<LinkedSample>), CliError> {
    let (parsed, registry, outcome) = run_filter_chain(config)?;
    let linked = link_samples(
        &outcome.clean,
        &registry,
        &config.budget,
        config.env.sensor_height_m,
    )?;
    Ok((parsed, registry, outcome, linked))
}

fn fit_artifacts(
    config: &RunConfig,
    points: &[PlPoint],
) -> Result<FitSummary, CliError> {
    let fit = fit_ldpl(points, config.bin_width_m, config.d0_m, config.weighted_fit)?;
    let summary = fit.summary();
    write_json(&config.out.join("fit.json"), &summary)?;

    let ecdf = residual_ecdf(&fit.residuals)?;
    let path = config.out.join("ecdf.csv");
    let mut wtr = csv_writer(&path)?;
    write_row(&mut wtr, &path, &["value_db", "cumulative_probability"])?;
    for (value, p) in ecdf {
        write_row(&mut wtr, &path, &[&fmt(value), &fmt(p)])?;
    }
    finish(wtr, &path)?;
    Ok(summary)
}

/// `fit`: filter, fit the log-distance model, write `fit.json` and the
/// shadow-fading ECDF.
pub fn run_fit(config: &RunConfig) -> Result<(), CliError> {
    ensure_out_dir(config)?;
    let (_, _, _, linked) = linked_clean(config)?;
    let points: Vec<PlPoint> = linked.iter().map(|l| l.pl_point()).collect();
    let summary = fit_artifacts(config, &points)?;
    println!(
        "fit: n={:.4} pl_d0={:.2} dB sigma={:.2} dB over {} samples in {} bins",
        summary.n, summary.pl_d0, summary.sigma, summary.sample_count, summary.bin_count
    );
    Ok(())
}

fn eval_artifacts(
    config: &RunConfig,
    linked: &[LinkedSample],
    catalog: &ModelCatalog,
) -> Result<(EvalReport, Vec<ModelBias>), CliError> {
    let report = evaluate_models(linked, catalog, &config.env)?;

    let path = config.out.join("rmse.csv");
    let mut wtr = csv_writer(&path)?;
    write_row(&mut wtr, &path, &["model", "rmse_db", "sample_count"])?;
    for m in &report.models {
        write_row(
            &mut wtr,
            &path,
            &[&m.model_name, &fmt(m.rmse_db), &m.count().to_string()],
        )?;
    }
    finish(wtr, &path)?;

    let edges = even_bin_edges(config.bias_max_distance_m, config.bias_bin_width_m);
    let bias = distance_bias(&report, &edges)?;
    let path = config.out.join("bias.csv");
    let mut wtr = csv_writer(&path)?;
    write_row(
        &mut wtr,
        &path,
        &["model", "bin_lo_m", "bin_hi_m", "count", "mean_epsilon_db", "p25_db", "p75_db"],
    )?;
    for mb in &bias {
        for b in &mb.bins {
            write_row(
                &mut wtr,
                &path,
                &[
                    &mb.model_name,
                    &fmt(b.lo_m),
                    &fmt(b.hi_m),
                    &b.count.to_string(),
                    &fmt_opt(b.mean_epsilon_db),
                    &fmt_opt(b.p25_db),
                    &fmt_opt(b.p75_db),
                ],
            )?;
        }
    }
    finish(wtr, &path)?;

    for w in &report.warnings {
        eprintln!("validity: {w}");
    }
    Ok((report, bias))
}

/// `eval`: model-versus-measurement table plus the distance-bias series.
pub fn run_eval(config: &RunConfig) -> Result<(), CliError> {
    ensure_out_dir(config)?;
    let catalog = load_catalog(config)?;
    let (_, _, _, linked) = linked_clean(config)?;
    let (report, _) = eval_artifacts(config, &linked, &catalog)?;
    for m in &report.models {
        println!("eval: {} rmse {:.2} dB over {} samples", m.model_name, m.rmse_db, m.count());
    }
    Ok(())
}

fn progression_artifacts(
    config: &RunConfig,
    points: &[PlPoint],
) -> Result<ProgressionResult, CliError> {
    let result = coefficient_progression(
        points,
        &config.progression_distances_m,
        config.bin_width_m,
        config.d0_m,
    )?;
    let path = config.out.join("progression.csv");
    let mut wtr = csv_writer(&path)?;
    write_row(&mut wtr, &path, &["max_distance_m", "n", "pl_d0_db", "sample_count"])?;
    for p in &result.points {
        write_row(
            &mut wtr,
            &path,
            &[&fmt(p.max_distance_m), &fmt(p.n), &fmt(p.pl_d0_db), &p.sample_count.to_string()],
        )?;
    }
    finish(wtr, &path)?;
    for s in &result.skipped {
        eprintln!("progression: skipped D={} m: {}", s.max_distance_m, s.reason);
    }
    Ok(result)
}

/// `progression`: coefficient progression over maximum link distance.
pub fn run_progression(config: &RunConfig) -> Result<(), CliError> {
    ensure_out_dir(config)?;
    let (_, _, _, linked) = linked_clean(config)?;
    let points: Vec<PlPoint> = linked.iter().map(|l| l.pl_point()).collect();
    let result = progression_artifacts(config, &points)?;
    println!(
        "progression: {} distances fitted, {} skipped",
        result.points.len(),
        result.skipped.len()
    );
    Ok(())
}

fn convergence_artifacts(
    config: &RunConfig,
    points: &[PlPoint],
    sizes: &[usize],
) -> Result<Vec<ConvergencePoint>, CliError> {
    let result = rmse_convergence(
        points,
        sizes,
        config.repeats,
        config.seed,
        config.bin_width_m,
        config.d0_m,
        config.convergence_scope,
    )?;
    let path = config.out.join("convergence.csv");
    let mut wtr = csv_writer(&path)?;
    write_row(
        &mut wtr,
        &path,
        &["subset_size", "repeats", "rmse_mean_db", "rmse_std_db", "n_mean", "n_std"],
    )?;
    for c in &result {
        write_row(
            &mut wtr,
            &path,
            &[
                &c.subset_size.to_string(),
                &c.repeats.to_string(),
                &fmt(c.rmse_mean_db),
                &fmt(c.rmse_std_db),
                &fmt(c.n_mean),
                &fmt(c.n_std),
            ],
        )?;
    }
    finish(wtr, &path)?;
    Ok(result)
}

/// `convergence`: sample-size convergence of the log-distance fit.
pub fn run_convergence(config: &RunConfig) -> Result<(), CliError> {
    ensure_out_dir(config)?;
    let (_, _, _, linked) = linked_clean(config)?;
    let points: Vec<PlPoint> = linked.iter().map(|l| l.pl_point()).collect();
    // Explicitly requested sizes fail hard when oversized; the core check
    // stays on.
    let result = convergence_artifacts(config, &points, &config.subset_sizes)?;
    for c in &result {
        println!(
            "convergence: k={} rmse {:.2} ± {:.3} dB",
            c.subset_size, c.rmse_mean_db, c.rmse_std_db
        );
    }
    Ok(())
}

/// `synth`: generate a corpus with a known ground truth and write it in the
/// native CSV schemas.
pub fn run_synth(config: &RunConfig, args: &SynthArgs) -> Result<(), CliError> {
    ensure_out_dir(config)?;
    let ground_truth = ModelSpec::new(
        "ground-truth",
        ModelKind::Ldpl(
            LdplParams::new(args.n, args.pl_d0_db, config.d0_m, 0.0)
                .map_err(|e| CliError::Validation(e.to_string()))?,
        ),
    );
    let distances = if args.uniform {
        DistanceDistribution::Uniform {
            min_m: args.min_distance_m,
            max_m: args.max_distance_m,
        }
    } else {
        DistanceDistribution::LogUniform {
            min_m: args.min_distance_m,
            max_m: args.max_distance_m,
        }
    };
    let synth_config = SynthConfig {
        ground_truth,
        sigma_db: args.sigma_db,
        count: args.count,
        distances,
        seed: config.seed,
        env: config.env,
        budget: config.budget,
        ..SynthConfig::new(
            ModelSpec::new("placeholder", ModelKind::Fspl),
            0.0,
            1,
            config.seed,
        )
    };
    let (samples, gateways) = generate(&synth_config)?;
    write_samples_csv(&samples, create_file(&config.out.join("samples.csv"))?)?;
    write_gateways_csv(&gateways, create_file(&config.out.join("gateways.csv"))?)?;
    println!(
        "synth: wrote {} samples from LDPL(n={}, pl_d0={}, sigma={}) to {}",
        samples.len(),
        args.n,
        args.pl_d0_db,
        args.sigma_db,
        config.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RmseRow {
    model: String,
    rmse_db: f64,
    sample_count: usize,
}

#[derive(Serialize)]
struct ReportJson {
    ingest: IngestSummary,
    filter: FilterReportJson,
    fit: FitSummary,
    rmse: Vec<RmseRow>,
    gateway_stats: GatewayStats,
    sf7_feasibility: SfFeasibility,
    progression: ProgressionResult,
    convergence: Vec<ConvergencePoint>,
    validity_warnings: Vec<String>,
    notes: Vec<String>,
}

/// `report`: the whole workflow in one run, bundled into `report.json`
/// alongside all the per-stage artifacts.
pub fn run_report(config: &RunConfig) -> Result<(), CliError> {
    ensure_out_dir(config)?;
    let catalog = load_catalog(config)?;
    let (parsed, _registry, outcome, linked) = linked_clean(config)?;
    let mut notes = Vec::new();

    write_rejects_csv(&config.out.join("ingest_rejects.csv"), &parsed.rejects)?;
    write_filter_artifacts(config, &outcome)?;

    // Reception statistics and SF feasibility run over the raw samples;
    // they describe the campaign, not the cleaned subset.
    let gateway_stats = gateway_reception_histogram(&parsed.samples);
    let sf7 = sf_feasibility(&parsed.samples, &config.sf_sensitivity);

    let points: Vec<PlPoint> = linked.iter().map(|l| l.pl_point()).collect();
    let fit = fit_artifacts(config, &points)?;
    let (eval, _) = eval_artifacts(config, &linked, &catalog)?;
    let progression = progression_artifacts(config, &points)?;

    let usable_sizes: Vec<usize> = config
        .subset_sizes
        .iter()
        .copied()
        .filter(|s| *s <= points.len())
        .collect();
    for dropped in config.subset_sizes.iter().filter(|s| **s > points.len()) {
        notes.push(format!(
            "convergence size {dropped} exceeds the cleaned population {} and was dropped",
            points.len()
        ));
    }
    let convergence = if usable_sizes.is_empty() {
        notes.push("no convergence subset size fits the cleaned population".to_string());
        Vec::new()
    } else {
        convergence_artifacts(config, &points, &usable_sizes)?
    };

    if outcome.report.quarantined > 0 {
        notes.push(format!(
            "{} samples quarantined by the snap provider; rerun with an extended fixture or a live provider to settle them",
            outcome.report.quarantined
        ));
    }

    let report = ReportJson {
        ingest: IngestSummary {
            samples: parsed.samples.len(),
            rejects: parsed.rejects.len(),
            gateways: Some(_registry.len()),
        },
        filter: FilterReportJson::new(outcome.report),
        fit,
        rmse: eval
            .models
            .iter()
            .map(|m| RmseRow {
                model: m.model_name.clone(),
                rmse_db: m.rmse_db,
                sample_count: m.count(),
            })
            .collect(),
        gateway_stats,
        sf7_feasibility: sf7,
        progression,
        convergence,
        validity_warnings: eval.warnings.iter().map(|w| w.to_string()).collect(),
        notes,
    };
    write_json(&config.out.join("report.json"), &report)?;
    println!(
        "report: {} raw -> {} clean; fit n={:.4}, sigma={:.2} dB; {} models evaluated; artifacts in {}",
        report.filter.report.input,
        report.filter.report.output,
        report.fit.n,
        report.fit.sigma,
        report.rmse.len(),
        config.out.display()
    );
    Ok(())
}
