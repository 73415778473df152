use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use forgetcurve::decay::{apply_epsilon_floor, fit_all, DecayFit, FitConfig};
use forgetcurve::io::{
    load_bundle, read_fits, read_value_columns, save_bundle, serialize_f64, serialize_opt_f64,
    write_class_table, write_fits, write_json, write_overlap, write_retention_stats,
    write_selection_counts, write_truth, write_weights, RunBundle,
};
use forgetcurve::retention::{compute_retention_stats, SampleMeta, Split};
use forgetcurve::scheduler::{simulate_schedule, ScheduleConfig, ScheduleInput, Strategy};
use forgetcurve::stats::{
    aggregate_over_seeds, bootstrap_ci_rho, class_table, cross_seed_stability, early_loss_correlation,
    jaccard_sweep, mean_r2, spearman, BootstrapConfig, CorrelationMethod, CorrelationResult,
    RankedLambdaSet,
};
use forgetcurve::synth::{generate, synth_sample_id, NoiseModel, SynthSpec};
use forgetcurve::Error;
use serde::Serialize;

use crate::{Command, Mode};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit {
            bundle,
            grid,
            tol,
            output,
        } => fit(&bundle, grid, tol, &output),
        Command::Stats { bundle, output } => {
            let b = load(&bundle)?;
            write_retention_stats(&output, &compute_retention_stats(&b.retention))?;
            done(&output)
        }
        Command::CompareArch {
            fits_a,
            fits_b,
            k,
            output,
            spearman_out,
        } => compare_arch(&fits_a, &fits_b, &k, &output, spearman_out.as_deref()),
        Command::CompareSeeds {
            fits,
            bootstrap,
            confidence,
            seed,
            output,
        } => compare_seeds(&fits, bootstrap, confidence, seed, &output),
        Command::ClassTable { fits, bundle, output } => {
            let (fits, b) = (fits_from(&fits)?, load(&bundle)?);
            write_class_table(&output, &class_table(&fits, &b.meta)?)?;
            done(&output)
        }
        Command::EarlyLoss { fits, bundle, output } => {
            let (fits, b) = (fits_from(&fits)?, load(&bundle)?);
            let r = early_loss_correlation(&fits, &b.meta)?;
            write_json(&output, &CorrelationReport::from(r))?;
            done(&output)
        }
        Command::Schedule {
            fits,
            strategy,
            epochs,
            draws,
            tau,
            eps,
            seed,
            bundle,
            inverse_frequency,
            output,
        } => {
            let config = ScheduleConfig {
                epochs,
                draws_per_epoch: draws,
                tau,
                seed,
                inverse_class_frequency: inverse_frequency,
            };
            schedule(&fits, strategy, eps, bundle.as_deref(), &config, &output)
        }
        Command::Synth {
            lambdas,
            samples,
            epochs,
            mode,
            seed,
            first_learned,
            output,
        } => synth(&lambdas, samples, epochs, mode, seed, first_learned, &output),
        Command::Aggregate { values, output } => aggregate(&values, &output),
    }
}

fn done(path: &Path) -> Result<()> {
    log::info!("wrote {}", path.display());
    Ok(())
}

fn load(dir: &Path) -> Result<RunBundle> {
    let b = load_bundle(dir)?;
    log::info!(
        "loaded {}: {} samples, {} epochs",
        dir.display(),
        b.retention.num_samples(),
        b.retention.num_epochs()
    );
    Ok(b)
}

/// Fits sorted by sample id.
fn fits_from(path: &Path) -> Result<Vec<DecayFit>> {
    let mut fits = read_fits(path)?;
    fits.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    Ok(fits)
}

fn run_label(path: &Path) -> String {
    path.display().to_string()
}

fn fit(bundle: &Path, grid: usize, tol: f64, output: &Path) -> Result<()> {
    let b = load(bundle)?;
    let config = FitConfig {
        grid_points: grid,
        refine_tolerance: tol,
        ..FitConfig::default()
    };
    let fits = fit_all(&b.retention, &config)?;
    write_fits(output, &fits)?;
    done(output)
}

#[derive(Serialize)]
struct CorrelationReport {
    #[serde(serialize_with = "serialize_f64")]
    rho: f64,
    #[serde(serialize_with = "serialize_f64")]
    p_value: f64,
    n: usize,
    method: CorrelationMethod,
}

impl From<CorrelationResult> for CorrelationReport {
    fn from(r: CorrelationResult) -> Self {
        Self {
            rho: r.rho,
            p_value: r.p_value,
            n: r.n,
            method: r.method,
        }
    }
}

#[derive(Serialize)]
struct ArchReport {
    run_a: String,
    run_b: String,
    shared_samples: usize,
    spearman: CorrelationReport,
    /// Absent when a run has no sample with an R².
    #[serde(serialize_with = "serialize_opt_f64")]
    mean_r2_a: Option<f64>,
    #[serde(serialize_with = "serialize_opt_f64")]
    mean_r2_b: Option<f64>,
}

fn optional_r2(fits: &[DecayFit]) -> Result<Option<f64>> {
    match mean_r2(fits) {
        Ok(v) => Ok(Some(v)),
        Err(Error::NoFittedSamples) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn compare_arch(fits_a: &Path, fits_b: &Path, k: &[u32], output: &Path, spearman_out: Option<&Path>) -> Result<()> {
    let (fa, fb) = (fits_from(fits_a)?, fits_from(fits_b)?);
    let a = RankedLambdaSet::from_fits(run_label(fits_a), &fa)?;
    let b = RankedLambdaSet::from_fits(run_label(fits_b), &fb)?;
    write_overlap(output, &jaccard_sweep(&a, &b, k)?)?;
    done(output)?;

    if let Some(path) = spearman_out {
        let (x, y) = a.aligned_with(&b)?;
        let report = ArchReport {
            run_a: a.run_id().to_owned(),
            run_b: b.run_id().to_owned(),
            shared_samples: x.len(),
            spearman: spearman(&x, &y)?.into(),
            mean_r2_a: optional_r2(&fa)?,
            mean_r2_b: optional_r2(&fb)?,
        };
        write_json(path, &report)?;
        done(path)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct IntervalReport {
    #[serde(serialize_with = "serialize_f64")]
    low: f64,
    #[serde(serialize_with = "serialize_f64")]
    high: f64,
    /// Degenerate draws that were redrawn.
    skipped_draws: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
}

#[derive(Serialize)]
struct PairReport {
    run_a: String,
    run_b: String,
    shared_samples: usize,
    spearman: CorrelationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap_ci: Option<IntervalReport>,
}

#[derive(Serialize)]
struct SeedsReport {
    runs: Vec<String>,
    #[serde(serialize_with = "serialize_f64")]
    mean_rho: f64,
    bootstrap_resamples: usize,
    #[serde(serialize_with = "serialize_f64")]
    confidence: f64,
    seed: u64,
    pairs: Vec<PairReport>,
}

fn compare_seeds(paths: &[PathBuf], resamples: usize, confidence: f64, seed: u64, output: &Path) -> Result<()> {
    let runs = paths
        .iter()
        .map(|p| Ok(RankedLambdaSet::from_fits(run_label(p), &fits_from(p)?)?))
        .collect::<Result<Vec<_>>>()?;
    let pairs = cross_seed_stability(&runs)?;
    let bootstrap = BootstrapConfig {
        resamples,
        confidence,
        seed,
    };

    let mut reports = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let bootstrap_ci = if resamples == 0 {
            None
        } else {
            let a = runs.iter().find(|r| r.run_id() == pair.run_a).expect("pair run a");
            let b = runs.iter().find(|r| r.run_id() == pair.run_b).expect("pair run b");
            let (x, y) = a.aligned_with(b)?;
            let ci = bootstrap_ci_rho(&x, &y, &bootstrap)?;
            Some(IntervalReport {
                low: ci.low,
                high: ci.high,
                skipped_draws: ci.skipped,
                warning: ci.warning,
            })
        };
        reports.push(PairReport {
            run_a: pair.run_a.clone(),
            run_b: pair.run_b.clone(),
            shared_samples: pair.shared_samples,
            spearman: pair.correlation.into(),
            bootstrap_ci,
        });
    }
    let mean_rho = pairs.iter().map(|p| p.correlation.rho).sum::<f64>() / pairs.len() as f64;
    let report = SeedsReport {
        runs: runs.iter().map(|r| r.run_id().to_owned()).collect(),
        mean_rho,
        bootstrap_resamples: resamples,
        confidence,
        seed,
        pairs: reports,
    };
    write_json(output, &report)?;
    done(output)
}

fn schedule(
    fits_path: &Path,
    strategy: Strategy,
    eps: f64,
    bundle: Option<&Path>,
    config: &ScheduleConfig,
    output: &Path,
) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParameter(format!("--eps must be positive, got {eps}")).into());
    }
    let fits = fits_from(fits_path)?;
    let ids: Vec<String> = fits.iter().map(|f| f.sample_id.clone()).collect();
    let floor = FitConfig {
        epsilon_floor: eps,
        ..FitConfig::default()
    };
    let lambda_sched = apply_epsilon_floor(&fits, &floor);

    let needs_bundle = matches!(strategy, Strategy::Curriculum | Strategy::AntiCurriculum)
        || (strategy == Strategy::Random && config.inverse_class_frequency);
    let meta: Option<Vec<SampleMeta>> = match bundle {
        Some(dir) => Some(meta_for(&load(dir)?, &ids)?),
        None if needs_bundle => {
            return Err(Error::InvalidParameter(format!(
                "strategy `{strategy}` needs --bundle for warmup losses or class labels"
            ))
            .into())
        }
        None => None,
    };
    let losses: Option<Vec<f64>> = meta.as_ref().map(|m| m.iter().map(|s| s.phase1_loss).collect());
    let labels: Option<Vec<String>> = meta.as_ref().map(|m| m.iter().map(|s| s.class_label.clone()).collect());

    let input = ScheduleInput {
        lambda_sched: (strategy == Strategy::SpacedRepetition).then_some(lambda_sched.as_slice()),
        phase1_losses: losses.as_deref(),
        class_labels: labels.as_deref(),
    };
    let outcome = simulate_schedule(input, strategy, config)?;

    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    for record in &outcome.epochs {
        let path = write_weights(output, &ids, &record.weights)?;
        log::info!("wrote {}", path.display());
    }
    let counts = output.join("selection_counts.csv");
    write_selection_counts(&counts, &ids, &outcome.selection_counts)?;
    done(&counts)
}

/// Bundle metadata in the order of `ids`, which must be exactly the bundle's ids.
fn meta_for(bundle: &RunBundle, ids: &[String]) -> Result<Vec<SampleMeta>> {
    let in_fits: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let in_bundle: BTreeSet<&str> = bundle.meta.iter().map(|m| m.sample_id.as_str()).collect();
    if in_fits != in_bundle {
        return Err(Error::InconsistentIds(format!(
            "{} ids only in the fits, {} only in the bundle",
            in_fits.difference(&in_bundle).count(),
            in_bundle.difference(&in_fits).count()
        ))
        .into());
    }
    // Both sides are sorted by id.
    Ok(bundle.meta.clone())
}

fn synth(
    lambdas: &[f64],
    per_group: usize,
    epochs: usize,
    mode: Mode,
    seed: u64,
    first_learned: usize,
    output: &Path,
) -> Result<()> {
    let noise = match mode {
        Mode::Bernoulli => NoiseModel::Bernoulli,
        Mode::Threshold => NoiseModel::Threshold,
    };
    let run_seed = i64::try_from(seed)
        .map_err(|_| Error::InvalidParameter(format!("--seed {seed} does not fit a signed 64-bit integer")))?;
    let spec = SynthSpec::grouped(lambdas, per_group, first_learned, epochs, noise, seed);
    let out = generate(&spec)?;
    let n = spec.num_samples();
    let meta = (0..n)
        .map(|i| SampleMeta {
            sample_id: synth_sample_id(i, n),
            class_label: format!("g{}", i / per_group),
            phase1_loss: 0.0,
            split: Split::Train,
        })
        .collect();
    let bundle = RunBundle::new(
        format!("synth-{seed}"),
        "synthetic",
        "none",
        run_seed,
        0,
        meta,
        out.matrix,
    )?;
    save_bundle(&bundle, output)?;
    write_truth(&output.join("truth.csv"), &out.truth)?;
    done(output)
}

#[derive(Serialize)]
struct ColumnAggregate {
    column: String,
    #[serde(serialize_with = "serialize_f64")]
    mean: f64,
    #[serde(serialize_with = "serialize_f64")]
    std: f64,
    n_seeds: usize,
}

#[derive(Serialize)]
struct AggregateReport {
    columns: Vec<ColumnAggregate>,
}

fn aggregate(values: &Path, output: &Path) -> Result<()> {
    let columns = read_value_columns(values)?
        .into_iter()
        .map(|(column, v)| {
            let a = aggregate_over_seeds(&v)?;
            Ok(ColumnAggregate {
                column,
                mean: a.mean,
                std: a.std,
                n_seeds: a.n_seeds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(output, &AggregateReport { columns })?;
    done(output)
}
