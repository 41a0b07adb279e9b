//! Implementations of the five subcommands.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use svmreg::model::{density_at, margin, Dataset, Label, PolyMap, Theta};
use svmreg::simulate::{kfold_cv_with_partition, kfold_partition, Method};
use svmreg::stats::sigmoid;
use svmreg::{
    check_existence, fit_approximate, fit_logistic, fit_mle, logistic_sandwich,
    robust_inference, run_accuracy_experiment, run_mse_experiment, AccConfig, ExperimentReport,
    MseConfig, OptOptions,
};

use crate::csvio::{load_csv, load_features, CsvSchema, LoadedData};
use crate::report::{
    emit_json, file_digest, CvMethodReport, CvReport, FitReport, FitStats, InferenceJson,
    PolySpec, RunManifest, SchemaInfo,
};
use crate::{CliError, Command, SchemaArgs};

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit { input, schema, model, seed, starts, lambda, poly_c, poly_u, out } => {
            cmd_fit(&input, &schema, &model, seed, starts, lambda, poly_c, poly_u, out.as_deref())
        }
        Command::Predict { report, input, out } => cmd_predict(&report, &input, out.as_deref()),
        Command::Simulate {
            study,
            config,
            n_grid,
            d_grid,
            omega_grid,
            test_size,
            reps,
            seed,
            starts,
            out,
        } => cmd_simulate(
            &study,
            config.as_deref(),
            n_grid,
            d_grid,
            omega_grid,
            test_size,
            reps,
            seed,
            starts,
            out.as_deref(),
        ),
        Command::Cv { input, schema, k, methods, seed, starts, lambda, out } => {
            cmd_cv(&input, &schema, k, &methods, seed, starts, lambda, out.as_deref())
        }
        Command::Check { input, schema } => cmd_check(&input, &schema),
    }
}

fn to_schema(args: &SchemaArgs) -> CsvSchema {
    CsvSchema { label_column: args.label_col.clone(), feature_columns: args.features.clone() }
}

/// Apply the polynomial feature expansion to every row of a dataset.
fn expand_dataset(
    data: &Dataset,
    names: &[String],
    map: &PolyMap,
) -> Result<(Dataset, Vec<String>), CliError> {
    let mut rows = Vec::with_capacity(data.n());
    let mut ys = Vec::with_capacity(data.n());
    for s in data.iter() {
        rows.push(map.apply(&s.x).map_err(CliError::from)?);
        ys.push(s.y.sign());
    }
    let expanded = Dataset::from_rows(rows, ys).map_err(CliError::from)?;
    let names = map.term_names(names);
    Ok((expanded, names))
}

fn in_sample_accuracy(data: &Dataset, theta: &Theta) -> Result<f64, CliError> {
    svmreg::simulate::accuracy(data, theta).map_err(CliError::from)
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    input: &Path,
    schema_args: &SchemaArgs,
    model: &str,
    seed: u64,
    starts: usize,
    lambda: Option<f64>,
    poly_c: f64,
    poly_u: Option<u32>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let schema = to_schema(schema_args);
    let LoadedData { dataset, feature_names, label_encoding } = load_csv(input, &schema)?;

    let poly = match poly_u {
        Some(u) => Some(PolyMap::new(dataset.dim(), poly_c, u).map_err(CliError::from)?),
        None => None,
    };
    let (fit_data, fitted_names) = match &poly {
        Some(map) => expand_dataset(&dataset, &feature_names, map)?,
        None => (dataset.clone(), feature_names.clone()),
    };

    let existence = check_existence(&fit_data);
    if !existence.both_labels_present || !existence.full_rank {
        eprintln!("warning: existence gate: {}", existence.details);
    }

    let opts = OptOptions { seed, n_starts: starts, ..OptOptions::default() };
    let n = fit_data.n();
    let (theta, stats, inference) = match model {
        "svmreg" => {
            let fit = fit_mle(&fit_data, &opts).map_err(CliError::from)?;
            let inference = match robust_inference(&fit_data, &fit.theta_hat) {
                Ok(r) => Some(InferenceJson::from(&r)),
                Err(e) => {
                    eprintln!("warning: inference unavailable: {e}");
                    None
                }
            };
            let stats = FitStats {
                loglik_mean: fit.loglik,
                loglik_total: fit.total_loglik,
                converged: fit.converged,
                n_iter: fit.n_iter,
                grad_norm: Some(fit.grad_norm),
                start_index: Some(fit.start_index),
                all_start_logliks: Some(fit.all_start_logliks.clone()),
                diverged: None,
                existence_warning: fit.existence_warning.clone(),
            };
            (fit.theta_hat, stats, inference)
        }
        "logistic" => {
            let fit = fit_logistic(&fit_data).map_err(CliError::from)?;
            let inference = match logistic_sandwich(&fit_data, &fit) {
                Ok(r) => Some(InferenceJson::from(&r)),
                Err(e) => {
                    eprintln!("warning: inference unavailable: {e}");
                    None
                }
            };
            let stats = FitStats {
                loglik_mean: fit.loglik / n as f64,
                loglik_total: fit.loglik,
                converged: fit.converged,
                n_iter: fit.n_iter,
                grad_norm: None,
                start_index: None,
                all_start_logliks: None,
                diverged: Some(fit.diverged),
                existence_warning: None,
            };
            (fit.theta_tilde, stats, inference)
        }
        "svm" => {
            let lam = lambda.unwrap_or(1.0 / n as f64);
            if !lam.is_finite() || lam < 0.0 {
                return Err(CliError::Usage(format!("lambda must be nonnegative, got {lam}")));
            }
            let objective = svmreg::optimizer::svm_objective(&fit_data, lam);
            let multi = svmreg::optimizer::minimize_multistart(&objective, fit_data.dim() + 1, &opts)
                .map_err(CliError::from)?;
            let best = multi.best();
            let theta = Theta::from_slice(best.x.as_slice()).map_err(CliError::from)?;
            let loglik =
                svmreg::log_likelihood(&fit_data, &theta).map_err(CliError::from)?;
            let stats = FitStats {
                loglik_mean: loglik,
                loglik_total: loglik * n as f64,
                converged: best.converged,
                n_iter: best.n_iter,
                grad_norm: Some(best.grad_norm),
                start_index: Some(multi.best_index),
                all_start_logliks: None,
                diverged: None,
                existence_warning: None,
            };
            (theta, stats, None)
        }
        "approx" => {
            let fit = fit_approximate(&fit_data, &opts).map_err(CliError::from)?;
            let stats = FitStats {
                loglik_mean: fit.loglik,
                loglik_total: fit.total_loglik,
                converged: fit.converged,
                n_iter: fit.n_iter,
                grad_norm: Some(fit.grad_norm),
                start_index: Some(fit.start_index),
                all_start_logliks: Some(fit.all_start_logliks.clone()),
                diverged: None,
                existence_warning: None,
            };
            (fit.theta_hat, stats, None)
        }
        other => return Err(CliError::Usage(format!("unknown model '{other}'"))),
    };

    let accuracy = in_sample_accuracy(&fit_data, &theta)?;
    let config = json!({
        "input": input.display().to_string(),
        "model": model,
        "label_col": schema_args.label_col,
        "features": schema_args.features,
        "seed": seed,
        "starts": starts,
        "lambda": lambda,
        "poly_c": poly_u.map(|_| poly_c),
        "poly_u": poly_u,
    });
    let report = FitReport {
        manifest: RunManifest::new("fit", config, seed, Some(file_digest(input)?)),
        model: model.to_string(),
        schema: SchemaInfo {
            label_column: schema_args.label_col.clone(),
            feature_columns: feature_names,
            label_encoding,
            poly: poly.as_ref().map(|m| PolySpec { c: m.constant(), u: m.degree() }),
        },
        n,
        d: fit_data.dim(),
        feature_names: fitted_names.clone(),
        theta: theta.clone(),
        fit: stats.clone(),
        in_sample_accuracy: accuracy,
        inference: inference.clone(),
        existence,
    };

    print_fit_summary(&report, &fitted_names);
    if out.is_some() {
        emit_json(&report, out)?;
    } else {
        emit_json(&report, None)?;
    }
    Ok(())
}

fn print_fit_summary(report: &FitReport, names: &[String]) {
    eprintln!(
        "model {} on n = {}, d = {}: mean loglik {:.6}, total {:.2}, in-sample accuracy {:.4}{}",
        report.model,
        report.n,
        report.d,
        report.fit.loglik_mean,
        report.fit.loglik_total,
        report.in_sample_accuracy,
        if report.fit.converged { "" } else { " (NOT converged)" }
    );
    if let Some(inference) = &report.inference {
        eprintln!("{:<12} {:>12} {:>12} {:>10} {:>12}", "term", "estimate", "se", "z", "p");
        let flat = report.theta.to_vec();
        for j in 0..flat.len() {
            let label = if j == 0 { "intercept" } else { &names[j - 1] };
            eprintln!(
                "{:<12} {:>12.4} {:>12.4} {:>10.3} {:>12.3e}",
                label, flat[j], inference.se[j], inference.z[j], inference.p[j]
            );
        }
        if inference.kink_warning {
            eprintln!(
                "warning: {} of {} margins sit at a kink; curvature-based inference is strained",
                inference.kink_count, report.n
            );
        }
    }
}

fn cmd_predict(report_path: &Path, input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let raw = std::fs::read_to_string(report_path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", report_path.display())))?;
    let report: FitReport = serde_json::from_str(&raw)
        .map_err(|e| CliError::Data(format!("malformed fit report: {e}")))?;

    let (rows, _) = load_features(input, &report.schema.feature_columns, &report.schema.label_column)?;
    let poly = match &report.schema.poly {
        Some(spec) => Some(
            PolyMap::new(report.schema.feature_columns.len(), spec.c, spec.u)
                .map_err(CliError::from)?,
        ),
        None => None,
    };

    let with_probability = matches!(report.model.as_str(), "svmreg" | "logistic");
    let mut csv_out = String::new();
    csv_out.push_str(if with_probability { "y_pred,p_pos\n" } else { "y_pred\n" });
    for row in &rows {
        let x = match &poly {
            Some(map) => map.apply(row).map_err(CliError::from)?,
            None => row.clone(),
        };
        if x.len() != report.theta.dim() {
            return Err(CliError::Data(format!(
                "feature-column mismatch: report expects {} fitted features, input row has {}",
                report.theta.dim(),
                x.len()
            )));
        }
        let t = margin(&x, &report.theta).map_err(CliError::from)?.0;
        let label: f64 = if t >= 0.0 { 1.0 } else { -1.0 };
        if with_probability {
            let p = match report.model.as_str() {
                "svmreg" => density_at(Label::Pos, t),
                _ => sigmoid(t),
            };
            csv_out.push_str(&format!("{label},{p}\n"));
        } else {
            csv_out.push_str(&format!("{label}\n"));
        }
    }
    match out {
        Some(path) => crate::report::write_atomic(path, csv_out.as_bytes()),
        None => {
            print!("{csv_out}");
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    study: &str,
    config_path: Option<&Path>,
    n_grid: Option<Vec<usize>>,
    d_grid: Option<Vec<usize>>,
    omega_grid: Option<Vec<f64>>,
    test_size: Option<usize>,
    reps: Option<usize>,
    seed: Option<u64>,
    starts: Option<usize>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let read_config = |path: &Path| -> Result<serde_json::Value, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&raw)
            .map_err(|e| CliError::Data(format!("malformed config {}: {e}", path.display())))
    };

    match study {
        "mse" => {
            let mut cfg = match config_path {
                Some(p) => serde_json::from_value::<MseConfig>(read_config(p)?)
                    .map_err(|e| CliError::Data(format!("bad mse config: {e}")))?,
                None => MseConfig::default(),
            };
            if let Some(v) = n_grid {
                cfg.n_grid = v;
            }
            if let Some(v) = d_grid {
                cfg.d_grid = v;
            }
            if let Some(v) = reps {
                cfg.replications = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = starts {
                cfg.opt.n_starts = v;
            }
            if omega_grid.is_some() || test_size.is_some() {
                return Err(CliError::Usage(
                    "--omega-grid/--test-size apply to the acc study only".into(),
                ));
            }
            let report = run_mse_experiment(&cfg).map_err(CliError::from)?;
            print_mse_table(&report, &cfg);
            emit_simulate_report(&report, cfg.seed, "mse", config_path, out)
        }
        "acc" => {
            let mut cfg = match config_path {
                Some(p) => serde_json::from_value::<AccConfig>(read_config(p)?)
                    .map_err(|e| CliError::Data(format!("bad acc config: {e}")))?,
                None => AccConfig::default(),
            };
            if let Some(v) = n_grid {
                cfg.n_grid = v;
            }
            if let Some(v) = d_grid {
                cfg.d_grid = v;
            }
            if let Some(v) = omega_grid {
                cfg.omega_grid = v;
            }
            if let Some(v) = test_size {
                cfg.test_size = v;
            }
            if let Some(v) = reps {
                cfg.replications = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = starts {
                cfg.opt.n_starts = v;
            }
            let report = run_accuracy_experiment(&cfg).map_err(CliError::from)?;
            print_acc_table(&report, &cfg);
            emit_simulate_report(&report, cfg.seed, "acc", config_path, out)
        }
        other => Err(CliError::Usage(format!("unknown study '{other}' (expected mse or acc)"))),
    }
}

fn emit_simulate_report(
    report: &ExperimentReport,
    seed: u64,
    study: &str,
    config_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let config = json!({
        "study": study,
        "config_file": config_path.map(|p| p.display().to_string()),
    });
    let digest = match config_path {
        Some(p) => Some(file_digest(p)?),
        None => None,
    };
    let manifest = RunManifest::new("simulate", config, seed, digest);
    let wrapped = json!({ "manifest": manifest, "report": report });
    if out.is_some() {
        emit_json(&wrapped, out)?;
    }
    Ok(())
}

fn print_mse_table(report: &ExperimentReport, cfg: &MseConfig) {
    println!("Mean squared errors, {} replications per cell", cfg.replications);
    print!("{:>8}", "n");
    for &d in &cfg.d_grid {
        print!("{:>14}", format!("d={d}"));
    }
    println!();
    for &n in &cfg.n_grid {
        print!("{n:>8}");
        for &d in &cfg.d_grid {
            match report.cell(n, d, "model", "mle") {
                Some(cell) => print!("{:>14.4e}", cell.mean),
                None => print!("{:>14}", "-"),
            }
        }
        println!();
    }
}

fn print_acc_table(report: &ExperimentReport, cfg: &AccConfig) {
    println!("Prediction accuracy, {} replications per cell, mean (sd)", cfg.replications);
    for &omega in &cfg.omega_grid {
        println!("overlap omega = {omega}");
        println!(
            "{:>8} {:>5} {:>18} {:>18} {:>18}",
            "n", "d", "svmreg", "logistic", "svm"
        );
        let scenario = format!("omega={omega}");
        for &n in &cfg.n_grid {
            for &d in &cfg.d_grid {
                print!("{n:>8} {d:>5}");
                for method in ["svmreg", "logistic", "svm"] {
                    match report.cell(n, d, &scenario, method) {
                        Some(cell) => {
                            print!(" {:>10.4} ({:.4})", cell.mean, cell.sd)
                        }
                        None => print!(" {:>18}", "-"),
                    }
                }
                println!();
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_cv(
    input: &Path,
    schema_args: &SchemaArgs,
    k: usize,
    methods: &[String],
    seed: u64,
    starts: usize,
    lambda: Option<f64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if k < 2 {
        return Err(CliError::Usage("--k must be at least 2".into()));
    }
    let schema = to_schema(schema_args);
    let LoadedData { dataset, .. } = load_csv(input, &schema)?;
    let parsed_methods: Vec<Method> = methods
        .iter()
        .map(|m| m.parse::<Method>().map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let partition = kfold_partition(dataset.n(), k, &mut rng).map_err(CliError::from)?;
    let opts = OptOptions { seed, n_starts: starts, ..OptOptions::default() };

    let mut method_reports = Vec::new();
    println!("{k}-fold cross-validated accuracy on n = {} (shared partition)", dataset.n());
    for method in parsed_methods {
        let outcome = kfold_cv_with_partition(&dataset, &partition, method, &opts, lambda)
            .map_err(CliError::from)?;
        for fi in &outcome.excluded_folds {
            eprintln!("warning: fold {fi} excluded for {}: training split lost a label class", method.name());
        }
        println!("{:<10} {:.4} ({:.4})", method.name(), outcome.acc_mean, outcome.acc_sd);
        method_reports.push(CvMethodReport {
            name: method.name().to_string(),
            acc_mean: outcome.acc_mean,
            acc_sd: outcome.acc_sd,
            fold_accuracies: outcome.fold_accuracies,
            excluded_folds: outcome.excluded_folds,
        });
    }

    let config = json!({
        "input": input.display().to_string(),
        "k": k,
        "methods": methods,
        "seed": seed,
        "starts": starts,
        "lambda": lambda,
        "label_col": schema_args.label_col,
        "features": schema_args.features,
    });
    let report = CvReport {
        manifest: RunManifest::new("cv", config, seed, Some(file_digest(input)?)),
        k,
        methods: method_reports,
    };
    if out.is_some() {
        emit_json(&report, out)?;
    }
    Ok(())
}

fn cmd_check(input: &Path, schema_args: &SchemaArgs) -> Result<(), CliError> {
    let schema = to_schema(schema_args);
    let LoadedData { dataset, .. } = load_csv(input, &schema)?;
    let report = check_existence(&dataset);
    println!("both labels present: {}", report.both_labels_present);
    println!("augmented design rank: {} (full rank: {})", report.augmented_rank, report.full_rank);
    println!("opposite-label duplicate pair: {}", report.remark2_pair_found);
    println!("details: {}", report.details);
    emit_json(&report, None)
}
