//! Stage implementations behind the subcommands. Each stage reads its
//! upstream artifacts from the output directory and writes versioned JSON
//! plus CSV tables, so a pipeline can be resumed or partially rerun.

use std::path::{Path, PathBuf};

use strata_core::bootstrap::{bootstrap_run, inclusion_screen, write_summary_csv, BootstrapConfig};
use strata_core::dataset::{load_csv, load_schema, Dataset, VariableSchema};
use strata_core::design::build_design;
use strata_core::effects::{effect_table, interpret};
use strata_core::error::{Error, Result};
use strata_core::glasso::{cv_select, CvConfig, CvLoss, SolveOptions};
use strata_core::gower::{gower_dissimilarity, gower_to_rows};
use strata_core::pam::pam_fit;
use strata_core::stability::{stability_curve_on_matrix, StabilityConfig};
use strata_core::synth::{generate, write_csv as write_synth_csv, SyntheticSpec};

use crate::artifacts::{
    read_json, schema_fingerprint, write_csv_with_sidecar, write_json, BootstrapArtifact,
    EffectsArtifact, FitArtifact, Meta, PartitionArtifact, PathPointSummary, StabilityArtifact,
};
use crate::config::RunConfig;

fn load_inputs(cfg: &RunConfig) -> Result<(Vec<VariableSchema>, Dataset<f64>)> {
    let schema = load_schema(&cfg.schema)?;
    let ds = load_csv::<f64>(&cfg.input, &schema)?;
    Ok((schema, ds))
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out.join(name)
}

pub fn cmd_synthesize(spec_path: &Path, out: &Path, seed: u64) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| Error::invalid(format!("cannot read spec {}: {e}", spec_path.display())))?;
    let spec: SyntheticSpec = toml::from_str(&text)
        .map_err(|e| Error::invalid(format!("spec parse error: {e}")))?;
    let (ds, labels) = generate::<f64>(&spec, seed)?;

    std::fs::create_dir_all(out)?;
    let data_path = out.join("data.csv");
    let mut buf = Vec::new();
    write_synth_csv(&ds, Some(&labels), &mut buf)?;
    std::fs::write(&data_path, &buf)?;
    write_json(&out.join("schema.json"), &spec.schema())?;
    write_json(
        &out.join("truth.json"),
        &serde_json::json!({
            "seed": seed,
            "spec": spec,
            "true_labels": labels,
            "true_params": spec.true_params::<f64>(),
        }),
    )?;
    println!(
        "synthesize: wrote {} rows to {}",
        ds.n(),
        data_path.display()
    );
    Ok(())
}

pub fn cmd_cluster(cfg: &RunConfig, k_flag: Option<usize>) -> Result<()> {
    let (schema, ds) = load_inputs(cfg)?;
    let m = gower_dissimilarity(&ds, cfg.cluster.include_outcome)?;

    let k = match k_flag.or(cfg.cluster.k) {
        Some(k) => k,
        None => {
            let stab: StabilityArtifact =
                read_json(&out_path(cfg, "stability.json"), "stability")?;
            stab.report.k_star
        }
    };
    let part = pam_fit(&m, k, cfg.cluster.restarts, cfg.seed)?;

    let medoid_cont: Vec<Vec<f64>> = part
        .medoids
        .iter()
        .map(|&i| (0..ds.q()).map(|j| ds.continuous_col(j)[i]).collect())
        .collect();
    let medoid_cat: Vec<Vec<u32>> = part
        .medoids
        .iter()
        .map(|&i| (ds.q()..ds.p()).map(|j| ds.categorical_col(j)[i]).collect())
        .collect();

    let meta = Meta::new(cfg.seed, &cfg.hash());
    if cfg.cluster.dump_gower {
        write_csv_with_sidecar(&out_path(cfg, "gower.csv"), &meta, |w| m.write_csv(w))?;
    }
    let artifact = PartitionArtifact {
        meta,
        include_outcome: cfg.cluster.include_outcome,
        partition: part,
        medoid_cont,
        medoid_cat,
        gower_ranges: m.ranges.clone(),
        schema_fingerprint: schema_fingerprint(&schema),
    };
    write_json(&out_path(cfg, "partition.json"), &artifact)?;
    println!(
        "cluster: k = {}, energy = {:.6}, medoids = {:?}",
        artifact.partition.k, artifact.partition.energy, artifact.partition.medoids
    );
    Ok(())
}

pub fn cmd_stability(cfg: &RunConfig) -> Result<()> {
    let (_, ds) = load_inputs(cfg)?;
    let m = gower_dissimilarity(&ds, cfg.cluster.include_outcome)?;
    let stab_cfg = StabilityConfig {
        k_min: cfg.stability.k_min,
        k_max: cfg.stability.k_max,
        replicates: cfg.stability.replicates,
        restarts_original: cfg.stability.restarts_original,
        restarts_bootstrap: cfg.stability.restarts_bootstrap,
        include_outcome: cfg.cluster.include_outcome,
        seed: cfg.seed,
    };
    let report = stability_curve_on_matrix(&m, &stab_cfg)?;
    let meta = Meta::new(cfg.seed, &cfg.hash());
    write_csv_with_sidecar(&out_path(cfg, "stability_curve.csv"), &meta, |w| {
        report.write_curve_csv(w)
    })?;
    write_csv_with_sidecar(&out_path(cfg, "energy_curve.csv"), &meta, |w| {
        report.write_energy_csv(w)
    })?;
    println!(
        "stability: k* = {} (worst-case Jaccard over k = {}..{})",
        report.k_star, report.k_min, report.k_max
    );
    let artifact = StabilityArtifact { meta, report };
    write_json(&out_path(cfg, "stability.json"), &artifact)?;
    Ok(())
}

fn cv_config(cfg: &RunConfig, grid_size: usize, repeats: usize, heuristic: Option<usize>) -> CvConfig<f64> {
    CvConfig {
        grid_size,
        lambda_min_ratio: cfg.fit.lambda_min_ratio,
        folds: cfg.fit.folds,
        repeats,
        seed: cfg.seed,
        heuristic_max_interactions: heuristic,
        loss: if cfg.fit.loss == "misclassification" {
            CvLoss::Misclassification
        } else {
            CvLoss::Deviance
        },
        solve: SolveOptions {
            tol: cfg.fit.tol,
            max_iter: cfg.fit.max_iter,
            lipschitz: None,
        },
    }
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let (schema, ds) = load_inputs(cfg)?;
    let part: PartitionArtifact = read_json(&out_path(cfg, "partition.json"), "cluster")?;
    if part.partition.labels.len() != ds.n() {
        return Err(Error::data(format!(
            "partition has {} rows but the dataset has {}",
            part.partition.labels.len(),
            ds.n()
        )));
    }
    if part.schema_fingerprint != schema_fingerprint(&schema) {
        return Err(Error::data(
            "schema changed since the partition artifact was written",
        ));
    }
    let (ds_std, std_report) = ds.standardize_continuous()?;
    let design = build_design(&ds_std, &part.partition.labels, part.partition.k)?;
    let cv_cfg = cv_config(
        cfg,
        cfg.fit.grid_size,
        cfg.fit.repeats,
        cfg.fit.heuristic_max_interactions,
    );
    let (cv, path) = cv_select(&design, ds_std.outcome(), &cv_cfg)?;
    let params = path.params_at(cv.lambda_cv_index, &design)?;
    let params_heuristic = match cv.heuristic_index {
        Some(idx) => Some(path.params_at(idx, &design)?),
        None => None,
    };
    let path_summary: Vec<PathPointSummary> = path
        .points
        .iter()
        .map(|p| PathPointSummary {
            lambda: p.lambda,
            deviance: p.deviance,
            converged: p.converged,
            iterations: p.iterations,
            active_mains: p.active_mains,
            active_interactions: p.active_interactions,
        })
        .collect();

    let meta = Meta::new(cfg.seed, &cfg.hash());
    write_csv_with_sidecar(&out_path(cfg, "cv_curve.csv"), &meta, |w| {
        cv.write_curve_csv(w)
    })?;
    println!(
        "fit: lambda_cv = {:.6e} (grid index {}), actives: {} mains / {} interactions",
        cv.lambda_cv,
        cv.lambda_cv_index,
        path.points[cv.lambda_cv_index].active_mains,
        path.points[cv.lambda_cv_index].active_interactions,
    );
    if let Some(h) = cv.heuristic_lambda {
        println!("fit: heuristic lambda = {h:.6e}");
    }
    let artifact = FitArtifact {
        meta,
        k: part.partition.k,
        cv,
        path_summary,
        params,
        params_heuristic,
        standardization: std_report,
        schema_fingerprint: schema_fingerprint(&schema),
    };
    write_json(&out_path(cfg, "fit.json"), &artifact)?;
    Ok(())
}

pub fn cmd_effects(cfg: &RunConfig) -> Result<()> {
    let (schema, ds) = load_inputs(cfg)?;
    let fit: FitArtifact = read_json(&out_path(cfg, "fit.json"), "fit")?;
    if fit.schema_fingerprint != schema_fingerprint(&schema) {
        return Err(Error::data("schema changed since the fit artifact was written"));
    }
    let table = effect_table(
        &fit.params,
        ds.features(),
        Some(&fit.standardization),
        cfg.effects.standardized_units,
    )?;
    let mut interpretations = Vec::new();
    for e in &table.effects {
        if e.interaction_active {
            for s in 1..table.k {
                interpretations.push(interpret(e, s));
            }
        }
    }
    let meta = Meta::new(cfg.seed, &cfg.hash());
    write_csv_with_sidecar(&out_path(cfg, "effects.csv"), &meta, |w| table.write_csv(w))?;
    println!("effects: {} rows", table.effects.len());
    for line in &interpretations {
        println!("  {line}");
    }
    let artifact = EffectsArtifact {
        meta,
        table,
        interpretations,
    };
    write_json(&out_path(cfg, "effects.json"), &artifact)?;
    Ok(())
}

pub fn cmd_bootstrap(cfg: &RunConfig) -> Result<()> {
    let (_, ds) = load_inputs(cfg)?;
    let part: PartitionArtifact = read_json(&out_path(cfg, "partition.json"), "cluster")?;
    let fit: FitArtifact = read_json(&out_path(cfg, "fit.json"), "fit")?;

    let grid = cfg.bootstrap.grid_size.unwrap_or(cfg.fit.grid_size);
    let boot_cfg = BootstrapConfig {
        replicates: cfg.bootstrap.replicates,
        alpha: cfg.bootstrap.alpha,
        seed: cfg.seed,
        cv: cv_config(cfg, grid, cfg.bootstrap.cv_repeats, None),
        max_redraws: 100,
        recluster_per_replicate: cfg.bootstrap.recluster_per_replicate,
        recluster_restarts: cfg.stability.restarts_bootstrap,
    };
    let matrix = if cfg.bootstrap.recluster_per_replicate {
        Some(gower_dissimilarity(&ds, part.include_outcome)?)
    } else {
        None
    };
    let run = bootstrap_run(
        &ds,
        &part.partition.labels,
        part.partition.k,
        &fit.params,
        &fit.standardization,
        &boot_cfg,
        matrix.as_ref(),
    )?;
    let screen = inclusion_screen(&run.summary, cfg.bootstrap.inclusion_threshold)?;

    let meta = Meta::new(cfg.seed, &cfg.hash());
    write_csv_with_sidecar(&out_path(cfg, "bootstrap.csv"), &meta, |w| {
        write_summary_csv(&run.summary, w)
    })?;
    if cfg.bootstrap.write_replicates {
        write_csv_with_sidecar(&out_path(cfg, "bootstrap_replicates.csv"), &meta, |w| {
            run.write_replicates_csv(w)
        })?;
    }
    println!(
        "bootstrap: {} of {} replicates used ({} non-converged, {} failed, {} redraws)",
        run.summary.replicates_used,
        run.summary.replicates_requested,
        run.summary.excluded_nonconverged,
        run.summary.excluded_failed,
        run.summary.single_class_redraws,
    );
    let significant = run.summary.quantities.iter().filter(|q| q.significant).count();
    println!(
        "bootstrap: {significant} of {} quantities significant at alpha = {}",
        run.summary.quantities.len(),
        run.summary.alpha
    );
    let artifact = BootstrapArtifact {
        meta,
        summary: run.summary,
        screen,
    };
    write_json(&out_path(cfg, "bootstrap.json"), &artifact)?;
    Ok(())
}

pub fn cmd_predict(cfg: &RunConfig, rows: &Path, output: Option<&Path>) -> Result<()> {
    let schema = load_schema(&cfg.schema)?;
    let part: PartitionArtifact = read_json(&out_path(cfg, "partition.json"), "cluster")?;
    let fit: FitArtifact = read_json(&out_path(cfg, "fit.json"), "fit")?;
    let fp = schema_fingerprint(&schema);
    if part.schema_fingerprint != fp || fit.schema_fingerprint != fp {
        return Err(Error::data("schema does not match the stored artifacts"));
    }

    // Canonical feature order: continuous first, matching the training
    // dataset layout.
    let mut features: Vec<&VariableSchema> = schema
        .iter()
        .filter(|v| {
            v.role == strata_core::dataset::Role::Feature
                && v.kind == strata_core::dataset::VarKind::Continuous
        })
        .collect();
    let q = features.len();
    features.extend(schema.iter().filter(|v| {
        v.role == strata_core::dataset::Role::Feature
            && v.kind == strata_core::dataset::VarKind::Categorical
    }));

    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(rows)?;
    let headers = rdr.headers()?.clone();
    let cols: Vec<usize> = features
        .iter()
        .map(|f| {
            headers
                .iter()
                .position(|h| h == f.name)
                .ok_or_else(|| Error::data(format!("unknown column '{}' in prediction input", f.name)))
        })
        .collect::<Result<_>>()?;

    let mut out_lines = vec!["row,cluster,probability,status".to_string()];
    let mut scored = 0usize;
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let mut cont: Vec<f64> = Vec::with_capacity(q);
        let mut cat: Vec<u32> = Vec::with_capacity(features.len() - q);
        let mut status: Option<String> = None;
        for (j, f) in features.iter().enumerate() {
            let raw = record.get(cols[j]).unwrap_or("").trim();
            if raw.is_empty() {
                status = Some(format!("missing value for '{}'", f.name));
                break;
            }
            if j < q {
                match raw.parse::<f64>() {
                    Ok(v) => cont.push(v),
                    Err(_) => {
                        status = Some(format!("cannot parse '{raw}' for '{}'", f.name));
                        break;
                    }
                }
            } else {
                match f.levels.iter().position(|l| l == raw) {
                    Some(a) => cat.push(a as u32),
                    None => {
                        status = Some(format!("unseen level '{raw}' for '{}'", f.name));
                        break;
                    }
                }
            }
        }
        if let Some(msg) = status {
            out_lines.push(format!("{row_idx},,,flagged: {msg}"));
            continue;
        }
        // Cluster from raw values against the stored medoids, then the
        // outcome probability from the standardized fit.
        let dists = gower_to_rows(
            &cont,
            &cat,
            &part.medoid_cont,
            &part.medoid_cat,
            &part.gower_ranges,
        )?;
        let cluster = part.partition.assign_from_medoid_dists(&dists);
        let std_cont: Vec<f64> = cont
            .iter()
            .enumerate()
            .map(|(j, &v)| (v - fit.standardization.center[j]) / fit.standardization.scale[j])
            .collect();
        let prob = fit.params.probability(&std_cont, &cat, cluster);
        out_lines.push(format!("{row_idx},{cluster},{prob},ok"));
        scored += 1;
    }

    let out_file = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out_path(cfg, "predictions.csv"));
    let meta = Meta::new(cfg.seed, &cfg.hash());
    write_csv_with_sidecar(&out_file, &meta, |w| {
        use std::io::Write;
        for line in &out_lines {
            writeln!(w, "{line}")?;
        }
        Ok(())
    })?;
    println!(
        "predict: scored {scored} of {} rows -> {}",
        out_lines.len() - 1,
        out_file.display()
    );
    Ok(())
}

pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let mut lines: Vec<String> = Vec::new();
    lines.push("run report".to_string());
    lines.push(format!("seed: {}", cfg.seed));

    if let Ok(stab) = read_json::<StabilityArtifact>(&out_path(cfg, "stability.json"), "stability")
    {
        lines.push(String::new());
        lines.push(format!(
            "stability: k* = {} over k = {}..{} ({} replicates)",
            stab.report.k_star, stab.report.k_min, stab.report.k_max, stab.report.replicates
        ));
        for s in &stab.report.worst_case {
            match s.value {
                Some(v) => lines.push(format!("  k = {}: worst-case Jaccard {v:.4}", s.k)),
                None => lines.push(format!("  k = {}: no usable replicate", s.k)),
            }
        }
    }

    if let Ok(part) = read_json::<PartitionArtifact>(&out_path(cfg, "partition.json"), "cluster") {
        let mut sizes = vec![0usize; part.partition.k];
        for &l in &part.partition.labels {
            sizes[l as usize] += 1;
        }
        lines.push(String::new());
        lines.push(format!(
            "partition: k = {}, energy = {:.6}, sizes = {:?}",
            part.partition.k, part.partition.energy, sizes
        ));
    }

    if let Ok(fit) = read_json::<FitArtifact>(&out_path(cfg, "fit.json"), "fit") {
        lines.push(String::new());
        lines.push(format!(
            "fit: lambda_cv = {:.6e}, best repeat {} of {}",
            fit.cv.lambda_cv,
            fit.cv.best_repeat + 1,
            fit.cv.repeats
        ));
        let pt = &fit.path_summary[fit.cv.lambda_cv_index];
        lines.push(format!(
            "  active mains: {}, active interactions: {}, deviance {:.4}",
            pt.active_mains, pt.active_interactions, pt.deviance
        ));
    }

    if let Ok(eff) = read_json::<EffectsArtifact>(&out_path(cfg, "effects.json"), "effects") {
        lines.push(String::new());
        lines.push("effects (point estimates):".to_string());
        for e in &eff.table.effects {
            let ors: Vec<String> = e
                .or_by_cluster
                .iter()
                .map(|o| match o {
                    Some(v) => format!("{v:.4}"),
                    None => "NA".into(),
                })
                .collect();
            lines.push(format!(
                "  {} ({}): OR by cluster = [{}]",
                e.variable,
                e.level_label,
                ors.join(", ")
            ));
        }
        for i in &eff.interpretations {
            lines.push(format!("  {i}"));
        }
    }

    if let Ok(boot) = read_json::<BootstrapArtifact>(&out_path(cfg, "bootstrap.json"), "bootstrap")
    {
        lines.push(String::new());
        lines.push(format!(
            "bootstrap: {} replicates used, alpha = {}",
            boot.summary.replicates_used, boot.summary.alpha
        ));
        lines.push(format!(
            "  retained mains: {:?}; retained interactions: {:?} (zero-proportion < {})",
            boot.screen.retained_mains, boot.screen.retained_interactions, boot.screen.threshold
        ));
        lines.push("  significant quantities (interval excludes 1):".to_string());
        for qy in boot.summary.quantities.iter().filter(|q| q.significant) {
            lines.push(format!(
                "    {} ({}) {:?} cluster {}: {:.4} [{:.4}, {:.4}]",
                qy.variable, qy.level_label, qy.kind, qy.cluster, qy.mean, qy.lower, qy.upper
            ));
        }
    }

    let text = lines.join("\n") + "\n";
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(out_path(cfg, "report.txt"), &text)?;
    print!("{text}");
    Ok(())
}
