//! Subcommand implementations: each resolves the configuration, echoes
//! it (with digest) into the output directory, computes, and writes data
//! files atomically (write-then-rename). Output bytes depend only on the
//! resolved configuration, never on worker count or scheduling.

use crate::config::{IdsEstimator, RunConfig};
use qperc_core::enumerate::{finite_cluster_spectrum_capped, molecular_search};
use qperc_core::error::{Error, Result};
use qperc_core::ids::{
    compare_boundary, ids_exhaustion, ids_infinite_cluster, ids_trace_formula, jump_estimate,
    IDSCurve,
};
use qperc_core::lattice::BoxRegion;
use qperc_core::operator::operator_norm_bound;
use qperc_core::spectral::{moment_spectral, walk_moments};
use std::fs;
use std::path::{Path, PathBuf};

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

fn provenance_header(config: &RunConfig, command: &str, extra: Vec<String>) -> Vec<String> {
    let mut header = vec![
        format!("config_digest={}", config.digest()),
        format!("command={command}"),
    ];
    header.extend(extra);
    header
}

/// Echo the fully resolved configuration next to the outputs.
fn emit_resolved(config: &RunConfig) -> Result<()> {
    write_atomic(
        &config.output_path(),
        "resolved_config.txt",
        config.resolved_text().as_bytes(),
    )
}

fn curve_file_name(curve: &IDSCurve) -> String {
    format!("ids_L{}.csv", curve.box_side)
}

fn write_curves(config: &RunConfig, command: &str, curves: &[IDSCurve]) -> Result<Vec<String>> {
    let dir = config.output_path();
    let mut names = Vec::new();
    for curve in curves {
        let mut buf = Vec::new();
        let header = provenance_header(
            config,
            command,
            vec![
                format!("estimator={}", curve.kind.label()),
                format!("box_side={}", curve.box_side),
                format!("realizations={}", curve.realizations),
                format!("normalizer={}", curve.normalizer),
                format!("mass={:.16e}", curve.mass),
            ],
        );
        curve.write_csv(&mut buf, &header)?;
        let name = curve_file_name(curve);
        write_atomic(&dir, &name, &buf)?;
        names.push(name);
    }
    Ok(names)
}

fn gnuplot_hints(config: &RunConfig, stem: &str, files: &[String], ylabel: &str) -> Result<()> {
    if !config.emit_gnuplot {
        return Ok(());
    }
    let mut text = String::new();
    text.push_str("# companion plotting script\n");
    text.push_str(&format!("# config_digest={}\n", config.digest()));
    text.push_str("set datafile separator ','\n");
    text.push_str("set key left top\n");
    text.push_str("set xlabel 'E'\n");
    text.push_str(&format!("set ylabel '{ylabel}'\n"));
    let plots: Vec<String> = files
        .iter()
        .map(|f| format!("'{f}' using 1:2 with steps title '{f}'"))
        .collect();
    text.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    write_atomic(
        &config.output_path(),
        &format!("plot_{stem}.gnuplot"),
        text.as_bytes(),
    )
}

/// `ids`: exhaustion curves over the schedule (plus convergence report),
/// or the ensemble trace-formula curve on the largest box.
pub fn cmd_ids(config: &RunConfig) -> Result<Vec<PathBuf>> {
    emit_resolved(config)?;
    let dir = config.output_path();
    let mut written = vec![dir.join("resolved_config.txt")];
    match config.estimator {
        IdsEstimator::Exhaustion => {
            let cfg = config.configuration()?;
            let schedule = config.schedule()?;
            let files = if config.infinite_cluster {
                let curves = ids_infinite_cluster(
                    &config.graph,
                    &config.kernel,
                    &cfg,
                    &schedule,
                    config.grid_points,
                    config.normalizer,
                )?;
                write_curves(config, "ids", &curves)?
            } else {
                let (curves, report) = ids_exhaustion(
                    &config.graph,
                    &config.kernel,
                    &cfg,
                    &schedule,
                    config.grid_points,
                    config.perturbation_a().as_ref(),
                    config.normalizer,
                )?;
                let mut buf = Vec::new();
                for line in provenance_header(config, "ids", vec![]) {
                    buf.extend_from_slice(format!("# {line}\n").as_bytes());
                }
                report.write_text(&mut buf)?;
                write_atomic(&dir, "convergence.txt", &buf)?;
                written.push(dir.join("convergence.txt"));
                write_curves(config, "ids", &curves)?
            };
            gnuplot_hints(config, "ids", &files, "N(E)")?;
            written.extend(files.iter().map(|f| dir.join(f)));
        }
        IdsEstimator::Trace => {
            let law = config.law()?;
            let side = *config.sizes.last().unwrap();
            let region = BoxRegion::cube(config.graph.dimension(), side);
            let curve = ids_trace_formula(
                &config.graph,
                &config.kernel,
                &law,
                config.realizations,
                &region,
                config.buffer,
                config.grid_points,
                config.normalizer,
            )?;
            let files = write_curves(config, "ids", &[curve])?;
            gnuplot_hints(config, "ids", &files, "N(E)")?;
            written.extend(files.iter().map(|f| dir.join(f)));
        }
    }
    Ok(written)
}

/// `bc-compare`: per-size sup-norm distance between two boundary
/// conditions of the same configuration.
pub fn cmd_bc_compare(config: &RunConfig) -> Result<Vec<PathBuf>> {
    emit_resolved(config)?;
    let cfg = config.configuration()?;
    let schedule = config.schedule()?;
    let table = compare_boundary(
        &config.graph,
        &config.kernel,
        &cfg,
        &schedule,
        config.perturbation_a().as_ref(),
        config.perturbation_b().as_ref(),
        config.grid_points,
        config.normalizer,
    )?;
    let mut buf = String::new();
    for line in provenance_header(
        config,
        "bc-compare",
        vec![
            format!("pert_a={}", config.pert),
            format!("pert_b={}", config.pert_b),
        ],
    ) {
        buf.push_str(&format!("# {line}\n"));
    }
    buf.push_str("box_side,sup_distance\n");
    for (side, dist) in &table {
        buf.push_str(&format!("{side},{dist:.16e}\n"));
    }
    let dir = config.output_path();
    write_atomic(&dir, "bc_table.csv", buf.as_bytes())?;
    Ok(vec![dir.join("resolved_config.txt"), dir.join("bc_table.csv")])
}

/// `moments`: spectral vs closed-walk moments on the largest box.
pub fn cmd_moments(config: &RunConfig) -> Result<Vec<PathBuf>> {
    emit_resolved(config)?;
    let cfg = config.configuration()?;
    let side = *config.sizes.last().unwrap();
    let region = BoxRegion::cube(config.graph.dimension(), side);
    let normalizer = match config.normalizer {
        qperc_core::ids::NormalizerKind::BoxVolume => region.vertex_count(&config.graph),
        qperc_core::ids::NormalizerKind::ActiveCount => {
            qperc_core::percolation::active_vertices(&config.graph, &cfg, &region)
                .len()
                .max(1)
        }
    };
    let pert = config.perturbation_a();
    let op = qperc_core::spectral::box_compression(
        &config.graph,
        &config.kernel,
        &cfg,
        &region,
        pert.as_ref(),
    )?;
    let spectrum = qperc_core::spectral::eigenvalues(&op)?;
    let walks = walk_moments(
        &config.graph,
        &config.kernel,
        &cfg,
        &region,
        config.max_moment,
        pert.as_ref(),
        normalizer,
    )?;
    let bound = operator_norm_bound(&config.kernel, &config.graph);

    let mut buf = String::new();
    for line in provenance_header(
        config,
        "moments",
        vec![
            format!("box_side={side}"),
            format!("normalizer={normalizer}"),
            format!("norm_bound={bound:.16e}"),
        ],
    ) {
        buf.push_str(&format!("# {line}\n"));
    }
    buf.push_str("m,spectral,walks,abs_diff\n");
    for m in 0..=config.max_moment {
        let spectral = moment_spectral(&spectrum, m, normalizer);
        let diff = (spectral - walks[m]).abs();
        // the two routes must agree; a mismatch is an internal error
        if diff > 1e-8 * bound.max(1.0).powi(m as i32) {
            return Err(Error::Invariant(format!(
                "moment identity violated at m={m}: spectral {spectral} vs walks {}",
                walks[m]
            )));
        }
        buf.push_str(&format!(
            "{m},{spectral:.16e},{:.16e},{diff:.16e}\n",
            walks[m]
        ));
    }
    let dir = config.output_path();
    write_atomic(&dir, "moments.csv", buf.as_bytes())?;
    Ok(vec![dir.join("resolved_config.txt"), dir.join("moments.csv")])
}

/// `enumerate`: truncated finite-cluster eigenvalue catalog.
pub fn cmd_enumerate(config: &RunConfig) -> Result<Vec<PathBuf>> {
    emit_resolved(config)?;
    let catalog = finite_cluster_spectrum_capped(
        &config.graph,
        &config.kernel,
        config.max_size,
        config.shape_cap,
    )?;
    let mut buf = Vec::new();
    let header = provenance_header(
        config,
        "enumerate",
        vec![
            format!("max_size={}", config.max_size),
            format!("shape_count={}", catalog.shapes.len()),
            format!("tolerance={:.16e}", catalog.tolerance),
        ],
    );
    catalog.write_csv(&mut buf, &header)?;
    let dir = config.output_path();
    write_atomic(&dir, "sigma_tilde.csv", &buf)?;
    Ok(vec![
        dir.join("resolved_config.txt"),
        dir.join("sigma_tilde.csv"),
    ])
}

/// `jumps`: jump height estimate at the configured energy.
pub fn cmd_jumps(config: &RunConfig) -> Result<Vec<PathBuf>> {
    emit_resolved(config)?;
    let law = config.law()?;
    let schedule = config.schedule()?;
    let estimate = jump_estimate(
        &config.graph,
        &config.kernel,
        &law,
        config.energy,
        config.realizations,
        &schedule,
        config.normalizer,
    )?;
    let mut buf = String::new();
    for line in provenance_header(
        config,
        "jumps",
        vec![
            format!("energy={:.16e}", estimate.energy),
            format!("height={:.16e}", estimate.height),
            format!("stderr={:.16e}", estimate.stderr),
            format!("present={}", estimate.present),
        ],
    ) {
        buf.push_str(&format!("# {line}\n"));
    }
    buf.push_str("box_side,mean,stderr\n");
    for (side, mean, stderr) in &estimate.per_size {
        buf.push_str(&format!("{side},{mean:.16e},{stderr:.16e}\n"));
    }
    let dir = config.output_path();
    write_atomic(&dir, "jumps.csv", buf.as_bytes())?;
    Ok(vec![dir.join("resolved_config.txt"), dir.join("jumps.csv")])
}

/// `molecular`: compactly supported eigenstates at the configured energy
/// inside the largest box, with vector dumps.
pub fn cmd_molecular(config: &RunConfig) -> Result<Vec<PathBuf>> {
    emit_resolved(config)?;
    let cfg = config.configuration()?;
    let side = *config.sizes.last().unwrap();
    let region = BoxRegion::cube(config.graph.dimension(), side);
    let tau = if config.tau_res > 0.0 {
        Some(config.tau_res)
    } else {
        None
    };
    let states = molecular_search(
        &config.graph,
        &config.kernel,
        &cfg,
        &region,
        config.energy,
        tau,
    )?;

    let dir = config.output_path();
    let mut written = vec![dir.join("resolved_config.txt")];
    let mut report = String::new();
    for line in provenance_header(
        config,
        "molecular",
        vec![
            format!("energy={:.16e}", config.energy),
            format!("box_side={side}"),
            format!("states={}", states.len()),
        ],
    ) {
        report.push_str(&format!("# {line}\n"));
    }
    for (i, state) in states.iter().enumerate() {
        report.push_str(&format!(
            "state {i}: energy={:.16e} support={} diameter={} residual={:.16e} tolerance={:.16e}\n",
            state.energy,
            state.support_size(),
            state.diameter,
            state.residual,
            state.tolerance
        ));
        let mut dump = String::new();
        dump.push_str(&format!(
            "# config_digest={} state={i} energy={:.16e}\n",
            config.digest(),
            state.energy
        ));
        dump.push_str("orbit");
        for axis in 0..config.graph.dimension() {
            dump.push_str(&format!(",c{axis}"));
        }
        dump.push_str(",value\n");
        for (v, x) in &state.support {
            dump.push_str(&v.orbit.to_string());
            for c in &v.cell {
                dump.push_str(&format!(",{c}"));
            }
            dump.push_str(&format!(",{x:.16e}\n"));
        }
        let name = format!("molecular_state_{i}.csv");
        write_atomic(&dir, &name, dump.as_bytes())?;
        written.push(dir.join(name));
    }
    write_atomic(&dir, "molecular_states.txt", report.as_bytes())?;
    written.push(dir.join("molecular_states.txt"));
    Ok(written)
}
