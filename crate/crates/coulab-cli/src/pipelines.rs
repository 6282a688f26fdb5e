//! One function per pipeline; each writes its files and returns a JSON summary.

use coulomb_lab::diagnostics::{bond_order_psi6, density_profile, fluctuation_tails, micro_radius};
use coulomb_lab::equilibrium::{
    mf_energy, mf_free_energy, solve_equilibrium_obstacle_with, solve_equilibrium_radial, solve_mu_beta_with,
    EquilibriumMeasure,
};
use coulomb_lab::grid::Grid;
use coulomb_lab::io::{self, fmt_f64};
use coulomb_lab::jellium::{epstein_zeta, lattice_energy, Lattice};
use coulomb_lab::sampler::{
    find_ground_state, free_energy, free_energy_lower_bound, free_energy_upper_bound, sample_gibbs, sample_iid,
    tile_configuration, Chain, ChainCheckpoint, GibbsOptions,
};
use coulomb_lab::{Configuration, Dimension, PowerPotential};
use serde_json::{json, Value};

use crate::output::Outputs;
use crate::spec::{Method, Pipeline, RunSpec};
use crate::CliError;

pub fn execute(pipeline: Pipeline, spec: &RunSpec, out: &mut Outputs) -> Result<Value, CliError> {
    match pipeline {
        Pipeline::Equilibrium => equilibrium(spec, out),
        Pipeline::GroundState => ground_state(spec, out),
        Pipeline::Gibbs => gibbs(spec, out),
        Pipeline::FreeEnergy => free_energy_pipeline(spec, out),
        Pipeline::Tile => tile(spec, out),
        Pipeline::Jellium => jellium(spec, out),
        Pipeline::Diagnostics => diagnostics(spec, out),
    }
}

fn setup(spec: &RunSpec) -> Result<(Dimension, PowerPotential), CliError> {
    let dim = spec.dimension()?;
    Ok((dim, spec.potential(dim)?))
}

fn user_grid(spec: &RunSpec, dim: Dimension, v: &PowerPotential) -> Result<Option<Grid>, CliError> {
    spec.grid
        .as_ref()
        .map(|g| Grid::cube(dim, &v.center, g.half_width, g.h).map_err(|e| CliError::Spec(format!("field `grid`: {e}"))))
        .transpose()
}

fn mu0_of(spec: &RunSpec, dim: Dimension, v: &PowerPotential) -> Result<EquilibriumMeasure, CliError> {
    let eq = spec.equilibrium.clone().unwrap_or_default();
    match eq.method {
        Method::Radial => Ok(solve_equilibrium_radial(v, dim)?),
        Method::Obstacle => {
            let grid = user_grid(spec, dim, v)?
                .ok_or_else(|| CliError::Spec("field `grid` is required by `equilibrium.method = obstacle`".into()))?;
            Ok(solve_equilibrium_obstacle_with(v, &grid, eq.tol.unwrap_or(1e-10), &eq.obstacle)?)
        }
    }
}

/// Grid for `mu_beta`: the support widened by the thermal length, 64 cells per half-width.
fn thermal_grid(mu0: &EquilibriumMeasure, v: &PowerPotential, n: usize, beta: f64) -> Result<Grid, CliError> {
    let r = mu0.support_radius().unwrap_or(1.0);
    let hw = r * (1.0 + 4.0 / (n as f64 * beta).sqrt());
    Ok(Grid::cube(mu0.dim(), &v.center, hw, hw / 64.0)?)
}

fn equilibrium(spec: &RunSpec, out: &mut Outputs) -> Result<Value, CliError> {
    let (dim, v) = setup(spec)?;
    let mu0 = mu0_of(spec, dim, &v)?;
    out.measure("measure.csv", &mu0)?;
    let mut summary = json!({
        "energy": mf_energy(&mu0, &v)?,
        "robin_constant": mu0.robin_constant,
        "support_radius": mu0.support_radius(),
        "mass": mu0.mass(),
    });
    if let (Some(_), Some(_)) = (spec.n, spec.beta) {
        let (n, beta) = (spec.n()?, spec.beta()?);
        let opts = spec.equilibrium.as_ref().and_then(|e| e.mu_beta.clone()).unwrap_or_default();
        let grid = match user_grid(spec, dim, &v)? {
            Some(g) => g,
            None => thermal_grid(&mu0, &v, n, beta)?,
        };
        let mu = solve_mu_beta_with(&v, n, beta, &grid, &opts, None)?;
        out.measure("mu_beta.csv", &mu)?;
        summary["mu_beta"] = json!({
            "free_energy": mf_free_energy(&mu, &v, n, beta)?,
            "robin_constant": mu.robin_constant,
            "iterations": mu.report.iterations,
        });
    }
    Ok(summary)
}

fn ground_state(spec: &RunSpec, out: &mut Outputs) -> Result<Value, CliError> {
    let (dim, v) = setup(spec)?;
    let n = spec.n()?;
    let mu0 = mu0_of(spec, dim, &v)?;
    let schedule = spec.schedule.clone().unwrap_or_default();
    let gs = find_ground_state(n, &v, &mu0, &schedule, spec.seed())?;
    out.configuration("configuration.csv", &gs.config)?;
    let rows: Vec<Vec<String>> =
        gs.restart_energies.iter().enumerate().map(|(r, e)| vec![r.to_string(), fmt_f64(*e)]).collect();
    out.table("restarts.csv", &["restart", "energy"], &rows)?;
    let nf = n as f64;
    let log_term = match dim {
        Dimension::Two => 0.5 * nf * nf.ln(),
        Dimension::Three => 0.0,
    };
    let scale = match dim {
        Dimension::Two => nf,
        Dimension::Three => nf.powf(4.0 / 3.0),
    };
    Ok(json!({
        "energy": gs.energy,
        "next_order": (gs.energy - nf * nf * mf_energy(&mu0, &v)? + log_term) / scale,
        "grad_inf": gs.grad_inf,
        "grad_tol": gs.grad_tol,
        "converged": gs.converged,
        "best_restart": gs.best_restart,
    }))
}

fn gibbs(spec: &RunSpec, out: &mut Outputs) -> Result<Value, CliError> {
    let (dim, v) = setup(spec)?;
    let g = spec.gibbs.clone().unwrap_or_default();
    let seed = spec.seed();
    let (mut chain, burn_in) = match &g.resume {
        Some(path) => {
            let cp: ChainCheckpoint = io::load_json(path)?;
            (Chain::from_checkpoint(cp, &v)?, 0)
        }
        None => {
            let (n, beta) = (spec.n()?, spec.beta()?);
            let mu0 = mu0_of(spec, dim, &v)?;
            (Chain::new(sample_iid(&mu0, n, seed, 0)?, &v, beta, seed, 0)?, g.burn_in)
        }
    };
    let run = sample_gibbs(&mut chain, &v, &GibbsOptions { burn_in, samples: g.samples, thin: g.thin })?;
    let rows: Vec<Vec<String>> =
        run.energies.iter().enumerate().map(|(k, e)| vec![k.to_string(), fmt_f64(*e)]).collect();
    out.table("energies.csv", &["sample", "energy"], &rows)?;
    if g.dump_stride > 0 {
        for (k, c) in run.samples.iter().enumerate().step_by(g.dump_stride) {
            out.configuration(&format!("samples/sample_{k:06}.csv"), c)?;
        }
    }
    out.json("checkpoint.json", &chain.checkpoint())?;
    let mean = run.energies.iter().sum::<f64>() / run.energies.len().max(1) as f64;
    Ok(json!({
        "n": chain.n(),
        "beta": chain.beta,
        "mean_energy": mean,
        "thin": run.thin,
        "acceptance": run.acceptance,
        "step": run.step,
        "autocorrelation_time": if run.autocorrelation_time.is_finite() { json!(run.autocorrelation_time) } else { Value::Null },
        "resumed": g.resume.is_some(),
    }))
}

fn free_energy_pipeline(spec: &RunSpec, out: &mut Outputs) -> Result<Value, CliError> {
    let (dim, v) = setup(spec)?;
    let (n, beta) = (spec.n()?, spec.beta()?);
    let mut protocol = spec.free_energy.clone().unwrap_or_default();
    protocol.seed = spec.seed();
    let est = free_energy(n, dim, &v, beta, &protocol)?;
    out.records("nodes.csv", &est.nodes)?;
    let mu0 = solve_equilibrium_radial(&v, dim)?;
    let (lower, ell) = free_energy_lower_bound(n, beta, &mu0, &v)?;
    let grid = thermal_grid(&mu0, &v, n, beta)?;
    let (upper, _) = free_energy_upper_bound(n, beta, &v, &grid)?;
    Ok(json!({
        "free_energy": est.value,
        "error": est.error,
        "f0": est.f0,
        "flagged": est.flagged,
        "lower_bound": lower,
        "smearing_length": ell,
        "upper_bound": upper,
        "seed": protocol.seed,
    }))
}

fn tile(spec: &RunSpec, out: &mut Outputs) -> Result<Value, CliError> {
    let (dim, v) = setup(spec)?;
    let n = spec.n()?;
    let mu0 = mu0_of(spec, dim, &v)?;
    let r_cell = spec.tile.as_ref().and_then(|t| t.cell_radius);
    let t = tile_configuration(&mu0, n, r_cell, spec.seed())?;
    out.configuration("configuration.csv", &t.config)?;
    let d = dim.get();
    let mut header: Vec<String> = (0..d).map(|k| format!("lo{k}")).collect();
    header.extend((0..d).map(|k| format!("hi{k}")));
    header.push("count".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = t
        .cells
        .iter()
        .map(|(lo, hi, c)| lo.iter().chain(hi).map(|x| fmt_f64(*x)).chain([c.to_string()]).collect())
        .collect();
    out.table("cells.csv", &header, &rows)?;
    Ok(json!({
        "n": t.config.n(),
        "cells": t.cells.len(),
        "boundary_points": t.boundary_points,
        "r0": t.r0,
        "cell_radius": t.cell_radius,
        "min_separation": t.config.min_separation().map(|s| s.0),
    }))
}

fn catalog_lattice(name: &str) -> Option<Lattice> {
    Some(match name {
        "triangular" => Lattice::triangular(),
        "square" => Lattice::square(),
        "rhombic45" => Lattice::rhombic(45.0),
        "sc" => Lattice::simple_cubic(),
        "bcc" => Lattice::bcc(),
        "fcc" => Lattice::fcc(),
        _ => return None,
    })
}

fn jellium(spec: &RunSpec, out: &mut Outputs) -> Result<Value, CliError> {
    let j = spec.jellium.clone().unwrap_or_default();
    if !(j.density > 0.0 && j.density.is_finite()) {
        return Err(CliError::Spec(format!("field `jellium.density` must be positive, got {}", j.density)));
    }
    let mut lattices = Vec::new();
    if j.lattices.is_empty() && j.custom.is_empty() {
        lattices = Lattice::catalog(spec.dimension()?);
    }
    for name in &j.lattices {
        lattices.push(
            catalog_lattice(name).ok_or_else(|| CliError::Spec(format!("field `jellium.lattices`: unknown lattice {name:?}")))?,
        );
    }
    for l in &j.custom {
        l.validate().map_err(|e| CliError::Spec(format!("field `jellium.custom`: {e}")))?;
        lattices.push(l.clone());
    }
    let mut energies = Vec::new();
    let mut zetas = Vec::new();
    let mut best: Option<(String, f64)> = None;
    for l in &lattices {
        let lat = l.with_density(j.density);
        let w = lattice_energy(&lat, j.tol)?;
        energies.push(vec![l.name.clone(), l.d().to_string(), fmt_f64(j.density), fmt_f64(w)]);
        if best.as_ref().map_or(true, |(_, b)| w < *b) {
            best = Some((l.name.clone(), w));
        }
        for &s in &j.zeta_s {
            zetas.push(vec![l.name.clone(), fmt_f64(s), fmt_f64(epstein_zeta(&lat, s, j.tol)?)]);
        }
    }
    out.table("energies.csv", &["lattice", "dimension", "density", "energy"], &energies)?;
    out.table("zeta.csv", &["lattice", "s", "zeta"], &zetas)?;
    Ok(json!({ "lattices": lattices.len(), "minimum": best.map(|(n, w)| json!({ "lattice": n, "energy": w })) }))
}

fn diagnostics(spec: &RunSpec, out: &mut Outputs) -> Result<Value, CliError> {
    let (dim, v) = setup(spec)?;
    let ds = spec.diagnostics.clone().unwrap_or_default();
    let mu0 = mu0_of(spec, dim, &v)?;
    let seed = spec.seed();
    let samples: Vec<Configuration> = if ds.configurations.is_empty() {
        let n = spec.n()?;
        (0..ds.iid_samples).map(|k| sample_iid(&mu0, n, seed, k as u64)).collect::<Result<_, _>>()?
    } else {
        ds.configurations.iter().map(|p| io::load_configuration(p)).collect::<Result<_, _>>()?
    };
    let Some(first) = samples.first() else {
        return Err(CliError::Spec("field `diagnostics.iid_samples` must be positive".into()));
    };
    let n = first.n();
    let radii = if ds.radii.is_empty() { vec![micro_radius(n, dim)] } else { ds.radii.clone() };
    let tails = fluctuation_tails(&samples, &mu0, &radii, &ds.lambdas, seed)?;
    out.records("tails.csv", &tails.rows)?;
    let d = dim.get();
    let rows: Vec<Vec<String>> = tails
        .samples
        .iter()
        .map(|s| s.center.iter().map(|x| fmt_f64(*x)).chain([fmt_f64(s.radius), fmt_f64(s.value)]).collect())
        .collect();
    let mut header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    header.extend(["radius".into(), "discrepancy".into()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.table("discrepancies.csv", &header, &rows)?;

    let r = mu0.support_radius().unwrap_or(1.0);
    let grid = Grid::cube(dim, &v.center, 1.2 * r, ds.profile_h)
        .map_err(|e| CliError::Spec(format!("field `diagnostics.profile_h`: {e}")))?;
    let profile = density_profile(&samples, &mu0, &grid)?;
    let rows: Vec<Vec<String>> = profile
        .gaps
        .iter()
        .map(|g| {
            g.bump.center.iter().map(|x| fmt_f64(*x)).chain([fmt_f64(g.bump.scale), fmt_f64(g.raw), fmt_f64(g.normalized)]).collect()
        })
        .collect();
    let mut header: Vec<String> = (0..d).map(|k| format!("c{k}")).collect();
    header.extend(["scale".into(), "raw".into(), "normalized".into()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.table("profile.csv", &header, &rows)?;

    let mut summary = json!({
        "samples": samples.len(),
        "n": n,
        "wide_intervals": tails.wide_intervals,
        "profile_l1": profile.l1,
        "weak_proxy": profile.weak_proxy,
        "outside": profile.outside,
    });
    if dim == Dimension::Two {
        let mut rows = Vec::with_capacity(samples.len());
        let mut means = Vec::new();
        for (k, c) in samples.iter().enumerate() {
            let m = bond_order_psi6(c)?.interior_mean();
            means.extend(m);
            rows.push(vec![k.to_string(), m.map(fmt_f64).unwrap_or_default()]);
        }
        out.table("psi6.csv", &["sample", "interior_mean"], &rows)?;
        summary["psi6_mean"] = json!(means.iter().sum::<f64>() / means.len().max(1) as f64);
    }
    Ok(summary)
}
