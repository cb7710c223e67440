//! The experiment drivers behind each subcommand. Every command renders its
//! result to a string so outputs can be compared byte-for-byte in tests.

use rayon::prelude::*;
use serde::Serialize;

use dotparity::analysis::{sweep_efficiency, QuadratureConfig};
use dotparity::dynamics::{sample_trajectory, IntegratorConfig};
use dotparity::errmodels::{
    detuned_excitation_phase, detuned_excitation_transfer, spatial_mode_overlap, SpatialParams,
};
use dotparity::models::{assemble_full, CqdParams, DetuningParams, HoleMixingParams};
use dotparity::parity::{
    excitation_pulse, radiative_channel, run_protocol, ParityVariant,
};
use dotparity::qcore::{density_from_pure, BasisRegistry};
use dotparity::verify::{verification_probability, CoherenceFactor};

use crate::config::{internal_to_ns, RunConfig};
use crate::output::{fmt_float, OutputFormat, Table};
use crate::CliError;

fn sim(e: dotparity::Error) -> CliError {
    CliError::Sim(e)
}

#[derive(Serialize)]
struct ShotRecord {
    seed: u64,
    shot: u64,
    outcome: &'static str,
    detection_time_ns: Option<f64>,
    posterior_even_fidelity: f64,
}

/// One protocol run per shot; emits
/// `seed,shot,outcome,detection_time_ns,posterior_even_fidelity`.
pub fn cmd_run(cfg: &RunConfig, format: OutputFormat) -> Result<String, CliError> {
    let basis = BasisRegistry::computational();
    let rho0 = density_from_pure(&cfg.state.to_pure_state(&basis).map_err(sim)?);
    let outcomes: Vec<_> = (0..cfg.shots)
        .into_par_iter()
        .map(|i| {
            run_protocol(
                &rho0,
                &cfg.params,
                &cfg.detector,
                &cfg.protocol,
                cfg.seed,
                i as u64,
            )
        })
        .collect::<Result<_, _>>()
        .map_err(sim)?;

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut records = Vec::with_capacity(outcomes.len());
    for (i, out) in outcomes.iter().enumerate() {
        let (label, t_ns) = match out.variant {
            ParityVariant::Odd { detection_time } => {
                ("Odd", Some(internal_to_ns(detection_time)))
            }
            ParityVariant::Even => ("Even", None),
        };
        let even_fid = out.posterior_even_weight();
        rows.push(vec![
            cfg.seed.to_string(),
            i.to_string(),
            label.to_string(),
            t_ns.map(fmt_float).unwrap_or_default(),
            fmt_float(even_fid),
        ]);
        records.push(ShotRecord {
            seed: cfg.seed,
            shot: i as u64,
            outcome: label,
            detection_time_ns: t_ns,
            posterior_even_fidelity: even_fid,
        });
    }
    Table {
        header: &[
            "seed",
            "shot",
            "outcome",
            "detection_time_ns",
            "posterior_even_fidelity",
        ],
        rows,
        records,
    }
    .render(format)
}

#[derive(Serialize)]
struct TrajRecordRow {
    seed: u64,
    stream: u64,
    dn_total: usize,
    first_detection_time_ns: Option<f64>,
    no_jump_norm: f64,
    final_even_weight: f64,
}

/// Raw monitored-relaxation trajectories from the configured post-pulse
/// state; emits
/// `seed,stream,dn_total,first_detection_time_ns,no_jump_norm,final_even_weight`.
pub fn cmd_traj(cfg: &RunConfig, format: OutputFormat) -> Result<String, CliError> {
    let h_relax = assemble_full(&cfg.params, false).map_err(sim)?;
    let basis = h_relax.basis().clone();
    let rho0 = density_from_pure(&cfg.state.to_pure_state(&basis).map_err(sim)?);
    let pulsed = excitation_pulse(&rho0, &cfg.params, &cfg.protocol).map_err(sim)?;
    let channel = radiative_channel(&basis, &cfg.params, &cfg.detector).map_err(sim)?;
    let integ = cfg.protocol.integrator;

    let recs: Vec<_> = (0..cfg.shots)
        .into_par_iter()
        .map(|i| {
            sample_trajectory(
                &pulsed.state,
                &h_relax,
                std::slice::from_ref(&channel),
                cfg.protocol.wait_time,
                &integ,
                cfg.seed,
                i as u64,
            )
        })
        .collect::<Result<_, _>>()
        .map_err(sim)?;

    let mut rows = Vec::with_capacity(recs.len());
    let mut records = Vec::with_capacity(recs.len());
    for r in &recs {
        let first = r.jump_times.first().map(|&t| internal_to_ns(t));
        let even = r.final_state.population("00").unwrap_or(0.0)
            + r.final_state.population("11").unwrap_or(0.0);
        rows.push(vec![
            r.seed.to_string(),
            r.stream.to_string(),
            r.dn_total.to_string(),
            first.map(fmt_float).unwrap_or_default(),
            fmt_float(r.no_jump_norm),
            fmt_float(even),
        ]);
        records.push(TrajRecordRow {
            seed: r.seed,
            stream: r.stream,
            dn_total: r.dn_total,
            first_detection_time_ns: first,
            no_jump_norm: r.no_jump_norm,
            final_even_weight: even,
        });
    }
    Table {
        header: &[
            "seed",
            "stream",
            "dn_total",
            "first_detection_time_ns",
            "no_jump_norm",
            "final_even_weight",
        ],
        rows,
        records,
    }
    .render(format)
}

#[derive(Serialize)]
struct SweepRecord {
    eta: f64,
    r: usize,
    avg_fidelity: f64,
}

/// Averaged even fidelity over an (η, r) grid; emits `eta,r,avg_fidelity`.
pub fn cmd_sweep_eta(
    r_list: &[usize],
    eta_grid: &[f64],
    points_per_axis: usize,
    format: OutputFormat,
) -> Result<String, CliError> {
    for (i, a) in eta_grid.iter().enumerate() {
        if !(0.0..=1.0).contains(a) {
            return Err(CliError::Config(format!("eta {a} outside [0, 1]")));
        }
        if eta_grid[..i].contains(a) {
            return Err(CliError::Config(format!("duplicate eta value {a}")));
        }
    }
    for r in r_list {
        if *r == 0 {
            return Err(CliError::Config("repetition counts must be >= 1".into()));
        }
    }
    let q = QuadratureConfig {
        points_per_axis,
        ..Default::default()
    };
    let rows_data = sweep_efficiency(r_list, eta_grid, &q).map_err(sim)?;
    let mut rows = Vec::with_capacity(rows_data.len());
    let mut records = Vec::with_capacity(rows_data.len());
    for row in &rows_data {
        rows.push(vec![
            fmt_float(row.eta),
            row.r.to_string(),
            fmt_float(row.avg_fidelity),
        ]);
        records.push(SweepRecord {
            eta: row.eta,
            r: row.r,
            avg_fidelity: row.avg_fidelity,
        });
    }
    Table {
        header: &["eta", "r", "avg_fidelity"],
        rows,
        records,
    }
    .render(format)
}

#[derive(Serialize)]
struct SpatialRecord {
    delta_r_nm: f64,
    alpha: f64,
    f: f64,
    three_f: f64,
}

/// Photon-mode overlap for each separation; emits `delta_r_nm,alpha,f,three_f`.
pub fn cmd_spatial(
    delta_r_nm: &[f64],
    omega0_mev: f64,
    format: OutputFormat,
) -> Result<String, CliError> {
    if delta_r_nm.is_empty() {
        return Err(CliError::Config("at least one separation is required".into()));
    }
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &dr in delta_r_nm {
        let sp = SpatialParams::from_energy(dr, omega0_mev).map_err(sim)?;
        let alpha = sp.alpha();
        let f = spatial_mode_overlap(alpha);
        rows.push(vec![
            fmt_float(dr),
            fmt_float(alpha),
            fmt_float(f),
            fmt_float(3.0 * f),
        ]);
        records.push(SpatialRecord {
            delta_r_nm: dr,
            alpha,
            f,
            three_f: 3.0 * f,
        });
    }
    Table {
        header: &["delta_r_nm", "alpha", "f", "three_f"],
        rows,
        records,
    }
    .render(format)
}

#[derive(Serialize)]
struct HolemixRecord {
    t_ns: f64,
    eps: f64,
    pop01: f64,
    pop_xx: f64,
}

/// Pulse-scan populations for each mixing factor; emits `t_ns,eps,pop01,popXX`.
pub fn cmd_holemix(
    eps_list: &[f64],
    params: &CqdParams,
    delta_mev: f64,
    grid_points: usize,
    format: OutputFormat,
) -> Result<String, CliError> {
    if eps_list.is_empty() {
        return Err(CliError::Config("at least one mixing factor is required".into()));
    }
    if grid_points < 2 {
        return Err(CliError::Config("grid needs at least 2 points".into()));
    }
    let tau = std::f64::consts::PI / params.rabi_mev;
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| tau * i as f64 / (grid_points - 1) as f64)
        .collect();
    let cfg = IntegratorConfig::default();
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &eps in eps_list {
        let hm = HoleMixingParams::matched(eps, params.v_f_mev);
        let scan = dotparity::errmodels::holemix_pulse_scan(params, &hm, delta_mev, &grid, &cfg)
            .map_err(sim)?;
        for s in &scan {
            rows.push(vec![
                fmt_float(internal_to_ns(s.t)),
                fmt_float(eps),
                fmt_float(s.pop_01),
                fmt_float(s.pop_biexciton),
            ]);
            records.push(HolemixRecord {
                t_ns: internal_to_ns(s.t),
                eps,
                pop01: s.pop_01,
                pop_xx: s.pop_biexciton,
            });
        }
    }
    Table {
        header: &["t_ns", "eps", "pop01", "popXX"],
        rows,
        records,
    }
    .render(format)
}

#[derive(Serialize)]
struct DetuneRecord {
    delta_mev: f64,
    pmax: f64,
    phase_rad: f64,
}

/// Excitation transfer and accumulated phase for midpoint-tuned dots with
/// per-dot detuning ±δ; emits `delta_mev,pmax,phase`.
pub fn cmd_detune(
    delta_grid_mev: &[f64],
    params: &CqdParams,
    format: OutputFormat,
) -> Result<String, CliError> {
    if delta_grid_mev.is_empty() {
        return Err(CliError::Config("at least one detuning is required".into()));
    }
    let cfg = IntegratorConfig {
        rel_tol: 1e-11,
        ..Default::default()
    };
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &delta in delta_grid_mev {
        // δ = 0 is a clean π pulse; skip the argmax search on its flat peak.
        let (pmax, t_max) = if delta == 0.0 {
            (1.0, std::f64::consts::PI / params.rabi_mev)
        } else {
            detuned_excitation_transfer(params.rabi_mev, delta, &cfg).map_err(sim)?
        };
        let d = DetuningParams::midpoint(
            params.omega0_mev + delta,
            params.omega0_mev - delta,
            params.gamma_x_mev,
        );
        let phase = detuned_excitation_phase(params, &d, t_max, &cfg)
            .map_err(sim)?
            .phase;
        rows.push(vec![fmt_float(delta), fmt_float(pmax), fmt_float(phase)]);
        records.push(DetuneRecord {
            delta_mev: delta,
            pmax,
            phase_rad: phase,
        });
    }
    Table {
        header: &["delta_mev", "pmax", "phase"],
        rows,
        records,
    }
    .render(format)
}

#[derive(Serialize)]
struct VerifyRecord {
    alpha: f64,
    p_odd_second: f64,
}

/// Verification-pipeline probability for each coherence factor; emits
/// `alpha,p_odd_second`.
pub fn cmd_verify(alpha_grid: &[f64], format: OutputFormat) -> Result<String, CliError> {
    if alpha_grid.is_empty() {
        return Err(CliError::Config("at least one alpha is required".into()));
    }
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &alpha in alpha_grid {
        let p = verification_probability(CoherenceFactor::new(alpha).map_err(sim)?)
            .map_err(sim)?;
        rows.push(vec![fmt_float(alpha), fmt_float(p)]);
        records.push(VerifyRecord {
            alpha,
            p_odd_second: p,
        });
    }
    Table {
        header: &["alpha", "p_odd_second"],
        rows,
        records,
    }
    .render(format)
}
