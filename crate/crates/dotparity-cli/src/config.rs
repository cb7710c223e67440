//! Plain-text `key = value` run configuration with `#` comments.
//!
//! Keys are namespaced and carry their unit (`params.v_f_mev`,
//! `protocol.wait_time_ns`) so that mixed eV/meV/μeV/ns inputs cannot be
//! confused silently. Unknown keys are rejected.

use dotparity::models::CqdParams;
use dotparity::parity::{DetectorModel, ProtocolConfig, PulseMode, StateAmplitudes};
use dotparity::HBAR_MEV_PS;

use crate::CliError;

/// ħ/meV expressed in ns.
pub const TIME_UNIT_NS: f64 = HBAR_MEV_PS * 1e-3;

pub fn ns_to_internal(t_ns: f64) -> f64 {
    t_ns / TIME_UNIT_NS
}

pub fn internal_to_ns(t: f64) -> f64 {
    t * TIME_UNIT_NS
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: CqdParams,
    pub detector: DetectorModel,
    pub protocol: ProtocolConfig,
    pub state: StateAmplitudes,
    pub seed: u64,
    pub shots: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let params = CqdParams::canonical();
        Self {
            params,
            detector: DetectorModel::ideal_timing(0.5).expect("static"),
            protocol: ProtocolConfig::defaults_for(&params),
            state: StateAmplitudes::uniform(),
            seed: 42,
            shots: 1000,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, CliError> {
    if value.eq_ignore_ascii_case("inf") || value.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    value
        .parse::<f64>()
        .map_err(|_| CliError::Config(format!("key {key}: cannot parse {value:?} as a number")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64, CliError> {
    value
        .parse::<u64>()
        .map_err(|_| CliError::Config(format!("key {key}: cannot parse {value:?} as an integer")))
}

/// Parses configuration text over the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    let mut amps = [0.5_f64, 0.5, 0.5, 0.5];
    let mut pulse_time_set = false;
    let mut wait_time_set = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "params.omega0_mev" => cfg.params.omega0_mev = parse_f64(key, value)?,
            "params.omega_l_mev" => cfg.params.omega_l_mev = parse_f64(key, value)?,
            "params.rabi_mev" => cfg.params.rabi_mev = parse_f64(key, value)?,
            "params.v_f_mev" => cfg.params.v_f_mev = parse_f64(key, value)?,
            "params.v_xx_mev" => cfg.params.v_xx_mev = parse_f64(key, value)?,
            "params.gamma_x_mev" => cfg.params.gamma_x_mev = parse_f64(key, value)?,
            "detector.eta" => cfg.detector.efficiency = parse_f64(key, value)?,
            "detector.time_resolution_ns" => {
                let v = parse_f64(key, value)?;
                cfg.detector.time_resolution = if v.is_finite() { ns_to_internal(v) } else { v };
            }
            "protocol.wait_time_ns" => {
                cfg.protocol.wait_time = ns_to_internal(parse_f64(key, value)?);
                wait_time_set = true;
            }
            "protocol.pulse_time_ns" => {
                cfg.protocol.pulse_time = ns_to_internal(parse_f64(key, value)?);
                pulse_time_set = true;
            }
            "protocol.repetitions" => {
                cfg.protocol.repetitions = parse_u64(key, value)? as usize;
            }
            "protocol.pulse_mode" => {
                cfg.protocol.pulse_mode = match value {
                    "ideal" => PulseMode::Ideal,
                    "simulated" => PulseMode::Simulated,
                    other => {
                        return Err(CliError::Config(format!(
                            "key {key}: expected ideal|simulated, got {other:?}"
                        )))
                    }
                };
            }
            "state.a00" => amps[0] = parse_f64(key, value)?,
            "state.a01" => amps[1] = parse_f64(key, value)?,
            "state.a10" => amps[2] = parse_f64(key, value)?,
            "state.a11" => amps[3] = parse_f64(key, value)?,
            "seed" => cfg.seed = parse_u64(key, value)?,
            "shots" => cfg.shots = parse_u64(key, value)? as usize,
            other => {
                return Err(CliError::Config(format!("unknown key {other:?}")));
            }
        }
    }

    // Re-derive the protocol timing defaults from the (possibly overridden)
    // physical parameters.
    if !wait_time_set {
        cfg.protocol.wait_time = 10.0 / cfg.params.gamma_x_mev;
    }
    if !pulse_time_set {
        cfg.protocol.pulse_time = std::f64::consts::PI / cfg.params.rabi_mev;
    }

    let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm <= 0.0 {
        return Err(CliError::Config("state amplitudes are all zero".into()));
    }
    cfg.state = StateAmplitudes::from_reals(
        amps[0] / norm,
        amps[1] / norm,
        amps[2] / norm,
        amps[3] / norm,
    )
    .map_err(CliError::Sim)?;

    cfg.params.validate().map_err(CliError::Sim)?;
    if !(0.0..=1.0).contains(&cfg.detector.efficiency) {
        return Err(CliError::Config("detector.eta must lie in [0, 1]".into()));
    }
    cfg.protocol.validate().map_err(CliError::Sim)?;
    if cfg.shots == 0 {
        return Err(CliError::Config("shots must be at least 1".into()));
    }
    Ok(cfg)
}
