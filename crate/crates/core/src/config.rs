//! Physical, controller and scenario parameters, their validation, and the
//! closed-form design helper for the Y-source operating point.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ynetwork::{self, ac_peak_voltage, duty_pole};

/// Electrical constants of the inverter, filter and DC side. SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub v_dc: f64,
    /// Shoot-through duty ratio.
    pub duty_d: f64,
    pub k_winding: f64,
    pub p_winding: f64,
    /// Switching frequency; the controller runs at this rate.
    pub f_sw: f64,
    pub f_ref: f64,
    /// Line-to-line RMS.
    pub v_pcc_nominal: f64,
    pub filter_l: f64,
    pub filter_c: f64,
    pub dc_cap: f64,
    pub source_l: f64,
    /// Inductance of each Y-network winding, used for the Thevenin
    /// decoupling term of the current loop.
    pub network_l: f64,
    /// Series resistance of the filter inductor. Zero gives a lossless chain.
    #[serde(default)]
    pub filter_r: f64,
}

/// Controller constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlParams {
    /// Reactive droop, V/var.
    pub k1_volt_droop: f64,
    pub p1_gain: f64,
    pub i1_gain: f64,
    /// Active droop, W/Hz.
    pub k2_power_droop: f64,
    pub j_inertia: f64,
    pub d_damping: f64,
    pub q_ref: f64,
    pub p_ref: f64,
    /// Phase-peak voltage reference.
    pub v_ref: f64,
    pub vc2_ref: f64,
    pub kp_v: f64,
    pub ki_v: f64,
    pub kp_i: f64,
    pub ki_i: f64,
    pub m_max: f64,
    /// Output clamp of the DC-link voltage PI (source current command).
    pub i_com_max: f64,
    /// Per-axis clamp of the current reference produced by the voltage loop.
    pub i_ref_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventAction {
    Connect,
    Disconnect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub time: f64,
    pub action: EventAction,
    pub load_id: String,
}

/// A balanced Y-connected load. `l_henries == 0` is purely resistive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub load_id: String,
    pub r_ohms: f64,
    pub l_henries: f64,
    pub initially_connected: bool,
}

impl LoadSpec {
    pub fn is_inductive(&self) -> bool {
        self.l_henries > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub dt: f64,
    pub t_end: f64,
    pub control_period: f64,
    /// Output sampling: one row every `decimation` plant steps.
    #[serde(default = "default_decimation")]
    pub decimation: usize,
    #[serde(default)]
    pub events: Vec<Event>,
    pub loads: Vec<LoadSpec>,
}

fn default_decimation() -> usize {
    5
}

/// Complete configuration as read from disk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: SystemParams,
    pub control: ControlParams,
    pub scenario: Scenario,
}

/// Nominal LV bus scaled so that the phase peak stays inside the inverter's
/// reach from a 1.2x boosted 400 V link.
const DEFAULT_V_PCC_LL_RMS: f64 = 240.0;
const DEFAULT_BOOST: f64 = 1.2;
const BASE_LOAD_W: f64 = 6000.0;
const STEP_LOAD_W: f64 = 2000.0;
const STEP_LOAD_PF: f64 = 0.8;

fn nominal_phase_peak(v_ll_rms: f64) -> f64 {
    v_ll_rms * (2.0f64 / 3.0).sqrt()
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            v_dc: 400.0,
            duty_d: solve_duty(DEFAULT_BOOST, 1.0, 1.0).expect("valid default boost"),
            k_winding: 1.0,
            p_winding: 1.0,
            f_sw: 18_000.0,
            f_ref: 60.0,
            v_pcc_nominal: DEFAULT_V_PCC_LL_RMS,
            filter_l: 1e-3,
            filter_c: 30e-6,
            dc_cap: 20e-3,
            source_l: 2e-3,
            network_l: 100e-6,
            filter_r: 0.0,
        }
    }
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            k1_volt_droop: 1e-4,
            p1_gain: 100.0,
            i1_gain: 30.0,
            k2_power_droop: 40_000.0,
            j_inertia: 0.5,
            d_damping: 20.0,
            q_ref: 0.0,
            p_ref: BASE_LOAD_W + STEP_LOAD_W / 2.0,
            v_ref: nominal_phase_peak(DEFAULT_V_PCC_LL_RMS),
            vc2_ref: DEFAULT_BOOST * 400.0,
            kp_v: 0.05,
            ki_v: 20.0,
            kp_i: 3.0,
            ki_i: 1500.0,
            m_max: 0.9,
            i_com_max: 60.0,
            i_ref_max: 80.0,
        }
    }
}

impl Default for Scenario {
    fn default() -> Self {
        let v_peak = nominal_phase_peak(DEFAULT_V_PCC_LL_RMS);
        let v_phase_sq = v_peak * v_peak / 2.0;
        // Per-phase R for the base load, and an R-L branch that draws the step
        // power at the configured power factor.
        let r_base = 3.0 * v_phase_sq / BASE_LOAD_W;
        let s_step = STEP_LOAD_W / STEP_LOAD_PF;
        let z_step = 3.0 * v_phase_sq / s_step;
        let r_step = z_step * STEP_LOAD_PF;
        let x_step = z_step * (1.0 - STEP_LOAD_PF * STEP_LOAD_PF).sqrt();
        let l_step = x_step / (2.0 * std::f64::consts::PI * 60.0);
        Self {
            dt: 20e-6,
            t_end: 1.2,
            control_period: 1.0 / 18_000.0,
            decimation: default_decimation(),
            events: vec![
                Event {
                    time: 0.4,
                    action: EventAction::Connect,
                    load_id: "inductive".into(),
                },
                Event {
                    time: 0.8,
                    action: EventAction::Disconnect,
                    load_id: "inductive".into(),
                },
            ],
            loads: vec![
                LoadSpec {
                    load_id: "base".into(),
                    r_ohms: r_base,
                    l_henries: 0.0,
                    initially_connected: true,
                },
                LoadSpec {
                    load_id: "inductive".into(),
                    r_ohms: r_step,
                    l_henries: l_step,
                    initially_connected: false,
                },
            ],
        }
    }
}

/// A single invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("duty_d = {duty} is at or beyond the gain pole {pole}")]
    DutyBeyondPole { duty: f64, pole: f64 },
    #[error("m_max = {m_max} exceeds 1 - duty_d = {limit}")]
    ModulationOverlap { m_max: f64, limit: f64 },
    #[error("{field} must be positive (got {value})")]
    NonPositive { field: String, value: f64 },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

/// Every violation found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Violations(pub Vec<Violation>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration violation(s):", self.0.len())?;
        for v in &self.0 {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Violations {}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(#[from] Violations),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("boost target {0} is below unity")]
    GainBelowUnity(f64),
    #[error(transparent)]
    Network(#[from] ynetwork::NetworkError),
}

/// A configuration whose invariants have all been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig(Config);

impl ValidatedConfig {
    pub fn config(&self) -> &Config {
        &self.0
    }

    pub fn system(&self) -> &SystemParams {
        &self.0.system
    }

    pub fn control(&self) -> &ControlParams {
        &self.0.control
    }

    pub fn scenario(&self) -> &Scenario {
        &self.0.scenario
    }

    pub fn into_inner(self) -> Config {
        self.0
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(&self.0).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Shoot-through duty that produces DC-link gain `b_target`.
pub fn solve_duty(b_target: f64, k_winding: f64, p_winding: f64) -> Result<f64, DesignError> {
    if !(b_target >= 1.0) {
        return Err(DesignError::GainBelowUnity(b_target));
    }
    Ok((1.0 + p_winding) * (1.0 - 1.0 / b_target) / (2.0 + p_winding + k_winding))
}

fn check_positive(out: &mut Vec<Violation>, field: &str, value: f64) {
    if !(value > 0.0) || !value.is_finite() {
        out.push(Violation::NonPositive {
            field: field.to_string(),
            value,
        });
    }
}

fn invalid(out: &mut Vec<Violation>, field: &str, reason: impl Into<String>) {
    out.push(Violation::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    });
}

/// Checks every invariant and reports all violations together.
pub fn validate(config: Config) -> Result<ValidatedConfig, Violations> {
    let mut out = Vec::new();
    let sys = &config.system;
    let ctl = &config.control;
    let sc = &config.scenario;

    for (field, value) in [
        ("system.v_dc", sys.v_dc),
        ("system.k_winding", sys.k_winding),
        ("system.p_winding", sys.p_winding),
        ("system.f_sw", sys.f_sw),
        ("system.f_ref", sys.f_ref),
        ("system.v_pcc_nominal", sys.v_pcc_nominal),
        ("system.filter_l", sys.filter_l),
        ("system.filter_c", sys.filter_c),
        ("system.dc_cap", sys.dc_cap),
        ("system.source_l", sys.source_l),
        ("system.network_l", sys.network_l),
        ("control.j_inertia", ctl.j_inertia),
        ("control.d_damping", ctl.d_damping),
        ("control.vc2_ref", ctl.vc2_ref),
        ("control.v_ref", ctl.v_ref),
        ("control.m_max", ctl.m_max),
        ("control.i_com_max", ctl.i_com_max),
        ("control.i_ref_max", ctl.i_ref_max),
        ("scenario.dt", sc.dt),
        ("scenario.t_end", sc.t_end),
        ("scenario.control_period", sc.control_period),
    ] {
        check_positive(&mut out, field, value);
    }

    if !(sys.duty_d >= 0.0) {
        invalid(
            &mut out,
            "system.duty_d",
            format!("must be in [0, 1), got {}", sys.duty_d),
        );
    }
    let pole = duty_pole(sys.k_winding, sys.p_winding);
    if sys.duty_d >= pole {
        out.push(Violation::DutyBeyondPole {
            duty: sys.duty_d,
            pole,
        });
    }
    if sys.f_sw < 100.0 * sys.f_ref {
        invalid(
            &mut out,
            "system.f_sw",
            format!("must be at least 100 * f_ref = {}", 100.0 * sys.f_ref),
        );
    }
    if !(sys.filter_r >= 0.0) {
        invalid(&mut out, "system.filter_r", "must be non-negative");
    }

    let limit = 1.0 - sys.duty_d;
    if ctl.m_max > limit {
        out.push(Violation::ModulationOverlap {
            m_max: ctl.m_max,
            limit,
        });
    }
    for (field, value) in [
        ("control.k1_volt_droop", ctl.k1_volt_droop),
        ("control.p1_gain", ctl.p1_gain),
        ("control.i1_gain", ctl.i1_gain),
        ("control.k2_power_droop", ctl.k2_power_droop),
        ("control.kp_v", ctl.kp_v),
        ("control.ki_v", ctl.ki_v),
        ("control.kp_i", ctl.kp_i),
        ("control.ki_i", ctl.ki_i),
    ] {
        if !(value >= 0.0) || !value.is_finite() {
            invalid(
                &mut out,
                field,
                format!("must be a non-negative gain, got {value}"),
            );
        }
    }
    if out.is_empty() {
        // Only meaningful once the duty and modulation limits hold.
        if let Ok(reach) = ac_peak_voltage(
            ctl.m_max,
            sys.duty_d,
            sys.k_winding,
            sys.p_winding,
            sys.v_dc,
        ) {
            if ctl.v_ref > reach {
                invalid(
                    &mut out,
                    "control.v_ref",
                    format!(
                        "{} V exceeds the inverter reach {reach} V at m_max",
                        ctl.v_ref
                    ),
                );
            }
        }
    }

    if sc.dt > sc.control_period {
        invalid(&mut out, "scenario.dt", "must not exceed control_period");
    }
    if sc.decimation == 0 {
        invalid(&mut out, "scenario.decimation", "must be at least 1");
    }
    if sc.events.windows(2).any(|w| w[1].time < w[0].time) {
        invalid(&mut out, "scenario.events", "must be sorted by time");
    }
    let mut ids = HashSet::new();
    for load in &sc.loads {
        if !ids.insert(load.load_id.as_str()) {
            invalid(
                &mut out,
                "scenario.loads",
                format!("duplicate load_id {:?}", load.load_id),
            );
        }
        check_positive(
            &mut out,
            &format!("load {}.r_ohms", load.load_id),
            load.r_ohms,
        );
        if !(load.l_henries >= 0.0) {
            invalid(
                &mut out,
                &format!("load {}.l_henries", load.load_id),
                "must be non-negative",
            );
        }
    }
    for event in &sc.events {
        if !(event.time >= 0.0 && event.time <= sc.t_end) {
            invalid(
                &mut out,
                "scenario.events",
                format!("event time {} outside [0, t_end]", event.time),
            );
        }
        if !ids.contains(event.load_id.as_str()) {
            invalid(
                &mut out,
                "scenario.events",
                format!("event references unknown load {:?}", event.load_id),
            );
        }
    }

    if out.is_empty() {
        Ok(ValidatedConfig(config))
    } else {
        Err(Violations(out))
    }
}

pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    Ok(toml::from_str(text)?)
}

/// Reads, parses and validates a TOML configuration file.
pub fn load_config(path: &Path) -> Result<ValidatedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(validate(parse_config(&text)?)?)
}
