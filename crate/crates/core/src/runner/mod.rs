//! Scenario orchestration: couples the controller to the plant, executes the
//! event timeline and reduces the sampled channels to per-window metrics.

mod emit;
mod windows;

use std::f64::consts::TAU;

use serde::Serialize;
use thiserror::Error;

use crate::analysis::instantaneous_pq;
use crate::config::{ValidatedConfig, Violations};
use crate::control::{ControlCommand, Controller, Measurements};
use crate::plant::{
    apply_event, inverter_voltage, rk4_step, NetworkConfig, PlantError, PlantState,
};
use crate::ynetwork::NetworkError;

pub use emit::{emit, write_csv, write_summary, EmitError, Summary};
pub use windows::{
    compute_window_metrics, plan_windows, MetricsRecord, WindowLabel, WindowReport, WindowSpan,
    END_GUARD, EVENT_SETTLE, STARTUP_SETTLE, THD_PERIODS,
};

/// Output channel names, in CSV column order after `time`.
pub const CHANNELS: &[&str] = &[
    "v_pcc_a",
    "v_pcc_b",
    "v_pcc_c",
    "i_inv_a",
    "i_inv_b",
    "i_inv_c",
    "i_load_a",
    "i_load_b",
    "i_load_c",
    "v_c2",
    "i_in",
    "p_in",
    "p_inv",
    "p_load",
    "q_load",
    "f_hz",
    "v_com_mag",
    "p_com",
    "p_meas",
    "q_meas",
    "i_com",
    "delta_omega",
    "theta",
    "m_a",
    "m_b",
    "m_c",
    "clamp_flag",
];

/// Plant state at the last successful step, for failure reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateSummary {
    pub v_pcc_peak: f64,
    pub i_filter_peak: f64,
    pub v_c2: f64,
    pub i_in: f64,
}

impl StateSummary {
    fn of(s: &PlantState) -> Self {
        Self {
            v_pcc_peak: s.v_pcc.max_abs(),
            i_filter_peak: s.i_filter.max_abs(),
            v_c2: s.dc.v_c2,
            i_in: s.dc.i_in,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] Violations),
    #[error("numeric failure at t = {t} s: {source} (last good state {last_good:?})")]
    NumericBlowup {
        t: f64,
        source: PlantError,
        last_good: StateSummary,
    },
    #[error("DC link collapsed at t = {t} s: {source} (last good state {last_good:?})")]
    DcCollapse {
        t: f64,
        source: NetworkError,
        last_good: StateSummary,
    },
}

impl SimError {
    fn at(t: f64, state: &PlantState, err: PlantError) -> Self {
        let last_good = StateSummary::of(state);
        match err {
            PlantError::Network(source) => SimError::DcCollapse {
                t,
                source,
                last_good,
            },
            source => SimError::NumericBlowup {
                t,
                source,
                last_good,
            },
        }
    }
}

/// Run metadata written alongside the metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub version: String,
    pub dt: f64,
    pub decimation: usize,
    pub control_period: f64,
    pub t_end: f64,
    pub f_ref: f64,
    pub samples: usize,
    /// Largest per-step change of the source current over the whole run.
    pub max_input_current_step: f64,
    /// `v_dc / source_l · dt`.
    pub input_current_step_bound: f64,
    /// Events whose action did not change the load state.
    pub no_op_events: usize,
}

/// Sampled channels and per-window metrics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub time: Vec<f64>,
    pub channels: Vec<(String, Vec<f64>)>,
    pub windows: Vec<WindowReport>,
    pub meta: RunMeta,
}

impl SimOutput {
    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / (self.meta.dt * self.meta.decimation as f64)
    }
}

struct Recorder {
    time: Vec<f64>,
    columns: Vec<Vec<f64>>,
}

impl Recorder {
    fn new(capacity: usize) -> Self {
        Self {
            time: Vec::with_capacity(capacity),
            columns: vec![Vec::with_capacity(capacity); CHANNELS.len()],
        }
    }

    fn record(
        &mut self,
        t: f64,
        s: &PlantState,
        net: &NetworkConfig,
        cmd: &ControlCommand,
        v_dc: f64,
    ) {
        let i_load = net.load_current(s);
        let v_inv = inverter_voltage(cmd.m_abc, s.dc.v_c2);
        let (_, q_load) = instantaneous_pq(s.v_pcc, i_load, cmd.swing.theta);
        let row = [
            s.v_pcc.a,
            s.v_pcc.b,
            s.v_pcc.c,
            s.i_filter.a,
            s.i_filter.b,
            s.i_filter.c,
            i_load.a,
            i_load.b,
            i_load.c,
            s.dc.v_c2,
            s.dc.i_in,
            v_dc * s.dc.i_in,
            v_inv.dot(&s.i_filter),
            net.load_power(s),
            q_load,
            cmd.swing.omega_star / TAU,
            cmd.v_com_mag,
            cmd.p_com,
            cmd.p_meas,
            cmd.q_meas,
            cmd.i_com,
            cmd.swing.delta_omega,
            cmd.swing.theta,
            cmd.m_abc.a,
            cmd.m_abc.b,
            cmd.m_abc.c,
            if cmd.clamped { 1.0 } else { 0.0 },
        ];
        self.time.push(t);
        for (col, v) in self.columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
}

/// Simulates the configured scenario from a de-energized start.
///
/// The controller runs every `control_period` (at the first plant step at or
/// after each scheduled instant) and its command is held between updates.
/// Events are applied at the plant step nearest to their time.
pub fn run_scenario(cfg: &ValidatedConfig) -> Result<SimOutput, SimError> {
    let sys = cfg.system();
    let sc = cfg.scenario();
    let dt = sc.dt;
    let n_steps = (sc.t_end / dt).round() as usize;

    let mut events: Vec<(usize, &crate::config::Event)> = sc
        .events
        .iter()
        .map(|e| ((e.time / dt).round() as usize, e))
        .collect();
    events.sort_by_key(|(k, _)| *k);
    let mut pending = events.into_iter().peekable();

    let mut state = PlantState::initial(sc.loads.len(), sys.v_dc);
    let mut net = NetworkConfig::new(&sc.loads);
    let mut controller = Controller::new(sys, cfg.control(), sc.control_period)
        .map_err(|e| SimError::at(0.0, &state, e.into()))?;

    let mut recorder = Recorder::new(n_steps / sc.decimation + 1);
    let mut cmd: Option<ControlCommand> = None;
    let mut control_index: u64 = 0;
    let mut last_control_t = -sc.control_period;
    let mut max_step = 0.0f64;
    let mut no_op_events = 0;
    // scheduled control instants are compared with a tolerance well below dt
    let eps = dt * 1e-6;

    for k in 0..=n_steps {
        let t = k as f64 * dt;

        while let Some((_, e)) = pending.next_if(|(step, _)| *step == k) {
            let outcome =
                apply_event(&net, &mut state, e).map_err(|err| SimError::at(t, &state, err))?;
            no_op_events += usize::from(outcome.no_op);
            net = outcome.net;
        }

        if t + eps >= control_index as f64 * sc.control_period {
            let meas = Measurements {
                v_pcc: state.v_pcc,
                i_filter: state.i_filter,
                i_load: net.load_current(&state),
                v_c2: state.dc.v_c2,
            };
            let update = controller
                .update(&meas, t, t - last_control_t)
                .map_err(|err| SimError::at(t, &state, err.into()))?;
            cmd = Some(update);
            last_control_t = t;
            while control_index as f64 * sc.control_period <= t + eps {
                control_index += 1;
            }
        }
        let current = cmd.as_ref().expect("controller runs on the first step");

        if k % sc.decimation == 0 {
            recorder.record(t, &state, &net, current, sys.v_dc);
        }
        if k == n_steps {
            break;
        }

        let next = rk4_step(&state, current.m_abc, current.i_com, &net, sys, dt)
            .map_err(|err| SimError::at(t, &state, err))?;
        max_step = max_step.max((next.dc.i_in - state.dc.i_in).abs());
        state = next;
    }

    let channels: Vec<(String, Vec<f64>)> = CHANNELS
        .iter()
        .map(|n| n.to_string())
        .zip(recorder.columns)
        .collect();
    let meta = RunMeta {
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        dt,
        decimation: sc.decimation,
        control_period: sc.control_period,
        t_end: sc.t_end,
        f_ref: sys.f_ref,
        samples: recorder.time.len(),
        max_input_current_step: max_step,
        input_current_step_bound: sys.v_dc / sys.source_l * dt,
        no_op_events,
    };
    let mut out = SimOutput {
        time: recorder.time,
        channels,
        windows: Vec::new(),
        meta,
    };
    out.windows = plan_windows(sc)
        .into_iter()
        .filter_map(|span| {
            compute_window_metrics(&out, &span)
                .ok()
                .map(|metrics| WindowReport { span, metrics })
        })
        .collect();
    Ok(out)
}
