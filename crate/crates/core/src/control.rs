//! Grid-forming control stack.
//!
//! Outer laws turn measured reactive and active power into a voltage
//! magnitude and a power command. The virtual swing equation turns the power
//! command into frequency and angle. A cascaded dq voltage/current loop then
//! produces the inverter voltage reference, which is limited into per-phase
//! modulation indices. A separate PI holds the DC-link voltage by commanding
//! the source current.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::analysis::instantaneous_pq;
use crate::config::{ControlParams, SystemParams};
use crate::transforms::{
    abc_to_dq0, dq0_to_abc, synthesize_reference, wrap_angle, Dq0, ThreePhase,
};
use crate::ynetwork::{averaged_thevenin_inductance, NetworkError};

/// Duration of the startup ramp on the voltage reference.
pub const SOFT_START: f64 = 0.05;

/// Fundamental periods averaged by the P/Q feedback filters.
pub const PQ_FILTER_PERIODS: f64 = 2.0;

/// Voltage magnitude command from reactive power error.
pub fn reactive_droop(q_ref: f64, q_meas: f64, k1: f64, v_ref: f64) -> f64 {
    (q_ref - q_meas) * k1 + v_ref
}

/// Active power command from frequency error.
pub fn active_droop(f_ref: f64, f_meas: f64, k2: f64, p_ref: f64) -> f64 {
    (f_ref - f_meas) * k2 + p_ref
}

/// Rotor-emulation state of the virtual machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwingState {
    pub delta_omega: f64,
    /// Wrapped to `[0, 2π)`.
    pub theta: f64,
    pub omega_star: f64,
}

impl SwingState {
    pub fn nominal(f_ref: f64) -> Self {
        Self {
            delta_omega: 0.0,
            theta: 0.0,
            omega_star: TAU * f_ref,
        }
    }
}

/// Advances the swing equation by one control step.
///
/// `delta_omega` integrates the scaled power imbalance against damping, the
/// output frequency is `omega_meas + delta_omega`, and the angle integrates
/// the output frequency.
#[allow(clippy::too_many_arguments)]
pub fn swing_step(
    s: SwingState,
    p_com: f64,
    p_meas: f64,
    j: f64,
    d_damp: f64,
    f_ref: f64,
    omega_meas: f64,
    dt: f64,
) -> SwingState {
    let torque = (p_com - p_meas) / (TAU * f_ref);
    let delta_omega = s.delta_omega + dt / j * (torque - d_damp * s.delta_omega);
    let omega_star = omega_meas + delta_omega;
    SwingState {
        delta_omega,
        theta: wrap_angle(s.theta + omega_star * dt),
        omega_star,
    }
}

/// Integrator of one PI loop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PiState {
    pub integral: f64,
}

impl PiState {
    /// PI output `offset + kp·e + ki·∫e`, limited to `±limit`.
    ///
    /// Conditional integration: the integrator only accepts the new error
    /// when the resulting output stays inside the limit. Returns the output
    /// and whether it was clamped.
    pub fn step(
        &mut self,
        error: f64,
        kp: f64,
        ki: f64,
        dt: f64,
        offset: f64,
        limit: f64,
    ) -> (f64, bool) {
        let candidate = self.integral + error * dt;
        let out = offset + kp * error + ki * candidate;
        if out.abs() <= limit {
            self.integral = candidate;
            return (out, false);
        }
        let held = offset + kp * error + ki * self.integral;
        (held.clamp(-limit, limit), true)
    }
}

/// DC-link voltage PI producing the source current command.
pub fn capacitor_pi_step(
    s: PiState,
    vc2_ref: f64,
    vc2_meas: f64,
    p1: f64,
    i1: f64,
    dt: f64,
    i_com_max: f64,
) -> (PiState, f64) {
    let mut next = s;
    let (i_com, _) = next.step(vc2_ref - vc2_meas, p1, i1, dt, 0.0, i_com_max);
    (next, i_com)
}

/// Integrators of the cascaded dq loops.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DoubleLoopState {
    pub voltage_d: PiState,
    pub voltage_q: PiState,
    pub current_d: PiState,
    pub current_q: PiState,
}

/// Gains and plant constants of the cascaded loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopGains {
    pub kp_v: f64,
    pub ki_v: f64,
    pub kp_i: f64,
    pub ki_i: f64,
    /// PCC capacitance used for voltage-loop decoupling.
    pub c_f: f64,
    /// Filter plus averaged network Thevenin inductance.
    pub l_eff: f64,
    /// Per-axis current reference limit.
    pub i_ref_max: f64,
    /// Per-axis inverter voltage limit.
    pub v_limit: f64,
}

impl LoopGains {
    pub fn from_params(sys: &SystemParams, ctl: &ControlParams) -> Result<Self, NetworkError> {
        Ok(Self {
            kp_v: ctl.kp_v,
            ki_v: ctl.ki_v,
            kp_i: ctl.kp_i,
            ki_i: ctl.ki_i,
            c_f: sys.filter_c,
            l_eff: sys.filter_l + averaged_thevenin_inductance(sys.network_l, sys.duty_d)?,
            i_ref_max: ctl.i_ref_max,
            v_limit: f64::INFINITY,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleLoopOutput {
    /// Filter current reference from the voltage loop.
    pub i_ref: Dq0,
    /// Inverter voltage reference from the current loop.
    pub v_ref: Dq0,
    pub clamped: bool,
}

/// One update of the cascaded dq voltage and current loops.
///
/// Outer: `I* = PI_v(V_com − V) ∓ ω·C·V_cross + I_load`.
/// Inner: `V* = PI_i(I* − I) ∓ ω·L_eff·I_cross + V`.
/// The cross terms cancel the rotating-frame coupling of the L and C
/// dynamics. The zero-sequence channel is driven to zero.
#[allow(clippy::too_many_arguments)]
pub fn double_loop_step(
    states: &mut DoubleLoopState,
    v_com: Dq0,
    v_meas: Dq0,
    i_meas: Dq0,
    i_load: Dq0,
    omega_star: f64,
    gains: &LoopGains,
    dt: f64,
) -> DoubleLoopOutput {
    let wc = omega_star * gains.c_f;
    let (i_ref_d, clamp_vd) = states.voltage_d.step(
        v_com.d - v_meas.d,
        gains.kp_v,
        gains.ki_v,
        dt,
        i_load.d - wc * v_meas.q,
        gains.i_ref_max,
    );
    let (i_ref_q, clamp_vq) = states.voltage_q.step(
        v_com.q - v_meas.q,
        gains.kp_v,
        gains.ki_v,
        dt,
        i_load.q + wc * v_meas.d,
        gains.i_ref_max,
    );

    let wl = omega_star * gains.l_eff;
    let (v_ref_d, clamp_id) = states.current_d.step(
        i_ref_d - i_meas.d,
        gains.kp_i,
        gains.ki_i,
        dt,
        v_meas.d - wl * i_meas.q,
        gains.v_limit,
    );
    let (v_ref_q, clamp_iq) = states.current_q.step(
        i_ref_q - i_meas.q,
        gains.kp_i,
        gains.ki_i,
        dt,
        v_meas.q + wl * i_meas.d,
        gains.v_limit,
    );

    DoubleLoopOutput {
        i_ref: Dq0::new(i_ref_d, i_ref_q, 0.0),
        v_ref: Dq0::new(v_ref_d, v_ref_q, 0.0),
        clamped: clamp_vd || clamp_vq || clamp_id || clamp_iq,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulation {
    pub m: ThreePhase,
    pub clamped: bool,
}

/// Per-phase modulation index for an averaged bridge fed from `v_pn`.
pub fn modulation_command(
    v_inv_ref: ThreePhase,
    v_pn: f64,
    m_max: f64,
) -> Result<Modulation, NetworkError> {
    if !(v_pn > 0.0) || !v_pn.is_finite() {
        return Err(NetworkError::DcCollapse { v_c2: v_pn });
    }
    let raw = v_inv_ref * (2.0 / v_pn);
    let m = raw.map(|x| x.clamp(-m_max, m_max));
    Ok(Modulation {
        m,
        clamped: m != raw,
    })
}

/// Running mean over a fixed number of samples.
#[derive(Debug, Clone)]
struct MovingAverage {
    buf: VecDeque<f64>,
    capacity: usize,
    sum: f64,
    pushes: usize,
}

impl MovingAverage {
    fn new(capacity: usize) -> Self {
        Self {
            buf: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            sum: 0.0,
            pushes: 0,
        }
    }

    fn push(&mut self, x: f64) -> f64 {
        if self.buf.len() == self.capacity {
            self.sum -= self.buf.pop_front().unwrap_or(0.0);
        }
        self.buf.push_back(x);
        self.sum += x;
        self.pushes += 1;
        if self.pushes.is_multiple_of(self.capacity) {
            // bound the accumulated rounding of the running sum
            self.sum = self.buf.iter().sum();
        }
        self.sum / self.buf.len() as f64
    }
}

/// Plant quantities sampled by the controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurements {
    pub v_pcc: ThreePhase,
    pub i_filter: ThreePhase,
    pub i_load: ThreePhase,
    pub v_c2: f64,
}

/// Everything the controller decided at one update, plus telemetry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    pub v_com_mag: f64,
    pub p_com: f64,
    pub p_meas: f64,
    pub q_meas: f64,
    pub i_com: f64,
    pub swing: SwingState,
    pub v_ref_abc: ThreePhase,
    pub m_abc: ThreePhase,
    pub clamped: bool,
}

/// The complete controller: a single state machine advanced once per
/// control period.
#[derive(Debug, Clone)]
pub struct Controller {
    sys: SystemParams,
    ctl: ControlParams,
    gains: LoopGains,
    swing: SwingState,
    dc_pi: PiState,
    loops: DoubleLoopState,
    p_filter: MovingAverage,
    q_filter: MovingAverage,
}

impl Controller {
    pub fn new(
        sys: &SystemParams,
        ctl: &ControlParams,
        control_period: f64,
    ) -> Result<Self, NetworkError> {
        let window = (PQ_FILTER_PERIODS / (sys.f_ref * control_period)).round() as usize;
        Ok(Self {
            sys: sys.clone(),
            ctl: ctl.clone(),
            gains: LoopGains::from_params(sys, ctl)?,
            swing: SwingState::nominal(sys.f_ref),
            dc_pi: PiState::default(),
            loops: DoubleLoopState::default(),
            p_filter: MovingAverage::new(window),
            q_filter: MovingAverage::new(window),
        })
    }

    pub fn swing(&self) -> SwingState {
        self.swing
    }

    pub fn loops(&self) -> &DoubleLoopState {
        &self.loops
    }

    pub fn dc_pi(&self) -> PiState {
        self.dc_pi
    }

    /// Runs one control update at time `t`, `dt` after the previous one.
    pub fn update(
        &mut self,
        meas: &Measurements,
        t: f64,
        dt: f64,
    ) -> Result<ControlCommand, NetworkError> {
        let sys = &self.sys;
        let ctl = &self.ctl;

        let (p_inst, q_inst) = instantaneous_pq(meas.v_pcc, meas.i_filter, self.swing.theta);
        let p_meas = self.p_filter.push(p_inst);
        let q_meas = self.q_filter.push(q_inst);

        // The inverter forms the grid: the frequency it measures is the one
        // it produced on the previous step.
        let omega_meas = self.swing.omega_star;
        let f_meas = omega_meas / TAU;
        let p_com = active_droop(sys.f_ref, f_meas, ctl.k2_power_droop, ctl.p_ref);
        self.swing = swing_step(
            self.swing,
            p_com,
            p_meas,
            ctl.j_inertia,
            ctl.d_damping,
            sys.f_ref,
            omega_meas,
            dt,
        );
        let theta = self.swing.theta;

        let ramp = (t / SOFT_START).clamp(0.0, 1.0);
        let v_com_mag =
            reactive_droop(ctl.q_ref, q_meas, ctl.k1_volt_droop, ctl.v_ref * ramp).max(0.0);
        let v_com_abc =
            synthesize_reference(v_com_mag, theta).expect("magnitude clamped non-negative");

        let mut gains = self.gains;
        gains.v_limit = ctl.m_max * meas.v_c2 / 2.0;
        let out = double_loop_step(
            &mut self.loops,
            abc_to_dq0(v_com_abc, theta),
            abc_to_dq0(meas.v_pcc, theta),
            abc_to_dq0(meas.i_filter, theta),
            abc_to_dq0(meas.i_load, theta),
            self.swing.omega_star,
            &gains,
            dt,
        );
        let v_ref_abc = dq0_to_abc(out.v_ref, theta);
        let modulation = modulation_command(v_ref_abc, meas.v_c2, ctl.m_max)?;

        let (dc_pi, i_com) = capacitor_pi_step(
            self.dc_pi,
            ctl.vc2_ref,
            meas.v_c2,
            ctl.p1_gain,
            ctl.i1_gain,
            dt,
            ctl.i_com_max,
        );
        self.dc_pi = dc_pi;

        Ok(ControlCommand {
            v_com_mag,
            p_com,
            p_meas,
            q_meas,
            i_com,
            swing: self.swing,
            v_ref_abc,
            m_abc: modulation.m,
            clamped: modulation.clamped || out.clamped,
        })
    }
}
