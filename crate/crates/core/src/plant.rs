//! Averaged three-phase network: an ideal inverter voltage source behind the
//! filter inductor, PCC shunt capacitors, and switchable balanced loads.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::config::{Event, EventAction, LoadSpec, SystemParams};
use crate::transforms::ThreePhase;
use crate::ynetwork::{dc_side_step, DcState, NetworkError};

/// Magnitude beyond which a state component is treated as divergent.
pub const BLOWUP_LIMIT: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("numeric blow-up: |{channel}| reached {value}")]
    NumericBlowup { channel: &'static str, value: f64 },
    #[error("unknown load {0:?}")]
    UnknownLoad(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// State vector of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub i_filter: ThreePhase,
    pub v_pcc: ThreePhase,
    /// One entry per declared load; only inductive branches evolve.
    pub i_load_rl: Vec<ThreePhase>,
    pub dc: DcState,
}

/// Time derivative of the AC part of [`PlantState`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlantDerivative {
    pub di_filter: ThreePhase,
    pub dv_pcc: ThreePhase,
    pub di_load: Vec<ThreePhase>,
}

impl PlantState {
    /// All currents and voltages at zero, DC link precharged to the supply.
    pub fn initial(load_count: usize, v_dc: f64) -> Self {
        Self {
            i_filter: ThreePhase::ZERO,
            v_pcc: ThreePhase::ZERO,
            i_load_rl: vec![ThreePhase::ZERO; load_count],
            dc: DcState {
                v_c2: v_dc,
                i_in: 0.0,
            },
        }
    }

    fn check_finite(&self) -> Result<(), PlantError> {
        let mut channels = vec![
            ("i_filter", self.i_filter.max_abs()),
            ("v_pcc", self.v_pcc.max_abs()),
            ("v_c2", self.dc.v_c2.abs()),
            ("i_in", self.dc.i_in.abs()),
        ];
        channels.extend(self.i_load_rl.iter().map(|i| ("i_load", i.max_abs())));
        for (channel, value) in channels {
            if !(value <= BLOWUP_LIMIT) {
                return Err(PlantError::NumericBlowup { channel, value });
            }
        }
        Ok(())
    }
}

/// Loads on the bus and which of them are connected.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub loads: Vec<LoadSpec>,
    pub connected: BTreeSet<usize>,
}

/// Outcome of applying an event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventOutcome {
    pub net: NetworkConfig,
    /// Index of the affected load.
    pub load: usize,
    /// The event did not change the connection state.
    pub no_op: bool,
}

impl NetworkConfig {
    pub fn new(loads: &[LoadSpec]) -> Self {
        let connected = loads
            .iter()
            .enumerate()
            .filter(|(_, l)| l.initially_connected)
            .map(|(i, _)| i)
            .collect();
        Self {
            loads: loads.to_vec(),
            connected,
        }
    }

    pub fn index_of(&self, load_id: &str) -> Option<usize> {
        self.loads.iter().position(|l| l.load_id == load_id)
    }

    pub fn is_connected(&self, idx: usize) -> bool {
        self.connected.contains(&idx)
    }

    /// Total current drawn by the connected loads.
    pub fn load_current(&self, s: &PlantState) -> ThreePhase {
        self.connected
            .iter()
            .map(|&k| branch_current(&self.loads[k], s.v_pcc, s.i_load_rl[k]))
            .fold(ThreePhase::ZERO, |acc, i| acc + i)
    }

    /// Power absorbed by the connected loads.
    pub fn load_power(&self, s: &PlantState) -> f64 {
        self.connected
            .iter()
            .map(|&k| {
                s.v_pcc
                    .dot(&branch_current(&self.loads[k], s.v_pcc, s.i_load_rl[k]))
            })
            .sum()
    }
}

fn branch_current(load: &LoadSpec, v_pcc: ThreePhase, i_rl: ThreePhase) -> ThreePhase {
    if load.is_inductive() {
        i_rl
    } else {
        v_pcc * (1.0 / load.r_ohms)
    }
}

/// Connects or disconnects a load. A connected R-L branch starts from zero
/// current; a disconnected one has its current cleared.
pub fn apply_event(
    net: &NetworkConfig,
    state: &mut PlantState,
    e: &Event,
) -> Result<EventOutcome, PlantError> {
    let idx = net
        .index_of(&e.load_id)
        .ok_or_else(|| PlantError::UnknownLoad(e.load_id.clone()))?;
    let mut next = net.clone();
    let changed = match e.action {
        EventAction::Connect => next.connected.insert(idx),
        EventAction::Disconnect => next.connected.remove(&idx),
    };
    if changed {
        state.i_load_rl[idx] = ThreePhase::ZERO;
    }
    Ok(EventOutcome {
        net: next,
        load: idx,
        no_op: !changed,
    })
}

/// Right-hand side of the network equations with the inverter voltage held.
pub fn plant_derivatives(
    s: &PlantState,
    v_inv: ThreePhase,
    net: &NetworkConfig,
    params: &SystemParams,
) -> PlantDerivative {
    let di_filter = (v_inv - s.v_pcc - s.i_filter * params.filter_r) * (1.0 / params.filter_l);
    let i_loads = net.load_current(s);
    let dv_pcc = (s.i_filter - i_loads) * (1.0 / params.filter_c);
    let di_load = net
        .loads
        .iter()
        .enumerate()
        .map(|(k, load)| {
            if load.is_inductive() && net.is_connected(k) {
                (s.v_pcc - s.i_load_rl[k] * load.r_ohms) * (1.0 / load.l_henries)
            } else {
                ThreePhase::ZERO
            }
        })
        .collect();
    PlantDerivative {
        di_filter,
        dv_pcc,
        di_load,
    }
}

/// A state that can be advanced by the classical Runge-Kutta scheme.
pub trait OdeState: Sized {
    type Derivative;

    /// `self + h·d`
    fn advanced(&self, d: &Self::Derivative, h: f64) -> Self;

    /// `(k1 + 2·k2 + 2·k3 + k4) / 6`
    fn rk4_blend(
        k1: &Self::Derivative,
        k2: &Self::Derivative,
        k3: &Self::Derivative,
        k4: &Self::Derivative,
    ) -> Self::Derivative;
}

/// One classical 4th-order Runge-Kutta step.
pub fn rk4<S: OdeState>(s: &S, h: f64, f: impl Fn(&S) -> S::Derivative) -> S {
    let k1 = f(s);
    let k2 = f(&s.advanced(&k1, h / 2.0));
    let k3 = f(&s.advanced(&k2, h / 2.0));
    let k4 = f(&s.advanced(&k3, h));
    s.advanced(&S::rk4_blend(&k1, &k2, &k3, &k4), h)
}

impl OdeState for f64 {
    type Derivative = f64;

    fn advanced(&self, d: &f64, h: f64) -> f64 {
        self + h * d
    }

    fn rk4_blend(k1: &f64, k2: &f64, k3: &f64, k4: &f64) -> f64 {
        (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    }
}

impl<const N: usize> OdeState for [f64; N] {
    type Derivative = [f64; N];

    fn advanced(&self, d: &[f64; N], h: f64) -> [f64; N] {
        std::array::from_fn(|i| self[i] + h * d[i])
    }

    fn rk4_blend(k1: &[f64; N], k2: &[f64; N], k3: &[f64; N], k4: &[f64; N]) -> [f64; N] {
        std::array::from_fn(|i| (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0)
    }
}

fn blend3(k1: ThreePhase, k2: ThreePhase, k3: ThreePhase, k4: ThreePhase) -> ThreePhase {
    (k1 + (k2 + k3) * 2.0 + k4) * (1.0 / 6.0)
}

impl OdeState for PlantState {
    type Derivative = PlantDerivative;

    // The DC substate is advanced separately.
    fn advanced(&self, d: &PlantDerivative, h: f64) -> PlantState {
        PlantState {
            i_filter: self.i_filter + d.di_filter * h,
            v_pcc: self.v_pcc + d.dv_pcc * h,
            i_load_rl: self
                .i_load_rl
                .iter()
                .zip(&d.di_load)
                .map(|(&i, &di)| i + di * h)
                .collect(),
            dc: self.dc,
        }
    }

    fn rk4_blend(
        k1: &PlantDerivative,
        k2: &PlantDerivative,
        k3: &PlantDerivative,
        k4: &PlantDerivative,
    ) -> PlantDerivative {
        PlantDerivative {
            di_filter: blend3(k1.di_filter, k2.di_filter, k3.di_filter, k4.di_filter),
            dv_pcc: blend3(k1.dv_pcc, k2.dv_pcc, k3.dv_pcc, k4.dv_pcc),
            di_load: (0..k1.di_load.len())
                .map(|i| blend3(k1.di_load[i], k2.di_load[i], k3.di_load[i], k4.di_load[i]))
                .collect(),
        }
    }
}

/// Inverter terminal voltage of the averaged bridge.
pub fn inverter_voltage(m_abc: ThreePhase, v_pn: f64) -> ThreePhase {
    m_abc * (v_pn / 2.0)
}

/// Advances the network by `dt` with the modulation and source-current
/// command held. The AC part uses RK4; the DC part one Euler step driven by
/// the bridge power averaged over the step, so the energy leaving the link
/// matches the energy the AC side receives.
pub fn rk4_step(
    s: &PlantState,
    m_abc: ThreePhase,
    i_com: f64,
    net: &NetworkConfig,
    params: &SystemParams,
    dt: f64,
) -> Result<PlantState, PlantError> {
    let v_inv = inverter_voltage(m_abc, s.dc.v_c2);
    let mut next = rk4(s, dt, |x| plant_derivatives(x, v_inv, net, params));
    let p_inverter = v_inv.dot(&((s.i_filter + next.i_filter) * 0.5));
    next.dc = dc_side_step(s.dc, i_com, p_inverter, params, dt)?;
    next.check_finite()?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn params() -> SystemParams {
        SystemParams::default()
    }

    fn load(id: &str, r: f64, l: f64, on: bool) -> LoadSpec {
        LoadSpec {
            load_id: id.into(),
            r_ohms: r,
            l_henries: l,
            initially_connected: on,
        }
    }

    #[test]
    fn zero_state_zero_derivative() {
        let net = NetworkConfig::new(&[load("r", 10.0, 0.0, true), load("rl", 10.0, 0.02, true)]);
        let s = PlantState::initial(2, 400.0);
        let d = plant_derivatives(&s, ThreePhase::ZERO, &net, &params());
        assert_eq!(d.di_filter, ThreePhase::ZERO);
        assert_eq!(d.dv_pcc, ThreePhase::ZERO);
        assert!(d.di_load.iter().all(|x| *x == ThreePhase::ZERO));
    }

    #[test]
    fn resistive_branch_obeys_ohm() {
        let net = NetworkConfig::new(&[load("r", 8.0, 0.0, true)]);
        let mut s = PlantState::initial(1, 400.0);
        s.v_pcc = ThreePhase::new(160.0, -80.0, -80.0);
        assert_eq!(net.load_current(&s), ThreePhase::new(20.0, -10.0, -10.0));
    }

    #[test]
    fn scalar_decay_matches_closed_form() {
        let x = rk4(&1.0f64, 1e-3, |x| -x);
        assert!((x - 0.9990005).abs() < 2e-10);
        assert!((x - (-1e-3f64).exp()).abs() < 1e-12);
    }

    fn decay_error(dt: f64) -> f64 {
        let steps = (1.0 / dt).round() as usize;
        let mut x = 1.0f64;
        for _ in 0..steps {
            x = rk4(&x, dt, |x| -x);
        }
        (x - (-1.0f64).exp()).abs()
    }

    #[test]
    fn fourth_order_convergence() {
        let ratio = decay_error(0.1) / decay_error(0.05);
        assert!((14.0..=18.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn lossless_lc_conserves_energy() {
        let (l, c): (f64, f64) = (1e-3, 30e-6);
        let period = TAU * (l * c).sqrt();
        let dt = period / 1000.0;
        let energy = |s: &[f64; 2]| 0.5 * l * s[0] * s[0] + 0.5 * c * s[1] * s[1];
        let mut s = [1.0, 0.0];
        let e0 = energy(&s);
        for _ in 0..10_000 {
            s = rk4(&s, dt, |x| [-x[1] / l, x[0] / c]);
        }
        assert!(((energy(&s) - e0) / e0).abs() < 1e-6);
    }

    #[test]
    fn rl_branch_reaches_phasor_amplitude() {
        // 10 Ω with X_L = 10 Ω at 60 Hz: |Z| = 14.14 Ω, 45° lag
        let l = 10.0 / (TAU * 60.0);
        let net = NetworkConfig::new(&[load("rl", 10.0, l, true)]);
        let sys = SystemParams {
            filter_c: 1.0,
            ..params()
        };
        let dt = 1e-5;
        let amp = 100.0;
        let mut s = PlantState::initial(1, 400.0);
        let mut t = 0.0;
        let mut peak: f64 = 0.0;
        let mut at_peak_phase = 0.0;
        // Drive the PCC voltage directly; the branch ODE is what is tested.
        while t < 0.5 {
            let v = ThreePhase::new(
                amp * (TAU * 60.0 * t).cos(),
                amp * (TAU * 60.0 * t - TAU / 3.0).cos(),
                amp * (TAU * 60.0 * t + TAU / 3.0).cos(),
            );
            s.v_pcc = v;
            let d = plant_derivatives(&s, ThreePhase::ZERO, &net, &sys);
            s.i_load_rl[0] = s.i_load_rl[0] + d.di_load[0] * dt;
            t += dt;
            if t > 0.45 && s.i_load_rl[0].a > peak {
                peak = s.i_load_rl[0].a;
                at_peak_phase = (TAU * 60.0 * t).rem_euclid(TAU);
            }
        }
        let expected = amp / (200.0f64).sqrt();
        assert!(
            (peak - expected).abs() / expected < 2e-3,
            "{peak} vs {expected}"
        );
        assert!((at_peak_phase - PI / 4.0).abs() < 0.01, "{at_peak_phase}");
    }

    #[test]
    fn events_connect_and_disconnect() {
        let net =
            NetworkConfig::new(&[load("base", 10.0, 0.0, true), load("rl", 10.0, 0.02, false)]);
        let mut s = PlantState::initial(2, 400.0);
        let connect = Event {
            time: 0.4,
            action: EventAction::Connect,
            load_id: "rl".into(),
        };
        let out = apply_event(&net, &mut s, &connect).unwrap();
        assert!(out.net.is_connected(1) && !out.no_op);

        let again = apply_event(&out.net, &mut s, &connect).unwrap();
        assert!(again.no_op);
        assert_eq!(again.net, out.net);

        s.i_load_rl[1] = ThreePhase::new(3.0, -1.0, -2.0);
        let off = apply_event(
            &out.net,
            &mut s,
            &Event {
                time: 0.8,
                action: EventAction::Disconnect,
                load_id: "rl".into(),
            },
        )
        .unwrap();
        assert!(!off.net.is_connected(1));
        assert_eq!(s.i_load_rl[1], ThreePhase::ZERO);

        let bad = Event {
            time: 0.1,
            action: EventAction::Disconnect,
            load_id: "ghost".into(),
        };
        assert_eq!(
            apply_event(&net, &mut s, &bad),
            Err(PlantError::UnknownLoad("ghost".into()))
        );
    }

    #[test]
    fn disconnected_branch_stays_dead() {
        let net =
            NetworkConfig::new(&[load("base", 10.0, 0.0, true), load("rl", 10.0, 0.02, false)]);
        let mut s = PlantState::initial(2, 480.0);
        s.v_pcc = ThreePhase::new(100.0, -50.0, -50.0);
        for _ in 0..100 {
            s = rk4_step(
                &s,
                ThreePhase::new(0.3, -0.1, -0.2),
                0.0,
                &net,
                &params(),
                20e-6,
            )
            .unwrap();
            assert_eq!(s.i_load_rl[1], ThreePhase::ZERO);
        }
    }

    #[test]
    fn blowup_is_reported() {
        let net = NetworkConfig::new(&[load("base", 10.0, 0.0, true)]);
        let mut s = PlantState::initial(1, 480.0);
        s.v_pcc = ThreePhase::splat(2e9);
        assert!(matches!(
            rk4_step(&s, ThreePhase::ZERO, 0.0, &net, &params(), 20e-6),
            Err(PlantError::NumericBlowup { .. })
        ));
    }

    proptest! {
        #[test]
        fn instantaneous_power_balance(
            i_f in proptest::array::uniform3(-50.0..50.0f64),
            v in proptest::array::uniform3(-400.0..400.0f64),
            i_rl in proptest::array::uniform3(-30.0..30.0f64),
            m in proptest::array::uniform3(-0.9..0.9f64),
            r_f in 0.0..0.5f64,
        ) {
            let sys = SystemParams { filter_r: r_f, ..params() };
            let loads = [load("base", 9.6, 0.0, true), load("rl", 18.0, 0.036, true)];
            let net = NetworkConfig::new(&loads);
            let mut s = PlantState::initial(2, 480.0);
            s.i_filter = ThreePhase::new(i_f[0], i_f[1], i_f[2]);
            s.v_pcc = ThreePhase::new(v[0], v[1], v[2]);
            s.i_load_rl[1] = ThreePhase::new(i_rl[0], i_rl[1], i_rl[2]);
            let v_inv = inverter_voltage(ThreePhase::new(m[0], m[1], m[2]), 480.0);
            let d = plant_derivatives(&s, v_inv, &net, &sys);

            let p_inv = v_inv.dot(&s.i_filter);
            // net.load_power includes the branch inductor's energy rate; use
            // dissipation here and count that inductor in the stored energy
            let p_loads = s.v_pcc.dot(&s.v_pcc) / 9.6 + 18.0 * s.i_load_rl[1].dot(&s.i_load_rl[1]);
            prop_assert!((net.load_power(&s) - p_loads - 0.036 * s.i_load_rl[1].dot(&d.di_load[1])).abs() <= 1e-9 * (p_loads.abs() + 1.0));
            let p_filter_loss = r_f * s.i_filter.dot(&s.i_filter);
            let de_dt = sys.filter_l * s.i_filter.dot(&d.di_filter)
                + sys.filter_c * s.v_pcc.dot(&d.dv_pcc)
                + 0.036 * s.i_load_rl[1].dot(&d.di_load[1]);
            let residual = p_inv - p_loads - p_filter_loss - de_dt;
            prop_assert!(residual.abs() <= 1e-9 * (p_inv.abs() + p_loads.abs() + 1.0));
        }
    }
}
