//! Averaged model of the Y-source impedance network and the DC link.
//!
//! The network is not simulated at switch level. Its static gain sets the
//! DC-link operating point, its per-state Thevenin reactances feed the current
//! loop decoupling, and the DC side is a power-balance capacitor charged by a
//! slew-limited input current.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SystemParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("duty {duty} crosses the gain pole (denominator {denominator} <= 0)")]
    PoleCrossed { duty: f64, denominator: f64 },
    #[error("modulation index {m_index} overlaps shoot-through (limit {limit})")]
    ModulationOverlap { m_index: f64, limit: f64 },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("DC link collapsed: v_c2 = {v_c2} V")]
    DcCollapse { v_c2: f64 },
}

/// Switching state of the impedance network within one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwitchState {
    ShootThrough,
    NonShootThrough,
}

/// Averaged DC-side state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcState {
    /// Network capacitor / DC-link voltage.
    pub v_c2: f64,
    /// Source current.
    pub i_in: f64,
}

/// Duty ratio at which the gain denominator reaches zero.
pub fn duty_pole(k_winding: f64, p_winding: f64) -> f64 {
    (1.0 + p_winding) / (2.0 + p_winding + k_winding)
}

/// DC-link voltage gain `B` of the network at shoot-through duty `duty_d`.
pub fn boost_factor(duty_d: f64, k_winding: f64, p_winding: f64) -> Result<f64, NetworkError> {
    let denominator = (1.0 - duty_d) * (1.0 + p_winding) - duty_d * (1.0 + k_winding);
    if denominator <= 0.0 || denominator.is_nan() {
        return Err(NetworkError::PoleCrossed {
            duty: duty_d,
            denominator,
        });
    }
    Ok((1.0 + p_winding) / denominator)
}

/// Peak phase voltage the inverter can produce at modulation index `m_index`.
pub fn ac_peak_voltage(
    m_index: f64,
    duty_d: f64,
    k_winding: f64,
    p_winding: f64,
    v_dc: f64,
) -> Result<f64, NetworkError> {
    let limit = 1.0 - duty_d;
    if m_index > limit {
        return Err(NetworkError::ModulationOverlap { m_index, limit });
    }
    Ok(m_index / 2.0 * boost_factor(duty_d, k_winding, p_winding)? * v_dc)
}

/// Thevenin reactance of the network seen in the given switching state.
pub fn thevenin_reactance(x_l: f64, state: SwitchState) -> Result<f64, NetworkError> {
    if !(x_l > 0.0) {
        return Err(NetworkError::NonPositive("x_l"));
    }
    Ok(match state {
        SwitchState::ShootThrough => 2.0 / 3.0 * x_l,
        SwitchState::NonShootThrough => 5.0 / 3.0 * x_l,
    })
}

/// Duty-weighted Thevenin inductance of the network. Reactance scales
/// linearly with inductance, so the per-state factors apply unchanged.
pub fn averaged_thevenin_inductance(network_l: f64, duty_d: f64) -> Result<f64, NetworkError> {
    let st = thevenin_reactance(network_l, SwitchState::ShootThrough)?;
    let nst = thevenin_reactance(network_l, SwitchState::NonShootThrough)?;
    Ok(duty_d * st + (1.0 - duty_d) * nst)
}

/// One explicit-Euler step of the DC side.
///
/// The source current moves toward `i_com` no faster than `v_dc / source_l`.
/// The DC-link capacitor integrates the balance between source power and the
/// power drawn by the inverter bridge.
pub fn dc_side_step(
    state: DcState,
    i_com: f64,
    p_inverter: f64,
    params: &SystemParams,
    dt: f64,
) -> Result<DcState, NetworkError> {
    let max_delta = params.v_dc / params.source_l * dt;
    let delta = (i_com - state.i_in).clamp(-max_delta, max_delta);
    let i_in = state.i_in + delta;

    let p_source = params.v_dc * state.i_in;
    let v_c2 = state.v_c2 + dt * (p_source - p_inverter) / (params.dc_cap * state.v_c2);
    if !(v_c2 >= 0.1 * params.v_dc) {
        return Err(NetworkError::DcCollapse { v_c2 });
    }
    Ok(DcState { v_c2, i_in })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unity_gain_without_shoot_through() {
        for (k, p) in [(1.0, 1.0), (0.3, 2.5), (4.0, 0.1)] {
            assert_eq!(boost_factor(0.0, k, p).unwrap(), 1.0);
        }
    }

    #[test]
    fn twelfth_duty_gives_six_fifths() {
        // 2 / (2·11/12 − 2/12) = 2 / (5/3) = 6/5
        let b = boost_factor(1.0 / 12.0, 1.0, 1.0).unwrap();
        assert!((b - 1.2).abs() < 1e-14);
    }

    #[test]
    fn pole_is_rejected() {
        assert!(matches!(
            boost_factor(0.5, 1.0, 1.0),
            Err(NetworkError::PoleCrossed { .. })
        ));
        assert!(matches!(
            boost_factor(0.7, 1.0, 1.0),
            Err(NetworkError::PoleCrossed { .. })
        ));
        assert_eq!(duty_pole(1.0, 1.0), 0.5);
    }

    #[test]
    fn ac_peak_examples() {
        assert_eq!(ac_peak_voltage(1.0, 0.0, 1.0, 1.0, 400.0).unwrap(), 200.0);
        let v = ac_peak_voltage(0.9, 1.0 / 12.0, 1.0, 1.0, 400.0).unwrap();
        assert!((v - 216.0).abs() < 1e-9);
        assert_eq!(ac_peak_voltage(0.0, 0.1, 1.0, 1.0, 400.0).unwrap(), 0.0);
        assert!(matches!(
            ac_peak_voltage(0.95, 0.1, 1.0, 1.0, 400.0),
            Err(NetworkError::ModulationOverlap { .. })
        ));
    }

    #[test]
    fn thevenin_factors() {
        let st = thevenin_reactance(3.0, SwitchState::ShootThrough).unwrap();
        let nst = thevenin_reactance(3.0, SwitchState::NonShootThrough).unwrap();
        assert!((st - 2.0).abs() < 1e-15);
        assert!((nst - 5.0).abs() < 1e-15);
        assert_eq!(
            thevenin_reactance(0.0, SwitchState::ShootThrough),
            Err(NetworkError::NonPositive("x_l"))
        );
    }

    #[test]
    fn averaged_inductance_weights_by_duty() {
        let l = averaged_thevenin_inductance(3e-4, 0.25).unwrap();
        let expected = 0.25 * 2e-4 + 0.75 * 5e-4;
        assert!((l - expected).abs() < 1e-18);
    }

    fn dc_params() -> SystemParams {
        SystemParams {
            v_dc: 400.0,
            source_l: 2e-3,
            dc_cap: 20e-3,
            ..SystemParams::default()
        }
    }

    #[test]
    fn equilibrium_is_fixed() {
        let p = dc_params();
        let s = DcState {
            v_c2: 480.0,
            i_in: 15.0,
        };
        let next = dc_side_step(s, 15.0, 400.0 * 15.0, &p, 20e-6).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn input_current_slope_is_capped() {
        let p = dc_params();
        let s = DcState {
            v_c2: 480.0,
            i_in: 0.0,
        };
        let next = dc_side_step(s, 10.0, 0.0, &p, 10e-6).unwrap();
        // 400 V / 2 mH = 200 A/ms, times 10 µs
        assert!(next.i_in <= 2.0 + 1e-12);
        assert!((next.i_in - 2.0).abs() < 1e-12);

        let back = dc_side_step(next, -50.0, 0.0, &p, 10e-6).unwrap();
        assert!((back.i_in - 0.0).abs() < 1e-12);
    }

    #[test]
    fn drained_link_collapses() {
        let p = dc_params();
        let mut s = DcState {
            v_c2: 480.0,
            i_in: 0.0,
        };
        let mut collapsed = false;
        for _ in 0..100_000 {
            match dc_side_step(s, 0.0, 1e6, &p, 20e-6) {
                Ok(next) => s = next,
                Err(NetworkError::DcCollapse { v_c2 }) => {
                    assert!(v_c2 < 40.0);
                    collapsed = true;
                    break;
                }
                Err(e) => panic!("unexpected {e}"),
            }
        }
        assert!(collapsed);
    }

    proptest! {
        #[test]
        fn gain_increases_with_duty(k in 0.01..5.0f64, p in 0.01..5.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let pole = duty_pole(k, p);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-9);
            let d_lo = lo * pole * 0.999;
            let d_hi = hi * pole * 0.999;
            let b_lo = boost_factor(d_lo, k, p).unwrap();
            let b_hi = boost_factor(d_hi, k, p).unwrap();
            prop_assert!(b_hi > b_lo);
            prop_assert!(b_lo >= 1.0);
        }

        #[test]
        fn slope_bound_holds(i0 in -100.0..100.0f64, i_com in -1e4..1e4f64, p_inv in -2e4..2e4f64) {
            let p = dc_params();
            let dt = 20e-6;
            let s = DcState { v_c2: 480.0, i_in: i0 };
            let next = dc_side_step(s, i_com, p_inv, &p, dt).unwrap();
            let bound = p.v_dc / p.source_l * dt;
            prop_assert!((next.i_in - i0).abs() <= bound * (1.0 + 1e-12));
        }
    }
}
