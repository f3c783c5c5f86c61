use serde::{Deserialize, Serialize};

use crate::analysis::{
    efficiency, rms, thd, AnalysisError, MeasurementWindow, WindowMetrics, DEFAULT_HARMONICS,
};
use crate::config::Scenario;

use super::SimOutput;

/// Settling time excluded after the start of the run.
pub const STARTUP_SETTLE: f64 = 0.25;
/// Settling time excluded after each event.
pub const EVENT_SETTLE: f64 = 0.15;
/// Margin kept before the next event or the end of the run.
pub const END_GUARD: f64 = 0.01;
/// Fundamental periods used for reported THD.
pub const THD_PERIODS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowLabel {
    PreStep,
    DuringStep,
    PostStep,
}

impl WindowLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            WindowLabel::PreStep => "pre_step",
            WindowLabel::DuringStep => "during_step",
            WindowLabel::PostStep => "post_step",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpan {
    pub label: WindowLabel,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowReport {
    pub span: WindowSpan,
    pub metrics: WindowMetrics,
}

/// Serialized form of [`WindowMetrics`]; ratios become percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub p_active_w: f64,
    pub q_reactive_var: f64,
    pub v_rms_v: f64,
    pub f_hz: f64,
    pub thd_pct: f64,
    pub efficiency_pct: f64,
}

impl From<&WindowMetrics> for MetricsRecord {
    fn from(m: &WindowMetrics) -> Self {
        Self {
            p_active_w: m.p_active,
            q_reactive_var: m.q_reactive,
            v_rms_v: m.v_rms,
            f_hz: m.f_est,
            thd_pct: 100.0 * m.thd,
            efficiency_pct: 100.0 * m.efficiency,
        }
    }
}

/// Steady-state windows between startup, events and the end of the run.
pub fn plan_windows(sc: &Scenario) -> Vec<WindowSpan> {
    let mut cuts: Vec<f64> = sc.events.iter().map(|e| e.time).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let starts = std::iter::once(0.0).chain(cuts.iter().copied());
    let ends = cuts.iter().copied().chain(std::iter::once(sc.t_end));
    let last = cuts.len();
    starts
        .zip(ends)
        .enumerate()
        .filter_map(|(i, (seg_start, seg_end))| {
            let settle = if i == 0 { STARTUP_SETTLE } else { EVENT_SETTLE };
            let t_start = seg_start + settle;
            let t_end = seg_end - END_GUARD;
            let label = match i {
                0 => WindowLabel::PreStep,
                i if i == last => WindowLabel::PostStep,
                _ => WindowLabel::DuringStep,
            };
            (t_end > t_start).then_some(WindowSpan {
                label,
                t_start,
                t_end,
            })
        })
        .collect()
}

/// Reduces the sampled channels inside `span` to window metrics.
///
/// All metrics use the longest trailing part of the span that covers a whole
/// number of fundamental periods on the sample grid; THD uses the last
/// [`THD_PERIODS`] of those.
pub fn compute_window_metrics(
    out: &SimOutput,
    span: &WindowSpan,
) -> Result<WindowMetrics, AnalysisError> {
    let eps = 1e-9;
    let first = out.time.partition_point(|&t| t < span.t_start - eps);
    let last = out.time.partition_point(|&t| t <= span.t_end + eps);
    if last <= first {
        return Err(AnalysisError::InvalidWindow(
            "window holds no samples".into(),
        ));
    }
    let fs = out.sample_rate();
    let f0 = out.meta.f_ref;
    let channel = |name: &str| -> Result<&[f64], AnalysisError> {
        out.channel(name)
            .map(|c| &c[first..last])
            .ok_or_else(|| AnalysisError::InvalidWindow(format!("missing channel {name}")))
    };

    let window = |name: &str, periods: Option<usize>| {
        channel(name).and_then(|c| MeasurementWindow::trailing(c, fs, f0, periods))
    };

    let p_load = window("p_load", None)?;
    let p_in = window("p_in", None)?;
    let q_load = window("q_load", None)?;
    let f_hz = window("f_hz", None)?;

    let phases = ["v_pcc_a", "v_pcc_b", "v_pcc_c"];
    let mut v_rms = 0.0;
    let mut worst_thd = 0.0f64;
    for name in phases {
        v_rms += rms(&window(name, None)?) / 3.0;
        worst_thd = worst_thd.max(thd(&window(name, Some(THD_PERIODS))?, DEFAULT_HARMONICS)?);
    }

    Ok(WindowMetrics {
        p_active: p_load.mean(),
        q_reactive: q_load.mean(),
        v_rms,
        f_est: f_hz.mean(),
        thd: worst_thd,
        efficiency: efficiency(p_load.mean(), p_in.mean())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_names_match_serialization() {
        for l in [
            WindowLabel::PreStep,
            WindowLabel::DuringStep,
            WindowLabel::PostStep,
        ] {
            assert_eq!(serde_json::to_value(l).unwrap(), l.as_str());
        }
    }
    use crate::config::Config;

    #[test]
    fn default_timeline_windows() {
        let w = plan_windows(&Config::default().scenario);
        let expected = [
            (WindowLabel::PreStep, 0.25, 0.39),
            (WindowLabel::DuringStep, 0.55, 0.79),
            (WindowLabel::PostStep, 0.95, 1.19),
        ];
        assert_eq!(w.len(), 3);
        for (got, (label, a, b)) in w.iter().zip(expected) {
            assert_eq!(got.label, label);
            assert!((got.t_start - a).abs() < 1e-12);
            assert!((got.t_end - b).abs() < 1e-12);
        }
    }

    #[test]
    fn no_events_single_window() {
        let mut sc = Config::default().scenario;
        sc.events.clear();
        let w = plan_windows(&sc);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].label, WindowLabel::PreStep);
        assert!((w[0].t_end - 1.19).abs() < 1e-12);
    }

    #[test]
    fn windows_avoid_events() {
        let sc = Config::default().scenario;
        for w in plan_windows(&sc) {
            for e in &sc.events {
                assert!(e.time < w.t_start - 0.1 || e.time > w.t_end);
            }
        }
    }
}
