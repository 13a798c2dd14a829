//! Side-by-side comparison tables from run metrics.

use crate::harness::config::{ControllerKind, ScenarioMode};
use crate::harness::scenario::{ChannelStats, RunMetrics};

const DEG: f64 = 180.0 / std::f64::consts::PI;

fn pick(stats: &ChannelStats, channel: &str) -> Option<f64> {
    match channel {
        "phi" => stats.phi,
        "theta" => stats.theta,
        "psi" => stats.psi,
        "z" => stats.z,
        "x" => stats.x,
        "y" => stats.y,
        _ => None,
    }
}

/// Angle channels are reported in squared degrees, translation channels in
/// squared meters.
fn display_mse(channel: &str, mse_si: f64) -> f64 {
    match channel {
        "phi" | "theta" | "psi" => mse_si * DEG * DEG,
        _ => mse_si,
    }
}

fn unit_label(channel: &str) -> &'static str {
    match channel {
        "phi" | "theta" | "psi" => "deg^2",
        _ => "m^2",
    }
}

fn within(a: f64, b: f64, frac: f64) -> bool {
    (a - b).abs() <= frac * a.abs().max(b.abs())
}

/// Renders a markdown report comparing controllers run under identical
/// conditions. Runs are grouped by mode, disturbance and seed; each group
/// becomes one MSE table with a controller column per variant, plus
/// pairwise interval-versus-type-1 checks when both are present.
pub fn compare_report(metrics: &[RunMetrics]) -> String {
    let mut out = String::from("# Tracking comparison\n");
    let mut seen: Vec<(ScenarioMode, String, u64)> = Vec::new();
    for m in metrics {
        let key = (m.mode, m.disturbance.clone(), m.seed);
        if !seen.contains(&key) {
            seen.push(key);
        }
    }

    for (mode, disturbance, seed) in seen {
        let group: Vec<&RunMetrics> = metrics
            .iter()
            .filter(|m| m.mode == mode && m.disturbance == disturbance && m.seed == seed)
            .collect();
        out.push_str(&format!(
            "\n## {} / {} / seed {}\n\n",
            mode.name(),
            disturbance,
            seed
        ));

        let channels: &[&str] = match mode {
            ScenarioMode::Attitude => &["phi", "theta", "psi", "z"],
            ScenarioMode::Position => &["x", "y", "z", "phi", "theta", "psi"],
        };

        out.push_str("| channel |");
        for m in &group {
            out.push_str(&format!(" {} MSE |", m.controller.name()));
        }
        out.push('\n');
        out.push_str("|---|");
        out.push_str(&"---|".repeat(group.len()));
        out.push('\n');
        for ch in channels {
            out.push_str(&format!("| {} ({}) |", ch, unit_label(ch)));
            for m in &group {
                match pick(&m.mse, ch) {
                    Some(v) => out.push_str(&format!(" {:.4} |", display_mse(ch, v))),
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }

        for m in &group {
            out.push_str(&format!(
                "\n{}: roll-torque total variation {:.3}, clamp events {}\n",
                m.controller.name(),
                m.control_total_variation,
                m.clamp_events
            ));
        }

        let iv = group.iter().find(|m| m.controller == ControllerKind::Ivfc);
        let t1 = group.iter().find(|m| m.controller == ControllerKind::T1fc);
        if let (Some(iv), Some(t1)) = (iv, t1) {
            out.push_str("\nInterval versus type-1:\n");
            let leq = |ch: &str| -> Option<bool> {
                Some(pick(&iv.mse, ch)? <= pick(&t1.mse, ch)?)
            };
            let close = |ch: &str, frac: f64| -> Option<bool> {
                Some(within(pick(&iv.mse, ch)?, pick(&t1.mse, ch)?, frac))
            };
            let mut flag = |label: String, ok: Option<bool>| {
                if let Some(ok) = ok {
                    out.push_str(&format!(
                        "- {label}: {}\n",
                        if ok { "yes" } else { "no" }
                    ));
                }
            };
            match mode {
                ScenarioMode::Attitude => {
                    flag("interval <= type-1 on phi".into(), leq("phi"));
                    flag("interval <= type-1 on theta".into(), leq("theta"));
                    flag("psi within 5%".into(), close("psi", 0.05));
                    flag("z within 1%".into(), close("z", 0.01));
                }
                ScenarioMode::Position => {
                    flag("interval <= type-1 on x".into(), leq("x"));
                    flag("interval <= type-1 on y".into(), leq("y"));
                    flag("z within 1%".into(), close("z", 0.01));
                }
            }
        }
    }
    out
}
