use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::EpisodeLog;

pub const PLOT_SCHEMA: &str = "safenav-trajectory/1";

/// Spacing of the time labels along each trajectory (s).
const LABEL_PERIOD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    /// `"robot"` or `"ped<i>"`.
    pub agent: String,
    pub radius: f64,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub series: Vec<PlotSeries>,
    /// Times at which positions are labeled: every 2 s within the episode.
    pub labeled_instants: Vec<f64>,
    pub goal: (f64, f64),
    pub half_width: f64,
}

pub fn plot_data(log: &EpisodeLog) -> PlotData {
    let params = &log.header.scenario.params;
    let t: Vec<f64> = log.records.iter().map(|r| r.t).collect();
    let mut series = vec![PlotSeries {
        agent: "robot".into(),
        radius: params.robot_radius,
        t: t.clone(),
        x: log.records.iter().map(|r| r.robot[0]).collect(),
        y: log.records.iter().map(|r| r.robot[1]).collect(),
    }];
    for i in 0..log.header.scenario.pedestrians.len() {
        series.push(PlotSeries {
            agent: format!("ped{i}"),
            radius: params.pedestrian_radius,
            t: t.clone(),
            x: log.records.iter().map(|r| r.pedestrians[i][0]).collect(),
            y: log.records.iter().map(|r| r.pedestrians[i][1]).collect(),
        });
    }
    let end = t.last().copied().unwrap_or(0.0);
    let labeled_instants = (0..)
        .map(|k| k as f64 * LABEL_PERIOD)
        .take_while(|s| *s <= end + 1e-9)
        .collect();
    PlotData {
        series,
        labeled_instants,
        goal: params.robot_goal,
        half_width: params.half_width,
    }
}

fn is_labeled(t: f64, instants: &[f64]) -> bool {
    instants.iter().any(|s| (s - t).abs() < 1e-9)
}

/// CSV with columns `agent,t,x,y,labeled`.
pub fn render_plot_csv(data: &PlotData) -> String {
    let mut out = format!("# schema: {PLOT_SCHEMA}\nagent,t,x,y,labeled\n");
    for s in &data.series {
        for k in 0..s.t.len() {
            let _ = writeln!(
                out,
                "{},{:.3},{:.6},{:.6},{}",
                s.agent,
                s.t[k],
                s.x[k],
                s.y[k],
                u8::from(is_labeled(s.t[k], &data.labeled_instants))
            );
        }
    }
    out
}

pub fn emit_trajectory_plot_data(log: &EpisodeLog, path: &Path) -> Result<()> {
    fs::write(path, render_plot_csv(&plot_data(log))).map_err(|e| Error::io(path, e))
}

/// Standalone SVG of the trajectories with time labels.
pub fn render_svg(data: &PlotData) -> String {
    const SCALE: f64 = 50.0;
    let w = data.half_width;
    let size = 2.0 * w * SCALE;
    let px = |x: f64| (x + w) * SCALE;
    let py = |y: f64| (w - y) * SCALE;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size:.0}\" height=\"{size:.0}\" viewBox=\"0 0 {size:.0} {size:.0}\">\n"
    );
    let _ = writeln!(out, "<!-- schema: {PLOT_SCHEMA} -->");
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\" stroke=\"black\"/>");
    let _ = writeln!(
        out,
        "<path d=\"M {:.1} {:.1} l 6 6 m -12 0 l 6 -6 l 6 -6 m -12 0 l 6 6\" stroke=\"green\" stroke-width=\"2\"/>",
        px(data.goal.0),
        py(data.goal.1)
    );
    for (i, s) in data.series.iter().enumerate() {
        let color = if i == 0 { "crimson".to_string() } else { format!("hsl({}, 60%, 45%)", (i * 67) % 360) };
        let points: Vec<String> = s.x.iter().zip(&s.y).map(|(x, y)| format!("{:.1},{:.1}", px(*x), py(*y))).collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            points.join(" ")
        );
        for k in 0..s.t.len() {
            if is_labeled(s.t[k], &data.labeled_instants) {
                let _ = writeln!(
                    out,
                    "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"{:.1}\" fill=\"none\" stroke=\"{color}\"/>",
                    px(s.x[k]),
                    py(s.y[k]),
                    s.radius * SCALE
                );
                let _ = writeln!(
                    out,
                    "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" fill=\"{color}\">{:.0}</text>",
                    px(s.x[k]) + 4.0,
                    py(s.y[k]) - 4.0,
                    s.t[k]
                );
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

pub fn emit_trajectory_svg(log: &EpisodeLog, path: &Path) -> Result<()> {
    fs::write(path, render_svg(&plot_data(log))).map_err(|e| Error::io(path, e))
}
