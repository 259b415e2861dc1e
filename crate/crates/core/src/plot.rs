//! Learning-curve export: CSV of per-episode rewards and a minimal SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::agent::{moving_average, RunReport, MOVING_AVERAGE_WINDOW};
use crate::error::{Error, Result};

pub const REPORT_FILE: &str = "report.json";
pub const CURVE_CSV: &str = "curve.csv";
pub const CURVE_SVG: &str = "curve.svg";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 40.0;

/// Columns `episode,reward,moving_avg`; episodes count from 1.
pub fn learning_curve_csv(rewards: &[f64]) -> String {
    let avg = moving_average(rewards, MOVING_AVERAGE_WINDOW);
    let mut out = String::from("episode,reward,moving_avg\n");
    for (i, (r, m)) in rewards.iter().zip(&avg).enumerate() {
        writeln!(out, "{},{},{}", i + 1, r, m).expect("writing to a String");
    }
    out
}

/// Polyline of the moving average inside a framed plot area.
pub fn learning_curve_svg(rewards: &[f64]) -> String {
    let avg = moving_average(rewards, MOVING_AVERAGE_WINDOW);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    );
    let (x0, y0) = (MARGIN, MARGIN);
    let (w, h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    writeln!(svg, "<rect x=\"{x0}\" y=\"{y0}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"black\"/>").expect("string");
    if !avg.is_empty() {
        let lo = avg.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = avg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi - lo < 1e-12 { (lo - 1.0, hi + 1.0) } else { (lo, hi) };
        let span = (avg.len().max(2) - 1) as f64;
        let points: Vec<String> = avg
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let x = x0 + w * i as f64 / span;
                let y = y0 + h * (hi - v) / (hi - lo);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        writeln!(svg, "<polyline fill=\"none\" stroke=\"steelblue\" points=\"{}\"/>", points.join(" ")).expect("string");
        writeln!(svg, "<text x=\"4\" y=\"{:.2}\" font-size=\"10\">{hi:.2}</text>", y0 + 4.0).expect("string");
        writeln!(svg, "<text x=\"4\" y=\"{:.2}\" font-size=\"10\">{lo:.2}</text>", y0 + h).expect("string");
    }
    svg.push_str("</svg>\n");
    svg
}

/// Reads `report.json` from `run_dir` and writes the CSV and SVG beside it.
pub fn emit_learning_curve(run_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let src = run_dir.join(REPORT_FILE);
    let text = fs::read_to_string(&src).map_err(|e| Error::io(&src, e))?;
    let report: RunReport = serde_json::from_str(&text)?;
    let csv = run_dir.join(CURVE_CSV);
    let svg = run_dir.join(CURVE_SVG);
    fs::write(&csv, learning_curve_csv(&report.episode_rewards)).map_err(|e| Error::io(&csv, e))?;
    fs::write(&svg, learning_curve_svg(&report.episode_rewards)).map_err(|e| Error::io(&svg, e))?;
    Ok((csv, svg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn polyline_ys(svg: &str) -> Vec<f64> {
        let start = svg.find("points=\"").expect("polyline") + 8;
        let end = start + svg[start..].find('"').unwrap();
        svg[start..end]
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    }

    #[test]
    fn empty_report_gives_header_and_bare_frame() {
        assert_eq!(learning_curve_csv(&[]), "episode,reward,moving_avg\n");
        let svg = learning_curve_svg(&[]);
        assert!(svg.contains("<rect"));
        assert!(!svg.contains("polyline"));
    }

    #[test]
    fn constant_rewards_are_flat() {
        let ys = polyline_ys(&learning_curve_svg(&[2.0; 30]));
        assert_eq!(ys.len(), 30);
        assert!(ys.iter().all(|y| *y == ys[0]));
    }

    #[test]
    fn hundredth_moving_average_is_mean_of_first_hundred() {
        let rewards: Vec<f64> = (0..150).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let csv = learning_curve_csv(&rewards);
        let line = csv.lines().nth(100).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], "100");
        let want = rewards[..100].iter().sum::<f64>() / 100.0;
        assert!((fields[2].parse::<f64>().unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn missing_report_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_learning_curve(dir.path()), Err(Error::Io { .. })));
    }
}
