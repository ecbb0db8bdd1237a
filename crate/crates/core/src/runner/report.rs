//! Best-fitness-vs-round tables and SVG curves from run logs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::log::read_log;
use super::RunError;
use crate::engine::RunRecord;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// "accuracy" or "loss", when the run's effective config is next to the log.
    pub fitness_kind: Option<String>,
    pub records: Vec<RunRecord>,
}

impl Series {
    pub fn train_points(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .map(|r| (f64::from(r.round), r.best_train_fitness))
            .collect()
    }

    pub fn test_points(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.best_test_fitness.map(|t| (f64::from(r.round), t)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
    /// (label, train points, test points) per series.
    pub series: Vec<(String, usize, usize)>,
}

/// Reads one log. The label is `seed N` when `effective_config.toml` sits
/// beside it, otherwise the directory name.
pub fn load_series(log: &Path) -> Result<Series, RunError> {
    let records = read_log(log)?;
    if records.is_empty() {
        return Err(RunError::EmptyLog(log.display().to_string()));
    }
    let dir = log.parent().unwrap_or(Path::new("."));
    let config = std::fs::read_to_string(dir.join(super::CONFIG_FILE))
        .ok()
        .and_then(|t| RunConfig::from_toml(&t).ok());
    let fallback = || {
        dir.file_name()
            .or_else(|| log.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into())
    };
    Ok(Series {
        label: config
            .as_ref()
            .map(|c| format!("seed {}", c.evolution.seed))
            .unwrap_or_else(fallback),
        fitness_kind: config.map(|c| c.evolution.fitness_kind.as_str().to_string()),
        records,
    })
}

pub fn to_csv(series: &[Series]) -> Result<String, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| RunError::Io(e.to_string());
    w.write_record(["series", "round", "best_train_fitness", "mean_train_fitness", "best_test_fitness"])
        .map_err(err)?;
    for s in series {
        for r in &s.records {
            w.write_record([
                s.label.clone(),
                r.round.to_string(),
                r.best_train_fitness.to_string(),
                r.mean_train_fitness.to_string(),
                r.best_test_fitness.map(|t| t.to_string()).unwrap_or_default(),
            ])
            .map_err(err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| RunError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| RunError::Io(e.to_string()))
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn to_svg(series: &[Series]) -> String {
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.train_points().into_iter().chain(s.test_points()))
        .collect();
    let x_max = all.iter().map(|p| p.0).fold(1.0, f64::max);
    let (mut y_min, mut y_max) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    if y_max - y_min < 1e-9 {
        y_min -= 0.05;
        y_max += 0.05;
    }
    let pad = (y_max - y_min) * 0.05;
    let (y_min, y_max) = (y_min - pad, y_max + pad);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + x / x_max * plot_w;
    let sy = |y: f64| TOP + (y_max - y) / (y_max - y_min) * plot_h;

    let kind = series
        .iter()
        .find_map(|s| s.fitness_kind.clone())
        .unwrap_or_else(|| "fitness".into());
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">best {} vs round</text>"#,
        WIDTH / 2.0,
        escape(&kind)
    );
    let _ = writeln!(
        svg,
        r#"<g stroke="black" fill="none"><line x1="{LEFT}" y1="{}" x2="{}" y2="{}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}"/></g>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h,
        TOP + plot_h
    );
    for i in 0..=4 {
        let y = y_min + (y_max - y_min) * f64::from(i) / 4.0;
        let x = x_max * f64::from(i) / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.3}</text>"#,
            LEFT - 6.0,
            sy(y) + 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            sx(x),
            TOP + plot_h + 18.0,
            x.round()
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">round</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let label = escape(&s.label);
        for (points, dash, suffix) in [(s.train_points(), "", "train"), (s.test_points(), r#" stroke-dasharray="6 4""#, "test")] {
            if points.is_empty() {
                continue;
            }
            let coords: Vec<String> = points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline data-series="{label} {suffix}" fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                coords.join(" ")
            );
        }
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{label}</text>"#,
            LEFT + plot_w - 120.0,
            LEFT + plot_w - 100.0,
            LEFT + plot_w - 94.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `<out>.csv` and `<out>.svg` with one series per log.
pub fn report(logs: &[PathBuf], out: &Path) -> Result<ReportSummary, RunError> {
    if logs.is_empty() {
        return Err(RunError::EmptyLog("no log given".into()));
    }
    let mut series = Vec::with_capacity(logs.len());
    for log in logs {
        let mut s = load_series(log)?;
        let taken = series.iter().filter(|o: &&Series| o.label == s.label || o.label.starts_with(&format!("{} (", s.label))).count();
        if taken > 0 {
            s.label = format!("{} ({})", s.label, taken + 1);
        }
        series.push(s);
    }
    let csv_path = out.with_extension("csv");
    let svg_path = out.with_extension("svg");
    let io = |p: &Path, e: std::io::Error| RunError::Io(format!("{}: {e}", p.display()));
    std::fs::write(&csv_path, to_csv(&series)?).map_err(|e| io(&csv_path, e))?;
    std::fs::write(&svg_path, to_svg(&series)).map_err(|e| io(&svg_path, e))?;
    Ok(ReportSummary {
        csv_path,
        svg_path,
        series: series
            .iter()
            .map(|s| (s.label.clone(), s.train_points().len(), s.test_points().len()))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_log(dir: &Path, n: u32, seed: Option<u64>) -> PathBuf {
        std::fs::create_dir_all(dir).unwrap();
        let mut text = String::new();
        for round in 0..n {
            let r = RunRecord {
                round,
                best_train_fitness: 0.5 + f64::from(round) * 0.05,
                mean_train_fitness: 0.5,
                best_prompt_text: "p".into(),
                generation_calls: 10,
                extraction_failures: 0,
                cache_hits: 0,
                wall_time_ms: 0,
                best_test_fitness: (round % 2 == 0).then_some(0.4),
            };
            text.push_str(&serde_json::to_string(&r).unwrap());
            text.push('\n');
        }
        let path = dir.join("log.jsonl");
        std::fs::write(&path, text).unwrap();
        if let Some(seed) = seed {
            let mut c = RunConfig::default();
            c.evolution.seed = seed;
            std::fs::write(dir.join(super::super::CONFIG_FILE), c.to_toml().unwrap()).unwrap();
        }
        path
    }

    #[test]
    fn six_records_give_six_points() {
        let dir = tempfile::tempdir().unwrap();
        let log = write_log(&dir.path().join("a"), 6, None);
        let out = dir.path().join("curve");
        let summary = report(&[log], &out).unwrap();
        assert_eq!(summary.series, vec![("a".to_string(), 6, 3)]);
        let svg = std::fs::read_to_string(&summary.svg_path).unwrap();
        let train = svg.lines().find(|l| l.contains("a train")).unwrap();
        let points = train.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        assert_eq!(points.split(' ').count(), 6);
        let csv = std::fs::read_to_string(&summary.csv_path).unwrap();
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn one_series_per_seed() {
        let dir = tempfile::tempdir().unwrap();
        let logs: Vec<PathBuf> = [41, 42, 43]
            .iter()
            .map(|s| write_log(&dir.path().join(format!("r{s}")), 4, Some(*s)))
            .collect();
        let summary = report(&logs, &dir.path().join("seeds.svg")).unwrap();
        let labels: Vec<&str> = summary.series.iter().map(|s| s.0.as_str()).collect();
        assert_eq!(labels, ["seed 41", "seed 42", "seed 43"]);
        let svg = std::fs::read_to_string(dir.path().join("seeds.svg")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 6);
        assert!(svg.contains("best accuracy vs round"));
    }

    #[test]
    fn empty_log_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.jsonl");
        std::fs::write(&log, "").unwrap();
        assert!(matches!(report(&[log], &dir.path().join("x")), Err(RunError::EmptyLog(_))));
        assert!(matches!(report(&[], &dir.path().join("x")), Err(RunError::EmptyLog(_))));
    }

    #[test]
    fn duplicate_labels_are_disambiguated() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_log(&dir.path().join("a"), 2, Some(7));
        let b = write_log(&dir.path().join("b"), 2, Some(7));
        let s = report(&[a, b], &dir.path().join("o")).unwrap();
        assert_eq!(s.series[1].0, "seed 7 (2)");
    }
}
