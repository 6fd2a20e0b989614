//! Run artifacts: metrics.csv, path.json, and static SVG plots (success
//! curve and path overlay on the map grid). Output is byte-stable for
//! identical reports; floats are written in shortest round-trip form so
//! parsing the CSV back reproduces the metric table exactly.

use super::run::{EpochMetrics, RunReport};
use super::HarnessError;
use crate::env::{Cell, GridMap};
use std::fmt::Write as _;
use std::path::Path;

pub const METRICS_FILE: &str = "metrics.csv";
pub const PATH_FILE: &str = "path.json";
pub const SUCCESS_SVG: &str = "success_curve.svg";
pub const OVERLAY_SVG: &str = "path_overlay.svg";

/// Fixed schema: `epoch,success_rate,mean_return,mean_length`.
pub fn metrics_csv(epochs: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,success_rate,mean_return,mean_length\n");
    for e in epochs {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            e.epoch, e.success_rate, e.mean_return, e.mean_length
        );
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<EpochMetrics>, HarnessError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Io("metrics csv is empty".into()))?;
    if header != "epoch,success_rate,mean_return,mean_length" {
        return Err(HarnessError::Io(format!(
            "unexpected metrics header '{header}'"
        )));
    }
    let mut epochs = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(HarnessError::Io(format!(
                "metrics row {} has {} fields",
                row + 2,
                fields.len()
            )));
        }
        let parse =
            |s: &str| -> Result<f64, HarnessError> {
                s.parse()
                    .map_err(|_| HarnessError::Io(format!("bad number '{s}' in metrics csv")))
            };
        epochs.push(EpochMetrics {
            epoch: fields[0]
                .parse()
                .map_err(|_| HarnessError::Io(format!("bad epoch '{}'", fields[0])))?,
            success_rate: parse(fields[1])?,
            mean_return: parse(fields[2])?,
            mean_length: parse(fields[3])?,
        });
    }
    Ok(epochs)
}

pub fn path_json(path: &Option<Vec<Cell>>) -> String {
    let cells: Vec<[i32; 2]> = path
        .as_ref()
        .map(|p| p.iter().map(|&(x, y)| [x, y]).collect())
        .unwrap_or_default();
    serde_json::to_string(&cells).expect("cell list serializes")
}

pub fn parse_path_json(text: &str) -> Result<Option<Vec<Cell>>, HarnessError> {
    let cells: Vec<[i32; 2]> = serde_json::from_str(text)
        .map_err(|e| HarnessError::Io(format!("path json: {e}")))?;
    if cells.is_empty() {
        return Ok(None);
    }
    Ok(Some(cells.into_iter().map(|[x, y]| (x, y)).collect()))
}

/// Success-rate curve: one polyline vertex per epoch.
pub fn success_curve_svg(epochs: &[EpochMetrics]) -> String {
    let width = 640.0;
    let height = 360.0;
    let margin = 40.0;
    let plot_w = width - 2.0 * margin;
    let plot_h = height - 2.0 * margin;
    let n = epochs.len().max(2) as f64;
    let mut points = String::new();
    for e in epochs {
        let x = margin + plot_w * e.epoch as f64 / (n - 1.0);
        let y = margin + plot_h * (1.0 - e.success_rate);
        let _ = write!(points, "{x:.2},{y:.2} ");
    }
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{yb}\" stroke=\"black\"/>\n",
            "<line x1=\"{m}\" y1=\"{yb}\" x2=\"{xr}\" y2=\"{yb}\" stroke=\"black\"/>\n",
            "<text x=\"{m}\" y=\"20\" font-size=\"12\">success rate per epoch</text>\n",
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" ",
            "points=\"{points}\"/>\n",
            "</svg>\n"
        ),
        w = width,
        h = height,
        m = margin,
        yb = height - margin,
        xr = width - margin,
        points = points.trim_end()
    )
}

/// Map grid with obstacles, start, goal, and the path as a polyline with one
/// vertex per path cell.
pub fn path_overlay_svg(map: &GridMap, path: &Option<Vec<Cell>>) -> String {
    let cell = 24.0;
    let w = map.width() as f64 * cell;
    let h = map.height() as f64 * cell;
    let mut out = format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
        ),
        w = w,
        h = h
    );
    for y in 0..map.height() {
        for x in 0..map.width() {
            if map.is_obstacle((x, y)) {
                let _ = writeln!(
                    out,
                    "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"black\"/>",
                    x as f64 * cell,
                    y as f64 * cell,
                );
            }
        }
    }
    for y in 0..=map.height() {
        let _ = writeln!(
            out,
            "<line x1=\"0\" y1=\"{0:.1}\" x2=\"{w}\" y2=\"{0:.1}\" stroke=\"#ccc\" stroke-width=\"0.5\"/>",
            y as f64 * cell
        );
    }
    for x in 0..=map.width() {
        let _ = writeln!(
            out,
            "<line x1=\"{0:.1}\" y1=\"0\" x2=\"{0:.1}\" y2=\"{h}\" stroke=\"#ccc\" stroke-width=\"0.5\"/>",
            x as f64 * cell
        );
    }
    let center = |c: Cell| (c.0 as f64 * cell + cell / 2.0, c.1 as f64 * cell + cell / 2.0);
    let (sx, sy) = center(map.start());
    let (gx, gy) = center(map.goal());
    let _ = writeln!(
        out,
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"tomato\"/>",
        sx - cell / 2.0,
        sy - cell / 2.0,
    );
    let _ = writeln!(
        out,
        "<ellipse cx=\"{gx:.1}\" cy=\"{gy:.1}\" rx=\"{:.1}\" ry=\"{:.1}\" fill=\"gold\"/>",
        cell / 2.5,
        cell / 2.5,
    );
    if let Some(cells) = path {
        let mut points = String::new();
        for &c in cells {
            let (x, y) = center(c);
            let _ = write!(points, "{x:.1},{y:.1} ");
        }
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"crimson\" stroke-width=\"2\" points=\"{}\"/>",
            points.trim_end()
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Write metrics.csv, path.json, and both SVG plots into `out_dir`. Errors
/// before creating anything when the report holds no epochs.
pub fn emit_report(
    report: &RunReport,
    map: &GridMap,
    out_dir: &Path,
) -> Result<(), HarnessError> {
    if report.epochs.is_empty() {
        return Err(HarnessError::Io(
            "refusing to emit a report with zero epochs".into(),
        ));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| HarnessError::Io(format!("create {}: {e}", out_dir.display())))?;
    let write = |name: &str, contents: String| -> Result<(), HarnessError> {
        let path = out_dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| HarnessError::Io(format!("write {}: {e}", path.display())))
    };
    write(METRICS_FILE, metrics_csv(&report.epochs))?;
    write(PATH_FILE, path_json(&report.best_path))?;
    write(SUCCESS_SVG, success_curve_svg(&report.epochs))?;
    write(OVERLAY_SVG, path_overlay_svg(map, &report.best_path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::builtin;

    fn sample_report() -> RunReport {
        let epochs: Vec<EpochMetrics> = (0..12)
            .map(|epoch| EpochMetrics {
                epoch,
                success_rate: epoch as f64 / 11.0,
                mean_return: -17.25 + epoch as f64 * 3.5,
                mean_length: 42.0 / (epoch as f64 + 1.0),
            })
            .collect();
        RunReport {
            epochs,
            convergence_rate: 0.75,
            first_epoch_at_rate: 9,
            best_path: Some(vec![(0, 0), (1, 1), (2, 2), (3, 2)]),
            best_path_length: Some(3),
            best_path_turns: Some(1),
            goal_episodes: 40,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let report = sample_report();
        let text = metrics_csv(&report.epochs);
        let parsed = parse_metrics_csv(&text).unwrap();
        assert_eq!(parsed, report.epochs);
    }

    #[test]
    fn csv_header_is_fixed() {
        let text = metrics_csv(&[]);
        assert_eq!(text, "epoch,success_rate,mean_return,mean_length\n");
        assert!(parse_metrics_csv("wrong,header\n").is_err());
    }

    #[test]
    fn path_json_round_trip() {
        let path = Some(vec![(0, 0), (1, 1)]);
        assert_eq!(parse_path_json(&path_json(&path)).unwrap(), path);
        assert_eq!(parse_path_json(&path_json(&None)).unwrap(), None);
    }

    #[test]
    fn overlay_has_one_vertex_per_path_cell() {
        let map = GridMap::parse(builtin::MAP1_DENSE_RANDOM).unwrap();
        let report = sample_report();
        let svg = path_overlay_svg(&map, &report.best_path);
        let polyline = svg
            .lines()
            .find(|l| l.contains("<polyline"))
            .expect("overlay contains a polyline");
        let points_attr = polyline.split("points=\"").nth(1).unwrap();
        let points = points_attr.split('"').next().unwrap();
        let vertex_count = points.split_whitespace().count();
        assert_eq!(vertex_count, report.best_path.as_ref().unwrap().len());
    }

    #[test]
    fn emit_is_byte_stable_and_guards_empty() {
        let map = GridMap::parse(builtin::MAP2_SPARSE_RANDOM).unwrap();
        let report = sample_report();
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        emit_report(&report, &map, dir1.path()).unwrap();
        emit_report(&report, &map, dir2.path()).unwrap();
        for name in [METRICS_FILE, PATH_FILE, SUCCESS_SVG, OVERLAY_SVG] {
            let a = std::fs::read(dir1.path().join(name)).unwrap();
            let b = std::fs::read(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} must be byte-stable");
        }

        let empty = RunReport {
            epochs: vec![],
            ..report
        };
        let dir3 = tempfile::tempdir().unwrap();
        let out = dir3.path().join("run");
        assert!(emit_report(&empty, &map, &out).is_err());
        assert!(!out.exists(), "no partial files on error");
    }
}
