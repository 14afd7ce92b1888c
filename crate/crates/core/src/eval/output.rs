use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{ErrorSeries, EvalError, Result};

fn io_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io { path: path.display().to_string(), msg: e.to_string() }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub approach: String,
    pub scene: String,
    pub seed: u64,
    pub frame: usize,
    pub error_deg: f64,
}

/// One line of `summary.csv`; closed-loop columns are empty when no simulation ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub approach: String,
    pub scene: String,
    pub seed: u64,
    pub mse: f64,
    pub msae: f64,
    pub time_to_curb_s: Option<f64>,
    pub distance_to_center_m: Option<f64>,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes `(approach, scene, seed, series)` tuples as one row per frame.
pub fn write_results_csv(path: &Path, runs: &[(&str, &str, u64, &ErrorSeries)]) -> Result<()> {
    let rows = runs.iter().flat_map(|&(approach, scene, seed, s)| {
        s.frames.iter().zip(&s.errors).map(move |(&frame, &error_deg)| ResultRow {
            approach: approach.into(),
            scene: scene.into(),
            seed,
            frame,
            error_deg,
        })
    });
    write_rows(path, rows)
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    if rows.is_empty() {
        // csv writes no header for an empty serialize stream.
        std::fs::write(path, "approach,scene,seed,mse,msae,time_to_curb_s,distance_to_center_m\n")
            .map_err(|e| io_err(path, e))?;
        return Ok(());
    }
    write_rows(path, rows)
}

const PALETTE: [[u8; 3]; 6] =
    [[214, 39, 40], [31, 119, 180], [44, 160, 44], [255, 127, 14], [148, 103, 189], [90, 90, 90]];

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, c);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Error-versus-frame plot, one coloured polyline per series in palette order
/// (red, blue, green, orange, purple, grey). The y range is symmetric about zero
/// with a tick every degree.
pub fn plot_timelines(path: &Path, series: &[&ErrorSeries]) -> Result<()> {
    let (w, h, m) = (480u32, 240u32, 16i64);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let n = series.iter().map(|s| s.len()).max().unwrap_or(0).max(2);
    let ymax = series.iter().flat_map(|s| s.errors.iter()).fold(1.0f64, |a, e| a.max(e.abs())).ceil();
    let px = |i: usize| m + (i as f64 / (n - 1) as f64 * (w as i64 - 2 * m) as f64).round() as i64;
    let py = |e: f64| (h as f64 / 2.0 - e / ymax * (h as f64 / 2.0 - m as f64)).round() as i64;
    let grey = Rgb([200, 200, 200]);
    for t in -(ymax as i64)..=(ymax as i64) {
        line(&mut img, (m - 4, py(t as f64)), (m, py(t as f64)), grey);
    }
    line(&mut img, (m, py(0.0)), (w as i64 - m, py(0.0)), Rgb([120, 120, 120]));
    line(&mut img, (m, m), (m, h as i64 - m), Rgb([120, 120, 120]));
    for (k, s) in series.iter().enumerate() {
        let c = Rgb(PALETTE[k % PALETTE.len()]);
        let pts: Vec<(i64, i64)> = s.frames.iter().zip(&s.errors).map(|(&f, &e)| (px(f), py(e))).collect();
        for p in pts.windows(2) {
            line(&mut img, p[0], p[1], c);
        }
        for &(x, y) in &pts {
            line(&mut img, (x - 1, y), (x + 1, y), c);
        }
    }
    img.save(path).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = ErrorSeries::new(vec![0.5, -1.25], "x").unwrap();
        let p = dir.path().join("results.csv");
        write_results_csv(&p, &[("physgan", "straight", 3, &s)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "approach,scene,seed,frame,error_deg\nphysgan,straight,3,0,0.5\nphysgan,straight,3,1,-1.25\n");

        let p = dir.path().join("summary.csv");
        let row = SummaryRow {
            approach: "fgsm".into(),
            scene: "straight".into(),
            seed: 0,
            mse: 1.0,
            msae: 2.0,
            time_to_curb_s: None,
            distance_to_center_m: Some(0.25),
        };
        write_summary_csv(&p, std::slice::from_ref(&row)).unwrap();
        let back: Vec<SummaryRow> =
            csv::Reader::from_path(&p).unwrap().deserialize().collect::<std::result::Result<_, _>>().unwrap();
        assert_eq!(back, vec![row]);
    }

    #[test]
    fn plot_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let a = ErrorSeries::new((0..20).map(|i| i as f64 * 0.3).collect(), "a").unwrap();
        let b = ErrorSeries::new(vec![0.0; 20], "b").unwrap();
        let p = dir.path().join("t.png");
        plot_timelines(&p, &[&a, &b]).unwrap();
        let img = image::open(&p).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (480, 240));
    }
}
