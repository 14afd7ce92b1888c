//! Slice directories: `frame_%04d.png`, `angles.csv`, `corners.csv`, `meta.toml`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::assets::{read_png, write_png16};
use super::{LaneType, Result, SceneError, SliceMeta, VideoSlice};
use crate::tensor::Tensor;
use crate::warp::Quad;

pub const CORNER_HEADER: [&str; 9] = ["frame_index", "x1", "y1", "x2", "y2", "x3", "y3", "x4", "y4"];

#[derive(Debug, Serialize, Deserialize)]
struct MetaFile {
    name: String,
    seed: u64,
    lane: LaneType,
    frames: usize,
    width: usize,
    height: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SceneError + '_ {
    move |source| SceneError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> SceneError {
    SceneError::ingest(None, format!("{}: {e}", path.display()))
}

pub fn write_corner_track(quads: &[Quad], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(CORNER_HEADER).map_err(|e| csv_err(path, e))?;
    for (i, q) in quads.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(q.to_flat().iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a corner track; rows must be in frame order starting at 0.
pub fn read_corner_track(path: &Path) -> Result<Vec<Quad>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().map(str::trim).ne(CORNER_HEADER) {
        return Err(SceneError::ingest(
            None,
            format!("{}: header must be {}", path.display(), CORNER_HEADER.join(",")),
        ));
    }
    let mut quads = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| SceneError::ingest(Some(row), format!("{}: {e}", path.display())))?;
        let parse = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| SceneError::ingest(Some(row), format!("bad field {} in corners", CORNER_HEADER[k])))
        };
        if parse(0)? != row as f64 {
            return Err(SceneError::ingest(Some(row), "corner rows must be consecutive frame indices from 0"));
        }
        let mut v = [0.0; 8];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = parse(k + 1)?;
        }
        quads.push(Quad::from_flat(v).map_err(|e| SceneError::ingest(Some(row), e.to_string()))?);
    }
    Ok(quads)
}

fn write_angles(angles: &[f64], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["frame_index", "angle_deg"]).map_err(|e| csv_err(path, e))?;
    for (i, a) in angles.iter().enumerate() {
        w.write_record([i.to_string(), a.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_angles(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| SceneError::ingest(Some(row), format!("{}: {e}", path.display())))?;
        let a = rec
            .get(1)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| SceneError::ingest(Some(row), "bad angle_deg field"))?;
        out.push(a);
    }
    Ok(out)
}

fn frame_name(i: usize) -> String {
    format!("frame_{i:04}.png")
}

/// Writes a slice directory. Frames are stored as 16-bit PNG, which is exact
/// for images on the 1/255 grid.
pub fn save_slice(slice: &VideoSlice, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for i in 0..slice.len() {
        write_png16(&slice.frame(i)?, &dir.join(frame_name(i)))?;
    }
    write_angles(&slice.angles, &dir.join("angles.csv"))?;
    write_corner_track(&slice.quads, &dir.join("corners.csv"))?;
    let [_, h, w] = slice.frame_shape();
    let meta = MetaFile {
        name: slice.meta.name.clone(),
        seed: slice.meta.seed,
        lane: slice.meta.lane,
        frames: slice.len(),
        width: w,
        height: h,
    };
    let text = toml::to_string(&meta).map_err(|e| SceneError::Config(e.to_string()))?;
    let p = dir.join("meta.toml");
    fs::write(&p, text).map_err(io_err(&p))
}

pub fn load_slice(dir: &Path) -> Result<VideoSlice> {
    let p = dir.join("meta.toml");
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    let meta: MetaFile =
        toml::from_str(&text).map_err(|e| SceneError::ingest(None, format!("{}: {e}", p.display())))?;
    let on_disk = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter(|e| {
            let n = e.file_name();
            let n = n.to_string_lossy();
            n.starts_with("frame_") && n.ends_with(".png")
        })
        .count();
    let angles = read_angles(&dir.join("angles.csv"))?;
    let quads = read_corner_track(&dir.join("corners.csv"))?;
    if on_disk != meta.frames || angles.len() != meta.frames || quads.len() != meta.frames {
        return Err(SceneError::ingest(
            None,
            format!(
                "count mismatch: meta says {} frames, found {on_disk} images, {} angles, {} corner rows",
                meta.frames,
                angles.len(),
                quads.len()
            ),
        ));
    }
    let mut frames = Vec::with_capacity(meta.frames);
    for i in 0..meta.frames {
        let f = read_png(&dir.join(frame_name(i))).map_err(|m| SceneError::ingest(Some(i), m))?;
        if f.shape() != [3, meta.height, meta.width] {
            return Err(SceneError::ingest(
                Some(i),
                format!("image is {:?}, expected {}x{}", f.shape(), meta.width, meta.height),
            ));
        }
        frames.push(f);
    }
    VideoSlice::new(
        Tensor::stack(&frames)?,
        angles,
        quads,
        SliceMeta { name: meta.name, seed: meta.seed, lane: meta.lane },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{builtin_sign, render_scene, Logo, SceneConfig};

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let slice = render_scene(&SceneConfig::curve("c", -80.0), &builtin_sign(Logo::Arches)).unwrap();
        save_slice(&slice, dir.path()).unwrap();
        assert_eq!(load_slice(dir.path()).unwrap(), slice);
    }

    #[test]
    fn short_corner_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let slice = render_scene(&SceneConfig::default(), &builtin_sign(Logo::Orchard)).unwrap();
        save_slice(&slice, dir.path()).unwrap();
        write_corner_track(&slice.quads[..19], &dir.path().join("corners.csv")).unwrap();
        let err = load_slice(dir.path()).unwrap_err();
        assert!(matches!(err, SceneError::Ingestion { .. }), "{err}");
    }

    #[test]
    fn degenerate_corner_names_frame() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("corners.csv");
        fs::write(&p, "frame_index,x1,y1,x2,y2,x3,y3,x4,y4\n0,0,0,4,0,4,4,0,4\n1,0,0,1,1,2,2,3,3\n").unwrap();
        match read_corner_track(&p) {
            Err(SceneError::Ingestion { frame: Some(1), .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
