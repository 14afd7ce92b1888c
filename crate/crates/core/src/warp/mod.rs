//! Four-point homographies and differentiable sign compositing.
//!
//! Pixel `(row i, col j)` has its center at `(j + 0.5, i + 0.5)`. A sign of
//! `sh x sw` pixels spans the rectangle `[0, sw] x [0, sh]` in its own
//! coordinates. Both compositing and rectification warp backwards: they visit
//! destination pixels and sample the source bilinearly with edge clamping.

mod geometry;
mod homography;

use std::sync::Arc;

use thiserror::Error;

use crate::tensor::{SparsePlan, Tap, Tensor, TensorError, Var};

pub use geometry::{Point, Quad, MIN_QUAD_AREA};
pub use homography::{homography_from_corners, Homography};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate quad: {0}")]
    Degenerate(String),
    #[error("singular homography: {0}")]
    Singular(String),
    #[error("frame {index}: {source}")]
    Frame { index: usize, source: Box<GeometryError> },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl GeometryError {
    pub fn at_frame(self, index: usize) -> Self {
        GeometryError::Frame { index, source: Box::new(self) }
    }
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;

/// Sample coordinates this close to an integer are snapped onto it.
const SNAP: f64 = 1e-9;

/// Bilinear taps for a point in continuous coordinates of an `h x w` image.
fn bilinear_taps(p: Point, h: usize, w: usize) -> Vec<Tap> {
    let axis = |c: f64, n: usize| -> (usize, usize, f64) {
        let mut c = (c - 0.5).clamp(0.0, (n - 1) as f64);
        if (c - c.round()).abs() < SNAP {
            c = c.round();
        }
        let lo = c.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        (lo, hi, c - lo as f64)
    };
    let (x0, x1, fx) = axis(p.x, w);
    let (y0, y1, fy) = axis(p.y, h);
    let mut taps: Vec<Tap> = Vec::with_capacity(4);
    for (y, wy) in [(y0, 1.0 - fy), (y1, fy)] {
        for (x, wx) in [(x0, 1.0 - fx), (x1, fx)] {
            let weight = wy * wx;
            if weight == 0.0 {
                continue;
            }
            let src = y * w + x;
            match taps.iter_mut().find(|t| t.src == src) {
                Some(t) => t.weight += weight,
                None => taps.push(Tap { src, weight }),
            }
        }
    }
    taps
}

fn sign_rect(sign_hw: (usize, usize)) -> Result<Quad> {
    if sign_hw.0 == 0 || sign_hw.1 == 0 {
        return Err(GeometryError::Degenerate("empty sign".into()));
    }
    Quad::rect(0.0, 0.0, sign_hw.1 as f64, sign_hw.0 as f64)
}

/// Frame pixels whose centers lie inside `quad`, flat `y * w + x`.
pub fn covered_pixels(quad: &Quad, frame_hw: (usize, usize)) -> Vec<usize> {
    let (h, w) = frame_hw;
    let (x0, y0, x1, y1) = quad.bounds();
    let clip = |v: f64, n: usize| v.max(0.0).min(n as f64) as usize;
    let (cx0, cx1) = (clip((x0 - 0.5).floor(), w), clip((x1 + 0.5).ceil(), w));
    let (cy0, cy1) = (clip((y0 - 0.5).floor(), h), clip((y1 + 0.5).ceil(), h));
    let mut out = Vec::new();
    for i in cy0..cy1 {
        for j in cx0..cx1 {
            if quad.contains(Point::new(j as f64 + 0.5, i as f64 + 0.5)) {
                out.push(i * w + j);
            }
        }
    }
    out
}

/// Boolean mask of [`covered_pixels`].
pub fn interior_mask(quad: &Quad, frame_hw: (usize, usize)) -> Vec<bool> {
    let mut mask = vec![false; frame_hw.0 * frame_hw.1];
    for p in covered_pixels(quad, frame_hw) {
        mask[p] = true;
    }
    mask
}

/// Linear map that pastes a `sign_hw` sign into a `frame_hw` frame over `quad`.
pub fn composite_plan(frame_hw: (usize, usize), sign_hw: (usize, usize), quad: &Quad) -> Result<SparsePlan> {
    let h = homography_from_corners(&sign_rect(sign_hw)?, quad)?;
    let inv = h.inverse()?;
    let w = frame_hw.1;
    let entries = covered_pixels(quad, frame_hw)
        .into_iter()
        .map(|p| {
            let center = Point::new((p % w) as f64 + 0.5, (p / w) as f64 + 0.5);
            (p, bilinear_taps(inv.apply(center), sign_hw.0, sign_hw.1))
        })
        .collect();
    Ok(SparsePlan { out_hw: frame_hw, src_hw: sign_hw, entries })
}

/// Linear map that resamples the interior of `quad` into an `out_hw` patch.
pub fn rectify_plan(frame_hw: (usize, usize), quad: &Quad, out_hw: (usize, usize)) -> Result<SparsePlan> {
    let h = homography_from_corners(&sign_rect(out_hw)?, quad)?;
    let mut entries = Vec::with_capacity(out_hw.0 * out_hw.1);
    for i in 0..out_hw.0 {
        for j in 0..out_hw.1 {
            let p = h.apply(Point::new(j as f64 + 0.5, i as f64 + 0.5));
            entries.push((i * out_hw.1 + j, bilinear_taps(p, frame_hw.0, frame_hw.1)));
        }
    }
    Ok(SparsePlan { out_hw, src_hw: frame_hw, entries })
}

fn image_hw(t: &[usize], what: &str) -> Result<(usize, usize)> {
    if t.len() != 3 || t.contains(&0) {
        return Err(TensorError::Dimension(format!("{what} must be a non-empty [c, h, w] image, got {t:?}")).into());
    }
    Ok((t[1], t[2]))
}

/// Pastes `sign` into `frame` (both `[c, h, w]`) over `quad`.
pub fn composite(frame: &Tensor, sign: &Tensor, quad: &Quad) -> Result<Tensor> {
    let plan = composite_plan(image_hw(frame.shape(), "frame")?, image_hw(sign.shape(), "sign")?, quad)?;
    Ok(plan.apply(Some(frame), sign)?)
}

/// Tape-recorded [`composite`]; differentiable in both `frame` and `sign`.
pub fn composite_var<'t>(frame: Var<'t>, sign: Var<'t>, quad: &Quad) -> Result<Var<'t>> {
    let plan = composite_plan(image_hw(&frame.shape(), "frame")?, image_hw(&sign.shape(), "sign")?, quad)?;
    Ok(sign.sparse_into(Some(frame), Arc::new(plan))?)
}

/// Resamples the interior of `quad` in `frame` into an axis-aligned `out_hw` patch.
pub fn rectify(frame: &Tensor, quad: &Quad, out_hw: (usize, usize)) -> Result<Tensor> {
    let plan = rectify_plan(image_hw(frame.shape(), "frame")?, quad, out_hw)?;
    Ok(plan.apply(None, frame)?)
}

/// Tape-recorded [`rectify`].
pub fn rectify_var<'t>(frame: Var<'t>, quad: &Quad, out_hw: (usize, usize)) -> Result<Var<'t>> {
    let plan = rectify_plan(image_hw(&frame.shape(), "frame")?, quad, out_hw)?;
    Ok(frame.sparse_into(None, Arc::new(plan))?)
}

/// Per-frame compositing plans for a whole `[n, c, h, w]` frame stack.
#[derive(Debug, Clone)]
pub struct SubstitutionPlan {
    frame_shape: [usize; 3],
    sign_hw: (usize, usize),
    plans: Vec<Arc<SparsePlan>>,
}

impl SubstitutionPlan {
    pub fn new(frame_shape: [usize; 3], sign_hw: (usize, usize), quads: &[Quad]) -> Result<Self> {
        let frame_hw = (frame_shape[1], frame_shape[2]);
        let plans = quads
            .iter()
            .enumerate()
            .map(|(i, q)| composite_plan(frame_hw, sign_hw, q).map(Arc::new).map_err(|e| e.at_frame(i)))
            .collect::<Result<_>>()?;
        Ok(Self { frame_shape, sign_hw, plans })
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    pub fn sign_hw(&self) -> (usize, usize) {
        self.sign_hw
    }

    pub fn frame_plan(&self, index: usize) -> &SparsePlan {
        &self.plans[index]
    }

    fn check(&self, frames: &[usize], sign: &[usize]) -> Result<()> {
        let [c, h, w] = self.frame_shape;
        if frames != [self.plans.len(), c, h, w] {
            return Err(TensorError::Dimension(format!(
                "substitution expects frames [{}, {c}, {h}, {w}], got {frames:?}",
                self.plans.len()
            ))
            .into());
        }
        if sign != [c, self.sign_hw.0, self.sign_hw.1] {
            return Err(TensorError::Dimension(format!(
                "substitution expects sign [{c}, {}, {}], got {sign:?}",
                self.sign_hw.0, self.sign_hw.1
            ))
            .into());
        }
        Ok(())
    }

    /// Composites `sign` into every frame of `frames`.
    pub fn apply(&self, frames: &Tensor, sign: &Tensor) -> Result<Tensor> {
        self.check(frames.shape(), sign.shape())?;
        let mut out = Vec::with_capacity(frames.len());
        for (i, plan) in self.plans.iter().enumerate() {
            let frame = frames.index0(i)?;
            out.extend_from_slice(plan.apply(Some(&frame), sign)?.data());
        }
        Ok(Tensor::new(frames.shape(), out)?)
    }

    /// Tape-recorded [`SubstitutionPlan::apply`]; `frames` are constants.
    pub fn apply_var<'t>(&self, frames: &Tensor, sign: Var<'t>) -> Result<Var<'t>> {
        self.check(frames.shape(), &sign.shape())?;
        let tape = sign.tape();
        let [c, h, w] = self.frame_shape;
        let parts = self
            .plans
            .iter()
            .enumerate()
            .map(|(i, plan)| {
                let base = tape.constant(frames.index0(i)?);
                sign.sparse_into(Some(base), plan.clone())?.reshape(&[1, c, h, w])
            })
            .collect::<Result<Vec<_>, TensorError>>()?;
        Ok(Var::concat(&parts, 0)?)
    }
}
