use serde::{Deserialize, Serialize};

use super::{GeometryError, Result};

/// Minimum signed area, in px², for a quad to count as non-degenerate.
pub const MIN_QUAD_AREA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Four corners in pixel coordinates, ordered top-left, top-right,
/// bottom-right, bottom-left (clockwise on screen, where y points down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    corners: [Point; 4],
}

impl Quad {
    pub fn new(corners: [Point; 4]) -> Result<Self> {
        let q = Self { corners };
        q.validate()?;
        Ok(q)
    }

    /// Builds from `[x1, y1, ..., x4, y4]`.
    pub fn from_flat(v: [f64; 8]) -> Result<Self> {
        Self::new([Point::new(v[0], v[1]), Point::new(v[2], v[3]), Point::new(v[4], v[5]), Point::new(v[6], v[7])])
    }

    /// Axis-aligned rectangle with top-left at `(x, y)`.
    pub fn rect(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::from_flat([x, y, x + w, y, x + w, y + h, x, y + h])
    }

    pub fn corners(&self) -> &[Point; 4] {
        &self.corners
    }

    pub fn to_flat(&self) -> [f64; 8] {
        let c = &self.corners;
        [c[0].x, c[0].y, c[1].x, c[1].y, c[2].x, c[2].y, c[3].x, c[3].y]
    }

    /// Shoelace area; positive for the required TL, TR, BR, BL order.
    pub fn signed_area(&self) -> f64 {
        let c = &self.corners;
        0.5 * (0..4)
            .map(|i| {
                let (a, b) = (c[i], c[(i + 1) % 4]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
    }

    fn validate(&self) -> Result<()> {
        if self.corners.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeometryError::Degenerate("non-finite corner".into()));
        }
        let area = self.signed_area();
        if area <= MIN_QUAD_AREA {
            return Err(GeometryError::Degenerate(format!("signed area {area} (corners must be TL, TR, BR, BL)")));
        }
        let c = &self.corners;
        for i in 0..4 {
            let turn = cross(c[i], c[(i + 1) % 4], c[(i + 2) % 4]);
            if turn <= 0.0 {
                return Err(GeometryError::Degenerate(format!(
                    "corners {}..{} are collinear or reflex",
                    i,
                    (i + 2) % 4
                )));
            }
        }
        Ok(())
    }

    /// Point-in-quad test; points on an edge count as inside.
    pub fn contains(&self, p: Point) -> bool {
        let c = &self.corners;
        (0..4).all(|i| cross(c[i], c[(i + 1) % 4], p) >= 0.0)
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.corners
            .iter()
            .fold((f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY), |(a, b, c, d), p| {
                (a.min(p.x), b.min(p.y), c.max(p.x), d.max(p.y))
            })
    }

    /// True when every corner lies in `[0, width] x [0, height]`.
    pub fn within(&self, width: usize, height: usize) -> bool {
        let (x0, y0, x1, y1) = self.bounds();
        x0 >= 0.0 && y0 >= 0.0 && x1 <= width as f64 && y1 <= height as f64
    }

    /// Width and height of the bounding box.
    pub fn extent(&self) -> (f64, f64) {
        let (x0, y0, x1, y1) = self.bounds();
        (x1 - x0, y1 - y0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self> {
        let mut c = self.corners;
        for p in &mut c {
            p.x += dx;
            p.y += dy;
        }
        Self::new(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_area_is_one() {
        assert_eq!(Quad::rect(0.0, 0.0, 1.0, 1.0).unwrap().signed_area(), 1.0);
    }

    #[test]
    fn reversed_winding_is_rejected() {
        let r = Quad::from_flat([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
        assert!(matches!(r, Err(GeometryError::Degenerate(_))));
    }

    #[test]
    fn collinear_corners_are_rejected() {
        let r = Quad::from_flat([0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 0.0, 1.0]);
        assert!(r.is_err());
        assert!(Quad::from_flat([0.0, 0.0, 1e-9, 0.0, 1e-9, 1e-9, 0.0, 1e-9]).is_err());
    }

    #[test]
    fn boundary_counts_as_inside() {
        let q = Quad::rect(1.0, 1.0, 2.0, 2.0).unwrap();
        assert!(q.contains(Point::new(1.0, 2.0)));
        assert!(q.contains(Point::new(3.0, 3.0)));
        assert!(!q.contains(Point::new(3.0 + 1e-12, 2.0)));
    }
}
