use serde::{Deserialize, Serialize};

use super::{GeometryError, Point, Quad, Result};

/// 3x3 projective map, row-major, normalized so the bottom-right entry is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

type Mat3 = [[f64; 3]; 3];

fn matmul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Similarity that moves the centroid to the origin and the mean distance to √2.
fn normalizer(pts: &[Point; 4]) -> (Mat3, Mat3) {
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let mean = pts.iter().map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()).sum::<f64>() / 4.0;
    let s = std::f64::consts::SQRT_2 / mean;
    let t = [[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]];
    let inv = [[1.0 / s, 0.0, cx], [0.0, 1.0 / s, cy], [0.0, 0.0, 1.0]];
    (t, inv)
}

/// Solves the dense 8x8 system in place by Gaussian elimination with partial pivoting.
fn solve8(mut a: [[f64; 8]; 8], mut b: [f64; 8]) -> Result<[f64; 8]> {
    for col in 0..8 {
        let piv = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).expect("non-empty range");
        if a[piv][col].abs() < 1e-12 {
            return Err(GeometryError::Singular(format!("pivot {col} vanishes")));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..8 {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..8 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 8];
    for r in (0..8).rev() {
        let s: f64 = (r + 1..8).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

impl Homography {
    pub fn identity() -> Self {
        Self { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self> {
        Self::normalized(m)
    }

    fn normalized(m: Mat3) -> Result<Self> {
        let w = m[2][2];
        if w.abs() < 1e-300 || !w.is_finite() {
            return Err(GeometryError::Singular("bottom-right entry vanishes".into()));
        }
        let mut out = m;
        for row in &mut out {
            for v in row.iter_mut() {
                *v /= w;
            }
        }
        if !out.iter().flatten().all(|v| v.is_finite()) || det3(&out).abs() <= 1e-12 {
            return Err(GeometryError::Singular(format!("determinant {}", det3(&out))));
        }
        Ok(Self { m: out })
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    /// Maps `src` corners onto `dst` corners via the 4-point direct linear system,
    /// solved in Hartley-normalized coordinates.
    pub fn from_corners(src: &Quad, dst: &Quad) -> Result<Self> {
        let (ts, _) = normalizer(src.corners());
        let (td, td_inv) = normalizer(dst.corners());
        let apply = |t: &Mat3, p: &Point| Point::new(t[0][0] * p.x + t[0][2], t[1][1] * p.y + t[1][2]);
        let mut a = [[0.0; 8]; 8];
        let mut b = [0.0; 8];
        for i in 0..4 {
            let s = apply(&ts, &src.corners()[i]);
            let d = apply(&td, &dst.corners()[i]);
            a[2 * i] = [s.x, s.y, 1.0, 0.0, 0.0, 0.0, -d.x * s.x, -d.x * s.y];
            b[2 * i] = d.x;
            a[2 * i + 1] = [0.0, 0.0, 0.0, s.x, s.y, 1.0, -d.y * s.x, -d.y * s.y];
            b[2 * i + 1] = d.y;
        }
        let h = solve8(a, b)?;
        let hn = [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]];
        Self::normalized(matmul3(&td_inv, &matmul3(&hn, &ts)))
    }

    pub fn apply(&self, p: Point) -> Point {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        Point::new((m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w, (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w)
    }

    pub fn determinant(&self) -> f64 {
        det3(&self.m)
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = &self.m;
        let d = det3(m);
        if d.abs() <= 1e-12 {
            return Err(GeometryError::Singular(format!("determinant {d}")));
        }
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        Self::normalized(adj)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self> {
        Self::normalized(matmul3(&self.m, &other.m))
    }

    /// Infinity norm of `self - I`.
    pub fn distance_from_identity(&self) -> f64 {
        let id = Self::identity();
        (0..3).map(|i| (0..3).map(|j| (self.m[i][j] - id.m[i][j]).abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Largest distance between `H·src_i` and `dst_i` over the four corners.
    pub fn reprojection_residual(&self, src: &Quad, dst: &Quad) -> f64 {
        src.corners()
            .iter()
            .zip(dst.corners())
            .map(|(s, d)| {
                let p = self.apply(*s);
                ((p.x - d.x).powi(2) + (p.y - d.y).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Homography taking `src` corners to `dst` corners.
pub fn homography_from_corners(src: &Quad, dst: &Quad) -> Result<Homography> {
    Homography::from_corners(src, dst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_identity() {
        let q = Quad::rect(0.0, 0.0, 1.0, 1.0).unwrap();
        let h = homography_from_corners(&q, &q).unwrap();
        assert!(h.distance_from_identity() < 1e-12, "{h:?}");
    }

    #[test]
    fn shifted_square_is_translation() {
        let q = Quad::rect(0.0, 0.0, 1.0, 1.0).unwrap();
        let d = Quad::rect(5.0, 7.0, 1.0, 1.0).unwrap();
        let h = homography_from_corners(&q, &d).unwrap();
        let want = [[1.0, 0.0, 5.0], [0.0, 1.0, 7.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((h.matrix()[i][j] - want[i][j]).abs() < 1e-12, "{h:?}");
            }
        }
    }

    #[test]
    fn random_convex_quad_reprojects() {
        let src = Quad::rect(0.0, 0.0, 1.0, 1.0).unwrap();
        let dst = Quad::from_flat([10.3, 4.1, 52.7, 9.9, 47.2, 60.4, 6.5, 41.0]).unwrap();
        let h = homography_from_corners(&src, &dst).unwrap();
        assert!(h.reprojection_residual(&src, &dst) < 1e-9);
        let back = h.inverse().unwrap();
        assert!(back.compose(&h).unwrap().distance_from_identity() < 1e-9);
    }
}
