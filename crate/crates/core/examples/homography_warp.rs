//! Fits a four-point homography, checks it against its inverse, and pastes a
//! sign into a frame with a gradient flowing back to the sign.
//!
//! cargo run --release --example homography_warp -- [out.png]

use physgan_lab::scene::{builtin_sign, save_sign_png, Logo};
use physgan_lab::tensor::{Tape, Tensor};
use physgan_lab::warp::{composite, composite_var, covered_pixels, homography_from_corners, rectify, Point, Quad};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/homography_warp.png".into());
    let sign = builtin_sign(Logo::Arches);
    let [_, sh, sw] = [sign.shape()[0], sign.shape()[1], sign.shape()[2]];
    let src = Quad::rect(0.0, 0.0, sw as f64, sh as f64)?;
    let dst =
        Quad::new([Point::new(30.0, 12.0), Point::new(54.0, 17.0), Point::new(53.0, 36.0), Point::new(31.0, 33.0)])?;

    let h = homography_from_corners(&src, &dst)?;
    println!("H = {:?}", h.matrix());
    println!("corner residual {:.2e} px", h.reprojection_residual(&src, &dst));
    println!("|H H^-1 - I| = {:.2e}", h.compose(&h.inverse()?)?.distance_from_identity());

    let frame = Tensor::full(&[3, 48, 64], 0.35);
    let pasted = composite(&frame, &sign, &dst)?;
    println!("{} of {} pixels covered", covered_pixels(&dst, (48, 64)).len(), 48 * 64);
    save_sign_png(&pasted, std::path::Path::new(&out))?;

    // Rectifying the pasted region recovers an approximation of the sign.
    let back = rectify(&pasted, &dst, (sh, sw))?;
    let err = back.zip_map(&sign, |a, b| (a - b).abs())?;
    println!("mean |rectified - sign| = {:.4}", err.sum() / err.len() as f64);

    let tape = Tape::new();
    let s = tape.param(sign.clone());
    let y = composite_var(tape.constant(frame), s, &dst)?.sum();
    let g = tape.backward(y)?;
    println!("d(sum)/d(sign) totals {:.2}, the covered pixel count", g.wrt(s)?.sum() / 3.0);
    println!("written {out}");
    Ok(())
}
