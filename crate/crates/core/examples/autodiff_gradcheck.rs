//! Builds a small 3D-conv network on the tape, backpropagates, and compares the
//! analytic gradients with central differences.
//!
//! cargo run --release --example autodiff_gradcheck

use physgan_lab::tensor::gradcheck::check_gradients;
use physgan_lab::tensor::{seeded_rng, Conv3dSpec, Result, Tape, Tensor, Var};

/// conv(1x3x3, stride 2) -> tanh -> conv(2x3x3, stride 2) -> tanh -> dense -> exp(sum of squares)
fn net<'t>(_: &'t Tape, v: &[Var<'t>]) -> Result<Var<'t>> {
    let h = v[0].conv3d(v[1], Conv3dSpec::new([1, 2, 2], [0, 1, 1]))?.tanh();
    let h = h.conv3d(v[2], Conv3dSpec::new([2, 2, 2], [0, 1, 1]))?.tanh();
    let n = h.shape().iter().product::<usize>();
    h.reshape(&[1, n])?.matmul(v[3])?.square().sum().exp()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = seeded_rng(1);
    let x = Tensor::uniform(&[1, 3, 4, 12, 12], 0.0, 1.0, &mut rng);
    let k1 = Tensor::uniform(&[4, 3, 1, 3, 3], -0.3, 0.3, &mut rng);
    let k2 = Tensor::uniform(&[2, 4, 2, 3, 3], -0.3, 0.3, &mut rng);
    let w = Tensor::uniform(&[2 * 2 * 3 * 3, 1], -0.3, 0.3, &mut rng);

    let tape = Tape::new();
    let vars: Vec<_> = [&x, &k1, &k2, &w].iter().map(|t| tape.param((*t).clone())).collect();
    let out = net(&tape, &vars)?;
    let grads = tape.backward(out)?;
    println!("output {:.6}, tape holds {} nodes", out.value().item()?, tape.len());
    for (name, v) in ["input", "conv1", "conv2", "dense"].iter().zip(&vars) {
        println!("  |d/d{name}|_max = {:.3e}", grads.wrt(*v)?.max_abs());
    }

    let report = check_gradients(&[x, k1, k2, w], net, 1e-5, 100, 7)?;
    println!("{} probes, max relative error {:.2e}", report.probes, report.max_rel_error);
    if let Some((input, entry, a, n)) = report.worst {
        println!("worst: input {input} entry {entry}, analytic {a:.6e} vs numeric {n:.6e}");
    }
    Ok(())
}
