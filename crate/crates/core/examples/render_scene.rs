//! Renders a straight and a curved approach and writes both slice directories.
//!
//! cargo run --example render_scene -- [out_dir]

use std::path::PathBuf;

use physgan_lab::scene::{builtin_sign, render_scene, save_slice, Logo, SceneConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/render_scene".into()));
    let scenes = [
        (SceneConfig::default(), Logo::Orchard),
        (SceneConfig { texture_seed: 7, ..SceneConfig::curve("curve-left", -60.0) }, Logo::Arches),
    ];
    for (cfg, logo) in scenes {
        let slice = render_scene(&cfg, &builtin_sign(logo))?;
        let dir = out.join(&cfg.name);
        save_slice(&slice, &dir)?;
        let first = slice.quads[0].extent();
        let last = slice.quads[slice.len() - 1].extent();
        println!(
            "{}: {} frames, angle {:.3} deg, sign {:.1}x{:.1} px -> {:.1}x{:.1} px, written to {}",
            cfg.name,
            slice.len(),
            slice.angles[0],
            first.0,
            first.1,
            last.0,
            last.1,
            dir.display()
        );
    }
    Ok(())
}
