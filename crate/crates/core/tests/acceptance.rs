//! Acceptance run: prints one PASS/FAIL line per criterion, then a short table of the
//! measurements behind it. Criteria that fail are reported, not asserted; only
//! infrastructure errors abort the run.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;

use physgan_lab::attack::{adv_loss, adv_loss_var, gan_loss_var, Approach, AttackArtifacts};
use physgan_lab::cli::{self, EvalRun, ExperimentConfig, Selection};
use physgan_lab::eval::{closed_loop_sim, msae, steering_mse, ConstantSteering, ErrorSeries, SimConfig};
use physgan_lab::nets::{
    Activation, ConvLayerSpec, Discriminator, DiscriminatorArch, Generator, GeneratorArch, LossKind, SteeringArch,
    SteeringModel,
};
use physgan_lab::scene::{load_slice, render_scene, substitute_slice, substitution_plan, LaneType, SceneConfig};
use physgan_lab::tensor::gradcheck::check_gradients;
use physgan_lab::tensor::{seeded_rng, Conv3dSpec, Tape, Tensor, Var};
use physgan_lab::warp::{homography_from_corners, interior_mask, Point, Quad};

type Res<T> = Result<T, Box<dyn std::error::Error>>;

struct Outcome {
    pass: bool,
    detail: String,
    secs: f64,
}

fn report(id: usize, name: &str, o: &Outcome) {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} [{name}]: {verdict} ({:.1}s) {}", o.secs, o.detail);
}

fn timed(f: impl FnOnce() -> Res<(bool, String)>) -> Res<Outcome> {
    let t = Instant::now();
    let (pass, detail) = f()?;
    Ok(Outcome { pass, detail, secs: t.elapsed().as_secs_f64() })
}

fn c1_metric_oracle() -> Res<(bool, String)> {
    let apple = [
        0.17, 0.89, 1.68, 7.94, 1.93, 4.79, 2.87, 6.34, 2.08, 3.54, 9.06, 8.37, 5.93, 12.51, 13.43, 11.37, 12.75,
        11.74, 13.63, 13.44,
    ];
    let s = ErrorSeries::new(apple.to_vec(), "apple")?;
    let (mse, max) = (steering_mse(&s)?, msae(&s)?);
    let pass = (mse - 73.94).abs() <= 0.02 && (max - 13.63).abs() <= 0.02;
    Ok((pass, format!("mse {mse:.4} (target 73.94), msae {max:.2} (target 13.63), tolerance 0.02")))
}

fn random_quad(rng: &mut impl Rng) -> Quad {
    loop {
        let cx = rng.random_range(10.0..54.0);
        let cy = rng.random_range(10.0..54.0);
        let pts = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].map(|(sx, sy): (f64, f64)| {
            Point::new(cx + sx * rng.random_range(3.0..10.0), cy + sy * rng.random_range(3.0..10.0))
        });
        if let Ok(q) = Quad::new(pts) {
            return q;
        }
    }
}

fn c2_homography() -> Res<(bool, String)> {
    let mut rng = seeded_rng(2024);
    let (mut worst_reproj, mut worst_inv) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (src, dst) = (random_quad(&mut rng), random_quad(&mut rng));
        let h = homography_from_corners(&src, &dst)?;
        worst_reproj = worst_reproj.max(h.reprojection_residual(&src, &dst));
        worst_inv = worst_inv.max(h.compose(&h.inverse()?)?.distance_from_identity());
    }
    Ok((
        worst_reproj < 1e-9 && worst_inv < 1e-9,
        format!("1000 quads: max corner residual {worst_reproj:.2e} px, max |H H^-1 - I| {worst_inv:.2e}"),
    ))
}

type Rows = Vec<(String, usize, f64)>;

fn check<F>(rows: &mut Rows, name: &str, inputs: Vec<Tensor>, f: F) -> Res<()>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> physgan_lab::tensor::Result<Var<'t>>,
{
    let r = check_gradients(&inputs, f, 1e-5, 120, 5)?;
    rows.push((name.to_string(), r.probes, r.max_rel_error));
    Ok(())
}

fn c3_gradchecks() -> Res<(bool, String)> {
    let mut rng = seeded_rng(33);
    let mut rows = Rows::new();
    // Keep piecewise activations away from their kinks.
    let off_kink = |t: Tensor| t.map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let x = off_kink(Tensor::uniform(&[4, 40], -2.0, 2.0, &mut rng));
    let w = Tensor::uniform(&[40, 6], -0.5, 0.5, &mut rng);
    let b = Tensor::uniform(&[6], -0.5, 0.5, &mut rng);
    check(&mut rows, "dense", vec![x.clone(), w, b], |_, v| Ok(v[0].matmul(v[1])?.add(v[2])?.tanh().sum()))?;
    check(&mut rows, "relu", vec![x.clone()], |_, v| Ok(v[0].relu().square().sum()))?;
    check(&mut rows, "leaky_relu", vec![x.clone()], |_, v| Ok(v[0].leaky_relu(0.1).square().sum()))?;
    check(&mut rows, "tanh", vec![x.clone()], |_, v| Ok(v[0].tanh().square().sum()))?;
    check(&mut rows, "sigmoid", vec![x.clone()], |_, v| Ok(v[0].sigmoid().square().sum()))?;
    let img = Tensor::uniform(&[1, 2, 8, 8], -1.0, 1.0, &mut rng);
    check(&mut rows, "upsample_nearest", vec![img], |_, v| Ok(v[0].upsample_nearest(2)?.tanh().square().sum()))?;
    let cin = Tensor::uniform(&[1, 2, 5, 8, 8], -1.0, 1.0, &mut rng);
    let ck = Tensor::uniform(&[3, 2, 2, 3, 3], -0.5, 0.5, &mut rng);
    let spec = Conv3dSpec::new([1, 2, 2], [0, 1, 1]);
    check(&mut rows, "conv3d", vec![cin, ck], |_, v| Ok(v[0].conv3d(v[1], spec)?.tanh().sum()))?;

    let arch = SteeringArch {
        window: 4,
        height: 16,
        width: 16,
        convs: vec![
            ConvLayerSpec { out_channels: 3, kernel: [1, 4, 4], stride: [1, 4, 4], padding: [0, 0, 0] },
            ConvLayerSpec { out_channels: 4, kernel: [2, 3, 3], stride: [2, 2, 2], padding: [0, 1, 1] },
        ],
        hidden: vec![5],
        activation: Activation::Tanh,
        ..SteeringArch::default()
    };
    let model = SteeringModel::new(arch, 7)?;
    let frames = Tensor::uniform(&[5, 3, 16, 16], 0.0, 1.0, &mut rng);
    let mut inputs = model.params().tensors().to_vec();
    inputs.push(frames);
    let np = model.params().len();
    check(&mut rows, "steering model", inputs, |_, v| {
        Ok(model.forward_windows(&v[..np], v[np], &[3, 4]).map_err(to_tensor)?.square().sum())
    })?;

    let g =
        Generator::new(GeneratorArch { feature_len: 12, activation: Activation::Tanh, ..GeneratorArch::default() }, 3)?;
    let mut inputs = g.params().tensors().to_vec();
    inputs.push(Tensor::uniform(&[12], -1.0, 1.0, &mut rng));
    let ng = g.params().len();
    check(&mut rows, "generator", inputs, |_, v| Ok(g.forward(&v[..ng], v[ng]).map_err(to_tensor)?.square().mean()))?;

    let d = Discriminator::new(DiscriminatorArch { activation: Activation::Tanh, ..DiscriminatorArch::default() }, 4)?;
    let mut inputs = d.params().tensors().to_vec();
    inputs.push(Tensor::uniform(&[2, 3, 32, 32], 0.0, 1.0, &mut rng));
    let nd = d.params().len();
    check(&mut rows, "discriminator", inputs, |_, v| Ok(d.forward(&v[..nd], v[nd]).map_err(to_tensor)?.log()?.sum()))?;

    let po = Tensor::uniform(&[120], -3.0, 3.0, &mut rng);
    let pa = Tensor::uniform(&[120], -3.0, 3.0, &mut rng);
    check(&mut rows, "adv_loss mse", vec![po.clone(), pa.clone()], |_, v| {
        adv_loss_var(v[0], v[1], 10.0, LossKind::Mse).map_err(to_tensor)
    })?;
    check(&mut rows, "adv_loss l1", vec![po, pa], |_, v| {
        adv_loss_var(v[0], v[1], 10.0, LossKind::L1).map_err(to_tensor)
    })?;
    let dr = Tensor::uniform(&[120], 0.05, 0.95, &mut rng);
    let df = Tensor::uniform(&[120], 0.05, 0.95, &mut rng);
    check(&mut rows, "gan_loss", vec![dr, df], |_, v| gan_loss_var(v[0], v[1]).map_err(to_tensor))?;

    let scene = SceneConfig::default();
    let sign = scene.sign.load()?;
    let slice = render_scene(&scene, &sign)?;
    let plan = substitution_plan(&slice, &sign)?;
    let weights = Tensor::uniform(slice.frames.shape(), -1.0, 1.0, &mut rng);
    let frames = slice.frames.clone();
    check(&mut rows, "composite warp", vec![sign], |tape, v| {
        let adv = plan.apply_var(&frames, v[0]).map_err(to_tensor)?;
        Ok(adv.mul(tape.constant(weights.clone()))?.square().sum())
    })?;

    let worst = rows.iter().cloned().fold((String::new(), 0, 0.0f64), |a, r| if r.2 > a.2 { r } else { a });
    let pass = rows.iter().all(|(_, p, e)| *p >= 100 && *e <= 1e-4);
    let min_probes = rows.iter().map(|r| r.1).min().unwrap_or(0);
    Ok((
        pass,
        format!(
            "{} checks, >= {min_probes} probes each, worst {} at {:.2e} (limit 1e-4)",
            rows.len(),
            worst.0,
            worst.2
        ),
    ))
}

fn to_tensor<E: std::fmt::Display>(e: E) -> physgan_lab::tensor::TensorError {
    physgan_lab::tensor::TensorError::Numeric(e.to_string())
}

/// Everything the efficacy criteria share: one full pipeline run on the default config.
struct Experiment {
    cfg: ExperimentConfig,
    validation_mse: f64,
    model: SteeringModel,
    checksum: String,
    artifacts: Vec<AttackArtifacts>,
    runs: Vec<EvalRun>,
    attack_secs: f64,
    out: tempfile::TempDir,
}

fn run_experiment() -> Res<Experiment> {
    let cfg = ExperimentConfig::default();
    let out = tempfile::tempdir()?;
    cli::cmd_gen_scenes(&cfg, out.path(), 1)?;
    let (model, train) = cli::cmd_train(&cfg, out.path())?;
    let checksum = model.params().checksum();
    let sel = Selection::all(&cfg);
    let t = Instant::now();
    let artifacts = cli::cmd_attack(&cfg, out.path(), &sel)?;
    let attack_secs = t.elapsed().as_secs_f64();
    let runs = cli::cmd_eval(&cfg, out.path(), &sel)?;
    Ok(Experiment { cfg, validation_mse: train.validation_mse, model, checksum, artifacts, runs, attack_secs, out })
}

impl Experiment {
    fn run(&self, a: Approach, scene: &str, seed: u64) -> Option<&EvalRun> {
        self.runs.iter().find(|r| r.approach == a && r.scene == scene && r.seed == seed)
    }

    fn default_scene(&self) -> &str {
        &self.cfg.scenes[0].name
    }

    fn seeds(&self) -> &[u64] {
        &self.cfg.attack.seeds
    }
}

fn c4_mask_invariance(e: &Experiment) -> Res<(bool, String)> {
    let mut checked = 0;
    let mut violations = Vec::new();
    for s in &e.cfg.scenes {
        let slice = load_slice(&cli::scene_dir(e.out.path(), &s.name))?;
        let [c, h, w] = slice.frame_shape();
        for &a in Approach::ALL.iter().filter(|a| a.is_physical()) {
            for &seed in e.seeds() {
                let sign = AttackArtifacts::load_sign(&cli::attack_dir(e.out.path(), a, &s.name, seed))?;
                let adv = substitute_slice(&slice, &sign)?;
                for f in 0..slice.len() {
                    let mask = interior_mask(&slice.quads[f], (h, w));
                    let (x, y) = (slice.frame(f)?, adv.frame(f)?);
                    let differs = (0..c).any(|ch| {
                        mask.iter().enumerate().any(|(p, &inside)| {
                            let i = ch * h * w + p;
                            !inside && x.data()[i].to_bits() != y.data()[i].to_bits()
                        })
                    });
                    if differs {
                        violations.push(format!("{a}/{}/{seed}/frame {f}", s.name));
                    }
                }
                checked += 1;
            }
        }
    }
    let first = violations.first().map_or(String::new(), |v| format!(", first {v}"));
    Ok((
        violations.is_empty(),
        format!(
            "{checked} sign-based runs over {} scenes, {} frames with changed outside pixels{first}; fgsm excluded (edits whole frames)",
            e.cfg.scenes.len(),
            violations.len()
        ),
    ))
}

fn c5_frozen(e: &Experiment) -> Res<(bool, String)> {
    let on_disk = cli::load_model(&e.cfg, e.out.path())?.params().checksum();
    let recorded = e.artifacts.iter().filter(|a| a.model_checksum == e.checksum).count();
    let pass = recorded == e.artifacts.len() && on_disk == e.checksum && e.model.params().checksum() == e.checksum;
    Ok((pass, format!("{recorded}/{} runs recorded the unchanged checksum {}", e.artifacts.len(), &e.checksum[..12])))
}

fn c6_efficacy(e: &Experiment) -> Res<(bool, String)> {
    let scene = e.default_scene();
    let mut ok = 0;
    let mut parts = Vec::new();
    for &seed in e.seeds() {
        let pg = e.run(Approach::PhysGan, scene, seed).ok_or("missing physgan run")?.summary.msae;
        let nz = e.run(Approach::Noise, scene, seed).ok_or("missing noise run")?.summary.msae;
        if pg >= 5.0 && pg >= 5.0 * nz {
            ok += 1;
        }
        parts.push(format!("seed {seed}: physgan {pg:.2} vs noise {nz:.2}"));
    }
    let model_ok = e.validation_mse < 1.0;
    let time_ok = e.attack_secs < 1800.0;
    Ok((
        ok >= 2 && model_ok && time_ok,
        format!(
            "msae on {scene}: {}; {ok}/3 seeds reach >= 5 deg and 5x noise; validation MSE {:.3}; attacks {:.0}s",
            parts.join(", "),
            e.validation_mse,
            e.attack_secs
        ),
    ))
}

fn c7_ordering(e: &Experiment) -> Res<(bool, String)> {
    let mut passing = Vec::new();
    let mut parts = Vec::new();
    for s in &e.cfg.scenes {
        let mut ok = 0;
        for &seed in e.seeds() {
            let m = |a| e.run(a, &s.name, seed).map(|r| r.summary.mse).ok_or("missing run");
            let (f, g, p, n) = (m(Approach::Fgsm)?, m(Approach::PhysGan)?, m(Approach::PhysFgsm)?, m(Approach::Noise)?);
            if f >= g && g >= p && p >= n {
                ok += 1;
            }
        }
        parts.push(format!("{} {ok}/3", s.name));
        if ok >= 2 {
            passing.push(s);
        }
    }
    let straight = passing.iter().any(|s| matches!(s.lane, LaneType::Straight));
    let curve = passing.iter().any(|s| matches!(s.lane, LaneType::Curve));
    Ok((
        passing.len() >= 3 && straight && curve,
        format!("seeds holding fgsm >= physgan >= physfgsm >= noise: {}", parts.join(", ")),
    ))
}

fn c8_late_growth(e: &Experiment) -> Res<(bool, String)> {
    let scene = e.default_scene();
    let mut ok = 0;
    let mut parts = Vec::new();
    for &seed in e.seeds() {
        let s = &e.run(Approach::PhysGan, scene, seed).ok_or("missing physgan run")?.series;
        let (early, late) = (s.mean_abs(0..10).unwrap_or(0.0), s.mean_abs(10..20).unwrap_or(0.0));
        if late > early {
            ok += 1;
        }
        parts.push(format!("seed {seed}: {early:.2} -> {late:.2}"));
    }
    Ok((ok >= 2, format!("physgan mean |error| frames 1-10 -> 11-20 on {scene}: {}", parts.join(", "))))
}

/// Independent integration of the constant-steering difference equations in closed form:
/// heading after k steps is k a, so lateral after n steps is v dt sum_k sin(k a).
fn constant_delta_crossing(
    delta_deg: f64,
    v: f64,
    dt: f64,
    wheelbase: f64,
    curb: f64,
    max_steps: usize,
) -> Option<f64> {
    let a = v * dt / wheelbase * delta_deg.to_radians().tan();
    (1..=max_steps).find_map(|n| {
        let n_f = n as f64;
        let lateral = v * dt * (n_f * a / 2.0).sin() * ((n_f + 1.0) * a / 2.0).sin() / (a / 2.0).sin();
        (lateral.abs() >= curb).then_some(n_f * dt)
    })
}

fn c9_closed_loop(e: &Experiment) -> Res<(bool, String)> {
    let scene = e.default_scene();
    let seed = e.seeds()[0];
    let get = |a| e.run(a, scene, seed).map(|r| r.summary.clone()).ok_or("missing run");
    let pg = get(Approach::PhysGan)?;
    let baselines = [Approach::Original, Approach::Noise, Approach::PhysFgsm, Approach::Rp2];
    let others: Vec<_> = baselines.iter().map(|&a| get(a).map(|r| (a, r))).collect::<Result<_, _>>()?;
    let pg_dist = pg.distance_to_center_m.unwrap_or(0.0);
    let reaches = pg.time_to_curb_s.is_some();
    let clean = others
        .iter()
        .filter(|(a, _)| matches!(a, Approach::Original | Approach::Noise))
        .all(|(_, r)| r.time_to_curb_s.is_none());
    let farthest = others.iter().all(|(_, r)| pg_dist > r.distance_to_center_m.unwrap_or(f64::INFINITY));

    let sc = SceneConfig { frame_rate_hz: 15.0, ..SceneConfig::default() };
    let sim = SimConfig { speed_mps: Some(2.2), curb_offset_m: 1.0, horizon_s: Some(60.0) };
    let out = closed_loop_sim(&mut ConstantSteering(10.0), &sc, &sc.sign.load()?, &sim)?;
    let oracle = constant_delta_crossing(10.0, 2.2, sc.dt(), 2.5, 1.0, 900);
    let oracle_ok = match (out.time_to_curb_s, oracle) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-6,
        _ => false,
    };

    let fmt = |t: Option<f64>| t.map_or("-".to_string(), |t| format!("{t:.2}s"));
    let mut parts = vec![format!("physgan curb {} dist {pg_dist:.2}m", fmt(pg.time_to_curb_s))];
    for (a, r) in &others {
        parts.push(format!(
            "{a} curb {} dist {:.2}m",
            fmt(r.time_to_curb_s),
            r.distance_to_center_m.unwrap_or(f64::NAN)
        ));
    }
    parts.push(format!("constant 10 deg crossing sim {} vs closed form {}", fmt(out.time_to_curb_s), fmt(oracle)));
    Ok((reaches && clean && farthest && oracle_ok, parts.join("; ")))
}

fn c10_determinism() -> Res<(bool, String)> {
    let mut cfg = ExperimentConfig::default();
    cfg.scenes.truncate(2);
    cfg.attack.seeds = vec![0];
    cfg.attack.config.iterations = 25;
    cfg.train.family_size = 6;
    cfg.train.config.epochs = 2;
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir()?;
        let sel = Selection { jobs: 2, ..Selection::all(&cfg) };
        cli::cmd_gen_scenes(&cfg, dir.path(), 2)?;
        cli::cmd_train(&cfg, dir.path())?;
        cli::cmd_attack(&cfg, dir.path(), &sel)?;
        cli::cmd_eval(&cfg, dir.path(), &sel)?;
        outputs.push(std::fs::read(dir.path().join("eval").join("summary.csv"))?);
    }
    let same = outputs[0] == outputs[1];
    Ok((
        same,
        format!(
            "two full pipeline runs (2 scenes, 2 workers): summary.csv {} bytes, identical: {same}",
            outputs[0].len()
        ),
    ))
}

fn main() -> Res<()> {
    // `cargo test -- --list` and filters probe every test binary; answer quietly.
    if std::env::args().any(|a| a == "--list") {
        return Ok(());
    }
    let total = Instant::now();
    let mut lines: BTreeMap<usize, (&str, Outcome)> = BTreeMap::new();
    let mut emit = |id, name, o: Outcome| {
        report(id, name, &o);
        lines.insert(id, (name, o));
    };
    emit(1, "metric oracle", timed(c1_metric_oracle)?);
    emit(2, "homography exactness", timed(c2_homography)?);
    emit(3, "differentiation", timed(c3_gradchecks)?);

    let t = Instant::now();
    let e = run_experiment()?;
    println!(
        "  experiment: {} scenes x {} seeds x {} approaches, {} evaluated runs in {:.0}s",
        e.cfg.scenes.len(),
        e.seeds().len(),
        e.cfg.attack.approaches.len(),
        e.runs.len(),
        t.elapsed().as_secs_f64()
    );
    emit(4, "mask invariance", timed(|| c4_mask_invariance(&e))?);
    emit(5, "frozen target", timed(|| c5_frozen(&e))?);
    emit(6, "attack efficacy", timed(|| c6_efficacy(&e))?);
    emit(7, "baseline ordering", timed(|| c7_ordering(&e))?);
    emit(8, "late-frame growth", timed(|| c8_late_growth(&e))?);
    emit(9, "closed-loop pattern", timed(|| c9_closed_loop(&e))?);
    emit(10, "determinism", timed(c10_determinism)?);

    println!("\n  per-run slice metrics against ground truth (mse / msae):");
    for s in &e.cfg.scenes {
        for &seed in e.seeds() {
            let row: Vec<String> = Approach::ALL
                .iter()
                .filter_map(|&a| {
                    e.run(a, &s.name, seed).map(|r| format!("{a} {:.2}/{:.2}", r.summary.mse, r.summary.msae))
                })
                .collect();
            println!("  {:<18} seed {seed}: {}", s.name, row.join("  "));
        }
    }
    for line in trend_checks(&e)? {
        println!("  {line}");
    }
    let large_lambda = large_lambda_probe(&e)?;
    println!("  {large_lambda}");

    let passed = lines.values().filter(|(_, o)| o.pass).count();
    println!("\n  {passed}/{} criteria pass; total {:.0}s", lines.len(), total.elapsed().as_secs_f64());
    Ok(())
}

/// Secondary trends measured on the same runs; reported, not counted as criteria.
fn trend_checks(e: &Experiment) -> Res<Vec<String>> {
    let scene = e.default_scene();
    let mut beats_rp2 = 0;
    for &seed in e.seeds() {
        let m = |a| e.run(a, scene, seed).map(|r| r.summary.mse).ok_or("missing run");
        if m(Approach::PhysGan)? > m(Approach::Rp2)? {
            beats_rp2 += 1;
        }
    }
    let noise_max =
        e.runs.iter().filter(|r| r.approach == Approach::Noise).map(|r| r.summary.msae).fold(0.0f64, f64::max);
    let smooth = |h: &[f64], from: usize| h[from..from + 10].iter().sum::<f64>() / 10.0;
    let gan: Vec<&AttackArtifacts> =
        e.artifacts.iter().filter(|a| a.approach == "physgan" && a.history.len() >= 20).collect();
    let falling = gan
        .iter()
        .filter(|a| {
            let h: Vec<f64> = a.history.iter().map(|r| r.l_adv).collect();
            smooth(&h, h.len() - 10) < smooth(&h, 0)
        })
        .count();
    Ok(vec![
        format!("trend: physgan mse > rp2 mse on {scene} in {beats_rp2}/{} seeds", e.seeds().len()),
        format!("trend: largest noise-baseline msae over all runs {noise_max:.3} deg (expected < 2)"),
        format!("trend: physgan L_ADV 10-step average lower at the end than the start in {falling}/{} runs", gan.len()),
    ])
}

/// With the adversarial term dominating, how far the generator pushes the default scene.
fn large_lambda_probe(e: &Experiment) -> Res<String> {
    let scene = &e.cfg.scenes[0];
    let slice = load_slice(&cli::scene_dir(e.out.path(), &scene.name))?;
    let sign = scene.sign.load()?;
    let cfg = physgan_lab::attack::AttackConfig { lambda: 1e6, ..e.cfg.attack.config_for(Approach::PhysGan, 0) };
    let (art, _, _) = physgan_lab::attack::physgan_attack(&slice, &e.model, &sign, &cfg)?;
    let l = adv_loss(&art.pred_orig, &art.pred_adv, cfg.beta, cfg.loss)?;
    let lf = -cfg.beta * (l / cfg.beta).ln();
    Ok(format!(
        "lambda 1e6 on {}: L_ADV of the kept sign {l:.3} (beta/2 = {:.1}), induced l_f {lf:.3} deg^2",
        scene.name,
        cfg.beta / 2.0
    ))
}
