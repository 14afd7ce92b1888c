use physgan_lab::attack::{
    fgsm_full_frame, middle_patch, phys_fgsm, random_noise_sign, rp2_regression, run_attack, Approach, AttackArtifacts,
    AttackConfig, AttackError,
};
use physgan_lab::nets::{ConvLayerSpec, LossKind, SteeringArch, SteeringModel};
use physgan_lab::scene::{render_scene, SceneConfig, VideoSlice};
use physgan_lab::tensor::Tensor;
use physgan_lab::warp::interior_mask;

fn setup() -> (VideoSlice, SteeringModel, Tensor) {
    let scene = SceneConfig::default();
    let sign = scene.sign.load().unwrap();
    let slice = render_scene(&scene, &sign).unwrap();
    let arch = SteeringArch {
        convs: vec![ConvLayerSpec { out_channels: 4, kernel: [1, 8, 8], stride: [1, 8, 8], padding: [0, 0, 0] }],
        hidden: vec![4],
        ..SteeringArch::default()
    };
    (slice, SteeringModel::new(arch, 11).unwrap(), sign)
}

fn hw(sign: &Tensor) -> (usize, usize) {
    (sign.shape()[1], sign.shape()[2])
}

#[test]
fn zero_epsilon_baselines_are_identities() {
    let (slice, model, sign) = setup();
    assert_eq!(fgsm_full_frame(&slice, &model, 0.0, LossKind::Mse).unwrap().frames, slice.frames);
    assert_eq!(
        phys_fgsm(&slice, &model, 0.0, LossKind::Mse, hw(&sign)).unwrap(),
        middle_patch(&slice, hw(&sign)).unwrap()
    );
    assert_eq!(random_noise_sign(&sign, 0.0, 5).unwrap(), sign);
}

#[test]
fn negative_epsilon_is_rejected() {
    let (slice, model, sign) = setup();
    assert!(fgsm_full_frame(&slice, &model, -0.1, LossKind::Mse).is_err());
    assert!(random_noise_sign(&sign, -0.1, 0).is_err());
    let cfg = AttackConfig { epsilon: f64::NAN, ..Default::default() };
    assert!(matches!(run_attack(Approach::Noise, &slice, &model, &sign, &cfg), Err(AttackError::Config(_))));
}

#[test]
fn fgsm_moves_every_pixel_by_at_most_epsilon() {
    let (slice, model, _) = setup();
    let eps = 8.0 / 255.0;
    let adv = fgsm_full_frame(&slice, &model, eps, LossKind::Mse).unwrap();
    let diff = adv.frames.zip_map(&slice.frames, |a, b| (a - b).abs()).unwrap();
    assert!(diff.max_abs() <= eps + 1e-12);
    // Unlike the sign-based attacks, pixels off the billboard change too.
    let [_, h, w] = slice.frame_shape();
    let mask = interior_mask(&slice.quads[0], (h, w));
    let outside_changed = (0..h * w).any(|p| !mask[p] && diff.data()[p] > 0.0);
    assert!(outside_changed);
}

#[test]
fn rp2_records_history_and_stays_in_range() {
    let (slice, model, sign) = setup();
    let cfg = AttackConfig { iterations: 5, ..Default::default() };
    let (out, history) = rp2_regression(&slice, &model, &cfg, hw(&sign)).unwrap();
    assert_eq!(history.len(), 5);
    assert!(history.iter().all(|r| r.l_adv > 0.0 && r.l_adv <= cfg.beta));
    assert_eq!(out.shape(), sign.shape());
    assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn every_approach_keeps_the_target_frozen_and_is_deterministic() {
    let (slice, model, sign) = setup();
    let before = model.params().checksum();
    let cfg = AttackConfig { iterations: 3, ..Default::default() };
    for a in Approach::ALL {
        let x = run_attack(a, &slice, &model, &sign, &cfg).unwrap();
        let y = run_attack(a, &slice, &model, &sign, &cfg).unwrap();
        assert_eq!(x.sign, y.sign, "{a}");
        assert_eq!(x.pred_adv, y.pred_adv, "{a}");
        assert_eq!(x.model_checksum, before);
        assert_eq!(x.sign.shape(), sign.shape());
        assert_eq!(x.adv_frames.is_some(), a == Approach::Fgsm);
    }
    assert_eq!(model.params().checksum(), before);
}

#[test]
fn original_approach_reproduces_clean_predictions() {
    let (slice, model, sign) = setup();
    let art = run_attack(Approach::Original, &slice, &model, &sign, &AttackConfig::default()).unwrap();
    assert_eq!(art.pred_orig, art.pred_adv);
}

#[test]
fn artifacts_round_trip_through_disk() {
    let (slice, model, sign) = setup();
    let dir = tempfile::tempdir().unwrap();
    let cfg = AttackConfig { iterations: 2, seed: 4, ..Default::default() };
    for a in [Approach::PhysGan, Approach::Fgsm] {
        let art = run_attack(a, &slice, &model, &sign, &cfg).unwrap();
        let d = dir.path().join(a.name());
        art.save(&d).unwrap();
        assert_eq!(AttackArtifacts::load_sign(&d).unwrap(), art.sign);
        assert_eq!(AttackArtifacts::load_frames(&d).unwrap(), art.adv_frames);
        let (name, seed, loaded) = AttackArtifacts::load_meta(&d).unwrap();
        assert_eq!((name.as_str(), seed), (a.name(), 4));
        assert_eq!(loaded, art.config);
        for f in ["sign.png", "losses.csv", "predictions.csv", "run.toml"] {
            assert!(d.join(f).exists(), "{f}");
        }
    }
}
