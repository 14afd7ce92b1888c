use std::path::Path;
use std::process::Command;

use physgan_lab::attack::Approach;
use physgan_lab::cli::{self, CliError, ExperimentConfig, Selection};
use physgan_lab::scene::scene_family;

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.scenes.truncate(2);
    cfg.train.family_size = 4;
    cfg.train.config.epochs = 2;
    cfg.attack.seeds = vec![0];
    cfg.attack.config.iterations = 10;
    cfg
}

fn write_config(cfg: &ExperimentConfig, dir: &Path) -> std::path::PathBuf {
    let p = dir.join("experiment.toml");
    std::fs::write(&p, cfg.to_toml().unwrap()).unwrap();
    p
}

#[test]
fn gen_scenes_writes_one_directory_per_scene() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { scenes: scene_family(7, 3), ..small_config() };
    let rows = cli::cmd_gen_scenes(&cfg, dir.path(), 2).unwrap();
    assert_eq!(rows.len(), 7);
    for s in &cfg.scenes {
        let slice = physgan_lab::scene::load_slice(&cli::scene_dir(dir.path(), &s.name)).unwrap();
        assert_eq!(slice.len(), 20);
    }
    assert!(dir.path().join("scenes/manifest.csv").exists());
    assert!(dir.path().join("config.snapshot.toml").exists());
}

#[test]
fn empty_scene_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { scenes: vec![], ..small_config() };
    assert!(matches!(cli::cmd_gen_scenes(&cfg, dir.path(), 1), Err(CliError::Config { .. })));
}

#[test]
fn scene_hashes_are_deterministic() {
    let cfg = small_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = cli::cmd_gen_scenes(&cfg, a.path(), 1).unwrap();
    let rb = cli::cmd_gen_scenes(&cfg, b.path(), 2).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(
        std::fs::read(a.path().join("scenes/manifest.csv")).unwrap(),
        std::fs::read(b.path().join("scenes/manifest.csv")).unwrap()
    );
}

#[test]
fn missing_inputs_exit_nonzero_and_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_physgan-lab");

    let absent = dir.path().join("nope.toml");
    let out = Command::new(bin).args(["gen-scenes", "--config"]).arg(&absent).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains(absent.to_str().unwrap()));

    // Attacking before training: the model file is missing.
    let cfg_path = write_config(&small_config(), dir.path());
    let run = dir.path().join("run");
    let out = Command::new(bin).args(["attack", "--config"]).arg(&cfg_path).arg("--out").arg(&run).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("steering.pgt"), "{stderr}");
}

#[test]
fn bad_approach_is_rejected_by_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(&small_config(), dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_physgan-lab"))
        .args(["eval", "--approach", "laser", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("laser"));
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let out = dir.path();
    cli::cmd_gen_scenes(&cfg, out, 1).unwrap();
    let (model, report) = cli::cmd_train(&cfg, out).unwrap();
    assert_eq!(report.checksum, model.params().checksum());
    assert_eq!(report.train_scenes + report.validation_scenes, cfg.train.family_size);

    let sel =
        Selection { approaches: vec![Approach::Original, Approach::Noise, Approach::PhysGan], ..Selection::all(&cfg) };
    let arts = cli::cmd_attack(&cfg, out, &sel).unwrap();
    assert_eq!(arts.len(), 3 * cfg.scenes.len());
    assert!(arts.iter().all(|a| a.model_checksum == report.checksum));

    let mut eval_cfg = cfg.clone();
    eval_cfg.eval.reference = physgan_lab::attack::Reference::Original;
    let runs = cli::cmd_eval(&eval_cfg, out, &sel).unwrap();
    for r in runs.iter().filter(|r| r.approach == Approach::Original) {
        assert!(r.summary.msae < 0.5, "{}: {}", r.scene, r.summary.msae);
    }
    for s in &cfg.scenes {
        assert!(out.join("eval/timelines").join(format!("{}-seed-0.png", s.name)).exists());
    }

    let rows = cli::cmd_report(&cfg, out).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.approach.as_str()).collect();
    assert_eq!(names, ["physgan", "noise", "original"]);
    assert!(rows.iter().all(|r| r.runs == cfg.scenes.len() && r.model == cfg.name));
    assert!(out.join("report.csv").exists());
    assert_eq!(cli::format_report(&rows).lines().count(), 4);
}

#[test]
fn example_config_loads() {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/experiment.toml");
    let cfg = ExperimentConfig::load(&p).unwrap();
    assert_eq!(cfg.scenes.len(), 2);
    assert_eq!(cfg.attack.config_for(Approach::Rp2, 0).iterations, 300);
    assert!(cfg.output_dir.ends_with("runs/small"));
}
