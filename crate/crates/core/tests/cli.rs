use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 5
[data]
records = 5
holdout = 2
[data.phantom]
dims = [8, 16, 16]
spacing_mm = [2.0, 2.0, 2.0]
[preprocess]
drop_top = 0
drop_bottom = 0
target_dims = [8, 16, 16]
[unet.network]
in_channels = 4
out_channels = 2
base_channels = 2
levels = 2
[unet.train]
steps = 3
[diffusion]
timesteps = 6
beta_start = 0.01
beta_end = 0.2
steps = 3
[diffusion.denoiser]
in_channels = 5
out_channels = 1
base_channels = 2
levels = 2
use_time_embedding = true
time_embed_dim = 4
"#;

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segrefine"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn full_run(config: &Path, out: &Path) {
    for cmd in ["synth", "preprocess", "train-unet", "train-diff", "refine", "eval"] {
        let o = run(&[cmd], config, out);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn stages_run_in_order_and_reproduce_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    full_run(&config, &a);
    full_run(&config, &b);
    for file in ["eval/initial.csv", "eval/corrected.csv", "unet_log.csv", "diffusion_log.csv", "diffusion.ckpt", "unet.ckpt"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let csv = std::fs::read_to_string(a.join("eval/corrected.csv")).unwrap();
    assert!(csv.starts_with("id,dice,hd95_mm,tp,fp,fn\n"));
    assert_eq!(csv.lines().count(), 2 + 2, "header, two records, mean row");
    assert!(std::fs::read_dir(a.join("refine/slices")).unwrap().count() > 0);
}

#[test]
fn seed_flag_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["synth"], &config, &a).status.success());
    assert!(run(&["synth", "--seed", "6"], &config, &b).status.success());
    let img = |d: &Path| std::fs::read(d.join("data/phantom0000_img.nvol")).unwrap();
    assert_ne!(img(&a), img(&b));
}

#[test]
fn records_flag_limits_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let out = dir.path().join("o");
    assert!(run(&["synth", "--records", "3"], &config, &out).status.success());
    let manifest = std::fs::read_to_string(out.join("data/manifest.txt")).unwrap();
    assert_eq!(manifest.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).count(), 3);
}

#[test]
fn exit_codes_name_the_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let out = dir.path().join("o");

    let missing = run(&["refine"], &config, &out);
    assert_eq!(missing.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing artifact"));

    let bad = write_config(dir.path(), "seed = 1\n[unet]\nbogus = 3\n");
    assert_eq!(run(&["synth"], &bad, &out).status.code(), Some(3));
    assert_eq!(run(&["synth"], &dir.path().join("absent.toml"), &out).status.code(), Some(3));

    assert_eq!(run(&["frobnicate"], &config, &out).status.code(), Some(2));
}
