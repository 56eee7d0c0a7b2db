use std::path::Path;
use std::process::{Command, Output};

use relight_core::hdr::{decode_pfm, encode_pfm};
use relight_core::pipeline::fixture::relight_fixture;
use relight_core::pipeline::MetricReport;

const CONFIG: &str = r#"
seed = 3

[render]
scenes = 3
width = 40
height = 40

[dataset]
envs = 2
train_fraction = 0.5
motion_clips = 2
motion_frames = 4
motion_width = 32
motion_height = 32

[dataset.lighting_rich]
pairs_per_stack = 2
frames = 4
out_width = 32
out_height = 32
rotate_envs = true
motion = { max_pan = 0.5, zoom_min = 0.98, zoom_max = 1.02 }

[model]
patch = 4
denoiser = { latent_channels = 48, width = 8, time_dim = 8, temporal_dim = 8, cross_dim = 8, context_dim = 16 }
embedder = { n_lights = 16, hidden = 8, dim = 16, pe_freqs = 2, ref_channels = [4, 8], ref_grid = 4, log1p = true }

[train]
batch = 2
stage1 = { steps = 2, frames = 2 }
stage2 = { steps = 1, frames = 4 }

[infer]
steps = 3
window = 3
overlap = 1
seed = 7
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relight"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let mut full = vec!["--config", "cfg.toml"];
    full.extend_from_slice(args);
    let out = run(dir, &full);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn frames_in(dir: &Path) -> Vec<Vec<u8>> {
    let mut names: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    names.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(run(dir.path(), &["infer", "--help"]).status.code(), Some(0));
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["train", "delight"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["--seed", "x", "rig", "build", "--out", "r.json"]).status.code(), Some(1));
}

#[test]
fn data_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(dir.path(), &["env", "preview", "--input", "nope.hdr", "--out", "p.png"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(!missing.stderr.is_empty());

    std::fs::write(dir.path().join("bad.pfm"), b"PF\n2 2\n-1.0\nshort").unwrap();
    let bad = run(dir.path(), &["env", "rotate", "--input", "bad.pfm", "--out", "r.pfm", "--degrees", "10"]);
    assert_eq!(bad.status.code(), Some(2));

    std::fs::write(dir.path().join("cfg.toml"), "[render]\nscenes = \"many\"\n").unwrap();
    let cfg = run(dir.path(), &["--config", "cfg.toml", "rig", "build", "--out", "r.json"]);
    assert_eq!(cfg.status.code(), Some(1));
}

#[test]
fn smoke_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("cfg.toml"), CONFIG).unwrap();
    let fx = relight_fixture(1, 32, 5, 2).unwrap();
    std::fs::create_dir_all(dir.join("clip")).unwrap();
    for (i, f) in fx.records[0].lit.iter().enumerate() {
        std::fs::write(dir.join(format!("clip/{i:02}.pfm")), encode_pfm(f)).unwrap();
    }
    std::fs::write(dir.join("ref.pfm"), encode_pfm(&fx.records[1].lit[0])).unwrap();
    std::fs::write(dir.join("env.pfm"), encode_pfm(fx.envs[0].image())).unwrap();

    ok(dir, &["rig", "build", "--out", "rig.json"]);
    ok(dir, &["render", "olat", "--out", "stacks.lxpf"]);
    ok(dir, &["dataset", "build-dl", "--stacks", "stacks.lxpf", "--out", "dl.lxpf", "--env", "env.pfm"]);
    ok(dir, &["dataset", "build-dm", "--out", "dm.lxpf"]);
    ok(dir, &["train", "delight", "--data", "dl.lxpf", "--out", "d.ckpt", "--log-every", "0"]);
    ok(dir, &["dataset", "build-dm", "--out", "dm2.lxpf", "--delight", "d.ckpt"]);
    ok(dir, &["train", "relight", "--data", "dl.lxpf", "--data", "dm2.lxpf", "--out", "r.ckpt", "--log-every", "0"]);

    ok(dir, &["infer", "delight", "--model", "d.ckpt", "--input", "clip", "--out", "albedo"]);
    ok(dir, &["infer", "relight", "--model", "r.ckpt", "--env", "env.pfm", "--input", "albedo", "--out", "lit"]);
    ok(dir, &["infer", "copy", "--model", "r.ckpt", "--reference", "ref.pfm", "--input", "albedo", "--out", "copied"]);
    ok(
        dir,
        &[
            "infer", "full", "--delight", "d.ckpt", "--relight", "r.ckpt", "--env", "env.pfm", "--albedo-out",
            "full_albedo", "--input", "clip", "--out", "full_lit",
        ],
    );
    for sub in ["albedo", "lit", "copied", "full_albedo", "full_lit"] {
        let frames = frames_in(&dir.join(sub));
        assert_eq!(frames.len(), 5, "{sub}");
        let img = decode_pfm(&frames[0]).unwrap();
        assert_eq!(img.dims(), (32, 32));
    }
    // the albedo persisted through PFM relights to the same output
    assert_eq!(frames_in(&dir.join("full_albedo")), frames_in(&dir.join("albedo")));
    assert_eq!(frames_in(&dir.join("full_lit")), frames_in(&dir.join("lit")));

    // a checkpoint for the other task is an invalid argument
    let out = run(dir, &["--config", "cfg.toml", "infer", "delight", "--model", "r.ckpt", "--input", "clip", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));

    ok(dir, &["env", "preview", "--input", "env.pfm", "--out", "env.png"]);
    assert!(std::fs::read(dir.join("env.png")).unwrap().starts_with(b"\x89PNG"));
    ok(dir, &["env", "rotate", "--input", "env.pfm", "--out", "env_rot.hdr", "--degrees", "-45"]);
    assert!(std::fs::read(dir.join("env_rot.hdr")).unwrap().starts_with(b"#?RADIANCE"));

    ok(dir, &["eval", "--data", "dl.lxpf", "--delight", "d.ckpt", "--relight", "r.ckpt", "--out", "report.json"]);
    let report: MetricReport = serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap();
    assert!(!report.clips.is_empty());
    assert!(report.aggregate.relight_psnr >= 0.0 && report.aggregate.relight_psnr <= 99.0);
    assert!((-1.0..=1.0).contains(&report.aggregate.delight_ssim));
    assert_eq!(report.provenance.seed, 7);
    assert_eq!(report.provenance.config_hash.len(), 64);
    assert!(report.provenance.relight_checkpoint.is_some());
}

#[test]
fn seed_flag_changes_the_data() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("cfg.toml"), CONFIG).unwrap();
    ok(dir, &["render", "olat", "--out", "a.lxpf"]);
    ok(dir, &["render", "olat", "--out", "b.lxpf"]);
    ok(dir, &["--seed", "4", "render", "olat", "--out", "c.lxpf"]);
    let read = |n: &str| std::fs::read(dir.join(n)).unwrap();
    assert_eq!(read("a.lxpf"), read("b.lxpf"));
    assert_ne!(read("a.lxpf"), read("c.lxpf"));
}
