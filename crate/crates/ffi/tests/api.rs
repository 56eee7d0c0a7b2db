use std::ffi::{CStr, CString};
use std::ptr;

use relight_core::conditioning::EmbedderConfig;
use relight_core::diffusion::{DenoiserConfig, Model, ModelConfig, Task, TrainConfig, Trainer};
use relight_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rl_last_error()) }.to_string_lossy().into_owned()
}

fn image(w: usize, h: usize, k: f32) -> *mut RlImage {
    let rgb: Vec<f32> = (0..w * h * 3).map(|i| k + i as f32 / (w * h * 3) as f32).collect();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { rl_image_new(w, h, rgb.as_ptr(), &mut out) }, RlStatus::Ok);
    out
}

fn pixels(img: *const RlImage) -> Vec<f32> {
    let (mut w, mut h) = (0, 0);
    unsafe {
        assert_eq!(rl_image_dims(img, &mut w, &mut h), RlStatus::Ok);
        let mut v = vec![0.0; w * h * 3];
        assert_eq!(rl_image_pixels(img, v.as_mut_ptr(), v.len()), RlStatus::Ok);
        v
    }
}

fn tiny_checkpoint(dir: &std::path::Path, task: Task, n_lights: usize) -> CString {
    let cfg = ModelConfig {
        patch: 2,
        denoiser: DenoiserConfig {
            latent_channels: 12,
            width: 4,
            time_dim: 4,
            temporal_dim: 3,
            cross_dim: 3,
            context_dim: 8,
        },
        embedder: EmbedderConfig {
            n_lights,
            hidden: 4,
            dim: 8,
            pe_freqs: 1,
            ref_channels: [2, 3],
            ref_grid: 1,
            log1p: true,
        },
    };
    let trainer = Trainer::new(Model::init(cfg, 1).unwrap(), task, TrainConfig::default()).unwrap();
    let path = dir.join(format!("{task:?}.ckpt"));
    trainer.save(&path).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn image_round_trip_and_metrics() {
    let a = image(4, 3, 0.0);
    let b = image(4, 3, 0.1);
    let (mut db, mut s) = (0.0, 0.0);
    unsafe {
        assert_eq!(rl_psnr(a, a, &mut db), RlStatus::Ok);
        assert_eq!(db, 99.0);
        assert_eq!(rl_ssim(a, a, &mut s), RlStatus::Ok);
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(rl_psnr(a, b, &mut db), RlStatus::Ok);
        assert!((db - 20.0).abs() < 1e-4, "{db}");

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("a.pfm").to_str().unwrap()).unwrap();
        assert_eq!(rl_image_write_pfm(a, path.as_ptr()), RlStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(rl_image_read_pfm(path.as_ptr(), &mut back), RlStatus::Ok);
        assert_eq!(pixels(back), pixels(a));
        rl_image_free(back);
        rl_image_free(a);
        rl_image_free(b);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(rl_image_new(2, 2, ptr::null(), &mut out), RlStatus::NullPointer);
        assert!(out.is_null());
        assert!(last_error().contains("rgb"));

        let missing = CString::new("/nonexistent/frame.pfm").unwrap();
        assert_eq!(rl_image_read_pfm(missing.as_ptr(), &mut out), RlStatus::Io);

        let a = image(2, 2, 0.0);
        let b = image(3, 2, 0.0);
        let mut db = 0.0;
        assert_eq!(rl_psnr(a, b, &mut db), RlStatus::Shape);
        let mut small = [0.0f32; 5];
        assert_eq!(rl_image_pixels(a, small.as_mut_ptr(), small.len()), RlStatus::Shape);
        rl_image_free(a);
        rl_image_free(b);
        rl_image_free(ptr::null_mut());

        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("junk.pfm");
        std::fs::write(&junk, b"P7\n").unwrap();
        let junk = CString::new(junk.to_str().unwrap()).unwrap();
        assert_eq!(rl_image_read_pfm(junk.as_ptr(), &mut out), RlStatus::Format);
        assert!(last_error().contains("format"));
    }
}

#[test]
fn rig_projection_conserves_energy() {
    unsafe {
        let mut rig = ptr::null_mut();
        assert_eq!(rl_rig_preset(RlRigPreset::Desk, 16, 8, &mut rig), RlStatus::Ok);
        let mut n = 0;
        assert_eq!(rl_rig_light_count(rig, &mut n), RlStatus::Ok);
        assert_eq!(n, 16);

        let rgb: Vec<f32> = (0..16 * 8 * 3).map(|i| (i % 7) as f32 * 0.5).collect();
        let mut env = ptr::null_mut();
        assert_eq!(rl_env_new(16, 8, rgb.as_ptr(), &mut env), RlStatus::Ok);
        let mut w = vec![0.0; 3 * n];
        assert_eq!(rl_rig_project(rig, env, w.as_mut_ptr(), w.len()), RlStatus::Ok);
        let mut total = [0.0; 3];
        assert_eq!(rl_env_total_energy(env, total.as_mut_ptr()), RlStatus::Ok);
        for c in 0..3 {
            let sum: f64 = w.iter().skip(c).step_by(3).sum();
            assert!((sum - total[c]).abs() <= 1e-12 * total[c].abs().max(1.0));
        }
        assert_eq!(rl_rig_project(rig, env, w.as_mut_ptr(), 3), RlStatus::Shape);

        let mut wrong = ptr::null_mut();
        assert_eq!(rl_env_new(8, 4, rgb.as_ptr(), &mut wrong), RlStatus::Ok);
        assert_eq!(rl_rig_project(rig, wrong, w.as_mut_ptr(), w.len()), RlStatus::Shape);
        rl_env_free(wrong);
        rl_env_free(env);
        rl_rig_free(rig);

        let bad = CString::new("{not json").unwrap();
        let mut r2 = ptr::null_mut();
        assert_eq!(rl_rig_from_manifest(bad.as_ptr(), &mut r2), RlStatus::Format);
    }
}

#[test]
fn video_inference_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let delight = tiny_checkpoint(dir.path(), Task::Delight, 16);
    let relight = tiny_checkpoint(dir.path(), Task::Relight, 16);
    unsafe {
        let (mut d, mut r) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(rl_model_load(delight.as_ptr(), &mut d), RlStatus::Ok);
        assert_eq!(rl_model_load(relight.as_ptr(), &mut r), RlStatus::Ok);
        let mut task = RlTask::Relight;
        assert_eq!(rl_model_task(d, &mut task), RlStatus::Ok);
        assert_eq!(task, RlTask::Delight);

        let frames: Vec<*mut RlImage> = (0..5).map(|i| image(8, 8, i as f32 * 0.01)).collect();
        let inputs: Vec<*const RlImage> = frames.iter().map(|&f| f as *const _).collect();
        let settings = RlInferSettings {
            steps: 3,
            window: 3,
            overlap: 1,
            seed: 4,
        };
        let mut out = vec![ptr::null_mut(); 5];
        assert_eq!(rl_delight_video(d, inputs.as_ptr(), 5, settings, out.as_mut_ptr()), RlStatus::Ok);
        assert!(out.iter().all(|p| !p.is_null()));
        let mut again = vec![ptr::null_mut(); 5];
        assert_eq!(rl_delight_video(d, inputs.as_ptr(), 5, settings, again.as_mut_ptr()), RlStatus::Ok);
        for (a, b) in out.iter().zip(&again) {
            assert_eq!(pixels(*a), pixels(*b));
        }

        let mut rig = ptr::null_mut();
        assert_eq!(rl_rig_preset(RlRigPreset::Desk, 16, 8, &mut rig), RlStatus::Ok);
        let rgb = vec![0.5f32; 16 * 8 * 3];
        let mut env = ptr::null_mut();
        assert_eq!(rl_env_new(16, 8, rgb.as_ptr(), &mut env), RlStatus::Ok);
        let mut lit = vec![ptr::null_mut(); 5];
        assert_eq!(
            rl_relight_video(r, rig, env, inputs.as_ptr(), 5, settings, lit.as_mut_ptr()),
            RlStatus::Ok
        );
        // A delighting model refuses to relight and leaves the outputs alone.
        let mut none = vec![ptr::null_mut(); 5];
        assert_eq!(
            rl_relight_video(d, rig, env, inputs.as_ptr(), 5, settings, none.as_mut_ptr()),
            RlStatus::InvalidArgument
        );
        assert!(none.iter().all(|p| p.is_null()));
        assert_eq!(rl_delight_video(d, inputs.as_ptr(), 0, settings, none.as_mut_ptr()), RlStatus::InvalidArgument);

        for p in out.into_iter().chain(again).chain(lit).chain(frames) {
            rl_image_free(p);
        }
        rl_env_free(env);
        rl_rig_free(rig);
        rl_model_free(d);
        rl_model_free(r);
    }
}

#[test]
fn default_settings() {
    let s = rl_infer_settings_default();
    assert_eq!((s.steps, s.window, s.overlap, s.seed), (30, 30, 4, 0));
}
