//! C interface over `relight-core`.
//!
//! Objects are opaque heap handles created by `rl_*_new`/`rl_*_read`/
//! `rl_*_load` and released with the matching `rl_*_free`. Every fallible
//! call returns an [`RlStatus`]; on failure [`rl_last_error`] describes the
//! problem. Output pointers are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use relight_core::diffusion::{Model, Task, Trainer};
use relight_core::hdr::{decode_pfm, encode_pfm};
use relight_core::pipeline::{delight_video, metrics, relight_video, InferSettings};
use relight_core::rig::{LightRig, RigManifest, RigPreset};
use relight_core::{Error, Image, RadianceMap};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Format = 3,
    Shape = 4,
    NonFinite = 5,
    Io = 6,
    Config = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlRigPreset {
    Desk = 0,
    Stage = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlTask {
    Delight = 0,
    Relight = 1,
}

/// Sampling parameters for video inference.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RlInferSettings {
    pub steps: usize,
    pub window: usize,
    pub overlap: usize,
    pub seed: u64,
}

impl From<RlInferSettings> for InferSettings {
    fn from(s: RlInferSettings) -> Self {
        InferSettings {
            steps: s.steps,
            window: s.window,
            overlap: s.overlap,
            seed: s.seed,
        }
    }
}

/// Linear RGB float image.
pub struct RlImage(Image);

/// Equirectangular HDR environment map.
pub struct RlEnvMap(RadianceMap);

pub struct RlRig(LightRig);

/// A trained delighting or relighting model.
pub struct RlModel {
    model: Model,
    task: Task,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RlStatus {
    match e {
        Error::Format { .. } | Error::Json(_) => RlStatus::Format,
        Error::Shape(_) => RlStatus::Shape,
        Error::InvalidArgument(_) => RlStatus::InvalidArgument,
        Error::NonFinite(_) => RlStatus::NonFinite,
        Error::Io { .. } => RlStatus::Io,
        Error::Config(_) => RlStatus::Config,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RlStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            RlStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            RlStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument("path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn frames_arg(frames: *const *const RlImage, count: usize) -> Result<Vec<Image>, Fail> {
    if count == 0 {
        return Err(Error::InvalidArgument("no frames".into()).into());
    }
    if frames.is_null() {
        return Err(Fail::Null("frames"));
    }
    std::slice::from_raw_parts(frames, count)
        .iter()
        .map(|&f| deref(f, "frame").map(|f| f.0.clone()))
        .collect()
}

unsafe fn write_frames(out: *mut *mut RlImage, frames: Vec<Image>) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    let slots = std::slice::from_raw_parts_mut(out, frames.len());
    for (slot, f) in slots.iter_mut().zip(frames) {
        *slot = Box::into_raw(Box::new(RlImage(f)));
    }
    Ok(())
}

fn boxed<T>(out: &mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Desk defaults: 30 steps, 30-frame windows, 4 overlap frames, seed 0.
#[no_mangle]
pub extern "C" fn rl_infer_settings_default() -> RlInferSettings {
    let d = InferSettings::default();
    RlInferSettings {
        steps: d.steps,
        window: d.window,
        overlap: d.overlap,
        seed: d.seed,
    }
}

/// Copies `width * height * 3` interleaved RGB floats into a new image.
///
/// # Safety
/// `rgb` must point to that many floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_image_new(width: usize, height: usize, rgb: *const f32, out: *mut *mut RlImage) -> RlStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if rgb.is_null() {
            return Err(Fail::Null("rgb"));
        }
        let n = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| Error::InvalidArgument("image size overflows".into()))?;
        let data = std::slice::from_raw_parts(rgb, n);
        boxed(out, RlImage(Image::from_flat(width, height, data)?));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_image_read_pfm(path: *const c_char, out: *mut *mut RlImage) -> RlStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = path_arg(path)?;
        let bytes = std::fs::read(&path).map_err(|e| Error::Io { path, source: e })?;
        boxed(out, RlImage(decode_pfm(&bytes)?));
        Ok(())
    })
}

/// # Safety
/// `image` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rl_image_write_pfm(image: *const RlImage, path: *const c_char) -> RlStatus {
    guard(|| {
        let image = deref(image, "image")?;
        let path = path_arg(path)?;
        std::fs::write(&path, encode_pfm(&image.0)).map_err(|e| Error::Io { path, source: e })?;
        Ok(())
    })
}

/// # Safety
/// `image` must be a live handle; `width` and `height` writable.
#[no_mangle]
pub unsafe extern "C" fn rl_image_dims(image: *const RlImage, width: *mut usize, height: *mut usize) -> RlStatus {
    guard(|| {
        let (w, h) = deref(image, "image")?.0.dims();
        *out_ptr(width, "width")? = w;
        *out_ptr(height, "height")? = h;
        Ok(())
    })
}

/// Copies the pixels out as interleaved RGB; `len` must equal `width * height * 3`.
///
/// # Safety
/// `image` must be a live handle; `rgb` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn rl_image_pixels(image: *const RlImage, rgb: *mut f32, len: usize) -> RlStatus {
    guard(|| {
        let flat = deref(image, "image")?.0.to_flat();
        if len != flat.len() {
            return Err(Error::Shape(format!("buffer holds {len} floats, image has {}", flat.len())).into());
        }
        if rgb.is_null() {
            return Err(Fail::Null("rgb"));
        }
        std::slice::from_raw_parts_mut(rgb, len).copy_from_slice(&flat);
        Ok(())
    })
}

/// # Safety
/// `image` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rl_image_free(image: *mut RlImage) {
    free(image);
}

/// Reads an environment map; `.pfm` files are read as PFM, anything else as Radiance RGBE.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_env_read(path: *const c_char, out: *mut *mut RlEnvMap) -> RlStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = path_arg(path)?;
        let bytes = std::fs::read(&path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let map = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm")) {
            RadianceMap::try_from(decode_pfm(&bytes)?)?
        } else {
            relight_core::hdr::decode_rgbe(&bytes)?
        };
        boxed(out, RlEnvMap(map));
        Ok(())
    })
}

/// Builds an environment map from `width * height * 3` interleaved RGB floats.
///
/// # Safety
/// `rgb` must point to that many floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_env_new(width: usize, height: usize, rgb: *const f32, out: *mut *mut RlEnvMap) -> RlStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if rgb.is_null() {
            return Err(Fail::Null("rgb"));
        }
        let n = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| Error::InvalidArgument("map size overflows".into()))?;
        let image = Image::from_flat(width, height, std::slice::from_raw_parts(rgb, n))?;
        boxed(out, RlEnvMap(RadianceMap::try_from(image)?));
        Ok(())
    })
}

/// Solid-angle-weighted radiance integral per channel.
///
/// # Safety
/// `env` must be a live handle; `rgb` must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn rl_env_total_energy(env: *const RlEnvMap, rgb: *mut f64) -> RlStatus {
    guard(|| {
        let e = deref(env, "env")?.0.total_energy();
        if rgb.is_null() {
            return Err(Fail::Null("rgb"));
        }
        std::slice::from_raw_parts_mut(rgb, 3).copy_from_slice(&e);
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rl_env_free(env: *mut RlEnvMap) {
    free(env);
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_rig_preset(
    preset: RlRigPreset,
    map_width: usize,
    map_height: usize,
    out: *mut *mut RlRig,
) -> RlStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let p = match preset {
            RlRigPreset::Desk => RigPreset::Desk,
            RlRigPreset::Stage => RigPreset::Stage,
        };
        boxed(out, RlRig(p.build(map_width, map_height)?));
        Ok(())
    })
}

/// Rebuilds a rig from the JSON manifest written by `relight rig build`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_rig_from_manifest(json: *const c_char, out: *mut *mut RlRig) -> RlStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if json.is_null() {
            return Err(Fail::Null("json"));
        }
        let m: RigManifest = serde_json::from_slice(CStr::from_ptr(json).to_bytes()).map_err(Error::Json)?;
        boxed(out, RlRig(LightRig::from_manifest(&m)?));
        Ok(())
    })
}

/// # Safety
/// `rig` must be a live handle; `count` writable.
#[no_mangle]
pub unsafe extern "C" fn rl_rig_light_count(rig: *const RlRig, count: *mut usize) -> RlStatus {
    guard(|| {
        *out_ptr(count, "count")? = deref(rig, "rig")?.0.len();
        Ok(())
    })
}

/// Per-light RGB weights of `env`, written as `3 * light_count` doubles.
///
/// # Safety
/// `rig` and `env` must be live handles; `weights` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rl_rig_project(
    rig: *const RlRig,
    env: *const RlEnvMap,
    weights: *mut f64,
    len: usize,
) -> RlStatus {
    guard(|| {
        let w = deref(rig, "rig")?.0.project(&deref(env, "env")?.0)?;
        if len != 3 * w.len() {
            return Err(Error::Shape(format!("buffer holds {len} doubles, need {}", 3 * w.len())).into());
        }
        if weights.is_null() {
            return Err(Fail::Null("weights"));
        }
        let dst = std::slice::from_raw_parts_mut(weights, len);
        for (d, s) in dst.chunks_exact_mut(3).zip(&w.0) {
            d.copy_from_slice(s);
        }
        Ok(())
    })
}

/// # Safety
/// `rig` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rl_rig_free(rig: *mut RlRig) {
    free(rig);
}

/// PSNR in dB on [0, 1] frames, capped at 99.
///
/// # Safety
/// `a` and `b` must be live handles; `db` writable.
#[no_mangle]
pub unsafe extern "C" fn rl_psnr(a: *const RlImage, b: *const RlImage, db: *mut f64) -> RlStatus {
    guard(|| {
        *out_ptr(db, "db")? = metrics::psnr(&deref(a, "a")?.0, &deref(b, "b")?.0)?;
        Ok(())
    })
}

/// # Safety
/// `a` and `b` must be live handles; `score` writable.
#[no_mangle]
pub unsafe extern "C" fn rl_ssim(a: *const RlImage, b: *const RlImage, score: *mut f64) -> RlStatus {
    guard(|| {
        *out_ptr(score, "score")? = metrics::ssim(&deref(a, "a")?.0, &deref(b, "b")?.0)?;
        Ok(())
    })
}

/// Loads the model stored in a training checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_model_load(path: *const c_char, out: *mut *mut RlModel) -> RlStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let t = Trainer::load(&path_arg(path)?)?;
        boxed(
            out,
            RlModel {
                model: t.model,
                task: t.task,
            },
        );
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `task` writable.
#[no_mangle]
pub unsafe extern "C" fn rl_model_task(model: *const RlModel, task: *mut RlTask) -> RlStatus {
    guard(|| {
        *out_ptr(task, "task")? = match deref(model, "model")?.task {
            Task::Delight => RlTask::Delight,
            Task::Relight => RlTask::Relight,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rl_model_free(model: *mut RlModel) {
    free(model);
}

fn expect_task(model: &RlModel, want: Task) -> Result<(), Fail> {
    if model.task != want {
        return Err(Error::InvalidArgument(format!("model is a {:?} model, expected {want:?}", model.task)).into());
    }
    Ok(())
}

/// Lit frames to albedo. On success `out[0..count]` receives new image
/// handles owned by the caller.
///
/// # Safety
/// `frames` must hold `count` live handles; `out` must hold `count` slots.
#[no_mangle]
pub unsafe extern "C" fn rl_delight_video(
    model: *const RlModel,
    frames: *const *const RlImage,
    count: usize,
    settings: RlInferSettings,
    out: *mut *mut RlImage,
) -> RlStatus {
    guard(|| {
        let model = deref(model, "model")?;
        expect_task(model, Task::Delight)?;
        let video = delight_video(&frames_arg(frames, count)?, &model.model, &settings.into())?;
        write_frames(out, video)
    })
}

/// Albedo frames relit by `env`. Output ownership as in [`rl_delight_video`].
///
/// # Safety
/// Handles must be live; `frames` holds `count` handles, `out` `count` slots.
#[no_mangle]
pub unsafe extern "C" fn rl_relight_video(
    model: *const RlModel,
    rig: *const RlRig,
    env: *const RlEnvMap,
    frames: *const *const RlImage,
    count: usize,
    settings: RlInferSettings,
    out: *mut *mut RlImage,
) -> RlStatus {
    guard(|| {
        let model = deref(model, "model")?;
        expect_task(model, Task::Relight)?;
        let video = relight_video(
            &frames_arg(frames, count)?,
            &deref(env, "env")?.0,
            &deref(rig, "rig")?.0,
            &model.model,
            &settings.into(),
        )?;
        write_frames(out, video)
    })
}
