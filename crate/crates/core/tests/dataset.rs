use relight_core::dataset::{
    build_lighting_rich, build_motion_rich, compose_relight, procedural_envs, read_dataset, write_dataset,
    ClipSource, DType, Dataset, FlickerOracle, LightingRichConfig, MotionRange,
};
use relight_core::rig::{LightWeights, RigPreset};
use relight_core::studio::{random_scene, render_olat, synth_motion_clip, ClipLighting};

fn config() -> LightingRichConfig {
    LightingRichConfig {
        pairs_per_stack: 3,
        frames: 4,
        out_width: 24,
        out_height: 24,
        motion: MotionRange {
            max_pan: 1.0,
            zoom_min: 0.95,
            zoom_max: 1.05,
        },
        rotate_envs: true,
    }
}

#[test]
fn lighting_rich_build_is_seeded_and_complete() {
    let rig = RigPreset::Desk.build(32, 16).unwrap();
    let stacks: Vec<_> = (0..2)
        .map(|i| render_olat(&random_scene(&format!("s{i}"), i, 32, 32, 1), 0, &rig).unwrap())
        .collect();
    let envs = procedural_envs(3, 32, 16, 1).unwrap();
    let a = build_lighting_rich(&stacks, &envs, &rig, &config(), 9).unwrap();
    let b = build_lighting_rich(&stacks, &envs, &rig, &config(), 9).unwrap();
    let c = build_lighting_rich(&stacks, &envs, &rig, &config(), 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.len(), 6);
    for r in &a {
        assert_eq!(r.source, ClipSource::LightingRich);
        assert!(r.env.is_some());
        assert_eq!(r.frames(), 4);
        assert_eq!(r.dims(), (24, 24));
        assert_eq!(r.flows.as_ref().unwrap().len(), 3);
    }
    // pairings of one stack share the albedo video
    assert_eq!(a[0].albedo, a[1].albedo);
    assert_eq!(a[0].group, a[2].group);
    assert_ne!(a[0].group, a[3].group);

    let other = RigPreset::Stage.build(32, 16).unwrap();
    assert!(build_lighting_rich(&stacks, &envs, &other, &config(), 9).is_err());
    assert!(build_lighting_rich(&stacks, &[], &rig, &config(), 9).is_err());
}

#[test]
fn composition_is_linear_in_the_weights() {
    let rig = RigPreset::Desk.build(32, 16).unwrap();
    let stack = render_olat(&random_scene("lin", 3, 24, 24, 1), 0, &rig).unwrap();
    let wa = LightWeights((0..16).map(|i| [i as f64 * 0.1, 0.2, 0.0]).collect());
    let wb = LightWeights((0..16).map(|i| [0.3, (16 - i) as f64 * 0.05, 0.7]).collect());
    let sum = LightWeights(wa.0.iter().zip(&wb.0).map(|(x, y)| [0, 1, 2].map(|c| x[c] + y[c])).collect());
    let (ia, ib, is) = (
        compose_relight(&stack, &wa).unwrap(),
        compose_relight(&stack, &wb).unwrap(),
        compose_relight(&stack, &sum).unwrap(),
    );
    for ((a, b), s) in ia.pixels().iter().zip(ib.pixels()).zip(is.pixels()) {
        for c in 0..3 {
            let want = a[c] as f64 + b[c] as f64;
            assert!((s[c] as f64 - want).abs() <= 1e-5 * want.abs().max(1e-3));
        }
    }
    assert!(compose_relight(&stack, &LightWeights(vec![[1.0; 3]; 3])).is_err());
}

#[test]
fn motion_rich_flicker_labels() {
    let rig = RigPreset::Desk.build(32, 16).unwrap();
    let env = procedural_envs(1, 32, 16, 4).unwrap().remove(0);
    let clip = synth_motion_clip(&random_scene("m", 2, 24, 24, 6), 0..6, ClipLighting::Olat(&rig, &env)).unwrap();
    let delta = 0.1;
    let records = build_motion_rich(std::slice::from_ref(&clip), &FlickerOracle { delta }, 1).unwrap();
    let r = &records[0];
    assert_eq!(r.source, ClipSource::MotionRich);
    assert!(r.env.is_none());
    assert_eq!(r.lit, clip.lit);
    let mut gains = Vec::new();
    for (pseudo, exact) in r.albedo.iter().zip(&clip.albedo) {
        // one gain per frame, within [1 − δ, 1 + δ]
        let pairs: Vec<(f32, f32)> = pseudo
            .pixels()
            .iter()
            .flatten()
            .zip(exact.pixels().iter().flatten())
            .map(|(&p, &e)| (p, e))
            .filter(|&(_, e)| e > 0.05)
            .collect();
        let u = pairs[0].0 / pairs[0].1;
        assert!((1.0 - delta as f32 - 1e-6..=1.0 + delta as f32 + 1e-6).contains(&u));
        assert!(pairs.iter().all(|&(p, e)| (p - u * e).abs() <= 1e-6));
        gains.push(u);
    }
    assert!(gains.windows(2).any(|g| g[0] != g[1]));

    let exact = build_motion_rich(std::slice::from_ref(&clip), &FlickerOracle { delta: 0.0 }, 1).unwrap();
    assert_eq!(exact[0].albedo, clip.albedo);
}

#[test]
fn dataset_container_round_trip() {
    let rig = RigPreset::Desk.build(32, 16).unwrap();
    let stacks = vec![render_olat(&random_scene("rt", 5, 32, 32, 1), 0, &rig).unwrap()];
    let envs = procedural_envs(2, 32, 16, 2).unwrap();
    let cfg = LightingRichConfig { pairs_per_stack: 2, ..config() };
    let records = build_lighting_rich(&stacks, &envs, &rig, &cfg, 3).unwrap();
    let ds = Dataset {
        rig_id: rig.id().to_string(),
        split: None,
        records,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dl.lxpf");
    write_dataset(&path, &ds, DType::F32).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), ds);
}
