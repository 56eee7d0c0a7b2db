use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::rig::{Coverage, Layout};

fn small_cfg(n_lights: usize) -> EmbedderConfig {
    EmbedderConfig {
        n_lights,
        hidden: 6,
        dim: 12,
        pe_freqs: 1,
        ref_channels: [3, 4],
        ref_grid: 2,
        log1p: true,
    }
}

fn embedder(cfg: EmbedderConfig, seed: u64) -> (Embedder, ParamStore) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder::Init {
        store: &mut store,
        rng: &mut rng,
    };
    let e = Embedder::build(cfg, &mut b).unwrap();
    (e, store)
}

fn rig() -> LightRig {
    LightRig::build(4, Layout::Cylindrical { rows: 1, lights_per_row: 4 }, Coverage::Full, 16, 8).unwrap()
}

fn varied_env(w: usize, h: usize) -> RadianceMap {
    let px = (0..w * h).map(|i| [(i % 7) as f32 * 0.3, (i % 3) as f32, 0.1 + (i % 5) as f32]).collect();
    RadianceMap::new(w, h, px).unwrap()
}

fn frame(seed: u32) -> Image {
    Image::from_fn(16, 16, |r, c| {
        let v = ((r * 31 + c * 17 + seed as usize * 7) % 11) as f32 / 11.0;
        [v, 1.0 - v, 0.5 * v]
    })
}

#[test]
fn uniform_env_tokens_equal_cell_solid_angles() {
    let rig = rig();
    let seq = tokens_from_env(&rig, &RadianceMap::uniform(16, 8, [1.0; 3]).unwrap()).unwrap();
    for (t, &omega) in seq.tokens.iter().zip(rig.cell_solid_angle()) {
        for c in t {
            assert!((c - omega).abs() <= 1e-12 * omega);
        }
    }
    for d in &seq.mean_dirs {
        assert!((d.length() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn delta_env_gives_one_hot_tokens() {
    let rig = rig();
    let env = rig.delta_env(2, [1.0, 2.0, 3.0]).unwrap();
    let seq = tokens_from_env(&rig, &env).unwrap();
    for (i, t) in seq.tokens.iter().enumerate() {
        if i == 2 {
            assert!(t.iter().all(|&v| v > 0.0));
        } else {
            assert_eq!(*t, [0.0; 3]);
        }
    }
}

#[test]
fn token_sum_matches_env_energy() {
    let rig = rig();
    let env = varied_env(16, 8);
    let seq = tokens_from_env(&rig, &env).unwrap();
    let energy = env.total_energy();
    for c in 0..3 {
        let s: f64 = seq.tokens.iter().map(|t| t[c]).sum();
        assert!((s - energy[c]).abs() <= 1e-12 * energy[c], "{s} vs {}", energy[c]);
    }
}

#[test]
fn zero_tokens_still_give_distinct_rows() {
    let rig = rig();
    let (e, p) = embedder(small_cfg(4), 1);
    let seq = LightTokenSeq {
        tokens: vec![[0.0; 3]; 4],
        mean_dirs: rig.cell_mean_dir().to_vec(),
    };
    let m = e.embed_tokens(&p, &seq).unwrap();
    assert_eq!(m.shape(), (4, 12));
    for i in 0..4 {
        for j in 0..i {
            assert_ne!(m.row(i), m.row(j));
        }
    }
}

#[test]
fn permuting_lights_permutes_rows() {
    let rig = rig();
    let (e, p) = embedder(small_cfg(4), 2);
    let seq = tokens_from_env(&rig, &varied_env(16, 8)).unwrap();
    let perm = [2, 0, 3, 1];
    let permuted = LightTokenSeq {
        tokens: perm.iter().map(|&i| seq.tokens[i]).collect(),
        mean_dirs: perm.iter().map(|&i| seq.mean_dirs[i]).collect(),
    };
    let a = e.embed_tokens(&p, &seq).unwrap();
    let b = e.embed_tokens(&p, &permuted).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(b.row(k), a.row(i));
    }
}

#[test]
fn doubling_env_changes_only_the_mlp_block() {
    let rig = rig();
    let cfg = small_cfg(4);
    let (e, p) = embedder(cfg, 3);
    let env = varied_env(16, 8);
    let doubled = RadianceMap::new(16, 8, env.pixels().iter().map(|px| px.map(|v| 2.0 * v)).collect()).unwrap();
    let s1 = tokens_from_env(&rig, &env).unwrap();
    let s2 = tokens_from_env(&rig, &doubled).unwrap();
    for (a, b) in s1.tokens.iter().zip(&s2.tokens) {
        for c in 0..3 {
            assert!((2.0 * a[c] - b[c]).abs() <= 1e-12 * b[c].abs());
        }
    }
    let a = e.embed_tokens(&p, &s1).unwrap();
    let b = e.embed_tokens(&p, &s2).unwrap();
    let split = cfg.dim - cfg.pe_dim();
    for i in 0..4 {
        assert_eq!(a.row(i)[split..], b.row(i)[split..]);
        assert_ne!(a.row(i)[..split], b.row(i)[..split]);
    }
}

#[test]
fn non_finite_tokens_are_rejected() {
    let rig = rig();
    let (e, p) = embedder(small_cfg(4), 4);
    let mut seq = tokens_from_env(&rig, &varied_env(16, 8)).unwrap();
    seq.tokens[1][0] = f64::INFINITY;
    assert!(matches!(e.embed_tokens(&p, &seq), Err(Error::NonFinite(_))));
    seq.tokens.pop();
    assert!(matches!(e.embed_tokens(&p, &seq), Err(Error::Shape(_))));
}

#[test]
fn reference_encoder_shapes_and_sensitivity() {
    let (e, p) = embedder(small_cfg(4), 5);
    let a = e.encode_reference(&p, &frame(0)).unwrap();
    let b = e.encode_reference(&p, &frame(1)).unwrap();
    assert_eq!(a.shape(), (4, 12));
    assert_ne!(a, b);
    assert!(e.encode_reference(&p, &Image::zeros(12, 16)).is_err());
}

#[test]
fn zero_reference_gives_constant_grid() {
    let (e, p) = embedder(small_cfg(4), 6);
    let z = e.encode_reference(&p, &Image::zeros(16, 16)).unwrap();
    for r in 1..z.rows {
        assert_eq!(z.row(r), z.row(0));
    }
}

#[test]
fn context_rows_are_fixed_across_modes() {
    let rig = rig();
    let cfg = small_cfg(4);
    let (e, p) = embedder(cfg, 7);
    let input = ConditionInput {
        tokens: Some(tokens_from_env(&rig, &varied_env(16, 8)).unwrap()),
        reference: Some(frame(2)),
    };
    for mode in [CondMode::Hdr, CondMode::Ref, CondMode::Both, CondMode::None] {
        let b = e.condition(&p, &input, mode).unwrap();
        assert_eq!(b.context.shape(), (cfg.context_rows(), cfg.dim));
        assert_eq!(b.mode, mode);
        assert_eq!(b.light_embedding.is_some(), mode.uses_hdr());
        assert_eq!(b.ref_embedding.is_some(), mode.uses_ref());
    }
}

#[test]
fn null_substitution_is_input_independent() {
    let rig = rig();
    let (e, mut p) = embedder(small_cfg(4), 8);
    // Non-zero nulls so equality is not trivially all-zero.
    let hdr_null = p.id("cond.null_hdr").unwrap();
    let ref_null = p.id("cond.null_ref").unwrap();
    for (k, v) in p.get_mut(hdr_null).data.iter_mut().enumerate() {
        *v = 0.1 * k as f64;
    }
    for (k, v) in p.get_mut(ref_null).data.iter_mut().enumerate() {
        *v = -0.2 * k as f64;
    }
    let one = ConditionInput {
        tokens: Some(tokens_from_env(&rig, &varied_env(16, 8)).unwrap()),
        reference: Some(frame(3)),
    };
    let two = ConditionInput {
        tokens: Some(tokens_from_env(&rig, &RadianceMap::uniform(16, 8, [5.0; 3]).unwrap()).unwrap()),
        reference: Some(frame(4)),
    };
    let none1 = e.condition(&p, &one, CondMode::None).unwrap();
    let none2 = e.condition(&p, &ConditionInput::default(), CondMode::None).unwrap();
    assert_eq!(none1.context, none2.context);

    let h1 = e.condition(&p, &one, CondMode::Hdr).unwrap().context;
    let h2 = e.condition(&p, &two, CondMode::Hdr).unwrap().context;
    let null_ref = p.get(ref_null).row(0).to_vec();
    for r in 4..8 {
        assert_eq!(h1.row(r), &null_ref[..]);
        assert_eq!(h1.row(r), h2.row(r));
    }
    let r1 = e.condition(&p, &one, CondMode::Ref).unwrap().context;
    let r2 = e.condition(&p, &two, CondMode::Ref).unwrap().context;
    for r in 0..4 {
        assert_eq!(r1.row(r), p.get(hdr_null).row(0));
        assert_eq!(r1.row(r), r2.row(r));
    }
}

#[test]
fn missing_embedding_for_mode_is_an_error() {
    let (e, p) = embedder(small_cfg(4), 9);
    let input = ConditionInput::default();
    for mode in [CondMode::Hdr, CondMode::Ref, CondMode::Both] {
        assert!(e.condition(&p, &input, mode).is_err());
    }
}

#[test]
fn condition_mode_frequencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    assert!((0..10_000).all(|_| sample_condition_mode(ClipSource::MotionRich, &mut rng) == CondMode::Ref));
    let n = 100_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        match sample_condition_mode(ClipSource::LightingRich, &mut rng) {
            CondMode::Hdr => counts[0] += 1,
            CondMode::Ref => counts[1] += 1,
            CondMode::Both => counts[2] += 1,
            CondMode::None => panic!("lighting-rich clips always condition on something"),
        }
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01, "{counts:?}");
    }
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..50).map(|_| sample_condition_mode(ClipSource::LightingRich, &mut rng)).collect::<Vec<_>>()
    };
    assert_eq!(draw(5), draw(5));
}
