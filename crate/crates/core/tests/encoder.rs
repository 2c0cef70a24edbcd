use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kwmlp::dsp::{AudioBuffer, Mfcc, MfccConfig};
use kwmlp::encoder::{
    encode_audio, encode_audio_depths, encode_segment, encode_segment_trace, gmlp_block, init_weights, layer_norm,
    patch_embed, trace_block, EncoderConfig, GmlpBlockWeights, ModelWeights,
};
use kwmlp::params::{ParamKind, Parameters};
use kwmlp::trainer::{accuracy, train, TrainConfig};

fn randomize(w: &mut ModelWeights, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in w.params_mut() {
        let norm = p.kind == ParamKind::NormScale;
        for v in p.data.iter_mut() {
            let u: f64 = rng.random_range(-1.0..1.0);
            *v = if norm { 1.0 + 0.5 * u } else { u };
        }
    }
}

type Rows = Vec<Vec<f64>>;

fn rows(a: &Array2<f64>) -> Rows {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn norm_rows(x: &Rows, scale: &[f64], shift: &[f64]) -> Rows {
    x.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            r.iter().enumerate().map(|(j, v)| (v - mean) / (var + 1e-5).sqrt() * scale[j] + shift[j]).collect()
        })
        .collect()
}

/// The block written out one scalar at a time.
#[allow(clippy::needless_range_loop)]
fn oracle_block(x: &Rows, w: &GmlpBlockWeights) -> Rows {
    let (t_len, d) = (x.len(), x[0].len());
    let big = w.proj_in.weight.ncols();
    let half = big / 2;
    let xn = norm_rows(x, w.pre_norm.scale.as_slice().unwrap(), w.pre_norm.shift.as_slice().unwrap());
    let mut z = vec![vec![0.0; big]; t_len];
    for t in 0..t_len {
        for c in 0..big {
            let mut acc = w.proj_in.bias[c];
            for k in 0..d {
                acc += xn[t][k] * w.proj_in.weight[[k, c]];
            }
            z[t][c] = 0.5 * acc * (1.0 + libm::erf(acc / 2f64.sqrt()));
        }
    }
    let zr: Rows = z.iter().map(|r| r[..half].to_vec()).collect();
    let zg: Rows = z.iter().map(|r| r[half..].to_vec()).collect();
    let zgn = norm_rows(&zg, w.gate_norm.scale.as_slice().unwrap(), w.gate_norm.shift.as_slice().unwrap());
    let mut out = x.clone();
    for t in 0..t_len {
        let mut gated = vec![0.0; half];
        for (c, g) in gated.iter_mut().enumerate() {
            let mut s = w.spatial.bias[t];
            for u in 0..t_len {
                s += w.spatial.weight[[t, u]] * zgn[u][c];
            }
            *g = zr[t][c] * s;
        }
        for j in 0..d {
            let mut acc = w.proj_out.bias[j];
            for (c, g) in gated.iter().enumerate() {
                acc += g * w.proj_out.weight[[c, j]];
            }
            out[t][j] += acc;
        }
    }
    out
}

#[test]
fn hand_computed_patch_embedding() {
    let config = EncoderConfig { freq_bins: 2, time_steps: 3, dim: 2, proj_dim: 4, blocks: 1, n_classes: 2 };
    let mut w = init_weights(config, 0).unwrap();
    w.patch.weight = array![[1.0, 2.0], [3.0, -1.0]];
    w.patch.bias = array![0.5, -0.5];
    // frames (1,0), (0,1), (2,2)
    let x = Mfcc::new(array![[1.0, 0.0, 2.0], [0.0, 1.0, 2.0]]);
    let y = patch_embed(&x, &w).unwrap();
    assert_eq!(y, array![[1.5, 1.5], [3.5, -1.5], [8.5, 1.5]]);
}

#[test]
fn toy_block_matches_scalar_oracle() {
    let config = EncoderConfig { freq_bins: 3, time_steps: 4, dim: 2, proj_dim: 4, blocks: 1, n_classes: 2 };
    for seed in 0..20 {
        let mut w = init_weights(config, seed).unwrap();
        randomize(&mut w, 100 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((4, 2), || rng.random_range(-2.0..2.0));
        let (y, _) = trace_block(&x, &w.blocks[0]).unwrap();
        let want = oracle_block(&rows(&x), &w.blocks[0]);
        for (got, exp) in rows(&y).iter().flatten().zip(want.iter().flatten()) {
            assert!((got - exp).abs() < 1e-12, "seed {seed}: {got} vs {exp}");
        }
    }
}

#[test]
fn zeroed_residual_branches_reduce_to_normed_patch_embedding() {
    let config = EncoderConfig { blocks: 4, ..Default::default() };
    let mut w = init_weights(config, 1).unwrap();
    randomize(&mut w, 2);
    for b in &mut w.blocks {
        b.proj_out.weight.fill(0.0);
        b.proj_out.bias.fill(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Mfcc::new(Array2::from_shape_simple_fn((40, 98), || rng.random_range(-5.0..5.0)));
    let want = layer_norm(&patch_embed(&x, &w).unwrap(), &w.final_norm).0;
    for depth in 1..=4 {
        assert_eq!(encode_segment(&x, &w, depth).unwrap(), want, "depth {depth}");
    }
}

#[test]
fn depths_share_one_forward_pass() {
    let w = init_weights(EncoderConfig::default(), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let audio = AudioBuffer::new((0..24_000).map(|_| rng.random_range(-0.5..0.5)).collect(), 16_000);
    let cfg = MfccConfig::default();
    let depths = [12, 1, 4];
    let many = encode_audio_depths(&audio, &w, &depths, &cfg).unwrap();
    for (ts, &d) in many.iter().zip(&depths) {
        assert_eq!(ts.values, encode_audio(&audio, &w, d, &cfg).unwrap().values, "depth {d}");
    }
    let x = kwmlp::dsp::audio_to_mfccs(&audio, &cfg).unwrap().remove(0);
    let trace = encode_segment_trace(&x, &w, 12).unwrap();
    for d in [1, 6, 12] {
        assert_eq!(layer_norm(&trace[d - 1], &w.final_norm).0, encode_segment(&x, &w, d).unwrap());
    }
    assert!(encode_audio_depths(&audio, &w, &[13], &cfg).is_err());
}

#[test]
fn five_seconds_give_490_frames() {
    let w = init_weights(EncoderConfig::default(), 0).unwrap();
    let audio = AudioBuffer::new(vec![0.1; 80_000], 16_000);
    let ts = encode_audio(&audio, &w, 12, &MfccConfig::default()).unwrap();
    assert_eq!(ts.values.dim(), (490, 64));
    assert_eq!(ts.frame_rate, 98.0);
}

#[test]
fn stochastic_depth_drop_rate() {
    let config = EncoderConfig { freq_bins: 2, time_steps: 3, dim: 2, proj_dim: 4, blocks: 1, n_classes: 2 };
    let w = init_weights(config, 0).unwrap();
    let x = array![[1.0, -1.0], [0.5, 2.0], [0.0, 1.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let trials = 20_000;
    let dropped = (0..trials).filter(|_| gmlp_block(&x, &w.blocks[0], 0.9, &mut rng).unwrap() == x).count();
    let rate = dropped as f64 / trials as f64;
    // binomial sd at p = 0.1 is ~0.002
    assert!((rate - 0.1).abs() < 0.01, "{rate}");
    assert!(gmlp_block(&x, &w.blocks[0], 0.0, &mut rng).is_err());
    assert!(gmlp_block(&x, &w.blocks[0], 1.5, &mut rng).is_err());
}

#[test]
fn tiny_model_overfits_four_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let config = EncoderConfig { freq_bins: 6, time_steps: 8, dim: 8, proj_dim: 16, blocks: 2, n_classes: 2 };
    let data: Vec<(Mfcc, usize)> = (0..4)
        .map(|i| (Mfcc::new(Array2::from_shape_simple_fn((6, 8), || rng.random_range(-1.0..1.0))), i % 2))
        .collect();
    let cfg = TrainConfig {
        epochs: 60,
        batch_size: 4,
        warmup_epochs: 5,
        peak_lr: 1e-2,
        label_smoothing: 0.0,
        survival_prob: 1.0,
        time_masks: 0,
        freq_masks: 0,
        ..Default::default()
    };
    let outcome = train(&data, config, &cfg).unwrap();
    assert_eq!(accuracy(&outcome.weights, &data).unwrap(), 1.0);
    assert!(outcome.epoch_losses.last().unwrap() < &outcome.epoch_losses[0]);
}
