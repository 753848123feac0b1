//! Central finite-difference checks for every differentiable operation,
//! with respect to every argument.

use ccc_tensor::{ParameterStore, Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Builds `loss = Σ r ⊙ f(inputs)` so every output element is exercised.
fn loss_of<F>(inputs: &[Tensor], probe: &Tensor, f: &F) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let flat = tape.value(out).len();
    assert_eq!(flat, probe.len(), "probe length");
    let out_flat = tape.reshape(out, &[flat])?;
    let loss = tape.weighted_sum(out_flat, probe.data().to_vec())?;
    Ok((tape, vars, loss))
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn check<F>(name: &str, inputs: Vec<Tensor>, seed: u64, f: F)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out_len = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars).unwrap();
        tape.value(out).len()
    };
    let probe = random(&[out_len], &mut rng);

    let (mut tape, vars, loss) = loss_of(&inputs, &probe, &f).unwrap();
    let mut store = ParameterStore::new();
    let grads = tape.backward(loss, &mut store).unwrap();

    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).expect("input gradient").data().to_vec();
        let mut numeric = vec![0.0; inputs[k].len()];
        for i in 0..inputs[k].len() {
            let eval = |delta: f64| {
                let mut xs = inputs.clone();
                xs[k].data_mut()[i] += delta;
                let (tape, _, loss) = loss_of(&xs, &probe, &f).unwrap();
                tape.value(loss).item()
            };
            numeric[i] = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
        }
        let err = rel_err(&analytic, &numeric);
        assert!(err < TOL, "{name}: argument {k} relative error {err:e}");
    }
}

#[test]
fn conv2d_3x3_all_arguments() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (cin, cout, h, w) in [(1, 1, 3, 3), (2, 3, 4, 5), (3, 2, 6, 4)] {
        let inputs = vec![
            random(&[cin, h, w], &mut rng),
            random(&[cout, cin, 3, 3], &mut rng),
            random(&[cout], &mut rng),
        ];
        check("conv2d_3x3", inputs, 11, |t, v| t.conv2d_3x3(v[0], v[1], v[2]));
    }
}

#[test]
fn conv2d_1x1() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs = vec![
        random(&[3, 4, 4], &mut rng),
        random(&[2, 3, 1, 1], &mut rng),
        random(&[2], &mut rng),
    ];
    check("conv2d_1x1", inputs, 12, |t, v| t.conv2d(v[0], v[1], v[2]));
}

#[test]
fn max_pool() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs = vec![random(&[2, 4, 6], &mut rng)];
    check("max_pool2x2", inputs, 13, |t, v| t.max_pool2x2(v[0]));
}

#[test]
fn leaky_relu() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inputs = vec![random(&[2, 3, 3], &mut rng)];
    check("leaky_relu", inputs, 14, |t, v| Ok(t.leaky_relu(v[0], 0.01)));
}

#[test]
fn channel_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs = vec![
        random(&[3, 4, 4], &mut rng),
        random(&[3], &mut rng),
        random(&[3], &mut rng),
    ];
    check("channel_norm", inputs, 15, |t, v| t.channel_norm(v[0], v[1], v[2]));
}

#[test]
fn linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let inputs = vec![
        random(&[2, 2, 3], &mut rng),
        random(&[5, 12], &mut rng),
        random(&[5], &mut rng),
    ];
    check("linear", inputs, 16, |t, v| t.linear(v[0], v[1], v[2]));
}

#[test]
fn upsample_and_concat() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inputs = vec![random(&[2, 2, 3], &mut rng), random(&[1, 4, 6], &mut rng)];
    check("upsample+concat", inputs, 17, |t, v| {
        let u = t.upsample_nearest2x(v[0])?;
        t.concat_channels(&[u, v[1]])
    });
}

#[test]
fn softmax2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inputs = vec![random(&[5, 4], &mut rng)];
    check("softmax2d", inputs, 18, |t, v| Ok(t.softmax2d(v[0])));
}

#[test]
fn circular_conv_both_arguments() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (h, w) in [(4, 4), (8, 2), (2, 16)] {
        let inputs = vec![random(&[h, w], &mut rng), random(&[h, w], &mut rng)];
        check("circular_conv", inputs, 19, |t, v| t.circular_conv(v[0], v[1]));
    }
}

#[test]
fn elementwise_and_reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let inputs = vec![random(&[2, 3], &mut rng), random(&[2, 3], &mut rng)];
    check("add/scale/exp", inputs, 20, |t, v| {
        let a = t.add(v[0], v[1])?;
        let s = t.scale(a, -0.7);
        let e = t.exp(s);
        t.add_n(&[e, v[0], v[1]])
    });
    let inputs = vec![random(&[3, 2], &mut rng)];
    check("sum", inputs, 21, |t, v| Ok(t.sum(v[0])));
}

#[test]
fn tile_stack_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inputs = vec![random(&[3], &mut rng), random(&[1], &mut rng), random(&[1], &mut rng)];
    check("tile/channel", inputs.clone(), 22, |t, v| {
        let tiled = t.tile_spatial(v[0], 2, 3)?;
        t.channel(tiled, 1)
    });
    check("stack", inputs, 23, |t, v| t.stack(&[v[1], v[2], v[1]]));
}

#[test]
fn angle_to_fixed_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let v = Tensor::from_vec((0..3).map(|_| rng.gen_range(0.2..2.0)).collect());
        check("angle_deg", vec![v], 24, |t, v| t.angle_deg(v[0], [0.4, 1.0, 0.7]));
    }
}

#[test]
fn composite_encoder_parameters() {
    // A block shaped like the fingerprint encoder: conv, activation, conv,
    // activation, pool, norm, then a linear head. Every parameter is checked.
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random(&[1, 8, 8], &mut rng);
    let inputs = vec![
        x,
        random(&[2, 1, 3, 3], &mut rng),
        random(&[2], &mut rng),
        random(&[2, 2, 3, 3], &mut rng),
        random(&[2], &mut rng),
        random(&[2], &mut rng),
        random(&[2], &mut rng),
        random(&[3, 32], &mut rng),
        random(&[3], &mut rng),
    ];
    check("encoder block", inputs, 25, |t, v| {
        let a = t.conv2d_3x3(v[0], v[1], v[2])?;
        let a = t.leaky_relu(a, 0.01);
        let a = t.conv2d_3x3(a, v[3], v[4])?;
        let a = t.leaky_relu(a, 0.01);
        let a = t.max_pool2x2(a)?;
        let a = t.channel_norm(a, v[5], v[6])?;
        t.linear(a, v[7], v[8])
    });
}
