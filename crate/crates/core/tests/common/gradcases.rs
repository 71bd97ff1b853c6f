//! Finite-difference checks for every differentiable op, grouped so both
//! the unit-style tests and the acceptance run can share them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viola_core::gradcheck::{self, GradCheckReport};
use viola_core::tensor::{Activation, ConvSpec, InterpMode, SpatialAxis, Tensor, GROUP_NORM_EPS};
use viola_core::viola::{self, ViolaParams};
use viola_core::Result;

pub const STEP: f64 = 1e-4;
pub const TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-3;

pub type Outcome = (String, GradCheckReport);

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<f64>) {
    let n = shape.iter().product();
    (shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Reduces an op output to a scalar with fixed random weights so every
/// output element contributes a distinct gradient.
fn weighted_sum(y: &Tensor, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::new(y.shape(), (0..y.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    y.mul(&w)?.sum_all()
}

fn check(name: &str, inputs: &[(Vec<usize>, Vec<f64>)], seed: u64, f: impl Fn(&[Tensor]) -> Result<Tensor>) -> Outcome {
    let r = gradcheck::check(inputs, STEP, FLOOR, |t| weighted_sum(&f(t)?, seed)).unwrap();
    (name.to_string(), r)
}

fn check1(name: &str, shape: &[usize], seed: u64, f: impl Fn(&Tensor) -> Result<Tensor>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = random(shape, &mut rng);
    check(name, &[input], seed + 1, |t| f(&t[0]))
}

pub fn elementwise() -> Vec<Outcome> {
    vec![
        check1("sigmoid", &[3, 4], 1, |x| x.activation(Activation::Sigmoid)),
        check1("tanh", &[3, 4], 2, |x| x.activation(Activation::Tanh)),
        check1("relu", &[3, 4], 3, |x| x.activation(Activation::Relu)),
        check1("exp", &[5], 4, |x| x.exp()),
        check1("log_sigmoid", &[5], 5, |x| x.log_sigmoid()),
        check1("ln", &[5], 6, |x| x.mul(x)?.add_scalar(0.5)?.ln()),
        check1("sqrt", &[5], 7, |x| x.mul(x)?.add_scalar(0.5)?.sqrt()),
        check1("recip", &[5], 8, |x| x.mul(x)?.add_scalar(0.5)?.recip()),
        check1("powf", &[5], 9, |x| x.mul(x)?.add_scalar(0.5)?.powf(2.5)),
        check1("clamp_min", &[6], 10, |x| x.clamp_min(0.1)),
        check1("neg", &[4], 11, |x| x.neg()),
        check1("add_scalar", &[4], 12, |x| x.add_scalar(0.7)),
        check1("mul_scalar", &[4], 13, |x| x.mul_scalar(-1.3)),
    ]
}

pub fn broadcasting() -> Vec<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let a = random(&[2, 3, 1], &mut rng);
    let b = random(&[2, 1, 4], &mut rng);
    let ab = [a.clone(), b.clone()];
    vec![
        check("add", &ab, 21, |t| t[0].add(&t[1])),
        check("sub", &ab, 22, |t| t[0].sub(&t[1])),
        check("mul", &ab, 23, |t| t[0].mul(&t[1])),
        check("div", &ab, 24, |t| t[0].div(&t[1].mul(&t[1])?.add_scalar(1.0)?)),
    ]
}

pub fn reductions() -> Vec<Outcome> {
    vec![
        check1("sum_all", &[2, 3], 29, |x| x.mul(x)?.sum_all()),
        check1("sum_axis", &[2, 3, 4], 30, |x| x.sum_axis(1)),
        check1("sum_keep_axis", &[2, 3, 4], 31, |x| x.sum_keep_axis(1)),
        check1("mean_all", &[2, 3], 32, |x| x.mean_all()),
        check1("l2_norm_flat", &[2, 3, 2], 33, |x| x.l2_norm_flat()),
        check1("l2_norm_per_item", &[3, 2, 2], 34, |x| x.l2_norm_per_item()),
        check1("group_norm", &[2, 4, 3], 35, |x| x.group_norm(2, GROUP_NORM_EPS)),
        check1("softmax", &[2, 3, 4], 36, |x| x.softmax(1)),
        check1("log_softmax", &[2, 3, 4], 37, |x| x.log_softmax(1)),
    ]
}

pub fn structural() -> Vec<Outcome> {
    let mut out = vec![
        check1("reshape", &[2, 6], 40, |x| x.reshape(&[3, 4])),
        check1("narrow", &[2, 5, 3], 41, |x| x.narrow(1, 1, 3)),
        check1("unsqueeze", &[2, 3], 38, |x| x.unsqueeze(1)),
        check1("squeeze_axis", &[2, 1, 3], 39, |x| x.squeeze_axis(1)),
        check1("interpolate_linear", &[2, 3, 4], 42, |x| x.interpolate_axis(1, 7, InterpMode::Linear)),
        check1("interpolate_down", &[2, 7, 4], 43, |x| x.interpolate_axis(1, 3, InterpMode::Linear)),
        check1("interpolate_nearest", &[2, 3], 44, |x| x.interpolate_axis(1, 5, InterpMode::Nearest)),
    ];
    for axis in SpatialAxis::ALL {
        out.push(check1(&format!("adaptive_avg_pool_{axis:?}"), &[2, 3, 4, 2, 3], 45, |x| x.adaptive_avg_pool(axis)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let a = random(&[1, 2, 3], &mut rng);
    let b = random(&[1, 1, 3], &mut rng);
    out.push(check("concat", &[a, b], 47, |t| Tensor::concat(t, 1)));
    out
}

pub fn convolution() -> Vec<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let cases: Vec<(Vec<usize>, Vec<usize>, ConvSpec)> = vec![
        (vec![2, 2, 7], vec![3, 2, 3], ConvSpec { kernel: vec![3], stride: vec![2], dilation: vec![2], padding: vec![1] }),
        (vec![1, 1, 9, 3], vec![1, 1, 3, 1], ConvSpec::same(&[3, 1], &[2, 1], &[3, 1])),
        (
            vec![2, 2, 5, 4, 3],
            vec![3, 2, 3, 3, 3],
            ConvSpec { kernel: vec![3, 3, 3], stride: vec![2, 2, 1], dilation: vec![1, 1, 1], padding: vec![1, 1, 1] },
        ),
    ];
    cases
        .into_iter()
        .enumerate()
        .map(|(i, (xs, ws, spec))| {
            let x = random(&xs, &mut rng);
            let w = random(&ws, &mut rng);
            let b = random(&[ws[0]], &mut rng);
            check(&format!("conv{}d", xs.len() - 2), &[x, w, b], 51 + i as u64, |t| {
                t[0].conv(&t[1], Some(&t[2]), &spec)
            })
        })
        .collect()
}

fn random_viola_inputs(c: usize, rng: &mut ChaCha8Rng) -> Vec<(Vec<usize>, Vec<f64>)> {
    viola::param_shapes(c)
        .into_iter()
        .map(|(name, shape)| {
            let (s, mut d) = random(&shape, rng);
            if name == "gn_scale" {
                d.iter_mut().for_each(|v| *v += 1.5);
            }
            (s, d)
        })
        .collect()
}

/// The whole attention module on a `(C, H, W, D) = (2, 4, 4, 2)` input,
/// differentiating through the input and every parameter.
pub fn viola_module() -> Vec<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let c = 2;
    let mut inputs = vec![random(&[c, 4, 4, 2], &mut rng)];
    inputs.extend(random_viola_inputs(c, &mut rng));
    vec![check("viola_forward", &inputs, 61, |t| {
        let params = ViolaParams::from_tensors(c, 0.1, 0.3, 2, t[1..].to_vec())?;
        viola::viola_forward(&t[0], &params)
    })]
}

pub fn all() -> Vec<Outcome> {
    [elementwise(), broadcasting(), reductions(), structural(), convolution(), viola_module()].concat()
}
