//! Central finite-difference verification of reverse-mode gradients.
//!
//! Runs in `f64`. Every scalar parameter is perturbed by `±step` and the
//! difference quotient is compared with the tape's adjoint using
//! `|g_ad − g_fd| / max(|g_ad|, |g_fd|, floor)`.
//!
//! ReLU and max-pool are piecewise linear. When a perturbation moves the
//! forward pass onto a different linear piece (detected through
//! [`Tape::branch_fingerprint`]) the quotient straddles a kink and says
//! nothing about the derivative. With `max_refinements > 0` the step is
//! divided by ten and retried; elements still straddling a kink are counted
//! in [`ParamReport::kinks`] instead of being compared.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::model::Network;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub floor: f64,
    /// Times the step may be divided by ten to step off a kink.
    pub max_refinements: u32,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-8,
            max_refinements: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamReport {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub kinks: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamReport>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.params.iter().map(|p| p.checked).sum()
    }

    pub fn kinks(&self) -> usize {
        self.params.iter().map(|p| p.kinks).sum()
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance && self.checked() > 0
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / scale
}

/// Check the gradient of the scalar graph built by `build` with respect to
/// each tensor in `params`. `build` receives one trainable leaf per entry.
pub fn check_graph<F>(
    names: &[String],
    params: &[Tensor<f64>],
    build: F,
    config: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let evaluate = |values: &[Tensor<f64>]| -> Result<(f64, u64)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok((tape.value(loss).data()[0], tape.branch_fingerprint()))
    };

    let (analytic, base_print) = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|t| tape.param(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        let grads = tape.backward(loss)?;
        let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| grads.get(v)).collect();
        (analytic, tape.branch_fingerprint())
    };

    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut reports = Vec::with_capacity(params.len());
    for (p, name) in names.iter().enumerate().take(params.len()) {
        let mut report = ParamReport {
            name: name.clone(),
            max_rel_error: 0.0,
            checked: 0,
            kinks: 0,
        };
        for e in 0..work[p].len() {
            let original = work[p].data()[e];
            let mut step = config.step;
            let mut numeric = None;
            for _ in 0..=config.max_refinements {
                work[p].data_mut()[e] = original + step;
                let (plus, fp_plus) = evaluate(&work)?;
                work[p].data_mut()[e] = original - step;
                let (minus, fp_minus) = evaluate(&work)?;
                work[p].data_mut()[e] = original;
                if fp_plus == base_print && fp_minus == base_print {
                    numeric = Some((plus - minus) / (2.0 * step));
                    break;
                }
                step /= 10.0;
            }
            match numeric {
                Some(fd) => {
                    let err = relative_error(analytic[p].data()[e], fd, config.floor);
                    report.max_rel_error = report.max_rel_error.max(err);
                    report.checked += 1;
                }
                None => report.kinks += 1,
            }
        }
        reports.push(report);
    }
    Ok(GradCheckReport { params: reports })
}

/// Gradient check of a whole network. The checked scalar is the sum of the
/// pre-sigmoid logits over the batch: it sits near zero, so its rounding is
/// far finer than that of a loss near `ln 2`. Sigmoid and BCE are covered by
/// [`check_primitives`].
pub fn grad_check(network: &Network<f64>, input: &Tensor<f64>, config: &GradCheckConfig) -> Result<GradCheckReport> {
    let names: Vec<String> = network.params().entries().iter().map(|e| e.name.clone()).collect();
    let values: Vec<Tensor<f64>> = network.params().entries().iter().map(|e| e.value.clone()).collect();
    check_graph(
        &names,
        &values,
        |tape, vars| {
            let x = tape.constant(input.clone());
            let z = network.forward_logit(tape, vars, x)?;
            Ok(tape.sum(z))
        },
        config,
    )
}

fn random_tensor<R: Rng>(shape: Shape, lo: f64, hi: f64, rng: &mut R) -> Tensor<f64> {
    let dist = Uniform::new(lo, hi).expect("valid range");
    Tensor::from_vec(shape, (0..shape.numel()).map(|_| dist.sample(rng)).collect()).expect("length matches")
}

/// Reduce any node to a scalar through a fixed random linear functional so
/// that every output element carries a distinct adjoint.
fn project<R: Rng>(tape: &mut Tape<f64>, x: Var, rng: &mut R) -> Result<Var> {
    let flat = tape.flatten(x);
    let width = tape.shape(flat).c;
    let w = tape.constant(random_tensor(Shape::new(1, 1, width, 1), -1.0, 1.0, rng));
    let b = tape.constant(Tensor::zeros(Shape::new(1, 1, 1, 1)));
    let d = tape.dense(flat, w, b)?;
    Ok(tape.sum(d))
}

/// Per-primitive gradient checks on small random instances.
pub fn check_primitives(seed: u64, config: &GradCheckConfig) -> Result<Vec<(String, GradCheckReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let names = |n: &[&str]| n.iter().map(|s| s.to_string()).collect::<Vec<_>>();

    for (k, dilation) in [(1usize, 1usize), (3, 1), (3, 2), (5, 2)] {
        let x = random_tensor(Shape::new(2, 5, 5, 2), -1.0, 1.0, &mut rng);
        let w = random_tensor(Shape::new(k, k, 2, 3), -0.5, 0.5, &mut rng);
        let b = random_tensor(Shape::new(1, 1, 1, 3), -0.5, 0.5, &mut rng);
        let proj_seed = rng.random();
        let report = check_graph(
            &names(&["x", "weight", "bias"]),
            &[x, w, b],
            |tape, v| {
                let y = tape.conv2d(v[0], v[1], v[2], dilation)?;
                project(tape, y, &mut ChaCha8Rng::seed_from_u64(proj_seed))
            },
            config,
        )?;
        out.push((format!("conv2d k={k} d={dilation}"), report));
    }

    let unary: [(&str, fn(&mut Tape<f64>, Var) -> Result<Var>); 6] = [
        ("maxpool2d m=2", |t, x| t.maxpool2d(x, 2)),
        ("relu", |t, x| Ok(t.relu(x))),
        ("sigmoid", |t, x| Ok(t.sigmoid(x))),
        ("global_avg_pool", |t, x| Ok(t.global_avg_pool(x))),
        ("flatten", |t, x| Ok(t.flatten(x))),
        ("sum", |t, x| Ok(t.sum(x))),
    ];
    for (name, op) in unary {
        let x = random_tensor(Shape::new(2, 4, 4, 3), -1.0, 1.0, &mut rng);
        let proj_seed = rng.random();
        let report = check_graph(
            &names(&["x"]),
            &[x],
            |tape, v| {
                let y = op(tape, v[0])?;
                project(tape, y, &mut ChaCha8Rng::seed_from_u64(proj_seed))
            },
            config,
        )?;
        out.push((name.to_string(), report));
    }

    let a = random_tensor(Shape::new(2, 3, 3, 1), -1.0, 1.0, &mut rng);
    let b = random_tensor(Shape::new(2, 3, 3, 0), -1.0, 1.0, &mut rng);
    let c = random_tensor(Shape::new(2, 3, 3, 2), -1.0, 1.0, &mut rng);
    let proj_seed = rng.random();
    out.push((
        "concat_channels".to_string(),
        check_graph(
            &names(&["a", "empty", "c"]),
            &[a, b, c],
            |tape, v| {
                let y = tape.concat_channels(v)?;
                project(tape, y, &mut ChaCha8Rng::seed_from_u64(proj_seed))
            },
            config,
        )?,
    ));

    let x = random_tensor(Shape::new(3, 2, 2, 2), -1.0, 1.0, &mut rng);
    let w = random_tensor(Shape::new(1, 1, 8, 4), -0.5, 0.5, &mut rng);
    let bias = random_tensor(Shape::new(1, 1, 1, 4), -0.5, 0.5, &mut rng);
    let proj_seed = rng.random();
    out.push((
        "dense".to_string(),
        check_graph(
            &names(&["x", "weight", "bias"]),
            &[x, w, bias],
            |tape, v| {
                let y = tape.dense(v[0], v[1], v[2])?;
                project(tape, y, &mut ChaCha8Rng::seed_from_u64(proj_seed))
            },
            config,
        )?,
    ));

    let p = random_tensor(Shape::new(4, 1, 1, 1), 0.05, 0.95, &mut rng);
    out.push((
        "bce_loss".to_string(),
        check_graph(&names(&["p"]), &[p], |tape, v| tape.bce_loss(v[0], &[1.0, 0.0, 0.0, 1.0]), config)?,
    ));

    Ok(out)
}
