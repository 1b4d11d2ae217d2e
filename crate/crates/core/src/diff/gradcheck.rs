//! Central finite-difference verification of tape gradients.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::{Matrix, Tape, Var};
use crate::error::Result;
use crate::rng::SeedStream;

pub const DEFAULT_STEP: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Error floor below which differences are judged in absolute terms.
const ERROR_FLOOR: f64 = 1e-4;

/// Elementwise relative error `|a - n| / max(|a|, |n|, 1e-4)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    /// Worst relative error over every entry of every input.
    pub max_relative_error: f64,
}

impl GradCheck {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Compares the tape gradient of the scalar built by `f` against central
/// differences with step `h`, perturbing every entry of every input.
pub fn check<F>(name: &str, inputs: &[Matrix], h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let eval = |values: &[Matrix]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = values.iter().map(|m| t.constant(m.clone())).collect();
        let out = f(&mut t, &vs)?;
        Ok(t.value(out).item())
    };

    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let zero = Matrix::zeros(inputs[k].rows(), inputs[k].cols());
        let analytic = grads.get(*var).unwrap_or(&zero).clone();
        for i in 0..inputs[k].len() {
            let x = inputs[k].as_slice()[i];
            probe[k].as_mut_slice()[i] = x + h;
            let up = eval(&probe)?;
            probe[k].as_mut_slice()[i] = x - h;
            let down = eval(&probe)?;
            probe[k].as_mut_slice()[i] = x;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(analytic.as_slice()[i], numeric));
        }
    }
    Ok(GradCheck {
        name: name.to_string(),
        max_relative_error: worst,
    })
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Uniform entries in `±[lo, hi]`, keeping clear of zero.
fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let m = rng.random_range(lo..hi);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

/// Reduces an output to a scalar through a fixed random weighting, so every
/// output entry receives a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, out: Var, weights: &Matrix) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

/// Fixed weights of any shape, distinct per entry.
fn pattern(rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |i, j| (1.0 + 7.0 * i as f64 + 3.0 * j as f64).sin())
}

/// Finite-difference checks for every differentiable primitive on the tape,
/// with inputs drawn from `stream`.
pub fn primitive_suite(stream: SeedStream) -> Result<Vec<GradCheck>> {
    let mut rng = stream.rng();
    let h = DEFAULT_STEP;
    let mut out = Vec::new();

    macro_rules! unary {
        ($name:expr, $input:expr, |$t:ident, $x:ident| $body:expr) => {{
            let input: Matrix = $input;
            out.push(check($name, &[input], h, |$t, v| {
                let $x = v[0];
                let y = $body;
                let (r, c) = $t.shape(y);
                weighted_sum($t, y, &pattern(r, c))
            })?);
        }};
    }

    let a34 = uniform(&mut rng, 3, 4, -1.0, 1.0);
    let b42 = uniform(&mut rng, 4, 2, -1.0, 1.0);
    let w32 = uniform(&mut rng, 3, 2, -1.0, 1.0);
    out.push(check("matmul", &[a34.clone(), b42], h, |t, v| {
        let y = t.matmul(v[0], v[1])?;
        weighted_sum(t, y, &w32)
    })?);

    let a = uniform(&mut rng, 3, 4, -1.0, 1.0);
    let b = uniform(&mut rng, 3, 4, -1.0, 1.0);
    let w = uniform(&mut rng, 3, 4, -1.0, 1.0);
    for (name, which) in [("add", 0), ("sub", 1), ("mul", 2)] {
        out.push(check(name, &[a.clone(), b.clone()], h, |t, v| {
            let y = match which {
                0 => t.add(v[0], v[1])?,
                1 => t.sub(v[0], v[1])?,
                _ => t.mul(v[0], v[1])?,
            };
            weighted_sum(t, y, &w)
        })?);
    }

    let bias = uniform(&mut rng, 1, 4, -1.0, 1.0);
    out.push(check("add_bias", &[a.clone(), bias], h, |t, v| {
        let y = t.add_bias(v[0], v[1])?;
        weighted_sum(t, y, &w)
    })?);

    let s = uniform(&mut rng, 3, 1, -1.0, 1.0);
    out.push(check("scale_rows", &[a.clone(), s], h, |t, v| {
        let y = t.scale_rows(v[0], v[1])?;
        weighted_sum(t, y, &w)
    })?);

    let c = uniform(&mut rng, 3, 2, -1.0, 1.0);
    let w6 = uniform(&mut rng, 3, 6, -1.0, 1.0);
    out.push(check("concat_cols", &[a.clone(), c], h, |t, v| {
        let y = t.concat_cols(&[v[0], v[1]])?;
        weighted_sum(t, y, &w6)
    })?);

    unary!("scale", uniform(&mut rng, 3, 3, -1.0, 1.0), |t, x| t.scale(x, -1.7));
    unary!("relu", away_from_zero(&mut rng, 3, 3, 0.05, 1.0), |t, x| t.relu(x));
    unary!("leaky_relu", away_from_zero(&mut rng, 3, 3, 0.05, 1.0), |t, x| t.leaky_relu(x, 0.2));
    unary!("sigmoid", uniform(&mut rng, 3, 3, -3.0, 3.0), |t, x| t.sigmoid(x));
    unary!("exp", uniform(&mut rng, 3, 3, -2.0, 2.0), |t, x| t.exp(x));
    unary!("log", uniform(&mut rng, 3, 3, 0.2, 3.0), |t, x| t.log(x));
    unary!("softplus", uniform(&mut rng, 3, 3, -4.0, 4.0), |t, x| t.softplus(x));
    unary!("recip", away_from_zero(&mut rng, 3, 3, 0.3, 2.0), |t, x| t.recip(x));
    unary!("sum_cols", uniform(&mut rng, 3, 4, -1.0, 1.0), |t, x| t.sum_cols(x));
    unary!("sum", uniform(&mut rng, 3, 4, -1.0, 1.0), |t, x| t.sum(x));
    unary!("mean", uniform(&mut rng, 3, 4, -1.0, 1.0), |t, x| t.mean(x));

    let mask_seed = rng.random::<u64>();
    unary!("dropout", uniform(&mut rng, 4, 4, -1.0, 1.0), |t, x| {
        // Same mask on every evaluation.
        let mut r = ChaCha8Rng::seed_from_u64(mask_seed);
        t.dropout(x, 0.3, true, &mut r)?
    });

    let idx: Vec<usize> = vec![2, 0, 2, 1, 3];
    unary!("gather_rows", uniform(&mut rng, 4, 3, -1.0, 1.0), |t, x| {
        let g = t.gather_rows(x, idx.clone())?;
        t.sum_cols(g)
    });

    let segments: Vec<usize> = vec![0, 0, 1, 1, 1, 2];
    unary!("segment_softmax", uniform(&mut rng, 6, 1, -2.0, 2.0), |t, x| {
        t.segment_softmax(x, segments.clone(), 3)?
    });
    unary!("segment_logsumexp", uniform(&mut rng, 6, 1, -2.0, 2.0), |t, x| {
        let l = t.segment_logsumexp(x, segments.clone(), 3)?;
        t.sum_cols(l)
    });

    let values = uniform(&mut rng, 6, 3, -1.0, 1.0);
    let weights = uniform(&mut rng, 6, 1, -1.0, 1.0);
    let w33 = uniform(&mut rng, 3, 3, -1.0, 1.0);
    out.push(check("segment_weighted_sum", &[values, weights], h, |t, v| {
        let y = t.segment_weighted_sum(v[0], v[1], segments.clone(), 3)?;
        weighted_sum(t, y, &w33)
    })?);

    Ok(out)
}
