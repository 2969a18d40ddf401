use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Worst relative error between tape gradients and central differences
/// `(f(x+ε) − f(x−ε)) / 2ε`, over every element of every input.
///
/// The denominator is `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<Fun>(f: Fun, inputs: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    Fun: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    grad_check_sampled(f, inputs, eps, usize::MAX)
}

/// As [`grad_check`], probing at most `per_input` evenly spaced elements of
/// each input.
pub fn grad_check_sampled<Fun>(
    f: Fun,
    inputs: &[Tensor<f64>],
    eps: f64,
    per_input: usize,
) -> Result<f64>
where
    Fun: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let pairs = Checker::new(&f, inputs, eps)?.compare(per_input)?;
    Ok(pairs.iter().map(|p| rel(p.2, p.3, 1e-8)).fold(0.0, f64::max))
}

/// As [`grad_check`], but the denominator is floored at `floor_fraction`
/// times the largest analytic gradient magnitude, so elements many orders
/// below the scale of the problem are judged on absolute error.
///
/// A difference quotient whose window straddles a ReLU kink is wrong at
/// that step size only, so elements worse than `1e-5` are probed again at
/// `eps / 8` and the closer agreement is kept.
pub fn grad_check_scaled<Fun>(f: Fun, inputs: &[Tensor<f64>], eps: f64, floor_fraction: f64) -> Result<f64>
where
    Fun: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let checker = Checker::new(&f, inputs, eps)?;
    let pairs = checker.compare(usize::MAX)?;
    let scale = pairs.iter().map(|p| p.2).fold(0.0, |m: f64, a| m.max(a.abs()));
    let floor = (floor_fraction * scale).max(1e-8);
    let mut worst_err = 0.0f64;
    for &(i, j, a, n) in &pairs {
        let mut e = rel(a, n, floor);
        if e > 1e-5 {
            e = e.min(rel(a, checker.numeric(i, j, eps / 8.0)?, floor));
        }
        worst_err = worst_err.max(e);
    }
    Ok(worst_err)
}

fn rel(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

struct Checker<'f, Fun> {
    f: &'f Fun,
    inputs: &'f [Tensor<f64>],
    eps: f64,
    analytic: Vec<Vec<f64>>,
}

impl<'f, Fun> Checker<'f, Fun>
where
    Fun: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    fn new(f: &'f Fun, inputs: &'f [Tensor<f64>], eps: f64) -> Result<Self> {
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::arg(format!("finite-difference step must be positive, got {eps}")));
        }
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let loss = f(&mut tape, &vars)?;
        tape.backward(loss)?;
        let analytic = vars
            .iter()
            .zip(inputs)
            .map(|(&v, t)| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
            .collect();
        Ok(Checker {
            f,
            inputs,
            eps,
            analytic,
        })
    }

    fn eval(&self, values: &[Tensor<f64>]) -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let out = (self.f)(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    }

    fn numeric(&self, i: usize, j: usize, eps: f64) -> Result<f64> {
        let mut probe = self.inputs.to_vec();
        let orig = self.inputs[i].data()[j];
        probe[i].data_mut()[j] = orig + eps;
        let plus = self.eval(&probe)?;
        probe[i].data_mut()[j] = orig - eps;
        let minus = self.eval(&probe)?;
        Ok((plus - minus) / (2.0 * eps))
    }

    /// `(input, element, analytic, numeric)` for every probed element.
    fn compare(&self, per_input: usize) -> Result<Vec<(usize, usize, f64, f64)>> {
        let mut out = Vec::new();
        for (i, input) in self.inputs.iter().enumerate() {
            let n = input.numel();
            let count = n.min(per_input).max(1).min(n);
            for s in 0..count {
                let j = s * n / count;
                out.push((i, j, self.analytic[i][j], self.numeric(i, j, self.eps)?));
            }
        }
        Ok(out)
    }
}
