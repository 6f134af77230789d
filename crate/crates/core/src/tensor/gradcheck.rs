//! Finite-difference gradient checking.

use super::{NodeId, Tape, Tensor, TensorError};

/// Default perturbation for 64-bit central differences.
pub const GRAD_CHECK_EPS: f64 = 1e-5;

/// Max relative error between `analytic` gradients and central finite
/// differences of `eval`, where `eval` recomputes the scalar objective
/// from scratch given the input buffers.
///
/// rel = |a − n| / max(|a|, |n|, 1) so tiny gradients are compared on an
/// absolute scale.
pub fn finite_diff_max_rel_err<F>(
    eval: F,
    inputs: &[Vec<f64>],
    analytic: &[Vec<f64>],
    eps: f64,
) -> f64
where
    F: Fn(&[Vec<f64>]) -> f64,
{
    assert_eq!(inputs.len(), analytic.len());
    let mut work: Vec<Vec<f64>> = inputs.to_vec();
    let mut max_err = 0.0_f64;
    for i in 0..inputs.len() {
        assert_eq!(inputs[i].len(), analytic[i].len());
        for j in 0..inputs[i].len() {
            let orig = work[i][j];
            work[i][j] = orig + eps;
            let plus = eval(&work);
            work[i][j] = orig - eps;
            let minus = eval(&work);
            work[i][j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[i][j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            if err > max_err {
                max_err = err;
            }
        }
    }
    max_err
}

/// Check a tape-built scalar function against central differences.
///
/// `build` receives a fresh tape and one leaf per input (gradients
/// enabled on every leaf) and must return the scalar output node.
/// Returns the max relative error over all input elements.
pub fn grad_check<F>(build: F, inputs: &[Tensor], eps: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId, TensorError>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(TensorError::InvalidArgument(format!(
            "grad_check eps {eps} outside [1e-7, 1e-3]"
        )));
    }
    let shapes: Vec<Vec<usize>> = inputs.iter().map(|t| t.shape().to_vec()).collect();
    let bufs: Vec<Vec<f64>> = inputs.iter().map(|t| t.data().to_vec()).collect();

    // First pass: analytic gradients via the tape.
    let mut tape = Tape::new();
    let leaves: Vec<NodeId> = inputs
        .iter()
        .map(|t| {
            let mut owned = t.clone();
            owned.requires_grad = true;
            tape.leaf(&owned)
        })
        .collect();
    let out = build(&mut tape, &leaves)?;
    let out_shape = tape.value(out).shape().to_vec();
    if out_shape != [1] {
        return Err(TensorError::NonScalarOutput(out_shape));
    }
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .zip(inputs)
        .map(|(&id, t)| {
            tape.grad(id)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    let eval = |bufs: &[Vec<f64>]| -> f64 {
        let mut tape = Tape::new();
        let leaves: Vec<NodeId> = bufs
            .iter()
            .zip(&shapes)
            .map(|(data, shape)| {
                let t = Tensor::from_vec(shape.clone(), data.clone()).expect("shape preserved");
                tape.leaf(&t)
            })
            .collect();
        let out = build(&mut tape, &leaves).expect("forward succeeded on first pass");
        tape.value(out).item()
    };
    Ok(finite_diff_max_rel_err(eval, &bufs, &analytic, eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_exact_with_dyadic_inputs() {
        // Dyadic values and a power-of-two eps make central differences exact.
        let x = Tensor::from_vec(vec![3], vec![0.25, 0.5, 1.0]).unwrap();
        let err = grad_check(
            |tape, leaves| Ok(tape.sum_all(leaves[0])),
            &[x],
            2.0_f64.powi(-10),
        )
        .unwrap();
        assert!(err <= 1e-12, "err = {err}");
    }

    #[test]
    fn sum_of_squares_matches_2x() {
        let x = Tensor::from_vec(vec![4], vec![0.3, -1.2, 2.0, 0.7]).unwrap();
        let err = grad_check(
            |tape, leaves| {
                let sq = tape.square(leaves[0]);
                Ok(tape.sum_all(sq))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "err = {err}");
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let x = Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap();
        let res = grad_check(|tape, leaves| tape.add(leaves[0], leaves[0]), &[x], 1e-5);
        assert!(matches!(res, Err(TensorError::NonScalarOutput(_))));
    }

    #[test]
    fn eps_outside_range_is_rejected() {
        let x = Tensor::from_vec(vec![1], vec![1.0]).unwrap();
        let res = grad_check(|tape, leaves| Ok(tape.sum_all(leaves[0])), &[x], 1e-2);
        assert!(res.is_err());
    }
}
