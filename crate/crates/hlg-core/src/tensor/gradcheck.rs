//! Finite-difference verification of the backward pass.

use super::{Graph, Real, Tensor, TensorError, Var};

/// Compare the autodiff gradient of `f` at `x` against central differences.
///
/// `f` rebuilds the scalar-valued expression from a fresh graph and the
/// given leaf, so the same computation can be replayed at perturbed inputs.
/// Returns the maximum over coordinates of
/// `|autodiff - central| / max(1, |central|)`.
pub fn grad_check<T, F>(f: F, x: &Tensor<T>, h: f64) -> Result<f64, TensorError>
where
    T: Real,
    F: Fn(&mut Graph<T>, Var) -> Result<Var, TensorError>,
{
    let mut g = Graph::new();
    let leaf = g.leaf(x);
    let loss = f(&mut g, leaf)?;
    g.backward(loss)?;
    let autodiff = g.grad(leaf).to_vec();

    let eval = |t: &Tensor<T>| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let leaf = g.leaf(t);
        let out = f(&mut g, leaf)?;
        Ok(g.scalar_value(out).to_f64())
    };

    let step = T::from_f64(h);
    let mut max_err = 0.0f64;
    for (i, &ad) in autodiff.iter().enumerate() {
        let mut plus = x.clone();
        plus.data_mut()[i] = plus.data_mut()[i] + step;
        let mut minus = x.clone();
        minus.data_mut()[i] = minus.data_mut()[i] - step;
        let central = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
        let err = (ad.to_f64() - central).abs() / central.abs().max(1.0);
        max_err = max_err.max(err);
    }
    Ok(max_err)
}
