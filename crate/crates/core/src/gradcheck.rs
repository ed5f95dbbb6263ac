//! Central finite-difference verification of analytic gradients.

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Outcome of a finite-difference sweep over one input tensor.
#[derive(Debug, Clone)]
pub struct FdReport<T> {
    /// Worst per-element relative error between analytic and central
    /// differences.
    pub max_rel_err: T,
    /// Flat index where the worst error occurred.
    pub worst_index: usize,
    /// Flat indices whose perturbed loss evaluated to NaN/inf; these are
    /// excluded from `max_rel_err`.
    pub non_finite: Vec<usize>,
}

/// Compares the analytic gradient of `loss_fn` at `point` against central
/// differences with step `eps`.
///
/// `loss_fn` must return the scalar loss and the analytic gradient with the
/// same shape as `point`. Relative error per element is
/// `|g_a - g_fd| / max(1e-12, |g_a| + |g_fd|)`.
pub fn finite_diff_check<T, F>(loss_fn: F, point: &Tensor<T>, eps: T) -> Result<FdReport<T>>
where
    T: Scalar,
    F: Fn(&Tensor<T>) -> Result<(T, Tensor<T>)>,
{
    let lo = T::lit(1e-6);
    let hi = T::lit(1e-3);
    if eps < lo || eps > hi {
        return Err(CoreError::InvalidArgument(format!(
            "finite-difference step {eps} outside [1e-6, 1e-3]"
        )));
    }
    let (_, analytic) = loss_fn(point)?;
    if analytic.shape() != point.shape() {
        return Err(CoreError::shape(
            point.shape(),
            analytic.shape(),
            "analytic gradient",
        ));
    }

    let floor = T::lit(1e-12);
    let two = T::lit(2.0);
    let mut max_rel_err = T::zero();
    let mut worst_index = 0;
    let mut non_finite = Vec::new();

    for i in 0..point.numel() {
        let mut bumped = point.clone();
        bumped.data_mut()[i] += eps;
        let (lp, _) = loss_fn(&bumped)?;
        bumped.data_mut()[i] -= two * eps;
        let (lm, _) = loss_fn(&bumped)?;
        if !lp.is_finite() || !lm.is_finite() {
            non_finite.push(i);
            continue;
        }
        let fd = (lp - lm) / (two * eps);
        let ga = analytic.data()[i];
        let denom = floor.max(ga.abs() + fd.abs());
        let rel = (ga - fd).abs() / denom;
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_index = i;
        }
    }

    Ok(FdReport {
        max_rel_err,
        worst_index,
        non_finite,
    })
}
