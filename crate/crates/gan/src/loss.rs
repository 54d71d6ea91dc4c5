//! Adversarial and reconstruction loss terms with their gradients.
//!
//! Binary cross-entropy runs in the numerically stable logits form
//! `softplus(l) - label * l`, averaged over the patch grid.

use ndarray::Array4;

use crate::scalar::NnScalar;

fn softplus<T: NnScalar>(l: T) -> T {
    // max(l, 0) + ln(1 + exp(-|l|))
    let zero = T::zero();
    let m = if l > zero { l } else { zero };
    m + (T::one() + (-l.abs()).exp()).ln()
}

fn sigmoid<T: NnScalar>(l: T) -> T {
    T::one() / (T::one() + (-l).exp())
}

/// Mean BCE-with-logits against a constant label (1 = real, 0 = fake).
pub fn bce_with_logits<T: NnScalar>(logits: &Array4<T>, label: T) -> T {
    let n = T::from_f64_lossy(logits.len() as f64);
    logits.iter().map(|&l| softplus(l) - label * l).sum::<T>() / n
}

/// Gradient of [`bce_with_logits`] w.r.t. the logits.
pub fn bce_with_logits_grad<T: NnScalar>(logits: &Array4<T>, label: T) -> Array4<T> {
    let n = T::from_f64_lossy(logits.len() as f64);
    logits.mapv(|l| (sigmoid(l) - label) / n)
}

/// Mean absolute error between prediction and target.
pub fn l1_loss<T: NnScalar>(pred: &Array4<T>, target: &Array4<T>) -> T {
    let n = T::from_f64_lossy(pred.len() as f64);
    pred.iter()
        .zip(target.iter())
        .map(|(&p, &t)| (p - t).abs())
        .sum::<T>()
        / n
}

/// Subgradient of [`l1_loss`] w.r.t. the prediction (0 at ties).
pub fn l1_loss_grad<T: NnScalar>(pred: &Array4<T>, target: &Array4<T>) -> Array4<T> {
    let n = T::from_f64_lossy(pred.len() as f64);
    let mut g = pred.clone();
    g.zip_mut_with(target, |p, &t| {
        let d = *p - t;
        *p = if d > T::zero() {
            T::one() / n
        } else if d < T::zero() {
            -T::one() / n
        } else {
            T::zero()
        };
    });
    g
}

/// Generator objective: adversarial term plus lambda-weighted L1.
/// Returns (total, adversarial, l1).
pub fn generator_loss<T: NnScalar>(
    fake_logits: &Array4<T>,
    pred: &Array4<T>,
    target: &Array4<T>,
    lambda: T,
) -> (T, T, T) {
    let adv = bce_with_logits(fake_logits, T::one());
    let l1 = l1_loss(pred, target);
    (adv + lambda * l1, adv, l1)
}

/// Discriminator objective: real pairs toward 1, generated pairs toward 0.
/// Returns (total, real term, fake term).
pub fn discriminator_loss<T: NnScalar>(real_logits: &Array4<T>, fake_logits: &Array4<T>) -> (T, T, T) {
    let real = bce_with_logits(real_logits, T::one());
    let fake = bce_with_logits(fake_logits, T::zero());
    (real + fake, real, fake)
}
