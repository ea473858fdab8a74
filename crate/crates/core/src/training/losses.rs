//! Grid-level losses over anomaly probabilities. Each returns the loss and its
//! gradient with respect to every cell's `P(anomaly)`.

use crate::error::{Error, Result};
use crate::numcore::Mat;

/// Probability clamp used by the log-based losses.
pub const PROB_CLAMP: f64 = 1e-7;

fn check(probs: &Mat, mask: &Mat) -> Result<()> {
    if probs.shape() != mask.shape() {
        return Err(Error::contract(format!(
            "score map {:?} and mask {:?} differ in shape",
            probs.shape(),
            mask.shape()
        )));
    }
    if probs.is_empty() {
        return Err(Error::contract("empty score map"));
    }
    Ok(())
}

#[inline]
fn clamp(p: f64) -> (f64, bool) {
    let lo = PROB_CLAMP;
    let hi = 1.0 - PROB_CLAMP;
    if p < lo {
        (lo, false)
    } else if p > hi {
        (hi, false)
    } else {
        (p, true)
    }
}

/// Mean binary cross-entropy `−[M·ln P + (1−M)·ln(1−P)]`.
pub fn ce_loss(probs: &Mat, mask: &Mat) -> Result<(f64, Mat)> {
    check(probs, mask)?;
    let n = probs.len() as f64;
    let mut total = 0.0;
    let mut grad = Mat::zeros(probs.rows(), probs.cols());
    for (i, (&p, &m)) in probs.data().iter().zip(mask.data()).enumerate() {
        let (pc, live) = clamp(p);
        total += -(m * pc.ln() + (1.0 - m) * (1.0 - pc).ln());
        if live {
            grad.data_mut()[i] = (-m / pc + (1.0 - m) / (1.0 - pc)) / n;
        }
    }
    Ok((total / n, grad))
}

/// Mean focal loss `−α_t (1−p_t)^γ ln p_t`, with `p_t` the probability of the
/// true class and `α_t = alpha` on positives, `1 − alpha` on negatives.
pub fn focal_loss(probs: &Mat, mask: &Mat, gamma: f64, alpha: f64) -> Result<(f64, Mat)> {
    check(probs, mask)?;
    if !(gamma >= 0.0) {
        return Err(Error::contract(format!(
            "focal gamma {gamma} must be nonnegative"
        )));
    }
    let n = probs.len() as f64;
    let mut total = 0.0;
    let mut grad = Mat::zeros(probs.rows(), probs.cols());
    for (i, (&p, &m)) in probs.data().iter().zip(mask.data()).enumerate() {
        let (pc, live) = clamp(p);
        let positive = m >= 0.5;
        let (pt, at, sign) = if positive {
            (pc, alpha, 1.0)
        } else {
            (1.0 - pc, 1.0 - alpha, -1.0)
        };
        let q = 1.0 - pt;
        let weight = q.powf(gamma);
        let log_pt = pt.ln();
        total += -(at * weight * log_pt);
        if live {
            let mut d_pt = weight / pt;
            if gamma != 0.0 {
                d_pt -= gamma * q.powf(gamma - 1.0) * log_pt;
            }
            grad.data_mut()[i] = -at * d_pt * sign / n;
        }
    }
    Ok((total / n, grad))
}

/// Soft dice loss `1 − (2·ΣPM + eps) / (ΣP + ΣM + eps)`.
pub fn dice_loss(probs: &Mat, mask: &Mat, eps: f64) -> Result<(f64, Mat)> {
    check(probs, mask)?;
    if !(eps > 0.0) {
        return Err(Error::contract(format!("dice eps {eps} must be positive")));
    }
    let overlap: f64 = probs
        .data()
        .iter()
        .zip(mask.data())
        .map(|(p, m)| p * m)
        .sum();
    let num = 2.0 * overlap + eps;
    let den = probs.sum() + mask.sum() + eps;
    let grad = mask.map(|m| -(2.0 * m * den - num) / (den * den));
    Ok((1.0 - num / den, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::RandomStream;

    #[test]
    fn ce_perfect_and_uniform() {
        let mask = Mat::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let perfect = mask.map(|m| if m == 1.0 { 1.0 - 1e-7 } else { 1e-7 });
        assert!(ce_loss(&perfect, &mask).unwrap().0 <= 1e-6);
        let half = Mat::filled(2, 2, 0.5);
        let (l, _) = ce_loss(&half, &mask).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn ce_matches_per_cell_formula() {
        let mut rng = RandomStream::new(31);
        let probs =
            Mat::from_vec(3, 3, (0..9).map(|_| rng.uniform_in(0.01, 0.99)).collect()).unwrap();
        let mask = Mat::from_vec(3, 3, (0..9).map(|i| f64::from(i % 2 == 0)).collect()).unwrap();
        let mut expected = 0.0;
        for i in 0..9 {
            let p = probs.data()[i];
            expected += if mask.data()[i] == 1.0 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            };
        }
        expected /= 9.0;
        assert!((ce_loss(&probs, &mask).unwrap().0 - expected).abs() <= 1e-12);
    }

    #[test]
    fn focal_reduces_to_half_ce() {
        let mut rng = RandomStream::new(32);
        let probs = Mat::from_vec(4, 5, (0..20).map(|_| rng.uniform()).collect()).unwrap();
        let mask = Mat::from_vec(
            4,
            5,
            (0..20).map(|_| f64::from(rng.uniform() < 0.3)).collect(),
        )
        .unwrap();
        let (f, _) = focal_loss(&probs, &mask, 0.0, 0.5).unwrap();
        let (c, _) = ce_loss(&probs, &mask).unwrap();
        assert_eq!(f, 0.5 * c);
    }

    #[test]
    fn focal_cases() {
        let ones = Mat::filled(2, 2, 1.0);
        let (l, _) = focal_loss(&ones, &ones, 2.0, 0.25).unwrap();
        // p_t clamps to 1 − 1e-7; (1e-7)² scales the residue to ~1e-22.
        assert!(l < 1e-20);
        let (l, _) =
            focal_loss(&Mat::filled(1, 1, 0.9), &Mat::filled(1, 1, 1.0), 2.0, 0.25).unwrap();
        let expected = 0.25 * 0.1f64.powi(2) * -(0.9f64.ln());
        assert!((l - expected).abs() < 1e-15);
        assert!((l - 2.634e-4).abs() < 1e-7);
        assert!(focal_loss(&ones, &ones, -1.0, 0.25).is_err());
    }

    #[test]
    fn dice_cases() {
        let mask = Mat::from_rows(&[&[1.0, 0.0], &[1.0, 0.0]]);
        let (l, _) = dice_loss(&mask, &mask, 1.0).unwrap();
        assert!(l <= 1.0 / (2.0 * 2.0 + 1.0) + 1e-15);
        let (l, _) = dice_loss(&Mat::zeros(2, 2), &Mat::zeros(2, 2), 1.0).unwrap();
        assert_eq!(l, 0.0);
        let (l, _) = dice_loss(&Mat::filled(2, 2, 0.5), &mask, 1.0).unwrap();
        assert!((l - 0.4).abs() < 1e-15);
        assert!(dice_loss(&mask, &mask, 0.0).is_err());
    }

    fn fd_check(f: impl Fn(&Mat) -> (f64, Mat), probs: &Mat) {
        let (_, grad) = f(probs);
        for i in 0..probs.len() {
            let mut up = probs.clone();
            let mut down = probs.clone();
            up.data_mut()[i] += 1e-6;
            down.data_mut()[i] -= 1e-6;
            let numeric = (f(&up).0 - f(&down).0) / 2e-6;
            let analytic = grad.data()[i];
            assert!(
                (numeric - analytic).abs() <= 1e-6 * analytic.abs().max(1.0),
                "cell {i}: {analytic} vs {numeric}"
            );
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = RandomStream::new(33);
        let probs =
            Mat::from_vec(3, 4, (0..12).map(|_| rng.uniform_in(0.05, 0.95)).collect()).unwrap();
        let mask = Mat::from_vec(
            3,
            4,
            (0..12).map(|_| f64::from(rng.uniform() < 0.5)).collect(),
        )
        .unwrap();
        fd_check(|p| ce_loss(p, &mask).unwrap(), &probs);
        fd_check(|p| focal_loss(p, &mask, 2.0, 0.25).unwrap(), &probs);
        fd_check(|p| focal_loss(p, &mask, 0.5, 0.7).unwrap(), &probs);
        fd_check(|p| dice_loss(p, &mask, 1.0).unwrap(), &probs);
    }
}
