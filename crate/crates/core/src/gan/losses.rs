//! Loss terms of the composite objective, each returning its value together
//! with the gradient w.r.t. its tensor arguments.

use super::config::{AdversarialForm, LossWeights};
use crate::classifier::{ClassifierModel, ProbPair};
use crate::error::{Error, Result};
use crate::nn::{Network, Tensor};

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Discriminator-side adversarial loss on raw patch scores.
/// Returns `(loss, d loss/d real, d loss/d fake)`.
pub fn disc_adv(form: AdversarialForm, real: &Tensor, fake: &Tensor) -> (f64, Tensor, Tensor) {
    let (nr, nf) = (real.len() as f64, fake.len() as f64);
    match form {
        AdversarialForm::LeastSquares => {
            let lr = real.data().iter().map(|s| (s - 1.0).powi(2)).sum::<f64>() / nr;
            let lf = fake.data().iter().map(|s| s * s).sum::<f64>() / nf;
            (lr + lf, real.map(|s| 2.0 * (s - 1.0) / nr), fake.map(|s| 2.0 * s / nf))
        }
        AdversarialForm::Log => {
            let lr = real.data().iter().map(|&s| softplus(-s)).sum::<f64>() / nr;
            let lf = fake.data().iter().map(|&s| softplus(s)).sum::<f64>() / nf;
            (lr + lf, real.map(|s| (sigmoid(s) - 1.0) / nr), fake.map(|s| sigmoid(s) / nf))
        }
    }
}

/// Generator-side adversarial loss on the scores of generated images.
pub fn gen_adv(form: AdversarialForm, fake: &Tensor) -> (f64, Tensor) {
    let n = fake.len() as f64;
    match form {
        AdversarialForm::LeastSquares => (
            fake.data().iter().map(|s| (s - 1.0).powi(2)).sum::<f64>() / n,
            fake.map(|s| 2.0 * (s - 1.0) / n),
        ),
        AdversarialForm::Log => (
            fake.data().iter().map(|&s| softplus(-s)).sum::<f64>() / n,
            fake.map(|s| (sigmoid(s) - 1.0) / n),
        ),
    }
}

/// Mean absolute difference and its (sub)gradient w.r.t. `a`.
pub fn l1_mean(a: &Tensor, b: &Tensor) -> Result<(f64, Tensor)> {
    a.expect_same_shape(b)?;
    let n = a.len() as f64;
    let loss = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).sum::<f64>() / n;
    let grad = a.zip_map(b, |p, q| {
        let d = p - q;
        if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        }
    })?;
    Ok((loss, grad))
}

/// Batch mean of the squared distance to `target`, with `d loss / d probs`.
pub fn counter_term(probs: &[ProbPair], target: ProbPair) -> (f64, Vec<[f64; 2]>) {
    let n = probs.len() as f64;
    let t = target.as_array();
    let mut loss = 0.0;
    let grads = probs
        .iter()
        .map(|p| {
            let d = [p.p_x - t[0], p.p_y - t[1]];
            loss += d[0] * d[0] + d[1] * d[1];
            [2.0 * d[0] / n, 2.0 * d[1] / n]
        })
        .collect();
    (loss / n, grads)
}

fn check_batch(x: &Tensor, what: &str) -> Result<()> {
    if x.is_empty() || x.batch() == 0 {
        return Err(Error::invalid(format!("{what} batch is empty")));
    }
    Ok(())
}

/// `(d_loss, g_loss)` of discriminator `d` on a real and a generated batch.
pub fn adversarial_loss(d: &Network, real: &Tensor, fake: &Tensor, form: AdversarialForm) -> Result<(f64, f64)> {
    check_batch(real, "real")?;
    check_batch(fake, "fake")?;
    let sr = d.infer(real)?;
    let sf = d.infer(fake)?;
    let (dl, _, _) = disc_adv(form, &sr, &sf);
    let (gl, _) = gen_adv(form, &sf);
    Ok((dl, gl))
}

/// `mean|F(G(x)) - x| + mean|G(F(y)) - y|`.
pub fn cycle_loss(g: &Network, f: &Network, x: &Tensor, y: &Tensor) -> Result<f64> {
    check_batch(x, "x")?;
    check_batch(y, "y")?;
    let rx = f.infer(&g.infer(x)?)?;
    let ry = g.infer(&f.infer(y)?)?;
    Ok(l1_mean(&rx, x)?.0 + l1_mean(&ry, y)?.0)
}

/// `mean|G(y) - y| + mean|F(x) - x|`.
pub fn identity_loss(g: &Network, f: &Network, x: &Tensor, y: &Tensor) -> Result<f64> {
    check_batch(x, "x")?;
    check_batch(y, "y")?;
    Ok(l1_mean(&g.infer(y)?, y)?.0 + l1_mean(&f.infer(x)?, x)?.0)
}

/// Squared distance of the classifier's output on `G(x)` to `target_y` plus
/// that on `F(y)` to `target_x`, each averaged over its batch.
pub fn counter_loss(
    g: &Network,
    f: &Network,
    c: &ClassifierModel,
    x: &Tensor,
    y: &Tensor,
    weights: &LossWeights,
) -> Result<f64> {
    if !c.is_frozen() {
        return Err(Error::NotFrozen);
    }
    check_batch(x, "x")?;
    check_batch(y, "y")?;
    let py = c.predict_tensor(&g.infer(x)?)?;
    let px = c.predict_tensor(&f.infer(y)?)?;
    Ok(counter_term(&py, weights.target_y).0 + counter_term(&px, weights.target_x).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec([v.len(), 1, 1, 1], v.to_vec()).unwrap()
    }

    #[test]
    fn lsgan_constants() {
        let (d, _, _) = disc_adv(AdversarialForm::LeastSquares, &t(&[1.0; 4]), &t(&[0.0; 4]));
        let (g, _) = gen_adv(AdversarialForm::LeastSquares, &t(&[0.0; 4]));
        assert_eq!((d, g), (0.0, 1.0));
        let (d, _, _) = disc_adv(AdversarialForm::LeastSquares, &t(&[0.5; 4]), &t(&[0.5; 4]));
        let (g, _) = gen_adv(AdversarialForm::LeastSquares, &t(&[0.5; 4]));
        assert_eq!((d, g), (0.5, 0.25));
    }

    #[test]
    fn log_form_matches_cross_entropy() {
        let (d, _, _) = disc_adv(AdversarialForm::Log, &t(&[0.0]), &t(&[0.0]));
        assert!((d - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let (g, _) = gen_adv(AdversarialForm::Log, &t(&[2.0]));
        assert!((g - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-12);
        // Stable far into the tails.
        let (d, _, _) = disc_adv(AdversarialForm::Log, &t(&[800.0]), &t(&[-800.0]));
        assert!(d.is_finite() && d < 1e-12);
    }

    #[test]
    fn adversarial_gradients_match_finite_differences() {
        for form in [AdversarialForm::LeastSquares, AdversarialForm::Log] {
            let real = t(&[0.3, -0.7, 1.4]);
            let fake = t(&[-0.2, 0.9]);
            let (_, gr, gf) = disc_adv(form, &real, &fake);
            let (_, gg) = gen_adv(form, &fake);
            let eps = 1e-6;
            for i in 0..3 {
                let mut p = real.clone();
                p.data_mut()[i] += eps;
                let mut m = real.clone();
                m.data_mut()[i] -= eps;
                let fd = (disc_adv(form, &p, &fake).0 - disc_adv(form, &m, &fake).0) / (2.0 * eps);
                assert!((fd - gr.data()[i]).abs() < 1e-8);
            }
            for i in 0..2 {
                let mut p = fake.clone();
                p.data_mut()[i] += eps;
                let mut m = fake.clone();
                m.data_mut()[i] -= eps;
                let fd = (disc_adv(form, &real, &p).0 - disc_adv(form, &real, &m).0) / (2.0 * eps);
                assert!((fd - gf.data()[i]).abs() < 1e-8);
                let fd = (gen_adv(form, &p).0 - gen_adv(form, &m).0) / (2.0 * eps);
                assert!((fd - gg.data()[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn counter_term_values() {
        let half = ProbPair { p_x: 0.5, p_y: 0.5 };
        let (l, _) = counter_term(&[half], ProbPair { p_x: 0.0, p_y: 1.0 });
        assert!((l - 0.5).abs() < 1e-15);
        let (l, _) = counter_term(&[ProbPair { p_x: 0.0, p_y: 1.0 }], ProbPair { p_x: 0.0, p_y: 1.0 });
        assert_eq!(l, 0.0);
    }

    #[test]
    fn l1_constant_offset() {
        let a = t(&[0.1, 0.2, 0.3]);
        let b = a.map(|v| v + 0.1);
        let (l, g) = l1_mean(&b, &a).unwrap();
        assert!((l - 0.1).abs() < 1e-12);
        assert!(g.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(l1_mean(&a, &t(&[0.0])).is_err());
    }
}
