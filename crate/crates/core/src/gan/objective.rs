use serde::{Deserialize, Serialize};

use super::config::{AdversarialForm, LossWeights};
use super::losses::{counter_term, disc_adv, gen_adv, l1_mean};
use super::GanBundle;
use crate::classifier::ClassifierModel;
use crate::error::{Error, Result};
use crate::nn::{Network, Tensor};

/// Individually reported terms of the objective. `cycle` and `identity` are
/// the sums over both directions, before weighting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    /// `D_Y` scoring `G(x)` (generator side).
    pub adv_g: f64,
    /// `D_X` scoring `F(y)` (generator side).
    pub adv_f: f64,
    /// `D_X` on real `x` vs generated `F(y)`.
    pub adv_dx: f64,
    /// `D_Y` on real `y` vs generated `G(x)`.
    pub adv_dy: f64,
    pub cycle: f64,
    pub identity: f64,
    pub counter: f64,
}

impl LossComponents {
    pub fn generator_total(&self, w: &LossWeights) -> f64 {
        self.adv_g + self.adv_f + w.lambda_cycle * self.cycle + w.mu_identity * self.identity + w.gamma_counter * self.counter
    }

    pub fn discriminator_total(&self) -> f64 {
        self.adv_dx + self.adv_dy
    }

    pub(crate) fn named(&self) -> [(&'static str, f64); 7] {
        [
            ("adv_g", self.adv_g),
            ("adv_f", self.adv_f),
            ("adv_dx", self.adv_dx),
            ("adv_dy", self.adv_dy),
            ("cycle", self.cycle),
            ("identity", self.identity),
            ("counter", self.counter),
        ]
    }

    pub(crate) fn breakdown(&self) -> String {
        self.named().iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub components: LossComponents,
    pub generator_total: f64,
    pub discriminator_total: f64,
}

/// Result of the generator-side pass.
pub(crate) struct GeneratorPass {
    pub components: LossComponents,
    pub total: f64,
    /// `G(x)`, to be judged by `D_Y`.
    pub fake_y: Tensor,
    /// `F(y)`, to be judged by `D_X`.
    pub fake_x: Tensor,
    pub grads: Option<(Vec<f64>, Vec<f64>)>,
}

fn scaled(t: &Tensor, k: f64) -> Tensor {
    t.map(|v| v * k)
}

/// Evaluates the generator-side terms; with `want_grads`, also the gradient of
/// their weighted sum w.r.t. the parameters of `G` and `F`. Discriminators and
/// the classifier only pass gradients through; their parameters get none.
#[allow(clippy::too_many_arguments)]
pub(crate) fn generator_pass(
    g: &Network,
    f: &Network,
    dx: &Network,
    dy: &Network,
    c: &ClassifierModel,
    x: &Tensor,
    y: &Tensor,
    w: &LossWeights,
    form: AdversarialForm,
    want_grads: bool,
) -> Result<GeneratorPass> {
    let (fake_y, tape_gx) = g.forward(x)?;
    let (fake_x, tape_fy) = f.forward(y)?;
    let (rec_x, tape_fgx) = f.forward(&fake_y)?;
    let (rec_y, tape_gfy) = g.forward(&fake_x)?;
    let (id_y, tape_gy) = g.forward(y)?;
    let (id_x, tape_fx) = f.forward(x)?;

    let (score_y, tape_dy) = dy.forward(&fake_y)?;
    let (score_x, tape_dx) = dx.forward(&fake_x)?;
    let (adv_g, d_score_y) = gen_adv(form, &score_y);
    let (adv_f, d_score_x) = gen_adv(form, &score_x);

    let (cyc_x, d_rec_x) = l1_mean(&rec_x, x)?;
    let (cyc_y, d_rec_y) = l1_mean(&rec_y, y)?;
    let (idt_y, d_id_y) = l1_mean(&id_y, y)?;
    let (idt_x, d_id_x) = l1_mean(&id_x, x)?;

    let probs_y = c.forward_probs(&fake_y)?;
    let probs_x = c.forward_probs(&fake_x)?;
    let (cnt_y, dp_y) = counter_term(probs_y.probs(), w.target_y);
    let (cnt_x, dp_x) = counter_term(probs_x.probs(), w.target_x);

    let components = LossComponents {
        adv_g,
        adv_f,
        cycle: cyc_x + cyc_y,
        identity: idt_x + idt_y,
        counter: cnt_x + cnt_y,
        ..LossComponents::default()
    };
    let total = components.generator_total(w);

    let grads = if want_grads {
        let mut gg = g.zero_grads();
        let mut gf = f.zero_grads();
        // Second hop first: its input gradients feed the first-hop outputs.
        let mut d_fake_y = f.backward(&tape_fgx, &scaled(&d_rec_x, w.lambda_cycle), Some(&mut gf));
        let mut d_fake_x = g.backward(&tape_gfy, &scaled(&d_rec_y, w.lambda_cycle), Some(&mut gg));
        d_fake_y.add_assign(&dy.backward(&tape_dy, &d_score_y, None))?;
        d_fake_x.add_assign(&dx.backward(&tape_dx, &d_score_x, None))?;
        if w.gamma_counter != 0.0 {
            let k = w.gamma_counter;
            let dp_y: Vec<[f64; 2]> = dp_y.iter().map(|d| [k * d[0], k * d[1]]).collect();
            let dp_x: Vec<[f64; 2]> = dp_x.iter().map(|d| [k * d[0], k * d[1]]).collect();
            d_fake_y.add_assign(&c.backward_probs(&probs_y, &dp_y))?;
            d_fake_x.add_assign(&c.backward_probs(&probs_x, &dp_x))?;
        }
        g.backward(&tape_gx, &d_fake_y, Some(&mut gg));
        f.backward(&tape_fy, &d_fake_x, Some(&mut gf));
        if w.mu_identity != 0.0 {
            g.backward(&tape_gy, &scaled(&d_id_y, w.mu_identity), Some(&mut gg));
            f.backward(&tape_fx, &scaled(&d_id_x, w.mu_identity), Some(&mut gf));
        }
        Some((gg, gf))
    } else {
        None
    };

    Ok(GeneratorPass {
        components,
        total,
        fake_y,
        fake_x,
        grads,
    })
}

pub(crate) struct DiscriminatorPass {
    pub adv_dx: f64,
    pub adv_dy: f64,
    pub grads: Option<(Vec<f64>, Vec<f64>)>,
}

/// `D_X` separates real `x` from `fake_x`; `D_Y` separates real `y` from `fake_y`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn discriminator_pass(
    dx: &Network,
    dy: &Network,
    x: &Tensor,
    y: &Tensor,
    fake_x: &Tensor,
    fake_y: &Tensor,
    form: AdversarialForm,
    want_grads: bool,
) -> Result<DiscriminatorPass> {
    let side = |d: &Network, real: &Tensor, fake: &Tensor| -> Result<(f64, Option<Vec<f64>>)> {
        let (sr, tr) = d.forward(real)?;
        let (sf, tf) = d.forward(fake)?;
        let (loss, gr, gf) = disc_adv(form, &sr, &sf);
        let grads = want_grads.then(|| {
            let mut gd = d.zero_grads();
            d.backward(&tr, &gr, Some(&mut gd));
            d.backward(&tf, &gf, Some(&mut gd));
            gd
        });
        Ok((loss, grads))
    };
    let (adv_dx, gdx) = side(dx, x, fake_x)?;
    let (adv_dy, gdy) = side(dy, y, fake_y)?;
    Ok(DiscriminatorPass {
        adv_dx,
        adv_dy,
        grads: gdx.zip(gdy),
    })
}

/// All components and both totals on one `(x, y)` batch pair, with the
/// discriminators judging the current generator outputs.
pub fn total_objective(
    bundle: &GanBundle,
    c: &ClassifierModel,
    x: &Tensor,
    y: &Tensor,
    weights: &LossWeights,
) -> Result<ObjectiveValue> {
    bundle.verify_classifier(c)?;
    if !c.is_frozen() {
        return Err(Error::NotFrozen);
    }
    let form = bundle.config.adversarial;
    let gp = generator_pass(&bundle.g, &bundle.f, &bundle.dx, &bundle.dy, c, x, y, weights, form, false)?;
    let dp = discriminator_pass(&bundle.dx, &bundle.dy, x, y, &gp.fake_x, &gp.fake_y, form, false)?;
    let components = LossComponents {
        adv_dx: dp.adv_dx,
        adv_dy: dp.adv_dy,
        ..gp.components
    };
    Ok(ObjectiveValue {
        components,
        generator_total: gp.total,
        discriminator_total: components.discriminator_total(),
    })
}

/// Gradient of `generator_total` w.r.t. the parameters of `G` and `F`.
pub fn generator_gradients(
    bundle: &GanBundle,
    c: &ClassifierModel,
    x: &Tensor,
    y: &Tensor,
    weights: &LossWeights,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    bundle.verify_classifier(c)?;
    let gp = generator_pass(
        &bundle.g,
        &bundle.f,
        &bundle.dx,
        &bundle.dy,
        c,
        x,
        y,
        weights,
        bundle.config.adversarial,
        true,
    )?;
    let (gg, gf) = gp.grads.expect("gradients requested");
    Ok((gp.total, gg, gf))
}
