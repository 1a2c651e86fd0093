//! Adversarial and reconstruction losses of the sparse-volume networks,
//! with analytic gradients with respect to their direct inputs.
//!
//! The adversarial term uses the standard conditional-GAN log-likelihood:
//! the discriminator minimizes `−mean(log D(real)) − mean(log(1 − D(fake)))`
//! and the generator minimizes the non-saturating `−mean(log D(fake))`.
//! Expectations are arithmetic means over the supplied batch.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Discriminator outputs are clamped to `[SCORE_EPS, 1 − SCORE_EPS]`
/// before taking logs.
pub const SCORE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdvRole {
    Discriminator,
    Generator,
}

/// Loss value with gradients for each input batch.
#[derive(Clone, Debug, PartialEq)]
pub struct AdvLoss {
    pub value: f64,
    pub grad_real: Vec<f64>,
    pub grad_fake: Vec<f64>,
}

fn clamp_scores(scores: &[f64], which: &str) -> Result<Vec<f64>> {
    scores
        .iter()
        .map(|&s| {
            if !(0.0..=1.0).contains(&s) {
                Err(Error::validation(format!(
                    "{which} score {s} is not a probability in (0, 1)"
                )))
            } else {
                Ok(s.clamp(SCORE_EPS, 1.0 - SCORE_EPS))
            }
        })
        .collect()
}

/// Adversarial loss for one task. `real` holds `D(x, y)` on ground truth,
/// `fake` holds `D(x, G(x))`. The generator role ignores `real` (its
/// gradient is all zeros).
pub fn adv_loss(real: &[f64], fake: &[f64], role: AdvRole) -> Result<AdvLoss> {
    let fake_c = clamp_scores(fake, "fake")?;
    if fake_c.is_empty() {
        return Err(Error::validation("adversarial loss needs at least one fake score"));
    }
    let nf = fake_c.len() as f64;
    match role {
        AdvRole::Discriminator => {
            let real_c = clamp_scores(real, "real")?;
            if real_c.is_empty() {
                return Err(Error::validation("discriminator loss needs at least one real score"));
            }
            let nr = real_c.len() as f64;
            let value = -real_c.iter().map(|r| r.ln()).sum::<f64>() / nr
                - fake_c.iter().map(|f| (1.0 - f).ln()).sum::<f64>() / nf;
            Ok(AdvLoss {
                value,
                grad_real: real_c.iter().map(|r| -1.0 / (nr * r)).collect(),
                grad_fake: fake_c.iter().map(|f| 1.0 / (nf * (1.0 - f))).collect(),
            })
        }
        AdvRole::Generator => Ok(AdvLoss {
            value: -fake_c.iter().map(|f| f.ln()).sum::<f64>() / nf,
            grad_real: vec![0.0; real.len()],
            grad_fake: fake_c.iter().map(|f| -1.0 / (nf * f)).collect(),
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecLoss {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Mean absolute (L1) or mean squared (L2) error over all elements. The L1
/// subgradient at zero residual is 0.
pub fn rec_loss(pred: &[f64], gt: &[f64], norm: Norm) -> Result<RecLoss> {
    if pred.len() != gt.len() {
        return Err(Error::validation(format!(
            "prediction has {} elements but ground truth has {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::validation("reconstruction loss of an empty tensor"));
    }
    let n = pred.len() as f64;
    let residual = pred.iter().zip(gt).map(|(p, g)| p - g);
    let (value, grad) = match norm {
        Norm::L1 => (
            residual.clone().map(f64::abs).sum::<f64>() / n,
            residual
                .map(|r| if r > 0.0 { 1.0 / n } else if r < 0.0 { -1.0 / n } else { 0.0 })
                .collect(),
        ),
        Norm::L2 => (
            residual.clone().map(|r| r * r).sum::<f64>() / n,
            residual.map(|r| 2.0 * r / n).collect(),
        ),
    };
    Ok(RecLoss { value, grad })
}

/// Balancing coefficients. Defaults are the values the networks were
/// trained with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_rec_s: f64,
    pub lambda_adv_s: f64,
    pub lambda_rec_c: f64,
    pub lambda_adv_c: f64,
    pub lambda_rec_r: f64,
    pub lambda_adv_r: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_rec_s: 1000.0,
            lambda_adv_s: 0.2,
            lambda_rec_c: 100.0,
            lambda_adv_c: 1.0,
            lambda_rec_r: 1000.0,
            lambda_adv_r: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda_rec_s", self.lambda_rec_s),
            ("lambda_adv_s", self.lambda_adv_s),
            ("lambda_rec_c", self.lambda_rec_c),
            ("lambda_adv_c", self.lambda_adv_c),
            ("lambda_rec_r", self.lambda_rec_r),
            ("lambda_adv_r", self.lambda_adv_r),
        ];
        for (name, v) in all {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// Segmentation (`s`) and completion (`c`) tasks of the volume network.
    Volume3d,
    /// Refinement (`r`) task of the slice network.
    Slice2d,
}

/// Individual loss terms; a stage only needs its own.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub adv_s: Option<f64>,
    pub rec_s: Option<f64>,
    pub adv_c: Option<f64>,
    pub rec_c: Option<f64>,
    pub adv_r: Option<f64>,
    pub rec_r: Option<f64>,
}

fn need(v: Option<f64>, name: &'static str) -> Result<f64> {
    v.ok_or(Error::MissingTerm(name))
}

/// λ-weighted sum of the stage's terms.
pub fn total_loss(terms: &LossTerms, cfg: &LossConfig, stage: Stage) -> Result<f64> {
    cfg.validate()?;
    Ok(match stage {
        Stage::Volume3d => {
            cfg.lambda_rec_s * need(terms.rec_s, "rec_s")?
                + cfg.lambda_adv_s * need(terms.adv_s, "adv_s")?
                + cfg.lambda_rec_c * need(terms.rec_c, "rec_c")?
                + cfg.lambda_adv_c * need(terms.adv_c, "adv_c")?
        }
        Stage::Slice2d => {
            cfg.lambda_rec_r * need(terms.rec_r, "rec_r")? + cfg.lambda_adv_r * need(terms.adv_r, "adv_r")?
        }
    })
}

/// Gradient of the λ-weighted total with respect to one input tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedGradient {
    pub name: &'static str,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub terms: LossTerms,
    pub total: f64,
    pub gradients: Vec<NamedGradient>,
}

impl LossBreakdown {
    pub fn gradient(&self, name: &str) -> Option<&[f64]> {
        self.gradients.iter().find(|g| g.name == name).map(|g| g.values.as_slice())
    }
}

/// Generator-side inputs of the volume network loss.
#[derive(Clone, Copy, Debug)]
pub struct VolumeOutputs<'a> {
    /// Multi-channel segmentation output, flattened.
    pub segmentation: &'a [f64],
    /// One-hot ground-truth segmentation, same layout.
    pub segmentation_gt: &'a [f64],
    /// Completed volume.
    pub completion: &'a [f64],
    /// Paired CT volume serving as completion ground truth.
    pub completion_gt: &'a [f64],
    /// Discriminator scores on the generated segmentation.
    pub scores_s: &'a [f64],
    /// Discriminator scores on the generated completion.
    pub scores_c: &'a [f64],
}

/// Generator loss of the volume network: L2 segmentation and L1
/// completion reconstruction, plus non-saturating adversarial terms.
pub fn volume_generator_loss(o: &VolumeOutputs<'_>, cfg: &LossConfig) -> Result<LossBreakdown> {
    let rec_s = rec_loss(o.segmentation, o.segmentation_gt, Norm::L2)?;
    let rec_c = rec_loss(o.completion, o.completion_gt, Norm::L1)?;
    let adv_s = adv_loss(&[], o.scores_s, AdvRole::Generator)?;
    let adv_c = adv_loss(&[], o.scores_c, AdvRole::Generator)?;
    let terms = LossTerms {
        adv_s: Some(adv_s.value),
        rec_s: Some(rec_s.value),
        adv_c: Some(adv_c.value),
        rec_c: Some(rec_c.value),
        ..LossTerms::default()
    };
    let total = total_loss(&terms, cfg, Stage::Volume3d)?;
    let scale = |v: Vec<f64>, l: f64| v.into_iter().map(|g| g * l).collect();
    Ok(LossBreakdown {
        terms,
        total,
        gradients: vec![
            NamedGradient { name: "segmentation", values: scale(rec_s.grad, cfg.lambda_rec_s) },
            NamedGradient { name: "completion", values: scale(rec_c.grad, cfg.lambda_rec_c) },
            NamedGradient { name: "scores_s", values: scale(adv_s.grad_fake, cfg.lambda_adv_s) },
            NamedGradient { name: "scores_c", values: scale(adv_c.grad_fake, cfg.lambda_adv_c) },
        ],
    })
}

/// Generator-side inputs of the slice refinement loss.
#[derive(Clone, Copy, Debug)]
pub struct SliceOutputs<'a> {
    pub refined: &'a [f64],
    pub refined_gt: &'a [f64],
    pub scores_r: &'a [f64],
}

/// Generator loss of the refinement network: L2 reconstruction plus the
/// non-saturating adversarial term.
pub fn slice_generator_loss(o: &SliceOutputs<'_>, cfg: &LossConfig) -> Result<LossBreakdown> {
    let rec = rec_loss(o.refined, o.refined_gt, Norm::L2)?;
    let adv = adv_loss(&[], o.scores_r, AdvRole::Generator)?;
    let terms = LossTerms {
        adv_r: Some(adv.value),
        rec_r: Some(rec.value),
        ..LossTerms::default()
    };
    let total = total_loss(&terms, cfg, Stage::Slice2d)?;
    Ok(LossBreakdown {
        terms,
        total,
        gradients: vec![
            NamedGradient {
                name: "refined",
                values: rec.grad.into_iter().map(|g| g * cfg.lambda_rec_r).collect(),
            },
            NamedGradient {
                name: "scores_r",
                values: adv.grad_fake.into_iter().map(|g| g * cfg.lambda_adv_r).collect(),
            },
        ],
    })
}

/// Largest relative disagreement between `analytic` and a five-point
/// central difference of `f` at `x` with step `h`, over coordinates where
/// `skip` is false. Relative error is `|a − n| / max(|a|, |n|, 1e-12)`.
///
/// The three-point quotient's h² truncation reaches ~1e-5 on `ln f` near
/// f = 0.02; the five-point stencil is O(h⁴).
pub fn max_fd_rel_error(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    h: f64,
    skip: impl Fn(usize) -> bool,
) -> f64 {
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        if skip(i) {
            continue;
        }
        let mut at = |d: f64| {
            probe[i] = x[i] + d;
            f(&probe)
        };
        let near = at(h) - at(-h);
        let far = at(2.0 * h) - at(-2.0 * h);
        probe[i] = x[i];
        let numeric = (8.0 * near - far) / (12.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}
