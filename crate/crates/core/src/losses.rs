//! Spectral, time-domain and adversarial training objectives.
//!
//! All functions take a reference signal `x` and an estimate `y` of equal
//! shape `[..., T]` and record their computation in the graph.

use autodiff::{Graph, Real, Var};

use crate::config::{LossWeights, StftConfig, StftLossConfig, TimeLossConfig};
use crate::discriminators::{DiscOutput, FreqDiscriminator, TimeDiscriminator};
use crate::dsp::{self, MAGNITUDE_FLOOR};
use crate::error::{Result, VocoderError};
use crate::params::Bound;

/// Component names used in reports and logs.
pub mod component {
    pub const ADV_TIME: &str = "adv_time";
    pub const STFT: &str = "stft";
    pub const ADV_FREQ: &str = "adv_freq";
    pub const TIME: &str = "time";
    pub const FEATURE_MATCHING: &str = "feature_matching";
    pub const D_TIME: &str = "d_time";
    pub const D_FREQ: &str = "d_freq";
}

fn same_shape<T: Real>(g: &Graph<T>, op: &str, x: Var, y: Var) -> Result<usize> {
    if g.shape(x) != g.shape(y) {
        return Err(VocoderError::Data(format!(
            "{op}: signal shapes differ ({:?} vs {:?})",
            g.shape(x),
            g.shape(y)
        )));
    }
    Ok(g.shape(x).last().copied().unwrap_or(0))
}

/// Unfloored STFT magnitudes of both signals.
fn magnitudes<T: Real>(g: &mut Graph<T>, x: Var, y: Var, cfg: &StftConfig) -> Result<(Var, Var)> {
    same_shape(g, "stft loss", x, y)?;
    let sx = dsp::stft(g, x, cfg)?;
    let sy = dsp::stft(g, y, cfg)?;
    Ok((dsp::magnitude(g, sx, 0.0)?, dsp::magnitude(g, sy, 0.0)?))
}

fn sc_from_mags<T: Real>(g: &mut Graph<T>, mx: Var, my: Var) -> Result<Var> {
    let diff = g.sub(mx, my)?;
    let num = g.frobenius_norm(diff)?;
    let den = g.frobenius_norm(mx)?;
    let den = g.clamp_min(den, MAGNITUDE_FLOOR)?;
    Ok(g.div(num, den)?)
}

fn log_mag_from_mags<T: Real>(g: &mut Graph<T>, mx: Var, my: Var) -> Result<Var> {
    let fx = g.clamp_min(mx, MAGNITUDE_FLOOR)?;
    let fy = g.clamp_min(my, MAGNITUDE_FLOOR)?;
    let lx = g.log(fx)?;
    let ly = g.log(fy)?;
    let d = g.sub(lx, ly)?;
    let a = g.abs(d)?;
    Ok(g.mean(a)?)
}

/// `‖|X| − |Y|‖_F / max(‖|X|‖_F, 1e-7)`.
pub fn spectral_convergence<T: Real>(g: &mut Graph<T>, x: Var, y: Var, cfg: &StftConfig) -> Result<Var> {
    let (mx, my) = magnitudes(g, x, y, cfg)?;
    sc_from_mags(g, mx, my)
}

/// Mean absolute difference of floored log magnitudes.
pub fn log_magnitude_loss<T: Real>(g: &mut Graph<T>, x: Var, y: Var, cfg: &StftConfig) -> Result<Var> {
    let (mx, my) = magnitudes(g, x, y, cfg)?;
    log_mag_from_mags(g, mx, my)
}

/// Spectral convergence and log-magnitude loss sharing one STFT pair.
pub fn stft_loss<T: Real>(g: &mut Graph<T>, x: Var, y: Var, cfg: &StftConfig) -> Result<(Var, Var)> {
    let (mx, my) = magnitudes(g, x, y, cfg)?;
    Ok((sc_from_mags(g, mx, my)?, log_mag_from_mags(g, mx, my)?))
}

/// `(1/M) Σ_m (sc_m + mag_m)`.
pub fn multi_res_stft_loss<T: Real>(g: &mut Graph<T>, x: Var, y: Var, cfg: &StftLossConfig) -> Result<Var> {
    cfg.validate()?;
    let len = same_shape(g, "multi-resolution stft loss", x, y)?;
    if len < cfg.min_length() {
        return Err(VocoderError::Data(format!(
            "multi-resolution stft loss needs at least {} samples, got {len}",
            cfg.min_length()
        )));
    }
    let mut total = None;
    for res in cfg.stft_configs() {
        let (sc, mag) = stft_loss(g, x, y, &res)?;
        let s = g.add(sc, mag)?;
        total = Some(match total {
            None => s,
            Some(t) => g.add(t, s)?,
        });
    }
    let total = total.expect("at least one resolution");
    Ok(g.scale(total, 1.0 / cfg.resolutions.len() as f64)?)
}

/// Multi-resolution STFT loss between two plain signals, evaluated in `f64`.
pub fn multi_res_stft_distance(x: &[f64], y: &[f64], cfg: &StftLossConfig) -> Result<f64> {
    if x.len() != y.len() {
        return Err(VocoderError::Data(format!(
            "signals differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let mut g = Graph::<f64>::new();
    let xv = g.constant([x.len()], x.to_vec())?;
    let yv = g.constant([y.len()], y.to_vec())?;
    let l = multi_res_stft_loss(&mut g, xv, yv, cfg)?;
    Ok(g.value(l)[0])
}

/// Energy, mean and first-difference losses at one `(frame, hop)` scale.
pub fn time_domain_losses<T: Real>(g: &mut Graph<T>, x: Var, y: Var, scale: (usize, usize)) -> Result<(Var, Var, Var)> {
    let len = same_shape(g, "time-domain loss", x, y)?;
    let (frame, hop) = scale;
    if len < frame.max(2) {
        return Err(VocoderError::Data(format!(
            "time-domain loss with frame {frame} needs at least {} samples, got {len}",
            frame.max(2)
        )));
    }
    let fx = dsp::frame_signal(g, x, frame, hop)?;
    let fy = dsp::frame_signal(g, y, frame, hop)?;
    let rank = g.shape(fx).len();
    let last = [rank - 1];

    let sx = g.square(fx)?;
    let sy = g.square(fy)?;
    let ex = g.mean_axes(sx, &last)?;
    let ey = g.mean_axes(sy, &last)?;
    let de = g.sub(ex, ey)?;
    let ae = g.abs(de)?;
    let loss_e = g.mean(ae)?;

    let tx = g.mean_axes(fx, &last)?;
    let ty = g.mean_axes(fy, &last)?;
    let dt = g.sub(tx, ty)?;
    let at = g.abs(dt)?;
    let loss_t = g.mean(at)?;

    let axis = g.shape(x).len() - 1;
    let x1 = g.slice(x, axis, 1, len)?;
    let x0 = g.slice(x, axis, 0, len - 1)?;
    let y1 = g.slice(y, axis, 1, len)?;
    let y0 = g.slice(y, axis, 0, len - 1)?;
    let dx = g.sub(x1, x0)?;
    let dy = g.sub(y1, y0)?;
    let dp = g.sub(dx, dy)?;
    let ap = g.abs(dp)?;
    let loss_p = g.mean(ap)?;
    Ok((loss_e, loss_t, loss_p))
}

/// Sum over scales of `loss_e + loss_t + loss_p`.
pub fn total_time_loss<T: Real>(g: &mut Graph<T>, x: Var, y: Var, cfg: &TimeLossConfig) -> Result<Var> {
    cfg.validate()?;
    let len = same_shape(g, "time-domain loss", x, y)?;
    if len < cfg.min_length() {
        return Err(VocoderError::Data(format!(
            "time-domain losses need at least {} samples, got {len}",
            cfg.min_length()
        )));
    }
    let mut total = None;
    for &scale in &cfg.scales {
        let (e, t, p) = time_domain_losses(g, x, y, scale)?;
        let s = g.add(e, t)?;
        let s = g.add(s, p)?;
        total = Some(match total {
            None => s,
            Some(acc) => g.add(acc, s)?,
        });
    }
    Ok(total.expect("at least one scale"))
}

fn sum_vars<T: Real>(g: &mut Graph<T>, vars: impl IntoIterator<Item = Var>) -> Result<Option<Var>> {
    let mut acc = None;
    for v in vars {
        acc = Some(match acc {
            None => v,
            Some(a) => g.add(a, v)?,
        });
    }
    Ok(acc)
}

/// `Σ_k mean(relu(1 − D_k(x))) + mean(relu(1 + D_k(x̂)))`. The fake logits
/// should come from a detached `x̂`.
pub fn hinge_d_loss<T: Real>(g: &mut Graph<T>, real: &[Var], fake: &[Var]) -> Result<Var> {
    if real.is_empty() || real.len() != fake.len() {
        return Err(VocoderError::Data(format!(
            "hinge loss needs matching non-empty logit lists, got {} and {}",
            real.len(),
            fake.len()
        )));
    }
    let mut terms = Vec::with_capacity(2 * real.len());
    for (&r, &f) in real.iter().zip(fake) {
        let a = g.neg(r)?;
        let a = g.add_scalar(a, 1.0)?;
        let a = g.relu(a)?;
        terms.push(g.mean(a)?);
        let b = g.add_scalar(f, 1.0)?;
        let b = g.relu(b)?;
        terms.push(g.mean(b)?);
    }
    Ok(sum_vars(g, terms)?.expect("non-empty"))
}

/// `Σ_k mean(−D_k(x̂))`.
pub fn hinge_g_loss<T: Real>(g: &mut Graph<T>, fake: &[Var]) -> Result<Var> {
    if fake.is_empty() {
        return Err(VocoderError::Data("hinge loss needs at least one logit map".into()));
    }
    let mut terms = Vec::with_capacity(fake.len());
    for &f in fake {
        let m = g.mean(f)?;
        terms.push(g.neg(m)?);
    }
    Ok(sum_vars(g, terms)?.expect("non-empty"))
}

/// Mean over all layers of `mean |real − fake|`, real features detached.
pub fn feature_matching<T: Real>(g: &mut Graph<T>, real: &[Vec<Var>], fake: &[Vec<Var>]) -> Result<Var> {
    if real.len() != fake.len() || real.iter().zip(fake).any(|(a, b)| a.len() != b.len()) {
        return Err(VocoderError::Data("feature lists differ in structure".into()));
    }
    let mut terms = Vec::new();
    for (r, f) in real.iter().flatten().zip(fake.iter().flatten()) {
        if g.shape(*r) != g.shape(*f) {
            return Err(VocoderError::Data(format!(
                "feature shapes differ ({:?} vs {:?})",
                g.shape(*r),
                g.shape(*f)
            )));
        }
        let r = g.detach(*r);
        let d = g.sub(r, *f)?;
        let a = g.abs(d)?;
        terms.push(g.mean(a)?);
    }
    let n = terms.len();
    match sum_vars(g, terms)? {
        Some(s) => Ok(g.scale(s, 1.0 / n as f64)?),
        None => Err(VocoderError::Data("no features to match".into())),
    }
}

/// A weighted loss term.
#[derive(Debug, Clone, Copy)]
pub struct Term {
    pub name: &'static str,
    pub weight: f64,
    pub value: Var,
}

/// Weighted sum of named terms.
#[derive(Debug, Clone)]
pub struct Objective {
    pub total: Var,
    pub terms: Vec<Term>,
}

impl Objective {
    fn build<T: Real>(g: &mut Graph<T>, terms: Vec<Term>) -> Result<Self> {
        let mut weighted = Vec::with_capacity(terms.len());
        for t in &terms {
            weighted.push(g.scale(t.value, t.weight)?);
        }
        let total = match sum_vars(g, weighted)? {
            Some(v) => v,
            None => g.scalar(T::zero()),
        };
        Ok(Objective { total, terms })
    }

    pub fn total_value<T: Real>(&self, g: &Graph<T>) -> f64 {
        g.value(self.total)[0].as_f64()
    }

    /// Unweighted component values in term order.
    pub fn component_values<T: Real>(&self, g: &Graph<T>) -> Vec<(&'static str, f64)> {
        self.terms.iter().map(|t| (t.name, g.value(t.value)[0].as_f64())).collect()
    }
}

/// Which generator terms are active and how they are weighted.
#[derive(Debug, Clone)]
pub struct GeneratorLossConfig {
    pub weights: LossWeights,
    /// `None` disables the multi-resolution STFT term.
    pub stft: Option<StftLossConfig>,
    /// `None` disables the time-domain term.
    pub time: Option<TimeLossConfig>,
}

/// Generator objective: `λ1·adv_time + λ2·stft + λ3·adv_freq + λ4·time`
/// (+ feature matching when weighted). Adversarial terms are present only
/// for the discriminators passed in, which should be bound frozen.
pub fn generator_total_loss<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    x_hat: Var,
    time_disc: Option<(&TimeDiscriminator<T>, &Bound)>,
    freq_disc: Option<(&FreqDiscriminator<T>, &Bound)>,
    cfg: &GeneratorLossConfig,
) -> Result<Objective> {
    same_shape(g, "generator loss", x, x_hat)?;
    let w = &cfg.weights;
    let mut terms = Vec::new();
    let mut fm_real: Vec<Vec<Var>> = Vec::new();
    let mut fm_fake: Vec<Vec<Var>> = Vec::new();
    let want_fm = w.feature_matching > 0.0;
    let x_const = g.detach(x);
    if let Some((d, p)) = time_disc {
        let fake = d.forward(g, p, x_hat)?;
        let logits: Vec<Var> = fake.iter().map(|o| o.logits).collect();
        terms.push(Term {
            name: component::ADV_TIME,
            weight: w.lambda1,
            value: hinge_g_loss(g, &logits)?,
        });
        if want_fm {
            let real = d.forward(g, p, x_const)?;
            fm_real.extend(real.into_iter().map(|o| o.features));
            fm_fake.extend(fake.into_iter().map(|o| o.features));
        }
    }
    if let Some(stft) = &cfg.stft {
        terms.push(Term {
            name: component::STFT,
            weight: w.lambda2,
            value: multi_res_stft_loss(g, x_const, x_hat, stft)?,
        });
    }
    if let Some((d, p)) = freq_disc {
        let fake: DiscOutput = d.forward(g, p, x_hat)?;
        let m = g.mean(fake.logits)?;
        terms.push(Term {
            name: component::ADV_FREQ,
            weight: w.lambda3,
            value: g.neg(m)?,
        });
        if want_fm {
            let real = d.forward(g, p, x_const)?;
            fm_real.push(real.features);
            fm_fake.push(fake.features);
        }
    }
    if let Some(time) = &cfg.time {
        terms.push(Term {
            name: component::TIME,
            weight: w.lambda4,
            value: total_time_loss(g, x_const, x_hat, time)?,
        });
    }
    if want_fm && !fm_real.is_empty() {
        terms.push(Term {
            name: component::FEATURE_MATCHING,
            weight: w.feature_matching,
            value: feature_matching(g, &fm_real, &fm_fake)?,
        });
    }
    Objective::build(g, terms)
}

/// Hinge loss over every time scale plus the frequency logit. `x_hat` is
/// detached here regardless of how it was produced.
pub fn discriminator_total_loss<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    x_hat: Var,
    time_disc: (&TimeDiscriminator<T>, &Bound),
    freq_disc: Option<(&FreqDiscriminator<T>, &Bound)>,
) -> Result<Objective> {
    same_shape(g, "discriminator loss", x, x_hat)?;
    let fake_in = g.detach(x_hat);
    let mut terms = Vec::with_capacity(2);
    let (d, p) = time_disc;
    let real: Vec<Var> = d.forward(g, p, x)?.into_iter().map(|o| o.logits).collect();
    let fake: Vec<Var> = d.forward(g, p, fake_in)?.into_iter().map(|o| o.logits).collect();
    terms.push(Term {
        name: component::D_TIME,
        weight: 1.0,
        value: hinge_d_loss(g, &real, &fake)?,
    });
    if let Some((d, p)) = freq_disc {
        let real = d.forward(g, p, x)?.logits;
        let fake = d.forward(g, p, fake_in)?.logits;
        terms.push(Term {
            name: component::D_FREQ,
            weight: 1.0,
            value: hinge_d_loss(g, &[real], &[fake])?,
        });
    }
    Objective::build(g, terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts(g: &mut Graph<f64>, data: &[f64]) -> Var {
        g.constant([data.len()], data.to_vec()).unwrap()
    }

    fn val(g: &Graph<f64>, v: Var) -> f64 {
        g.value(v)[0]
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn spectral_convergence_examples() {
        let cfg = StftConfig::new(64, 16, 64);
        let x = noise(256, 1);
        let mut g = Graph::new();
        let vx = consts(&mut g, &x);
        let same = spectral_convergence(&mut g, vx, vx, &cfg).unwrap();
        assert_eq!(val(&g, same), 0.0);
        let zero = consts(&mut g, &[0.0; 256]);
        let one = spectral_convergence(&mut g, vx, zero, &cfg).unwrap();
        assert!((val(&g, one) - 1.0).abs() < 1e-12);
        let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let v2 = consts(&mut g, &doubled);
        let sc = spectral_convergence(&mut g, vx, v2, &cfg).unwrap();
        assert!((val(&g, sc) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_magnitude_examples() {
        let cfg = StftConfig::new(64, 16, 64);
        let x = noise(256, 2);
        let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let mut g = Graph::new();
        let vx = consts(&mut g, &x);
        let v2 = consts(&mut g, &doubled);
        let l = log_magnitude_loss(&mut g, vx, v2, &cfg).unwrap();
        assert!((val(&g, l) - 2f64.ln()).abs() < 1e-9, "{}", val(&g, l));
        let z = consts(&mut g, &[0.0; 256]);
        let silent = log_magnitude_loss(&mut g, z, z, &cfg).unwrap();
        assert_eq!(val(&g, silent), 0.0);
    }

    #[test]
    fn single_resolution_reduction() {
        let cfg = StftConfig::new(64, 16, 48);
        let multi = StftLossConfig {
            resolutions: vec![(64, 16, 48)],
        };
        let mut g = Graph::new();
        let x = consts(&mut g, &noise(300, 3));
        let y = consts(&mut g, &noise(300, 4));
        let (sc, mag) = stft_loss(&mut g, x, y, &cfg).unwrap();
        let m = multi_res_stft_loss(&mut g, x, y, &multi).unwrap();
        assert_eq!(val(&g, m), val(&g, sc) + val(&g, mag));
    }

    #[test]
    fn time_domain_examples() {
        let mut g = Graph::new();
        let ones = consts(&mut g, &[1.0; 4]);
        let zeros = consts(&mut g, &[0.0; 4]);
        let (e, t, p) = time_domain_losses(&mut g, ones, zeros, (1, 1)).unwrap();
        assert_eq!((val(&g, e), val(&g, t), val(&g, p)), (1.0, 1.0, 0.0));

        let alt = consts(&mut g, &[0.0, 1.0, 0.0, 1.0]);
        let (_, _, p) = time_domain_losses(&mut g, alt, zeros, (1, 1)).unwrap();
        assert_eq!(val(&g, p), 1.0);

        let neg = consts(&mut g, &[-1.0; 4]);
        let (e, t, _) = time_domain_losses(&mut g, ones, neg, (1, 1)).unwrap();
        assert_eq!((val(&g, e), val(&g, t)), (0.0, 2.0));
    }

    #[test]
    fn total_time_loss_needs_largest_frame() {
        let cfg = TimeLossConfig::default();
        let mut g = Graph::new();
        let a = consts(&mut g, &noise(959, 5));
        assert!(total_time_loss(&mut g, a, a, &cfg).is_err());
        let b = consts(&mut g, &noise(960, 5));
        let l = total_time_loss(&mut g, b, b, &cfg).unwrap();
        assert_eq!(val(&g, l), 0.0);
    }

    #[test]
    fn hinge_examples() {
        let mut g = Graph::new();
        let one = consts(&mut g, &[1.0; 3]);
        let minus = consts(&mut g, &[-1.0; 3]);
        let zero = consts(&mut g, &[0.0; 3]);
        let l = hinge_d_loss(&mut g, &[one], &[minus]).unwrap();
        assert_eq!(val(&g, l), 0.0);
        let l = hinge_d_loss(&mut g, &[zero], &[zero]).unwrap();
        assert_eq!(val(&g, l), 2.0);
        let m2 = consts(&mut g, &[-2.0]);
        let m1 = consts(&mut g, &[-1.0]);
        let l = hinge_d_loss(&mut g, &[m2], &[m1]).unwrap();
        assert_eq!(val(&g, l), 3.0);
        assert!(hinge_d_loss(&mut g, &[], &[]).is_err());

        let l = hinge_g_loss(&mut g, &[zero]).unwrap();
        assert_eq!(val(&g, l), 0.0);
        let five = consts(&mut g, &[5.0; 2]);
        let l = hinge_g_loss(&mut g, &[five]).unwrap();
        assert_eq!(val(&g, l), -5.0);
        let a = consts(&mut g, &[1.0, 1.0]);
        let b = consts(&mut g, &[2.0, 4.0]);
        let l = hinge_g_loss(&mut g, &[a, b]).unwrap();
        assert_eq!(val(&g, l), -4.0);
    }

    #[test]
    fn feature_matching_examples() {
        let mut g = Graph::new();
        let a = consts(&mut g, &[0.5, -1.0]);
        let b = consts(&mut g, &[1.5, 0.0]);
        let l = feature_matching(&mut g, &[vec![a]], &[vec![a]]).unwrap();
        assert_eq!(val(&g, l), 0.0);
        let l = feature_matching(&mut g, &[vec![a, a]], &[vec![b, b]]).unwrap();
        assert_eq!(val(&g, l), 1.0);
        let c = consts(&mut g, &[0.0; 3]);
        assert!(feature_matching(&mut g, &[vec![a]], &[vec![c]]).is_err());
    }

    #[test]
    fn empty_objective_is_zero() {
        let mut g = Graph::<f64>::new();
        let x = consts(&mut g, &noise(1000, 6));
        let cfg = GeneratorLossConfig {
            weights: LossWeights::default(),
            stft: None,
            time: None,
        };
        let obj = generator_total_loss(&mut g, x, x, None, None, &cfg).unwrap();
        assert!(obj.terms.is_empty());
        assert_eq!(obj.total_value(&g), 0.0);
    }
}
