use crate::augment::{
    augmentation_batch, center_crop, overlay, random_conv, random_crop, random_shift, splice, AugmentKind,
};
use crate::config::HyperParams;
use crate::error::{Error, Result};
use crate::nets::layers::dims4;
use crate::nets::masker::AppliedMask;
use crate::nets::{
    apply_mask, apply_mask_backward, ema_update, Adam, AdamConfig, Checkpoint, MaskHook, NetConfig, NetDefs,
    Networks, ParamSet, ScalarAdam,
};
use crate::par::Exec;
use crate::rng::RngStream;
use crate::tensor::{Scalar, Tensor};
use crate::types::{Action, Observation};

use super::batch::{obs_tensor, Batch};
use super::{Algorithm, AlgorithmSpec, Phase};

/// Learned entropy temperature `α = exp(log α)`.
#[derive(Debug, Clone)]
pub struct Temperature {
    pub log_alpha: f64,
    /// `−d`.
    pub target_entropy: f64,
    opt: ScalarAdam,
}

impl Temperature {
    pub fn new(init: f64, action_dim: usize, opt: AdamConfig) -> Self {
        Temperature {
            log_alpha: init.ln(),
            target_entropy: -(action_dim as f64),
            opt: ScalarAdam::new(opt),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// `L_α = mean(−α·(log π + H_tgt))` and its derivative in `log α`.
    pub fn loss_and_grad<T: Scalar>(&self, log_prob: &[T]) -> (f64, f64) {
        let alpha = self.alpha();
        let m = log_prob.iter().map(|&l| l.to_f64() + self.target_entropy).sum::<f64>() / log_prob.len() as f64;
        (-alpha * m, -alpha * m)
    }

    pub fn step(&mut self, grad: f64) {
        self.opt.step(&mut self.log_alpha, grad);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateCounters {
    pub critic: u64,
    pub actor: u64,
    pub masker: u64,
    pub target: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub loss_q: f64,
    pub loss_pi: Option<f64>,
    pub loss_alpha: Option<f64>,
    pub alpha: f64,
}

/// Critic loss and gradients, not yet applied.
#[derive(Debug, Clone)]
pub struct CriticGrads<T> {
    pub loss: f64,
    pub critic: ParamSet<T>,
    pub encoder: ParamSet<T>,
    pub masker: Option<ParamSet<T>>,
    pub q1: Vec<T>,
    pub q2: Vec<T>,
    /// Targets, duplicated for the augmented half when doubling.
    pub y: Vec<T>,
}

/// Actor loss and gradients. Features are detached at the encoder output,
/// so `encoder` and `masker` are returned exactly as they were allocated.
#[derive(Debug, Clone)]
pub struct ActorGrads<T> {
    pub loss: f64,
    pub actor: ParamSet<T>,
    pub encoder: ParamSet<T>,
    pub masker: Option<ParamSet<T>>,
    pub log_prob: Vec<T>,
}

/// `Σ_j w_j Σ_i (Q_i,j − y_j)^2` and `dL/dQ_i`.
pub fn critic_loss<T: Scalar>(q1: &[T], q2: &[T], y: &[T], weights: &[f64]) -> (f64, Vec<T>, Vec<T>) {
    let mut loss = 0.0;
    let mut d1 = Vec::with_capacity(y.len());
    let mut d2 = Vec::with_capacity(y.len());
    for j in 0..y.len() {
        let (e1, e2) = ((q1[j] - y[j]).to_f64(), (q2[j] - y[j]).to_f64());
        loss += weights[j] * (e1 * e1 + e2 * e2);
        d1.push(T::from_f64(2.0 * weights[j] * e1));
        d2.push(T::from_f64(2.0 * weights[j] * e2));
    }
    (loss, d1, d2)
}

#[derive(Debug, Clone)]
pub struct Agent<T> {
    pub spec: AlgorithmSpec,
    pub hp: HyperParams,
    pub defs: NetDefs,
    pub nets: Networks<T>,
    pub temperature: Temperature,
    /// Overrides the learned mask; [`MaskHook::Learned`] outside tests.
    pub mask_hook: MaskHook,
    pub counters: UpdateCounters,
    opt_critic: Adam<T>,
    opt_encoder: Adam<T>,
    opt_masker: Option<Adam<T>>,
    opt_actor: Adam<T>,
}

impl<T: Scalar> Agent<T> {
    pub fn new(spec: AlgorithmSpec, hp: HyperParams, net: NetConfig, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        hp.validate()?;
        if net.use_masker != spec.use_masker {
            return Err(Error::config("network masker flag disagrees with the algorithm"));
        }
        if let AugmentKind::Crop { height, width } = spec.augment {
            if (height, width) != (net.height, net.width) {
                return Err(Error::config("crop target must equal the network input size"));
            }
        }
        let defs = NetDefs::new(&net)?;
        let nets = Networks::init(&defs, rng);
        Ok(Self::from_parts(spec, hp, defs, nets))
    }

    fn from_parts(spec: AlgorithmSpec, hp: HyperParams, defs: NetDefs, nets: Networks<T>) -> Self {
        let adam = |lr: f64| AdamConfig {
            lr,
            betas: hp.adam_betas,
            eps: hp.adam_eps,
        };
        let temperature = Temperature::new(
            hp.init_temperature,
            defs.config.action_dim,
            AdamConfig {
                lr: hp.alpha_lr,
                betas: hp.alpha_betas,
                eps: hp.adam_eps,
            },
        );
        Agent {
            opt_critic: Adam::new(adam(hp.critic_lr), &nets.critic),
            opt_encoder: Adam::new(adam(hp.critic_lr), &nets.encoder),
            opt_masker: nets.masker.as_ref().map(|m| Adam::new(adam(hp.masker_lr), m)),
            opt_actor: Adam::new(adam(hp.actor_lr), &nets.actor),
            spec,
            hp,
            defs,
            nets,
            temperature,
            mask_hook: MaskHook::Learned,
            counters: UpdateCounters::default(),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.spec.algorithm
    }

    pub fn set_exec(&mut self, exec: Exec) {
        self.defs.set_exec(exec);
    }

    pub fn exec(&self) -> Exec {
        self.defs.encoder.exec
    }

    /// Network input `(H, W)`.
    pub fn input_hw(&self) -> (usize, usize) {
        (self.defs.config.height, self.defs.config.width)
    }

    fn check_obs(&self, obs: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = dims4(obs);
        let (nh, nw) = self.input_hw();
        let pad = self.spec.render_pad();
        if c != self.defs.config.in_channels || h != nh + pad || w != nw + pad {
            return Err(Error::Shape {
                expected: vec![self.defs.config.in_channels, nh + pad, nw + pad],
                actual: vec![c, h, w],
            });
        }
        Ok(())
    }

    fn delta(&self, obs: &Tensor<T>, rng: &mut RngStream) -> Result<Tensor<T>> {
        let (b, _, h, w) = dims4(obs);
        match self.spec.augment {
            AugmentKind::Overlay { alpha } => overlay(obs, &augmentation_batch(rng, b, h, w), alpha),
            AugmentKind::Conv => random_conv(self.exec(), obs, rng),
            AugmentKind::Splice { hsv_lo, hsv_hi } => splice(obs, &augmentation_batch(rng, b, h, w), hsv_lo, hsv_hi),
            other => Err(Error::config(format!("{} cannot be a doubling augmentation", other.name()))),
        }
    }

    /// Float input for `phase` before masking.
    pub fn augment(&self, obs: &Tensor<T>, phase: Phase, rng: &mut RngStream) -> Result<Tensor<T>> {
        self.check_obs(obs)?;
        let (h, w) = self.input_hw();
        let base = match (phase, self.spec.augment) {
            (Phase::Act | Phase::Target, AugmentKind::Crop { .. }) => center_crop(obs, h, w)?,
            (Phase::Critic | Phase::ActorUpdate, AugmentKind::Crop { .. }) => random_crop(obs, h, w, rng)?,
            (Phase::Critic | Phase::ActorUpdate, AugmentKind::Shift { radius }) => {
                random_shift(self.exec(), obs, radius, rng)?
            }
            _ => obs.clone(),
        };
        if phase == Phase::Critic && self.spec.svea_doubling {
            let aug = self.delta(&base, rng)?;
            return Tensor::concat_rows(&[&base, &aug]);
        }
        Ok(base)
    }

    fn mask(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Option<AppliedMask<T>>)> {
        match &self.nets.masker {
            Some(m) => {
                let (y, applied) = apply_mask(&self.defs.masker, m, x, self.mask_hook)?;
                Ok((y, Some(applied)))
            }
            None => Ok((x.clone(), None)),
        }
    }

    /// Network-ready input: augmentation followed by masking.
    pub fn preprocess(&self, obs: &Tensor<T>, phase: Phase, rng: &mut RngStream) -> Result<Tensor<T>> {
        let x = self.augment(obs, phase, rng)?;
        Ok(self.mask(&x)?.0)
    }

    /// Masks for a batch of network inputs, `(kB, 1, H, W)` frame-major.
    pub fn masks(&self, x: &Tensor<T>) -> Result<Option<Tensor<T>>> {
        Ok(self.mask(x)?.1.map(|a| a.masks))
    }

    /// `y = r + bootstrap·γ·(min Q_tgt(s′, a′) − α·log π(a′|s′))`.
    pub fn critic_target(&self, batch: &Batch<T>, rng: &mut RngStream) -> Result<Vec<T>> {
        let n = batch.len();
        let noise = self.defs.actor.sample_noise::<T>(n, rng);
        let next = self.preprocess(&batch.next_obs, Phase::Target, rng)?;
        let (feat, _) = self.defs.encoder.forward(&self.nets.encoder, &next);
        let pol = self.defs.actor.forward(&self.nets.actor, &feat, noise);
        let (feat_t, _) = self.defs.encoder.forward(&self.nets.encoder_target, &next);
        let q = self.defs.critic.forward(&self.nets.critic_target, &feat_t, &pol.action);
        let min_q = q.min_q();
        let alpha = T::from_f64(self.temperature.alpha());
        let gamma = T::from_f64(self.hp.gamma);
        Ok((0..n)
            .map(|j| {
                if !batch.bootstrap[j] || self.hp.gamma == 0.0 {
                    batch.reward[j]
                } else {
                    batch.reward[j] + gamma * (min_q[j] - alpha * pol.log_prob[j])
                }
            })
            .collect())
    }

    /// Critic loss over the (possibly doubled) batch and gradients for the
    /// critic, encoder and Masker.
    pub fn critic_grads(&self, batch: &Batch<T>, rng: &mut RngStream) -> Result<CriticGrads<T>> {
        let y_clean = self.critic_target(batch, rng)?;
        self.critic_grads_with_target(batch, y_clean, rng)
    }

    /// [`Agent::critic_grads`] against precomputed clean-half targets, which
    /// are treated as constants.
    pub fn critic_grads_with_target(&self, batch: &Batch<T>, y_clean: Vec<T>, rng: &mut RngStream) -> Result<CriticGrads<T>> {
        if y_clean.len() != batch.len() {
            return Err(Error::Shape {
                expected: vec![batch.len()],
                actual: vec![y_clean.len()],
            });
        }
        let x = self.augment(&batch.obs, Phase::Critic, rng)?;
        let (masked, applied) = self.mask(&x)?;
        let n = batch.len();
        let rows = x.dim(0);
        let (y, action, weights) = if rows == 2 * n {
            let mut y = y_clean.clone();
            y.extend_from_slice(&y_clean);
            let action = Tensor::concat_rows(&[&batch.action, &batch.action])?;
            let mut w = vec![self.hp.svea_alpha / n as f64; n];
            w.extend(std::iter::repeat_n(self.hp.svea_beta / n as f64, n));
            (y, action, w)
        } else {
            (y_clean, batch.action.clone(), vec![1.0 / n as f64; n])
        };
        let (feat, enc_cache) = self.defs.encoder.forward(&self.nets.encoder, &masked);
        let q = self.defs.critic.forward(&self.nets.critic, &feat, &action);
        let (loss, d1, d2) = critic_loss(&q.q1, &q.q2, &y, &weights);

        let mut g_critic = self.nets.critic.zeros_like();
        let gi = self.defs.critic.backward(&self.nets.critic, &q, &d1, &d2, Some(&mut g_critic));
        let mut g_encoder = self.nets.encoder.zeros_like();
        let learned = self.mask_hook == MaskHook::Learned && applied.is_some();
        let dmasked = self
            .defs
            .encoder
            .backward(&self.nets.encoder, &enc_cache, &gi.features, &mut g_encoder, learned);
        let mut g_masker = self.nets.masker.as_ref().map(ParamSet::zeros_like);
        if let (Some(dm), Some(applied), Some(gm), Some(m)) =
            (dmasked, applied.as_ref(), g_masker.as_mut(), self.nets.masker.as_ref())
        {
            apply_mask_backward(&self.defs.masker, m, applied, &dm, gm);
        }
        Ok(CriticGrads {
            loss,
            critic: g_critic,
            encoder: g_encoder,
            masker: g_masker,
            q1: q.q1,
            q2: q.q2,
            y,
        })
    }

    /// `L_π = mean(α·log π(ã|s) − min(Q1, Q2)(s, ã))` with the encoder output
    /// detached.
    pub fn actor_grads(&self, batch: &Batch<T>, rng: &mut RngStream) -> Result<ActorGrads<T>> {
        let n = batch.len();
        let noise = self.defs.actor.sample_noise::<T>(n, rng);
        let x = self.preprocess(&batch.obs, Phase::ActorUpdate, rng)?;
        let (feat, _) = self.defs.encoder.forward(&self.nets.encoder, &x);
        let pol = self.defs.actor.forward(&self.nets.actor, &feat, noise);
        let q = self.defs.critic.forward(&self.nets.critic, &feat, &pol.action);
        let alpha = self.temperature.alpha();
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut dq1 = vec![T::zero(); n];
        let mut dq2 = vec![T::zero(); n];
        for j in 0..n {
            let (q1, q2) = (q.q1[j], q.q2[j]);
            loss += (alpha * pol.log_prob[j].to_f64() - q1.min(q2).to_f64()) * inv_n;
            if q1 <= q2 {
                dq1[j] = T::from_f64(-inv_n);
            } else {
                dq2[j] = T::from_f64(-inv_n);
            }
        }
        // The critic only routes dQ/da; its parameters get no gradient.
        let gi = self.defs.critic.backward(&self.nets.critic, &q, &dq1, &dq2, None);
        let d_log_prob = vec![T::from_f64(alpha * inv_n); n];
        let mut g_actor = self.nets.actor.zeros_like();
        // The feature gradient is dropped here: that is the detach.
        let _ = self
            .defs
            .actor
            .backward(&self.nets.actor, &pol, &gi.action, &d_log_prob, &mut g_actor);
        Ok(ActorGrads {
            loss,
            actor: g_actor,
            encoder: self.nets.encoder.zeros_like(),
            masker: self.nets.masker.as_ref().map(ParamSet::zeros_like),
            log_prob: pol.log_prob,
        })
    }

    pub fn update_critic(&mut self, batch: &Batch<T>, step: usize, rng: &mut RngStream) -> Result<f64> {
        let g = self.critic_grads(batch, rng)?;
        self.opt_critic.step(&mut self.nets.critic, &g.critic);
        self.opt_encoder.step(&mut self.nets.encoder, &g.encoder);
        if step.is_multiple_of(self.hp.masker_update_period) {
            if let (Some(m), Some(gm), Some(opt)) = (self.nets.masker.as_mut(), g.masker.as_ref(), self.opt_masker.as_mut()) {
                if self.mask_hook == MaskHook::Learned {
                    opt.step(m, gm);
                    self.counters.masker += 1;
                }
            }
        }
        self.counters.critic += 1;
        Ok(g.loss)
    }

    /// Actor step followed by the temperature step on the same samples.
    pub fn update_actor_and_alpha(&mut self, batch: &Batch<T>, rng: &mut RngStream) -> Result<(f64, f64)> {
        let g = self.actor_grads(batch, rng)?;
        self.opt_actor.step(&mut self.nets.actor, &g.actor);
        let (loss_alpha, grad) = self.temperature.loss_and_grad(&g.log_prob);
        self.temperature.step(grad);
        self.counters.actor += 1;
        Ok((g.loss, loss_alpha))
    }

    pub fn update_targets(&mut self) -> Result<()> {
        ema_update(&self.nets.critic, &mut self.nets.critic_target, self.hp.tau)?;
        ema_update(&self.nets.encoder, &mut self.nets.encoder_target, self.hp.tau_enc)?;
        self.counters.target += 1;
        Ok(())
    }

    /// One scheduled update at environment step `step` (1-indexed): critic
    /// always, actor and temperature every `k_a` steps, targets every `k_tar`.
    pub fn update(&mut self, batch: &Batch<T>, step: usize, rng: &mut RngStream) -> Result<UpdateStats> {
        let loss_q = self.update_critic(batch, step, rng)?;
        let (mut loss_pi, mut loss_alpha) = (None, None);
        if step.is_multiple_of(self.hp.actor_update_period) {
            let (lp, la) = self.update_actor_and_alpha(batch, rng)?;
            loss_pi = Some(lp);
            loss_alpha = Some(la);
        }
        if step.is_multiple_of(self.hp.target_update_period) {
            self.update_targets()?;
        }
        Ok(UpdateStats {
            loss_q,
            loss_pi,
            loss_alpha,
            alpha: self.temperature.alpha(),
        })
    }

    /// Policy action for one observation: `tanh(μ)` when deterministic,
    /// otherwise a sample using noise from `rng`.
    pub fn act(&self, obs: &Observation, deterministic: bool, rng: &mut RngStream) -> Result<Action> {
        let x = obs_tensor::<T>(&[obs])?;
        let d = self.defs.config.action_dim;
        let noise = if deterministic {
            Tensor::zeros(&[1, d])
        } else {
            self.defs.actor.sample_noise(1, rng)
        };
        let input = self.preprocess(&x, Phase::Act, rng)?;
        let (feat, _) = self.defs.encoder.forward(&self.nets.encoder, &input);
        let pol = self.defs.actor.forward(&self.nets.actor, &feat, noise);
        Ok(Action::clamped(pol.action.data().iter().map(|&v| v.to_f64() as f32).collect()))
    }

    /// `min(Q1, Q2)` of the online critic on network-ready inputs.
    pub fn min_q(&self, input: &Tensor<T>, action: &Tensor<T>) -> Vec<T> {
        let (feat, _) = self.defs.encoder.forward(&self.nets.encoder, input);
        self.defs.critic.forward(&self.nets.critic, &feat, action).min_q()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.defs.config;
        let mut ck = Checkpoint::new();
        ck.push_meta("algorithm", self.spec.algorithm);
        ck.push_meta("log_alpha", format!("{:?}", self.temperature.log_alpha));
        let fields = [
            ("nets.in_channels", c.in_channels),
            ("nets.height", c.height),
            ("nets.width", c.width),
            ("nets.action_dim", c.action_dim),
            ("nets.encoder_layers", c.encoder_layers),
            ("nets.encoder_channels", c.encoder_channels),
            ("nets.projection_dim", c.projection_dim),
            ("nets.hidden_dim", c.hidden_dim),
            ("nets.masker_channels", c.masker_channels),
        ];
        for (k, v) in fields {
            ck.push_meta(k, v);
        }
        self.nets.to_checkpoint(&mut ck);
        ck
    }

    /// Rebuilds an agent for acting and evaluation. Optimiser state is not
    /// stored, so training resumes with fresh moments.
    pub fn from_checkpoint(ck: &Checkpoint, hp: HyperParams) -> Result<Self> {
        let get = |k: &str| -> Result<&str> {
            ck.meta(k)
                .ok_or_else(|| Error::Checkpoint(format!("missing metadata '{k}'")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("metadata '{k}' is not an integer")))
        };
        let algorithm: Algorithm = get("algorithm")?
            .parse()
            .map_err(|e: Error| Error::Checkpoint(e.to_string()))?;
        let net = NetConfig {
            in_channels: num("nets.in_channels")?,
            height: num("nets.height")?,
            width: num("nets.width")?,
            action_dim: num("nets.action_dim")?,
            encoder_layers: num("nets.encoder_layers")?,
            encoder_channels: num("nets.encoder_channels")?,
            projection_dim: num("nets.projection_dim")?,
            hidden_dim: num("nets.hidden_dim")?,
            masker_channels: num("nets.masker_channels")?,
            use_masker: ck.has_group("masker"),
        };
        let spec = AlgorithmSpec::new(algorithm, net.height, net.width);
        if spec.use_masker != net.use_masker {
            return Err(Error::Checkpoint(format!(
                "{algorithm} checkpoint {} a masker",
                if net.use_masker { "unexpectedly has" } else { "lacks" }
            )));
        }
        let defs = NetDefs::new(&net).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let nets = Networks::from_checkpoint(&defs, ck)?;
        let mut agent = Self::from_parts(spec, hp, defs, nets);
        agent.temperature.log_alpha = get("log_alpha")?
            .parse()
            .map_err(|_| Error::Checkpoint("log_alpha is not a number".into()))?;
        Ok(agent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config(use_masker: bool) -> NetConfig {
        NetConfig {
            in_channels: 6,
            height: 16,
            width: 16,
            action_dim: 2,
            encoder_layers: 2,
            encoder_channels: 4,
            projection_dim: 8,
            hidden_dim: 16,
            masker_channels: 4,
            use_masker,
        }
    }

    fn tiny_agent(algo: Algorithm, seed: u64) -> Agent<f64> {
        let spec = AlgorithmSpec::new(algo, 16, 16);
        let hp = HyperParams {
            frame_stack: 2,
            batch_size: 4,
            ..HyperParams::default()
        };
        Agent::new(spec, hp, tiny_config(spec.use_masker), &mut RngStream::new(seed)).unwrap()
    }

    fn batch(agent: &Agent<f64>, n: usize, rng: &mut RngStream) -> Batch<f64> {
        let pad = agent.spec.render_pad();
        let shape = [n, 6, 16 + pad, 16 + pad];
        let len: usize = shape.iter().product();
        let mut t = || Tensor::from_vec(&shape, (0..len).map(|_| rng.uniform()).collect()).unwrap();
        let (obs, next_obs) = (t(), t());
        Batch {
            obs,
            next_obs,
            action: Tensor::from_vec(&[n, 2], (0..2 * n).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap(),
            reward: (0..n).map(|i| i as f64 * 0.5).collect(),
            bootstrap: vec![true; n],
        }
    }

    #[test]
    fn sac_preprocess_is_identity() {
        let a = tiny_agent(Algorithm::Sac, 0);
        let mut rng = RngStream::new(1);
        let b = batch(&a, 3, &mut rng);
        for phase in [Phase::Act, Phase::Target, Phase::Critic, Phase::ActorUpdate] {
            assert_eq!(a.preprocess(&b.obs, phase, &mut rng).unwrap(), b.obs);
        }
    }

    #[test]
    fn svea_critic_phase_doubles_and_actor_phase_is_clean() {
        let a = tiny_agent(Algorithm::Svea, 0);
        let mut rng = RngStream::new(1);
        let b = batch(&a, 3, &mut rng);
        let c = a.preprocess(&b.obs, Phase::Critic, &mut rng).unwrap();
        assert_eq!(c.dim(0), 6);
        assert_eq!(c.slice_rows(0, 3), b.obs);
        assert_ne!(c.slice_rows(3, 6), b.obs);
        assert_eq!(a.preprocess(&b.obs, Phase::ActorUpdate, &mut rng).unwrap(), b.obs);
    }

    #[test]
    fn rad_crops_and_drq_shifts() {
        let rad = tiny_agent(Algorithm::Rad, 0);
        let mut rng = RngStream::new(2);
        let b = batch(&rad, 2, &mut rng);
        let act = rad.preprocess(&b.obs, Phase::Act, &mut rng).unwrap();
        assert_eq!(act, center_crop(&b.obs, 16, 16).unwrap());
        assert_eq!(rad.preprocess(&b.obs, Phase::Critic, &mut rng).unwrap().shape(), &[2, 6, 16, 16]);
        let drq = tiny_agent(Algorithm::Drq, 0);
        let b = batch(&drq, 2, &mut rng);
        assert_eq!(drq.preprocess(&b.obs, Phase::Act, &mut rng).unwrap(), b.obs);
        assert_ne!(drq.preprocess(&b.obs, Phase::Critic, &mut rng).unwrap(), b.obs);
    }

    #[test]
    fn madi_ones_mask_matches_sac_path() {
        let mut madi = tiny_agent(Algorithm::Madi, 0);
        madi.mask_hook = MaskHook::ONES;
        let mut rng = RngStream::new(3);
        let b = batch(&madi, 2, &mut rng);
        assert_eq!(madi.preprocess(&b.obs, Phase::Act, &mut rng).unwrap(), b.obs);
        madi.mask_hook = MaskHook::Learned;
        assert_ne!(madi.preprocess(&b.obs, Phase::Act, &mut rng).unwrap(), b.obs);
    }

    #[test]
    fn target_without_bootstrap_or_discount_is_reward() {
        let mut a = tiny_agent(Algorithm::Sac, 0);
        let mut rng = RngStream::new(4);
        let mut b = batch(&a, 3, &mut rng);
        b.bootstrap = vec![false; 3];
        assert_eq!(a.critic_target(&b, &mut rng).unwrap(), b.reward);
        b.bootstrap = vec![true; 3];
        a.hp.gamma = 0.0;
        assert_eq!(a.critic_target(&b, &mut rng).unwrap(), b.reward);
    }

    #[test]
    fn critic_loss_zero_when_q_equals_y() {
        let y = [1.0, -2.0, 0.5];
        let (l, d1, d2) = critic_loss(&y, &y, &y, &[1.0 / 3.0; 3]);
        assert_eq!(l, 0.0);
        assert!(d1.iter().chain(&d2).all(|&d| d == 0.0));
    }

    #[test]
    fn temperature_signs() {
        let t = Temperature::new(0.1, 2, AdamConfig { lr: 1e-4, betas: (0.5, 0.999), eps: 1e-8 });
        assert!((t.alpha() - 0.1).abs() < 1e-15);
        assert_eq!(t.loss_and_grad(&[2.0f64, 2.0]).1, 0.0);
        // Entropy below target: log π > −H_tgt, so α must grow.
        let (_, g) = t.loss_and_grad(&[3.0f64, 2.5]);
        assert!(g < 0.0);
        let mut t2 = t.clone();
        t2.step(g);
        assert!(t2.alpha() > t.alpha());
    }

    #[test]
    fn schedule_counts() {
        let mut a = tiny_agent(Algorithm::Sac, 0);
        let mut rng = RngStream::new(5);
        let b = batch(&a, 2, &mut rng);
        for step in 1001..=1010 {
            a.update(&b, step, &mut rng).unwrap();
        }
        assert_eq!(a.counters.critic, 10);
        assert_eq!(a.counters.actor, 5);
        assert_eq!(a.counters.target, 5);
    }

    #[test]
    fn checkpoint_round_trip() {
        let a = tiny_agent(Algorithm::Madi, 7).nets.cast::<f32>();
        let mut agent = Agent::<f32>::new(
            AlgorithmSpec::new(Algorithm::Madi, 16, 16),
            HyperParams { frame_stack: 2, ..HyperParams::default() },
            tiny_config(true),
            &mut RngStream::new(7),
        )
        .unwrap();
        assert_eq!(agent.nets, a);
        agent.temperature.log_alpha = -1.25;
        let ck = Checkpoint::from_bytes(&agent.to_checkpoint().to_bytes().unwrap()).unwrap();
        let back = Agent::<f32>::from_checkpoint(&ck, HyperParams::default()).unwrap();
        assert_eq!(back.nets, agent.nets);
        assert_eq!(back.algorithm(), Algorithm::Madi);
        assert_eq!(back.temperature.log_alpha, -1.25);
    }
}
