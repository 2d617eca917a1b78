//! Teacher-forcing pretraining and REINFORCE fine-tuning with a greedy
//! baseline, beam trials, a per-question memory buffer and the curriculum
//! bonus.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Example;
use crate::eval::{mean_reward, run_tokens};
use crate::executor::ExecutorConfig;
use crate::kb::KnowledgeBase;
use crate::memory::{MemoryBuffer, DEFAULT_CAPACITY};
use crate::policy::{Optimizer, OptimizerKind, Policy, PolicyError, PolicyParams};
use crate::reward::{arf, crb_with_lambda, lambda_schedule, RewardConfig, Trial};

/// How the K trials of a question share the policy-gradient estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialWeighting {
    /// `1/K` per trial.
    #[default]
    Uniform,
    /// Each trial's probability renormalized over the beam, held constant.
    Probability,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub pretrain_lr: f64,
    pub pretrain_batch: usize,
    pub pretrain_epochs: usize,
    pub rl_lr: f64,
    pub rl_batch: usize,
    pub rl_epochs: usize,
    /// Beam trials per question.
    pub k: usize,
    /// Defaults to `k`.
    pub beam_width: Option<usize>,
    /// Maximum program length in actions, `EOQ` included.
    pub n_max: usize,
    pub seed: u64,
    pub pretrain_optimizer: OptimizerKind,
    pub rl_optimizer: OptimizerKind,
    pub clip_norm: Option<f64>,
    pub memory_capacity: usize,
    /// `false` gives plain policy gradient: no bonus and no memory.
    pub use_crb_memory: bool,
    pub trial_weighting: TrialWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pretrain_lr: 0.001,
            pretrain_batch: 32,
            pretrain_epochs: 30,
            rl_lr: 1e-4,
            rl_batch: 8,
            rl_epochs: 30,
            k: 5,
            beam_width: None,
            n_max: crate::dsl::DEFAULT_MAX_ACTIONS,
            seed: 0,
            pretrain_optimizer: OptimizerKind::Sgd,
            rl_optimizer: OptimizerKind::Sgd,
            clip_norm: None,
            memory_capacity: DEFAULT_CAPACITY,
            use_crb_memory: true,
            trial_weighting: TrialWeighting::Uniform,
        }
    }
}

impl TrainConfig {
    /// Settings that converge within minutes on a few hundred synthetic questions.
    pub fn desk() -> Self {
        Self {
            pretrain_lr: 0.01,
            pretrain_batch: 8,
            pretrain_epochs: 30,
            rl_lr: 0.1,
            rl_batch: 8,
            rl_epochs: 30,
            pretrain_optimizer: OptimizerKind::Adam,
            rl_optimizer: OptimizerKind::Sgd,
            clip_norm: Some(5.0),
            trial_weighting: TrialWeighting::Probability,
            ..Self::default()
        }
    }

    pub fn beam_width(&self) -> usize {
        self.beam_width.unwrap_or(self.k)
    }

    /// Token budget for decoding: four tokens per action.
    pub fn max_len(&self) -> usize {
        4 * self.n_max
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.pretrain_lr > 0.0 && self.rl_lr > 0.0) {
            return Err("learning rates must be positive".into());
        }
        let sizes = [
            ("pretrain_batch", self.pretrain_batch),
            ("rl_batch", self.rl_batch),
            ("k", self.k),
            ("beam_width", self.beam_width()),
            ("n_max", self.n_max),
            ("memory_capacity", self.memory_capacity),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.n_max < 2 {
            return Err("n_max must allow at least one action before EOQ".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("question {0} has no pseudo-gold program")]
    MissingPseudoGold(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Sums per-item gradients in input order, so results do not depend on thread timing.
fn reduce(policy: &Policy, parts: Vec<PolicyParams>) -> PolicyParams {
    let mut total = policy.params.zeros_like();
    for g in &parts {
        total.add_scaled(g, 1.0);
    }
    total
}

/// Teacher-forcing target: the first (shortest) pseudo-gold program.
fn target(ex: &Example) -> Result<Vec<String>, TrainError> {
    ex.pseudo_gold
        .first()
        .map(|p| p.token_strings())
        .ok_or_else(|| TrainError::MissingPseudoGold(ex.question_id.clone()))
}

/// Mean per-token cross-entropy of the pseudo-gold targets.
pub fn teacher_forcing_loss(policy: &Policy, data: &[Example]) -> Result<f64, TrainError> {
    let parts: Vec<(f64, usize)> = data
        .par_iter()
        .map(|ex| {
            let t = target(ex)?;
            let enc = policy.encode(&ex.tokens)?;
            Ok((-policy.log_prob(&enc, &t)?, t.len()))
        })
        .collect::<Result<_, TrainError>>()?;
    let (nll, n) = parts
        .iter()
        .fold((0.0, 0), |(a, b), (x, y)| (a + x, b + y));
    Ok(if n == 0 { 0.0 } else { nll / n as f64 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PretrainReport {
    pub initial_loss: f64,
    /// Teacher-forcing loss measured after each epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn pretrain(
    policy: &mut Policy,
    data: &[Example],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<PretrainReport, TrainError> {
    cfg.validate().map_err(TrainError::Config)?;
    let targets: Vec<Vec<String>> = data.iter().map(target).collect::<Result<_, _>>()?;
    let initial_loss = teacher_forcing_loss(policy, data)?;
    let mut opt = Optimizer::new(cfg.pretrain_optimizer, cfg.pretrain_lr, cfg.clip_norm);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.pretrain_epochs);
    for epoch in 0..cfg.pretrain_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.pretrain_batch) {
            let n_tokens: usize = batch.iter().map(|&i| targets[i].len()).sum();
            let weight = -1.0 / n_tokens as f64;
            let pol: &Policy = policy;
            let parts: Vec<PolicyParams> = batch
                .par_iter()
                .map(|&i| {
                    let enc = pol.encode(&data[i].tokens)?;
                    Ok(pol.gradients(&enc, &targets[i], weight)?)
                })
                .collect::<Result<_, TrainError>>()?;
            let grad = reduce(policy, parts);
            opt.step(&mut policy.params, &grad);
        }
        let loss = teacher_forcing_loss(policy, data)?;
        log::info!("pretrain epoch {epoch}: loss {loss:.4}");
        epoch_losses.push(loss);
        if let Some(dir) = checkpoint_dir {
            policy.save(&dir.join(format!("pretrain-epoch-{epoch:03}.json")))?;
        }
    }
    Ok(PretrainReport {
        initial_loss,
        epoch_losses,
    })
}

/// Per-trial weights `pi_k (R_k - R_greedy)` of `log p(t_k)` in the loss, with
/// `pi_k = 1/K` or the trial's share of the beam's probability mass.
pub fn advantage_weights(
    trial_rewards: &[f64],
    greedy_reward: f64,
    log_probs: &[f64],
    weighting: TrialWeighting,
) -> Vec<f64> {
    let k = trial_rewards.len().max(1) as f64;
    let share: Vec<f64> = match weighting {
        TrialWeighting::Uniform => vec![1.0 / k; trial_rewards.len()],
        TrialWeighting::Probability => {
            let m = log_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = log_probs.iter().map(|l| (l - m).exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|v| v / z).collect()
        }
    };
    trial_rewards
        .iter()
        .zip(&share)
        .map(|(r, pi)| pi * (r - greedy_reward))
        .collect()
}

/// Everything computed for one question in one RL step.
#[derive(Clone, Debug)]
pub struct QuestionStep {
    pub greedy: Trial,
    pub greedy_cumulative: f64,
    /// Trials with their adaptive reward filled in.
    pub trials: Vec<Trial>,
    pub cumulative: Vec<f64>,
    pub loss: f64,
    pub grad: PolicyParams,
}

pub struct RlEnv<'a> {
    pub kb: &'a KnowledgeBase,
    pub reward: &'a RewardConfig,
    pub exec: &'a ExecutorConfig,
}

/// Greedy baseline, beam trials, rewards and the gradient of `scale * L` for one question.
pub fn question_step(
    policy: &Policy,
    ex: &Example,
    memory: &[Trial],
    lambda: f64,
    env: &RlEnv<'_>,
    cfg: &TrainConfig,
    scale: f64,
) -> Result<QuestionStep, TrainError> {
    let enc = policy.encode(&ex.tokens)?;
    let max_len = cfg.max_len();
    let reward = |tokens: &[String]| {
        let out = run_tokens(tokens, &ex.mask_table, env.kb, env.exec);
        let a = arf(&out, &ex.gold, env.reward);
        let bonus = if cfg.use_crb_memory {
            crb_with_lambda(tokens, memory, lambda, env.reward)
        } else {
            0.0
        };
        (a, a + bonus)
    };

    let mut greedy = policy.greedy_decode(&enc, max_len);
    let (g_arf, g_cum) = reward(&greedy.tokens);
    greedy.adaptive_reward = g_arf;

    let mut trials = policy.beam_search(&enc, cfg.k, cfg.beam_width(), max_len);
    let mut cumulative = Vec::with_capacity(trials.len());
    for t in &mut trials {
        let (a, c) = reward(&t.tokens);
        t.adaptive_reward = a;
        cumulative.push(c);
    }

    let log_probs: Vec<f64> = trials.iter().map(|t| t.log_prob).collect();
    let weights = advantage_weights(&cumulative, g_cum, &log_probs, cfg.trial_weighting);
    let mut grad = policy.params.zeros_like();
    let mut loss = 0.0;
    for (t, w) in trials.iter().zip(&weights) {
        loss -= w * t.log_prob;
        if *w != 0.0 {
            // the optimizer minimizes, so ascend on L by descending on -L
            policy.accumulate_gradients(&enc, &t.tokens, -w * scale, &mut grad)?;
        }
    }
    Ok(QuestionStep {
        greedy,
        greedy_cumulative: g_cum,
        trials,
        cumulative,
        loss,
        grad,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lambda: f64,
    /// Mean adaptive reward of the greedy trials seen during the epoch.
    pub train_reward: f64,
    /// Mean adaptive reward of the top beam on the held-out questions after the epoch.
    pub heldout_reward: f64,
    pub loss: f64,
    pub memory_size: usize,
}

pub fn write_log_csv(path: &Path, logs: &[EpochLog]) -> Result<(), TrainError> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    writeln!(f, "epoch,lambda,train_reward,heldout_reward,loss,memory_size").map_err(io_err(path))?;
    for l in logs {
        writeln!(
            f,
            "{},{:.6},{:.6},{:.6},{:.6},{}",
            l.epoch, l.lambda, l.train_reward, l.heldout_reward, l.loss, l.memory_size
        )
        .map_err(io_err(path))?;
    }
    Ok(())
}

/// Fine-tunes `policy` on answers only. `memory` should start empty.
#[allow(clippy::too_many_arguments)]
pub fn train_rl(
    policy: &mut Policy,
    train: &[Example],
    heldout: &[Example],
    env: &RlEnv<'_>,
    cfg: &TrainConfig,
    memory: &mut MemoryBuffer,
    checkpoint_dir: Option<&Path>,
) -> Result<Vec<EpochLog>, TrainError> {
    cfg.validate().map_err(TrainError::Config)?;
    env.reward.validate().map_err(TrainError::Config)?;
    let mut opt = Optimizer::new(cfg.rl_optimizer, cfg.rl_lr, cfg.clip_norm);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut logs = Vec::with_capacity(cfg.rl_epochs);
    for epoch in 0..cfg.rl_epochs {
        let lambda = lambda_schedule(epoch as u32, env.reward);
        order.shuffle(&mut rng);
        let (mut reward_sum, mut loss_sum, mut seen) = (0.0, 0.0, 0usize);
        for batch in order.chunks(cfg.rl_batch) {
            let scale = 1.0 / batch.len() as f64;
            let pol: &Policy = policy;
            let mem: &MemoryBuffer = memory;
            // questions are distinct, so each reads only its own memory slot
            let steps: Vec<QuestionStep> = batch
                .par_iter()
                .map(|&i| {
                    let ex = &train[i];
                    question_step(pol, ex, mem.trials_for(&ex.question_id), lambda, env, cfg, scale)
                })
                .collect::<Result<_, _>>()?;
            let mut grad = policy.params.zeros_like();
            for (&i, s) in batch.iter().zip(&steps) {
                grad.add_scaled(&s.grad, 1.0);
                reward_sum += s.greedy.adaptive_reward;
                loss_sum += s.loss;
                seen += 1;
                if cfg.use_crb_memory {
                    for t in &s.trials {
                        memory.maybe_admit(&train[i].question_id, t.clone(), s.greedy.adaptive_reward);
                    }
                }
            }
            opt.step(&mut policy.params, &grad);
        }
        let heldout_reward = mean_reward(
            policy,
            heldout,
            env.kb,
            env.reward,
            env.exec,
            cfg.beam_width(),
            cfg.max_len(),
        );
        let log = EpochLog {
            epoch,
            lambda,
            train_reward: reward_sum / seen.max(1) as f64,
            heldout_reward,
            loss: loss_sum / seen.max(1) as f64,
            memory_size: memory.len(),
        };
        log::info!(
            "rl epoch {epoch}: lambda {:.3} train {:.4} heldout {:.4} loss {:.4}",
            log.lambda,
            log.train_reward,
            log.heldout_reward,
            log.loss
        );
        logs.push(log);
        if let Some(dir) = checkpoint_dir {
            policy.save(&dir.join(format!("rl-epoch-{epoch:03}.json")))?;
            let mpath = dir.join("memory.json");
            memory.save(&mpath).map_err(io_err(&mpath))?;
        }
    }
    Ok(logs)
}
