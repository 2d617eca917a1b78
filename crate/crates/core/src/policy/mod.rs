//! Sequence policy: bidirectional LSTM encoder and an attention LSTM decoder
//! mixing a generate mode (over the operator vocabulary) with a copy mode
//! (over input positions).
//!
//! Per decoding step `t`, with encoder memory `M = (e_1..e_T)`:
//!
//! ```text
//! c_t      = sum_i softmax_i(q_{t-1}^T W_att e_i) e_i               attention context
//! r_t      = sum_{tau: x_tau = a_{t-1}} rho_tau e_tau               selective read
//! rho      = softmax over matching positions of psi_c at step t-1
//! q_t      = LSTM(q_{t-1}, [phi_D(a_{t-1}); r_t; c_t])
//! psi_g(v) = v^T W_o q_t
//! psi_c(j) = tanh(e_j^T W_c) q_t
//! p(a)     = (sum of exp(score) over the slots that emit a) / Z
//! ```
//!
//! Token embeddings are fixed random vectors; everything in [`PolicyParams`]
//! is trained. Gradients are computed by an explicit backward pass.

mod lstm;
mod params;

use std::collections::HashMap;
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::Operator;
use crate::reward::Trial;

pub use lstm::LstmParams;
pub use params::{Optimizer, OptimizerKind, PolicyParams};

use lstm::{outer_add, LstmCache};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const UNK: &str = "<unk>";

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("question has no tokens")]
    EmptyQuestion,
    #[error("token `{0}` is neither an operator nor an input token")]
    InfeasibleToken(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub d_e: usize,
    pub d_q: usize,
    /// Parameters are drawn uniformly from `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Fixed embeddings are drawn uniformly from `[-embed_scale, embed_scale]`.
    pub embed_scale: f64,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            d_e: 32,
            d_q: 32,
            init_scale: 0.08,
            embed_scale: 0.5,
            seed: 0,
        }
    }
}

/// Names of the generate-mode vocabulary: the operators.
pub fn output_vocab() -> Vec<&'static str> {
    Operator::ALL.iter().map(|o| o.name()).collect()
}

fn n_out() -> usize {
    Operator::ALL.len()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Policy {
    version: u32,
    config: PolicyConfig,
    /// Index 0 is the shared unknown-word slot.
    input_vocab: Vec<String>,
    #[serde(skip)]
    input_index: HashMap<String, usize>,
    embed_in: Array2<f64>,
    /// Row 0 is the start symbol, row `k + 1` the k-th operator.
    embed_out: Array2<f64>,
    pub params: PolicyParams,
}

/// Encoder output plus everything the decoder and backward pass need.
#[derive(Clone, Debug)]
pub struct EncodedQuestion {
    tokens: Vec<String>,
    memory: Array2<f64>,
    /// `tanh(M W_c)`, one copy key per position.
    copy_keys: Array2<f64>,
    fwd: Vec<LstmCache>,
    bwd: Vec<LstmCache>,
    /// Output vocabulary followed by input-only tokens.
    candidates: Vec<String>,
    candidate_index: HashMap<String, usize>,
    /// Score slots emitting each candidate: generate slot `k < n_out`, copy slot `n_out + j`.
    slots: Vec<Vec<usize>>,
    /// Input positions holding each candidate.
    positions: Vec<Vec<usize>>,
}

impl EncodedQuestion {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn memory(&self) -> &Array2<f64> {
        &self.memory
    }

    /// The decoder vocabulary: operators plus the unique input tokens.
    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    pub fn candidate(&self, token: &str) -> Option<usize> {
        self.candidate_index.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn n_slots(&self) -> usize {
        n_out() + self.len()
    }
}

#[derive(Clone, Debug)]
pub struct DecodeState {
    q: Array1<f64>,
    cell: Array1<f64>,
    /// Candidate index of the previous token; `None` before the first step.
    prev: Option<usize>,
    prev_copy_scores: Option<Array1<f64>>,
    /// 1-based index of the step this state will produce.
    pub t: usize,
}

impl DecodeState {
    pub fn hidden(&self) -> &Array1<f64> {
        &self.q
    }
}

/// Everything computed in one decoder step.
#[derive(Clone, Debug)]
pub struct StepCache {
    q_prev: Array1<f64>,
    att_query: Array1<f64>,
    alpha: Array1<f64>,
    read: Option<(Vec<usize>, Array1<f64>)>,
    cell: LstmCache,
    wq: Array1<f64>,
    copy_scores: Array1<f64>,
    /// Softmax over all score slots.
    probs: Array1<f64>,
}

impl StepCache {
    /// Location weights of the selective read, indexed by input position.
    pub fn read_weights(&self, t_len: usize) -> Array1<f64> {
        let mut w = Array1::zeros(t_len);
        if let Some((pos, rho)) = &self.read {
            for (&p, &r) in pos.iter().zip(rho) {
                w[p] = r;
            }
        }
        w
    }

    pub fn slot_probs(&self) -> &Array1<f64> {
        &self.probs
    }
}

fn softmax(x: &Array1<f64>) -> Array1<f64> {
    let m = x.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = x.mapv(|v| (v - m).exp());
    let z = e.sum();
    e / z
}

impl Policy {
    /// Builds a policy whose input vocabulary covers `corpus_tokens`.
    pub fn new<'a>(config: PolicyConfig, corpus_tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = vec![UNK.to_owned()];
        let mut index = HashMap::new();
        index.insert(UNK.to_owned(), 0);
        for tok in corpus_tokens {
            if !index.contains_key(tok) {
                index.insert(tok.to_owned(), vocab.len());
                vocab.push(tok.to_owned());
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let es = config.embed_scale;
        let embed_in =
            Array2::from_shape_fn((vocab.len(), config.d_e), |_| rng.gen_range(-es..=es));
        let embed_out =
            Array2::from_shape_fn((n_out() + 1, config.d_e), |_| rng.gen_range(-es..=es));
        let params =
            PolicyParams::init(config.d_e, config.d_q, n_out(), config.init_scale, &mut rng);
        Self {
            version: CHECKPOINT_VERSION,
            config,
            input_vocab: vocab,
            input_index: index,
            embed_in,
            embed_out,
            params,
        }
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn input_vocab(&self) -> &[String] {
        &self.input_vocab
    }

    fn input_embedding(&self, token: &str) -> Array1<f64> {
        let id = self.input_index.get(token).copied().unwrap_or(0);
        self.embed_in.row(id).to_owned()
    }

    fn h(&self) -> usize {
        self.config.d_q / 2
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<EncodedQuestion, PolicyError> {
        if tokens.is_empty() {
            return Err(PolicyError::EmptyQuestion);
        }
        let tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_owned()).collect();
        let t_len = tokens.len();
        let h = self.h();
        let embs: Vec<Array1<f64>> = tokens.iter().map(|t| self.input_embedding(t)).collect();

        let zeros = Array1::<f64>::zeros(h);
        let mut fwd: Vec<LstmCache> = Vec::with_capacity(t_len);
        for x in &embs {
            let (hp, cp) = match fwd.last() {
                Some(c) => (c.h.view(), c.c.view()),
                None => (zeros.view(), zeros.view()),
            };
            let c = lstm::forward(&self.params.enc_fwd, x.view(), hp, cp);
            fwd.push(c);
        }
        let mut bwd_rev: Vec<LstmCache> = Vec::with_capacity(t_len);
        for x in embs.iter().rev() {
            let (hp, cp) = match bwd_rev.last() {
                Some(c) => (c.h.view(), c.c.view()),
                None => (zeros.view(), zeros.view()),
            };
            let c = lstm::forward(&self.params.enc_bwd, x.view(), hp, cp);
            bwd_rev.push(c);
        }
        bwd_rev.reverse();
        let bwd = bwd_rev;

        let mut memory = Array2::zeros((t_len, 2 * h));
        for i in 0..t_len {
            memory.slice_mut(s![i, 0..h]).assign(&fwd[i].h);
            memory.slice_mut(s![i, h..]).assign(&bwd[i].h);
        }

        let mut candidates: Vec<String> = output_vocab().into_iter().map(str::to_owned).collect();
        let mut candidate_index: HashMap<String, usize> = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        for tok in &tokens {
            if !candidate_index.contains_key(tok) {
                candidate_index.insert(tok.clone(), candidates.len());
                candidates.push(tok.clone());
            }
        }
        let mut slots: Vec<Vec<usize>> = (0..candidates.len())
            .map(|c| if c < n_out() { vec![c] } else { vec![] })
            .collect();
        let mut positions = vec![Vec::new(); candidates.len()];
        for (j, tok) in tokens.iter().enumerate() {
            let c = candidate_index[tok];
            slots[c].push(n_out() + j);
            positions[c].push(j);
        }

        let copy_keys = memory.dot(&self.params.w_c).mapv(f64::tanh);
        Ok(EncodedQuestion {
            tokens,
            memory,
            copy_keys,
            fwd,
            bwd,
            candidates,
            candidate_index,
            slots,
            positions,
        })
    }

    pub fn initial_state(&self, enc: &EncodedQuestion) -> DecodeState {
        let h = self.h();
        let t_len = enc.len();
        let mut q = Array1::zeros(2 * h);
        q.slice_mut(s![0..h]).assign(&enc.fwd[t_len - 1].h);
        q.slice_mut(s![h..]).assign(&enc.bwd[0].h);
        DecodeState {
            q,
            cell: Array1::zeros(2 * h),
            prev: None,
            prev_copy_scores: None,
            t: 1,
        }
    }

    fn decoder_embedding(&self, enc: &EncodedQuestion, prev: Option<usize>) -> Array1<f64> {
        match prev {
            None => self.embed_out.row(0).to_owned(),
            Some(c) if c < n_out() => self.embed_out.row(c + 1).to_owned(),
            Some(c) => self.input_embedding(&enc.candidates[c]),
        }
    }

    /// Runs one decoder step from `state`.
    pub fn step(&self, enc: &EncodedQuestion, state: &DecodeState) -> StepCache {
        let p = &self.params;
        let m = &enc.memory;

        let att_query = p.w_att.t().dot(&state.q);
        let alpha = softmax(&m.dot(&att_query));
        let ctx = m.t().dot(&alpha);

        let mut r = Array1::zeros(self.config.d_q);
        let mut read = None;
        if let (Some(prev), Some(prev_scores)) = (state.prev, &state.prev_copy_scores) {
            let pos = &enc.positions[prev];
            if !pos.is_empty() {
                let sel = Array1::from_iter(pos.iter().map(|&j| prev_scores[j]));
                let rho = softmax(&sel);
                for (&j, &w) in pos.iter().zip(&rho) {
                    r.scaled_add(w, &m.row(j));
                }
                read = Some((pos.clone(), rho));
            }
        }

        let emb = self.decoder_embedding(enc, state.prev);
        let x = concatenate(Axis(0), &[emb.view(), r.view(), ctx.view()]).expect("1-d concat");
        let cell = lstm::forward(&p.dec, x.view(), state.q.view(), state.cell.view());
        let q = &cell.h;

        let wq = p.w_o.dot(q);
        let gen_scores = p.out_vecs.dot(&wq);
        let copy_scores = enc.copy_keys.dot(q);
        let scores =
            concatenate(Axis(0), &[gen_scores.view(), copy_scores.view()]).expect("1-d concat");
        let probs = softmax(&scores);

        StepCache {
            q_prev: state.q.clone(),
            att_query,
            alpha,
            read,
            cell,
            wq,
            copy_scores,
            probs,
        }
    }

    /// Probability of every candidate token, pooling repeated input tokens.
    pub fn token_distribution(&self, enc: &EncodedQuestion, cache: &StepCache) -> Vec<f64> {
        enc.slots
            .iter()
            .map(|slots| slots.iter().map(|&s| cache.probs[s]).sum())
            .collect()
    }

    /// Distribution over `enc.candidates()` for the next token.
    pub fn decode_step(&self, enc: &EncodedQuestion, state: &DecodeState) -> (Vec<f64>, StepCache) {
        let cache = self.step(enc, state);
        (self.token_distribution(enc, &cache), cache)
    }

    pub fn advance(&self, cache: &StepCache, token: usize, t: usize) -> DecodeState {
        DecodeState {
            q: cache.cell.h.clone(),
            cell: cache.cell.c.clone(),
            prev: Some(token),
            prev_copy_scores: Some(cache.copy_scores.clone()),
            t: t + 1,
        }
    }

    fn eoq(&self) -> usize {
        Operator::ALL
            .iter()
            .position(|&o| o == Operator::Eoq)
            .expect("EOQ is an operator")
    }

    pub fn greedy_decode(&self, enc: &EncodedQuestion, max_len: usize) -> Trial {
        assert!(max_len >= 1, "max_len must be positive");
        let mut state = self.initial_state(enc);
        let mut tokens = Vec::new();
        let mut log_prob = 0.0;
        for _ in 0..max_len {
            let (dist, cache) = self.decode_step(enc, &state);
            let (best, p) =
                dist.iter()
                    .copied()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |acc, (i, p)| if p > acc.1 { (i, p) } else { acc },
                    );
            log_prob += p.ln();
            tokens.push(enc.candidates[best].clone());
            if best == self.eoq() {
                break;
            }
            state = self.advance(&cache, best, state.t);
        }
        Trial::new(tokens, log_prob)
    }

    /// Beam search; returns up to `k` hypotheses ordered by log-probability.
    pub fn beam_search(
        &self,
        enc: &EncodedQuestion,
        k: usize,
        beam_width: usize,
        max_len: usize,
    ) -> Vec<Trial> {
        assert!(k >= 1 && beam_width >= 1 && max_len >= 1);
        struct Hyp {
            tokens: Vec<usize>,
            log_prob: f64,
            state: Option<DecodeState>,
        }
        let eoq = self.eoq();
        let mut beam = vec![Hyp {
            tokens: vec![],
            log_prob: 0.0,
            state: Some(self.initial_state(enc)),
        }];
        for _ in 0..max_len {
            if beam.iter().all(|h| h.state.is_none()) {
                break;
            }
            // (parent, token, score); finished hypotheses carry over with token = None
            let mut expansions: Vec<(usize, Option<usize>, f64)> = Vec::new();
            let mut caches: Vec<Option<StepCache>> = Vec::with_capacity(beam.len());
            for (bi, h) in beam.iter().enumerate() {
                match &h.state {
                    None => {
                        expansions.push((bi, None, h.log_prob));
                        caches.push(None);
                    }
                    Some(state) => {
                        let (dist, cache) = self.decode_step(enc, state);
                        for (c, p) in dist.into_iter().enumerate() {
                            if p > 0.0 {
                                expansions.push((bi, Some(c), h.log_prob + p.ln()));
                            }
                        }
                        caches.push(Some(cache));
                    }
                }
            }
            expansions.sort_by(|a, b| {
                b.2.total_cmp(&a.2)
                    .then_with(|| a.0.cmp(&b.0))
                    .then_with(|| a.1.cmp(&b.1))
            });
            expansions.truncate(beam_width);
            beam = expansions
                .into_iter()
                .map(|(bi, tok, lp)| {
                    let parent = &beam[bi];
                    match tok {
                        None => Hyp {
                            tokens: parent.tokens.clone(),
                            log_prob: lp,
                            state: None,
                        },
                        Some(c) => {
                            let mut tokens = parent.tokens.clone();
                            tokens.push(c);
                            let state = if c == eoq {
                                None
                            } else {
                                let cache = caches[bi].as_ref().expect("expanded parent");
                                let t = parent.state.as_ref().map_or(1, |s| s.t);
                                Some(self.advance(cache, c, t))
                            };
                            Hyp {
                                tokens,
                                log_prob: lp,
                                state,
                            }
                        }
                    }
                })
                .collect();
        }
        beam.into_iter()
            .take(k)
            .map(|h| {
                Trial::new(
                    h.tokens
                        .iter()
                        .map(|&c| enc.candidates[c].clone())
                        .collect(),
                    h.log_prob,
                )
            })
            .collect()
    }

    fn candidate_ids<S: AsRef<str>>(
        &self,
        enc: &EncodedQuestion,
        tokens: &[S],
    ) -> Result<Vec<usize>, PolicyError> {
        tokens
            .iter()
            .map(|t| {
                enc.candidate(t.as_ref())
                    .ok_or_else(|| PolicyError::InfeasibleToken(t.as_ref().to_owned()))
            })
            .collect()
    }

    /// Teacher-forced pass recording every step.
    pub fn trace(&self, enc: &EncodedQuestion, ids: &[usize]) -> Vec<StepCache> {
        let mut state = self.initial_state(enc);
        let mut caches = Vec::with_capacity(ids.len());
        for &c in ids {
            let cache = self.step(enc, &state);
            state = self.advance(&cache, c, state.t);
            caches.push(cache);
        }
        caches
    }

    fn step_log_prob(enc: &EncodedQuestion, cache: &StepCache, token: usize) -> f64 {
        enc.slots[token]
            .iter()
            .map(|&s| cache.probs[s])
            .sum::<f64>()
            .ln()
    }

    /// Per-step log-probabilities of `tokens` under teacher forcing.
    pub fn step_log_probs<S: AsRef<str>>(
        &self,
        enc: &EncodedQuestion,
        tokens: &[S],
    ) -> Result<Vec<f64>, PolicyError> {
        let ids = self.candidate_ids(enc, tokens)?;
        let caches = self.trace(enc, &ids);
        Ok(ids
            .iter()
            .zip(&caches)
            .map(|(&c, cache)| Self::step_log_prob(enc, cache, c))
            .collect())
    }

    pub fn log_prob<S: AsRef<str>>(
        &self,
        enc: &EncodedQuestion,
        tokens: &[S],
    ) -> Result<f64, PolicyError> {
        Ok(self.step_log_probs(enc, tokens)?.iter().sum())
    }

    /// Gradient of `weight * log P(tokens | question)` with respect to every
    /// trainable tensor, including the encoder.
    pub fn gradients<S: AsRef<str>>(
        &self,
        enc: &EncodedQuestion,
        tokens: &[S],
        weight: f64,
    ) -> Result<PolicyParams, PolicyError> {
        let mut grad = self.params.zeros_like();
        self.accumulate_gradients(enc, tokens, weight, &mut grad)?;
        Ok(grad)
    }

    /// Adds the gradient of `weight * log P(tokens)` into `grad`; returns `log P`.
    pub fn accumulate_gradients<S: AsRef<str>>(
        &self,
        enc: &EncodedQuestion,
        tokens: &[S],
        weight: f64,
        grad: &mut PolicyParams,
    ) -> Result<f64, PolicyError> {
        let ids = self.candidate_ids(enc, tokens)?;
        let caches = self.trace(enc, &ids);
        let log_p: f64 = ids
            .iter()
            .zip(&caches)
            .map(|(&c, cache)| Self::step_log_prob(enc, cache, c))
            .sum();
        if weight == 0.0 || ids.is_empty() {
            return Ok(log_p);
        }

        let p = &self.params;
        let m = &enc.memory;
        let t_len = enc.len();
        let d_q = self.config.d_q;
        let d_e = self.config.d_e;
        let n_o = n_out();

        let mut d_mem = Array2::<f64>::zeros((t_len, d_q));
        let mut dq_next = Array1::<f64>::zeros(d_q);
        let mut dcell_next = Array1::<f64>::zeros(d_q);
        let mut dcopy_from_next: Option<Array1<f64>> = None;
        let mut d_keys = Array2::<f64>::zeros((t_len, d_q));

        for (step, cache) in caches.iter().enumerate().rev() {
            let token = ids[step];
            let slots = &enc.slots[token];
            let mass: f64 = slots.iter().map(|&s| cache.probs[s]).sum();
            let mut dscores = cache.probs.mapv(|v| -weight * v);
            for &s in slots {
                dscores[s] += weight * cache.probs[s] / mass;
            }
            debug_assert_eq!(dscores.len(), enc.n_slots());

            let q = &cache.cell.h;
            // generate mode
            let dgen = dscores.slice(s![0..n_o]).to_owned();
            outer_add(&mut grad.out_vecs, &dgen, &cache.wq);
            let dwq = p.out_vecs.t().dot(&dgen);
            outer_add(&mut grad.w_o, &dwq, q);
            let mut dq = dq_next + p.w_o.t().dot(&dwq);

            // copy mode
            let mut dcopy = dscores.slice(s![n_o..]).to_owned();
            if let Some(extra) = dcopy_from_next.take() {
                dcopy += &extra;
            }
            outer_add(&mut d_keys, &dcopy, q);
            dq += &enc.copy_keys.t().dot(&dcopy);

            let back = lstm::backward(&p.dec, &cache.cell, &dq, &dcell_next, &mut grad.dec);
            dcell_next = back.dc_prev;
            let mut dq_prev = back.dh_prev;

            // selective read
            if let Some((pos, rho)) = &cache.read {
                let dr = back.dx.slice(s![d_e..d_e + d_q]);
                let drho: Vec<f64> = pos.iter().map(|&j| m.row(j).dot(&dr)).collect();
                let mean: f64 = rho.iter().zip(&drho).map(|(r, d)| r * d).sum();
                let mut dprev = Array1::zeros(t_len);
                for (k, &j) in pos.iter().enumerate() {
                    d_mem.row_mut(j).scaled_add(rho[k], &dr);
                    dprev[j] = rho[k] * (drho[k] - mean);
                }
                dcopy_from_next = Some(dprev);
            }

            // attention
            let dctx = back.dx.slice(s![d_e + d_q..]).to_owned();
            let dalpha = m.dot(&dctx);
            outer_add(&mut d_mem, &cache.alpha, &dctx);
            let mean = cache.alpha.dot(&dalpha);
            let dscore_att = &cache.alpha * &dalpha.mapv(|v| v - mean);
            outer_add(&mut d_mem, &dscore_att, &cache.att_query);
            let dquery = m.t().dot(&dscore_att);
            outer_add(&mut grad.w_att, &cache.q_prev, &dquery);
            dq_prev += &p.w_att.dot(&dquery);

            dq_next = dq_prev;
        }

        let d_pre = d_keys * &enc.copy_keys.mapv(|v| 1.0 - v * v);
        d_mem += &d_pre.dot(&p.w_c.t());
        grad.w_c += &m.t().dot(&d_pre);

        // decoder initial state [h_fwd(T); h_bwd(1)]
        let h = self.h();
        {
            let mut last = d_mem.slice_mut(s![t_len - 1, 0..h]);
            last += &dq_next.slice(s![0..h]);
        }
        {
            let mut first = d_mem.slice_mut(s![0, h..]);
            first += &dq_next.slice(s![h..]);
        }

        let mut dh = Array1::<f64>::zeros(h);
        let mut dc = Array1::<f64>::zeros(h);
        for i in (0..t_len).rev() {
            let dhi = &dh + &d_mem.slice(s![i, 0..h]);
            let back = lstm::backward(&p.enc_fwd, &enc.fwd[i], &dhi, &dc, &mut grad.enc_fwd);
            dh = back.dh_prev;
            dc = back.dc_prev;
        }
        let mut dh = Array1::<f64>::zeros(h);
        let mut dc = Array1::<f64>::zeros(h);
        for i in 0..t_len {
            let dhi = &dh + &d_mem.slice(s![i, h..]);
            let back = lstm::backward(&p.enc_bwd, &enc.bwd[i], &dhi, &dc, &mut grad.enc_bwd);
            dh = back.dh_prev;
            dc = back.dc_prev;
        }
        Ok(log_p)
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let err = |message: String| PolicyError::Checkpoint {
            path: path.display().to_string(),
            message,
        };
        let json = serde_json::to_string(self).map_err(|e| err(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let err = |message: String| PolicyError::Checkpoint {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut policy: Policy = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if policy.version != CHECKPOINT_VERSION {
            return Err(err(format!("unsupported version {}", policy.version)));
        }
        policy.input_index = policy
            .input_vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(policy)
    }
}

#[cfg(test)]
mod tests;
