//! A desk-scale autoregressive policy over a five-token vocabulary, plus the
//! synthetic verifiable environment it is trained on.
//!
//! Prompt position `j` is addressed as offset `o = j mod S` within segment
//! `g = j div S`. The embeddings at one offset are combined across segments
//! with learned per-segment scales plus, when at least two segments reach
//! the offset, a scaled elementwise product of them. The result passes
//! through a hidden layer shared by all offsets. Output step `t` pools
//! those features with step-specific weights, adds embeddings of the
//! previous output token and of the prompt kind (its segment count), and
//! projects to next-token logits:
//!
//! ```text
//! z_o  = sum_g seg[g] * embed[prompt_{g S + o}] + cross * prod_g embed[prompt_{g S + o}]
//! h_o  = act(W1 z_o + b1)
//! x_t  = sum_o (pool[t, o] + pool_all[t]) * h_o + out_embed[out_{t-1}] + kind[segments - 1]
//! p_t  = softmax(W2 x_t + b2)
//! ```
//!
//! Gradients are computed by a hand-written reverse pass; [`fd_gradient`]
//! provides the central-difference oracle the reverse pass is checked
//! against.

mod checkpoint;
mod env;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_FORMAT};
pub use env::{
    bits_to_string, make_synthetic_corpus, make_synthetic_corpus_with, parse_bits, render_output,
    synthetic_from_corpus, synthetic_to_corpus, SyntheticCritique, SyntheticProblem, FLIP_PROBS,
};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PolicyError {
    #[error("prompt length {len} exceeds the policy maximum {max}")]
    PromptTooLong { len: usize, max: usize },
    #[error("output length {len} exceeds the policy maximum {max}")]
    OutputTooLong { len: usize, max: usize },
    #[error("empty output sequence")]
    EmptyOutput,
    #[error("unknown token id {0}")]
    UnknownToken(usize),
    #[error("invalid policy config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Token {
    Bit0 = 0,
    Bit1 = 1,
    JudgeT = 2,
    JudgeF = 3,
    Eos = 4,
}

pub const VOCAB_SIZE: usize = 5;

/// The fixed vocabulary in id order.
pub struct Vocab;

impl Vocab {
    pub const TOKENS: [Token; VOCAB_SIZE] = [
        Token::Bit0,
        Token::Bit1,
        Token::JudgeT,
        Token::JudgeF,
        Token::Eos,
    ];
}

impl Token {
    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Result<Self, PolicyError> {
        Vocab::TOKENS
            .get(id)
            .copied()
            .ok_or(PolicyError::UnknownToken(id))
    }

    pub fn bit(one: bool) -> Self {
        if one {
            Token::Bit1
        } else {
            Token::Bit0
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Token::Bit0 => "0",
            Token::Bit1 => "1",
            Token::JudgeT => "T",
            Token::JudgeF => "F",
            Token::Eos => "$",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    /// `u * u`.
    Square,
}

impl Activation {
    fn apply(self, u: f64) -> f64 {
        match self {
            Activation::Tanh => u.tanh(),
            Activation::Square => u * u,
        }
    }

    fn derivative(self, u: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Square => 2.0 * u,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_prompt_len: usize,
    pub max_output_len: usize,
    pub activation: Activation,
    /// Standard deviation multiplier for the random initialization.
    pub init_scale: f64,
    /// Prompt segment length `S`; `max_prompt_len` gives a single segment.
    #[serde(default = "default_segment_len")]
    pub segment_len: usize,
}

fn default_segment_len() -> usize {
    16
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            hidden_dim: 32,
            max_prompt_len: 32,
            max_output_len: 48,
            activation: Activation::Tanh,
            init_scale: 2.0,
            segment_len: default_segment_len(),
        }
    }
}

impl PolicyConfig {
    pub fn num_segments(&self) -> usize {
        self.max_prompt_len.div_ceil(self.segment_len)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.embed_dim == 0
            || self.hidden_dim == 0
            || self.max_prompt_len == 0
            || self.max_output_len == 0
        {
            return Err(PolicyError::InvalidConfig(
                "all dimensions must be positive".into(),
            ));
        }
        if self.segment_len == 0 || self.segment_len > self.max_prompt_len {
            return Err(PolicyError::InvalidConfig(
                "segment_len must lie in 1..=max_prompt_len".into(),
            ));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(PolicyError::InvalidConfig(
                "init_scale must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Offsets of each tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Layout {
    pub embed: usize,
    pub seg: usize,
    pub cross: usize,
    pub w1: usize,
    pub b1: usize,
    pub pool: usize,
    pub pool_all: usize,
    pub out_embed: usize,
    pub kind: usize,
    pub w2: usize,
    pub b2: usize,
    pub len: usize,
}

impl Layout {
    fn new(c: &PolicyConfig) -> Self {
        let (v, d, h) = (VOCAB_SIZE, c.embed_dim, c.hidden_dim);
        let embed = 0;
        let seg = embed + v * d;
        let cross = seg + c.num_segments() * d;
        let w1 = cross + d;
        let b1 = w1 + h * d;
        let pool = b1 + h;
        let pool_all = pool + c.max_output_len * c.segment_len * h;
        let out_embed = pool_all + c.max_output_len * h;
        let kind = out_embed + v * h;
        let w2 = kind + c.num_segments() * h;
        let b2 = w2 + v * h;
        Self {
            embed,
            seg,
            cross,
            w1,
            b1,
            pool,
            pool_all,
            out_embed,
            kind,
            w2,
            b2,
            len: b2 + v,
        }
    }

    /// `(name, offset, shape)` for every tensor, in storage order.
    pub(crate) fn tensors(&self, c: &PolicyConfig) -> [(&'static str, usize, Vec<usize>); 11] {
        let (v, d, h) = (VOCAB_SIZE, c.embed_dim, c.hidden_dim);
        [
            ("embed", self.embed, vec![v, d]),
            ("seg", self.seg, vec![c.num_segments(), d]),
            ("cross", self.cross, vec![d]),
            ("w1", self.w1, vec![h, d]),
            ("b1", self.b1, vec![h]),
            ("pool", self.pool, vec![c.max_output_len, c.segment_len, h]),
            ("pool_all", self.pool_all, vec![c.max_output_len, h]),
            ("out_embed", self.out_embed, vec![v, h]),
            ("kind", self.kind, vec![c.num_segments(), h]),
            ("w2", self.w2, vec![v, h]),
            ("b2", self.b2, vec![v]),
        ]
    }
}

/// Per-offset prompt features, computed once per prompt.
struct PromptCache {
    /// Offsets present in the prompt.
    offsets: usize,
    /// Segments present in the prompt; an empty prompt counts as one.
    segments: usize,
    /// Sum of the features over offsets.
    a_sum: Vec<f64>,
    z: Vec<f64>,
    u: Vec<f64>,
    a: Vec<f64>,
}

/// Per-step values kept for the reverse pass.
struct StepCache {
    x: Vec<f64>,
    probs: [f64; VOCAB_SIZE],
    logp: [f64; VOCAB_SIZE],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    config: PolicyConfig,
    layout: Layout,
    params: Vec<f64>,
}

/// A frozen copy of a policy, used as the sampling (`old`) or reference
/// policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot(ToyPolicy);

impl PolicySnapshot {
    pub fn policy(&self) -> &ToyPolicy {
        &self.0
    }
}

impl std::ops::Deref for PolicySnapshot {
    type Target = ToyPolicy;
    fn deref(&self) -> &ToyPolicy {
        &self.0
    }
}

impl ToyPolicy {
    /// All-zero parameters: every step is uniform over the vocabulary.
    pub fn zeros(config: PolicyConfig) -> Result<Self, PolicyError> {
        config.validate()?;
        let layout = Layout::new(&config);
        Ok(Self {
            config,
            layout,
            params: vec![0.0; layout.len],
        })
    }

    /// Gaussian initialization scaled by fan-in; the output layer starts
    /// small so the initial policy is close to uniform.
    pub fn random<R: Rng + ?Sized>(config: PolicyConfig, rng: &mut R) -> Result<Self, PolicyError> {
        let mut p = Self::zeros(config)?;
        let c = config;
        let l = p.layout;
        let s = c.init_scale;
        let mut fill = |params: &mut [f64], std: f64| {
            for x in params {
                let z: f64 = StandardNormal.sample(rng);
                *x = z * std;
            }
        };
        fill(&mut p.params[l.embed..l.seg], s);
        // segment and cross scales start at one
        p.params[l.seg..l.w1].iter_mut().for_each(|x| *x = 1.0);
        fill(&mut p.params[l.w1..l.b1], s / (c.embed_dim as f64).sqrt());
        fill(&mut p.params[l.b1..l.pool], s * 0.1);
        fill(
            &mut p.params[l.pool..l.pool_all],
            s / (c.segment_len as f64).sqrt(),
        );
        fill(
            &mut p.params[l.pool_all..l.out_embed],
            s / c.segment_len as f64,
        );
        fill(&mut p.params[l.out_embed..l.kind], s * 0.1);
        fill(&mut p.params[l.kind..l.w2], s * 0.1);
        fill(
            &mut p.params[l.w2..l.b2],
            s * 0.1 / (c.hidden_dim as f64).sqrt(),
        );
        Ok(p)
    }

    pub fn from_params(config: PolicyConfig, params: Vec<f64>) -> Result<Self, PolicyError> {
        let mut p = Self::zeros(config)?;
        if params.len() != p.params.len() {
            return Err(PolicyError::InvalidConfig(format!(
                "expected {} parameters, got {}",
                p.params.len(),
                params.len()
            )));
        }
        p.params = params;
        Ok(p)
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; the single-writer side of training.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot(self.clone())
    }

    fn check_prompt(&self, prompt: &[Token]) -> Result<(), PolicyError> {
        if prompt.len() > self.config.max_prompt_len {
            return Err(PolicyError::PromptTooLong {
                len: prompt.len(),
                max: self.config.max_prompt_len,
            });
        }
        Ok(())
    }

    fn encode(&self, prompt: &[Token]) -> PromptCache {
        let c = &self.config;
        let l = &self.layout;
        let (d, h, sl) = (c.embed_dim, c.hidden_dim, c.segment_len);
        let p = &self.params;
        let offsets = prompt.len().min(sl);
        let mut z = vec![0.0; offsets * d];
        for (j, tok) in prompt.iter().enumerate() {
            let (o, g) = (j % sl, j / sl);
            let (e, sg) = (l.embed + tok.id() * d, l.seg + g * d);
            for k in 0..d {
                z[o * d + k] += p[sg + k] * p[e + k];
            }
        }
        for o in 0..offsets {
            if let Some(prod) = self.cross_product(prompt, o, None) {
                for k in 0..d {
                    z[o * d + k] += p[l.cross + k] * prod[k];
                }
            }
        }
        let mut u = vec![0.0; offsets * h];
        let mut a = vec![0.0; offsets * h];
        for o in 0..offsets {
            let zo = &z[o * d..(o + 1) * d];
            for i in 0..h {
                let row = &p[l.w1 + i * d..l.w1 + (i + 1) * d];
                let mut acc = p[l.b1 + i];
                for k in 0..d {
                    acc += row[k] * zo[k];
                }
                u[o * h + i] = acc;
                a[o * h + i] = c.activation.apply(acc);
            }
        }
        let mut a_sum = vec![0.0; h];
        for o in 0..offsets {
            for i in 0..h {
                a_sum[i] += a[o * h + i];
            }
        }
        PromptCache {
            offsets,
            segments: prompt.len().div_ceil(sl).max(1),
            a_sum,
            z,
            u,
            a,
        }
    }

    /// Elementwise product of the embeddings at offset `o` across segments,
    /// leaving out segment `skip`. `None` when fewer than two segments
    /// reach that offset.
    fn cross_product(&self, prompt: &[Token], o: usize, skip: Option<usize>) -> Option<Vec<f64>> {
        let (d, sl) = (self.config.embed_dim, self.config.segment_len);
        let present = (prompt.len() - o).div_ceil(sl);
        if present < 2 {
            return None;
        }
        let mut prod = vec![1.0; d];
        for g in (0..present).filter(|&g| Some(g) != skip) {
            let e = self.layout.embed + prompt[g * sl + o].id() * d;
            for (x, w) in prod.iter_mut().zip(&self.params[e..e + d]) {
                *x *= w;
            }
        }
        Some(prod)
    }

    fn step(&self, pc: &PromptCache, t: usize, prev: Option<Token>) -> StepCache {
        let c = &self.config;
        let l = &self.layout;
        let h = c.hidden_dim;
        let p = &self.params;

        let mut x = vec![0.0; h];
        let pool_t = l.pool + t * c.segment_len * h;
        for o in 0..pc.offsets {
            let w = &p[pool_t + o * h..pool_t + (o + 1) * h];
            let ao = &pc.a[o * h..(o + 1) * h];
            for i in 0..h {
                x[i] += w[i] * ao[i];
            }
        }
        if let Some(prev) = prev {
            let e = l.out_embed + prev.id() * h;
            for i in 0..h {
                x[i] += p[e + i];
            }
        }
        let (kind, all) = (l.kind + (pc.segments - 1) * h, l.pool_all + t * h);
        for i in 0..h {
            x[i] += p[kind + i] + p[all + i] * pc.a_sum[i];
        }

        let mut z = [0.0; VOCAB_SIZE];
        for (v, zv) in z.iter_mut().enumerate() {
            let row = &p[l.w2 + v * h..l.w2 + (v + 1) * h];
            let mut acc = p[l.b2 + v];
            for i in 0..h {
                acc += row[i] * x[i];
            }
            *zv = acc;
        }
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|zv| (zv - max).exp()).sum();
        let lse = max + sum.ln();
        let mut logp = [0.0; VOCAB_SIZE];
        let mut probs = [0.0; VOCAB_SIZE];
        for v in 0..VOCAB_SIZE {
            logp[v] = z[v] - lse;
            probs[v] = logp[v].exp();
        }
        StepCache { x, probs, logp }
    }

    /// Next-token distribution after `prefix` has been emitted.
    pub fn next_distribution(
        &self,
        prompt: &[Token],
        prefix: &[Token],
    ) -> Result<[f64; VOCAB_SIZE], PolicyError> {
        self.check_prompt(prompt)?;
        if prefix.len() >= self.config.max_output_len {
            return Err(PolicyError::OutputTooLong {
                len: prefix.len() + 1,
                max: self.config.max_output_len,
            });
        }
        let pc = self.encode(prompt);
        Ok(self.step(&pc, prefix.len(), prefix.last().copied()).probs)
    }

    /// Teacher-forced per-token log-probabilities of `output`.
    pub fn logprobs(&self, prompt: &[Token], output: &[Token]) -> Result<Vec<f64>, PolicyError> {
        self.check_sequence(prompt, output)?;
        let pc = self.encode(prompt);
        Ok((0..output.len())
            .map(|t| {
                let prev = t.checked_sub(1).map(|s| output[s]);
                self.step(&pc, t, prev).logp[output[t].id()]
            })
            .collect())
    }

    /// Validates ids given as raw integers and scores them.
    pub fn logprobs_from_ids(
        &self,
        prompt: &[usize],
        output: &[usize],
    ) -> Result<Vec<f64>, PolicyError> {
        let to_tokens = |ids: &[usize]| {
            ids.iter()
                .map(|&i| Token::from_id(i))
                .collect::<Result<Vec<_>, _>>()
        };
        self.logprobs(&to_tokens(prompt)?, &to_tokens(output)?)
    }

    fn check_sequence(&self, prompt: &[Token], output: &[Token]) -> Result<(), PolicyError> {
        self.check_prompt(prompt)?;
        if output.is_empty() {
            return Err(PolicyError::EmptyOutput);
        }
        if output.len() > self.config.max_output_len {
            return Err(PolicyError::OutputTooLong {
                len: output.len(),
                max: self.config.max_output_len,
            });
        }
        Ok(())
    }

    /// Reverse pass for a scalar `J` that depends on the teacher-forced
    /// log-probabilities of `output`. `upstream(t, logp_t)` returns
    /// `dJ/dlogp_t`; the parameter gradient is added into `grad`. Returns
    /// the log-probabilities.
    pub fn accumulate_gradient(
        &self,
        prompt: &[Token],
        output: &[Token],
        mut upstream: impl FnMut(usize, f64) -> f64,
        grad: &mut [f64],
    ) -> Result<Vec<f64>, PolicyError> {
        self.check_sequence(prompt, output)?;
        assert_eq!(grad.len(), self.params.len(), "gradient buffer size");
        let c = &self.config;
        let l = &self.layout;
        let (d, h, sl) = (c.embed_dim, c.hidden_dim, c.segment_len);
        let p = &self.params;
        let pc = self.encode(prompt);
        let mut logps = Vec::with_capacity(output.len());
        let mut da = vec![0.0; pc.offsets * h];
        let mut dx = vec![0.0; h];

        for t in 0..output.len() {
            let prev = t.checked_sub(1).map(|s| output[s]);
            let cache = self.step(&pc, t, prev);
            let tok = output[t].id();
            let logp = cache.logp[tok];
            logps.push(logp);
            let g = upstream(t, logp);
            if g == 0.0 {
                continue;
            }

            // d logp[tok] / dz = onehot(tok) - softmax
            dx.iter_mut().for_each(|x| *x = 0.0);
            for v in 0..VOCAB_SIZE {
                let dz = g * ((v == tok) as u8 as f64 - cache.probs[v]);
                grad[l.b2 + v] += dz;
                let row = l.w2 + v * h;
                for i in 0..h {
                    grad[row + i] += dz * cache.x[i];
                    dx[i] += dz * p[row + i];
                }
            }
            let pool_t = l.pool + t * sl * h;
            for o in 0..pc.offsets {
                let w = pool_t + o * h;
                for i in 0..h {
                    grad[w + i] += dx[i] * pc.a[o * h + i];
                    da[o * h + i] += dx[i] * p[w + i];
                }
            }
            if let Some(prev) = prev {
                let e = l.out_embed + prev.id() * h;
                for i in 0..h {
                    grad[e + i] += dx[i];
                }
            }
            let (kind, all) = (l.kind + (pc.segments - 1) * h, l.pool_all + t * h);
            for i in 0..h {
                grad[kind + i] += dx[i];
                grad[all + i] += dx[i] * pc.a_sum[i];
            }
            for o in 0..pc.offsets {
                for i in 0..h {
                    da[o * h + i] += dx[i] * p[all + i];
                }
            }
        }

        let mut dz = vec![0.0; pc.offsets * d];
        for o in 0..pc.offsets {
            for i in 0..h {
                let du = da[o * h + i] * c.activation.derivative(pc.u[o * h + i], pc.a[o * h + i]);
                if du == 0.0 {
                    continue;
                }
                grad[l.b1 + i] += du;
                let row = l.w1 + i * d;
                for k in 0..d {
                    grad[row + k] += du * pc.z[o * d + k];
                    dz[o * d + k] += du * p[row + k];
                }
            }
        }
        for (j, tok) in prompt.iter().enumerate() {
            let (o, g) = (j % sl, j / sl);
            let (e, sg) = (l.embed + tok.id() * d, l.seg + g * d);
            for k in 0..d {
                grad[sg + k] += dz[o * d + k] * p[e + k];
                grad[e + k] += dz[o * d + k] * p[sg + k];
            }
            if let Some(rest) = self.cross_product(prompt, o, Some(g)) {
                for k in 0..d {
                    grad[e + k] += dz[o * d + k] * p[l.cross + k] * rest[k];
                }
            }
        }
        for o in 0..pc.offsets {
            if let Some(prod) = self.cross_product(prompt, o, None) {
                for k in 0..d {
                    grad[l.cross + k] += dz[o * d + k] * prod[k];
                }
            }
        }
        Ok(logps)
    }

    /// Autoregressive sampling at `temperature`, stopping after EOS or
    /// `max_len` tokens. The returned log-probabilities are untempered.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        prompt: &[Token],
        max_len: usize,
        temperature: f64,
        rng: &mut R,
    ) -> Result<(Vec<Token>, Vec<f64>), PolicyError> {
        self.check_prompt(prompt)?;
        if temperature.is_nan() || temperature <= 0.0 {
            return Err(PolicyError::InvalidConfig(
                "temperature must be positive".into(),
            ));
        }
        let max_len = max_len.max(1).min(self.config.max_output_len);
        let pc = self.encode(prompt);
        let mut tokens = Vec::with_capacity(max_len);
        let mut logps = Vec::with_capacity(max_len);
        for t in 0..max_len {
            let cache = self.step(&pc, t, tokens.last().copied());
            let id = if temperature == 1.0 {
                draw(&cache.probs, rng)
            } else {
                let scaled: Vec<f64> = cache.logp.iter().map(|lp| lp / temperature).collect();
                let m = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = scaled.iter().map(|s| (s - m).exp()).collect();
                let z: f64 = w.iter().sum();
                let probs: Vec<f64> = w.iter().map(|x| x / z).collect();
                draw(&probs, rng)
            };
            let tok = Vocab::TOKENS[id];
            tokens.push(tok);
            logps.push(cache.logp[id]);
            if tok == Token::Eos {
                break;
            }
        }
        Ok((tokens, logps))
    }

    /// Argmax decoding (lowest id on ties).
    pub fn greedy(&self, prompt: &[Token], max_len: usize) -> Result<Vec<Token>, PolicyError> {
        self.check_prompt(prompt)?;
        let max_len = max_len.max(1).min(self.config.max_output_len);
        let pc = self.encode(prompt);
        let mut tokens = Vec::with_capacity(max_len);
        for t in 0..max_len {
            let cache = self.step(&pc, t, tokens.last().copied());
            let mut best = 0;
            for v in 1..VOCAB_SIZE {
                if cache.probs[v] > cache.probs[best] {
                    best = v;
                }
            }
            let tok = Vocab::TOKENS[best];
            tokens.push(tok);
            if tok == Token::Eos {
                break;
            }
        }
        Ok(tokens)
    }
}

fn draw<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    // rounding left r just above the cumulative sum
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Central-difference gradient of `loss` with respect to every parameter.
/// Test oracle only: it costs two loss evaluations per parameter.
pub fn fd_gradient(loss: impl Fn(&ToyPolicy) -> f64, policy: &ToyPolicy, step: f64) -> Vec<f64> {
    let mut probe = policy.clone();
    (0..policy.num_params())
        .map(|i| {
            let orig = probe.params[i];
            probe.params[i] = orig + step;
            let up = loss(&probe);
            probe.params[i] = orig - step;
            let down = loss(&probe);
            probe.params[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}
