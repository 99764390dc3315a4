use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{axpy, dot, log_softmax, sigmoid, Matrix};
use super::vocab::{TokenId, Vocab, BOS, EOS};
use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub max_input_len: usize,
    pub init_seed: u64,
    /// Weights start uniform in `[-init_scale, init_scale]`; biases at zero.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 32,
            hidden_dim: 64,
            attention_dim: 32,
            encoder_layers: 1,
            decoder_layers: 1,
            max_input_len: 64,
            init_seed: 0,
            init_scale: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("attention_dim", self.attention_dim),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("max_input_len", self.max_input_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(ModelError::Config("init_scale must be positive".into()));
        }
        Ok(())
    }
}

/// GRU cell; index 0/1/2 of each array is the update gate, reset gate and
/// candidate state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    pub w: [Matrix; 3],
    pub u: [Matrix; 3],
    pub b: [Matrix; 3],
}

impl Gru {
    fn init(input: usize, hidden: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        Gru {
            w: std::array::from_fn(|_| Matrix::uniform(hidden, input, scale, rng)),
            u: std::array::from_fn(|_| Matrix::uniform(hidden, hidden, scale, rng)),
            b: std::array::from_fn(|_| Matrix::zeros(hidden, 1)),
        }
    }

    fn zeros_like(&self) -> Self {
        Gru {
            w: std::array::from_fn(|i| self.w[i].zeros_like()),
            u: std::array::from_fn(|i| self.u[i].zeros_like()),
            b: std::array::from_fn(|i| self.b[i].zeros_like()),
        }
    }

    fn hidden(&self) -> usize {
        self.u[0].rows
    }

    fn forward(&self, x: &[f64], h_prev: &[f64]) -> GruCache {
        let n = self.hidden();
        let mut z = self.b[0].data.clone();
        self.w[0].mul_vec_add(x, &mut z);
        self.u[0].mul_vec_add(h_prev, &mut z);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut r = self.b[1].data.clone();
        self.w[1].mul_vec_add(x, &mut r);
        self.u[1].mul_vec_add(h_prev, &mut r);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let mut hh = self.b[2].data.clone();
        self.w[2].mul_vec_add(x, &mut hh);
        self.u[2].mul_vec_add(&rh, &mut hh);
        hh.iter_mut().for_each(|v| *v = v.tanh());
        let h = (0..n).map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * hh[i]).collect();
        GruCache { x: x.to_vec(), h_prev: h_prev.to_vec(), z, r, hh, h }
    }

    /// Accumulates parameter gradients into `grad`; returns (d input, d h_prev).
    fn backward(&self, c: &GruCache, dh: &[f64], grad: &mut Gru) -> (Vec<f64>, Vec<f64>) {
        let n = self.hidden();
        let mut dx = vec![0.0; c.x.len()];
        let mut dh_prev: Vec<f64> = (0..n).map(|i| dh[i] * (1.0 - c.z[i])).collect();

        let da_h: Vec<f64> = (0..n).map(|i| dh[i] * c.z[i] * (1.0 - c.hh[i] * c.hh[i])).collect();
        let rh: Vec<f64> = c.r.iter().zip(&c.h_prev).map(|(a, b)| a * b).collect();
        grad.w[2].add_outer(&da_h, &c.x);
        grad.u[2].add_outer(&da_h, &rh);
        axpy(1.0, &da_h, &mut grad.b[2].data);
        self.w[2].mul_t_vec_add(&da_h, &mut dx);
        let mut d_rh = vec![0.0; n];
        self.u[2].mul_t_vec_add(&da_h, &mut d_rh);

        let da_z: Vec<f64> =
            (0..n).map(|i| dh[i] * (c.hh[i] - c.h_prev[i]) * c.z[i] * (1.0 - c.z[i])).collect();
        let da_r: Vec<f64> = (0..n).map(|i| d_rh[i] * c.h_prev[i] * c.r[i] * (1.0 - c.r[i])).collect();
        for i in 0..n {
            dh_prev[i] += d_rh[i] * c.r[i];
        }
        for (g, da) in [(0, &da_z), (1, &da_r)] {
            grad.w[g].add_outer(da, &c.x);
            grad.u[g].add_outer(da, &c.h_prev);
            axpy(1.0, da, &mut grad.b[g].data);
            self.w[g].mul_t_vec_add(da, &mut dx);
            self.u[g].mul_t_vec_add(da, &mut dh_prev);
        }
        (dx, dh_prev)
    }
}

#[derive(Debug, Clone)]
struct GruCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    hh: Vec<f64>,
    h: Vec<f64>,
}

/// All trainable tensors. Gradients use the same struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub input_embedding: Matrix,
    pub encoder: Vec<Gru>,
    pub output_embedding: Matrix,
    pub decoder: Vec<Gru>,
    pub attn_query: Matrix,
    pub attn_key: Matrix,
    pub attn_v: Matrix,
    pub out_w: Matrix,
    pub out_b: Matrix,
}

impl Params {
    pub fn init(config: &ModelConfig, vocab: &Vocab) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let (e, h, a, s) = (config.embed_dim, config.hidden_dim, config.attention_dim, config.init_scale);
        let input_embedding = Matrix::uniform(vocab.input_len(), e, s, &mut rng);
        let encoder = (0..config.encoder_layers)
            .map(|l| Gru::init(if l == 0 { e } else { h }, h, s, &mut rng))
            .collect();
        let output_embedding = Matrix::uniform(vocab.identifier_len(), e, s, &mut rng);
        let decoder = (0..config.decoder_layers)
            .map(|l| Gru::init(if l == 0 { e } else { h }, h, s, &mut rng))
            .collect();
        Params {
            input_embedding,
            encoder,
            output_embedding,
            decoder,
            attn_query: Matrix::uniform(a, h, s, &mut rng),
            attn_key: Matrix::uniform(a, h, s, &mut rng),
            attn_v: Matrix::uniform(a, 1, s, &mut rng),
            out_w: Matrix::uniform(vocab.identifier_len(), 2 * h, s, &mut rng),
            out_b: Matrix::zeros(vocab.identifier_len(), 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            input_embedding: self.input_embedding.zeros_like(),
            encoder: self.encoder.iter().map(Gru::zeros_like).collect(),
            output_embedding: self.output_embedding.zeros_like(),
            decoder: self.decoder.iter().map(Gru::zeros_like).collect(),
            attn_query: self.attn_query.zeros_like(),
            attn_key: self.attn_key.zeros_like(),
            attn_v: self.attn_v.zeros_like(),
            out_w: self.out_w.zeros_like(),
            out_b: self.out_b.zeros_like(),
        }
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![("input_embedding".to_string(), &self.input_embedding)];
        push_gru(&mut out, "encoder", &self.encoder);
        out.push(("output_embedding".into(), &self.output_embedding));
        push_gru(&mut out, "decoder", &self.decoder);
        out.push(("attn_query".into(), &self.attn_query));
        out.push(("attn_key".into(), &self.attn_key));
        out.push(("attn_v".into(), &self.attn_v));
        out.push(("out_w".into(), &self.out_w));
        out.push(("out_b".into(), &self.out_b));
        out
    }

    /// Same order as [`Params::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.input_embedding];
        for g in &mut self.encoder {
            out.extend(g.w.iter_mut().chain(g.u.iter_mut()).chain(g.b.iter_mut()));
        }
        out.push(&mut self.output_embedding);
        for g in &mut self.decoder {
            out.extend(g.w.iter_mut().chain(g.u.iter_mut()).chain(g.b.iter_mut()));
        }
        out.extend([&mut self.attn_query, &mut self.attn_key, &mut self.attn_v, &mut self.out_w, &mut self.out_b]);
        out
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.tensors().iter().map(|(_, m)| m.sq_norm()).sum()
    }

    pub fn add_assign(&mut self, other: &Params) {
        let src: Vec<&Matrix> = other.tensors().into_iter().map(|(_, m)| m).collect();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            dst.add_assign(s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.data.iter().all(|v| v.is_finite()))
    }
}

fn push_gru<'a>(out: &mut Vec<(String, &'a Matrix)>, prefix: &str, layers: &'a [Gru]) {
    const GATES: [&str; 3] = ["z", "r", "h"];
    for (l, g) in layers.iter().enumerate() {
        for (kind, arr) in [("w", &g.w), ("u", &g.u), ("b", &g.b)] {
            for (i, m) in arr.iter().enumerate() {
                out.push((format!("{prefix}.{l}.{kind}_{}", GATES[i]), m));
            }
        }
    }
}

/// Encoder output for one input sequence.
#[derive(Debug, Clone)]
pub struct Encoded {
    input: Vec<TokenId>,
    /// Per layer, per position.
    caches: Vec<Vec<GruCache>>,
    /// Attention keys `attn_key * h_j` of the top layer.
    keys: Vec<Vec<f64>>,
}

impl Encoded {
    fn top(&self, j: usize) -> &[f64] {
        &self.caches.last().expect("at least one layer")[j].h
    }

    pub fn len(&self) -> usize {
        self.input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }
}

/// Recurrent decoder state, one vector per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState(Vec<Vec<f64>>);

struct StepCache {
    prev: TokenId,
    grus: Vec<GruCache>,
    m: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    o: Vec<f64>,
    logp: Vec<f64>,
}

/// Recurrent encoder-decoder with additive attention, emitting identifier
/// tokens. Inference methods take `&self` and are pure.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: Params,
}

impl Seq2SeqModel {
    pub fn new(config: ModelConfig, vocab: Vocab) -> Result<Self, ModelError> {
        config.validate()?;
        let params = Params::init(&config, &vocab);
        Ok(Seq2SeqModel { config, vocab, params })
    }

    pub fn encode_text(&self, text: &str) -> Vec<TokenId> {
        self.vocab.encode_input(text, self.config.max_input_len)
    }

    pub fn encode(&self, input: &[TokenId]) -> Encoded {
        let p = &self.params;
        let input: Vec<TokenId> = if input.is_empty() { vec![super::vocab::UNK] } else { input.to_vec() };
        let h = self.config.hidden_dim;
        let mut caches: Vec<Vec<GruCache>> = Vec::with_capacity(p.encoder.len());
        for (l, gru) in p.encoder.iter().enumerate() {
            let mut state = vec![0.0; h];
            let mut layer = Vec::with_capacity(input.len());
            for (j, &tok) in input.iter().enumerate() {
                let x: &[f64] = if l == 0 { p.input_embedding.row(tok as usize) } else { &caches[l - 1][j].h };
                let c = gru.forward(x, &state);
                state.clone_from(&c.h);
                layer.push(c);
            }
            caches.push(layer);
        }
        let top = caches.last().expect("at least one layer");
        let keys = top
            .iter()
            .map(|c| {
                let mut k = vec![0.0; self.config.attention_dim];
                p.attn_key.mul_vec_add(&c.h, &mut k);
                k
            })
            .collect();
        Encoded { input, caches, keys }
    }

    /// Decoder layer `l` starts from the final state of encoder layer `l`,
    /// or zeros when the encoder is shallower.
    pub fn initial_state(&self, enc: &Encoded) -> DecoderState {
        DecoderState(
            (0..self.params.decoder.len())
                .map(|l| match enc.caches.get(l) {
                    Some(layer) => layer.last().expect("non-empty input").h.clone(),
                    None => vec![0.0; self.config.hidden_dim],
                })
                .collect(),
        )
    }

    fn step(&self, enc: &Encoded, state: &DecoderState, prev: TokenId) -> StepCache {
        let p = &self.params;
        let mut grus: Vec<GruCache> = Vec::with_capacity(p.decoder.len());
        for (l, gru) in p.decoder.iter().enumerate() {
            let c = if l == 0 {
                gru.forward(p.output_embedding.row(prev as usize), &state.0[l])
            } else {
                gru.forward(&grus[l - 1].h, &state.0[l])
            };
            grus.push(c);
        }
        let s: &[f64] = &grus.last().expect("at least one layer").h;
        let mut q = vec![0.0; self.config.attention_dim];
        p.attn_query.mul_vec_add(s, &mut q);
        let m: Vec<Vec<f64>> =
            enc.keys.iter().map(|k| k.iter().zip(&q).map(|(a, b)| (a + b).tanh()).collect()).collect();
        let scores: Vec<f64> = m.iter().map(|mj| dot(&p.attn_v.data, mj)).collect();
        let alpha: Vec<f64> = log_softmax(&scores).into_iter().map(f64::exp).collect();
        let h = self.config.hidden_dim;
        let mut o = Vec::with_capacity(2 * h);
        o.extend_from_slice(s);
        o.resize(2 * h, 0.0);
        for (j, &a) in alpha.iter().enumerate() {
            axpy(a, enc.top(j), &mut o[h..]);
        }
        let mut logits = p.out_b.data.clone();
        p.out_w.mul_vec_add(&o, &mut logits);
        let logp = log_softmax(&logits);
        StepCache { prev, grus, m, alpha, o, logp }
    }

    /// One decoding step: log-probabilities over the identifier vocabulary
    /// and the next state.
    pub fn decode_step(&self, enc: &Encoded, state: &DecoderState, prev: TokenId) -> (Vec<f64>, DecoderState) {
        let c = self.step(enc, state, prev);
        let next = DecoderState(c.grus.into_iter().map(|g| g.h).collect());
        (c.logp, next)
    }

    /// Distribution of the next identifier token after `prefix`.
    pub fn step_logprobs(&self, input: &[TokenId], prefix: &[TokenId]) -> Vec<f64> {
        let enc = self.encode(input);
        let mut state = self.initial_state(&enc);
        let mut prev = BOS;
        for &tok in prefix {
            state = self.decode_step(&enc, &state, prev).1;
            prev = tok;
        }
        self.decode_step(&enc, &state, prev).0
    }

    /// Log-probability of `target`, which must already end in EOS.
    pub fn sequence_logprob_ids(&self, input: &[TokenId], target: &[TokenId]) -> f64 {
        let enc = self.encode(input);
        let mut state = self.initial_state(&enc);
        let mut prev = BOS;
        let mut total = 0.0;
        for &tok in target {
            let (lp, next) = self.decode_step(&enc, &state, prev);
            total += lp[tok as usize];
            state = next;
            prev = tok;
        }
        total
    }

    /// Log-probability of an identifier (sentinel appended) given query text.
    pub fn sequence_logprob(&self, text: &str, identifier: &[String]) -> Result<f64, ModelError> {
        let target = self.vocab.encode_identifier(identifier)?;
        Ok(self.sequence_logprob_ids(&self.encode_text(text), &target))
    }

    /// Unconstrained greedy decode, stopping at EOS or `max_len` tokens.
    pub fn greedy_decode(&self, input: &[TokenId], max_len: usize) -> Vec<TokenId> {
        let enc = self.encode(input);
        let mut state = self.initial_state(&enc);
        let mut prev = BOS;
        let mut out = Vec::new();
        for _ in 0..max_len {
            let (lp, next) = self.decode_step(&enc, &state, prev);
            let best = argmax(&lp) as TokenId;
            if best == EOS {
                break;
            }
            out.push(best);
            state = next;
            prev = best;
        }
        out
    }

    /// Negative log-likelihood of one example; adds `weight` times its
    /// gradient into `grad`.
    pub fn accumulate_gradient(&self, input: &[TokenId], target: &[TokenId], weight: f64, grad: &mut Params) -> f64 {
        let p = &self.params;
        let h = self.config.hidden_dim;
        let enc = self.encode(input);
        let n = enc.len();

        let mut state = self.initial_state(&enc);
        let mut prev = BOS;
        let mut steps = Vec::with_capacity(target.len());
        let mut logprob = 0.0;
        for &tok in target {
            let c = self.step(&enc, &state, prev);
            logprob += c.logp[tok as usize];
            state = DecoderState(c.grus.iter().map(|g| g.h.clone()).collect());
            steps.push(c);
            prev = tok;
        }

        let mut d_top = vec![vec![0.0; h]; n];
        let mut d_keys = vec![vec![0.0; self.config.attention_dim]; n];
        let mut ds_next = vec![vec![0.0; h]; p.decoder.len()];
        for (c, &gold) in steps.iter().zip(target).rev() {
            let mut dl: Vec<f64> = c.logp.iter().map(|l| weight * l.exp()).collect();
            dl[gold as usize] -= weight;
            axpy(1.0, &dl, &mut grad.out_b.data);
            grad.out_w.add_outer(&dl, &c.o);
            let mut d_o = vec![0.0; 2 * h];
            p.out_w.mul_t_vec_add(&dl, &mut d_o);
            let (ds_out, dc) = d_o.split_at(h);
            let mut ds: Vec<f64> = ds_out.to_vec();

            let d_alpha: Vec<f64> = (0..n).map(|j| dot(dc, enc.top(j))).collect();
            for j in 0..n {
                axpy(c.alpha[j], dc, &mut d_top[j]);
            }
            let mean: f64 = c.alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
            let mut dq = vec![0.0; self.config.attention_dim];
            for j in 0..n {
                let da = c.alpha[j] * (d_alpha[j] - mean);
                if da == 0.0 {
                    continue;
                }
                axpy(da, &c.m[j], &mut grad.attn_v.data);
                let dm: Vec<f64> =
                    c.m[j].iter().zip(&p.attn_v.data).map(|(m, v)| da * v * (1.0 - m * m)).collect();
                axpy(1.0, &dm, &mut dq);
                axpy(1.0, &dm, &mut d_keys[j]);
            }
            let s_top = &c.grus.last().expect("at least one layer").h;
            grad.attn_query.add_outer(&dq, s_top);
            p.attn_query.mul_t_vec_add(&dq, &mut ds);

            let mut d_out = ds;
            for l in (0..p.decoder.len()).rev() {
                let mut dh = std::mem::take(&mut ds_next[l]);
                axpy(1.0, &d_out, &mut dh);
                let (dx, dh_prev) = p.decoder[l].backward(&c.grus[l], &dh, &mut grad.decoder[l]);
                ds_next[l] = dh_prev;
                d_out = dx;
            }
            axpy(1.0, &d_out, grad.output_embedding.row_mut(c.prev as usize));
        }

        for j in 0..n {
            grad.attn_key.add_outer(&d_keys[j], enc.top(j));
            p.attn_key.mul_t_vec_add(&d_keys[j], &mut d_top[j]);
        }

        let mut d_out = d_top;
        for l in (0..p.encoder.len()).rev() {
            let mut dh_next = match ds_next.get_mut(l) {
                Some(v) => std::mem::take(v),
                None => vec![0.0; h],
            };
            let mut d_in = Vec::with_capacity(n);
            for j in (0..n).rev() {
                let mut dh = std::mem::take(&mut d_out[j]);
                axpy(1.0, &dh_next, &mut dh);
                let (dx, dh_prev) = p.encoder[l].backward(&enc.caches[l][j], &dh, &mut grad.encoder[l]);
                d_in.push(dx);
                dh_next = dh_prev;
            }
            d_in.reverse();
            d_out = d_in;
        }
        for (j, &tok) in enc.input.iter().enumerate() {
            axpy(1.0, &d_out[j], grad.input_embedding.row_mut(tok as usize));
        }
        -logprob
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
