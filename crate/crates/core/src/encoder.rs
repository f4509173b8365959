//! Post-norm transformer encoder with learned positional embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::layers::{
    dropout, dropout_backward, gelu, gelu_backward, softmax_rows, softmax_rows_backward, LayerNorm,
    LayerNormCache,
};
use crate::neural::{copy_parameters, Embedding, Linear, Matrix, Module, Parameter, RandomSource, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout_p: f32,
}

impl EncoderConfig {
    pub fn new(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 256,
            max_len: 128,
            dropout_p: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.vocab_size,
            self.d_model,
            self.n_heads,
            self.n_layers,
            self.d_ff,
            self.max_len,
        ];
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("all encoder dimensions must be positive: {self:?}")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} outside [0,1)", self.dropout_p)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Cuts `ids` to `max_len`, warning when anything is dropped.
pub fn truncate(ids: &[usize], max_len: usize, what: &str) -> Vec<usize> {
    if ids.len() > max_len {
        log::warn!("{what}: truncating {} tokens to {max_len}", ids.len());
        ids[..max_len].to_vec()
    } else {
        ids.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<T = f32> {
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub output: Linear<T>,
    pub attn_norm: LayerNorm<T>,
    pub ff_in: Linear<T>,
    pub ff_out: Linear<T>,
    pub ff_norm: LayerNorm<T>,
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    input: Matrix<T>,
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    probs: Vec<Matrix<T>>,
    context: Matrix<T>,
    attn_mask: Option<Vec<T>>,
    attn_norm: LayerNormCache<T>,
    hidden: Matrix<T>,
    ff_pre: Matrix<T>,
    ff_act: Matrix<T>,
    ff_mask: Option<Vec<T>>,
    ff_norm: LayerNormCache<T>,
}

impl<T: Scalar> EncoderLayer<T> {
    fn new(prefix: &str, config: &EncoderConfig, rng: &mut RandomSource) -> Self {
        let d = config.d_model;
        EncoderLayer {
            query: Linear::new(&format!("{prefix}.attn.query"), d, d, rng),
            // A key bias shifts every score in a row equally; softmax cancels it.
            key: Linear::without_bias(&format!("{prefix}.attn.key"), d, d, rng),
            value: Linear::new(&format!("{prefix}.attn.value"), d, d, rng),
            output: Linear::new(&format!("{prefix}.attn.output"), d, d, rng),
            attn_norm: LayerNorm::new(&format!("{prefix}.attn_norm"), d),
            ff_in: Linear::new(&format!("{prefix}.ff.input"), d, config.d_ff, rng),
            ff_out: Linear::new(&format!("{prefix}.ff.output"), config.d_ff, d, rng),
            ff_norm: LayerNorm::new(&format!("{prefix}.ff_norm"), d),
        }
    }

    fn forward(
        &self,
        x: &Matrix<T>,
        n_heads: usize,
        p: f32,
        mut rng: Option<&mut RandomSource>,
    ) -> Result<(Matrix<T>, LayerCache<T>)> {
        let q = self.query.forward(x)?;
        let k = self.key.forward(x)?;
        let v = self.value.forward(x)?;
        let dk = x.cols() / n_heads;
        let scale = T::from_f64(1.0 / (dk as f64).sqrt());
        let mut context = Matrix::zeros(x.rows(), x.cols());
        let mut probs = Vec::with_capacity(n_heads);
        for h in 0..n_heads {
            let qh = q.columns(h * dk, dk);
            let kh = k.columns(h * dk, dk);
            let vh = v.columns(h * dk, dk);
            let mut scores = qh.matmul_bt(&kh)?;
            scores.scale(scale);
            let ph = softmax_rows(&scores);
            context.add_columns(h * dk, &ph.matmul(&vh)?);
            probs.push(ph);
        }
        let attended = self.output.forward(&context)?;
        let (attended, attn_mask) = dropout(&attended, p, rng.as_deref_mut());
        let (hidden, attn_norm) = self.attn_norm.forward(&x.add(&attended)?)?;
        let ff_pre = self.ff_in.forward(&hidden)?;
        let ff_act = gelu(&ff_pre);
        let ff = self.ff_out.forward(&ff_act)?;
        let (ff, ff_mask) = dropout(&ff, p, rng.as_deref_mut());
        let (out, ff_norm) = self.ff_norm.forward(&hidden.add(&ff)?)?;
        Ok((
            out,
            LayerCache {
                input: x.clone(),
                q,
                k,
                v,
                probs,
                context,
                attn_mask,
                attn_norm,
                hidden,
                ff_pre,
                ff_act,
                ff_mask,
                ff_norm,
            },
        ))
    }

    fn backward(&mut self, cache: &LayerCache<T>, dout: &Matrix<T>, n_heads: usize) -> Result<Matrix<T>> {
        let d_res2 = self.ff_norm.backward(&cache.ff_norm, dout)?;
        let d_ff = dropout_backward(cache.ff_mask.as_deref(), &d_res2);
        let d_act = self.ff_out.backward(&cache.ff_act, &d_ff)?;
        let d_pre = gelu_backward(&cache.ff_pre, &d_act)?;
        let mut d_hidden = d_res2;
        d_hidden.add_assign(&self.ff_in.backward(&cache.hidden, &d_pre)?)?;

        let d_res1 = self.attn_norm.backward(&cache.attn_norm, &d_hidden)?;
        let d_att = dropout_backward(cache.attn_mask.as_deref(), &d_res1);
        let d_context = self.output.backward(&cache.context, &d_att)?;

        let (n, d) = cache.input.shape();
        let dk = d / n_heads;
        let scale = T::from_f64(1.0 / (dk as f64).sqrt());
        let mut dq = Matrix::zeros(n, d);
        let mut dkey = Matrix::zeros(n, d);
        let mut dv = Matrix::zeros(n, d);
        for h in 0..n_heads {
            let qh = cache.q.columns(h * dk, dk);
            let kh = cache.k.columns(h * dk, dk);
            let vh = cache.v.columns(h * dk, dk);
            let ph = &cache.probs[h];
            let d_oh = d_context.columns(h * dk, dk);
            let d_ph = d_oh.matmul_bt(&vh)?;
            dv.add_columns(h * dk, &ph.matmul_at(&d_oh)?);
            let mut d_scores = softmax_rows_backward(ph, &d_ph)?;
            d_scores.scale(scale);
            dq.add_columns(h * dk, &d_scores.matmul(&kh)?);
            dkey.add_columns(h * dk, &d_scores.matmul_at(&qh)?);
        }
        let mut dx = d_res1;
        dx.add_assign(&self.query.backward(&cache.input, &dq)?)?;
        dx.add_assign(&self.key.backward(&cache.input, &dkey)?)?;
        dx.add_assign(&self.value.backward(&cache.input, &dv)?)?;
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for EncoderLayer<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out = Vec::new();
        out.extend(self.query.parameters());
        out.extend(self.key.parameters());
        out.extend(self.value.parameters());
        out.extend(self.output.parameters());
        out.extend(self.attn_norm.parameters());
        out.extend(self.ff_in.parameters());
        out.extend(self.ff_out.parameters());
        out.extend(self.ff_norm.parameters());
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = Vec::new();
        out.extend(self.query.parameters_mut());
        out.extend(self.key.parameters_mut());
        out.extend(self.value.parameters_mut());
        out.extend(self.output.parameters_mut());
        out.extend(self.attn_norm.parameters_mut());
        out.extend(self.ff_in.parameters_mut());
        out.extend(self.ff_out.parameters_mut());
        out.extend(self.ff_norm.parameters_mut());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T = f32> {
    pub config: EncoderConfig,
    pub token_embedding: Embedding<T>,
    pub position_embedding: Embedding<T>,
    pub layers: Vec<EncoderLayer<T>>,
}

/// Everything `Encoder::backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache<T = f32> {
    ids: Vec<usize>,
    embed_mask: Option<Vec<T>>,
    layers: Vec<LayerCache<T>>,
}

impl<T: Scalar> Encoder<T> {
    pub fn new(config: EncoderConfig, rng: &mut RandomSource) -> Result<Self> {
        config.validate()?;
        let token_embedding = Embedding::new(
            "encoder.token_embedding",
            config.vocab_size,
            config.d_model,
            rng,
        );
        let position_embedding = Embedding::new(
            "encoder.position_embedding",
            config.max_len,
            config.d_model,
            rng,
        );
        let layers = (0..config.n_layers)
            .map(|i| EncoderLayer::new(&format!("encoder.layers.{i}"), &config, rng))
            .collect();
        Ok(Encoder {
            config,
            token_embedding,
            position_embedding,
            layers,
        })
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::EmptySequence);
        }
        if ids.len() > self.config.max_len {
            return Err(Error::Config(format!(
                "sequence of {} tokens exceeds max_len {}",
                ids.len(),
                self.config.max_len
            )));
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(Error::IdOutOfRange {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Forward pass; dropout is active only when `rng` is given.
    pub fn forward(
        &self,
        ids: &[usize],
        mut rng: Option<&mut RandomSource>,
    ) -> Result<(Matrix<T>, EncoderCache<T>)> {
        self.check_ids(ids)?;
        let positions: Vec<usize> = (0..ids.len()).collect();
        let mut x = self.token_embedding.forward(ids)?;
        x.add_assign(&self.position_embedding.forward(&positions)?)?;
        let (mut x, embed_mask) = dropout(&x, self.config.dropout_p, rng.as_deref_mut());
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) =
                layer.forward(&x, self.config.n_heads, self.config.dropout_p, rng.as_deref_mut())?;
            caches.push(cache);
            x = out;
        }
        Ok((
            x,
            EncoderCache {
                ids: ids.to_vec(),
                embed_mask,
                layers: caches,
            },
        ))
    }

    /// Contextual vectors, one row per input id (no dropout).
    pub fn encode(&self, ids: &[usize]) -> Result<Matrix<T>> {
        Ok(self.forward(ids, None)?.0)
    }

    pub fn backward(&mut self, cache: &EncoderCache<T>, dout: &Matrix<T>) -> Result<()> {
        let n_heads = self.config.n_heads;
        let mut d = dout.clone();
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers).rev() {
            d = layer.backward(lc, &d, n_heads)?;
        }
        let d = dropout_backward(cache.embed_mask.as_deref(), &d);
        self.token_embedding.backward(&cache.ids, &d);
        let positions: Vec<usize> = (0..cache.ids.len()).collect();
        self.position_embedding.backward(&positions, &d);
        Ok(())
    }

    /// Copies every tensor from `other`, which must share the configuration.
    pub fn copy_weights_from<S: Scalar>(&mut self, other: &Encoder<S>) -> Result<()> {
        if self.config != other.config {
            return Err(Error::Config("encoder configurations differ".into()));
        }
        copy_parameters(other, self)
    }

    /// The same network in another precision.
    pub fn cast<U: Scalar>(&self) -> Result<Encoder<U>> {
        let mut out = Encoder::new(self.config, &mut RandomSource::new(0))?;
        copy_parameters(self, &mut out)?;
        Ok(out)
    }
}

impl<T: Scalar> Module<T> for Encoder<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out = vec![&self.token_embedding.table, &self.position_embedding.table];
        for layer in &self.layers {
            out.extend(layer.parameters());
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = vec![
            &mut self.token_embedding.table,
            &mut self.position_embedding.table,
        ];
        for layer in &mut self.layers {
            out.extend(layer.parameters_mut());
        }
        out
    }
}
