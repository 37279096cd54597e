use prores_tensor::{Element, Graph, KernelError, Tensor, Var};

use super::{ModelConfig, ParamSet, VariantKind};
use crate::init::init_params;
use crate::Error;

/// Shapes and constants shared by every block of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardCtx {
    pub kind: VariantKind,
    pub batch: usize,
    pub seq: usize,
    pub heads: usize,
    pub eps: f64,
    pub rope_theta: f64,
    /// Residual multiplier `c` in DeepNorm blocks; ignored otherwise.
    pub deepnorm_alpha: f64,
}

/// Graph handles for the parameters of one block.
#[derive(Debug, Clone, Copy)]
pub struct BlockWeights {
    pub attn_norm: Var,
    pub attn_out_norm: Option<Var>,
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub ffn_norm: Var,
    pub ffn_out_norm: Option<Var>,
    pub w_gate: Var,
    pub w_up: Var,
    pub w_down: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct BlockOutput {
    pub out: Var,
    /// Residual stream between the attention and FFN sublayers.
    pub mid: Var,
    /// Attention branch output before scaling by alpha.
    pub attn_branch: Var,
    /// FFN branch output before scaling by alpha.
    pub ffn_branch: Var,
}

fn attention<T: Element>(g: &mut Graph<T>, ctx: &ForwardCtx, w: &BlockWeights, h: Var) -> Result<Var, KernelError> {
    let (b, s, nh) = (ctx.batch, ctx.seq, ctx.heads);
    let q = g.matmul(h, w.wq)?;
    let k = g.matmul(h, w.wk)?;
    let v = g.matmul(h, w.wv)?;
    let q = g.split_heads(q, b, s, nh)?;
    let k = g.split_heads(k, b, s, nh)?;
    let v = g.split_heads(v, b, s, nh)?;
    let q = g.rope_rotate(q, ctx.rope_theta)?;
    let k = g.rope_rotate(k, ctx.rope_theta)?;
    let head_dim = *g.shape(q).last().expect("rank 3");
    let scores = g.batch_matmul(q, k, true)?;
    let scores = g.scale(scores, 1.0 / (head_dim as f64).sqrt())?;
    let scores = g.causal_mask_fill(scores)?;
    let p = g.softmax(scores)?;
    let o = g.batch_matmul(p, v, false)?;
    let o = g.merge_heads(o, b, s, nh)?;
    g.matmul(o, w.wo)
}

fn swiglu<T: Element>(g: &mut Graph<T>, w: &BlockWeights, h: Var) -> Result<Var, KernelError> {
    let gate = g.matmul(h, w.w_gate)?;
    let gate = g.silu(gate)?;
    let up = g.matmul(h, w.w_up)?;
    let m = g.mul(gate, up)?;
    g.matmul(m, w.w_down)
}

/// One residual sublayer. Returns `(new stream, unscaled branch)`.
#[allow(clippy::too_many_arguments)]
fn sublayer<T: Element>(
    g: &mut Graph<T>,
    ctx: &ForwardCtx,
    x: Var,
    norm: Var,
    out_norm: Option<Var>,
    alpha: f64,
    layer: usize,
    branch: impl FnOnce(&mut Graph<T>, Var) -> Result<Var, KernelError>,
) -> Result<(Var, Var), KernelError> {
    let eps = ctx.eps;
    match ctx.kind {
        VariantKind::PreLn | VariantKind::Lns | VariantKind::SandwichLn => {
            let mut h = g.rms_norm(x, Some(norm), eps)?;
            if ctx.kind == VariantKind::Lns {
                h = g.scale(h, 1.0 / (layer as f64).sqrt())?;
            }
            let mut f = branch(g, h)?;
            if ctx.kind == VariantKind::SandwichLn {
                let gain = out_norm.ok_or_else(|| KernelError::InvalidArgument {
                    op: "sandwich_ln",
                    reason: "missing output norm".into(),
                })?;
                f = g.rms_norm(f, Some(gain), eps)?;
            }
            let scaled = g.scale(f, alpha)?;
            Ok((g.add(x, scaled)?, f))
        }
        VariantKind::PostLn | VariantKind::DeepNorm => {
            let f = branch(g, x)?;
            let scaled = g.scale(f, alpha)?;
            let base = if ctx.kind == VariantKind::DeepNorm {
                g.scale(x, ctx.deepnorm_alpha)?
            } else {
                x
            };
            let sum = g.add(base, scaled)?;
            Ok((g.rms_norm(sum, Some(norm), eps)?, f))
        }
    }
}

/// Attention then FFN sublayer of block `layer` (1-based), each branch
/// multiplied by its own residual scale.
pub fn block_forward<T: Element>(
    g: &mut Graph<T>,
    ctx: &ForwardCtx,
    w: &BlockWeights,
    x: Var,
    layer: usize,
    alphas: (f64, f64),
) -> Result<BlockOutput, KernelError> {
    let (mid, attn_branch) = sublayer(g, ctx, x, w.attn_norm, w.attn_out_norm, alphas.0, layer, |g, h| {
        attention(g, ctx, w, h)
    })?;
    let (out, ffn_branch) = sublayer(g, ctx, mid, w.ffn_norm, w.ffn_out_norm, alphas.1, layer, |g, h| {
        swiglu(g, w, h)
    })?;
    Ok(BlockOutput {
        out,
        mid,
        attn_branch,
        ffn_branch,
    })
}

/// Source of the residual scales for one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaMode {
    /// Scales from the configured schedule at this step.
    Step(u64),
    /// The same scale on every branch.
    Fixed(f64),
}

/// Per-block hidden states captured during one forward pass.
#[derive(Debug, Clone)]
pub struct BlockActivations<T> {
    /// Embedding output followed by the output of every block: `L + 1` entries.
    pub states: Vec<Tensor<T>>,
    /// Attention and FFN branch outputs before scaling, interleaved: `2L` entries.
    pub branches: Vec<Tensor<T>>,
    /// `[batch * seq, vocab]`.
    pub logits: Tensor<T>,
}

struct Built {
    vars: Vec<Var>,
    states: Vec<Var>,
    branches: Vec<Var>,
    logits: Var,
}

/// Configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamSet<T>,
}

impl<T: Element> Model<T> {
    /// Freshly initialized model using the config's own init spec.
    pub fn init(config: ModelConfig) -> Result<Self, Error> {
        let params = init_params(&config, &config.init)?;
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: ParamSet<T>) -> Result<Self, Error> {
        config.validate()?;
        let layout = config.param_layout();
        let ok = layout.len() == params.len()
            && layout
                .iter()
                .zip(params.iter())
                .all(|((n, s, _), e)| *n == e.name && s.as_slice() == e.tensor.shape());
        if !ok {
            return Err(Error::Config("parameters do not match the model layout".into()));
        }
        Ok(Self { config, params })
    }

    fn alphas(&self, layer: usize, mode: AlphaMode) -> Result<(f64, f64), Error> {
        match mode {
            AlphaMode::Step(t) => self.config.block_alphas(layer, t),
            AlphaMode::Fixed(a) => Ok((a, a)),
        }
    }

    fn build(&self, g: &mut Graph<T>, tokens: &[usize], batch: usize, mode: AlphaMode, trainable: bool) -> Result<Built, Error> {
        let cfg = &self.config;
        if batch == 0 || tokens.is_empty() || tokens.len() % batch != 0 {
            return Err(Error::Config(format!(
                "{} tokens cannot form {batch} sequences",
                tokens.len()
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= cfg.vocab) {
            return Err(Error::Config(format!("token id {bad} outside vocab {}", cfg.vocab)));
        }
        let vars: Vec<Var> = self
            .params
            .iter()
            .map(|e| {
                if trainable {
                    g.param(e.tensor.clone())
                } else {
                    g.constant(e.tensor.clone())
                }
            })
            .collect();
        let var = |name: &str| -> Result<Var, Error> {
            self.params
                .position(name)
                .map(|i| vars[i])
                .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
        };
        let step = match mode {
            AlphaMode::Step(t) => t,
            AlphaMode::Fixed(_) => 0,
        };
        let ctx = ForwardCtx {
            kind: cfg.variant.kind,
            batch,
            seq: tokens.len() / batch,
            heads: cfg.n_heads,
            eps: cfg.norm_eps,
            rope_theta: cfg.rope_theta,
            deepnorm_alpha: cfg.deepnorm_constants().0,
        };
        let embed = var("embed")?;
        let mut x = g
            .embedding_lookup(embed, tokens)
            .map_err(|source| Error::Activation { layer: 0, step, source })?;
        let mut states = vec![x];
        let mut branches = Vec::with_capacity(2 * cfg.layers);
        let sandwich = cfg.variant.kind == VariantKind::SandwichLn;
        for l in 1..=cfg.layers {
            let p = format!("blocks.{}", l - 1);
            let w = BlockWeights {
                attn_norm: var(&format!("{p}.attn_norm"))?,
                attn_out_norm: if sandwich { Some(var(&format!("{p}.attn_out_norm"))?) } else { None },
                wq: var(&format!("{p}.attn.wq"))?,
                wk: var(&format!("{p}.attn.wk"))?,
                wv: var(&format!("{p}.attn.wv"))?,
                wo: var(&format!("{p}.attn.wo"))?,
                ffn_norm: var(&format!("{p}.ffn_norm"))?,
                ffn_out_norm: if sandwich { Some(var(&format!("{p}.ffn_out_norm"))?) } else { None },
                w_gate: var(&format!("{p}.ffn.w_gate"))?,
                w_up: var(&format!("{p}.ffn.w_up"))?,
                w_down: var(&format!("{p}.ffn.w_down"))?,
            };
            let alphas = self.alphas(l, mode)?;
            let o = block_forward(g, &ctx, &w, x, l, alphas)
                .map_err(|source| Error::Activation { layer: l, step, source })?;
            x = o.out;
            states.push(x);
            branches.push(o.attn_branch);
            branches.push(o.ffn_branch);
        }
        let head_err = |source| Error::Activation {
            layer: cfg.layers + 1,
            step,
            source,
        };
        if cfg.final_norm {
            let gain = var("final_norm")?;
            x = g.rms_norm(x, Some(gain), cfg.norm_eps).map_err(head_err)?;
        }
        let logits = if cfg.tied_embeddings {
            g.matmul_t(x, embed)
        } else {
            let head = var("head")?;
            g.matmul(x, head)
        }
        .map_err(head_err)?;
        Ok(Built {
            vars,
            states,
            branches,
            logits,
        })
    }

    /// Logits of shape `[batch * seq, vocab]`.
    pub fn logits(&self, tokens: &[usize], batch: usize, mode: AlphaMode) -> Result<Tensor<T>, Error> {
        let mut g = Graph::new();
        let b = self.build(&mut g, tokens, batch, mode, false)?;
        Ok(g.value(b.logits).clone())
    }

    pub fn activations(&self, tokens: &[usize], batch: usize, mode: AlphaMode) -> Result<BlockActivations<T>, Error> {
        let mut g = Graph::new();
        let b = self.build(&mut g, tokens, batch, mode, false)?;
        Ok(BlockActivations {
            states: b.states.iter().map(|&v| g.value(v).clone()).collect(),
            branches: b.branches.iter().map(|&v| g.value(v).clone()).collect(),
            logits: g.value(b.logits).clone(),
        })
    }

    /// Mean next-token cross-entropy in nats.
    pub fn loss(&self, inputs: &[usize], targets: &[usize], batch: usize, mode: AlphaMode) -> Result<f64, Error> {
        let mut g = Graph::new();
        let b = self.build(&mut g, inputs, batch, mode, false)?;
        let loss = g.cross_entropy(b.logits, targets)?;
        Ok(g.value(loss).item().as_f64())
    }

    /// Loss and one gradient per parameter, in parameter order.
    pub fn loss_and_grads(
        &self,
        inputs: &[usize],
        targets: &[usize],
        batch: usize,
        mode: AlphaMode,
    ) -> Result<(f64, Vec<Tensor<T>>), Error> {
        let mut g = Graph::new();
        let b = self.build(&mut g, inputs, batch, mode, true)?;
        let loss = g.cross_entropy(b.logits, targets)?;
        let value = g.value(loss).item().as_f64();
        let mut grads = g.backward(loss)?;
        let mut out = Vec::with_capacity(b.vars.len());
        for (&v, e) in b.vars.iter().zip(self.params.iter()) {
            // Unreached parameters (e.g. a branch behind a zero scale) get zeros.
            out.push(grads.take(v).unwrap_or_else(|_| Tensor::zeros(e.tensor.shape())));
        }
        Ok((value, out))
    }
}

/// `exp(loss)` in nats, saturating to infinity.
#[allow(dead_code)]
pub fn perplexity(loss: f64) -> f64 {
    loss.exp()
}
