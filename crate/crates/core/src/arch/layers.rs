//! Layer stacks assembled from the attention and relational primitives:
//! encoder, multi-context decoder, and the abstractor.

use crate::arch::config::{AbstractorConfig, EncDecConfig};
use crate::engine::{ParamStore, Rng, Scalar, Tape, Var};
use crate::error::{LabError, Result};
use crate::nn::attention::ensure_batched;
use crate::nn::{
    causal_mask, multi_head_attention, sinusoidal_bank, AttentionParams, FeedForwardParams,
    LayerNormParams, ScoreActivation, SymbolBank, SymbolMode,
};
use crate::relational::{position_relative_rca, relational_cross_attention, RcaParams};

/// Residual + optional norm in the configured order. Post-norm computes
/// LayerNorm(x + f(x)); pre-norm computed x + f(LayerNorm(x)) by the caller
/// passing the normalized input, so here it is just x + f.
fn residual_norm<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    x: Var,
    fx: Var,
    ln: &LayerNormParams,
    pre_norm: bool,
) -> Result<Var> {
    let sum = tape.add(x, fx)?;
    if pre_norm {
        Ok(sum)
    } else {
        ln.apply(tape, store, sum)
    }
}

fn maybe_norm<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    x: Var,
    ln: &LayerNormParams,
    pre_norm: bool,
) -> Result<Var> {
    if pre_norm {
        ln.apply(tape, store, x)
    } else {
        Ok(x)
    }
}

#[derive(Debug)]
struct EncLayer {
    attn: AttentionParams,
    ln_attn: LayerNormParams,
    ffn: FeedForwardParams,
    ln_ffn: LayerNormParams,
}

#[derive(Debug)]
pub struct EncoderParams {
    pub cfg: EncDecConfig,
    pub max_len: usize,
    layers: Vec<EncLayer>,
}

impl EncoderParams {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cfg: &EncDecConfig,
        max_len: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let d = cfg.d_model;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let p = format!("{name}.l{l}");
            layers.push(EncLayer {
                attn: AttentionParams::init(store, &format!("{p}.self"), d, d, d, cfg.n_heads, cfg.d_p, rng)?,
                ln_attn: LayerNormParams::init(store, &format!("{p}.ln1"), d)?,
                ffn: FeedForwardParams::init(store, &format!("{p}.ffn"), d, cfg.d_ff, rng)?,
                ln_ffn: LayerNormParams::init(store, &format!("{p}.ln2"), d)?,
            });
        }
        Ok(EncoderParams {
            cfg: cfg.clone(),
            max_len,
            layers,
        })
    }

    pub fn param_count<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.attn.param_count(store)
                    + l.ffn.param_count(store)
                    + 2 * (2 * self.cfg.d_model)
            })
            .sum()
    }

    /// Adds sinusoidal positions to the embedded input and runs the stack.
    /// `x` is [B, m, d_model] or [m, d_model].
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
    ) -> Result<Var> {
        let (xb, _) = ensure_batched(tape, x)?;
        let m = tape.shape(xb)[1];
        if m > self.max_len {
            return Err(LabError::capacity(format!(
                "encoder input length {m} exceeds max_len {}",
                self.max_len
            )));
        }
        let pos = sinusoidal_bank::<T>(m, self.cfg.d_model)?;
        let posv = tape.constant(&pos);
        let mut h = tape.add_broadcast(xb, posv)?;
        let pre = self.cfg.pre_norm;
        for layer in &self.layers {
            let q = maybe_norm(tape, store, h, &layer.ln_attn, pre)?;
            let a = multi_head_attention(
                tape, store, &layer.attn, q, q, q, None, ScoreActivation::Softmax,
            )?;
            h = residual_norm(tape, store, h, a, &layer.ln_attn, pre)?;
            let f_in = maybe_norm(tape, store, h, &layer.ln_ffn, pre)?;
            let f = layer.ffn.apply(tape, store, f_in)?;
            h = residual_norm(tape, store, h, f, &layer.ln_ffn, pre)?;
        }
        Ok(h)
    }
}

#[derive(Debug)]
struct DecLayer {
    self_attn: AttentionParams,
    ln_self: LayerNormParams,
    cross: Vec<AttentionParams>,
    ln_cross: Vec<LayerNormParams>,
    ffn: FeedForwardParams,
    ln_ffn: LayerNormParams,
}

/// Decoder over one or more context sequences: causal self-attention, then
/// cross-attention to each context in declared order, then feedforward,
/// every sublayer with residual + norm. One context reproduces the standard
/// decoder stack; context order is semantic.
#[derive(Debug)]
pub struct DecoderParams {
    pub cfg: EncDecConfig,
    pub context_widths: Vec<usize>,
    layers: Vec<DecLayer>,
}

impl DecoderParams {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cfg: &EncDecConfig,
        context_widths: &[usize],
        rng: &mut Rng,
    ) -> Result<Self> {
        if context_widths.is_empty() {
            return Err(LabError::config(format!(
                "decoder {name} needs at least one context"
            )));
        }
        let d = cfg.d_model;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let p = format!("{name}.l{l}");
            let mut cross = Vec::new();
            let mut ln_cross = Vec::new();
            for (i, &w) in context_widths.iter().enumerate() {
                cross.push(AttentionParams::init(
                    store, &format!("{p}.cross{i}"), d, w, d, cfg.n_heads, cfg.d_p, rng,
                )?);
                ln_cross.push(LayerNormParams::init(store, &format!("{p}.lnc{i}"), d)?);
            }
            layers.push(DecLayer {
                self_attn: AttentionParams::init(store, &format!("{p}.self"), d, d, d, cfg.n_heads, cfg.d_p, rng)?,
                ln_self: LayerNormParams::init(store, &format!("{p}.lns"), d)?,
                cross,
                ln_cross,
                ffn: FeedForwardParams::init(store, &format!("{p}.ffn"), d, cfg.d_ff, rng)?,
                ln_ffn: LayerNormParams::init(store, &format!("{p}.lnf"), d)?,
            });
        }
        Ok(DecoderParams {
            cfg: cfg.clone(),
            context_widths: context_widths.to_vec(),
            layers,
        })
    }

    /// `y` is the embedded target [B, t, d_model]; contexts are [B, m_i, w_i].
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        y: Var,
        contexts: &[Var],
    ) -> Result<Var> {
        if contexts.len() != self.context_widths.len() {
            return Err(LabError::dim(
                "decoder contexts",
                &[self.context_widths.len()],
                &[contexts.len()],
            ));
        }
        let (mut h, _) = ensure_batched(tape, y)?;
        let t = tape.shape(h)[1];
        let mask = causal_mask(t);
        let pre = self.cfg.pre_norm;
        for layer in &self.layers {
            let q = maybe_norm(tape, store, h, &layer.ln_self, pre)?;
            let sa = multi_head_attention(
                tape, store, &layer.self_attn, q, q, q, Some(&mask), ScoreActivation::Softmax,
            )?;
            h = residual_norm(tape, store, h, sa, &layer.ln_self, pre)?;
            for (i, &ctx) in contexts.iter().enumerate() {
                let q = maybe_norm(tape, store, h, &layer.ln_cross[i], pre)?;
                let ca = multi_head_attention(
                    tape, store, &layer.cross[i], q, ctx, ctx, None, ScoreActivation::Softmax,
                )?;
                h = residual_norm(tape, store, h, ca, &layer.ln_cross[i], pre)?;
            }
            let f_in = maybe_norm(tape, store, h, &layer.ln_ffn, pre)?;
            let f = layer.ffn.apply(tape, store, f_in)?;
            h = residual_norm(tape, store, h, f, &layer.ln_ffn, pre)?;
        }
        Ok(h)
    }
}

#[derive(Debug)]
pub enum AbsInterface {
    /// Relational cross-attention: scores from the input stream, values
    /// from the previous abstract state.
    Relational(RcaParams),
    /// Standard cross-attention with queries from the previous abstract
    /// state and keys/values from the input stream (the ablation).
    Standard(AttentionParams),
}

#[derive(Debug)]
pub struct AbsLayer {
    pub interface: AbsInterface,
    ln_rel: Option<LayerNormParams>,
    self_attn: Option<AttentionParams>,
    ln_self: Option<LayerNormParams>,
    pub(crate) ffn: FeedForwardParams,
}

/// Stack of abstractor layers over a symbol bank. Layer order: relational
/// (or standard) cross-attention, optional residual, optional norm, optional
/// self-attention sublayer (residual + norm), feedforward. Nothing follows
/// the feedforward.
#[derive(Debug)]
pub struct AbstractorParams<T: Scalar> {
    pub cfg: AbstractorConfig,
    pub symbols: SymbolBank<T>,
    pub(crate) layers: Vec<AbsLayer>,
}

impl<T: Scalar> AbstractorParams<T> {
    pub fn init(
        store: &mut ParamStore<T>,
        name: &str,
        cfg: &AbstractorConfig,
        d_in: usize,
        max_len: usize,
        standard_interface: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if standard_interface && cfg.symbol_mode == SymbolMode::PositionRelative {
            return Err(LabError::config(
                "standard interface needs addressable symbols",
            ));
        }
        let symbols = SymbolBank::init(
            store,
            &format!("{name}.symbols"),
            cfg.symbol_mode,
            max_len,
            cfg.d_s,
            rng,
        )?;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let p = format!("{name}.l{l}");
            let interface = if standard_interface {
                AbsInterface::Standard(AttentionParams::init(
                    store, &format!("{p}.att"), cfg.d_s, d_in, cfg.d_s, cfg.d_r, cfg.d_p, rng,
                )?)
            } else {
                let mut rca = RcaParams::init(
                    store,
                    &format!("{p}.rca"),
                    d_in,
                    cfg.d_s,
                    cfg.d_s,
                    cfg.d_r,
                    cfg.d_p,
                    cfg.head_value_width(),
                    cfg.sigma_rel,
                    cfg.symmetric,
                    rng,
                )?;
                rca.scale_scores = cfg.scale_scores;
                rca.mask_diagonal = cfg.mask_diagonal;
                AbsInterface::Relational(rca)
            };
            let ln_rel = cfg
                .use_layer_norm
                .then(|| LayerNormParams::init(store, &format!("{p}.ln1"), cfg.d_s))
                .transpose()?;
            let self_attn = cfg
                .use_self_attention
                .then(|| {
                    AttentionParams::init(
                        store, &format!("{p}.sa"), cfg.d_s, cfg.d_s, cfg.d_s, cfg.d_r, cfg.d_p, rng,
                    )
                })
                .transpose()?;
            let ln_self = (cfg.use_layer_norm && cfg.use_self_attention)
                .then(|| LayerNormParams::init(store, &format!("{p}.ln2"), cfg.d_s))
                .transpose()?;
            let ffn = FeedForwardParams::init(store, &format!("{p}.ffn"), cfg.d_s, cfg.d_ff, rng)?;
            layers.push(AbsLayer {
                interface,
                ln_rel,
                self_attn,
                ln_self,
                ffn,
            });
        }
        Ok(AbstractorParams {
            cfg: cfg.clone(),
            symbols,
            layers,
        })
    }

    /// `x` is [B, m, d_in] or [m, d_in]; returns abstract states
    /// [B, m, d_s] (or [m, d_s]), a relation-weighted mixture of symbols.
    pub fn forward(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let (xb, was_batched) = ensure_batched(tape, x)?;
        let (b, m) = (tape.shape(xb)[0], tape.shape(xb)[1]);
        // Position-relative symbols are addressed by offset inside the first
        // relational layer; there is no absolute A^(0), so the first
        // residual is skipped in that mode.
        let mut a_prev: Option<Var> = if self.cfg.symbol_mode == SymbolMode::PositionRelative {
            None
        } else {
            let s = self.symbols.bind(tape, store, m)?;
            Some(tape.tile_batch(s, b)?)
        };
        for layer in &self.layers {
            let rel = match (&layer.interface, a_prev) {
                (AbsInterface::Relational(rca), None) => {
                    position_relative_rca(tape, store, rca, xb, &self.symbols)?
                }
                (AbsInterface::Relational(rca), Some(a)) => {
                    relational_cross_attention(tape, store, rca, xb, a)?
                }
                (AbsInterface::Standard(att), Some(a)) => multi_head_attention(
                    tape, store, att, a, xb, xb, None, ScoreActivation::Softmax,
                )?,
                (AbsInterface::Standard(_), None) => {
                    return Err(LabError::contract(
                        "standard interface needs addressable symbols",
                    ))
                }
            };
            let mut h = match (self.cfg.use_residual, a_prev) {
                (true, Some(a)) => tape.add(rel, a)?,
                _ => rel,
            };
            if let Some(ln) = &layer.ln_rel {
                h = ln.apply(tape, store, h)?;
            }
            if let Some(sa) = &layer.self_attn {
                let mut s = multi_head_attention(
                    tape, store, sa, h, h, h, None, ScoreActivation::Softmax,
                )?;
                if self.cfg.use_residual {
                    s = tape.add(s, h)?;
                }
                if let Some(ln) = &layer.ln_self {
                    s = ln.apply(tape, store, s)?;
                }
                h = s;
            }
            a_prev = Some(layer.ffn.apply(tape, store, h)?);
        }
        let out = a_prev.expect("at least one layer");
        if was_batched {
            Ok(out)
        } else {
            let sh = tape.shape(out).to_vec();
            tape.reshape(out, sh[1..].to_vec())
        }
    }

    pub fn param_count(&self, store: &ParamStore<T>) -> usize {
        let mut n = self.symbols.param_count::<T>(store);
        for layer in &self.layers {
            n += match &layer.interface {
                AbsInterface::Relational(r) => r.param_count(store),
                AbsInterface::Standard(a) => a.param_count(store),
            };
            n += layer.ffn.param_count(store);
            n += layer.self_attn.as_ref().map_or(0, |a| a.param_count(store));
            n += layer.ln_rel.as_ref().map_or(0, |_| 2 * self.cfg.d_s);
            n += layer.ln_self.as_ref().map_or(0, |_| 2 * self.cfg.d_s);
        }
        n
    }
}
