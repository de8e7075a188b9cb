use crate::data::{Domain, InteractionLog, RankingExample};
use crate::error::{Error, Result};
use crate::nn::{matmul_raw, sigmoid_scalar, Var};
use crate::{Real, Tape, Tensor};

use super::{AttackerParams, ModelConfig, RecommenderParams};

/// Tape handles for one MLP's parameters.
#[derive(Debug, Clone, Copy)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl MlpVars {
    fn load(tape: &mut Tape, mlp: &super::Mlp) -> Self {
        MlpVars {
            w1: tape.leaf(&mlp.w1),
            b1: tape.leaf(&mlp.b1),
            w2: tape.leaf(&mlp.w2),
            b2: tape.leaf(&mlp.b2),
        }
    }

    fn list(&self) -> [Var; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

/// Tape handles for all recommender parameters, mirroring
/// [`RecommenderParams`].
#[derive(Debug, Clone)]
pub struct RecommenderVars {
    pub emb_source: Var,
    pub emb_target: Var,
    pub mlp_source: MlpVars,
    pub mlp_target: MlpVars,
    pub h: Vec<Var>,
    pub w_t: Vec<Var>,
}

impl RecommenderVars {
    pub fn load(tape: &mut Tape, params: &RecommenderParams) -> Self {
        RecommenderVars {
            emb_source: tape.leaf(&params.item_emb_source),
            emb_target: tape.leaf(&params.item_emb_target),
            mlp_source: MlpVars::load(tape, &params.mlp_source),
            mlp_target: MlpVars::load(tape, &params.mlp_target),
            h: params.h.iter().map(|t| tape.leaf(t)).collect(),
            w_t: params.w_t.iter().map(|t| tape.leaf(t)).collect(),
        }
    }

    /// Vars in the same order as [`RecommenderParams::trainable`].
    pub fn trainable(&self, config: &ModelConfig) -> Vec<Var> {
        let mut out = vec![self.emb_source, self.emb_target];
        out.extend(self.mlp_source.list());
        out.extend(self.mlp_target.list());
        out.extend(self.w_t.iter().copied());
        if config.transfer_enabled {
            out.extend(self.h.iter().copied());
        }
        out
    }
}

/// Tape handles for the attacker heads, mirroring [`AttackerParams`].
#[derive(Debug, Clone)]
pub struct AttackerVars {
    pub heads: Vec<MlpVars>,
}

impl AttackerVars {
    pub fn load(tape: &mut Tape, params: &AttackerParams) -> Self {
        AttackerVars {
            heads: params.heads.iter().map(|h| MlpVars::load(tape, h)).collect(),
        }
    }

    /// Vars in the same order as [`AttackerParams::trainable`].
    pub fn trainable(&self) -> Vec<Var> {
        self.heads.iter().flat_map(|h| h.list()).collect()
    }
}

/// Attention pooling of a user history against a candidate query:
/// logits are dot products `x_l . x_cand`, weights their softmax, and
/// the user vector the weighted sum of history embeddings.
pub fn encode_user(history: &[Vec<Real>], candidate: &[Real]) -> Result<(Vec<Real>, Vec<Real>)> {
    if history.is_empty() {
        return Err(Error::contract("attention over an empty history"));
    }
    let d = candidate.len();
    let mut logits = Vec::with_capacity(history.len());
    for item in history {
        if item.len() != d {
            return Err(Error::Dimension {
                op: "encode_user",
                lhs: vec![item.len()],
                rhs: vec![d],
            });
        }
        logits.push(item.iter().zip(candidate).map(|(a, b)| a * b).sum::<Real>());
    }
    let max = logits.iter().fold(Real::NEG_INFINITY, |m, &v| m.max(v));
    let mut alpha: Vec<Real> = logits.iter().map(|&v| (v - max).exp()).collect();
    let norm: Real = alpha.iter().sum();
    for a in alpha.iter_mut() {
        *a /= norm;
    }
    let mut x_u = vec![0.0; d];
    for (a, item) in alpha.iter().zip(history) {
        for (x, v) in x_u.iter_mut().zip(item) {
            *x += a * v;
        }
    }
    Ok((x_u, alpha))
}

// ---- taped building blocks ----

/// In-tape attention: `[1 x d]` user vector from a gathered history.
fn attention_row(tape: &mut Tape, emb: Var, history: &[u32], query: Var) -> Result<Var> {
    if history.is_empty() {
        return Err(Error::contract("attention over an empty history"));
    }
    let hist = tape.gather(emb, history)?;
    let query_col = tape.transpose(query);
    let logits = tape.matmul(hist, query_col)?;
    let logits_row = tape.transpose(logits);
    let alpha = tape.softmax_rows(logits_row);
    tape.matmul(alpha, hist)
}

/// `[1 x 2d]` layer-1 representation `[x_u, x_cand]` for one example.
fn concat_row(
    tape: &mut Tape,
    emb: Var,
    vocab: u32,
    history: &[u32],
    candidate: u32,
) -> Result<Var> {
    if candidate >= vocab || history.iter().any(|&i| i >= vocab) {
        return Err(Error::contract(format!(
            "item id outside vocabulary of {vocab}"
        )));
    }
    let cand = tape.gather(emb, &[candidate])?;
    let x_u = attention_row(tape, emb, history, cand)?;
    tape.concat_cols(&[x_u, cand])
}

/// Source-side layer-1 representation of a user: attention over the most
/// recent window with the latest source item as query.
fn source_rep_row(
    tape: &mut Tape,
    vars: &RecommenderVars,
    config: &ModelConfig,
    source: &InteractionLog,
    user: u32,
) -> Result<Var> {
    if user as usize >= source.user_count() {
        return Err(Error::contract(format!(
            "user {user} outside population of {}",
            source.user_count()
        )));
    }
    let window = source.recent(user, config.window);
    if window.is_empty() {
        return Err(Error::contract(format!("user {user} has no source history")));
    }
    let items: Vec<u32> = window.iter().map(|e| e.item).collect();
    let (history, query) = (&items[..], *items.last().expect("non-empty window"));
    let query_emb = tape.gather(vars.emb_source, &[query])?;
    let x_u = attention_row(tape, vars.emb_source, history, query_emb)?;
    tape.concat_cols(&[x_u, query_emb])
}

/// Transferred representations and the per-layer pieces for a stack of
/// source layer-1 rows.
struct Transfer {
    /// `H^1 x^1_S`, `[B x 2d]`
    layer1: Var,
    /// source hidden activation and `H^2 x^2_S` when a second transfer
    /// layer is configured
    layer2: Option<(Var, Var)>,
    /// concatenation across layers, the attacker's input
    x_trans: Var,
}

fn apply_transfer(
    tape: &mut Tape,
    vars: &RecommenderVars,
    config: &ModelConfig,
    x1_source: Var,
) -> Result<Transfer> {
    let layer1 = tape.matmul(x1_source, vars.h[0])?;
    if config.transfer_layers == 1 {
        return Ok(Transfer { layer1, layer2: None, x_trans: layer1 });
    }
    let pre = tape.matmul(x1_source, vars.mlp_source.w1)?;
    let pre = tape.add_row(pre, vars.mlp_source.b1)?;
    let hidden_source = tape.sigmoid(pre);
    let layer2 = tape.matmul(hidden_source, vars.h[1])?;
    let x_trans = tape.concat_cols(&[layer1, layer2])?;
    Ok(Transfer {
        layer1,
        layer2: Some((hidden_source, layer2)),
        x_trans,
    })
}

/// Batched target-domain forward: scoring logits `[B x 1]` plus the
/// transferred representations `[B x trans_width]` the examples rode on.
pub fn target_batch_logits(
    tape: &mut Tape,
    vars: &RecommenderVars,
    config: &ModelConfig,
    examples: &[RankingExample],
    source: &InteractionLog,
) -> Result<(Var, Var)> {
    if examples.is_empty() {
        return Err(Error::contract("empty target batch"));
    }
    let mut target_rows = Vec::with_capacity(examples.len());
    let mut source_rows = Vec::with_capacity(examples.len());
    for ex in examples {
        if ex.domain != Domain::Target {
            return Err(Error::contract("source example in a target batch"));
        }
        target_rows.push(concat_row(
            tape,
            vars.emb_target,
            config.n_target_items as u32,
            &ex.history,
            ex.candidate,
        )?);
        source_rows.push(source_rep_row(tape, vars, config, source, ex.user)?);
    }
    let x1_target = tape.stack_rows(&target_rows)?;
    let x1_source = tape.stack_rows(&source_rows)?;
    let transfer = apply_transfer(tape, vars, config, x1_source)?;

    let mixed = tape.matmul(x1_target, vars.w_t[0])?;
    let mixed = tape.add(mixed, transfer.layer1)?;
    let pre = tape.matmul(mixed, vars.mlp_target.w1)?;
    let pre = tape.add_row(pre, vars.mlp_target.b1)?;
    let hidden = tape.sigmoid(pre);
    let out_in = match transfer.layer2 {
        None => hidden,
        Some((_, layer2)) => {
            let mixed2 = tape.matmul(hidden, vars.w_t[1])?;
            tape.add(mixed2, layer2)?
        }
    };
    let z = tape.matmul(out_in, vars.mlp_target.w2)?;
    let logits = tape.add_row(z, vars.mlp_target.b2)?;
    Ok((logits, transfer.x_trans))
}

/// Batched source-domain forward through the plain source MLP.
pub fn source_batch_logits(
    tape: &mut Tape,
    vars: &RecommenderVars,
    config: &ModelConfig,
    examples: &[RankingExample],
) -> Result<Var> {
    if examples.is_empty() {
        return Err(Error::contract("empty source batch"));
    }
    let mut rows = Vec::with_capacity(examples.len());
    for ex in examples {
        if ex.domain != Domain::Source {
            return Err(Error::contract("target example in a source batch"));
        }
        rows.push(concat_row(
            tape,
            vars.emb_source,
            config.n_source_items as u32,
            &ex.history,
            ex.candidate,
        )?);
    }
    let x1 = tape.stack_rows(&rows)?;
    let pre = tape.matmul(x1, vars.mlp_source.w1)?;
    let pre = tape.add_row(pre, vars.mlp_source.b1)?;
    let hidden = tape.sigmoid(pre);
    let z = tape.matmul(hidden, vars.mlp_source.w2)?;
    tape.add_row(z, vars.mlp_source.b2)
}

/// Batched transferred representations `[B x trans_width]` for a user
/// list, with gradients flowing into the recommender parameters.
pub fn transferred_batch(
    tape: &mut Tape,
    vars: &RecommenderVars,
    config: &ModelConfig,
    users: &[u32],
    source: &InteractionLog,
) -> Result<Var> {
    if users.is_empty() {
        return Err(Error::contract("empty privacy batch"));
    }
    let mut rows = Vec::with_capacity(users.len());
    for &u in users {
        rows.push(source_rep_row(tape, vars, config, source, u)?);
    }
    let x1_source = tape.stack_rows(&rows)?;
    Ok(apply_transfer(tape, vars, config, x1_source)?.x_trans)
}

/// Per-head attacker logits `[B x c_p]` from transferred representations.
pub fn attacker_head_logits(
    tape: &mut Tape,
    vars: &AttackerVars,
    head: usize,
    x_trans: Var,
) -> Result<Var> {
    let mlp = vars
        .heads
        .get(head)
        .ok_or_else(|| Error::contract(format!("no attacker head {head}")))?;
    let pre = tape.matmul(x_trans, mlp.w1)?;
    let pre = tape.add_row(pre, mlp.b1)?;
    let hidden = tape.sigmoid(pre);
    let z = tape.matmul(hidden, mlp.w2)?;
    tape.add_row(z, mlp.b2)
}

// ---- tape-free forward (evaluation path) ----

/// Everything a single-example forward pass computed.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub alpha: Vec<Real>,
    pub x_u: Vec<Real>,
    pub x1: Vec<Real>,
    /// Source-side pieces; empty for source-domain scores.
    pub source_alpha: Vec<Real>,
    pub x_u_source: Vec<Real>,
    pub x1_source: Vec<Real>,
    pub x_trans: Vec<Real>,
    pub hidden: Vec<Real>,
    pub logit: Real,
    pub score: Real,
}

fn embed_rows(emb: &Tensor, vocab: usize, items: &[u32]) -> Result<Vec<Vec<Real>>> {
    items
        .iter()
        .map(|&i| {
            if (i as usize) < vocab {
                Ok(emb.row(i as usize).to_vec())
            } else {
                Err(Error::contract(format!(
                    "item id {i} outside vocabulary of {vocab}"
                )))
            }
        })
        .collect()
}

/// `row [1 x k] * w [k x n] (+ bias)`.
pub(super) fn dense(row: &[Real], w: &Tensor, bias: Option<&Tensor>) -> Vec<Real> {
    let (k, n) = (w.shape()[0], w.shape()[1]);
    debug_assert_eq!(row.len(), k);
    let mut out = matmul_raw(row, w.data(), 1, k, n);
    if let Some(b) = bias {
        for (o, &bv) in out.iter_mut().zip(b.data()) {
            *o += bv;
        }
    }
    out
}

pub(super) fn sigmoid_vec(v: &mut [Real]) {
    for x in v.iter_mut() {
        *x = sigmoid_scalar(*x);
    }
}

struct SourceRep {
    alpha: Vec<Real>,
    x_u: Vec<Real>,
    x1: Vec<Real>,
    x_trans: Vec<Real>,
}

fn source_rep(
    params: &RecommenderParams,
    config: &ModelConfig,
    window: &[u32],
) -> Result<SourceRep> {
    if window.is_empty() {
        return Err(Error::contract("empty source window"));
    }
    let hist = embed_rows(&params.item_emb_source, config.n_source_items, window)?;
    let query = hist.last().expect("non-empty window").clone();
    let (x_u, alpha) = encode_user(&hist, &query)?;
    let mut x1 = x_u.clone();
    x1.extend_from_slice(&query);
    let mut x_trans = dense(&x1, &params.h[0], None);
    if config.transfer_layers == 2 {
        let mut hidden = dense(&x1, &params.mlp_source.w1, Some(&params.mlp_source.b1));
        sigmoid_vec(&mut hidden);
        x_trans.extend(dense(&hidden, &params.h[1], None));
    }
    Ok(SourceRep { alpha, x_u, x1, x_trans })
}

/// Single-example score: probability the user interacts with the
/// candidate, plus the full trace of intermediates.
///
/// Target-domain scores need the user's recent source items (the
/// transfer window); source-domain scores ignore that argument.
pub fn score(
    params: &RecommenderParams,
    config: &ModelConfig,
    domain: Domain,
    history: &[u32],
    candidate: u32,
    source_window: Option<&[u32]>,
) -> Result<(Real, ForwardTrace)> {
    match domain {
        Domain::Source => {
            let hist = embed_rows(&params.item_emb_source, config.n_source_items, history)?;
            let cand =
                embed_rows(&params.item_emb_source, config.n_source_items, &[candidate])?
                    .remove(0);
            let (x_u, alpha) = encode_user(&hist, &cand)?;
            let mut x1 = x_u.clone();
            x1.extend_from_slice(&cand);
            let mut hidden = dense(&x1, &params.mlp_source.w1, Some(&params.mlp_source.b1));
            sigmoid_vec(&mut hidden);
            let logit =
                dense(&hidden, &params.mlp_source.w2, Some(&params.mlp_source.b2))[0];
            Ok((
                sigmoid_scalar(logit),
                ForwardTrace {
                    alpha,
                    x_u,
                    x1,
                    source_alpha: Vec::new(),
                    x_u_source: Vec::new(),
                    x1_source: Vec::new(),
                    x_trans: Vec::new(),
                    hidden,
                    logit,
                    score: sigmoid_scalar(logit),
                },
            ))
        }
        Domain::Target => {
            let window = source_window.ok_or_else(|| {
                Error::contract("target-domain scoring needs the user's source window")
            })?;
            let rep = source_rep(params, config, window)?;
            let (score, trace) = score_target_with_rep(params, config, history, candidate, &rep)?;
            Ok((score, trace))
        }
    }
}

fn score_target_with_rep(
    params: &RecommenderParams,
    config: &ModelConfig,
    history: &[u32],
    candidate: u32,
    rep: &SourceRep,
) -> Result<(Real, ForwardTrace)> {
    let hist = embed_rows(&params.item_emb_target, config.n_target_items, history)?;
    let cand =
        embed_rows(&params.item_emb_target, config.n_target_items, &[candidate])?.remove(0);
    let (x_u, alpha) = encode_user(&hist, &cand)?;
    let mut x1 = x_u.clone();
    x1.extend_from_slice(&cand);

    let mut mixed = dense(&x1, &params.w_t[0], None);
    let c = config.concat_width();
    for (m, t) in mixed.iter_mut().zip(&rep.x_trans[..c]) {
        *m += t;
    }
    let mut hidden = dense(&mixed, &params.mlp_target.w1, Some(&params.mlp_target.b1));
    sigmoid_vec(&mut hidden);
    let out_in = if config.transfer_layers == 2 {
        let mut mixed2 = dense(&hidden, &params.w_t[1], None);
        for (m, t) in mixed2.iter_mut().zip(&rep.x_trans[c..]) {
            *m += t;
        }
        mixed2
    } else {
        hidden.clone()
    };
    let logit = dense(&out_in, &params.mlp_target.w2, Some(&params.mlp_target.b2))[0];
    let s = sigmoid_scalar(logit);
    Ok((
        s,
        ForwardTrace {
            alpha,
            x_u,
            x1,
            source_alpha: rep.alpha.clone(),
            x_u_source: rep.x_u.clone(),
            x1_source: rep.x1.clone(),
            x_trans: rep.x_trans.clone(),
            hidden,
            logit,
            score: s,
        },
    ))
}

/// Scores of many candidates against one fixed history, sharing the
/// single source-side computation. The evaluation hot path.
pub fn score_candidates(
    params: &RecommenderParams,
    config: &ModelConfig,
    history: &[u32],
    candidates: &[u32],
    source_window: &[u32],
) -> Result<Vec<Real>> {
    let rep = source_rep(params, config, source_window)?;
    candidates
        .iter()
        .map(|&c| {
            score_target_with_rep(params, config, history, c, &rep).map(|(s, _)| s)
        })
        .collect()
}

/// Frozen transferred representations for a list of users, one row each:
/// the attacker's view, also used for export and clustering.
pub fn transferred_users(
    params: &RecommenderParams,
    config: &ModelConfig,
    source: &InteractionLog,
    users: &[u32],
) -> Result<Tensor> {
    let width = config.trans_width();
    let mut data = Vec::with_capacity(users.len() * width);
    for &u in users {
        if u as usize >= source.user_count() {
            return Err(Error::contract(format!(
                "user {u} outside population of {}",
                source.user_count()
            )));
        }
        let window: Vec<u32> =
            source.recent(u, config.window).iter().map(|e| e.item).collect();
        let rep = source_rep(params, config, &window)?;
        data.extend(rep.x_trans);
    }
    Tensor::new(vec![users.len(), width], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Event;
    use proptest::prelude::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            embed_dim: 4,
            hidden: 3,
            window: 3,
            transfer_layers: 1,
            transfer_enabled: true,
            n_source_items: 5,
            n_target_items: 6,
            attribute_classes: vec![2],
        }
    }

    fn tiny_source() -> InteractionLog {
        InteractionLog {
            domain: Domain::Source,
            vocab_size: 5,
            histories: vec![
                vec![
                    Event { item: 0, timestamp: 0 },
                    Event { item: 2, timestamp: 1 },
                    Event { item: 4, timestamp: 2 },
                ],
                vec![Event { item: 1, timestamp: 0 }],
            ],
        }
    }

    #[test]
    fn encode_single_item_returns_it() {
        let item = vec![0.3, -0.7, 2.0];
        let (x_u, alpha) = encode_user(&[item.clone()], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(x_u, item);
        assert_eq!(alpha, vec![1.0]);
    }

    #[test]
    fn encode_identical_items_returns_them() {
        let v = vec![0.5, 1.5];
        let (x_u, alpha) = encode_user(&[v.clone(), v.clone(), v.clone()], &[2.0, 0.0]).unwrap();
        for (a, b) in x_u.iter().zip(&v) {
            assert!((a - b).abs() < 1e-15);
        }
        for a in alpha {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn encode_hand_computed_two_item_case() {
        // candidate [1,0], history {[2,0],[0,2]}: logits (2,0),
        // alpha = (e^2, 1)/(e^2 + 1)
        let (x_u, alpha) =
            encode_user(&[vec![2.0, 0.0], vec![0.0, 2.0]], &[1.0, 0.0]).unwrap();
        let e2 = (2.0f64).exp();
        let a0 = e2 / (e2 + 1.0);
        assert!((alpha[0] - a0).abs() < 1e-12);
        assert!((alpha[1] - (1.0 - a0)).abs() < 1e-12);
        assert!((x_u[0] - 2.0 * a0).abs() < 1e-12);
        assert!((x_u[1] - 2.0 * (1.0 - a0)).abs() < 1e-12);
        // reference values of the derived example
        assert!((x_u[0] - 1.76159415596).abs() < 1e-9);
        assert!((x_u[1] - 0.23840584404).abs() < 1e-9);
    }

    #[test]
    fn encode_rejects_empty_history() {
        assert!(encode_user(&[], &[1.0]).is_err());
    }

    #[test]
    fn score_is_in_open_unit_interval() {
        let cfg = tiny_config();
        let params = RecommenderParams::init(&cfg, 3).unwrap();
        let (s, trace) = score(
            &params,
            &cfg,
            Domain::Target,
            &[0, 1],
            3,
            Some(&[0, 2, 4]),
        )
        .unwrap();
        assert!(s > 0.0 && s < 1.0);
        let alpha_sum: Real = trace.alpha.iter().sum();
        assert!((alpha_sum - 1.0).abs() < 1e-9);
        let src_sum: Real = trace.source_alpha.iter().sum();
        assert!((src_sum - 1.0).abs() < 1e-9);
        assert_eq!(trace.x_trans.len(), cfg.trans_width());
    }

    #[test]
    fn zero_h_ignores_source_entirely() {
        let cfg = tiny_config();
        let mut params = RecommenderParams::init(&cfg, 3).unwrap();
        params.h[0] = Tensor::zeros(vec![8, 8]);
        let (a, _) =
            score(&params, &cfg, Domain::Target, &[0, 1], 3, Some(&[0, 2, 4])).unwrap();
        let (b, _) = score(&params, &cfg, Domain::Target, &[0, 1], 3, Some(&[1])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identity_h_transfers_source_rep_unchanged() {
        let cfg = tiny_config();
        let mut params = RecommenderParams::init(&cfg, 3).unwrap();
        let c = cfg.concat_width();
        let mut eye = Tensor::zeros(vec![c, c]);
        for i in 0..c {
            eye.data_mut()[i * c + i] = 1.0;
        }
        params.h[0] = eye;
        let (_, trace) =
            score(&params, &cfg, Domain::Target, &[0, 1], 3, Some(&[0, 2, 4])).unwrap();
        assert_eq!(trace.x_trans, trace.x1_source);
    }

    #[test]
    fn out_of_vocab_candidate_rejected() {
        let cfg = tiny_config();
        let params = RecommenderParams::init(&cfg, 3).unwrap();
        let err =
            score(&params, &cfg, Domain::Target, &[0], 6, Some(&[0])).unwrap_err();
        assert!(err.to_string().contains("vocabulary"), "{err}");
        assert!(score(&params, &cfg, Domain::Source, &[0], 5, None).is_err());
    }

    #[test]
    fn taped_and_tape_free_forward_agree() {
        let cfg = tiny_config();
        let params = RecommenderParams::init(&cfg, 3).unwrap();
        let source = tiny_source();
        let ex = RankingExample {
            user: 0,
            history: vec![0, 1],
            candidate: 3,
            label: 1,
            domain: Domain::Target,
        };
        let mut tape = Tape::new();
        let vars = RecommenderVars::load(&mut tape, &params);
        let (logits, x_trans) =
            target_batch_logits(&mut tape, &vars, &cfg, &[ex], &source).unwrap();
        let window: Vec<u32> = source.recent(0, cfg.window).iter().map(|e| e.item).collect();
        let (s, trace) =
            score(&params, &cfg, Domain::Target, &[0, 1], 3, Some(&window)).unwrap();
        assert!((tape.value(logits)[0] - trace.logit).abs() < 1e-12);
        assert!((sigmoid_scalar(tape.value(logits)[0]) - s).abs() < 1e-12);
        for (a, b) in tape.value(x_trans).iter().zip(&trace.x_trans) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn taped_and_tape_free_agree_with_two_transfer_layers() {
        let cfg = ModelConfig { transfer_layers: 2, ..tiny_config() };
        let params = RecommenderParams::init(&cfg, 5).unwrap();
        let source = tiny_source();
        let ex = RankingExample {
            user: 0,
            history: vec![2, 5],
            candidate: 1,
            label: 0,
            domain: Domain::Target,
        };
        let mut tape = Tape::new();
        let vars = RecommenderVars::load(&mut tape, &params);
        let (logits, x_trans) =
            target_batch_logits(&mut tape, &vars, &cfg, &[ex], &source).unwrap();
        let window: Vec<u32> = source.recent(0, cfg.window).iter().map(|e| e.item).collect();
        let (_, trace) =
            score(&params, &cfg, Domain::Target, &[2, 5], 1, Some(&window)).unwrap();
        assert!((tape.value(logits)[0] - trace.logit).abs() < 1e-12);
        assert_eq!(tape.value(x_trans).len(), cfg.trans_width());
        for (a, b) in tape.value(x_trans).iter().zip(&trace.x_trans) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transferred_users_matches_batched_graph() {
        let cfg = tiny_config();
        let params = RecommenderParams::init(&cfg, 3).unwrap();
        let source = tiny_source();
        let free = transferred_users(&params, &cfg, &source, &[0, 1]).unwrap();
        let mut tape = Tape::new();
        let vars = RecommenderVars::load(&mut tape, &params);
        let taped = transferred_batch(&mut tape, &vars, &cfg, &[0, 1], &source).unwrap();
        for (a, b) in free.data().iter().zip(tape.value(taped)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn score_candidates_matches_single_scores() {
        let cfg = tiny_config();
        let params = RecommenderParams::init(&cfg, 3).unwrap();
        let window = [0u32, 2, 4];
        let batch =
            score_candidates(&params, &cfg, &[0, 1], &[2, 3, 4], &window).unwrap();
        for (i, &cand) in [2u32, 3, 4].iter().enumerate() {
            let (single, _) =
                score(&params, &cfg, Domain::Target, &[0, 1], cand, Some(&window)).unwrap();
            assert_eq!(batch[i], single);
        }
    }

    #[test]
    fn transfer_map_is_linear() {
        // Eq. 1 is a plain linear map: H(c x) = c Hx
        let cfg = tiny_config();
        let params = RecommenderParams::init(&cfg, 3).unwrap();
        let x: Vec<Real> = (0..8).map(|i| (i as Real * 0.7).sin()).collect();
        let doubled: Vec<Real> = x.iter().map(|v| 2.0 * v).collect();
        let hx = dense(&x, &params.h[0], None);
        let h2x = dense(&doubled, &params.h[0], None);
        for (a, b) in hx.iter().zip(&h2x) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn attention_is_permutation_invariant_over_identical_items(
            d in 1usize..5,
            n in 1usize..6,
            scale in -2.0..2.0f64,
        ) {
            // histories made of one repeated item: any order gives the
            // same pooled vector and uniform weights
            let item: Vec<Real> = (0..d).map(|i| scale * (i as Real + 0.5)).collect();
            let cand: Vec<Real> = (0..d).map(|i| (i as Real).cos()).collect();
            let hist = vec![item.clone(); n];
            let (x_u, alpha) = encode_user(&hist, &cand).unwrap();
            for a in &alpha {
                prop_assert!((a - 1.0 / n as Real).abs() < 1e-12);
            }
            for (a, b) in x_u.iter().zip(&item) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn attention_weights_normalized(
            seed in 0u64..50,
            hist_len in 1usize..6,
        ) {
            let cfg = tiny_config();
            let params = RecommenderParams::init(&cfg, seed).unwrap();
            let history: Vec<u32> = (0..hist_len as u32).map(|i| i % 5).collect();
            let hist = embed_rows(&params.item_emb_source, 5, &history).unwrap();
            let cand = params.item_emb_source.row(0).to_vec();
            let (_, alpha) = encode_user(&hist, &cand).unwrap();
            let sum: Real = alpha.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(alpha.iter().all(|&a| a >= 0.0));
        }
    }
}
