//! Projection heads, per-rationale stance prediction, losses and the
//! optimizer.

mod checkpoint;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{evaluate_examples, predict_example, train, EpochLog, ExamplePrediction, TrainOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::StanceLabel;
use crate::ranking::{softmax, softmax3, Calibration};
use crate::selection::{group_and_select, RelevanceGroup, SelectConfig};

/// Lower bound applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

pub const DEFAULT_HIDDEN_DIM: usize = 128;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoteMode {
    /// Selected relevant rationales, each paired with the explicit one.
    #[default]
    RelevantPlusExplicit,
    /// Selected relevant and irrelevant rationales.
    AllPlusExplicit,
}

impl std::str::FromStr for VoteMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relevant-plus-explicit" | "relevant" => Ok(VoteMode::RelevantPlusExplicit),
            "all-plus-explicit" | "all" => Ok(VoteMode::AllPlusExplicit),
            other => Err(Error::Config(format!("unknown vote mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub beta: f64,
    pub q: f64,
    pub epochs: usize,
    pub seed: u64,
    pub vote_mode: VoteMode,
    pub hidden_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 32,
            beta: 0.1,
            q: 0.5,
            epochs: 30,
            seed: 0,
            vote_mode: VoteMode::RelevantPlusExplicit,
            hidden_dim: DEFAULT_HIDDEN_DIM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("train.beta = {} must be in (0, 1)", self.beta)));
        }
        if !(self.q >= 0.0 && self.q.is_finite()) {
            return Err(Error::Config(format!("train.q = {} must be >= 0", self.q)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("train.lr = {} must be >= 0", self.lr)));
        }
        if self.batch_size == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("train.batch_size and train.hidden_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Weights are row-major: `w[i * d_out + o]` maps input `i` to output `o`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub d_e: usize,
    pub d_d: usize,
    pub w_imp: Vec<f64>,
    pub b_imp: Vec<f64>,
    pub w_exp: Vec<f64>,
    pub b_exp: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
    pub calibration: Calibration,
}

pub(crate) const BLOCK_NAMES: [&str; 8] = ["w_imp", "b_imp", "w_exp", "b_exp", "w_out", "b_out", "calibration.scale", "calibration.bias"];

impl ClassifierParams {
    pub fn zeros(d_e: usize, d_d: usize, calibration: Calibration) -> Self {
        ClassifierParams {
            d_e,
            d_d,
            w_imp: vec![0.0; d_e * d_d],
            b_imp: vec![0.0; d_d],
            w_exp: vec![0.0; d_e * d_d],
            b_exp: vec![0.0; d_d],
            w_out: vec![0.0; 2 * d_d * 3],
            b_out: vec![0.0; 3],
            calibration,
        }
    }

    /// He-uniform projection weights, Glorot-uniform output layer, zero biases.
    pub fn init(d_e: usize, d_d: usize, seed: u64, calibration: Calibration) -> Self {
        let mut p = Self::zeros(d_e, d_d, calibration);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let he = (6.0 / d_e as f64).sqrt();
        for w in p.w_imp.iter_mut().chain(p.w_exp.iter_mut()) {
            *w = rng.gen_range(-he..he);
        }
        let glorot = (6.0 / (2 * d_d + 3) as f64).sqrt();
        for w in p.w_out.iter_mut() {
            *w = rng.gen_range(-glorot..glorot);
        }
        p
    }

    pub(crate) fn blocks(&self) -> [&[f64]; 8] {
        [
            &self.w_imp,
            &self.b_imp,
            &self.w_exp,
            &self.b_exp,
            &self.w_out,
            &self.b_out,
            &self.calibration.scale,
            &self.calibration.bias,
        ]
    }

    pub(crate) fn blocks_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.w_imp,
            &mut self.b_imp,
            &mut self.w_exp,
            &mut self.b_exp,
            &mut self.w_out,
            &mut self.b_out,
            &mut self.calibration.scale,
            &mut self.calibration.bias,
        ]
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.d_e {
            return Err(Error::DimensionMismatch {
                expected: self.d_e,
                actual: v.len(),
            });
        }
        Ok(())
    }
}

/// Gradient of the loss with the same block layout as [`ClassifierParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: [Vec<f64>; 8],
}

impl Gradients {
    pub fn zeros_like(p: &ClassifierParams) -> Self {
        Gradients {
            blocks: p.blocks().map(|b| vec![0.0; b.len()]),
        }
    }

    pub fn block(&self, name: &str) -> &[f64] {
        let i = BLOCK_NAMES.iter().position(|n| *n == name).expect("known block name");
        &self.blocks[i]
    }
}

struct Dense {
    pre: Vec<f64>,
    act: Vec<f64>,
}

fn dense_relu(x: &[f64], w: &[f64], b: &[f64], d_out: usize) -> Dense {
    let mut pre = b.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * d_out..(i + 1) * d_out];
        for (p, &wi) in pre.iter_mut().zip(row) {
            *p += xi * wi;
        }
    }
    let act = pre.iter().map(|&v| v.max(0.0)).collect();
    Dense { pre, act }
}

fn output_logits(h_imp: &[f64], h_exp: &[f64], p: &ClassifierParams) -> [f64; 3] {
    let mut z = [p.b_out[0], p.b_out[1], p.b_out[2]];
    for (r, &h) in h_imp.iter().chain(h_exp).enumerate() {
        for k in 0..3 {
            z[k] += h * p.w_out[r * 3 + k];
        }
    }
    z
}

/// Stance distribution for one implicit rationale paired with the
/// sample's explicit rationale.
pub fn forward_rationale(imp: &[f64], exp: &[f64], params: &ClassifierParams) -> Result<[f64; 3]> {
    params.check_dim(imp)?;
    params.check_dim(exp)?;
    let hi = dense_relu(imp, &params.w_imp, &params.b_imp, params.d_d);
    let he = dense_relu(exp, &params.w_exp, &params.b_exp, params.d_d);
    Ok(softmax(&output_logits(&hi.act, &he.act, params)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalePrediction {
    pub rationale_id: String,
    pub probs: [f64; 3],
    pub group: RelevanceGroup,
}

fn neg_log(p: f64) -> f64 {
    -p.max(PROB_FLOOR).ln()
}

/// Soft-vote cross-entropy: mean of the predictions, uniform when empty.
pub fn stance_loss(preds: &[[f64; 3]], gold: StanceLabel) -> f64 {
    if preds.is_empty() {
        return neg_log(1.0 / 3.0);
    }
    let g = gold.index();
    neg_log(preds.iter().map(|p| p[g]).sum::<f64>() / preds.len() as f64)
}

/// `+beta` when relevance agreed with prediction correctness, `-beta` otherwise.
pub fn reward(group: RelevanceGroup, pred: &[f64; 3], gold: StanceLabel, beta: f64) -> f64 {
    let correct = StanceLabel::argmax(pred) == gold;
    match (group, correct) {
        (RelevanceGroup::Relevant, true) | (RelevanceGroup::Irrelevant, false) => beta,
        _ => -beta,
    }
}

pub fn reward_punish_loss(profile_probs: &[f64; 3], group: RelevanceGroup, pred: &[f64; 3], gold: StanceLabel, beta: f64) -> f64 {
    neg_log(profile_probs[gold.index()]) * (1.0 - reward(group, pred, gold, beta))
}

/// Strict majority of the votes; ties and empty vote sets give Neutral.
pub fn majority_vote(votes: &[StanceLabel]) -> StanceLabel {
    let mut counts = [0usize; 3];
    for v in votes {
        counts[v.index()] += 1;
    }
    StanceLabel::ALL
        .into_iter()
        .find(|l| 2 * counts[l.index()] > votes.len())
        .unwrap_or(StanceLabel::Neutral)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleInput {
    pub id: String,
    /// Embedding of "rationale [SEP] target".
    pub embedding: Vec<f64>,
    /// Raw relevance scores toward favor, against and neutral.
    pub raw: [f64; 3],
}

/// Cached upstream data the classifier needs for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleInput {
    pub sample_id: String,
    pub gold: Option<StanceLabel>,
    pub explicit: Vec<f64>,
    pub rationales: Vec<RationaleInput>,
}

/// An example with its vote set and selected rationales resolved under
/// a particular calibration.
#[derive(Debug, Clone)]
pub struct PreparedExample<'a> {
    pub input: &'a ExampleInput,
    /// Indices into `input.rationales` that vote.
    pub vote: Vec<usize>,
    /// Selected rationales (relevant and irrelevant) with their group.
    pub judged: Vec<(usize, RelevanceGroup)>,
}

pub fn prepare<'a>(input: &'a ExampleInput, cal: &Calibration, select: &SelectConfig, mode: VoteMode) -> Result<PreparedExample<'a>> {
    if input.rationales.is_empty() {
        return Ok(PreparedExample {
            input,
            vote: Vec::new(),
            judged: Vec::new(),
        });
    }
    let profiles = input
        .rationales
        .iter()
        .map(|r| crate::ranking::RelevanceProfile::new(r.id.clone(), r.raw, cal))
        .collect::<Result<Vec<_>>>()?;
    let grouped = group_and_select(&profiles, select)?;
    let index_of = |id: &str| input.rationales.iter().position(|r| r.id == id).expect("selected id comes from input");
    let rel: Vec<usize> = grouped.relevant.selected.iter().map(|id| index_of(id)).collect();
    let irr: Vec<usize> = grouped.irrelevant.selected.iter().map(|id| index_of(id)).collect();
    let mut vote = rel.clone();
    if mode == VoteMode::AllPlusExplicit {
        vote.extend(&irr);
    }
    let judged = rel
        .iter()
        .map(|&i| (i, RelevanceGroup::Relevant))
        .chain(irr.iter().map(|&i| (i, RelevanceGroup::Irrelevant)))
        .collect();
    Ok(PreparedExample { input, vote, judged })
}

/// Reward for every judged rationale of every example, from the current
/// predictions. Held fixed while differentiating.
pub fn compute_rewards(params: &ClassifierParams, batch: &[PreparedExample], beta: f64) -> Result<Vec<Vec<f64>>> {
    batch
        .iter()
        .map(|ex| {
            let gold = gold_of(ex)?;
            ex.judged
                .iter()
                .map(|&(i, group)| {
                    let pred = forward_rationale(&ex.input.rationales[i].embedding, &ex.input.explicit, params)?;
                    Ok(reward(group, &pred, gold, beta))
                })
                .collect()
        })
        .collect()
}

fn gold_of(ex: &PreparedExample) -> Result<StanceLabel> {
    ex.input
        .gold
        .ok_or_else(|| Error::Invalid(format!("training sample {} has no gold stance", ex.input.sample_id)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchLoss {
    pub stance: f64,
    pub rp: f64,
    pub total: f64,
}

/// Batch loss `mean L_s + q · mean L_rp` and its gradient.
pub fn loss_and_gradient(params: &ClassifierParams, batch: &[PreparedExample], rewards: &[Vec<f64>], q: f64) -> Result<(BatchLoss, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty training batch".into()));
    }
    let mut g = Gradients::zeros_like(params);
    let (d_e, d_d) = (params.d_e, params.d_d);
    let inv_b = 1.0 / batch.len() as f64;
    let mut stance_sum = 0.0;

    for ex in batch {
        let gold = gold_of(ex)?;
        let gi = gold.index();
        params.check_dim(&ex.input.explicit)?;
        if ex.vote.is_empty() {
            stance_sum += stance_loss(&[], gold);
            continue;
        }
        let he = dense_relu(&ex.input.explicit, &params.w_exp, &params.b_exp, d_d);
        let mut fwd = Vec::with_capacity(ex.vote.len());
        for &i in &ex.vote {
            let x = &ex.input.rationales[i].embedding;
            params.check_dim(x)?;
            let hi = dense_relu(x, &params.w_imp, &params.b_imp, d_d);
            let probs = softmax(&output_logits(&hi.act, &he.act, params));
            fwd.push((i, hi, probs));
        }
        let n = fwd.len() as f64;
        let s_g = fwd.iter().map(|f| f.2[gi]).sum::<f64>() / n;
        stance_sum += neg_log(s_g);
        if s_g <= PROB_FLOOR {
            continue;
        }
        let mut dh_exp = vec![0.0; d_d];
        for (i, hi, p) in &fwd {
            // d(-ln s_g)/dz_k = -(1/(n·s_g)) · p_g · (δ_kg - p_k)
            let c = -inv_b * p[gi] / (n * s_g);
            let dz: [f64; 3] = std::array::from_fn(|k| c * ((k == gi) as u8 as f64 - p[k]));
            for k in 0..3 {
                g.blocks[5][k] += dz[k];
            }
            let mut dh_imp = vec![0.0; d_d];
            for (r, &h) in hi.act.iter().chain(&he.act).enumerate() {
                let mut back = 0.0;
                for k in 0..3 {
                    g.blocks[4][r * 3 + k] += h * dz[k];
                    back += params.w_out[r * 3 + k] * dz[k];
                }
                if r < d_d {
                    dh_imp[r] = back;
                } else {
                    dh_exp[r - d_d] += back;
                }
            }
            let x = &ex.input.rationales[*i].embedding;
            accumulate_dense(&mut g.blocks, 0, x, &hi.pre, &dh_imp, d_e, d_d);
        }
        accumulate_dense(&mut g.blocks, 2, &ex.input.explicit, &he.pre, &dh_exp, d_e, d_d);
    }

    let mut rp_sum = 0.0;
    let n_judged: usize = batch.iter().map(|ex| ex.judged.len()).sum();
    let cal = &params.calibration;
    for (ex, rs) in batch.iter().zip(rewards) {
        let gi = gold_of(ex)?.index();
        for (&(i, _), &r) in ex.judged.iter().zip(rs) {
            let raw = &ex.input.rationales[i].raw;
            let probs = softmax3(raw, cal)?;
            let mult = 1.0 - r;
            rp_sum += neg_log(probs[gi]) * mult;
            if cal.trainable && q != 0.0 && probs[gi] > PROB_FLOOR {
                let c = q * mult / n_judged as f64;
                for j in 0..3 {
                    let dl = c * (probs[j] - (j == gi) as u8 as f64);
                    g.blocks[6][j] += dl * raw[j];
                    g.blocks[7][j] += dl;
                }
            }
        }
    }
    let stance = stance_sum * inv_b;
    let rp = if n_judged == 0 { 0.0 } else { rp_sum / n_judged as f64 };
    Ok((
        BatchLoss {
            stance,
            rp,
            total: stance + q * rp,
        },
        g,
    ))
}

/// Backpropagates `dh` through a ReLU dense layer into weight block `wb`
/// and bias block `wb + 1`.
fn accumulate_dense(blocks: &mut [Vec<f64>; 8], wb: usize, x: &[f64], pre: &[f64], dh: &[f64], d_e: usize, d_d: usize) {
    let da: Vec<f64> = dh.iter().zip(pre).map(|(&d, &a)| if a > 0.0 { d } else { 0.0 }).collect();
    if da.iter().all(|&v| v == 0.0) {
        return;
    }
    for o in 0..d_d {
        blocks[wb + 1][o] += da[o];
    }
    let w = &mut blocks[wb];
    for i in 0..d_e {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        let row = &mut w[i * d_d..(i + 1) * d_d];
        for (gw, &d) in row.iter_mut().zip(&da) {
            *gw += xi * d;
        }
    }
}

/// Adam with per-block first and second moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: [Vec<f64>; 8],
    v: [Vec<f64>; 8],
}

impl Adam {
    pub fn new(params: &ClassifierParams, lr: f64) -> Self {
        let zeros = || params.blocks().map(|b| vec![0.0; b.len()]);
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update. Fails before touching any parameter if a gradient
    /// component is not finite. Calibration blocks are skipped when the
    /// calibration is frozen.
    pub fn step(&mut self, params: &mut ClassifierParams, grads: &Gradients) -> Result<()> {
        for (name, g) in BLOCK_NAMES.iter().zip(&grads.blocks) {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient(name));
            }
        }
        if self.lr == 0.0 {
            return Ok(());
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let active = if params.calibration.trainable { 8 } else { 6 };
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        for (bi, p) in params.blocks_mut().into_iter().enumerate().take(active) {
            let (m, v, g) = (&mut self.m[bi], &mut self.v[bi], &grads.blocks[bi]);
            for j in 0..p.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                p[j] -= lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rewards from the current parameters, gradient, then one Adam step.
pub fn backward_and_step(params: &mut ClassifierParams, adam: &mut Adam, batch: &[PreparedExample], cfg: &TrainConfig) -> Result<BatchLoss> {
    let rewards = compute_rewards(params, batch, cfg.beta)?;
    let (loss, grads) = loss_and_gradient(params, batch, &rewards, cfg.q)?;
    adam.step(params, &grads)?;
    Ok(loss)
}

#[cfg(test)]
mod tests;
