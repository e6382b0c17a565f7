use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    backward_and_step, forward_rationale, majority_vote, prepare, Adam, ClassifierParams, ExampleInput, PreparedExample, RationalePrediction, TrainConfig,
    VoteMode,
};
use crate::error::{Error, Result};
use crate::evalkit::{macro_f1, EvalReport};
use crate::model::StanceLabel;
use crate::ranking::Calibration;
use crate::selection::SelectConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub stance_loss: f64,
    pub rp_loss: f64,
    pub total_loss: f64,
    pub dev_macro_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ClassifierParams,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were kept (1-based; 0 means the initialization).
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplePrediction {
    pub sample_id: String,
    pub label: StanceLabel,
    pub votes: Vec<RationalePrediction>,
}

/// Hard majority-vote prediction with selections recomputed under the
/// parameters' calibration.
pub fn predict_example(params: &ClassifierParams, input: &ExampleInput, select: &SelectConfig, mode: VoteMode) -> Result<ExamplePrediction> {
    let prep = prepare(input, &params.calibration, select, mode)?;
    let groups: std::collections::HashMap<usize, _> = prep.judged.iter().copied().collect();
    let votes = prep
        .vote
        .iter()
        .map(|&i| {
            let r = &input.rationales[i];
            Ok(RationalePrediction {
                rationale_id: r.id.clone(),
                probs: forward_rationale(&r.embedding, &input.explicit, params)?,
                group: groups[&i],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<StanceLabel> = votes.iter().map(|v| StanceLabel::argmax(&v.probs)).collect();
    Ok(ExamplePrediction {
        sample_id: input.sample_id.clone(),
        label: majority_vote(&labels),
        votes,
    })
}

/// Predicts every example in parallel and scores against the gold labels.
pub fn evaluate_examples(params: &ClassifierParams, examples: &[ExampleInput], select: &SelectConfig, mode: VoteMode, run_seed: u64) -> Result<EvalReport> {
    let preds = examples
        .par_iter()
        .map(|ex| predict_example(params, ex, select, mode).map(|p| p.label))
        .collect::<Result<Vec<_>>>()?;
    let golds = examples
        .iter()
        .map(|ex| ex.gold.ok_or_else(|| Error::Invalid(format!("sample {} has no gold stance", ex.sample_id))))
        .collect::<Result<Vec<_>>>()?;
    macro_f1(&preds, &golds, run_seed)
}

fn prepare_all<'a>(examples: &'a [ExampleInput], cal: &Calibration, select: &SelectConfig, mode: VoteMode) -> Result<Vec<PreparedExample<'a>>> {
    examples.iter().map(|ex| prepare(ex, cal, select, mode)).collect()
}

/// Seeded mini-batch training. Selections are recomputed every epoch when
/// the calibration is trainable. The parameters with the best dev
/// macro-F1 are returned; without a dev set, the final ones.
pub fn train(train_set: &[ExampleInput], dev_set: &[ExampleInput], cfg: &TrainConfig, select: &SelectConfig, calibration: Calibration) -> Result<TrainOutcome> {
    cfg.validate()?;
    let d_e = train_set
        .first()
        .map(|ex| ex.explicit.len())
        .ok_or_else(|| Error::Invalid("empty training set".into()))?;
    let mut params = ClassifierParams::init(d_e, cfg.hidden_dim, cfg.seed, calibration);
    let mut adam = Adam::new(&params, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut frozen = if calibration.trainable {
        None
    } else {
        Some(prepare_all(train_set, &params.calibration, select, cfg.vote_mode)?)
    };

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ClassifierParams)> = None;
    for epoch in 1..=cfg.epochs {
        let fresh;
        let prepared: &[PreparedExample] = match &mut frozen {
            Some(p) => p,
            None => {
                fresh = prepare_all(train_set, &params.calibration, select, cfg.vote_mode)?;
                &fresh
            }
        };
        order.shuffle(&mut rng);
        let (mut s, mut rp, mut tot, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<PreparedExample> = chunk.iter().map(|&i| prepared[i].clone()).collect();
            let loss = backward_and_step(&mut params, &mut adam, &batch, cfg)?;
            s += loss.stance;
            rp += loss.rp;
            tot += loss.total;
            batches += 1;
        }
        let nb = batches as f64;
        let dev = if dev_set.is_empty() {
            None
        } else {
            Some(evaluate_examples(&params, dev_set, select, cfg.vote_mode, cfg.seed)?.macro_f1)
        };
        let entry = EpochLog {
            epoch,
            stance_loss: s / nb,
            rp_loss: rp / nb,
            total_loss: tot / nb,
            dev_macro_f1: dev,
        };
        log::info!(
            "epoch {epoch}: L_s={:.5} L_rp={:.5} L={:.5} dev_f1={}",
            entry.stance_loss,
            entry.rp_loss,
            entry.total_loss,
            dev.map(|f| format!("{f:.4}")).unwrap_or_else(|| "-".into())
        );
        log.push(entry);
        if let Some(f) = dev {
            if best.as_ref().is_none_or(|(b, _, _)| f > *b) {
                best = Some((f, epoch, params.clone()));
            }
        }
    }
    Ok(match best {
        Some((_, best_epoch, params)) => TrainOutcome { params, log, best_epoch },
        None => TrainOutcome {
            best_epoch: cfg.epochs,
            params,
            log,
        },
    })
}
