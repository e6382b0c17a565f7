use super::checkpoint::{decode, encode};
use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use StanceLabel::*;

fn tiny_params() -> ClassifierParams {
    let mut p = ClassifierParams::zeros(4, 2, Calibration::identity(false));
    p.w_imp = vec![0.5, -1.0, 1.0, 1.0, 0.25, 0.5, 0.0, 0.5];
    p.b_imp = vec![0.1, -0.2];
    p.w_exp = vec![1.0, 0.0, 0.5, -0.5, -1.0, 1.0, 2.0, 2.0];
    p.b_exp = vec![0.0, 0.3];
    p.w_out = vec![1.0, 0.0, -1.0, 5.0, 5.0, 5.0, 7.0, 7.0, 7.0, 0.0, 1.0, 0.5];
    p.b_out = vec![0.0, 0.0, 0.1];
    p
}

#[test]
fn hand_computed_forward_pass() {
    // h_imp = relu(0.35, -0.7) = (0.35, 0); h_exp = relu(-0.5, 0.8) = (0, 0.8)
    // z = (0.35, 0.8, -0.35 + 0.4 + 0.1) = (0.35, 0.8, 0.15)
    let probs = forward_rationale(&[1.0, 0.0, -1.0, 2.0], &[0.0, 1.0, 1.0, 0.0], &tiny_params()).unwrap();
    let expected = [0.295242787923658, 0.4630328619787626, 0.24172435009757942];
    for j in 0..3 {
        assert!((probs[j] - expected[j]).abs() < 1e-9, "{probs:?}");
    }
}

#[test]
fn zero_model_is_uniform() {
    let p = ClassifierParams::zeros(5, 3, Calibration::identity(false));
    let probs = forward_rationale(&[0.0; 5], &[0.0; 5], &p).unwrap();
    assert!(probs.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
}

#[test]
fn dimension_mismatch() {
    let p = ClassifierParams::zeros(5, 3, Calibration::identity(false));
    assert!(matches!(
        forward_rationale(&[0.0; 4], &[0.0; 5], &p),
        Err(Error::DimensionMismatch { expected: 5, actual: 4 })
    ));
}

#[test]
fn random_forward_passes_normalize() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = ClassifierParams::init(6, 4, 3, Calibration::identity(false));
    for _ in 0..1000 {
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let probs = forward_rationale(&x, &y, &p).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn stance_loss_examples() {
    assert!(stance_loss(&[[1.0, 0.0, 0.0]], Favor) < 1e-12);
    assert!((stance_loss(&[], Against) - 3f64.ln()).abs() < 1e-15);
    let l = stance_loss(&[[0.8, 0.1, 0.1], [0.6, 0.2, 0.2]], Favor);
    assert!((l - 0.3566749439387324).abs() < 1e-12);
    assert!(stance_loss(&[[1.0, 0.0, 0.0]], Neutral) <= -(PROB_FLOOR.ln()) + 1e-9);
}

#[test]
fn reward_cases() {
    let right = [0.7, 0.2, 0.1];
    let wrong = [0.1, 0.7, 0.2];
    assert_eq!(1.0 - reward(RelevanceGroup::Relevant, &right, Favor, 0.1), 0.9);
    assert_eq!(1.0 - reward(RelevanceGroup::Relevant, &wrong, Favor, 0.1), 1.1);
    assert_eq!(1.0 - reward(RelevanceGroup::Irrelevant, &wrong, Favor, 0.1), 0.9);
    assert_eq!(1.0 - reward(RelevanceGroup::Irrelevant, &right, Favor, 0.1), 1.1);
    let total = 1.0 + 0.5 * (0.8 * (1.0 - 0.1));
    assert_eq!(total, 1.36);
}

#[test]
fn majority_vote_all_triples() {
    assert_eq!(majority_vote(&[Against, Against, Favor]), Against);
    assert_eq!(majority_vote(&[Favor, Against, Neutral]), Neutral);
    assert_eq!(majority_vote(&[]), Neutral);
    for a in StanceLabel::ALL {
        for b in StanceLabel::ALL {
            for c in StanceLabel::ALL {
                let v = [a, b, c];
                let expected = if a == b || a == c {
                    a
                } else if b == c {
                    b
                } else {
                    Neutral
                };
                assert_eq!(majority_vote(&v), expected, "{v:?}");
            }
        }
    }
    assert_eq!(majority_vote(&[Favor, Favor, Against, Against]), Neutral);
}

proptest! {
    #[test]
    fn vote_permutation_invariant(v in prop::collection::vec(prop::sample::select(StanceLabel::ALL.to_vec()), 0..9), seed in any::<u64>()) {
        let mut w = v.clone();
        w.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(majority_vote(&v), majority_vote(&w));
    }
}

use rand::seq::SliceRandom;

fn random_example(rng: &mut ChaCha8Rng, id: usize, d_e: usize, n: usize) -> ExampleInput {
    let vec = |rng: &mut ChaCha8Rng| (0..d_e).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    ExampleInput {
        sample_id: format!("s{id}"),
        gold: Some(StanceLabel::ALL[rng.gen_range(0..3)]),
        explicit: vec(rng),
        rationales: (0..n)
            .map(|j| RationaleInput {
                id: format!("r{}", j + 1),
                embedding: vec(rng),
                raw: std::array::from_fn(|_| rng.gen_range(-2.0..2.0)),
            })
            .collect(),
    }
}

fn random_params(seed: u64, d_e: usize, d_d: usize) -> ClassifierParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
    let mut p = ClassifierParams::init(d_e, d_d, seed, Calibration::identity(true));
    for b in p.b_imp.iter_mut().chain(p.b_exp.iter_mut()).chain(p.b_out.iter_mut()) {
        *b = rng.gen_range(-0.3..0.3);
    }
    p.calibration.scale = std::array::from_fn(|_| rng.gen_range(0.5..1.5));
    p.calibration.bias = std::array::from_fn(|_| rng.gen_range(-0.5..0.5));
    p
}

fn total_loss(p: &ClassifierParams, batch: &[PreparedExample], rewards: &[Vec<f64>], q: f64) -> f64 {
    loss_and_gradient(p, batch, rewards, q).unwrap().0.total
}

#[test]
fn gradients_match_finite_differences() {
    let (d_e, d_d, q) = (8, 4, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs: Vec<ExampleInput> = (0..3).map(|i| random_example(&mut rng, i, d_e, 3 + i)).collect();
    let batch: Vec<PreparedExample> = inputs
        .iter()
        .map(|ex| {
            let n = ex.rationales.len();
            PreparedExample {
                input: ex,
                vote: (0..n).collect(),
                judged: (0..n)
                    .map(|i| (i, if i % 2 == 0 { RelevanceGroup::Relevant } else { RelevanceGroup::Irrelevant }))
                    .collect(),
            }
        })
        .collect();
    let params = random_params(3, d_e, d_d);
    let rewards = compute_rewards(&params, &batch, 0.1).unwrap();
    let (_, grads) = loss_and_gradient(&params, &batch, &rewards, q).unwrap();
    let h = 1e-5;
    for b in 0..8 {
        for j in 0..params.blocks()[b].len() {
            let mut plus = params.clone();
            plus.blocks_mut()[b][j] += h;
            let mut minus = params.clone();
            minus.blocks_mut()[b][j] -= h;
            let fd = (total_loss(&plus, &batch, &rewards, q) - total_loss(&minus, &batch, &rewards, q)) / (2.0 * h);
            let an = grads.blocks[b][j];
            let scale = an.abs().max(fd.abs());
            assert!(
                (an - fd).abs() <= 1e-3 * scale || (an - fd).abs() < 1e-8,
                "{}[{j}]: analytic {an} vs numeric {fd}",
                BLOCK_NAMES[b]
            );
        }
    }
}

#[test]
fn frozen_calibration_gets_no_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let input = random_example(&mut rng, 0, 5, 3);
    let batch = [PreparedExample {
        input: &input,
        vote: vec![0, 1],
        judged: vec![(0, RelevanceGroup::Relevant), (2, RelevanceGroup::Irrelevant)],
    }];
    let mut p = random_params(4, 5, 3);
    p.calibration.trainable = false;
    let rewards = compute_rewards(&p, &batch, 0.1).unwrap();
    let (loss, g) = loss_and_gradient(&p, &batch, &rewards, 0.5).unwrap();
    assert!(loss.rp > 0.0);
    assert!(g.block("calibration.scale").iter().chain(g.block("calibration.bias")).all(|&x| x == 0.0));
}

#[test]
fn zero_learning_rate_is_noop() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let input = random_example(&mut rng, 0, 6, 3);
    let batch = [PreparedExample {
        input: &input,
        vote: vec![0, 1, 2],
        judged: vec![(0, RelevanceGroup::Relevant)],
    }];
    let mut p = random_params(5, 6, 3);
    let before = p.clone();
    let cfg = TrainConfig {
        lr: 0.0,
        ..TrainConfig::default()
    };
    let mut adam = Adam::new(&p, 0.0);
    backward_and_step(&mut p, &mut adam, &batch, &cfg).unwrap();
    for (a, b) in p.blocks().iter().zip(before.blocks()) {
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn non_finite_gradient_names_block() {
    let mut p = random_params(6, 3, 2);
    let mut g = Gradients::zeros_like(&p);
    g.blocks[4][1] = f64::NAN;
    let err = Adam::new(&p, 0.1).step(&mut p, &g).unwrap_err();
    assert!(matches!(err, Error::NonFiniteGradient("w_out")));
}

#[test]
fn loss_decreases_on_separable_batch() {
    let d_e = 6;
    let inputs: Vec<ExampleInput> = (0..12)
        .map(|i| {
            let c = i % 3;
            let onehot = |shift: f64| {
                (0..d_e)
                    .map(|j| {
                        if j == c {
                            1.0 + shift
                        } else if j == c + 3 {
                            0.5
                        } else {
                            0.0
                        }
                    })
                    .collect::<Vec<f64>>()
            };
            ExampleInput {
                sample_id: format!("s{i}"),
                gold: Some(StanceLabel::ALL[c]),
                explicit: onehot(0.0),
                rationales: vec![RationaleInput {
                    id: "r1".into(),
                    embedding: onehot(i as f64 * 0.01),
                    raw: [0.0; 3],
                }],
            }
        })
        .collect();
    let batch: Vec<PreparedExample> = inputs
        .iter()
        .map(|ex| PreparedExample {
            input: ex,
            vote: vec![0],
            judged: vec![(0, RelevanceGroup::Relevant)],
        })
        .collect();
    let mut p = ClassifierParams::init(d_e, 8, 9, Calibration::identity(false));
    let cfg = TrainConfig {
        lr: 1e-2,
        ..TrainConfig::default()
    };
    let mut adam = Adam::new(&p, cfg.lr);
    let first = backward_and_step(&mut p, &mut adam, &batch, &cfg).unwrap().stance;
    let mut last = first;
    for _ in 0..49 {
        last = backward_and_step(&mut p, &mut adam, &batch, &cfg).unwrap().stance;
    }
    assert!(last < 0.5 * first, "{first} -> {last}");
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let p = random_params(7, 5, 3);
    let bytes = encode(&p, 42);
    let (q, seed) = decode(&bytes).unwrap();
    assert_eq!((q, seed), (p.clone(), 42));
    assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[8] = 9;
    assert!(matches!(decode(&bad), Err(Error::Checkpoint(_))));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("params.bin");
    write_checkpoint(&path, &p, 1).unwrap();
    assert_eq!(read_checkpoint(&path).unwrap().0, p);
}

fn train_fixture(seed: u64) -> (Vec<ExampleInput>, Vec<ExampleInput>) {
    let d_e = 9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |i: usize| {
        let c = i % 3;
        let vec = |rng: &mut ChaCha8Rng| {
            (0..d_e)
                .map(|j| if j % 3 == c { 1.0 } else { 0.0 } + rng.gen_range(-0.2..0.2))
                .collect::<Vec<f64>>()
        };
        ExampleInput {
            sample_id: format!("s{i}"),
            gold: Some(StanceLabel::ALL[c]),
            explicit: vec(&mut rng),
            rationales: (0..3)
                .map(|j| {
                    let mut raw = [0.0; 3];
                    raw[c] = 4.0;
                    RationaleInput {
                        id: format!("r{}", j + 1),
                        embedding: vec(&mut rng),
                        raw,
                    }
                })
                .collect(),
        }
    };
    let all: Vec<ExampleInput> = (0..60).map(&mut make).collect();
    (all[..45].to_vec(), all[45..].to_vec())
}

#[test]
fn training_is_deterministic_and_learns() {
    let (tr, dev) = train_fixture(1);
    let cfg = TrainConfig {
        lr: 1e-2,
        batch_size: 8,
        epochs: 15,
        hidden_dim: 8,
        seed: 3,
        ..TrainConfig::default()
    };
    let sel = SelectConfig::default();
    let a = train(&tr, &dev, &cfg, &sel, Calibration::identity(true)).unwrap();
    let b = train(&tr, &dev, &cfg, &sel, Calibration::identity(true)).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.params, b.params);
    let best = a.log.iter().filter_map(|e| e.dev_macro_f1).fold(0.0, f64::max);
    assert!(best >= 0.9, "{:?}", a.log);
    let report = evaluate_examples(&a.params, &dev, &sel, cfg.vote_mode, 3).unwrap();
    assert_eq!(Some(report.macro_f1), a.log[a.best_epoch - 1].dev_macro_f1);
}

#[test]
fn frozen_calibration_survives_training() {
    let (tr, dev) = train_fixture(2);
    let cfg = TrainConfig {
        q: 0.0,
        epochs: 2,
        hidden_dim: 4,
        ..TrainConfig::default()
    };
    let cal = Calibration::identity(false);
    let out = train(&tr, &dev, &cfg, &SelectConfig::default(), cal).unwrap();
    assert_eq!(out.params.calibration, cal);
}

#[test]
fn config_validation() {
    assert!(TrainConfig {
        beta: 1.0,
        ..TrainConfig::default()
    }
    .validate()
    .is_err());
    assert!(TrainConfig {
        q: -0.1,
        ..TrainConfig::default()
    }
    .validate()
    .is_err());
    assert!(TrainConfig::default().validate().is_ok());
    assert_eq!("all".parse::<VoteMode>().unwrap(), VoteMode::AllPlusExplicit);
}
