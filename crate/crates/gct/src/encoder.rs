//! Feature encoder: a fully connected 147 -> 256 (ReLU) -> 128 network with a
//! detachable 128 -> 50 action head, trained by behavioral cloning on
//! heuristic-opponent self-play.

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::go::{heuristic_opponent, Action, BoardState, Observation, NUM_ACTIONS};
use crate::nn::{masked_ce, relu, relu_backward, Linear, LinearGrad, Momentum};
use crate::rng::stream;

pub const INPUT_DIM: usize = 147;
pub const HIDDEN_DIM: usize = 256;
pub const FEATURE_DIM: usize = 128;

pub type FeatureVector = Vec<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("n_games must be >= 1")]
    NoGames,
    #[error("dataset is empty")]
    EmptyDataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSample {
    pub obs: Observation,
    pub action: Action,
    pub mask: [bool; NUM_ACTIONS],
}

/// (observation, action, legal-mask) triples from heuristic self-play.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemoDataset {
    pub samples: Vec<DemoSample>,
}

/// Plays `n_games` games with the heuristic opponent on both sides and
/// records every decision. Deterministic given `seed`.
pub fn collect_demos(n_games: usize, seed: u64) -> Result<DemoDataset, EncoderError> {
    if n_games == 0 {
        return Err(EncoderError::NoGames);
    }
    let mut samples = Vec::new();
    for game in 0..n_games {
        let mut rng = stream(seed, &[game as u64]);
        let mut state = BoardState::new_game();
        while !state.is_terminal() {
            let mask = state.legal_mask().expect("non-terminal state");
            let action = heuristic_opponent(&state, &mut rng);
            samples.push(DemoSample {
                obs: state.observe(),
                action,
                mask,
            });
            state = state.apply(action).expect("opponent move must be legal");
        }
    }
    Ok(DemoDataset { samples })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub l1: Linear,
    pub l2: Linear,
    pub head: Linear,
    pub seed: u64,
    pub training_steps: u64,
    /// Mean cloning loss per epoch.
    pub loss_history: Vec<f64>,
}

pub(crate) struct EncoderGrads {
    pub g1: LinearGrad,
    pub g2: LinearGrad,
    pub gh: LinearGrad,
}

impl EncoderGrads {
    fn zeros(e: &Encoder) -> EncoderGrads {
        EncoderGrads {
            g1: LinearGrad::zeros(&e.l1),
            g2: LinearGrad::zeros(&e.l2),
            gh: LinearGrad::zeros(&e.head),
        }
    }
}

impl Encoder {
    pub fn with_dims(input: usize, hidden: usize, feat: usize, actions: usize, seed: u64) -> Self {
        let mut rng = stream(seed, &[0x1]);
        Encoder {
            l1: Linear::new(input, hidden, &mut rng),
            l2: Linear::new(hidden, feat, &mut rng),
            head: Linear::new(feat, actions, &mut rng),
            seed,
            training_steps: 0,
            loss_history: Vec::new(),
        }
    }

    pub fn new_untrained(seed: u64) -> Self {
        Self::with_dims(INPUT_DIM, HIDDEN_DIM, FEATURE_DIM, NUM_ACTIONS, seed)
    }

    pub fn feature_dim(&self) -> usize {
        self.l2.out_dim
    }

    fn forward_raw(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut h = self.l1.forward(x);
        relu(&mut h);
        let feat = self.l2.forward(&h);
        (h, feat)
    }

    /// 128-d feature vector for an observation. Pure function.
    pub fn encode(&self, obs: &Observation) -> FeatureVector {
        self.forward_raw(&obs.to_input()).1
    }

    /// Action logits from the training head.
    pub fn head_logits(&self, feat: &[f64]) -> Vec<f64> {
        self.head.forward(feat)
    }

    /// Cloning loss on one sample, with gradients accumulated into `grads`.
    pub(crate) fn loss_and_grad(
        &self,
        x: &[f64],
        mask: &[bool],
        target: usize,
        grads: &mut EncoderGrads,
    ) -> f64 {
        let (h, feat) = self.forward_raw(x);
        let logits = self.head.forward(&feat);
        let (loss, dlogits) = masked_ce(&logits, mask, target);
        let mut dfeat = vec![0.0; feat.len()];
        self.head.backward(&feat, &dlogits, &mut grads.gh, &mut dfeat);
        let mut dh = vec![0.0; h.len()];
        self.l2.backward(&h, &dfeat, &mut grads.g2, &mut dh);
        relu_backward(&h, &mut dh);
        let mut dx = vec![0.0; x.len()];
        self.l1.backward(x, &dh, &mut grads.g1, &mut dx);
        loss
    }
}

/// Behavioral cloning with minibatch SGD (momentum 0.9, batch 32, lr halved
/// at the midpoint epoch). Returns the frozen encoder.
pub fn train_encoder(
    data: &DemoDataset,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<Encoder, EncoderError> {
    if data.samples.is_empty() {
        return Err(EncoderError::EmptyDataset);
    }
    let mut enc = Encoder::new_untrained(seed);
    let inputs: Vec<Vec<f64>> = data.samples.iter().map(|s| s.obs.to_input()).collect();
    let mut opt1 = Momentum::new(&enc.l1, 0.9);
    let mut opt2 = Momentum::new(&enc.l2, 0.9);
    let mut opth = Momentum::new(&enc.head, 0.9);
    let mut grads = EncoderGrads::zeros(&enc);
    let mut order: Vec<usize> = (0..data.samples.len()).collect();
    let mut shuffle_rng = stream(seed, &[0x2]);
    const BATCH: usize = 32;
    for epoch in 0..epochs {
        let cur_lr = if epoch >= epochs.div_ceil(2) { lr * 0.5 } else { lr };
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(BATCH) {
            grads.g1.reset();
            grads.g2.reset();
            grads.gh.reset();
            for &i in chunk {
                let s = &data.samples[i];
                epoch_loss += enc.loss_and_grad(&inputs[i], &s.mask, s.action.0, &mut grads);
            }
            let scale = 1.0 / chunk.len() as f64;
            grads.g1.scale(scale);
            grads.g2.scale(scale);
            grads.gh.scale(scale);
            opt1.step(&mut enc.l1, &grads.g1, cur_lr);
            opt2.step(&mut enc.l2, &grads.g2, cur_lr);
            opth.step(&mut enc.head, &grads.gh, cur_lr);
            enc.training_steps += 1;
        }
        enc.loss_history.push(epoch_loss / data.samples.len() as f64);
    }
    Ok(enc)
}

/// Deterministic training-free encoder used as a pipeline test double:
/// player-relative occupancy (98), stone counts (2), liberty histograms (8),
/// zero-padded to 128.
pub fn handcrafted_encode(obs: &Observation) -> FeatureVector {
    use crate::go::BOARD_POINTS;
    let mut f = Vec::with_capacity(FEATURE_DIM);
    for plane in &obs.planes[..2] {
        f.extend(plane.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    }
    let own = obs.planes[0].iter().filter(|&&b| b).count();
    let opp = obs.planes[1].iter().filter(|&&b| b).count();
    f.push(own as f64);
    f.push(opp as f64);
    // Liberty histogram: own then opponent groups, bins 1, 2, 3, >=4.
    for plane_idx in 0..2 {
        let mut bins = [0.0; 4];
        let mut seen = [false; BOARD_POINTS];
        for start in 0..BOARD_POINTS {
            if !obs.planes[plane_idx][start] || seen[start] {
                continue;
            }
            let mut members = vec![start];
            let mut stack = vec![start];
            seen[start] = true;
            let mut libs = std::collections::BTreeSet::new();
            while let Some(p) = stack.pop() {
                for q in crate::go::neighbors(p) {
                    if obs.planes[plane_idx][q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                        members.push(q);
                    } else if obs.planes[2][q] {
                        libs.insert(q);
                    }
                }
            }
            let bin = libs.len().clamp(1, 4) - 1;
            bins[bin] += 1.0;
        }
        f.extend_from_slice(&bins);
    }
    f.resize(FEATURE_DIM, 0.0);
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::go::PASS;

    #[test]
    fn collect_demos_validates_and_is_deterministic() {
        assert_eq!(collect_demos(0, 3), Err(EncoderError::NoGames));
        let a = collect_demos(2, 7).unwrap();
        let b = collect_demos(2, 7).unwrap();
        assert_eq!(a, b);
        assert!(!a.samples.is_empty());
        for s in &a.samples {
            assert!(s.mask[s.action.0], "recorded action must be legal");
        }
    }

    #[test]
    fn single_game_dataset_size_matches_move_count() {
        let data = collect_demos(1, 11).unwrap();
        // Replay the game to count moves.
        let mut rng = stream(11, &[0]);
        let mut state = BoardState::new_game();
        let mut moves = 0;
        while !state.is_terminal() {
            let action = heuristic_opponent(&state, &mut rng);
            state = state.apply(action).unwrap();
            moves += 1;
        }
        assert_eq!(data.samples.len(), moves);
    }

    #[test]
    fn train_rejects_empty_dataset() {
        let data = DemoDataset::default();
        assert_eq!(
            train_encoder(&data, 1, 0.01, 0).unwrap_err(),
            EncoderError::EmptyDataset
        );
    }

    #[test]
    fn training_memorizes_single_sample() {
        let mut data = collect_demos(1, 5).unwrap();
        data.samples.truncate(1);
        let enc = train_encoder(&data, 200, 0.05, 1).unwrap();
        let s = &data.samples[0];
        let logits = enc.head_logits(&enc.encode(&s.obs));
        let pred = crate::nn::masked_argmax(&logits, &s.mask);
        assert_eq!(pred, s.action.0);
        assert!(enc.loss_history.last().unwrap() < enc.loss_history.first().unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let data = collect_demos(3, 5).unwrap();
        let a = train_encoder(&data, 3, 0.01, 9).unwrap();
        let b = train_encoder(&data, 3, 0.01, 9).unwrap();
        assert_eq!(a.l1.w, b.l1.w);
        assert_eq!(a.l2.w, b.l2.w);
        assert_eq!(a.head.w, b.head.w);
    }

    #[test]
    fn encode_is_pure_and_finite() {
        let data = collect_demos(2, 5).unwrap();
        let enc = train_encoder(&data, 2, 0.01, 4).unwrap();
        let obs = BoardState::new_game().observe();
        let f1 = enc.encode(&obs);
        let f2 = enc.encode(&obs);
        assert_eq!(f1, f2);
        assert_eq!(f1.len(), FEATURE_DIM);
        assert!(f1.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn masked_probability_of_illegal_actions_is_negligible() {
        let data = collect_demos(1, 5).unwrap();
        let enc = train_encoder(&data, 1, 0.01, 4).unwrap();
        let mut state = BoardState::new_game();
        state = state.apply(Action(0)).unwrap();
        let mut mask = state.legal_mask().unwrap();
        mask[0] = false; // occupied
        let logits = enc.head_logits(&enc.encode(&state.observe()));
        let probs = crate::nn::masked_softmax(&logits, &mask);
        assert!(probs[0] < 1e-9);
        assert!(probs[PASS] > 0.0);
    }

    #[test]
    fn gradient_check_small_network() {
        // Width-8 network, 5 samples, central differences at 1e-3. The seed
        // is chosen so no hidden pre-activation sits within the step of the
        // ReLU kink, which would invalidate the finite difference.
        let enc = Encoder::with_dims(6, 8, 4, 5, 4);
        let mut rng = stream(77, &[0]);
        let samples: Vec<(Vec<f64>, Vec<bool>, usize)> = (0..5)
            .map(|_| {
                let x: Vec<f64> = (0..6).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
                let mask = vec![true, true, false, true, true];
                let target = 3;
                (x, mask, target)
            })
            .collect();
        let batch_loss = |enc: &Encoder| -> f64 {
            let mut g = EncoderGrads::zeros(enc);
            samples
                .iter()
                .map(|(x, m, t)| enc.loss_and_grad(x, m, *t, &mut g))
                .sum()
        };
        let mut grads = EncoderGrads::zeros(&enc);
        for (x, m, t) in &samples {
            enc.loss_and_grad(x, m, *t, &mut grads);
        }
        let h = 1e-3;
        let check = |get: &dyn Fn(&mut Encoder) -> &mut Vec<f64>, analytic: &[f64]| {
            let mut e = enc.clone();
            for i in 0..analytic.len() {
                let orig = get(&mut e)[i];
                get(&mut e)[i] = orig + h;
                let lp = batch_loss(&e);
                get(&mut e)[i] = orig - h;
                let lm = batch_loss(&e);
                get(&mut e)[i] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let denom = fd.abs().max(analytic[i].abs()).max(1e-6);
                assert!(
                    ((fd - analytic[i]).abs() / denom) < 1e-4,
                    "fd={fd} analytic={}",
                    analytic[i]
                );
            }
        };
        check(&|e| &mut e.l1.w, &grads.g1.dw);
        check(&|e| &mut e.l2.w, &grads.g2.dw);
        check(&|e| &mut e.head.w, &grads.gh.dw);
        check(&|e| &mut e.head.b, &grads.gh.db);
    }

    #[test]
    fn handcrafted_features_player_relative() {
        let empty = BoardState::new_game().observe();
        let f = handcrafted_encode(&empty);
        assert_eq!(f.len(), FEATURE_DIM);
        assert_eq!(f[98], 0.0);
        assert_eq!(f[99], 0.0);

        // One Black stone, White to move vs one White stone, Black to move:
        // identical player-relative features.
        let a = BoardState::new_game().apply(Action(10)).unwrap().observe();
        let mut b = BoardState::new_game();
        b.to_move = crate::go::Color::White;
        let b = b.apply(Action(10)).unwrap().observe();
        assert_eq!(handcrafted_encode(&a), handcrafted_encode(&b));
    }
}

