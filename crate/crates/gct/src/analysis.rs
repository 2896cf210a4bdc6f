//! Concept validation experiments: causal intervention, per-concept
//! ablation, and the K-sweep.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{transfer, AlignMethod};
use crate::bottleneck::{act, evaluate, ActMode, Agent, OpponentKind};
use crate::go::{heuristic_opponent, Action, BoardState, Color, NUM_ACTIONS, PASS};
use crate::pipeline::{train_agent, TrainingBudget};
use crate::rng::stream;
use crate::stats::binomial_test;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("n_alternatives must be <= K - 1")]
    TooManyAlternatives,
    #[error("games_per_concept must be >= 1")]
    NoGames,
    #[error("k_values must be nonempty")]
    EmptySweep,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InterventionReport {
    pub n_states: usize,
    pub alternatives_per_state: usize,
    pub total_interventions: usize,
    pub change_count: usize,
    pub change_rate: f64,
    pub per_state_change_rates: Vec<f64>,
    pub median_rate: f64,
    pub rate_std: f64,
    /// Empirical null rate from the permutation baseline.
    pub null_p0: f64,
    pub p_value: f64,
}

/// Greedy rollout states (agent to move), deduplicated by board hash.
fn sample_states(agent: &Agent, n_states: usize, seed: u64) -> Vec<BoardState> {
    let mut states = Vec::with_capacity(n_states);
    let mut seen = std::collections::HashSet::new();
    let mut game: u64 = 0;
    while states.len() < n_states {
        let mut rng = stream(seed, &[0x5a, game]);
        let agent_color = if game % 2 == 0 { Color::Black } else { Color::White };
        let mut s = BoardState::new_game();
        while !s.is_terminal() && states.len() < n_states {
            if s.to_move == agent_color {
                if seen.insert(s.position_code()) {
                    states.push(s.clone());
                }
                let a = act(agent, &s, ActMode::Greedy, &mut rng);
                s = s.apply(a).expect("greedy action legal");
            } else {
                let a = heuristic_opponent(&s, &mut rng);
                s = s.apply(a).expect("opponent action legal");
            }
        }
        game += 1;
        // Greedy play revisits positions; very deep duplication cannot stall
        // the loop forever because opponent randomness keeps producing new
        // games, but cap anyway.
        assert!(game < 200_000, "state sampling stalled");
    }
    states
}

fn intervene_impl(
    agent: &Agent,
    n_states: usize,
    n_alternatives: usize,
    seed: u64,
    self_override: bool,
) -> Result<InterventionReport, AnalysisError> {
    let k = agent.policy.k;
    if n_alternatives >= k {
        return Err(AnalysisError::TooManyAlternatives);
    }
    let states = sample_states(agent, n_states, seed);
    let mut rng = stream(seed, &[0x17]);
    let mut per_state = Vec::with_capacity(states.len());
    let mut change_count = 0usize;
    let mut records: Vec<(usize, [bool; NUM_ACTIONS], Action)> = Vec::with_capacity(states.len());
    for s in &states {
        let mask = s.legal_mask().expect("non-terminal");
        let true_c = agent.concept_of(s);
        let true_action = agent.policy.greedy_action(true_c, &mask);
        records.push((true_c, mask, true_action));
        let mut changes = 0usize;
        if self_override {
            // Control: the override set is forced to the true concept.
            for _ in 0..n_alternatives {
                if agent.policy.greedy_action(true_c, &mask) != true_action {
                    changes += 1;
                }
            }
        } else {
            // n_alternatives distinct concepts uniformly from the other K-1.
            let mut others: Vec<usize> = (0..k).filter(|&c| c != true_c).collect();
            for pick in 0..n_alternatives {
                let j = rng.gen_range(pick..others.len());
                others.swap(pick, j);
                let alt = others[pick];
                if agent.policy.greedy_action(alt, &mask) != true_action {
                    changes += 1;
                }
            }
        }
        change_count += changes;
        per_state.push(changes as f64 / n_alternatives as f64);
    }
    let total = states.len() * n_alternatives;

    // Permutation baseline: with concept labels shuffled, how often do two
    // uniformly drawn concepts disagree under the sampled masks?
    const NULL_DRAWS: usize = 10_000;
    let mut null_rng = stream(seed, &[0x2b]);
    let mut null_diff = 0usize;
    for _ in 0..NULL_DRAWS {
        let (true_c, mask, _) = &records[null_rng.gen_range(0..records.len())];
        let c1 = null_rng.gen_range(0..k);
        let mut c2 = null_rng.gen_range(0..k - 1);
        if c2 >= *true_c {
            c2 += 1;
        }
        if agent.policy.greedy_action(c1, mask) != agent.policy.greedy_action(c2, mask) {
            null_diff += 1;
        }
    }
    let null_p0 = (null_diff as f64 / NULL_DRAWS as f64).clamp(1e-6, 1.0 - 1e-6);
    let p_value = binomial_test(change_count as u64, total as u64, null_p0)
        .expect("valid binomial inputs");

    let change_rate = change_count as f64 / total as f64;
    let mut sorted = per_state.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_rate = if sorted.is_empty() {
        0.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    let mean = change_rate;
    let rate_std = (per_state.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
        / per_state.len() as f64)
        .sqrt();
    Ok(InterventionReport {
        n_states: states.len(),
        alternatives_per_state: n_alternatives,
        total_interventions: total,
        change_count,
        change_rate,
        per_state_change_rates: per_state,
        median_rate,
        rate_std,
        null_p0,
        p_value,
    })
}

/// Overrides each sampled state's concept with `n_alternatives` random other
/// concepts and counts how often the greedy action changes; the p-value is
/// an exact two-sided binomial test against the permutation-baseline null.
pub fn intervene(
    agent: &Agent,
    n_states: usize,
    n_alternatives: usize,
    seed: u64,
) -> Result<InterventionReport, AnalysisError> {
    intervene_impl(agent, n_states, n_alternatives, seed, false)
}

/// Control where every override is the state's own concept; the change rate
/// must be exactly zero.
pub fn intervene_self_override(
    agent: &Agent,
    n_states: usize,
    n_alternatives: usize,
    seed: u64,
) -> Result<InterventionReport, AnalysisError> {
    intervene_impl(agent, n_states, n_alternatives, seed, true)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AblationRow {
    pub concept: usize,
    pub frequency: f64,
    pub baseline_win_rate: f64,
    pub ablated_win_rate: f64,
    pub drop: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub baseline_win_rate: f64,
    /// Usage frequency of every concept over baseline-run decision states.
    pub frequencies: Vec<f64>,
    pub games_per_concept: usize,
}

/// Plays `n_games` against the heuristic opponent; whenever the assigned
/// concept is in `ablated`, the agent's move is replaced with a uniform
/// random legal move. Returns (win rate, per-concept usage counts).
pub fn win_rate_with_ablation_set(
    agent: &Agent,
    ablated: &[bool],
    n_games: usize,
    base_seed: u64,
) -> (f64, Vec<u64>) {
    let mut wins = 0usize;
    let mut usage = vec![0u64; agent.policy.k];
    for game in 0..n_games {
        let mut rng = stream(base_seed, &[0xab, game as u64]);
        let agent_color = if game % 2 == 0 { Color::Black } else { Color::White };
        let mut s = BoardState::new_game();
        while !s.is_terminal() {
            let a = if s.to_move == agent_color {
                let mask = s.legal_mask().expect("non-terminal");
                let c = agent.concept_of(&s);
                usage[c] += 1;
                if ablated[c] {
                    let legal: Vec<usize> = (0..=PASS).filter(|&i| mask[i]).collect();
                    Action(legal[rng.gen_range(0..legal.len())])
                } else {
                    agent.policy.greedy_action(c, &mask)
                }
            } else {
                heuristic_opponent(&s, &mut rng)
            };
            s = s.apply(a).expect("legal move");
        }
        if s.score().expect("terminal").winner == agent_color {
            wins += 1;
        }
    }
    (wins as f64 / n_games as f64, usage)
}

/// Ablates each listed concept (all of them when `concepts` is `None`),
/// pairing the baseline and ablated runs on the same seed stream.
pub fn ablate(
    agent: &Agent,
    concepts: Option<&[usize]>,
    games_per_concept: usize,
    seed: u64,
) -> Result<AblationReport, AnalysisError> {
    if games_per_concept == 0 {
        return Err(AnalysisError::NoGames);
    }
    let k = agent.policy.k;
    let none = vec![false; k];
    let (baseline_win_rate, usage) =
        win_rate_with_ablation_set(agent, &none, games_per_concept, seed);
    let total_usage: u64 = usage.iter().sum();
    let frequencies: Vec<f64> = usage
        .iter()
        .map(|&u| u as f64 / total_usage.max(1) as f64)
        .collect();
    let targets: Vec<usize> = match concepts {
        Some(list) => list.to_vec(),
        None => (0..k).collect(),
    };
    let mut rows = Vec::with_capacity(targets.len());
    for &c in &targets {
        let mut set = vec![false; k];
        set[c] = true;
        let (ablated_win_rate, _) = win_rate_with_ablation_set(agent, &set, games_per_concept, seed);
        rows.push(AblationRow {
            concept: c,
            frequency: frequencies[c],
            baseline_win_rate,
            ablated_win_rate,
            drop: baseline_win_rate - ablated_win_rate,
        });
    }
    Ok(AblationReport {
        rows,
        baseline_win_rate,
        frequencies,
        games_per_concept,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KSweepRow {
    pub k: usize,
    pub direct_win_rate: f64,
    pub transfer_win_rate: f64,
}

/// For each K, trains a source and a target agent from different seeds,
/// evaluates the source directly and the Hungarian source-to-target
/// transfer against the heuristic opponent.
pub fn k_sweep(
    k_values: &[usize],
    budget: &TrainingBudget,
    eval_seeds: usize,
    eval_games: usize,
    seed: u64,
) -> Result<Vec<KSweepRow>, AnalysisError> {
    if k_values.is_empty() {
        return Err(AnalysisError::EmptySweep);
    }
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let b = TrainingBudget { k, ..*budget };
        let src = train_agent(&b, seed);
        let tgt = train_agent(&b, seed.wrapping_add(1));
        let direct = evaluate(&src, OpponentKind::Heuristic, eval_seeds, eval_games, seed);
        let transferred =
            transfer(&src, &tgt, AlignMethod::Hungarian, None).expect("matched k and dims");
        let t_eval = evaluate(
            &transferred,
            OpponentKind::Heuristic,
            eval_seeds,
            eval_games,
            seed,
        );
        rows.push(KSweepRow {
            k,
            direct_win_rate: direct.mean,
            transfer_win_rate: t_eval.mean,
        });
    }
    Ok(rows)
}
