//! One-call composition of the training stages, used by the K-sweep and the
//! experiment suites.

use crate::bottleneck::{train_bottleneck, Agent};
use crate::concepts::{collect_features, fit_kmeans};
use crate::encoder::{collect_demos, train_encoder};

/// Desk-scale training budget for one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingBudget {
    pub demo_games: usize,
    pub encoder_epochs: usize,
    pub bottleneck_epochs: usize,
    pub lr: f64,
    pub feature_games: usize,
    pub k: usize,
    pub kmeans_seed: u64,
}

impl Default for TrainingBudget {
    fn default() -> Self {
        TrainingBudget {
            demo_games: 200,
            encoder_epochs: 20,
            bottleneck_epochs: 20,
            lr: 0.05,
            feature_games: 100,
            k: 64,
            kmeans_seed: 42,
        }
    }
}

impl TrainingBudget {
    /// Same pipeline at a fraction of the data/epoch budget (weak agent).
    pub fn scaled(&self, fraction: f64) -> TrainingBudget {
        let f = |x: usize| ((x as f64 * fraction).round() as usize).max(1);
        TrainingBudget {
            demo_games: f(self.demo_games),
            encoder_epochs: f(self.encoder_epochs),
            bottleneck_epochs: f(self.bottleneck_epochs),
            feature_games: f(self.feature_games),
            ..*self
        }
    }
}

/// Runs collect -> train-encoder -> discover -> train-bottleneck with all
/// stage seeds derived from `seed`.
pub fn train_agent(budget: &TrainingBudget, seed: u64) -> Agent {
    let demos = collect_demos(budget.demo_games, seed).expect("demo_games >= 1");
    let encoder =
        train_encoder(&demos, budget.encoder_epochs, budget.lr, seed).expect("nonempty demos");
    let features =
        collect_features(&encoder, budget.feature_games, seed).expect("feature_games >= 1");
    let concept_model = fit_kmeans(&features, budget.k, budget.kmeans_seed)
        .expect("enough features for k clusters");
    let policy = train_bottleneck(
        &encoder,
        &concept_model,
        &demos,
        budget.bottleneck_epochs,
        budget.lr,
        seed,
    )
    .expect("nonempty demos");
    Agent::new(encoder, concept_model, policy).expect("consistent dims")
}
