//! Directional checks on the alternating training loop: the attacker's
//! cross entropy falls as it trains, the recommender's loss falls across
//! epochs with and without the adversary, and the adversary term
//! actually changes where the recommender ends up.

use privnet_core::data::{generate_synthetic, prepare_dataset, Dataset, SplitSpec, SyntheticConfig};
use privnet_core::model::ModelConfig;
use privnet_core::train::{fit, FitResult, TrainConfig};

fn dataset(correlation: f64, seed: u64) -> Dataset {
    let (source, target, attributes) = generate_synthetic(&SyntheticConfig {
        users: 60,
        items_per_domain: 40,
        latent_dim: 4,
        correlation,
        source_events_per_user: 10,
        target_events_per_user: 6,
        seed,
    })
    .unwrap();
    prepare_dataset(
        source,
        target,
        attributes,
        &SplitSpec { seed, ..SplitSpec::default() },
        30,
    )
    .unwrap()
}

fn model() -> ModelConfig {
    ModelConfig {
        embed_dim: 4,
        hidden: 3,
        window: 4,
        transfer_layers: 1,
        transfer_enabled: true,
        n_source_items: 40,
        n_target_items: 40,
        attribute_classes: vec![2],
    }
}

fn config(lambda: f64, max_epochs: usize) -> TrainConfig {
    TrainConfig {
        lambda,
        batch_size: 8,
        learning_rate: 0.01,
        max_epochs,
        patience: max_epochs,
        seed: 23,
        ..TrainConfig::default()
    }
}

fn run(lambda: f64, max_epochs: usize) -> FitResult {
    fit(&dataset(1.0, 23), &model(), &config(lambda, max_epochs)).unwrap()
}

#[test]
fn attacker_cross_entropy_falls_within_the_first_epoch() {
    // With fully attribute-correlated source histories the transferred
    // representations separate the classes even at initialization, so a
    // learning attacker must reduce its loss over the epoch's steps.
    let result = run(1.0, 1);
    let row = &result.history[0];
    assert!(row.attacker_loss.is_some());

    let data = dataset(1.0, 23);
    let mut params = privnet_core::model::RecommenderParams::init(&model(), 23).unwrap();
    let mut attacker = privnet_core::model::AttackerParams::init(&model(), 23).unwrap();
    let mut state =
        privnet_core::train::TrainState::new(&model(), &params, &attacker, &config(1.0, 1));
    let stats = privnet_core::train::train_epoch(
        &mut params,
        &mut attacker,
        &mut state,
        &data,
        &model(),
        &config(1.0, 1),
    )
    .unwrap();
    let ce = &stats.batch_attacker;
    assert!(ce.len() >= 10, "expected many batches, got {}", ce.len());
    let head: f64 = ce[..5].iter().sum::<f64>() / 5.0;
    let tail: f64 = ce[ce.len() - 5..].iter().sum::<f64>() / 5.0;
    assert!(
        tail < head,
        "attacker cross entropy should fall within the epoch: {head} -> {tail}"
    );
}

#[test]
fn recommender_loss_falls_across_epochs() {
    for lambda in [0.0, 1.0] {
        let result = run(lambda, 5);
        let first = result.history.first().unwrap().recommender_loss;
        let last = result.history.last().unwrap().recommender_loss;
        assert!(
            last < first,
            "lambda {lambda}: recommender loss should fall, {first} -> {last}"
        );
    }
}

#[test]
fn adversary_gradient_reaches_the_recommender() {
    let plain = run(0.0, 2);
    let adversarial = run(1.0, 2);
    assert_ne!(
        plain.params, adversarial.params,
        "the adversary term must change the recommender's trajectory"
    );
    // histories agree on shape but not on the attacker column
    assert!(plain.history.iter().all(|r| r.attacker_loss.is_none()));
    assert!(adversarial.history.iter().all(|r| r.attacker_loss.is_some()));
    for row in &adversarial.history {
        assert_eq!(row.attacker_valid_f1.len(), 1);
    }
}
