use simpair::encoder::{EmbeddingModel, Representations};
use simpair::interactions::{gen_synthetic_components, InteractionDataset};
use simpair::objective::{Ablation, ObjectiveConfig};
use simpair::trainer::{fit, initial_model, synthetic_config, train_epoch, TrainConfig, TrainState};

fn synthetic(v: usize, per: usize, seed: u64) -> InteractionDataset {
    gen_synthetic_components(v, per, per, 0.1, seed).unwrap().dataset
}

#[test]
fn untouched_rows_are_bit_identical_after_a_batch() {
    // a single batch covering only users 0..3 and items 0..3
    let pairs = vec![(0, 0), (1, 1), (2, 2), (0, 1)];
    let ds = InteractionDataset::from_index_pairs(6, 6, pairs).unwrap().0;
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 64,
        dim: 4,
        objective: ObjectiveConfig { lambda1: 1.0, ..Default::default() },
        ..Default::default()
    };
    let before = initial_model(&ds, None, &cfg).unwrap();
    let mut state = TrainState::new(before.clone());
    train_epoch(&mut state, &ds, None, &cfg).unwrap();
    for u in 3..6 {
        assert_eq!(state.model.user(u), before.user(u));
    }
    for i in 3..6 {
        assert_eq!(state.model.item(i), before.item(i));
    }
    assert_ne!(state.model.user(0), before.user(0));
}

#[test]
fn fit_is_deterministic_and_records_every_epoch() {
    let ds = synthetic(2, 20, 1);
    let cfg = TrainConfig { epochs: 4, ..synthetic_config(5) };
    let a = fit(&ds, &cfg).unwrap();
    let b = fit(&ds, &cfg).unwrap();
    assert_eq!(a.history.len(), 4);
    assert_eq!(a.epoch, 4);
    let bits = |m: &EmbeddingModel| {
        m.user_table().iter().chain(m.item_table().iter()).map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(bits(&a.model), bits(&b.model));
    assert_eq!(a.history, b.history);
}

#[test]
fn contrastive_only_training_shrinks_the_variance() {
    let ds = synthetic(1, 60, 2);
    let mut cfg = synthetic_config(2);
    Ablation::OnlyCont.apply(&mut cfg.objective);
    let state = fit(&ds, &cfg).unwrap();
    let first = state.history[0].mean_dim_variance;
    let last = state.history.last().unwrap().mean_dim_variance;
    assert!(last < 0.1 * first, "{first} -> {last}");
}

#[test]
fn hinge_keeps_the_average_distance_near_the_margin() {
    let ds = synthetic(1, 60, 3);
    let cfg = synthetic_config(3);
    let state = fit(&ds, &cfg).unwrap();
    let last = state.history.last().unwrap();
    assert!(last.d_p >= 0.5 * cfg.objective.margin_p, "{}", last.d_p);
    assert!(state.model.is_finite());
}

#[test]
fn diverging_updates_are_reported_with_their_batch() {
    let ds = synthetic(1, 20, 4);
    let cfg = TrainConfig {
        learning_rate: 1e200,
        objective: ObjectiveConfig { lambda1: 1.0, ..Default::default() },
        ..synthetic_config(4)
    };
    let err = fit(&ds, &cfg).unwrap_err();
    assert!(matches!(err, simpair::Error::NonFinite { .. }), "{err}");
}
