use hcl_core::curriculum::{build_plan, ShiftMode};
use hcl_core::eval::weighted_f1;
use hcl_core::synth::{generate, Span, SynthConfig};
use hcl_core::training::{predict, schedule, step_budget, train, DeltaT, Strategy, TrainConfig};
use hcl_core::wheel::{EmotionWheel, WheelConfig};
use proptest::prelude::*;

const LABELS: [&str; 6] = ["neutral", "happy", "sad", "angry", "excited", "frustrated"];

fn config(train: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        name: "pipeline".into(),
        train,
        val: 5,
        test: 10,
        utterances: Span::new(3, 9),
        speakers: Span::new(2, 3),
        labels: LABELS.iter().map(|s| s.to_string()).collect(),
        neutral: Some("neutral".into()),
        wheel: WheelConfig::default_wheel(),
        p_shift: 0.5,
        confusability: 0.3,
        max_confusable_pairs: Some(2),
        vocab_per_label: 10,
        tokens: Span::new(2, 4),
        seed,
    }
}

fn wheel() -> EmotionWheel {
    EmotionWheel::load(
        &WheelConfig::default_wheel(),
        &LABELS.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        Some("neutral"),
    )
    .unwrap()
}

#[test]
fn every_strategy_trains_to_the_same_budget_and_learns() {
    let data = generate(&config(30, 4)).unwrap();
    let wheel = wheel();
    let base = TrainConfig {
        k: 3,
        epochs_per_step: 2,
        extra_epochs: 3,
        delta_t: DeltaT::Steps(20),
        ..TrainConfig::default()
    };
    let plan = build_plan(&data, base.k, ShiftMode::Any).unwrap();
    let budget = step_budget(&plan, data.train.len(), &base) as u64;
    for strategy in Strategy::ALL {
        let cfg = TrainConfig { strategy, ..base.clone() };
        let (params, log) = train(&data, &wheel, &cfg).unwrap();
        assert_eq!(log.final_metrics.steps, budget, "{strategy:?}");
        assert_eq!(log.records.len() as u64, budget);
        let (gold, pred) = predict(&params, &data, &data.test).unwrap();
        let f1 = weighted_f1(&gold, &pred).unwrap();
        assert!(f1 > 0.5, "{strategy:?} test weighted-F1 {f1}");
        let (again, _) = train(&data, &wheel, &cfg).unwrap();
        assert_eq!(params, again);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedules_spend_exactly_the_budget(
        n in 3usize..40,
        k in 1usize..6,
        eps in 1usize..4,
        extra in 0usize..4,
        seed in 0u64..1000,
    ) {
        prop_assume!(k <= n);
        let data = generate(&config(n, seed)).unwrap();
        let plan = build_plan(&data, k, ShiftMode::Any).unwrap();
        for strategy in Strategy::ALL {
            let cfg = TrainConfig { strategy, k, epochs_per_step: eps, extra_epochs: extra, ..TrainConfig::default() };
            let phases = schedule(&plan, n, &cfg);
            let total: usize = phases.iter().map(|p| p.steps).sum();
            prop_assert_eq!(total, step_budget(&plan, n, &cfg));
            prop_assert!(phases.iter().all(|p| p.visible.iter().all(|&i| i < n)));
        }
    }
}
