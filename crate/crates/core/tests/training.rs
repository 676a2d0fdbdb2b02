use onramp_core::harness::{evaluate, AgentPolicy};
use onramp_core::rl::{metrics_to_csv, train, variant_pipeline, SacConfig, TrainConfig, Variant};

fn tiny(variant: Variant) -> TrainConfig {
    TrainConfig {
        variant,
        steps: 300,
        warmup: 64,
        sac: SacConfig { hidden: vec![16, 16], batch_size: 16, ..SacConfig::default() },
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_reproducible() {
    let (_, a) = train(tiny(Variant::SacdLtm), 4).unwrap();
    let (_, b) = train(tiny(Variant::SacdLtm), 4).unwrap();
    assert!(!a.is_empty());
    assert_eq!(metrics_to_csv(&a), metrics_to_csv(&b));
    let (_, c) = train(tiny(Variant::SacdLtm), 5).unwrap();
    assert_ne!(metrics_to_csv(&a), metrics_to_csv(&c));
}

#[test]
fn multiplier_stays_nonnegative_and_is_frozen_without_constraints() {
    let (_, constrained) = train(tiny(Variant::SacdLtm), 1).unwrap();
    assert!(constrained.iter().all(|m| m.lambda >= 0.0));
    let (_, plain) = train(tiny(Variant::Sacd), 1).unwrap();
    assert!(plain.iter().all(|m| m.lambda == 0.0 && m.replacements == 0));
}

#[test]
fn trained_agent_evaluates_reproducibly_under_the_shield() {
    let cfg = tiny(Variant::SacdLtm);
    let (agent, _) = train(cfg.clone(), 2).unwrap();
    let policy = AgentPolicy { agent: &agent, greedy: false };
    let stack = variant_pipeline(cfg.variant, &cfg.pipeline);
    let a = evaluate(&policy, &cfg.env, &stack, 6, 99).unwrap();
    let b = evaluate(&policy, &cfg.env, &stack, 6, 99).unwrap();
    assert_eq!(a.episodes, b.episodes);
    assert_eq!(a.report.episodes, 6);
    for e in &a.replacements {
        assert_ne!(e.raw, e.safe);
    }
}
