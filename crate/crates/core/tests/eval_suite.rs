use schemamem_core::eval::{generate, run, Difficulty, Domain, EngineTarget, GenConfig, VectorBaseline};

fn config(domain: Domain) -> GenConfig {
    GenConfig {
        domain,
        ..GenConfig::default()
    }
}

#[test]
fn engine_is_exact_on_both_domains() {
    for (seed, domain) in [(11, Domain::Finance), (12, Domain::Medical)] {
        let suite = generate(seed, &config(domain)).unwrap();
        let r = run(&suite, &mut EngineTarget::default()).unwrap();
        let wrong: Vec<_> = r.per_question.iter().filter(|q| !q.correct || q.coverage < 1.0).collect();
        assert!(wrong.is_empty(), "{domain:?}: {:#?}", &wrong[..wrong.len().min(5)]);
        assert_eq!(r.overall.accuracy, 1.0);
        assert_eq!(r.overall.coverage, 1.0);
    }
}

#[test]
fn top_k_baseline_falls_short_on_hard() {
    let suite = generate(11, &config(Domain::Finance)).unwrap();
    let r = run(&suite, &mut VectorBaseline::default()).unwrap();
    let hard = &r.by_difficulty[&Difficulty::Hard];
    assert!(hard.questions > 0);
    assert!(hard.accuracy < 1.0, "{hard:?}");
    assert!(hard.coverage < 1.0, "{hard:?}");
}
