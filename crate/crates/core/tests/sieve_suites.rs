use alsieve::sieve_checks::{bilinear_bound_check, mellin_l1_estimate, run_suite};
use alsieve::{BilinearConfig, CheckKind, SuiteConfig, VectorSource};

#[test]
fn every_suite_respects_its_bound() {
    for kind in CheckKind::SUITES {
        let cfg = SuiteConfig {
            kind,
            trials: 8,
            seed: 99,
            q: 20,
            n: 20,
            m: 500_000,
            t: 2.0,
            sources: VectorSource::ALL.to_vec(),
        };
        let s = run_suite(&cfg).unwrap();
        assert_eq!(s.results.len(), 8);
        assert!(s.worst() <= 1.0 + 1e-9, "{kind:?}: {}", s.worst());
        assert!(s.min_ratio.unwrap() >= 0.0);
    }
}

#[test]
fn bilinear_bound_on_experiment_config() {
    let cfg: BilinearConfig = alsieve::ExperimentTemplate::default().config_for(100.0).unwrap();
    let l = mellin_l1_estimate(cfg.f.as_ref(), 20.0);
    let r = bilinear_bound_check(&cfg, l.script_l).unwrap();
    assert!(r.ratio <= 1.0, "{r:?}");
}
