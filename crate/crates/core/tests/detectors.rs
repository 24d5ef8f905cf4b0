use loopsim_core::data::{synthesize, Dataset};
use loopsim_core::detectors::{
    estimate_contraction, BaselineConfig, BaselineMonitor, ContractionConfig, HeldOutR2, PageHinkley,
    Performance,
};
use loopsim_core::loop_sim::{run_simulation_observed, SimulationConfig};
use loopsim_core::models::ModelFamily;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn monitored(p: f64, seed: u64) -> (BaselineMonitor, usize) {
    let ds = synthesize(506, 13, 0.2, 1).unwrap();
    let config = SimulationConfig::new(ModelFamily::Ridge, p, 0.3, 20, seed);
    let mut monitor = BaselineMonitor::new(BaselineConfig::default()).unwrap();
    let result = run_simulation_observed(&ds, &config, &mut monitor).unwrap();
    (monitor, result.rounds.len())
}

#[test]
fn baseline_alarms_on_a_closed_loop() {
    let (monitor, rounds) = monitored(0.9, 0);
    assert!(monitor.alarm());
    assert!(monitor.alarm_round().unwrap() < rounds);
    assert_eq!(monitor.r2_series().len(), rounds);
}

#[test]
fn baseline_stays_quiet_on_an_open_loop() {
    for seed in 0..10 {
        let (monitor, _) = monitored(0.0, seed);
        assert!(!monitor.alarm(), "seed {seed}: rho {}", monitor.rho());
    }
}

#[test]
fn baseline_parameters_never_move() {
    let ds = synthesize(506, 13, 0.2, 1).unwrap();
    let window = ds.slice(0, 151);
    let mut monitor = BaselineMonitor::new(BaselineConfig::default()).unwrap();
    assert!(monitor.fingerprint().is_none());
    monitor.initialize(&window.slice(0, 113)).unwrap();
    let before = monitor.fingerprint().unwrap();
    for k in 0..30 {
        let shifted = ds.slice(10 * k, 10 * k + 151);
        monitor.update(&shifted).unwrap();
        monitor.initialize(&shifted).unwrap();
    }
    assert_eq!(monitor.fingerprint().unwrap(), before);
    assert_eq!(before.len(), 64);
}

#[test]
fn page_hinkley_false_alarm_rate() {
    let mut alarms = 0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ph = PageHinkley::new(0.05, 50.0).unwrap();
        for _ in 0..200 {
            let x: f64 = StandardNormal.sample(&mut rng);
            ph.update(x);
            assert!(ph.statistic() >= 0.0);
        }
        alarms += ph.alarm() as usize;
    }
    assert!((alarms as f64) < 0.05 * 200.0, "{alarms} alarms");
}

#[test]
fn page_hinkley_detection_delay() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ph = PageHinkley::new(0.05, 10.0).unwrap();
    for _ in 0..100 {
        let e: f64 = StandardNormal.sample(&mut rng);
        ph.update(0.1 * e);
    }
    assert!(!ph.alarm());
    for _ in 0..20 {
        let e: f64 = StandardNormal.sample(&mut rng);
        ph.update(5.0 + 0.1 * e);
    }
    assert!(ph.alarm());
    assert!(ph.alarm_at().unwrap() <= 120);
}

#[test]
fn contraction_reference_transitions() {
    let ds = synthesize(506, 13, 0.2, 1).unwrap();
    let config = ContractionConfig::new(151);
    let identity = |w: &Dataset, _: u64| Ok(w.clone());
    let report = estimate_contraction(&ds, &identity, &HeldOutR2::default(), &config).unwrap();
    assert!(report.ratios.iter().all(|r| *r == 1.0));
    assert!(!report.contraction_detected);

    let fixed = ds.slice(0, 151);
    let constant = move |_: &Dataset, _: u64| Ok(fixed.clone());
    let report = estimate_contraction(&ds, &constant, &HeldOutR2::default(), &config).unwrap();
    assert_eq!(report.a_hat, Some(0.0));
    assert!(report.contraction_detected);
}

#[test]
fn contraction_ignores_performance_scale() {
    struct Scaled(f64);
    impl Performance for Scaled {
        fn measure(&self, data: &Dataset) -> loopsim_core::Result<f64> {
            Ok(self.0 * HeldOutR2::default().measure(data)?)
        }
    }
    let ds = synthesize(200, 4, 0.2, 2).unwrap();
    // a noisy but deterministic transition: keep the first half, resample the rest
    let shuffle = |w: &Dataset, seed: u64| {
        let n = w.n_rows();
        let idx: Vec<usize> = (0..n)
            .map(|i| if i < n / 2 { i } else { (i * 7 + seed as usize) % n })
            .collect();
        Ok(w.subset(&idx))
    };
    let mut config = ContractionConfig::new(60);
    config.epsilon_floor = 1e-9;
    let base = estimate_contraction(&ds, &shuffle, &Scaled(1.0), &config).unwrap();
    config.epsilon_floor = 4e-9;
    let scaled = estimate_contraction(&ds, &shuffle, &Scaled(4.0), &config).unwrap();
    assert_eq!(base.ratios.len(), scaled.ratios.len());
    for (a, b) in base.ratios.iter().zip(&scaled.ratios) {
        assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }
    assert_eq!(base.contraction_detected, scaled.contraction_detected);
}
