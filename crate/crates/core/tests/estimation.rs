use lbaft::estimators::{fit, fit_naive, time_ratios, FitOptions, Method};
use lbaft::laws::{CovariateLaw, ErrorLaw};
use lbaft::rng::stream;
use lbaft::sampling::{generate_cohort, CensoringSpec, ObservationScheme, Scenario};
use lbaft::study::{run_study, table_render, StudyConfig};
use rand::seq::SliceRandom;

fn scenario(theta: f64, n: usize, seed: u64) -> Scenario {
    Scenario {
        theta0: vec![theta],
        error_law: ErrorLaw::log_normal(0.0, 1.0).unwrap(),
        covariate_law: CovariateLaw::uniform(-1.0, 1.0).unwrap(),
        scheme: ObservationScheme::BackwardRecurrence,
        censoring: None,
        n,
        seed,
    }
}

/// Binary covariate with time ratio 2; permuting the labels leaves a
/// covariate with no effect.
#[test]
fn permuted_labels_interval_covers_one() {
    let runs = 200;
    let mut covered = 0;
    for seed in 0..runs {
        let mut s = scenario(std::f64::consts::LN_2, 2000, 9000 + seed);
        s.covariate_law = CovariateLaw::empirical(vec![vec![0.0], vec![1.0]]).unwrap();
        let mut recs = generate_cohort(&s).unwrap();
        let mut labels: Vec<Vec<f64>> = recs.iter().map(|r| r.covariates.clone()).collect();
        labels.shuffle(&mut stream(seed, 1));
        for (r, z) in recs.iter_mut().zip(labels) {
            r.covariates = z;
        }
        let est = fit_naive(&recs, &FitOptions::default()).unwrap();
        let r = time_ratios(&est)[0];
        if r.lower.unwrap() <= 1.0 && 1.0 <= r.upper.unwrap() {
            covered += 1;
        }
    }
    assert!(covered >= 186, "covered {covered} of {runs}");
}

#[test]
fn all_methods_recover_a_large_sample_effect() {
    let s = scenario(1.0, 1500, 77);
    let recs = generate_cohort(&s).unwrap();
    let opts = FitOptions::default();
    for m in [Method::NaiveProfile, Method::KnownH, Method::MeanZero] {
        let est = fit(m, &recs, Some(&s.covariate_law), &opts).unwrap();
        assert!(est.converged, "{m:?}");
        assert!(
            (est.theta_hat[0] - 1.0).abs() < 0.25,
            "{m:?}: {:?}",
            est.theta_hat
        );
    }
}

#[test]
fn length_biased_censored_fit() {
    let mut s = scenario(-0.5, 800, 5);
    s.scheme = ObservationScheme::LengthBiased;
    s.censoring = Some(CensoringSpec::TargetFraction(0.3));
    let recs = generate_cohort(&s).unwrap();
    let est = fit_naive(&recs, &FitOptions::default()).unwrap();
    let ci = est.ci.unwrap()[0];
    assert!(ci[0] < -0.5 && -0.5 < ci[1], "{ci:?}");
}

#[test]
fn too_few_records_is_an_error() {
    let recs = generate_cohort(&scenario(1.0, 5, 1)).unwrap();
    assert!(fit_naive(&recs, &FitOptions::default()).is_err());
}

#[test]
fn study_is_independent_of_thread_count() {
    let mut cfg = StudyConfig::table1();
    cfg.scenarios.truncate(2);
    cfg.replicates = 6;
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| table_render(&run_study(&cfg).unwrap()).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn study_rows_do_not_depend_on_scenario_order() {
    let mut cfg = StudyConfig::table1();
    cfg.scenarios.truncate(2);
    cfg.replicates = 4;
    let forward = run_study(&cfg).unwrap();
    cfg.scenarios.reverse();
    let backward = run_study(&cfg).unwrap();
    let m = forward.len() / 2;
    assert_eq!(forward[..m], backward[m..]);
    assert_eq!(forward[m..], backward[..m]);
}
