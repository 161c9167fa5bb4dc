use lbaft::estimators::{fit_naive, wald_ci, EstimateResult, FitOptions, Method};
use lbaft::io::{read_dataset, write_dataset, Dataset};
use lbaft::kernel::{
    profile_loglik, profile_loglik_density_form, profile_loglik_residuals, residuals, KernelSpec,
};
use lbaft::laws::{CovariateLaw, ErrorLaw, Law};
use lbaft::quadrature::Quadrature;
use lbaft::sampling::{generate_cohort, ObservationScheme, Scenario, SubjectRecord};
use lbaft::score::{
    efficient_score, efficient_score_uncensored, r_apply, OracleModel, ScoreModel, WeightScheme,
};
use proptest::prelude::*;

const BR: ObservationScheme = ObservationScheme::BackwardRecurrence;

fn weights() -> impl Strategy<Value = WeightScheme> {
    prop_oneof![
        Just(WeightScheme::RecurrenceWeights),
        Just(WeightScheme::LengthBiasWeights)
    ]
}

fn cohort(theta: f64, n: usize, seed: u64, scheme: ObservationScheme) -> Vec<SubjectRecord> {
    let s = Scenario {
        theta0: vec![theta],
        error_law: ErrorLaw::log_normal(0.0, 1.0).unwrap(),
        covariate_law: CovariateLaw::uniform(-1.0, 1.0).unwrap(),
        scheme,
        censoring: None,
        n,
        seed,
    };
    generate_cohort(&s).unwrap()
}

/// Uncensored records with arbitrary positive times and covariates.
fn raw_records(p: usize) -> impl Strategy<Value = Vec<SubjectRecord>> {
    prop::collection::vec(
        (0.01f64..50.0, prop::collection::vec(-2.0f64..2.0, p)),
        25..60,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .map(|(t, z)| SubjectRecord::new(t, true, z, BR).unwrap())
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn r_annihilates_constants(w in weights(), sigma in 0.4f64..1.6, t in 0.05f64..4.0, c in -5.0f64..5.0) {
        let law = ErrorLaw::log_normal(0.0, sigma).unwrap();
        let v = r_apply(&|_| c, w, &law, t).unwrap();
        prop_assert!(v.abs() < 1e-6 * c.abs().max(1.0), "R[{c}]({t}) = {v}");
    }

    #[test]
    fn phi_has_mean_zero_under_observed_law(w in weights(), sigma in 0.4f64..1.4) {
        let model = OracleModel::new(ErrorLaw::log_normal(0.0, sigma).unwrap(), w).unwrap();
        let q = model.observed_law();
        let lo = q.quantile(1e-9).unwrap().ln();
        let hi = q.quantile(1.0 - 1e-9).unwrap().ln();
        // integrate over v = ln u
        let f = |v: f64| {
            let u = v.exp();
            model.phi(u).map_or(0.0, |p| p * q.pdf(u) * u)
        };
        let m = Quadrature::default().integrate_panels(&f, lo, hi, 64);
        prop_assert!(m.abs() < 1e-5, "E phi = {m}");
    }

    #[test]
    fn efficient_score_specializes_without_censoring(seed in any::<u64>(), theta in -1.5f64..1.5, lb in any::<bool>()) {
        let scheme = if lb { ObservationScheme::LengthBiased } else { BR };
        let recs = cohort(theta, 60, seed, scheme);
        let model = OracleModel::new(ErrorLaw::log_normal(0.0, 1.0).unwrap(), WeightScheme::for_scheme(scheme).unwrap()).unwrap();
        let at = [theta + 0.1];
        let a = efficient_score(&recs, &at, &model).unwrap();
        let b = efficient_score_uncensored(&recs, &at, &model).unwrap();
        for (x, y) in a.per_subject.iter().flatten().zip(b.per_subject.iter().flatten()) {
            prop_assert!((x - y).abs() < 1e-8 * (1.0 + y.abs()), "{x} vs {y}");
        }
        prop_assert!((a.total[0] - b.total[0]).abs() < 1e-8 * (1.0 + b.total[0].abs()));
    }

    #[test]
    fn information_is_symmetric_psd(recs in raw_records(2), t1 in -0.5f64..0.5, t2 in -0.5f64..0.5) {
        let model = OracleModel::new(ErrorLaw::log_normal(0.0, 1.0).unwrap(), WeightScheme::RecurrenceWeights).unwrap();
        let Ok(s) = efficient_score(&recs, &[t1, t2], &model) else { return Ok(()) };
        let m = s.information_matrix();
        prop_assert!((m[(0, 1)] - m[(1, 0)]).abs() <= 1e-12 * m.norm());
        let eig = m.clone().symmetric_eigen().eigenvalues;
        prop_assert!(eig.iter().all(|&l| l >= -1e-10 * m.norm()), "{eig:?}");
    }

    #[test]
    fn hazard_form_equals_density_form(recs in raw_records(1), theta in -1.0f64..1.0, h in 0.15f64..0.8) {
        let rs = residuals(&[theta], &recs).unwrap();
        let spec = KernelSpec::with_bandwidth(h);
        let a = profile_loglik_residuals(&rs, h, &spec).unwrap();
        let b = profile_loglik_density_form(&rs, h, &spec).unwrap();
        prop_assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()), "{a} vs {b}");
    }

    #[test]
    fn profile_is_translation_invariant(recs in raw_records(1), theta in -1.0f64..1.0, c in -3.0f64..3.0) {
        // shifting every covariate by c moves all log residuals by -theta c
        let spec = KernelSpec::with_bandwidth(0.4);
        let shifted: Vec<SubjectRecord> = recs
            .iter()
            .map(|r| SubjectRecord::new(r.time, r.event, vec![r.covariates[0] + c], BR).unwrap())
            .collect();
        let a = profile_loglik(&[theta], &recs, &spec).unwrap();
        let b = profile_loglik(&[theta], &shifted, &spec).unwrap();
        prop_assert!((a - b).abs() < 1e-7 * (1.0 + a.abs()), "{a} vs {b}");
    }

    #[test]
    fn tilted_density_integrates_to_one(lo in -2.0f64..0.0, width in 0.2f64..3.0, theta in -3.0f64..3.0) {
        let law = CovariateLaw::uniform(lo, lo + width).unwrap();
        let f = |z: f64| law.tilted_density(&[theta], &[z]).unwrap();
        let total = Quadrature::default().integrate(&f, lo, lo + width);
        prop_assert!((total - 1.0).abs() < 1e-8, "{total}");
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec((1e-300f64..1e300, any::<bool>(), prop::collection::vec(-1e6f64..1e6, 3)), 1..30)) {
        let records: Vec<SubjectRecord> = rows.into_iter().map(|(t, d, z)| SubjectRecord::new(t, d, z, BR).unwrap()).collect();
        let data = Dataset::from_records(records);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        prop_assert_eq!(read_dataset(buf.as_slice(), BR).unwrap(), data);
    }

    #[test]
    fn wald_interval_is_centred(theta in prop::collection::vec(-5.0f64..5.0, 1..4), se_scale in 0.01f64..2.0, level in 0.5f64..0.999) {
        let se: Vec<f64> = theta.iter().enumerate().map(|(j, _)| se_scale * (j + 1) as f64).collect();
        let est = EstimateResult {
            theta_hat: theta.clone(),
            se: Some(se.clone()),
            curvature_se: None,
            plugin_se: None,
            ci: None,
            level,
            method: Method::NaiveProfile,
            converged: true,
            evaluations: 0,
            bandwidth: 0.3,
            flags: vec![],
        };
        let ci = wald_ci(&est, level).unwrap();
        let z = (ci[0][1] - ci[0][0]) / (2.0 * se[0]);
        for ((c, t), s) in ci.iter().zip(&theta).zip(&se) {
            prop_assert!((0.5 * (c[0] + c[1]) - t).abs() < 1e-12);
            prop_assert!(((c[1] - c[0]) / (2.0 * s) - z).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn naive_fit_ignores_time_scale(seed in any::<u64>(), scale in 0.05f64..20.0) {
        // the error law is unspecified, so a common time scale is absorbed by it
        let recs = cohort(1.0, 120, seed, BR);
        let scaled: Vec<SubjectRecord> = recs
            .iter()
            .map(|r| SubjectRecord::new(r.time * scale, r.event, r.covariates.clone(), BR).unwrap())
            .collect();
        let opts = FitOptions::default();
        let a = fit_naive(&recs, &opts).unwrap();
        let b = fit_naive(&scaled, &opts).unwrap();
        prop_assert!((a.theta_hat[0] - b.theta_hat[0]).abs() < 1e-6, "{:?} vs {:?}", a.theta_hat, b.theta_hat);
    }
}
