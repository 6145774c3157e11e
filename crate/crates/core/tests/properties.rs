use proptest::prelude::*;
use rand::Rng;

use qsd_lab::killed_sim::{step, noise_len, SurvivalRow};
use qsd_lab::processes::{apply_generator, FiniteDifference};
use qsd_lab::qsd_estimate::{binned_tv, estimate_decay_rate, Binning, Histogram};
use qsd_lab::rng;
use qsd_lab::{parse_config, Family, PotentialSpec, ProcessSpec, State};

fn config(seed: u64, gamma: f64, dt: f64, lo: f64) -> String {
    format!(
        r#"
seed = {seed}

[potential]
kind = "quadratic"

[process]
family = "kinetic_langevin"
gamma = {gamma:?}

[domain]
shape = "box"
lo = [{lo:?}]
hi = [1.0]
witness = [2.0]

[estimator]
dt = {dt:?}
"#
    )
}

proptest! {
    #[test]
    fn histogram_mass_sums_to_one(xs in prop::collection::vec(-3.0f64..3.0, 1..400), n in 1usize..40) {
        let h = Histogram::from_values(Binning::new(-1.0, 1.0, n), xs.iter().copied());
        prop_assert!((h.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!(h.mass.iter().all(|&m| (0.0..=1.0).contains(&m)));
        prop_assert_eq!(h.n_samples, xs.len() as u64);
    }

    #[test]
    fn binned_tv_is_a_metric_on_masses(
        a in prop::collection::vec(-2.0f64..2.0, 1..200),
        b in prop::collection::vec(-2.0f64..2.0, 1..200),
    ) {
        let bins = Binning::new(-1.0, 1.0, 8);
        let p = Histogram::from_values(bins, a.iter().copied());
        let q = Histogram::from_values(bins, b.iter().copied());
        let d = binned_tv(&p, &q).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        prop_assert!((d - binned_tv(&q, &p).unwrap()).abs() < 1e-15);
        prop_assert_eq!(binned_tv(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn config_round_trip_is_idempotent(seed in any::<u64>(), gamma in 0.01f64..10.0, dt in 1e-5f64..1e-1, lo in -5.0f64..0.5) {
        let cfg = parse_config(&config(seed, gamma, dt, lo)).unwrap();
        let once = cfg.to_canonical_toml().unwrap();
        let again = parse_config(&once).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.to_canonical_toml().unwrap(), once);
        prop_assert_eq!(again.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn streams_are_reproducible_and_distinct(master in any::<u64>(), i in 0u64..1000) {
        let draw = |idx: u64| -> Vec<u64> {
            let mut r = rng::stream(master, "prop", idx);
            (0..4).map(|_| r.random::<u64>()).collect()
        };
        prop_assert_eq!(draw(i), draw(i));
        prop_assert_ne!(draw(i), draw(i + 1));
        let mut other = rng::stream(master, "prop-other", i);
        prop_assert_ne!(draw(i)[0], other.random::<u64>());
    }

    #[test]
    fn exact_exponential_survival_recovers_rate(rate in 0.05f64..3.0) {
        let n = 1_000_000u64;
        let rows: Vec<SurvivalRow> = (0..=20)
            .map(|k| {
                let t = 0.1 * k as f64;
                let survivors = ((n as f64) * (-rate * t).exp()).round() as u64;
                SurvivalRow { t, survivors, n, stderr: 0.0 }
            })
            .collect();
        let fit = estimate_decay_rate(&rows).unwrap();
        prop_assert!((fit.lambda_hat - rate).abs() < 1e-3 * rate.max(0.1));
        prop_assert!(fit.ci[0] <= fit.lambda_hat && fit.lambda_hat <= fit.ci[1]);
    }

    #[test]
    fn generator_annihilates_constants(x in -2.0f64..2.0, v in -3.0f64..3.0, z in -3.0f64..3.0, c in -10.0f64..10.0) {
        let gl = ProcessSpec::generalized(0.7, 1.3, 0.4, PotentialSpec::poly(1, 4.0, 1.0, 1.0));
        let f = FiniteDifference { f: move |_: &State| c, h: 1e-4 };
        let l = apply_generator(&gl, &f, &State::new(vec![x], vec![v], vec![z])).unwrap();
        prop_assert_eq!(l, 0.0);
    }

    #[test]
    fn zero_noise_step_follows_the_drift(x in -2.0f64..2.0, v in -3.0f64..3.0) {
        let kl = ProcessSpec::new(Family::KineticLangevin, 1.0, PotentialSpec::quadratic(1, 1.0, 1.0));
        let s = State::new(vec![x], vec![v], vec![]);
        let noise = vec![0.0; noise_len(&kl)];
        let a = step(&kl, &s, 1e-3, &noise).unwrap();
        let b = step(&kl, &s, 1e-3, &noise).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!((a.x[0] - x).abs() <= 1e-3 * (v.abs() + 1.0) * 1.01);
    }
}
