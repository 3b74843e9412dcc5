use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use regime_causal::causal::identify_causality;
use regime_causal::dynamics::{estimate_factor, rls_step};
use regime_causal::embedding::embed;
use regime_causal::engine::{Engine, EngineConfig};
use regime_causal::ica::{fixed_point_ica, IcaConfig};
use regime_causal::synth::{generate_stream, laplace, GenConfig};

fn is_spd(p: &DMatrix<f64>) -> bool {
    let sym = (p - p.transpose()).amax() <= 1e-8 * p.amax().max(1.0);
    sym && p.clone().cholesky().is_some()
}

fn laplace_mix(d: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = DMatrix::from_fn(d, n, |_, _| laplace(1.0, &mut rng));
    let a = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { laplace(0.25, &mut rng) });
    a * s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn extracted_signals_are_centered(d in 2usize..5, seed in 0u64..1000) {
        let x = laplace_mix(d, 400, seed);
        let r = fixed_point_ica(&x, &IcaConfig::default()).unwrap();
        for row in r.signals.0.row_iter() {
            prop_assert!(row.mean().abs() <= 1e-8);
        }
        prop_assert!(r.w.0.clone().try_inverse().is_some());
    }

    #[test]
    fn spectra_come_in_conjugate_pairs(seed in 0u64..1000, h in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = 0.0;
        let series: Vec<f64> = (0..120).map(|_| { v = 0.7 * v + laplace(1.0, &mut rng); v }).collect();
        let (f, state) = estimate_factor(&series, h, 0.98).unwrap();
        prop_assert!(f.rank() >= 1 && f.rank() <= h);
        for l in f.lambda.iter().filter(|l| l.im.abs() > 1e-8) {
            prop_assert!(f.lambda.iter().any(|m| (m - l.conj()).norm() <= 1e-8));
        }
        prop_assert!(is_spd(&state.p));
    }

    #[test]
    fn recursive_updates_keep_p_positive_definite(seed in 0u64..1000, h in 1usize..6, mu in 0.9f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let series: Vec<f64> = (0..200).map(|_| laplace(1.0, &mut rng)).collect();
        let (_, mut state) = estimate_factor(&series[..3 * h + 10], h, mu).unwrap();
        for t in (3 * h + 10)..series.len() {
            state = rls_step(&state, &embed(&series, h, t - 1).unwrap(), &embed(&series, h, t).unwrap()).unwrap();
            prop_assert!(is_spd(&state.p));
        }
    }

    #[test]
    fn identified_adjacency_is_acyclic(d in 2usize..7, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = DMatrix::from_fn(d, d, |_, _| laplace(1.0, &mut rng));
        if let Ok(est) = identify_causality(&w, 0.0) {
            prop_assert!(est.digraph.is_acyclic());
            prop_assert!((0..d).all(|i| est.adjacency.0[(i, i)] == 0.0));
        }
    }

    #[test]
    fn generated_segments_partition_the_stream(
        d in 1usize..6,
        segment_len in 1usize..40,
        sequence in proptest::collection::vec(1usize..4, 1..5),
        seed in 0u64..1000,
    ) {
        let cfg = GenConfig { d, segment_len, sequence: sequence.clone(), seed, ..GenConfig::default() };
        let (x, truth) = generate_stream(&cfg).unwrap();
        prop_assert_eq!(x.ncols(), segment_len * sequence.len());
        let mut next = 1;
        for (seg, &c) in truth.segments.iter().zip(&sequence) {
            prop_assert_eq!(seg.start, next);
            prop_assert_eq!(seg.cluster, c);
            next = seg.end + 1;
        }
        prop_assert_eq!(next, x.ncols() + 1);
        for b in truth.clusters.values() {
            prop_assert!(b.binarize(0.0).is_acyclic());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn engine_state_machine_is_safe_and_deterministic(seed in 0u64..1000, tau_unit in 0.2f64..3.0) {
        let gen = GenConfig { d: 3, segment_len: 80, sequence: vec![1, 2], seed, ..GenConfig::default() };
        let (x, _) = generate_stream(&gen).unwrap();
        let cfg = EngineConfig { n_window: 30, h: 4, tau_unit, seed, ..EngineConfig::default() };
        let mut a = Engine::new(cfg.clone(), 3).unwrap();
        let mut b = Engine::new(cfg.clone(), 3).unwrap();
        let mut count = 0;
        for t in 0..x.ncols() {
            let col: Vec<f64> = x.column(t).iter().copied().collect();
            let out = a.process_tick(&col).unwrap();
            prop_assert_eq!(&out, &b.process_tick(&col).unwrap());
            let set = a.regimes();
            prop_assert_eq!(set.regimes().len(), set.update_states().len());
            prop_assert!(set.len() >= count);
            if let Some(o) = out {
                prop_assert_eq!(set.len() > count, o.created_new);
                if !o.created_new {
                    prop_assert!(o.fit_error <= cfg.tau(3));
                }
                prop_assert!(o.regime_id < set.len());
                prop_assert_eq!(a.candidate().unwrap().active, o.regime_id);
            }
            count = set.len();
            for u in set.update_states() {
                for tr in &u.transitions {
                    prop_assert!(is_spd(&tr.p));
                }
            }
        }
    }
}
