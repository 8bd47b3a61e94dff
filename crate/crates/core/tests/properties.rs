use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qmclab::continuity::{adversarial_search, sample_b_deficient, REPORT_TOL};
use qmclab::linalg::{fidelity, kron, partial_trace, trace_distance, SystemLayout};
use qmclab::petz::{petz_distance, QuantumChannel};
use qmclab::protocols::{oracle_estimate, EstimationOracleConfig, OracleMode};
use qmclab::states::{random_density_on, random_full_rank, random_qmc, QmcSpec};
use qmclab::BoundVariant;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn with_b_marginal() -> Vec<BoundVariant> {
    BoundVariant::all()
        .into_iter()
        .filter(|v| {
            matches!(
                v,
                BoundVariant::CoreL2
                    | BoundVariant::PetzFidelity
                    | BoundVariant::PetzTrace
                    | BoundVariant::PetzL2Dim(_)
                    | BoundVariant::HalfMarginal
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rank_deficient_b_keeps_bounds(
        seed in any::<u64>(),
        d_a in 1usize..=3,
        d_b in 2usize..=4,
        d_c in 1usize..=3,
        rank in 1usize..=4,
        matched in any::<bool>(),
    ) {
        let mut r = rng(seed);
        for v in with_b_marginal() {
            let rep = sample_b_deficient(v, &[d_a, d_b, d_c], rank, matched, &mut r).unwrap();
            prop_assert!(rep.passes(REPORT_TOL), "{} slack {}", rep.bound_name, rep.slack);
        }
    }

    #[test]
    fn every_variant_holds_at_242(seed in any::<u64>(), stress in any::<bool>()) {
        let mut r = rng(seed);
        for v in BoundVariant::all() {
            let rep = v.sample(&[2, 4, 2], stress, &mut r).unwrap();
            prop_assert!(rep.passes(REPORT_TOL), "{} slack {}", rep.bound_name, rep.slack);
        }
    }

    #[test]
    fn low_rank_factors_keep_bounds(seed in any::<u64>(), max_rank in 1usize..=3) {
        let mut r = rng(seed);
        for v in BoundVariant::all() {
            let rep = v.sample_low_rank(&[2, 2, 2], max_rank, &mut r).unwrap();
            prop_assert!(rep.passes(REPORT_TOL), "{} slack {}", rep.bound_name, rep.slack);
        }
    }

    #[test]
    fn partial_trace_of_product(seed in any::<u64>(), d1 in 1usize..=3, d2 in 1usize..=3) {
        let mut r = rng(seed);
        let a = random_full_rank(SystemLayout::single(d1).unwrap(), &mut r).unwrap();
        let b = random_full_rank(SystemLayout::single(d2).unwrap(), &mut r).unwrap();
        let ab = kron(a.matrix(), b.matrix()).unwrap();
        let l = SystemLayout::new(vec![d1, d2]).unwrap();
        let back = partial_trace(&ab, &l, &[1]).unwrap();
        prop_assert!(trace_distance(&back, a.matrix()).unwrap() < 1e-12);
    }

    #[test]
    fn fidelity_symmetric_and_bounded(seed in any::<u64>(), d in 1usize..=5, rank in 1usize..=5) {
        let mut r = rng(seed);
        let l = SystemLayout::single(d).unwrap();
        let x = random_density_on(l.clone(), rank.min(d), &mut r).unwrap();
        let y = random_full_rank(l, &mut r).unwrap();
        let f = fidelity(x.matrix(), y.matrix()).unwrap();
        let g = fidelity(y.matrix(), x.matrix()).unwrap();
        prop_assert!((f - g).abs() < 1e-9);
        prop_assert!((-1e-12..=1.0 + 1e-9).contains(&f));
        prop_assert!((fidelity(x.matrix(), x.matrix()).unwrap() - 1.0).abs() < 1e-9);
        // Fuchs-van de Graaf
        let t = 0.5 * trace_distance(x.matrix(), y.matrix()).unwrap();
        prop_assert!(1.0 - f <= t + 1e-9);
        prop_assert!(t <= (1.0 - f * f).max(0.0).sqrt() + 1e-9);
    }

    #[test]
    fn channels_contract_trace_distance(seed in any::<u64>(), d_in in 1usize..=3, d_out in 1usize..=3) {
        let mut r = rng(seed);
        let phi = QuantumChannel::random(d_in, d_out, 3, &mut r).unwrap();
        let l = SystemLayout::single(d_in).unwrap();
        let x = random_full_rank(l.clone(), &mut r).unwrap();
        let y = random_full_rank(l, &mut r).unwrap();
        let before = trace_distance(x.matrix(), y.matrix()).unwrap();
        let after = trace_distance(&phi.apply(x.matrix()).unwrap(), &phi.apply(y.matrix()).unwrap()).unwrap();
        prop_assert!(after <= before + 1e-10);
    }

    #[test]
    fn qmc_generator_is_markov(seed in any::<u64>(), d_a in 1usize..=3, d_b in 1usize..=4, d_c in 1usize..=3) {
        let mut r = rng(seed);
        let rho = random_qmc(&SystemLayout::new(vec![d_a, d_b, d_c]).unwrap(), &QmcSpec::Random, &mut r).unwrap();
        prop_assert!(petz_distance(&rho).unwrap() < 1e-8);
    }

    #[test]
    fn oracle_meets_target(seed in any::<u64>(), target in 1e-6f64..0.5, stress in any::<bool>(), trace in any::<bool>()) {
        let mut r = rng(seed);
        let rho = random_full_rank(SystemLayout::new(vec![2, 2]).unwrap(), &mut r).unwrap();
        let mode = if trace { OracleMode::Trace } else { OracleMode::Infidelity };
        let cfg = EstimationOracleConfig::new(mode, target).unwrap().with_stress(stress);
        let e = oracle_estimate(&rho, &cfg, &mut r).unwrap();
        let measured = if trace {
            trace_distance(rho.matrix(), e.state.matrix()).unwrap()
        } else {
            1.0 - fidelity(rho.matrix(), e.state.matrix()).unwrap()
        };
        prop_assert!(measured <= target * (1.0 + 1e-9) + 1e-12, "{measured} > {target}");
        prop_assert!((measured - e.achieved).abs() <= 1e-9);
    }
}

/// Hill climbing with 10^4 steps per bound; the minimal slack found per
/// bound is printed as a tightness measure.
#[test]
fn adversarial_probe_finds_no_violation() {
    use rayon::prelude::*;
    use std::io::Write;
    let results: Vec<(String, f64)> = BoundVariant::all()
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut r = rng(0xADD + i as u64);
            let res = adversarial_search(*v, &[2, 2, 2], 10_000, 10, &mut r).unwrap();
            (v.name(), res.min_slack)
        })
        .collect();
    let mut lines = String::new();
    for (name, m) in &results {
        lines.push_str(&format!("adversarial {name:<20} min slack {m:.3e}\n"));
    }
    let _ = std::io::stderr().write_all(lines.as_bytes());
    for (name, m) in results {
        assert!(m >= -1e-6, "{name}: {m}");
    }
}

#[test]
fn suite_holds_at_242() {
    use qmclab::report::{run_campaign_records, CampaignConfig, Command};
    for stress in [false, true] {
        let mut cfg = CampaignConfig::new(Command::VerifyBounds, vec![2, 4, 2]);
        cfg.trials = 1000;
        cfg.seed = 242;
        cfg.stress = stress;
        let (summary, _) = run_campaign_records(&cfg).unwrap();
        for (name, a) in &summary.aggregates {
            assert!(
                a.min_slack.unwrap() >= -REPORT_TOL,
                "{name}: {:?}",
                a.min_slack
            );
        }
    }
}
