//! Acceptance criteria. Each test writes one `PASS`/`FAIL` line to stderr
//! (bypassing the test harness capture) before asserting.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qmclab::linalg::{trace_distance, SystemLayout};
use qmclab::petz::{
    cmi, general_petz, petz_distance, petz_reconstruct, petz_reconstruct_swapped, PetzOptions,
    QuantumChannel,
};
use qmclab::protocols::{
    default_budget, markov_far_instance, qmc_test, sample_budget, tomo_multipartite,
    tomo_tripartite, Decision, ProtocolOptions, TomoTarget, FORMULAS,
};
use qmclab::report::{details_jsonl, run_campaign_records, CampaignConfig, Command};
use qmclab::states::{random_full_rank, random_markov_chain, random_qmc, BlockSpec, QmcSpec};
use qmclab::BoundVariant;

fn report(id: u32, title: &str, ok: bool, detail: impl AsRef<str>) {
    let line = format!(
        "acceptance {id} [{}] {title}: {}\n",
        if ok { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn layout(d: &[usize]) -> SystemLayout {
    SystemLayout::new(d.to_vec()).unwrap()
}

/// Fidelity `tr sqrt(sqrt(p) q sqrt(p))` through nalgebra's Hermitian
/// eigensolver directly.
fn oracle_fidelity(p: &DMatrix<Complex64>, q: &DMatrix<Complex64>) -> f64 {
    let herm = |m: &DMatrix<Complex64>| (m + m.adjoint()).scale(0.5);
    let e = herm(p).symmetric_eigen();
    let sq = DMatrix::from_diagonal(
        &e.eigenvalues
            .map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0)),
    );
    let sp = &e.eigenvectors * sq * e.eigenvectors.adjoint();
    let inner = herm(&(&sp * q * &sp));
    inner
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum()
}

const SUITE_DIMS: [[usize; 3]; 3] = [[2, 2, 2], [2, 3, 2], [3, 2, 4]];

#[test]
fn criterion_1_inequality_suite() {
    const TOL: f64 = 1e-8;
    let mut worst = (f64::INFINITY, String::new());
    let mut failures = 0u64;
    let mut records = 0u64;
    for dims in SUITE_DIMS {
        for stress in [false, true] {
            let mut cfg = CampaignConfig::new(Command::VerifyBounds, dims.to_vec());
            cfg.trials = 1000;
            cfg.seed = 0xACCE_0001;
            cfg.stress = stress;
            let (summary, _) = run_campaign_records(&cfg).unwrap();
            assert_eq!(summary.aggregates.len(), BoundVariant::all().len());
            for (name, a) in &summary.aggregates {
                assert_eq!(a.trials, 1000);
                let m = a.min_slack.unwrap();
                if m < -TOL {
                    failures += 1;
                }
                if m < worst.0 {
                    worst = (m, format!("{name} at {dims:?} stress={stress}"));
                }
            }
            records += summary.records;
        }
    }
    let ok = failures == 0;
    report(
        1,
        "inequality suite",
        ok,
        format!(
            "{records} reports, 17 variants x 3 dims x (generic, stress) x 1000 trials; \
             min slack {:.3e} ({}), tolerance -1e-8",
            worst.0, worst.1
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_2_qmc_equivalence() {
    let mut r = rng(2);
    let mut bad = Vec::new();
    let (mut max_cmi, mut max_petz, mut max_order) = (0f64, 0f64, 0f64);
    for i in 0..500 {
        let d_b = [2, 3, 4][i % 3];
        let d_a = r.random_range(1..=3);
        let d_c = r.random_range(1..=3);
        let spec = if i % 2 == 0 {
            QmcSpec::Random
        } else {
            QmcSpec::Blocks(BlockSpec::random(d_b, &mut r))
        };
        let rho = random_qmc(&layout(&[d_a, d_b, d_c]), &spec, &mut r).unwrap();
        let c = cmi(&rho).unwrap();
        let p = petz_distance(&rho).unwrap();
        let (ab, bc) = (
            rho.marginal(&[0, 1]).unwrap(),
            rho.marginal(&[1, 2]).unwrap(),
        );
        let one = petz_reconstruct(&ab, &bc).unwrap();
        let two = petz_reconstruct_swapped(&ab, &bc, &PetzOptions::default()).unwrap();
        let o = trace_distance(&one.matrix, &two.matrix).unwrap();
        max_cmi = max_cmi.max(c);
        max_petz = max_petz.max(p);
        max_order = max_order.max(o);
        if c > 1e-9 || p > 1e-8 || o > 1e-8 {
            bad.push(i);
        }
    }
    let mut generic_ok = 0;
    let mut g = rng(22);
    for _ in 0..500 {
        let rho = random_full_rank(layout(&[2, 2, 2]), &mut g).unwrap();
        if cmi(&rho).unwrap() > 1e-4 && petz_distance(&rho).unwrap() > 1e-4 {
            generic_ok += 1;
        }
    }
    let ok = bad.is_empty() && generic_ok >= 495;
    report(
        2,
        "QMC equivalence",
        ok,
        format!(
            "500 QMCs: max CMI {max_cmi:.2e} bits (<= 1e-9), max Petz {max_petz:.2e} (<= 1e-8), \
             max ordering gap {max_order:.2e} (<= 1e-8), violations {}; generic separated {generic_ok}/500 (>= 495)",
            bad.len()
        ),
    );
    assert!(ok, "violating instances {bad:?}");
}

#[test]
fn criterion_3_exact_recovery() {
    let mut r = rng(3);
    let (mut max_rec, mut max_st) = (0f64, 0f64);
    for _ in 0..200 {
        let d_in: usize = r.random_range(1..=4);
        let d_out: usize = r.random_range(1..=4);
        let min_k = d_in.div_ceil(d_out);
        let k = r.random_range(min_k..=4.max(min_k));
        let phi = QuantumChannel::random(d_in, d_out, k, &mut r).unwrap();
        let sigma = random_full_rank(SystemLayout::single(d_in).unwrap(), &mut r).unwrap();
        let image = phi.apply(sigma.matrix()).unwrap();
        let back = general_petz(&phi, &sigma, &image).unwrap();
        max_rec = max_rec.max(trace_distance(&back, sigma.matrix()).unwrap());

        let v = phi.stinespring().unwrap();
        let via_v = v.apply(sigma.matrix()).unwrap();
        let kraus_again = v.to_channel().unwrap();
        let err = trace_distance(&via_v, &image)
            .unwrap()
            .max(v.isometry_deviation())
            .max(
                kraus_again
                    .kraus()
                    .iter()
                    .zip(phi.kraus())
                    .map(|(a, b)| (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max))
                    .fold(0.0, f64::max),
            );
        max_st = max_st.max(err);
    }
    let ok = max_rec <= 1e-8 && max_st <= 1e-9;
    report(
        3,
        "exact recovery",
        ok,
        format!(
            "200 pairs: max recovery error {max_rec:.2e} (<= 1e-8), max Stinespring error {max_st:.2e} (<= 1e-9)"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_4_tomography_constant() {
    let opts = ProtocolOptions::default();
    assert!(opts.stress);
    let mut r = rng(4);
    let mut runs = 0;
    let mut fails = 0;
    let mut min_margin = f64::INFINITY;
    for dims in [[2usize, 2, 2], [2, 3, 2]] {
        for delta in [0.05, 0.2] {
            for _ in 0..50 {
                let rho = random_qmc(&layout(&dims), &QmcSpec::Random, &mut r).unwrap();
                let t =
                    tomo_tripartite(&rho, TomoTarget::Infidelity(delta), &opts, &mut r).unwrap();
                let claim = 1.0 - 0.18 * delta;
                let f = t.guarantee.measured;
                runs += 1;
                assert!((t.guarantee.claimed - claim).abs() < 1e-15);
                assert!(t.guarantee.applicable);
                if f < claim - 1e-9 || !t.passes() {
                    fails += 1;
                }
                min_margin = min_margin.min(f - claim);
            }
        }
    }
    // The recorded fidelity against an independent evaluation.
    let rho = random_qmc(&layout(&[2, 2, 2]), &QmcSpec::Random, &mut r).unwrap();
    let sigma = random_full_rank(layout(&[2, 2, 2]), &mut r).unwrap();
    let lib = qmclab::linalg::fidelity(rho.matrix(), sigma.matrix()).unwrap();
    assert!((lib - oracle_fidelity(rho.matrix(), sigma.matrix())).abs() < 1e-10);

    let ok = runs == 200 && fails == 0;
    report(
        4,
        "tripartite tomography constant",
        ok,
        format!("{runs} stress runs, {fails} with F < 1 - 0.18 delta - 1e-9; min margin {min_margin:.3e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_5_multipartite_constant() {
    let (m, delta) = (4usize, 0.2);
    let delta_i = delta / (8.0 * (m * m) as f64);
    let telescoping = 1.0 - 8.0 * ((m - 1) as f64 * delta_i.sqrt()).powi(2);
    let opts = ProtocolOptions::default();
    let mut r = rng(5);
    let mut fails = 0;
    let mut min_f = f64::INFINITY;
    for _ in 0..100 {
        let rho = random_markov_chain(&[2; 4], &mut r).unwrap();
        let t = tomo_multipartite(&rho, delta, &opts, &mut r).unwrap();
        let f = t.guarantee.measured;
        min_f = min_f.min(f);
        assert!((t.guarantee.claimed - telescoping).abs() < 1e-12);
        assert!((t.aux["delta_i"] - delta_i).abs() < 1e-15);
        if f < 1.0 - delta - 1e-9
            || f < telescoping - 1e-9
            || f < t.aux["telescoping_measured"] - 1e-9
        {
            fails += 1;
        }
    }
    let ok = fails == 0;
    report(
        5,
        "multipartite tomography constant",
        ok,
        format!(
            "100 runs m=4 delta=0.2: min F {min_f:.6}, telescoping bound {telescoping:.6}, \
             final bound {:.6}, {fails} violations",
            1.0 - delta
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_6_tester_gap() {
    let eps = 0.3;
    let sd = 8f64.sqrt();
    let opts = ProtocolOptions::default();
    let mut r = rng(6);
    let (mut markov_bad, mut far_bad) = (0, 0);
    let (mut max_markov, mut min_far) = (0f64, f64::INFINITY);
    for _ in 0..200 {
        let rho = random_qmc(&layout(&[2, 2, 2]), &QmcSpec::Random, &mut r).unwrap();
        let t = qmc_test(&rho, eps, &opts, &mut r).unwrap();
        let s = t.aux["statistic"];
        max_markov = max_markov.max(s);
        if s > 0.4 * eps / sd || t.decision() != Some(Decision::Markov) || !t.passes() {
            markov_bad += 1;
        }
        let far = markov_far_instance(&rho, eps, &mut r).unwrap();
        assert!(petz_distance(&far.state).unwrap() >= eps);
        let t = qmc_test(&far.state, eps, &opts, &mut r).unwrap();
        let s = t.aux["statistic"];
        min_far = min_far.min(s);
        if s < 3.0 * eps / (5.0 * sd) - 1e-9 || t.decision() != Some(Decision::Far) || !t.passes() {
            far_bad += 1;
        }
    }
    let ok = markov_bad == 0 && far_bad == 0;
    report(
        6,
        "tester gap",
        ok,
        format!(
            "eps=0.3 at (2,2,2): Markov branch max statistic {max_markov:.4e} (<= {:.4e}), \
             far branch min {min_far:.4e} (>= {:.4e}); misclassified {markov_bad} + {far_bad}",
            0.4 * eps / sd,
            3.0 * eps / (5.0 * sd)
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_7_budget_calculator() {
    let hhj = default_budget("hhj_fidelity", &[2], 0.1).unwrap().n;
    let hhj_oracle = (100.0 * 4.0 * (2.0f64 / 0.1).ln() / 0.1).ceil() as u64;
    let c1: BTreeMap<String, f64> = [("C".to_string(), 1.0)].into();
    let thm2 = sample_budget("thm2_trace", &[2, 2, 2], 0.1, &c1).unwrap().n;
    let mut non_monotone = Vec::new();
    for name in FORMULAS {
        let dims: Vec<usize> = match *name {
            "hhj_fidelity" | "ow16_trace" | "bow17_fidelity" | "bow17_trace" | "bow17_l2" => {
                vec![3]
            }
            "thm4_multipartite" => vec![2, 3, 2, 2],
            _ => vec![2, 3, 2],
        };
        let mut prev = 0u64;
        for j in 0..60 {
            let target = 0.9 * 0.85f64.powi(j);
            let n = default_budget(name, &dims, target).unwrap().n;
            if n < prev {
                non_monotone.push(format!("{name}@{target:.3e}"));
            }
            prev = n;
        }
    }
    let ok = hhj == 11983 && hhj_oracle == 11983 && thm2 == 800 && non_monotone.is_empty();
    report(
        7,
        "budget calculator",
        ok,
        format!(
            "hhj_fidelity(2, 0.1) = {hhj} (want 11983), thm2_trace((2,2,2), 0.1, C=1) = {thm2} (want 800), \
             {} formulas monotone in 1/target: {}",
            FORMULAS.len(),
            non_monotone.is_empty()
        ),
    );
    assert!(ok, "{non_monotone:?}");
}

#[test]
fn criterion_8_determinism() {
    let campaigns = [
        (Command::VerifyBounds, vec![2, 3, 2], None, None),
        (Command::TomoSim, vec![2, 2, 2], Some(0.1), Some(0.2)),
        (Command::TomoChainSim, vec![2, 2, 2, 2], Some(0.2), None),
        (Command::CertifySim, vec![2, 2, 2], Some(0.1), None),
        (Command::QmcTestSim, vec![2, 2, 2], None, Some(0.3)),
    ];
    let mut mismatched = Vec::new();
    let mut bytes = 0;
    let dir = tempfile::tempdir().unwrap();
    for (cmd, dims, delta, eps) in campaigns {
        let mut outputs = Vec::new();
        for threads in [1usize, 3, 8] {
            let mut cfg = CampaignConfig::new(cmd, dims.clone());
            cfg.trials = 12;
            cfg.seed = 0xD1CE;
            cfg.delta = delta;
            cfg.eps = eps;
            cfg.stress = true;
            cfg.threads = Some(threads);
            let out = dir.path().join(format!("{}-{threads}", cmd.name()));
            cfg.out = Some(out.clone());
            let (_, records) = run_campaign_records(&cfg).unwrap();
            let file = std::fs::read(out.join("details.jsonl")).unwrap();
            assert_eq!(file, details_jsonl(&records).unwrap().into_bytes());
            outputs.push(file);
        }
        bytes += outputs[0].len();
        if outputs.iter().any(|o| o != &outputs[0]) {
            mismatched.push(cmd.name());
        }
    }
    let ok = mismatched.is_empty();
    report(
        8,
        "determinism",
        ok,
        format!("5 campaigns x workers {{1, 3, 8}}, {bytes} bytes per run set; mismatches {mismatched:?}"),
    );
    assert!(ok);
}
