//! Solver outputs on fixtures and random economies, checked end to end.

mod common;

use common::*;
use lexmarket::core_stability::{reject_search, Replicas};
use lexmarket::hyperplane_certifier::{certify, strengthen, CertifyOutcome};
use lexmarket::lde_model::{check_strong_cbp, tier_indices, verify_lde};
use lexmarket::lde_solver::{extract_lde, ExtractParams, ExtractPath, FixedPointParams};
use lexmarket::rational::{q, qf};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn table3_tiers() {
    let e = economy("table3");
    let out = extract_lde(&e, &ExtractParams::default()).unwrap();
    assert_eq!(out.path, ExtractPath::Tiers);
    assert_eq!(out.x, allocation("table3"));
    let dec = out.decomposition.as_ref().unwrap();
    assert_eq!(dec.classes, vec![vec![0], vec![1]]);
    let t = tier_indices(&e, &out.system);
    // A in the first currency, B in the second, C never priced
    assert_eq!(t.good_tiers[..2], [0, 1]);
    assert!(out.system.p.iter().all(|row| row[2] == q(0)));
    let scale = &out.system.p[1][1];
    assert_eq!(out.system.alpha[1], vec![q(0), q(0), qf(1, 2) * scale]);
    // the ratio of consecutive scales vanishes along the curve
    assert!(dec.final_scale_ratios().iter().all(|r| *r < 0.25));
}

#[test]
fn refinement_keeps_verdicts() {
    for t in ["table2", "table3"] {
        let e = economy(t);
        let base = extract_lde(&e, &ExtractParams::default()).unwrap();
        let fine = ExtractParams {
            fixed_point: FixedPointParams {
                residual_tol: 5e-8,
                ..FixedPointParams::default()
            },
            t_max: 17,
            ..ExtractParams::default()
        };
        let refined = extract_lde(&e, &fine).unwrap();
        assert!(base.report.verdict && refined.report.verdict, "{t}");
        assert_eq!(base.x, refined.x, "{t}");
    }
}

#[test]
fn random_economies_end_to_end() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..6 {
        let e = random_economy(&mut rng);
        let out = extract_lde(&e, &ExtractParams::default())
            .unwrap_or_else(|err| panic!("economy {k}: {err}"));
        let (x, s) = (&out.x, &out.system);
        x.check_feasible(&e).unwrap();
        assert!(verify_lde(&e, x, s).unwrap().verdict, "economy {k}");
        assert!(check_strong_cbp(&e, x, s).unwrap().verdict, "economy {k}");
        let t = tier_indices(&e, s);
        for i in 0..3 {
            for j in 0..3 {
                if t.good_tiers[j] < t.agent_tiers[i] {
                    assert_eq!(x.rows[i][j], q(0));
                    assert_eq!(e.endowments[i][j], q(0));
                }
            }
        }
        assert!(reject_search(&e, x, Replicas::Infinite).unwrap().verdict, "economy {k}");
        match certify(&e, x).unwrap() {
            CertifyOutcome::Certified { system, .. } => {
                let (strong, report) = strengthen(&e, x, &system).unwrap();
                assert!(report.verdict);
                assert!(check_strong_cbp(&e, x, &strong.system).unwrap().verdict);
            }
            CertifyOutcome::Refuted { .. } => panic!("economy {k}: solver output refuted"),
        }
    }
}
