//! Property tests for the invariants every module promises.

use proptest::prelude::*;
use qballot::adversary::{analytic_distribution, exact_pq_given_r, phase_error_cdf, tv_distance, Histogram};
use qballot::anticheat::AuthoritySecrets;
use qballot::group::{FiniteGroup, Representation};
use qballot::protocols::{run_distributed, run_survey, run_traveling, ProtocolConfig, Scheme, VoteVector};
use qballot::runner::{emit_report, execute, parse_summary, parse_scenario, Command, Format};
use qballot::state::ops;
use qballot::{Backend, Branch64, Dense64, Matrix64, QuantumState, SimRng};

fn random_circuit<S: QuantumState<f64>>(dim: usize, regs: usize, steps: &[(usize, usize, u64)]) -> S {
    let mut state = S::ghz(dim, regs).unwrap();
    for &(a, b, seed) in steps {
        let (a, b) = (a % regs, b % regs);
        let mut rng = SimRng::new(seed);
        state = if a == b || seed % 3 == 0 {
            state.apply_local(a, &Matrix64::random_unitary(dim, &mut rng)).unwrap()
        } else if seed % 3 == 1 {
            state.apply_joint(&[a, b], &Matrix64::random_unitary(dim * dim, &mut rng)).unwrap()
        } else {
            state.swap_registers(a, b).unwrap()
        };
    }
    state
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn backends_agree_on_random_circuits(
        dim in 2usize..4,
        regs in 2usize..4,
        steps in proptest::collection::vec((0usize..4, 0usize..4, any::<u64>()), 0..6),
    ) {
        let dense: Dense64 = random_circuit(dim, regs, &steps);
        let branch: Branch64 = random_circuit(dim, regs, &steps);
        prop_assert!((dense.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!((branch.norm_sqr() - 1.0).abs() < 1e-12);
        let dev = dense.max_deviation_up_to_phase(&branch.to_dense().unwrap()).unwrap();
        prop_assert!(dev < 1e-12, "deviation {dev}");
        for r in 0..regs {
            let a = dense.reduced_density(&[r]).unwrap();
            let b = branch.reduced_density(&[r]).unwrap();
            prop_assert!(a.max_abs_diff(&b) < 1e-12);
            prop_assert!((a.matrix().trace().re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn distributed_tally_and_privacy(votes in proptest::collection::vec(0usize..2, 2..6), extra in 1usize..3, seed: u64) {
        let n = votes.len();
        let d = n + extra;
        let pc = ProtocolConfig::new(Scheme::Distributed, d, n).with_seed(seed);
        let r = run_distributed::<f64>(&pc, &VoteVector::binary(votes.clone()).unwrap(), Backend::Branch).unwrap();
        prop_assert_eq!(r.value, votes.iter().sum::<usize>());
        prop_assert!(r.max_privacy_distance() < 1e-12);
    }

    #[test]
    fn traveling_tally_matches_on_both_backends(votes in proptest::collection::vec(0usize..2, 1..5), seed: u64) {
        let n = votes.len();
        let pc = ProtocolConfig::new(Scheme::Traveling, n + 1, n).with_seed(seed);
        let v = VoteVector::binary(votes.clone()).unwrap();
        let a = run_traveling::<f64>(&pc, &v, Backend::Dense).unwrap();
        let b = run_traveling::<f64>(&pc, &v, Backend::Branch).unwrap();
        prop_assert_eq!(a.value, votes.iter().sum::<usize>());
        prop_assert_eq!(a.value, b.value);
    }

    #[test]
    fn survey_totals_stay_exact(salaries in proptest::collection::vec(0usize..4, 1..4), headroom in 1usize..3) {
        let total: usize = salaries.iter().sum();
        let d = total + headroom;
        let pc = ProtocolConfig::new(Scheme::Survey, d.max(2), salaries.len());
        let r = run_survey::<f64>(&pc, &VoteVector::multiplicities(salaries.clone()).unwrap(), Backend::Branch).unwrap();
        prop_assert_eq!(r.value, total);
        let avg = r.average.unwrap();
        prop_assert_eq!(*avg.numer() * salaries.len() as u64, total as u64 * *avg.denom());
    }

    #[test]
    fn regular_representation_is_a_homomorphism(a in 0usize..6, b in 0usize..6) {
        let g = FiniteGroup::s3();
        let rep = Representation::<f64>::regular(&g);
        let lhs = rep.matrix(a).matmul(rep.matrix(b));
        prop_assert!(lhs.max_abs_diff(rep.matrix(g.mul(a, b))) < 1e-12);
    }

    #[test]
    fn secrets_always_fit_the_dimension(n in 1usize..8, extra in 1usize..10, seed: u64) {
        let d = n + extra;
        let s = AuthoritySecrets::<f64>::random(d, n, &mut SimRng::new(seed)).unwrap();
        prop_assert!(s.l_y > s.l_n && s.l_y < d);
        prop_assert!(s.step() * n < d);
        prop_assert!(s.delta >= 0.0 && s.delta < std::f64::consts::TAU / d as f64);
    }

    #[test]
    fn phase_error_cdf_is_monotone(dim in 2usize..10, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let tau = std::f64::consts::TAU;
        prop_assert!(phase_error_cdf(dim, lo * tau) <= phase_error_cdf(dim, hi * tau) + 1e-15);
        prop_assert!(phase_error_cdf(dim, 0.0).abs() < 1e-15);
        prop_assert!((phase_error_cdf(dim, tau) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cheater_distributions_are_normalized(dim in 3usize..10, s_frac in 0.0f64..1.0, m in 0usize..10, r in 0usize..10) {
        let s = dim / 2 + 1 + ((s_frac * (dim - dim / 2 - 1) as f64) as usize).min(dim - dim / 2 - 2);
        let m = m % dim;
        let p = analytic_distribution(dim, s, m).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x > 0.0));
        let exact: Vec<f64> = (0..dim).map(|q| exact_pq_given_r(dim, 1, s, m, q, r % dim)).collect();
        prop_assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(exact.iter().all(|&x| x > -1e-12));
        if r % dim >= 1 {
            prop_assert!(tv_distance(&exact, &p) < 1e-12);
        }
    }

    #[test]
    fn histogram_tv_is_a_distance(counts in proptest::collection::vec(0u64..50, 2..8)) {
        let mut h = Histogram::new(counts.len());
        for (k, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                h.record(k);
            }
        }
        prop_assume!(h.total() > 0);
        let uniform = vec![1.0 / counts.len() as f64; counts.len()];
        let tv = h.tv_distance(&uniform);
        prop_assert!((0.0..=1.0).contains(&tv));
        prop_assert!(h.tv_distance(&h.frequencies()) < 1e-15);
    }

    #[test]
    fn json_lines_summary_round_trips(seed: u64, trials in 1u64..6) {
        let text = format!(
            "[protocol]\nscheme = traveling\ndim = 4\nvoters = 3\nyes_probability = 0.5\n[run]\nseed = {seed}\ntrials = {trials}\n"
        );
        let config = parse_scenario(&text).unwrap();
        let report = execute(&config, Command::Run).unwrap();
        let bytes = emit_report(&report, Format::JsonLines).unwrap();
        let out = String::from_utf8(bytes.clone()).unwrap();
        prop_assert_eq!(out.lines().count() as u64, trials + 1);
        prop_assert_eq!(parse_summary(&out).unwrap(), report.summary);
        let again = emit_report(&execute(&config, Command::Run).unwrap(), Format::JsonLines).unwrap();
        prop_assert_eq!(again, bytes);
    }
}

#[test]
fn klein4_pauli_representation_is_projective() {
    let rep = Representation::<f64>::pauli_klein4();
    let g = rep.group();
    for a in 0..4 {
        for b in 0..4 {
            let lhs = rep.matrix(a).matmul(rep.matrix(b));
            let rhs = rep.matrix(g.mul(a, b));
            // Equal up to a global phase.
            let overlap = lhs.adjoint().matmul(rhs).trace().norm() / 2.0;
            assert!((overlap - 1.0).abs() < 1e-12, "{a} * {b}");
        }
    }
}

#[test]
fn shift_and_clock_commute_up_to_a_root_of_unity() {
    for d in 2..7 {
        let x = ops::shift::<f64>(d, 1);
        let z = ops::clock::<f64>(d, 1);
        let zx = z.matmul(&x);
        let xz = x.matmul(&z);
        let w = qballot::Complex64::from_polar(1.0, std::f64::consts::TAU / d as f64);
        assert!(zx.max_abs_diff(&xz.scale(w)) < 1e-12);
    }
}
