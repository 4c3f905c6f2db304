use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rrho::dual::{coupling_from_dual, dual_objective, grad_alpha_exact, grad_beta_exact, penalty_exact, DualState};
use rrho::{exact_rrho, holder_pair, synth, PairTable, ProblemInstance};

fn instance(seed: u64, max_n: usize, max_d: usize) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mu, nu) = synth::random_pair(&mut rng, max_n, max_n, max_d);
    ProblemInstance::raw(mu, nu).unwrap().normalized()
}

fn state(inst: &ProblemInstance, a: &[f64], b: &[f64]) -> DualState {
    DualState { alpha: a[..inst.n()].to_vec(), beta: b[..inst.m()].to_vec(), iteration: 0 }
}

fn rho_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.25), Just(4.0 / 3.0), Just(1.5), Just(1.8), Just(2.0)]
}

fn duals() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-0.5..0.8f64, 6), prop::collection::vec(-0.5..0.5f64, 6))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_central_differences(seed in 0u64..1000, rho in rho_strategy(), (a, b) in duals()) {
        let inst = instance(seed, 6, 3);
        let hp = holder_pair(rho).unwrap();
        let st = state(&inst, &a, &b);
        let separated = (0..inst.n()).all(|i| (0..inst.m()).all(|j| inst.distance(i, j) > 0.05));
        let smooth = st.alpha.iter().all(|x| st.beta.iter().all(|y| (x - y).abs() > 1e-3));
        prop_assume!(separated && smooth);
        let eta = grad_alpha_exact(&inst, &st, &hp);
        let xi = grad_beta_exact(&inst, &st, &hp);
        let h = 1e-6;
        for i in 0..inst.n() {
            let (mut p, mut q) = (st.clone(), st.clone());
            p.alpha[i] += h;
            q.alpha[i] -= h;
            let fd = (dual_objective(&inst, &p, &hp) - dual_objective(&inst, &q, &hp)) / (2.0 * h);
            let an = inst.mu.mass(i) * (1.0 - eta[i]);
            prop_assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "alpha {i}: {fd} vs {an}");
        }
        for j in 0..inst.m() {
            let (mut p, mut q) = (st.clone(), st.clone());
            p.beta[j] += h;
            q.beta[j] -= h;
            let fd = (dual_objective(&inst, &p, &hp) - dual_objective(&inst, &q, &hp)) / (2.0 * h);
            let an = -inst.nu.mass(j) * (1.0 - xi[j]);
            prop_assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "beta {j}: {fd} vs {an}");
        }
    }

    #[test]
    fn objective_is_concave(seed in 0u64..1000, rho in rho_strategy(), (a, b) in duals(), (c, d) in duals()) {
        let inst = instance(seed, 6, 3);
        let hp = holder_pair(rho).unwrap();
        let (x, y) = (state(&inst, &a, &b), state(&inst, &c, &d));
        let mid = DualState {
            alpha: x.alpha.iter().zip(&y.alpha).map(|(p, q)| 0.5 * (p + q)).collect(),
            beta: x.beta.iter().zip(&y.beta).map(|(p, q)| 0.5 * (p + q)).collect(),
            iteration: 0,
        };
        let gm = dual_objective(&inst, &mid, &hp);
        let avg = 0.5 * (dual_objective(&inst, &x, &hp) + dual_objective(&inst, &y, &hp));
        prop_assert!(gm >= avg - 1e-12 * (1.0 + avg.abs()), "{gm} < {avg}");
    }

    #[test]
    fn objective_is_translation_invariant(seed in 0u64..1000, rho in rho_strategy(), (a, b) in duals(), c in -2.0..2.0f64) {
        let inst = instance(seed, 6, 3);
        let hp = holder_pair(rho).unwrap();
        let st = state(&inst, &a, &b);
        let shifted = DualState {
            alpha: st.alpha.iter().map(|v| v + c).collect(),
            beta: st.beta.iter().map(|v| v + c).collect(),
            iteration: 0,
        };
        let (g0, g1) = (dual_objective(&inst, &st, &hp), dual_objective(&inst, &shifted, &hp));
        prop_assert!((g0 - g1).abs() <= 1e-12 * (1.0 + g0.abs()));
    }

    #[test]
    fn weak_duality(seed in 0u64..1000, rho in rho_strategy(), (a, b) in duals()) {
        let inst = instance(seed, 5, 3);
        let hp = holder_pair(rho).unwrap();
        let g = dual_objective(&inst, &state(&inst, &a, &b), &hp);
        let r = exact_rrho(&inst, &hp, 1e-12).unwrap().value;
        prop_assert!(g <= r.powf(rho) + 1e-9, "{g} > {}", r.powf(rho));
    }

    #[test]
    fn pair_table_agrees_with_direct_sums(seed in 0u64..1000, rho in rho_strategy(), (a, b) in duals()) {
        let inst = instance(seed, 6, 4);
        let hp = holder_pair(rho).unwrap();
        let st = state(&inst, &a, &b);
        let table = PairTable::new(&inst, hp);
        let (eta, xi) = table.grads(&st.alpha, &st.beta);
        let (eta2, xi2) = (grad_alpha_exact(&inst, &st, &hp), grad_beta_exact(&inst, &st, &hp));
        for (p, q) in eta.iter().zip(&eta2).chain(xi.iter().zip(&xi2)) {
            prop_assert!((p - q).abs() <= 1e-12 * (1.0 + q.abs()));
        }
        let pen = penalty_exact(&inst, &st, &hp);
        prop_assert!((table.penalty(&st.alpha, &st.beta) - pen).abs() <= 1e-12 * (1.0 + pen));
    }

    #[test]
    fn dual_coupling_marginals_are_the_gradient_sums(seed in 0u64..1000, rho in rho_strategy(), (a, b) in duals()) {
        let inst = instance(seed, 6, 3);
        let hp = holder_pair(rho).unwrap();
        let st = state(&inst, &a, &b);
        let gamma = coupling_from_dual(&inst, &st, &hp).unwrap();
        let eta = grad_alpha_exact(&inst, &st, &hp);
        let xi = grad_beta_exact(&inst, &st, &hp);
        for (i, row) in gamma.row_sums().iter().enumerate() {
            prop_assert!((row - inst.mu.mass(i) * eta[i]).abs() <= 1e-12 * (1.0 + row));
        }
        for (j, col) in gamma.col_sums().iter().enumerate() {
            prop_assert!((col - inst.nu.mass(j) * xi[j]).abs() <= 1e-12 * (1.0 + col));
        }
    }
}

#[test]
fn zero_state_has_zero_objective() {
    let inst = instance(3, 6, 3);
    let hp = holder_pair(1.5).unwrap();
    let st = DualState::zeros(inst.n(), inst.m());
    assert_eq!(dual_objective(&inst, &st, &hp), 0.0);
    assert!(grad_alpha_exact(&inst, &st, &hp).iter().all(|&e| e == 0.0));
}

#[test]
fn grads_do_not_depend_on_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mu = synth::random_set(&mut rng, 150, 3);
    let nu = synth::random_set(&mut rng, 140, 3);
    let inst = ProblemInstance::raw(mu, nu).unwrap().normalized();
    let table = PairTable::new(&inst, holder_pair(1.5).unwrap());
    let alpha: Vec<f64> = (0..inst.n()).map(|i| 0.3 + 0.001 * i as f64).collect();
    let beta: Vec<f64> = (0..inst.m()).map(|j| 0.1 - 0.001 * j as f64).collect();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| table.grads(&alpha, &beta))
    };
    assert_eq!(run(1), run(4));
}
