use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skipring::schedule::{
    build_plan, circulant_eigen_moduli, eigen_modulus, l1_to_uniform, lambda1, mixing_bound,
    transition_matrix, RingTopology, Scheme,
};

fn mat_vec(pi: &[f64], q: &[Vec<f64>]) -> Vec<f64> {
    let n = pi.len();
    (0..n).map(|j| (0..n).map(|i| pi[i] * q[i][j]).sum()).collect()
}

#[test]
fn closed_form_moduli_match_dft() {
    for n in 2..=16 {
        for p in [0.1, 0.5, 0.9] {
            let q = transition_matrix(n, p).unwrap();
            let dft = circulant_eigen_moduli(&q[0]);
            for (j, m) in dft.iter().enumerate() {
                let closed = if j == 0 { 1.0 } else { eigen_modulus(n, p, j) };
                assert!((m - closed).abs() < 1e-10, "n={n} p={p} j={j}");
            }
        }
    }
}

#[test]
fn mixing_bound_dominates_exact_distance() {
    for n in [2, 3, 7, 10, 16] {
        for p in [0.1, 0.5, 0.9] {
            let q = transition_matrix(n, p).unwrap();
            let mut pi = vec![0.0; n];
            pi[0] = 1.0;
            for h in 1..=200u32 {
                pi = mat_vec(&pi, &q);
                let exact = l1_to_uniform(&pi);
                let bound = mixing_bound(n, p, h).unwrap();
                assert!(exact <= bound + 1e-12, "n={n} p={p} h={h}: {exact} > {bound}");
            }
        }
    }
}

#[test]
fn empirical_visit_order_follows_transition_matrix() {
    // chain of updating nodes on the fixed ring, simulated by skipping
    let (n, p) = (6, 0.4);
    let q = transition_matrix(n, p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = vec![0usize; n];
    let trials = 200_000;
    for _ in 0..trials {
        let mut node = 0;
        loop {
            node = (node + 1) % n;
            if rand::Rng::random::<f64>(&mut rng) >= p {
                break;
            }
        }
        counts[node] += 1;
    }
    for j in 0..n {
        let freq = counts[j] as f64 / trials as f64;
        let se = (q[0][j] * (1.0 - q[0][j]) / trials as f64).sqrt();
        assert!((freq - q[0][j]).abs() < 4.0 * se, "j={j}: {freq} vs {}", q[0][j]);
    }
}

#[test]
fn randomized_ring_has_no_second_eigenvalue() {
    assert_eq!(lambda1(10, 0.5, Scheme::SkipRandRing).unwrap(), 0.0);
    let topo = RingTopology::new(5, Scheme::SkipRandRing).unwrap();
    let plan = build_plan(&topo, 5000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    // first slot of a round is uniform over nodes
    let mut first = [0usize; 5];
    for round in plan.rounds() {
        first[round[0]] += 1;
    }
    for c in first {
        assert!((c as f64 - 200.0).abs() < 4.0 * (200.0f64 * 0.8).sqrt());
    }
}
