use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use skipring::convergence::{e_h, error_bound, ConvergenceParams, EhSweep};
use skipring::schedule::Scheme;

fn compensated(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        s = t;
    }
    s + c
}

/// Term-by-term evaluation of the displayed double sum.
fn naive_e_h(p: &ConvergenceParams, h: u64) -> f64 {
    if h == 0 {
        return p.d_w * p.k;
    }
    let l = p.lambda1;
    let hf = (h + 1) as f64;
    let a = p.d_w * p.d_w + p.zeta * p.zeta * (p.k * p.k + p.d as f64 * p.sigma * p.sigma);
    let noise = a * (2.0 + hf.ln()) / (p.zeta * hf.sqrt());
    let first = compensated((1..=h + 1).map(|i| l.powi(i as i32))) / hf;
    let second = compensated((1..=h).map(|j| {
        let inner = compensated((h + 1 - j..=h + 1).map(|i| l.powi(i as i32)));
        inner / (j as f64 * (j + 1) as f64)
    }));
    noise + p.d_w * p.k * (p.n as f64).sqrt() * (first + second)
}

fn params(lambda1: f64) -> ConvergenceParams {
    ConvergenceParams {
        d_w: 10.0,
        k: 1.0,
        d: 8,
        sigma: 10.597605053700948,
        zeta: 0.03,
        n: 10,
        p: 0.5,
        h_max: 2000,
        lambda1,
    }
}

#[test]
fn e_h_matches_naive_double_sum() {
    let hs: Vec<u64> = (0..=60).chain([99, 100, 512, 1000, 1777, 1999, 2000]).collect();
    for l in [0.0, 0.25, 0.752_937, 0.99] {
        let p = params(l);
        for &h in &hs {
            let want = naive_e_h(&p, h);
            let got = e_h(&p, h);
            assert!((got - want).abs() <= 1e-12 * want, "l={l} h={h}: {got} vs {want}");
        }
    }
}

#[test]
fn error_bound_matches_monte_carlo_binomial_average() {
    for (scheme, p_skip) in [(Scheme::SkipRing, 0.5), (Scheme::SkipRandRing, 0.7), (Scheme::SkipRing, 1e-4)] {
        let p = ConvergenceParams::for_scheme(scheme, 10.0, 1.0, 8, 10.5976, 0.03, 10, p_skip, 1000).unwrap();
        let mut table = Vec::with_capacity(1001);
        let mut sweep = EhSweep::starting_at(&p, 0);
        for _ in 0..=1000 {
            table.push(sweep.value());
            sweep.advance();
        }
        let bin = Binomial::new(1000, 1.0 - p_skip).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples = 1_000_000;
        let draws: Vec<f64> = (0..samples).map(|_| table[bin.sample(&mut rng) as usize]).collect();
        let mean = draws.iter().sum::<f64>() / samples as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
        let se = (var / samples as f64).sqrt();
        let exact = error_bound(&p).unwrap();
        assert!(
            (exact - mean).abs() <= 3.0 * se + 1e-9 * exact,
            "{scheme} p={p_skip}: {exact} vs {mean} ± {se}"
        );
    }
}

#[test]
fn gaussian_norm_moments() {
    let (d, sigma) = (8usize, 10.5976);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let trials = 200_000;
    let (mut sq, mut abs) = (0.0, 0.0);
    for _ in 0..trials {
        let s: f64 = (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (sigma * z).powi(2)
            })
            .sum();
        sq += s;
        abs += s.sqrt();
    }
    let sq = sq / trials as f64;
    let abs = abs / trials as f64;
    let want = d as f64 * sigma * sigma;
    assert!((sq - want).abs() < 0.01 * want);
    assert!(abs <= (d as f64).sqrt() * sigma);
}

#[test]
fn bound_decreases_along_hops_for_both_schedules() {
    for scheme in [Scheme::SkipRing, Scheme::SkipRandRing] {
        let mut prev = f64::INFINITY;
        for h in [1_000u64, 2_000, 5_000, 10_000, 50_000, 100_000] {
            let p = ConvergenceParams::for_scheme(scheme, 10.0, 1.0, 8, 10.5976, 0.03, 10, 0.5, h).unwrap();
            let b = error_bound(&p).unwrap();
            assert!(b < prev, "{scheme} h={h}");
            prev = b;
        }
    }
}
