//! Closed-form and Monte Carlo cross-checks for the working-time predictor.
//!
//! Three independent yardsticks: both densities must integrate to one; the
//! tail probabilities must match direct simulation of the defining event; and
//! the sampling oracle itself must match the exact mean of the busy period it
//! simulates, E[B] = (E/P) / (1 - rho) with rho = lambda * mean_amount / P.

use ehswitch::quad::integrate;
use ehswitch::{
    erlang_pdf, erlang_survival, irwin_hall_pdf, mc_working_time_oracle, mean_working_time,
    tail_prob, PredictionInput,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Uniform};

/// The four transmitter profiles exercised throughout the test suite.
const CONFIGS: [(f64, f64, f64); 4] = [
    (1.0, 1.0, 5.0),
    (0.1, 20.0, 24.0),
    (0.05, 100.0, 104.0),
    (1.0 / 30.0, 4.0, 44.0),
];

fn input(lambda: f64, dn: f64, up: f64, energy: f64, power: f64) -> PredictionInput {
    PredictionInput {
        left_energy_mj: energy,
        power_mw: power,
        lambda_per_s: lambda,
        amount_min_mj: dn,
        amount_max_mj: up,
        elapsed_s: 0.0,
    }
}

#[test]
fn erlang_pdf_normalizes_for_all_shapes() {
    for &lambda in &[0.05, 0.1, 1.0, 3.0] {
        for n in 1..=6usize {
            // Truncate where the survival mass drops below 1e-12.
            let mut hi = n as f64 / lambda;
            while erlang_survival(n, lambda, hi) > 1e-12 {
                hi *= 2.0;
            }
            let mass = integrate(
                |x| erlang_pdf(n, lambda, x).unwrap(),
                0.0,
                hi,
                1e-10,
                40,
            )
            .unwrap();
            assert!(
                (mass - 1.0).abs() < 1e-8,
                "erlang n={n} lambda={lambda}: mass {mass}"
            );
        }
    }
}

#[test]
fn uniform_sum_pdf_normalizes_for_all_counts() {
    for &(_, dn, up) in &CONFIGS {
        for count in 1..=15usize {
            let mass = integrate(
                |y| irwin_hall_pdf(count, dn, up, y).unwrap(),
                count as f64 * dn,
                count as f64 * up,
                1e-10,
                40,
            )
            .unwrap();
            assert!(
                (mass - 1.0).abs() < 1e-8,
                "uniform-sum count={count} [{dn},{up}]: mass {mass}"
            );
        }
    }
}

/// Direct simulation of the defining event of `tail_prob`: with X the n-th
/// arrival instant and Y the sum of the first n-1 amounts, estimate
/// P(X - Y/P > ma).
#[allow(clippy::too_many_arguments)]
fn mc_tail(
    n: usize,
    ma: f64,
    power: f64,
    lambda: f64,
    dn: f64,
    up: f64,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let exp = Exp::new(lambda).unwrap();
    let uni = Uniform::new(dn, up);
    let mut hits = 0u64;
    for _ in 0..samples {
        let x: f64 = (0..n).map(|_| exp.sample(&mut rng)).sum();
        let y: f64 = (0..n - 1).map(|_| uni.sample(&mut rng)).sum();
        if x - y / power > ma {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    let se = (p * (1.0 - p) / samples as f64).sqrt();
    (p, se)
}

#[test]
fn tail_probability_matches_direct_simulation() {
    let power = 11.2082;
    for (c, &(lambda, dn, up)) in CONFIGS.iter().enumerate() {
        let energy = dn + 0.5 * (up - dn); // Mean-sized battery charge.
        let ma = energy / power;
        for n in 2..=4usize {
            let analytic = tail_prob(n, ma, power, lambda, dn, up).unwrap();
            let (mc, se) = mc_tail(n, ma, power, lambda, dn, up, 200_000, 1000 + c as u64);
            let tol = 3.0 * se.max(1e-6);
            assert!(
                (analytic - mc).abs() <= tol,
                "config {c} n={n}: analytic {analytic} vs mc {mc} +- {se}"
            );
        }
    }
}

#[test]
fn sampling_oracle_matches_exact_busy_period_mean() {
    // The simulated working window is a busy period started by E/P seconds of
    // work with arrivals bringing amount/P more; its exact mean is
    // (E/P) / (1 - rho). This pins the oracle itself to a closed form.
    let power = 11.2082;
    for (c, &(lambda, dn, up)) in CONFIGS.iter().enumerate() {
        let energy = dn + 0.5 * (up - dn);
        let rho = lambda * 0.5 * (dn + up) / power;
        assert!(rho < 1.0, "config {c} must be stable for this check");
        let exact = (energy / power) / (1.0 - rho);
        let inp = input(lambda, dn, up, energy, power);
        let (mc, se) =
            mc_working_time_oracle(&inp, 400_000, &mut ChaCha12Rng::seed_from_u64(7 + c as u64))
                .unwrap();
        assert!(
            (mc - exact).abs() <= 4.0 * se,
            "config {c}: oracle {mc} +- {se} vs exact {exact}"
        );
    }
}

#[test]
fn predictor_is_exact_in_the_no_arrival_limit() {
    let inp = input(1e-12, 1.0, 5.0, 30.0, 10.0);
    let res = mean_working_time(&inp).unwrap();
    assert!((res.mean_working_time_s - 3.0).abs() < 1e-9);
    assert!(!res.truncated);
    // The residual mass beyond the first window is ~3e-12, so the series
    // settles after at most one probing extra term.
    assert!(res.n_terms <= 2, "terms: {}", res.n_terms);
}

#[test]
fn predictor_tracks_the_oracle_at_high_power() {
    // At 50.8242 mW every profile drains fast and rarely extends; the
    // recursive expectation stays within 5% of the simulated mean everywhere.
    let power = 50.8242;
    for (c, &(lambda, dn, up)) in CONFIGS.iter().enumerate() {
        let energy = dn + 0.5 * (up - dn);
        let inp = input(lambda, dn, up, energy, power);
        let predicted = mean_working_time(&inp).unwrap().mean_working_time_s;
        let (oracle, _) =
            mc_working_time_oracle(&inp, 200_000, &mut ChaCha12Rng::seed_from_u64(40 + c as u64))
                .unwrap();
        let rel = (predicted - oracle).abs() / oracle;
        assert!(
            rel < 0.05,
            "config {c}: predicted {predicted} vs oracle {oracle} ({:.2}%)",
            rel * 100.0
        );
    }
}

#[test]
fn tail_probability_grows_toward_one_for_stable_profiles() {
    // Each extra window adds one inter-arrival time (mean 1/lambda) to the
    // crossing and one drain time (mean amount / P) to the threshold; when
    // the load is stable the margin is positive on average, so the tails
    // increase with the window index and approach one.
    let power = 11.2082;
    for &(lambda, dn, up) in &CONFIGS {
        let ma = (dn + 0.5 * (up - dn)) / power;
        let probs: Vec<f64> = (2..=6)
            .map(|n| tail_prob(n, ma, power, lambda, dn, up).unwrap())
            .collect();
        for &p in &probs {
            assert!((0.0..=1.0).contains(&p), "{probs:?}");
        }
        for w in probs.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-9,
                "stable tails should not shrink: {probs:?}"
            );
        }
        assert!(probs.last().unwrap() > &0.9, "{probs:?}");
    }
}

#[test]
fn quadrature_region_split_is_consistent() {
    // tail_prob integrates a density over region 1 and adds a closed-form
    // survival for region 2; doubling the arrival rate must lower the tail
    // (arrivals come sooner), a sanity direction check on the split.
    let power = 11.2082;
    let (_, dn, up) = (0.1, 20.0, 24.0);
    let ma = 22.0 / power;
    let slow = tail_prob(3, ma, power, 0.05, dn, up).unwrap();
    let fast = tail_prob(3, ma, power, 0.2, dn, up).unwrap();
    assert!(
        fast < slow,
        "faster arrivals should shrink the tail: {fast} vs {slow}"
    );
}

#[test]
fn stop_probabilities_exhaust_the_mass_for_stable_profiles() {
    // A stable working window ends almost surely, so the recursively built
    // stopping distribution must allocate essentially all probability within
    // a generous term budget, and never more than one.
    let power = 11.2082;
    for (c, &(lambda, dn, up)) in CONFIGS.iter().enumerate() {
        let energy = dn + 0.5 * (up - dn);
        let inp = input(lambda, dn, up, energy, power);
        let pp = ehswitch::pp_sequence(&inp, 64).unwrap();
        let total: f64 = pp.iter().sum();
        assert!(
            total <= 1.0 + 1e-9,
            "config {c}: stop mass overshoots: {total}"
        );
        assert!(
            total >= 0.999,
            "config {c}: stop mass missing: {total}"
        );
        for (i, &p) in pp.iter().enumerate() {
            assert!((0.0..=1.0).contains(&p), "config {c} term {i}: {p}");
        }
    }
}
