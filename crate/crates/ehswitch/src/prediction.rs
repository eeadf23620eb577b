//! Probabilistic working-time prediction.
//!
//! When a transmitter is selected it can sustain the current power level for
//! `E/P` seconds on stored energy alone; every harvest that lands inside the
//! working window extends it. The predictor estimates the expected total
//! working time from the arrival rate and the burst-amount distribution
//! without looking at the future trace.
//!
//! With `n - 1` extensions, the window ends after the sum of stored energy
//! plus `n - 1` burst amounts has been spent. The probability that the
//! process stops at exactly `n` windows is built recursively from
//! [`tail_prob`], the probability that the waiting time to the n-th arrival
//! (Erlang) exceeds the time needed to drain the first `n - 1` bursts
//! (a scaled Irwin-Hall sum divided by the power).

use crate::quad::{integrate_with_breaks, QuadError};
use rand::Rng;
use rand_distr::{Distribution, Exp, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from the prediction numerics.
#[derive(Debug, Error)]
pub enum PredictionError {
    /// An argument violates its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The tail-probability quadrature failed to converge.
    #[error("tail probability quadrature failed: {0}")]
    Quadrature(#[from] QuadError),
}

/// State of one transmitter at a prediction instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInput {
    /// Stored energy at the prediction instant, in mJ.
    pub left_energy_mj: f64,
    /// Power the transmitter would have to sustain, in mW.
    pub power_mw: f64,
    /// Energy-arrival rate, in 1/s.
    pub lambda_per_s: f64,
    /// Lower burst-amount bound, in mJ.
    pub amount_min_mj: f64,
    /// Upper burst-amount bound, in mJ.
    pub amount_max_mj: f64,
    /// Time since this transmitter's last energy arrival, in seconds.
    pub elapsed_s: f64,
}

/// Which mean burst amount enters the expected-extension terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanConvention {
    /// The uniform distribution's true mean, (min + max) / 2. Default.
    Midpoint,
    /// Compatibility mode using the half-width (max - min) / 2 instead of the
    /// mean, for comparison against runs that used that convention.
    HalfWidth,
}

impl MeanConvention {
    fn mean_mj(&self, dn: f64, up: f64) -> f64 {
        match self {
            MeanConvention::Midpoint => 0.5 * (dn + up),
            MeanConvention::HalfWidth => 0.5 * (up - dn),
        }
    }
}

/// Output of [`mean_working_time`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    /// Expected total working time, in seconds.
    pub mean_working_time_s: f64,
    /// Stopping probabilities PP_1 .. PP_n for the computed terms.
    pub pp: Vec<f64>,
    /// Candidate working times T_1 .. T_n, in seconds (strictly increasing).
    pub terms_s: Vec<f64>,
    /// Number of computed terms.
    pub n_terms: usize,
    /// True when the term cap was reached before the stopping rule fired.
    pub truncated: bool,
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// Erlang(n, lambda) density at `x` (zero for negative `x`).
pub fn erlang_pdf(n: usize, lambda_per_s: f64, x_s: f64) -> Result<f64, PredictionError> {
    if n < 1 {
        return Err(PredictionError::InvalidArgument(format!(
            "erlang shape must be >= 1, got {n}"
        )));
    }
    if !(lambda_per_s > 0.0) {
        return Err(PredictionError::InvalidArgument(format!(
            "erlang rate must be > 0, got {lambda_per_s}"
        )));
    }
    if x_s < 0.0 {
        return Ok(0.0);
    }
    if x_s == 0.0 {
        return Ok(if n == 1 { lambda_per_s } else { 0.0 });
    }
    let ln = n as f64 * lambda_per_s.ln() + (n as f64 - 1.0) * x_s.ln()
        - lambda_per_s * x_s
        - ln_factorial(n - 1);
    Ok(ln.exp())
}

/// Erlang(n, lambda) survival function P(X > x): the probability that fewer
/// than `n` Poisson arrivals occur in `[0, x]`.
pub fn erlang_survival(n: usize, lambda_per_s: f64, x_s: f64) -> f64 {
    if x_s <= 0.0 {
        return 1.0;
    }
    let lx = lambda_per_s * x_s;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..n {
        term *= lx / k as f64;
        sum += term;
    }
    ((-lx).exp() * sum).min(1.0)
}

/// Density of the sum of `count` iid Uniform(0, 1) variables, evaluated with
/// the alternating-sign closed form. Numerically reliable for small counts.
///
/// For `count == 1` the box takes the value 1 on the *closed* interval, so
/// the function is flat across its whole support; a jump exactly at an
/// integration endpoint would otherwise defeat the adaptive quadrature built
/// on top of this density. Higher counts vanish continuously at the edges.
fn unit_sum_pdf_closed(count: usize, z: f64) -> f64 {
    if count == 1 {
        return if (0.0..=1.0).contains(&z) { 1.0 } else { 0.0 };
    }
    if z <= 0.0 || z >= count as f64 {
        return 0.0;
    }
    let n = count;
    let mut binom = 1.0; // C(n, k)
    let mut sum = 0.0;
    let kmax = z.floor() as usize;
    for k in 0..=kmax.min(n) {
        let term = binom * (z - k as f64).powi(n as i32 - 1);
        sum += if k % 2 == 0 { term } else { -term };
        binom = binom * (n - k) as f64 / (k + 1) as f64;
    }
    (sum / ln_factorial(n - 1).exp()).max(0.0)
}

/// Same density through the B-spline recurrence, which only adds nonnegative
/// terms and therefore stays stable for large counts where the alternating
/// form cancels catastrophically.
fn unit_sum_pdf_bspline(count: usize, z: f64) -> f64 {
    if z <= 0.0 || z >= count as f64 {
        return 0.0;
    }
    // vals[j] holds M_k(z - j); M_1 is the unit box.
    let mut vals: Vec<f64> = (0..count)
        .map(|j| {
            let zj = z - j as f64;
            if (0.0..1.0).contains(&zj) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for k in 2..=count {
        for j in 0..=(count - k) {
            let zj = z - j as f64;
            vals[j] = (zj * vals[j] + (k as f64 - zj) * vals[j + 1]) / (k as f64 - 1.0);
        }
    }
    vals[0]
}

const CLOSED_FORM_MAX_COUNT: usize = 12;

/// Density of the sum of `count` iid Uniform(`dn`, `up`) amounts at `y` (mJ).
pub fn irwin_hall_pdf(
    count: usize,
    dn_mj: f64,
    up_mj: f64,
    y_mj: f64,
) -> Result<f64, PredictionError> {
    if count < 1 {
        return Err(PredictionError::InvalidArgument(format!(
            "sum of {count} uniforms has no density"
        )));
    }
    if !(dn_mj < up_mj) {
        return Err(PredictionError::InvalidArgument(format!(
            "need dn < up, got [{dn_mj}, {up_mj}]"
        )));
    }
    let width = up_mj - dn_mj;
    let z = (y_mj - count as f64 * dn_mj) / width;
    let unit = if count <= CLOSED_FORM_MAX_COUNT {
        unit_sum_pdf_closed(count, z)
    } else {
        unit_sum_pdf_bspline(count, z)
    };
    Ok(unit / width)
}

/// Collapses breakpoints that differ only by floating-point dust, which would
/// otherwise create sliver intervals with unmeetable tolerance shares.
fn dedup_close(points: &mut Vec<f64>) {
    points.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
}

/// Probability that the n-th arrival comes later than the drain time of the
/// stored energy plus the first `n - 1` bursts:
/// `P(X - Y/P > ma)` with `X` Erlang(n, lambda) and `Y` the sum of `n - 1`
/// uniform amounts. `ma` is the drain time of the stored energy itself,
/// measured from the last arrival.
///
/// For `n = 1` this is the closed form `exp(-lambda * ma)`. For `n >= 2` the
/// double integral splits at `x = ma + (n-1) up / P`: beyond it the inner
/// integral saturates at 1 and the remainder is an Erlang survival; below it
/// both factors vary and nested adaptive quadrature is used with breakpoints
/// at the Irwin-Hall kinks.
pub fn tail_prob(
    n: usize,
    ma_s: f64,
    power_mw: f64,
    lambda_per_s: f64,
    dn_mj: f64,
    up_mj: f64,
) -> Result<f64, PredictionError> {
    if n < 1 {
        return Err(PredictionError::InvalidArgument(format!(
            "tail probability needs n >= 1, got {n}"
        )));
    }
    if !(ma_s >= 0.0) {
        return Err(PredictionError::InvalidArgument(format!(
            "ma must be >= 0 s, got {ma_s}"
        )));
    }
    if !(power_mw > 0.0) {
        return Err(PredictionError::InvalidArgument(format!(
            "power must be > 0 mW, got {power_mw}"
        )));
    }
    if !(lambda_per_s > 0.0) {
        return Err(PredictionError::InvalidArgument(format!(
            "arrival rate must be > 0, got {lambda_per_s}"
        )));
    }
    if !(0.0 <= dn_mj && dn_mj < up_mj) {
        return Err(PredictionError::InvalidArgument(format!(
            "need 0 <= dn < up, got [{dn_mj}, {up_mj}]"
        )));
    }
    if n == 1 {
        return Ok((-lambda_per_s * ma_s).exp());
    }
    let count = n - 1;
    let x_lo = ma_s + count as f64 * dn_mj / power_mw;
    let x_hi = ma_s + count as f64 * up_mj / power_mw;
    let region2 = erlang_survival(n, lambda_per_s, x_hi);
    // If even the earliest possible crossing is deep in the Erlang tail, the
    // varying region contributes less than the tolerance.
    if erlang_survival(n, lambda_per_s, x_lo) < 1e-12 {
        return Ok(region2.clamp(0.0, 1.0));
    }
    let inner_upper_max = count as f64 * up_mj;
    let inner_lower = count as f64 * dn_mj;
    let width = up_mj - dn_mj;
    // Quadrature failures inside the closure surface after the outer pass.
    let mut inner_failure: Option<QuadError> = None;
    let mut outer = |x: f64| -> f64 {
        let upper = ((x - ma_s) * power_mw).min(inner_upper_max);
        if upper <= inner_lower {
            return 0.0;
        }
        let mut breaks: Vec<f64> = (0..=count)
            .map(|k| inner_lower + k as f64 * width)
            .filter(|&y| y < upper)
            .collect();
        breaks.push(upper);
        dedup_close(&mut breaks);
        let inner = match integrate_with_breaks(
            |y| irwin_hall_pdf(count, dn_mj, up_mj, y).expect("validated density args"),
            &breaks,
            1e-9,
            30,
        ) {
            Ok(v) => v,
            Err(e) => {
                if inner_failure.is_none() {
                    inner_failure = Some(e);
                }
                return 0.0;
            }
        };
        erlang_pdf(n, lambda_per_s, x).expect("validated erlang args") * inner.clamp(0.0, 1.0)
    };
    let mut xbreaks: Vec<f64> = (0..=count)
        .map(|k| ma_s + (inner_lower + k as f64 * width) / power_mw)
        .collect();
    dedup_close(&mut xbreaks);
    let region1 = integrate_with_breaks(&mut outer, &xbreaks, 1e-6, 30)?;
    if let Some(e) = inner_failure {
        return Err(PredictionError::Quadrature(e));
    }
    Ok((region1 + region2).clamp(0.0, 1.0))
}

/// Stopping probabilities PP_1 .. PP_{n_max}.
///
/// PP_1 is the probability that no arrival lands inside the first working
/// window; each later PP_n scales the tail probability of the n-th window by
/// the probability mass not yet assigned to earlier stops.
pub fn pp_sequence(
    input: &PredictionInput,
    n_max: usize,
) -> Result<Vec<f64>, PredictionError> {
    validate_input(input)?;
    let ma = input.elapsed_s + input.left_energy_mj / input.power_mw;
    let mut pp = Vec::with_capacity(n_max);
    let mut sum = 0.0_f64;
    for n in 1..=n_max {
        let val = if n == 1 {
            (-input.lambda_per_s * ma).exp()
        } else {
            let rem = (1.0 - sum).max(0.0);
            if rem < 1e-15 {
                0.0
            } else {
                rem * tail_prob(
                    n,
                    ma,
                    input.power_mw,
                    input.lambda_per_s,
                    input.amount_min_mj,
                    input.amount_max_mj,
                )?
            }
        };
        sum += val;
        pp.push(val);
    }
    Ok(pp)
}

fn validate_input(input: &PredictionInput) -> Result<(), PredictionError> {
    if !(input.power_mw > 0.0) {
        return Err(PredictionError::InvalidArgument(format!(
            "power must be > 0 mW, got {}",
            input.power_mw
        )));
    }
    if !(input.left_energy_mj >= 0.0) {
        return Err(PredictionError::InvalidArgument(format!(
            "left energy must be >= 0 mJ, got {}",
            input.left_energy_mj
        )));
    }
    if !(input.elapsed_s >= 0.0) {
        return Err(PredictionError::InvalidArgument(format!(
            "elapsed must be >= 0 s, got {}",
            input.elapsed_s
        )));
    }
    if !(input.lambda_per_s > 0.0) {
        return Err(PredictionError::InvalidArgument(format!(
            "arrival rate must be > 0, got {}",
            input.lambda_per_s
        )));
    }
    if !(input.amount_min_mj < input.amount_max_mj) {
        return Err(PredictionError::InvalidArgument(format!(
            "need dn < up, got [{}, {}]",
            input.amount_min_mj, input.amount_max_mj
        )));
    }
    Ok(())
}

/// Maximum number of terms evaluated before the result is flagged truncated.
pub const DEFAULT_TERM_CAP: usize = 64;

/// Expected working time with the default (midpoint) mean convention and the
/// default term cap.
pub fn mean_working_time(input: &PredictionInput) -> Result<PredictionResult, PredictionError> {
    mean_working_time_with(input, MeanConvention::Midpoint, DEFAULT_TERM_CAP)
}

/// Expected working time.
///
/// Terms are added while `PP_n * T_n` is either exactly zero or at least
/// 0.01; the first term strictly inside (0, 0.01) stops the loop. Two guards
/// keep this well-founded: the loop also stops once the unassigned
/// probability mass is exhausted, and `n_max` caps the term count (setting
/// the `truncated` flag when it fires).
pub fn mean_working_time_with(
    input: &PredictionInput,
    convention: MeanConvention,
    n_max: usize,
) -> Result<PredictionResult, PredictionError> {
    validate_input(input)?;
    let p = input.power_mw;
    let mu = convention.mean_mj(input.amount_min_mj, input.amount_max_mj);
    let ma = input.elapsed_s + input.left_energy_mj / p;
    let mut pp = Vec::new();
    let mut terms = Vec::new();
    let mut sum_pp = 0.0_f64;
    let mut mean = input.left_energy_mj / p;
    let mut truncated = false;
    for n in 1.. {
        let t_n = (input.left_energy_mj + (n as f64 - 1.0) * mu) / p;
        let pp_n = if n == 1 {
            (-input.lambda_per_s * ma).exp()
        } else {
            let rem = (1.0 - sum_pp).max(0.0);
            rem * tail_prob(
                n,
                ma,
                p,
                input.lambda_per_s,
                input.amount_min_mj,
                input.amount_max_mj,
            )?
        };
        sum_pp += pp_n;
        if n >= 2 {
            mean += (n as f64 - 1.0) * pp_n * mu / p;
        }
        pp.push(pp_n);
        terms.push(t_n);
        let product = pp_n * t_n;
        if product > 0.0 && product < 0.01 {
            break;
        }
        if 1.0 - sum_pp < 1e-12 {
            break;
        }
        if n >= n_max {
            truncated = true;
            break;
        }
    }
    Ok(PredictionResult {
        mean_working_time_s: mean,
        n_terms: pp.len(),
        pp,
        terms_s: terms,
        truncated,
    })
}

/// Simulates the depletion process directly and returns the sample mean and
/// standard error of the total working time.
///
/// Each sample drains the stored energy at constant power, drawing arrivals
/// from the memoryless exponential clock; every arrival inside the working
/// window extends it by the drain time of its amount. The window ends at the
/// first gap.
pub fn mc_working_time_oracle<R: Rng>(
    input: &PredictionInput,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64), PredictionError> {
    validate_input(input)?;
    if samples < 1 {
        return Err(PredictionError::InvalidArgument(
            "need at least one sample".into(),
        ));
    }
    let exp = Exp::new(input.lambda_per_s).expect("validated rate");
    let uni = Uniform::new(input.amount_min_mj, input.amount_max_mj);
    let mut xs = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut end = input.left_energy_mj / input.power_mw;
        let mut t = 0.0;
        loop {
            t += exp.sample(rng);
            if t >= end {
                break;
            }
            end += uni.sample(rng) / input.power_mw;
        }
        xs.push(end);
    }
    let n = samples as f64;
    let mean = xs.iter().sum::<f64>() / n;
    // Two-pass variance: exact zero when every sample coincides.
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn tx2_input() -> PredictionInput {
        PredictionInput {
            left_energy_mj: 22.0,
            power_mw: 11.2082,
            lambda_per_s: 0.1,
            amount_min_mj: 20.0,
            amount_max_mj: 24.0,
            elapsed_s: 0.0,
        }
    }

    #[test]
    fn exponential_case_at_origin_equals_rate() {
        assert_eq!(erlang_pdf(1, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(erlang_pdf(1, 2.5, 0.0).unwrap(), 2.5);
        assert_eq!(erlang_pdf(3, 1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn erlang_mode_sits_at_n_minus_one_over_lambda() {
        let peak = erlang_pdf(2, 0.5, 2.0).unwrap();
        assert!(erlang_pdf(2, 0.5, 1.8).unwrap() < peak);
        assert!(erlang_pdf(2, 0.5, 2.2).unwrap() < peak);
    }

    #[test]
    fn erlang_density_normalizes() {
        // Rate 0.1, shape 3: the tail beyond x = 400 holds < 1e-12 mass.
        let v = integrate(|x| erlang_pdf(3, 0.1, x).unwrap(), 0.0, 400.0, 1e-10, 40).unwrap();
        assert!((v - 1.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn erlang_survival_matches_density_integral() {
        let direct = erlang_survival(3, 0.1, 25.0);
        let byquad =
            integrate(|x| erlang_pdf(3, 0.1, x).unwrap(), 25.0, 500.0, 1e-11, 40).unwrap();
        assert!((direct - byquad).abs() < 1e-8, "{direct} vs {byquad}");
    }

    #[test]
    fn single_uniform_is_a_box() {
        assert!((irwin_hall_pdf(1, 2.0, 6.0, 4.0).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(irwin_hall_pdf(1, 2.0, 6.0, 1.0).unwrap(), 0.0);
        assert_eq!(irwin_hall_pdf(1, 2.0, 6.0, 7.0).unwrap(), 0.0);
    }

    #[test]
    fn two_uniforms_peak_at_triangle_apex() {
        let v = irwin_hall_pdf(2, 0.0, 1.0, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn sum_density_normalizes() {
        let count = 3;
        let (dn, up) = (20.0, 24.0);
        let breaks: Vec<f64> = (0..=count).map(|k| count as f64 * dn + k as f64 * (up - dn)).collect();
        let v = integrate_with_breaks(
            |y| irwin_hall_pdf(count, dn, up, y).unwrap(),
            &breaks,
            1e-10,
            40,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn closed_form_and_recurrence_agree() {
        for count in 2..=12 {
            for i in 1..40 {
                let z = count as f64 * i as f64 / 40.0;
                let a = unit_sum_pdf_closed(count, z);
                let b = unit_sum_pdf_bspline(count, z);
                assert!(
                    (a - b).abs() < 1e-9,
                    "count {count} z {z}: closed {a} vs recurrence {b}"
                );
            }
        }
    }

    #[test]
    fn tail_prob_first_window_is_exponential() {
        let v = tail_prob(1, 10.0, 11.2, 0.1, 20.0, 24.0).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(tail_prob(1, 0.0, 11.2, 0.1, 20.0, 24.0).unwrap(), 1.0);
    }

    #[test]
    fn tail_prob_decreases_with_waiting_time() {
        let mut prev = f64::INFINITY;
        for ma in [0.0, 1.0, 3.0, 8.0, 20.0] {
            let v = tail_prob(3, ma, 11.2082, 0.1, 20.0, 24.0).unwrap();
            assert!(v <= prev + 1e-12, "ma {ma}: {v} > {prev}");
            assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn tail_prob_matches_direct_sampling() {
        let (n, ma, p, lambda, dn, up) = (3, 5.0, 11.2082, 0.1, 20.0, 24.0);
        let analytic = tail_prob(n, ma, p, lambda, dn, up).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1234);
        let exp = Exp::new(lambda).unwrap();
        let uni = Uniform::new(dn, up);
        let samples = 200_000;
        let mut hits = 0usize;
        for _ in 0..samples {
            let x: f64 = (0..n).map(|_| exp.sample(&mut rng)).sum();
            let y: f64 = (0..n - 1).map(|_| uni.sample(&mut rng)).sum();
            if x - y / p > ma {
                hits += 1;
            }
        }
        let est = hits as f64 / samples as f64;
        let se = (est * (1.0 - est) / samples as f64).sqrt();
        assert!(
            (analytic - est).abs() < 3.0 * se,
            "analytic {analytic} vs mc {est} +- {se}"
        );
    }

    #[test]
    fn stopping_sequence_definition_holds() {
        let input = tx2_input();
        let pp = pp_sequence(&input, 6).unwrap();
        let ma = input.left_energy_mj / input.power_mw;
        let pp1 = (-input.lambda_per_s * ma).exp();
        assert!((pp[0] - pp1).abs() < 1e-12);
        let t2 = tail_prob(2, ma, input.power_mw, input.lambda_per_s, 20.0, 24.0).unwrap();
        assert!((pp[1] - (1.0 - pp1) * t2).abs() < 1e-12);
        let mut running = 0.0;
        for v in &pp {
            assert!(*v >= 0.0);
            running += v;
            assert!(running <= 1.0 + 1e-9, "partial sum {running}");
        }
    }

    #[test]
    fn vanishing_rate_means_no_extensions() {
        let mut input = tx2_input();
        input.lambda_per_s = 1e-9;
        let pp = pp_sequence(&input, 3).unwrap();
        assert!(pp[0] > 1.0 - 1e-6);
        assert!(pp[1] < 1e-6);
        let res = mean_working_time(&input).unwrap();
        let direct = input.left_energy_mj / input.power_mw;
        assert!((res.mean_working_time_s - direct).abs() < 1e-6 * direct);
    }

    #[test]
    fn depleted_battery_with_pending_arrival_has_zero_mean() {
        let mut input = tx2_input();
        input.left_energy_mj = 0.0;
        let res = mean_working_time(&input).unwrap();
        assert_eq!(res.mean_working_time_s, 0.0);
        assert_eq!(res.n_terms, 1);
        assert!(!res.truncated);
        assert!((res.pp[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_never_undershoots_the_stored_energy_drain() {
        for (e, p, lambda, dn, up) in [
            (22.0, 11.2082, 0.1, 20.0, 24.0),
            (3.0, 11.2082, 1.0, 1.0, 5.0),
            (102.0, 50.8242, 0.05, 100.0, 104.0),
            (24.0, 16.0, 1.0 / 30.0, 4.0, 44.0),
        ] {
            let input = PredictionInput {
                left_energy_mj: e,
                power_mw: p,
                lambda_per_s: lambda,
                amount_min_mj: dn,
                amount_max_mj: up,
                elapsed_s: 0.0,
            };
            let res = mean_working_time(&input).unwrap();
            assert!(
                res.mean_working_time_s >= e / p - 1e-12,
                "mean {} below drain {}",
                res.mean_working_time_s,
                e / p
            );
            for w in res.terms_s.windows(2) {
                assert!(w[0] < w[1], "terms not increasing: {:?}", res.terms_s);
            }
        }
    }

    #[test]
    fn elapsed_time_shrinks_the_first_stop_probability() {
        let fresh = mean_working_time(&tx2_input()).unwrap();
        let mut waited = tx2_input();
        waited.elapsed_s = 15.0;
        let later = mean_working_time(&waited).unwrap();
        assert!(later.pp[0] < fresh.pp[0]);
    }

    #[test]
    fn half_width_convention_uses_smaller_extensions() {
        let input = tx2_input();
        let mid = mean_working_time_with(&input, MeanConvention::Midpoint, 64).unwrap();
        let half = mean_working_time_with(&input, MeanConvention::HalfWidth, 64).unwrap();
        // Extensions of 2 mJ instead of 22 mJ shorten the expected total.
        assert!(half.mean_working_time_s < mid.mean_working_time_s);
    }

    #[test]
    fn oracle_is_deterministic_and_exact_without_arrivals() {
        let mut input = tx2_input();
        input.lambda_per_s = 1e-12;
        let (m1, s1) =
            mc_working_time_oracle(&input, 2_000, &mut ChaCha12Rng::seed_from_u64(5)).unwrap();
        let (m2, _) =
            mc_working_time_oracle(&input, 2_000, &mut ChaCha12Rng::seed_from_u64(5)).unwrap();
        assert_eq!(m1, m2);
        let drain = input.left_energy_mj / input.power_mw;
        assert!((m1 - drain).abs() < 1e-9);
        assert!(s1 < 1e-9);
    }

    #[test]
    fn prediction_tracks_oracle_for_moderate_load() {
        let input = tx2_input();
        let res = mean_working_time(&input).unwrap();
        let (oracle, _) =
            mc_working_time_oracle(&input, 200_000, &mut ChaCha12Rng::seed_from_u64(77)).unwrap();
        let rel = (res.mean_working_time_s - oracle).abs() / oracle;
        assert!(
            rel < 0.05,
            "prediction {} vs oracle {} ({:.2}%)",
            res.mean_working_time_s,
            oracle,
            100.0 * rel
        );
    }
}
