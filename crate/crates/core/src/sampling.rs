//! Shot-noise emulation of the measured populations and the resulting error
//! budget for reconstructed Green's functions and convolved populations.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::oracle::{convolve_with_error, grid_count, GreensTable, Provenance, Quadrature, Wavepacket};
use crate::protocol::{reconstruct_greens, GridSpec, ProtocolEngine, ProtocolResult, PulseParams, CALIBRATION};

/// Identifier written to metadata next to every seed.
pub const RNG_ALGORITHM: &str = "chacha8-stream-v1";

/// From this many trials on the exact probability is used instead of a draw.
pub const EXACT_TRIALS: u64 = 100_000_000;

/// Largest trial count the budget planner will propose.
pub const MAX_TRIALS: f64 = 1e15;

/// Stream tag separating the single-pulse channel from the two-pulse grid.
const SINGLE_PULSE_TAG: u64 = 1 << 63;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Generator for one grid point. Streams make every point independent of the
/// order and subset in which points are drawn.
pub fn point_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream index of two-pulse point `(m, k)`.
pub fn grid_stream(m: usize, k: usize) -> u64 {
    ((m as u64) << 31) ^ k as u64
}

/// Stream index of single-pulse point `j`.
pub fn single_stream(j: usize) -> u64 {
    SINGLE_PULSE_TAG | j as u64
}

/// Clamp round-off just outside `[0, 1]`; reject anything further out.
fn probability(p: f64) -> Result<f64> {
    if !(-1e-12..=1.0 + 1e-12).contains(&p) {
        return Err(Error::Probability(p));
    }
    Ok(p.clamp(0.0, 1.0))
}

fn binomial_stderr(mean: f64, trials: u64) -> f64 {
    (mean * (1.0 - mean) / trials as f64).sqrt()
}

/// Fraction of successes in `trials` Bernoulli(`p`) trials.
pub fn draw(p: f64, trials: u64, rng: &mut ChaCha8Rng) -> Result<f64> {
    let p = probability(p)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trial count must be at least 1".into()));
    }
    if trials >= EXACT_TRIALS {
        return Ok(p);
    }
    let dist = Binomial::new(trials, p).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(dist.sample(rng) as f64 / trials as f64)
}

pub fn sample_population(p: f64, trials: u64, seed: u64) -> Result<SampledEstimate> {
    let mean = draw(p, trials, &mut point_rng(seed, 0))?;
    Ok(SampledEstimate {
        mean,
        stderr: binomial_stderr(mean, trials),
        trials,
        seed,
    })
}

/// Error of the single-pulse value `G(t, 0) = 2 P / n^2`.
pub fn sigma_greens_zero(p_one: f64, n_gamma: f64, trials: u64) -> Result<f64> {
    if n_gamma == 0.0 {
        return Err(Error::ZeroArea);
    }
    let p = probability(p_one)?;
    Ok(CALIBRATION / (n_gamma * n_gamma) * binomial_stderr(p, trials.max(1)))
}

/// Error of `G(t_m, t_int)` reconstructed with subtraction coefficient `c`
/// from independent estimates of `P_two` and the two single-pulse values.
/// `c = 1/4` gives the familiar `/16` weighting of the single-pulse terms.
pub fn sigma_greens(p_two: f64, p_one_a: f64, p_one_b: f64, n_gamma: f64, trials: u64, c: f64) -> Result<f64> {
    if n_gamma == 0.0 {
        return Err(Error::ZeroArea);
    }
    let p = probability(p_two)?;
    let two = binomial_stderr(p, trials.max(1)) / (n_gamma * n_gamma);
    let a = sigma_greens_zero(p_one_a, n_gamma, trials)?;
    let b = sigma_greens_zero(p_one_b, n_gamma, trials)?;
    Ok((two * two + c * c * (a * a + b * b)).sqrt())
}

/// Error table matching [`reconstruct_greens`]. The `t_int = 0` column uses the
/// same single-pulse estimate twice, so its two subtraction terms add
/// coherently.
pub fn sigma_table(p_two: &Array2<f64>, p_one: &[f64], n_gamma: f64, trials: u64, c: f64) -> Result<Array2<f64>> {
    let (mc, kc) = p_two.dim();
    if p_one.len() < mc + kc - 1 {
        return Err(Error::DimensionMismatch {
            expected: mc + kc - 1,
            found: p_one.len(),
        });
    }
    let zero = p_one
        .iter()
        .map(|&p| sigma_greens_zero(p, n_gamma, trials))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Array2::zeros((mc, kc));
    for m in 0..mc {
        for k in 0..kc {
            let p = probability(p_two[[m, k]])?;
            let two = binomial_stderr(p, trials.max(1)) / (n_gamma * n_gamma);
            let sub = if k == 0 {
                4.0 * zero[m] * zero[m]
            } else {
                zero[m] * zero[m] + zero[m + k] * zero[m + k]
            };
            out[[m, k]] = (two * two + c * c * sub).sqrt();
        }
    }
    Ok(out)
}

/// Full error sum `sigma_P^2 = sum w^2 dt^4 eps_i^2 eps_j^2 sigma_G^2`.
pub fn sigma_population(table: &GreensTable, wp: &Wavepacket, t: f64, quad: Quadrature) -> Result<f64> {
    Ok(convolve_with_error(table, wp, t, quad)?.1)
}

/// Constant-error estimate `sigma_P = dt * sigma_G`.
pub fn sigma_population_approx(dt: f64, sigma_g: f64) -> f64 {
    dt * sigma_g
}

/// Experiment-count plan for a target population error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub target_sigma_p: f64,
    pub dt: f64,
    pub domain: f64,
    pub p_typical: f64,
    pub n_gamma: f64,
    /// `sigma_G = sigma_P / dt`.
    pub sigma_greens: f64,
    /// Trials per measured point, sized for the noisiest (`t_int = 0`) channel.
    pub trials_per_point: u64,
    pub m_count: usize,
    pub k_count: usize,
    /// `N * T / dt`: one batch of trials per sampling interval.
    pub per_interval_total: f64,
    /// `N * M * K`: one batch of trials per two-pulse grid point.
    pub per_grid_point_total: f64,
}

impl Budget {
    /// Population error predicted by the `dt * sigma_G` law when `total`
    /// experiments are spread over intervals of width `dt`.
    pub fn sigma_p_for(&self, dt: f64, total: f64) -> f64 {
        let trials = total / (self.domain / dt);
        let sg = CALIBRATION / (self.n_gamma * self.n_gamma) * (self.p_typical * (1.0 - self.p_typical) / trials).sqrt();
        sigma_population_approx(dt, sg)
    }
}

pub fn plan_budget(target_sigma_p: f64, dt: f64, domain: f64, p_typical: f64, n_gamma: f64) -> Result<Budget> {
    for (name, v) in [("target sigma", target_sigma_p), ("dt", dt), ("domain", domain), ("n_gamma", n_gamma)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    let p = probability(p_typical)?;
    let sigma_g = target_sigma_p / dt;
    let n4 = n_gamma.powi(4);
    let needed = CALIBRATION * CALIBRATION * p * (1.0 - p) / (n4 * sigma_g * sigma_g);
    if needed > MAX_TRIALS {
        return Err(Error::Unreachable(format!(
            "sigma_P = {target_sigma_p} needs {needed:.3e} trials per point (cap {MAX_TRIALS:.0e})"
        )));
    }
    let trials = ((needed * (1.0 - 1e-12)).ceil() as u64).max(1);
    let m_count = grid_count(domain, dt);
    let intervals = domain / dt;
    Ok(Budget {
        target_sigma_p,
        dt,
        domain,
        p_typical: p,
        n_gamma,
        sigma_greens: sigma_g,
        trials_per_point: trials,
        m_count,
        k_count: m_count,
        per_interval_total: trials as f64 * intervals,
        per_grid_point_total: trials as f64 * (m_count * m_count) as f64,
    })
}

/// Protocol run with binomial shot noise on every measured population.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledRun {
    pub exact_p_two: Array2<f64>,
    pub exact_p_one: Vec<f64>,
    /// Noisy populations, reconstruction and its `sigma` table.
    pub result: ProtocolResult,
}

/// Draw noisy estimates of exact populations, one stream per point.
pub fn sample_populations(
    p_two: &Array2<f64>,
    p_one: &[f64],
    trials: u64,
    seed: u64,
    policy: ExecPolicy,
) -> Result<(Array2<f64>, Vec<f64>)> {
    let (mc, kc) = p_two.dim();
    let two = policy
        .map_range(mc * kc, |i| {
            let (m, k) = (i / kc, i % kc);
            draw(p_two[[m, k]], trials, &mut point_rng(seed, grid_stream(m, k)))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let one = policy
        .map_range(p_one.len(), |j| draw(p_one[j], trials, &mut point_rng(seed, single_stream(j))))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let two = Array2::from_shape_vec((mc, kc), two).expect("grid shape");
    Ok((two, one))
}

/// Noisy reconstruction with errors estimated from the noisy populations,
/// as an experiment would report them.
pub fn reconstruct_sampled(
    engine: &ProtocolEngine,
    p_two: &Array2<f64>,
    p_one: &[f64],
    grid: GridSpec,
    pulse: PulseParams,
    trials: u64,
    seed: u64,
    policy: ExecPolicy,
) -> Result<SampledRun> {
    let (s_two, s_one) = sample_populations(p_two, p_one, trials, seed, policy)?;
    let mut table = reconstruct_greens(&s_two, &s_one, grid.dt, pulse.n_gamma, pulse.subtraction)?;
    table.sigma = sigma_table(&s_two, &s_one, pulse.n_gamma, trials, pulse.subtraction)?;
    table.meta = engine.meta(
        pulse,
        Provenance::Sampled {
            trials,
            seed,
            rng: RNG_ALGORITHM.to_string(),
        },
    );
    Ok(SampledRun {
        exact_p_two: p_two.clone(),
        exact_p_one: p_one.to_vec(),
        result: ProtocolResult {
            p_two: s_two,
            p_one: s_one,
            reconstruction: table,
        },
    })
}

pub fn sampled_protocol_run(
    engine: &ProtocolEngine,
    grid: GridSpec,
    pulse: PulseParams,
    trials: u64,
    seed: u64,
    policy: ExecPolicy,
) -> Result<SampledRun> {
    let (p_two, p_one) = engine.populations(grid, pulse, policy)?;
    reconstruct_sampled(engine, &p_two, &p_one, grid, pulse, trials, seed, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn certain_outcomes() {
        for n in [1, 7, 1000] {
            let s = sample_population(1.0, n, 3).unwrap();
            assert_eq!((s.mean, s.stderr), (1.0, 0.0));
            let s = sample_population(0.0, n, 3).unwrap();
            assert_eq!((s.mean, s.stderr), (0.0, 0.0));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(sample_population(1.5, 10, 0), Err(Error::Probability(_))));
        assert!(matches!(sample_population(-0.1, 10, 0), Err(Error::Probability(_))));
        assert!(sample_population(0.5, 0, 0).is_err());
        assert!(matches!(sigma_greens(0.1, 0.1, 0.1, 0.0, 10, 0.5), Err(Error::ZeroArea)));
    }

    #[test]
    fn stderr_formula() {
        assert!((binomial_stderr(0.5, 100) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn empirical_spread_matches_binomial() {
        let (p, n) = (0.01, 10_000);
        let means: Vec<f64> = (0..1000).map(|s| sample_population(p, n, s).unwrap().mean).collect();
        let mu = means.iter().sum::<f64>() / means.len() as f64;
        let sd = (means.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (means.len() - 1) as f64).sqrt();
        let expected = (p * (1.0 - p) / n as f64).sqrt();
        assert!((sd / expected - 1.0).abs() < 0.1, "{sd} vs {expected}");
    }

    #[test]
    fn huge_trial_count_is_exact() {
        let s = sample_population(0.123, EXACT_TRIALS, 9).unwrap();
        assert_eq!(s.mean, 0.123);
    }

    #[test]
    fn sigma_greens_values() {
        assert_eq!(sigma_greens(0.0, 0.0, 0.0, 1.0, 100, 0.5).unwrap(), 0.0);
        let z = sigma_greens_zero(0.01, 1.0, 10_000).unwrap();
        assert!((z - 2.0 * (0.0099f64 / 1e4).sqrt()).abs() < 1e-15);
        assert!((z - 1.99e-3).abs() < 1e-5);
        // only the two-pulse term: doubling n quarters it
        let a = sigma_greens(0.04, 0.0, 0.0, 1.0, 100, 0.5).unwrap();
        let b = sigma_greens(0.04, 0.0, 0.0, 2.0, 100, 0.5).unwrap();
        assert!((a / b - 4.0).abs() < 1e-12);
        let sixteenth = sigma_greens(0.01, 0.01, 0.01, 1.0, 10_000, 0.25).unwrap();
        let direct = (0.0099 / 1e4 + 2.0 * z * z / 16.0f64).sqrt();
        assert!((sixteenth - direct).abs() < 1e-15);
    }

    #[test]
    fn approx_population_error() {
        assert_eq!(sigma_population_approx(10.0, 1e-3), 1e-2);
        assert_eq!(sigma_population_approx(10.0, 0.0), 0.0);
    }

    #[test]
    fn budget_reference_scenario() {
        let b = plan_budget(0.01, 10.0, 1000.0, 0.01, 1.0).unwrap();
        assert!((b.sigma_greens - 1e-3).abs() < 1e-15);
        assert_eq!(b.trials_per_point, 39_600);
        assert!((b.per_interval_total - 3.96e6).abs() < 1.0);
        assert_eq!((b.m_count, b.k_count), (101, 101));
        assert!((b.per_grid_point_total - 39_600.0 * 101.0 * 101.0).abs() < 1.0);
        let loose = plan_budget(0.1, 10.0, 1000.0, 0.01, 1.0).unwrap();
        assert_eq!(loose.trials_per_point, 396);
    }

    #[test]
    fn budget_dt_tradeoff() {
        let b = plan_budget(0.01, 10.0, 1000.0, 0.01, 1.0).unwrap();
        let total = b.per_interval_total;
        assert!((b.sigma_p_for(10.0, total) / 0.01 - 1.0).abs() < 1e-3);
        let ratio = b.sigma_p_for(5.0, total) / b.sigma_p_for(10.0, total);
        assert!((ratio - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn budget_errors() {
        assert!(matches!(plan_budget(1e-12, 10.0, 1000.0, 0.01, 1.0), Err(Error::Unreachable(_))));
        assert!(plan_budget(-1.0, 10.0, 1000.0, 0.01, 1.0).is_err());
        assert!(plan_budget(0.01, 10.0, 1000.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn streams_are_distinct() {
        assert_ne!(grid_stream(1, 0), grid_stream(0, 1));
        assert_ne!(grid_stream(0, 0), single_stream(0));
    }

    #[test]
    fn estimator_is_unbiased() {
        let reps = 10_000u64;
        for &(p, n) in &[(0.01, 100u64), (0.2, 37), (0.5, 1000), (0.93, 12)] {
            let mean = (0..reps).map(|s| sample_population(p, n, s).unwrap().mean).sum::<f64>() / reps as f64;
            let tol = 3.0 * (p * (1.0 - p) / (n * reps) as f64).sqrt();
            assert!((mean - p).abs() < tol, "p={p} N={n}: {mean}");
        }
    }

    proptest! {

        #[test]
        fn draws_are_deterministic(p in 0.0f64..1.0, n in 1u64..100_000, seed in any::<u64>()) {
            let a = sample_population(p, n, seed).unwrap();
            let b = sample_population(p, n, seed).unwrap();
            prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        }
    }
}
