//! Shot-noise simulation and shot allocation for shift-rule estimators.
//!
//! Every Pauli term of an observable is measured in its own basis; outcomes are ±1
//! with the exact single-term mean. Each (time, configuration) cell draws from its own
//! ChaCha substream, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::evolution::Dynamics;
use crate::gpsr::{configurations, MultiIndex, ResponseSeries, ShiftRule};
use crate::operators::{check_sites, term_expectations, OperatorSum, StateVector};

/// RNG for substream `index` of a master seed.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Sampled `⟨A⟩` with shots split evenly over the non-identity terms.
pub fn sample_expectation(a: &OperatorSum, state: &StateVector, shots: u64, seed: u64) -> Result<Estimate> {
    sample_with(a, state, shots, &mut substream(seed, 0))
}

fn sample_with(a: &OperatorSum, state: &StateVector, shots: u64, rng: &mut ChaCha8Rng) -> Result<Estimate> {
    check_sites(a.n_sites(), state.n_sites())?;
    let means = term_expectations(a, state)?;
    let measured: Vec<usize> = (0..a.len()).filter(|&k| !a.terms()[k].string.is_identity()).collect();
    let mut value = a.identity_part();
    if measured.is_empty() {
        return Ok(Estimate { value, std_error: 0.0 });
    }
    if shots < measured.len() as u64 {
        return Err(invalid(format!("{shots} shots cannot cover {} measured terms", measured.len())));
    }
    let k = measured.len() as u64;
    let mut var = 0.0;
    for (j, &term) in measured.iter().enumerate() {
        let n = shots / k + u64::from((j as u64) < shots % k);
        let p = ((1.0 + means[term]) / 2.0).clamp(0.0, 1.0);
        let ups = Binomial::new(n, p).map_err(|e| invalid(e.to_string()))?.sample(rng);
        let mean = 2.0 * ups as f64 / n as f64 - 1.0;
        let nf = n as f64;
        let sample_var = if n > 1 { (1.0 - mean * mean) * nf / (nf - 1.0) } else { 0.0 };
        let c = a.terms()[term].coefficient;
        value += c * mean;
        var += c * c * sample_var / nf;
    }
    Ok(Estimate { value, std_error: var.max(0.0).sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMode {
    #[default]
    Uniform,
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub total: u64,
    pub shots: Vec<u64>,
    pub mode: AllocationMode,
}

/// Splits `total` shots over configurations with weights `C_p`.
///
/// Uniform mode splits evenly (remainder to the lowest indices); optimal mode allocates
/// `∝ |C_p|√Var_p` with largest-remainder rounding.
pub fn allocate_shots(weights: &[f64], variances: Option<&[f64]>, total: u64, mode: AllocationMode) -> Result<SamplingPlan> {
    if weights.is_empty() || weights.iter().all(|w| *w == 0.0) {
        return Err(invalid("all configuration weights are zero"));
    }
    if let Some(v) = variances {
        if v.len() != weights.len() {
            return Err(invalid("variances and weights differ in length"));
        }
    }
    let m = weights.len() as u64;
    let shots = match mode {
        AllocationMode::Uniform => (0..m).map(|p| total / m + u64::from(p < total % m)).collect(),
        AllocationMode::Optimal => {
            let score: Vec<f64> =
                weights.iter().enumerate().map(|(p, w)| w.abs() * variances.map_or(1.0, |v| v[p].max(0.0).sqrt())).collect();
            let nonzero = score.iter().filter(|s| **s > 0.0).count() as u64;
            if total < nonzero {
                return Err(invalid(format!("{total} shots for {nonzero} weighted configurations")));
            }
            largest_remainder(&score, total)
        }
    };
    Ok(SamplingPlan { total, shots, mode })
}

fn largest_remainder(score: &[f64], total: u64) -> Vec<u64> {
    let sum: f64 = score.iter().sum();
    let ideal: Vec<f64> = score.iter().map(|s| s / sum * total as f64).collect();
    let mut shots: Vec<u64> = ideal.iter().map(|x| x.floor() as u64).collect();
    let mut left = total - shots.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..score.len()).filter(|&p| score[p] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &p in order.iter().cycle() {
        if left == 0 {
            break;
        }
        shots[p] += 1;
        left -= 1;
    }
    shots
}

/// Per-channel coefficient data entering the variance bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorms {
    pub shifts: usize,
    pub norm1: f64,
    pub norm2: f64,
}

/// Variance bound of a shift-rule derivative estimate from `total` shots of a Pauli
/// observable: `(ΠM_a)(Π‖c_a‖₂²)/N` for uniform allocation and `(Π‖c_a‖₁)²/N` for
/// optimal allocation.
pub fn variance_bound(channels: &[ChannelNorms], total: u64, mode: AllocationMode) -> f64 {
    let n = total as f64;
    match mode {
        AllocationMode::Uniform => {
            let m: f64 = channels.iter().map(|c| c.shifts as f64).product();
            let c2: f64 = channels.iter().map(|c| c.norm2 * c.norm2).product();
            m * c2 / n
        }
        AllocationMode::Optimal => channels.iter().map(|c| c.norm1).product::<f64>().powi(2) / n,
    }
}

/// Norms of the coefficients a multi-index uses, one entry per channel in its support.
pub fn channel_norms(rules: &[ShiftRule], beta: &MultiIndex) -> Result<Vec<ChannelNorms>> {
    beta.support()
        .into_iter()
        .map(|a| {
            let c = rules[a].coefficients(beta.beta()[a])?;
            Ok(ChannelNorms { shifts: rules[a].len(), norm1: c.norm1, norm2: c.norm2 })
        })
        .collect()
}

/// Shot-noise reconstruction and its propagated standard error per time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyResponse {
    pub series: ResponseSeries,
    pub std_error: Vec<f64>,
}

/// Shift-rule reconstruction with every configuration estimated from `shots[p]` shots.
///
/// `shots` is indexed like [`configurations`]; the seed of cell `(k, p)` is substream
/// `k·P + p` of `seed`.
pub fn noisy_response(
    dynamics: &Dynamics,
    rules: &[ShiftRule],
    a: &OperatorSum,
    t_grid: &[f64],
    beta: &MultiIndex,
    shots: &[u64],
    seed: u64,
) -> Result<NoisyResponse> {
    let cfgs = configurations(rules, beta)?;
    if shots.len() != cfgs.len() {
        return Err(invalid(format!("plan covers {} of {} configurations", shots.len(), cfgs.len())));
    }
    let per_t: Vec<(f64, f64)> = t_grid
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut value = 0.0;
            let mut var = 0.0;
            for (p, c) in cfgs.iter().enumerate() {
                if shots[p] == 0 {
                    continue;
                }
                let state = dynamics.state(&c.etas, t)?;
                let mut rng = substream(seed, (k * cfgs.len() + p) as u64);
                let est = sample_with(a, &state, shots[p], &mut rng)?;
                value += c.weight * est.value;
                var += c.weight * c.weight * est.std_error * est.std_error;
            }
            Ok((value, var.sqrt()))
        })
        .collect::<Result<_>>()?;
    Ok(NoisyResponse {
        series: ResponseSeries {
            beta: beta.clone(),
            times: t_grid.to_vec(),
            values: per_t.iter().map(|x| x.0).collect(),
            configurations: cfgs.len(),
        },
        std_error: per_t.iter().map(|x| x.1).collect(),
    })
}
