//! Phase configuration of the surface from channel estimates, and the
//! achievable rate of the resulting cascade.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::sampling::PhaseSet;
use crate::{CVector, Error, Result, C64};

/// Largest candidate count [`exhaustive_search`] accepts by default.
pub const DEFAULT_SEARCH_BUDGET: u128 = 1 << 24;

const UNIT_MODULUS_TOL: f64 = 1e-12;
const TIE_TOL: f64 = 1e-12;
const CHUNK: usize = 1 << 12;

/// Reflection coefficients `φ`, one unit-modulus entry per element.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    coefficients: CVector,
}

impl PhaseConfig {
    pub fn new(coefficients: CVector) -> Result<Self> {
        if let Some((i, v)) = coefficients
            .iter()
            .enumerate()
            .find(|(_, v)| !((v.norm() - 1.0).abs() <= UNIT_MODULUS_TOL))
        {
            return Err(Error::domain(format!("coefficient {i} has modulus {}", v.norm())));
        }
        Ok(Self { coefficients })
    }

    /// Configuration whose entry `n` is `phases.values()[indices[n]]`.
    pub fn from_indices(phases: &PhaseSet, indices: &[usize]) -> Result<Self> {
        let values = phases.values();
        if let Some(&bad) = indices.iter().find(|&&i| i >= values.len()) {
            return Err(Error::domain(format!("phase index {bad} outside alphabet of {}", values.len())));
        }
        Ok(Self {
            coefficients: CVector::from_iterator(indices.len(), indices.iter().map(|&i| values[i])),
        })
    }

    pub fn coefficients(&self) -> &CVector {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Alphabet index of every entry, or `None` if some entry is not a member.
    pub fn indices(&self, phases: &PhaseSet) -> Option<Vec<usize>> {
        self.coefficients.iter().map(|&v| phases.index_of(v, 1e-9)).collect()
    }
}

/// `Σ_n h2[n]·h1[n]·φ[n]`
pub fn effective_gain(h1: &CVector, h2: &CVector, config: &PhaseConfig) -> Result<C64> {
    Error::check_dim("h2 vs h1", h1.len(), h2.len())?;
    Error::check_dim("configuration vs channel", h1.len(), config.len())?;
    Ok(h1
        .iter()
        .zip(h2.iter())
        .zip(config.coefficients.iter())
        .map(|((a, b), p)| a * b * p)
        .sum())
}

/// `log2(1 + snr·|g|²)` in bits/s/Hz.
pub fn achievable_rate(h1: &CVector, h2: &CVector, config: &PhaseConfig, snr_linear: f64) -> Result<f64> {
    if !(snr_linear > 0.0 && snr_linear.is_finite()) {
        return Err(Error::domain(format!("snr must be positive, got {snr_linear}")));
    }
    let g = effective_gain(h1, h2, config)?;
    Ok((snr_linear * g.norm_sqr()).ln_1p() / std::f64::consts::LN_2)
}

/// Continuous phases `θ_n = −arg(ĥ1[n]·ĥ2[n])` that co-phase every term of
/// the cascade. A zero product gets `θ_n = 0`.
pub fn closed_form_phases(h1_hat: &CVector, h2_hat: &CVector) -> Result<PhaseConfig> {
    Error::check_dim("h2 vs h1", h1_hat.len(), h2_hat.len())?;
    let coefficients = h1_hat.zip_map(h2_hat, |a, b| {
        let p = a * b;
        if p == C64::new(0.0, 0.0) {
            C64::new(1.0, 0.0)
        } else {
            C64::from_polar(1.0, -p.arg())
        }
    });
    Ok(PhaseConfig { coefficients })
}

fn angle_in_turn(v: C64) -> f64 {
    v.arg().rem_euclid(2.0 * PI)
}

/// Maps every entry to the nearest alphabet member by angle. Equidistant
/// members resolve to the smaller angle in `[0, 2π)`.
pub fn quantize_phases(config: &PhaseConfig, phases: &PhaseSet) -> PhaseConfig {
    let step = phases.step();
    let coefficients = config.coefficients.map(|v| {
        let theta = angle_in_turn(v);
        let mut best = (0usize, f64::INFINITY);
        for k in 0..phases.len() {
            let diff = (theta - k as f64 * step).rem_euclid(2.0 * PI);
            let dist = diff.min(2.0 * PI - diff);
            if dist < best.1 - TIE_TOL {
                best = (k, dist);
            }
        }
        phases.values()[best.0]
    });
    PhaseConfig { coefficients }
}

/// Outcome of [`exhaustive_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub config: PhaseConfig,
    pub indices: Vec<usize>,
    pub gain: C64,
    /// Number of configurations evaluated, `(2^b)^N`.
    pub candidates: u128,
}

/// `(2^b)^N`, saturating.
pub fn candidate_count(phases: &PhaseSet, n: usize) -> u128 {
    let exponent = (phases.bits() as u128).saturating_mul(n as u128);
    if exponent >= 128 {
        u128::MAX
    } else {
        1u128 << exponent
    }
}

/// [`exhaustive_search_with_budget`] with [`DEFAULT_SEARCH_BUDGET`].
pub fn exhaustive_search(h1_hat: &CVector, h2_hat: &CVector, phases: &PhaseSet) -> Result<SearchResult> {
    exhaustive_search_with_budget(h1_hat, h2_hat, phases, DEFAULT_SEARCH_BUDGET)
}

/// Evaluates every feasible configuration and keeps the largest `|g|²`.
///
/// Candidate `k` has alphabet indices given by the base-`2^b` digits of `k`,
/// element 0 most significant, so ascending `k` is lexicographic order of the
/// index vectors. Equal gains keep the smaller `k`; the parallel reduction
/// preserves that regardless of how chunks are scheduled.
pub fn exhaustive_search_with_budget(
    h1_hat: &CVector,
    h2_hat: &CVector,
    phases: &PhaseSet,
    budget: u128,
) -> Result<SearchResult> {
    Error::check_dim("h2 vs h1", h1_hat.len(), h2_hat.len())?;
    let n = h1_hat.len();
    if n == 0 {
        return Err(Error::domain("exhaustive search over an empty surface"));
    }
    let required = candidate_count(phases, n);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let total = required as usize;
    let bits = phases.bits();
    let mask = (1usize << bits) - 1;
    let products: Vec<C64> = h1_hat.iter().zip(h2_hat.iter()).map(|(a, b)| a * b).collect();
    let alphabet = phases.values();

    let gain_of = |k: usize| -> C64 {
        let mut g = C64::new(0.0, 0.0);
        for (e, p) in products.iter().enumerate() {
            let digit = (k >> (bits as usize * (n - 1 - e))) & mask;
            g += p * alphabet[digit];
        }
        g
    };

    let chunk_best: Vec<(usize, f64, C64)> = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(total);
            let mut best = (start, f64::NEG_INFINITY, C64::new(0.0, 0.0));
            for k in start..end {
                let g = gain_of(k);
                let power = g.norm_sqr();
                if power > best.1 {
                    best = (k, power, g);
                }
            }
            best
        })
        .collect();
    let (k, _, gain) = chunk_best
        .into_iter()
        .reduce(|acc, cand| if cand.1 > acc.1 { cand } else { acc })
        .expect("at least one chunk");

    let indices: Vec<usize> = (0..n).map(|e| (k >> (bits as usize * (n - 1 - e))) & mask).collect();
    Ok(SearchResult {
        config: PhaseConfig::from_indices(phases, &indices)?,
        indices,
        gain,
        candidates: required,
    })
}
