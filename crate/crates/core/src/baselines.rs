//! Least-squares and orthogonal matching pursuit reference estimators.
//!
//! Both work on the stacked linear model of the single-RF measurements: slot
//! `t` contributes one scalar `r_t = q_t · [W·D]_{s_t,:} · z + noise`.

use nalgebra::SVD;

use crate::channel::BeamspaceDictionary;
use crate::sampling::{ConfigCodebook, ObservationMatrix, SamplingSchedule, TrainingSequence};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Relative singular-value cutoff of the pseudo-inverse.
pub const PINV_RCOND: f64 = 1e-10;

/// Linear model `observations ≈ sensing · z`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedMeasurements {
    /// `T × N`; row `t` is `q_t · [W·D]_{selection[t], :}`.
    pub sensing: CMatrix,
    pub observations: CVector,
}

pub fn stack(
    obs: &ObservationMatrix,
    codebook: &ConfigCodebook,
    schedule: &SamplingSchedule,
    dictionary: &BeamspaceDictionary,
    pilots: &TrainingSequence,
) -> Result<StackedMeasurements> {
    Error::check_dim("schedule length vs observations", obs.t(), schedule.t())?;
    Error::check_dim("pilots vs schedule", schedule.t(), pilots.len())?;
    Error::check_dim("codebook rows vs schedule", codebook.m(), schedule.m())?;
    Error::check_dim("codebook columns vs dictionary", dictionary.matrix().nrows(), codebook.n())?;
    if obs.schedule() != schedule {
        return Err(Error::domain("observations were produced by a different schedule"));
    }
    let b = codebook.matrix() * dictionary.matrix();
    let n = b.ncols();
    let mut sensing = CMatrix::zeros(schedule.t(), n);
    for (t, &row) in schedule.selection().iter().enumerate() {
        let q = pilots.symbols()[t];
        for col in 0..n {
            sensing[(t, col)] = q * b[(row, col)];
        }
    }
    Ok(StackedMeasurements {
        sensing,
        observations: obs.values().clone(),
    })
}

fn svd_of(matrix: &CMatrix) -> Result<SVD<C64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(matrix.clone(), true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::domain("singular value decomposition did not converge"))
}

/// `A⁺·y` through the SVD, dropping singular values below
/// `rcond · σ_max`.
pub fn pinv_solve(a: &CMatrix, y: &CVector, rcond: f64) -> Result<CVector> {
    Error::check_dim("right-hand side", a.nrows(), y.len())?;
    let svd = svd_of(a)?;
    let sigma_max = svd.singular_values.max();
    if !(sigma_max > 0.0) {
        return Err(Error::domain("least squares on an all-zero sensing matrix"));
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut x = CVector::zeros(a.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > rcond * sigma_max {
            let coeff = u.column(i).dotc(y) / s;
            x += v_t.row(i).adjoint() * coeff;
        }
    }
    Ok(x)
}

/// Minimum-norm least-squares estimate of `z`.
pub fn ls_estimate(m: &StackedMeasurements) -> Result<CVector> {
    pinv_solve(&m.sensing, &m.observations, PINV_RCOND)
}

/// Result of OMP including the selection order and per-iteration residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    pub estimate: CVector,
    pub support: Vec<usize>,
    pub residual_norms: Vec<f64>,
}

/// Orthogonal matching pursuit with `sparsity` atoms.
pub fn omp_estimate(m: &StackedMeasurements, sparsity: usize) -> Result<CVector> {
    omp_detailed(m, sparsity).map(|r| r.estimate)
}

/// Picks, at each step, the column with the largest absolute correlation
/// `|a_jᴴ r| / ‖a_j‖` with the current residual, then re-fits all chosen
/// columns by least squares.
pub fn omp_detailed(m: &StackedMeasurements, sparsity: usize) -> Result<OmpResult> {
    let (t, n) = m.sensing.shape();
    Error::check_dim("observations vs sensing rows", t, m.observations.len())?;
    if sparsity == 0 || sparsity > t.min(n) {
        return Err(Error::domain(format!(
            "sparsity must be within 1..={}, got {sparsity}",
            t.min(n)
        )));
    }
    let col_norms: Vec<f64> = (0..n).map(|j| m.sensing.column(j).norm()).collect();
    let mut support: Vec<usize> = Vec::with_capacity(sparsity);
    let mut residual = m.observations.clone();
    let mut coeffs = CVector::zeros(0);
    let mut residual_norms = Vec::with_capacity(sparsity);

    for _ in 0..sparsity {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..n).filter(|j| !support.contains(j) && col_norms[*j] > 0.0) {
            let score = m.sensing.column(j).dotc(&residual).norm() / col_norms[j];
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let Some((j, _)) = best else { break };
        support.push(j);

        let sub = m.sensing.select_columns(support.iter());
        coeffs = pinv_solve(&sub, &m.observations, PINV_RCOND)?;
        residual = &m.observations - &sub * &coeffs;
        residual_norms.push(residual.norm());
    }

    let mut estimate = CVector::zeros(n);
    for (k, &j) in support.iter().enumerate() {
        estimate[j] = coeffs[k];
    }
    Ok(OmpResult {
        estimate,
        support,
        residual_norms,
    })
}
