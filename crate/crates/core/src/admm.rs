//! Joint low-rank / sparse channel estimator.
//!
//! The noiseless training matrix `Ỹ = W·h·q` is rank one, and `h = D·z`
//! with `z` sparse. The estimator solves
//!
//! ```text
//! min  τ_R‖Ỹ‖_* + τ_Z‖z‖_1 + ½‖C‖²_F + ½‖R_Ω − Ω∘Ỹ‖²_F
//! s.t. Ỹ = X,  C = X − W·D·z·q
//! ```
//!
//! by ADMM with penalty `γ`, alternating singular value thresholding for
//! `Ỹ`, an entrywise-diagonal solve for `X`, proximal-gradient steps for `z`
//! and a closed form for `C`. `‖z‖_1` is the separable norm
//! `Σ |Re z_i| + |Im z_i|`, matching the real/imaginary soft threshold.

use nalgebra::{Complex, SVD};

use crate::channel::BeamspaceDictionary;
use crate::sampling::{ConfigCodebook, NoiseModel, ObservationMatrix, TrainingSequence};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Solver parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmParams {
    /// Nuclear-norm weight `τ_R`.
    pub tau_r: f64,
    /// ℓ1 weight `τ_Z`.
    pub tau_z: f64,
    /// ADMM penalty / step size, in `(0, 1)`.
    pub gamma: f64,
    pub i_max: usize,
    /// Both primal residuals below this stop the iteration early.
    pub tol: f64,
    /// Proximal-gradient steps per `z` update.
    pub ista_steps: usize,
}

pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_I_MAX: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_ISTA_STEPS: usize = 20;
/// Multiplier of the noise term in [`default_weight`].
pub const NOISE_WEIGHT: f64 = 2.0;

impl AdmmParams {
    pub fn new(tau_r: f64, tau_z: f64, gamma: f64, i_max: usize, tol: f64, ista_steps: usize) -> Result<Self> {
        let params = Self {
            tau_r,
            tau_z,
            gamma,
            i_max,
            tol,
            ista_steps,
        };
        params.validate()?;
        Ok(params)
    }

    /// Default parameters with data-relative weights, see [`default_weight`].
    pub fn with_default_weights(
        obs: &ObservationMatrix,
        codebook: &ConfigCodebook,
        noise: NoiseModel,
        n_paths: usize,
    ) -> Result<Self> {
        let tau = default_weight(obs, measurement_noise_variance(codebook, noise), n_paths);
        Self::new(tau, tau, DEFAULT_GAMMA, DEFAULT_I_MAX, DEFAULT_TOL, DEFAULT_ISTA_STEPS)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::domain(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.tau_r > 0.0 && self.tau_r.is_finite()) || !(self.tau_z > 0.0 && self.tau_z.is_finite()) {
            return Err(Error::domain(format!(
                "weights must be positive, got tau_r={} tau_z={}",
                self.tau_r, self.tau_z
            )));
        }
        if self.i_max == 0 || self.ista_steps == 0 {
            return Err(Error::domain("i_max and ista_steps must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::domain(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Noise variance of one RF-chain sample: mean squared row norm of `W`
/// times the per-element noise variance.
pub fn measurement_noise_variance(codebook: &ConfigCodebook, noise: NoiseModel) -> f64 {
    match noise {
        NoiseModel::Noiseless => 0.0,
        NoiseModel::Awgn { snr_linear } => codebook.matrix().norm_squared() / codebook.m() as f64 / snr_linear,
    }
}

/// `√N_p · (0.1 · ‖R_Ω‖_F / √(MT) + NOISE_WEIGHT · σ / √M)` with `σ²` the
/// per-sample noise variance, used for both `τ_R` and `τ_Z` unless
/// overridden. Falls back to a tiny positive value for all-zero noiseless
/// observations.
pub fn default_weight(obs: &ObservationMatrix, noise_variance: f64, n_paths: usize) -> f64 {
    let m = obs.m() as f64;
    let scale = 0.1 * obs.frobenius_norm() / (m * obs.t() as f64).sqrt() + NOISE_WEIGHT * (noise_variance.max(0.0) / m).sqrt();
    let tau = scale * (n_paths.max(1) as f64).sqrt();
    if tau > 0.0 {
        tau
    } else {
        f64::MIN_POSITIVE
    }
}

/// ADMM iterates. All matrices are `M × T`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub y_tilde: CMatrix,
    pub x: CMatrix,
    pub c: CMatrix,
    pub z: CVector,
    pub v1: CMatrix,
    pub v2: CMatrix,
    pub iteration: usize,
}

impl AdmmState {
    pub fn zeros(m: usize, t: usize, n: usize) -> Self {
        Self {
            y_tilde: CMatrix::zeros(m, t),
            x: CMatrix::zeros(m, t),
            c: CMatrix::zeros(m, t),
            z: CVector::zeros(n),
            v1: CMatrix::zeros(m, t),
            v2: CMatrix::zeros(m, t),
            iteration: 0,
        }
    }
}

/// Result of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub z_hat: CVector,
    /// `D · z_hat`
    pub h_hat: CVector,
    pub iterations_used: usize,
    /// `(‖X − Ỹ‖_F, ‖C − X + B·z·q‖_F)` after each iteration.
    pub primal_residuals: Vec<(f64, f64)>,
    pub objective_trace: Vec<f64>,
}

/// `B = W·D` together with what the `z` update needs from it.
#[derive(Debug, Clone)]
pub struct BeamspaceOperator {
    b: CMatrix,
    gram: CMatrix,
    lipschitz: f64,
    pilots: CVector,
    pilot_energy: f64,
}

impl BeamspaceOperator {
    pub fn new(codebook: &ConfigCodebook, dictionary: &BeamspaceDictionary, pilots: &TrainingSequence) -> Result<Self> {
        Error::check_dim("codebook columns vs dictionary", dictionary.matrix().nrows(), codebook.n())?;
        let b = codebook.matrix() * dictionary.matrix();
        Self::from_matrix(b, pilots)
    }

    /// Uses an explicit `M × N` matrix in place of `W·D`.
    pub fn from_matrix(b: CMatrix, pilots: &TrainingSequence) -> Result<Self> {
        let gram = b.ad_mul(&b);
        let sigma_max = b.singular_values().max();
        let lipschitz = sigma_max * sigma_max;
        if !(lipschitz > 0.0) || !lipschitz.is_finite() {
            return Err(Error::domain("sensing operator W·D is zero; step size undefined"));
        }
        Ok(Self {
            b,
            gram,
            lipschitz,
            pilots: pilots.symbols().clone(),
            pilot_energy: pilots.energy(),
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.b
    }

    /// Largest eigenvalue of `BᴴB`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn pilots(&self) -> &CVector {
        &self.pilots
    }

    /// `B·z·q` as an `M × T` matrix.
    pub fn synthesize(&self, z: &CVector) -> CMatrix {
        (&self.b * z) * self.pilots.transpose()
    }
}

fn ensure_finite(what: &str, values: impl IntoIterator<Item = C64>) -> Result<()> {
    if values.into_iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} has non-finite entries")))
    }
}

fn thin_svd(matrix: CMatrix) -> Result<SVD<C64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(matrix, true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::domain("singular value decomposition did not converge"))
}

/// Singular value thresholding, the proximal operator of `threshold·‖·‖_*`.
pub fn svt(matrix: &CMatrix, threshold: f64) -> Result<CMatrix> {
    svt_with_norm(matrix, threshold).map(|(out, _)| out)
}

/// [`svt`] that also returns the nuclear norm of its output.
fn svt_with_norm(matrix: &CMatrix, threshold: f64) -> Result<(CMatrix, f64)> {
    ensure_finite("svt input", matrix.iter().copied())?;
    if !(threshold >= 0.0) {
        return Err(Error::domain(format!("threshold must be non-negative, got {threshold}")));
    }
    let (rows, cols) = matrix.shape();
    if rows == 0 || cols == 0 {
        return Ok((matrix.clone(), 0.0));
    }
    let svd = thin_svd(matrix.clone())?;
    let shrunk = svd.singular_values.map(|s| (s - threshold).max(0.0));
    let (u, v_t) = (svd.u.as_ref().expect("u requested"), svd.v_t.as_ref().expect("v_t requested"));
    let mut out = CMatrix::zeros(rows, cols);
    for i in (0..shrunk.len()).filter(|&i| shrunk[i] > 0.0) {
        let scaled = u.column(i) * Complex::new(shrunk[i], 0.0);
        out.ger(Complex::new(1.0, 0.0), &scaled, &v_t.row(i).transpose(), Complex::new(1.0, 0.0));
    }
    Ok((out, shrunk.sum()))
}

fn shrink(v: f64, threshold: f64) -> f64 {
    v.signum() * (v.abs() - threshold).max(0.0)
}

/// Entrywise complex soft threshold, applied separately to the real and
/// imaginary parts: the proximal operator of `threshold·Σ(|Re|+|Im|)`.
pub fn soft_threshold(xi: &CVector, threshold: f64) -> CVector {
    xi.map(|v| Complex::new(shrink(v.re, threshold), shrink(v.im, threshold)))
}

/// `Σ |Re z_i| + |Im z_i|`
pub fn l1_norm(z: &CVector) -> f64 {
    z.iter().map(|v| v.re.abs() + v.im.abs()).sum()
}

/// Minimises the Lagrangian over `X` given `synthesized = B·z·q`. The
/// system is diagonal: entry `(m, t)` has coefficient `Ω_{mt} + 2γ` and
/// right-hand side `γỸ + R_Ω + V⁽¹⁾ + V⁽²⁾ + γ(C + B·z·q)`.
pub fn x_update(state: &AdmmState, obs: &ObservationMatrix, synthesized: &CMatrix, params: &AdmmParams) -> CMatrix {
    let gamma = C64::new(params.gamma, 0.0);
    let mut rhs = &state.y_tilde * gamma + &state.v1 + &state.v2 + (&state.c + synthesized) * gamma;
    for (t, &row) in obs.schedule().selection().iter().enumerate() {
        rhs[(row, t)] += obs.values()[t];
    }
    let two_gamma = 2.0 * params.gamma;
    rhs.zip_map(&obs.schedule().mask(), |v, m| v / (m + two_gamma))
}

/// Proximal-gradient minimisation of
/// `τ_Z‖z‖_1 + (γ/2)‖B·z·q − G‖²_F` with `G = X − C − V⁽²⁾/γ`, warm-started
/// from `state.z`.
pub fn z_update(state: &AdmmState, op: &BeamspaceOperator, params: &AdmmParams) -> CVector {
    let gamma = params.gamma;
    let target = &state.x - &state.c - &state.v2 / C64::new(gamma, 0.0);
    let correlation = op.b.ad_mul(&(target * op.pilots.conjugate()));
    let step = 1.0 / (gamma * op.pilot_energy * op.lipschitz);
    let threshold = step * params.tau_z;
    let mut z = state.z.clone();
    for _ in 0..params.ista_steps {
        let grad = (&op.gram * &z * C64::new(op.pilot_energy, 0.0) - &correlation) * C64::new(gamma, 0.0);
        z = soft_threshold(&(&z - grad * C64::new(step, 0.0)), threshold);
    }
    z
}

/// Value of the splitting objective at the current iterates.
pub fn objective(state: &AdmmState, obs: &ObservationMatrix, nuclear_norm: f64, params: &AdmmParams) -> f64 {
    let misfit: f64 = obs
        .schedule()
        .selection()
        .iter()
        .enumerate()
        .map(|(t, &row)| (obs.values()[t] - state.y_tilde[(row, t)]).norm_sqr())
        .sum();
    params.tau_r * nuclear_norm + params.tau_z * l1_norm(&state.z) + 0.5 * state.c.norm_squared() + 0.5 * misfit
}

/// Primal residuals and the nuclear norm of `Ỹ` after one [`step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub residuals: (f64, f64),
    pub nuclear_norm: f64,
}

/// One ADMM iteration: `Ỹ`, `X`, `z`, `C`, then both multipliers.
pub fn step(
    state: &mut AdmmState,
    obs: &ObservationMatrix,
    op: &BeamspaceOperator,
    params: &AdmmParams,
) -> Result<StepReport> {
    let gamma = C64::new(params.gamma, 0.0);
    let inv_gamma = C64::new(1.0 / params.gamma, 0.0);
    let c_scale = C64::new(params.gamma / (1.0 + params.gamma), 0.0);

    let (y_tilde, nuclear_norm) = svt_with_norm(&(&state.x - &state.v1 * inv_gamma), params.tau_r / params.gamma)?;
    state.y_tilde = y_tilde;
    state.x = x_update(state, obs, &op.synthesize(&state.z), params);
    state.z = z_update(state, op, params);
    let bzq = op.synthesize(&state.z);
    state.c = (&state.x - &bzq - &state.v2 * inv_gamma) * c_scale;

    let r1 = &state.x - &state.y_tilde;
    let r2 = &state.c - &state.x + &bzq;
    // V⁽¹⁾ multiplies Ỹ − X in the Lagrangian
    state.v1 -= &r1 * gamma;
    state.v2 += &r2 * gamma;
    state.iteration += 1;
    ensure_finite("ADMM iterate", state.z.iter().copied())?;
    Ok(StepReport {
        residuals: (r1.norm(), r2.norm()),
        nuclear_norm,
    })
}

/// Runs the ADMM iterations and returns the beamspace estimate.
pub fn run(
    obs: &ObservationMatrix,
    codebook: &ConfigCodebook,
    dictionary: &BeamspaceDictionary,
    pilots: &TrainingSequence,
    params: &AdmmParams,
) -> Result<EstimateResult> {
    params.validate()?;
    Error::check_dim("codebook rows vs observations", codebook.m(), obs.m())?;
    Error::check_dim("pilots vs observations", obs.t(), pilots.len())?;
    ensure_finite("observations", obs.values().iter().copied())?;
    let op = BeamspaceOperator::new(codebook, dictionary, pilots)?;
    let mut state = AdmmState::zeros(obs.m(), obs.t(), codebook.n());

    let mut primal_residuals = Vec::with_capacity(params.i_max);
    let mut objective_trace = Vec::with_capacity(params.i_max);
    while state.iteration < params.i_max {
        let report = step(&mut state, obs, &op, params)?;
        primal_residuals.push(report.residuals);
        objective_trace.push(objective(&state, obs, report.nuclear_norm, params));
        if report.residuals.0 < params.tol && report.residuals.1 < params.tol {
            break;
        }
    }

    let h_hat = dictionary.to_spatial(&state.z)?;
    Ok(EstimateResult {
        z_hat: state.z,
        h_hat,
        iterations_used: state.iteration,
        primal_residuals,
        objective_trace,
    })
}

/// `‖z − ẑ‖ / ‖z‖` (ratio of norms, not squared).
pub fn nmse(z_true: &CVector, z_hat: &CVector) -> Result<f64> {
    Error::check_dim("nmse operands", z_true.len(), z_hat.len())?;
    let reference = z_true.norm();
    if !(reference > 0.0) {
        return Err(Error::domain("NMSE undefined for an all-zero reference"));
    }
    Ok((z_true - z_hat).norm() / reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{assemble_channel, dft_dictionary, draw_paths, RisGeometry};
    use crate::sampling::{draw_codebook, draw_schedule, phase_set, simulate_training, SamplingSchedule};
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = rng_from_seed(seed);
        CMatrix::from_fn(rows, cols, |_, _| {
            Complex::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        })
    }

    fn params(tau: f64, gamma: f64) -> AdmmParams {
        AdmmParams {
            tau_r: tau,
            tau_z: tau,
            gamma,
            i_max: DEFAULT_I_MAX,
            tol: DEFAULT_TOL,
            ista_steps: DEFAULT_ISTA_STEPS,
        }
    }

    struct Instance {
        obs: ObservationMatrix,
        codebook: ConfigCodebook,
        dictionary: BeamspaceDictionary,
        pilots: TrainingSequence,
        z: CVector,
    }

    fn instance(n_h: usize, n_v: usize, m: usize, t: usize, noise: NoiseModel, seed: u64) -> Instance {
        let g = RisGeometry::new(n_h, n_v).unwrap();
        let dictionary = dft_dictionary(g);
        let ch = assemble_channel(draw_paths(&mut rng_from_seed(seed), 2, 1.0).unwrap(), g, &dictionary).unwrap();
        let codebook = draw_codebook(&mut rng_from_seed(seed + 1), m, g, &phase_set(4).unwrap()).unwrap();
        let schedule = draw_schedule(&mut rng_from_seed(seed + 2), m, t).unwrap();
        let pilots = TrainingSequence::qpsk(&mut rng_from_seed(seed + 3), t).unwrap();
        let obs = simulate_training(&ch, &codebook, &schedule, &pilots, noise, &mut rng_from_seed(seed + 4)).unwrap();
        Instance {
            obs,
            codebook,
            dictionary,
            pilots,
            z: ch.beamspace,
        }
    }

    #[test]
    fn svt_diagonal_example() {
        let a = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::new(5.0, 0.0), C64::new(1.0, 0.0)]));
        let out = svt(&a, 2.0).unwrap();
        let expected = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::new(3.0, 0.0), C64::new(0.0, 0.0)]));
        assert!((out - expected).norm() < 1e-12);
        assert_eq!(svt(&CMatrix::zeros(3, 4), 1.0).unwrap(), CMatrix::zeros(3, 4));
        assert!(svt(&a, -1.0).is_err());
        let mut bad = a.clone();
        bad[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(svt(&bad, 1.0).is_err());
    }

    #[test]
    fn svt_invariants() {
        for seed in 0..20 {
            let a = random_matrix(5, 7, seed);
            let b = random_matrix(5, 7, seed + 100);
            let tau = 0.5 + seed as f64 * 0.1;
            let (sa, sb) = (svt(&a, tau).unwrap(), svt(&b, tau).unwrap());
            assert!((&sa - &sb).norm() <= (&a - &b).norm() + 1e-12);

            let sigma_in = a.singular_values();
            let mut sigma_out = sa.singular_values().as_slice().to_vec();
            sigma_out.sort_by(|x, y| y.total_cmp(x));
            assert!(sigma_out.iter().sum::<f64>() <= sigma_in.sum() + 1e-12);
            for (o, i) in sigma_out.iter().zip(sigma_in.iter()) {
                assert!((o - (i - tau).max(0.0)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn soft_threshold_examples() {
        let v = CVector::from_vec(vec![C64::new(3.0, 4.0), C64::new(0.5, -0.2), C64::new(-2.0, 0.0)]);
        let out = soft_threshold(&v, 1.0);
        assert_eq!(out[0], C64::new(2.0, 3.0));
        assert_eq!(out[1], C64::new(0.0, 0.0));
        assert_eq!(out[2], C64::new(-1.0, 0.0));
        assert_eq!(l1_norm(&v), 7.0 + 0.7 + 2.0);
    }

    proptest! {
        #[test]
        fn soft_threshold_shrinks(re in -10.0..10.0f64, im in -10.0..10.0f64, tau in 0.0..5.0f64) {
            let v = CVector::from_element(1, C64::new(re, im));
            prop_assert_eq!(soft_threshold(&v, 0.0), v.clone());
            let out = soft_threshold(&v, tau)[0];
            prop_assert!(out.re.abs() <= re.abs() && out.im.abs() <= im.abs());
            prop_assert!(out.re * re >= 0.0 && out.im * im >= 0.0);
        }
    }

    #[test]
    fn x_update_entrywise_division() {
        let schedule = SamplingSchedule::new(vec![1, 0, 1], 2).unwrap();
        let obs = ObservationMatrix::new(
            CVector::from_vec(vec![C64::new(1.0, 1.0), C64::new(-2.0, 0.5), C64::new(0.0, 3.0)]),
            schedule,
        )
        .unwrap();
        let mut state = AdmmState::zeros(2, 3, 4);
        state.y_tilde = random_matrix(2, 3, 1);
        state.v1 = random_matrix(2, 3, 2);
        state.v2 = random_matrix(2, 3, 3);
        state.c = random_matrix(2, 3, 4);
        let synthesized = random_matrix(2, 3, 5);
        let p = params(0.1, 0.3);
        let x = x_update(&state, &obs, &synthesized, &p);
        let g = C64::new(0.3, 0.0);
        let rhs = &state.y_tilde * g + &state.v1 + &state.v2 + (&state.c + &synthesized) * g + obs.to_dense();
        let mask = obs.schedule().mask();
        for i in 0..2 {
            for t in 0..3 {
                let denom = if mask[(i, t)] == 1.0 { 1.0 + 0.6 } else { 0.6 };
                assert!((x[(i, t)] - rhs[(i, t)] / denom).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn z_update_large_threshold_gives_zero() {
        let inst = instance(2, 2, 6, 5, NoiseModel::Noiseless, 7);
        let op = BeamspaceOperator::new(&inst.codebook, &inst.dictionary, &inst.pilots).unwrap();
        let mut state = AdmmState::zeros(6, 5, 4);
        state.x = random_matrix(6, 5, 9);
        let gamma = 0.4;
        let corr = op.matrix().ad_mul(&(&state.x * op.pilots().conjugate()));
        let bound = gamma * corr.iter().map(|v| v.norm()).fold(0.0, f64::max) * 1e3;
        let mut p = params(bound, gamma);
        p.ista_steps = 5;
        assert_eq!(z_update(&state, &op, &p), CVector::zeros(4));
    }

    #[test]
    fn z_update_recovers_least_squares_fixed_point() {
        let inst = instance(2, 2, 8, 6, NoiseModel::Noiseless, 3);
        let op = BeamspaceOperator::new(&inst.codebook, &inst.dictionary, &inst.pilots).unwrap();
        let z_star = random_matrix(4, 1, 12).column(0).into_owned();
        let mut state = AdmmState::zeros(8, 6, 4);
        state.x = op.synthesize(&z_star);
        let mut p = params(0.0, 0.5);
        p.ista_steps = 20_000;
        let z = z_update(&state, &op, &p);
        assert!((z - z_star).norm() < 1e-4);
    }

    #[test]
    fn zero_operator_rejected() {
        let q = TrainingSequence::constant(3).unwrap();
        assert!(matches!(BeamspaceOperator::from_matrix(CMatrix::zeros(4, 4), &q), Err(Error::Domain(_))));
    }

    #[test]
    fn params_validation() {
        assert!(AdmmParams::new(1.0, 1.0, 1.0, 10, 1e-6, 1).is_err());
        assert!(AdmmParams::new(0.0, 1.0, 0.5, 10, 1e-6, 1).is_err());
        assert!(AdmmParams::new(1.0, 1.0, 0.5, 0, 1e-6, 1).is_err());
        assert!(AdmmParams::new(1.0, 1.0, 0.5, 10, 0.0, 1).is_err());
        assert!(AdmmParams::new(1.0, 1.0, 0.5, 10, 1e-6, 1).is_ok());
    }

    #[test]
    fn default_weight_grows_with_noise() {
        let inst = instance(4, 2, 8, 12, NoiseModel::Noiseless, 5);
        let clean = AdmmParams::with_default_weights(&inst.obs, &inst.codebook, NoiseModel::Noiseless, 2).unwrap();
        let expected = 0.1 * inst.obs.frobenius_norm() / (8.0f64 * 12.0).sqrt() * 2f64.sqrt();
        assert!((clean.tau_r - expected).abs() < 1e-15);
        let noisy = AdmmParams::with_default_weights(&inst.obs, &inst.codebook, NoiseModel::from_snr_db(0.0), 2).unwrap();
        // unit-modulus codebook rows: per-sample noise variance N / snr = 8
        assert!((noisy.tau_z - expected - NOISE_WEIGHT * (8.0f64 / 8.0).sqrt() * 2f64.sqrt()).abs() < 1e-12);
        let empty = ObservationMatrix::new(CVector::zeros(12), inst.obs.schedule().clone()).unwrap();
        assert!(default_weight(&empty, 0.0, 2) > 0.0);
    }

    #[test]
    fn run_is_deterministic_and_consistent() {
        let inst = instance(4, 2, 8, 24, NoiseModel::from_snr_db(20.0), 11);
        let p = AdmmParams::with_default_weights(&inst.obs, &inst.codebook, NoiseModel::from_snr_db(20.0), 2).unwrap();
        let a = run(&inst.obs, &inst.codebook, &inst.dictionary, &inst.pilots, &p).unwrap();
        let b = run(&inst.obs, &inst.codebook, &inst.dictionary, &inst.pilots, &p).unwrap();
        assert_eq!(a, b);
        assert!((inst.dictionary.matrix() * &a.z_hat - &a.h_hat).norm() < 1e-10);
        assert_eq!(a.primal_residuals.len(), a.iterations_used);
        assert!(nmse(&inst.z, &a.z_hat).unwrap() < 1.0);
    }

    #[test]
    fn primal_residual_decreases_on_random_instances() {
        for seed in 0..100 {
            let inst = instance(2, 2, 4, 10, NoiseModel::from_snr_db(10.0), 1000 + 10 * seed);
            let p = AdmmParams::with_default_weights(&inst.obs, &inst.codebook, NoiseModel::from_snr_db(10.0), 2).unwrap();
            let r = run(&inst.obs, &inst.codebook, &inst.dictionary, &inst.pilots, &p).unwrap();
            let first = r.primal_residuals[0].0;
            let last = r.primal_residuals.last().unwrap().0;
            assert!(last < first, "seed {seed}: {first} -> {last}");
        }
    }

    #[test]
    fn full_mask_fits_observations() {
        // a single configuration makes every entry observed; noiseless so
        // that an observation-consistent iterate exists
        let inst = instance(2, 2, 1, 8, NoiseModel::Noiseless, 21);
        let op = BeamspaceOperator::new(&inst.codebook, &inst.dictionary, &inst.pilots).unwrap();
        let p = params(1e-9, DEFAULT_GAMMA);
        let dense = inst.obs.to_dense();
        let mut state = AdmmState::zeros(1, 8, 4);
        let mut misfit = Vec::new();
        for n in 1..=200 {
            step(&mut state, &inst.obs, &op, &p).unwrap();
            if [1, 3, 10, 200].contains(&n) {
                misfit.push((&state.x - &dense).norm());
            }
        }
        assert!(misfit[3] < 1e-6 * misfit[0], "{misfit:?}");
        for w in misfit.windows(2) {
            assert!(w[1] < w[0], "{misfit:?}");
        }
    }

    #[test]
    fn run_rejects_inconsistent_inputs() {
        let inst = instance(2, 2, 4, 10, NoiseModel::Noiseless, 2);
        let p = params(0.1, 0.5);
        let short = TrainingSequence::constant(9).unwrap();
        assert!(run(&inst.obs, &inst.codebook, &inst.dictionary, &short, &p).is_err());
        let mut bad = p;
        bad.gamma = 0.0;
        assert!(run(&inst.obs, &inst.codebook, &inst.dictionary, &inst.pilots, &bad).is_err());
    }

    #[test]
    fn nmse_examples() {
        let z = random_matrix(6, 1, 1).column(0).into_owned();
        assert_eq!(nmse(&z, &z).unwrap(), 0.0);
        assert_eq!(nmse(&z, &CVector::zeros(6)).unwrap(), 1.0);
        assert!((nmse(&z, &(&z * C64::new(2.0, 0.0))).unwrap() - 1.0).abs() < 1e-15);
        assert!(nmse(&CVector::zeros(6), &z).is_err());
        assert!(nmse(&z, &CVector::zeros(5)).is_err());
    }
}
