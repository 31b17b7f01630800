//! Behavioural model of the single-RF-chain front end.
//!
//! During training slot `t` the surface elements receive `y_t = h·q_t + n_t`.
//! One configuration (row `s_t` of the codebook `W`) is picked uniformly at
//! random, the element outputs are phase-shifted by it and summed into the
//! RF chain, which therefore sees the scalar `[W·y_t]_{s_t}`. Collected over
//! all slots this is the masked matrix `R_Ω = Ω ∘ (W·Y)`.

use std::f64::consts::PI;

use nalgebra::Complex;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::{ChannelRealization, RisGeometry};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Quantized reflection-coefficient alphabet: the `2^b`-th roots of unity.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSet {
    bits: u32,
    values: Vec<C64>,
}

impl PhaseSet {
    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Angular spacing `2π / 2^b` between neighbouring values.
    pub fn step(&self) -> f64 {
        2.0 * PI / self.values.len() as f64
    }

    /// Index of `value` in the alphabet, if it is a member within `tol`.
    pub fn index_of(&self, value: C64, tol: f64) -> Option<usize> {
        self.values.iter().position(|v| (v - value).norm() <= tol)
    }
}

pub const MAX_PHASE_BITS: u32 = 8;

pub fn phase_set(bits: u32) -> Result<PhaseSet> {
    if !(1..=MAX_PHASE_BITS).contains(&bits) {
        return Err(Error::domain(format!(
            "phase resolution must be 1..={MAX_PHASE_BITS} bits, got {bits}"
        )));
    }
    let count = 1usize << bits;
    let values = (0..count)
        .map(|m| exact_root_of_unity(m, count))
        .collect();
    Ok(PhaseSet { bits, values })
}

// exact values on the axes so that e.g. b = 1 gives exactly {1, -1}
fn exact_root_of_unity(m: usize, count: usize) -> C64 {
    if (4 * m) % count == 0 {
        match (4 * m / count) % 4 {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        }
    } else {
        Complex::from_polar(1.0, 2.0 * PI * m as f64 / count as f64)
    }
}

/// Whether `m ≤ (2^bits)^n` without overflowing.
pub fn codebook_size_feasible(m: usize, bits: u32, n: usize) -> bool {
    let exponent = (bits as u128).saturating_mul(n as u128);
    if exponent >= 64 {
        return true;
    }
    (m as u128) <= (1u128 << exponent)
}

/// The `M × N` matrix `W` of candidate surface configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigCodebook {
    matrix: CMatrix,
    phases: PhaseSet,
}

impl ConfigCodebook {
    /// Wraps an explicit configuration matrix, checking every entry against
    /// the alphabet.
    pub fn from_matrix(matrix: CMatrix, phases: PhaseSet) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::domain("codebook must be non-empty"));
        }
        if let Some(bad) = matrix.iter().find(|v| phases.index_of(**v, 1e-12).is_none()) {
            return Err(Error::domain(format!("codebook entry {bad} is not in the phase alphabet")));
        }
        Ok(Self { matrix, phases })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn phases(&self) -> &PhaseSet {
        &self.phases
    }

    /// Number of configurations `M`.
    pub fn m(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of elements `N`.
    pub fn n(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Draws every entry of `W` i.i.d. uniformly from the alphabet.
pub fn draw_codebook<R: Rng + ?Sized>(
    rng: &mut R,
    m: usize,
    geometry: RisGeometry,
    phases: &PhaseSet,
) -> Result<ConfigCodebook> {
    if m == 0 {
        return Err(Error::domain("codebook needs at least one configuration"));
    }
    let n = geometry.n();
    if !codebook_size_feasible(m, phases.bits(), n) {
        return Err(Error::domain(format!(
            "{m} configurations exceed the (2^{})^{n} distinct ones available",
            phases.bits()
        )));
    }
    let k = phases.len();
    // row-major draw order keeps a codebook prefix stable when M grows
    let mut matrix = CMatrix::zeros(m, n);
    for row in 0..m {
        for col in 0..n {
            matrix[(row, col)] = phases.values[rng.random_range(0..k)];
        }
    }
    Ok(ConfigCodebook {
        matrix,
        phases: phases.clone(),
    })
}

/// Per-slot configuration choice: `selection[t]` is the row of `W` active in
/// slot `t`, i.e. the position of the single one in `ω_t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingSchedule {
    selection: Vec<usize>,
    m: usize,
}

impl SamplingSchedule {
    pub fn new(selection: Vec<usize>, m: usize) -> Result<Self> {
        if m == 0 || selection.is_empty() {
            return Err(Error::domain("schedule needs m ≥ 1 and at least one slot"));
        }
        if let Some(&bad) = selection.iter().find(|&&s| s >= m) {
            return Err(Error::domain(format!("selected row {bad} outside [0, {m})")));
        }
        Ok(Self { selection, m })
    }

    pub fn selection(&self) -> &[usize] {
        &self.selection
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of training slots `T`.
    pub fn t(&self) -> usize {
        self.selection.len()
    }

    /// Dense `M × T` selector `Ω` with one unit entry per column.
    pub fn mask(&self) -> nalgebra::DMatrix<f64> {
        let mut omega = nalgebra::DMatrix::zeros(self.m, self.t());
        for (t, &row) in self.selection.iter().enumerate() {
            omega[(row, t)] = 1.0;
        }
        omega
    }
}

pub fn draw_schedule<R: Rng + ?Sized>(rng: &mut R, m: usize, t: usize) -> Result<SamplingSchedule> {
    if m == 0 || t == 0 {
        return Err(Error::domain(format!("schedule needs m ≥ 1 and t ≥ 1, got m={m}, t={t}")));
    }
    let selection = (0..t).map(|_| rng.random_range(0..m)).collect();
    Ok(SamplingSchedule { selection, m })
}

/// Known unit-modulus pilot symbols `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSequence {
    symbols: CVector,
}

impl TrainingSequence {
    pub fn new(symbols: CVector) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::domain("training sequence must be non-empty"));
        }
        if let Some(bad) = symbols.iter().find(|s| (s.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::domain(format!("pilot {bad} is not unit modulus")));
        }
        Ok(Self { symbols })
    }

    /// `q_t = 1` for every slot.
    pub fn constant(t: usize) -> Result<Self> {
        Self::new(CVector::from_element(t, C64::new(1.0, 0.0)))
    }

    /// Uniform QPSK symbols `(±1 ± j)/√2`.
    pub fn qpsk<R: Rng + ?Sized>(rng: &mut R, t: usize) -> Result<Self> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let symbols = CVector::from_iterator(
            t,
            (0..t).map(|_| {
                let re = if rng.random::<bool>() { s } else { -s };
                let im = if rng.random::<bool>() { s } else { -s };
                C64::new(re, im)
            }),
        );
        Self::new(symbols)
    }

    /// Each symbol held for `slots` consecutive training slots, i.e. received
    /// under `slots` different configurations.
    pub fn repeated(&self, slots: usize) -> Result<Self> {
        if slots == 0 {
            return Err(Error::domain("a symbol must span at least one slot"));
        }
        let symbols = CVector::from_iterator(
            self.symbols.len() * slots,
            self.symbols.iter().flat_map(|&q| std::iter::repeat_n(q, slots)),
        );
        Ok(Self { symbols })
    }

    pub fn symbols(&self) -> &CVector {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// `‖q‖²`
    pub fn energy(&self) -> f64 {
        self.symbols.norm_squared()
    }
}

/// Receiver noise at the surface elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Noiseless,
    /// i.i.d. `CN(0, 1/snr_linear)` per element and slot.
    Awgn { snr_linear: f64 },
}

impl NoiseModel {
    pub fn from_snr_db(snr_db: f64) -> Self {
        NoiseModel::Awgn {
            snr_linear: 10f64.powf(snr_db / 10.0),
        }
    }
}

/// The masked training observations `R_Ω`. Column `t` has its only stored
/// entry at row `selection[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    values: CVector,
    schedule: SamplingSchedule,
}

impl ObservationMatrix {
    pub fn new(values: CVector, schedule: SamplingSchedule) -> Result<Self> {
        Error::check_dim("observation count", schedule.t(), values.len())?;
        Ok(Self { values, schedule })
    }

    /// The RF-chain input of every slot.
    pub fn values(&self) -> &CVector {
        &self.values
    }

    pub fn schedule(&self) -> &SamplingSchedule {
        &self.schedule
    }

    pub fn m(&self) -> usize {
        self.schedule.m()
    }

    pub fn t(&self) -> usize {
        self.schedule.t()
    }

    /// `‖R_Ω‖_F`
    pub fn frobenius_norm(&self) -> f64 {
        self.values.norm()
    }

    /// Dense `M × T` form of `R_Ω`.
    pub fn to_dense(&self) -> CMatrix {
        let mut dense = CMatrix::zeros(self.m(), self.t());
        for (t, &row) in self.schedule.selection().iter().enumerate() {
            dense[(row, t)] = self.values[t];
        }
        dense
    }
}

/// Element-domain training signals `Y = [y_1 … y_T]` with `y_t = h·q_t + n_t`.
pub fn simulate_received<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    pilots: &TrainingSequence,
    noise: NoiseModel,
    rng: &mut R,
) -> Result<CMatrix> {
    let h = &channel.spatial;
    let mut received = h * pilots.symbols().transpose();
    if let NoiseModel::Awgn { snr_linear } = noise {
        if !(snr_linear > 0.0 && snr_linear.is_finite()) {
            return Err(Error::domain(format!("SNR must be positive, got {snr_linear}")));
        }
        let component = Normal::new(0.0, (0.5 / snr_linear).sqrt()).expect("finite std");
        // column-major: all elements of slot 0, then slot 1, ...
        for value in received.iter_mut() {
            *value += C64::new(component.sample(rng), component.sample(rng));
        }
    }
    Ok(received)
}

/// Applies the random sampler: slot `t` keeps row `selection[t]` of `W·y_t`.
pub fn sample_observations(
    codebook: &ConfigCodebook,
    schedule: &SamplingSchedule,
    received: &CMatrix,
) -> Result<ObservationMatrix> {
    Error::check_dim("codebook rows vs schedule", codebook.m(), schedule.m())?;
    Error::check_dim("codebook columns vs received signal", codebook.n(), received.nrows())?;
    Error::check_dim("slots", schedule.t(), received.ncols())?;
    let w = codebook.matrix();
    let values = CVector::from_iterator(
        schedule.t(),
        schedule
            .selection()
            .iter()
            .enumerate()
            .map(|(t, &row)| w.row(row).transpose().dot(&received.column(t))),
    );
    ObservationMatrix::new(values, schedule.clone())
}

/// Runs one training phase end to end and returns `R_Ω`.
pub fn simulate_training<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    codebook: &ConfigCodebook,
    schedule: &SamplingSchedule,
    pilots: &TrainingSequence,
    noise: NoiseModel,
    rng: &mut R,
) -> Result<ObservationMatrix> {
    Error::check_dim("codebook columns vs channel", channel.spatial.len(), codebook.n())?;
    Error::check_dim("pilot length vs schedule", schedule.t(), pilots.len())?;
    let received = simulate_received(channel, pilots, noise, rng)?;
    sample_observations(codebook, schedule, &received)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{assemble_channel, dft_dictionary, draw_paths};
    use crate::seed::rng_from_seed;

    fn channel(g: RisGeometry, seed: u64) -> ChannelRealization {
        let d = dft_dictionary(g);
        let p = draw_paths(&mut rng_from_seed(seed), 3, 1.0).unwrap();
        assemble_channel(p, g, &d).unwrap()
    }

    #[test]
    fn phase_sets() {
        let one = phase_set(1).unwrap();
        assert_eq!(one.values(), &[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]);
        let two = phase_set(2).unwrap();
        assert_eq!(
            two.values(),
            &[C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)]
        );
        for b in 1..=8 {
            let set = phase_set(b).unwrap();
            assert_eq!(set.len(), 1 << b);
            for (i, v) in set.values().iter().enumerate() {
                assert!((v.norm() - 1.0).abs() < 1e-12);
                assert!((v.powu(1 << b) - C64::new(1.0, 0.0)).norm() < 1e-9);
                for w in &set.values()[..i] {
                    assert!((v - w).norm() > 1e-6);
                }
            }
        }
        assert!(phase_set(0).is_err());
        assert!(phase_set(9).is_err());
    }

    #[test]
    fn codebook_deterministic_and_on_alphabet() {
        let g = RisGeometry::new(4, 4).unwrap();
        let f = phase_set(4).unwrap();
        let a = draw_codebook(&mut rng_from_seed(9), 16, g, &f).unwrap();
        let b = draw_codebook(&mut rng_from_seed(9), 16, g, &f).unwrap();
        assert_eq!(a, b);
        assert!(a.matrix().iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        assert!(a.matrix().iter().all(|v| f.index_of(*v, 1e-12).is_some()));
        assert!(draw_codebook(&mut rng_from_seed(9), 0, g, &f).is_err());
    }

    #[test]
    fn codebook_size_limit() {
        let g = RisGeometry::new(2, 1).unwrap();
        let f = phase_set(1).unwrap();
        assert!(draw_codebook(&mut rng_from_seed(1), 4, g, &f).is_ok());
        assert!(draw_codebook(&mut rng_from_seed(1), 5, g, &f).is_err());
        assert!(codebook_size_feasible(usize::MAX, 8, 64));
    }

    #[test]
    fn binary_codebook_is_balanced() {
        let g = RisGeometry::new(10, 10).unwrap();
        let f = phase_set(1).unwrap();
        let w = draw_codebook(&mut rng_from_seed(21), 100, g, &f).unwrap();
        let plus = w.matrix().iter().filter(|v| v.re > 0.0).count() as f64;
        let n = 1e4;
        let sigma = (n * 0.25f64).sqrt();
        assert!((plus - n / 2.0).abs() <= 3.0 * sigma, "{plus}");
    }

    #[test]
    fn schedule_properties() {
        let s = draw_schedule(&mut rng_from_seed(1), 1, 17).unwrap();
        assert!(s.selection().iter().all(|&x| x == 0));
        let a = draw_schedule(&mut rng_from_seed(4), 8, 50).unwrap();
        let b = draw_schedule(&mut rng_from_seed(4), 8, 50).unwrap();
        assert_eq!(a, b);
        assert!(draw_schedule(&mut rng_from_seed(4), 0, 5).is_err());
        assert!(draw_schedule(&mut rng_from_seed(4), 5, 0).is_err());
    }

    #[test]
    fn schedule_is_uniform() {
        let t = 100_000usize;
        let s = draw_schedule(&mut rng_from_seed(77), 8, t).unwrap();
        let mut counts = [0usize; 8];
        for &x in s.selection() {
            counts[x] += 1;
        }
        let p = 1.0 / 8.0;
        let sigma = (t as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - t as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn mask_has_one_entry_per_column() {
        let s = draw_schedule(&mut rng_from_seed(2), 6, 30).unwrap();
        let omega = s.mask();
        for col in omega.column_iter() {
            assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(col.iter().filter(|&&v| v != 0.0).count(), 1);
        }
    }

    #[test]
    fn noiseless_entry_is_configuration_inner_product() {
        let g = RisGeometry::new(4, 2).unwrap();
        let ch = channel(g, 3);
        let f = phase_set(2).unwrap();
        let w = draw_codebook(&mut rng_from_seed(4), 8, g, &f).unwrap();
        let s = draw_schedule(&mut rng_from_seed(5), 8, 12).unwrap();
        let q = TrainingSequence::constant(12).unwrap();
        let obs = simulate_training(&ch, &w, &s, &q, NoiseModel::Noiseless, &mut rng_from_seed(6)).unwrap();
        for (t, &row) in s.selection().iter().enumerate() {
            let expected = w.matrix().row(row).transpose().dot(&ch.spatial);
            assert!((obs.values()[t] - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn sparse_storage_matches_dense_masking() {
        let g = RisGeometry::new(4, 2).unwrap();
        let ch = channel(g, 8);
        let f = phase_set(3).unwrap();
        let w = draw_codebook(&mut rng_from_seed(1), 8, g, &f).unwrap();
        let s = draw_schedule(&mut rng_from_seed(2), 8, 20).unwrap();
        let mut rng = rng_from_seed(3);
        let q = TrainingSequence::qpsk(&mut rng, 20).unwrap();
        let y = simulate_received(&ch, &q, NoiseModel::from_snr_db(5.0), &mut rng).unwrap();
        let obs = sample_observations(&w, &s, &y).unwrap();
        let wy = w.matrix() * &y;
        let dense = wy.zip_map(&s.mask(), |v, m| v * m);
        assert!((obs.to_dense() - dense).norm() < 1e-12);
    }

    #[test]
    fn high_snr_approaches_noiseless() {
        let g = RisGeometry::new(4, 4).unwrap();
        let ch = channel(g, 10);
        let f = phase_set(4).unwrap();
        let w = draw_codebook(&mut rng_from_seed(1), 16, g, &f).unwrap();
        let s = draw_schedule(&mut rng_from_seed(2), 16, 200).unwrap();
        let q = TrainingSequence::constant(200).unwrap();
        let clean = simulate_training(&ch, &w, &s, &q, NoiseModel::Noiseless, &mut rng_from_seed(3)).unwrap();
        let noisy = simulate_training(&ch, &w, &s, &q, NoiseModel::Awgn { snr_linear: 1e6 }, &mut rng_from_seed(3)).unwrap();
        let rel: f64 = clean
            .values()
            .iter()
            .zip(noisy.values().iter())
            .map(|(a, b)| (a - b).norm() / a.norm())
            .sum::<f64>()
            / 200.0;
        assert!(rel < 1e-2, "{rel}");
    }

    #[test]
    fn noiseless_energy_scales_with_channel() {
        let g = RisGeometry::new(4, 2).unwrap();
        let ch = channel(g, 12);
        let mut scaled = ch.clone();
        scaled.spatial *= C64::new(3.0, 0.0);
        let f = phase_set(2).unwrap();
        let w = draw_codebook(&mut rng_from_seed(1), 8, g, &f).unwrap();
        let s = draw_schedule(&mut rng_from_seed(2), 8, 15).unwrap();
        let q = TrainingSequence::constant(15).unwrap();
        let e1 = simulate_training(&ch, &w, &s, &q, NoiseModel::Noiseless, &mut rng_from_seed(0)).unwrap().frobenius_norm();
        let e9 = simulate_training(&scaled, &w, &s, &q, NoiseModel::Noiseless, &mut rng_from_seed(0)).unwrap().frobenius_norm();
        assert!((e9 * e9 / (e1 * e1) - 9.0).abs() < 1e-10);
    }

    #[test]
    fn training_errors() {
        let g = RisGeometry::new(4, 2).unwrap();
        let ch = channel(g, 1);
        let f = phase_set(2).unwrap();
        let w = draw_codebook(&mut rng_from_seed(1), 8, g, &f).unwrap();
        let s = draw_schedule(&mut rng_from_seed(2), 8, 10).unwrap();
        let q = TrainingSequence::constant(11).unwrap();
        let mut rng = rng_from_seed(0);
        assert!(simulate_training(&ch, &w, &s, &q, NoiseModel::Noiseless, &mut rng).is_err());
        let q = TrainingSequence::constant(10).unwrap();
        assert!(simulate_training(&ch, &w, &s, &q, NoiseModel::Awgn { snr_linear: 0.0 }, &mut rng).is_err());
        let small = draw_codebook(&mut rng_from_seed(1), 8, RisGeometry::new(2, 2).unwrap(), &f).unwrap();
        assert!(simulate_training(&ch, &small, &s, &q, NoiseModel::Noiseless, &mut rng).is_err());
    }

    #[test]
    fn repeated_pilots() {
        let q = TrainingSequence::qpsk(&mut rng_from_seed(1), 3).unwrap();
        let r = q.repeated(2).unwrap();
        assert_eq!(r.len(), 6);
        assert_eq!(r.symbols()[0], r.symbols()[1]);
        assert_eq!(r.symbols()[4], q.symbols()[2]);
    }
}
