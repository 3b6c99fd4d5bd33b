//! Dense n-qubit statevector engine restricted to the two layers the feature
//! maps need: a full Hadamard layer and a diagonal phase layer.
//!
//! Basis convention: qubit `i` is bit `i` of the basis index (bit 0 least
//! significant). `z_i(b) = +1` when bit `i` of `b` is 0 and `-1` otherwise.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest register the engine will allocate (2^24 amplitudes = 256 MiB).
pub const MAX_QUBITS: usize = 24;

/// `z_i(b)` as a float: `+1.0` if bit `i` of `b` is clear, `-1.0` otherwise.
#[inline]
pub fn z_sign(b: usize, qubit: usize) -> f64 {
    if (b >> qubit) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn check_qubits(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::Config(format!(
            "qubit count {n_qubits} outside 1..={MAX_QUBITS}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl Statevector {
    /// `|0...0>` on `n_qubits` qubits.
    pub fn zero_state(n_qubits: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Wraps raw amplitudes. The vector must have power-of-two length and unit
    /// norm within 1e-10.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Contract(format!(
                "amplitude vector length {len} is not a power of two >= 2"
            )));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_qubits(n_qubits)?;
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Contract(format!(
                "amplitudes have squared norm {norm}, expected 1"
            )));
        }
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies `H` to every qubit: an in-place Walsh-Hadamard butterfly followed
    /// by a single `2^(-n/2)` rescale.
    pub fn hadamard_all(mut self) -> Self {
        let dim = self.amplitudes.len();
        let amps = &mut self.amplitudes;
        let mut half = 1;
        while half < dim {
            for block in (0..dim).step_by(2 * half) {
                for k in block..block + half {
                    let a = amps[k];
                    let b = amps[k + half];
                    amps[k] = a + b;
                    amps[k + half] = a - b;
                }
            }
            half <<= 1;
        }
        let scale = (dim as f64).sqrt().recip();
        for a in amps.iter_mut() {
            *a *= scale;
        }
        self
    }

    /// Multiplies amplitude `b` by `exp(i * phases[b])`.
    pub fn apply_phases(mut self, phases: &PhaseVector) -> Result<Self> {
        self.apply_phases_scaled(phases, 1.0)?;
        Ok(self)
    }

    /// Same as [`apply_phases`](Self::apply_phases) with the conjugate phases,
    /// i.e. the adjoint of the diagonal layer.
    pub fn apply_phases_adjoint(mut self, phases: &PhaseVector) -> Result<Self> {
        self.apply_phases_scaled(phases, -1.0)?;
        Ok(self)
    }

    fn apply_phases_scaled(&mut self, phases: &PhaseVector, sign: f64) -> Result<()> {
        if phases.n_qubits != self.n_qubits {
            return Err(Error::Contract(format!(
                "phase vector on {} qubits applied to a {}-qubit state",
                phases.n_qubits, self.n_qubits
            )));
        }
        for (a, &phi) in self.amplitudes.iter_mut().zip(&phases.phases) {
            *a *= Complex64::from_polar(1.0, sign * phi);
        }
        Ok(())
    }

    /// `<self|other> = sum_b conj(self[b]) * other[b]`.
    pub fn inner_product(&self, other: &Statevector) -> Result<Complex64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::Contract(format!(
                "inner product of {}-qubit and {}-qubit states",
                self.n_qubits, other.n_qubits
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Draws `shots` computational-basis outcomes by inverse CDF over the
    /// cumulative `|amp|^2` array, using a ChaCha8 stream seeded with `seed`.
    pub fn sample_outcomes(&self, shots: usize, seed: u64) -> Result<Vec<usize>> {
        if shots == 0 {
            return Err(Error::Config("shots must be >= 1".into()));
        }
        let mut cumulative = Vec::with_capacity(self.amplitudes.len());
        let mut acc = 0.0;
        for a in &self.amplitudes {
            acc += a.norm_sqr();
            cumulative.push(acc);
        }
        let total = acc;
        let last = cumulative.len() - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..shots)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * total;
                cumulative.partition_point(|&c| c <= u).min(last)
            })
            .collect())
    }

    /// Fraction of `shots` sampled outcomes equal to `0...0`.
    pub fn sample_zero_frequency(&self, shots: usize, seed: u64) -> Result<f64> {
        let outcomes = self.sample_outcomes(shots, seed)?;
        let zeros = outcomes.iter().filter(|&&b| b == 0).count();
        Ok(zeros as f64 / shots as f64)
    }
}

/// Diagonal of a phase layer: entry `b` is the accumulated angle (radians)
/// applied to basis state `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    n_qubits: usize,
    phases: Vec<f64>,
}

impl PhaseVector {
    pub fn new(phases: Vec<f64>) -> Result<Self> {
        let len = phases.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Contract(format!(
                "phase vector length {len} is not a power of two >= 2"
            )));
        }
        if let Some(b) = phases.iter().position(|p| !p.is_finite()) {
            return Err(Error::Range(format!("phase for basis state {b} is not finite")));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_qubits(n_qubits)?;
        Ok(Self { n_qubits, phases })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_state(n: usize, seed: u64) -> Statevector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut amps: Vec<Complex64> = (0..1 << n)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= norm);
        Statevector::from_amplitudes(amps).unwrap()
    }

    #[test]
    fn zero_state_basics() {
        assert_eq!(Statevector::zero_state(1).unwrap().amplitudes(), &[c(1.0, 0.0), c(0.0, 0.0)]);
        let s = Statevector::zero_state(2).unwrap();
        assert_eq!(s.amplitudes(), &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(Statevector::zero_state(25), Err(Error::Config(_))));
        assert!(matches!(Statevector::zero_state(0), Err(Error::Config(_))));
    }

    #[test]
    fn hadamard_layer() {
        let s = Statevector::zero_state(1).unwrap().hadamard_all();
        for a in s.amplitudes() {
            assert!((a - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        }
        let s = Statevector::zero_state(2).unwrap().hadamard_all();
        for a in s.amplitudes() {
            assert!((a - c(0.5, 0.0)).norm() < 1e-15);
        }
        let psi = random_state(3, 7);
        let back = psi.clone().hadamard_all().hadamard_all();
        for (a, b) in psi.amplitudes().iter().zip(back.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn phase_layer() {
        let psi = random_state(2, 3);
        let same = psi.clone().apply_phases(&PhaseVector::new(vec![0.0; 4]).unwrap()).unwrap();
        assert_eq!(psi, same);

        let global = psi.clone().apply_phases(&PhaseVector::new(vec![0.4; 4]).unwrap()).unwrap();
        let rot = Complex64::from_polar(1.0, 0.4);
        for (a, b) in psi.amplitudes().iter().zip(global.amplitudes()) {
            assert!((a * rot - b).norm() < 1e-15);
        }

        let plus = Statevector::zero_state(1).unwrap().hadamard_all();
        let minus = plus.apply_phases(&PhaseVector::new(vec![0.0, PI]).unwrap()).unwrap();
        assert!((minus.amplitudes()[0] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((minus.amplitudes()[1] - c(-FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn phase_dimension_mismatch() {
        let psi = Statevector::zero_state(2).unwrap();
        let p = PhaseVector::new(vec![0.0; 8]).unwrap();
        assert!(matches!(psi.apply_phases(&p), Err(Error::Contract(_))));
    }

    #[test]
    fn inner_products() {
        let psi = random_state(3, 11);
        let ip = psi.inner_product(&psi).unwrap();
        assert!((ip - c(1.0, 0.0)).norm() < 1e-14);

        let e0 = Statevector::zero_state(1).unwrap();
        let e1 = Statevector::from_amplitudes(vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_eq!(e0.inner_product(&e1).unwrap(), c(0.0, 0.0));

        // elementwise-sum oracle
        let phi = random_state(3, 12);
        let mut re = 0.0;
        let mut im = 0.0;
        for k in 0..8 {
            let a = psi.amplitudes()[k];
            let b = phi.amplitudes()[k];
            re += a.re * b.re + a.im * b.im;
            im += a.re * b.im - a.im * b.re;
        }
        let ip = psi.inner_product(&phi).unwrap();
        assert!((ip.re - re).abs() < 1e-14 && (ip.im - im).abs() < 1e-14);

        assert!(matches!(psi.inner_product(&e0), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_frequency_extremes() {
        let zero = Statevector::zero_state(3).unwrap();
        for seed in 0..5 {
            assert_eq!(zero.sample_zero_frequency(100, seed).unwrap(), 1.0);
        }
        let one = Statevector::from_amplitudes(vec![c(0.0, 0.0), c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0)]).unwrap();
        for seed in 0..5 {
            assert_eq!(one.sample_zero_frequency(100, seed).unwrap(), 0.0);
        }
        assert!(matches!(zero.sample_zero_frequency(0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn zero_frequency_is_deterministic_and_unbiased() {
        let half = Statevector::zero_state(1).unwrap().hadamard_all();
        assert_eq!(
            half.sample_zero_frequency(1024, 42).unwrap(),
            half.sample_zero_frequency(1024, 42).unwrap()
        );
        let seeds = 200;
        let mean = (0..seeds)
            .map(|s| half.sample_zero_frequency(1024, s).unwrap())
            .sum::<f64>()
            / seeds as f64;
        let bound = 3.0 * (0.25f64 / 1024.0).sqrt() / (seeds as f64).sqrt();
        assert!((mean - 0.5).abs() < bound, "mean {mean} bound {bound}");
    }

    #[test]
    fn sampled_outcomes_follow_distribution() {
        let s = Statevector::from_amplitudes(vec![c(0.0, 0.0), c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0)]).unwrap();
        let out = s.sample_outcomes(20_000, 9).unwrap();
        let ones = out.iter().filter(|&&b| b == 1).count() as f64 / 20_000.0;
        assert!(out.iter().all(|&b| b == 1 || b == 2));
        assert!((ones - 0.36).abs() < 0.02);
    }
}
