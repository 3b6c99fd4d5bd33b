//! Data-encoding circuits: `(U_phi(x) . H^n)^reps |0^n>` where `U_phi(x)` is
//! the diagonal `exp(i sum_S phi_S(x) prod_{i in S} Z_i)` over singletons and
//! every unordered qubit pair (full entanglement).

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevec::{PhaseVector, Statevector};

/// Smallest `|cos(x_i) cos(x_j)|` accepted by the `q_kernel_11` encoding.
pub const SUZUKI11_MIN_DENOMINATOR: f64 = 1e-9;
const SUZUKI10_MAX_EXPONENT: f64 = 700.0;

/// Pair-encoding family. Every kind encodes singletons as `phi_i(x) = x_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FeatureMapKind {
    /// `(pi - x_i)(pi - x_j)`
    Zz,
    /// Pauli feature map default data map, same pair function as `Zz`.
    Default,
    /// `pi x_i x_j`
    Suzuki8,
    /// `pi/2 (1 - x_i)(1 - x_j)`
    Suzuki9,
    /// `exp(ln(pi) |x_i - x_j|^2 / 8)`
    Suzuki10,
    /// `pi / (3 cos x_i cos x_j)`
    Suzuki11,
    /// `pi cos x_i cos x_j`
    Suzuki12,
}

impl FeatureMapKind {
    pub const ALL: [FeatureMapKind; 7] = [
        FeatureMapKind::Zz,
        FeatureMapKind::Default,
        FeatureMapKind::Suzuki8,
        FeatureMapKind::Suzuki9,
        FeatureMapKind::Suzuki10,
        FeatureMapKind::Suzuki11,
        FeatureMapKind::Suzuki12,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureMapKind::Zz => "q_kernel_zz",
            FeatureMapKind::Default => "q_kernel_default",
            FeatureMapKind::Suzuki8 => "q_kernel_8",
            FeatureMapKind::Suzuki9 => "q_kernel_9",
            FeatureMapKind::Suzuki10 => "q_kernel_10",
            FeatureMapKind::Suzuki11 => "q_kernel_11",
            FeatureMapKind::Suzuki12 => "q_kernel_12",
        }
    }
}

impl fmt::Display for FeatureMapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureMapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureMapKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature map kind {s:?}")))
    }
}

impl TryFrom<String> for FeatureMapKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureMapKind> for String {
    fn from(k: FeatureMapKind) -> String {
        k.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entanglement {
    #[default]
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMapSpec {
    pub kind: FeatureMapKind,
    pub n_qubits: usize,
    pub reps: usize,
    #[serde(default)]
    pub entanglement: Entanglement,
}

impl FeatureMapSpec {
    /// Full-entanglement map with two repetitions.
    pub fn new(kind: FeatureMapKind, n_qubits: usize) -> Result<Self> {
        Self::with_reps(kind, n_qubits, 2)
    }

    pub fn with_reps(kind: FeatureMapKind, n_qubits: usize, reps: usize) -> Result<Self> {
        let spec = Self {
            kind,
            n_qubits,
            reps,
            entanglement: Entanglement::Full,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > crate::statevec::MAX_QUBITS {
            return Err(Error::Config(format!(
                "feature map needs 1..={} qubits, got {}",
                crate::statevec::MAX_QUBITS,
                self.n_qubits
            )));
        }
        if self.reps == 0 {
            return Err(Error::Config("feature map reps must be >= 1".into()));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_qubits {
            return Err(Error::Contract(format!(
                "feature vector of length {} for a {}-qubit map",
                x.len(),
                self.n_qubits
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Range(format!("feature {i} is not finite")));
        }
        Ok(())
    }
}

pub fn phi_single(_kind: FeatureMapKind, x_i: f64) -> f64 {
    x_i
}

pub fn phi_pair(kind: FeatureMapKind, x_i: f64, x_j: f64) -> Result<f64> {
    Ok(match kind {
        FeatureMapKind::Zz | FeatureMapKind::Default => (PI - x_i) * (PI - x_j),
        FeatureMapKind::Suzuki8 => PI * x_i * x_j,
        FeatureMapKind::Suzuki9 => FRAC_PI_2 * (1.0 - x_i) * (1.0 - x_j),
        FeatureMapKind::Suzuki10 => {
            let d = x_i - x_j;
            let exponent = d * d * PI.ln() / 8.0;
            if exponent > SUZUKI10_MAX_EXPONENT {
                return Err(Error::Range(format!(
                    "q_kernel_10 exponent {exponent:.3} for pair ({x_i}, {x_j}) exceeds {SUZUKI10_MAX_EXPONENT}"
                )));
            }
            exponent.exp()
        }
        FeatureMapKind::Suzuki11 => {
            let denom = x_i.cos() * x_j.cos();
            if denom.abs() < SUZUKI11_MIN_DENOMINATOR {
                return Err(Error::SingularEncoding(format!(
                    "q_kernel_11 pair ({x_i}, {x_j}) has cos(x_i)cos(x_j) = {denom:e}"
                )));
            }
            PI / (3.0 * denom)
        }
        FeatureMapKind::Suzuki12 => PI * x_i.cos() * x_j.cos(),
    })
}

/// Diagonal of `U_phi(x)`:
/// `phases[b] = sum_i x_i z_i(b) + sum_{i<j} phi_pair(x_i, x_j) z_i(b) z_j(b)`.
///
/// Built in `O(n 2^n)` by flipping qubits one at a time: starting from the
/// all-`+1` basis state, setting bit `k` on a state `b' < 2^k` flips `z_k`
/// and changes the phase by `-2 (x_k + sum_{i != k} p_ik z_i(b'))`.
pub fn diagonal_phases(spec: &FeatureMapSpec, x: &[f64]) -> Result<PhaseVector> {
    spec.validate()?;
    spec.check_input(x)?;
    let n = spec.n_qubits;
    let mut pair = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let p = phi_pair(spec.kind, x[i], x[j])
                .map_err(|e| match e {
                    Error::SingularEncoding(m) => {
                        Error::SingularEncoding(format!("features ({i}, {j}): {m}"))
                    }
                    other => other,
                })?;
            pair[i * n + j] = p;
            pair[j * n + i] = p;
        }
    }
    let single: Vec<f64> = x.iter().map(|&v| phi_single(spec.kind, v)).collect();

    let dim = 1usize << n;
    let mut phases = vec![0.0; dim];
    phases[0] = single.iter().sum::<f64>()
        + (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| pair[i * n + j])
            .sum::<f64>();
    for k in 0..n {
        let row = &pair[k * n..(k + 1) * n];
        let upper: f64 = row[k + 1..].iter().sum();
        let low_bits = 1usize << k;
        for b in 0..low_bits {
            let mut lower = 0.0;
            for (i, &p) in row[..k].iter().enumerate() {
                if (b >> i) & 1 == 0 {
                    lower += p;
                } else {
                    lower -= p;
                }
            }
            phases[b | low_bits] = phases[b] - 2.0 * (single[k] + upper + lower);
        }
    }
    PhaseVector::new(phases)
}

/// Applies the encoding circuit `reps` times (Hadamard layer, then phases) to
/// an arbitrary input state.
pub fn apply_feature_map(
    spec: &FeatureMapSpec,
    phases: &PhaseVector,
    mut state: Statevector,
) -> Result<Statevector> {
    for _ in 0..spec.reps {
        state = state.hadamard_all().apply_phases(phases)?;
    }
    Ok(state)
}

/// Applies the adjoint of [`apply_feature_map`]: blocks in reverse with
/// negated phases, each followed by the (self-adjoint) Hadamard layer.
pub fn apply_feature_map_adjoint(
    spec: &FeatureMapSpec,
    phases: &PhaseVector,
    mut state: Statevector,
) -> Result<Statevector> {
    for _ in 0..spec.reps {
        state = state.apply_phases_adjoint(phases)?.hadamard_all();
    }
    Ok(state)
}

/// `U(x)|0^n>` for the configured map.
pub fn prepare_state(spec: &FeatureMapSpec, x: &[f64]) -> Result<Statevector> {
    let phases = diagonal_phases(spec, x)?;
    apply_feature_map(spec, &phases, Statevector::zero_state(spec.n_qubits)?)
}
