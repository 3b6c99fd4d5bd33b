//! Quantum fidelity kernels `K(x, y) = |<0| U(x)^† U(y) |0>|^2`, evaluated
//! exactly from statevector overlaps or by sampling the all-zero outcome of
//! the composed circuit.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featuremap::{
    apply_feature_map, apply_feature_map_adjoint, diagonal_phases, prepare_state, FeatureMapSpec,
};
use crate::qka::{apply_fiducial_adjoint, fiducial_state};
use crate::statevec::{PhaseVector, Statevector};

/// Shot count used when sampling is requested without an explicit count.
pub const DEFAULT_SHOTS: usize = 1024;
/// Budget for resident statevectors during Gram assembly.
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum KernelMode {
    Exact,
    Sampled { shots: usize, seed: u64 },
}

impl KernelMode {
    pub fn sampled(seed: u64) -> Self {
        KernelMode::Sampled {
            shots: DEFAULT_SHOTS,
            seed,
        }
    }

    fn tag(self) -> u8 {
        match self {
            KernelMode::Exact => 0,
            KernelMode::Sampled { .. } => 1,
        }
    }

    /// Same mode with the seed replaced by one derived from `(seed, i, j)`.
    fn for_entry(self, i: usize, j: usize) -> Self {
        match self {
            KernelMode::Exact => self,
            KernelMode::Sampled { shots, seed } => KernelMode::Sampled {
                shots,
                seed: entry_seed(seed, i, j),
            },
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-entry sampling seed, independent of assembly order.
pub fn entry_seed(seed: u64, i: usize, j: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ i as u64) ^ (j as u64).rotate_left(32))
}

/// Kernel matrix between two sample sets, with how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    pub entries: Array2<f64>,
    pub mode: KernelMode,
    pub symmetric: bool,
}

impl GramMatrix {
    pub fn new(entries: Array2<f64>, mode: KernelMode, symmetric: bool) -> Result<Self> {
        if symmetric && !is_exactly_symmetric(entries.view()) {
            return Err(Error::Contract("matrix flagged symmetric is not symmetric".into()));
        }
        Ok(Self {
            entries,
            mode,
            symmetric,
        })
    }

    pub fn size_a(&self) -> usize {
        self.entries.nrows()
    }

    pub fn size_b(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    /// Sub-Gram over the given rows and columns.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> GramMatrix {
        let entries = Array2::from_shape_fn((rows.len(), cols.len()), |(a, b)| {
            self.entries[[rows[a], cols[b]]]
        });
        let symmetric = self.symmetric && rows == cols;
        GramMatrix {
            entries,
            mode: self.mode,
            symmetric,
        }
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        if !self.symmetric {
            return Err(Error::Contract("eigenvalues requested for a non-symmetric Gram".into()));
        }
        Ok(to_nalgebra(self.entries.view())
            .symmetric_eigenvalues()
            .min())
    }

    /// Writes the `QKGM` binary layout: magic, version u32, size_a u64,
    /// size_b u64, mode tag u8, shots u64, seed u64, then row-major f64, all
    /// little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let (shots, seed) = match self.mode {
            KernelMode::Exact => (0, 0),
            KernelMode::Sampled { shots, seed } => (shots as u64, seed),
        };
        w.write_all(b"QKGM")?;
        w.write_all(&QKGM_VERSION.to_le_bytes())?;
        w.write_all(&(self.size_a() as u64).to_le_bytes())?;
        w.write_all(&(self.size_b() as u64).to_le_bytes())?;
        w.write_all(&[self.mode.tag()])?;
        w.write_all(&shots.to_le_bytes())?;
        w.write_all(&seed.to_le_bytes())?;
        for v in self.entries.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a `QKGM` file. The symmetric flag is restored when the matrix is
    /// square and exactly symmetric.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"QKGM" {
            return Err(Error::Format("missing QKGM magic".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != QKGM_VERSION {
            return Err(Error::Format(format!("unsupported QKGM version {version}")));
        }
        let size_a = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let size_b = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let [tag] = read_array::<1, _>(&mut r)?;
        let shots = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let seed = u64::from_le_bytes(read_array(&mut r)?);
        let mode = match tag {
            0 => KernelMode::Exact,
            1 => KernelMode::Sampled { shots, seed },
            t => return Err(Error::Format(format!("unknown mode tag {t}"))),
        };
        let count = size_a
            .checked_mul(size_b)
            .ok_or_else(|| Error::Format("QKGM dimensions overflow".into()))?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(f64::from_le_bytes(read_array(&mut r)?));
        }
        let entries = Array2::from_shape_vec((size_a, size_b), data)
            .map_err(|e| Error::Format(e.to_string()))?;
        let symmetric = size_a == size_b && is_exactly_symmetric(entries.view());
        Ok(Self {
            entries,
            mode,
            symmetric,
        })
    }
}

const QKGM_VERSION: u32 = 1;

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated QKGM file: {e}")))?;
    Ok(buf)
}

fn is_exactly_symmetric(m: ArrayView2<f64>) -> bool {
    let n = m.nrows();
    n == m.ncols() && (0..n).all(|i| (i + 1..n).all(|j| m[[i, j]] == m[[j, i]]))
}

pub(crate) fn to_nalgebra(m: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

fn check_rows(spec: &FeatureMapSpec, rows: &[&[f64]]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Contract("kernel over an empty sample set".into()));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != spec.n_qubits) {
        return Err(Error::Contract(format!(
            "sample {i} has {} features, map expects {}",
            r.len(),
            spec.n_qubits
        )));
    }
    Ok(())
}

/// One kernel value. Exact mode is the squared overlap of the two feature
/// states; sampled mode runs `U(y)` then `U(x)^†` on `|0^n>` and returns the
/// all-zero frequency over the shots, seeded by `mode`'s seed directly.
pub fn kernel_entry(spec: &FeatureMapSpec, x: &[f64], y: &[f64], mode: KernelMode) -> Result<f64> {
    check_rows(spec, &[x, y])?;
    match mode {
        KernelMode::Exact => {
            let a = prepare_state(spec, x)?;
            let b = prepare_state(spec, y)?;
            Ok(a.inner_product(&b)?.norm_sqr())
        }
        KernelMode::Sampled { shots, seed } => {
            let phases_x = diagonal_phases(spec, x)?;
            let state_y = prepare_state(spec, y)?;
            let composed = apply_feature_map_adjoint(spec, &phases_x, state_y)?;
            composed.sample_zero_frequency(shots, seed)
        }
    }
}

/// Options for Gram assembly.
#[derive(Debug, Clone, Copy)]
pub struct GramOptions {
    /// Bytes of statevectors allowed to be resident at once.
    pub memory_budget: usize,
    /// When the whole set does not fit, recompute states block by block
    /// instead of failing.
    pub allow_blocking: bool,
}

impl Default for GramOptions {
    fn default() -> Self {
        Self {
            memory_budget: DEFAULT_MEMORY_BUDGET,
            allow_blocking: true,
        }
    }
}

fn state_bytes(n_qubits: usize) -> usize {
    (1usize << n_qubits) * std::mem::size_of::<num_complex::Complex64>()
}

/// Per-row cache: encoding phases and the feature state.
struct Encoded {
    phases: PhaseVector,
    state: Statevector,
}

/// A feature map, optionally preceded by a fiducial rotation layer.
#[derive(Clone, Copy)]
pub(crate) struct Circuit<'a> {
    pub spec: &'a FeatureMapSpec,
    pub lambda: Option<&'a [f64]>,
}

impl Circuit<'_> {
    fn initial(&self) -> Result<Statevector> {
        match self.lambda {
            Some(l) => fiducial_state(l, self.spec.n_qubits),
            None => Statevector::zero_state(self.spec.n_qubits),
        }
    }

    fn encode_rows(&self, rows: &[&[f64]]) -> Result<Vec<Encoded>> {
        let start = self.initial()?;
        rows.par_iter()
            .map(|x| {
                let phases = diagonal_phases(self.spec, x)?;
                let state = apply_feature_map(self.spec, &phases, start.clone())?;
                Ok(Encoded { phases, state })
            })
            .collect()
    }

    /// Kernel value between two encoded rows.
    fn pair_value(&self, a: &Encoded, b: &Encoded, mode: KernelMode) -> Result<f64> {
        match mode {
            KernelMode::Exact => Ok(a.state.inner_product(&b.state)?.norm_sqr()),
            KernelMode::Sampled { shots, seed } => {
                let mut composed = apply_feature_map_adjoint(self.spec, &a.phases, b.state.clone())?;
                if let Some(l) = self.lambda {
                    composed = apply_fiducial_adjoint(composed, l)?;
                }
                composed.sample_zero_frequency(shots, seed)
            }
        }
    }
}

/// Block size (rows) that keeps `2 * block` cached states within budget,
/// or `None` when everything fits at once.
fn plan_blocks(spec: &FeatureMapSpec, rows: usize, opts: &GramOptions) -> Result<Option<usize>> {
    let per = state_bytes(spec.n_qubits);
    if per.saturating_mul(rows) <= opts.memory_budget {
        return Ok(None);
    }
    let block = opts.memory_budget / per / 2;
    if !opts.allow_blocking || block == 0 {
        return Err(Error::Resource(format!(
            "{rows} cached {}-qubit states need {} bytes, budget is {}; enable block mode or raise the budget",
            spec.n_qubits,
            per.saturating_mul(rows),
            opts.memory_budget
        )));
    }
    Ok(Some(block))
}

pub fn gram(spec: &FeatureMapSpec, xs: &[&[f64]], mode: KernelMode) -> Result<GramMatrix> {
    gram_with(spec, xs, mode, &GramOptions::default())
}

/// Symmetric Gram over `xs`. Every unordered pair is evaluated once and
/// mirrored; the diagonal is set to 1 without evaluation.
pub fn gram_with(spec: &FeatureMapSpec, xs: &[&[f64]], mode: KernelMode, opts: &GramOptions) -> Result<GramMatrix> {
    gram_circuit(Circuit { spec, lambda: None }, xs, mode, opts)
}

pub(crate) fn gram_circuit(circuit: Circuit<'_>, xs: &[&[f64]], mode: KernelMode, opts: &GramOptions) -> Result<GramMatrix> {
    let spec = circuit.spec;
    spec.validate()?;
    check_rows(spec, xs)?;
    let n = xs.len();
    let block = plan_blocks(spec, n, opts)?.unwrap_or(n);
    let mut entries = Array2::<f64>::eye(n);
    let starts: Vec<usize> = (0..n).step_by(block).collect();
    for (bi, &r0) in starts.iter().enumerate() {
        let r1 = (r0 + block).min(n);
        let row_enc = circuit.encode_rows(&xs[r0..r1])?;
        for &c0 in &starts[bi..] {
            let c1 = (c0 + block).min(n);
            let col_owned;
            let col_enc: &[Encoded] = if c0 == r0 {
                &row_enc
            } else {
                col_owned = circuit.encode_rows(&xs[c0..c1])?;
                &col_owned
            };
            let pairs: Vec<(usize, usize)> = (r0..r1)
                .flat_map(|i| (c0.max(i + 1)..c1).map(move |j| (i, j)))
                .collect();
            let values: Vec<f64> = pairs
                .par_iter()
                .map(|&(i, j)| {
                    circuit.pair_value(&row_enc[i - r0], &col_enc[j - c0], mode.for_entry(i, j))
                })
                .collect::<Result<_>>()?;
            for (&(i, j), v) in pairs.iter().zip(values) {
                entries[[i, j]] = v;
                entries[[j, i]] = v;
            }
        }
    }
    Ok(GramMatrix {
        entries,
        mode,
        symmetric: true,
    })
}

pub fn cross_gram(spec: &FeatureMapSpec, a: &[&[f64]], b: &[&[f64]], mode: KernelMode) -> Result<GramMatrix> {
    cross_gram_with(spec, a, b, mode, &GramOptions::default())
}

/// `entries[i][j] = K(a_i, b_j)`; in sampled mode the adjoint circuit is built
/// from `a_i` and the per-entry seed keyed by `(i, j)`.
pub fn cross_gram_with(
    spec: &FeatureMapSpec,
    a: &[&[f64]],
    b: &[&[f64]],
    mode: KernelMode,
    opts: &GramOptions,
) -> Result<GramMatrix> {
    cross_gram_circuit(Circuit { spec, lambda: None }, a, b, mode, opts)
}

pub(crate) fn cross_gram_circuit(
    circuit: Circuit<'_>,
    a: &[&[f64]],
    b: &[&[f64]],
    mode: KernelMode,
    opts: &GramOptions,
) -> Result<GramMatrix> {
    let spec = circuit.spec;
    spec.validate()?;
    check_rows(spec, a)?;
    check_rows(spec, b)?;
    let block = plan_blocks(spec, a.len() + b.len(), opts)?.unwrap_or(a.len().max(b.len()));
    let mut entries = Array2::<f64>::zeros((a.len(), b.len()));
    for r0 in (0..a.len()).step_by(block) {
        let r1 = (r0 + block).min(a.len());
        let row_enc = circuit.encode_rows(&a[r0..r1])?;
        for c0 in (0..b.len()).step_by(block) {
            let c1 = (c0 + block).min(b.len());
            let col_enc = circuit.encode_rows(&b[c0..c1])?;
            let pairs: Vec<(usize, usize)> = (r0..r1)
                .flat_map(|i| (c0..c1).map(move |j| (i, j)))
                .collect();
            let values: Vec<f64> = pairs
                .par_iter()
                .map(|&(i, j)| {
                    circuit.pair_value(&row_enc[i - r0], &col_enc[j - c0], mode.for_entry(i, j))
                })
                .collect::<Result<_>>()?;
            for (&(i, j), v) in pairs.iter().zip(values) {
                entries[[i, j]] = v;
            }
        }
    }
    Ok(GramMatrix {
        entries,
        mode,
        symmetric: false,
    })
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues are set to zero
/// and the matrix is reassembled and re-symmetrized. The diagonal is left as
/// the reassembly produces it.
pub fn psd_clip(k: &GramMatrix) -> Result<GramMatrix> {
    if !k.symmetric {
        return Err(Error::Contract("psd_clip needs a symmetric Gram matrix".into()));
    }
    let eig = to_nalgebra(k.entries.view()).symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let rebuilt = &eig.eigenvectors
        * DMatrix::from_diagonal(&clipped)
        * eig.eigenvectors.transpose();
    let n = k.size_a();
    let entries = Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]));
    Ok(GramMatrix {
        entries,
        mode: k.mode,
        symmetric: true,
    })
}
