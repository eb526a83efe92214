//! Exact time evolution `ψ_t = exp(-i h t) ψ₀` through the spectral
//! decomposition of the reduced matrix.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmt::f64_17;
use crate::hamiltonian::ReducedHamiltonian;
use crate::lattice::{PairState, SiteIndexing};
use crate::C64;

/// Accepted residual for the eigen-reconstruction and orthogonality checks.
pub const SPECTRAL_TOL: f64 = 1e-10;

/// Default time step for amplitude series.
pub const DEFAULT_SERIES_DT: f64 = 0.05;

/// Amplitudes over the dense site indices at a fixed time. The register label
/// is implied by the dressing sign and not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    pub time: f64,
    pub amplitudes: Vec<C64>,
}

impl Wavefunction {
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn amplitude(&self, idx: &SiteIndexing, site: PairState) -> Option<C64> {
        idx.index_of(site).map(|i| self.amplitudes[i])
    }

    /// `⟨ψ|h|ψ⟩`.
    pub fn energy(&self, h: &ReducedHamiltonian) -> f64 {
        let hpsi = h.apply(&self.amplitudes);
        self.amplitudes
            .iter()
            .zip(&hpsi)
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }
}

/// `|(1,2),+1⟩` at time zero.
pub fn initial_state(idx: &SiteIndexing) -> Wavefunction {
    let mut amplitudes = vec![C64::new(0.0, 0.0); idx.len()];
    amplitudes[idx.index_of(PairState::origin()).expect("(1,2) is always a site")] =
        C64::new(1.0, 0.0);
    Wavefunction {
        time: 0.0,
        amplitudes,
    }
}

/// `|ψ(x)|²` per site.
pub fn probability_profile(psi: &Wavefunction) -> Vec<f64> {
    psi.amplitudes.iter().map(|z| z.norm_sqr()).collect()
}

/// Eigenpairs `h = V Λ Vᵀ` of the real symmetric reduced matrix.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    /// Diagonalises `h`, rejecting the result unless it reconstructs `h` and
    /// `V` is orthogonal to within [`SPECTRAL_TOL`].
    pub fn new(h: &ReducedHamiltonian) -> Result<Self> {
        let dense = h.to_dense();
        let eig = SymmetricEigen::try_new(dense.clone(), f64::EPSILON, 0)
            .ok_or_else(|| Error::Diagonalization("symmetric eigensolver did not converge".into()))?;
        let v = eig.eigenvectors;
        let lambda = eig.eigenvalues;
        let reconstructed = &v * DMatrix::from_diagonal(&lambda) * v.transpose();
        let recon = (reconstructed - &dense).amax();
        let ortho = (v.transpose() * &v - DMatrix::identity(v.ncols(), v.ncols())).amax();
        if !(recon < SPECTRAL_TOL && ortho < SPECTRAL_TOL) {
            return Err(Error::Diagonalization(format!(
                "reconstruction residual {recon:e}, orthogonality residual {ortho:e}"
            )));
        }
        Ok(Self {
            eigenvalues: lambda,
            eigenvectors: v,
        })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Evolves `psi` forward by `t`.
    pub fn evolve(&self, psi: &Wavefunction, t: f64) -> Wavefunction {
        Evolution::new(self, psi).state_at(psi.time + t)
    }
}

/// Evolves `psi0` by `t ≥ 0`. The result carries time `psi0.time + t`.
pub fn evolve(h: &ReducedHamiltonian, psi0: &Wavefunction, t: f64) -> Result<Wavefunction> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("evolution time must be >= 0, got {t}")));
    }
    Ok(SpectralDecomposition::new(h)?.evolve(psi0, t))
}

/// A fixed initial state expanded in the eigenbasis, so that any single
/// amplitude `ψ_t(x) = Σ_k V[x,k] e^{-iλ_k (t-t₀)} c_k` costs `O(dim)`.
#[derive(Debug, Clone)]
pub struct Evolution {
    spectral: SpectralDecomposition,
    initial: Wavefunction,
    coefficients: Vec<C64>,
}

impl Evolution {
    pub fn new(spectral: &SpectralDecomposition, psi0: &Wavefunction) -> Self {
        let v = &spectral.eigenvectors;
        let coefficients = (0..spectral.dim())
            .map(|k| {
                v.column(k)
                    .iter()
                    .zip(&psi0.amplitudes)
                    .map(|(&vk, &a)| a * vk)
                    .sum()
            })
            .collect();
        Self {
            spectral: spectral.clone(),
            initial: psi0.clone(),
            coefficients,
        }
    }

    pub fn dim(&self) -> usize {
        self.spectral.dim()
    }

    fn phased(&self, t: f64) -> Vec<C64> {
        let dt = t - self.initial.time;
        self.spectral
            .eigenvalues
            .iter()
            .zip(&self.coefficients)
            .map(|(&l, &c)| c * C64::from_polar(1.0, -l * dt))
            .collect()
    }

    /// Zero elapsed time returns the initial amplitudes bit for bit.
    pub fn amplitude_at(&self, site: usize, t: f64) -> C64 {
        if t == self.initial.time {
            return self.initial.amplitudes[site];
        }
        let row = self.spectral.eigenvectors.row(site);
        row.iter().zip(self.phased(t)).map(|(&v, c)| c * v).sum()
    }

    /// Amplitudes at several sites sharing one phase computation.
    pub fn amplitudes_at(&self, sites: &[usize], t: f64) -> Vec<C64> {
        if t == self.initial.time {
            return sites.iter().map(|&x| self.initial.amplitudes[x]).collect();
        }
        let phased = self.phased(t);
        sites
            .iter()
            .map(|&x| {
                self.spectral
                    .eigenvectors
                    .row(x)
                    .iter()
                    .zip(&phased)
                    .map(|(&v, &c)| c * v)
                    .sum()
            })
            .collect()
    }

    pub fn state_at(&self, t: f64) -> Wavefunction {
        if t == self.initial.time {
            return self.initial.clone();
        }
        let phased = self.phased(t);
        let v = &self.spectral.eigenvectors;
        let amplitudes = (0..v.nrows())
            .map(|x| v.row(x).iter().zip(&phased).map(|(&vx, &c)| c * vx).sum())
            .collect();
        Wavefunction {
            time: t,
            amplitudes,
        }
    }
}

/// One point of an amplitude time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeSample {
    pub t: f64,
    pub value: C64,
}

/// Amplitude at `site` for every time in `grid`, which must be strictly
/// increasing.
pub fn amplitude_series(
    h: &ReducedHamiltonian,
    psi0: &Wavefunction,
    grid: &[f64],
    site: PairState,
) -> Result<Vec<AmplitudeSample>> {
    if grid.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
        return Err(Error::InvalidArgument("time grid must be strictly increasing".into()));
    }
    let i = h.indexing().index_of(site).ok_or(Error::InvalidSite {
        site,
        s: h.config().s(),
    })?;
    let spectral = SpectralDecomposition::new(h)?;
    let evo = Evolution::new(&spectral, psi0);
    Ok(grid
        .iter()
        .map(|&t| AmplitudeSample {
            t,
            value: evo.amplitude_at(i, t),
        })
        .collect())
}

/// `0, dt, 2dt, …` up to and including `t_max` (within half a step).
pub fn uniform_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if dt.is_nan() || dt <= 0.0 || t_max.is_nan() || t_max < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "time grid needs dt > 0 and t_max >= 0, got dt = {dt}, t_max = {t_max}"
        )));
    }
    let steps = (t_max / dt + 0.5).floor() as usize;
    Ok((0..=steps).map(|k| k as f64 * dt).collect())
}

/// Writes `t,re,im,abs` rows.
pub fn write_series_csv<W: Write>(mut w: W, series: &[AmplitudeSample]) -> Result<()> {
    writeln!(w, "t,re,im,abs")?;
    for s in series {
        writeln!(
            w,
            "{},{},{},{}",
            f64_17(s.t),
            f64_17(s.value.re),
            f64_17(s.value.im),
            f64_17(s.value.norm())
        )?;
    }
    Ok(())
}

/// `ψ` tabulated on `0, dt, …, steps·dt`, row-major by time.
#[derive(Debug, Clone)]
pub struct PsiGrid {
    dt: f64,
    dim: usize,
    data: Vec<C64>,
}

impl PsiGrid {
    pub fn new(evolution: &Evolution, dt: f64, steps: usize) -> Self {
        let dim = evolution.dim();
        let data = (0..=steps)
            .into_par_iter()
            .flat_map_iter(|k| evolution.state_at(k as f64 * dt).amplitudes)
            .collect();
        Self { dt, dim, data }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps; there are `steps() + 1` tabulated times.
    pub fn steps(&self) -> usize {
        self.data.len() / self.dim - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn row(&self, k: usize) -> &[C64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn wavefunction(&self, k: usize) -> Wavefunction {
        Wavefunction {
            time: self.time(k),
            amplitudes: self.row(k).to_vec(),
        }
    }
}
