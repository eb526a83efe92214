//! Hopping matrices on the pair lattice.
//!
//! The full model acts on `span{|(x1,x2),ζ⟩}` with `ζ = ±1` the register
//! (ancilla) state. A hop of either walker across link `x` (between sites
//! `x` and `x+1`) carries `-1/2` times the gate `U_x`: `σ₁` on link `a`,
//! `σ₃` on link `b`, identity elsewhere. [`SectorHamiltonian`] builds this
//! operator densely.
//!
//! The projector onto `|(x1,x2), ζ(x1,x2)⟩` with the dressing sign
//! `ζ(x1,x2) = (-1)^{θ(x1-a)+θ(x2-a)}` commutes with it, so evolution from
//! `|(1,2),+1⟩` stays on that subspace. [`ReducedHamiltonian`] is the operator
//! restricted there: `-1/2` on every lattice edge, except `+1/2` on the edges
//! `(x1,b)–(x1,b+1)` with `x1 ≤ a`.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fmt::f64_17;
use crate::lattice::{enumerate_sites, neighbours, ChainConfig, PairState, SiteIndexing};
use crate::C64;

/// Coefficient of every hop in the chain Hamiltonian.
pub const HOPPING: f64 = -0.5;

/// Largest chain handled by the dense verification routines.
pub const MAX_DENSE_CHAIN: usize = 40;

/// Tolerance used by [`verify_conservation`].
pub const CONSERVATION_TOL: f64 = 1e-12;

/// Real symmetric hopping matrix on the invariant subspace, stored as sorted
/// adjacency rows over the dense site indices.
#[derive(Debug, Clone)]
pub struct ReducedHamiltonian {
    config: ChainConfig,
    indexing: SiteIndexing,
    rows: Vec<Vec<(usize, f64)>>,
}

impl ReducedHamiltonian {
    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn indexing(&self) -> &SiteIndexing {
        &self.indexing
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Nonzero entries of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|k| self.rows[i][k].1)
            .unwrap_or(0.0)
    }

    /// Entry between two pair sites; zero for non-neighbours or off-lattice sites.
    pub fn entry_between(&self, p: PairState, q: PairState) -> f64 {
        match (self.indexing.index_of(p), self.indexing.index_of(q)) {
            (Some(i), Some(j)) => self.entry(i, j),
            _ => 0.0,
        }
    }

    /// Iterates over undirected edges `(i, j, value)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .filter(move |&&(j, _)| j > i)
                .map(move |&(j, v)| (i, j, v))
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Sparse matrix-vector product `h ψ`.
    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| psi[j] * v).sum())
            .collect()
    }

    /// Writes the nonzero entries as `row,col,value` CSV (both triangles).
    pub fn write_coo_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,col,value")?;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                writeln!(w, "{i},{j},{}", f64_17(v))?;
            }
        }
        Ok(())
    }
}

/// The sign `ζ(x1,x2) = (-1)^{θ(x1-a)+θ(x2-a)}` pairing each position with a
/// register state inside the invariant subspace.
///
/// In the free variant nothing flips the register, so the sign is `+1`
/// everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DressingSign {
    flip_link: Option<usize>,
}

impl DressingSign {
    pub fn new(config: &ChainConfig) -> Self {
        Self {
            flip_link: (!config.is_free()).then_some(config.a()),
        }
    }

    /// `+1` when both walkers are on the same side of link `a`, `-1` otherwise.
    pub fn sign(&self, p: PairState) -> i8 {
        let Some(a) = self.flip_link else {
            return 1;
        };
        let crossed = usize::from(p.x1() > a) + usize::from(p.x2() > a);
        if crossed % 2 == 0 {
            1
        } else {
            -1
        }
    }
}

/// Whether the edge `p–q` lies on link `b` with the trailing walker at or
/// before link `a`, which is where the reduced hopping flips sign.
fn is_flipped_edge(config: &ChainConfig, p: PairState, q: PairState) -> bool {
    if config.is_free() || p.x1() != q.x1() || p.x1() > config.a() {
        return false;
    }
    let b = config.b();
    (p.x2() == b && q.x2() == b + 1) || (p.x2() == b + 1 && q.x2() == b)
}

/// Builds the reduced hopping matrix for `config`.
///
/// In the free variant every edge carries `-1/2`, i.e. the finite-difference
/// Laplacian on the pair lattice.
pub fn build_reduced(config: &ChainConfig) -> ReducedHamiltonian {
    let indexing = enumerate_sites(config);
    let rows = indexing
        .sites()
        .iter()
        .map(|&p| {
            let mut row: Vec<(usize, f64)> = neighbours(p, config)
                .into_iter()
                .map(|q| {
                    let v = if is_flipped_edge(config, p, q) { -HOPPING } else { HOPPING };
                    (indexing.index_of(q).expect("neighbour on lattice"), v)
                })
                .collect();
            row.sort_unstable_by_key(|&(j, _)| j);
            row
        })
        .collect();
    ReducedHamiltonian {
        config: *config,
        indexing,
        rows,
    }
}

/// The edges on which the reduced matrix is `+1/2`: `(x1,b)–(x1,b+1)` for
/// `x1 = 1..=a`. Empty for the free variant.
pub fn flipped_edges(config: &ChainConfig) -> Vec<(PairState, PairState)> {
    if config.is_free() {
        return Vec::new();
    }
    let b = config.b();
    (1..=config.a())
        .map(|x1| {
            (
                PairState::new(x1, b).expect("x1 <= a < b"),
                PairState::new(x1, b + 1).expect("x1 < b + 1"),
            )
        })
        .collect()
}

/// Dense two-excitation operator with the register.
///
/// Basis vector `|(x1,x2),ζ⟩` sits at index `2·i + z` where `i` is the dense
/// site index and `z = 0` for `ζ = +1`, `z = 1` for `ζ = -1`.
#[derive(Debug, Clone)]
pub struct SectorHamiltonian {
    config: ChainConfig,
    matrix: DMatrix<f64>,
}

impl SectorHamiltonian {
    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Basis index of `|site i, ζ⟩`.
    pub fn basis_index(site: usize, zeta: i8) -> usize {
        2 * site + usize::from(zeta < 0)
    }
}

#[derive(Clone, Copy)]
enum Gate {
    Identity,
    Flip,
    Phase,
}

fn gate_on_link(config: &ChainConfig, link: usize) -> Gate {
    if config.is_free() {
        Gate::Identity
    } else if link == config.a() {
        Gate::Flip
    } else if link == config.b() {
        Gate::Phase
    } else {
        Gate::Identity
    }
}

/// Builds the dense operator on `|(x1,x2),ζ⟩` for `s ≤ 40`.
pub fn build_sector(config: &ChainConfig) -> Result<SectorHamiltonian> {
    if config.s() > MAX_DENSE_CHAIN {
        return Err(Error::InvalidArgument(format!(
            "dense sector construction limited to s <= {MAX_DENSE_CHAIN}, got {}",
            config.s()
        )));
    }
    let idx = enumerate_sites(config);
    let n = 2 * idx.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, &p) in idx.sites().iter().enumerate() {
        // Only rightward hops; the gates are involutions, so the leftward
        // hop is the transpose.
        for q in neighbours(p, config) {
            let link = if q.x1() == p.x1() + 1 {
                p.x1()
            } else if q.x2() == p.x2() + 1 {
                p.x2()
            } else {
                continue;
            };
            let j = idx.index_of(q).expect("neighbour on lattice");
            for zeta in [1i8, -1] {
                let from = SectorHamiltonian::basis_index(i, zeta);
                let (to, coeff) = match gate_on_link(config, link) {
                    Gate::Identity => (SectorHamiltonian::basis_index(j, zeta), HOPPING),
                    Gate::Flip => (SectorHamiltonian::basis_index(j, -zeta), HOPPING),
                    Gate::Phase => (SectorHamiltonian::basis_index(j, zeta), HOPPING * f64::from(zeta)),
                };
                m[(to, from)] += coeff;
                m[(from, to)] += coeff;
            }
        }
    }
    Ok(SectorHamiltonian {
        config: *config,
        matrix: m,
    })
}

/// Isometry `E` (sector dimension × site count) sending the reduced basis
/// vector of site `p` to `|p, ζ(p)⟩`.
pub fn embed_plus(sign: &DressingSign, idx: &SiteIndexing) -> DMatrix<f64> {
    let n = idx.len();
    let mut e = DMatrix::zeros(2 * n, n);
    for (i, &p) in idx.sites().iter().enumerate() {
        e[(SectorHamiltonian::basis_index(i, sign.sign(p)), i)] = 1.0;
    }
    e
}

/// Residuals of the invariant-subspace check.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ConservationReport {
    /// Frobenius norm of `[H_sector, P₊]`.
    pub commutator_norm: f64,
    /// Frobenius norm of `Eᵀ H_sector E − h₊`.
    pub reduction_residual: f64,
    pub tolerance: f64,
}

impl ConservationReport {
    pub fn passed(&self) -> bool {
        self.commutator_norm < self.tolerance && self.reduction_residual < self.tolerance
    }
}

/// Checks that `P₊` commutes with the sector operator and that the sector
/// operator compressed to the range of `P₊` is exactly [`build_reduced`].
pub fn verify_conservation(config: &ChainConfig) -> Result<ConservationReport> {
    let sector = build_sector(config)?;
    let reduced = build_reduced(config).to_dense();
    let e = embed_plus(&DressingSign::new(config), &enumerate_sites(config));
    let projector = &e * e.transpose();
    let h = sector.matrix();
    let commutator = h * &projector - &projector * h;
    let compressed = e.transpose() * h * &e;
    Ok(ConservationReport {
        commutator_norm: commutator.norm(),
        reduction_residual: (compressed - reduced).norm(),
        tolerance: CONSERVATION_TOL,
    })
}

/// For `b = a + 1`, the diagonal signs `(-1)^{θ(x2-b)}` that conjugate the
/// interacting reduced matrix into the free one. `None` otherwise.
pub fn kickback_gauge(config: &ChainConfig) -> Option<Vec<f64>> {
    if config.is_free() || config.b() != config.a() + 1 {
        return None;
    }
    let b = config.b();
    Some(
        enumerate_sites(config)
            .sites()
            .iter()
            .map(|p| if p.x2() > b { -1.0 } else { 1.0 })
            .collect(),
    )
}

/// Largest entrywise deviation of `D h₊ D` from the free Laplacian, when the
/// gauge exists.
pub fn gauge_residual(config: &ChainConfig) -> Option<f64> {
    let d = kickback_gauge(config)?;
    let h = build_reduced(config);
    let free = build_reduced(&config.to_free());
    let mut worst = 0.0f64;
    for i in 0..h.dim() {
        for &(j, v) in h.row(i) {
            worst = worst.max((d[i] * v * d[j] - free.entry(i, j)).abs());
        }
    }
    Some(worst)
}
