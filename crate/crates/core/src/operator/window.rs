use std::collections::HashMap;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::disorder::{DisorderRealization, IndexRange};
use crate::error::{domain, Error, Result};
use crate::params::BandParameters;

/// Which operator a window realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    SFull,
    UFull,
    SPlus,
    UPlus,
    Cmv,
    DDiagonal,
    /// Any other unitary handed in as a dense matrix.
    Dense,
}

impl Flavor {
    pub fn name(self) -> &'static str {
        match self {
            Flavor::SFull => "S-full",
            Flavor::UFull => "U-full",
            Flavor::SPlus => "S-plus",
            Flavor::UPlus => "U-plus",
            Flavor::Cmv => "CMV",
            Flavor::DDiagonal => "D-diagonal",
            Flavor::Dense => "dense",
        }
    }

    fn with_phases(self) -> Flavor {
        match self {
            Flavor::SFull => Flavor::UFull,
            Flavor::SPlus => Flavor::UPlus,
            other => other,
        }
    }
}

/// How the truncated two-site blocks at the window edges are closed up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Straddling blocks replaced by the scalar `-1` (half-lattice pattern on
    /// the left, its mirror on the right).
    ScalarCompletion,
    /// Periodic closure of the straddling block.
    Wrap,
}

/// Sparse rows: `(column, value)` pairs in increasing column order.
pub(crate) type SparseRows = Vec<Vec<(usize, Complex64)>>;

/// Identity tolerance for a window of the given size.
pub fn unitarity_tolerance(size: usize) -> f64 {
    if size <= 500 {
        1e-12
    } else {
        1e-10
    }
}

/// A finite square piece of one of the band unitaries, stored densely with
/// a sparse row index for band-aware products.
#[derive(Debug, Clone)]
pub struct BandUnitaryWindow {
    matrix: Mat<Complex64>,
    rows: SparseRows,
    offset: i64,
    flavor: Flavor,
    boundary: Boundary,
    params: Option<BandParameters>,
    phases: Option<DisorderRealization>,
    alpha: f64,
}

/// Product of two sparse-row factors.
pub(crate) fn sparse_product(a: &SparseRows, b: &SparseRows) -> SparseRows {
    a.iter()
        .map(|row| {
            let mut acc: Vec<(usize, Complex64)> = Vec::with_capacity(6);
            for &(k, x) in row {
                for &(j, y) in &b[k] {
                    match acc.iter_mut().find(|(c, _)| *c == j) {
                        Some(slot) => slot.1 += x * y,
                        None => acc.push((j, x * y)),
                    }
                }
            }
            acc.retain(|(_, v)| *v != Complex64::new(0.0, 0.0));
            acc.sort_by_key(|(c, _)| *c);
            acc
        })
        .collect()
}

/// Sparse factor made of 2×2 blocks on index pairs `(i, j)` plus 1×1 scalars.
pub(crate) fn pair_factor(
    n: usize,
    pairs: impl IntoIterator<Item = (usize, usize, [[Complex64; 2]; 2])>,
    scalars: impl IntoIterator<Item = (usize, Complex64)>,
) -> SparseRows {
    let mut rows: SparseRows = vec![Vec::new(); n];
    for (i, j, blk) in pairs {
        rows[i].push((i, blk[0][0]));
        rows[i].push((j, blk[0][1]));
        rows[j].push((i, blk[1][0]));
        rows[j].push((j, blk[1][1]));
    }
    for (i, s) in scalars {
        rows[i].push((i, s));
    }
    for r in &mut rows {
        r.sort_by_key(|(c, _)| *c);
    }
    rows
}

fn real_block(m: [[f64; 2]; 2]) -> [[Complex64; 2]; 2] {
    [
        [m[0][0].into(), m[0][1].into()],
        [m[1][0].into(), m[1][1].into()],
    ]
}

fn dense_from_rows(rows: &SparseRows) -> Mat<Complex64> {
    let n = rows.len();
    let mut m = Mat::<Complex64>::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            m[(i, j)] = v;
        }
    }
    m
}

fn rows_from_dense(m: &Mat<Complex64>) -> SparseRows {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .filter_map(|j| {
                    let v = m[(i, j)];
                    (v != Complex64::new(0.0, 0.0)).then_some((j, v))
                })
                .collect()
        })
        .collect()
}

/// max-norm of `M M* - I` computed from the sparse rows.
pub(crate) fn sparse_unitarity_defect(rows: &SparseRows) -> f64 {
    let n = rows.len();
    let mut by_col: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, row) in rows.iter().enumerate() {
        for &(j, _) in row {
            by_col[j].push(i);
        }
    }
    let mut defect: f64 = 0.0;
    let mut gram: HashMap<usize, Complex64> = HashMap::new();
    for (i, row) in rows.iter().enumerate() {
        gram.clear();
        for &(k, _) in row {
            for &j in &by_col[k] {
                gram.entry(j).or_insert_with(|| {
                    // row_i · conj(row_j)
                    let mut s = Complex64::new(0.0, 0.0);
                    let (mut p, mut q) = (0, 0);
                    let (ri, rj) = (&rows[i], &rows[j]);
                    while p < ri.len() && q < rj.len() {
                        match ri[p].0.cmp(&rj[q].0) {
                            std::cmp::Ordering::Less => p += 1,
                            std::cmp::Ordering::Greater => q += 1,
                            std::cmp::Ordering::Equal => {
                                s += ri[p].1 * rj[q].1.conj();
                                p += 1;
                                q += 1;
                            }
                        }
                    }
                    s
                });
            }
        }
        let diag = gram.get(&i).copied().unwrap_or_default();
        defect = defect.max((diag - 1.0).norm());
        for (&j, &g) in &gram {
            if j != i {
                defect = defect.max(g.norm());
            }
        }
    }
    defect
}

/// The two-site rotation factors whose product is `S(t)`:
/// `A` couples `(2m, 2m+1)`, `B` couples `(2m-1, 2m)` in lattice indices.
fn s_factors(p: &BandParameters, n: usize, boundary: Boundary) -> (SparseRows, SparseRows) {
    let (r, t) = (p.r(), p.t());
    let a_blk = real_block([[r, t], [-t, r]]);
    let b_blk = real_block([[r, -t], [t, r]]);
    let a = pair_factor(n, (0..n).step_by(2).map(|i| (i, i + 1, a_blk)), []);
    let interior = (1..n - 1).step_by(2).map(|i| (i, i + 1, b_blk));
    let b = match boundary {
        Boundary::ScalarCompletion => pair_factor(
            n,
            interior,
            [(0, Complex64::new(-1.0, 0.0)), (n - 1, Complex64::new(-1.0, 0.0))],
        ),
        Boundary::Wrap => pair_factor(n, interior.chain([(n - 1, 0, b_blk)]), []),
    };
    (a, b)
}

/// Entry `⟨i|S|j⟩` of the infinite free operator at lattice indices.
pub fn s_full_entry(p: &BandParameters, i: i64, j: i64) -> f64 {
    let (r, t) = (p.r(), p.t());
    let d = j - i;
    if i.rem_euclid(2) == 0 {
        match d {
            -1 | 1 => r * t,
            0 => r * r,
            2 => -(t * t),
            _ => 0.0,
        }
    } else {
        match d {
            -2 => -(t * t),
            -1 | 1 => -(r * t),
            0 => r * r,
            _ => 0.0,
        }
    }
}

/// Entry `⟨i|S⁺|j⟩` of the half-lattice free operator, `i, j ≥ 0`.
pub fn s_plus_entry(p: &BandParameters, i: i64, j: i64) -> f64 {
    let (r, t) = (p.r(), p.t());
    match (i, j) {
        (0, 0) => -r,
        (0, 1) => r * t,
        (0, 2) => -(t * t),
        (1, 0) => t,
        (1, 1) => r * r,
        (1, 2) => -(r * t),
        (0, _) | (1, _) => 0.0,
        _ if j < 0 => 0.0,
        _ => s_full_entry(p, i, j),
    }
}

impl BandUnitaryWindow {
    fn assemble(
        rows: SparseRows,
        offset: i64,
        flavor: Flavor,
        boundary: Boundary,
        params: Option<BandParameters>,
    ) -> Result<Self> {
        let w = BandUnitaryWindow {
            matrix: dense_from_rows(&rows),
            rows,
            offset,
            flavor,
            boundary,
            params,
            phases: None,
            alpha: 0.0,
        };
        w.check_unitary()?;
        Ok(w)
    }

    /// Wraps a dense unitary matrix; refuses it if the unitarity defect
    /// exceeds the size-dependent tolerance.
    pub fn from_dense(matrix: Mat<Complex64>, offset: i64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(domain("window matrix must be square and nonempty"));
        }
        let rows = rows_from_dense(&matrix);
        Self::assemble(rows, offset, Flavor::Dense, Boundary::ScalarCompletion, None)
    }

    fn check_unitary(&self) -> Result<()> {
        let defect = self.unitarity_defect();
        let threshold = unitarity_tolerance(self.size());
        if !(defect < threshold) {
            return Err(Error::Construction(format!(
                "{} window of size {} ({:?} boundary) is not unitary: defect {defect:e}",
                self.flavor.name(),
                self.size(),
                self.boundary
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &Mat<Complex64> {
        &self.matrix
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    /// Lattice index of row/column 0.
    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn index_range(&self) -> IndexRange {
        IndexRange {
            lo: self.offset,
            hi: self.offset + self.size() as i64 - 1,
        }
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn params(&self) -> Option<BandParameters> {
        self.params
    }

    pub fn phases(&self) -> Option<&DisorderRealization> {
        self.phases.as_ref()
    }

    /// Spectral shift folded into the diagonal phases.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn seed(&self) -> Option<u64> {
        self.phases.as_ref().map(|p| p.seed)
    }

    pub fn local(&self, lattice: i64) -> Option<usize> {
        let i = lattice.checked_sub(self.offset)?;
        (0..self.size() as i64).contains(&i).then_some(i as usize)
    }

    /// Entry at lattice indices; zero outside the window.
    pub fn entry(&self, row: i64, col: i64) -> Complex64 {
        match (self.local(row), self.local(col)) {
            (Some(i), Some(j)) => self.matrix[(i, j)],
            _ => Complex64::new(0.0, 0.0),
        }
    }

    pub fn row(&self, local: usize) -> &[(usize, Complex64)] {
        &self.rows[local]
    }

    /// Local rows unaffected by the edge closure.
    pub fn interior_rows(&self) -> std::ops::Range<usize> {
        let n = self.size();
        match (self.flavor, self.boundary) {
            (_, Boundary::Wrap) => 0..n,
            (Flavor::SFull | Flavor::UFull, _) => 2..n - 2,
            (Flavor::SPlus | Flavor::UPlus | Flavor::Cmv, _) => 0..n - 2,
            _ => 0..n,
        }
    }

    pub fn unitarity_defect(&self) -> f64 {
        sparse_unitarity_defect(&self.rows)
    }

    /// Band-aware `M x`.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.size());
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Band-aware `M* x`.
    pub fn apply_adjoint(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.size());
        let mut out = vec![Complex64::new(0.0, 0.0); self.size()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                out[j] += v.conj() * x[i];
            }
        }
        out
    }

    /// Canonical basis vector at a lattice index.
    pub fn basis(&self, lattice: i64) -> Result<Vec<Complex64>> {
        let i = self.local(lattice).ok_or_else(|| {
            let r = self.index_range();
            Error::OutOfRange {
                index: lattice,
                lo: r.lo,
                hi: r.hi,
            }
        })?;
        let mut v = vec![Complex64::new(0.0, 0.0); self.size()];
        v[i] = Complex64::new(1.0, 0.0);
        Ok(v)
    }

    /// Determinant via LU.
    pub fn determinant(&self) -> Complex64 {
        self.matrix.determinant()
    }
}

fn check_even_size(size: usize) -> Result<()> {
    if size < 4 || size % 2 != 0 {
        return Err(domain(format!("window size {size} must be even and at least 4")));
    }
    Ok(())
}

/// Window of the free operator `S(t)` covering lattice indices
/// `offset..offset + size`. `offset` must be even so that the two-site
/// blocks align with the lattice.
pub fn build_s_window(
    p: &BandParameters,
    size: usize,
    offset: i64,
    boundary: Boundary,
) -> Result<BandUnitaryWindow> {
    check_even_size(size)?;
    if offset.rem_euclid(2) != 0 {
        return Err(domain(format!("window offset {offset} must be even")));
    }
    let (a, b) = s_factors(p, size, boundary);
    BandUnitaryWindow::assemble(sparse_product(&a, &b), offset, Flavor::SFull, boundary, Some(*p))
}

/// Window of the half-lattice operator `S⁺` on indices `0..size`.
pub fn build_s_plus(p: &BandParameters, size: usize) -> Result<BandUnitaryWindow> {
    check_even_size(size)?;
    let (a, b) = s_factors(p, size, Boundary::ScalarCompletion);
    BandUnitaryWindow::assemble(
        sparse_product(&a, &b),
        0,
        Flavor::SPlus,
        Boundary::ScalarCompletion,
        Some(*p),
    )
}

/// `diag(e^{-i(θ_k + α)}) · base`.
pub fn apply_phases(
    base: &BandUnitaryWindow,
    omega: &DisorderRealization,
    alpha: f64,
) -> Result<BandUnitaryWindow> {
    let need = base.index_range();
    let have = omega.range();
    if !have.covers(&need) {
        let bad = if need.lo < have.lo { need.lo } else { need.hi };
        return Err(Error::OutOfRange {
            index: bad,
            lo: have.lo,
            hi: have.hi,
        });
    }
    let rows: SparseRows = base
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let theta = omega.phases[(need.lo + i as i64 - have.lo) as usize];
            let ph = Complex64::from_polar(1.0, -(theta + alpha));
            row.iter().map(|&(j, v)| (j, ph * v)).collect()
        })
        .collect();
    let mut w = BandUnitaryWindow::assemble(
        rows,
        base.offset,
        base.flavor.with_phases(),
        base.boundary,
        base.params,
    )?;
    w.phases = Some(omega.restrict(need)?);
    w.alpha = base.alpha + alpha;
    Ok(w)
}

/// `U_ω = D_ω S` on `range` with even lower bound, scalar-completed edges.
pub fn build_u_window(
    p: &BandParameters,
    omega: &DisorderRealization,
    range: IndexRange,
    alpha: f64,
) -> Result<BandUnitaryWindow> {
    let s = build_s_window(p, range.len(), range.lo, Boundary::ScalarCompletion)?;
    apply_phases(&s, omega, alpha)
}

/// `U⁺_ω = D⁺_ω S⁺` on `0..size`.
pub fn build_u_plus(
    p: &BandParameters,
    omega: &DisorderRealization,
    size: usize,
    alpha: f64,
) -> Result<BandUnitaryWindow> {
    let s = build_s_plus(p, size)?;
    apply_phases(&s, omega, alpha)
}

/// The pure phase matrix `D_ω` on `range` (the `t → 0` limit).
pub fn build_diagonal(omega: &DisorderRealization, range: IndexRange) -> Result<BandUnitaryWindow> {
    let sub = omega.restrict(range)?;
    let rows: SparseRows = sub
        .phases
        .iter()
        .enumerate()
        .map(|(i, &th)| vec![(i, Complex64::from_polar(1.0, -th))])
        .collect();
    let mut w = BandUnitaryWindow::assemble(
        rows,
        range.lo,
        Flavor::DDiagonal,
        Boundary::ScalarCompletion,
        None,
    )?;
    w.phases = Some(sub);
    Ok(w)
}

/// CMV matrix `C = L M` for constant-modulus Verblunski coefficients.
///
/// `L = Θ₀ ⊕ Θ₂ ⊕ …`, `M = 1 ⊕ Θ₁ ⊕ Θ₃ ⊕ …` with
/// `Θ_k = [[ᾱ_k, ρ], [ρ, -α_k]]`; the block of `M` cut by the far edge is
/// replaced by the scalar 1. Needs `η_0..η_{size-2}`.
pub fn build_cmv(
    v: &crate::disorder::VerblunskiPhaseSequence,
    size: usize,
) -> Result<BandUnitaryWindow> {
    check_even_size(size)?;
    if v.len() + 1 < size {
        return Err(domain(format!(
            "CMV window of size {size} needs {} Verblunski phases, got {}",
            size - 1,
            v.len()
        )));
    }
    let p = BandParameters::from_r(v.r)?;
    let rho = Complex64::new(p.t(), 0.0);
    let alphas = v.coefficients();
    let theta = |k: usize| [[alphas[k].conj(), rho], [rho, -alphas[k]]];
    let one = Complex64::new(1.0, 0.0);
    let l = pair_factor(size, (0..size).step_by(2).map(|k| (k, k + 1, theta(k))), []);
    let m = pair_factor(
        size,
        (1..size - 1).step_by(2).map(|k| (k, k + 1, theta(k))),
        [(0, one), (size - 1, one)],
    );
    BandUnitaryWindow::assemble(
        sparse_product(&l, &m),
        0,
        Flavor::Cmv,
        Boundary::ScalarCompletion,
        Some(p),
    )
}
