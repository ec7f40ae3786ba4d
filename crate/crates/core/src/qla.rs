//! Dense complex linear algebra on tensor-product Hilbert spaces.
//!
//! Every [`Operator`] carries the [`SystemLayout`] it lives on. The first
//! subsystem of a layout is the leftmost tensor factor, so its index varies
//! slowest in the flattened basis.
//!
//! All Hamiltonians of the battery model are real symmetric. Routines that
//! diagonalize or reconstruct operators detect a vanishing imaginary part and
//! switch to the real symmetric solver, which is several times faster at the
//! sizes used here.

use std::sync::atomic::{AtomicUsize, Ordering};

use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Default ceiling on the flattened Hilbert-space dimension (2^13).
pub const DEFAULT_MAX_TOTAL_DIM: usize = 1 << 13;

/// Relative tolerance for structural checks (Hermiticity, unitarity, trace).
pub const STRUCTURAL_TOL: f64 = 1e-10;

static MAX_TOTAL_DIM: AtomicUsize = AtomicUsize::new(DEFAULT_MAX_TOTAL_DIM);

/// Sets the process-wide ceiling on `total_dim` for new layouts.
pub fn set_max_total_dim(max: usize) {
    MAX_TOTAL_DIM.store(max.max(1), Ordering::Relaxed);
}

pub fn max_total_dim() -> usize {
    MAX_TOTAL_DIM.load(Ordering::Relaxed)
}

/// What a tensor factor represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Battery,
    /// Charger spin `n`, counted from 1 at the end coupled to the battery.
    Charger(usize),
    Memory,
    /// Unlabelled factor, used for generic operators.
    Other(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Subsystem {
    pub role: Role,
    pub dim: usize,
}

/// Ordered list of tensor factors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemLayout {
    subsystems: Vec<Subsystem>,
    total_dim: usize,
}

impl SystemLayout {
    pub fn new(subsystems: Vec<Subsystem>) -> Result<Self> {
        if subsystems.is_empty() {
            return Err(Error::InvalidLayout("layout has no subsystems".into()));
        }
        let mut total: usize = 1;
        for (i, s) in subsystems.iter().enumerate() {
            if s.dim == 0 {
                return Err(Error::InvalidLayout(format!("{:?} has dimension 0", s.role)));
            }
            if let Role::Charger(0) = s.role {
                return Err(Error::InvalidLayout("charger sites are numbered from 1".into()));
            }
            if subsystems[..i].iter().any(|o| o.role == s.role) {
                return Err(Error::InvalidLayout(format!("duplicate role {:?}", s.role)));
            }
            total = total
                .checked_mul(s.dim)
                .filter(|&t| t <= max_total_dim())
                .ok_or(Error::ResourceLimit {
                    requested: total.saturating_mul(s.dim),
                    max: max_total_dim(),
                })?;
        }
        Ok(Self {
            subsystems,
            total_dim: total,
        })
    }

    pub fn single(role: Role, dim: usize) -> Self {
        Self::new(vec![Subsystem { role, dim }]).expect("single-factor layout")
    }

    /// Layout of spin-1/2 factors with the given roles.
    pub fn qubits(roles: &[Role]) -> Result<Self> {
        Self::new(roles.iter().map(|&role| Subsystem { role, dim: 2 }).collect())
    }

    /// Unlabelled factors `Other(0), Other(1), ...`.
    pub fn anonymous(dims: &[usize]) -> Result<Self> {
        Self::new(
            dims.iter()
                .enumerate()
                .map(|(i, &dim)| Subsystem {
                    role: Role::Other(i),
                    dim,
                })
                .collect(),
        )
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn position(&self, role: Role) -> Option<usize> {
        self.subsystems.iter().position(|s| s.role == role)
    }

    pub fn contains(&self, role: Role) -> bool {
        self.position(role).is_some()
    }

    pub fn dim_of(&self, role: Role) -> Result<usize> {
        self.position(role)
            .map(|p| self.subsystems[p].dim)
            .ok_or(Error::UnknownSubsystem(role))
    }

    /// Concatenation `self ⊗ other`. Unlabelled factors of `other` are
    /// renumbered after those of `self`.
    pub fn concat(&self, other: &SystemLayout) -> Result<Self> {
        let offset = self
            .subsystems
            .iter()
            .filter_map(|s| match s.role {
                Role::Other(k) => Some(k + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let mut subs = self.subsystems.clone();
        subs.extend(other.subsystems.iter().map(|s| Subsystem {
            role: match s.role {
                Role::Other(k) => Role::Other(k + offset),
                r => r,
            },
            dim: s.dim,
        }));
        Self::new(subs)
    }

    /// Sub-layout holding `keep`, in this layout's order.
    pub fn restrict(&self, keep: &[Role]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::InvalidLayout("empty subsystem selection".into()));
        }
        for &r in keep {
            if !self.contains(r) {
                return Err(Error::UnknownSubsystem(r));
            }
        }
        Self::new(
            self.subsystems
                .iter()
                .copied()
                .filter(|s| keep.contains(&s.role))
                .collect(),
        )
    }

    /// `(left, dim, right)` extents around the factor at `pos`.
    pub(crate) fn split_at(&self, pos: usize) -> (usize, usize, usize) {
        let left = self.subsystems[..pos].iter().map(|s| s.dim).product();
        let right = self.subsystems[pos + 1..].iter().map(|s| s.dim).product();
        (left, self.subsystems[pos].dim, right)
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.subsystems.len()];
        for i in (0..self.subsystems.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.subsystems[i + 1].dim;
        }
        strides
    }
}

/// Dense square matrix on a [`SystemLayout`].
#[derive(Clone, Debug)]
pub struct Operator {
    layout: SystemLayout,
    entries: Mat<C64>,
}

impl Operator {
    pub fn new(layout: SystemLayout, entries: Mat<C64>) -> Result<Self> {
        let d = layout.total_dim();
        if entries.nrows() != d || entries.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: entries.nrows().max(entries.ncols()),
            });
        }
        Ok(Self { layout, entries })
    }

    pub fn from_fn(layout: SystemLayout, f: impl FnMut(usize, usize) -> C64) -> Self {
        let d = layout.total_dim();
        Self {
            entries: Mat::from_fn(d, d, f),
            layout,
        }
    }

    /// Operator on a single unlabelled factor.
    pub fn from_matrix(entries: Mat<C64>) -> Result<Self> {
        let layout = SystemLayout::single(Role::Other(0), entries.nrows());
        Self::new(layout, entries)
    }

    pub fn zeros(layout: SystemLayout) -> Self {
        let d = layout.total_dim();
        Self {
            entries: Mat::zeros(d, d),
            layout,
        }
    }

    pub fn identity(layout: SystemLayout) -> Self {
        Self::from_fn(layout, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn diagonal(layout: SystemLayout, diag: &[f64]) -> Result<Self> {
        if diag.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.total_dim(),
                found: diag.len(),
            });
        }
        Ok(Self::from_fn(layout, |i, j| {
            if i == j {
                C64::new(diag[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    /// Projector onto a (not necessarily normalized) vector.
    pub fn projector(layout: SystemLayout, psi: &[C64]) -> Result<Self> {
        if psi.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.total_dim(),
                found: psi.len(),
            });
        }
        Ok(Self::from_fn(layout, |i, j| psi[i] * psi[j].conj()))
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &Mat<C64> {
        &self.entries
    }

    pub fn into_matrix(self) -> Mat<C64> {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[(i, j)]
    }

    /// Same entries on a different layout of identical total dimension.
    pub fn with_layout(self, layout: SystemLayout) -> Result<Self> {
        Self::new(layout, self.entries)
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.entries[(i, i)]).sum()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            entries: self.entries.adjoint().to_owned(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale_in_place(C64::new(s, 0.0));
        out
    }

    pub fn scale_in_place(&mut self, s: C64) {
        for j in 0..self.dim() {
            for x in self.entries.col_as_slice_mut(j) {
                *x *= s;
            }
        }
    }

    fn check_same_dim(&self, other: &Operator) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &Operator) -> Result<()> {
        self.check_same_dim(other)?;
        for j in 0..self.dim() {
            let src = other.entries.col_as_slice(j);
            for (x, y) in self.entries.col_as_slice_mut(j).iter_mut().zip(src) {
                *x += y * s;
            }
        }
        Ok(())
    }

    pub fn plus(&self, other: &Operator) -> Result<Self> {
        let mut out = self.clone();
        out.add_scaled(1.0, other)?;
        Ok(out)
    }

    pub fn minus(&self, other: &Operator) -> Result<Self> {
        let mut out = self.clone();
        out.add_scaled(-1.0, other)?;
        Ok(out)
    }

    /// Matrix product; the result keeps `self`'s layout.
    pub fn matmul(&self, other: &Operator) -> Result<Self> {
        self.check_same_dim(other)?;
        let entries = if self.is_real() && other.is_real() {
            let a = real_part(self.entries.as_ref());
            let b = real_part(other.entries.as_ref());
            complexify((&a * &b).as_ref())
        } else {
            &self.entries * &other.entries
        };
        Ok(Self {
            layout: self.layout.clone(),
            entries,
        })
    }

    /// `Tr[self · other]` without forming the product.
    pub fn trace_product(&self, other: &Operator) -> Result<C64> {
        self.check_same_dim(other)?;
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        // Tr[AB] = Σ_ij A_ij B_ji = Σ_j Σ_i A_ij (Bᵀ)_ij
        let bt = other.entries.transpose();
        for j in 0..d {
            let a = self.entries.col_as_slice(j);
            for (i, x) in a.iter().enumerate() {
                acc += x * bt[(i, j)];
            }
        }
        Ok(acc)
    }

    /// `Re Tr[self · rho]` for Hermitian `rho`, using `ρ_ji = conj(ρ_ij)`.
    pub fn expectation(&self, rho: &Operator) -> Result<f64> {
        self.check_same_dim(rho)?;
        let mut acc = 0.0;
        for j in 0..self.dim() {
            for (h, r) in self
                .entries
                .col_as_slice(j)
                .iter()
                .zip(rho.entries.col_as_slice(j))
            {
                acc += h.re * r.re + h.im * r.im;
            }
        }
        Ok(acc)
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.dim() {
            for x in self.entries.col_as_slice(j) {
                m = m.max(x.norm());
            }
        }
        m
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        let mut m = 0.0f64;
        for j in 0..self.dim() {
            for (x, y) in self
                .entries
                .col_as_slice(j)
                .iter()
                .zip(other.entries.col_as_slice(j))
            {
                m = m.max((x - y).norm());
            }
        }
        m
    }

    /// True when every entry has an exactly zero imaginary part.
    pub fn is_real(&self) -> bool {
        (0..self.dim()).all(|j| self.entries.col_as_slice(j).iter().all(|x| x.im == 0.0))
    }

    /// Largest entry of `self - self†`.
    pub fn hermiticity_residual(&self) -> f64 {
        let d = self.dim();
        let mut m = 0.0f64;
        for j in 0..d {
            for i in j..d {
                m = m.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        m
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_residual() <= tol * self.max_abs().max(1.0)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let prod = self.adjoint().matmul(self).expect("same dimension");
        prod.max_abs_diff(&Operator::identity(self.layout.clone())) <= tol
    }

    /// Hermitian, trace one and positive semidefinite, all within `tol`.
    pub fn is_density(&self, tol: f64) -> bool {
        if !self.is_hermitian(tol) || (self.trace() - 1.0).norm() > tol {
            return false;
        }
        match eigenvalues_hermitian(self) {
            Ok(ev) => ev.iter().all(|&l| l >= -tol),
            Err(_) => false,
        }
    }

    /// Largest entry of the commutator `[self, other]`.
    pub fn commutator_norm(&self, other: &Operator) -> Result<f64> {
        let ab = self.matmul(other)?;
        let ba = other.matmul(self)?;
        Ok(ab.max_abs_diff(&ba))
    }

    /// `A · self` with `A` acting on the factor `role`.
    pub fn apply_local(&self, role: Role, a: MatRef<'_, C64>) -> Result<Self> {
        let pos = self.local_pos(role, a)?;
        let (left, d, right) = self.layout.split_at(pos);
        Ok(Self {
            layout: self.layout.clone(),
            entries: left_apply(&self.entries, a, left, d, right),
        })
    }

    /// `A · self · A†` with `A` acting on the factor `role`.
    pub fn conjugate_local(&self, role: Role, a: MatRef<'_, C64>) -> Result<Self> {
        let pos = self.local_pos(role, a)?;
        let (left, d, right) = self.layout.split_at(pos);
        let tmp = left_apply(&self.entries, a, left, d, right);
        Ok(Self {
            layout: self.layout.clone(),
            entries: right_apply_adjoint(&tmp, a, left, d, right),
        })
    }

    fn local_pos(&self, role: Role, a: MatRef<'_, C64>) -> Result<usize> {
        let pos = self.layout.position(role).ok_or(Error::UnknownSubsystem(role))?;
        let d = self.layout.subsystems()[pos].dim;
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: a.nrows(),
            });
        }
        Ok(pos)
    }
}

fn real_part(m: MatRef<'_, C64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re)
}

fn complexify(m: MatRef<'_, f64>) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| C64::new(m[(i, j)], 0.0))
}

fn left_apply(m: &Mat<C64>, a: MatRef<'_, C64>, left: usize, d: usize, right: usize) -> Mat<C64> {
    let n = m.nrows();
    let mut out = Mat::<C64>::zeros(n, m.ncols());
    let mut buf = vec![C64::new(0.0, 0.0); d];
    for c in 0..m.ncols() {
        let src = m.col_as_slice(c);
        let dst = out.col_as_slice_mut(c);
        for l in 0..left {
            for r in 0..right {
                let base = l * d * right + r;
                for (t, b) in buf.iter_mut().enumerate() {
                    *b = src[base + t * right];
                }
                for s in 0..d {
                    let mut acc = C64::new(0.0, 0.0);
                    for (t, b) in buf.iter().enumerate() {
                        acc += a[(s, t)] * b;
                    }
                    dst[base + s * right] = acc;
                }
            }
        }
    }
    out
}

fn right_apply_adjoint(
    m: &Mat<C64>,
    a: MatRef<'_, C64>,
    left: usize,
    d: usize,
    right: usize,
) -> Mat<C64> {
    // (M A†)[:, (l,s,r)] = Σ_t conj(A[s,t]) M[:, (l,t,r)]
    let n = m.nrows();
    let mut out = Mat::<C64>::zeros(n, m.ncols());
    for l in 0..left {
        for r in 0..right {
            for s in 0..d {
                let dst_col = l * d * right + s * right + r;
                for t in 0..d {
                    let coef = a[(s, t)].conj();
                    if coef == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let src = m.col_as_slice(l * d * right + t * right + r);
                    let dst = out.col_as_slice_mut(dst_col);
                    for (x, y) in dst.iter_mut().zip(src) {
                        *x += coef * y;
                    }
                }
            }
        }
    }
    out
}

fn kron(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Mat<C64> {
    let (ra, ca) = (a.nrows(), a.ncols());
    let (rb, cb) = (b.nrows(), b.ncols());
    let mut out = Mat::<C64>::zeros(ra * rb, ca * cb);
    let zero = C64::new(0.0, 0.0);
    for j in 0..ca {
        for i in 0..ra {
            let x = a[(i, j)];
            if x == zero {
                continue;
            }
            for l in 0..cb {
                let dst = out.col_as_slice_mut(j * cb + l);
                for k in 0..rb {
                    dst[i * rb + k] = x * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker product `a ⊗ b` on the concatenated layout.
pub fn tensor_product(a: &Operator, b: &Operator) -> Result<Operator> {
    let layout = a.layout.concat(&b.layout)?;
    Operator::new(layout, kron(a.entries.as_ref(), b.entries.as_ref()))
}

/// `I ⊗ … ⊗ op ⊗ … ⊗ I` with `op` on the factor `site`.
pub fn embed_site_operator(op: &Operator, layout: &SystemLayout, site: Role) -> Result<Operator> {
    embed_operators(layout, &[(site, op.matrix().as_ref())])
}

/// Tensor product of local factors, identity on every factor not listed.
pub fn embed_operators(layout: &SystemLayout, factors: &[(Role, MatRef<'_, C64>)]) -> Result<Operator> {
    for (i, (role, m)) in factors.iter().enumerate() {
        let d = layout.dim_of(*role)?;
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.nrows(),
            });
        }
        if factors[..i].iter().any(|(r, _)| r == role) {
            return Err(Error::InvalidLayout(format!("factor {role:?} given twice")));
        }
    }
    let mut acc: Option<Mat<C64>> = None;
    let mut pending_identity = 1usize;
    for s in layout.subsystems() {
        match factors.iter().find(|(r, _)| *r == s.role) {
            Some((_, m)) => {
                let local = if pending_identity > 1 {
                    kron(identity_mat(pending_identity).as_ref(), *m)
                } else {
                    m.to_owned()
                };
                pending_identity = 1;
                acc = Some(match acc {
                    None => local,
                    Some(prev) => kron(prev.as_ref(), local.as_ref()),
                });
            }
            None => pending_identity *= s.dim,
        }
    }
    let full = match acc {
        None => identity_mat(pending_identity),
        Some(m) if pending_identity > 1 => kron(m.as_ref(), identity_mat(pending_identity).as_ref()),
        Some(m) => m,
    };
    Operator::new(layout.clone(), full)
}

fn identity_mat(d: usize) -> Mat<C64> {
    Mat::from_fn(d, d, |i, j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0))
}

/// `⟨v|ρ|v⟩` on the factor `role`, an operator on the remaining factors.
///
/// For a rank-1 projector `P = |v⟩⟨v|` acting on `role`, `PρP` equals
/// `|v⟩⟨v| ⊗ ⟨v|ρ|v⟩` up to factor ordering, so this block carries its whole
/// spectrum at half the dimension.
pub fn compress_site(rho: &Operator, role: Role, v: &[C64]) -> Result<Operator> {
    let layout = rho.layout();
    let pos = layout.position(role).ok_or(Error::UnknownSubsystem(role))?;
    let (left, d, right) = layout.split_at(pos);
    if v.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: v.len(),
        });
    }
    let others: Vec<Role> = layout
        .subsystems()
        .iter()
        .map(|s| s.role)
        .filter(|&r| r != role)
        .collect();
    let reduced = if others.is_empty() {
        SystemLayout::anonymous(&[1])?
    } else {
        layout.restrict(&others)?
    };
    let m = rho.matrix();
    let dk = left * right;
    let mut out = Mat::<C64>::zeros(dk, dk);
    for lj in 0..left {
        for rj in 0..right {
            let dst = out.col_as_slice_mut(lj * right + rj);
            for (b, vb) in v.iter().enumerate() {
                let src = m.col_as_slice((lj * d + b) * right + rj);
                for (a, va) in v.iter().enumerate() {
                    let coef = va.conj() * vb;
                    if coef == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for l in 0..left {
                        let seg = &src[(l * d + a) * right..(l * d + a + 1) * right];
                        for (x, y) in dst[l * right..(l + 1) * right].iter_mut().zip(seg) {
                            *x += coef * y;
                        }
                    }
                }
            }
        }
    }
    Operator::new(reduced, out)
}

/// Inverse of [`compress_site`]: `|v⟩⟨v| ⊗ block` with the `|v⟩⟨v|` factor
/// placed at `role` of `layout`.
pub fn expand_site(block: &Operator, layout: &SystemLayout, role: Role, v: &[C64]) -> Result<Operator> {
    let pos = layout.position(role).ok_or(Error::UnknownSubsystem(role))?;
    let (left, d, right) = layout.split_at(pos);
    if v.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: v.len(),
        });
    }
    if block.dim() != left * right {
        return Err(Error::DimensionMismatch {
            expected: left * right,
            found: block.dim(),
        });
    }
    let b = block.matrix();
    let n = layout.total_dim();
    let mut out = Mat::<C64>::zeros(n, n);
    for lj in 0..left {
        for (c, vc) in v.iter().enumerate() {
            for rj in 0..right {
                let src = b.col_as_slice(lj * right + rj);
                let dst = out.col_as_slice_mut((lj * d + c) * right + rj);
                for (a, va) in v.iter().enumerate() {
                    let coef = va * vc.conj();
                    for l in 0..left {
                        let seg = &src[l * right..(l + 1) * right];
                        for (x, y) in dst[(l * d + a) * right..(l * d + a + 1) * right].iter_mut().zip(seg) {
                            *x = coef * y;
                        }
                    }
                }
            }
        }
    }
    Operator::new(layout.clone(), out)
}

/// `c · A_1 ⊗ A_2 ⊗ ...` acting on a few named factors.
#[derive(Clone, Debug)]
pub struct ProductTerm {
    pub coeff: f64,
    pub factors: Vec<(Role, Mat<C64>)>,
}

/// Hamiltonian stored as a sum of few-body product terms.
///
/// Expectation values go through the reduced state on each term's support,
/// which avoids dense passes over the full space.
#[derive(Clone, Debug, Default)]
pub struct LocalHamiltonian {
    terms: Vec<ProductTerm>,
}

impl LocalHamiltonian {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, coeff: f64, factors: Vec<(Role, Mat<C64>)>) {
        if coeff != 0.0 {
            self.terms.push(ProductTerm { coeff, factors });
        }
    }

    pub fn extend(&mut self, other: &LocalHamiltonian) {
        self.terms.extend(other.terms.iter().cloned());
    }

    pub fn terms(&self) -> &[ProductTerm] {
        &self.terms
    }

    pub fn to_operator(&self, layout: &SystemLayout) -> Result<Operator> {
        let mut h = Operator::zeros(layout.clone());
        for t in &self.terms {
            let factors: Vec<(Role, MatRef<'_, C64>)> = t.factors.iter().map(|(r, m)| (*r, m.as_ref())).collect();
            h.add_scaled(t.coeff, &embed_operators(layout, &factors)?)?;
        }
        Ok(h)
    }

    /// `Re Tr[H ρ]`.
    pub fn expectation(&self, rho: &Operator) -> Result<f64> {
        let mut total = 0.0;
        for t in &self.terms {
            let support: Vec<Role> = t.factors.iter().map(|(r, _)| *r).collect();
            let reduced = partial_trace(rho, &support)?;
            let factors: Vec<(Role, MatRef<'_, C64>)> = t.factors.iter().map(|(r, m)| (*r, m.as_ref())).collect();
            let local = embed_operators(reduced.layout(), &factors)?;
            total += t.coeff * local.expectation(&reduced)?;
        }
        Ok(total)
    }
}

/// Trace over every factor not in `keep`.
pub fn partial_trace(rho: &Operator, keep: &[Role]) -> Result<Operator> {
    let layout = rho.layout();
    let reduced = layout.restrict(keep)?;
    let strides = layout.strides();
    let mut kept_offsets = vec![0usize];
    let mut traced_offsets = vec![0usize];
    for (pos, s) in layout.subsystems().iter().enumerate() {
        let target = if keep.contains(&s.role) {
            &mut kept_offsets
        } else {
            &mut traced_offsets
        };
        *target = target
            .iter()
            .flat_map(|&o| {
                let stride = strides[pos];
                (0..s.dim).map(move |k| o + k * stride)
            })
            .collect();
    }
    let dk = reduced.total_dim();
    let m = rho.matrix();
    let out = Mat::from_fn(dk, dk, |i, j| {
        let (oi, oj) = (kept_offsets[i], kept_offsets[j]);
        traced_offsets
            .iter()
            .map(|&t| m[(oi + t, oj + t)])
            .sum::<C64>()
    });
    Operator::new(reduced, out)
}

/// Eigen-decomposition `U diag(λ) U†` of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct Spectrum {
    layout: SystemLayout,
    eigenvalues: Vec<f64>,
    eigenvectors: Mat<C64>,
    real_vectors: Option<Mat<f64>>,
}

impl Spectrum {
    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Unitary whose columns are the eigenvectors, in eigenvalue order.
    pub fn eigenvectors(&self) -> &Mat<C64> {
        &self.eigenvectors
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn eigenvector(&self, k: usize) -> Vec<C64> {
        self.eigenvectors.col_as_slice(k).to_vec()
    }

    /// `U diag(w) U†`.
    pub fn reconstruct(&self, weights: &[f64]) -> Result<Operator> {
        let d = self.eigenvalues.len();
        if weights.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: weights.len(),
            });
        }
        let entries = match &self.real_vectors {
            Some(u) => {
                let scaled = Mat::from_fn(d, d, |i, j| u[(i, j)] * weights[j]);
                // an owned transpose multiplies about twice as fast as a transposed view
                let ut = u.transpose().to_owned();
                complexify((&scaled * &ut).as_ref())
            }
            None => {
                let u = &self.eigenvectors;
                let scaled = Mat::from_fn(d, d, |i, j| u[(i, j)] * weights[j]);
                let ua = u.adjoint().to_owned();
                &scaled * &ua
            }
        };
        Operator::new(self.layout.clone(), entries)
    }

    /// `U f(Λ) U†`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Result<Operator> {
        let w: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        if let Some(bad) = w.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("spectral function returned {bad}")));
        }
        self.reconstruct(&w)
    }
}

/// Rotates each column so its largest-modulus entry is real and positive.
/// Entries within a relative 1e-10 of the maximum count as ties and the first
/// one wins, which keeps the choice stable under round-off.
fn canonicalize_phases(u: &mut Mat<C64>) {
    for j in 0..u.ncols() {
        let col = u.col_as_slice_mut(j);
        let max = col.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            continue;
        }
        let k = col
            .iter()
            .position(|x| x.norm() >= max * (1.0 - 1e-10))
            .unwrap_or(0);
        let phase = col[k].conj() / col[k].norm();
        for x in col.iter_mut() {
            *x *= phase;
        }
    }
}

fn check_hermitian(h: &Operator) -> Result<()> {
    let residual = h.hermiticity_residual();
    if residual > STRUCTURAL_TOL * h.max_abs().max(1.0) {
        return Err(Error::NotHermitian { residual });
    }
    Ok(())
}

/// Hermitian eigensolver with ascending eigenvalues and a post-hoc
/// reconstruction check.
pub fn eig_hermitian(h: &Operator) -> Result<Spectrum> {
    check_hermitian(h)?;
    let n = h.dim();
    let (eigenvalues, mut vectors, real) = if h.is_real() {
        let a = real_part(h.matrix().as_ref());
        let evd = a
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("{e:?}")))?;
        let vals: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i]).collect();
        (vals, complexify(evd.U()), true)
    } else {
        let evd = h
            .matrix()
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("{e:?}")))?;
        let vals: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i].re).collect();
        (vals, evd.U().to_owned(), false)
    };
    canonicalize_phases(&mut vectors);
    let real_vectors = real.then(|| real_part(vectors.as_ref()));
    let spectrum = Spectrum {
        layout: h.layout().clone(),
        eigenvalues,
        eigenvectors: vectors,
        real_vectors,
    };
    let rebuilt = spectrum.reconstruct(&spectrum.eigenvalues)?;
    let residual = rebuilt.max_abs_diff(h);
    if residual > STRUCTURAL_TOL * h.max_abs().max(f64::MIN_POSITIVE) && residual > 0.0 {
        return Err(Error::NotHermitian { residual });
    }
    Ok(spectrum)
}

/// Ascending eigenvalues only.
pub fn eigenvalues_hermitian(h: &Operator) -> Result<Vec<f64>> {
    check_hermitian(h)?;
    if h.is_real() {
        real_part(h.matrix().as_ref())
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Numerical(format!("{e:?}")))
    } else {
        h.matrix()
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Numerical(format!("{e:?}")))
    }
}

/// `f(h)` through the spectral decomposition.
pub fn func_of_hermitian(h: &Operator, f: impl Fn(f64) -> f64) -> Result<Operator> {
    eig_hermitian(h)?.apply(f)
}

/// Single-qubit Pauli matrices and helpers.
pub mod pauli {
    use faer::Mat;
    use num_complex::Complex64 as C64;

    fn mat2(a: [[C64; 2]; 2]) -> Mat<C64> {
        Mat::from_fn(2, 2, |i, j| a[i][j])
    }

    const O: C64 = C64::new(0.0, 0.0);
    const L: C64 = C64::new(1.0, 0.0);
    const I: C64 = C64::new(0.0, 1.0);

    pub fn identity() -> Mat<C64> {
        mat2([[L, O], [O, L]])
    }

    pub fn x() -> Mat<C64> {
        mat2([[O, L], [L, O]])
    }

    pub fn y() -> Mat<C64> {
        mat2([[O, -I], [I, O]])
    }

    pub fn z() -> Mat<C64> {
        mat2([[L, O], [O, -L]])
    }

    /// `|k⟩⟨k|` in the computational basis.
    pub fn basis_projector(k: usize) -> Mat<C64> {
        Mat::from_fn(2, 2, |i, j| if i == k && j == k { L } else { O })
    }

    /// `e^{-i σ^y φ/2}`, a real rotation by `φ` about the y axis.
    pub fn y_rotation(phi: f64) -> Mat<C64> {
        let (s, c) = (phi / 2.0).sin_cos();
        mat2([[C64::new(c, 0.0), C64::new(-s, 0.0)], [C64::new(s, 0.0), C64::new(c, 0.0)]])
    }
}
