//! Exact Weyl-Heisenberg bookkeeping in the infinite-squeezing limit.
//!
//! A [`WeylOp`] is `e^{iφ} Z(t) X(s)` with every `Z` factor to the left of
//! every `X` factor, where `X(s) = exp(-i s p̂)` and `Z(t) = exp(i t x̂)`.
//! Reordering uses `X(s) Z(t) = e^{-ist} Z(t) X(s)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Quadrature, SymplecticOp};
use crate::linalg::{self, wrap_phase};

/// Tolerance for commutation and closed-loop checks.
pub const COMMUTE_TOL: f64 = 1e-9;
/// Rank tolerance for nullifier coefficient matrices.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylOp {
    /// `s_i` of `X_i(s_i)`.
    pub x_shifts: Vec<f64>,
    /// `t_i` of `Z_i(t_i)`.
    pub p_shifts: Vec<f64>,
    /// Phase of the normal-ordered product, in `(-π, π]`.
    pub phase: f64,
}

impl WeylOp {
    pub fn identity(n: usize) -> Self {
        Self {
            x_shifts: vec![0.0; n],
            p_shifts: vec![0.0; n],
            phase: 0.0,
        }
    }

    /// `X_i(s)` on mode `i` of `n`.
    pub fn x(n: usize, i: usize, s: f64) -> Self {
        let mut w = Self::identity(n);
        w.x_shifts[i] = s;
        w
    }

    /// `Z_i(t)` on mode `i` of `n`.
    pub fn z(n: usize, i: usize, t: f64) -> Self {
        let mut w = Self::identity(n);
        w.p_shifts[i] = t;
        w
    }

    /// The displacement `Z(t)X(s)` with `d = (s…, t…)`, phase 0.
    pub fn from_displacement(d: &[f64]) -> Self {
        let n = d.len() / 2;
        Self {
            x_shifts: d[..n].to_vec(),
            p_shifts: d[n..].to_vec(),
            phase: 0.0,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.x_shifts.len()
    }

    /// Phase-space displacement `(s…, t…)` induced on `r̂`.
    pub fn displacement(&self) -> Vec<f64> {
        let mut d = self.x_shifts.clone();
        d.extend_from_slice(&self.p_shifts);
        d
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.x_shifts.iter().chain(&self.p_shifts).all(|v| v.abs() <= tol)
            && self.phase.abs() <= tol
    }

    fn check_dim(&self, other: &WeylOp) -> Result<()> {
        if self.n_modes() != other.n_modes() {
            return Err(Error::DimensionMismatch {
                expected: self.n_modes(),
                got: other.n_modes(),
            });
        }
        Ok(())
    }

    /// Operator product `self · other` (`other` acts first).
    pub fn compose(&self, other: &WeylOp) -> Result<WeylOp> {
        self.check_dim(other)?;
        // moving self's X past other's Z
        let reorder: f64 = self
            .x_shifts
            .iter()
            .zip(&other.p_shifts)
            .map(|(s, t)| s * t)
            .sum();
        Ok(WeylOp {
            x_shifts: add(&self.x_shifts, &other.x_shifts),
            p_shifts: add(&self.p_shifts, &other.p_shifts),
            phase: wrap_phase(self.phase + other.phase - reorder),
        })
    }

    pub fn inverse(&self) -> WeylOp {
        let st: f64 = self
            .x_shifts
            .iter()
            .zip(&self.p_shifts)
            .map(|(s, t)| s * t)
            .sum();
        WeylOp {
            x_shifts: self.x_shifts.iter().map(|v| -v).collect(),
            p_shifts: self.p_shifts.iter().map(|v| -v).collect(),
            phase: wrap_phase(-self.phase - st),
        }
    }

    /// Phase `φ` in `a·b = e^{iφ} b·a`.
    pub fn commutation_phase(a: &WeylOp, b: &WeylOp) -> Result<f64> {
        a.check_dim(b)?;
        let n = a.n_modes();
        Ok((0..n)
            .map(|i| b.x_shifts[i] * a.p_shifts[i] - a.x_shifts[i] * b.p_shifts[i])
            .sum())
    }

    /// Image `U w U†` under a Clifford gate with Heisenberg matrix `S`.
    ///
    /// The symmetric Weyl operator maps to the one displaced by `S d`; the
    /// normal-ordered phase picks up `(s·t - s'·t')/2`.
    pub fn conjugate_by(&self, op: &SymplecticOp) -> Result<WeylOp> {
        if op.n_modes() != self.n_modes() {
            return Err(Error::DimensionMismatch {
                expected: self.n_modes(),
                got: op.n_modes(),
            });
        }
        let d = self.displacement();
        let d2 = op.apply_linear(&d);
        let n = self.n_modes();
        let st = |v: &[f64]| (0..n).map(|i| v[i] * v[n + i]).sum::<f64>();
        let mut out = WeylOp::from_displacement(&d2);
        out.phase = wrap_phase(self.phase + 0.5 * (st(&d) - st(&d2)));
        Ok(out)
    }

    /// `P_i(s) · w · P_i(-s)`, the image of `w` when the state first sees
    /// `P_i(-s)`, then `w`, then `P_i(s)`.
    ///
    /// An `X_i(σ)` factor becomes `e^{-iσ²s/2} Z_i(sσ) X_i(σ)`; `Z` factors are
    /// untouched.
    pub fn conjugate_by_phase_gate(&self, i: usize, s: f64) -> Result<WeylOp> {
        let n = self.n_modes();
        if i >= n {
            return Err(Error::ModeOutOfRange { index: i, n_modes: n });
        }
        let sigma = self.x_shifts[i];
        let mut out = self.clone();
        out.p_shifts[i] += s * sigma;
        out.phase = wrap_phase(self.phase - 0.5 * sigma * sigma * s);
        Ok(out)
    }

    /// Drop one mode's factors, keeping the phase.
    pub fn without_mode(&self, mode: usize) -> WeylOp {
        let mut out = self.clone();
        out.x_shifts.remove(mode);
        out.p_shifts.remove(mode);
        out
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Compose an ordered list of operators, first element acting first.
pub fn compose_sequence(n: usize, ops: &[WeylOp]) -> Result<WeylOp> {
    ops.iter()
        .try_fold(WeylOp::identity(n), |acc, op| op.compose(&acc))
}

/// A real linear combination `cᵀ r̂` together with its ideal eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearForm {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl LinearForm {
    pub fn zero(n: usize) -> Self {
        Self {
            coeffs: vec![0.0; 2 * n],
            offset: 0.0,
        }
    }

    /// Build from sparse `(mode, coefficient)` lists for the x and p parts.
    pub fn from_terms(n: usize, x_terms: &[(usize, f64)], p_terms: &[(usize, f64)]) -> Self {
        let mut f = Self::zero(n);
        for &(m, c) in x_terms {
            f.coeffs[m] += c;
        }
        for &(m, c) in p_terms {
            f.coeffs[n + m] += c;
        }
        f
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len() / 2
    }

    pub fn x_coeff(&self, mode: usize) -> f64 {
        self.coeffs[mode]
    }

    pub fn p_coeff(&self, mode: usize) -> f64 {
        self.coeffs[self.n_modes() + mode]
    }

    pub fn coeff(&self, mode: usize, q: Quadrature) -> f64 {
        match q {
            Quadrature::X => self.x_coeff(mode),
            Quadrature::P => self.p_coeff(mode),
        }
    }

    /// `c₁ᵀ Ω c₂`; zero iff the two operators commute.
    pub fn commutator(&self, other: &LinearForm) -> f64 {
        linalg::symplectic_product(&self.coeffs, &other.coeffs)
    }

    /// Shift of `⟨ĝ⟩` under the displacement `w`.
    pub fn shift_under(&self, w: &WeylOp) -> f64 {
        self.coeffs
            .iter()
            .zip(w.displacement())
            .map(|(c, d)| c * d)
            .sum()
    }

    /// Human-readable label such as `p1+p2-x3` (1-based modes).
    pub fn label(&self) -> String {
        let n = self.n_modes();
        let mut out = String::new();
        for (q, base) in [("x", 0usize), ("p", n)] {
            for m in 0..n {
                let c = self.coeffs[base + m];
                if c.abs() < 1e-12 {
                    continue;
                }
                let sign = if c < 0.0 { "-" } else if out.is_empty() { "" } else { "+" };
                let mag = if (c.abs() - 1.0).abs() < 1e-12 {
                    String::new()
                } else {
                    format!("{}*", c.abs())
                };
                out.push_str(&format!("{sign}{mag}{q}{}", m + 1));
            }
        }
        if out.is_empty() {
            out.push('0');
        }
        out
    }
}

/// A complete commuting set of nullifiers: one independent form per mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullifierSet {
    mode_count: usize,
    forms: Vec<LinearForm>,
}

impl NullifierSet {
    /// Validates dimensions, pairwise commutation and full rank.
    pub fn new(mode_count: usize, forms: Vec<LinearForm>) -> Result<Self> {
        let set = Self::new_unchecked(mode_count, forms)?;
        set.validate()?;
        Ok(set)
    }

    fn new_unchecked(mode_count: usize, forms: Vec<LinearForm>) -> Result<Self> {
        for f in &forms {
            if f.coeffs.len() != 2 * mode_count {
                return Err(Error::DimensionMismatch {
                    expected: 2 * mode_count,
                    got: f.coeffs.len(),
                });
            }
        }
        Ok(Self { mode_count, forms })
    }

    /// Ideal zero-momentum eigenstates `p̂_i → 0` on every mode.
    pub fn zero_momentum(n: usize) -> Self {
        let forms = (0..n)
            .map(|i| LinearForm::from_terms(n, &[], &[(i, 1.0)]))
            .collect();
        Self {
            mode_count: n,
            forms,
        }
    }

    /// Ideal cluster state of a graph: `p̂_a - Σ_{b∈N(a)} x̂_b → 0`.
    pub fn cluster(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut set = Self::zero_momentum(n);
        for &(a, b) in edges {
            set = set.apply_gate(&SymplecticOp::cz(n, a, b, 1.0)?)?;
        }
        Ok(set)
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn forms(&self) -> &[LinearForm] {
        &self.forms
    }

    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.forms.len(), 2 * self.mode_count);
        for (r, f) in self.forms.iter().enumerate() {
            for (c, v) in f.coeffs.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        m
    }

    pub fn rank(&self) -> usize {
        linalg::rank(&self.coefficient_matrix(), RANK_TOL)
    }

    pub fn validate(&self) -> Result<()> {
        for (a, fa) in self.forms.iter().enumerate() {
            for (b, fb) in self.forms.iter().enumerate().skip(a + 1) {
                if fa.commutator(fb).abs() > 1e-12 * (1.0 + norm(fa) * norm(fb)) {
                    return Err(Error::NonCommuting(a, b));
                }
            }
        }
        let r = self.rank();
        if self.forms.len() != self.mode_count || r != self.mode_count {
            return Err(Error::Rank(format!(
                "{} forms of rank {} for {} modes",
                self.forms.len(),
                r,
                self.mode_count
            )));
        }
        Ok(())
    }

    /// Offsets after displacing the state by `w`; coefficients are unchanged.
    pub fn apply_weyl(&self, w: &WeylOp) -> Result<Self> {
        if w.n_modes() != self.mode_count {
            return Err(Error::DimensionMismatch {
                expected: self.mode_count,
                got: w.n_modes(),
            });
        }
        let mut out = self.clone();
        for f in &mut out.forms {
            f.offset += f.shift_under(w);
        }
        Ok(out)
    }

    /// Nullifiers of `U|ψ⟩` for a Clifford gate `U`: `c' = S⁻ᵀ c`, then the
    /// gate's displacement shifts the offsets.
    pub fn apply_gate(&self, op: &SymplecticOp) -> Result<Self> {
        if op.n_modes() != self.mode_count {
            return Err(Error::DimensionMismatch {
                expected: self.mode_count,
                got: op.n_modes(),
            });
        }
        let inv_t = op.block_inverse_transpose()?;
        let support = op.support();
        let mut out = self.clone();
        for f in &mut out.forms {
            let local = DVector::from_iterator(support.len(), support.iter().map(|&k| f.coeffs[k]));
            let mapped = &inv_t * local;
            for (slot, &k) in support.iter().enumerate() {
                f.coeffs[k] = mapped[slot];
            }
            f.offset += f
                .coeffs
                .iter()
                .zip(op.displacement().iter())
                .map(|(c, d)| c * d)
                .sum::<f64>();
        }
        Ok(out)
    }

    /// Ideal homodyne measurement of `quadrature` on `mode` with a known outcome.
    ///
    /// Forms containing the conjugate quadrature are combined against the
    /// pivot with the largest conjugate coefficient; the pivot is dropped,
    /// the measured variable is replaced by the outcome and the mode is
    /// removed.
    pub fn measure(&self, mode: usize, quadrature: Quadrature, outcome: f64) -> Result<Self> {
        let n = self.mode_count;
        if mode >= n {
            return Err(Error::ModeOutOfRange { index: mode, n_modes: n });
        }
        let (meas_idx, conj_idx) = match quadrature {
            Quadrature::X => (mode, n + mode),
            Quadrature::P => (n + mode, mode),
        };
        let pivot = self
            .forms
            .iter()
            .enumerate()
            .filter(|(_, f)| f.coeffs[conj_idx].abs() > RANK_TOL)
            .max_by(|a, b| {
                a.1.coeffs[conj_idx]
                    .abs()
                    .partial_cmp(&b.1.coeffs[conj_idx].abs())
                    .unwrap()
            })
            .map(|(i, _)| i)
            .ok_or_else(|| {
                Error::Rank(format!(
                    "no nullifier contains the conjugate of {quadrature:?} on mode {mode}"
                ))
            })?;
        let pf = self.forms[pivot].clone();
        let mut remaining = Vec::with_capacity(self.forms.len().saturating_sub(1));
        for (i, f) in self.forms.iter().enumerate() {
            if i == pivot {
                continue;
            }
            let mut g = f.clone();
            let ratio = g.coeffs[conj_idx] / pf.coeffs[conj_idx];
            if ratio != 0.0 {
                for (gc, pc) in g.coeffs.iter_mut().zip(&pf.coeffs) {
                    *gc -= ratio * pc;
                }
                g.offset -= ratio * pf.offset;
                g.coeffs[conj_idx] = 0.0;
            }
            g.offset -= g.coeffs[meas_idx] * outcome;
            let mut coeffs = g.coeffs;
            coeffs.remove(n + mode);
            coeffs.remove(mode);
            remaining.push(LinearForm {
                coeffs,
                offset: g.offset,
            });
        }
        Ok(Self {
            mode_count: n - 1,
            forms: remaining,
        })
    }

    /// Ideal eigenvalue of an arbitrary form in the span of this set.
    pub fn offset_of(&self, coeffs: &[f64]) -> Result<f64> {
        if coeffs.len() != 2 * self.mode_count {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.mode_count,
                got: coeffs.len(),
            });
        }
        let a = self.coefficient_matrix();
        let c = DVector::from_column_slice(coeffs);
        let (lambda, residual) = linalg::combine_rows(&a, &c);
        if residual > 1e-8 * (1.0 + c.norm()) {
            return Err(Error::NotInSpan(residual));
        }
        Ok(lambda
            .iter()
            .zip(&self.forms)
            .map(|(l, f)| l * f.offset)
            .sum())
    }

    /// Whether a displacement commutes with every nullifier (leaves all offsets fixed).
    pub fn check_closed(&self, w: &WeylOp) -> Result<()> {
        for (i, f) in self.forms.iter().enumerate() {
            if f.shift_under(w).abs() > COMMUTE_TOL {
                return Err(Error::NotALoop(i));
            }
        }
        Ok(())
    }
}

fn norm(f: &LinearForm) -> f64 {
    f.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Topological phase of dragging `loop_ops` around the excitation `initial`.
///
/// The loop (ops composed in order) must act trivially on `ground`; the
/// result is `φ` in `L·E = e^{iφ} E·L`, wrapped to `(-π, π]`.
pub fn braiding_phase(ground: &NullifierSet, initial: &WeylOp, loop_ops: &[WeylOp]) -> Result<f64> {
    let n = ground.mode_count();
    let lp = compose_sequence(n, loop_ops)?;
    ground.check_closed(&lp)?;
    Ok(wrap_phase(WeylOp::commutation_phase(&lp, initial)?))
}

/// Where an anyon sits: e-type charges on stars, m-type on plaquettes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Site {
    Star(usize),
    Plaquette(usize),
}

/// Charges below this magnitude are the identity particle.
pub const CHARGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnyonConfig {
    pub e_charges: BTreeMap<usize, f64>,
    pub m_charges: BTreeMap<usize, f64>,
}

impl AnyonConfig {
    pub fn vacuum() -> Self {
        Self::default()
    }

    pub fn charge(&self, site: Site) -> f64 {
        match site {
            Site::Star(s) => self.e_charges.get(&s).copied().unwrap_or(0.0),
            Site::Plaquette(f) => self.m_charges.get(&f).copied().unwrap_or(0.0),
        }
    }

    /// Add a charge at a site under the fusion rule `e(a)×e(b)=e(a+b)`.
    pub fn add(&mut self, site: Site, q: f64) {
        let map = match site {
            Site::Star(s) => self.e_charges.entry(s),
            Site::Plaquette(f) => self.m_charges.entry(f),
        };
        let v = map.or_insert(0.0);
        *v += q;
        self.prune();
    }

    fn prune(&mut self) {
        self.e_charges.retain(|_, q| q.abs() > CHARGE_TOL);
        self.m_charges.retain(|_, q| q.abs() > CHARGE_TOL);
    }

    /// Combine with another configuration site by site.
    pub fn merge(&mut self, other: &AnyonConfig) {
        for (&s, &q) in &other.e_charges {
            self.add(Site::Star(s), q);
        }
        for (&f, &q) in &other.m_charges {
            self.add(Site::Plaquette(f), q);
        }
    }

    pub fn is_vacuum(&self) -> bool {
        self.e_charges.is_empty() && self.m_charges.is_empty()
    }

    pub fn charged_sites(&self) -> Vec<Site> {
        self.e_charges
            .keys()
            .map(|&s| Site::Star(s))
            .chain(self.m_charges.keys().map(|&f| Site::Plaquette(f)))
            .collect()
    }
}

/// Move the anyon at `b` onto `a` and fuse; a zero result is the vacuum.
pub fn fuse(config: &AnyonConfig, a: Site, b: Site) -> Result<AnyonConfig> {
    match (a, b) {
        (Site::Star(_), Site::Plaquette(_)) | (Site::Plaquette(_), Site::Star(_)) => {
            return Err(Error::CrossSpecies)
        }
        _ if a == b => return Ok(config.clone()),
        _ => {}
    }
    let mut out = config.clone();
    let qb = out.charge(b);
    out.add(b, -qb);
    out.add(a, qb);
    Ok(out)
}
