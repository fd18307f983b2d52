//! Finite-squeezing engine: Gaussian states of n qumodes.
//!
//! Conventions: `ħ = 1`, `[x̂, p̂] = i`, vacuum quadrature variance `1/2`,
//! phase-space ordering `(x_1..x_n, p_1..p_n)`. Gates are stored as their
//! Heisenberg action `r̂ → S r̂ + d`, so means map as `μ → Sμ + d` and
//! covariances as `Σ → S Σ Sᵀ`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::sampling::{self, Execution};
use crate::weyl::WeylOp;

/// Measured variances below this are treated as eigenstates.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;
/// Allowed mismatch between a forced outcome and the mean of an eigenstate.
pub const DEGENERATE_OUTCOME_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    pub fn conjugate(self) -> Self {
        match self {
            Quadrature::X => Quadrature::P,
            Quadrature::P => Quadrature::X,
        }
    }

    /// Index into a `(x…, p…)` vector of `n` modes.
    pub fn index(self, mode: usize, n: usize) -> usize {
        match self {
            Quadrature::X => mode,
            Quadrature::P => n + mode,
        }
    }
}

/// A linear symplectic map acting on a few quadratures, plus a displacement.
///
/// Only the rows and columns listed in `support` differ from the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticOp {
    n_modes: usize,
    support: Vec<usize>,
    block: DMatrix<f64>,
    displacement: DVector<f64>,
}

fn check_mode(i: usize, n: usize) -> Result<()> {
    if i >= n {
        Err(Error::ModeOutOfRange { index: i, n_modes: n })
    } else {
        Ok(())
    }
}

fn check_pair(i: usize, j: usize, n: usize) -> Result<()> {
    check_mode(i, n)?;
    check_mode(j, n)?;
    if i == j {
        return Err(Error::SameMode(i));
    }
    Ok(())
}

fn check_finite(v: f64, what: &'static str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

impl SymplecticOp {
    fn single(n: usize, i: usize, block: [f64; 4]) -> Result<Self> {
        check_mode(i, n)?;
        Ok(Self {
            n_modes: n,
            support: vec![i, n + i],
            block: DMatrix::from_row_slice(2, 2, &block),
            displacement: DVector::zeros(2 * n),
        })
    }

    fn pair(n: usize, i: usize, j: usize, block: [f64; 16]) -> Result<Self> {
        check_pair(i, j, n)?;
        Ok(Self {
            n_modes: n,
            support: vec![i, j, n + i, n + j],
            block: DMatrix::from_row_slice(4, 4, &block),
            displacement: DVector::zeros(2 * n),
        })
    }

    /// `C_Z = exp(i w x̂_i x̂_j)`: `p_i → p_i + w x_j`, `p_j → p_j + w x_i`.
    /// `w = 1` is the usual gate and `w = -1` its inverse.
    pub fn cz(n: usize, i: usize, j: usize, weight: f64) -> Result<Self> {
        check_finite(weight, "C_Z weight")?;
        #[rustfmt::skip]
        let b = [
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, weight, 1.0, 0.0,
            weight, 0.0, 0.0, 1.0,
        ];
        Self::pair(n, i, j, b)
    }

    /// Fourier gate: `x → -p`, `p → x`.
    pub fn fourier(n: usize, i: usize) -> Result<Self> {
        Self::single(n, i, [0.0, -1.0, 1.0, 0.0])
    }

    /// Inverse Fourier gate `F³`: `x → p`, `p → -x`.
    pub fn inverse_fourier(n: usize, i: usize) -> Result<Self> {
        Self::single(n, i, [0.0, 1.0, -1.0, 0.0])
    }

    /// `P(η) = exp(i η x̂²/2)`: `p → p + η x`.
    pub fn phase_gate(n: usize, i: usize, eta: f64) -> Result<Self> {
        check_finite(eta, "phase gate parameter")?;
        Self::single(n, i, [1.0, 0.0, eta, 1.0])
    }

    /// Beam splitter rotating `(q_i, q_j)` by `theta` in both quadratures:
    /// `q_i → c q_i - s q_j`, `q_j → s q_i + c q_j`.
    pub fn beamsplitter(n: usize, i: usize, j: usize, theta: f64) -> Result<Self> {
        check_finite(theta, "beam splitter angle")?;
        let (s, c) = theta.sin_cos();
        #[rustfmt::skip]
        let b = [
            c, -s, 0.0, 0.0,
            s, c, 0.0, 0.0,
            0.0, 0.0, c, -s,
            0.0, 0.0, s, c,
        ];
        Self::pair(n, i, j, b)
    }

    /// Pure displacement `Z_i(t) X_i(s)`.
    pub fn displacement_op(n: usize, i: usize, s: f64, t: f64) -> Result<Self> {
        check_finite(s, "displacement")?;
        check_finite(t, "displacement")?;
        let mut op = Self::single(n, i, [1.0, 0.0, 0.0, 1.0])?;
        op.displacement[i] = s;
        op.displacement[n + i] = t;
        Ok(op)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn block(&self) -> &DMatrix<f64> {
        &self.block
    }

    pub fn displacement(&self) -> &DVector<f64> {
        &self.displacement
    }

    /// The full `2n × 2n` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut s = DMatrix::identity(2 * self.n_modes, 2 * self.n_modes);
        for (a, &ra) in self.support.iter().enumerate() {
            for (b, &rb) in self.support.iter().enumerate() {
                s[(ra, rb)] = self.block[(a, b)];
            }
        }
        s
    }

    /// `S v` for the linear part only.
    pub fn apply_linear(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for (a, &ra) in self.support.iter().enumerate() {
            out[ra] = self
                .support
                .iter()
                .enumerate()
                .map(|(b, &rb)| self.block[(a, b)] * v[rb])
                .sum();
        }
        out
    }

    /// `(B⁻¹)ᵀ` of the local block, used to push nullifiers through the gate.
    pub fn block_inverse_transpose(&self) -> Result<DMatrix<f64>> {
        self.block
            .clone()
            .try_inverse()
            .map(|m| m.transpose())
            .ok_or_else(|| Error::Rank("gate block is singular".into()))
    }
}

/// Outcome policy for a single homodyne measurement.
pub enum MeasurementOutcome<'a> {
    Forced(f64),
    Random(&'a mut dyn RngCore),
}

/// First and second moments of an n-mode Gaussian state.
///
/// `frame` is the displacement applied on top of the reference state, kept
/// in normal order; its phase is the state's global-phase ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    n_modes: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    frame: WeylOp,
}

impl GaussianState {
    pub fn vacuum(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroModes);
        }
        Ok(Self {
            n_modes: n,
            mean: DVector::zeros(2 * n),
            cov: DMatrix::identity(2 * n, 2 * n) * 0.5,
            frame: WeylOp::identity(n),
        })
    }

    /// Momentum-squeezed vacua: `Var(p_i) = ½·10^(-dB_i/10)`, `Var(x_i) = ½·10^(dB_i/10)`.
    pub fn squeezed_momentum(squeezing_db: &[f64]) -> Result<Self> {
        let n = squeezing_db.len();
        let mut st = Self::vacuum(n)?;
        for (i, &db) in squeezing_db.iter().enumerate() {
            check_finite(db, "squeezing")?;
            if db < 0.0 {
                return Err(Error::NegativeSqueezing(db, i));
            }
            let f = 10f64.powf(db / 10.0);
            st.cov[(i, i)] = 0.5 * f;
            st.cov[(n + i, n + i)] = 0.5 / f;
        }
        Ok(st)
    }

    pub fn squeezed_momentum_uniform(n: usize, squeezing_db: f64) -> Result<Self> {
        Self::squeezed_momentum(&vec![squeezing_db; n])
    }

    /// Build from explicit moments (global phase 0).
    pub fn from_moments(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 {
            return Err(Error::ZeroModes);
        }
        if dim % 2 != 0 {
            return Err(Error::DimensionMismatch { expected: dim + 1, got: dim });
        }
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: cov.nrows() });
        }
        Ok(Self {
            n_modes: dim / 2,
            mean,
            cov,
            frame: WeylOp::identity(dim / 2),
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn frame(&self) -> &WeylOp {
        &self.frame
    }

    /// Accumulated global phase in `(-π, π]`. Never enters sampling.
    pub fn log_phase(&self) -> f64 {
        self.frame.phase
    }

    /// Same moments with the phase ledger reset: this state becomes the reference.
    pub fn rebased(&self) -> Self {
        let mut s = self.clone();
        s.frame = WeylOp::identity(self.n_modes);
        s
    }

    pub fn apply_mut(&mut self, op: &SymplecticOp) -> Result<()> {
        if op.n_modes() != self.n_modes {
            return Err(Error::DimensionMismatch {
                expected: self.n_modes,
                got: op.n_modes(),
            });
        }
        self.frame = self.frame.conjugate_by(op)?;
        let k = op.support();
        let b = op.block();
        let dim = 2 * self.n_modes;

        let local_mean = DVector::from_iterator(k.len(), k.iter().map(|&i| self.mean[i]));
        let new_mean = b * local_mean;
        for (a, &i) in k.iter().enumerate() {
            self.mean[i] = new_mean[a];
        }

        // rows: Σ[K,:] ← B Σ[K,:]
        let mut rows = DMatrix::zeros(k.len(), dim);
        for (a, &i) in k.iter().enumerate() {
            rows.row_mut(a).copy_from(&self.cov.row(i));
        }
        let rows = b * rows;
        for (a, &i) in k.iter().enumerate() {
            self.cov.row_mut(i).copy_from(&rows.row(a));
        }
        // columns: Σ[:,K] ← Σ[:,K] Bᵀ
        let mut cols = DMatrix::zeros(dim, k.len());
        for (a, &i) in k.iter().enumerate() {
            cols.column_mut(a).copy_from(&self.cov.column(i));
        }
        let cols = cols * b.transpose();
        for (a, &i) in k.iter().enumerate() {
            self.cov.column_mut(i).copy_from(&cols.column(a));
        }

        if op.displacement().iter().any(|d| *d != 0.0) {
            let w = WeylOp::from_displacement(op.displacement().as_slice());
            self.apply_weyl_mut(&w)?;
        }
        Ok(())
    }

    pub fn apply(&self, op: &SymplecticOp) -> Result<Self> {
        let mut s = self.clone();
        s.apply_mut(op)?;
        Ok(s)
    }

    /// Displace by a Weyl operator: means shift, covariance is untouched,
    /// and the operator joins the frame to the left.
    pub fn apply_weyl_mut(&mut self, w: &WeylOp) -> Result<()> {
        if w.n_modes() != self.n_modes {
            return Err(Error::DimensionMismatch {
                expected: self.n_modes,
                got: w.n_modes(),
            });
        }
        for (m, d) in self.mean.iter_mut().zip(w.displacement()) {
            *m += d;
        }
        self.frame = w.compose(&self.frame)?;
        Ok(())
    }

    pub fn apply_weyl(&self, w: &WeylOp) -> Result<Self> {
        let mut s = self.clone();
        s.apply_weyl_mut(w)?;
        Ok(s)
    }

    pub fn apply_cz(&self, i: usize, j: usize, sign: f64) -> Result<Self> {
        self.apply(&SymplecticOp::cz(self.n_modes, i, j, sign)?)
    }

    pub fn apply_fourier(&self, i: usize) -> Result<Self> {
        self.apply(&SymplecticOp::fourier(self.n_modes, i)?)
    }

    pub fn apply_inverse_fourier(&self, i: usize) -> Result<Self> {
        self.apply(&SymplecticOp::inverse_fourier(self.n_modes, i)?)
    }

    pub fn apply_phase_gate(&self, i: usize, eta: f64) -> Result<Self> {
        self.apply(&SymplecticOp::phase_gate(self.n_modes, i, eta)?)
    }

    pub fn apply_beamsplitter(&self, i: usize, j: usize, theta: f64) -> Result<Self> {
        self.apply(&SymplecticOp::beamsplitter(self.n_modes, i, j, theta)?)
    }

    /// `Z_i(t) X_i(s)`: `X` acts first, then `Z`.
    pub fn displace(&self, i: usize, s: f64, t: f64) -> Result<Self> {
        self.apply(&SymplecticOp::displacement_op(self.n_modes, i, s, t)?)
    }

    /// Homodyne readout of one quadrature; the measured mode is removed and
    /// the rest is conditioned on the outcome.
    pub fn homodyne_measure(
        &self,
        mode: usize,
        quadrature: Quadrature,
        outcome: MeasurementOutcome<'_>,
    ) -> Result<(f64, GaussianState)> {
        let n = self.n_modes;
        check_mode(mode, n)?;
        let q = quadrature.index(mode, n);
        let var = self.cov[(q, q)];
        let mu = self.mean[q];
        let degenerate = var < DEGENERATE_VARIANCE;
        let value = match outcome {
            MeasurementOutcome::Forced(v) => {
                check_finite(v, "forced outcome")?;
                if degenerate && (v - mu).abs() > DEGENERATE_OUTCOME_TOL {
                    return Err(Error::DegenerateConditioning {
                        mode,
                        variance: var,
                        outcome: v,
                        mean: mu,
                    });
                }
                v
            }
            MeasurementOutcome::Random(rng) => {
                if degenerate {
                    mu
                } else {
                    let z: f64 = rng.sample(StandardNormal);
                    mu + var.sqrt() * z
                }
            }
        };

        let keep: Vec<usize> = (0..2 * n).filter(|&r| r != mode && r != n + mode).collect();
        let mut mean = DVector::from_iterator(keep.len(), keep.iter().map(|&r| self.mean[r]));
        let mut cov = DMatrix::from_fn(keep.len(), keep.len(), |a, b| self.cov[(keep[a], keep[b])]);
        if !degenerate {
            let cross = DVector::from_iterator(keep.len(), keep.iter().map(|&r| self.cov[(r, q)]));
            mean += &cross * ((value - mu) / var);
            cov -= &cross * cross.transpose() / var;
            // keep exact symmetry
            cov = (&cov + cov.transpose()) * 0.5;
        }
        if n == 1 {
            return Ok((
                value,
                GaussianState {
                    n_modes: 0,
                    mean,
                    cov,
                    frame: WeylOp::identity(0),
                },
            ));
        }
        Ok((
            value,
            GaussianState {
                n_modes: n - 1,
                mean,
                cov,
                frame: self.frame.without_mode(mode),
            },
        ))
    }

    fn check_readout(&self, spec: &[(usize, Quadrature)]) -> Result<()> {
        for (a, &(m, q)) in spec.iter().enumerate() {
            check_mode(m, self.n_modes)?;
            if spec[..a].iter().any(|&(m2, q2)| m2 == m && q2 == q.conjugate()) {
                return Err(Error::ConjugatePair(m));
            }
        }
        Ok(())
    }

    /// Mean and covariance of the listed quadratures.
    pub fn marginal(&self, spec: &[(usize, Quadrature)]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        for &(m, _) in spec {
            check_mode(m, self.n_modes)?;
        }
        let idx: Vec<usize> = spec.iter().map(|&(m, q)| q.index(m, self.n_modes)).collect();
        let mean = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i]));
        let cov = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.cov[(idx[a], idx[b])]);
        Ok((mean, cov))
    }

    /// Joint homodyne records, one row per sample, one column per listed
    /// quadrature. Each row is an independent run on a fresh copy.
    pub fn sample_quadratures(
        &self,
        spec: &[(usize, Quadrature)],
        n_samples: usize,
        seed: u64,
    ) -> Result<DMatrix<f64>> {
        self.sample_quadratures_with(spec, n_samples, seed, Execution::default())
    }

    pub fn sample_quadratures_with(
        &self,
        spec: &[(usize, Quadrature)],
        n_samples: usize,
        seed: u64,
        exec: Execution,
    ) -> Result<DMatrix<f64>> {
        self.check_readout(spec)?;
        let (mu, sigma) = self.marginal(spec)?;
        let k = spec.len();
        let l = linalg::psd_factor(&sigma);
        let rows = sampling::map_indexed(n_samples, exec, |i| {
            let mut rng = sampling::stream(seed, i as u64);
            let z = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
            &mu + &l * z
        });
        Ok(DMatrix::from_fn(n_samples, k, |r, c| rows[r][c]))
    }

    /// `det(2Σ)`; equals 1 exactly for pure states.
    pub fn purity_det(&self) -> f64 {
        (&self.cov * 2.0).determinant()
    }

    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        linalg::symplectic_eigenvalues(&self.cov)
    }

    /// Symmetric covariance obeying the uncertainty principle.
    pub fn is_physical(&self) -> bool {
        let sym = (&self.cov - self.cov.transpose()).amax() <= 1e-10;
        sym && self
            .symplectic_eigenvalues()
            .iter()
            .all(|&nu| nu >= 0.5 - 1e-9)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn vacuum_moments() {
        let v = GaussianState::vacuum(1).unwrap();
        assert_eq!(v.mean().as_slice(), &[0.0, 0.0]);
        assert_eq!(v.cov()[(0, 0)], 0.5);
        assert_eq!(v.cov()[(1, 1)], 0.5);
        assert!(approx(v.symplectic_eigenvalues()[0], 0.5, 1e-12));
        let v3 = GaussianState::vacuum(3).unwrap();
        assert_eq!(v3.cov(), &(DMatrix::identity(6, 6) * 0.5));
        assert_eq!(GaussianState::vacuum(0), Err(Error::ZeroModes));
    }

    #[test]
    fn squeezed_moments() {
        let s = GaussianState::squeezed_momentum(&[0.0]).unwrap();
        assert_eq!(s, GaussianState::vacuum(1).unwrap());
        let s = GaussianState::squeezed_momentum(&[10.0]).unwrap();
        assert!(approx(s.cov()[(1, 1)], 0.05, 1e-15));
        assert!(approx(s.cov()[(0, 0)], 5.0, 1e-12));
        assert!(approx(s.purity_det(), 1.0, 1e-12));
        let s = GaussianState::squeezed_momentum(&[3.0103]).unwrap();
        assert!(approx(s.cov()[(1, 1)], 0.25, 1e-5));
        assert!(matches!(
            GaussianState::squeezed_momentum(&[1.0, -1.0]),
            Err(Error::NegativeSqueezing(_, 1))
        ));
    }

    #[test]
    fn cz_on_vacua() {
        let s = GaussianState::vacuum(2).unwrap().apply_cz(0, 1, 1.0).unwrap();
        // ordering x1 x2 p1 p2
        assert!(approx(s.cov()[(2, 2)], 1.0, 1e-15));
        assert!(approx(s.cov()[(2, 1)], 0.5, 1e-15));
        assert!(approx(s.cov()[(0, 0)], 0.5, 1e-15));
        let m = GaussianState::vacuum(2).unwrap().displace(0, 1.0, 0.0).unwrap();
        let m = m.apply_cz(0, 1, 1.0).unwrap();
        assert_eq!(m.mean().as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        let back = s.apply_cz(0, 1, -1.0).unwrap();
        assert!((back.cov() - GaussianState::vacuum(2).unwrap().cov()).amax() < 1e-15);
        assert_eq!(s.apply_cz(1, 1, 1.0), Err(Error::SameMode(1)));
        assert!(matches!(s.apply_cz(0, 2, 1.0), Err(Error::ModeOutOfRange { .. })));
    }

    #[test]
    fn fourier_rotation() {
        let s = GaussianState::squeezed_momentum(&[10.0]).unwrap();
        let f = s.apply_fourier(0).unwrap();
        assert!(approx(f.cov()[(0, 0)], 0.05, 1e-15));
        assert!(approx(f.cov()[(1, 1)], 5.0, 1e-12));
        let m = GaussianState::vacuum(1).unwrap().displace(0, 2.0, 3.0).unwrap();
        let fm = m.apply_fourier(0).unwrap();
        assert_eq!(fm.mean().as_slice(), &[-3.0, 2.0]);
        let mut four = m.clone();
        for _ in 0..4 {
            four = four.apply_fourier(0).unwrap();
        }
        assert_eq!(four.mean(), m.mean());
        assert_eq!(four.cov(), m.cov());
        let inv = fm.apply_inverse_fourier(0).unwrap();
        assert_eq!(inv.mean(), m.mean());
    }

    #[test]
    fn phase_gate_moments() {
        let v = GaussianState::vacuum(1).unwrap();
        assert_eq!(v.apply_phase_gate(0, 0.0).unwrap().cov(), v.cov());
        let p = v.apply_phase_gate(0, 1.0).unwrap();
        assert!(approx(p.cov()[(1, 1)], 1.0, 1e-15));
        assert!(approx(p.cov()[(0, 1)], 0.5, 1e-15));
        let back = p.apply_phase_gate(0, -1.0).unwrap();
        assert!((back.cov() - v.cov()).amax() < 1e-15);
    }

    #[test]
    fn displacement_and_phase() {
        let v = GaussianState::vacuum(2).unwrap();
        let d = v.displace(1, 0.5, -2.0).unwrap();
        assert_eq!(d.mean().as_slice(), &[0.0, 0.5, 0.0, -2.0]);
        assert_eq!(d.cov(), v.cov());
        assert_eq!(d.log_phase(), 0.0);
        assert_eq!(v.displace(0, 0.0, 0.0).unwrap(), v);
        // X(t) after Z(s) picks up e^{-ist}
        let e = v.displace(0, 0.0, 2.0).unwrap().displace(0, 3.0, 0.0).unwrap();
        assert!(linalg::phase_distance(e.log_phase(), -6.0) < 1e-12);
    }

    #[test]
    fn beamsplitter_moments() {
        let mut st = GaussianState::squeezed_momentum(&[10.0, 10.0]).unwrap();
        assert_eq!(st.apply_beamsplitter(0, 1, 0.0).unwrap(), st);
        let sw = GaussianState::vacuum(2)
            .unwrap()
            .displace(0, 1.0, 2.0)
            .unwrap()
            .apply_beamsplitter(0, 1, std::f64::consts::FRAC_PI_2)
            .unwrap();
        assert!(approx(sw.mean()[0], 0.0, 1e-15) && approx(sw.mean()[1], 1.0, 1e-15));
        assert!(approx(sw.mean()[3], 2.0, 1e-15));
        // mode 1 squeezed in p, mode 2 squeezed in x
        st = st.apply_fourier(1).unwrap();
        let (vx, vp) = (st.cov()[(0, 0)], st.cov()[(2, 2)]);
        let out = st.apply_beamsplitter(0, 1, std::f64::consts::FRAC_PI_4).unwrap();
        assert!(approx(out.cov()[(0, 1)], (vx - vp) / 2.0, 1e-12));
        assert!(approx(out.cov()[(2, 3)], (vp - vx) / 2.0, 1e-12));
        assert_eq!(st.apply_beamsplitter(0, 0, 1.0), Err(Error::SameMode(0)));
    }

    #[test]
    fn homodyne_on_product() {
        let v = GaussianState::vacuum(3).unwrap();
        let (o, post) = v.homodyne_measure(0, Quadrature::X, MeasurementOutcome::Forced(0.0)).unwrap();
        assert_eq!(o, 0.0);
        assert_eq!(post.n_modes(), 2);
        assert_eq!(post.cov(), GaussianState::vacuum(2).unwrap().cov());
    }

    #[test]
    fn homodyne_after_cz() {
        let st = GaussianState::squeezed_momentum(&[10.0, 10.0])
            .unwrap()
            .apply_cz(0, 1, 1.0)
            .unwrap();
        let q = 0.8;
        let (_, post) = st.homodyne_measure(1, Quadrature::X, MeasurementOutcome::Forced(q)).unwrap();
        // remaining p1 = p1⁰ + x2, so its conditional mean is q
        assert!(approx(post.mean()[1], q, 1e-12));
        assert!(approx(post.cov()[(1, 1)], 0.05, 1e-12));
    }

    #[test]
    fn homodyne_degenerate() {
        let mut cov = DMatrix::identity(4, 4) * 0.5;
        cov[(0, 0)] = 1e-14;
        cov[(2, 2)] = 1e14;
        let st = GaussianState::from_moments(DVector::from_vec(vec![0.3, 0.0, 0.0, 0.0]), cov).unwrap();
        assert!(matches!(
            st.homodyne_measure(0, Quadrature::X, MeasurementOutcome::Forced(1.0)),
            Err(Error::DegenerateConditioning { .. })
        ));
        let (o, _) = st
            .homodyne_measure(0, Quadrature::X, MeasurementOutcome::Forced(0.3 + 1e-8))
            .unwrap();
        assert!(approx(o, 0.3, 1e-7));
    }

    #[test]
    fn homodyne_statistics() {
        let st = GaussianState::squeezed_momentum(&[3.0, 6.0])
            .unwrap()
            .apply_cz(0, 1, 1.0)
            .unwrap()
            .displace(0, 0.0, 1.5)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let outs: Vec<f64> = (0..n)
            .map(|_| {
                st.homodyne_measure(0, Quadrature::P, MeasurementOutcome::Random(&mut rng))
                    .unwrap()
                    .0
            })
            .collect();
        let mean = outs.iter().sum::<f64>() / n as f64;
        let var = outs.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let (mu, v) = (st.mean()[2], st.cov()[(2, 2)]);
        assert!((mean - mu).abs() < 5.0 * (v / n as f64).sqrt());
        assert!((var - v).abs() < 5.0 * v * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn sampling_basics() {
        let v = GaussianState::vacuum(1).unwrap();
        let s = v.sample_quadratures(&[(0, Quadrature::X)], 100_000, 9).unwrap();
        let n = s.nrows() as f64;
        let mean = s.column(0).sum() / n;
        let var = s.column(0).iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.5).abs() < 3.0 * 0.5 * (2.0 / n).sqrt());
        let empty = v.sample_quadratures(&[(0, Quadrature::P)], 0, 1).unwrap();
        assert_eq!(empty.nrows(), 0);
        assert_eq!(
            v.sample_quadratures(&[(0, Quadrature::X), (0, Quadrature::P)], 5, 1),
            Err(Error::ConjugatePair(0))
        );
    }

    #[test]
    fn sampled_covariance_after_cz() {
        let st = GaussianState::squeezed_momentum(&[5.0, 5.0])
            .unwrap()
            .apply_cz(0, 1, 1.0)
            .unwrap();
        let spec = [(0, Quadrature::X), (1, Quadrature::P)];
        let s = st.sample_quadratures(&spec, 50_000, 3).unwrap();
        let n = s.nrows() as f64;
        let m0 = s.column(0).mean();
        let m1 = s.column(1).mean();
        let c01 = s
            .column(0)
            .iter()
            .zip(s.column(1).iter())
            .map(|(a, b)| (a - m0) * (b - m1))
            .sum::<f64>()
            / (n - 1.0);
        let exact = st.cov()[(0, 3)];
        let se = ((st.cov()[(0, 0)] * st.cov()[(3, 3)] + exact * exact) / n).sqrt();
        assert!((c01 - exact).abs() < 5.0 * se, "{c01} vs {exact}");
    }

    #[test]
    fn sampling_independent_of_execution() {
        let st = GaussianState::squeezed_momentum(&[4.0, 8.0, 2.0])
            .unwrap()
            .apply_cz(0, 1, 1.0)
            .unwrap()
            .apply_cz(1, 2, 1.0)
            .unwrap();
        let spec = [(0, Quadrature::X), (1, Quadrature::P), (2, Quadrature::X)];
        let a = st.sample_quadratures_with(&spec, 2000, 5, Execution::Sequential).unwrap();
        let b = st.sample_quadratures_with(&spec, 2000, 5, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gates_are_symplectic() {
        let n = 3;
        let ops = [
            SymplecticOp::cz(n, 0, 2, 1.0).unwrap(),
            SymplecticOp::cz(n, 0, 2, -1.0).unwrap(),
            SymplecticOp::fourier(n, 1).unwrap(),
            SymplecticOp::inverse_fourier(n, 1).unwrap(),
            SymplecticOp::phase_gate(n, 2, -0.7).unwrap(),
            SymplecticOp::beamsplitter(n, 1, 2, 0.3).unwrap(),
            SymplecticOp::displacement_op(n, 0, 1.0, 2.0).unwrap(),
        ];
        for op in &ops {
            assert!(linalg::symplectic_defect(&op.matrix()) < 1e-12);
        }
    }
}
