//! Moments, sampling, inseparability and discrimination of nullifier
//! combinations, plus the serializable experiment report.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::gaussian::{GaussianState, Quadrature};
use crate::lattice::Lattice;
use crate::sampling::Execution;
use crate::weyl::LinearForm;

/// Lower bound on `Var(u) + Var(v)` over separable states when `u` and `v`
/// have commutator `±i` on each side of the split.
///
/// For a product state the sum splits into one term per side, and each side
/// obeys `Var(u_A) + Var(v_A) ≥ 2·sqrt(Var(u_A)·Var(v_A)) ≥ |[u_A, v_A]|`.
/// Convex mixtures cannot go lower since variance is concave. In general the
/// bound is `(|c_A| + |c_B|)` with `[u_K, v_K] = i·c_K`; unit pairs give 2.
pub const SEPARABLE_PAIR_BOUND: f64 = 2.0;

/// Sampled means must lie within this many standard errors of the analytic mean.
pub const GATE_SIGMAS: f64 = 5.0;

/// Largest lattice (in modes) for which every bipartition is enumerated.
pub const MAX_SPLIT_MODES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormRecord {
    pub label: String,
    pub analytic_mean: f64,
    pub analytic_variance: f64,
    /// `None` when the form cannot be read out by homodyne detection.
    pub sampled_mean: Option<f64>,
    pub sampled_variance: Option<f64>,
    pub n_samples: usize,
}

impl FormRecord {
    pub fn standard_error(&self) -> f64 {
        (self.analytic_variance / self.n_samples.max(1) as f64).sqrt()
    }

    /// Self-consistency gate; records without samples pass.
    pub fn within_gate(&self) -> bool {
        match self.sampled_mean {
            Some(m) => (m - self.analytic_mean).abs() <= GATE_SIGMAS * self.standard_error(),
            None => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagram {
    pub label: String,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub side_a: Vec<usize>,
    pub side_b: Vec<usize>,
    pub u: String,
    pub v: String,
    pub variance_sum: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrimination {
    pub threshold: f64,
    pub error_rate: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub protocol: String,
    pub records: Vec<FormRecord>,
    pub diagrams: Vec<Diagram>,
    pub verdicts: Vec<Verdict>,
    /// Global phase accumulated by the detection sequence.
    pub ledger_phase: Option<f64>,
    /// Phase of moving m around e.
    pub braiding_phase: Option<f64>,
    pub discrimination: Option<Discrimination>,
    pub checks: Vec<Check>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl ExperimentReport {
    pub fn new(protocol: impl Into<String>) -> Self {
        Self {
            protocol: protocol.into(),
            records: Vec::new(),
            diagrams: Vec::new(),
            verdicts: Vec::new(),
            ledger_phase: None,
            braiding_phase: None,
            discrimination: None,
            checks: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.metadata.insert(key.to_string(), v);
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        });
    }

    /// Append the 5-standard-error gate over all records.
    pub fn add_self_consistency_check(&mut self) {
        let bad: Vec<&str> = self
            .records
            .iter()
            .filter(|r| !r.within_gate())
            .map(|r| r.label.as_str())
            .collect();
        let detail = if bad.is_empty() {
            format!("{} records within {GATE_SIGMAS} standard errors", self.records.len())
        } else {
            format!("outside gate: {}", bad.join(", "))
        };
        self.check("self-consistency", bad.is_empty(), detail);
    }

    pub fn record(&self, label: &str) -> Option<&FormRecord> {
        self.records.iter().find(|r| r.label == label)
    }

    pub fn diagram(&self, label: &str) -> Option<&Diagram> {
        self.diagrams.iter().find(|d| d.label == label)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Diagrams as CSV: one column per label, one row per sample index.
    pub fn csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.diagrams.iter().map(|d| d.label.as_str()))?;
        let rows = self.diagrams.iter().map(|d| d.samples.len()).max().unwrap_or(0);
        for r in 0..rows {
            w.write_record(
                self.diagrams
                    .iter()
                    .map(|d| d.samples.get(r).map(|x| x.to_string()).unwrap_or_default()),
            )?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.csv_string()?)?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

fn check_dims(state: &GaussianState, form: &LinearForm) -> Result<()> {
    if form.coeffs.len() != 2 * state.n_modes() {
        return Err(Error::DimensionMismatch {
            expected: 2 * state.n_modes(),
            got: form.coeffs.len(),
        });
    }
    Ok(())
}

/// `(cᵀμ, cᵀΣc)`; the form's offset is ignored.
pub fn form_moments(state: &GaussianState, form: &LinearForm) -> Result<(f64, f64)> {
    check_dims(state, form)?;
    let c = DVector::from_column_slice(&form.coeffs);
    let mean = c.dot(state.mean());
    let var = (state.cov() * &c).dot(&c);
    Ok((mean, var))
}

pub fn nullifier_moments(state: &GaussianState, forms: &[LinearForm]) -> Result<Vec<(f64, f64)>> {
    forms.iter().map(|f| form_moments(state, f)).collect()
}

/// Quadratures a form needs read out, or the first mode needing both.
fn readout(form: &LinearForm) -> Result<(Vec<(usize, Quadrature)>, Vec<f64>)> {
    let n = form.n_modes();
    let mut spec = Vec::new();
    let mut weights = Vec::new();
    for m in 0..n {
        let (cx, cp) = (form.x_coeff(m), form.p_coeff(m));
        match (cx != 0.0, cp != 0.0) {
            (true, true) => return Err(Error::ConjugatePair(m)),
            (true, false) => {
                spec.push((m, Quadrature::X));
                weights.push(cx);
            }
            (false, true) => {
                spec.push((m, Quadrature::P));
                weights.push(cp);
            }
            (false, false) => {}
        }
    }
    Ok((spec, weights))
}

pub fn sample_combination(state: &GaussianState, form: &LinearForm, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    sample_combination_with(state, form, n_samples, seed, Execution::default())
}

/// Joint homodyne draws of the form's quadratures, combined linearly.
pub fn sample_combination_with(
    state: &GaussianState,
    form: &LinearForm,
    n_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    check_dims(state, form)?;
    let (spec, weights) = readout(form)?;
    if spec.is_empty() {
        return Ok(vec![0.0; n_samples]);
    }
    let raw = state.sample_quadratures_with(&spec, n_samples, seed, exec)?;
    let w = DVector::from_vec(weights);
    Ok((0..n_samples).map(|r| raw.row(r).transpose().dot(&w)).collect())
}

pub fn mean_and_variance(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok((mean, var))
}

/// Analytic and sampled moments of one form, with the samples when the
/// form is homodyne-measurable.
pub fn record_form(
    state: &GaussianState,
    form: &LinearForm,
    label: &str,
    n_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<(FormRecord, Option<Vec<f64>>)> {
    let (analytic_mean, analytic_variance) = form_moments(state, form)?;
    let samples = match sample_combination_with(state, form, n_samples, seed, exec) {
        Ok(s) => Some(s),
        Err(Error::ConjugatePair(_)) => None,
        Err(e) => return Err(e),
    };
    let (sampled_mean, sampled_variance) = match samples.as_deref() {
        Some(s) if !s.is_empty() => {
            let (m, v) = mean_and_variance(s)?;
            (Some(m), Some(v))
        }
        _ => (None, None),
    };
    Ok((
        FormRecord {
            label: label.to_string(),
            analytic_mean,
            analytic_variance,
            sampled_mean,
            sampled_variance,
            n_samples: samples.as_ref().map_or(0, Vec::len),
        },
        samples,
    ))
}

/// Combinations tried on each bipartition: `u` from `us`, `v` from `vs`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCandidates {
    pub us: Vec<LinearForm>,
    pub vs: Vec<LinearForm>,
}

impl PairCandidates {
    /// Star forms as `u`; plaquette forms and every `x_i − x_j` in the
    /// plaquette span as `v`.
    pub fn stabilizer_pairs(lat: &Lattice) -> Self {
        let n = lat.n_edges();
        let us = (0..lat.n_stars()).map(|s| lat.star_form(s).expect("valid star")).collect();
        let mut vs: Vec<LinearForm> = (0..lat.n_plaquettes())
            .map(|f| lat.plaquette_form(f).expect("valid plaquette"))
            .collect();
        let span: Vec<DVector<f64>> = orthonormal(vs.iter().map(|f| DVector::from_column_slice(&f.coeffs[..n])));
        for i in 0..n {
            for j in i + 1..n {
                let mut d = DVector::zeros(n);
                d[i] = 1.0;
                d[j] = -1.0;
                let mut r = d.clone();
                for b in &span {
                    let p = b.dot(&r);
                    r.axpy(-p, b, 1.0);
                }
                if r.norm() < 1e-9 {
                    vs.push(LinearForm::from_terms(n, &[(i, 1.0), (j, -1.0)], &[]));
                }
            }
        }
        Self { us, vs }
    }
}

fn orthonormal(vectors: impl Iterator<Item = DVector<f64>>) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        let mut r = v;
        for _ in 0..2 {
            for b in &basis {
                let p = b.dot(&r);
                r.axpy(-p, b, 1.0);
            }
        }
        let norm = r.norm();
        if norm > 1e-9 {
            basis.push(r / norm);
        }
    }
    basis
}

/// `c_K` with `[u_K, v_K] = i·c_K` restricted to the modes in `side`.
fn side_commutator(u: &LinearForm, v: &LinearForm, side: &[usize]) -> f64 {
    let n = u.n_modes();
    side.iter()
        .map(|&m| u.coeffs[m] * v.coeffs[n + m] - u.coeffs[n + m] * v.coeffs[m])
        .sum()
}

/// Separable bound for a pair split into sides `a` and `b`.
pub fn pair_bound(u: &LinearForm, v: &LinearForm, a: &[usize], b: &[usize]) -> f64 {
    0.5 * SEPARABLE_PAIR_BOUND * (side_commutator(u, v, a).abs() + side_commutator(u, v, b).abs())
}

pub fn inseparability_check(state: &GaussianState, lat: &Lattice) -> Result<Vec<Verdict>> {
    inseparability_check_with(state, lat, &PairCandidates::stabilizer_pairs(lat))
}

/// For every bipartition, the candidate pair with the smallest
/// `(Var u + Var v) / bound`; the split passes if that sum is below the bound.
pub fn inseparability_check_with(
    state: &GaussianState,
    lat: &Lattice,
    candidates: &PairCandidates,
) -> Result<Vec<Verdict>> {
    let n = lat.n_edges();
    if n > MAX_SPLIT_MODES {
        return Err(Error::UnsupportedLattice(format!(
            "bipartition enumeration supports up to {MAX_SPLIT_MODES} modes, lattice has {n}"
        )));
    }
    if state.n_modes() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: state.n_modes(),
        });
    }
    let var = |f: &LinearForm| form_moments(state, f).map(|(_, v)| v);
    let u_vars: Vec<f64> = candidates.us.iter().map(var).collect::<Result<_>>()?;
    let v_vars: Vec<f64> = candidates.vs.iter().map(var).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for mask in 1u32..(1 << (n - 1)) {
        let (a, b): (Vec<usize>, Vec<usize>) = (0..n).partition(|&m| mask & (1 << m) != 0);
        let mut best: Option<Verdict> = None;
        let mut best_ratio = f64::INFINITY;
        for (u, vu) in candidates.us.iter().zip(&u_vars) {
            for (v, vv) in candidates.vs.iter().zip(&v_vars) {
                let bound = pair_bound(u, v, &a, &b);
                if bound < 1e-12 {
                    continue;
                }
                let sum = vu + vv;
                if sum / bound < best_ratio {
                    best_ratio = sum / bound;
                    best = Some(Verdict {
                        side_a: a.clone(),
                        side_b: b.clone(),
                        u: u.label(),
                        v: v.label(),
                        variance_sum: sum,
                        bound,
                        pass: sum < bound,
                    });
                }
            }
        }
        out.push(best.unwrap_or(Verdict {
            side_a: a,
            side_b: b,
            u: String::new(),
            v: String::new(),
            variance_sum: 0.0,
            bound: 0.0,
            pass: false,
        }));
    }
    Ok(out)
}

/// Midpoint-threshold classifier trained on the first half of each set and
/// scored on the second half.
pub fn discriminate_states(samples_a: &[f64], samples_b: &[f64]) -> Result<Discrimination> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::EmptySamples);
    }
    let split = |s: &[f64]| -> (Vec<f64>, Vec<f64>) {
        if s.len() < 2 {
            (s.to_vec(), s.to_vec())
        } else {
            let h = s.len() / 2;
            (s[..h].to_vec(), s[h..].to_vec())
        }
    };
    let (train_a, test_a) = split(samples_a);
    let (train_b, test_b) = split(samples_b);
    let (ma, _) = mean_and_variance(&train_a)?;
    let (mb, _) = mean_and_variance(&train_b)?;
    let threshold = 0.5 * (ma + mb);
    let a_low = ma <= mb;
    let wrong_a = test_a.iter().filter(|&&x| (x > threshold) == a_low).count();
    let wrong_b = test_b.iter().filter(|&&x| (x <= threshold) == a_low).count();
    let n_test = test_a.len() + test_b.len();
    Ok(Discrimination {
        threshold,
        error_rate: (wrong_a + wrong_b) as f64 / n_test as f64,
        n_test,
    })
}

/// Error probability of the midpoint rule for two Gaussians of spread
/// `sigma` a distance `separation` apart: `Q(|separation| / 2σ)`.
pub fn gaussian_error_bound(separation: f64, sigma: f64) -> f64 {
    0.5 * erfc(separation.abs() / (2.0 * sigma * std::f64::consts::SQRT_2))
}
