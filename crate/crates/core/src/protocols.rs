//! End-to-end scripts: ground-state preparation along two routes, anyon
//! creation, braiding and the squeezing-based detection sequence, on both
//! the Gaussian engine and the ideal nullifier tracker.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianState, MeasurementOutcome, SymplecticOp};
use crate::lattice::{Boundary, Lattice, LoopTarget, LoopVariant, StringSpec};
use crate::linalg;
use crate::sampling::{self, Execution};
use crate::verify::{self, ExperimentReport};
use crate::weyl::{self, AnyonConfig, LinearForm, NullifierSet, WeylOp};

pub const DEFAULT_SQUEEZING_DB: f64 = 10.0;
pub const DEFAULT_S: f64 = 1.0;
pub const DEFAULT_T: f64 = 2.0;
pub const DEFAULT_SAMPLES: usize = 10_000;

/// Tolerance for comparing the two engines and repeated runs.
pub const ENGINE_TOL: f64 = 1e-8;
/// Tolerance for phase identities.
pub const PHASE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Gaussian,
    Exact,
    #[default]
    Both,
}

impl Engine {
    pub fn gaussian(self) -> bool {
        self != Engine::Exact
    }

    pub fn exact(self) -> bool {
        self != Engine::Gaussian
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub squeezing_db: f64,
    pub s: f64,
    pub t: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub braid: bool,
    pub engine: Engine,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            squeezing_db: DEFAULT_SQUEEZING_DB,
            s: DEFAULT_S,
            t: DEFAULT_T,
            n_samples: DEFAULT_SAMPLES,
            seed: 0,
            braid: true,
            engine: Engine::Both,
            execution: Execution::default(),
        }
    }
}

enum Outcomes<'a> {
    Forced(&'a [f64]),
    Seeded(u64),
}

fn form_matrix(forms: &[LinearForm]) -> DMatrix<f64> {
    let dim = forms.first().map_or(0, |f| f.coeffs.len());
    DMatrix::from_fn(forms.len(), dim, |r, c| forms[r].coeffs[c])
}

/// Smallest displacement `r` with `C (μ + r) = 0` given `g = Cμ`.
fn min_norm_correction(c: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let gram = c * c.transpose();
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Rank("nullifier rows are dependent".into()))?;
    Ok(-(c.transpose() * chol.solve(g)))
}

/// Measurement order: highest parent index first, so lower indices stay valid.
fn measurement_order(n: usize, modes: impl Fn(usize) -> usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&k| std::cmp::Reverse(modes(k)));
    order
}

fn cluster_route(lat: &Lattice, squeezing_db: f64, outcomes: Outcomes<'_>) -> Result<GaussianState> {
    let pat = lat.cluster_pattern()?;
    if let Outcomes::Forced(o) = outcomes {
        if o.len() != pat.measurements.len() {
            return Err(Error::DimensionMismatch {
                expected: pat.measurements.len(),
                got: o.len(),
            });
        }
    }
    let n = pat.n_parent;
    let mut st = GaussianState::squeezed_momentum_uniform(n, squeezing_db)?;
    for &(a, b, w) in &pat.cz {
        st.apply_mut(&SymplecticOp::cz(n, a, b, w)?)?;
    }
    let mut rng = sampling::stream(if let Outcomes::Seeded(s) = outcomes { s } else { 0 }, 0);
    for k in measurement_order(pat.measurements.len(), |k| pat.measurements[k].0) {
        let (mode, q) = pat.measurements[k];
        let oc = match outcomes {
            Outcomes::Forced(o) => MeasurementOutcome::Forced(o[k]),
            Outcomes::Seeded(_) => MeasurementOutcome::Random(&mut rng),
        };
        st = st.homodyne_measure(mode, q, oc)?.1;
    }
    let e = lat.n_edges();
    for &m in &pat.inverse_fourier {
        st.apply_mut(&SymplecticOp::inverse_fourier(e, m)?)?;
    }
    let ns = lat.nullifier_set()?;
    let c = form_matrix(ns.forms());
    let g = &c * st.mean();
    let r = min_norm_correction(&c, &g)?;
    st.apply_weyl_mut(&WeylOp::from_displacement(r.as_slice()))?;
    Ok(st.rebased())
}

/// Parent cluster, random homodyne outcomes, feed-forward, then `F†` on the edges.
pub fn prepare_ground_via_cluster(lat: &Lattice, squeezing_db: f64, seed: u64) -> Result<GaussianState> {
    cluster_route(lat, squeezing_db, Outcomes::Seeded(seed))
}

/// Cluster route with prescribed outcomes, in the pattern's measurement order.
pub fn prepare_ground_via_cluster_forced(lat: &Lattice, squeezing_db: f64, outcomes: &[f64]) -> Result<GaussianState> {
    cluster_route(lat, squeezing_db, Outcomes::Forced(outcomes))
}

pub fn n_cluster_measurements(lat: &Lattice) -> Result<usize> {
    Ok(lat.cluster_pattern()?.measurements.len())
}

/// The cluster route in the ideal tracker; returns the lattice nullifiers
/// with their eigenvalues after feed-forward.
pub fn prepare_ground_exact(lat: &Lattice, outcomes: &[f64]) -> Result<NullifierSet> {
    let pat = lat.cluster_pattern()?;
    if outcomes.len() != pat.measurements.len() {
        return Err(Error::DimensionMismatch {
            expected: pat.measurements.len(),
            got: outcomes.len(),
        });
    }
    let n = pat.n_parent;
    let mut ns = NullifierSet::zero_momentum(n);
    for &(a, b, w) in &pat.cz {
        ns = ns.apply_gate(&SymplecticOp::cz(n, a, b, w)?)?;
    }
    for k in measurement_order(pat.measurements.len(), |k| pat.measurements[k].0) {
        let (mode, q) = pat.measurements[k];
        ns = ns.measure(mode, q, outcomes[k])?;
    }
    let e = lat.n_edges();
    for &m in &pat.inverse_fourier {
        ns = ns.apply_gate(&SymplecticOp::inverse_fourier(e, m)?)?;
    }
    let canonical = lat.nullifier_set()?;
    let c = form_matrix(canonical.forms());
    let g = canonical
        .forms()
        .iter()
        .map(|f| ns.offset_of(&f.coeffs))
        .collect::<Result<Vec<f64>>>()?;
    let r = min_norm_correction(&c, &DVector::from_vec(g))?;
    let ns = ns.apply_weyl(&WeylOp::from_displacement(r.as_slice()))?;
    let forms = canonical
        .forms()
        .iter()
        .map(|f| {
            Ok(LinearForm {
                coeffs: f.coeffs.clone(),
                offset: ns.offset_of(&f.coeffs)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NullifierSet::new(e, forms)
}

/// Measurement-free preparation. The four-mode lattice uses the star graph
/// followed by `F†`; other lattices send p-squeezed inputs (star space) and
/// x-squeezed inputs (plaquette space) through a passive interferometer.
pub fn prepare_ground_direct(lat: &Lattice, squeezing_db: f64) -> Result<GaussianState> {
    if lat.boundary() == Boundary::FourModeStar {
        return prepare_ground_via_cluster_forced(lat, squeezing_db, &[]);
    }
    let e = lat.n_edges();
    let ns = lat.nullifier_set()?;
    let star_rows: Vec<DVector<f64>> = ns
        .forms()
        .iter()
        .filter(|f| f.coeffs[..e].iter().all(|&c| c == 0.0))
        .map(|f| DVector::from_column_slice(&f.coeffs[e..]))
        .collect();
    let plaq_rows: Vec<DVector<f64>> = ns
        .forms()
        .iter()
        .filter(|f| f.coeffs[e..].iter().all(|&c| c == 0.0))
        .map(|f| DVector::from_column_slice(&f.coeffs[..e]))
        .collect();
    if star_rows.len() + plaq_rows.len() != e {
        return Err(Error::UnsupportedLattice(
            "direct route needs stabilizers that are pure p or pure x".into(),
        ));
    }
    let n_star = star_rows.len();
    let basis = orthonormal_columns(star_rows.into_iter().chain(plaq_rows), e)?;
    let mut st = GaussianState::squeezed_momentum_uniform(e, squeezing_db)?;
    for m in n_star..e {
        st.apply_mut(&SymplecticOp::fourier(e, m)?)?;
    }
    apply_orthogonal(&mut st, &basis)?;
    Ok(st.rebased())
}

fn orthonormal_columns(vectors: impl Iterator<Item = DVector<f64>>, n: usize) -> Result<DMatrix<f64>> {
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
    for v in vectors {
        let mut r = v;
        for _ in 0..2 {
            for b in &cols {
                let p = b.dot(&r);
                r.axpy(-p, b, 1.0);
            }
        }
        let norm = r.norm();
        if norm < 1e-9 {
            return Err(Error::Rank("stabilizer rows are dependent".into()));
        }
        cols.push(r / norm);
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Passive network `x → Ux`, `p → Up` for orthogonal `U`, built from beam
/// splitters and `F²` sign flips.
fn apply_orthogonal(st: &mut GaussianState, u: &DMatrix<f64>) -> Result<()> {
    let n = u.nrows();
    let mut m = u.clone();
    let mut rotations = Vec::new();
    for j in 0..n {
        for i in (j + 1..n).rev() {
            let (a, b) = (m[(j, j)], m[(i, j)]);
            if b.abs() < 1e-15 {
                continue;
            }
            let theta = b.atan2(a);
            let (s, c) = theta.sin_cos();
            for k in 0..n {
                let (mj, mi) = (m[(j, k)], m[(i, k)]);
                m[(j, k)] = c * mj + s * mi;
                m[(i, k)] = -s * mj + c * mi;
            }
            rotations.push((j, i, theta));
        }
    }
    for k in 0..n {
        if m[(k, k)] < 0.0 {
            st.apply_mut(&SymplecticOp::fourier(n, k)?)?;
            st.apply_mut(&SymplecticOp::fourier(n, k)?)?;
        }
    }
    for &(j, i, theta) in rotations.iter().rev() {
        st.apply_mut(&SymplecticOp::beamsplitter(n, j, i, theta)?)?;
    }
    Ok(())
}

/// Apply a string's displacements; the affected nullifier means shift.
pub fn create_anyons(state: &GaussianState, lat: &Lattice, spec: &StringSpec) -> Result<(GaussianState, AnyonConfig)> {
    let (w, cfg) = lat.string_to_weyl(spec)?;
    Ok((state.apply_weyl(&w)?, cfg))
}

pub fn create_anyons_exact(ns: &NullifierSet, lat: &Lattice, spec: &StringSpec) -> Result<(NullifierSet, AnyonConfig)> {
    let (w, cfg) = lat.string_to_weyl(spec)?;
    Ok((ns.apply_weyl(&w)?, cfg))
}

fn closed_op(lat: &Lattice, spec: &StringSpec) -> Result<WeylOp> {
    let (w, cfg) = lat.string_to_weyl(spec)?;
    if let Some(&site) = cfg.charged_sites().first() {
        return Err(Error::NotALoop(lat.form_index(site)));
    }
    Ok(w)
}

/// Drag an anyon along a closed loop. Nullifier means stay put; the phase
/// ledger picks up the braiding phase.
pub fn braid(state: &GaussianState, lat: &Lattice, loop_spec: &StringSpec) -> Result<GaussianState> {
    state.apply_weyl(&closed_op(lat, loop_spec)?)
}

/// Braiding phase of `loop_spec` around the excitation `initial` on `ground`.
pub fn braid_exact(ground: &NullifierSet, lat: &Lattice, initial: &WeylOp, loop_spec: &StringSpec) -> Result<f64> {
    let w = closed_op(lat, loop_spec)?;
    weyl::braiding_phase(ground, initial, &[w])
}

fn check_loop(lat: &Lattice, w: &WeylOp) -> Result<()> {
    if w.n_modes() != lat.n_edges() {
        return Err(Error::DimensionMismatch {
            expected: lat.n_edges(),
            got: w.n_modes(),
        });
    }
    if let Some(&site) = lat.charges_of(w).charged_sites().first() {
        return Err(Error::NotALoop(lat.form_index(site)));
    }
    Ok(())
}

/// `P(s) · loop · P(−s)` on the ground state, with `P(−s)` acting first.
///
/// A loop carrying `X(t)` on `star_mode` shifts the star nullifier by `s·t`
/// and leaves `−t²s/2` in the phase ledger; without a loop the state is
/// returned unchanged.
pub fn detect_braiding(
    ground: &GaussianState,
    lat: &Lattice,
    star_mode: usize,
    s: f64,
    loop_op: Option<&WeylOp>,
) -> Result<GaussianState> {
    let n = lat.n_edges();
    let mut st = ground.rebased();
    st.apply_mut(&SymplecticOp::phase_gate(n, star_mode, -s)?)?;
    if let Some(w) = loop_op {
        check_loop(lat, w)?;
        st.apply_weyl_mut(w)?;
    }
    st.apply_mut(&SymplecticOp::phase_gate(n, star_mode, s)?)?;
    Ok(st)
}

/// The detection sequence in the ideal tracker: final nullifiers and the
/// ledger phase.
pub fn detect_braiding_exact(
    ground: &NullifierSet,
    lat: &Lattice,
    star_mode: usize,
    s: f64,
    loop_op: Option<&WeylOp>,
) -> Result<(NullifierSet, f64)> {
    let n = lat.n_edges();
    let down = SymplecticOp::phase_gate(n, star_mode, -s)?;
    let up = SymplecticOp::phase_gate(n, star_mode, s)?;
    let mut ns = ground.apply_gate(&down)?;
    let mut frame = WeylOp::identity(n).conjugate_by(&down)?;
    if let Some(w) = loop_op {
        check_loop(lat, w)?;
        ns = ns.apply_weyl(w)?;
        frame = w.compose(&frame)?;
    }
    ns = ns.apply_gate(&up)?;
    frame = frame.conjugate_by(&up)?;
    Ok((ns, frame.phase))
}

/// Largest `|Gaussian mean − tracker eigenvalue|` over all stabilizers.
pub fn engine_discrepancy(state: &GaussianState, ns: &NullifierSet, lat: &Lattice) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for f in lat.stabilizer_forms() {
        let (mean, _) = verify::form_moments(state, &f)?;
        worst = worst.max((mean - ns.offset_of(&f.coeffs)?).abs());
    }
    Ok(worst)
}

/// Largest stabilizer mean after the seeded cluster route, per seed.
pub fn feed_forward_residuals(lat: &Lattice, squeezing_db: f64, seeds: &[u64], exec: Execution) -> Result<Vec<f64>> {
    let forms = lat.stabilizer_forms();
    sampling::map_indexed(seeds.len(), exec, |k| {
        let st = prepare_ground_via_cluster(lat, squeezing_db, seeds[k])?;
        let mut worst: f64 = 0.0;
        for f in &forms {
            worst = worst.max(verify::form_moments(&st, f)?.0.abs());
        }
        Ok(worst)
    })
    .into_iter()
    .collect()
}

fn check_params(p: &Params) -> Result<()> {
    for (v, what) in [(p.squeezing_db, "squeezing"), (p.s, "s"), (p.t, "t")] {
        if !v.is_finite() {
            return Err(Error::NonFinite(what));
        }
    }
    if p.squeezing_db < 0.0 {
        return Err(Error::NegativeSqueezing(p.squeezing_db, 0));
    }
    Ok(())
}

fn base_report(name: &str, lat: &Lattice, p: &Params) -> ExperimentReport {
    let mut r = ExperimentReport::new(name);
    r.meta("seed", p.seed);
    r.meta("squeezing_db", p.squeezing_db);
    r.meta("s", p.s);
    r.meta("t", p.t);
    r.meta("n_samples", p.n_samples);
    r.meta("engine", p.engine);
    r.meta("boundary", lat.boundary());
    r.meta("n_modes", lat.n_edges());
    r
}

/// Records (and diagrams) for `forms` on `state`, labels tagged with `tag`.
fn record_all(
    report: &mut ExperimentReport,
    state: &GaussianState,
    forms: &[LinearForm],
    tag: &str,
    p: &Params,
    salt: u64,
) -> Result<()> {
    for (k, f) in forms.iter().enumerate() {
        let label = format!("{} [{tag}]", f.label());
        let seed = sampling::derive_seed(p.seed, salt * 1_000_003 + k as u64);
        let (rec, samples) = verify::record_form(state, f, &label, p.n_samples, seed, p.execution)?;
        report.records.push(rec);
        if let Some(samples) = samples {
            report.diagrams.push(verify::Diagram { label, samples });
        }
    }
    Ok(())
}

fn record_exact(report: &mut ExperimentReport, ns: &NullifierSet, forms: &[LinearForm], tag: &str) -> Result<()> {
    for f in forms {
        report.records.push(verify::FormRecord {
            label: format!("{} [{tag}]", f.label()),
            analytic_mean: ns.offset_of(&f.coeffs)?,
            analytic_variance: 0.0,
            sampled_mean: None,
            sampled_variance: None,
            n_samples: 0,
        });
    }
    Ok(())
}

/// Four-mode GHZ demo: detection with and without the loop, sampled
/// nullifier clouds, discrimination and inseparability.
pub fn run_ghz_demo(p: &Params) -> Result<ExperimentReport> {
    run_detect_on(&Lattice::four_mode(), p, "ghz", true)
}

/// Detection on any supported lattice around its central star.
pub fn run_detect(lat: &Lattice, p: &Params) -> Result<ExperimentReport> {
    run_detect_on(lat, p, "detect", false)
}

fn run_detect_on(lat: &Lattice, p: &Params, name: &str, both: bool) -> Result<ExperimentReport> {
    check_params(p)?;
    let mut report = base_report(name, lat, p);
    let star = lat.central_star();
    let star_mode = lat.star_edges(star)?[0];
    report.meta("star", star);
    report.meta("star_mode", star_mode);
    report.meta("braid", p.braid);
    let loop_spec = lat.closed_loop(LoopTarget::Star(star), &LoopVariant::Minimal, p.t)?;
    let (loop_op, _) = lat.string_to_weyl(&loop_spec)?;
    let forms = lat.stabilizer_forms();
    let star_form = lat.star_form(star)?;
    let expected = if p.braid { p.s * p.t } else { 0.0 };
    let expected_phase = if p.braid { -p.t * p.t * p.s / 2.0 } else { 0.0 };

    let cases: Vec<(&str, bool)> = if both {
        vec![("braided", true), ("unbraided", false)]
    } else {
        vec![(if p.braid { "braided" } else { "unbraided" }, p.braid)]
    };

    let mut gaussian_states = Vec::new();
    if p.engine.gaussian() {
        let ground = prepare_ground_via_cluster(lat, p.squeezing_db, p.seed)?;
        for (salt, &(tag, with_loop)) in cases.iter().enumerate() {
            let st = detect_braiding(&ground, lat, star_mode, p.s, with_loop.then_some(&loop_op))?;
            record_all(&mut report, &st, &forms, tag, p, salt as u64)?;
            gaussian_states.push((tag, with_loop, st));
        }
        let (_, with_loop, st) = &gaussian_states[0];
        let phase = st.log_phase();
        report.ledger_phase = Some(phase);
        let want = if *with_loop { expected_phase } else { 0.0 };
        report.check(
            "ledger phase",
            linalg::phase_distance(phase, want) <= PHASE_TOL,
            format!("{phase} vs {}", linalg::wrap_phase(want)),
        );
        let (mean, var) = verify::form_moments(st, &star_form)?;
        let want = if *with_loop { p.s * p.t } else { 0.0 };
        report.check(
            "star nullifier displacement",
            (mean - want).abs() <= ENGINE_TOL,
            format!("mean {mean} vs {want}, variance {var}"),
        );
        if !both && p.s * p.t != 0.0 && (p.s * p.t).abs() < 2.0 * var.sqrt() {
            report.meta("warning", format!("|st| = {} is below 2 nullifier standard deviations", (p.s * p.t).abs()));
        }
        report.add_self_consistency_check();

        if lat.n_edges() <= verify::MAX_SPLIT_MODES {
            let ground_verdicts = verify::inseparability_check(&ground, lat)?;
            let same = gaussian_states.iter().all(|(_, _, st)| {
                verify::inseparability_check(st, lat).is_ok_and(|v| {
                    v.iter()
                        .zip(&ground_verdicts)
                        .all(|(a, b)| a.pass == b.pass && (a.variance_sum - b.variance_sum).abs() < 1e-9)
                })
            });
            report.check("inseparability displacement invariance", same, "verdicts of ground and detected states");
            let all = ground_verdicts.iter().all(|v| v.pass);
            let failing: Vec<String> = ground_verdicts
                .iter()
                .filter(|v| !v.pass)
                .take(4)
                .map(|v| format!("{:?}|{:?}", v.side_a, v.side_b))
                .collect();
            let mut detail = format!(
                "{} of {} splits below the separable bound",
                ground_verdicts.iter().filter(|v| v.pass).count(),
                ground_verdicts.len()
            );
            if !failing.is_empty() {
                detail.push_str(&format!("; separable across {}", failing.join(", ")));
            }
            report.check("inseparability", all, detail);
            report.verdicts = ground_verdicts;
        }

        if both && p.n_samples > 0 {
            let label = |tag: &str| format!("{} [{tag}]", star_form.label());
            let a = report.diagram(&label("unbraided")).map(|d| d.samples.clone());
            let b = report.diagram(&label("braided")).map(|d| d.samples.clone());
            if let (Some(a), Some(b)) = (a, b) {
                let d = verify::discriminate_states(&a, &b)?;
                let sigma = verify::form_moments(&gaussian_states[0].2, &star_form)?.1.sqrt();
                let q = verify::gaussian_error_bound(p.s * p.t, sigma);
                let slack = 5.0 * (q * (1.0 - q) / d.n_test as f64).sqrt() + 1.0 / d.n_test as f64;
                report.check(
                    "discrimination",
                    d.error_rate <= q + slack,
                    format!("error rate {} vs two-Gaussian bound {q}", d.error_rate),
                );
                report.meta("discrimination_bound", q);
                report.discrimination = Some(d);
            }
        }
    }

    if p.engine.exact() {
        let zeros = vec![0.0; n_cluster_measurements(lat)?];
        let ground = prepare_ground_exact(lat, &zeros)?;
        for (k, &(tag, with_loop)) in cases.iter().enumerate() {
            let (ns, phase) = detect_braiding_exact(&ground, lat, star_mode, p.s, with_loop.then_some(&loop_op))?;
            if !p.engine.gaussian() {
                record_exact(&mut report, &ns, &forms, tag)?;
                if k == 0 {
                    report.ledger_phase = Some(phase);
                    let want = ns.offset_of(&star_form.coeffs)?;
                    let target = if with_loop { expected } else { 0.0 };
                    report.check(
                        "star nullifier displacement",
                        (want - target).abs() <= ENGINE_TOL,
                        format!("{want} vs {target}"),
                    );
                }
                continue;
            }
            let (_, _, st) = &gaussian_states[k];
            let diff = engine_discrepancy(st, &ns, lat)?;
            report.check(
                &format!("engine cross-check [{tag}]"),
                diff <= ENGINE_TOL,
                format!("largest nullifier mean difference {diff:e}"),
            );
            report.check(
                &format!("ledger cross-check [{tag}]"),
                linalg::phase_distance(phase, st.log_phase()) <= PHASE_TOL,
                format!("tracker {phase} vs gaussian {}", st.log_phase()),
            );
        }
    }
    Ok(report)
}

/// Nine-mode detection and braiding along the minimal loop around star A,
/// the extended loop `A(t)·B(−t)`, and a loop deformed by a corner star.
pub fn run_path_independence_demo(p: &Params) -> Result<ExperimentReport> {
    check_params(p)?;
    let lat = Lattice::nine_mode();
    let mut report = base_report("path-independence", &lat, p);
    let (star, star_mode) = (0, 0);
    let minimal = lat.string_to_weyl(&lat.closed_loop(LoopTarget::Star(star), &LoopVariant::Minimal, p.t)?)?.0;
    let extended = lat
        .string_to_weyl(&lat.closed_loop(LoopTarget::Star(star), &LoopVariant::Extended(vec![0, 1, 4, 5, 6, 3]), p.t)?)?
        .0;
    let corner = lat.string_to_weyl(&lat.closed_loop(LoopTarget::Star(2), &LoopVariant::Minimal, p.t)?)?.0;
    let deformed = minimal.compose(&corner)?;
    let loops = [("minimal", &minimal), ("extended", &extended), ("deformed", &deformed)];
    let forms = lat.stabilizer_forms();
    let star_form = lat.star_form(star)?;

    let zeros = vec![0.0; n_cluster_measurements(&lat)?];
    let exact_ground = prepare_ground_exact(&lat, &zeros)?;
    let e_string = lat.e_string(&[star_mode], p.s)?;
    let (excitation, _) = lat.string_to_weyl(&e_string)?;

    let mut phases = Vec::new();
    for (_, w) in &loops {
        phases.push(weyl::braiding_phase(&exact_ground, &excitation, &[(*w).clone()])?);
    }
    let want = linalg::wrap_phase(-p.s * p.t);
    report.braiding_phase = Some(phases[0]);
    report.check(
        "braiding phase",
        phases.iter().all(|&ph| linalg::phase_distance(ph, want) <= PHASE_TOL),
        format!("{phases:?} vs {want}"),
    );

    let mut exact_offsets = Vec::new();
    let mut ledgers = Vec::new();
    for (_, w) in &loops {
        let (ns, phase) = detect_braiding_exact(&exact_ground, &lat, star_mode, p.s, Some(w))?;
        exact_offsets.push(forms.iter().map(|f| ns.offset_of(&f.coeffs)).collect::<Result<Vec<f64>>>()?);
        ledgers.push(phase);
    }
    report.ledger_phase = Some(ledgers[0]);
    let same_offsets = exact_offsets
        .iter()
        .all(|o| o.iter().zip(&exact_offsets[0]).all(|(a, b)| (a - b).abs() <= PHASE_TOL));
    report.check("exact displacements agree", same_offsets, "all stabilizer eigenvalues across loops");
    report.check(
        "exact ledgers agree",
        ledgers.iter().all(|&l| linalg::phase_distance(l, ledgers[0]) <= PHASE_TOL),
        format!("{ledgers:?}"),
    );
    let target = exact_offsets[0][lat.form_index(weyl::Site::Star(star))];
    report.check(
        "star nullifier displacement",
        (target - p.s * p.t).abs() <= ENGINE_TOL,
        format!("{target} vs {}", p.s * p.t),
    );

    if p.engine.gaussian() {
        let ground = prepare_ground_via_cluster(&lat, p.squeezing_db, p.seed)?;
        let mut means: Vec<Vec<f64>> = Vec::new();
        for (salt, (tag, w)) in loops.iter().enumerate() {
            let st = detect_braiding(&ground, &lat, star_mode, p.s, Some(w))?;
            record_all(&mut report, &st, std::slice::from_ref(&star_form), tag, p, salt as u64)?;
            means.push(verify::nullifier_moments(&st, &forms)?.into_iter().map(|(m, _)| m).collect());
            if p.engine.exact() {
                let diff = means[salt]
                    .iter()
                    .zip(&exact_offsets[salt])
                    .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
                report.check(
                    &format!("engine cross-check [{tag}]"),
                    diff <= ENGINE_TOL,
                    format!("largest nullifier mean difference {diff:e}"),
                );
            }
            let braided = braid(&create_anyons(&ground, &lat, &e_string)?.0, &lat, &lat.closed_loop(LoopTarget::Star(star), &LoopVariant::Minimal, p.t)?)?;
            if salt == 0 {
                report.check(
                    "gaussian braiding phase",
                    linalg::phase_distance(braided.log_phase(), want) <= PHASE_TOL,
                    format!("{} vs {want}", braided.log_phase()),
                );
            }
        }
        let agree = means.iter().all(|m| m.iter().zip(&means[0]).all(|(a, b)| (a - b).abs() <= PHASE_TOL));
        report.check("gaussian displacements agree", agree, "all stabilizer means across loops");
        report.add_self_consistency_check();
    }
    Ok(report)
}

/// Dispatch by protocol name: `ghz`, `path-independence` (alias `nine-mode`), `detect`.
pub fn run_protocol(name: &str, lat: Option<&Lattice>, p: &Params) -> Result<ExperimentReport> {
    match name {
        "ghz" => run_ghz_demo(p),
        "path-independence" | "nine-mode" => run_path_independence_demo(p),
        "detect" => run_detect(lat.unwrap_or(&Lattice::four_mode()), p),
        other => Err(Error::InvalidLattice(format!("unknown protocol {other}"))),
    }
}

pub const PROTOCOLS: &[&str] = &["ghz", "path-independence", "detect"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Species;

    fn lattices() -> Vec<Lattice> {
        vec![Lattice::four_mode(), Lattice::nine_mode(), Lattice::planar(2, 2).unwrap()]
    }

    #[test]
    fn exact_ground_is_stabilizer_set() {
        for lat in lattices() {
            let ns = prepare_ground_exact(&lat, &vec![0.3; n_cluster_measurements(&lat).unwrap()]).unwrap();
            for f in lat.stabilizer_forms() {
                assert!(ns.offset_of(&f.coeffs).unwrap().abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cluster_ground_beats_vacuum() {
        for lat in lattices() {
            let st = prepare_ground_via_cluster(&lat, 10.0, 7).unwrap();
            let vac = GaussianState::vacuum(lat.n_edges()).unwrap();
            for f in lat.stabilizer_forms() {
                let (m, v) = verify::form_moments(&st, &f).unwrap();
                let (_, v0) = verify::form_moments(&vac, &f).unwrap();
                assert!(m.abs() < 1e-8);
                assert!(v < v0, "{} {v} {v0}", f.label());
            }
            assert!(st.is_physical());
        }
    }

    #[test]
    fn seeds_share_covariance() {
        let lat = Lattice::nine_mode();
        let a = prepare_ground_via_cluster(&lat, 10.0, 1).unwrap();
        let b = prepare_ground_via_cluster(&lat, 10.0, 2).unwrap();
        assert!((a.cov() - b.cov()).amax() < 1e-8);
        let res = feed_forward_residuals(&lat, 10.0, &[1, 2, 3], Execution::Sequential).unwrap();
        assert!(res.iter().all(|&r| r < 1e-8));
    }

    #[test]
    fn four_mode_routes_agree() {
        let lat = Lattice::four_mode();
        let a = prepare_ground_via_cluster(&lat, 10.0, 3).unwrap();
        let b = prepare_ground_direct(&lat, 10.0).unwrap();
        assert!((a.cov() - b.cov()).amax() < 1e-8);
        assert!((a.mean() - b.mean()).amax() < 1e-8);
    }

    #[test]
    fn direct_route_on_larger_lattices() {
        for lat in [Lattice::nine_mode(), Lattice::planar(3, 2).unwrap()] {
            let st = prepare_ground_direct(&lat, 10.0).unwrap();
            assert!(st.is_physical());
            assert!((st.purity_det() - 1.0).abs() < 1e-8);
            let vac = GaussianState::vacuum(lat.n_edges()).unwrap();
            for f in lat.stabilizer_forms() {
                let (m, v) = verify::form_moments(&st, &f).unwrap();
                let (_, v0) = verify::form_moments(&vac, &f).unwrap();
                assert!(m.abs() < 1e-12 && v < 0.2 * v0);
            }
        }
    }

    #[test]
    fn direct_zero_db_is_below_benchmark() {
        let lat = Lattice::four_mode();
        let st = prepare_ground_direct(&lat, 0.0).unwrap();
        assert!(verify::inseparability_check(&st, &lat).unwrap().iter().all(|v| v.pass));
    }

    #[test]
    fn anyon_creation_and_annihilation() {
        let lat = Lattice::four_mode();
        let g = prepare_ground_direct(&lat, 10.0).unwrap();
        let spec = lat.e_string(&[0], 0.7).unwrap();
        let (st, cfg) = create_anyons(&g, &lat, &spec).unwrap();
        let (m, _) = verify::form_moments(&st, &lat.star_form(0).unwrap()).unwrap();
        assert!((m - 0.7).abs() < 1e-12);
        assert_eq!(cfg.e_charges.get(&0), Some(&0.7));
        let undo = StringSpec { amplitude: -0.7, ..spec.clone() };
        let (back, _) = create_anyons(&st, &lat, &undo).unwrap();
        assert!((back.mean() - g.mean()).amax() < 1e-15);
        let zero = StringSpec { amplitude: 0.0, species: Species::M, ..spec };
        assert_eq!(create_anyons(&g, &lat, &zero).unwrap().0.mean(), g.mean());
    }

    #[test]
    fn braiding_on_gaussian_and_exact() {
        let lat = Lattice::planar(3, 3).unwrap();
        let star = lat.star_at(1, 1).unwrap();
        let edge = lat.star_edges(star).unwrap()[0];
        let g = prepare_ground_direct(&lat, 10.0).unwrap();
        let e = lat.e_string(&[edge], 1.5).unwrap();
        let (excited, _) = create_anyons(&g, &lat, &e).unwrap();
        let lp = lat.closed_loop(LoopTarget::Star(star), &LoopVariant::Minimal, 0.5).unwrap();
        let out = braid(&excited, &lat, &lp).unwrap();
        assert!(linalg::phase_distance(out.log_phase(), -0.75) < 1e-12);
        for f in lat.stabilizer_forms() {
            let a = verify::form_moments(&excited, &f).unwrap().0;
            let b = verify::form_moments(&out, &f).unwrap().0;
            assert!((a - b).abs() < 1e-12);
        }
        let ns = lat.nullifier_set().unwrap();
        let (w, _) = lat.string_to_weyl(&e).unwrap();
        assert!(linalg::phase_distance(braid_exact(&ns, &lat, &w, &lp).unwrap(), -0.75) < 1e-12);
        let open = lat.m_string(&[edge], 1.0).unwrap();
        assert!(matches!(braid(&excited, &lat, &open), Err(Error::NotALoop(_))));
    }

    #[test]
    fn detection_sequence() {
        let lat = Lattice::four_mode();
        let g = prepare_ground_direct(&lat, 10.0).unwrap();
        let lp = lat.string_to_weyl(&lat.closed_loop(LoopTarget::Star(0), &LoopVariant::Minimal, 2.0).unwrap()).unwrap().0;
        let st = detect_braiding(&g, &lat, 0, 1.0, Some(&lp)).unwrap();
        let (m, v) = verify::form_moments(&st, &lat.star_form(0).unwrap()).unwrap();
        assert!((m - 2.0).abs() < 1e-12);
        assert!((v - verify::form_moments(&g, &lat.star_form(0).unwrap()).unwrap().1).abs() < 1e-12);
        assert!(linalg::phase_distance(st.log_phase(), -2.0) < 1e-12);
        let none = detect_braiding(&g, &lat, 0, 1.0, None).unwrap();
        assert!((none.mean() - g.mean()).amax() < 1e-9 && (none.cov() - g.cov()).amax() < 1e-9);
        let s0 = detect_braiding(&g, &lat, 0, 0.0, Some(&lp)).unwrap();
        assert!(verify::form_moments(&s0, &lat.star_form(0).unwrap()).unwrap().0.abs() < 1e-12);
        let ns = prepare_ground_exact(&lat, &[]).unwrap();
        let (ens, phase) = detect_braiding_exact(&ns, &lat, 0, 1.0, Some(&lp)).unwrap();
        assert!((ens.offset_of(&lat.star_form(0).unwrap().coeffs).unwrap() - 2.0).abs() < 1e-12);
        assert!(linalg::phase_distance(phase, -2.0) < 1e-12);
    }

    #[test]
    fn any_star_mode_gives_same_magnitude() {
        let lat = Lattice::nine_mode();
        let g = prepare_ground_via_cluster(&lat, 10.0, 4).unwrap();
        let lp = lat.string_to_weyl(&lat.closed_loop(LoopTarget::Star(0), &LoopVariant::Minimal, 2.0).unwrap()).unwrap().0;
        for &m in lat.star_edges(0).unwrap() {
            let st = detect_braiding(&g, &lat, m, 1.0, Some(&lp)).unwrap();
            let (mean, _) = verify::form_moments(&st, &lat.star_form(0).unwrap()).unwrap();
            assert!((mean.abs() - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ghz_report() {
        let p = Params { n_samples: 2000, seed: 42, ..Params::default() };
        let r = run_ghz_demo(&p).unwrap();
        assert!(r.passed(), "{:#?}", r.checks);
        let b = r.record("p1+p2+p3+p4 [braided]").unwrap();
        let u = r.record("p1+p2+p3+p4 [unbraided]").unwrap();
        assert!((b.analytic_mean - 2.0).abs() < 1e-9 && u.analytic_mean.abs() < 1e-9);
        assert!((b.analytic_variance - u.analytic_variance).abs() < 1e-12);
        assert_eq!(r.diagrams.len(), 8);
        assert_eq!(r.verdicts.len(), 7);
    }

    #[test]
    fn path_report() {
        let p = Params { n_samples: 500, seed: 1, s: 1.0, t: 1.0, ..Params::default() };
        let r = run_path_independence_demo(&p).unwrap();
        assert!(r.passed(), "{:#?}", r.checks);
        assert!(linalg::phase_distance(r.braiding_phase.unwrap(), -1.0) < 1e-9);
    }

    #[test]
    fn detect_on_planar_and_exact_only() {
        let lat = Lattice::planar(2, 2).unwrap();
        let p = Params { n_samples: 200, seed: 3, ..Params::default() };
        assert!(run_detect(&lat, &p).unwrap().passed());
        let p = Params { engine: Engine::Exact, braid: false, ..p };
        let r = run_detect(&lat, &p).unwrap();
        assert!(r.passed() && r.diagrams.is_empty());
    }

    #[test]
    fn forced_outcomes_checked() {
        let lat = Lattice::nine_mode();
        assert!(matches!(
            prepare_ground_via_cluster_forced(&lat, 3.0, &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let n = n_cluster_measurements(&lat).unwrap();
        let st = prepare_ground_via_cluster_forced(&lat, 3.0, &vec![0.0; n]).unwrap();
        assert_eq!(st.n_modes(), 9);
    }
}
