//! Kitaev-lattice incidence: edges carry qumodes, stars and plaquettes carry
//! the stabilizers `â_s = Σ p̂_e` and `b̂_f = Σ ±x̂_e`.
//!
//! Planar grids number horizontal edges first (row by row from the bottom),
//! then vertical edges. Star edges are listed left, up, right, down.
//! Plaquette edges run counterclockwise from the top edge with signs
//! `(+, −, +, −)`, so horizontal edges carry `+1` and vertical edges `−1`.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Quadrature;
use crate::weyl::{AnyonConfig, LinearForm, NullifierSet, Site, WeylOp, RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Planar,
    FourModeStar,
    NineMode,
}

/// Edge direction; `d = 1` vertical, `d = 2` horizontal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Orientation {
    Vertical,
    Horizontal,
}

impl Orientation {
    pub fn d(self) -> u8 {
        match self {
            Orientation::Vertical => 1,
            Orientation::Horizontal => 2,
        }
    }
}

impl TryFrom<u8> for Orientation {
    type Error = String;

    fn try_from(d: u8) -> std::result::Result<Self, String> {
        match d {
            1 => Ok(Orientation::Vertical),
            2 => Ok(Orientation::Horizontal),
            other => Err(format!("orientation must be 1 or 2, got {other}")),
        }
    }
}

impl From<Orientation> for u8 {
    fn from(o: Orientation) -> u8 {
        o.d()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: usize,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LatticeDoc {
    boundary: Boundary,
    width: usize,
    height: usize,
    edges: Vec<Edge>,
    stars: Vec<Vec<usize>>,
    plaquettes: Vec<Vec<(usize, i8)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeDoc", into = "LatticeDoc")]
pub struct Lattice {
    boundary: Boundary,
    width: usize,
    height: usize,
    edges: Vec<Edge>,
    stars: Vec<Vec<usize>>,
    plaquettes: Vec<Vec<(usize, i8)>>,
    edge_stars: Vec<Vec<usize>>,
    edge_plaquettes: Vec<Vec<(usize, i8)>>,
}

impl TryFrom<LatticeDoc> for Lattice {
    type Error = Error;

    fn try_from(d: LatticeDoc) -> Result<Self> {
        Lattice::new(d.boundary, d.width, d.height, d.edges, d.stars, d.plaquettes)
    }
}

impl From<Lattice> for LatticeDoc {
    fn from(l: Lattice) -> Self {
        LatticeDoc {
            boundary: l.boundary,
            width: l.width,
            height: l.height,
            edges: l.edges,
            stars: l.stars,
            plaquettes: l.plaquettes,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidLattice(msg.into())
}

/// Which quasiparticle a string creates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    /// `Z`-type string; charges live on stars.
    E,
    /// `X`-type string; charges live on plaquettes.
    M,
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Species::E => "e",
            Species::M => "m",
        })
    }
}

/// An ordered edge path with a sign per edge; each edge gets
/// `X(sign·amplitude)` or `Z(sign·amplitude)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringSpec {
    pub species: Species,
    pub edges: Vec<(usize, f64)>,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopTarget {
    Star(usize),
    Plaquette(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopVariant {
    /// The site's own edges.
    Minimal,
    /// Any closed edge path; signs follow the string rule.
    Extended(Vec<usize>),
}

/// Parent cluster and single-mode operations that leave the lattice state
/// on the edge modes `0..E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPattern {
    pub n_parent: usize,
    /// `(a, b, weight)` for `C_Z(weight)` between parent modes.
    pub cz: Vec<(usize, usize, f64)>,
    pub measurements: Vec<(usize, Quadrature)>,
    /// Surviving modes that receive `F†`.
    pub inverse_fourier: Vec<usize>,
}

impl ClusterPattern {
    pub fn n_surviving(&self) -> usize {
        self.n_parent - self.measurements.len()
    }
}

impl Lattice {
    /// Build and validate an arbitrary incidence structure.
    pub fn new(
        boundary: Boundary,
        width: usize,
        height: usize,
        edges: Vec<Edge>,
        stars: Vec<Vec<usize>>,
        plaquettes: Vec<Vec<(usize, i8)>>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("width and height must be positive"));
        }
        if edges.is_empty() {
            return Err(invalid("no edges"));
        }
        let n = edges.len();
        for (i, e) in edges.iter().enumerate() {
            if e.id != i {
                return Err(invalid(format!("edge ids must be 0..{n} in order, found {} at {i}", e.id)));
            }
        }
        let mut edge_stars = vec![Vec::new(); n];
        for (s, star) in stars.iter().enumerate() {
            if star.is_empty() {
                return Err(invalid(format!("star {s} has no edges")));
            }
            for (k, &e) in star.iter().enumerate() {
                if e >= n {
                    return Err(Error::InvalidId { kind: "edge", id: e });
                }
                if star[..k].contains(&e) {
                    return Err(invalid(format!("star {s} lists edge {e} twice")));
                }
                edge_stars[e].push(s);
            }
        }
        let mut edge_plaquettes = vec![Vec::new(); n];
        for (f, plaq) in plaquettes.iter().enumerate() {
            if plaq.is_empty() {
                return Err(invalid(format!("plaquette {f} has no edges")));
            }
            for (k, &(e, sign)) in plaq.iter().enumerate() {
                if e >= n {
                    return Err(Error::InvalidId { kind: "edge", id: e });
                }
                if sign != 1 && sign != -1 {
                    return Err(invalid(format!("plaquette {f} has sign {sign} on edge {e}")));
                }
                if plaq[..k].iter().any(|&(e2, _)| e2 == e) {
                    return Err(invalid(format!("plaquette {f} lists edge {e} twice")));
                }
                edge_plaquettes[e].push((f, sign));
            }
        }
        for e in 0..n {
            if edge_stars[e].len() > 2 || edge_plaquettes[e].len() > 2 {
                return Err(invalid(format!("edge {e} bounds more than two stars or plaquettes")));
            }
        }
        for (s, star) in stars.iter().enumerate() {
            for (f, plaq) in plaquettes.iter().enumerate() {
                let overlap: i32 = plaq
                    .iter()
                    .filter(|(e, _)| star.contains(e))
                    .map(|&(_, sign)| sign as i32)
                    .sum();
                if overlap != 0 {
                    return Err(invalid(format!("star {s} and plaquette {f} do not commute")));
                }
            }
        }
        Ok(Self {
            boundary,
            width,
            height,
            edges,
            stars,
            plaquettes,
            edge_stars,
            edge_plaquettes,
        })
    }

    /// Open-boundary `width × height` grid of plaquettes.
    pub fn planar(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("width and height must be positive"));
        }
        let (w, h) = (width, height);
        let n_h = w * (h + 1);
        let hz = |i: usize, j: usize| j * w + i;
        let vt = |i: usize, j: usize| n_h + j * (w + 1) + i;
        let mut edges = Vec::with_capacity(n_h + (w + 1) * h);
        for id in 0..n_h {
            edges.push(Edge { id, orientation: Orientation::Horizontal });
        }
        for k in 0..(w + 1) * h {
            edges.push(Edge { id: n_h + k, orientation: Orientation::Vertical });
        }
        let mut stars = Vec::with_capacity((w + 1) * (h + 1));
        for j in 0..=h {
            for i in 0..=w {
                let mut s = Vec::with_capacity(4);
                if i > 0 {
                    s.push(hz(i - 1, j));
                }
                if j < h {
                    s.push(vt(i, j));
                }
                if i < w {
                    s.push(hz(i, j));
                }
                if j > 0 {
                    s.push(vt(i, j - 1));
                }
                stars.push(s);
            }
        }
        let mut plaquettes = Vec::with_capacity(w * h);
        for j in 0..h {
            for i in 0..w {
                plaquettes.push(vec![
                    (hz(i, j + 1), 1),
                    (vt(i, j), -1),
                    (hz(i, j), 1),
                    (vt(i + 1, j), -1),
                ]);
            }
        }
        Self::new(Boundary::Planar, w, h, edges, stars, plaquettes)
    }

    /// One star of four edges with the three pair-difference plaquettes
    /// `x₁−x₂, x₂−x₃, x₃−x₄`.
    pub fn four_mode() -> Self {
        use Orientation::*;
        let edges = [Horizontal, Vertical, Horizontal, Vertical]
            .into_iter()
            .enumerate()
            .map(|(id, orientation)| Edge { id, orientation })
            .collect();
        Self::new(
            Boundary::FourModeStar,
            1,
            1,
            edges,
            vec![vec![0, 1, 2, 3]],
            vec![vec![(0, 1), (1, -1)], vec![(1, 1), (2, -1)], vec![(2, 1), (3, -1)]],
        )
        .expect("four-mode lattice is valid")
    }

    /// Two adjacent stars A (edges 0–3) and B (edges 2, 4, 5, 6) sharing
    /// edge 2, closed above by edge 7 and below by edge 8 into two
    /// plaquettes. Edges 0 and 5 dangle.
    pub fn nine_mode() -> Self {
        use Orientation::*;
        let o = [
            Horizontal, Vertical, Horizontal, Vertical, Vertical, Horizontal, Vertical, Horizontal,
            Horizontal,
        ];
        let edges = o
            .into_iter()
            .enumerate()
            .map(|(id, orientation)| Edge { id, orientation })
            .collect();
        let stars = vec![
            vec![0, 1, 2, 3],
            vec![2, 4, 5, 6],
            vec![7, 1],
            vec![7, 4],
            vec![3, 8],
            vec![8, 6],
            vec![0],
            vec![5],
        ];
        let plaquettes = vec![
            vec![(7, 1), (1, -1), (2, 1), (4, -1)],
            vec![(2, 1), (3, -1), (8, 1), (6, -1)],
        ];
        Self::new(Boundary::NineMode, 2, 2, edges, stars, plaquettes).expect("nine-mode lattice is valid")
    }

    /// `four-mode`, `nine-mode`, or `planar-WxH`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "four-mode" => Ok(Self::four_mode()),
            "nine-mode" => Ok(Self::nine_mode()),
            _ => {
                let dims = name
                    .strip_prefix("planar-")
                    .and_then(|d| d.split_once('x'))
                    .and_then(|(w, h)| Some((w.parse().ok()?, h.parse().ok()?)));
                match dims {
                    Some((w, h)) => Self::planar(w, h),
                    None => Err(Error::UnsupportedLattice(name.to_string())),
                }
            }
        }
    }

    /// Fixed-geometry names; `planar-WxH` is accepted for any size.
    pub fn builtin_names() -> &'static [&'static str] {
        &["four-mode", "nine-mode"]
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_stars(&self) -> usize {
        self.stars.len()
    }

    pub fn n_plaquettes(&self) -> usize {
        self.plaquettes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn orientation(&self, e: usize) -> Result<Orientation> {
        self.edges
            .get(e)
            .map(|e| e.orientation)
            .ok_or(Error::InvalidId { kind: "edge", id: e })
    }

    pub fn star_edges(&self, s: usize) -> Result<&[usize]> {
        self.stars
            .get(s)
            .map(Vec::as_slice)
            .ok_or(Error::InvalidId { kind: "star", id: s })
    }

    pub fn plaquette_edges(&self, f: usize) -> Result<&[(usize, i8)]> {
        self.plaquettes
            .get(f)
            .map(Vec::as_slice)
            .ok_or(Error::InvalidId { kind: "plaquette", id: f })
    }

    pub fn stars_of_edge(&self, e: usize) -> &[usize] {
        &self.edge_stars[e]
    }

    pub fn plaquettes_of_edge(&self, e: usize) -> &[(usize, i8)] {
        &self.edge_plaquettes[e]
    }

    /// A star well inside the lattice: the middle vertex of a planar grid,
    /// the only star of the four-mode lattice, star A of the nine-mode one.
    pub fn central_star(&self) -> usize {
        match self.boundary {
            Boundary::Planar => self.star_at(self.width / 2, self.height / 2).unwrap_or(0),
            _ => 0,
        }
    }

    /// Star at grid vertex `(i, j)` of a planar lattice.
    pub fn star_at(&self, i: usize, j: usize) -> Option<usize> {
        (self.boundary == Boundary::Planar && i <= self.width && j <= self.height)
            .then(|| j * (self.width + 1) + i)
    }

    pub fn star_form(&self, s: usize) -> Result<LinearForm> {
        let terms: Vec<(usize, f64)> = self.star_edges(s)?.iter().map(|&e| (e, 1.0)).collect();
        Ok(LinearForm::from_terms(self.n_edges(), &[], &terms))
    }

    pub fn plaquette_form(&self, f: usize) -> Result<LinearForm> {
        let terms: Vec<(usize, f64)> = self
            .plaquette_edges(f)?
            .iter()
            .map(|&(e, sign)| (e, sign as f64))
            .collect();
        Ok(LinearForm::from_terms(self.n_edges(), &terms, &[]))
    }

    /// All star forms followed by all plaquette forms.
    pub fn stabilizer_forms(&self) -> Vec<LinearForm> {
        (0..self.n_stars())
            .map(|s| self.star_form(s).expect("valid star"))
            .chain((0..self.n_plaquettes()).map(|f| self.plaquette_form(f).expect("valid plaquette")))
            .collect()
    }

    /// Index into [`Lattice::stabilizer_forms`] of a site.
    pub fn form_index(&self, site: Site) -> usize {
        match site {
            Site::Star(s) => s,
            Site::Plaquette(f) => self.n_stars() + f,
        }
    }

    /// Indices of a maximal independent subset of the stabilizer forms,
    /// chosen greedily in order.
    pub fn independent_stabilizers(&self) -> Vec<usize> {
        let forms = self.stabilizer_forms();
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let mut chosen = Vec::new();
        for (k, f) in forms.iter().enumerate() {
            let mut r = DVector::from_column_slice(&f.coeffs);
            let scale = r.norm();
            // two Gram-Schmidt passes for stability
            for _ in 0..2 {
                for b in &basis {
                    let proj = b.dot(&r);
                    r.axpy(-proj, b, 1.0);
                }
            }
            let res = r.norm();
            if res > RANK_TOL.sqrt() * scale {
                basis.push(r / res);
                chosen.push(k);
            }
        }
        chosen
    }

    /// Ground-state nullifiers: an independent subset of the stabilizers.
    pub fn nullifier_set(&self) -> Result<NullifierSet> {
        let forms = self.stabilizer_forms();
        let chosen = self.independent_stabilizers();
        if chosen.len() != self.n_edges() {
            return Err(Error::Rank(format!(
                "stabilizers span {} of {} modes",
                chosen.len(),
                self.n_edges()
            )));
        }
        NullifierSet::new(self.n_edges(), chosen.into_iter().map(|k| forms[k].clone()).collect())
    }

    fn shared_plaquette(&self, a: usize, b: usize) -> Option<(i8, i8)> {
        self.edge_plaquettes[a].iter().find_map(|&(f, sa)| {
            self.edge_plaquettes[b]
                .iter()
                .find(|&&(g, _)| g == f)
                .map(|&(_, sb)| (sa, sb))
        })
    }

    fn share_star(&self, a: usize, b: usize) -> bool {
        self.edge_stars[a].iter().any(|s| self.edge_stars[b].contains(s))
    }

    /// Sign of the next edge so that the charge between `a` and `b` cancels.
    fn next_sign(&self, species: Species, a: usize, b: usize, sigma_a: f64, pos: usize) -> Result<f64> {
        match species {
            Species::M => {
                if let Some((sa, sb)) = self.shared_plaquette(a, b) {
                    Ok(-sigma_a * sa as f64 * sb as f64)
                } else if self.share_star(a, b) {
                    Ok(sigma_a)
                } else {
                    Err(Error::DisconnectedPath(pos, pos + 1))
                }
            }
            Species::E => {
                if self.share_star(a, b) {
                    Ok(-sigma_a)
                } else {
                    Err(Error::DisconnectedPath(pos, pos + 1))
                }
            }
        }
    }

    fn check_edge(&self, e: usize) -> Result<()> {
        if e >= self.n_edges() {
            Err(Error::InvalidId { kind: "edge", id: e })
        } else {
            Ok(())
        }
    }

    /// A string along `path` whose interior charges cancel.
    pub fn string(&self, species: Species, path: &[usize], amplitude: f64) -> Result<StringSpec> {
        let mut edges = Vec::with_capacity(path.len());
        let mut sigma = 1.0;
        for (k, &e) in path.iter().enumerate() {
            self.check_edge(e)?;
            if k > 0 {
                sigma = self.next_sign(species, path[k - 1], e, sigma, k - 1)?;
            }
            edges.push((e, sigma));
        }
        Ok(StringSpec { species, edges, amplitude })
    }

    pub fn m_string(&self, path: &[usize], amplitude: f64) -> Result<StringSpec> {
        self.string(Species::M, path, amplitude)
    }

    pub fn e_string(&self, path: &[usize], amplitude: f64) -> Result<StringSpec> {
        self.string(Species::E, path, amplitude)
    }

    /// Charges created by a displacement: shifts of every stabilizer.
    pub fn charges_of(&self, w: &WeylOp) -> AnyonConfig {
        let mut cfg = AnyonConfig::vacuum();
        for s in 0..self.n_stars() {
            let q: f64 = self.stars[s].iter().map(|&e| w.p_shifts[e]).sum();
            cfg.add(Site::Star(s), q);
        }
        for f in 0..self.n_plaquettes() {
            let q: f64 = self.plaquettes[f]
                .iter()
                .map(|&(e, sign)| sign as f64 * w.x_shifts[e])
                .sum();
            cfg.add(Site::Plaquette(f), q);
        }
        cfg
    }

    /// The string's Weyl operator and the anyons it creates from vacuum.
    pub fn string_to_weyl(&self, spec: &StringSpec) -> Result<(WeylOp, AnyonConfig)> {
        let n = self.n_edges();
        let mut w = WeylOp::identity(n);
        for (k, &(e, sign)) in spec.edges.iter().enumerate() {
            self.check_edge(e)?;
            if k > 0 {
                let prev = spec.edges[k - 1].0;
                let linked = match spec.species {
                    Species::M => self.shared_plaquette(prev, e).is_some() || self.share_star(prev, e),
                    Species::E => self.share_star(prev, e),
                };
                if !linked {
                    return Err(Error::DisconnectedPath(k - 1, k));
                }
            }
            match spec.species {
                Species::M => w.x_shifts[e] += sign * spec.amplitude,
                Species::E => w.p_shifts[e] += sign * spec.amplitude,
            }
        }
        let cfg = self.charges_of(&w);
        Ok((w, cfg))
    }

    /// A closed string around a site: an m-loop around a star or an e-loop
    /// around a plaquette.
    pub fn closed_loop(&self, around: LoopTarget, variant: &LoopVariant, amplitude: f64) -> Result<StringSpec> {
        let spec = match (around, variant) {
            (LoopTarget::Star(s), LoopVariant::Minimal) => StringSpec {
                species: Species::M,
                edges: self.star_edges(s)?.iter().map(|&e| (e, 1.0)).collect(),
                amplitude,
            },
            (LoopTarget::Plaquette(f), LoopVariant::Minimal) => StringSpec {
                species: Species::E,
                edges: self
                    .plaquette_edges(f)?
                    .iter()
                    .map(|&(e, sign)| (e, sign as f64))
                    .collect(),
                amplitude,
            },
            (LoopTarget::Star(s), LoopVariant::Extended(path)) => {
                self.star_edges(s)?;
                self.m_string(path, amplitude)?
            }
            (LoopTarget::Plaquette(f), LoopVariant::Extended(path)) => {
                self.plaquette_edges(f)?;
                self.e_string(path, amplitude)?
            }
        };
        let (_, cfg) = self.string_to_weyl(&spec)?;
        if let Some(&site) = cfg.charged_sites().first() {
            return Err(Error::NotALoop(self.form_index(site)));
        }
        Ok(spec)
    }

    /// Measurement pattern on a parent cluster that leaves this lattice's
    /// ground state on the edge modes.
    ///
    /// The four-mode lattice uses a star graph centred on edge 1. Other
    /// lattices use parent modes `edges ++ sites`, one site mode per
    /// independent stabilizer, with every edge linked to its stars (weight 1)
    /// and plaquettes (weight = sign); star modes are read out in `p`,
    /// plaquette modes in `x`.
    pub fn cluster_pattern(&self) -> Result<ClusterPattern> {
        let n = self.n_edges();
        match self.boundary {
            Boundary::FourModeStar => {
                if n != 4 {
                    return Err(Error::UnsupportedLattice(format!(
                        "four-mode-star boundary with {n} edges"
                    )));
                }
                Ok(ClusterPattern {
                    n_parent: 4,
                    cz: vec![(1, 0, 1.0), (1, 2, 1.0), (1, 3, 1.0)],
                    measurements: Vec::new(),
                    inverse_fourier: vec![0, 2, 3],
                })
            }
            Boundary::Planar | Boundary::NineMode => {
                let sites: Vec<usize> = self.independent_stabilizers();
                let mut cz = Vec::new();
                let mut measurements = Vec::with_capacity(sites.len());
                for (k, &site) in sites.iter().enumerate() {
                    let mode = n + k;
                    if site < self.n_stars() {
                        for &e in &self.stars[site] {
                            cz.push((e, mode, 1.0));
                        }
                        measurements.push((mode, Quadrature::P));
                    } else {
                        for &(e, sign) in &self.plaquettes[site - self.n_stars()] {
                            cz.push((e, mode, sign as f64));
                        }
                        measurements.push((mode, Quadrature::X));
                    }
                }
                Ok(ClusterPattern {
                    n_parent: n + sites.len(),
                    cz,
                    measurements,
                    inverse_fourier: (0..n).collect(),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::SymplecticOp;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn supported() -> Vec<Lattice> {
        vec![
            Lattice::four_mode(),
            Lattice::nine_mode(),
            Lattice::planar(1, 1).unwrap(),
            Lattice::planar(2, 3).unwrap(),
            Lattice::planar(5, 5).unwrap(),
        ]
    }

    #[test]
    fn four_mode_forms() {
        let l = Lattice::four_mode();
        assert_eq!(l.star_form(0).unwrap().label(), "p1+p2+p3+p4");
        let labels: Vec<String> = (0..3).map(|f| l.plaquette_form(f).unwrap().label()).collect();
        assert_eq!(labels, ["x1-x2", "x2-x3", "x3-x4"]);
        assert!(matches!(l.star_form(1), Err(Error::InvalidId { kind: "star", .. })));
    }

    #[test]
    fn planar_counts_and_degrees() {
        let l = Lattice::planar(5, 5).unwrap();
        assert_eq!((l.n_edges(), l.n_stars(), l.n_plaquettes()), (60, 36, 25));
        let corner = l.star_at(0, 0).unwrap();
        let side = l.star_at(2, 0).unwrap();
        let inner = l.star_at(2, 2).unwrap();
        assert_eq!(l.star_edges(corner).unwrap().len(), 2);
        assert_eq!(l.star_edges(side).unwrap().len(), 3);
        assert_eq!(l.star_edges(inner).unwrap().len(), 4);
        let f = l.star_form(side).unwrap();
        assert_eq!(f.coeffs.iter().filter(|c| **c != 0.0).count(), 3);
        for p in 0..l.n_plaquettes() {
            assert_eq!(f.commutator(&l.plaquette_form(p).unwrap()), 0.0);
        }
        for e in 0..l.n_edges() {
            assert!(!l.stars_of_edge(e).is_empty());
        }
    }

    #[test]
    fn interior_plaquette_sign_pattern() {
        let l = Lattice::planar(3, 3).unwrap();
        let f = l.plaquette_form(4).unwrap();
        let signs: Vec<f64> = l.plaquette_edges(4).unwrap().iter().map(|&(e, _)| f.x_coeff(e)).collect();
        assert_eq!(signs, [1.0, -1.0, 1.0, -1.0]);
        for &(e, s) in l.plaquette_edges(4).unwrap() {
            let d = l.orientation(e).unwrap();
            assert_eq!(s, if d == Orientation::Horizontal { 1 } else { -1 });
        }
    }

    #[test]
    fn stabilizers_commute_and_have_full_rank() {
        for l in supported() {
            let forms = l.stabilizer_forms();
            for a in &forms {
                for b in &forms {
                    assert_eq!(a.commutator(b), 0.0);
                }
            }
            let ns = l.nullifier_set().unwrap();
            assert_eq!(ns.rank(), l.n_edges());
        }
    }

    #[test]
    fn single_edge_strings() {
        let l = Lattice::planar(3, 3).unwrap();
        let inner = l.star_at(1, 1).unwrap();
        let right = l.star_edges(inner).unwrap()[2];
        assert_eq!(l.orientation(right).unwrap(), Orientation::Horizontal);
        let (w, cfg) = l.string_to_weyl(&l.m_string(&[right], 2.0).unwrap()).unwrap();
        assert_eq!(w.x_shifts[right], 2.0);
        assert_eq!(cfg.m_charges.len(), 2);
        assert!(cfg.m_charges.values().all(|&q| q == 2.0));
        assert!(cfg.e_charges.is_empty());

        let up = l.star_edges(inner).unwrap()[1];
        let (_, cfg) = l.string_to_weyl(&l.m_string(&[up], 2.0).unwrap()).unwrap();
        assert!(cfg.m_charges.values().all(|&q| q == -2.0));

        let (_, cfg) = l.string_to_weyl(&l.e_string(&[right], 1.5).unwrap()).unwrap();
        assert_eq!(cfg.e_charges.len(), 2);
        assert!(cfg.e_charges.contains_key(&inner));
        assert!(cfg.e_charges.values().all(|&q| q == 1.5));
    }

    #[test]
    fn glued_strings_cancel_inside() {
        let l = Lattice::planar(4, 1).unwrap();
        // vertical edges 8..=12 separate plaquettes 0..=3
        let a = l.m_string(&[9], 1.0).unwrap();
        let (wa, ca) = l.string_to_weyl(&a).unwrap();
        let mut sites = ca.charged_sites();
        sites.sort();
        assert_eq!(sites, [Site::Plaquette(0), Site::Plaquette(1)]);
        let q = ca.charge(Site::Plaquette(1));
        // second string with opposite charge on the shared plaquette
        let b = l.m_string(&[10], 1.0).unwrap();
        let (wb, cb) = l.string_to_weyl(&b).unwrap();
        let scale = -q / cb.charge(Site::Plaquette(1));
        let mut wb2 = wb.clone();
        wb2.x_shifts.iter_mut().for_each(|x| *x *= scale);
        let glued = wa.compose(&wb2).unwrap();
        let cfg = l.charges_of(&glued);
        let mut sites = cfg.charged_sites();
        sites.sort();
        assert_eq!(sites, [Site::Plaquette(0), Site::Plaquette(2)]);
        // the same result as one string along both edges
        let (wj, _) = l.string_to_weyl(&l.m_string(&[9, 10], 1.0).unwrap()).unwrap();
        assert_eq!(wj.displacement(), glued.displacement());
    }

    #[test]
    fn disconnected_paths_are_rejected() {
        let l = Lattice::planar(3, 3).unwrap();
        assert_eq!(l.e_string(&[0, 8], 1.0), Err(Error::DisconnectedPath(0, 1)));
        let spec = StringSpec { species: Species::M, edges: vec![(0, 1.0), (11, 1.0)], amplitude: 1.0 };
        assert_eq!(l.string_to_weyl(&spec).map(|_| ()), Err(Error::DisconnectedPath(0, 1)));
        assert!(matches!(l.m_string(&[99], 1.0), Err(Error::InvalidId { .. })));
    }

    #[test]
    fn minimal_loops_close() {
        for l in supported() {
            for s in 0..l.n_stars() {
                let spec = l.closed_loop(LoopTarget::Star(s), &LoopVariant::Minimal, 2.0).unwrap();
                assert_eq!(spec.edges.len(), l.star_edges(s).unwrap().len());
                assert!(spec.edges.iter().all(|&(_, sign)| sign == 1.0));
                let (w, _) = l.string_to_weyl(&spec).unwrap();
                l.nullifier_set().unwrap().check_closed(&w).unwrap();
            }
            for f in 0..l.n_plaquettes() {
                let spec = l.closed_loop(LoopTarget::Plaquette(f), &LoopVariant::Minimal, 1.0).unwrap();
                let (w, cfg) = l.string_to_weyl(&spec).unwrap();
                assert!(cfg.is_vacuum());
                l.nullifier_set().unwrap().check_closed(&w).unwrap();
            }
        }
    }

    #[test]
    fn nine_mode_extended_loop() {
        let l = Lattice::nine_mode();
        let ext = l
            .closed_loop(LoopTarget::Star(0), &LoopVariant::Extended(vec![0, 1, 4, 5, 6, 3]), 1.0)
            .unwrap();
        let (w, _) = l.string_to_weyl(&ext).unwrap();
        let a = l.string_to_weyl(&l.closed_loop(LoopTarget::Star(0), &LoopVariant::Minimal, 1.0).unwrap()).unwrap().0;
        let b = l.string_to_weyl(&l.closed_loop(LoopTarget::Star(1), &LoopVariant::Minimal, -1.0).unwrap()).unwrap().0;
        assert_eq!(w.displacement(), a.compose(&b).unwrap().displacement());
        assert!(matches!(
            l.closed_loop(LoopTarget::Star(0), &LoopVariant::Extended(vec![1, 2]), 1.0),
            Err(Error::NotALoop(_))
        ));
    }

    #[test]
    fn pattern_partitions_parent() {
        for l in supported() {
            let p = l.cluster_pattern().unwrap();
            assert_eq!(p.measurements.len() + l.n_edges(), p.n_parent);
            assert_eq!(p.n_surviving(), l.n_edges());
            assert!(p.measurements.iter().all(|&(m, _)| m >= l.n_edges()));
        }
        let p = Lattice::four_mode().cluster_pattern().unwrap();
        assert_eq!(p.inverse_fourier, [0, 2, 3]);
        assert_eq!(p.n_parent, 4);
    }

    fn run_pattern(l: &Lattice, rng: &mut ChaCha8Rng) -> NullifierSet {
        let p = l.cluster_pattern().unwrap();
        let n = p.n_parent;
        let mut ns = NullifierSet::zero_momentum(n);
        for &(a, b, w) in &p.cz {
            ns = ns.apply_gate(&SymplecticOp::cz(n, a, b, w).unwrap()).unwrap();
        }
        let mut meas = p.measurements.clone();
        meas.sort_by(|a, b| b.0.cmp(&a.0));
        for (m, q) in meas {
            ns = ns.measure(m, q, rng.random_range(-1.0..1.0)).unwrap();
        }
        for &m in &p.inverse_fourier {
            ns = ns.apply_gate(&SymplecticOp::inverse_fourier(l.n_edges(), m).unwrap()).unwrap();
        }
        ns
    }

    #[test]
    fn pattern_yields_stabilizers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for l in supported() {
            let ns = run_pattern(&l, &mut rng);
            assert_eq!(ns.mode_count(), l.n_edges());
            for f in l.stabilizer_forms() {
                ns.offset_of(&f.coeffs).unwrap();
            }
        }
    }

    #[test]
    fn json_round_trip() {
        for l in supported() {
            let back = Lattice::from_json(&l.to_json().unwrap()).unwrap();
            assert_eq!(back, l);
        }
        let doc = r#"{"boundary":"planar","width":1,"height":1,
            "edges":[{"id":0,"orientation":2},{"id":1,"orientation":1}],
            "stars":[[0,1]],"plaquettes":[[[0,1],[1,1]]]}"#;
        assert!(matches!(Lattice::from_json(doc), Err(Error::Serde(m)) if m.contains("commute")));
        let bad = doc.replace("\"orientation\":1", "\"orientation\":3");
        assert!(Lattice::from_json(&bad).is_err());
    }

    #[test]
    fn names() {
        assert_eq!(Lattice::from_name("planar-5x4").unwrap().n_plaquettes(), 20);
        assert_eq!(Lattice::from_name("nine-mode").unwrap().n_edges(), 9);
        assert!(matches!(Lattice::from_name("torus"), Err(Error::UnsupportedLattice(_))));
    }

    fn face_walk(l: &Lattice, rng: &mut ChaCha8Rng, steps: usize) -> (Vec<usize>, usize, usize) {
        let start = rng.random_range(0..l.n_plaquettes());
        let mut visited = vec![start];
        let mut path = Vec::new();
        let mut cur = start;
        for _ in 0..steps {
            let options: Vec<(usize, usize)> = l.plaquettes[cur]
                .iter()
                .filter_map(|&(e, _)| {
                    l.plaquettes_of_edge(e)
                        .iter()
                        .find(|&&(g, _)| g != cur && !visited.contains(&g))
                        .map(|&(g, _)| (e, g))
                })
                .collect();
            if options.is_empty() {
                break;
            }
            let (e, g) = options[rng.random_range(0..options.len())];
            path.push(e);
            visited.push(g);
            cur = g;
        }
        (path, start, cur)
    }

    fn vertex_walk(l: &Lattice, rng: &mut ChaCha8Rng, steps: usize) -> (Vec<usize>, usize, usize) {
        let start = rng.random_range(0..l.n_stars());
        let mut visited = vec![start];
        let mut path = Vec::new();
        let mut cur = start;
        for _ in 0..steps {
            let options: Vec<(usize, usize)> = l.stars[cur]
                .iter()
                .filter_map(|&e| {
                    l.stars_of_edge(e)
                        .iter()
                        .find(|&&g| g != cur && !visited.contains(&g))
                        .map(|&g| (e, g))
                })
                .collect();
            if options.is_empty() {
                break;
            }
            let (e, g) = options[rng.random_range(0..options.len())];
            path.push(e);
            visited.push(g);
            cur = g;
        }
        (path, start, cur)
    }

    proptest! {
        #[test]
        fn open_m_strings_charge_only_endpoints(seed in any::<u64>(), steps in 1usize..12, t in 0.1f64..3.0) {
            let l = Lattice::planar(5, 5).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (path, a, b) = face_walk(&l, &mut rng, steps);
            prop_assume!(!path.is_empty());
            let (_, cfg) = l.string_to_weyl(&l.m_string(&path, t).unwrap()).unwrap();
            let mut sites = cfg.charged_sites();
            sites.sort();
            let mut want = vec![Site::Plaquette(a), Site::Plaquette(b)];
            want.sort();
            prop_assert_eq!(sites, want);
        }

        #[test]
        fn open_e_strings_charge_only_endpoints(seed in any::<u64>(), steps in 1usize..12, s in 0.1f64..3.0) {
            let l = Lattice::planar(5, 5).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (path, a, b) = vertex_walk(&l, &mut rng, steps);
            prop_assume!(!path.is_empty());
            let (_, cfg) = l.string_to_weyl(&l.e_string(&path, s).unwrap()).unwrap();
            let mut sites = cfg.charged_sites();
            sites.sort();
            let mut want = vec![Site::Star(a), Site::Star(b)];
            want.sort();
            prop_assert_eq!(sites, want);
        }
    }
}
