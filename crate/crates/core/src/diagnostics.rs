//! Element classification against the combinatorial prediction, and an
//! empirical probe for source/sink dynamics of map sequences.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::pingpong::{equal_area_grid, AfpConfig, HnnConfig};
use crate::sphere::{chordal_distance, FixedPoints, MapClass, MoebiusMap, SpherePoint};
use crate::words::{AfpNormalForm, HnnGroup, HnnNormalForm, Letter, WordError};

pub const DEFAULT_PROBE_GRID: usize = 64;
pub const MIN_PROBE_MAPS: usize = 8;
/// Chordal radius of the neighborhood of `z_-` excluded from the spread.
pub const PROBE_NEIGHBORHOOD: f64 = 0.2;
/// Final spread below which the sequence counts as converging.
pub const PROBE_SPREAD_TOL: f64 = 0.05;
const DISTINCT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("probe needs at least {MIN_PROBE_MAPS} maps, got {0}")]
    TooFewMaps(usize),
    #[error("maps {0} and {1} coincide")]
    RepeatedMap(usize, usize),
    #[error("no convergence detected (final spread {final_spread:.3e})")]
    NoConvergenceDetected { final_spread: f64 },
    #[error(transparent)]
    Word(#[from] WordError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombinatorialClass {
    FactorConjugate,
    EvenCoreLoxodromic,
    PositiveCoreLoxodromic,
}

#[derive(Clone, Debug, Serialize)]
pub struct ElementVerdict {
    pub word: String,
    pub conjugator: String,
    pub core: String,
    pub combinatorial: CombinatorialClass,
    /// Class implied by the combinatorics: loxodromic for off-factor cores,
    /// the core's own class otherwise.
    pub predicted: MapClass,
    pub numeric: MapClass,
    pub near_parabolic: bool,
    pub attracting: Option<[f64; 3]>,
    pub repelling: Option<[f64; 3]>,
    /// Where the core's fixed points sit (`int-B1`, `int-B2`, `int-B-1`,
    /// or `elsewhere`).
    pub attractor_location: Option<String>,
    pub repeller_location: Option<String>,
    pub fixed_points_ok: bool,
    pub agreement: bool,
}

fn loxodromic_points(m: &MoebiusMap) -> Option<(SpherePoint, SpherePoint)> {
    match m.fixed_points() {
        Ok(FixedPoints::Loxodromic { attracting, repelling }) => Some((attracting, repelling)),
        _ => None,
    }
}

fn afp_location(cfg: &AfpConfig, p: &SpherePoint) -> String {
    for i in 1..=2u8 {
        if cfg.region(i).point_margin(p) > 0.0 {
            return format!("int-B{i}");
        }
    }
    "elsewhere".into()
}

fn hnn_location(cfg: &HnnConfig, p: &SpherePoint) -> String {
    for (i, label) in [(1i8, "int-B1"), (-1, "int-B-1")] {
        if cfg.cap(i).point_margin(p) > 0.0 {
            return label.into();
        }
    }
    "elsewhere".into()
}

pub fn classify_afp_element(cfg: &AfpConfig, w: &AfpNormalForm) -> Result<ElementVerdict, DiagnosticsError> {
    let g = &cfg.group;
    let (conj, core) = g.cyclic_reduce(w)?;
    let m = w.evaluate();
    let numeric = m.classify_detailed();
    let core_map = core.evaluate();
    let mut v = ElementVerdict {
        word: w.to_string(),
        conjugator: conj.to_string(),
        core: core.to_string(),
        combinatorial: CombinatorialClass::FactorConjugate,
        predicted: core_map.classify(),
        numeric: numeric.class,
        near_parabolic: numeric.near_parabolic,
        attracting: None,
        repelling: None,
        attractor_location: None,
        repeller_location: None,
        fixed_points_ok: true,
        agreement: false,
    };
    if let Some((a, r)) = loxodromic_points(&m) {
        v.attracting = Some(a.to_vec3());
        v.repelling = Some(r.to_vec3());
    }
    if core.len() >= 2 && core.len() % 2 == 0 {
        // An (i, 3-i)-core maps B_{3-i} into its interior and its inverse
        // does the same for B_i.
        let i = core.syllables[0].factor;
        v.combinatorial = CombinatorialClass::EvenCoreLoxodromic;
        v.predicted = MapClass::Loxodromic;
        v.fixed_points_ok = match loxodromic_points(&core_map) {
            Some((a, r)) => {
                let (la, lr) = (afp_location(cfg, &a), afp_location(cfg, &r));
                let ok = la == format!("int-B{}", 3 - i) && lr == format!("int-B{i}");
                v.attractor_location = Some(la);
                v.repeller_location = Some(lr);
                ok
            }
            None => false,
        };
    }
    v.agreement = v.predicted == v.numeric && v.fixed_points_ok;
    Ok(v)
}

/// Shortest cyclic conjugate, found by re-reducing letter rotations until
/// no rotation is shorter. Returns `(conjugator letters, core)` with
/// `w = c core c^-1`.
fn hnn_cyclic_reduce(g: &HnnGroup, w: &HnnNormalForm) -> Result<(Vec<Letter>, HnnNormalForm), WordError> {
    let mut conj: Vec<Letter> = Vec::new();
    let mut core = w.clone();
    loop {
        let letters = g.letters(&core);
        let size = |f: &HnnNormalForm| (f.len(), g.letters(f).len());
        let mut best: Option<(usize, HnnNormalForm)> = None;
        for k in 1..letters.len() {
            let rotated: Vec<Letter> = letters[k..].iter().chain(&letters[..k]).cloned().collect();
            let r = g.reduce(&rotated)?;
            if size(&r) < size(&core) && best.as_ref().is_none_or(|b| size(&r) < size(&b.1)) {
                best = Some((k, r));
            }
        }
        let Some((k, r)) = best else { break };
        // core = P S with P = letters[..k]; S P = P^-1 core P.
        conj.extend(letters[..k].iter().cloned());
        core = r;
    }
    Ok((conj, core))
}

fn letters_to_string(g: &HnnGroup, letters: &[Letter]) -> Result<String, WordError> {
    Ok(g.reduce(letters)?.to_string())
}

pub fn classify_hnn_element(cfg: &HnnConfig, w: &HnnNormalForm) -> Result<ElementVerdict, DiagnosticsError> {
    let g = &cfg.group;
    let (conj, mut core) = hnn_cyclic_reduce(g, w)?;
    let m = g.evaluate(w);
    let numeric = m.classify_detailed();
    let mut v = ElementVerdict {
        word: w.to_string(),
        conjugator: letters_to_string(g, &conj)?,
        core: core.to_string(),
        combinatorial: CombinatorialClass::FactorConjugate,
        predicted: g.evaluate(&core).classify(),
        numeric: numeric.class,
        near_parabolic: numeric.near_parabolic,
        attracting: None,
        repelling: None,
        attractor_location: None,
        repeller_location: None,
        fixed_points_ok: true,
        agreement: false,
    };
    if let Some((a, r)) = loxodromic_points(&m) {
        v.attracting = Some(a.to_vec3());
        v.repelling = Some(r.to_vec3());
    }
    if !core.is_empty() {
        // Rotate to start with f, replacing the core by its inverse when
        // every stable letter is negative.
        let has_positive = g.letters(&core).iter().any(|l| matches!(l, Letter::F(s) if *s > 0));
        if !has_positive {
            let inv: Vec<Letter> = g
                .letters(&core)
                .iter()
                .rev()
                .map(|l| match l {
                    Letter::F(s) => Letter::F(-s),
                    Letter::G(e) => Letter::G(e.inverse()),
                })
                .collect();
            core = g.reduce(&inv)?;
        }
        let letters = g.letters(&core);
        let k = letters.iter().position(|l| matches!(l, Letter::F(s) if *s > 0)).expect("positive letter");
        let rotated: Vec<Letter> = letters[k..].iter().chain(&letters[..k]).cloned().collect();
        let core = g.reduce(&rotated)?;
        v.core = core.to_string();
        v.combinatorial = CombinatorialClass::PositiveCoreLoxodromic;
        v.predicted = MapClass::Loxodromic;
        v.fixed_points_ok = g.has_type(&core, 1)?
            && match loxodromic_points(&g.evaluate(&core)) {
                Some((a, r)) => {
                    let la = hnn_location(cfg, &a);
                    let ok = la == "int-B1";
                    v.attractor_location = Some(la);
                    v.repeller_location = Some(hnn_location(cfg, &r));
                    ok
                }
                None => false,
            };
    }
    v.agreement = v.predicted == v.numeric && v.fixed_points_ok;
    Ok(v)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub attracting: [f64; 3],
    pub repelling: [f64; 3],
    /// Per map: max chordal distance from `z_+` of grid images, over grid
    /// points outside the `z_-` neighborhood.
    pub spread: Vec<f64>,
    /// Per map: fraction of grid points lying in the image of the `z_-`
    /// neighborhood.
    pub coverage: Vec<f64>,
    pub neighborhood_radius: f64,
}

fn normalize(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (n > 1e-12).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Concentration point of a cloud: repeatedly keep the closest half to the
/// current mean direction, ending with the closest quarter.
fn concentration(points: &[[f64; 3]]) -> [f64; 3] {
    let mean = |pts: &[[f64; 3]]| {
        let mut s = [0.0; 3];
        for p in pts {
            for i in 0..3 {
                s[i] += p[i];
            }
        }
        normalize(s).unwrap_or(pts[0])
    };
    let mut est = mean(points);
    let mut all = points.to_vec();
    for frac in [0.5, 0.5, 0.5, 0.25] {
        all.sort_by(|a, b| dist3(a, &est).total_cmp(&dist3(b, &est)));
        let n = ((points.len() as f64 * frac) as usize).max(1);
        est = mean(&all[..n]);
    }
    est
}

/// Estimates source and sink of a map sequence from grid images.
pub fn convergence_sequence_probe(maps: &[MoebiusMap], grid_n: usize) -> Result<ProbeReport, DiagnosticsError> {
    if maps.len() < MIN_PROBE_MAPS {
        return Err(DiagnosticsError::TooFewMaps(maps.len()));
    }
    for i in 0..maps.len() {
        for j in i + 1..maps.len() {
            if maps[i].projective_distance(&maps[j]) <= DISTINCT_TOL {
                return Err(DiagnosticsError::RepeatedMap(i, j));
            }
        }
    }
    let grid = equal_area_grid(grid_n);
    let last = maps.last().expect("nonempty");
    let images = |m: &MoebiusMap| grid.iter().map(|p| m.apply(p).to_vec3()).collect::<Vec<_>>();
    let z_plus = concentration(&images(last));
    let z_minus = concentration(&images(&last.invert()));
    let zp = SpherePoint::from_vec3(z_plus);
    let zm = SpherePoint::from_vec3(z_minus);
    let rows: Vec<(f64, f64)> = maps
        .par_iter()
        .map(|m| {
            let inv = m.invert();
            let mut spread: f64 = 0.0;
            let mut covered = 0usize;
            for p in &grid {
                if chordal_distance(p, &zm) > PROBE_NEIGHBORHOOD {
                    spread = spread.max(chordal_distance(&m.apply(p), &zp));
                }
                if chordal_distance(&inv.apply(p), &zm) <= PROBE_NEIGHBORHOOD {
                    covered += 1;
                }
            }
            (spread, covered as f64 / grid.len() as f64)
        })
        .collect();
    let spread: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let coverage: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let final_spread = *spread.last().expect("nonempty");
    if !(final_spread <= PROBE_SPREAD_TOL && final_spread < spread[0]) {
        return Err(DiagnosticsError::NoConvergenceDetected { final_spread });
    }
    Ok(ProbeReport {
        attracting: z_plus,
        repelling: z_minus,
        spread,
        coverage,
        neighborhood_radius: PROBE_NEIGHBORHOOD,
    })
}
