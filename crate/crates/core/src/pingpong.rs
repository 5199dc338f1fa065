//! Configuration loading and bounded-depth verification of the ping-pong
//! hypotheses for amalgamated products and HNN extensions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sphere::{
    cap_disjoint, cap_subset, chordal_distance, map_cap, region_subset_interior, Cap, CapSpec, FixedPoints, MapClass,
    MoebiusMap, Region, RegionSpec, SphereError, SpherePoint, DEFAULT_EPSILON,
};
use crate::words::{
    format_word, transversal, AfpGroup, AfpNormalForm, Element, Factor, Generators, HnnFilter, HnnGroup, HnnNormalForm,
    JKind, JOracle, Word, WordError, STABLE_LETTER,
};

pub const DEFAULT_DEPTH: usize = 6;
/// Chordal tolerance for approximate limit-set comparisons.
pub const DEFAULT_DELTA: f64 = 1e-3;
pub const DEFAULT_J_BOUND: u32 = 8;
/// Tolerance for cap equalities (angle plus radius deviation).
pub const CAP_EQ_TOL: f64 = 1e-9;
/// Minimum projective distance from the identity for the discreteness check.
pub const DISCRETENESS_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum PingPongError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Word(#[from] WordError),
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error("nesting violation at step {step} (margin {margin:e})")]
    NestingViolation { step: usize, margin: f64 },
    #[error("no compact set found; escaping translate {witness} (margin {margin:e})")]
    NoCompactFound { witness: String, margin: f64 },
}

fn cfg_err(msg: impl Into<String>) -> PingPongError {
    PingPongError::Config(msg.into())
}

// ---------------------------------------------------------------------------
// Config file

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Afp,
    Hnn,
}

/// Matrix entries `a, b, c, d` as `[re, im]` pairs; `null` marks an
/// unfilled slot.
pub type MatrixSpec = Option<[[f64; 2]; 4]>;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OracleSpec {
    Trivial,
    FiniteList { elements: Vec<Word> },
    WordList { elements: Vec<Word> },
    Cyclic { generator: Word, power_bound: u32 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mode: Mode,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    /// `{"G1": {...}, "G2": {...}}` or `{"G0": {...}}`.
    pub generators: BTreeMap<String, BTreeMap<String, MatrixSpec>>,
    #[serde(default)]
    pub f: MatrixSpec,
    #[serde(default)]
    pub j: Option<OracleSpec>,
    #[serde(default)]
    pub j1: Option<OracleSpec>,
    #[serde(default)]
    pub j_minus1: Option<OracleSpec>,
    #[serde(rename = "B1")]
    pub b1: RegionSpec,
    #[serde(rename = "B2", default)]
    pub b2: Option<RegionSpec>,
    #[serde(rename = "B_minus1", default)]
    pub b_minus1: Option<RegionSpec>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_j_bound")]
    pub j_bound: u32,
    /// Left coset representatives keyed by side: "1"/"2" or "1"/"-1".
    #[serde(default)]
    pub coset_reps: BTreeMap<String, Vec<Word>>,
    #[serde(default)]
    pub witness: Option<[f64; 2]>,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_depth() -> usize {
    DEFAULT_DEPTH
}
fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_j_bound() -> u32 {
    DEFAULT_J_BOUND
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self, PingPongError> {
        serde_json::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PingPongError> {
        let text = fs::read_to_string(path).map_err(|e| PingPongError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn build(&self) -> Result<GroupConfig, PingPongError> {
        match self.mode {
            Mode::Afp => Ok(GroupConfig::Afp(build_afp(self)?)),
            Mode::Hnn => Ok(GroupConfig::Hnn(build_hnn(self)?)),
        }
    }
}

pub fn load_config(path: &Path) -> Result<GroupConfig, PingPongError> {
    ConfigFile::load(path)?.build()
}

/// Settings shared by both modes.
#[derive(Clone, Debug)]
pub struct Common {
    pub name: String,
    pub epsilon: f64,
    pub depth: usize,
    pub delta: f64,
    pub j_bound: u32,
    pub witness: Option<SpherePoint>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct AfpConfig {
    pub common: Common,
    pub group: AfpGroup,
    /// `B_1`, `B_2`.
    pub b: [Region; 2],
}

#[derive(Clone, Debug)]
pub struct HnnConfig {
    pub common: Common,
    pub group: HnnGroup,
    pub b1: Cap,
    pub b_minus1: Cap,
}

#[derive(Clone, Debug)]
pub enum GroupConfig {
    Afp(AfpConfig),
    Hnn(HnnConfig),
}

impl GroupConfig {
    pub fn common(&self) -> &Common {
        match self {
            GroupConfig::Afp(c) => &c.common,
            GroupConfig::Hnn(c) => &c.common,
        }
    }
}

impl AfpConfig {
    pub fn region(&self, i: u8) -> &Region {
        &self.b[(i - 1) as usize]
    }
}

impl HnnConfig {
    pub fn cap(&self, i: i8) -> &Cap {
        if i > 0 {
            &self.b1
        } else {
            &self.b_minus1
        }
    }

    pub fn f(&self) -> &MoebiusMap {
        &self.group.f
    }
}

fn matrix(spec: &MatrixSpec, what: &str) -> Result<MoebiusMap, PingPongError> {
    let p = spec.ok_or_else(|| cfg_err(format!("matrix slot {what} is not filled in")))?;
    MoebiusMap::from_pairs(p).map_err(|e| cfg_err(format!("{what}: {e}")))
}

fn generators(file: &ConfigFile, key: &str) -> Result<Generators, PingPongError> {
    let map = file.generators.get(key).ok_or_else(|| cfg_err(format!("missing generators.{key}")))?;
    let mut g = Generators::new();
    for (name, spec) in map {
        if name == STABLE_LETTER {
            return Err(cfg_err(format!("generator name {STABLE_LETTER:?} is reserved")));
        }
        g.insert(name, matrix(spec, &format!("generators.{key}.{name}"))?);
    }
    Ok(g)
}

fn oracle(spec: Option<&OracleSpec>, gens: &Generators) -> Result<JOracle, PingPongError> {
    let Some(spec) = spec else { return Ok(JOracle::trivial()) };
    Ok(match spec {
        OracleSpec::Trivial => JOracle::trivial(),
        OracleSpec::FiniteList { elements } => {
            JOracle::list(JKind::FiniteList, elements.iter().map(|w| gens.element(w)).collect::<Result<_, _>>()?)
        }
        OracleSpec::WordList { elements } => {
            JOracle::list(JKind::WordList, elements.iter().map(|w| gens.element(w)).collect::<Result<_, _>>()?)
        }
        OracleSpec::Cyclic { generator, power_bound } => JOracle::cyclic(gens.element(generator)?, *power_bound),
    })
}

fn common(file: &ConfigFile) -> Result<Common, PingPongError> {
    if !(file.epsilon >= 0.0 && file.epsilon.is_finite()) {
        return Err(cfg_err("epsilon must be a nonnegative number"));
    }
    if !(file.delta > 0.0 && file.delta.is_finite()) {
        return Err(cfg_err("delta must be positive"));
    }
    Ok(Common {
        name: file.name.clone().unwrap_or_else(|| "unnamed".into()),
        epsilon: file.epsilon,
        depth: file.depth,
        delta: file.delta,
        j_bound: file.j_bound,
        witness: file.witness.map(|[re, im]| SpherePoint::from_re_im(re, im)),
        warnings: Vec::new(),
    })
}

/// Representatives from the config (identity prepended) or from the
/// catalogue; collisions among listed words become warnings.
fn reps_for(
    file: &ConfigFile,
    key: &str,
    factor: &Factor,
    j: &JOracle,
    warnings: &mut Vec<String>,
) -> Result<Vec<Element>, PingPongError> {
    match file.coset_reps.get(key) {
        Some(words) => {
            let listed: Vec<Element> = words
                .iter()
                .map(|w| factor.generators.element(w).map(|e| factor.canonical(e)))
                .collect::<Result<_, _>>()?;
            let listed: Vec<Element> = listed.into_iter().filter(|e| !e.is_identity()).collect();
            let (reps, collisions) = transversal(&listed, j)?;
            for (a, b) in collisions {
                let first = if a == usize::MAX { "1".to_string() } else { listed[a].to_string() };
                warnings.push(format!(
                    "CosetListIncomplete: coset_reps[{key}] entries {first} and {} share a coset",
                    listed[b]
                ));
            }
            Ok(reps)
        }
        None => Ok(transversal(&factor.catalogue, j)?.0),
    }
}

fn single_cap(spec: &RegionSpec, what: &str) -> Result<Cap, PingPongError> {
    let r = spec.to_region()?;
    if r.caps.len() != 1 {
        return Err(cfg_err(format!("{what} must be a single cap in hnn mode")));
    }
    Ok(r.caps[0])
}

fn build_afp(file: &ConfigFile) -> Result<AfpConfig, PingPongError> {
    let mut common = common(file)?;
    let g1 = generators(file, "G1")?;
    let g2 = generators(file, "G2")?;
    for n in g1.names() {
        if g2.get(n).is_some() {
            return Err(cfg_err(format!("generator {n:?} appears in both factors")));
        }
    }
    let j = oracle(file.j.as_ref(), &g1.merged(&g2))?;
    let f1 = Factor::new(g1, common.depth);
    let f2 = Factor::new(g2, common.depth);
    for jg in j.generators() {
        for (k, fac) in [(1, &f1), (2, &f2)] {
            if fac.closed && fac.lookup(&jg.map).is_none() {
                common.warnings.push(format!("J generator {jg} not found in finite factor G{k}"));
            }
        }
    }
    let r1 = reps_for(file, "1", &f1, &j, &mut common.warnings)?;
    let r2 = reps_for(file, "2", &f2, &j, &mut common.warnings)?;
    let b1 = file.b1.to_region()?;
    let b2 = file.b2.as_ref().ok_or_else(|| cfg_err("afp mode needs B2"))?.to_region()?;
    let m = b1.disjoint_margin(&b2);
    if m < -CAP_EQ_TOL {
        return Err(cfg_err(format!("interiors of B1 and B2 overlap (margin {m:e})")));
    }
    Ok(AfpConfig { common, group: AfpGroup { factors: [f1, f2], j, reps: [r1, r2] }, b: [b1, b2] })
}

fn build_hnn(file: &ConfigFile) -> Result<HnnConfig, PingPongError> {
    let mut common = common(file)?;
    let g0 = generators(file, "G0")?;
    let f = matrix(&file.f, "f")?;
    let j1 = oracle(file.j1.as_ref(), &g0)?;
    let jm1 = oracle(file.j_minus1.as_ref(), &g0)?;
    let factor = Factor::new(g0, common.depth);
    if factor.catalogue.is_empty() {
        return Err(cfg_err("G0 has no enumerated elements"));
    }
    let b1 = single_cap(&file.b1, "B1")?;
    let bm1 = single_cap(file.b_minus1.as_ref().ok_or_else(|| cfg_err("hnn mode needs B_minus1"))?, "B_minus1")?;
    let m = cap_disjoint(&b1, &bm1);
    if m <= 0.0 {
        return Err(cfg_err(format!("B1 and B_minus1 must be disjoint (margin {m:e})")));
    }
    let finv = f.invert();
    for g in jm1.generators() {
        if !j1.contains(&f.compose(&g.map).compose(&finv))? {
            return Err(cfg_err(format!("f ({g}) f^-1 is not in J1")));
        }
    }
    for g in j1.generators() {
        if !jm1.contains(&finv.compose(&g.map).compose(&f))? {
            return Err(cfg_err(format!("f^-1 ({g}) f is not in J_minus1")));
        }
    }
    let reps1 = reps_for(file, "1", &factor, &j1, &mut common.warnings)?;
    let reps_m1 = reps_for(file, "-1", &factor, &jm1, &mut common.warnings)?;
    Ok(HnnConfig { common, group: HnnGroup { g0: factor, f, j1, jm1, reps1, reps_m1 }, b1, b_minus1: bm1 })
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    CertifiedAllLengths,
    CertifiedToDepth,
    NotProved,
    Failed,
}

impl Verdict {
    fn rank(self) -> u8 {
        match self {
            Verdict::CertifiedAllLengths => 0,
            Verdict::CertifiedToDepth => 1,
            Verdict::NotProved => 2,
            Verdict::Failed => 3,
        }
    }

    pub fn worst(self, other: Verdict) -> Verdict {
        if other.rank() > self.rank() {
            other
        } else {
            self
        }
    }

    pub fn is_certified(self) -> bool {
        matches!(self, Verdict::CertifiedAllLengths | Verdict::CertifiedToDepth)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub id: String,
    pub description: String,
    pub verdict: Verdict,
    /// Worst containment or disjointness margin (radians).
    pub margin: Option<f64>,
    /// Deviation for equality checks.
    pub deviation: Option<f64>,
    pub witness: Option<String>,
    pub witness_word: Option<Word>,
    pub witness_point: Option<[f64; 2]>,
    pub checked: usize,
    pub empirical: bool,
    pub note: Option<String>,
}

impl ConditionReport {
    fn new(id: &str, description: &str) -> Self {
        ConditionReport {
            id: id.into(),
            description: description.into(),
            verdict: Verdict::CertifiedToDepth,
            margin: None,
            deviation: None,
            witness: None,
            witness_word: None,
            witness_point: None,
            checked: 0,
            empirical: false,
            note: None,
        }
    }

    fn margin(&mut self, m: f64) {
        if m.is_finite() {
            self.margin = Some(self.margin.map_or(m, |x| x.min(m)));
        }
    }

    fn deviation(&mut self, d: f64) {
        self.deviation = Some(self.deviation.map_or(d, |x| x.max(d)));
    }

    /// Records the first failure only, so the witness is the earliest in
    /// enumeration order.
    fn fail(&mut self, verdict: Verdict, word: &[(String, i32)]) {
        if self.verdict.rank() < verdict.rank() {
            if self.witness.is_none() || verdict == Verdict::Failed && self.verdict != Verdict::Failed {
                self.witness = Some(format_word(word));
                self.witness_word = Some(word.to_vec());
            }
            self.verdict = verdict;
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub name: String,
    pub mode: Mode,
    pub depth: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub verdict: Verdict,
    pub min_margin: Option<f64>,
    pub conditions: Vec<ConditionReport>,
    pub derived: Vec<ConditionReport>,
    pub warnings: Vec<String>,
}

impl Report {
    fn finish(common: &Common, mode: Mode, conditions: Vec<ConditionReport>, derived: Vec<ConditionReport>) -> Report {
        let verdict =
            conditions.iter().chain(derived.iter()).fold(Verdict::CertifiedAllLengths, |v, c| v.worst(c.verdict));
        let min_margin = conditions
            .iter()
            .filter_map(|c| c.margin)
            .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.min(m))));
        Report {
            name: common.name.clone(),
            mode,
            depth: common.depth,
            epsilon: common.epsilon,
            delta: common.delta,
            verdict,
            min_margin,
            conditions,
            derived,
            warnings: common.warnings.clone(),
        }
    }

    /// 0 certified, 2 failed, 3 not proved.
    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Verdict::Failed => 2,
            Verdict::NotProved => 3,
            _ => 0,
        }
    }

    pub fn condition(&self, id: &str) -> Option<&ConditionReport> {
        self.conditions.iter().chain(self.derived.iter()).find(|c| c.id == id)
    }
}

fn point_pair(p: &SpherePoint) -> Option<[f64; 2]> {
    p.to_complex().map(|z| [z.re, z.im])
}

// ---------------------------------------------------------------------------
// Approximate limit sets

/// Fixed points of non-elliptic elements, plus their orbits under the
/// listed elements when the group is infinite. Each point carries the word
/// of the element that produced it.
pub fn approx_limit_points(elements: &[Element], closed: bool) -> Vec<(SpherePoint, Word)> {
    let mut pts = Vec::new();
    for e in elements {
        if e.is_identity() {
            continue;
        }
        match e.map.fixed_points() {
            Ok(FixedPoints::Loxodromic { attracting, repelling }) => {
                pts.push((attracting, e.word.clone()));
                pts.push((repelling, e.word.clone()));
            }
            Ok(FixedPoints::Parabolic(p)) => pts.push((p, e.word.clone())),
            _ => {}
        }
    }
    if !closed {
        if let Some((seed, _)) = pts.first().cloned() {
            for e in elements {
                pts.push((e.map.apply(&seed), e.word.clone()));
            }
        }
    }
    pts
}

fn near_any(p: &SpherePoint, set: &[(SpherePoint, Word)], delta: f64) -> bool {
    set.iter().any(|(q, _)| chordal_distance(p, q) <= delta)
}

// ---------------------------------------------------------------------------
// Definition A

pub fn verify_afp(cfg: &AfpConfig) -> Result<Report, PingPongError> {
    let g = &cfg.group;
    let c = &cfg.common;
    let eps = c.epsilon;
    let mut conds = Vec::new();

    // (1) J-invariance of B_i.
    let mut c1 = ConditionReport::new("1", "B_i is J-invariant");
    let jgens = g.j.generators();
    if jgens.is_empty() {
        c1.verdict = Verdict::CertifiedAllLengths;
        c1.note = Some("J is trivial".into());
    } else {
        c1.verdict = Verdict::CertifiedAllLengths;
        for jg in &jgens {
            for i in 1..=2u8 {
                let dev = cfg.region(i).map(&jg.map).cap_set_deviation(cfg.region(i));
                c1.deviation(dev);
                c1.checked += 1;
                if dev > CAP_EQ_TOL {
                    c1.fail(Verdict::Failed, &jg.word);
                }
            }
        }
    }
    conds.push(c1);

    // (2) g B_i inside Int(B_{3-i}) with margin epsilon.
    let mut c2 = ConditionReport::new("2", "g B_i lies in Int(B_{3-i}) for g in G_i \\ J");
    let mut all_lengths = true;
    for i in 1..=2u8 {
        let fac = g.factor(i);
        let target = cfg.region(3 - i);
        let results: Vec<(Element, Result<f64, f64>, bool)> = fac
            .catalogue
            .par_iter()
            .map(|e| {
                let in_j = g.j.contains(&e.map).unwrap_or(false);
                let r = region_subset_interior(&cfg.region(i).map(&e.map), target).map_err(|n| n.best);
                (e.clone(), r, in_j)
            })
            .collect();
        for (e, r, in_j) in results {
            if in_j {
                continue;
            }
            c2.checked += 1;
            match r {
                Ok(m) => {
                    c2.margin(m);
                    if m < eps {
                        c2.fail(Verdict::Failed, &e.word);
                    }
                }
                Err(best) => {
                    c2.margin(best);
                    c2.fail(Verdict::NotProved, &e.word);
                }
            }
        }
        let upgrade = fac.closed || cyclic_nesting(cfg, i).is_some_and(|m| m >= eps);
        all_lengths &= upgrade;
    }
    if c2.verdict == Verdict::CertifiedToDepth && all_lengths {
        c2.verdict = Verdict::CertifiedAllLengths;
        c2.note = Some("every factor is finite or nests by isometric circles".into());
    }
    conds.push(c2);

    // (3) empirical limit-set condition.
    let mut c3 = ConditionReport::new("3", "Lambda(G_i) \\ Lambda(J) lies in Int(B_{3-i})");
    c3.empirical = true;
    let lj = approx_limit_points(&g.j.elements_up_to(c.j_bound), false);
    let mut points_seen = 0;
    for i in 1..=2u8 {
        let fac = g.factor(i);
        let pts = approx_limit_points(&fac.catalogue, fac.closed);
        for (p, w) in &pts {
            points_seen += 1;
            if near_any(p, &lj, c.delta) {
                continue;
            }
            c3.checked += 1;
            let m = cfg.region(3 - i).point_margin(p);
            c3.margin(m);
            if m <= 0.0 {
                c3.fail(Verdict::Failed, w);
            }
        }
    }
    if points_seen == 0 {
        c3.note = Some("no non-elliptic factor elements enumerated".into());
    }
    conds.push(c3);

    let mut derived = Vec::new();
    let mut d1 = ConditionReport::new("lambda-j-on-boundaries", "approximate Lambda(J) lies near both boundaries");
    d1.empirical = true;
    for (p, w) in &lj {
        d1.checked += 1;
        for i in 1..=2u8 {
            let dist = cfg.region(i).caps.iter().map(|cap| cap.boundary_distance(p)).fold(f64::INFINITY, f64::min);
            if dist > c.delta {
                d1.fail(Verdict::Failed, w);
            }
        }
    }
    derived.push(d1);

    let mut d2 = ConditionReport::new("lambda-factor-in-b", "approximate Lambda(G_i) lies in B_{3-i}");
    d2.empirical = true;
    for i in 1..=2u8 {
        let fac = g.factor(i);
        for (p, w) in approx_limit_points(&fac.catalogue, fac.closed) {
            d2.checked += 1;
            let m = cfg.region(3 - i).point_margin(&p);
            d2.margin(m);
            if m < -c.delta {
                d2.fail(Verdict::Failed, &w);
            }
        }
    }
    derived.push(d2);
    derived.push(discreteness_condition(&GroupConfigRef::Afp(cfg), c.depth));
    Ok(Report::finish(c, Mode::Afp, conds, derived))
}

/// Isometric-circle nesting for a cyclic loxodromic factor with trivial J:
/// returns the margin of the isometric circles inside `Int(B_{3-i})` when
/// `B_i` avoids both, so every power of the generator nests.
pub fn cyclic_nesting(cfg: &AfpConfig, i: u8) -> Option<f64> {
    let g = &cfg.group;
    let fac = g.factor(i);
    if fac.generators.len() != 1 || !g.j.is_trivial() {
        return None;
    }
    let name = fac.generators.names().next()?;
    let m = fac.generators.get(name)?;
    if m.classify() != MapClass::Loxodromic || m.c.norm() < 1e-12 {
        return None;
    }
    let r = 1.0 / m.c.norm();
    let c_minus = Cap::from_circle(-m.d / m.c, r, true).ok()?;
    let c_plus = Cap::from_circle(m.a / m.c, r, true).ok()?;
    if cap_disjoint(&c_minus, &c_plus) < 0.0 {
        return None;
    }
    for cap in &cfg.region(i).caps {
        if cap_disjoint(cap, &c_minus.interior()) < 0.0 || cap_disjoint(cap, &c_plus.interior()) < 0.0 {
            return None;
        }
    }
    let circles = Region { caps: vec![c_minus, c_plus] };
    region_subset_interior(&circles, cfg.region(3 - i)).ok()
}

// ---------------------------------------------------------------------------
// Definition B

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    /// Extra random witness candidates for the A_0 check.
    pub seed: Option<u64>,
}

pub fn verify_hnn(cfg: &HnnConfig, opts: &VerifyOptions) -> Result<Report, PingPongError> {
    let g = &cfg.group;
    let c = &cfg.common;
    let eps = c.epsilon;
    let mut conds = Vec::new();

    // (1) precise invariance of (B_1, B_-1) under (J_1, J_-1).
    let mut c1 = ConditionReport::new("1", "(B_1, B_-1) is precisely invariant under (J_1, J_-1)");
    for i in [1i8, -1] {
        for jg in g.j(i).generators() {
            let dev = map_cap(&jg.map, cfg.cap(i)).deviation(cfg.cap(i));
            c1.deviation(dev);
            c1.checked += 1;
            if dev > CAP_EQ_TOL {
                c1.fail(Verdict::Failed, &jg.word);
            }
        }
    }
    let elems = g.g0.elements_with_identity();
    let rows: Vec<(Element, [Option<f64>; 3])> = elems
        .par_iter()
        .map(|e| {
            let img1 = map_cap(&e.map, &cfg.b1);
            let imgm = map_cap(&e.map, &cfg.b_minus1);
            let out1 = (!g.j1.contains(&e.map).unwrap_or(true)).then(|| cap_disjoint(&img1, &cfg.b1));
            let outm = (!g.jm1.contains(&e.map).unwrap_or(true)).then(|| cap_disjoint(&imgm, &cfg.b_minus1));
            (e.clone(), [out1, outm, Some(cap_disjoint(&img1, &cfg.b_minus1))])
        })
        .collect();
    for (e, ms) in rows {
        for m in ms.into_iter().flatten() {
            c1.checked += 1;
            c1.margin(m);
            if m < eps {
                c1.fail(Verdict::Failed, &e.word);
            }
        }
    }
    if c1.verdict == Verdict::CertifiedToDepth && g.g0.closed {
        c1.verdict = Verdict::CertifiedAllLengths;
        c1.note = Some("G0 is finite and fully enumerated".into());
    }
    conds.push(c1);

    // (2) f(A u B_1) = Int(B_1), with A u B_1 = M \ B_-1.
    let mut c2 = ConditionReport::new("2", "f(A u B_1) = Int(B_1)");
    let image = map_cap(&g.f, &cfg.b_minus1.complement());
    let dev = image.deviation(&cfg.b1.interior());
    c2.deviation(dev);
    c2.checked = 1;
    let f_word = vec![(STABLE_LETTER.to_string(), 1)];
    if dev > CAP_EQ_TOL || image.closed {
        c2.fail(Verdict::Failed, &f_word);
        c2.note = Some(format!("image cap has radius {:.12} vs {:.12}", image.radius, cfg.b1.radius));
    } else {
        c2.verdict = Verdict::CertifiedAllLengths;
    }
    conds.push(c2);

    // (3) empirical: Lambda(G_0) meets B_i only in Lambda(J_i).
    let mut c3 = ConditionReport::new("3", "Lambda(G_0) meets B_i exactly in Lambda(J_i)");
    c3.empirical = true;
    let l0 = approx_limit_points(&g.g0.catalogue, g.g0.closed);
    let lj: Vec<Vec<(SpherePoint, Word)>> =
        [1i8, -1].iter().map(|&i| approx_limit_points(&g.j(i).elements_up_to(c.j_bound), false)).collect();
    for (p, w) in &l0 {
        for (k, i) in [1i8, -1].iter().enumerate() {
            if near_any(p, &lj[k], c.delta) {
                continue;
            }
            c3.checked += 1;
            let m = -cfg.cap(*i).point_margin(p);
            c3.margin(m);
            if m <= 0.0 {
                c3.fail(Verdict::Failed, w);
            }
        }
    }
    if l0.is_empty() {
        c3.note = Some("no non-elliptic G0 elements enumerated".into());
    }
    conds.push(c3);

    // (4) A_0 = M \ G_0(B_1 u B_-1) is nonempty.
    conds.push(a0_condition(cfg, &elems, opts));

    let mut derived = Vec::new();
    let mut d1 = ConditionReport::new("f-loxodromic", "f is loxodromic, attractor in Int(B_1), repeller in Int(B_-1)");
    d1.checked = 1;
    match g.f.fixed_points() {
        Ok(FixedPoints::Loxodromic { attracting, repelling }) if g.f.classify() == MapClass::Loxodromic => {
            let m = cfg.b1.point_margin(&attracting).min(cfg.b_minus1.point_margin(&repelling));
            d1.margin(m);
            if m <= 0.0 {
                d1.fail(Verdict::Failed, &f_word);
            }
        }
        _ => {
            d1.fail(Verdict::Failed, &f_word);
            d1.note = Some(format!("f classifies as {}", g.f.classify()));
        }
    }
    derived.push(d1);

    let mut d2 = ConditionReport::new("lambda-j-on-boundary", "approximate Lambda(J_i) lies near the boundary of B_i");
    d2.empirical = true;
    for (k, i) in [1i8, -1].iter().enumerate() {
        for (p, w) in &lj[k] {
            d2.checked += 1;
            if cfg.cap(*i).boundary_distance(p) > c.delta {
                d2.fail(Verdict::Failed, w);
            }
        }
    }
    derived.push(d2);
    derived.push(discreteness_condition(&GroupConfigRef::Hnn(cfg), c.depth));
    Ok(Report::finish(c, Mode::Hnn, conds, derived))
}

/// Margin by which a point avoids every translate `g B_{+-1}`.
pub fn a0_margin(cfg: &HnnConfig, elems: &[Element], p: &SpherePoint) -> f64 {
    let mut m = f64::INFINITY;
    for e in elems {
        for cap in [&cfg.b1, &cfg.b_minus1] {
            m = m.min(-map_cap(&e.map, cap).point_margin(p));
        }
    }
    m
}

/// Equal-area grid: uniform heights, uniform longitudes.
pub fn equal_area_grid(n: usize) -> Vec<SpherePoint> {
    let mut pts = Vec::with_capacity(n * n);
    for i in 0..n {
        let z = -1.0 + (2.0 * i as f64 + 1.0) / n as f64;
        let r = (1.0 - z * z).max(0.0).sqrt();
        for j in 0..n {
            let phi = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
            pts.push(SpherePoint::from_vec3([r * phi.cos(), r * phi.sin(), z]));
        }
    }
    pts
}

fn a0_condition(cfg: &HnnConfig, elems: &[Element], opts: &VerifyOptions) -> ConditionReport {
    let mut c4 = ConditionReport::new("4", "A_0 = M \\ G_0(B_1 u B_-1) is nonempty");
    if let Some(w) = cfg.common.witness {
        let m = a0_margin(cfg, elems, &w);
        c4.checked = 1;
        if m > 0.0 {
            c4.margin(m);
            c4.witness_point = point_pair(&w);
            c4.note = Some("configured witness point".into());
            return c4;
        }
    }
    let mut candidates = equal_area_grid(64);
    if let Some(seed) = opts.seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..256 {
            let z: f64 = rng.random_range(-1.0..1.0);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r = (1.0 - z * z).sqrt();
            candidates.push(SpherePoint::from_vec3([r * phi.cos(), r * phi.sin(), z]));
        }
    }
    let margins: Vec<f64> = candidates.par_iter().map(|p| a0_margin(cfg, elems, p)).collect();
    c4.checked += candidates.len();
    let (best_idx, best) =
        margins.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
    if best > 0.0 {
        c4.margin(best);
        c4.witness_point = point_pair(&candidates[best_idx]);
        c4.note = Some("witness found by grid sampling".into());
    } else {
        c4.verdict = Verdict::NotProved;
        c4.note = Some("no sampled point avoids every translate".into());
    }
    c4
}

/// Borrowed view of either config kind.
#[derive(Clone, Copy)]
pub enum GroupConfigRef<'a> {
    Afp(&'a AfpConfig),
    Hnn(&'a HnnConfig),
}

/// Smallest distance from the identity over enumerated nontrivial forms.
pub fn discreteness_eta(cfg: &GroupConfigRef, max_length: usize) -> (f64, Option<Word>, usize) {
    let maps: Vec<(MoebiusMap, Word)> = match cfg {
        GroupConfigRef::Afp(a) => a
            .group
            .enumerate(max_length)
            .into_iter()
            .filter(|f| !f.is_empty())
            .map(|f| (f.evaluate(), f.word()))
            .collect(),
        GroupConfigRef::Hnn(h) => h
            .group
            .enumerate(max_length, HnnFilter::All)
            .into_iter()
            .filter(|f| !f.is_identity())
            .map(|f| (h.group.evaluate(&f), f.word()))
            .collect(),
    };
    let dists: Vec<f64> = maps.par_iter().map(|(m, _)| m.distance_to_identity()).collect();
    let mut best = (f64::INFINITY, None);
    for (d, (_, w)) in dists.iter().zip(maps.iter()) {
        if *d < best.0 {
            best = (*d, Some(w.clone()));
        }
    }
    (best.0, best.1, maps.len())
}

fn discreteness_condition(cfg: &GroupConfigRef, depth: usize) -> ConditionReport {
    let mut d = ConditionReport::new("discreteness", "enumerated nontrivial forms stay away from the identity");
    let (eta, w, n) = discreteness_eta(cfg, depth);
    d.checked = n;
    d.margin(eta);
    if eta < DISCRETENESS_FLOOR {
        if let Some(w) = w {
            d.fail(Verdict::Failed, &w);
        }
    }
    d
}

pub fn verify(cfg: &GroupConfig, opts: &VerifyOptions) -> Result<Report, PingPongError> {
    match cfg {
        GroupConfig::Afp(a) => verify_afp(a),
        GroupConfig::Hnn(h) => verify_hnn(h, opts),
    }
}

// ---------------------------------------------------------------------------
// Interactive pairs and triples

const OPEN_TOL: f64 = 1e-9;

/// Open-set version of Definition A for `(U_1, U_2)`.
pub fn check_interactive_pair(cfg: &AfpConfig, u1: &Region, u2: &Region) -> Result<Report, PingPongError> {
    let g = &cfg.group;
    let u = [u1, u2];
    let m = u1.disjoint_margin(u2);
    if m < -OPEN_TOL {
        return Err(cfg_err(format!("U_1 and U_2 must be disjoint (margin {m:e})")));
    }
    let mut inv = ConditionReport::new("j-invariant", "U_i is J-invariant");
    for jg in g.j.generators() {
        for ui in u {
            let dev = ui.map(&jg.map).cap_set_deviation(ui);
            inv.deviation(dev);
            inv.checked += 1;
            if dev > CAP_EQ_TOL {
                inv.fail(Verdict::Failed, &jg.word);
            }
        }
    }
    let mut pp = ConditionReport::new("pingpong", "g U_i lies in U_{3-i} for g in G_i \\ J");
    let mut proper = ConditionReport::new("proper", "g U_i is a proper subset of U_{3-i} for one i");
    let mut proper_side = None;
    for i in 1..=2u8 {
        let mut all_proper = true;
        for e in &g.factor(i).catalogue {
            if g.j.contains(&e.map)? {
                continue;
            }
            pp.checked += 1;
            let img = u[(i - 1) as usize].map(&e.map);
            let target = u[(2 - i) as usize];
            match region_subset_interior(&img, target) {
                Ok(m) => {
                    pp.margin(m);
                    if m < -OPEN_TOL {
                        pp.fail(Verdict::Failed, &e.word);
                    }
                    if img.cap_set_deviation(target) <= CAP_EQ_TOL {
                        all_proper = false;
                    }
                }
                Err(n) => {
                    pp.margin(n.best);
                    pp.fail(Verdict::NotProved, &e.word);
                    all_proper = false;
                }
            }
        }
        if all_proper && proper_side.is_none() {
            proper_side = Some(i);
        }
    }
    proper.checked = pp.checked;
    match proper_side {
        Some(i) => proper.note = Some(format!("every inclusion from side {i} is proper")),
        None => {
            proper.verdict = Verdict::NotProved;
            proper.note = Some("some inclusion is an equality on both sides".into());
        }
    }
    Ok(Report::finish(&cfg.common, Mode::Afp, vec![inv, pp, proper], Vec::new()))
}

/// Open-set version of Definition B for `(A, U_1, U_-1)`, where `A` is the
/// complement of `removed = R_1 u R_-1` with `U_i` inside `R_i`.
pub fn check_interactive_triple(
    cfg: &HnnConfig,
    removed: [&Cap; 2],
    u1: &Cap,
    um1: &Cap,
) -> Result<Report, PingPongError> {
    let g = &cfg.group;
    let u = |i: i8| if i > 0 { u1 } else { um1 };
    let r = |i: i8| if i > 0 { removed[0] } else { removed[1] };
    if cap_disjoint(u1, um1) < -OPEN_TOL {
        return Err(cfg_err("U_1 and U_-1 must be disjoint"));
    }
    for i in [1i8, -1] {
        if cap_subset(u(i), r(i)) < -OPEN_TOL {
            return Err(cfg_err(format!("U_{i} is not inside the removed set R_{i}")));
        }
    }
    let elems = g.g0.elements_with_identity();
    let mut pi = ConditionReport::new("precise", "(U_1, U_-1) precisely invariant; g U_i inside A u U_i");
    for e in &elems {
        for i in [1i8, -1] {
            let img = map_cap(&e.map, u(i));
            if g.j(i).contains(&e.map)? {
                let dev = img.deviation(u(i));
                pi.deviation(dev);
                if dev > CAP_EQ_TOL {
                    pi.fail(Verdict::Failed, &e.word);
                }
            } else {
                let m = cap_disjoint(&img, r(i));
                pi.margin(m);
                if m < -OPEN_TOL {
                    pi.fail(Verdict::Failed, &e.word);
                }
            }
            let m = cap_disjoint(&img, r(-i));
            pi.margin(m);
            pi.checked += 1;
            if m < -OPEN_TOL {
                pi.fail(Verdict::Failed, &e.word);
            }
        }
    }
    let mut fc = ConditionReport::new("f", "f(A u U_1) in U_1 and f^-1(A u U_-1) in U_-1");
    for (i, m) in [(1i8, g.f), (-1, g.f.invert())] {
        let img = map_cap(&m, &r(-i).complement());
        let margin = cap_subset(&img, u(i));
        fc.checked += 1;
        fc.margin(margin);
        if margin < -OPEN_TOL {
            fc.fail(Verdict::Failed, &[(STABLE_LETTER.to_string(), i as i32)]);
        }
    }
    let mut proper = ConditionReport::new("proper", "A \\ G_0(U_1 u U_-1) is nonempty");
    let Some(w) = cfg.common.witness else {
        proper.verdict = Verdict::NotProved;
        proper.note = Some("no witness point configured".into());
        return Ok(Report::finish(&cfg.common, Mode::Hnn, vec![pi, fc, proper], Vec::new()));
    };
    proper.checked = 1;
    let mut m = -removed[0].point_margin(&w).max(removed[1].point_margin(&w));
    for e in &elems {
        for i in [1i8, -1] {
            m = m.min(-map_cap(&e.map, u(i)).point_margin(&w));
        }
    }
    proper.margin(m);
    proper.witness_point = point_pair(&w);
    if m < 0.0 {
        proper.verdict = Verdict::Failed;
    }
    Ok(Report::finish(&cfg.common, Mode::Hnn, vec![pi, fc, proper], Vec::new()))
}

// ---------------------------------------------------------------------------
// Nesting tracks

/// Where a tracked set is predicted to sit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Start,
    /// `Int(B_i)`: `1`/`2` for amalgams, `1`/`-1` for extensions.
    B(i8),
    /// `A = M \ (B_1 u B_-1)`.
    A,
}

impl Location {
    pub fn label(&self) -> String {
        match self {
            Location::Start => "start".into(),
            Location::B(i) => format!("Int(B{i})"),
            Location::A => "A".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrackStep {
    pub step: usize,
    pub letter: String,
    pub location: String,
    pub margin: f64,
    pub caps: Vec<CapSpec>,
}

#[derive(Clone, Debug)]
pub struct Track {
    pub steps: Vec<TrackStep>,
    pub final_region: Region,
    pub final_location: Location,
    /// Target predicted by the form's labels.
    pub predicted: Location,
}

#[derive(Clone, Debug)]
pub enum Form {
    Afp(AfpNormalForm),
    Hnn(HnnNormalForm),
}

fn step(steps: &mut Vec<TrackStep>, letter: String, loc: Location, margin: f64, region: &Region) {
    steps.push(TrackStep {
        step: steps.len() + 1,
        letter,
        location: loc.label(),
        margin,
        caps: region.caps.iter().map(CapSpec::from).collect(),
    });
}

/// Applies `w` to `start` one syllable (or stable letter) at a time and
/// checks each predicted containment.
pub fn apply_form_track(cfg: &GroupConfig, w: &Form, start: &Region) -> Result<Track, PingPongError> {
    match (cfg, w) {
        (GroupConfig::Afp(a), Form::Afp(f)) => track_afp(a, f, start),
        (GroupConfig::Hnn(h), Form::Hnn(f)) => track_hnn(h, f, start),
        _ => Err(cfg_err("form kind does not match the config mode")),
    }
}

pub fn track_afp(cfg: &AfpConfig, w: &AfpNormalForm, start: &Region) -> Result<Track, PingPongError> {
    let mut region = start.clone();
    let mut steps = Vec::new();
    let Some((i, j)) = w.form_type() else {
        if let Some(jj) = &w.j {
            region = region.map(&jj.map);
        }
        return Ok(Track { steps, final_region: region, final_location: Location::Start, predicted: Location::Start });
    };
    if let Ok(m) = region_subset_interior(start, cfg.region(j)) {
        if m < -CAP_EQ_TOL {
            return Err(cfg_err(format!("start region is not inside B{j}")));
        }
    }
    let mut loc = Location::Start;
    for s in w.syllables.iter().rev() {
        region = region.map(&s.elem.map);
        let target = 3 - s.factor;
        let margin = match region_subset_interior(&region, cfg.region(target)) {
            Ok(m) => m,
            Err(n) => n.best,
        };
        if margin <= 0.0 {
            return Err(PingPongError::NestingViolation { step: steps.len() + 1, margin });
        }
        loc = Location::B(target as i8);
        step(&mut steps, s.elem.to_string(), loc, margin, &region);
    }
    Ok(Track { steps, final_region: region, final_location: loc, predicted: Location::B((3 - i) as i8) })
}

pub fn track_hnn(cfg: &HnnConfig, w: &HnnNormalForm, start: &Region) -> Result<Track, PingPongError> {
    let g = &cfg.group;
    let mut region = start.clone();
    let mut steps = Vec::new();
    if w.is_identity() {
        return Ok(Track { steps, final_region: region, final_location: Location::Start, predicted: Location::Start });
    }
    let k = [1i8, -1]
        .into_iter()
        .find(|&i| region_subset_interior(start, &Region::single(*cfg.cap(i))).is_ok_and(|m| m >= -CAP_EQ_TOL))
        .ok_or_else(|| cfg_err("start region lies in neither B1 nor B_minus1"))?;
    if !g.has_type(w, k)? {
        return Err(WordError::WrongShape(format!("{w} is not of type {k}")).into());
    }
    let mut loc = Location::B(k);
    let finv = g.f.invert();
    for s in w.syllables.iter().rev() {
        if !s.g.is_identity() {
            let Location::B(b) = loc else {
                return Err(PingPongError::NestingViolation { step: steps.len() + 1, margin: f64::NAN });
            };
            region = region.map(&s.g.map);
            if g.j(b).contains(&s.g.map)? {
                let dev = region.cap_set_deviation(&Region::single(*cfg.cap(b)));
                let margin = region_subset_interior(&region, &Region::single(*cfg.cap(b))).unwrap_or(f64::NAN);
                if !(margin >= -CAP_EQ_TOL) && dev > CAP_EQ_TOL {
                    return Err(PingPongError::NestingViolation { step: steps.len() + 1, margin });
                }
                step(&mut steps, s.g.to_string(), loc, margin, &region);
            } else {
                let margin = region
                    .disjoint_margin(&Region::single(cfg.b1))
                    .min(region.disjoint_margin(&Region::single(cfg.b_minus1)));
                if margin <= 0.0 {
                    return Err(PingPongError::NestingViolation { step: steps.len() + 1, margin });
                }
                loc = Location::A;
                step(&mut steps, s.g.to_string(), loc, margin, &region);
            }
        }
        let sign = s.alpha.signum() as i8;
        for _ in 0..s.alpha.unsigned_abs() {
            if loc == Location::B(-sign) {
                return Err(PingPongError::NestingViolation { step: steps.len() + 1, margin: f64::NAN });
            }
            region = region.map(if sign > 0 { &g.f } else { &finv });
            let margin = region_subset_interior(&region, &Region::single(*cfg.cap(sign))).unwrap_or(f64::NAN);
            if !(margin > 0.0) {
                return Err(PingPongError::NestingViolation { step: steps.len() + 1, margin });
            }
            loc = Location::B(sign);
            let letter = if sign > 0 { "f".to_string() } else { "f^-1".to_string() };
            step(&mut steps, letter, loc, margin, &region);
        }
    }
    let predicted = match w.form_type() {
        Some((0, _)) | None => Location::A,
        Some((i, _)) => Location::B(i),
    };
    Ok(Track { steps, final_region: region, final_location: loc, predicted })
}

// ---------------------------------------------------------------------------
// Compact nesting sets

#[derive(Clone, Debug, Serialize)]
pub struct NestingEntry {
    pub g: String,
    pub j: String,
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct NestingCompact {
    /// `None` when there is nothing to cover.
    pub k: Option<Cap>,
    pub table: Vec<NestingEntry>,
    /// Margin of `K` inside the target.
    pub margin: Option<f64>,
}

/// Smallest cap around `caps` centred at `center`.
fn enclosing_cap(center: [f64; 3], caps: &[Cap]) -> Option<Cap> {
    let mut r: f64 = 0.0;
    for c in caps {
        r = r.max(crate::sphere::angle_between(center, c.center) + c.radius);
    }
    Cap::new(center, r.min(std::f64::consts::PI - 1e-12), true).ok()
}

fn centroid(caps: &[Cap]) -> Option<[f64; 3]> {
    let mut s = [0.0; 3];
    for c in caps {
        for (acc, x) in s.iter_mut().zip(c.center) {
            *acc += x;
        }
    }
    let n = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
    (n > 1e-12).then(|| [s[0] / n, s[1] / n, s[2] / n])
}

/// An off-edge element `g` with the translates of `B` by `j g`, one entry
/// per edge element `j`.
type Candidate = (Element, Vec<(Element, Vec<Cap>)>);
type MarginFn<'a> = Box<dyn Fn(&Cap) -> f64 + Sync + 'a>;

/// For each enumerated `g` off the edge group on side `i`, picks `j` in the
/// edge group (up to `j_bound`) pushing `j g B_i` deepest into the target,
/// then caps the union of the chosen translates.
pub fn search_nesting_compact(cfg: &GroupConfig, side: i8, j_bound: u32) -> Result<NestingCompact, PingPongError> {
    let (margin_fn, translates, anchor): (MarginFn<'_>, Vec<Candidate>, [f64; 3]) = match cfg {
        GroupConfig::Afp(a) => {
            if side != 1 && side != 2 {
                return Err(cfg_err("afp side must be 1 or 2"));
            }
            let i = side as u8;
            let target = a.region(3 - i).clone();
            let anchor = target.caps[0].center;
            let js = a.group.j.elements_up_to(j_bound);
            let mut rows = Vec::new();
            for e in &a.group.factor(i).catalogue {
                if a.group.j.contains(&e.map)? {
                    continue;
                }
                let opts = js.iter().map(|j| (j.clone(), a.region(i).map(&j.map.compose(&e.map)).caps)).collect();
                rows.push((e.clone(), opts));
            }
            let f = move |k: &Cap| region_subset_interior(&Region::single(*k), &target).unwrap_or_else(|n| n.best);
            (Box::new(f), rows, anchor)
        }
        GroupConfig::Hnn(h) => {
            if side != 1 && side != -1 {
                return Err(cfg_err("hnn side must be 1 or -1"));
            }
            let b = *h.cap(side);
            let anchor = b.complement().center;
            let js = h.group.j(side).elements_up_to(j_bound);
            let mut rows = Vec::new();
            for e in &h.group.g0.catalogue {
                if h.group.j(side).contains(&e.map)? {
                    continue;
                }
                let opts = js.iter().map(|j| (j.clone(), vec![map_cap(&j.map.compose(&e.map), &b)])).collect();
                rows.push((e.clone(), opts));
            }
            let f = move |k: &Cap| cap_disjoint(k, &b);
            (Box::new(f), rows, anchor)
        }
    };
    if translates.is_empty() {
        return Ok(NestingCompact { k: None, table: Vec::new(), margin: None });
    }
    let mut table = Vec::new();
    let mut chosen: Vec<Cap> = Vec::new();
    for (g, opts) in &translates {
        let mut best: Option<(f64, &Element, &Vec<Cap>)> = None;
        for (j, caps) in opts {
            let m = caps.iter().map(&margin_fn).fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(bm, _, _)| m > bm) {
                best = Some((m, j, caps));
            }
        }
        let (m, j, caps) = best.expect("identity is always a candidate");
        table.push(NestingEntry { g: g.to_string(), j: j.to_string(), margin: m });
        chosen.extend(caps.iter().copied());
    }
    let mut candidates = Vec::new();
    if let Some(c) = centroid(&chosen) {
        candidates.extend(enclosing_cap(c, &chosen));
    }
    candidates.extend(enclosing_cap(anchor, &chosen));
    let best = candidates.into_iter().map(|k| (margin_fn(&k), k)).fold(None, |acc: Option<(f64, Cap)>, x| match acc {
        Some(a) if a.0 >= x.0 => Some(a),
        _ => Some(x),
    });
    match best {
        Some((m, k)) if m > 0.0 => Ok(NestingCompact { k: Some(k), table, margin: Some(m) }),
        Some((m, _)) => {
            let worst = table.iter().min_by(|a, b| a.margin.total_cmp(&b.margin)).expect("nonempty");
            Err(PingPongError::NoCompactFound { witness: format!("{} {}", worst.j, worst.g), margin: m })
        }
        None => Err(PingPongError::NoCompactFound { witness: "-".into(), margin: f64::NAN }),
    }
}

// ---------------------------------------------------------------------------
// Desk-scale invariants

#[derive(Clone, Debug, Default)]
pub struct InvariantOutcome {
    pub checked: usize,
    pub violations: Vec<String>,
    pub min_margin: f64,
}

/// For equal-length forms `g` of type `i` and `h` of type `k`: either
/// `gB_i` and `hB_k` are disjoint, or `i = k` and `g^-1 h` lies in `J_i`.
pub fn hnn_precise_invariance(cfg: &HnnConfig, max_length: usize) -> Result<InvariantOutcome, PingPongError> {
    let g = &cfg.group;
    let mut out = InvariantOutcome { min_margin: f64::INFINITY, ..Default::default() };
    for m in 0..=max_length {
        let mut items: Vec<(i8, HnnNormalForm, MoebiusMap, Cap)> = Vec::new();
        for i in [1i8, -1] {
            for w in g.enumerate(m, HnnFilter::Type(i)) {
                if w.len() != m {
                    continue;
                }
                let map = g.evaluate(&w);
                items.push((i, w, map, map_cap(&map, cfg.cap(i))));
            }
        }
        let rows: Vec<(usize, Vec<String>, f64)> = (0..items.len())
            .into_par_iter()
            .map(|a| {
                let mut bad = Vec::new();
                let mut min_m = f64::INFINITY;
                let mut n = 0;
                for b in (a + 1)..items.len() {
                    n += 1;
                    let (i, gw, gm, gc) = &items[a];
                    let (k, hw, hm, hc) = &items[b];
                    let margin = cap_disjoint(gc, hc);
                    if margin > 0.0 {
                        min_m = min_m.min(margin);
                        continue;
                    }
                    let same_coset = i == k && g.j(*i).contains(&gm.invert().compose(hm)).unwrap_or(false);
                    if !same_coset {
                        bad.push(format!("{gw} (type {i}) and {hw} (type {k}) overlap, margin {margin:e}"));
                    }
                }
                (n, bad, min_m)
            })
            .collect();
        for (n, bad, mm) in rows {
            out.checked += n;
            out.violations.extend(bad);
            out.min_margin = out.min_margin.min(mm);
        }
    }
    Ok(out)
}

/// `g dB_i` meets `dB_j` exactly when `i = j` and `g` is in `J_i`, or
/// `i = -j` and `f^-j g` is in `J_i`.
pub fn hnn_boundary_invariance(cfg: &HnnConfig, max_length: usize) -> Result<InvariantOutcome, PingPongError> {
    let g = &cfg.group;
    let forms = g.enumerate(max_length, HnnFilter::All);
    let mut out = InvariantOutcome { min_margin: f64::INFINITY, ..Default::default() };
    for w in &forms {
        let m = g.evaluate(w);
        for i in [1i8, -1] {
            let img = map_cap(&m, cfg.cap(i));
            for j in [1i8, -1] {
                out.checked += 1;
                let meets = img.boundaries_meet(cfg.cap(j), CAP_EQ_TOL);
                let predicted =
                    if i == j { g.j(i).contains(&m)? } else { g.j(i).contains(&g.f.pow(-(j as i32)).compose(&m))? };
                if meets != predicted {
                    out.violations.push(format!("{w}: boundary of B{i} vs B{j}: meets={meets}, predicted={predicted}"));
                }
                if !meets {
                    let a = crate::sphere::angle_between(img.center, cfg.cap(j).center);
                    let gap = (a - img.radius - cfg.cap(j).radius)
                        .max((img.radius - cfg.cap(j).radius).abs() - a)
                        .max(img.radius + cfg.cap(j).radius + a - 2.0 * std::f64::consts::PI);
                    out.min_margin = out.min_margin.min(gap);
                }
            }
        }
    }
    Ok(out)
}
