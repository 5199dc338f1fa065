//! Nested translate covers of the limit set, point codings, conical
//! witnesses and rasterization.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::pingpong::{
    approx_limit_points, search_nesting_compact, AfpConfig, GroupConfig, HnnConfig, Mode, PingPongError,
};
use crate::sphere::{cap_disjoint, cap_subset, map_cap, Cap, CapSpec, MoebiusMap, Region, SpherePoint};
use crate::words::{format_word, reduce_word, Element, HnnFilter, Word, WordError, STABLE_LETTER};

pub const DEFAULT_MAX_CAPS: usize = 4_000_000;
const NEST_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LimitSetError {
    #[error("cover would hold {count} caps, above the budget of {max}")]
    EnumerationBudget { count: usize, max: usize },
    #[error("cap {index} at depth {depth} escapes its parent (margin {margin:e})")]
    NestingViolation { depth: usize, index: usize, margin: f64 },
    #[error("point is outside every depth-0 cap")]
    OutsideT0,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("conical witness fails at step {k} (margin {margin:e})")]
    WitnessFailed { k: usize, margin: f64 },
    #[error(transparent)]
    PingPong(#[from] PingPongError),
    #[error(transparent)]
    Word(#[from] WordError),
}

// ---------------------------------------------------------------------------
// Covers

/// How a cover node extends its parent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    /// Depth-0 node: coset representative `rep` on its side.
    Root { rep: usize },
    /// Amalgam: right-multiply by representative `rep` of `factor`.
    Afp { factor: u8, rep: usize },
    /// Extension: right-multiply by `f^sign` and representative `rep` of
    /// the `J_side` transversal.
    Hnn { sign: i8, rep: usize },
}

#[derive(Clone, Debug)]
pub struct CoverNode {
    pub parent: Option<usize>,
    /// `j` for a translate `h B_j`.
    pub side: i8,
    pub step: Step,
    pub map: MoebiusMap,
    pub cap: Cap,
    /// Index of the cap within a multi-cap `B_j`.
    pub cap_index: usize,
}

#[derive(Clone, Debug)]
pub struct DiskCover {
    pub mode: Mode,
    /// `levels[n]` holds the depth-`n` caps.
    pub levels: Vec<Vec<CoverNode>>,
    rep_words: [Vec<Word>; 2],
}

fn side_slot(mode: Mode, side: i8) -> usize {
    match mode {
        Mode::Afp => (side - 1) as usize,
        Mode::Hnn => usize::from(side < 0),
    }
}

impl DiskCover {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Word of the translating element of a node.
    pub fn form_word(&self, depth: usize, index: usize) -> Word {
        let mut parts: Vec<Word> = Vec::new();
        let (mut d, mut i) = (depth, index);
        loop {
            let node = &self.levels[d][i];
            match node.step {
                Step::Root { rep } => {
                    parts.push(self.rep_words[side_slot(self.mode, node.side)][rep].clone());
                    break;
                }
                Step::Afp { factor, rep } => parts.push(self.rep_words[(factor - 1) as usize][rep].clone()),
                Step::Hnn { sign, rep } => {
                    let mut w = vec![(STABLE_LETTER.to_string(), sign as i32)];
                    w.extend(self.rep_words[side_slot(Mode::Hnn, node.side)][rep].iter().cloned());
                    parts.push(w);
                }
            }
            match node.parent {
                Some(p) => {
                    d -= 1;
                    i = p;
                }
                None => break,
            }
        }
        let flat: Word = parts.into_iter().rev().flatten().collect();
        reduce_word(&flat)
    }

    /// Every cap must sit inside its parent cap.
    pub fn check_nesting(&self) -> Result<(), LimitSetError> {
        for d in 1..self.levels.len() {
            let bad = self.levels[d].par_iter().enumerate().find_first(|(_, n)| {
                let p = &self.levels[d - 1][n.parent.expect("non-root node has a parent")];
                cap_subset(&n.cap, &p.cap) < -NEST_TOL
            });
            if let Some((index, n)) = bad {
                let p = &self.levels[d - 1][n.parent.expect("parent")];
                return Err(LimitSetError::NestingViolation { depth: d, index, margin: cap_subset(&n.cap, &p.cap) });
            }
        }
        Ok(())
    }

    /// One JSON object per cap: `{depth, form, cap, parent}`.
    pub fn json_lines(&self) -> String {
        #[derive(Serialize)]
        struct Line {
            depth: usize,
            form: Word,
            side: i8,
            cap: CapSpec,
            parent: Option<usize>,
        }
        let mut out = String::new();
        for (d, level) in self.levels.iter().enumerate() {
            for (i, n) in level.iter().enumerate() {
                let line = Line {
                    depth: d,
                    form: self.form_word(d, i),
                    side: n.side,
                    cap: CapSpec::from(&n.cap),
                    parent: n.parent,
                };
                out.push_str(&serde_json::to_string(&line).expect("serializable"));
                out.push('\n');
            }
        }
        out
    }
}

fn check_budget(count: usize, max: usize) -> Result<(), LimitSetError> {
    if count > max {
        Err(LimitSetError::EnumerationBudget { count, max })
    } else {
        Ok(())
    }
}

pub fn build_afp_cover(cfg: &AfpConfig, depth: usize, max_caps: usize) -> Result<DiskCover, LimitSetError> {
    let g = &cfg.group;
    let reps = &g.reps;
    let mut root = Vec::new();
    for j in 1..=2u8 {
        for (ci, c) in cfg.region(j).caps.iter().enumerate() {
            root.push(CoverNode {
                parent: None,
                side: j as i8,
                step: Step::Root { rep: 0 },
                map: MoebiusMap::identity(),
                cap: *c,
                cap_index: ci,
            });
        }
    }
    let mut levels = vec![root];
    let mut total = levels[0].len();
    for _ in 0..depth {
        let prev = levels.last().expect("root level");
        let count: usize = prev
            .iter()
            .filter(|n| n.cap_index == 0)
            .map(|n| {
                let k = 3 - n.side as u8;
                (reps[(k - 1) as usize].len() - 1) * cfg.region(k).caps.len()
            })
            .sum();
        total += count;
        check_budget(total, max_caps)?;
        let next: Vec<CoverNode> = prev
            .par_iter()
            .enumerate()
            .filter(|(_, n)| n.cap_index == 0)
            .flat_map_iter(|(pi, n)| {
                let k = 3 - n.side as u8;
                let siblings = cfg.region(n.side as u8).caps.len();
                let mut kids = Vec::new();
                for (ri, r) in reps[(k - 1) as usize].iter().enumerate().skip(1) {
                    let map = n.map.compose(&r.map);
                    for (ci, c) in cfg.region(k).caps.iter().enumerate() {
                        let cap = map_cap(&map, c);
                        let parent = (pi..pi + siblings)
                            .max_by(|&a, &b| cap_subset(&cap, &prev[a].cap).total_cmp(&cap_subset(&cap, &prev[b].cap)))
                            .expect("at least one sibling");
                        kids.push(CoverNode {
                            parent: Some(parent),
                            side: k as i8,
                            step: Step::Afp { factor: k, rep: ri },
                            map,
                            cap,
                            cap_index: ci,
                        });
                    }
                }
                kids
            })
            .collect();
        levels.push(next);
    }
    let rep_words = [0, 1].map(|i| reps[i].iter().map(|e| e.word.clone()).collect());
    Ok(DiskCover { mode: Mode::Afp, levels, rep_words })
}

pub fn build_hnn_cover(cfg: &HnnConfig, depth: usize, max_caps: usize) -> Result<DiskCover, LimitSetError> {
    let g = &cfg.group;
    let mut root = Vec::new();
    for i in [1i8, -1] {
        for (ri, r) in g.reps(i).iter().enumerate() {
            root.push(CoverNode {
                parent: None,
                side: i,
                step: Step::Root { rep: ri },
                map: r.map,
                cap: map_cap(&r.map, cfg.cap(i)),
                cap_index: 0,
            });
        }
    }
    let (n1, nm1) = (g.reps1.len(), g.reps_m1.len());
    let mut levels = vec![root];
    let mut total = levels[0].len();
    let f_pow = [g.f, g.f.invert()];
    for _ in 0..depth {
        let prev = levels.last().expect("root level");
        // Children of a side-s node: all reps on side s, nontrivial reps on side -s.
        let count = prev.len() * (n1 + nm1 - 1);
        total += count;
        check_budget(total, max_caps)?;
        let next: Vec<CoverNode> = prev
            .par_iter()
            .enumerate()
            .flat_map_iter(|(pi, n)| {
                let s = n.side;
                let fs = n.map.compose(&f_pow[usize::from(s < 0)]);
                let mut kids = Vec::new();
                for i in [1i8, -1] {
                    for (ri, r) in g.reps(i).iter().enumerate() {
                        if ri == 0 && i == -s {
                            continue;
                        }
                        let map = fs.compose(&r.map);
                        kids.push(CoverNode {
                            parent: Some(pi),
                            side: i,
                            step: Step::Hnn { sign: s, rep: ri },
                            map,
                            cap: map_cap(&map, cfg.cap(i)),
                            cap_index: 0,
                        });
                    }
                }
                kids
            })
            .collect();
        levels.push(next);
    }
    let rep_words = [&g.reps1, &g.reps_m1].map(|v| v.iter().map(|e| e.word.clone()).collect());
    Ok(DiskCover { mode: Mode::Hnn, levels, rep_words })
}

pub fn build_cover(cfg: &GroupConfig, depth: usize, max_caps: usize) -> Result<DiskCover, LimitSetError> {
    match cfg {
        GroupConfig::Afp(a) => build_afp_cover(a, depth, max_caps),
        GroupConfig::Hnn(h) => build_hnn_cover(h, depth, max_caps),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DepthStats {
    pub depth: usize,
    pub count: usize,
    pub max_diameter: f64,
    pub mean_diameter: f64,
    /// Largest child-to-parent diameter ratio at this depth.
    pub worst_ratio: f64,
}

/// Per-depth chordal diameters (depth 1 onward), after checking nesting.
pub fn contraction_stats(cover: &DiskCover) -> Result<Vec<DepthStats>, LimitSetError> {
    cover.check_nesting()?;
    let mut out = Vec::new();
    for d in 1..cover.levels.len() {
        let level = &cover.levels[d];
        let (max, sum, ratio) = level
            .par_iter()
            .map(|n| {
                let dia = n.cap.diameter();
                let p = cover.levels[d - 1][n.parent.expect("parent")].cap.diameter();
                (dia, dia, if p > 0.0 { dia / p } else { 0.0 })
            })
            .reduce(|| (0.0, 0.0, 0.0), |a, b| (a.0.max(b.0), a.1 + b.1, a.2.max(b.2)));
        out.push(DepthStats {
            depth: d,
            count: level.len(),
            max_diameter: max,
            mean_diameter: if level.is_empty() { 0.0 } else { sum / level.len() as f64 },
            worst_ratio: ratio,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Codings

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    DepthReached,
    EscapedToFactor,
}

#[derive(Clone, Debug, Serialize)]
pub struct CodingStep {
    pub syllable: String,
    pub form: String,
    pub form_word: Word,
    pub side: i8,
    pub cap: CapSpec,
    pub diameter: f64,
    pub margin: f64,
    #[serde(skip)]
    pub detail: StepDetail,
}

/// Data kept for witness construction.
#[derive(Clone, Debug)]
pub struct StepDetail {
    /// `h_k`.
    pub map: MoebiusMap,
    /// Factor of the syllable (amalgam) or sign of the stable letter.
    pub tag: i8,
    /// Vertex/factor element of the step.
    pub elem: Element,
    pub cap: Cap,
}

#[derive(Clone, Debug, Serialize)]
pub struct CodingSequence {
    pub point: Option<[f64; 2]>,
    /// Depth-0 translate holding the point (extensions only).
    pub base: Option<CodingStep>,
    pub steps: Vec<CodingStep>,
    pub termination: Termination,
}

impl CodingSequence {
    pub fn syllables(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.syllable.clone()).collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn coding_step(
    syllable: String,
    word: Word,
    side: i8,
    cap: Cap,
    margin: f64,
    map: MoebiusMap,
    tag: i8,
    elem: Element,
) -> CodingStep {
    CodingStep {
        syllable,
        form: format_word(&word),
        form_word: word,
        side,
        cap: CapSpec::from(&cap),
        diameter: cap.diameter(),
        margin,
        detail: StepDetail { map, tag, elem, cap },
    }
}

fn point_json(x: &SpherePoint) -> Option<[f64; 2]> {
    x.to_complex().map(|z| [z.re, z.im])
}

/// Greedy coding by nested translates `h_k B_j`, best margin first.
pub fn code_point_afp(cfg: &AfpConfig, x: &SpherePoint, depth: usize) -> Result<CodingSequence, LimitSetError> {
    let g = &cfg.group;
    if cfg.region(1).point_margin(x) < -NEST_TOL && cfg.region(2).point_margin(x) < -NEST_TOL {
        return Err(LimitSetError::OutsideT0);
    }
    let mut steps: Vec<CodingStep> = Vec::new();
    let mut h = MoebiusMap::identity();
    let mut word: Word = Vec::new();
    let mut last: Option<u8> = None;
    let mut termination = Termination::DepthReached;
    for _ in 0..depth {
        let factors: Vec<u8> = match last {
            None => vec![1, 2],
            Some(j) => vec![3 - j],
        };
        let mut best: Option<(f64, u8, &Element, MoebiusMap, Cap)> = None;
        for &k in &factors {
            for r in g.reps[(k - 1) as usize].iter().skip(1) {
                let m = h.compose(&r.map);
                for c in &cfg.region(k).caps {
                    let cap = map_cap(&m, c);
                    let margin = cap.point_margin(x);
                    if margin >= 0.0 && best.as_ref().is_none_or(|b| margin > b.0) {
                        best = Some((margin, k, r, m, cap));
                    }
                }
            }
        }
        let Some((margin, k, r, m, cap)) = best else {
            termination = Termination::EscapedToFactor;
            break;
        };
        h = m;
        word.extend(r.word.iter().cloned());
        last = Some(k);
        steps.push(coding_step(r.to_string(), word.clone(), k as i8, cap, margin, h, k as i8, r.clone()));
    }
    Ok(CodingSequence { point: point_json(x), base: None, steps, termination })
}

/// Coding by type forms: a depth-0 translate `r_0 B_i`, then steps
/// `f^s r` following the cover's child rule.
pub fn code_point_hnn(cfg: &HnnConfig, x: &SpherePoint, depth: usize) -> Result<CodingSequence, LimitSetError> {
    let g = &cfg.group;
    let mut base: Option<(f64, i8, &Element, Cap)> = None;
    for i in [1i8, -1] {
        for r in g.reps(i) {
            let cap = map_cap(&r.map, cfg.cap(i));
            let margin = cap.point_margin(x);
            if margin >= -NEST_TOL && base.as_ref().is_none_or(|b| margin > b.0) {
                base = Some((margin, i, r, cap));
            }
        }
    }
    let Some((margin, side0, r0, cap0)) = base else { return Err(LimitSetError::OutsideT0) };
    let mut word = r0.word.clone();
    let base_step = coding_step(r0.to_string(), word.clone(), side0, cap0, margin, r0.map, 0, r0.clone());
    let mut h = r0.map;
    let mut side = side0;
    let mut steps = Vec::new();
    let mut termination = Termination::DepthReached;
    for _ in 0..depth {
        let fs = h.compose(&if side > 0 { g.f } else { g.f.invert() });
        let mut best: Option<(f64, i8, &Element, MoebiusMap, Cap)> = None;
        for i in [1i8, -1] {
            for (ri, r) in g.reps(i).iter().enumerate() {
                if ri == 0 && i == -side {
                    continue;
                }
                let m = fs.compose(&r.map);
                let cap = map_cap(&m, cfg.cap(i));
                let margin = cap.point_margin(x);
                if margin >= 0.0 && best.as_ref().is_none_or(|b| margin > b.0) {
                    best = Some((margin, i, r, m, cap));
                }
            }
        }
        let Some((margin, i, r, m, cap)) = best else {
            termination = Termination::EscapedToFactor;
            break;
        };
        let mut syl = vec![(STABLE_LETTER.to_string(), side as i32)];
        syl.extend(r.word.iter().cloned());
        word = reduce_word(&[word, syl.clone()].concat());
        steps.push(coding_step(format_word(&syl), word.clone(), i, cap, margin, m, side, r.clone()));
        h = m;
        side = i;
    }
    Ok(CodingSequence { point: point_json(x), base: Some(base_step), steps, termination })
}

pub fn code_point(cfg: &GroupConfig, x: &SpherePoint, depth: usize) -> Result<CodingSequence, LimitSetError> {
    match cfg {
        GroupConfig::Afp(a) => code_point_afp(a, x, depth),
        GroupConfig::Hnn(h) => code_point_hnn(h, x, depth),
    }
}

// ---------------------------------------------------------------------------
// Conical witnesses

#[derive(Clone, Debug, Serialize)]
pub struct WitnessStep {
    pub k: usize,
    pub element: String,
    /// Margin of `g_k x` inside `K_2`.
    pub point_margin: f64,
    /// Margin of `g_k Y` inside `K_1`.
    pub set_margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConicalWitness {
    pub verdict: String,
    pub k1: CapSpec,
    pub k2: Vec<CapSpec>,
    pub y: Vec<CapSpec>,
    /// Disjointness margin of `K_1` and `K_2`.
    pub separation: f64,
    pub steps: Vec<WitnessStep>,
}

fn j_word(j: &Element) -> String {
    j.to_string()
}

/// Builds `g_k` with `g_k x` in `K_2` and `g_k Y` in `K_1` along a coding.
pub fn conical_witness(
    cfg: &GroupConfig,
    x: &SpherePoint,
    coding: &CodingSequence,
    j_bound: u32,
) -> Result<ConicalWitness, LimitSetError> {
    if coding.steps.len() < 2 || coding.termination != Termination::DepthReached {
        return Err(LimitSetError::Precondition("conical witness needs a full coding of depth at least 2".into()));
    }
    match cfg {
        GroupConfig::Afp(a) => conical_afp(cfg, a, x, coding, j_bound),
        GroupConfig::Hnn(h) => conical_hnn(h, x, coding, j_bound),
    }
}

fn conical_afp(
    cfg: &GroupConfig,
    a: &AfpConfig,
    x: &SpherePoint,
    coding: &CodingSequence,
    j_bound: u32,
) -> Result<ConicalWitness, LimitSetError> {
    let g = &a.group;
    // Even-length prefixes end in factor s; their inverses push Y = B_{3-s}
    // into g^-1 B_s with g the last syllable.
    let s = 3 - coding.steps[0].detail.tag as u8;
    let compact = search_nesting_compact(cfg, s as i8, j_bound)?;
    let k1 = compact.k.ok_or_else(|| LimitSetError::Precondition("no translates to nest".into()))?;
    let k2 = a.region(s);
    let y = a.region(3 - s);
    let separation = k2.caps.iter().map(|c| cap_disjoint(c, &k1)).fold(f64::INFINITY, f64::min);
    if separation <= 0.0 {
        return Err(LimitSetError::WitnessFailed { k: 0, margin: separation });
    }
    let js = g.j.elements_up_to(j_bound);
    let mut steps = Vec::new();
    for (idx, st) in coding.steps.iter().enumerate() {
        let k = idx + 1;
        if k % 2 == 1 {
            continue;
        }
        let last_inv = st.detail.elem.inverse();
        // j pushing j g^-1 B_s deepest into K_1.
        let j = js
            .iter()
            .max_by(|p, q| {
                let mp = a
                    .region(s)
                    .map(&p.map.compose(&last_inv.map))
                    .caps
                    .iter()
                    .map(|c| cap_subset(c, &k1))
                    .fold(f64::INFINITY, f64::min);
                let mq = a
                    .region(s)
                    .map(&q.map.compose(&last_inv.map))
                    .caps
                    .iter()
                    .map(|c| cap_subset(c, &k1))
                    .fold(f64::INFINITY, f64::min);
                mp.total_cmp(&mq).then(std::cmp::Ordering::Greater)
            })
            .expect("identity is listed");
        let gk = j.map.compose(&st.detail.map.invert());
        let pm = k2.point_margin(&gk.apply(x));
        let sm = y.map(&gk).caps.iter().map(|c| cap_subset(c, &k1)).fold(f64::INFINITY, f64::min);
        if pm < -NEST_TOL || sm < -NEST_TOL {
            return Err(LimitSetError::WitnessFailed { k, margin: pm.min(sm) });
        }
        steps.push(WitnessStep {
            k,
            element: format!("{} ({})^-1", j_word(j), st.form),
            point_margin: pm,
            set_margin: sm,
        });
    }
    if steps.is_empty() {
        return Err(LimitSetError::Precondition("no even-length prefixes".into()));
    }
    Ok(ConicalWitness {
        verdict: "conical-evidence".into(),
        k1: CapSpec::from(&k1),
        k2: k2.caps.iter().map(CapSpec::from).collect(),
        y: y.caps.iter().map(CapSpec::from).collect(),
        separation,
        steps,
    })
}

fn enclosing(center: [f64; 3], caps: &[Cap]) -> Option<Cap> {
    let r = caps.iter().map(|c| crate::sphere::angle_between(center, c.center) + c.radius).fold(0.0, f64::max);
    Cap::new(center, r.min(std::f64::consts::PI - 1e-12), true).ok()
}

fn conical_hnn(
    h: &HnnConfig,
    x: &SpherePoint,
    coding: &CodingSequence,
    j_bound: u32,
) -> Result<ConicalWitness, LimitSetError> {
    let g = &h.group;
    let base = coding.base.as_ref().expect("extension codings carry a base");
    let r0_inv = base.detail.map.invert();
    let xp = r0_inv.apply(x);
    let s1 = coding.steps[0].detail.tag;
    let y = *h.cap(-s1);
    // Restrict to the most common side t.
    let count = |t: i8| coding.steps.iter().filter(|s| s.side == t).count();
    let t = if count(1) >= count(-1) { 1 } else { -1 };
    let k2 = *h.cap(t);
    let js = g.j(t).elements_up_to(j_bound);
    let mut chosen = Vec::new();
    for (idx, st) in coding.steps.iter().enumerate() {
        if st.side != t {
            continue;
        }
        // g_k = j h'_k^-1 with h'_k = r_0^-1 h_k; g_k Y lies in j r_k^-1 B_{-s_k}.
        let hp_inv = st.detail.map.invert().compose(&base.detail.map);
        let bound_cap = map_cap(&st.detail.elem.map.invert(), h.cap(-st.detail.tag));
        let (j, cap) = js
            .iter()
            .map(|j| (j, map_cap(&j.map, &bound_cap)))
            .max_by(|p, q| {
                cap_disjoint(&p.1, &k2).total_cmp(&cap_disjoint(&q.1, &k2)).then(std::cmp::Ordering::Greater)
            })
            .expect("identity is listed");
        chosen.push((idx + 1, j.clone(), j.map.compose(&hp_inv), cap, st.form.clone()));
    }
    if chosen.is_empty() {
        return Err(LimitSetError::Precondition("no coding step on the chosen side".into()));
    }
    let caps: Vec<Cap> = chosen.iter().map(|c| c.3).collect();
    let mut candidates = Vec::new();
    let mut sum = [0.0; 3];
    for c in &caps {
        for (acc, x) in sum.iter_mut().zip(c.center) {
            *acc += x;
        }
    }
    let n = (sum[0] * sum[0] + sum[1] * sum[1] + sum[2] * sum[2]).sqrt();
    if n > 1e-12 {
        candidates.extend(enclosing([sum[0] / n, sum[1] / n, sum[2] / n], &caps));
    }
    candidates.extend(enclosing(k2.complement().center, &caps));
    let (separation, k1) = candidates
        .into_iter()
        .map(|k| (cap_disjoint(&k, &k2), k))
        .max_by(|a, b| a.0.total_cmp(&b.0).then(std::cmp::Ordering::Greater))
        .ok_or(LimitSetError::WitnessFailed { k: 0, margin: f64::NAN })?;
    if separation <= 0.0 {
        return Err(LimitSetError::WitnessFailed { k: 0, margin: separation });
    }
    let mut steps = Vec::new();
    for (k, j, gk, _, form) in chosen {
        let pm = k2.point_margin(&gk.apply(&xp));
        let sm = cap_subset(&map_cap(&gk, &y), &k1);
        if pm < -NEST_TOL || sm < -NEST_TOL {
            return Err(LimitSetError::WitnessFailed { k, margin: pm.min(sm) });
        }
        steps.push(WitnessStep {
            k,
            element: format!("{} ({form})^-1 {}", j_word(&j), base.form),
            point_margin: pm,
            set_margin: sm,
        });
    }
    Ok(ConicalWitness {
        verdict: "conical-evidence".into(),
        k1: CapSpec::from(&k1),
        k2: vec![CapSpec::from(&k2)],
        y: vec![CapSpec::from(&y)],
        separation,
        steps,
    })
}

// ---------------------------------------------------------------------------
// Point clouds and rendering

/// Deepest cap centers plus short translates of approximate factor limit
/// points; at depth 0 only the factor points.
pub fn limit_point_cloud(cfg: &GroupConfig, depth: usize, max_caps: usize) -> Result<Vec<SpherePoint>, LimitSetError> {
    let translate_len = depth.min(3);
    let (factor_pts, translators): (Vec<SpherePoint>, Vec<MoebiusMap>) = match cfg {
        GroupConfig::Afp(a) => {
            let mut pts = Vec::new();
            for f in &a.group.factors {
                pts.extend(approx_limit_points(&f.catalogue, f.closed).into_iter().map(|p| p.0));
            }
            let maps = a.group.enumerate(translate_len).iter().map(|f| f.evaluate()).collect();
            (pts, maps)
        }
        GroupConfig::Hnn(h) => {
            let pts = approx_limit_points(&h.group.g0.catalogue, h.group.g0.closed).into_iter().map(|p| p.0).collect();
            let maps = h.group.enumerate(translate_len, HnnFilter::All).iter().map(|f| h.group.evaluate(f)).collect();
            (pts, maps)
        }
    };
    let mut cloud = Vec::new();
    if depth > 0 {
        let cover = build_cover(cfg, depth, max_caps)?;
        cloud.extend(cover.levels[depth].iter().map(|n| n.cap.center_point()));
        for m in &translators {
            cloud.extend(factor_pts.iter().map(|p| m.apply(p)));
        }
    } else {
        cloud.extend(factor_pts);
    }
    Ok(cloud)
}

#[derive(Clone, Copy, Debug)]
pub struct ImageSpec {
    pub width: usize,
    pub height: usize,
    /// `[x0, y0, x1, y1]` in the complex plane.
    pub window: [f64; 4],
}

impl Default for ImageSpec {
    fn default() -> Self {
        ImageSpec { width: 512, height: 512, window: [-8.0, -8.0, 8.0, 8.0] }
    }
}

const SHADES: [[u8; 3]; 2] = [[196, 214, 240], [240, 200, 196]];
const INK: [u8; 3] = [16, 16, 32];

/// Binary PPM (P6): shaded `regions` (one shade per entry) and dark dots
/// for cloud points.
pub fn render(cloud: &[SpherePoint], regions: &[Region], spec: &ImageSpec) -> Vec<u8> {
    let (w, h) = (spec.width.max(1), spec.height.max(1));
    let [x0, y0, x1, y1] = spec.window;
    let mut px = vec![255u8; w * h * 3];
    let rows: Vec<Vec<u8>> = (0..h)
        .into_par_iter()
        .map(|py| {
            let mut row = vec![255u8; w * 3];
            let y = y1 - (py as f64 + 0.5) / h as f64 * (y1 - y0);
            for pxi in 0..w {
                let x = x0 + (pxi as f64 + 0.5) / w as f64 * (x1 - x0);
                let p = SpherePoint::from_re_im(x, y);
                for (k, r) in regions.iter().enumerate() {
                    if r.contains(&p) {
                        row[pxi * 3..pxi * 3 + 3].copy_from_slice(&SHADES[k % SHADES.len()]);
                        break;
                    }
                }
            }
            row
        })
        .collect();
    for (py, row) in rows.into_iter().enumerate() {
        px[py * w * 3..(py + 1) * w * 3].copy_from_slice(&row);
    }
    for p in cloud {
        let Some(z) = p.to_complex() else { continue };
        let fx = (z.re - x0) / (x1 - x0) * w as f64;
        let fy = (y1 - z.im) / (y1 - y0) * h as f64;
        if !(fx >= 0.0 && fy >= 0.0 && fx < w as f64 && fy < h as f64) {
            continue;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        px[(iy * w + ix) * 3..(iy * w + ix) * 3 + 3].copy_from_slice(&INK);
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(px);
    out
}

/// Depth-0 regions of a config, in drawing order.
pub fn base_regions(cfg: &GroupConfig) -> Vec<Region> {
    match cfg {
        GroupConfig::Afp(a) => a.b.to_vec(),
        GroupConfig::Hnn(h) => {
            let mut one = Vec::new();
            let mut minus = Vec::new();
            for e in h.group.g0.elements_with_identity() {
                one.push(map_cap(&e.map, &h.b1));
                minus.push(map_cap(&e.map, &h.b_minus1));
            }
            vec![Region { caps: one }, Region { caps: minus }]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pingpong::ConfigFile;
    use crate::sphere::PlaneShape;

    fn config(text: &str) -> GroupConfig {
        ConfigFile::from_json(text).unwrap().build().unwrap()
    }

    const DIHEDRAL: &str = include_str!("../configs/dihedral.json");
    const ORDER_TWO: &str = include_str!("../configs/order_two_hnn.json");

    fn disk_radius(c: &Cap) -> (f64, bool) {
        match c.plane_shape() {
            PlaneShape::Disk { radius, inside, .. } => (radius, inside),
            _ => panic!("expected a disk"),
        }
    }

    #[test]
    fn dihedral_cover_levels() {
        let cfg = config(DIHEDRAL);
        let cover = build_cover(&cfg, 2, DEFAULT_MAX_CAPS).unwrap();
        assert_eq!(cover.levels[0].len(), 2);
        assert_eq!(cover.levels[1].len(), 2);
        let radii: Vec<(f64, bool)> = cover.levels[1].iter().map(|n| disk_radius(&n.cap)).collect();
        assert!((radii[0].0 - 1.0 / 16.0).abs() < 1e-12 && radii[0].1);
        assert!((radii[1].0 - 2.0).abs() < 1e-12 && !radii[1].1);
        let radii: Vec<(f64, bool)> = cover.levels[2].iter().map(|n| disk_radius(&n.cap)).collect();
        assert!((radii[0].0 - 1.0 / 32.0).abs() < 1e-12 && radii[0].1);
        assert!((radii[1].0 - 16.0).abs() < 1e-9 && !radii[1].1);
        cover.check_nesting().unwrap();
        assert_eq!(format_word(&cover.form_word(2, 0)), "v u");
    }

    #[test]
    fn hnn_cover_root_and_counts() {
        let cfg = config(ORDER_TWO);
        let cover = build_cover(&cfg, 2, DEFAULT_MAX_CAPS).unwrap();
        assert_eq!(cover.levels[0].len(), 4);
        assert_eq!(cover.levels[1].len(), 12);
        assert_eq!(cover.levels[2].len(), 36);
        cover.check_nesting().unwrap();
        let words: Vec<String> = (0..4).map(|i| format_word(&cover.form_word(0, i))).collect();
        assert_eq!(words, vec!["1", "a", "1", "a"]);
    }

    #[test]
    fn budget_is_enforced() {
        let cfg = config(ORDER_TWO);
        assert!(matches!(build_cover(&cfg, 5, 100), Err(LimitSetError::EnumerationBudget { .. })));
    }

    #[test]
    fn codings_of_zero_and_infinity() {
        let GroupConfig::Afp(a) = config(DIHEDRAL) else { panic!() };
        let c = code_point_afp(&a, &SpherePoint::zero(), 3).unwrap();
        assert_eq!(c.syllables(), vec!["v", "u", "v"]);
        let c = code_point_afp(&a, &SpherePoint::infinity(), 3).unwrap();
        assert_eq!(c.syllables(), vec!["u", "v", "u"]);
        let c = code_point_afp(&a, &SpherePoint::from_re_im(0.4, 0.0), 3).unwrap();
        assert_eq!(c.termination, Termination::EscapedToFactor);
        assert!(matches!(code_point_afp(&a, &SpherePoint::from_re_im(0.7, 0.0), 3), Err(LimitSetError::OutsideT0)));
    }

    #[test]
    fn conical_examples() {
        let cfg = config(DIHEDRAL);
        let c = code_point(&cfg, &SpherePoint::zero(), 6).unwrap();
        let w = conical_witness(&cfg, &SpherePoint::zero(), &c, 4).unwrap();
        assert_eq!(w.verdict, "conical-evidence");
        let short = code_point(&cfg, &SpherePoint::zero(), 1).unwrap();
        assert!(matches!(conical_witness(&cfg, &SpherePoint::zero(), &short, 4), Err(LimitSetError::Precondition(_))));
    }

    #[test]
    fn hnn_attractor_codes_by_f() {
        let cfg = config(ORDER_TWO);
        let GroupConfig::Hnn(h) = &cfg else { panic!() };
        let crate::sphere::FixedPoints::Loxodromic { attracting, .. } = h.group.f.fixed_points().unwrap() else {
            panic!("f is loxodromic")
        };
        let c = code_point(&cfg, &attracting, 5).unwrap();
        assert_eq!(c.syllables(), vec!["f"; 5]);
        assert_eq!(c.base.as_ref().unwrap().form, "1");
        let w = conical_witness(&cfg, &attracting, &c, 4).unwrap();
        assert_eq!(w.steps.len(), 5);
        assert!(w.separation > 0.0);
        let stats = contraction_stats(&build_cover(&cfg, 4, DEFAULT_MAX_CAPS).unwrap()).unwrap();
        assert!(stats.windows(2).all(|p| p[1].max_diameter <= p[0].max_diameter));
        assert!(stats.iter().all(|s| s.worst_ratio < 1.0));
    }

    #[test]
    fn render_header_and_size() {
        let cfg = config(DIHEDRAL);
        let img = render(
            &[SpherePoint::zero()],
            &base_regions(&cfg),
            &ImageSpec { width: 8, height: 4, window: [-8.0, -8.0, 8.0, 8.0] },
        );
        assert!(img.starts_with(b"P6\n8 4\n255\n"));
        assert_eq!(img.len(), b"P6\n8 4\n255\n".len() + 8 * 4 * 3);
    }
}
