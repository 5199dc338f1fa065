//! Normal forms for amalgamated products and HNN extensions.
//!
//! Factor elements are words over named generators with a cached matrix.
//! Equality inside a factor is decided by matrix comparison; membership in
//! the edge groups goes through a [`JOracle`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sphere::MoebiusMap;

/// Projective distance under which two matrices are the same element.
pub const MATRIX_TOL: f64 = 1e-8;

/// Name of the stable letter in HNN words.
pub const STABLE_LETTER: &str = "f";

/// A word over named generators, e.g. `[["f", 1], ["a", -2]]`.
pub type Word = Vec<(String, i32)>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WordError {
    #[error("unknown generator {0:?}")]
    UnknownGenerator(String),
    #[error("membership test exceeded the oracle power bound {0}")]
    OracleOverflow(u32),
    #[error("edge groups are not conjugate by the stable letter: {0}")]
    OracleMismatch(String),
    #[error("wrong shape: {0}")]
    WrongShape(String),
    #[error("invalid normal form: {0}")]
    InvalidForm(String),
}

/// Free reduction: merges adjacent equal letters and drops zero exponents.
pub fn reduce_word(w: &[(String, i32)]) -> Word {
    let mut out: Word = Vec::with_capacity(w.len());
    for (name, e) in w {
        if *e == 0 {
            continue;
        }
        if let Some(last) = out.last_mut() {
            if last.0 == *name {
                last.1 += e;
                if last.1 == 0 {
                    out.pop();
                }
                continue;
            }
        }
        out.push((name.clone(), *e));
    }
    out
}

pub fn invert_word(w: &[(String, i32)]) -> Word {
    w.iter().rev().map(|(n, e)| (n.clone(), -e)).collect()
}

pub fn concat_words(a: &[(String, i32)], b: &[(String, i32)]) -> Word {
    let mut v = a.to_vec();
    v.extend_from_slice(b);
    reduce_word(&v)
}

/// Total exponent count of a word.
pub fn word_length(w: &[(String, i32)]) -> usize {
    w.iter().map(|(_, e)| e.unsigned_abs() as usize).sum()
}

pub fn format_word(w: &[(String, i32)]) -> String {
    if w.is_empty() {
        return "1".into();
    }
    w.iter().map(|(n, e)| if *e == 1 { n.clone() } else { format!("{n}^{e}") }).collect::<Vec<_>>().join(" ")
}

/// Inverse of [`format_word`]: whitespace-separated `name` or `name^e`;
/// `1` or an empty string is the empty word.
pub fn parse_word(text: &str) -> Result<Word, WordError> {
    let mut out = Vec::new();
    for tok in text.split_whitespace() {
        if tok == "1" {
            continue;
        }
        let (name, e) = match tok.split_once('^') {
            Some((n, e)) => {
                (n, e.parse::<i32>().map_err(|_| WordError::WrongShape(format!("bad exponent in {tok:?}")))?)
            }
            None => (tok, 1),
        };
        if name.is_empty() {
            return Err(WordError::WrongShape(format!("missing generator in {tok:?}")));
        }
        out.push((name.to_string(), e));
    }
    Ok(reduce_word(&out))
}

/// Named generator matrices.
#[derive(Clone, Debug, Default)]
pub struct Generators {
    maps: BTreeMap<String, MoebiusMap>,
}

impl Generators {
    pub fn new() -> Self {
        Generators::default()
    }

    pub fn insert(&mut self, name: &str, m: MoebiusMap) {
        self.maps.insert(name.to_string(), m);
    }

    pub fn get(&self, name: &str) -> Option<&MoebiusMap> {
        self.maps.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.maps.keys()
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn merged(&self, other: &Generators) -> Generators {
        let mut g = self.clone();
        for (k, v) in &other.maps {
            g.maps.insert(k.clone(), *v);
        }
        g
    }

    pub fn eval(&self, w: &[(String, i32)]) -> Result<MoebiusMap, WordError> {
        let mut m = MoebiusMap::identity();
        for (name, e) in w {
            let g = self.maps.get(name).ok_or_else(|| WordError::UnknownGenerator(name.clone()))?;
            m = m.compose(&g.pow(*e));
        }
        Ok(m)
    }

    pub fn element(&self, w: &[(String, i32)]) -> Result<Element, WordError> {
        let word = reduce_word(w);
        let map = self.eval(&word)?;
        Ok(Element { word, map })
    }
}

/// A group element: a word together with its matrix.
#[derive(Clone, Debug)]
pub struct Element {
    pub word: Word,
    pub map: MoebiusMap,
}

impl Element {
    pub fn identity() -> Self {
        Element { word: Vec::new(), map: MoebiusMap::identity() }
    }

    pub fn is_identity(&self) -> bool {
        self.map.distance_to_identity() <= MATRIX_TOL
    }

    pub fn same(&self, other: &Element) -> bool {
        self.map.approx_eq(&other.map, MATRIX_TOL)
    }

    pub fn inverse(&self) -> Element {
        Element { word: invert_word(&self.word), map: self.map.invert() }
    }

    pub fn mul(&self, other: &Element) -> Element {
        Element { word: concat_words(&self.word, &other.word), map: self.map.compose(&other.map) }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_word(&self.word))
    }
}

// ---------------------------------------------------------------------------
// Factors

/// A factor (or vertex) group: generators plus a catalogue of enumerated
/// elements used to give products short canonical words.
#[derive(Clone, Debug)]
pub struct Factor {
    pub generators: Generators,
    /// Non-identity elements by increasing word length, deduplicated.
    pub catalogue: Vec<Element>,
    /// True when enumeration stopped because no new elements appeared.
    pub closed: bool,
}

impl Factor {
    /// Enumerates elements up to word length `depth` in length-lex order.
    pub fn new(generators: Generators, depth: usize) -> Factor {
        let mut letters: Vec<(String, i32)> = Vec::new();
        for n in generators.names() {
            letters.push((n.clone(), 1));
            letters.push((n.clone(), -1));
        }
        let mut catalogue: Vec<Element> = Vec::new();
        let mut frontier = vec![Element::identity()];
        let mut closed = false;
        for _ in 0..depth {
            let mut next = Vec::new();
            for e in &frontier {
                for (n, s) in &letters {
                    let g = generators.get(n).expect("listed generator");
                    let m = e.map.compose(&if *s > 0 { *g } else { g.invert() });
                    if m.distance_to_identity() <= MATRIX_TOL {
                        continue;
                    }
                    if catalogue.iter().chain(next.iter()).any(|x: &Element| x.map.approx_eq(&m, MATRIX_TOL)) {
                        continue;
                    }
                    let mut word = e.word.clone();
                    word.push((n.clone(), *s));
                    next.push(Element { word: reduce_word(&word), map: m });
                }
            }
            if next.is_empty() {
                closed = true;
                break;
            }
            catalogue.extend(next.iter().cloned());
            frontier = next;
        }
        if letters.is_empty() {
            closed = true;
        }
        Factor { generators, catalogue, closed }
    }

    pub fn lookup(&self, m: &MoebiusMap) -> Option<&Element> {
        self.catalogue.iter().find(|e| e.map.approx_eq(m, MATRIX_TOL))
    }

    /// Replaces the word by a catalogue word when the matrix is known.
    pub fn canonical(&self, e: Element) -> Element {
        if e.is_identity() {
            return Element::identity();
        }
        match self.lookup(&e.map) {
            Some(c) => Element { word: c.word.clone(), map: e.map },
            None => e,
        }
    }

    pub fn mul(&self, a: &Element, b: &Element) -> Element {
        self.canonical(a.mul(b))
    }

    /// All elements including the identity, identity first.
    pub fn elements_with_identity(&self) -> Vec<Element> {
        let mut v = vec![Element::identity()];
        v.extend(self.catalogue.iter().cloned());
        v
    }
}

// ---------------------------------------------------------------------------
// Edge-group oracles

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JKind {
    Trivial,
    FiniteList,
    Cyclic,
    WordList,
}

/// Membership oracle for an edge subgroup.
#[derive(Clone, Debug)]
pub struct JOracle {
    pub kind: JKind,
    /// Listed elements (closed under inverses) or the cyclic generator.
    elements: Vec<Element>,
    pub power_bound: u32,
    pub tol: f64,
}

impl JOracle {
    pub fn trivial() -> Self {
        JOracle { kind: JKind::Trivial, elements: Vec::new(), power_bound: 0, tol: MATRIX_TOL }
    }

    /// Finite list of elements; inverses are added automatically.
    pub fn list(kind: JKind, elements: Vec<Element>) -> Self {
        let mut all: Vec<Element> = Vec::new();
        for e in elements {
            for x in [e.clone(), e.inverse()] {
                if !x.is_identity() && !all.iter().any(|y| y.same(&x)) {
                    all.push(x);
                }
            }
        }
        JOracle { kind, elements: all, power_bound: 0, tol: MATRIX_TOL }
    }

    pub fn cyclic(generator: Element, power_bound: u32) -> Self {
        JOracle { kind: JKind::Cyclic, elements: vec![generator], power_bound, tol: MATRIX_TOL }
    }

    pub fn is_trivial(&self) -> bool {
        self.kind == JKind::Trivial || (self.kind != JKind::Cyclic && self.elements.is_empty())
    }

    /// Generators of the subgroup (empty when trivial).
    pub fn generators(&self) -> Vec<Element> {
        match self.kind {
            JKind::Trivial => Vec::new(),
            _ => self.elements.clone(),
        }
    }

    fn power(&self, k: i32) -> Element {
        let g = &self.elements[0];
        let base = if k < 0 { g.inverse() } else { g.clone() };
        let mut e = Element::identity();
        for _ in 0..k.unsigned_abs() {
            e = e.mul(&base);
        }
        e
    }

    /// Returns the matching subgroup element, `None` if not a member.
    pub fn member(&self, m: &MoebiusMap) -> Result<Option<Element>, WordError> {
        if m.distance_to_identity() <= self.tol {
            return Ok(Some(Element::identity()));
        }
        match self.kind {
            JKind::Trivial => Ok(None),
            JKind::FiniteList | JKind::WordList => {
                Ok(self.elements.iter().find(|e| e.map.approx_eq(m, self.tol)).cloned())
            }
            JKind::Cyclic => {
                let g = self.elements[0].map;
                let comm = m.compose(&g).compose(&m.invert()).compose(&g.invert());
                if comm.distance_to_identity() > 1e-6 {
                    return Ok(None);
                }
                for k in 1..=self.power_bound as i32 {
                    for kk in [k, -k] {
                        let p = self.power(kk);
                        if p.map.approx_eq(m, self.tol) {
                            return Ok(Some(p));
                        }
                    }
                }
                Err(WordError::OracleOverflow(self.power_bound))
            }
        }
    }

    pub fn contains(&self, m: &MoebiusMap) -> Result<bool, WordError> {
        Ok(self.member(m)?.is_some())
    }

    /// Elements with power or list index up to `bound`, identity first.
    pub fn elements_up_to(&self, bound: u32) -> Vec<Element> {
        let mut v = vec![Element::identity()];
        match self.kind {
            JKind::Trivial => {}
            JKind::FiniteList | JKind::WordList => v.extend(self.elements.iter().cloned()),
            JKind::Cyclic => {
                for k in 1..=bound as i32 {
                    for kk in [k, -k] {
                        let p = self.power(kk);
                        if !v.iter().any(|x| x.same(&p)) {
                            v.push(p);
                        }
                    }
                }
            }
        }
        v
    }
}

/// Representatives plus colliding index pairs.
pub type Transversal = (Vec<Element>, Vec<(usize, usize)>);

/// Left coset transversal: identity first, then one element per new coset.
/// Returns the transversal and the pairs of listed entries that collided.
pub fn transversal(candidates: &[Element], j: &JOracle) -> Result<Transversal, WordError> {
    let mut reps: Vec<(usize, Element)> = vec![(usize::MAX, Element::identity())];
    let mut collisions = Vec::new();
    for (idx, g) in candidates.iter().enumerate() {
        let mut hit = None;
        for (ridx, r) in &reps {
            if j.contains(&r.map.invert().compose(&g.map))? {
                hit = Some(*ridx);
                break;
            }
        }
        match hit {
            Some(r) => collisions.push((r, idx)),
            None => reps.push((idx, g.clone())),
        }
    }
    Ok((reps.into_iter().map(|(_, e)| e).collect(), collisions))
}

// ---------------------------------------------------------------------------
// Amalgamated products

/// A factor and its edge group, enough to multiply normal forms.
#[derive(Clone, Debug)]
pub struct AfpGroup {
    pub factors: [Factor; 2],
    pub j: JOracle,
    /// Left J-coset representatives per factor, identity first.
    pub reps: [Vec<Element>; 2],
}

#[derive(Clone, Debug)]
pub struct AfpSyllable {
    /// 1 or 2.
    pub factor: u8,
    pub elem: Element,
}

/// Alternating syllables; an empty list with `j = Some(..)` is a nontrivial
/// edge-group element of length 0.
#[derive(Clone, Debug, Default)]
pub struct AfpNormalForm {
    pub syllables: Vec<AfpSyllable>,
    pub j: Option<Element>,
}

impl AfpGroup {
    pub fn factor(&self, i: u8) -> &Factor {
        &self.factors[(i - 1) as usize]
    }

    /// Single-syllable form for a factor element (absorbing J-members).
    pub fn syllable(&self, factor: u8, elem: Element) -> Result<AfpNormalForm, WordError> {
        let elem = self.factor(factor).canonical(elem);
        if elem.is_identity() {
            return Ok(AfpNormalForm::default());
        }
        if let Some(jj) = self.j.member(&elem.map)? {
            return Ok(AfpNormalForm { syllables: Vec::new(), j: Some(Element { word: jj.word, map: elem.map }) });
        }
        Ok(AfpNormalForm { syllables: vec![AfpSyllable { factor, elem }], j: None })
    }

    pub fn letter(&self, name: &str, exp: i32) -> Result<AfpNormalForm, WordError> {
        for i in 1..=2u8 {
            if let Some(m) = self.factor(i).generators.get(name) {
                let e = Element { word: vec![(name.to_string(), exp)], map: m.pow(exp) };
                return self.syllable(i, e);
            }
        }
        Err(WordError::UnknownGenerator(name.to_string()))
    }

    /// Product of two normal forms, reduced.
    pub fn concat(&self, u: &AfpNormalForm, v: &AfpNormalForm) -> Result<AfpNormalForm, WordError> {
        let mut left = u.syllables.clone();
        let mut right: std::collections::VecDeque<AfpSyllable> = v.syllables.iter().cloned().collect();
        // Edge elements of length 0 are pushed into a neighbouring syllable.
        let mut carry: Option<Element> = None;
        if let Some(j) = &u.j {
            carry = Some(j.clone());
        }
        if let Some(j) = &v.j {
            carry = Some(match carry {
                Some(c) => c.mul(j),
                None => j.clone(),
            });
        }
        if let Some(c) = carry.take() {
            if u.j.is_some() && v.j.is_none() {
                // u is a J element: multiply into the first syllable of v.
                if let Some(first) = right.front_mut() {
                    let f = first.factor;
                    first.elem = self.factor(f).mul(&c, &first.elem);
                } else {
                    carry = Some(c);
                }
            } else if u.j.is_none() && v.j.is_some() {
                if let Some(last) = left.last_mut() {
                    let f = last.factor;
                    last.elem = self.factor(f).mul(&last.elem, &c);
                } else {
                    carry = Some(c);
                }
            } else {
                carry = Some(c);
            }
        }
        while let (Some(l), Some(r)) = (left.last(), right.front()) {
            if l.factor != r.factor {
                break;
            }
            let f = l.factor;
            let p = self.factor(f).mul(&l.elem, &r.elem);
            left.pop();
            right.pop_front();
            if p.is_identity() {
                continue;
            }
            if self.j.contains(&p.map)? {
                if let Some(prev) = left.last_mut() {
                    let pf = prev.factor;
                    prev.elem = self.factor(pf).mul(&prev.elem, &p);
                } else if let Some(next) = right.front_mut() {
                    let nf = next.factor;
                    next.elem = self.factor(nf).mul(&p, &next.elem);
                } else {
                    carry = Some(match carry {
                        Some(c) => c.mul(&p),
                        None => p,
                    });
                }
                continue;
            }
            left.push(AfpSyllable { factor: f, elem: p });
            break;
        }
        left.extend(right);
        let j = match carry {
            Some(c) if left.is_empty() && !c.is_identity() => Some(self.canonical_j(c)?),
            _ => None,
        };
        Ok(AfpNormalForm { syllables: self.canonicalize(left)?, j })
    }

    /// Replaces every syllable but the last by its coset representative,
    /// pushing the edge-group part to the right. Syllables whose coset has
    /// no listed representative are left alone.
    fn canonicalize(&self, mut syl: Vec<AfpSyllable>) -> Result<Vec<AfpSyllable>, WordError> {
        if self.j.is_trivial() {
            return Ok(syl);
        }
        for k in 0..syl.len().saturating_sub(1) {
            let f = syl[k].factor;
            let g = syl[k].elem.clone();
            let mut found = None;
            for r in self.reps[(f - 1) as usize].iter().skip(1) {
                let q = r.map.invert().compose(&g.map);
                if let Some(j) = self.j.member(&q)? {
                    found = Some((r.clone(), Element { word: j.word, map: q }));
                    break;
                }
            }
            if let Some((r, j)) = found {
                if !j.is_identity() {
                    let nf = syl[k + 1].factor;
                    syl[k].elem = r;
                    syl[k + 1].elem = self.factor(nf).mul(&j, &syl[k + 1].elem);
                }
            }
        }
        Ok(syl)
    }

    pub fn from_word(&self, w: &[(String, i32)]) -> Result<AfpNormalForm, WordError> {
        let mut acc = AfpNormalForm::default();
        for (n, e) in w {
            let l = self.letter(n, *e)?;
            acc = self.concat(&acc, &l)?;
        }
        Ok(acc)
    }

    pub fn invert(&self, w: &AfpNormalForm) -> Result<AfpNormalForm, WordError> {
        let syllables = w
            .syllables
            .iter()
            .rev()
            .map(|s| AfpSyllable { factor: s.factor, elem: self.factor(s.factor).canonical(s.elem.inverse()) })
            .collect();
        let j = match &w.j {
            Some(e) => Some(self.canonical_j(e.inverse())?),
            None => None,
        };
        Ok(AfpNormalForm { syllables: self.canonicalize(syllables)?, j })
    }

    /// Spells an edge-group element with the oracle's word.
    fn canonical_j(&self, e: Element) -> Result<Element, WordError> {
        Ok(match self.j.member(&e.map)? {
            Some(m) => Element { word: m.word, map: e.map },
            None => e,
        })
    }

    /// Checks alternation and that no syllable lies in J.
    pub fn validate(&self, w: &AfpNormalForm) -> Result<(), WordError> {
        for (k, s) in w.syllables.iter().enumerate() {
            if s.factor != 1 && s.factor != 2 {
                return Err(WordError::InvalidForm(format!("syllable {k} has factor {}", s.factor)));
            }
            if k > 0 && w.syllables[k - 1].factor == s.factor {
                return Err(WordError::InvalidForm(format!("syllables {} and {k} share a factor", k - 1)));
            }
            if self.j.contains(&s.elem.map)? {
                return Err(WordError::InvalidForm(format!("syllable {k} lies in J")));
            }
        }
        if w.j.is_some() && !w.syllables.is_empty() {
            return Err(WordError::InvalidForm("J part on a positive-length form".into()));
        }
        Ok(())
    }

    /// Minimal-length conjugate: returns `(c, core)` with `w = c core c^-1`.
    pub fn cyclic_reduce(&self, w: &AfpNormalForm) -> Result<(AfpNormalForm, AfpNormalForm), WordError> {
        let mut conj = AfpNormalForm::default();
        let mut core = w.clone();
        while core.len() >= 2 && core.len() % 2 == 1 {
            let first = AfpNormalForm { syllables: vec![core.syllables[0].clone()], j: None };
            let inv = self.invert(&first)?;
            core = self.concat(&self.concat(&inv, &core)?, &first)?;
            conj = self.concat(&conj, &first)?;
        }
        Ok((conj, core))
    }

    /// All forms up to `max_length`, one per left J-coset, by length then
    /// representative index.
    pub fn enumerate(&self, max_length: usize) -> Vec<AfpNormalForm> {
        let mut out = vec![AfpNormalForm::default()];
        let mut level: Vec<AfpNormalForm> = vec![AfpNormalForm::default()];
        for _ in 0..max_length {
            let mut next = Vec::new();
            for w in &level {
                for f in 1..=2u8 {
                    if w.syllables.last().map(|s| s.factor) == Some(f) {
                        continue;
                    }
                    for r in self.reps[(f - 1) as usize].iter().skip(1) {
                        let mut s = w.syllables.clone();
                        s.push(AfpSyllable { factor: f, elem: r.clone() });
                        next.push(AfpNormalForm { syllables: s, j: None });
                    }
                }
            }
            // Length-lex: order by factor sequence of the first syllable etc.
            out.extend(next.iter().cloned());
            level = next;
        }
        out
    }
}

impl AfpNormalForm {
    pub fn len(&self) -> usize {
        self.syllables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.syllables.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.syllables.is_empty() && self.j.as_ref().is_none_or(|e| e.is_identity())
    }

    /// `(i, j)` labels: factors of the first and last syllables.
    pub fn form_type(&self) -> Option<(u8, u8)> {
        Some((self.syllables.first()?.factor, self.syllables.last()?.factor))
    }

    pub fn evaluate(&self) -> MoebiusMap {
        let mut m = self.j.as_ref().map_or(MoebiusMap::identity(), |e| e.map);
        for s in &self.syllables {
            m = m.compose(&s.elem.map);
        }
        m
    }

    pub fn word(&self) -> Word {
        let mut w: Word = self.j.as_ref().map_or(Vec::new(), |e| e.word.clone());
        for s in &self.syllables {
            w.extend(s.elem.word.iter().cloned());
        }
        reduce_word(&w)
    }
}

impl fmt::Display for AfpNormalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_word(&self.word()))
    }
}

// ---------------------------------------------------------------------------
// HNN extensions

/// Vertex group, stable letter and the two edge groups, with
/// `f J_{-1} f^-1 = J_1`.
#[derive(Clone, Debug)]
pub struct HnnGroup {
    pub g0: Factor,
    pub f: MoebiusMap,
    pub j1: JOracle,
    pub jm1: JOracle,
    /// Left coset representatives of `J_1` and `J_{-1}` in `G_0`,
    /// identity first.
    pub reps1: Vec<Element>,
    pub reps_m1: Vec<Element>,
}

/// Input letter for [`HnnGroup::reduce`].
#[derive(Clone, Debug)]
pub enum Letter {
    /// `f` or `f^-1`.
    F(i32),
    G(Element),
}

#[derive(Clone, Debug)]
pub struct HnnSyllable {
    pub alpha: i32,
    pub g: Element,
}

/// `f^{alpha_1} g_1 ... f^{alpha_n} g_n`; the empty list is the identity.
#[derive(Clone, Debug, Default)]
pub struct HnnNormalForm {
    pub syllables: Vec<HnnSyllable>,
}

/// Result of formally inverting an `(i, j)`-form.
#[derive(Clone, Debug)]
pub struct HnnInverse {
    /// `g_n^{-1}`.
    pub head: Element,
    /// `f^{-alpha_n} g_{n-1}^{-1} ... g_1^{-1} f^{-alpha_1}`.
    pub tail: HnnNormalForm,
    /// `head` followed by `tail`.
    pub full: HnnNormalForm,
    pub full_is_normal: bool,
}

/// Filter for HNN enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HnnFilter {
    /// Every element, with the trailing vertex element ranging over the
    /// whole catalogue.
    All,
    /// One form of type `i` per left `J_i`-coset.
    Type(i8),
}

#[derive(Clone, Debug)]
enum Tok {
    F(i32),
    G(Element),
}

impl HnnGroup {
    pub fn j(&self, i: i8) -> &JOracle {
        if i > 0 {
            &self.j1
        } else {
            &self.jm1
        }
    }

    pub fn reps(&self, i: i8) -> &[Element] {
        if i > 0 {
            &self.reps1
        } else {
            &self.reps_m1
        }
    }

    /// `f^t x f^-t`, which must lie in `J_t`.
    fn conjugate_through(&self, x: &Element, t: i32) -> Result<Element, WordError> {
        let ft = self.f.pow(t);
        let m = ft.compose(&x.map).compose(&ft.invert());
        let target = self.j(t as i8);
        match target.member(&m)? {
            Some(e) => Ok(Element { word: e.word, map: m }),
            None => {
                Err(WordError::OracleMismatch(format!("f^{t} ({}) f^{} is not in J_{t}", format_word(&x.word), -t)))
            }
        }
    }

    fn push_g(&self, stack: &mut Vec<Tok>, g: Element) {
        if g.is_identity() {
            return;
        }
        if let Some(Tok::G(h)) = stack.last() {
            let p = self.g0.mul(h, &g);
            stack.pop();
            if !p.is_identity() {
                stack.push(Tok::G(p));
            }
            return;
        }
        stack.push(Tok::G(self.g0.canonical(g)));
    }

    fn push_f(&self, stack: &mut Vec<Tok>, s: i32) -> Result<(), WordError> {
        if let Some(Tok::F(t)) = stack.last() {
            if *t == -s {
                stack.pop();
                return Ok(());
            }
        }
        let n = stack.len();
        if n >= 2 {
            if let (Tok::F(t), Tok::G(j)) = (&stack[n - 2], &stack[n - 1]) {
                let t = *t;
                if t == -s && self.j(-t as i8).contains(&j.map)? {
                    let img = self.conjugate_through(j, t)?;
                    stack.truncate(n - 2);
                    self.push_g(stack, img);
                    return Ok(());
                }
            }
        }
        stack.push(Tok::F(s));
        Ok(())
    }

    /// Britton reduction of a letter sequence.
    pub fn reduce(&self, letters: &[Letter]) -> Result<HnnNormalForm, WordError> {
        let mut stack: Vec<Tok> = Vec::new();
        for l in letters {
            match l {
                Letter::F(s) => {
                    let s = s.signum();
                    if s != 0 {
                        self.push_f(&mut stack, s)?;
                    }
                }
                Letter::G(g) => self.push_g(&mut stack, g.clone()),
            }
        }
        // A leading edge element is moved through the first stable letter.
        if stack.len() >= 2 {
            if let (Tok::G(j), Tok::F(s)) = (&stack[0], &stack[1]) {
                let s = *s;
                if self.j(s as i8).contains(&j.map)? {
                    let x = self.conjugate_through(j, -s)?;
                    let rest: Vec<Tok> = stack.drain(2..).collect();
                    stack.clear();
                    stack.push(Tok::F(s));
                    self.push_g(&mut stack, x);
                    for t in rest {
                        match t {
                            Tok::G(g) => self.push_g(&mut stack, g),
                            Tok::F(s2) => self.push_f(&mut stack, s2)?,
                        }
                    }
                }
            }
        }
        Ok(tokens_to_form(&stack))
    }

    pub fn parse_letters(&self, w: &[(String, i32)]) -> Result<Vec<Letter>, WordError> {
        let mut out = Vec::new();
        for (n, e) in w {
            if n == STABLE_LETTER {
                let s = e.signum();
                for _ in 0..e.unsigned_abs() {
                    out.push(Letter::F(s));
                }
            } else {
                let g = self.g0.generators.get(n).ok_or_else(|| WordError::UnknownGenerator(n.clone()))?;
                out.push(Letter::G(Element { word: vec![(n.clone(), *e)], map: g.pow(*e) }));
            }
        }
        Ok(out)
    }

    pub fn reduce_word(&self, w: &[(String, i32)]) -> Result<HnnNormalForm, WordError> {
        self.reduce(&self.parse_letters(w)?)
    }

    /// Checks the four normal-form conditions.
    pub fn validate(&self, w: &HnnNormalForm) -> Result<(), WordError> {
        let s = &w.syllables;
        let n = s.len();
        for k in 0..n {
            if k + 1 < n && s[k].g.is_identity() {
                return Err(WordError::InvalidForm(format!("g_{} is trivial", k + 1)));
            }
            if k > 0 && s[k].alpha == 0 {
                return Err(WordError::InvalidForm(format!("alpha_{} is zero", k + 1)));
            }
            if k > 0 {
                let prev = &s[k - 1];
                if s[k].alpha < 0 && !prev.g.is_identity() && self.jm1.contains(&prev.g.map)? && prev.alpha >= 0 {
                    return Err(WordError::InvalidForm(format!("condition on J_-1 fails at syllable {}", k + 1)));
                }
                if s[k].alpha > 0 && !prev.g.is_identity() && self.j1.contains(&prev.g.map)? && prev.alpha <= 0 {
                    return Err(WordError::InvalidForm(format!("condition on J_1 fails at syllable {}", k + 1)));
                }
            }
        }
        if n == 1 && s[0].alpha == 0 && s[0].g.is_identity() {
            return Err(WordError::InvalidForm("explicit identity syllable".into()));
        }
        Ok(())
    }

    /// Ping-pong types of a form, as a subset of `{1, -1}`.
    pub fn form_types(&self, w: &HnnNormalForm) -> Result<Vec<i8>, WordError> {
        let mut out = Vec::new();
        let Some(last) = w.syllables.last() else { return Ok(out) };
        for i in [1i8, -1] {
            let ok = last.alpha.signum() == i as i32 || !self.j(i).contains(&last.g.map)?;
            if ok {
                out.push(i);
            }
        }
        Ok(out)
    }

    pub fn has_type(&self, w: &HnnNormalForm, i: i8) -> Result<bool, WordError> {
        Ok(self.form_types(w)?.contains(&i))
    }

    /// Formal inverse of an `(i, j)`-form with `i != 0`.
    pub fn invert(&self, w: &HnnNormalForm) -> Result<HnnInverse, WordError> {
        let s = &w.syllables;
        if s.is_empty() || s[0].alpha == 0 {
            return Err(WordError::WrongShape("formal inverse needs an (i, j)-form with i != 0".into()));
        }
        let n = s.len();
        let mut tail = Vec::with_capacity(n);
        for k in (0..n).rev() {
            let g = if k == 0 { Element::identity() } else { self.g0.canonical(s[k - 1].g.inverse()) };
            tail.push(HnnSyllable { alpha: -s[k].alpha, g });
        }
        let tail = HnnNormalForm { syllables: tail };
        let head = self.g0.canonical(s[n - 1].g.inverse());
        let mut full = Vec::new();
        if !head.is_identity() {
            full.push(HnnSyllable { alpha: 0, g: head.clone() });
        }
        full.extend(tail.syllables.iter().cloned());
        let full = HnnNormalForm { syllables: full };
        let full_is_normal = self.validate(&full).is_ok();
        Ok(HnnInverse { head, tail, full, full_is_normal })
    }

    /// `w = w' f^j g0` with `|w'| = |w| - 1`.
    pub fn prefix_decompose(&self, w: &HnnNormalForm) -> Result<(HnnNormalForm, i8, Element), WordError> {
        if w.is_empty() {
            return Err(WordError::WrongShape("prefix of a length-0 form".into()));
        }
        let mut s = w.syllables.clone();
        let last = s.pop().expect("positive length");
        let j = last.alpha.signum();
        let rest = last.alpha - j;
        if rest != 0 {
            s.push(HnnSyllable { alpha: rest, g: Element::identity() });
        }
        Ok((HnnNormalForm { syllables: s }, j as i8, last.g))
    }

    /// Normal forms up to `max_length` in length-then-index order.
    pub fn enumerate(&self, max_length: usize, filter: HnnFilter) -> Vec<HnnNormalForm> {
        let mut out = Vec::new();
        for m in 0..=max_length {
            self.enumerate_length(m, filter, &mut |toks| out.push(tokens_to_form(toks)));
        }
        out
    }

    /// Calls `emit` on the token sequence of every length-`m` form.
    fn enumerate_length(&self, m: usize, filter: HnnFilter, emit: &mut dyn FnMut(&[Tok])) {
        let all = self.g0.elements_with_identity();
        let finals: Vec<(Element, Option<i8>)> = match filter {
            HnnFilter::All => all.iter().map(|e| (e.clone(), None)).collect(),
            HnnFilter::Type(i) => self.reps(i).iter().map(|e| (e.clone(), Some(i))).collect(),
        };
        if m == 0 {
            for (idx, (e, ty)) in finals.iter().enumerate() {
                // Length 0 of type i: g outside J_i, so skip the identity rep.
                if ty.is_some() && idx == 0 {
                    continue;
                }
                if e.is_identity() {
                    emit(&[]);
                } else {
                    emit(&[Tok::G(e.clone())]);
                }
            }
            return;
        }
        let mut toks: Vec<Tok> = Vec::new();
        self.extend_tokens(&mut toks, m, None, &finals, emit);
    }

    fn extend_tokens(
        &self,
        toks: &mut Vec<Tok>,
        remaining: usize,
        prev_sign: Option<i32>,
        finals: &[(Element, Option<i8>)],
        emit: &mut dyn FnMut(&[Tok]),
    ) {
        if remaining == 0 {
            let last_sign = prev_sign.expect("positive length");
            for (idx, (e, ty)) in finals.iter().enumerate() {
                if let Some(i) = ty {
                    if last_sign == -(*i as i32) && idx == 0 {
                        continue;
                    }
                }
                let n = toks.len();
                if !e.is_identity() {
                    toks.push(Tok::G(e.clone()));
                }
                emit(toks);
                toks.truncate(n);
            }
            return;
        }
        for s in [1i32, -1] {
            for (idx, r) in self.reps(s as i8).iter().enumerate() {
                if idx == 0 && prev_sign == Some(-s) {
                    continue;
                }
                let n = toks.len();
                if !r.is_identity() {
                    toks.push(Tok::G(r.clone()));
                }
                toks.push(Tok::F(s));
                self.extend_tokens(toks, remaining - 1, Some(s), finals, emit);
                toks.truncate(n);
            }
        }
    }

    /// Letters of a form, for re-reduction.
    pub fn letters(&self, w: &HnnNormalForm) -> Vec<Letter> {
        let mut out = Vec::new();
        for s in &w.syllables {
            for _ in 0..s.alpha.unsigned_abs() {
                out.push(Letter::F(s.alpha.signum()));
            }
            if !s.g.is_identity() {
                out.push(Letter::G(s.g.clone()));
            }
        }
        out
    }

    pub fn product(&self, u: &HnnNormalForm, v: &HnnNormalForm) -> Result<HnnNormalForm, WordError> {
        let mut l = self.letters(u);
        l.extend(self.letters(v));
        self.reduce(&l)
    }

    pub fn evaluate(&self, w: &HnnNormalForm) -> MoebiusMap {
        w.evaluate(&self.f)
    }
}

fn tokens_to_form(toks: &[Tok]) -> HnnNormalForm {
    let mut syl = Vec::new();
    let mut alpha = 0i32;
    let mut pending: Option<Element> = None;
    for t in toks {
        match t {
            Tok::F(s) => {
                if let Some(g) = pending.take() {
                    syl.push(HnnSyllable { alpha, g });
                    alpha = 0;
                }
                alpha += s;
            }
            Tok::G(g) => pending = Some(g.clone()),
        }
    }
    if alpha != 0 || pending.is_some() {
        syl.push(HnnSyllable { alpha, g: pending.unwrap_or_else(Element::identity) });
    }
    HnnNormalForm { syllables: syl }
}

impl HnnNormalForm {
    /// `sum |alpha_k|`.
    pub fn len(&self) -> usize {
        self.syllables.iter().map(|s| s.alpha.unsigned_abs() as usize).sum()
    }

    pub fn is_identity(&self) -> bool {
        self.syllables.is_empty()
    }

    /// No stable letters, i.e. an element of `G0`.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(i, j)` labels for positive length: signs of `alpha_1` and `alpha_n`.
    pub fn form_type(&self) -> Option<(i8, i8)> {
        if self.is_empty() {
            return None;
        }
        let i = self.syllables[0].alpha.signum() as i8;
        let j = self.syllables.last()?.alpha.signum() as i8;
        Some((i, j))
    }

    pub fn evaluate(&self, f: &MoebiusMap) -> MoebiusMap {
        let finv = f.invert();
        let mut m = MoebiusMap::identity();
        for s in &self.syllables {
            let step = if s.alpha >= 0 { f } else { &finv };
            for _ in 0..s.alpha.unsigned_abs() {
                m = m.compose(step);
            }
            m = m.compose(&s.g.map);
        }
        m
    }

    pub fn word(&self) -> Word {
        let mut w: Word = Vec::new();
        for s in &self.syllables {
            if s.alpha != 0 {
                w.push((STABLE_LETTER.to_string(), s.alpha));
            }
            w.extend(s.g.word.iter().cloned());
        }
        reduce_word(&w)
    }

    /// Last vertex element `g_n` (identity for the empty form).
    pub fn last_g(&self) -> Element {
        self.syllables.last().map_or_else(Element::identity, |s| s.g.clone())
    }
}

impl fmt::Display for HnnNormalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_word(&self.word()))
    }
}
