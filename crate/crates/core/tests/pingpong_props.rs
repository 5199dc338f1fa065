mod common;

use maskitlab::pingpong::{
    approx_limit_points, discreteness_eta, hnn_boundary_invariance, hnn_precise_invariance, verify, ConfigFile,
    GroupConfig, GroupConfigRef, VerifyOptions,
};
use maskitlab::sphere::chordal_distance;

const MAX_DEPTH: usize = 6;
const SCHOTTKY_DEPTH: usize = 4;
const ETA_FLOOR: f64 = 1e-3;
const SEPARATION_DELTA: f64 = 1e-3;
const INVARIANCE_MAX_LEN: usize = 4;

fn at_depth(text: &str, depth: usize) -> GroupConfig {
    let mut file = ConfigFile::from_json(text).unwrap();
    file.depth = depth;
    file.build().unwrap()
}

/// Name, JSON text and the deepest length to enumerate. The Schottky
/// factors are infinite, so its enumeration grows much faster.
fn sources() -> Vec<(String, String, usize)> {
    let mut out: Vec<(String, String, usize)> = ["dihedral.json", "order_two_hnn.json"]
        .iter()
        .map(|n| (n.to_string(), std::fs::read_to_string(common::config_path(n)).unwrap(), MAX_DEPTH))
        .collect();
    out.push(("klein".into(), common::KLEIN.into(), MAX_DEPTH));
    out.push(("commuting".into(), common::COMMUTING.into(), MAX_DEPTH));
    out.push(("schottky".into(), common::schottky(), SCHOTTKY_DEPTH));
    out
}

#[test]
fn certification_is_monotone_in_depth() {
    for (name, text, max) in sources() {
        let top = verify(&at_depth(&text, max), &VerifyOptions::default()).unwrap();
        assert!(top.verdict.is_certified(), "{name} does not certify at depth {max}");
        for depth in 1..max {
            let r = verify(&at_depth(&text, depth), &VerifyOptions::default()).unwrap();
            assert!(r.verdict.is_certified(), "{name} fails at depth {depth}");
            if let (Some(lo), Some(hi)) = (r.min_margin, top.min_margin) {
                assert!(lo >= hi - 1e-12, "{name}: margin {lo} at depth {depth} below {hi}");
            }
        }
    }
}

#[test]
fn certified_configs_are_discrete() {
    for (name, text, max) in sources() {
        let (eta, word, n) = match at_depth(&text, max) {
            GroupConfig::Afp(a) => discreteness_eta(&GroupConfigRef::Afp(&a), max),
            GroupConfig::Hnn(h) => discreteness_eta(&GroupConfigRef::Hnn(&h), max),
        };
        assert!(n > 0);
        assert!(eta >= ETA_FLOOR, "{name}: eta {eta} at {word:?}");
    }
}

#[test]
fn extension_translates_are_precisely_invariant() {
    for cfg in [common::hnn(common::shipped("order_two_hnn.json")), common::hnn(common::build(common::COMMUTING))] {
        let p = hnn_precise_invariance(&cfg, INVARIANCE_MAX_LEN).unwrap();
        assert!(p.checked > 0);
        assert!(p.violations.is_empty(), "{:?}", &p.violations[..p.violations.len().min(5)]);
        let b = hnn_boundary_invariance(&cfg, INVARIANCE_MAX_LEN).unwrap();
        assert!(b.checked > 0);
        assert!(b.violations.is_empty(), "{:?}", &b.violations[..b.violations.len().min(5)]);
    }
}

/// `g` moves the approximate factor limit set off itself by at least the
/// separation threshold, for enumerated `g` outside the factor spelled with
/// single generator letters. High powers push images toward the factor's
/// fixed points faster than double precision resolves, so they are skipped.
#[test]
fn factor_limit_sets_are_moved_off_themselves() {
    let cfg = common::afp(common::build(&common::schottky()));
    let g = &cfg.group;
    let forms = g.enumerate(SCHOTTKY_DEPTH);
    for i in 1..=2u8 {
        let fac = g.factor(i);
        let lambda = approx_limit_points(&fac.catalogue, fac.closed);
        assert!(!lambda.is_empty());
        let mut checked = 0;
        for w in &forms {
            if w.is_empty() || (w.len() == 1 && w.syllables[0].factor == i) {
                continue;
            }
            if w.word().iter().any(|(_, e)| e.abs() != 1) {
                continue;
            }
            let m = w.evaluate();
            let gap = lambda
                .iter()
                .flat_map(|(p, _)| lambda.iter().map(move |(q, _)| chordal_distance(&m.apply(p), q)))
                .fold(f64::INFINITY, f64::min);
            assert!(gap >= SEPARATION_DELTA, "{w}: gap {gap:e} moving Lambda(G_{i})");
            checked += 1;
        }
        assert!(checked > 0);
    }
}
