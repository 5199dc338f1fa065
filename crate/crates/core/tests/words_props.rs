mod common;

use proptest::prelude::*;

use maskitlab::pingpong::{AfpConfig, HnnConfig};
use maskitlab::words::{AfpNormalForm, HnnFilter, HnnNormalForm, Word};

const MATRIX_EQ: f64 = 1e-8;

fn letters(names: &'static [&'static str], max_len: usize) -> impl Strategy<Value = Word> {
    prop::collection::vec((prop::sample::select(names), prop::bool::ANY), 0..=max_len)
        .prop_map(|v| v.into_iter().map(|(n, pos)| (n.to_string(), if pos { 1 } else { -1 })).collect())
}

fn afp_form(cfg: &AfpConfig, w: &Word) -> AfpNormalForm {
    cfg.group.from_word(w).expect("letters are generators")
}

fn hnn_form(cfg: &HnnConfig, w: &Word) -> HnnNormalForm {
    cfg.group.reduce_word(w).expect("letters are generators")
}

fn same_afp(a: &AfpNormalForm, b: &AfpNormalForm) -> bool {
    a.to_string() == b.to_string() && a.evaluate().projective_distance(&b.evaluate()) < MATRIX_EQ
}

thread_local! {
    static DIHEDRAL: AfpConfig = common::afp(common::shipped("dihedral.json"));
    static KLEIN: AfpConfig = common::afp(common::build(common::KLEIN));
    static ORDER_TWO: HnnConfig = common::hnn(common::shipped("order_two_hnn.json"));
    static COMMUTING: HnnConfig = common::hnn(common::build(common::COMMUTING));
}

fn check_reduction_is_normal(cfg: &HnnConfig, w: &Word) -> Result<(), TestCaseError> {
    let g = &cfg.group;
    let once = hnn_form(cfg, w);
    let twice = g.reduce(&g.letters(&once)).unwrap();
    prop_assert_eq!(once.to_string(), twice.to_string());
    prop_assert!(g.validate(&once).is_ok(), "{once} is not a normal form");
    let direct = g.generators_eval(w);
    prop_assert!(g.evaluate(&once).projective_distance(&direct) < MATRIX_EQ);
    Ok(())
}

trait EvalWord {
    fn generators_eval(&self, w: &Word) -> maskitlab::sphere::MoebiusMap;
}

impl EvalWord for maskitlab::words::HnnGroup {
    fn generators_eval(&self, w: &Word) -> maskitlab::sphere::MoebiusMap {
        w.iter().fold(maskitlab::sphere::MoebiusMap::identity(), |m, (n, e)| {
            let g = if n == "f" { self.f } else { *self.g0.generators.get(n).unwrap() };
            m.compose(&g.pow(*e))
        })
    }
}

fn check_group_axioms(cfg: &AfpConfig, u: &Word, v: &Word, w: &Word) -> Result<(), TestCaseError> {
    let g = &cfg.group;
    let (u, v, w) = (afp_form(cfg, u), afp_form(cfg, v), afp_form(cfg, w));
    let left = g.concat(&g.concat(&u, &v).unwrap(), &w).unwrap();
    let right = g.concat(&u, &g.concat(&v, &w).unwrap()).unwrap();
    prop_assert!(same_afp(&left, &right), "{left} vs {right}");
    let prod = u.evaluate().compose(&v.evaluate()).compose(&w.evaluate());
    prop_assert!(left.evaluate().projective_distance(&prod) < MATRIX_EQ);
    let inv = g.invert(&u).unwrap();
    prop_assert!(g.concat(&u, &inv).unwrap().is_identity());
    prop_assert!(g.concat(&inv, &u).unwrap().is_identity());
    prop_assert!(inv.evaluate().projective_distance(&u.evaluate().invert()) < MATRIX_EQ);
    prop_assert!(same_afp(&g.invert(&inv).unwrap(), &u));
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn hnn_reduction_is_idempotent(w in letters(&["a", "f"], 8)) {
        ORDER_TWO.with(|c| check_reduction_is_normal(c, &w))?;
        COMMUTING.with(|c| check_reduction_is_normal(c, &w))?;
    }

    #[test]
    fn amalgam_group_axioms(u in letters(&["u", "v"], 6), v in letters(&["u", "v"], 6), w in letters(&["u", "v"], 6)) {
        DIHEDRAL.with(|c| check_group_axioms(c, &u, &v, &w))?;
    }

    #[test]
    fn amalgam_group_axioms_with_edge_group(
        u in letters(&["a", "u", "b", "v"], 6),
        v in letters(&["a", "u", "b", "v"], 6),
        w in letters(&["a", "u", "b", "v"], 6),
    ) {
        KLEIN.with(|c| check_group_axioms(c, &u, &v, &w))?;
    }
}

fn assert_injective(maps: &[(String, maskitlab::sphere::MoebiusMap)]) {
    for i in 0..maps.len() {
        assert!(!maps[i].1.is_identity(), "{} is trivial", maps[i].0);
        for j in i + 1..maps.len() {
            assert!(maps[i].1.projective_distance(&maps[j].1) > MATRIX_EQ, "{} = {}", maps[i].0, maps[j].0);
        }
    }
}

#[test]
fn amalgam_enumeration_is_one_per_coset_and_injective() {
    for cfg in [common::afp(common::shipped("dihedral.json")), common::afp(common::build(common::KLEIN))] {
        let g = &cfg.group;
        let forms = g.enumerate(6);
        assert!(forms[0].is_identity());
        for f in &forms {
            g.validate(f).unwrap();
        }
        for (i, a) in forms.iter().enumerate() {
            for b in &forms[i + 1..] {
                let q = a.evaluate().invert().compose(&b.evaluate());
                assert!(g.j.member(&q).unwrap().is_none(), "{a} and {b} share a J-coset");
            }
        }
        let maps: Vec<_> = forms.iter().skip(1).map(|f| (f.to_string(), f.evaluate())).collect();
        assert_injective(&maps);
    }
}

#[test]
fn extension_enumeration_types_cosets_and_injectivity() {
    for cfg in [common::hnn(common::shipped("order_two_hnn.json")), common::hnn(common::build(common::COMMUTING))] {
        let g = &cfg.group;
        for i in [1i8, -1] {
            let forms = g.enumerate(5, HnnFilter::Type(i));
            for f in &forms {
                g.validate(f).unwrap();
                assert!(g.has_type(f, i).unwrap(), "{f} is not of type {i}");
            }
            for (x, a) in forms.iter().enumerate() {
                for b in &forms[x + 1..] {
                    if a.len() != b.len() {
                        continue;
                    }
                    let q = g.evaluate(a).invert().compose(&g.evaluate(b));
                    assert!(g.j(i).member(&q).unwrap().is_none(), "{a} and {b} share a J_{i}-coset");
                }
            }
        }
        let all = g.enumerate(5, HnnFilter::All);
        let maps: Vec<_> = all.iter().filter(|f| !f.is_identity()).map(|f| (f.to_string(), g.evaluate(f))).collect();
        assert_injective(&maps);
    }
}
