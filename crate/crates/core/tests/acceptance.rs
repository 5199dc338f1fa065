//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Every tolerance used below is pinned here.

use std::collections::{BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use maskitlab::diagnostics::{classify_afp_element, classify_hnn_element, CombinatorialClass, ElementVerdict};
use maskitlab::limitset::{build_cover, code_point, contraction_stats, limit_point_cloud, DEFAULT_MAX_CAPS};
use maskitlab::pingpong::{
    apply_form_track, discreteness_eta, hnn_boundary_invariance, hnn_precise_invariance, verify, AfpConfig, Form,
    GroupConfig, GroupConfigRef, HnnConfig, VerifyOptions,
};
use maskitlab::sphere::{cap_subset, chordal_distance, FixedPoints, MapClass, SpherePoint};
use maskitlab::words::{AfpNormalForm, HnnFilter, Word};

const ORACLE_MAX_LEN: usize = 6;
const ORACLE_TIME_LIMIT: Duration = Duration::from_secs(60);
const HOMOMORPHISM_PAIRS: usize = 10_000;
const HOMOMORPHISM_MAX_LEN: usize = 6;
const HOMOMORPHISM_TOL: f64 = 1e-9;
const VERIFY_DEPTH: usize = 6;
const TRACK_MAX_LEN: usize = 6;
const DISCRETENESS_MAX_LEN: usize = 8;
const DISCRETENESS_FLOOR: f64 = 1e-3;
const LOXODROMY_MAX_LEN: usize = 8;
const CONTRACTION_DEPTH: usize = 10;
const CONTRACTION_MAX_DIAMETER: f64 = 1e-2;
const CONTRACTION_TIME_LIMIT: Duration = Duration::from_secs(120);
const CODING_DEPTH: usize = 8;
const CODING_PREFIX_DEPTH: usize = 4;
const DIHEDRAL_CLOUD_DEPTH: usize = 10;
const DIHEDRAL_CLOUD_TOL: f64 = 1e-3;
const HNN_CLOUD_DEPTH: usize = 8;
const HNN_CLOUD_MARGIN: f64 = 0.0;
const INVARIANCE_MAX_LEN: usize = 6;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn load(name: &str) -> GroupConfig {
    maskitlab::pingpong::load_config(&config_path(name)).expect("shipped config builds")
}

fn dihedral() -> AfpConfig {
    match load("dihedral.json") {
        GroupConfig::Afp(a) => a,
        _ => unreachable!(),
    }
}

fn order_two() -> HnnConfig {
    match load("order_two_hnn.json") {
        GroupConfig::Hnn(h) => h,
        _ => unreachable!(),
    }
}

/// Single-letter symbols: (generator, +1 or -1).
type Sym = (String, i32);

fn explode(w: &Word) -> Vec<Sym> {
    let mut out = Vec::new();
    for (n, e) in w {
        for _ in 0..e.unsigned_abs() {
            out.push((n.clone(), e.signum()));
        }
    }
    out
}

/// String rewriting applied at every position in every order; the set of
/// irreducible descendants must be a single word.
struct Rewriter {
    rules: Vec<(Vec<Sym>, Vec<Sym>)>,
}

impl Rewriter {
    /// Rules for `x` of order two (`x^-1 -> x`, `x x -> 1`) and for a free
    /// letter `y` (`y y^-1 -> 1`, `y^-1 y -> 1`).
    fn new(order_two: &[&str], free: &[&str]) -> Self {
        let s = |n: &str, e: i32| (n.to_string(), e);
        let mut rules = Vec::new();
        for x in order_two {
            rules.push((vec![s(x, -1)], vec![s(x, 1)]));
            rules.push((vec![s(x, 1), s(x, 1)], vec![]));
        }
        for y in free {
            rules.push((vec![s(y, 1), s(y, -1)], vec![]));
            rules.push((vec![s(y, -1), s(y, 1)], vec![]));
        }
        Rewriter { rules }
    }

    fn normal(&self, w: &[Sym]) -> Result<Vec<Sym>, String> {
        let mut seen: BTreeSet<Vec<Sym>> = BTreeSet::new();
        let mut irreducible: BTreeSet<Vec<Sym>> = BTreeSet::new();
        let mut queue = VecDeque::from([w.to_vec()]);
        while let Some(cur) = queue.pop_front() {
            if !seen.insert(cur.clone()) {
                continue;
            }
            let mut any = false;
            for (lhs, rhs) in &self.rules {
                if lhs.len() > cur.len() {
                    continue;
                }
                for p in 0..=cur.len() - lhs.len() {
                    if cur[p..p + lhs.len()] == lhs[..] {
                        any = true;
                        let mut next = cur[..p].to_vec();
                        next.extend(rhs.iter().cloned());
                        next.extend(cur[p + lhs.len()..].iter().cloned());
                        queue.push_back(next);
                    }
                }
            }
            if !any {
                irreducible.insert(cur);
            }
        }
        if irreducible.len() == 1 {
            Ok(irreducible.into_iter().next().expect("one element"))
        } else {
            Err(format!("{} irreducible descendants", irreducible.len()))
        }
    }
}

fn all_sequences(alphabet: &[Sym], max_len: usize) -> Vec<Vec<Sym>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for a in alphabet {
                let mut v: Vec<Sym> = w.clone();
                v.push(a.clone());
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn alphabet(names: &[&str]) -> Vec<Sym> {
    names.iter().flat_map(|n| [(n.to_string(), 1), (n.to_string(), -1)]).collect()
}

fn afp_fold(cfg: &AfpConfig, w: &[Sym]) -> AfpNormalForm {
    let g = &cfg.group;
    w.iter().fold(AfpNormalForm::default(), |acc, (n, e)| {
        g.concat(&acc, &g.letter(n, *e).expect("known letter")).expect("concat")
    })
}

fn criterion_1() -> Result<String, String> {
    let start = Instant::now();
    let a = dihedral();
    let h = order_two();
    let mut checked = 0usize;
    let rw = Rewriter::new(&["u", "v"], &[]);
    for w in all_sequences(&alphabet(&["u", "v"]), ORACLE_MAX_LEN) {
        let ours = explode(&afp_fold(&a, &w).word());
        let theirs = rw.normal(&w)?;
        if ours != theirs {
            return Err(format!("dihedral {w:?}: ours {ours:?}, rewriter {theirs:?}"));
        }
        checked += 1;
    }
    let rw = Rewriter::new(&["a"], &["f"]);
    for w in all_sequences(&alphabet(&["a", "f"]), ORACLE_MAX_LEN) {
        let letters = h.group.parse_letters(&w).map_err(|e| e.to_string())?;
        let ours = explode(&h.group.reduce(&letters).map_err(|e| e.to_string())?.word());
        let theirs = rw.normal(&w)?;
        if ours != theirs {
            return Err(format!("order-two {w:?}: ours {ours:?}, rewriter {theirs:?}"));
        }
        checked += 1;
    }
    let t = start.elapsed();
    if t > ORACLE_TIME_LIMIT {
        return Err(format!("took {t:?}"));
    }
    Ok(format!("{checked} sequences agree in {:.2}s", t.as_secs_f64()))
}

fn random_sequence(rng: &mut ChaCha8Rng, names: &[&str]) -> Vec<Sym> {
    let n = rng.random_range(0..=HOMOMORPHISM_MAX_LEN);
    (0..n)
        .map(|_| {
            let name = names[rng.random_range(0..names.len())];
            (name.to_string(), if rng.random_bool(0.5) { 1 } else { -1 })
        })
        .collect()
}

fn criterion_2() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let a = dihedral();
    let mut worst: f64 = 0.0;
    for _ in 0..HOMOMORPHISM_PAIRS {
        let u = afp_fold(&a, &random_sequence(&mut rng, &["u", "v"]));
        let v = afp_fold(&a, &random_sequence(&mut rng, &["u", "v"]));
        let uv = a.group.concat(&u, &v).map_err(|e| e.to_string())?;
        worst = worst.max(uv.evaluate().projective_distance(&u.evaluate().compose(&v.evaluate())));
    }
    let h = order_two();
    let g = &h.group;
    for _ in 0..HOMOMORPHISM_PAIRS {
        let reduce = |w: &[Sym]| g.reduce(&g.parse_letters(w).expect("letters")).expect("reduce");
        let u = reduce(&random_sequence(&mut rng, &["a", "f"]));
        let v = reduce(&random_sequence(&mut rng, &["a", "f"]));
        let uv = g.product(&u, &v).map_err(|e| e.to_string())?;
        worst = worst.max(g.evaluate(&uv).projective_distance(&g.evaluate(&u).compose(&g.evaluate(&v))));
    }
    if worst > HOMOMORPHISM_TOL {
        return Err(format!("worst projective distance {worst:e}"));
    }
    Ok(format!("{} pairs per config, worst distance {worst:.1e}", HOMOMORPHISM_PAIRS))
}

fn criterion_3() -> Result<String, String> {
    let opts = VerifyOptions::default();
    let mut notes = Vec::new();
    for name in ["dihedral.json", "order_two_hnn.json"] {
        let cfg = load(name);
        if cfg.common().depth != VERIFY_DEPTH {
            return Err(format!("{name} depth {}", cfg.common().depth));
        }
        let r = verify(&cfg, &opts).map_err(|e| e.to_string())?;
        let m = r.min_margin.unwrap_or(f64::NAN);
        if r.exit_code() != 0 || !(m > 0.0) {
            return Err(format!("{name}: exit {} margin {m}", r.exit_code()));
        }
        notes.push(format!("{name} margin {m:.3e}"));
    }
    for (name, witness) in [("broken.json", "u"), ("wrong_f.json", "f")] {
        let r = verify(&load(name), &opts).map_err(|e| e.to_string())?;
        let found = r.conditions.iter().any(|c| c.witness.as_deref() == Some(witness));
        if r.exit_code() != 2 || !found {
            return Err(format!("{name}: exit {} witness {witness} found {found}", r.exit_code()));
        }
    }
    notes.push("mutants exit 2 with witnesses u, f".into());
    Ok(notes.join("; "))
}

fn criterion_4() -> Result<String, String> {
    let mut count = 0usize;
    let cfg = GroupConfig::Afp(dihedral());
    let GroupConfig::Afp(a) = &cfg else { unreachable!() };
    for f in a.group.enumerate(TRACK_MAX_LEN) {
        let Some((_, j)) = f.form_type() else { continue };
        let t = apply_form_track(&cfg, &Form::Afp(f.clone()), a.region(j)).map_err(|e| format!("{f}: {e}"))?;
        if t.final_location != t.predicted {
            return Err(format!("{f}: ended in {:?}, predicted {:?}", t.final_location, t.predicted));
        }
        count += 1;
    }
    let cfg = GroupConfig::Hnn(order_two());
    let GroupConfig::Hnn(h) = &cfg else { unreachable!() };
    for f in h.group.enumerate(TRACK_MAX_LEN, HnnFilter::All) {
        for k in [1i8, -1] {
            if !h.group.has_type(&f, k).map_err(|e| e.to_string())? {
                continue;
            }
            let start = maskitlab::sphere::Region::single(*h.cap(k));
            let t = apply_form_track(&cfg, &Form::Hnn(f.clone()), &start).map_err(|e| format!("{f} from B{k}: {e}"))?;
            if t.final_location != t.predicted {
                return Err(format!("{f} from B{k}: ended in {:?}, predicted {:?}", t.final_location, t.predicted));
            }
            count += 1;
        }
    }
    Ok(format!("{count} tracks land where predicted"))
}

fn criterion_5() -> Result<String, String> {
    let a = dihedral();
    let h = order_two();
    let mut notes = Vec::new();
    for (label, r) in [("dihedral", GroupConfigRef::Afp(&a)), ("order-two", GroupConfigRef::Hnn(&h))] {
        let (eta, w, n) = discreteness_eta(&r, DISCRETENESS_MAX_LEN);
        if !(eta >= DISCRETENESS_FLOOR) {
            return Err(format!("{label}: {eta:e} at {w:?}"));
        }
        notes.push(format!("{label} min {eta:.3} over {n}"));
    }
    Ok(notes.join("; "))
}

fn loxodromy_disagrees(v: &ElementVerdict) -> bool {
    !v.agreement
        || (v.combinatorial != CombinatorialClass::FactorConjugate
            && (v.numeric != MapClass::Loxodromic || !v.fixed_points_ok))
}

fn criterion_6() -> Result<String, String> {
    let a = dihedral();
    let h = order_two();
    let (mut off, mut bad) = (0usize, Vec::new());
    for f in a.group.enumerate(LOXODROMY_MAX_LEN) {
        if f.is_identity() {
            continue;
        }
        let v = classify_afp_element(&a, &f).map_err(|e| e.to_string())?;
        off += usize::from(v.combinatorial != CombinatorialClass::FactorConjugate);
        if loxodromy_disagrees(&v) {
            bad.push(v.word);
        }
    }
    for f in h.group.enumerate(LOXODROMY_MAX_LEN, HnnFilter::All) {
        if f.is_identity() {
            continue;
        }
        let v = classify_hnn_element(&h, &f).map_err(|e| e.to_string())?;
        off += usize::from(v.combinatorial != CombinatorialClass::FactorConjugate);
        if loxodromy_disagrees(&v) {
            bad.push(v.word);
        }
    }
    if !bad.is_empty() {
        return Err(format!("{} disagreements, first {}", bad.len(), bad[0]));
    }
    Ok(format!("{off} off-factor words loxodromic, zero disagreements"))
}

fn criterion_7() -> Result<String, String> {
    let start = Instant::now();
    let mut notes = Vec::new();
    for name in ["dihedral.json", "order_two_hnn.json"] {
        let cfg = load(name);
        let cover = build_cover(&cfg, CONTRACTION_DEPTH, DEFAULT_MAX_CAPS).map_err(|e| e.to_string())?;
        let stats = contraction_stats(&cover).map_err(|e| e.to_string())?;
        for w in stats.windows(2) {
            if w[1].max_diameter > w[0].max_diameter {
                return Err(format!("{name}: diameter grows at depth {}", w[1].depth));
            }
        }
        let last = stats.last().ok_or("no stats")?;
        if !(last.max_diameter < CONTRACTION_MAX_DIAMETER) {
            return Err(format!("{name}: depth-{} diameter {:e}", last.depth, last.max_diameter));
        }
        notes.push(format!("{name} {:.1e}", last.max_diameter));
    }
    let t = start.elapsed();
    if t > CONTRACTION_TIME_LIMIT {
        return Err(format!("took {t:?}"));
    }
    Ok(format!("{} in {:.2}s", notes.join(", "), t.as_secs_f64()))
}

fn strictly_nested(c: &maskitlab::limitset::CodingSequence) -> bool {
    c.steps.windows(2).all(|w| cap_subset(&w[1].detail.cap, &w[0].detail.cap) > 0.0)
}

fn criterion_8() -> Result<String, String> {
    let cfg = load("dihedral.json");
    let c = code_point(&cfg, &SpherePoint::zero(), CODING_DEPTH).map_err(|e| e.to_string())?;
    let want: Vec<String> = (0..CODING_DEPTH).map(|k| if k % 2 == 0 { "v" } else { "u" }.to_string()).collect();
    if c.syllables() != want || !strictly_nested(&c) {
        return Err(format!("dihedral coding of 0: {:?}", c.syllables()));
    }
    let hcfg = load("order_two_hnn.json");
    let GroupConfig::Hnn(h) = &hcfg else { unreachable!() };
    let Ok(FixedPoints::Loxodromic { attracting, .. }) = h.group.f.fixed_points() else {
        return Err("f is not loxodromic".into());
    };
    let c = code_point(&hcfg, &attracting, CODING_DEPTH).map_err(|e| e.to_string())?;
    // J_1 is trivial, so the coset of f is f itself.
    if c.syllables() != vec!["f".to_string(); CODING_DEPTH] || !strictly_nested(&c) {
        return Err(format!("attractor coding {:?}", c.syllables()));
    }
    let mut prefixes = 0;
    for (cfg, pts) in [
        (&cfg, vec![SpherePoint::zero(), SpherePoint::infinity(), SpherePoint::from_re_im(0.01, 0.02)]),
        (&hcfg, vec![attracting, SpherePoint::from_re_im(3.1, 0.2), SpherePoint::from_re_im(-0.1, 3.05)]),
    ] {
        for x in pts {
            let short = code_point(cfg, &x, CODING_PREFIX_DEPTH).map_err(|e| e.to_string())?;
            let long = code_point(cfg, &x, CODING_DEPTH).map_err(|e| e.to_string())?;
            let (s, l) = (short.syllables(), long.syllables());
            if l.len() < s.len() || l[..s.len()] != s[..] {
                return Err(format!("coding {s:?} is not a prefix of {l:?}"));
            }
            prefixes += 1;
        }
    }
    Ok(format!("alternating and repeated-f codings, {prefixes} prefix checks"))
}

fn criterion_9() -> Result<String, String> {
    let cloud =
        limit_point_cloud(&load("dihedral.json"), DIHEDRAL_CLOUD_DEPTH, DEFAULT_MAX_CAPS).map_err(|e| e.to_string())?;
    let ends = [SpherePoint::zero(), SpherePoint::infinity()];
    let worst = cloud
        .iter()
        .map(|p| ends.iter().map(|e| chordal_distance(p, e)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    if cloud.is_empty() || !(worst <= DIHEDRAL_CLOUD_TOL) {
        return Err(format!("dihedral cloud of {} points, worst {worst:e}", cloud.len()));
    }
    let hcfg = load("order_two_hnn.json");
    let cloud_h = limit_point_cloud(&hcfg, HNN_CLOUD_DEPTH, DEFAULT_MAX_CAPS).map_err(|e| e.to_string())?;
    let root = build_cover(&hcfg, 0, DEFAULT_MAX_CAPS).map_err(|e| e.to_string())?;
    if root.levels[0].len() != 4 {
        return Err(format!("{} depth-0 caps", root.levels[0].len()));
    }
    let mut min_margin = f64::INFINITY;
    for p in &cloud_h {
        let m = root.levels[0].iter().map(|n| n.cap.point_margin(p)).fold(f64::NEG_INFINITY, f64::max);
        min_margin = min_margin.min(m);
    }
    if cloud_h.is_empty() || !(min_margin >= HNN_CLOUD_MARGIN) {
        return Err(format!("hnn cloud margin {min_margin:e}"));
    }
    Ok(format!(
        "dihedral {} points within {worst:.1e}; extension {} points, margin {min_margin:.3e}",
        cloud.len(),
        cloud_h.len()
    ))
}

fn criterion_10() -> Result<String, String> {
    let h = order_two();
    let p = hnn_precise_invariance(&h, INVARIANCE_MAX_LEN).map_err(|e| e.to_string())?;
    let b = hnn_boundary_invariance(&h, INVARIANCE_MAX_LEN).map_err(|e| e.to_string())?;
    if !p.violations.is_empty() || !b.violations.is_empty() {
        return Err(format!("precise {:?}; boundary {:?}", p.violations.first(), b.violations.first()));
    }
    Ok(format!("precise {} pairs, boundary {} checks", p.checked, b.checked))
}

fn run_cli(args: &[String]) -> Result<(i32, Vec<u8>), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_maskitlab"))
        .args(args)
        .env("MASKITLAB_THREADS", "4")
        .output()
        .map_err(|e| e.to_string())?;
    Ok((out.status.code().unwrap_or(-1), out.stdout))
}

fn criterion_11() -> Result<String, String> {
    let dir = std::env::temp_dir().join(format!("maskitlab-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let d = config_path("dihedral.json").display().to_string();
    let h = config_path("order_two_hnn.json").display().to_string();
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<String>>();
    let cases: Vec<Vec<String>> = vec![
        s(&["verify", "--config", &d]),
        s(&["verify", "--config", &h, "--seed", "7"]),
        s(&["enumerate", "--config", &h]),
        s(&["cover", "--config", &h, "--depth", "4", "--caps"]),
        s(&["code", "--config", &d, "--point", "0", "--depth", "6"]),
        s(&["classify", "--config", &d]),
        s(&["probe", "--config", &h, "--word", "f a"]),
        s(&["render", "--config", &h, "--image", "96", "64", "--window", "-1", "-1", "5", "5"]),
    ];
    for case in &cases {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let mut args = case.clone();
            let file = dir.join(format!("out{run}"));
            args.extend(["--out".to_string(), file.display().to_string()]);
            let (code, stdout) = run_cli(&args)?;
            let bytes = std::fs::read(&file).map_err(|e| format!("{case:?}: {e}"))?;
            outputs.push((code, stdout, bytes));
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{case:?} differs between runs"));
        }
        if outputs[0].0 != 0 {
            return Err(format!("{case:?} exited {}", outputs[0].0));
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!("{} subcommand runs byte-identical", cases.len()))
}

type Criterion = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Criterion); 11] = [
        ("word algebra matches exhaustive rewriter", criterion_1),
        ("evaluation is a homomorphism", criterion_2),
        ("shipped configs certify, mutants fail with witnesses", criterion_3),
        ("form tracks land in predicted sets", criterion_4),
        ("enumerated forms stay away from the identity", criterion_5),
        ("off-factor words are loxodromic", criterion_6),
        ("covers contract", criterion_7),
        ("codings", criterion_8),
        ("limit-point clouds are localized", criterion_9),
        ("precise and boundary invariance", criterion_10),
        ("subcommands are deterministic", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
