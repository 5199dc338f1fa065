//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use maskitlab::pingpong::{AfpConfig, ConfigFile, GroupConfig, HnnConfig};

pub fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn shipped(name: &str) -> GroupConfig {
    maskitlab::pingpong::load_config(&config_path(name)).expect("shipped config builds")
}

pub fn build(text: &str) -> GroupConfig {
    ConfigFile::from_json(text).expect("fixture parses").build().expect("fixture builds")
}

pub fn afp(g: GroupConfig) -> AfpConfig {
    match g {
        GroupConfig::Afp(a) => a,
        _ => panic!("expected an amalgam"),
    }
}

pub fn hnn(g: GroupConfig) -> HnnConfig {
    match g {
        GroupConfig::Hnn(h) => h,
        _ => panic!("expected an extension"),
    }
}

/// Two Klein four-groups `<a, u>` and `<b, v>` amalgamated along `a = b = -z`.
pub const KLEIN: &str = r#"{
    "mode": "afp", "name": "klein",
    "generators": {
        "G1": {"a": [[0,1],[0,0],[0,0],[0,-1]], "u": [[0,0],[1,0],[1,0],[0,0]]},
        "G2": {"b": [[0,1],[0,0],[0,0],[0,-1]], "v": [[0,0],[1,0],[16,0],[0,0]]}
    },
    "j": {"kind": "word-list", "elements": [[["a", 1]]]},
    "B1": {"circle_center": [0,0], "radius": 0.5, "side": "inside"},
    "B2": {"circle_center": [0,0], "radius": 1.0, "side": "outside"},
    "depth": 6
}"#;

/// `<a, f | f a f^-1 = a>` with `a = -z`, `f = 4z`.
pub const COMMUTING: &str = r#"{
    "mode": "hnn", "name": "commuting",
    "generators": {"G0": {"a": [[0,1],[0,0],[0,0],[0,-1]]}},
    "f": [[2,0],[0,0],[0,0],[0.5,0]],
    "j1": {"kind": "word-list", "elements": [[["a", 1]]]},
    "j_minus1": {"kind": "word-list", "elements": [[["a", 1]]]},
    "B1": {"circle_center": [0,0], "radius": 2.0, "side": "outside"},
    "B_minus1": {"circle_center": [0,0], "radius": 0.5, "side": "inside"},
    "witness": [1, 0],
    "depth": 6
}"#;

/// Classical Schottky pair: `s` fixes `+-2`, `r` fixes `+-2i`, each
/// region is the pair of slightly enlarged isometric disks of the other
/// factor.
pub fn schottky() -> String {
    let (ch, sh) = (3.0f64.cosh(), 3.0f64.sinh());
    let (cen, rad) = (2.0 / 3.0f64.tanh(), 1.05 * 2.0 / sh);
    format!(
        r#"{{
    "mode": "afp", "name": "schottky",
    "generators": {{
        "G1": {{"s": [[{ch},0],[{b},0],[{c},0],[{ch},0]]}},
        "G2": {{"r": [[{ch},0],[0,{b}],[0,{mc}],[{ch},0]]}}
    }},
    "j": {{"kind": "trivial"}},
    "B1": [{{"circle_center": [0,{cen}], "radius": {rad}, "side": "inside"}},
           {{"circle_center": [0,{mcen}], "radius": {rad}, "side": "inside"}}],
    "B2": [{{"circle_center": [{cen},0], "radius": {rad}, "side": "inside"}},
           {{"circle_center": [{mcen},0], "radius": {rad}, "side": "inside"}}],
    "depth": 4
}}"#,
        b = 2.0 * sh,
        c = sh / 2.0,
        mc = -sh / 2.0,
        mcen = -cen,
    )
}
