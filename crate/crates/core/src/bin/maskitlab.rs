use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use maskitlab::diagnostics::{
    classify_afp_element, classify_hnn_element, convergence_sequence_probe, DiagnosticsError, DEFAULT_PROBE_GRID,
    MIN_PROBE_MAPS,
};
use maskitlab::limitset::{
    base_regions, build_cover, code_point, conical_witness, contraction_stats, limit_point_cloud, render, ImageSpec,
    LimitSetError, DEFAULT_MAX_CAPS,
};
use maskitlab::pingpong::{verify, ConfigFile, GroupConfig, VerifyOptions};
use maskitlab::sphere::{MoebiusMap, SpherePoint};
use maskitlab::words::{parse_word, HnnFilter};

const EXIT_FAILED: u8 = 2;
const EXIT_NOT_PROVED: u8 = 3;
const EXIT_USAGE: u8 = 4;

#[derive(Parser)]
#[command(name = "maskitlab", version, about = "Ping-pong verification and limit sets for Moebius groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON group configuration.
    #[arg(long)]
    config: PathBuf,
    /// Word-length depth (overrides the config).
    #[arg(long)]
    depth: Option<usize>,
    /// Required containment margin in radians (overrides the config).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Output file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized witness search.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the ping-pong conditions and print a report.
    Verify(Common),
    /// List normal forms up to the depth, one JSON object per line.
    Enumerate(Common),
    /// Build the nested cover and print contraction statistics.
    Cover {
        #[command(flatten)]
        common: Common,
        /// Also list every cap.
        #[arg(long)]
        caps: bool,
    },
    /// Code a point by nested translates and look for a conical witness.
    Code {
        #[command(flatten)]
        common: Common,
        /// `re,im`, a real number, or `inf`.
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
    /// Classify words (all forms up to the depth when none are given).
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        word: Vec<String>,
    },
    /// Probe the powers of a word for source/sink dynamics.
    Probe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        word: String,
    },
    /// Render the limit-point cloud as a binary PPM.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 2, value_names = ["W", "H"])]
        image: Option<Vec<usize>>,
        #[arg(long, num_args = 4, value_names = ["X0", "Y0", "X1", "Y1"], allow_hyphen_values = true)]
        window: Option<Vec<f64>>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl ToString) -> Failure {
    Failure { code: EXIT_USAGE, message: message.to_string() }
}

fn load(common: &Common) -> Result<GroupConfig, Failure> {
    let mut file = ConfigFile::load(&common.config).map_err(usage)?;
    if let Some(d) = common.depth {
        if d < file.depth {
            eprintln!("warning: --depth {d} is below the configured depth {}", file.depth);
        } else if d != file.depth {
            eprintln!("warning: --depth {d} overrides the configured depth {}", file.depth);
        }
        file.depth = d;
    }
    if let Some(e) = common.epsilon {
        if e < file.epsilon {
            eprintln!("warning: --epsilon {e} is weaker than the configured margin {}", file.epsilon);
        } else if e != file.epsilon {
            eprintln!("warning: --epsilon {e} overrides the configured margin {}", file.epsilon);
        }
        file.epsilon = e;
    }
    let cfg = file.build().map_err(usage)?;
    for w in &cfg.common().warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn emit(common: &Common, bytes: &[u8]) -> Result<(), Failure> {
    match &common.out {
        Some(p) => fs::write(p, bytes).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => io::stdout().write_all(bytes).map_err(|e| usage(e.to_string())),
    }
}

fn emit_json(common: &Common, v: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(v).expect("serializable");
    text.push('\n');
    emit(common, text.as_bytes())
}

fn parse_point(text: &str) -> Result<SpherePoint, Failure> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("inf") || t == "∞" {
        return Ok(SpherePoint::infinity());
    }
    let parts: Vec<&str> = t.split(',').collect();
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| usage(format!("bad point {text:?}")));
    match parts.as_slice() {
        [re] => Ok(SpherePoint::from_re_im(num(re)?, 0.0)),
        [re, im] => Ok(SpherePoint::from_re_im(num(re)?, num(im)?)),
        _ => Err(usage(format!("bad point {text:?}"))),
    }
}

fn limitset_failure(e: LimitSetError) -> Failure {
    match e {
        LimitSetError::NestingViolation { depth, index, margin } => Failure {
            code: EXIT_FAILED,
            message: json!({"error": "nesting-violation", "depth": depth, "index": index, "margin": margin})
                .to_string(),
        },
        other => usage(other),
    }
}

fn word_map(cfg: &GroupConfig, text: &str) -> Result<MoebiusMap, Failure> {
    let w = parse_word(text).map_err(usage)?;
    match cfg {
        GroupConfig::Afp(a) => Ok(a.group.from_word(&w).map_err(usage)?.evaluate()),
        GroupConfig::Hnn(h) => Ok(h.group.evaluate(&h.group.reduce_word(&w).map_err(usage)?)),
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Verify(common) => {
            let cfg = load(&common)?;
            let report = verify(&cfg, &VerifyOptions { seed: common.seed }).map_err(usage)?;
            emit_json(&common, &serde_json::to_value(&report).expect("serializable"))?;
            Ok(report.exit_code() as u8)
        }
        Command::Enumerate(common) => {
            let cfg = load(&common)?;
            let depth = cfg.common().depth;
            let mut out = String::new();
            match &cfg {
                GroupConfig::Afp(a) => {
                    for f in a.group.enumerate(depth) {
                        let line =
                            json!({"length": f.len(), "form": f.to_string(), "word": f.word(), "type": f.form_type()});
                        out.push_str(&line.to_string());
                        out.push('\n');
                    }
                }
                GroupConfig::Hnn(h) => {
                    for f in h.group.enumerate(depth, HnnFilter::All) {
                        let line =
                            json!({"length": f.len(), "form": f.to_string(), "word": f.word(), "type": f.form_type()});
                        out.push_str(&line.to_string());
                        out.push('\n');
                    }
                }
            }
            emit(&common, out.as_bytes())?;
            Ok(0)
        }
        Command::Cover { common, caps } => {
            let cfg = load(&common)?;
            let depth = cfg.common().depth;
            let cover = build_cover(&cfg, depth, DEFAULT_MAX_CAPS).map_err(limitset_failure)?;
            let stats = contraction_stats(&cover).map_err(limitset_failure)?;
            let mut v = json!({
                "name": cfg.common().name,
                "depth": depth,
                "counts": cover.levels.iter().map(|l| l.len()).collect::<Vec<_>>(),
                "stats": stats,
            });
            if caps {
                let lines: Vec<Value> =
                    cover.json_lines().lines().map(|l| serde_json::from_str(l).expect("own output")).collect();
                v["caps"] = Value::Array(lines);
            }
            emit_json(&common, &v)?;
            Ok(0)
        }
        Command::Code { common, point } => {
            let cfg = load(&common)?;
            let x = parse_point(&point)?;
            let coding = code_point(&cfg, &x, cfg.common().depth).map_err(limitset_failure)?;
            let conical = match conical_witness(&cfg, &x, &coding, cfg.common().j_bound) {
                Ok(w) => serde_json::to_value(&w).expect("serializable"),
                Err(e) => json!({"verdict": "no-evidence", "reason": e.to_string()}),
            };
            let v = json!({
                "name": cfg.common().name,
                "syllables": coding.syllables(),
                "coding": coding,
                "conical": conical,
            });
            emit_json(&common, &v)?;
            Ok(0)
        }
        Command::Classify { common, word } => {
            let cfg = load(&common)?;
            let depth = cfg.common().depth;
            let mut out = String::new();
            let mut all_agree = true;
            let verdicts = match &cfg {
                GroupConfig::Afp(a) => {
                    let forms = if word.is_empty() {
                        a.group.enumerate(depth).into_iter().filter(|f| !f.is_identity()).collect()
                    } else {
                        word.iter()
                            .map(|t| a.group.from_word(&parse_word(t)?))
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(usage)?
                    };
                    forms.iter().map(|f| classify_afp_element(a, f)).collect::<Result<Vec<_>, _>>()
                }
                GroupConfig::Hnn(h) => {
                    let forms = if word.is_empty() {
                        h.group.enumerate(depth, HnnFilter::All).into_iter().filter(|f| !f.is_identity()).collect()
                    } else {
                        word.iter()
                            .map(|t| h.group.reduce_word(&parse_word(t)?))
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(usage)?
                    };
                    forms.iter().map(|f| classify_hnn_element(h, f)).collect::<Result<Vec<_>, _>>()
                }
            }
            .map_err(usage)?;
            for v in verdicts {
                all_agree &= v.agreement;
                out.push_str(&serde_json::to_string(&v).expect("serializable"));
                out.push('\n');
            }
            emit(&common, out.as_bytes())?;
            Ok(if all_agree { 0 } else { EXIT_FAILED })
        }
        Command::Probe { common, word } => {
            let cfg = load(&common)?;
            let g = word_map(&cfg, &word)?;
            let n = cfg.common().depth.max(MIN_PROBE_MAPS) as i32;
            let maps: Vec<MoebiusMap> = (1..=n).map(|k| g.pow(k)).collect();
            match convergence_sequence_probe(&maps, DEFAULT_PROBE_GRID) {
                Ok(r) => {
                    emit_json(&common, &json!({"word": word, "maps": n, "probe": r}))?;
                    Ok(0)
                }
                Err(DiagnosticsError::NoConvergenceDetected { final_spread }) => {
                    emit_json(
                        &common,
                        &json!({"word": word, "maps": n, "error": "no-convergence-detected", "final_spread": final_spread}),
                    )?;
                    Ok(EXIT_NOT_PROVED)
                }
                Err(e) => Err(usage(e)),
            }
        }
        Command::Render { common, image, window } => {
            let cfg = load(&common)?;
            let mut spec = ImageSpec::default();
            if let Some(wh) = image {
                if wh[0] == 0 || wh[1] == 0 {
                    return Err(usage("image size must be positive"));
                }
                spec.width = wh[0];
                spec.height = wh[1];
            }
            if let Some(w) = window {
                if !(w[2] > w[0] && w[3] > w[1]) {
                    return Err(usage("window needs x0 < x1 and y0 < y1"));
                }
                spec.window = [w[0], w[1], w[2], w[3]];
            }
            let cloud = limit_point_cloud(&cfg, cfg.common().depth, DEFAULT_MAX_CAPS).map_err(limitset_failure)?;
            emit(&common, &render(&cloud, &base_regions(&cfg), &spec))?;
            Ok(0)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("MASKITLAB_THREADS") {
        let n: usize = v.parse().map_err(|_| usage(format!("MASKITLAB_THREADS={v:?} is not a number")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(usage)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            if f.code == EXIT_USAGE {
                eprintln!("error: {}", f.message);
            } else {
                println!("{}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
