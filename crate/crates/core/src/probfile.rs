//! Line-oriented problem files.
//!
//! A problem file declares the system, the constraint sets, degree bounds and
//! algorithm parameters. Keys are one per line; `#` starts a comment. Repeated
//! keys (`f`, `G`, `w`, `center`) accumulate in order; `|` separates row
//! entries. Unknown keys are rejected.

use thiserror::Error;

use crate::certs::{AlgoParams, DegreeTable, InitOverride, ProblemSpec};
use crate::poly::{parse_polynomial, Point, PolyError, PolyMatrix, PolyVector, Polynomial};

#[derive(Debug, Error)]
pub enum ProbFileError {
    #[error("problem file error at line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("problem file error: {0}")]
    General(String),
}

fn err(line: usize, msg: impl Into<String>) -> ProbFileError {
    ProbFileError::Line { line, msg: msg.into() }
}

#[derive(Default)]
struct Builder {
    varnames: Option<Vec<String>>,
    f: Vec<Polynomial>,
    g_rows: Vec<Vec<Polynomial>>,
    w: Vec<Polynomial>,
    r: Option<Polynomial>,
    l: Option<Polynomial>,
    equilibrium: Option<Vec<f64>>,
    eps_s1: Option<f64>,
    centers: Vec<(Vec<f64>, f64)>,
    degrees: std::collections::BTreeMap<String, (u32, bool)>,
    max_outer: Option<usize>,
    threshold: Option<f64>,
    seed: Option<u64>,
    coeff_bound: Option<f64>,
    init_s1: Option<Polynomial>,
    init_p: Option<Vec<Polynomial>>,
    init_pm1: Option<Vec<Polynomial>>,
    init_rho: Option<f64>,
}

/// Parse a problem file into a [`ProblemSpec`].
pub fn parse_problem(text: &str) -> Result<ProblemSpec, ProbFileError> {
    let mut b = Builder::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = match line.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (line, ""),
        };
        let names = b.varnames.clone();
        let parse_poly = |text: &str| -> Result<Polynomial, ProbFileError> {
            let names = names
                .as_ref()
                .ok_or_else(|| err(line_no, "`variables` must be declared first"))?;
            parse_polynomial(text, names).map_err(|e| match e {
                PolyError::Parse { col, msg, .. } => err(line_no, format!("column {col}: {msg}")),
                other => err(line_no, other.to_string()),
            })
        };
        let parse_floats = |text: &str| -> Result<Vec<f64>, ProbFileError> {
            text.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| err(line_no, format!("bad number `{t}`"))))
                .collect()
        };
        match key {
            "variables" => {
                if b.varnames.is_some() {
                    return Err(err(line_no, "duplicate `variables`"));
                }
                let names: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                if names.is_empty() {
                    return Err(err(line_no, "at least one variable is required"));
                }
                b.varnames = Some(names);
            }
            "f" => b.f.push(parse_poly(rest)?),
            "G" => {
                let row: Result<Vec<Polynomial>, _> =
                    rest.split('|').map(|e| parse_poly(e.trim())).collect();
                b.g_rows.push(row?);
            }
            "w" => b.w.push(parse_poly(rest)?),
            "r" => {
                if b.r.is_some() {
                    return Err(err(line_no, "duplicate `r`"));
                }
                b.r = Some(parse_poly(rest)?);
            }
            "l" => {
                if b.l.is_some() {
                    return Err(err(line_no, "duplicate `l`"));
                }
                b.l = Some(parse_poly(rest)?);
            }
            "equilibrium" => b.equilibrium = Some(parse_floats(rest)?),
            "eps_s1" => {
                b.eps_s1 = Some(
                    rest.parse().map_err(|_| err(line_no, format!("bad number `{rest}`")))?,
                )
            }
            "center" => {
                let (coords, value) = rest
                    .split_once('|')
                    .ok_or_else(|| err(line_no, "expected `center <coords...> | <value>`"))?;
                let coords = parse_floats(coords)?;
                let value: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| err(line_no, format!("bad number `{}`", value.trim())))?;
                b.centers.push((coords, value));
            }
            "degree" => {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() < 2 || toks.len() > 3 {
                    return Err(err(line_no, "expected `degree <name> <max> [even]`"));
                }
                let name = toks[0].to_string();
                let max: u32 = toks[1]
                    .parse()
                    .map_err(|_| err(line_no, format!("bad degree `{}`", toks[1])))?;
                let even = match toks.get(2) {
                    None => false,
                    Some(&"even") => true,
                    Some(other) => return Err(err(line_no, format!("unknown modifier `{other}`"))),
                };
                if !matches!(name.as_str(), "V" | "B" | "s1" | "s2" | "s3" | "s4" | "p" | "pm1") {
                    return Err(err(line_no, format!("unknown degree entry `{name}`")));
                }
                if b.degrees.insert(name.clone(), (max, even)).is_some() {
                    return Err(err(line_no, format!("duplicate degree entry `{name}`")));
                }
            }
            "max_outer" => {
                b.max_outer =
                    Some(rest.parse().map_err(|_| err(line_no, format!("bad integer `{rest}`")))?)
            }
            "threshold" => {
                b.threshold =
                    Some(rest.parse().map_err(|_| err(line_no, format!("bad number `{rest}`")))?)
            }
            "seed" => {
                b.seed =
                    Some(rest.parse().map_err(|_| err(line_no, format!("bad integer `{rest}`")))?)
            }
            "coeff_bound" => {
                b.coeff_bound =
                    Some(rest.parse().map_err(|_| err(line_no, format!("bad number `{rest}`")))?)
            }
            "init_s1" => b.init_s1 = Some(parse_poly(rest)?),
            "init_p" => {
                let entries: Result<Vec<Polynomial>, _> =
                    rest.split('|').map(|e| parse_poly(e.trim())).collect();
                b.init_p = Some(entries?);
            }
            "init_pm1" => {
                let entries: Result<Vec<Polynomial>, _> =
                    rest.split('|').map(|e| parse_poly(e.trim())).collect();
                b.init_pm1 = Some(entries?);
            }
            "init_rho" => {
                b.init_rho =
                    Some(rest.parse().map_err(|_| err(line_no, format!("bad number `{rest}`")))?)
            }
            other => return Err(err(line_no, format!("unknown key `{other}`"))),
        }
    }
    build(b)
}

fn build(b: Builder) -> Result<ProblemSpec, ProbFileError> {
    let general = |msg: String| ProbFileError::General(msg);
    let varnames = b.varnames.ok_or_else(|| general("missing `variables`".into()))?;
    let n = varnames.len();
    if b.f.len() != n {
        return Err(general(format!("expected {n} `f` rows, found {}", b.f.len())));
    }
    if b.g_rows.len() != n {
        return Err(general(format!("expected {n} `G` rows, found {}", b.g_rows.len())));
    }
    let m = b.g_rows[0].len();
    if m == 0 || b.g_rows.iter().any(|r| r.len() != m) {
        return Err(general("all `G` rows must have the same positive number of entries".into()));
    }
    let r = b.r.ok_or_else(|| general("missing `r` (operating region)".into()))?;
    if b.centers.len() != b.w.len() {
        return Err(general(format!(
            "{} `center` entries for {} `w` constraints",
            b.centers.len(),
            b.w.len()
        )));
    }
    let xstar = match b.equilibrium {
        Some(coords) => {
            if coords.len() != n {
                return Err(general("equilibrium dimension mismatch".into()));
            }
            Point::new(coords)
        }
        None => Point::origin(n),
    };
    let mut centers = Vec::with_capacity(b.centers.len());
    for (coords, value) in b.centers {
        if coords.len() != n {
            return Err(general("center dimension mismatch".into()));
        }
        centers.push((Point::new(coords), value));
    }
    let deg = |name: &str| -> Result<(u32, bool), ProbFileError> {
        b.degrees
            .get(name)
            .copied()
            .ok_or_else(|| general(format!("missing `degree {name} ...`")))
    };
    let (v_deg, v_even) = deg("V")?;
    let (b_deg, b_even) = deg("B")?;
    let degrees = DegreeTable {
        v: v_deg,
        b: b_deg,
        s1: deg("s1")?.0,
        s2: deg("s2")?.0,
        s3: deg("s3")?.0,
        s4: deg("s4")?.0,
        p: deg("p")?.0,
        pm1: deg("pm1")?.0,
        v_even,
        b_even,
    };
    let defaults = AlgoParams::default();
    let l = b.l.unwrap_or_else(|| ProblemSpec::default_l(n, &xstar));
    if let Some(p) = &b.init_p {
        if p.len() != m {
            return Err(general(format!("init_p must have {m} entries")));
        }
    }
    if let Some(pm1) = &b.init_pm1 {
        if pm1.len() != centers.len() {
            return Err(general(format!("init_pm1 must have {} entries", centers.len())));
        }
    }
    Ok(ProblemSpec {
        varnames,
        f: PolyVector::new(b.f),
        g: PolyMatrix::new(n, m, b.g_rows.into_iter().flatten().collect()),
        w: b.w,
        r,
        l,
        xstar,
        eps_s1: b.eps_s1.unwrap_or(1e-3),
        centers,
        degrees,
        algo: AlgoParams {
            max_outer: b.max_outer.unwrap_or(defaults.max_outer),
            threshold: b.threshold.unwrap_or(defaults.threshold),
            seed: b.seed.unwrap_or(defaults.seed),
            coeff_bound: b.coeff_bound.unwrap_or(defaults.coeff_bound),
        },
        init: InitOverride { s1: b.init_s1, p: b.init_p, pm1: b.init_pm1, rho: b.init_rho },
    })
}
