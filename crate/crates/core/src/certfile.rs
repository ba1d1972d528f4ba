//! Versioned line-oriented certificate files.
//!
//! The format is plain text with explicit section headers so files diff and
//! hash stably. Floating-point values are written in shortest round-trip
//! notation; parsing reproduces every `f64` bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::certs::{CertMeta, CertificateSet, SosWitness};
use crate::poly::{Monomial, Point, Polynomial};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CertFileError {
    #[error("certificate parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("certificate format version {0} is not supported")]
    Version(u32),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A certificate plus the binding to the problem file it was produced from.
#[derive(Debug, Clone)]
pub struct CertificateFile {
    pub problem_hash: String,
    pub tool_version: String,
    pub cert: CertificateSet,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_poly(out: &mut String, name: &str, p: &Polynomial) {
    writeln!(out, "poly {} {}", name, p.num_terms()).unwrap();
    for (m, c) in p.terms() {
        write!(out, "term").unwrap();
        for e in m.exponents() {
            write!(out, " {e}").unwrap();
        }
        writeln!(out, " {c:?}").unwrap();
    }
}

/// Serialize a certificate set bound to a problem hash.
pub fn write_certificate(cert: &CertificateSet, problem_hash: &str) -> String {
    let nvars = cert.v.nvars();
    let mut out = String::new();
    writeln!(out, "soscert-certificate {FORMAT_VERSION}").unwrap();
    writeln!(out, "problem_hash {problem_hash}").unwrap();
    writeln!(out, "tool_version {}", crate::TOOL_VERSION).unwrap();
    writeln!(out, "nvars {nvars}").unwrap();
    writeln!(out, "ninputs {}", cert.p.len()).unwrap();
    writeln!(out, "ncbf {}", cert.b.len()).unwrap();
    writeln!(out, "iteration {}", cert.meta.iteration).unwrap();
    writeln!(out, "cost {:?}", cert.meta.cost).unwrap();
    writeln!(out, "step1_inner {}", cert.meta.step1_inner_iters).unwrap();
    writeln!(out, "step2_inner {}", cert.meta.step2_inner_iters).unwrap();
    write!(out, "eps {}", cert.eps.len()).unwrap();
    for e in &cert.eps {
        write!(out, " {e:?}").unwrap();
    }
    out.push('\n');

    write_poly(&mut out, "V", &cert.v);
    for (i, b) in cert.b.iter().enumerate() {
        write_poly(&mut out, &format!("B{}", i + 1), b);
    }
    write_poly(&mut out, "s1", &cert.s1);
    write_poly(&mut out, "s2", &cert.s2);
    for (i, s) in cert.s3.iter().enumerate() {
        write_poly(&mut out, &format!("s3_{}", i + 1), s);
    }
    for (i, s) in cert.s4.iter().enumerate() {
        write_poly(&mut out, &format!("s4_{}", i + 1), s);
    }
    for (k, p) in cert.p.iter().enumerate() {
        write_poly(&mut out, &format!("p{}", k + 1), p);
    }
    for (i, p) in cert.pm1.iter().enumerate() {
        write_poly(&mut out, &format!("pm1_{}", i + 1), p);
    }

    for w in &cert.witnesses {
        writeln!(out, "witness {}", w.name).unwrap();
        write!(out, "center").unwrap();
        for c in w.center.coords() {
            write!(out, " {c:?}").unwrap();
        }
        out.push('\n');
        writeln!(out, "basis {}", w.basis.len()).unwrap();
        for m in &w.basis {
            write!(out, "mono").unwrap();
            for e in m.exponents() {
                write!(out, " {e}").unwrap();
            }
            out.push('\n');
        }
        for i in 0..w.gram.nrows() {
            write!(out, "gramrow").unwrap();
            for j in 0..w.gram.ncols() {
                write!(out, " {:?}", w.gram[(i, j)]).unwrap();
            }
            out.push('\n');
        }
        write_poly(&mut out, "target", &w.target);
        writeln!(out, "end").unwrap();
    }
    out
}

struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    peeked: Option<(usize, &'a str)>,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        LineReader { lines: text.lines().enumerate(), peeked: None }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        if let Some(p) = self.peeked.take() {
            return Some(p);
        }
        for (i, l) in self.lines.by_ref() {
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Some((i + 1, t));
            }
        }
        None
    }

    fn peek(&mut self) -> Option<(usize, &'a str)> {
        if self.peeked.is_none() {
            self.peeked = self.next();
        }
        self.peeked
    }
}

fn perr(line: usize, msg: impl Into<String>) -> CertFileError {
    CertFileError::Parse { line, msg: msg.into() }
}

fn parse_f64(line: usize, tok: &str) -> Result<f64, CertFileError> {
    tok.parse().map_err(|_| perr(line, format!("bad float `{tok}`")))
}

fn parse_usize(line: usize, tok: &str) -> Result<usize, CertFileError> {
    tok.parse().map_err(|_| perr(line, format!("bad integer `{tok}`")))
}

fn read_poly_block(
    reader: &mut LineReader<'_>,
    nvars: usize,
) -> Result<(String, Polynomial), CertFileError> {
    let (ln, line) = reader.next().ok_or_else(|| perr(0, "unexpected end of file"))?;
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 3 || toks[0] != "poly" {
        return Err(perr(ln, format!("expected `poly <name> <nterms>`, got `{line}`")));
    }
    let name = toks[1].to_string();
    let nterms = parse_usize(ln, toks[2])?;
    let mut terms = Vec::with_capacity(nterms);
    for _ in 0..nterms {
        let (ln, line) = reader.next().ok_or_else(|| perr(0, "unexpected end of file"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != nvars + 2 || toks[0] != "term" {
            return Err(perr(ln, "expected `term <exponents...> <coef>`"));
        }
        let exps: Result<Vec<u32>, _> = toks[1..=nvars]
            .iter()
            .map(|t| t.parse::<u32>().map_err(|_| perr(ln, "bad exponent")))
            .collect();
        let coef = parse_f64(ln, toks[nvars + 1])?;
        terms.push((Monomial::new(exps?), coef));
    }
    Ok((name, Polynomial::from_terms(nvars, terms)))
}

/// Parse a certificate file produced by [`write_certificate`].
pub fn parse_certificate(text: &str) -> Result<CertificateFile, CertFileError> {
    let mut reader = LineReader::new(text);
    let (ln, header) = reader.next().ok_or_else(|| perr(0, "empty file"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 2 || toks[0] != "soscert-certificate" {
        return Err(perr(ln, "not a certificate file"));
    }
    let version: u32 = toks[1].parse().map_err(|_| perr(ln, "bad version"))?;
    if version != FORMAT_VERSION {
        return Err(CertFileError::Version(version));
    }

    let mut problem_hash = String::new();
    let mut tool_version = String::new();
    let mut nvars = 0usize;
    let mut ninputs = 0usize;
    let mut ncbf = 0usize;
    let mut meta = CertMeta::default();
    let mut eps: Vec<f64> = Vec::new();

    // Fixed header fields until the first poly section.
    loop {
        let (ln, line) = reader.peek().ok_or_else(|| perr(0, "truncated header"))?;
        if line.starts_with("poly ") {
            break;
        }
        reader.next();
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "problem_hash" => problem_hash = toks.get(1).unwrap_or(&"").to_string(),
            "tool_version" => tool_version = toks.get(1).unwrap_or(&"").to_string(),
            "nvars" => nvars = parse_usize(ln, toks[1])?,
            "ninputs" => ninputs = parse_usize(ln, toks[1])?,
            "ncbf" => ncbf = parse_usize(ln, toks[1])?,
            "iteration" => meta.iteration = parse_usize(ln, toks[1])?,
            "cost" => meta.cost = parse_f64(ln, toks[1])?,
            "step1_inner" => meta.step1_inner_iters = parse_usize(ln, toks[1])?,
            "step2_inner" => meta.step2_inner_iters = parse_usize(ln, toks[1])?,
            "eps" => {
                let k = parse_usize(ln, toks[1])?;
                if toks.len() != 2 + k {
                    return Err(perr(ln, "eps count mismatch"));
                }
                eps = toks[2..].iter().map(|t| parse_f64(ln, t)).collect::<Result<_, _>>()?;
            }
            other => return Err(perr(ln, format!("unknown header field `{other}`"))),
        }
    }
    if nvars == 0 {
        return Err(perr(ln, "missing nvars"));
    }

    // Named polynomials.
    let mut polys: BTreeMap<String, Polynomial> = BTreeMap::new();
    while matches!(reader.peek(), Some((_, l)) if l.starts_with("poly ")) {
        let (name, p) = read_poly_block(&mut reader, nvars)?;
        polys.insert(name, p);
    }

    let take = |polys: &mut BTreeMap<String, Polynomial>, name: &str| -> Result<Polynomial, CertFileError> {
        polys
            .remove(name)
            .ok_or_else(|| perr(0, format!("missing polynomial `{name}`")))
    };
    let mut cert = CertificateSet {
        v: take(&mut polys, "V")?,
        b: (1..=ncbf)
            .map(|i| take(&mut polys, &format!("B{i}")))
            .collect::<Result<_, _>>()?,
        s1: take(&mut polys, "s1")?,
        s2: take(&mut polys, "s2")?,
        s3: (1..=ncbf)
            .map(|i| take(&mut polys, &format!("s3_{i}")))
            .collect::<Result<_, _>>()?,
        s4: (1..=ncbf)
            .map(|i| take(&mut polys, &format!("s4_{i}")))
            .collect::<Result<_, _>>()?,
        p: (1..=ninputs)
            .map(|k| take(&mut polys, &format!("p{k}")))
            .collect::<Result<_, _>>()?,
        pm1: (1..=ncbf)
            .map(|i| take(&mut polys, &format!("pm1_{i}")))
            .collect::<Result<_, _>>()?,
        eps,
        witnesses: Vec::new(),
        meta,
    };
    if !polys.is_empty() {
        let extra: Vec<String> = polys.keys().cloned().collect();
        return Err(perr(0, format!("unexpected polynomials: {extra:?}")));
    }

    // Witness sections.
    while let Some((ln, line)) = reader.next() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 || toks[0] != "witness" {
            return Err(perr(ln, format!("expected `witness <name>`, got `{line}`")));
        }
        let name = toks[1].to_string();
        let (ln, line) = reader.next().ok_or_else(|| perr(ln, "truncated witness"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks[0] != "center" || toks.len() != nvars + 1 {
            return Err(perr(ln, "expected `center <coords...>`"));
        }
        let center = Point::new(
            toks[1..]
                .iter()
                .map(|t| parse_f64(ln, t))
                .collect::<Result<Vec<f64>, _>>()?,
        );
        let (ln, line) = reader.next().ok_or_else(|| perr(ln, "truncated witness"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks[0] != "basis" || toks.len() != 2 {
            return Err(perr(ln, "expected `basis <k>`"));
        }
        let k = parse_usize(ln, toks[1])?;
        let mut basis = Vec::with_capacity(k);
        for _ in 0..k {
            let (ln, line) = reader.next().ok_or_else(|| perr(ln, "truncated basis"))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks[0] != "mono" || toks.len() != nvars + 1 {
                return Err(perr(ln, "expected `mono <exponents...>`"));
            }
            let exps: Result<Vec<u32>, _> = toks[1..]
                .iter()
                .map(|t| t.parse::<u32>().map_err(|_| perr(ln, "bad exponent")))
                .collect();
            basis.push(Monomial::new(exps?));
        }
        let mut gram = DMatrix::zeros(k, k);
        for i in 0..k {
            let (ln, line) = reader.next().ok_or_else(|| perr(ln, "truncated gram"))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks[0] != "gramrow" || toks.len() != k + 1 {
                return Err(perr(ln, "expected `gramrow <values...>`"));
            }
            for j in 0..k {
                gram[(i, j)] = parse_f64(ln, toks[j + 1])?;
            }
        }
        let (tname, target) = read_poly_block(&mut reader, nvars)?;
        if tname != "target" {
            return Err(perr(0, "witness target section missing"));
        }
        match reader.next() {
            Some((_, "end")) => {}
            other => return Err(perr(other.map_or(0, |(l, _)| l), "expected `end`")),
        }
        cert.witnesses.push(SosWitness { name, basis, center, gram, target });
    }

    Ok(CertificateFile { problem_hash, tool_version, cert })
}
