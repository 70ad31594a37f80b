//! SDPA sparse format (`.dat-s`) in homogenized max-margin form.
//!
//! Variables are the problem scalars followed by the margin `t`; the objective
//! minimizes `−t`. Block `b` reads `C_b + Σ x_i A_{b,i} − t I ⪰ 0`, stored as
//! `F0 = −C_b`, `F_i = A_{b,i}`, `F_t = −I`. A final 1×1 LP block holds
//! `1 − t ≥ 0` so that external solvers see a bounded problem. Variable names,
//! block names and strictness shifts travel in `*` comment lines; files without
//! them import as plain SDPA problems (one scalar variable per SDPA variable,
//! non-strict blocks). Numbers use Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every coefficient bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::lmi::{Block, LmiError, LmiProblem, SparseSym, VarKind, Variable};

#[derive(Debug, Error)]
pub enum SdpaError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("SDPA parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Lmi(#[from] LmiError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> SdpaError {
    SdpaError::Parse { line, msg: msg.into() }
}

/// Renders a problem as SDPA text.
pub fn write_sdpa(p: &LmiProblem) -> String {
    let np = p.num_scalars();
    let nb = p.blocks().len();
    let mut s = String::new();
    let _ = writeln!(s, "* covlmi max-margin export: minimize -t s.t. C_b + sum x_i A_b,i - t I >= 0, t <= 1");
    for v in p.variables() {
        match v.kind {
            VarKind::Symmetric(d) => {
                let _ = writeln!(s, "* var {} sym {d}", v.name);
            }
            VarKind::Full(r, c) => {
                let _ = writeln!(s, "* var {} full {r} {c}", v.name);
            }
        }
    }
    for b in p.blocks() {
        let _ = writeln!(s, "* block {} strict {} eps {}", b.name, u8::from(b.strict), b.eps);
    }
    let _ = writeln!(s, "* tcap {}", nb + 1);
    let _ = writeln!(s, "{}", np + 1);
    let _ = writeln!(s, "{}", nb + 1);
    let sizes: Vec<String> = p.blocks().iter().map(|b| b.dim.to_string()).chain(["-1".to_string()]).collect();
    let _ = writeln!(s, "{}", sizes.join(" "));
    let obj: Vec<&str> = (0..np).map(|_| "0").chain(["-1"]).collect();
    let _ = writeln!(s, "{}", obj.join(" "));
    for (bi, b) in p.blocks().iter().enumerate() {
        for &(i, j, v) in &b.constant.entries {
            let _ = writeln!(s, "0 {} {} {} {}", bi + 1, i + 1, j + 1, -v);
        }
        for (k, c) in b.coeffs.iter().enumerate() {
            for &(i, j, v) in &c.entries {
                let _ = writeln!(s, "{} {} {} {} {}", k + 1, bi + 1, i + 1, j + 1, v);
            }
        }
        for i in 0..b.dim {
            let _ = writeln!(s, "{} {} {} {} -1", np + 1, bi + 1, i + 1, i + 1);
        }
    }
    let _ = writeln!(s, "0 {} 1 1 -1", nb + 1);
    let _ = writeln!(s, "{} {} 1 1 -1", np + 1, nb + 1);
    s
}

pub fn export_sdpa(p: &LmiProblem, path: impl AsRef<Path>) -> Result<(), SdpaError> {
    std::fs::write(path, write_sdpa(p))?;
    Ok(())
}

pub fn import_sdpa(path: impl AsRef<Path>) -> Result<LmiProblem, SdpaError> {
    read_sdpa(&std::fs::read_to_string(path)?)
}

struct Meta {
    vars: Vec<(String, VarKind)>,
    blocks: Vec<(String, bool, f64)>,
    tcap: Option<usize>,
}

fn parse_meta(line_no: usize, body: &str, meta: &mut Meta) -> Result<(), SdpaError> {
    let toks: Vec<&str> = body.split_whitespace().collect();
    let num = |i: usize| -> Result<usize, SdpaError> {
        toks.get(i)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(line_no, format!("bad metadata: {body}")))
    };
    match toks.first().copied() {
        Some("var") if toks.len() >= 4 => {
            let kind = match toks[2] {
                "sym" => VarKind::Symmetric(num(3)?),
                "full" => VarKind::Full(num(3)?, num(4)?),
                other => return Err(parse_err(line_no, format!("unknown variable kind {other}"))),
            };
            meta.vars.push((toks[1].to_string(), kind));
        }
        Some("block") if toks.len() >= 6 => {
            let strict = toks[3] == "1";
            let eps: f64 = toks[5].parse().map_err(|_| parse_err(line_no, "bad eps"))?;
            meta.blocks.push((toks[1].to_string(), strict, eps));
        }
        Some("tcap") => meta.tcap = Some(num(1)?),
        _ => {}
    }
    Ok(())
}

/// Parses SDPA text. Comment lines start with `*` or `"`; the punctuation
/// `{ } ( ) , =` is treated as whitespace and non-numeric words on the header
/// lines are skipped.
pub fn read_sdpa(text: &str) -> Result<LmiProblem, SdpaError> {
    let mut meta = Meta {
        vars: vec![],
        blocks: vec![],
        tcap: None,
    };
    let mut nums: Vec<(usize, f64)> = vec![];
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(body) = line.strip_prefix('*') {
            parse_meta(ln + 1, body, &mut meta)?;
            continue;
        }
        if line.starts_with('"') || line.is_empty() {
            continue;
        }
        let cleaned: String = line
            .chars()
            .map(|c| if "{}(),=".contains(c) { ' ' } else { c })
            .collect();
        for tok in cleaned.split_whitespace() {
            if let Ok(v) = tok.parse::<f64>() {
                nums.push((ln + 1, v));
            } else if !tok.chars().next().is_some_and(|c| c.is_alphabetic()) {
                return Err(parse_err(ln + 1, format!("unexpected token {tok:?}")));
            }
        }
    }
    let mut it = nums.into_iter();
    let mut next = |what: &str| it.next().ok_or_else(|| parse_err(0, format!("unexpected end of file reading {what}")));
    let as_count = |(ln, v): (usize, f64), what: &str| -> Result<i64, SdpaError> {
        if v.fract() != 0.0 || !v.is_finite() {
            return Err(parse_err(ln, format!("{what} must be an integer, got {v}")));
        }
        Ok(v as i64)
    };
    let m = as_count(next("mDIM")?, "mDIM")?;
    let nblocks = as_count(next("nBLOCK")?, "nBLOCK")?;
    if m < 0 || nblocks < 0 {
        return Err(parse_err(1, "negative dimension"));
    }
    let (m, nblocks) = (m as usize, nblocks as usize);
    let mut sizes = Vec::with_capacity(nblocks);
    for _ in 0..nblocks {
        let s = as_count(next("block size")?, "block size")?;
        sizes.push(s.unsigned_abs() as usize);
    }
    for _ in 0..m {
        next("objective")?;
    }
    let mut consts: Vec<Vec<(usize, usize, f64)>> = vec![vec![]; nblocks];
    let mut coefs: Vec<Vec<Vec<(usize, usize, f64)>>> = vec![vec![vec![]; m]; nblocks];
    loop {
        let Some(first) = it.next() else { break };
        let ln = first.0;
        let mut rec = [first, (0, 0.0), (0, 0.0), (0, 0.0), (0, 0.0)];
        for r in rec.iter_mut().skip(1) {
            *r = it.next().ok_or_else(|| parse_err(ln, "truncated entry"))?;
        }
        let k = as_count(rec[0], "matrix index")? as usize;
        let b = as_count(rec[1], "block index")? as usize;
        let i = as_count(rec[2], "row")? as usize;
        let j = as_count(rec[3], "column")? as usize;
        let v = rec[4].1;
        if k > m || b == 0 || b > nblocks || i == 0 || j == 0 || i > sizes[b - 1] || j > sizes[b - 1] {
            return Err(parse_err(ln, format!("entry ({k}, {b}, {i}, {j}) out of range")));
        }
        let (i, j) = if i <= j { (i - 1, j - 1) } else { (j - 1, i - 1) };
        if k == 0 {
            consts[b - 1].push((i, j, -v));
        } else {
            coefs[b - 1][k - 1].push((i, j, v));
        }
    }

    let with_meta = meta.tcap.is_some() && !meta.vars.is_empty() || (meta.tcap.is_some() && m == 1);
    let (np, keep_blocks): (usize, Vec<usize>) = if with_meta {
        let tcap = meta.tcap.unwrap_or(0);
        (m - 1, (0..nblocks).filter(|b| b + 1 != tcap).collect())
    } else {
        (m, (0..nblocks).collect())
    };
    let variables: Vec<Variable> = if with_meta {
        let mut off = 0;
        meta.vars
            .iter()
            .map(|(name, kind)| {
                let v = Variable { name: name.clone(), kind: *kind, offset: off };
                off += kind.scalar_count();
                v
            })
            .collect()
    } else {
        (0..m)
            .map(|i| Variable { name: format!("x{}", i + 1), kind: VarKind::Full(1, 1), offset: i })
            .collect()
    };
    let mut blocks = Vec::with_capacity(keep_blocks.len());
    for (pos, &b) in keep_blocks.iter().enumerate() {
        let dim = sizes[b];
        let (name, strict, eps) = match meta.blocks.get(pos) {
            Some(x) if with_meta => x.clone(),
            _ => (format!("block{}", b + 1), false, 0.0),
        };
        let sorted = |mut e: Vec<(usize, usize, f64)>| {
            e.sort_by_key(|&(i, j, _)| (j, i));
            SparseSym { dim, entries: e }
        };
        let coeffs = (0..np).map(|k| sorted(coefs[b][k].clone())).collect();
        blocks.push(Block {
            name,
            dim,
            constant: sorted(consts[b].clone()),
            coeffs,
            strict,
            eps,
        });
    }
    Ok(LmiProblem::from_parts(variables, blocks)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::LmiBuilder;
    use crate::Mat;

    #[test]
    fn empty_variable_block() {
        let blk = Block {
            name: "c".into(),
            dim: 2,
            constant: SparseSym { dim: 2, entries: vec![(0, 0, 1.5), (0, 1, 0.1), (1, 1, 2.0)] },
            coeffs: vec![],
            strict: true,
            eps: 1e-7,
        };
        let p = LmiProblem::from_parts(vec![], vec![blk]).unwrap();
        let text = write_sdpa(&p);
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('*')).collect();
        assert_eq!(lines[0], "1");
        assert_eq!(lines[1], "2");
        assert_eq!(lines[2], "2 -1");
        assert_eq!(read_sdpa(&text).unwrap(), p);
    }

    #[test]
    fn round_trip_exact() {
        let mut b = LmiBuilder::new();
        let x = b.symmetric("X", 2);
        let k = b.full("K", 1, 2);
        b.block("m", 3, true, None, move |v| {
            let mut out = Mat::zeros(3, 3);
            out.set_block(0, 0, &v[x].scale(0.1));
            out.set_block(2, 0, &v[k].scale(1.0 / 3.0));
            out.set_block(0, 2, &v[k].transpose().scale(1.0 / 3.0));
            out[(2, 2)] = 0.7;
            out
        });
        let p = b.build().unwrap();
        assert_eq!(read_sdpa(&write_sdpa(&p)).unwrap(), p);
    }

    #[test]
    fn plain_file_with_punctuation() {
        let text = "\"example\n2 =mdim\n1 =nblock\n{2}\n(1.0, 2.0)\n0 1 1 1 1\n1 1 1 1 1\n2 1 2 2 1\n";
        let p = read_sdpa(text).unwrap();
        assert_eq!(p.num_scalars(), 2);
        assert_eq!(p.blocks()[0].constant.entries, vec![(0, 0, -1.0)]);
    }

    #[test]
    fn garbage_rejected() {
        assert!(read_sdpa("1\n1\n1\n0\n0 1 1").is_err());
        assert!(read_sdpa("1\n1\n1\n0\n0 5 1 1 1").is_err());
    }
}
