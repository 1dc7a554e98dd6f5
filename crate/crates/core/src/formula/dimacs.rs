//! DIMACS CNF reading and writing, restricted to 2-clauses over distinct
//! variables, plus the JSON provenance sidecar written next to generated
//! files.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Clause, Formula, Literal, ModelParams};
use crate::{Error, Result};

/// Generation parameters recorded alongside a DIMACS file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub n: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub seed: u64,
}

impl Provenance {
    pub fn new(n: usize, params: &ModelParams, seed: u64) -> Self {
        Provenance {
            n,
            alpha0: params.alpha0,
            alpha1: params.alpha1,
            alpha2: params.alpha2,
            seed,
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.alpha0, self.alpha1, self.alpha2)
    }
}

pub fn parse_dimacs(text: &str) -> Result<Formula> {
    read_dimacs(text.as_bytes())
}

pub fn read_dimacs<R: BufRead>(reader: R) -> Result<Formula> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut pending: Vec<(i64, usize)> = Vec::new();
    let err = |line: usize, msg: String| Error::Dimacs { line, msg };

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('c') {
            continue;
        }
        if trimmed.starts_with('%') {
            break;
        }
        if trimmed.starts_with('p') {
            if header.is_some() {
                return Err(err(line_no, "duplicate problem line".into()));
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 4 || fields[0] != "p" || fields[1] != "cnf" {
                return Err(err(line_no, format!("expected 'p cnf <n> <m>', got '{trimmed}'")));
            }
            let n = fields[2]
                .parse()
                .map_err(|_| err(line_no, format!("bad variable count '{}'", fields[2])))?;
            let m = fields[3]
                .parse()
                .map_err(|_| err(line_no, format!("bad clause count '{}'", fields[3])))?;
            header = Some((n, m));
            continue;
        }
        let (n, _) = header.ok_or_else(|| err(line_no, "clause before problem line".into()))?;
        for tok in trimmed.split_whitespace() {
            let v: i64 = tok
                .parse()
                .map_err(|_| err(line_no, format!("bad literal '{tok}'")))?;
            if v != 0 {
                if v.unsigned_abs() as usize > n {
                    return Err(err(line_no, format!("literal {v} out of range for n = {n}")));
                }
                pending.push((v, line_no));
                continue;
            }
            if pending.len() != 2 {
                return Err(err(
                    line_no,
                    format!("clause has {} literals, only 2-clauses are accepted", pending.len()),
                ));
            }
            let a = Literal::from_dimacs(pending[0].0).expect("nonzero");
            let b = Literal::from_dimacs(pending[1].0).expect("nonzero");
            if a.var() == b.var() {
                return Err(err(line_no, format!("clause ({a} v {b}) repeats a variable")));
            }
            clauses.push(Clause::new_unchecked(a, b));
            pending.clear();
        }
    }

    let (n, m) = header.ok_or_else(|| err(0, "missing problem line".into()))?;
    if let Some(&(_, line)) = pending.first() {
        return Err(err(line, "unterminated clause".into()));
    }
    if clauses.len() != m {
        return Err(err(0, format!("header announces {m} clauses, found {}", clauses.len())));
    }
    Formula::from_clauses(n, clauses)
}

pub fn write_dimacs<W: Write>(f: &Formula, mut out: W) -> Result<()> {
    writeln!(out, "p cnf {} {}", f.n(), f.len())?;
    for c in f.clauses() {
        writeln!(out, "{} {} 0", c.first().to_dimacs(), c.second().to_dimacs())?;
    }
    Ok(())
}
