//! Reading and writing the CPLEX LP text format (the subset produced here).

use std::fmt::Write as _;

use super::{ConstraintRow, Direction, LinearProgram, Sense};
use crate::constraints::Provenance;
use crate::error::{Error, Result};

fn term_list(out: &mut String, coefs: impl Iterator<Item = (usize, f64)>, names: &[String], keep_zero: bool) {
    let mut first = true;
    let mut width = 0;
    for (j, a) in coefs {
        if a == 0.0 && !keep_zero {
            continue;
        }
        let sign = if a < 0.0 { "-" } else if first { "" } else { "+" };
        let piece = format!(" {sign} {} {}", a.abs(), names[j]);
        width += piece.len();
        if width > 200 {
            out.push_str("\n   ");
            width = piece.len();
        }
        out.push_str(&piece);
        first = false;
    }
    if first {
        out.push_str(" 0 ");
        out.push_str(names.first().map(String::as_str).unwrap_or("x"));
    }
}

/// Serializes `lp`. Numbers use Rust's shortest round-trip formatting, so
/// [`read_lp`] recovers the same program exactly.
pub fn write_lp(lp: &LinearProgram) -> String {
    let names: Vec<String> = lp.variables.iter().map(|v| v.name.clone()).collect();
    let mut out = String::new();
    out.push_str(match lp.direction {
        Direction::Maximize => "Maximize\n",
        Direction::Minimize => "Minimize\n",
    });
    out.push_str(" obj:");
    // Every variable is listed in the objective so that reading preserves their order.
    term_list(&mut out, lp.objective.iter().copied().enumerate(), &names, true);
    out.push_str("\nSubject To\n");
    for (i, row) in lp.rows.iter().enumerate() {
        let _ = write!(out, " r{i}:");
        term_list(&mut out, row.coefficients.iter().copied(), &names, false);
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", row.rhs);
    }
    out.push_str("Bounds\n");
    for v in &lp.variables {
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " {} free", v.name);
            }
            (true, true) => {
                let _ = writeln!(out, " {} <= {} <= {}", v.lower, v.name, v.upper);
            }
            (true, false) => {
                let _ = writeln!(out, " {} >= {}", v.name, v.lower);
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {} <= {}", v.name, v.upper);
            }
        }
    }
    out.push_str("End\n");
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Objective,
    Rows,
    Bounds,
    Done,
}

fn parse_num(tok: &str, line: usize) -> Result<f64> {
    match tok {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| Error::LpParse { line, msg: format!("bad number '{tok}'") }),
    }
}

/// Parses the LP text written by [`write_lp`] (also tolerating missing coefficients
/// and `\` comments). Row provenance is not stored in the format and comes back empty.
pub fn read_lp(text: &str) -> Result<LinearProgram> {
    let mut lp: Option<LinearProgram> = None;
    let mut section = Section::Objective;
    // Expressions can wrap over lines; accumulate until a row is complete.
    let mut pending = String::new();
    let mut pending_line = 0;
    let mut lower_set: Vec<bool> = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    let mut idx = 0;
    while idx < lines.len() {
        let lineno = idx + 1;
        let raw = lines[idx].split('\\').next().unwrap_or("").trim();
        idx += 1;
        if raw.is_empty() {
            continue;
        }
        let lower = raw.to_ascii_lowercase();
        match lower.as_str() {
            "maximize" | "maximum" | "max" => {
                lp = Some(LinearProgram::new(Direction::Maximize));
                continue;
            }
            "minimize" | "minimum" | "min" => {
                lp = Some(LinearProgram::new(Direction::Minimize));
                continue;
            }
            "subject to" | "such that" | "st" | "s.t." => {
                flush(&mut lp, &mut pending, pending_line, section, &mut lower_set)?;
                section = Section::Rows;
                continue;
            }
            "bounds" => {
                flush(&mut lp, &mut pending, pending_line, section, &mut lower_set)?;
                section = Section::Bounds;
                continue;
            }
            "end" => {
                flush(&mut lp, &mut pending, pending_line, section, &mut lower_set)?;
                section = Section::Done;
                continue;
            }
            _ => {}
        }
        if lp.is_none() {
            return Err(Error::LpParse { line: lineno, msg: "expected Maximize or Minimize".into() });
        }
        match section {
            Section::Objective | Section::Rows => {
                if raw.contains(':') && !pending.is_empty() {
                    flush(&mut lp, &mut pending, pending_line, section, &mut lower_set)?;
                }
                if pending.is_empty() {
                    pending_line = lineno;
                }
                pending.push(' ');
                pending.push_str(raw);
            }
            Section::Bounds => parse_bound(lp.as_mut().unwrap(), raw, lineno, &mut lower_set)?,
            Section::Done => return Err(Error::LpParse { line: lineno, msg: "content after End".into() }),
        }
    }
    if section != Section::Done {
        flush(&mut lp, &mut pending, pending_line, section, &mut lower_set)?;
    }
    lp.ok_or(Error::LpParse { line: 0, msg: "empty input".into() })
}

fn var_index(lp: &mut LinearProgram, name: &str, lower_set: &mut Vec<bool>) -> usize {
    if let Some(j) = lp.variable_index(name) {
        return j;
    }
    lower_set.push(false);
    lp.add_variable(name, 0.0, f64::INFINITY)
}

fn parse_terms(
    lp: &mut LinearProgram,
    expr: &str,
    line: usize,
    lower_set: &mut Vec<bool>,
) -> Result<Vec<(usize, f64)>> {
    let spaced = expr.replace('+', " + ").replace('-', " - ").replace("e - ", "e-").replace("e + ", "e+");
    let mut terms = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for tok in spaced.split_whitespace() {
        match tok {
            "+" => sign = 1.0,
            "-" => sign = -sign,
            _ => {
                if let Ok(v) = tok.parse::<f64>() {
                    if coef.is_some() {
                        return Err(Error::LpParse { line, msg: format!("two numbers in a row near '{tok}'") });
                    }
                    coef = Some(v);
                } else {
                    let j = var_index(lp, tok, lower_set);
                    terms.push((j, sign * coef.take().unwrap_or(1.0)));
                    sign = 1.0;
                }
            }
        }
    }
    if coef.is_some() {
        return Err(Error::LpParse { line, msg: "dangling coefficient".into() });
    }
    Ok(terms)
}

fn flush(
    lp: &mut Option<LinearProgram>,
    pending: &mut String,
    line: usize,
    section: Section,
    lower_set: &mut Vec<bool>,
) -> Result<()> {
    if pending.trim().is_empty() {
        pending.clear();
        return Ok(());
    }
    let lp = lp.as_mut().ok_or(Error::LpParse { line, msg: "missing objective sense".into() })?;
    let text = std::mem::take(pending);
    let body = match text.split_once(':') {
        Some((_, b)) => b.to_string(),
        None => text,
    };
    match section {
        Section::Objective => {
            for (j, a) in parse_terms(lp, &body, line, lower_set)? {
                lp.objective[j] += a;
            }
        }
        Section::Rows => {
            let (op, sense) = if body.contains("<=") {
                ("<=", Sense::Le)
            } else if body.contains(">=") {
                (">=", Sense::Ge)
            } else if body.contains('=') {
                ("=", Sense::Eq)
            } else {
                return Err(Error::LpParse { line, msg: "row without comparison".into() });
            };
            let (lhs, rhs) = body.split_once(op).unwrap();
            let rhs = parse_num(rhs.trim(), line)?;
            let coefficients = parse_terms(lp, lhs, line, lower_set)?;
            lp.add_row(ConstraintRow { coefficients, sense, rhs, provenance: Provenance::default() });
        }
        _ => {}
    }
    Ok(())
}

fn parse_bound(lp: &mut LinearProgram, raw: &str, line: usize, lower_set: &mut Vec<bool>) -> Result<()> {
    let toks: Vec<&str> = raw.split_whitespace().collect();
    let bad = || Error::LpParse { line, msg: format!("unrecognized bound '{raw}'") };
    match toks.as_slice() {
        [name, free] if free.eq_ignore_ascii_case("free") => {
            let j = var_index(lp, name, lower_set);
            lp.variables[j].lower = f64::NEG_INFINITY;
            lp.variables[j].upper = f64::INFINITY;
        }
        [lo, "<=", name, "<=", hi] => {
            let j = var_index(lp, name, lower_set);
            lp.variables[j].lower = parse_num(lo, line)?;
            lp.variables[j].upper = parse_num(hi, line)?;
        }
        [name, ">=", lo] => {
            let j = var_index(lp, name, lower_set);
            lp.variables[j].lower = parse_num(lo, line)?;
        }
        [name, "<=", hi] => {
            let j = var_index(lp, name, lower_set);
            lp.variables[j].upper = parse_num(hi, line)?;
        }
        [name, "=", v] => {
            let j = var_index(lp, name, lower_set);
            let v = parse_num(v, line)?;
            lp.variables[j].lower = v;
            lp.variables[j].upper = v;
        }
        _ => return Err(bad()),
    }
    Ok(())
}
