//! CPLEX LP format: writer and a minimal reader for the subset the writer emits.

use std::collections::HashMap;
use std::fmt::Write;

use crate::error::MilpError;
use crate::problem::{MilpProblem, Relation};

const TERMS_PER_LINE: usize = 8;

/// Renders `p` in CPLEX LP format. Variable and row order follow the problem.
pub fn export_lp(p: &MilpProblem) -> String {
    let names = lp_names(&p.var_names, "x");
    let row_names: Vec<String> = p.constraints.iter().map(|c| c.name.clone()).collect();
    let row_names = lp_names(&row_names, "c");
    let mut out = String::new();

    out.push_str("Minimize\n");
    let obj: Vec<(usize, f64)> = p
        .objective
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(j, &c)| (j, c))
        .collect();
    out.push_str(" obj:");
    if obj.is_empty() && !names.is_empty() {
        let _ = write!(out, " 0 {}", names[0]);
    }
    write_terms(&mut out, &obj, &names);
    out.push('\n');

    out.push_str("Subject To\n");
    for (c, name) in p.constraints.iter().zip(&row_names) {
        let terms = merge_terms(&c.coeffs);
        let _ = write!(out, " {name}:");
        if terms.is_empty() {
            let _ = write!(out, " 0 {}", names[0]);
        }
        write_terms(&mut out, &terms, &names);
        let _ = writeln!(out, " {} {}", c.relation.symbol(), num(c.rhs));
    }

    let mut bounds = String::new();
    let mut binaries = Vec::new();
    let mut generals = Vec::new();
    for j in 0..p.num_vars() {
        let (lo, hi) = (p.lower[j], p.upper[j]);
        if p.integer[j] && lo == 0.0 && hi == 1.0 {
            binaries.push(j);
            continue;
        }
        if p.integer[j] {
            generals.push(j);
        }
        let n = &names[j];
        if lo == hi {
            let _ = writeln!(bounds, " {n} = {}", num(lo));
        } else if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            let _ = writeln!(bounds, " {n} free");
        } else if lo == 0.0 && hi == f64::INFINITY {
        } else if hi == f64::INFINITY {
            let _ = writeln!(bounds, " {n} >= {}", num(lo));
        } else {
            let _ = writeln!(bounds, " {} <= {n} <= {}", num(lo), num(hi));
        }
    }
    if !bounds.is_empty() || p.num_vars() > 0 {
        out.push_str("Bounds\n");
        out.push_str(&bounds);
    }
    for (title, list) in [("Binaries", &binaries), ("Generals", &generals)] {
        if list.is_empty() {
            continue;
        }
        let _ = writeln!(out, "{title}");
        for chunk in list.chunks(TERMS_PER_LINE) {
            let line: Vec<&str> = chunk.iter().map(|&j| names[j].as_str()).collect();
            let _ = writeln!(out, " {}", line.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

fn write_terms(out: &mut String, terms: &[(usize, f64)], names: &[String]) {
    for (k, &(j, a)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n  ");
        }
        let sign = if a < 0.0 { "-" } else { "+" };
        let mag = a.abs();
        if k == 0 && a > 0.0 {
            out.push(' ');
        } else {
            let _ = write!(out, " {sign} ");
        }
        if mag != 1.0 {
            let _ = write!(out, "{} ", num(mag));
        }
        out.push_str(&names[j]);
    }
}

fn merge_terms(coeffs: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
    let mut at: HashMap<usize, usize> = HashMap::new();
    for &(j, a) in coeffs {
        match at.get(&j) {
            Some(&k) => merged[k].1 += a,
            None => {
                at.insert(j, merged.len());
                merged.push((j, a));
            }
        }
    }
    merged.retain(|t| t.1 != 0.0);
    merged
}

fn num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn valid_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || "!\"#$%&()/,.;?@_`'{}|~".contains(c)
}

/// Maps names to legal, unique LP identifiers.
fn lp_names(raw: &[String], prefix: &str) -> Vec<String> {
    let mut seen = HashMap::new();
    raw.iter()
        .enumerate()
        .map(|(j, name)| {
            let mut s: String = name
                .chars()
                .map(|c| if valid_char(c) { c } else { '_' })
                .collect();
            let bad_start = s
                .chars()
                .next()
                .is_none_or(|c| c.is_ascii_digit() || c == '.');
            if bad_start || s.eq_ignore_ascii_case("free") || s.eq_ignore_ascii_case("inf") {
                s = format!("{prefix}{j}_{s}");
            }
            if seen.contains_key(&s) {
                s = format!("{s}_{j}");
            }
            seen.insert(s.clone(), j);
            s
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Word(String),
    Num(f64),
    Sign(f64),
    Rel(Relation),
    Colon,
}

fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token>, MilpError> {
    let err = |m: &str| MilpError::LpFormat {
        line: line_no,
        message: m.to_string(),
    };
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '\\' {
            break;
        } else if c == '+' || c == '-' {
            out.push(Token::Sign(if c == '+' { 1.0 } else { -1.0 }));
            i += 1;
        } else if c == ':' {
            out.push(Token::Colon);
            i += 1;
        } else if c == '<' || c == '>' || c == '=' {
            let mut s = String::from(c);
            if i + 1 < chars.len() && "<>=".contains(chars[i + 1]) {
                s.push(chars[i + 1]);
            }
            i += s.len();
            let rel = match s.as_str() {
                "<=" | "=<" | "<" => Relation::Le,
                ">=" | "=>" | ">" => Relation::Ge,
                "=" | "==" => Relation::Eq,
                _ => return Err(err(&format!("unknown operator {s}"))),
            };
            out.push(Token::Rel(rel));
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| err(&format!("bad number {s}")))?;
            out.push(Token::Num(v));
        } else {
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() && !"+-<>=:".contains(chars[i]) {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
                out.push(Token::Num(f64::INFINITY));
            } else {
                out.push(Token::Word(s));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    Generals,
    End,
}

fn section_header(line: &str) -> Option<Section> {
    let l = line.trim().to_ascii_lowercase();
    let s = match l.as_str() {
        "minimize" | "minimise" | "min" | "maximize" | "maximise" | "max" => Section::Objective,
        "subject to" | "such that" | "st" | "s.t." => Section::Constraints,
        "bounds" | "bound" => Section::Bounds,
        "binaries" | "binary" | "bin" => Section::Binaries,
        "generals" | "general" | "gen" => Section::Generals,
        "end" => Section::End,
        _ => return None,
    };
    Some(s)
}

struct Reader {
    p: MilpProblem,
    index: HashMap<String, usize>,
}

impl Reader {
    fn var(&mut self, name: &str) -> usize {
        if let Some(&j) = self.index.get(name) {
            return j;
        }
        let j = self.p.add_var(name, 0.0, f64::INFINITY, 0.0);
        self.index.insert(name.to_string(), j);
        j
    }

    /// Parses a linear expression starting at `toks[*pos]` until a relation or end.
    fn expression(
        &mut self,
        toks: &[(Token, usize)],
        pos: &mut usize,
    ) -> Result<Vec<(usize, f64)>, MilpError> {
        let mut terms = Vec::new();
        let mut sign = 1.0;
        let mut coef: Option<f64> = None;
        while *pos < toks.len() {
            let (tok, line) = &toks[*pos];
            match tok {
                Token::Rel(_) => break,
                Token::Sign(s) => sign *= s,
                Token::Num(v) => coef = Some(coef.unwrap_or(1.0) * v),
                Token::Word(w) => {
                    let j = self.var(w);
                    terms.push((j, sign * coef.unwrap_or(1.0)));
                    sign = 1.0;
                    coef = None;
                }
                Token::Colon => {
                    return Err(MilpError::LpFormat {
                        line: *line,
                        message: "unexpected ':'".into(),
                    })
                }
            }
            *pos += 1;
        }
        if coef.is_some_and(|c| c != 0.0) {
            let line = toks.last().map_or(0, |t| t.1);
            return Err(MilpError::LpFormat {
                line,
                message: "constant terms are not supported".into(),
            });
        }
        Ok(terms)
    }
}

/// Reads the LP subset produced by [`export_lp`]. Variables are numbered in
/// order of first appearance.
pub fn parse_lp(text: &str) -> Result<MilpProblem, MilpError> {
    let mut reader = Reader {
        p: MilpProblem::new(),
        index: HashMap::new(),
    };
    let mut section = Section::None;
    let mut maximize = false;
    let mut obj_toks = Vec::new();
    let mut row_toks = Vec::new();
    let mut bound_lines = Vec::new();
    let mut int_lines = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        if let Some(s) = section_header(line) {
            if s == Section::Objective {
                maximize = line.trim().to_ascii_lowercase().starts_with("max");
            }
            section = s;
            continue;
        }
        let toks = tokenize(line, line_no)?;
        if toks.is_empty() {
            continue;
        }
        let tagged = toks.into_iter().map(|t| (t, line_no));
        match section {
            Section::Objective => obj_toks.extend(tagged),
            Section::Constraints => row_toks.extend(tagged),
            Section::Bounds => bound_lines.push((line_no, tagged.map(|t| t.0).collect::<Vec<_>>())),
            Section::Binaries => int_lines.push((true, tagged.map(|t| t.0).collect::<Vec<_>>())),
            Section::Generals => int_lines.push((false, tagged.map(|t| t.0).collect::<Vec<_>>())),
            Section::None | Section::End => {
                return Err(MilpError::LpFormat {
                    line: line_no,
                    message: "content outside a section".into(),
                })
            }
        }
    }

    // Objective.
    let mut pos = 0;
    if obj_toks.len() >= 2 && obj_toks[1].0 == Token::Colon {
        pos = 2;
    }
    let obj = reader.expression(&obj_toks, &mut pos)?;
    for (j, c) in obj {
        reader.p.objective[j] += if maximize { -c } else { c };
    }

    // Constraints.
    let mut pos = 0;
    let mut count = 0;
    while pos < row_toks.len() {
        let line = row_toks[pos].1;
        let name = match (&row_toks[pos].0, row_toks.get(pos + 1).map(|t| &t.0)) {
            (Token::Word(w), Some(Token::Colon)) => {
                pos += 2;
                w.clone()
            }
            _ => format!("R{}", count + 1),
        };
        let terms = reader.expression(&row_toks, &mut pos)?;
        let relation = match row_toks.get(pos) {
            Some((Token::Rel(r), _)) => *r,
            _ => {
                return Err(MilpError::LpFormat {
                    line,
                    message: format!("row {name} lacks a relation"),
                })
            }
        };
        pos += 1;
        let mut sign = 1.0;
        while let Some((Token::Sign(s), _)) = row_toks.get(pos) {
            sign *= s;
            pos += 1;
        }
        let rhs = match row_toks.get(pos) {
            Some((Token::Num(v), _)) => sign * v,
            _ => {
                return Err(MilpError::LpFormat {
                    line,
                    message: format!("row {name} lacks a right-hand side"),
                })
            }
        };
        pos += 1;
        let terms: Vec<(usize, f64)> = terms.into_iter().filter(|t| t.1 != 0.0).collect();
        reader.p.add_constraint(name, terms, relation, rhs);
        count += 1;
    }

    // Bounds.
    for (line, toks) in bound_lines {
        apply_bound(&mut reader, &toks).map_err(|message| MilpError::LpFormat { line, message })?;
    }

    for (binary, toks) in int_lines {
        for t in toks {
            if let Token::Word(w) = t {
                let j = reader.var(&w);
                reader.p.integer[j] = true;
                if binary {
                    reader.p.lower[j] = 0.0;
                    reader.p.upper[j] = 1.0;
                }
            }
        }
    }
    Ok(reader.p)
}

fn apply_bound(reader: &mut Reader, toks: &[Token]) -> Result<(), String> {
    // Collapse sign tokens into the following number.
    let mut items: Vec<Token> = Vec::new();
    let mut sign = 1.0;
    for t in toks {
        match t {
            Token::Sign(s) => sign *= s,
            Token::Num(v) => {
                items.push(Token::Num(sign * v));
                sign = 1.0;
            }
            other => items.push(other.clone()),
        }
    }
    use Token::*;
    match items.as_slice() {
        [Word(x), Word(f)] if f.eq_ignore_ascii_case("free") => {
            let j = reader.var(x);
            reader.p.lower[j] = f64::NEG_INFINITY;
            reader.p.upper[j] = f64::INFINITY;
        }
        [Num(lo), Rel(Relation::Le), Word(x), Rel(Relation::Le), Num(hi)] => {
            let j = reader.var(x);
            reader.p.lower[j] = *lo;
            reader.p.upper[j] = *hi;
        }
        [Word(x), Rel(r), Num(v)] => {
            let j = reader.var(x);
            match r {
                Relation::Le => reader.p.upper[j] = *v,
                Relation::Ge => reader.p.lower[j] = *v,
                Relation::Eq => {
                    reader.p.lower[j] = *v;
                    reader.p.upper[j] = *v;
                }
            }
        }
        [Num(v), Rel(r), Word(x)] => {
            let j = reader.var(x);
            match r {
                Relation::Le => reader.p.lower[j] = *v,
                Relation::Ge => reader.p.upper[j] = *v,
                Relation::Eq => {
                    reader.p.lower[j] = *v;
                    reader.p.upper[j] = *v;
                }
            }
        }
        _ => return Err("unrecognised bound".into()),
    }
    Ok(())
}
