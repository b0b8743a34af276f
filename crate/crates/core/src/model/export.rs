//! LP and free-format MPS writers, plus readers for the same dialect so an
//! export can be checked against the in-memory model.
//!
//! Coefficients are written with 12 significant digits. Row and column names
//! are reduced to `[A-Za-z0-9_]`, never start with a digit or with `e`/`E`
//! (which LP readers confuse with exponents) and are made unique.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use super::MiqpModel;
use crate::linearize::Relation;

pub const EXPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExportError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unsupported export format_version {0}")]
    UnsupportedVersion(u32),
    #[error("missing format_version comment")]
    MissingVersion,
}

/// Solver-neutral view of a model as read back from a file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlatModel {
    pub columns: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub binary: Vec<bool>,
    pub rows: Vec<FlatRow>,
    /// `Σ q x_i x_j` with `i ≤ j`.
    pub quadratic: Vec<(usize, usize, f64)>,
    pub linear: Vec<(usize, f64)>,
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatRow {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl FlatRow {
    /// `lhs − rhs`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>() - self.rhs
    }
}

impl FlatModel {
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.constant
            + self.linear.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
            + self.quadratic.iter().map(|&(i, j, q)| q * x[i] * x[j]).sum::<f64>()
    }

    pub fn from_model(model: &MiqpModel) -> Self {
        let n = model.vars.len();
        let mut linear: BTreeMap<usize, f64> = BTreeMap::new();
        for &(v, c) in model.objective.linear.terms() {
            *linear.entry(v.index()).or_default() += c;
        }
        FlatModel {
            columns: model.vars.iter().map(|v| v.name.clone()).collect(),
            lower: model.vars.iter().map(|v| v.lower).collect(),
            upper: model.vars.iter().map(|v| v.upper).collect(),
            binary: model.vars.iter().map(|v| v.is_binary()).collect(),
            rows: model
                .constraints
                .iter()
                .map(|c| FlatRow {
                    name: c.name.clone(),
                    terms: c.expr.terms().iter().map(|&(v, a)| (v.index(), a)).collect(),
                    relation: c.relation,
                    rhs: c.rhs,
                })
                .collect(),
            quadratic: model
                .objective
                .quadratic
                .iter()
                .map(|&(i, j, q)| {
                    let (a, b) = (i.index().min(j.index()), i.index().max(j.index()));
                    (a, b, q)
                })
                .collect(),
            linear: linear.into_iter().filter(|&(j, _)| j < n).collect(),
            constant: model.objective.linear.constant,
        }
    }
}

/// Writes `v` with 12 significant digits.
fn num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let s = format!("{v:.11e}");
    // trim mantissa zeros: 1.50000000000e0 -> 1.5e0
    let (mant, exp) = s.split_once('e').expect("exponent form");
    let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
    if exp == "0" {
        mant.to_string()
    } else {
        format!("{mant}e{exp}")
    }
}

fn signed(v: f64) -> String {
    if v < 0.0 {
        format!("- {}", num(-v))
    } else {
        format!("+ {}", num(v))
    }
}

/// Maps arbitrary labels to unique exporter-safe names.
pub fn safe_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut used = HashSet::new();
    let mut out = Vec::new();
    for raw in names {
        let mut s: String = raw.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
        if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit() || c == 'e' || c == 'E') {
            s.insert(0, '_');
        }
        let mut candidate = s.clone();
        let mut k = 2;
        while !used.insert(candidate.clone()) {
            candidate = format!("{s}_{k}");
            k += 1;
        }
        out.push(candidate);
    }
    out
}

fn wrap(out: &mut String, parts: &[String]) {
    let mut line = String::from(" ");
    for p in parts {
        if line.len() + p.len() > 240 {
            out.push_str(line.trim_end());
            out.push('\n');
            line = String::from(" ");
        }
        line.push_str(p);
        line.push(' ');
    }
    out.push_str(line.trim_end());
    out.push('\n');
}

/// CPLEX LP text of the model.
pub fn write_lp(model: &MiqpModel) -> String {
    let flat = FlatModel::from_model(model);
    let cols = safe_names(flat.columns.iter().map(String::as_str));
    let rows = safe_names(flat.rows.iter().map(|r| r.name.as_str()));
    let mut out = String::new();
    let _ = writeln!(out, "\\ format_version: {EXPORT_FORMAT_VERSION}");
    out.push_str("Minimize\n");
    let mut parts = vec!["obj:".to_string()];
    for &(j, c) in &flat.linear {
        parts.push(format!("{} {}", signed(c), cols[j]));
    }
    if !flat.quadratic.is_empty() {
        parts.push("+ [".to_string());
        for &(i, j, q) in &flat.quadratic {
            // the bracket is halved, so coefficients are doubled
            if i == j {
                parts.push(format!("{} {} ^ 2", signed(2.0 * q), cols[i]));
            } else {
                parts.push(format!("{} {} * {}", signed(2.0 * q), cols[i], cols[j]));
            }
        }
        parts.push("] / 2".to_string());
    }
    if flat.constant != 0.0 || parts.len() == 1 {
        parts.push(signed(flat.constant));
    }
    wrap(&mut out, &parts);
    out.push_str("Subject To\n");
    for (r, row) in flat.rows.iter().enumerate() {
        let mut parts = vec![format!("{}:", rows[r])];
        if row.terms.is_empty() {
            parts.push(format!("0 {}", cols.first().map(String::as_str).unwrap_or("_zero")));
        }
        for &(j, c) in &row.terms {
            parts.push(format!("{} {}", signed(c), cols[j]));
        }
        parts.push(format!("{} {}", row.relation.symbol(), num(row.rhs)));
        wrap(&mut out, &parts);
    }
    out.push_str("Bounds\n");
    for j in 0..cols.len() {
        if flat.binary[j] && flat.lower[j] == 0.0 && flat.upper[j] == 1.0 {
            continue;
        }
        let _ = writeln!(out, " {} <= {} <= {}", num(flat.lower[j]), cols[j], num(flat.upper[j]));
    }
    let bins: Vec<String> = (0..cols.len()).filter(|&j| flat.binary[j]).map(|j| cols[j].clone()).collect();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        wrap(&mut out, &bins);
    }
    out.push_str("End\n");
    out
}

/// Free-format MPS text of the model, with the quadratic part in `QUADOBJ`.
pub fn write_mps(model: &MiqpModel) -> String {
    let flat = FlatModel::from_model(model);
    let cols = safe_names(flat.columns.iter().map(String::as_str));
    let rows = safe_names(flat.rows.iter().map(|r| r.name.as_str()));
    let mut out = String::new();
    let _ = writeln!(out, "* format_version: {EXPORT_FORMAT_VERSION}");
    out.push_str("NAME motoplace\nROWS\n N obj\n");
    for (r, row) in flat.rows.iter().enumerate() {
        let t = match row.relation {
            Relation::Le => 'L',
            Relation::Ge => 'G',
            Relation::Eq => 'E',
        };
        let _ = writeln!(out, " {t} {}", rows[r]);
    }
    let mut by_col: Vec<Vec<(String, f64)>> = vec![Vec::new(); cols.len()];
    for &(j, c) in &flat.linear {
        by_col[j].push(("obj".to_string(), c));
    }
    for (r, row) in flat.rows.iter().enumerate() {
        for &(j, c) in &row.terms {
            by_col[j].push((rows[r].clone(), c));
        }
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    for (j, entries) in by_col.iter().enumerate() {
        if flat.binary[j] != in_int {
            let marker = if flat.binary[j] { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, " MARKER 'MARKER' {marker}");
            in_int = flat.binary[j];
        }
        if entries.is_empty() {
            let _ = writeln!(out, " {} obj 0", cols[j]);
        }
        for (row, c) in entries {
            let _ = writeln!(out, " {} {} {}", cols[j], row, num(*c));
        }
    }
    if in_int {
        out.push_str(" MARKER 'MARKER' 'INTEND'\n");
    }
    out.push_str("RHS\n");
    if flat.constant != 0.0 {
        // an objective RHS is subtracted from the objective
        let _ = writeln!(out, " rhs obj {}", num(-flat.constant));
    }
    for (r, row) in flat.rows.iter().enumerate() {
        if row.rhs != 0.0 {
            let _ = writeln!(out, " rhs {} {}", rows[r], num(row.rhs));
        }
    }
    out.push_str("BOUNDS\n");
    for j in 0..cols.len() {
        if flat.binary[j] && flat.lower[j] == 0.0 && flat.upper[j] == 1.0 {
            let _ = writeln!(out, " BV bnd {}", cols[j]);
        } else if flat.lower[j] == flat.upper[j] {
            let _ = writeln!(out, " FX bnd {} {}", cols[j], num(flat.lower[j]));
        } else {
            let _ = writeln!(out, " LO bnd {} {}", cols[j], num(flat.lower[j]));
            let _ = writeln!(out, " UP bnd {} {}", cols[j], num(flat.upper[j]));
        }
    }
    if !flat.quadratic.is_empty() {
        // QUADOBJ holds the lower triangle of Q with objective ½ xᵀQx
        out.push_str("QUADOBJ\n");
        for &(i, j, q) in &flat.quadratic {
            let v = if i == j { 2.0 * q } else { q };
            let _ = writeln!(out, " {} {} {}", cols[i], cols[j], num(v));
        }
    }
    out.push_str("ENDATA\n");
    out
}

fn parse_err(line: usize, reason: impl Into<String>) -> ExportError {
    ExportError::Parse { line, reason: reason.into() }
}

fn parse_num(tok: &str, line: usize) -> Result<f64, ExportError> {
    match tok {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| parse_err(line, format!("expected a number, found {tok}"))),
    }
}

fn check_version(first: Option<&str>, prefix: &str) -> Result<(), ExportError> {
    let line = first.ok_or(ExportError::MissingVersion)?;
    let v = line
        .strip_prefix(prefix)
        .and_then(|r| r.trim().strip_prefix("format_version:"))
        .ok_or(ExportError::MissingVersion)?;
    let v: u32 = v.trim().parse().map_err(|_| ExportError::MissingVersion)?;
    if v != EXPORT_FORMAT_VERSION {
        return Err(ExportError::UnsupportedVersion(v));
    }
    Ok(())
}

struct Columns {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Columns {
    fn new() -> Self {
        Self { names: Vec::new(), index: HashMap::new() }
    }

    fn get(&mut self, name: &str) -> usize {
        if let Some(&j) = self.index.get(name) {
            return j;
        }
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }
}

/// Reads LP text written by [`write_lp`].
pub fn read_lp(text: &str) -> Result<FlatModel, ExportError> {
    check_version(text.lines().next(), "\\")?;
    #[derive(PartialEq)]
    enum Sec {
        None,
        Obj,
        Rows,
        Bounds,
        Bin,
    }
    let mut sec = Sec::None;
    let mut cols = Columns::new();
    let mut obj_tokens: Vec<(usize, String)> = Vec::new();
    let mut row_lines: Vec<(usize, String)> = Vec::new();
    let mut bounds: Vec<(usize, String)> = Vec::new();
    let mut bins: Vec<(usize, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('\\') {
            continue;
        }
        match line {
            "Minimize" => sec = Sec::Obj,
            "Subject To" => sec = Sec::Rows,
            "Bounds" => sec = Sec::Bounds,
            "Binaries" => sec = Sec::Bin,
            "End" => break,
            _ => match sec {
                Sec::Obj => obj_tokens.push((line_no, line.to_string())),
                Sec::Rows => {
                    if line.split_whitespace().next().is_some_and(|t| t.ends_with(':')) {
                        row_lines.push((line_no, line.to_string()));
                        continue;
                    }
                    match row_lines.last_mut() {
                        Some(last) => {
                            last.1.push(' ');
                            last.1.push_str(line);
                        }
                        None => return Err(parse_err(line_no, "constraint without a name")),
                    }
                }
                Sec::Bounds => bounds.push((line_no, line.to_string())),
                Sec::Bin => bins.extend(line.split_whitespace().map(|t| (line_no, t.to_string()))),
                Sec::None => return Err(parse_err(line_no, format!("unexpected text {line}"))),
            },
        }
    }

    let mut model = FlatModel::default();
    // objective
    let joined: Vec<(usize, String)> = obj_tokens
        .iter()
        .flat_map(|(l, s)| s.split_whitespace().map(move |t| (*l, t.to_string())))
        .collect();
    let mut toks = joined.iter().peekable();
    if toks.peek().is_some_and(|(_, t)| t.ends_with(':')) {
        toks.next();
    }
    let mut in_quad = false;
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    let mut linear: BTreeMap<usize, f64> = BTreeMap::new();
    let mut flush_linear = |coef: f64, name: Option<&str>, cols: &mut Columns, model: &mut FlatModel| match name {
        Some(n) => *linear.entry(cols.get(n)).or_default() += coef,
        None => model.constant += coef,
    };
    while let Some((l, t)) = toks.next() {
        match t.as_str() {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            "[" => in_quad = true,
            "]" => {
                in_quad = false;
                // the "/ 2" that follows
                let slash = toks.next();
                let two = toks.next();
                if slash.map(|s| s.1.as_str()) != Some("/") || two.map(|s| s.1.as_str()) != Some("2") {
                    return Err(parse_err(*l, "expected ] / 2"));
                }
            }
            _ => {
                if let Ok(v) = t.parse::<f64>() {
                    if coef.is_some() {
                        return Err(parse_err(*l, "two numbers in a row"));
                    }
                    coef = Some(sign * v);
                    // constant if no variable follows
                    let next = toks.peek().map(|(_, s)| s.as_str());
                    if matches!(next, None | Some("+") | Some("-") | Some("[") | Some("]")) {
                        if in_quad {
                            return Err(parse_err(*l, "constant inside quadratic bracket"));
                        }
                        flush_linear(coef.take().unwrap_or(0.0), None, &mut cols, &mut model);
                        sign = 1.0;
                    }
                    continue;
                }
                let c = coef.take().unwrap_or(sign);
                if in_quad {
                    let op = toks.next().ok_or_else(|| parse_err(*l, "incomplete quadratic term"))?;
                    let other = toks.next().ok_or_else(|| parse_err(*l, "incomplete quadratic term"))?;
                    let (i, j) = match op.1.as_str() {
                        "^" => {
                            if other.1 != "2" {
                                return Err(parse_err(*l, "only squares are supported"));
                            }
                            let i = cols.get(t);
                            (i, i)
                        }
                        "*" => (cols.get(t), cols.get(&other.1)),
                        _ => return Err(parse_err(*l, "expected ^ or *")),
                    };
                    model.quadratic.push((i.min(j), i.max(j), c / 2.0));
                } else {
                    flush_linear(c, Some(t), &mut cols, &mut model);
                }
                sign = 1.0;
            }
        }
    }
    model.linear = linear.into_iter().collect();

    for (l, line) in &row_lines {
        let mut it = line.split_whitespace();
        let name = it.next().and_then(|t| t.strip_suffix(':')).ok_or_else(|| parse_err(*l, "missing row name"))?;
        let toks: Vec<&str> = it.collect();
        let pos = toks
            .iter()
            .position(|t| matches!(*t, "<=" | ">=" | "="))
            .ok_or_else(|| parse_err(*l, "missing relation"))?;
        let relation = match toks[pos] {
            "<=" => Relation::Le,
            ">=" => Relation::Ge,
            _ => Relation::Eq,
        };
        let rhs = toks.get(pos + 1).ok_or_else(|| parse_err(*l, "missing right-hand side"))?;
        let rhs = parse_num(rhs, *l)?;
        let mut terms: BTreeMap<usize, f64> = BTreeMap::new();
        let mut sign = 1.0;
        let mut coef: Option<f64> = None;
        for t in &toks[..pos] {
            match *t {
                "+" => sign = 1.0,
                "-" => sign = -1.0,
                _ => {
                    if let Ok(v) = t.parse::<f64>() {
                        coef = Some(sign * v);
                    } else {
                        let j = cols.get(t);
                        let c = coef.take().unwrap_or(sign);
                        if c != 0.0 {
                            *terms.entry(j).or_default() += c;
                        }
                        sign = 1.0;
                    }
                }
            }
        }
        model.rows.push(FlatRow { name: name.to_string(), terms: terms.into_iter().collect(), relation, rhs });
    }
    let n = cols.names.len();
    let mut lower: Vec<f64> = vec![0.0; n];
    let mut upper: Vec<f64> = vec![f64::INFINITY; n];
    let mut binary = vec![false; n];
    for (_, t) in &bins {
        let j = cols.get(t);
        lower.resize(cols.names.len(), 0.0);
        upper.resize(cols.names.len(), f64::INFINITY);
        binary.resize(cols.names.len(), false);
        binary[j] = true;
        lower[j] = lower[j].max(0.0);
        upper[j] = upper[j].min(1.0);
    }
    for (l, line) in &bounds {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 5 || toks[1] != "<=" || toks[3] != "<=" {
            return Err(parse_err(*l, "expected lo <= name <= hi"));
        }
        let j = cols.get(toks[2]);
        lower.resize(cols.names.len(), 0.0);
        upper.resize(cols.names.len(), f64::INFINITY);
        binary.resize(cols.names.len(), false);
        lower[j] = parse_num(toks[0], *l)?;
        upper[j] = parse_num(toks[4], *l)?;
    }
    model.columns = cols.names;
    model.lower = lower;
    model.upper = upper;
    model.binary = binary;
    Ok(model)
}

/// Reads free MPS text written by [`write_mps`].
pub fn read_mps(text: &str) -> Result<FlatModel, ExportError> {
    check_version(text.lines().next(), "*")?;
    let mut section = "";
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut cols = Columns::new();
    let mut model = FlatModel::default();
    let mut binary_cols: HashSet<usize> = HashSet::new();
    let mut in_int = false;
    let mut linear: BTreeMap<usize, f64> = BTreeMap::new();
    let mut row_terms: Vec<BTreeMap<usize, f64>> = Vec::new();
    let mut bounds: Vec<(usize, &str, String, f64)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let l = n + 1;
        if raw.starts_with('*') || raw.trim().is_empty() {
            continue;
        }
        if !raw.starts_with(' ') {
            section = raw.split_whitespace().next().unwrap_or("");
            continue;
        }
        let t: Vec<&str> = raw.split_whitespace().collect();
        match section {
            "ROWS" => {
                if t.len() != 2 {
                    return Err(parse_err(l, "expected type and name"));
                }
                let relation = match t[0] {
                    "N" => continue,
                    "L" => Relation::Le,
                    "G" => Relation::Ge,
                    "E" => Relation::Eq,
                    other => return Err(parse_err(l, format!("unknown row type {other}"))),
                };
                row_index.insert(t[1].to_string(), model.rows.len());
                model.rows.push(FlatRow { name: t[1].to_string(), terms: Vec::new(), relation, rhs: 0.0 });
                row_terms.push(BTreeMap::new());
            }
            "COLUMNS" => {
                if t.len() == 3 && t[1] == "'MARKER'" {
                    in_int = t[2] == "'INTORG'";
                    continue;
                }
                if t.len() % 2 != 1 {
                    return Err(parse_err(l, "expected column followed by row/value pairs"));
                }
                let j = cols.get(t[0]);
                if in_int {
                    binary_cols.insert(j);
                }
                for pair in t[1..].chunks(2) {
                    let v = parse_num(pair[1], l)?;
                    if pair[0] == "obj" {
                        if v != 0.0 {
                            *linear.entry(j).or_default() += v;
                        }
                    } else {
                        let r = *row_index.get(pair[0]).ok_or_else(|| parse_err(l, format!("unknown row {}", pair[0])))?;
                        *row_terms[r].entry(j).or_default() += v;
                    }
                }
            }
            "RHS" => {
                for pair in t[1..].chunks(2) {
                    if pair.len() != 2 {
                        return Err(parse_err(l, "dangling RHS entry"));
                    }
                    let v = parse_num(pair[1], l)?;
                    if pair[0] == "obj" {
                        model.constant = -v;
                    } else {
                        let r = *row_index.get(pair[0]).ok_or_else(|| parse_err(l, format!("unknown row {}", pair[0])))?;
                        model.rows[r].rhs = v;
                    }
                }
            }
            "BOUNDS" => {
                let kind = match t[0] {
                    "BV" | "LO" | "UP" | "FX" => t[0],
                    other => return Err(parse_err(l, format!("unsupported bound type {other}"))),
                };
                let col = t.get(2).ok_or_else(|| parse_err(l, "missing column"))?;
                let v = if kind == "BV" { 0.0 } else { parse_num(t.get(3).ok_or_else(|| parse_err(l, "missing value"))?, l)? };
                bounds.push((l, kind, col.to_string(), v));
            }
            "QUADOBJ" => {
                if t.len() != 3 {
                    return Err(parse_err(l, "expected two columns and a value"));
                }
                let (i, j) = (cols.get(t[0]), cols.get(t[1]));
                let v = parse_num(t[2], l)?;
                let q = if i == j { v / 2.0 } else { v };
                model.quadratic.push((i.min(j), i.max(j), q));
            }
            other => return Err(parse_err(l, format!("unexpected data in section {other}"))),
        }
    }
    let n = cols.names.len();
    model.lower = vec![0.0; n];
    model.upper = vec![f64::INFINITY; n];
    model.binary = vec![false; n];
    for &j in &binary_cols {
        model.binary[j] = true;
    }
    for (l, kind, col, v) in bounds {
        let j = *cols.index.get(&col).ok_or_else(|| parse_err(l, format!("unknown column {col}")))?;
        match kind {
            "BV" => {
                model.binary[j] = true;
                model.lower[j] = 0.0;
                model.upper[j] = 1.0;
            }
            "LO" => model.lower[j] = v,
            "UP" => model.upper[j] = v,
            _ => {
                model.lower[j] = v;
                model.upper[j] = v;
            }
        }
    }
    for (row, terms) in model.rows.iter_mut().zip(row_terms) {
        row.terms = terms.into_iter().filter(|&(_, c)| c != 0.0).collect();
    }
    model.linear = linear.into_iter().collect();
    model.columns = cols.names;
    Ok(model)
}
