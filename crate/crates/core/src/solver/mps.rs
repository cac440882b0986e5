//! Fixed-format MPS export and import.
//!
//! Names that do not fit the 8-character field (or contain whitespace) are
//! replaced by `C0000012` / `R0000012` style names derived from the
//! variable or row index, and the replacements are written to a
//! tab-separated map next to the model (`<path>.names`).

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::milp::{MilpModel, ObjectiveSense, Row, Sense, VarKind, Variable};

#[derive(Debug, Error)]
pub enum MpsError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot write `{path}`: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("cannot read `{path}`: {source}")]
    Read { path: PathBuf, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, MpsError>;

const OBJ_ROW: &str = "OBJ";

/// One mangled name: `(kind, mps name, original name)` with kind `col` or `row`.
pub type NameMap = Vec<(String, String, String)>;

fn fits(name: &str) -> bool {
    !name.is_empty() && name.len() <= 8 && !name.chars().any(char::is_whitespace) && name.is_ascii()
}

fn mps_names(originals: impl Iterator<Item = String>, prefix: char, reserved: &[&str]) -> Vec<(String, bool)> {
    let originals: Vec<String> = originals.collect();
    let mut names: Vec<(String, bool)> = originals
        .iter()
        .enumerate()
        .map(
            |(k, s)| {
                if fits(s) && !reserved.contains(&s.as_str()) {
                    (s.clone(), false)
                } else {
                    (format!("{prefix}{k:07}"), true)
                }
            },
        )
        .collect();
    let mut seen = HashSet::new();
    let unique = names.iter().all(|(s, _)| seen.insert(s.clone()));
    if !unique {
        names = (0..originals.len()).map(|k| (format!("{prefix}{k:07}"), true)).collect();
    }
    names
}

fn num(v: f64) -> String {
    let s = format!("{v}");
    if s.len() <= 12 {
        s
    } else {
        format!("{v:e}")
    }
}

fn field_line(out: &mut String, kind: &str, name1: &str, name2: &str, value: f64) {
    // fixed columns: 2-3 kind, 5-12 name, 15-22 name, 25-36 number
    let _ = writeln!(out, " {kind:<2} {name1:<8}  {name2:<8}  {}", num(value));
}

/// Renders `model` as fixed-format MPS and returns the text with the name map.
pub fn write_mps(model: &MilpModel) -> (String, NameMap) {
    let cols = mps_names(model.vars.iter().map(|v| v.name.clone()), 'C', &["MARKER"]);
    let rows = mps_names(model.rows.iter().map(|r| r.name.clone()), 'R', &[OBJ_ROW]);
    let mut map = NameMap::new();
    for (v, (s, mangled)) in model.vars.iter().zip(&cols) {
        if *mangled {
            map.push(("col".into(), s.clone(), v.name.clone()));
        }
    }
    for (r, (s, mangled)) in model.rows.iter().zip(&rows) {
        if *mangled {
            map.push(("row".into(), s.clone(), r.name.clone()));
        }
    }

    let mut out = String::new();
    let name = if fits(&model.name) { model.name.as_str() } else { "MODEL" };
    let _ = writeln!(out, "NAME          {name}");
    if model.sense == ObjectiveSense::Maximize {
        out.push_str("OBJSENSE\n    MAX\n");
    }
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N  {OBJ_ROW}");
    for (r, (s, _)) in model.rows.iter().zip(&rows) {
        let t = match r.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        let _ = writeln!(out, " {t}  {s}");
    }

    let mut entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.n_vars()];
    for (ri, r) in model.rows.iter().enumerate() {
        for &(j, a) in &r.terms {
            entries[j].push((ri, a));
        }
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0;
    for (j, v) in model.vars.iter().enumerate() {
        let is_int = v.kind == VarKind::Binary;
        if is_int != in_int {
            let tag = if is_int { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    M{marker:07}  'MARKER'                 {tag}");
            marker += 1;
            in_int = is_int;
        }
        let c = &cols[j].0;
        let obj = model.objective[j];
        if obj != 0.0 || entries[j].is_empty() {
            field_line(&mut out, "", c, OBJ_ROW, obj);
        }
        for &(ri, a) in &entries[j] {
            field_line(&mut out, "", c, &rows[ri].0, a);
        }
    }
    if in_int {
        let _ = writeln!(out, "    M{marker:07}  'MARKER'                 'INTEND'");
    }

    out.push_str("RHS\n");
    if model.objective_constant != 0.0 {
        field_line(&mut out, "", "RHS", OBJ_ROW, -model.objective_constant);
    }
    for (r, (s, _)) in model.rows.iter().zip(&rows) {
        if r.rhs != 0.0 {
            field_line(&mut out, "", "RHS", s, r.rhs);
        }
    }

    out.push_str("BOUNDS\n");
    for (v, (c, _)) in model.vars.iter().zip(&cols) {
        let (lo, up) = (v.lower, v.upper);
        if v.kind == VarKind::Binary {
            if lo != 0.0 {
                field_line(&mut out, "LO", "BND", c, lo);
            }
            field_line(&mut out, "UP", "BND", c, up);
            continue;
        }
        if lo == up {
            field_line(&mut out, "FX", "BND", c, lo);
            continue;
        }
        match (lo.is_finite(), up.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " FR BND       {c}");
            }
            (false, true) => {
                let _ = writeln!(out, " MI BND       {c}");
                field_line(&mut out, "UP", "BND", c, up);
            }
            (true, fin_up) => {
                if lo != 0.0 {
                    field_line(&mut out, "LO", "BND", c, lo);
                }
                if fin_up {
                    field_line(&mut out, "UP", "BND", c, up);
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    (out, map)
}

fn names_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".names");
    PathBuf::from(s)
}

/// Writes the MPS file and, when names were mangled, its name map.
pub fn export_mps(model: &MilpModel, path: impl AsRef<Path>) -> Result<NameMap> {
    let path = path.as_ref();
    let (text, map) = write_mps(model);
    std::fs::write(path, text).map_err(|source| MpsError::Write { path: path.to_path_buf(), source })?;
    let np = names_path(path);
    if map.is_empty() {
        if np.exists() {
            std::fs::remove_file(&np).map_err(|source| MpsError::Write { path: np.clone(), source })?;
        }
    } else {
        let mut tsv = String::from("kind\tmps\toriginal\n");
        for (k, s, o) in &map {
            let _ = writeln!(tsv, "{k}\t{s}\t{o}");
        }
        std::fs::write(&np, tsv).map_err(|source| MpsError::Write { path: np.clone(), source })?;
    }
    Ok(map)
}

/// Reads an MPS file and its name map if present.
pub fn import_mps(path: impl AsRef<Path>) -> Result<MilpModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MpsError::Read { path: path.to_path_buf(), source })?;
    let np = names_path(path);
    let names = if np.exists() {
        Some(std::fs::read_to_string(&np).map_err(|source| MpsError::Read { path: np.clone(), source })?)
    } else {
        None
    };
    read_mps(&text, names.as_deref())
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Start,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Bounds,
}

/// Parses MPS text. Tokens are whitespace separated, so numbers may overflow
/// their fixed fields.
pub fn read_mps(text: &str, names: Option<&str>) -> Result<MilpModel> {
    let mut rename: HashMap<(String, String), String> = HashMap::new();
    if let Some(names) = names {
        for (k, line) in names.lines().enumerate().skip(1) {
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(MpsError::Parse { line: k + 1, message: "malformed name map entry".into() });
            }
            rename.insert((parts[0].to_string(), parts[1].to_string()), parts[2].to_string());
        }
    }
    let mut model = MilpModel::new("MODEL");
    let mut section = Section::Start;
    let mut obj_row: Option<String> = None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut row_terms: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut in_int = false;
    let mut ended = false;

    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let err = |message: String| MpsError::Parse { line: line_no, message };
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') {
            section = match toks[0] {
                "NAME" => {
                    if let Some(n) = toks.get(1) {
                        model.name = n.to_string();
                    }
                    Section::Start
                }
                "OBJSENSE" => {
                    if let Some(s) = toks.get(1) {
                        model.sense = parse_sense(s).ok_or_else(|| err(format!("unknown objective sense `{s}`")))?;
                    }
                    Section::ObjSense
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "RANGES" => return Err(err("RANGES are not supported".into())),
                "ENDATA" => {
                    ended = true;
                    break;
                }
                other => return Err(err(format!("unknown section `{other}`"))),
            };
            continue;
        }
        let number = |s: &str| s.parse::<f64>().map_err(|_| err(format!("invalid number `{s}`")));
        match section {
            Section::Start => return Err(err("data before any section".into())),
            Section::ObjSense => {
                model.sense = parse_sense(toks[0]).ok_or_else(|| err(format!("unknown objective sense `{}`", toks[0])))?;
            }
            Section::Rows => {
                if toks.len() != 2 {
                    return Err(err("expected `<type> <name>`".into()));
                }
                let sense = match toks[0] {
                    "N" => {
                        if obj_row.is_none() {
                            obj_row = Some(toks[1].to_string());
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    t => return Err(err(format!("unknown row type `{t}`"))),
                };
                let name = rename.get(&("row".to_string(), toks[1].to_string())).cloned().unwrap_or_else(|| toks[1].to_string());
                row_index.insert(toks[1].to_string(), model.rows.len());
                model.rows.push(Row { name, terms: Vec::new(), sense, rhs: 0.0 });
                row_terms.push(Vec::new());
            }
            Section::Columns => {
                if toks.len() >= 3 && toks[1] == "'MARKER'" {
                    match toks[2] {
                        "'INTORG'" => in_int = true,
                        "'INTEND'" => in_int = false,
                        t => return Err(err(format!("unknown marker `{t}`"))),
                    }
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(err("expected `<column> <row> <value> [<row> <value>]`".into()));
                }
                let j = match col_index.get(toks[0]) {
                    Some(&j) => j,
                    None => {
                        let name =
                            rename.get(&("col".to_string(), toks[0].to_string())).cloned().unwrap_or_else(|| toks[0].to_string());
                        let j = if in_int {
                            model.add_var(name, VarKind::Binary, 0.0, 1.0)
                        } else {
                            model.add_var(name, VarKind::Continuous, 0.0, f64::INFINITY)
                        };
                        col_index.insert(toks[0].to_string(), j);
                        j
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let v = number(pair[1])?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        model.objective[j] = v;
                    } else {
                        let r = *row_index.get(pair[0]).ok_or_else(|| err(format!("unknown row `{}`", pair[0])))?;
                        row_terms[r].push((j, v));
                    }
                }
            }
            Section::Rhs => {
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(err("expected `<set> <row> <value> [<row> <value>]`".into()));
                }
                for pair in toks[1..].chunks(2) {
                    let v = number(pair[1])?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        model.objective_constant = -v;
                    } else {
                        let r = *row_index.get(pair[0]).ok_or_else(|| err(format!("unknown row `{}`", pair[0])))?;
                        model.rows[r].rhs = v;
                    }
                }
            }
            Section::Bounds => {
                if toks.len() < 3 {
                    return Err(err("expected `<type> <set> <column> [<value>]`".into()));
                }
                let j = *col_index.get(toks[2]).ok_or_else(|| err(format!("unknown column `{}`", toks[2])))?;
                let value = toks.get(3).map(|s| number(s)).transpose()?;
                let need = || value.ok_or_else(|| err("bound value missing".into()));
                let var: &mut Variable = &mut model.vars[j];
                match toks[0] {
                    "UP" => var.upper = need()?,
                    "LO" => var.lower = need()?,
                    "FX" => {
                        let v = need()?;
                        var.lower = v;
                        var.upper = v;
                    }
                    "FR" => {
                        var.lower = f64::NEG_INFINITY;
                        var.upper = f64::INFINITY;
                    }
                    "MI" => var.lower = f64::NEG_INFINITY,
                    "PL" => var.upper = f64::INFINITY,
                    "BV" => {
                        var.kind = VarKind::Binary;
                        var.lower = 0.0;
                        var.upper = 1.0;
                    }
                    t => return Err(err(format!("unsupported bound type `{t}`"))),
                }
            }
        }
    }
    if !ended {
        return Err(MpsError::Parse { line: text.lines().count(), message: "missing ENDATA".into() });
    }
    let terms = std::mem::take(&mut row_terms);
    let rows = std::mem::take(&mut model.rows);
    for (row, t) in rows.into_iter().zip(terms) {
        model.add_row(row.name, t, row.sense, row.rhs);
    }
    Ok(model)
}

fn parse_sense(s: &str) -> Option<ObjectiveSense> {
    match s {
        "MAX" | "MAXIMIZE" => Some(ObjectiveSense::Maximize),
        "MIN" | "MINIMIZE" => Some(ObjectiveSense::Minimize),
        _ => None,
    }
}
