//! File formats: JSON for models, tables, reports, and solver output; CSV
//! for datasets, distance matrices, and experiment rates.
//!
//! JSON floats are written in scientific notation with 17 significant
//! digits, which round-trips every finite f64 exactly; readers accept any
//! JSON number. CSV floats use the shortest exact representation.
//!
//! Cross-nested models are stored in log domain (`log_alpha`, `log_u`): at
//! the exponents the construction requires, linear-domain weights leave the
//! f64 range entirely.

use crate::axioms::AxiomReport;
use crate::cnl::{CnlModel, SolveDiagnostics};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::identify::LossBreakdown;
use crate::models::{ChoiceModel, NestedLogitModel, NscModel, ThreeStepModel};
use crate::partition::NestStructure;
use crate::sim::RatePoint;
use crate::similarity::{DistanceMatrix, SimilarityRelation};
use crate::table::ChoiceTable;
use crate::universe::{Menu, Universe};

use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Formats a finite float with 17 significant digits (scientific notation),
/// the smallest count that always round-trips f64. Non-finite values render
/// as `inf`, `-inf`, `nan`.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Minimal JSON tree with explicit float formatting (see [`fmt_float`]).
enum J {
    Obj(Vec<(String, J)>),
    Arr(Vec<J>),
    Str(String),
    F(f64),
    U(u64),
    B(bool),
    Null,
}

impl J {
    fn obj(fields: Vec<(&str, J)>) -> J {
        J::Obj(fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    fn render(&self) -> String {
        let mut out = String::new();
        self.write(&mut out);
        out.push('\n');
        out
    }

    fn write(&self, out: &mut String) {
        match self {
            J::Obj(fields) => {
                out.push('{');
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write_string(k, out);
                    out.push(':');
                    v.write(out);
                }
                out.push('}');
            }
            J::Arr(items) => {
                out.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    v.write(out);
                }
                out.push(']');
            }
            J::Str(s) => write_string(s, out),
            J::F(x) => {
                if x.is_finite() {
                    out.push_str(&fmt_float(*x));
                } else {
                    // JSON has no non-finite numbers; quote the token.
                    write_string(&fmt_float(*x), out);
                }
            }
            J::U(x) => {
                let _ = write!(out, "{x}");
            }
            J::B(b) => out.push_str(if *b { "true" } else { "false" }),
            J::Null => out.push_str("null"),
        }
    }
}

fn write_string(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

fn names_arr(universe: &Universe, menu: Menu) -> J {
    J::Arr(menu.members().map(|a| J::Str(universe.name(a).to_string())).collect())
}

fn universe_arr(universe: &Universe) -> J {
    J::Arr(universe.names().iter().map(|n| J::Str(n.clone())).collect())
}

/// Subset key: member names joined by `|`, ascending by index.
fn menu_key(universe: &Universe, menu: Menu) -> String {
    menu.members().map(|a| universe.name(a)).collect::<Vec<_>>().join("|")
}

fn u_obj(universe: &Universe, u: &[f64]) -> J {
    J::Obj(
        u.iter()
            .enumerate()
            .map(|(i, x)| (universe.name(i).to_string(), J::F(*x)))
            .collect(),
    )
}

fn v_flat_obj(universe: &Universe, v: &BTreeMap<Menu, f64>) -> J {
    J::Obj(v.iter().map(|(s, x)| (menu_key(universe, *s), J::F(*x))).collect())
}

/// Alternative names must not contain the format's delimiters.
fn check_names(universe: &Universe) -> Result<()> {
    for name in universe.names() {
        if name.contains('|') || name.contains(',') || name.is_empty() {
            return Err(Error::Parse(format!(
                "alternative name {name:?} cannot be written: empty or contains '|' or ','"
            )));
        }
    }
    Ok(())
}

// ---- reading helpers ----

fn as_obj<'a>(v: &'a Value, what: &str) -> Result<&'a serde_json::Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::Parse(format!("{what} must be a JSON object")))
}

fn get<'a>(m: &'a serde_json::Map<String, Value>, key: &str) -> Result<&'a Value> {
    m.get(key).ok_or_else(|| Error::Parse(format!("missing field {key:?}")))
}

fn as_arr<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::Parse(format!("{what} must be a JSON array")))
}

fn as_str<'a>(v: &'a Value, what: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::Parse(format!("{what} must be a JSON string")))
}

fn as_f64(v: &Value, what: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::Parse(format!("{what} must be a JSON number")))
}

fn parse_universe(m: &serde_json::Map<String, Value>) -> Result<Universe> {
    let names = as_arr(get(m, "universe")?, "universe")?
        .iter()
        .map(|v| as_str(v, "alternative name").map(str::to_string))
        .collect::<Result<Vec<_>>>()?;
    Universe::new(names)
}

fn parse_name_list(universe: &Universe, v: &Value, what: &str) -> Result<Menu> {
    let mut menu = Menu::empty();
    for item in as_arr(v, what)? {
        menu = menu.with(universe.resolve(as_str(item, what)?)?);
    }
    Ok(menu)
}

fn parse_menu_key(universe: &Universe, key: &str) -> Result<Menu> {
    let mut menu = Menu::empty();
    for name in key.split('|') {
        menu = menu.with(universe.resolve(name)?);
    }
    Ok(menu)
}

fn parse_blocks(
    universe: &Universe,
    m: &serde_json::Map<String, Value>,
    field: &str,
) -> Result<NestStructure> {
    let blocks = as_arr(get(m, field)?, field)?
        .iter()
        .map(|b| parse_name_list(universe, b, field))
        .collect::<Result<Vec<_>>>()?;
    NestStructure::new(blocks, universe.len())
}

fn parse_u(universe: &Universe, m: &serde_json::Map<String, Value>) -> Result<Vec<f64>> {
    let obj = as_obj(get(m, "u")?, "u")?;
    let mut u = vec![None; universe.len()];
    for (name, val) in obj {
        u[universe.resolve(name)?] = Some(as_f64(val, "utility")?);
    }
    u.into_iter()
        .enumerate()
        .map(|(i, x)| {
            x.ok_or_else(|| Error::Parse(format!("missing utility for {:?}", universe.name(i))))
        })
        .collect()
}

fn parse_v_flat(
    universe: &Universe,
    m: &serde_json::Map<String, Value>,
    field: &str,
) -> Result<BTreeMap<Menu, f64>> {
    let obj = as_obj(get(m, field)?, field)?;
    let mut v = BTreeMap::new();
    for (key, val) in obj {
        v.insert(parse_menu_key(universe, key)?, as_f64(val, field)?);
    }
    Ok(v)
}

// ---- models ----

/// `{universe, blocks, u, v: {block_index: {subset: value}}}`.
pub fn nsc_to_json(model: &NscModel) -> Result<String> {
    let universe = model.universe();
    check_names(universe)?;
    let v_by_block: Vec<(String, J)> = model
        .structure()
        .blocks()
        .iter()
        .enumerate()
        .map(|(i, block)| {
            let entries: Vec<(String, J)> = model
                .v_table()
                .iter()
                .filter(|(s, _)| s.is_subset_of(*block))
                .map(|(s, x)| (menu_key(universe, *s), J::F(*x)))
                .collect();
            (i.to_string(), J::Obj(entries))
        })
        .collect();
    Ok(J::obj(vec![
        ("universe", universe_arr(universe)),
        (
            "blocks",
            J::Arr(
                model
                    .structure()
                    .blocks()
                    .iter()
                    .map(|b| names_arr(universe, *b))
                    .collect(),
            ),
        ),
        ("u", u_obj(universe, model.u())),
        ("v", J::Obj(v_by_block)),
    ])
    .render())
}

pub fn nsc_from_json(text: &str) -> Result<NscModel> {
    let value: Value = serde_json::from_str(text)?;
    let m = as_obj(&value, "model")?;
    let universe = parse_universe(m)?;
    let structure = parse_blocks(&universe, m, "blocks")?;
    let u = parse_u(&universe, m)?;
    let v_obj = as_obj(get(m, "v")?, "v")?;
    let mut v = BTreeMap::new();
    for (bidx, sub) in v_obj {
        let i: usize = bidx
            .parse()
            .map_err(|_| Error::Parse(format!("block index {bidx:?} is not an integer")))?;
        let block = *structure
            .blocks()
            .get(i)
            .ok_or_else(|| Error::Parse(format!("block index {i} out of range")))?;
        for (key, val) in as_obj(sub, "v block")? {
            let subset = parse_menu_key(&universe, key)?;
            if !subset.is_subset_of(block) {
                return Err(Error::Parse(format!(
                    "subset {key:?} is not inside block {i}"
                )));
            }
            v.insert(subset, as_f64(val, "nest value")?);
        }
    }
    NscModel::new(universe, structure, u, v)
}

/// `{universe, blocks, u, eta}`.
pub fn nested_logit_to_json(model: &NestedLogitModel) -> Result<String> {
    let universe = model.universe();
    check_names(universe)?;
    Ok(J::obj(vec![
        ("universe", universe_arr(universe)),
        (
            "blocks",
            J::Arr(
                model
                    .structure()
                    .blocks()
                    .iter()
                    .map(|b| names_arr(universe, *b))
                    .collect(),
            ),
        ),
        ("u", u_obj(universe, model.u())),
        ("eta", J::Arr(model.eta().iter().map(|e| J::F(*e)).collect())),
    ])
    .render())
}

pub fn nested_logit_from_json(text: &str) -> Result<NestedLogitModel> {
    let value: Value = serde_json::from_str(text)?;
    let m = as_obj(&value, "model")?;
    let universe = parse_universe(m)?;
    let structure = parse_blocks(&universe, m, "blocks")?;
    let u = parse_u(&universe, m)?;
    let eta = as_arr(get(m, "eta")?, "eta")?
        .iter()
        .map(|e| as_f64(e, "eta"))
        .collect::<Result<Vec<_>>>()?;
    NestedLogitModel::new(universe, structure, u, eta)
}

/// `{universe, outer, inner, u, v, w}` with flat subset-keyed `v` and `w`.
pub fn three_step_to_json(model: &ThreeStepModel) -> Result<String> {
    let universe = model.universe();
    check_names(universe)?;
    Ok(J::obj(vec![
        ("universe", universe_arr(universe)),
        (
            "outer",
            J::Arr(
                model
                    .outer()
                    .blocks()
                    .iter()
                    .map(|b| names_arr(universe, *b))
                    .collect(),
            ),
        ),
        (
            "inner",
            J::Arr(
                model
                    .inner()
                    .iter()
                    .map(|nests| {
                        J::Arr(nests.iter().map(|nest| names_arr(universe, *nest)).collect())
                    })
                    .collect(),
            ),
        ),
        ("u", u_obj(universe, model.u())),
        ("v", v_flat_obj(universe, model.v_table())),
        ("w", v_flat_obj(universe, model.w_table())),
    ])
    .render())
}

pub fn three_step_from_json(text: &str) -> Result<ThreeStepModel> {
    let value: Value = serde_json::from_str(text)?;
    let m = as_obj(&value, "model")?;
    let universe = parse_universe(m)?;
    let outer = parse_blocks(&universe, m, "outer")?;
    let inner = as_arr(get(m, "inner")?, "inner")?
        .iter()
        .map(|nests| {
            as_arr(nests, "inner block")?
                .iter()
                .map(|nest| parse_name_list(&universe, nest, "inner nest"))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let u = parse_u(&universe, m)?;
    let v = parse_v_flat(&universe, m, "v")?;
    let w = parse_v_flat(&universe, m, "w")?;
    ThreeStepModel::new(universe, outer, inner, u, v, w)
}

/// A model of any of the three kinds, as read from a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Nsc(NscModel),
    NestedLogit(NestedLogitModel),
    ThreeStep(ThreeStepModel),
}

impl ChoiceModel for AnyModel {
    fn universe(&self) -> &Universe {
        match self {
            AnyModel::Nsc(m) => m.universe(),
            AnyModel::NestedLogit(m) => m.universe(),
            AnyModel::ThreeStep(m) => m.universe(),
        }
    }

    fn prob(&self, a: usize, menu: Menu) -> Result<f64> {
        match self {
            AnyModel::Nsc(m) => m.prob(a, menu),
            AnyModel::NestedLogit(m) => m.prob(a, menu),
            AnyModel::ThreeStep(m) => m.prob(a, menu),
        }
    }
}

pub fn model_to_json(model: &AnyModel) -> Result<String> {
    match model {
        AnyModel::Nsc(m) => nsc_to_json(m),
        AnyModel::NestedLogit(m) => nested_logit_to_json(m),
        AnyModel::ThreeStep(m) => three_step_to_json(m),
    }
}

/// Reads any model file, dispatching on its fields: `outer` marks a
/// three-step model, `eta` a nested logit, otherwise plain nested choice.
pub fn model_from_json(text: &str) -> Result<AnyModel> {
    let value: Value = serde_json::from_str(text)?;
    let m = as_obj(&value, "model")?;
    if m.contains_key("outer") {
        three_step_from_json(text).map(AnyModel::ThreeStep)
    } else if m.contains_key("eta") {
        nested_logit_from_json(text).map(AnyModel::NestedLogit)
    } else {
        nsc_from_json(text).map(AnyModel::Nsc)
    }
}

// ---- tables ----

/// `{universe, menus: [{members, probs}]}`.
pub fn table_to_json(table: &ChoiceTable) -> Result<String> {
    let universe = table.universe();
    check_names(universe)?;
    Ok(J::obj(vec![
        ("universe", universe_arr(universe)),
        (
            "menus",
            J::Arr(
                table
                    .rows()
                    .map(|(menu, row)| {
                        J::obj(vec![
                            ("members", names_arr(universe, menu)),
                            ("probs", J::Arr(row.iter().map(|p| J::F(*p)).collect())),
                        ])
                    })
                    .collect(),
            ),
        ),
    ])
    .render())
}

pub fn table_from_json(text: &str) -> Result<ChoiceTable> {
    let value: Value = serde_json::from_str(text)?;
    let m = as_obj(&value, "table")?;
    let universe = parse_universe(m)?;
    let mut rows = Vec::new();
    for entry in as_arr(get(m, "menus")?, "menus")? {
        let entry = as_obj(entry, "menu entry")?;
        let menu = parse_name_list(&universe, get(entry, "members")?, "members")?;
        let probs = as_arr(get(entry, "probs")?, "probs")?
            .iter()
            .map(|p| as_f64(p, "probability"))
            .collect::<Result<Vec<_>>>()?;
        rows.push((menu, probs));
    }
    ChoiceTable::new(universe, rows)
}

// ---- datasets ----

/// CSV with header `menu_id,alternative,count`; all rows sharing a menu_id
/// form one menu. Written menu ids are the member names joined by `|`.
pub fn dataset_to_csv(dataset: &Dataset) -> Result<String> {
    let universe = dataset.universe();
    check_names(universe)?;
    let mut out = String::from("menu_id,alternative,count\n");
    for (menu, counts) in dataset.rows() {
        let id = menu_key(universe, menu);
        for (pos, a) in menu.members().enumerate() {
            let _ = writeln!(out, "{id},{},{}", universe.name(a), counts[pos]);
        }
    }
    Ok(out)
}

/// Parses the dataset CSV. Menu ids are arbitrary grouping keys (rows need
/// not be contiguous); the universe is every alternative name in first
/// appearance order; duplicate (menu, alternative) rows sum.
pub fn dataset_from_csv(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    match lines.next() {
        Some(h) if h == "menu_id,alternative,count" => {}
        Some(h) => {
            return Err(Error::Parse(format!(
                "expected header \"menu_id,alternative,count\", found {h:?}"
            )))
        }
        None => return Err(Error::Parse("empty dataset file".into())),
    }
    let mut names: Vec<String> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    // menu_id -> alternative index -> count
    let mut groups: BTreeMap<String, BTreeMap<usize, u64>> = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!(
                "line {}: expected 3 fields, found {}",
                lineno + 2,
                fields.len()
            )));
        }
        let a = match index.get(fields[1]) {
            Some(i) => *i,
            None => {
                let i = names.len();
                names.push(fields[1].to_string());
                index.insert(fields[1].to_string(), i);
                i
            }
        };
        let count: u64 = fields[2].parse().map_err(|_| {
            Error::Parse(format!("line {}: bad count {:?}", lineno + 2, fields[2]))
        })?;
        *groups.entry(fields[0].to_string()).or_default().entry(a).or_insert(0) += count;
    }
    let universe = Universe::new(names)?;
    let mut dataset = Dataset::empty(universe);
    for by_alt in groups.values() {
        let menu = Menu::from_members(by_alt.keys().copied());
        let counts: Vec<u64> = by_alt.values().copied().collect();
        dataset.add_counts(menu, &counts)?;
    }
    Ok(dataset)
}

// ---- identification reports ----

/// JSON array of `{partition, d1, d2, total, flags}` in the given order.
pub fn report_to_json(ranked: &[LossBreakdown], universe: &Universe) -> Result<String> {
    check_names(universe)?;
    Ok(J::Arr(
        ranked
            .iter()
            .map(|b| {
                J::obj(vec![
                    (
                        "partition",
                        J::Arr(
                            b.partition
                                .blocks()
                                .iter()
                                .map(|block| names_arr(universe, *block))
                                .collect(),
                        ),
                    ),
                    ("d1", J::F(b.d1)),
                    ("d2", J::F(b.d2)),
                    ("total", J::F(b.total)),
                    (
                        "flags",
                        J::obj(vec![
                            ("d1_degenerate", J::B(b.d1_degenerate())),
                            ("d2_degenerate", J::B(b.d2_degenerate())),
                        ]),
                    ),
                ])
            })
            .collect(),
    )
    .render())
}

// ---- axiom reports ----

/// JSON array of axiom reports, witnesses spelled with alternative names.
pub fn axiom_reports_to_json(reports: &[AxiomReport], universe: &Universe) -> Result<String> {
    check_names(universe)?;
    Ok(J::Arr(
        reports
            .iter()
            .map(|r| {
                J::obj(vec![
                    ("axiom", J::Str(r.axiom.clone())),
                    ("passed", J::B(r.passed)),
                    ("tol", J::F(r.tol)),
                    ("skipped", J::U(r.skipped)),
                    ("vacuous", J::B(r.vacuous)),
                    (
                        "coverage",
                        match r.coverage {
                            Some((checked, total)) => J::obj(vec![
                                ("checked", J::U(checked)),
                                ("total", J::U(total)),
                            ]),
                            None => J::Null,
                        },
                    ),
                    (
                        "witnesses",
                        J::Arr(
                            r.witnesses
                                .iter()
                                .map(|w| {
                                    J::obj(vec![
                                        (
                                            "menus",
                                            J::Arr(
                                                w.menus
                                                    .iter()
                                                    .map(|m| names_arr(universe, *m))
                                                    .collect(),
                                            ),
                                        ),
                                        (
                                            "alternatives",
                                            J::Arr(
                                                w.alternatives
                                                    .iter()
                                                    .map(|a| {
                                                        J::Str(universe.name(*a).to_string())
                                                    })
                                                    .collect(),
                                            ),
                                        ),
                                        ("lhs", J::F(w.lhs)),
                                        ("rhs", J::F(w.rhs)),
                                    ])
                                })
                                .collect(),
                        ),
                    ),
                ])
            })
            .collect(),
    )
    .render())
}

// ---- cross-nested models ----

/// `{universe, nests, log_alpha: [[nest_index, name, value]], log_u,
/// lambda, residual}`. Log domain throughout.
pub fn cnl_to_json(model: &CnlModel) -> Result<String> {
    let universe = model.universe();
    check_names(universe)?;
    let mut triplets = Vec::new();
    for (k, nest) in model.nests().iter().enumerate() {
        for x in nest.members() {
            triplets.push(J::Arr(vec![
                J::U(k as u64),
                J::Str(universe.name(x).to_string()),
                J::F(model.log_alpha(k, x)),
            ]));
        }
    }
    Ok(J::obj(vec![
        ("universe", universe_arr(universe)),
        (
            "nests",
            J::Arr(model.nests().iter().map(|n| names_arr(universe, *n)).collect()),
        ),
        ("log_alpha", J::Arr(triplets)),
        (
            "log_u",
            J::Obj(
                (0..universe.len())
                    .map(|x| (universe.name(x).to_string(), J::F(model.log_u(x))))
                    .collect(),
            ),
        ),
        ("lambda", J::Arr(model.lambda().iter().map(|l| J::F(*l)).collect())),
        ("residual", J::F(model.residual())),
    ])
    .render())
}

pub fn cnl_from_json(text: &str) -> Result<CnlModel> {
    let value: Value = serde_json::from_str(text)?;
    let m = as_obj(&value, "model")?;
    let universe = parse_universe(m)?;
    let nests = as_arr(get(m, "nests")?, "nests")?
        .iter()
        .map(|n| parse_name_list(&universe, n, "nest"))
        .collect::<Result<Vec<_>>>()?;
    let mut log_alpha: Vec<Vec<Option<f64>>> =
        nests.iter().map(|n| vec![None; n.len()]).collect();
    for triplet in as_arr(get(m, "log_alpha")?, "log_alpha")? {
        let parts = as_arr(triplet, "log_alpha entry")?;
        if parts.len() != 3 {
            return Err(Error::Parse("log_alpha entries are [nest, name, value]".into()));
        }
        let k = parts[0]
            .as_u64()
            .ok_or_else(|| Error::Parse("nest index must be an integer".into()))?
            as usize;
        if k >= nests.len() {
            return Err(Error::Parse(format!("nest index {k} out of range")));
        }
        let x = universe.resolve(as_str(&parts[1], "alternative name")?)?;
        let pos = nests[k].position_of(x).ok_or_else(|| {
            Error::Parse(format!("alternative {:?} is not in nest {k}", universe.name(x)))
        })?;
        log_alpha[k][pos] = Some(as_f64(&parts[2], "log weight")?);
    }
    let log_alpha = log_alpha
        .into_iter()
        .enumerate()
        .map(|(k, row)| {
            row.into_iter()
                .map(|x| x.ok_or_else(|| Error::Parse(format!("nest {k} is missing a weight"))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let log_u_obj = as_obj(get(m, "log_u")?, "log_u")?;
    let mut log_u = vec![None; universe.len()];
    for (name, val) in log_u_obj {
        log_u[universe.resolve(name)?] = Some(as_f64(val, "log utility")?);
    }
    let log_u = log_u
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            x.ok_or_else(|| {
                Error::Parse(format!("missing log utility for {:?}", universe.name(i)))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let lambda = as_arr(get(m, "lambda")?, "lambda")?
        .iter()
        .map(|l| as_f64(l, "lambda"))
        .collect::<Result<Vec<_>>>()?;
    let residual = as_f64(get(m, "residual")?, "residual")?;
    CnlModel::from_log_parts(universe, nests, log_alpha, log_u, lambda, residual)
}

/// Exponent-fit result: fitted `eta`/`delta` per block, and either the
/// nested logit model or the worst-violating subset.
pub fn eta_to_json(fit: &crate::recover::EtaRecovery, universe: &Universe) -> Result<String> {
    check_names(universe)?;
    let (is_nl, model, violation) = match &fit.outcome {
        crate::recover::EtaOutcome::NestedLogit(m) => (true, Some(m), None),
        crate::recover::EtaOutcome::NotNestedLogit { block, subset, deviation } => {
            (false, None, Some((*block, *subset, *deviation)))
        }
    };
    Ok(J::obj(vec![
        ("eta", J::Arr(fit.eta.iter().map(|e| J::F(*e)).collect())),
        ("delta", J::Arr(fit.delta.iter().map(|d| J::F(*d)).collect())),
        (
            "defaulted_blocks",
            J::Arr(fit.defaulted_blocks.iter().map(|b| J::U(*b as u64)).collect()),
        ),
        ("nested_logit", J::B(is_nl)),
        (
            "model",
            match model {
                // Embed the model object, not a string of it.
                Some(m) => json_tree(&nested_logit_to_json(m)?),
                None => J::Null,
            },
        ),
        (
            "violation",
            match violation {
                Some((block, subset, deviation)) => J::obj(vec![
                    ("block", J::U(block as u64)),
                    ("subset", names_arr(universe, subset)),
                    ("deviation", J::F(deviation)),
                ]),
                None => J::Null,
            },
        ),
    ])
    .render())
}

/// Reparses rendered JSON into a J tree for embedding (floats arrive with
/// all 17 digits, so the extra hop is lossless).
fn json_tree(text: &str) -> J {
    fn of(v: &Value) -> J {
        match v {
            Value::Null => J::Null,
            Value::Bool(b) => J::B(*b),
            Value::Number(n) => {
                if let Some(u) = n.as_u64() {
                    J::U(u)
                } else {
                    J::F(n.as_f64().unwrap_or(f64::NAN))
                }
            }
            Value::String(s) => J::Str(s.clone()),
            Value::Array(items) => J::Arr(items.iter().map(of).collect()),
            Value::Object(fields) => {
                J::Obj(fields.iter().map(|(k, v)| (k.clone(), of(v))).collect())
            }
        }
    }
    match serde_json::from_str::<Value>(text) {
        Ok(v) => of(&v),
        Err(_) => J::Null,
    }
}

/// Solver diagnostics, residual trace included.
pub fn diagnostics_to_json(diag: &SolveDiagnostics) -> String {
    J::obj(vec![
        ("iterations", J::U(diag.iterations as u64)),
        ("attempts", J::U(diag.attempts as u64)),
        ("escalations", J::U(diag.escalations as u64)),
        ("lambda", J::F(diag.lambda)),
        ("damping", J::F(diag.damping)),
        ("residual", J::F(diag.residual)),
        ("max_reproduction_error", J::F(diag.max_reproduction_error)),
        (
            "residual_trace",
            J::Arr(diag.residual_trace.iter().map(|r| J::F(*r)).collect()),
        ),
    ])
    .render()
}

// ---- similarity and distances ----

/// JSON adjacency object: name -> list of similar alternatives.
pub fn similarity_to_json(relation: &SimilarityRelation) -> Result<String> {
    let universe = relation.universe();
    check_names(universe)?;
    Ok(J::Obj(
        relation
            .adjacency()
            .iter()
            .enumerate()
            .map(|(a, nbrs)| {
                (
                    universe.name(a).to_string(),
                    J::Arr(nbrs.iter().map(|b| J::Str(universe.name(*b).to_string())).collect()),
                )
            })
            .collect(),
    )
    .render())
}

/// CSV with header `a,b,d,count`, one row per unordered pair.
pub fn distance_to_csv(matrix: &DistanceMatrix) -> Result<String> {
    let universe = matrix.universe();
    check_names(universe)?;
    let mut out = String::from("a,b,d,count\n");
    for (a, b, d, count) in matrix.pairs() {
        let _ = writeln!(out, "{},{},{},{}", universe.name(a), universe.name(b), d, count);
    }
    Ok(out)
}

// ---- experiment rates ----

/// CSV with header `delta,trials,correct,rate,ci_low,ci_high`.
pub fn rates_to_csv(points: &[RatePoint]) -> String {
    let mut out = String::from("delta,trials,correct,rate,ci_low,ci_high\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.delta, p.trials, p.correct, p.rate, p.ci_low, p.ci_high
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axioms::check_iia;
    use crate::models::full_choice_table;
    use crate::sim::wilson_interval;

    fn sample_nsc() -> NscModel {
        let universe = Universe::indexed(4).unwrap();
        let structure = NestStructure::new(
            vec![Menu::from_members([0, 1]), Menu::from_members([2, 3])],
            4,
        )
        .unwrap();
        let v: BTreeMap<Menu, f64> = [
            (Menu::from_members([0]), 1.0),
            (Menu::from_members([1]), 1.4),
            (Menu::from_members([0, 1]), 2.9),
            (Menu::from_members([2]), 0.7),
            (Menu::from_members([3]), 1.1),
            (Menu::from_members([2, 3]), 1.6),
        ]
        .into_iter()
        .collect();
        NscModel::new(universe, structure, vec![1.0, 2.0, 0.5, 1.5], v).unwrap()
    }

    #[test]
    fn float_format_is_lossless() {
        for x in [0.1, 1.0, -2.5e-17, 0.62, f64::MIN_POSITIVE, 1.7976931348623157e308] {
            let text = fmt_float(x);
            assert_eq!(text.parse::<f64>().unwrap(), x, "{text}");
        }
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_float(f64::INFINITY), "inf");
    }

    #[test]
    fn nsc_json_round_trips() {
        let model = sample_nsc();
        let text = nsc_to_json(&model).unwrap();
        let back = nsc_from_json(&text).unwrap();
        assert_eq!(model, back);
        // Dispatching reader agrees.
        assert_eq!(model_from_json(&text).unwrap(), AnyModel::Nsc(model));
    }

    #[test]
    fn nested_logit_json_round_trips() {
        let universe = Universe::indexed(4).unwrap();
        let structure = NestStructure::new(
            vec![Menu::from_members([0, 1]), Menu::from_members([2, 3])],
            4,
        )
        .unwrap();
        let model =
            NestedLogitModel::new(universe, structure, vec![1.0, 2.0, 0.5, 1.5], vec![0.3, 1.7])
                .unwrap();
        let text = nested_logit_to_json(&model).unwrap();
        assert_eq!(nested_logit_from_json(&text).unwrap(), model);
        assert!(matches!(model_from_json(&text).unwrap(), AnyModel::NestedLogit(_)));
    }

    #[test]
    fn three_step_json_round_trips() {
        let universe = Universe::indexed(4).unwrap();
        let outer = NestStructure::new(
            vec![Menu::from_members([0, 1, 2]), Menu::from_members([3])],
            4,
        )
        .unwrap();
        let inner = vec![
            vec![Menu::from_members([0, 1]), Menu::from_members([2])],
            vec![Menu::from_members([3])],
        ];
        let mut v = BTreeMap::new();
        for nest in inner.iter().flatten() {
            for s in nest.subsets() {
                v.insert(s, 1.0 + s.bits() as f64 / 4.0);
            }
        }
        let mut w = BTreeMap::new();
        for block in outer.blocks() {
            for s in block.subsets() {
                w.insert(s, 0.5 + s.len() as f64);
            }
        }
        let model =
            ThreeStepModel::new(universe, outer, inner, vec![1.0, 2.0, 0.5, 1.5], v, w).unwrap();
        let text = three_step_to_json(&model).unwrap();
        assert_eq!(three_step_from_json(&text).unwrap(), model);
        assert!(matches!(model_from_json(&text).unwrap(), AnyModel::ThreeStep(_)));
    }

    #[test]
    fn table_json_round_trips() {
        let table = full_choice_table(&sample_nsc()).unwrap();
        let text = table_to_json(&table).unwrap();
        let back = table_from_json(&text).unwrap();
        assert_eq!(back.universe().names(), table.universe().names());
        for (menu, row) in table.rows() {
            assert_eq!(back.row(menu).unwrap(), row);
        }
    }

    #[test]
    fn dataset_csv_round_trips_and_groups_noncontiguous_rows() {
        let universe = Universe::indexed(3).unwrap();
        let mut dataset = Dataset::empty(universe);
        dataset.add_counts(Menu::from_members([0, 1]), &[3, 9]).unwrap();
        dataset.add_counts(Menu::from_members([0, 1, 2]), &[1, 0, 7]).unwrap();
        let text = dataset_to_csv(&dataset).unwrap();
        assert_eq!(dataset_from_csv(&text).unwrap(), dataset);

        // Rows of one menu scattered through the file still form one group.
        let scattered = "menu_id,alternative,count\n\
                         m1,x1,3\n\
                         m2,x1,1\n\
                         m1,x2,9\n\
                         m2,x2,0\n\
                         m2,x3,7\n";
        assert_eq!(dataset_from_csv(scattered).unwrap(), dataset);

        let err = dataset_from_csv("wrong,header\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn reports_and_similarity_render_as_valid_json() {
        let table = full_choice_table(&sample_nsc()).unwrap();
        let report = check_iia(&table, 1e-9).unwrap();
        let text = axiom_reports_to_json(&[report], table.universe()).unwrap();
        let value: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value[0]["axiom"], "iia");
        assert_eq!(value[0]["passed"], false);

        let relation = crate::similarity::revealed_similarity(&table, 1e-9).unwrap();
        let text = similarity_to_json(&relation).unwrap();
        let value: Value = serde_json::from_str(&text).unwrap();
        assert!(value["x1"].as_array().unwrap().iter().any(|v| v == "x2"));
    }

    #[test]
    fn rates_csv_has_one_line_per_point() {
        let (lo, hi) = wilson_interval(395, 400);
        let point = RatePoint {
            delta: 0.05,
            trials: 400,
            correct: 395,
            rate: 395.0 / 400.0,
            ci_low: lo,
            ci_high: hi,
        };
        let text = rates_to_csv(&[point]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "delta,trials,correct,rate,ci_low,ci_high");
        assert!(lines[1].starts_with("0.05,400,395,0.9875,"));
    }

    #[test]
    fn cnl_json_round_trips() {
        let universe = Universe::indexed(3).unwrap();
        let model = CnlModel::new(
            universe,
            vec![Menu::from_members([0, 1]), Menu::from_members([1, 2])],
            vec![vec![1.0, 0.3], vec![0.7, 1.0]],
            vec![1.0, 2.0, 1.5],
            vec![0.5, 2.0],
        )
        .unwrap();
        let text = cnl_to_json(&model).unwrap();
        assert_eq!(cnl_from_json(&text).unwrap(), model);
    }

    #[test]
    fn eta_fit_serializes_both_outcomes() {
        let universe = Universe::indexed(4).unwrap();
        let structure = NestStructure::new(
            vec![Menu::from_members([0, 1]), Menu::from_members([2, 3])],
            4,
        )
        .unwrap();
        let nl =
            NestedLogitModel::new(universe, structure, vec![1.0, 2.0, 0.5, 1.5], vec![0.3, 1.7])
                .unwrap();
        let table = full_choice_table(&nl).unwrap();
        let rec = crate::recover::recover_nsc(&table, 1e-9).unwrap();
        let fit = crate::recover::recover_eta(&rec, 1e-9).unwrap();
        let text = eta_to_json(&fit, table.universe()).unwrap();
        let value: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["nested_logit"], true);
        assert!((value["eta"][0].as_f64().unwrap() - 0.3).abs() < 1e-9);
        assert!(value["model"]["eta"].is_array());
        assert!(value["violation"].is_null());

        let fit = crate::recover::recover_eta(&sample_nsc(), 1e-9).unwrap();
        let text = eta_to_json(&fit, sample_nsc().universe()).unwrap();
        let value: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["nested_logit"], false);
        assert!(value["model"].is_null());
        assert!(value["violation"]["subset"].is_array());
    }

    #[test]
    fn malformed_model_files_error_cleanly() {
        assert!(matches!(nsc_from_json("not json").unwrap_err(), Error::Json(_)));
        assert!(matches!(
            nsc_from_json("{\"universe\": [\"a\"]}").unwrap_err(),
            Error::Parse(_)
        ));
        let text = "{\"universe\": [\"a\", \"b\"], \"blocks\": [[\"a\", \"c\"], [\"b\"]], \
                    \"u\": {\"a\": 1.0, \"b\": 1.0}, \"v\": {}}";
        assert!(matches!(
            nsc_from_json(text).unwrap_err(),
            Error::UnknownAlternative(_)
        ));
    }
}
