//! JSON file formats for instances, allocations, lotteries and fractional matrices.

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::feasibility::{Category, Constraint, FeasibilitySet};
use crate::instance::{Allocation, Bundle, Instance};
use crate::rational::{format_rational, parse_rational, Rational};

/// An instance together with its feasibility constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub instance: Instance,
    pub constraint: FeasibilitySet,
}

fn schema<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Schema(msg.into()))
}

pub fn rational_to_json(r: &Rational) -> Value {
    if r.is_integer() {
        Value::Number(r.numer().to_string().parse().expect("integer literal"))
    } else {
        Value::String(format_rational(r))
    }
}

pub fn rational_from_json(v: &Value) -> Result<Rational> {
    let parsed = match v {
        Value::Number(n) => parse_rational(&n.to_string()),
        Value::String(s) => parse_rational(s),
        _ => None,
    };
    parsed.ok_or_else(|| Error::Schema(format!("`{}` is not a rational", v)))
}

fn uint(v: Option<&Value>, what: &str) -> Result<u64> {
    match v.and_then(Value::as_u64) {
        Some(x) => Ok(x),
        None => schema(format!("`{}` must be a non-negative integer", what)),
    }
}

fn array<'a>(v: Option<&'a Value>, what: &str) -> Result<&'a Vec<Value>> {
    match v.and_then(Value::as_array) {
        Some(a) => Ok(a),
        None => schema(format!("`{}` must be an array", what)),
    }
}

fn parse_json(bytes: &[u8]) -> Result<Value> {
    serde_json::from_slice(bytes).map_err(|e| Error::Schema(e.to_string()))
}

fn bundle_from_ids(instance: &Instance, v: &Value) -> Result<Bundle> {
    let mut b = Bundle::EMPTY;
    for id in array(Some(v), "bundle")? {
        let Some(id) = id.as_str() else {
            return schema("good ids must be strings");
        };
        let g = instance
            .good_index(id)
            .ok_or_else(|| Error::UnknownGood(id.to_string()))?;
        b = b.with(g);
    }
    Ok(b)
}

fn bundle_ids(instance: &Instance, b: Bundle) -> Value {
    Value::Array(
        b.iter()
            .map(|g| Value::String(instance.good_id(g).to_string()))
            .collect(),
    )
}

pub fn load_instance(bytes: &[u8]) -> Result<Instance> {
    instance_from_value(&parse_json(bytes)?)
}

fn instance_from_value(root: &Value) -> Result<Instance> {
    if !root.is_object() {
        return schema("instance must be an object");
    }
    let agents = uint(root.get("agents"), "agents")? as usize;
    if agents == 0 {
        return schema("`agents` must be positive");
    }
    let goods: Vec<String> = array(root.get("goods"), "goods")?
        .iter()
        .map(|g| {
            g.as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::Schema("good ids must be strings".into()))
        })
        .collect::<Result<_>>()?;
    let rows = array(root.get("valuations"), "valuations")?;
    if rows.len() != agents {
        return Err(Error::DimensionMismatch(format!(
            "{} valuation rows for {} agents",
            rows.len(),
            agents
        )));
    }
    let valuations = rows
        .iter()
        .map(|row| {
            array(Some(row), "valuations row")?
                .iter()
                .map(rational_from_json)
                .collect()
        })
        .collect::<Result<Vec<Vec<Rational>>>>()?;
    let supplies = match root.get("supplies") {
        None | Some(Value::Null) => vec![1; goods.len()],
        Some(v) => array(Some(v), "supplies")?
            .iter()
            .map(|q| uint(Some(q), "supplies").map(|q| q as u32))
            .collect::<Result<_>>()?,
    };
    Instance::with_supplies(goods, valuations, supplies)
}

pub fn load_problem(bytes: &[u8]) -> Result<Problem> {
    let root = parse_json(bytes)?;
    let instance = instance_from_value(&root)?;
    let constraint = match root.get("constraint") {
        None | Some(Value::Null) => Constraint::Free,
        Some(c) => constraint_from_value(&instance, c)?,
    };
    let constraint = FeasibilitySet::new(constraint, &instance)?;
    Ok(Problem {
        instance,
        constraint,
    })
}

fn categories_from(
    instance: &Instance,
    c: &Value,
    default_upper: Option<u32>,
) -> Result<Vec<Category>> {
    array(c.get("categories"), "categories")?
        .iter()
        .map(|cat| {
            let goods = bundle_from_ids(instance, cat.get("goods").unwrap_or(&Value::Null))?;
            let upper = match (cat.get("upper"), default_upper) {
                (Some(u), _) => uint(Some(u), "upper")? as u32,
                (None, Some(d)) => d,
                (None, None) => return schema("category needs `upper`"),
            };
            let lower = match cat.get("lower") {
                Some(l) => uint(Some(l), "lower")? as u32,
                None => 0,
            };
            Ok(Category::new(goods, lower, upper))
        })
        .collect()
}

fn constraint_from_value(instance: &Instance, c: &Value) -> Result<Constraint> {
    let Some(kind) = c.get("type").and_then(Value::as_str) else {
        return schema("constraint needs a string `type`");
    };
    Ok(match kind {
        "free" => Constraint::Free,
        "uniform" => Constraint::Uniform {
            rank: uint(c.get("rank"), "rank")? as usize,
        },
        "partition" => Constraint::Partition {
            categories: categories_from(instance, c, None)?,
        },
        "laminar" => Constraint::Laminar {
            categories: categories_from(instance, c, None)?,
        },
        "copies" => Constraint::Copies {
            categories: categories_from(instance, c, Some(1))?,
        },
        "copies_balanced" => Constraint::CopiesBalanced {
            categories: categories_from(instance, c, Some(1))?,
        },
        "partition_lb" => Constraint::PartitionLb {
            categories: categories_from(instance, c, None)?,
        },
        "balanced" => Constraint::Balanced,
        "graphic" => {
            let edges = array(c.get("edges"), "edges")?
                .iter()
                .map(|e| match e.as_array().map(Vec::as_slice) {
                    Some([u, v]) => {
                        Ok((uint(Some(u), "edge")? as u32, uint(Some(v), "edge")? as u32))
                    }
                    _ => schema("edges are [u, v] pairs"),
                })
                .collect::<Result<_>>()?;
            Constraint::Graphic { edges }
        }
        "extended" => Constraint::Extended {
            base: Box::new(constraint_from_value(
                instance,
                c.get("base").unwrap_or(&Value::Null),
            )?),
            dummies: bundle_from_ids(instance, c.get("dummies").unwrap_or(&Value::Null))?,
            rank: uint(c.get("rank"), "rank")? as usize,
        },
        other => return schema(format!("unknown constraint type `{}`", other)),
    })
}

fn constraint_to_value(instance: &Instance, c: &Constraint) -> Value {
    let cats = |cats: &[Category]| {
        Value::Array(
            cats.iter()
                .map(|cat| json!({"goods": bundle_ids(instance, cat.goods), "lower": cat.lower, "upper": cat.upper}))
                .collect(),
        )
    };
    let mut obj = Map::new();
    obj.insert("type".into(), Value::String(c.name().into()));
    match c {
        Constraint::Free | Constraint::Balanced => {}
        Constraint::Uniform { rank } => {
            obj.insert("rank".into(), json!(rank));
        }
        Constraint::Partition { categories }
        | Constraint::Laminar { categories }
        | Constraint::Copies { categories }
        | Constraint::PartitionLb { categories }
        | Constraint::CopiesBalanced { categories } => {
            obj.insert("categories".into(), cats(categories));
        }
        Constraint::Graphic { edges } => {
            obj.insert(
                "edges".into(),
                Value::Array(edges.iter().map(|&(u, v)| json!([u, v])).collect()),
            );
        }
        Constraint::Extended {
            base,
            dummies,
            rank,
        } => {
            obj.insert("base".into(), constraint_to_value(instance, base));
            obj.insert("dummies".into(), bundle_ids(instance, *dummies));
            obj.insert("rank".into(), json!(rank));
        }
    }
    Value::Object(obj)
}

pub fn instance_to_value(instance: &Instance) -> Value {
    let mut obj = Map::new();
    obj.insert("agents".into(), json!(instance.agent_count()));
    obj.insert("goods".into(), json!(instance.goods()));
    obj.insert(
        "valuations".into(),
        Value::Array(
            instance
                .valuations()
                .iter()
                .map(|row| Value::Array(row.iter().map(rational_to_json).collect()))
                .collect(),
        ),
    );
    if instance.supplies().iter().any(|&q| q != 1) {
        obj.insert("supplies".into(), json!(instance.supplies()));
    }
    Value::Object(obj)
}

pub fn problem_to_value(problem: &Problem) -> Value {
    let mut v = instance_to_value(&problem.instance);
    v.as_object_mut().expect("object").insert(
        "constraint".into(),
        constraint_to_value(&problem.instance, problem.constraint.constraint()),
    );
    v
}

/// Canonical text: sorted keys, two-space indentation, trailing newline.
pub fn to_canonical_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub fn save_problem(problem: &Problem) -> String {
    to_canonical_string(&problem_to_value(problem))
}

pub fn allocation_to_value(instance: &Instance, alloc: &Allocation) -> Value {
    json!({ "bundles": alloc.bundles().iter().map(|b| bundle_ids(instance, *b)).collect::<Vec<_>>() })
}

pub fn save_allocation(instance: &Instance, alloc: &Allocation) -> String {
    to_canonical_string(&allocation_to_value(instance, alloc))
}

/// Bundles as id arrays; overlapping bundles are allowed (type-level copies assignments).
pub fn load_bundles(instance: &Instance, bytes: &[u8]) -> Result<Vec<Bundle>> {
    let root = parse_json(bytes)?;
    let bundles = array(root.get("bundles"), "bundles")?;
    if bundles.len() != instance.agent_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} bundles for {} agents",
            bundles.len(),
            instance.agent_count()
        )));
    }
    bundles
        .iter()
        .map(|b| bundle_from_ids(instance, b))
        .collect()
}

pub fn load_allocation(instance: &Instance, bytes: &[u8]) -> Result<Allocation> {
    Allocation::new(load_bundles(instance, bytes)?)
}

pub fn bundles_to_value(instance: &Instance, bundles: &[Bundle]) -> Value {
    Value::Array(bundles.iter().map(|b| bundle_ids(instance, *b)).collect())
}

/// `{"x": [[...], ...]}` with one row per agent and one column per good.
pub fn load_matrix(instance: &Instance, bytes: &[u8]) -> Result<Vec<Vec<Rational>>> {
    let root = parse_json(bytes)?;
    let rows = array(root.get("x"), "x")?;
    if rows.len() != instance.agent_count() {
        return Err(Error::DimensionMismatch(
            "matrix rows must match agents".into(),
        ));
    }
    let x: Vec<Vec<Rational>> = rows
        .iter()
        .map(|r| {
            array(Some(r), "x row")?
                .iter()
                .map(rational_from_json)
                .collect()
        })
        .collect::<Result<_>>()?;
    if x.iter().any(|r| r.len() != instance.good_count()) {
        return Err(Error::DimensionMismatch(
            "matrix columns must match goods".into(),
        ));
    }
    Ok(x)
}

pub fn matrix_to_value(x: &[Vec<Rational>]) -> Value {
    json!({ "x": x.iter().map(|r| r.iter().map(rational_to_json).collect::<Vec<_>>()).collect::<Vec<_>>() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::{int, rat};

    #[test]
    fn example1_round_trips() {
        let p = fixtures::example1();
        let text = save_problem(&p);
        let back = load_problem(text.as_bytes()).unwrap();
        assert_eq!(back, p);
        assert_eq!(save_problem(&back), text);
        assert_eq!(back.instance.agent_count(), 2);
        assert_eq!(back.instance.good_count(), 8);
        assert_eq!(back.instance.value(0, 1), &int(1));
        assert_eq!(back.instance.value(1, 2), &int(1));
    }

    #[test]
    fn parses_rational_forms() {
        let text = r#"{"agents": 1, "goods": ["a", "b", "c"], "valuations": [[2, "1/3", 0.25]]}"#;
        let inst = load_instance(text.as_bytes()).unwrap();
        assert_eq!(inst.valuations()[0], vec![int(2), rat(1, 3), rat(1, 4)]);
    }

    #[test]
    fn empty_goods() {
        let inst = load_instance(br#"{"agents": 1, "goods": [], "valuations": [[]]}"#).unwrap();
        assert_eq!(inst.good_count(), 0);
    }

    #[test]
    fn distinct_diagnostics() {
        let neg = load_instance(br#"{"agents": 1, "goods": ["g1"], "valuations": [["-1"]]}"#);
        assert!(matches!(neg, Err(Error::NegativeValuation { .. })));
        let dup = load_instance(br#"{"agents": 1, "goods": ["g", "g"], "valuations": [[1, 1]]}"#);
        assert!(matches!(dup, Err(Error::DuplicateGood(_))));
        let dim = load_instance(br#"{"agents": 2, "goods": ["g"], "valuations": [[1]]}"#);
        assert!(matches!(dim, Err(Error::DimensionMismatch(_))));
        let bad = load_instance(br#"{"agents": 1, "goods": "g"}"#);
        assert!(matches!(bad, Err(Error::Schema(_))));
        let junk = load_problem(
            br#"{"agents": 1, "goods": [], "valuations": [[]], "constraint": {"type": "matroid"}}"#,
        );
        assert!(matches!(junk, Err(Error::Schema(_))));
    }
}
