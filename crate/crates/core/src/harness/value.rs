// SPDX-License-Identifier: Apache-2.0

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Number, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqKind {
    List,
    Tuple,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Numeric {
    Finite(Number),
    NaN,
    PosInf,
    NegInf,
}

/// A return value (or raised exception) as canonicalized by the harness.
///
/// Wire form: `{"t": tag, "v": payload, "trunc": bool?}`.
#[derive(Clone, Debug, PartialEq)]
pub enum CanonicalValue {
    Number(Numeric),
    Text(String),
    Bool(bool),
    None,
    Sequence {
        kind: SeqKind,
        items: Vec<CanonicalValue>,
        truncated: bool,
    },
    Mapping(Vec<(CanonicalValue, CanonicalValue)>),
    Set(Vec<CanonicalValue>),
    Exception(String),
    Opaque(String),
}

impl CanonicalValue {
    pub fn int(n: i64) -> Self {
        CanonicalValue::Number(Numeric::Finite(n.into()))
    }

    pub fn float(x: f64) -> Self {
        if x.is_nan() {
            CanonicalValue::Number(Numeric::NaN)
        } else if x.is_infinite() {
            CanonicalValue::Number(if x > 0.0 {
                Numeric::PosInf
            } else {
                Numeric::NegInf
            })
        } else {
            CanonicalValue::Number(Numeric::Finite(
                Number::from_f64(x).expect("finite float"),
            ))
        }
    }

    pub fn text(s: impl Into<String>) -> Self {
        CanonicalValue::Text(s.into())
    }

    pub fn list(items: Vec<CanonicalValue>) -> Self {
        CanonicalValue::Sequence {
            kind: SeqKind::List,
            items,
            truncated: false,
        }
    }

    pub fn tuple(items: Vec<CanonicalValue>) -> Self {
        CanonicalValue::Sequence {
            kind: SeqKind::Tuple,
            items,
            truncated: false,
        }
    }

    pub fn exception(display: impl Into<String>) -> Self {
        CanonicalValue::Exception(display.into())
    }

    pub fn is_exception(&self) -> bool {
        matches!(self, CanonicalValue::Exception(_))
    }

    /// Python-`repr`-style display string.
    pub fn display(&self) -> String {
        let mut out = String::new();
        self.write_display(&mut out);
        out
    }

    fn write_display(&self, out: &mut String) {
        match self {
            CanonicalValue::Number(Numeric::Finite(n)) => out.push_str(&n.to_string()),
            CanonicalValue::Number(Numeric::NaN) => out.push_str("nan"),
            CanonicalValue::Number(Numeric::PosInf) => out.push_str("inf"),
            CanonicalValue::Number(Numeric::NegInf) => out.push_str("-inf"),
            CanonicalValue::Text(s) => out.push_str(&python_str_repr(s)),
            CanonicalValue::Bool(true) => out.push_str("True"),
            CanonicalValue::Bool(false) => out.push_str("False"),
            CanonicalValue::None => out.push_str("None"),
            CanonicalValue::Sequence {
                kind,
                items,
                truncated,
            } => {
                let (open, close) = match kind {
                    SeqKind::List => ('[', ']'),
                    SeqKind::Tuple => ('(', ')'),
                };
                out.push(open);
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    item.write_display(out);
                }
                if *truncated {
                    out.push_str(if items.is_empty() { "..." } else { ", ..." });
                } else if *kind == SeqKind::Tuple && items.len() == 1 {
                    out.push(',');
                }
                out.push(close);
            }
            CanonicalValue::Mapping(pairs) => {
                out.push('{');
                for (i, (k, v)) in pairs.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    k.write_display(out);
                    out.push_str(": ");
                    v.write_display(out);
                }
                out.push('}');
            }
            CanonicalValue::Set(items) if items.is_empty() => out.push_str("set()"),
            CanonicalValue::Set(items) => {
                out.push('{');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    item.write_display(out);
                }
                out.push('}');
            }
            CanonicalValue::Exception(s) | CanonicalValue::Opaque(s) => out.push_str(s),
        }
    }

    /// Structural equality with all exceptions equal to each other and NaN
    /// equal to NaN.
    ///
    /// Only meant for assembling reports in mock executors; verdicts in real
    /// reports come from the harness.
    pub fn loosely_equal(&self, other: &CanonicalValue) -> bool {
        use CanonicalValue::*;
        match (self, other) {
            (Exception(_), Exception(_)) => true,
            (Number(Numeric::Finite(a)), Number(Numeric::Finite(b))) => {
                match (a.as_f64(), b.as_f64()) {
                    (Some(x), Some(y)) => x == y,
                    _ => a == b,
                }
            }
            (
                Sequence {
                    items: a,
                    truncated: ta,
                    ..
                },
                Sequence {
                    items: b,
                    truncated: tb,
                    ..
                },
            ) => ta == tb && a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.loosely_equal(y)),
            (Mapping(a), Mapping(b)) => {
                a.len() == b.len()
                    && a.iter().all(|(k, v)| {
                        b.iter()
                            .any(|(k2, v2)| k.loosely_equal(k2) && v.loosely_equal(v2))
                    })
            }
            (Set(a), Set(b)) => {
                a.len() == b.len() && a.iter().all(|x| b.iter().any(|y| x.loosely_equal(y)))
            }
            _ => self == other,
        }
    }
}

/// Python's `repr` for `str`.
pub fn python_str_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') {
        '"'
    } else {
        '\''
    };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                out.push_str(&format!("\\x{:02x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

#[derive(Serialize, Deserialize)]
struct Wire {
    t: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trunc: Option<bool>,
}

impl CanonicalValue {
    fn to_wire(&self) -> Wire {
        let (t, v, trunc) = match self {
            CanonicalValue::Number(n) => {
                let v = match n {
                    Numeric::Finite(n) => Value::Number(n.clone()),
                    Numeric::NaN => Value::String("nan".into()),
                    Numeric::PosInf => Value::String("inf".into()),
                    Numeric::NegInf => Value::String("-inf".into()),
                };
                ("num", Some(v), None)
            }
            CanonicalValue::Text(s) => ("str", Some(Value::String(s.clone())), None),
            CanonicalValue::Bool(b) => ("bool", Some(Value::Bool(*b)), None),
            CanonicalValue::None => ("none", None, None),
            CanonicalValue::Sequence {
                kind,
                items,
                truncated,
            } => (
                match kind {
                    SeqKind::List => "list",
                    SeqKind::Tuple => "tuple",
                },
                Some(Value::Array(items.iter().map(wire_value).collect())),
                truncated.then_some(true),
            ),
            CanonicalValue::Mapping(pairs) => (
                "map",
                Some(Value::Array(
                    pairs
                        .iter()
                        .map(|(k, v)| Value::Array(vec![wire_value(k), wire_value(v)]))
                        .collect(),
                )),
                None,
            ),
            CanonicalValue::Set(items) => (
                "set",
                Some(Value::Array(items.iter().map(wire_value).collect())),
                None,
            ),
            CanonicalValue::Exception(s) => ("exc", Some(Value::String(s.clone())), None),
            CanonicalValue::Opaque(s) => ("opaque", Some(Value::String(s.clone())), None),
        };
        Wire {
            t: t.to_string(),
            v,
            trunc,
        }
    }

    fn from_wire(w: Wire) -> Result<Self, String> {
        fn payload(w: &Wire) -> Result<&Value, String> {
            w.v.as_ref().ok_or_else(|| format!("tag `{}` requires a payload", w.t))
        }
        fn string(w: &Wire) -> Result<String, String> {
            payload(w)?
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| format!("tag `{}` requires a string payload", w.t))
        }
        fn items(w: &Wire) -> Result<Vec<CanonicalValue>, String> {
            payload(w)?
                .as_array()
                .ok_or_else(|| format!("tag `{}` requires an array payload", w.t))?
                .iter()
                .map(|v| serde_json::from_value(v.clone()).map_err(|e| e.to_string()))
                .collect()
        }
        Ok(match w.t.as_str() {
            "num" => CanonicalValue::Number(match payload(&w)? {
                Value::Number(n) => Numeric::Finite(n.clone()),
                Value::String(s) if s == "nan" => Numeric::NaN,
                Value::String(s) if s == "inf" => Numeric::PosInf,
                Value::String(s) if s == "-inf" => Numeric::NegInf,
                other => return Err(format!("bad numeric payload {other}")),
            }),
            "str" => CanonicalValue::Text(string(&w)?),
            "bool" => CanonicalValue::Bool(
                payload(&w)?
                    .as_bool()
                    .ok_or_else(|| "bool payload must be boolean".to_string())?,
            ),
            "none" => CanonicalValue::None,
            "list" | "tuple" => CanonicalValue::Sequence {
                kind: if w.t == "list" {
                    SeqKind::List
                } else {
                    SeqKind::Tuple
                },
                items: items(&w)?,
                truncated: w.trunc.unwrap_or(false),
            },
            "map" => {
                // entries are raw [key, value] arrays, not tagged values
                let raw = payload(&w)?
                    .as_array()
                    .ok_or_else(|| "map payload must be an array".to_string())?;
                raw.iter()
                    .map(|entry| {
                        let pair = entry
                            .as_array()
                            .filter(|p| p.len() == 2)
                            .ok_or_else(|| "map entries must be [key, value] pairs".to_string())?;
                        let k = serde_json::from_value(pair[0].clone()).map_err(|e| e.to_string())?;
                        let v = serde_json::from_value(pair[1].clone()).map_err(|e| e.to_string())?;
                        Ok((k, v))
                    })
                    .collect::<Result<Vec<_>, String>>()
                    .map(CanonicalValue::Mapping)?
            }
            "set" => CanonicalValue::Set(items(&w)?),
            "exc" => CanonicalValue::Exception(string(&w)?),
            "opaque" => CanonicalValue::Opaque(string(&w)?),
            other => return Err(format!("unknown value tag `{other}`")),
        })
    }
}

fn wire_value(v: &CanonicalValue) -> Value {
    serde_json::to_value(v.to_wire()).expect("wire value serializes")
}

impl Serialize for CanonicalValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_wire().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CanonicalValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = Wire::deserialize(deserializer)?;
        CanonicalValue::from_wire(wire).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn python_style_display() {
        assert_eq!(CanonicalValue::int(3).display(), "3");
        assert_eq!(CanonicalValue::float(2.5).display(), "2.5");
        assert_eq!(CanonicalValue::float(f64::NAN).display(), "nan");
        assert_eq!(CanonicalValue::Bool(false).display(), "False");
        assert_eq!(CanonicalValue::None.display(), "None");
        assert_eq!(CanonicalValue::text("ΣΣ").display(), "'ΣΣ'");
        assert_eq!(CanonicalValue::text("it's").display(), "\"it's\"");
        assert_eq!(CanonicalValue::text("a\nb\\").display(), "'a\\nb\\\\'");
        assert_eq!(
            CanonicalValue::list(vec![CanonicalValue::int(3), CanonicalValue::int(4)]).display(),
            "[3, 4]"
        );
        assert_eq!(
            CanonicalValue::tuple(vec![CanonicalValue::text("x")]).display(),
            "('x',)"
        );
        assert_eq!(CanonicalValue::Set(vec![]).display(), "set()");
        assert_eq!(
            CanonicalValue::Mapping(vec![(CanonicalValue::text("k"), CanonicalValue::int(1))])
                .display(),
            "{'k': 1}"
        );
        let trunc = CanonicalValue::Sequence {
            kind: SeqKind::List,
            items: vec![CanonicalValue::int(0)],
            truncated: true,
        };
        assert_eq!(trunc.display(), "[0, ...]");
        assert_eq!(
            CanonicalValue::exception("ValueError('bad')").display(),
            "ValueError('bad')"
        );
    }

    #[test]
    fn wire_format() {
        let v = CanonicalValue::list(vec![CanonicalValue::float(f64::NAN)]);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"t":"list","v":[{"t":"num","v":"nan"}]}"#);
        let parsed: CanonicalValue =
            serde_json::from_str(r#"{"t":"list","v":[{"t":"none"}],"trunc":true}"#).unwrap();
        assert_eq!(
            parsed,
            CanonicalValue::Sequence {
                kind: SeqKind::List,
                items: vec![CanonicalValue::None],
                truncated: true
            }
        );
        assert!(serde_json::from_str::<CanonicalValue>(r#"{"t":"wat"}"#).is_err());
        assert!(serde_json::from_str::<CanonicalValue>(r#"{"t":"str"}"#).is_err());
    }

    #[test]
    fn loose_equality_unifies_exceptions() {
        assert!(CanonicalValue::exception("ValueError()")
            .loosely_equal(&CanonicalValue::exception("TypeError()")));
        assert!(CanonicalValue::float(f64::NAN).loosely_equal(&CanonicalValue::float(f64::NAN)));
        assert!(CanonicalValue::int(1).loosely_equal(&CanonicalValue::float(1.0)));
        let a = CanonicalValue::list(vec![CanonicalValue::int(3), CanonicalValue::int(4)]);
        let b = CanonicalValue::list(vec![CanonicalValue::int(4), CanonicalValue::int(3)]);
        assert!(!a.loosely_equal(&b));
        assert!(!CanonicalValue::int(1).loosely_equal(&CanonicalValue::text("1")));
    }

    fn arb_value() -> impl Strategy<Value = CanonicalValue> {
        let leaf = prop_oneof![
            any::<i32>().prop_map(|n| CanonicalValue::int(n.into())),
            any::<f64>().prop_map(CanonicalValue::float),
            ".{0,8}".prop_map(CanonicalValue::Text),
            any::<bool>().prop_map(CanonicalValue::Bool),
            Just(CanonicalValue::None),
            ".{0,8}".prop_map(CanonicalValue::Exception),
            ".{0,8}".prop_map(CanonicalValue::Opaque),
        ];
        leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                (prop::collection::vec(inner.clone(), 0..4), any::<bool>(), any::<bool>())
                    .prop_map(|(items, t, truncated)| CanonicalValue::Sequence {
                        kind: if t { SeqKind::Tuple } else { SeqKind::List },
                        items,
                        truncated
                    }),
                prop::collection::vec((inner.clone(), inner.clone()), 0..3)
                    .prop_map(CanonicalValue::Mapping),
                prop::collection::vec(inner, 0..3).prop_map(CanonicalValue::Set),
            ]
        })
    }

    proptest! {
        #[test]
        fn wire_round_trip(v in arb_value()) {
            let json = serde_json::to_string(&v).unwrap();
            let back: CanonicalValue = serde_json::from_str(&json).unwrap();
            prop_assert!(back.loosely_equal(&v));
            prop_assert_eq!(back.display(), v.display());
        }

        #[test]
        fn loose_equality_reflexive_symmetric(a in arb_value(), b in arb_value()) {
            prop_assert!(a.loosely_equal(&a));
            prop_assert_eq!(a.loosely_equal(&b), b.loosely_equal(&a));
        }
    }
}
