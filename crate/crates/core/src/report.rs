//! Condition reports shared by every checker.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Finite constants that are not stable under refinement.
    Flagged,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }

    /// Conjunction: any fail wins, then any flag.
    pub fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Flagged, _) | (_, Verdict::Flagged) => Verdict::Flagged,
            _ => Verdict::Pass,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Flagged => "flagged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// The witnessed value must not exceed the constant.
    Le,
    /// The witnessed value must not fall below the constant.
    Ge,
}

/// A sample attaining (or testing) a fitted constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub constant: String,
    pub relation: Relation,
    #[serde(with = "float")]
    pub value: f64,
    #[serde(with = "float_map")]
    pub at: BTreeMap<String, f64>,
}

impl Witness {
    pub fn new(constant: &str, relation: Relation, value: f64) -> Self {
        Self { constant: constant.to_string(), relation, value, at: BTreeMap::new() }
    }

    pub fn at(mut self, key: &str, v: f64) -> Self {
        self.at.insert(key.to_string(), v);
        self
    }

    /// Whether the witnessed value satisfies its inequality against `c`.
    pub fn holds(&self, c: f64) -> bool {
        let slack = 1e-9 * c.abs().max(self.value.abs()).max(1e-300);
        match self.relation {
            Relation::Le => self.value <= c + slack || c == f64::INFINITY,
            Relation::Ge => self.value >= c - slack,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub verdict: Verdict,
    #[serde(with = "float_map")]
    pub constants: BTreeMap<String, f64>,
    pub witnesses: Vec<Witness>,
    pub grid: String,
    #[serde(with = "float_map")]
    pub tolerances: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl ConditionReport {
    pub fn new(condition: &str, verdict: Verdict, grid: String) -> Self {
        Self {
            condition: condition.to_string(),
            verdict,
            constants: BTreeMap::new(),
            witnesses: Vec::new(),
            grid,
            tolerances: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn constant(mut self, name: &str, v: f64) -> Self {
        self.constants.insert(name.to_string(), v);
        self
    }

    pub fn witness(mut self, w: Witness) -> Self {
        self.witnesses.push(w);
        self
    }

    pub fn tolerance(mut self, name: &str, v: f64) -> Self {
        self.tolerances.insert(name.to_string(), v);
        self
    }

    pub fn note(mut self, s: String) -> Self {
        self.notes.push(s);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.constants.get(name).copied()
    }

    /// Every stored witness satisfies its inequality with the reported constant.
    pub fn revalidate(&self) -> bool {
        self.witnesses.iter().all(|w| match self.constants.get(&w.constant) {
            Some(&c) => w.holds(c),
            None => false,
        })
    }
}

/// Relative drift between the constants at the two largest scales.
pub(crate) fn top_drift(per_scale: &[(f64, f64)], larger_is_worse: bool) -> f64 {
    if per_scale.len() < 2 {
        return 1.0;
    }
    let (_, a) = per_scale[per_scale.len() - 2];
    let (_, b) = per_scale[per_scale.len() - 1];
    if larger_is_worse {
        b / a
    } else {
        a / b
    }
}

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"` and `"nan"`.
pub mod float {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct F;

    impl<'de> Visitor<'de> for F {
        type Value = f64;

        fn expecting(&self, f: &mut core::fmt::Formatter) -> core::fmt::Result {
            f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(E::custom("unknown float literal")),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(F)
    }
}

pub mod float_map {
    use alloc::collections::BTreeMap;
    use alloc::string::String;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct W(#[serde(with = "super::float")] f64);

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        let w: BTreeMap<&String, W> = m.iter().map(|(k, &v)| (k, W(v))).collect();
        w.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        let w: BTreeMap<String, W> = BTreeMap::deserialize(d)?;
        Ok(w.into_iter().map(|(k, v)| (k, v.0)).collect())
    }
}
