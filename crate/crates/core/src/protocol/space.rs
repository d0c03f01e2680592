//! Composite observation/action spaces and the per-part values that inhabit them.
//!
//! A [`SpaceSpec`] is an ordered list of named parts. Box parts carry a shape and
//! scalar bounds shared by every element; discrete parts carry a cardinality.
//! Values are exchanged as a JSON object keyed by part name, in part order: a
//! box part is an array of numbers (row-major flattening of its shape), a
//! discrete part is a bare integer.

use std::fmt;

use rand::Rng;
use serde::de::{self, MapAccess, SeqAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// The kind of a single space part.
#[derive(Debug, Clone, PartialEq)]
pub enum PartKind {
    Box { shape: Vec<usize>, low: f64, high: f64 },
    Discrete { n: u32 },
}

/// One named component of a [`SpaceSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPart", into = "RawPart")]
pub struct PartSpec {
    name: String,
    kind: PartKind,
}

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("space has no parts")]
    Empty,
    #[error("duplicate part name `{0}`")]
    DuplicateName(String),
    #[error("part `{0}`: invalid name")]
    InvalidName(String),
    #[error("part `{0}`: box shape must be a non-empty list of positive integers")]
    BadShape(String),
    #[error("part `{0}`: box bounds must be finite with low < high")]
    BadBounds(String),
    #[error("part `{0}`: discrete cardinality must be at least 2")]
    BadCardinality(String),
    #[error("part `{name}`: unknown kind `{kind}`")]
    UnknownKind { name: String, kind: String },
    #[error("part `{name}`: field `{field}` is not valid for kind `{kind}`")]
    StrayField { name: String, kind: String, field: &'static str },
    #[error("part `{name}`: missing field `{field}`")]
    MissingField { name: String, field: &'static str },
}

fn valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl PartSpec {
    pub fn boxed(name: &str, shape: &[usize], low: f64, high: f64) -> Result<Self, SpaceError> {
        let part = Self {
            name: name.to_owned(),
            kind: PartKind::Box { shape: shape.to_vec(), low, high },
        };
        part.check()?;
        Ok(part)
    }

    pub fn discrete(name: &str, n: u32) -> Result<Self, SpaceError> {
        let part = Self { name: name.to_owned(), kind: PartKind::Discrete { n } };
        part.check()?;
        Ok(part)
    }

    fn check(&self) -> Result<(), SpaceError> {
        if !valid_identifier(&self.name) {
            return Err(SpaceError::InvalidName(self.name.clone()));
        }
        match &self.kind {
            PartKind::Box { shape, low, high } => {
                if shape.is_empty() || shape.iter().any(|&d| d == 0) {
                    return Err(SpaceError::BadShape(self.name.clone()));
                }
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(SpaceError::BadBounds(self.name.clone()));
                }
            }
            PartKind::Discrete { n } => {
                if *n < 2 {
                    return Err(SpaceError::BadCardinality(self.name.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &PartKind {
        &self.kind
    }

    /// Number of scalars this part occupies in a flat vector.
    pub fn flat_width(&self) -> usize {
        match &self.kind {
            PartKind::Box { shape, .. } => shape.iter().product(),
            PartKind::Discrete { .. } => 1,
        }
    }

    pub fn is_box(&self) -> bool {
        matches!(self.kind, PartKind::Box { .. })
    }
}

/// Wire shape of a part; field order here is the canonical key order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPart {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<u32>,
}

impl From<PartSpec> for RawPart {
    fn from(part: PartSpec) -> Self {
        match part.kind {
            PartKind::Box { shape, low, high } => RawPart {
                name: part.name,
                kind: "box".into(),
                shape: Some(shape),
                low: Some(low),
                high: Some(high),
                n: None,
            },
            PartKind::Discrete { n } => RawPart {
                name: part.name,
                kind: "discrete".into(),
                shape: None,
                low: None,
                high: None,
                n: Some(n),
            },
        }
    }
}

impl TryFrom<RawPart> for PartSpec {
    type Error = SpaceError;

    fn try_from(raw: RawPart) -> Result<Self, SpaceError> {
        let name = raw.name;
        let stray = |field| SpaceError::StrayField { name: name.clone(), kind: raw.kind.clone(), field };
        let missing = |field| SpaceError::MissingField { name: name.clone(), field };
        let kind = match raw.kind.as_str() {
            "box" => {
                if raw.n.is_some() {
                    return Err(stray("n"));
                }
                PartKind::Box {
                    shape: raw.shape.ok_or_else(|| missing("shape"))?,
                    low: raw.low.ok_or_else(|| missing("low"))?,
                    high: raw.high.ok_or_else(|| missing("high"))?,
                }
            }
            "discrete" => {
                if raw.shape.is_some() {
                    return Err(stray("shape"));
                }
                if raw.low.is_some() {
                    return Err(stray("low"));
                }
                if raw.high.is_some() {
                    return Err(stray("high"));
                }
                PartKind::Discrete { n: raw.n.ok_or_else(|| missing("n"))? }
            }
            other => return Err(SpaceError::UnknownKind { name, kind: other.to_owned() }),
        };
        let part = PartSpec { name, kind };
        part.check()?;
        Ok(part)
    }
}

/// An ordered, non-empty list of uniquely named parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct SpaceSpec {
    parts: Vec<PartSpec>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    parts: Vec<PartSpec>,
}

impl From<SpaceSpec> for RawSpace {
    fn from(space: SpaceSpec) -> Self {
        RawSpace { parts: space.parts }
    }
}

impl TryFrom<RawSpace> for SpaceSpec {
    type Error = SpaceError;

    fn try_from(raw: RawSpace) -> Result<Self, SpaceError> {
        SpaceSpec::new(raw.parts)
    }
}

impl SpaceSpec {
    pub fn new(parts: Vec<PartSpec>) -> Result<Self, SpaceError> {
        if parts.is_empty() {
            return Err(SpaceError::Empty);
        }
        for (i, part) in parts.iter().enumerate() {
            if parts[..i].iter().any(|p| p.name == part.name) {
                return Err(SpaceError::DuplicateName(part.name.clone()));
            }
        }
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &[PartSpec] {
        &self.parts
    }

    pub fn part(&self, name: &str) -> Option<&PartSpec> {
        self.parts.iter().find(|p| p.name == name)
    }

    /// Sum of box widths plus one slot per discrete part.
    pub fn flat_width(&self) -> usize {
        self.parts.iter().map(PartSpec::flat_width).sum()
    }

    pub fn is_mixed(&self) -> bool {
        let boxes = self.parts.iter().filter(|p| p.is_box()).count();
        boxes > 0 && boxes < self.parts.len()
    }

    /// Check `values` against this space, collecting every violation.
    pub fn validate(&self, values: &PartValues) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        for (name, _) in values.iter() {
            if self.part(name).is_none() {
                violations.push(Violation::UnknownPart(name.to_owned()));
            }
        }
        for part in &self.parts {
            let Some(value) = values.get(&part.name) else {
                violations.push(Violation::MissingPart(part.name.clone()));
                continue;
            };
            match (&part.kind, value) {
                (PartKind::Box { low, high, .. }, PartValue::Box(xs)) => {
                    let width = part.flat_width();
                    if xs.len() != width {
                        violations.push(Violation::Arity {
                            part: part.name.clone(),
                            expected: width,
                            found: xs.len(),
                        });
                    }
                    for (i, &x) in xs.iter().enumerate() {
                        // NaN fails both comparisons, so negate the in-bounds test.
                        if !(x >= *low && x <= *high) {
                            violations.push(Violation::OutOfBounds { part: part.name.clone(), index: Some(i) });
                        }
                    }
                }
                (PartKind::Discrete { n }, PartValue::Discrete(k)) => {
                    if *k < 0 || *k >= i64::from(*n) {
                        violations.push(Violation::OutOfBounds { part: part.name.clone(), index: None });
                    }
                }
                (PartKind::Box { .. }, PartValue::Discrete(_)) => {
                    violations.push(Violation::KindMismatch { part: part.name.clone(), expected: "box" })
                }
                (PartKind::Discrete { .. }, PartValue::Box(_)) => {
                    violations.push(Violation::KindMismatch { part: part.name.clone(), expected: "discrete" })
                }
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    /// Split a flat vector (parts concatenated in order) into named part values.
    /// Discrete slots are rounded to the nearest integer.
    pub fn unflatten(&self, flat: &[f64]) -> PartValues {
        debug_assert_eq!(flat.len(), self.flat_width());
        let mut offset = 0;
        let mut out = PartValues::with_capacity(self.parts.len());
        for part in &self.parts {
            let width = part.flat_width();
            let slice = &flat[offset..offset + width];
            let value = match part.kind {
                PartKind::Box { .. } => PartValue::Box(slice.to_vec()),
                PartKind::Discrete { .. } => PartValue::Discrete(slice[0].round() as i64),
            };
            out.push(part.name.clone(), value);
            offset += width;
        }
        out
    }

    /// Draw a uniformly random value for every part.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PartValues {
        let mut out = PartValues::with_capacity(self.parts.len());
        for part in &self.parts {
            let value = match part.kind {
                PartKind::Box { low, high, .. } => {
                    PartValue::Box((0..part.flat_width()).map(|_| rng.gen_range(low..=high)).collect())
                }
                PartKind::Discrete { n } => PartValue::Discrete(i64::from(rng.gen_range(0..n))),
            };
            out.push(part.name.clone(), value);
        }
        out
    }

    /// Concatenate part values in space order. Values must already validate.
    pub fn flatten_into(&self, values: &PartValues, out: &mut Vec<f64>) {
        for part in &self.parts {
            match values.get(&part.name) {
                Some(PartValue::Box(xs)) => out.extend_from_slice(xs),
                Some(PartValue::Discrete(k)) => out.push(*k as f64),
                None => out.extend(std::iter::repeat(0.0).take(part.flat_width())),
            }
        }
    }
}

/// A single validation failure reported by [`SpaceSpec::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingPart(String),
    UnknownPart(String),
    KindMismatch { part: String, expected: &'static str },
    Arity { part: String, expected: usize, found: usize },
    OutOfBounds { part: String, index: Option<usize> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingPart(p) => write!(f, "{p} missing"),
            Violation::UnknownPart(p) => write!(f, "{p} is not a part of this space"),
            Violation::KindMismatch { part, expected } => write!(f, "{part} should be {expected}"),
            Violation::Arity { part, expected, found } => {
                write!(f, "{part} has {found} values, expected {expected}")
            }
            Violation::OutOfBounds { part, index: Some(i) } => write!(f, "{part}[{i}] out of bounds"),
            Violation::OutOfBounds { part, index: None } => write!(f, "{part} out of bounds"),
        }
    }
}

/// The value of one part: a flat array for box parts, an index for discrete parts.
#[derive(Debug, Clone, PartialEq)]
pub enum PartValue {
    Box(Vec<f64>),
    Discrete(i64),
}

impl Serialize for PartValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            PartValue::Box(xs) => xs.serialize(serializer),
            PartValue::Discrete(k) => serializer.serialize_i64(*k),
        }
    }
}

impl<'de> Deserialize<'de> for PartValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PartValueVisitor;

        impl<'de> Visitor<'de> for PartValueVisitor {
            type Value = PartValue;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an array of numbers or an integer")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<PartValue, E> {
                i64::try_from(v)
                    .map(PartValue::Discrete)
                    .map_err(|_| E::custom("discrete value out of range"))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<PartValue, E> {
                Ok(PartValue::Discrete(v))
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<PartValue, A::Error> {
                let mut xs = Vec::with_capacity(seq.size_hint().unwrap_or(0));
                while let Some(x) = seq.next_element::<f64>()? {
                    xs.push(x);
                }
                Ok(PartValue::Box(xs))
            }
        }

        deserializer.deserialize_any(PartValueVisitor)
    }
}

/// Values for the parts of a space, kept in insertion (wire) order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartValues(Vec<(String, PartValue)>);

impl PartValues {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn with_capacity(n: usize) -> Self {
        Self(Vec::with_capacity(n))
    }

    pub fn push(&mut self, name: impl Into<String>, value: PartValue) {
        self.0.push((name.into(), value));
    }

    pub fn with(mut self, name: impl Into<String>, value: PartValue) -> Self {
        self.push(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&PartValue> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PartValue)> {
        self.0.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn box_values(&self, name: &str) -> Option<&[f64]> {
        match self.get(name)? {
            PartValue::Box(xs) => Some(xs),
            PartValue::Discrete(_) => None,
        }
    }

    pub fn discrete_value(&self, name: &str) -> Option<i64> {
        match self.get(name)? {
            PartValue::Discrete(k) => Some(*k),
            PartValue::Box(_) => None,
        }
    }

    pub(crate) fn all_finite(&self) -> bool {
        self.0.iter().all(|(_, v)| match v {
            PartValue::Box(xs) => xs.iter().all(|x| x.is_finite()),
            PartValue::Discrete(_) => true,
        })
    }
}

impl Serialize for PartValues {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (name, value) in &self.0 {
            map.serialize_entry(name, value)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for PartValues {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PartValuesVisitor;

        impl<'de> Visitor<'de> for PartValuesVisitor {
            type Value = PartValues;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object mapping part names to values")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<PartValues, A::Error> {
                let mut out = PartValues::with_capacity(map.size_hint().unwrap_or(0));
                while let Some((name, value)) = map.next_entry::<String, PartValue>()? {
                    if out.get(&name).is_some() {
                        return Err(de::Error::custom(format!("duplicate part `{name}`")));
                    }
                    out.push(name, value);
                }
                Ok(out)
            }
        }

        deserializer.deserialize_map(PartValuesVisitor)
    }
}
