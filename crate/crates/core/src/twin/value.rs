use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub type Timestamp = DateTime<Utc>;

macro_rules! uri_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Result<Self> {
                let value = value.into();
                if value.trim().is_empty() || value.chars().any(char::is_whitespace) {
                    return Err(Error::InvalidId(format!(
                        "{} must be non-empty without whitespace: {:?}",
                        stringify!($name),
                        value
                    )));
                }
                Ok(Self(value))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl TryFrom<String> for $name {
            type Error = Error;
            fn try_from(value: String) -> Result<Self> {
                Self::new(value)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl std::str::FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                Self::new(s)
            }
        }
    };
}

uri_id!(
    /// Deployment-unique twin identity, e.g. `urn:agritwin:field:field-7`.
    TwinId
);
uri_id!(
    /// Reference into the shared vocabulary, e.g. `urn:agrivoc:soil.nitrogen`.
    SemanticId
);

impl SemanticId {
    /// Expands the short form `soil.nitrogen` into `urn:agrivoc:soil.nitrogen`.
    pub fn expand(short_or_full: &str) -> Result<Self> {
        if short_or_full.contains(':') {
            Self::new(short_or_full)
        } else {
            Self::new(format!("{}{}", crate::vocabulary::NAMESPACE, short_or_full))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Datatype {
    Decimal,
    Integer,
    Text,
    Boolean,
    GeoPolygon,
    TimeSeries,
}

/// One timestamped sample of a series element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub at: Timestamp,
    pub value: Value,
}

/// A value tagged with its datatype.
///
/// Serialized adjacently tagged (`{"datatype": "Decimal", "value": 42.0}`);
/// the twin element endpoint uses the untagged form from [`TypedValue::to_json`]
/// together with the element's declared datatype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "datatype", content = "value")]
pub enum TypedValue {
    Decimal(f64),
    Integer(i64),
    Text(String),
    Boolean(bool),
    /// Closed ring of `[lon, lat]` pairs in WGS84.
    GeoPolygon(Vec<[f64; 2]>),
    TimeSeries(Vec<Sample>),
}

impl TypedValue {
    pub fn datatype(&self) -> Datatype {
        match self {
            TypedValue::Decimal(_) => Datatype::Decimal,
            TypedValue::Integer(_) => Datatype::Integer,
            TypedValue::Text(_) => Datatype::Text,
            TypedValue::Boolean(_) => Datatype::Boolean,
            TypedValue::GeoPolygon(_) => Datatype::GeoPolygon,
            TypedValue::TimeSeries(_) => Datatype::TimeSeries,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            TypedValue::Decimal(v) => Some(*v),
            TypedValue::Integer(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            TypedValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_polygon(&self) -> Option<&[[f64; 2]]> {
        match self {
            TypedValue::GeoPolygon(ring) => Some(ring),
            _ => None,
        }
    }

    /// Structural checks that go beyond the Rust type: finite numbers,
    /// closed rings with at least three distinct vertices, ordered series.
    pub fn check_well_formed(&self) -> Result<()> {
        match self {
            TypedValue::Decimal(v) if !v.is_finite() => {
                Err(Error::InvalidValue(format!("non-finite decimal {v}")))
            }
            TypedValue::GeoPolygon(ring) => crate::geo::check_ring(ring),
            TypedValue::TimeSeries(samples) => {
                if samples.windows(2).any(|w| w[1].at < w[0].at) {
                    Err(Error::InvalidValue("series samples out of order".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Untagged JSON form.
    pub fn to_json(&self) -> Value {
        match self {
            TypedValue::Decimal(v) => Value::from(*v),
            TypedValue::Integer(v) => Value::from(*v),
            TypedValue::Text(s) => Value::from(s.clone()),
            TypedValue::Boolean(b) => Value::from(*b),
            TypedValue::GeoPolygon(ring) => {
                Value::Array(ring.iter().map(|p| Value::from(p.to_vec())).collect())
            }
            TypedValue::TimeSeries(samples) => {
                serde_json::to_value(samples).expect("samples serialize")
            }
        }
    }

    /// Decodes the untagged JSON form against a declared datatype.
    pub fn from_json(datatype: Datatype, value: &Value) -> Result<Self> {
        let mismatch = || {
            Error::InvalidValue(format!("{value} is not a valid {datatype:?} value"))
        };
        let v = match datatype {
            Datatype::Decimal => TypedValue::Decimal(value.as_f64().ok_or_else(mismatch)?),
            Datatype::Integer => TypedValue::Integer(value.as_i64().ok_or_else(mismatch)?),
            Datatype::Text => TypedValue::Text(value.as_str().ok_or_else(mismatch)?.to_owned()),
            Datatype::Boolean => TypedValue::Boolean(value.as_bool().ok_or_else(mismatch)?),
            Datatype::GeoPolygon => {
                let ring: Vec<[f64; 2]> =
                    serde_json::from_value(value.clone()).map_err(|_| mismatch())?;
                TypedValue::GeoPolygon(ring)
            }
            Datatype::TimeSeries => {
                let samples: Vec<Sample> =
                    serde_json::from_value(value.clone()).map_err(|_| mismatch())?;
                TypedValue::TimeSeries(samples)
            }
        };
        v.check_well_formed()?;
        Ok(v)
    }

    /// Converts into `datatype`, applying `native × factor + offset` to numbers.
    pub fn convert(&self, datatype: Datatype, factor: f64, offset: f64) -> Result<Self> {
        let numeric = |x: f64| x * factor + offset;
        let converted = match (self, datatype) {
            (TypedValue::Decimal(x), Datatype::Decimal) => TypedValue::Decimal(numeric(*x)),
            (TypedValue::Integer(x), Datatype::Decimal) => TypedValue::Decimal(numeric(*x as f64)),
            (TypedValue::Integer(x), Datatype::Integer) if factor == 1.0 && offset == 0.0 => {
                TypedValue::Integer(*x)
            }
            (TypedValue::Decimal(_) | TypedValue::Integer(_), Datatype::Integer) => {
                let y = numeric(self.as_f64().unwrap_or(f64::NAN)).round();
                if !y.is_finite() || y.abs() > i64::MAX as f64 {
                    return Err(Error::InvalidValue(format!("{y} out of integer range")));
                }
                TypedValue::Integer(y as i64)
            }
            (TypedValue::Decimal(x), Datatype::Text) => TypedValue::Text(numeric(*x).to_string()),
            (TypedValue::Integer(x), Datatype::Text) => TypedValue::Text(x.to_string()),
            (v, dt) if v.datatype() == dt => v.clone(),
            (v, dt) => {
                return Err(Error::InvalidValue(format!(
                    "cannot cast {:?} to {:?}",
                    v.datatype(),
                    dt
                )))
            }
        };
        Ok(converted)
    }

    /// Best-effort decode of an untagged native JSON value; the caller casts afterwards.
    pub fn from_native(value: &Value) -> Result<Self> {
        match value {
            Value::Bool(b) => Ok(TypedValue::Boolean(*b)),
            Value::Number(n) => match n.as_i64() {
                Some(i) => Ok(TypedValue::Integer(i)),
                None => Ok(TypedValue::Decimal(n.as_f64().unwrap_or(f64::NAN))),
            },
            Value::String(s) => Ok(TypedValue::Text(s.clone())),
            Value::Array(_) => TypedValue::from_json(Datatype::GeoPolygon, value),
            other => Err(Error::InvalidValue(format!("unsupported native value {other}"))),
        }
    }
}

impl fmt::Display for TypedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypedValue::Text(s) => f.write_str(s),
            other => write!(f, "{}", other.to_json()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_reject_blank_and_whitespace() {
        assert!(TwinId::new("").is_err());
        assert!(TwinId::new("urn:a b").is_err());
        assert!(TwinId::new("urn:agritwin:field:field-7").is_ok());
    }

    #[test]
    fn semantic_id_short_form_expands() {
        let id = SemanticId::expand("soil.nitrogen").unwrap();
        assert_eq!(id.as_str(), "urn:agrivoc:soil.nitrogen");
        let full = SemanticId::expand("urn:other:x").unwrap();
        assert_eq!(full.as_str(), "urn:other:x");
    }

    #[test]
    fn tagged_serde_form() {
        let v = TypedValue::Decimal(42.0);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"datatype":"Decimal","value":42.0}"#);
        let back: TypedValue = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn from_json_checks_datatype() {
        assert!(TypedValue::from_json(Datatype::Decimal, &Value::from("high")).is_err());
        assert_eq!(
            TypedValue::from_json(Datatype::Decimal, &Value::from(42)).unwrap(),
            TypedValue::Decimal(42.0)
        );
        let open_ring = serde_json::json!([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]);
        assert!(TypedValue::from_json(Datatype::GeoPolygon, &open_ring).is_err());
    }

    #[test]
    fn convert_applies_factor_and_offset() {
        let ml = TypedValue::Integer(3600);
        assert_eq!(
            ml.convert(Datatype::Decimal, 0.001, 0.0).unwrap(),
            TypedValue::Decimal(3.6)
        );
        let celsius = TypedValue::Decimal(10.0).convert(Datatype::Decimal, 1.0, 273.15).unwrap();
        assert_eq!(celsius, TypedValue::Decimal(283.15));
        assert!(TypedValue::Text("x".into()).convert(Datatype::Decimal, 1.0, 0.0).is_err());
    }
}
