use std::collections::BTreeMap;

/// A bound value from the bindings file. File variables take either a glob
/// string or an explicit list of paths.
#[derive(Debug, Clone, PartialEq)]
pub enum BindValue {
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    List(Vec<BindValue>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings {
    pub values: BTreeMap<String, BindValue>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: impl Into<String>, value: BindValue) -> &mut Self {
        self.values.insert(name.into(), value);
        self
    }

    pub fn files<S: Into<String>>(mut self, name: &str, paths: impl IntoIterator<Item = S>) -> Self {
        let list = paths.into_iter().map(|p| BindValue::Str(p.into())).collect();
        self.values.insert(name.to_string(), BindValue::List(list));
        self
    }

    pub fn get(&self, name: &str) -> Option<&BindValue> {
        self.values.get(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BindingsError {
    #[error("invalid bindings file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("binding `{0}`: unsupported value (tables and datetimes are not allowed)")]
    Unsupported(String),
}

/// Parse a TOML bindings file: `name = value` per input variable.
pub fn parse_bindings(text: &str) -> Result<Bindings, BindingsError> {
    let table: toml::Table = text.parse()?;
    let mut b = Bindings::new();
    for (k, v) in table {
        let value = convert(&v).ok_or_else(|| BindingsError::Unsupported(k.clone()))?;
        b.values.insert(k, value);
    }
    Ok(b)
}

fn convert(v: &toml::Value) -> Option<BindValue> {
    Some(match v {
        toml::Value::String(s) => BindValue::Str(s.clone()),
        toml::Value::Integer(i) => BindValue::Int(*i),
        toml::Value::Float(f) => BindValue::Float(*f),
        toml::Value::Boolean(b) => BindValue::Bool(*b),
        toml::Value::Array(a) => BindValue::List(a.iter().map(convert).collect::<Option<_>>()?),
        _ => return None,
    })
}
