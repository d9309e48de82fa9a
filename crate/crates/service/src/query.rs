//! Query-string parsing with structured 400s instead of axum's plain-text
//! rejections.

use std::collections::HashMap;

use asat_core::ingest::{MAX_MOBILITY, MIN_MOBILITY};
use chrono::NaiveDate;

use crate::ApiError;

pub(crate) struct Params(HashMap<String, String>);

impl Params {
    pub(crate) fn parse(query: Option<&str>) -> Result<Self, ApiError> {
        let mut map = HashMap::new();
        for (key, value) in form_urlencoded::parse(query.unwrap_or("").as_bytes()) {
            let key = key.into_owned();
            if map.insert(key.clone(), value.into_owned()).is_some() {
                return Err(ApiError::bad_request("invalid_query", format!("`{key}` given twice")));
            }
        }
        Ok(Params(map))
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub(crate) fn required(&self, key: &str) -> Result<&str, ApiError> {
        self.get(key)
            .ok_or_else(|| ApiError::bad_request("missing_parameter", format!("`{key}` is required")))
    }

    pub(crate) fn number(&self, key: &str) -> Result<f64, ApiError> {
        self.required(key)?
            .parse()
            .map_err(|_| ApiError::bad_request("invalid_number", format!("`{key}` is not a number")))
    }

    /// Latitude or longitude, range-checked by name.
    pub(crate) fn coordinate(&self, key: &str) -> Result<f64, ApiError> {
        let v = self.number(key).map_err(|e| ApiError::bad_request("invalid_coordinate", e.message))?;
        let limit = if key == "lat" { 90.0 } else { 180.0 };
        if !v.is_finite() || v.abs() > limit {
            return Err(ApiError::bad_request(
                "invalid_coordinate",
                format!("`{key}` must lie within ±{limit}"),
            ));
        }
        Ok(v)
    }

    pub(crate) fn date(&self, key: &str) -> Result<Option<NaiveDate>, ApiError> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| ApiError::bad_request("invalid_date", format!("`{key}` is not a YYYY-MM-DD date")))
            })
            .transpose()
    }

    pub(crate) fn flag(&self, key: &str) -> Result<bool, ApiError> {
        match self.get(key) {
            None | Some("false") | Some("0") => Ok(false),
            Some("true") | Some("1") => Ok(true),
            Some(_) => Err(ApiError::bad_request("invalid_flag", format!("`{key}` must be true or false"))),
        }
    }

    pub(crate) fn mobility(&self, key: &str) -> Result<Option<u8>, ApiError> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        match v.parse::<u8>() {
            Ok(m) if (MIN_MOBILITY..=MAX_MOBILITY).contains(&m) => Ok(Some(m)),
            _ => Err(ApiError::bad_request(
                "invalid_mobility",
                format!("`{key}` must be an integer from {MIN_MOBILITY} to {MAX_MOBILITY}"),
            )),
        }
    }
}
