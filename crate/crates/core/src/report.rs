use serde::{Deserialize, Serialize};

/// A measured quantity checked against a bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub ratio: f64,
    pub pass: bool,
}

impl EstimateReport {
    /// Passes when `measured <= bound`.
    pub fn upper(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        let pass = measured.is_finite() && measured <= bound;
        Self::new(name, measured, bound, pass)
    }

    /// Passes when `measured >= bound`.
    pub fn lower(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        let pass = measured.is_finite() && measured >= bound;
        Self::new(name, measured, bound, pass)
    }

    pub fn new(name: impl Into<String>, measured: f64, bound: f64, pass: bool) -> Self {
        EstimateReport {
            name: name.into(),
            measured,
            bound,
            ratio: ratio(measured, bound),
            pass,
        }
    }
}

/// `measured / bound`, with `0 / 0 = 0`.
pub fn ratio(measured: f64, bound: f64) -> f64 {
    if measured == 0.0 {
        0.0
    } else {
        measured / bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let r = EstimateReport::upper("x", 1.0, 2.0);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["ratio"], 0.5);
        assert_eq!(v["pass"], true);
        assert_eq!(v.as_object().unwrap().len(), 5);
        assert_eq!(EstimateReport::upper("z", 0.0, 0.0).ratio, 0.0);
        assert!(!EstimateReport::upper("n", f64::NAN, 1.0).pass);
    }
}
