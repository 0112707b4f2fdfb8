//! Report records: one JSON object per line, numbers with 12 significant digits.

use std::io::{self, Write};

/// `%.12g`-style formatting; non-finite values become `null`.
pub fn fmt_g(value: f64) -> String {
    const DIGITS: i32 = 12;
    if !value.is_finite() {
        return "null".to_string();
    }
    if value == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, value);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        format!("{}e{exp}", trim_zeros(mantissa))
    } else {
        let fixed = format!("{:.*}", (DIGITS - 1 - exp) as usize, value);
        trim_zeros(&fixed).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One report line. Keys `query`, `value`, `lower_bound`, `method`, `iters`
/// and `elapsed_ms` are always present; the others only when set.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRecord {
    pub query: String,
    pub point_id: Option<String>,
    pub t: Option<f64>,
    pub value: Option<f64>,
    pub lower_bound: Option<f64>,
    pub method: String,
    pub iters: usize,
    pub elapsed_ms: Option<f64>,
    pub matrix: Option<Vec<f64>>,
}

impl ReportRecord {
    pub fn new(query: &str, method: &str) -> Self {
        ReportRecord {
            query: query.to_string(),
            point_id: None,
            t: None,
            value: None,
            lower_bound: None,
            method: method.to_string(),
            iters: 0,
            elapsed_ms: None,
            matrix: None,
        }
    }

    pub fn to_line(&self) -> String {
        let num = |v: Option<f64>| v.map_or_else(|| "null".to_string(), fmt_g);
        let text = |s: &str| serde_json::to_string(s).expect("strings serialize");
        let mut line = format!("{{\"query\":{}", text(&self.query));
        if let Some(id) = &self.point_id {
            line += &format!(",\"point_id\":{}", text(id));
        }
        if let Some(t) = self.t {
            line += &format!(",\"t\":{}", fmt_g(t));
        }
        line += &format!(
            ",\"value\":{},\"lower_bound\":{},\"method\":{},\"iters\":{},\"elapsed_ms\":{}",
            num(self.value),
            num(self.lower_bound),
            text(&self.method),
            self.iters,
            num(self.elapsed_ms)
        );
        if let Some(matrix) = &self.matrix {
            let entries: Vec<String> = matrix.iter().map(|v| fmt_g(*v)).collect();
            line += &format!(",\"matrix\":[{}]", entries.join(","));
        }
        line.push('}');
        line
    }

    pub fn write(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "{}", self.to_line())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_format() {
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(0.828427124746190), "0.828427124746");
        assert_eq!(fmt_g(-2.5), "-2.5");
        assert_eq!(fmt_g(1.0e-7), "1e-7");
        assert_eq!(fmt_g(123456789012345.0), "1.23456789012e14");
        assert_eq!(fmt_g(9.9999999999999), "10");
        assert_eq!(fmt_g(0.0001234), "0.0001234");
        assert_eq!(fmt_g(0.00001234), "1.234e-5");
        assert_eq!(fmt_g(f64::NAN), "null");
    }

    #[test]
    fn record_line_is_json() {
        let mut r = ReportRecord::new("fiber-dist", "shooting");
        r.value = Some(1.0);
        r.lower_bound = Some(0.0);
        r.iters = 4;
        let parsed: serde_json::Value = serde_json::from_str(&r.to_line()).unwrap();
        assert_eq!(parsed["value"], 1.0);
        assert!(parsed["elapsed_ms"].is_null());
        assert_eq!(parsed["method"], "shooting");
    }
}
