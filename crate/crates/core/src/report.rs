//! Plain-text output helpers shared by the CSV emitters.

/// Fixed-point rendering with at least six significant digits.
pub fn sig6(v: f64) -> String {
    sig_digits(v, 6)
}

pub fn sig_digits(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return format!("{:.*}", digits.saturating_sub(1), 0.0);
    }
    let magnitude = v.abs().log10().floor() as i64 + 1;
    let decimals = (digits as i64 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Minimal CSV builder; cells never contain commas.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(1.0), "1.00000");
        assert_eq!(sig6(0.5), "0.500000");
        assert_eq!(sig6(1.0 / 24.0), "0.0416667");
        assert_eq!(sig6(-123.456789), "-123.457");
        assert_eq!(sig6(12_345_678.9), "12345679");
        assert_eq!(sig6(0.0), "0.00000");
        assert_eq!(sig6(f64::NAN), "NaN");
    }

    #[test]
    fn csv_render() {
        let mut c = Csv::new(["a", "b"]);
        c.push(vec!["1".into(), "2".into()]);
        assert_eq!(c.render(), "a,b\n1,2\n");
        assert_eq!(c.len(), 1);
    }
}
