//! Whitespace-delimited plot data with `#` header comments.

use clab_core::grid::{DomainSpec, ScalarField};

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    /// File stem.
    pub name: String,
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotData {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            comments: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(mut self, c: impl Into<String>) -> Self {
        self.comments.push(c.into());
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub fn emit_plot_data(p: &PlotData) -> String {
    let mut s = String::new();
    for c in &p.comments {
        s += &format!("# {c}\n");
    }
    s += &format!("# {}\n", p.columns.join(" "));
    for r in &p.rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        s += &cells.join(" ");
        s.push('\n');
    }
    s
}

/// `x y [z] value` over the closed cube, lexicographic in the grid index.
pub fn error_map(name: &str, f: &ScalarField, domain: &DomainSpec) -> PlotData {
    let dim = f.grid.dim;
    let cols: &[&str] = if dim == 2 { &["x", "y", "value"] } else { &["x", "y", "z", "value"] };
    let mut p = PlotData::new(name, cols);
    for i in domain.node_indices(&f.grid) {
        let x = f.grid.point(i);
        let mut row: Vec<f64> = x[..dim].to_vec();
        row.push(f.values[i].re);
        p.push(row);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use clab_core::grid::GridSpec;

    #[test]
    fn empty_report_is_header_only() {
        let p = PlotData::new("decay", &["rho_abs", "psi_l2"]).comment("corrector norms");
        assert_eq!(emit_plot_data(&p), "# corrector norms\n# rho_abs psi_l2\n");
    }

    #[test]
    fn rows_follow_the_header() {
        let mut p = PlotData::new("decay", &["rho_abs", "psi_l2"]);
        p.push(vec![8.0, 0.5]);
        p.push(vec![16.0, 0.25]);
        let s = emit_plot_data(&p);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines, ["# rho_abs psi_l2", "8e0 5e-1", "1.6e1 2.5e-1"]);
    }

    #[test]
    fn error_map_is_lexicographic() {
        let g = GridSpec::new(3, 1.0, 16).unwrap();
        let d = DomainSpec::for_grid(&g, 0.1).unwrap();
        let f = ScalarField::from_real_fn(g, |x| x[0] + 10.0 * x[1] + 100.0 * x[2]);
        let p = error_map("err", &f, &d);
        assert_eq!(p.columns, ["x", "y", "z", "value"]);
        assert_eq!(p.rows.len(), 9 * 9 * 9);
        for w in p.rows.windows(2) {
            assert!((w[0][0], w[0][1], w[0][2]) < (w[1][0], w[1][1], w[1][2]));
        }
        for r in &p.rows {
            assert!((r[3] - (r[0] + 10.0 * r[1] + 100.0 * r[2])).abs() < 1e-12);
        }
    }
}
