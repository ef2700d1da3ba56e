//! Run reports and convergence tables.
//!
//! An [`ErrorTable`] collects one row per refinement level (the row
//! parameter is a mesh width `h` or a step size `τ`, strictly decreasing
//! down the rows) with one error value per named column.  Experimental
//! orders of convergence are pairwise log-ratios,
//! `EOC_i = log(e_{i−1}/e_i) / log(p_{i−1}/p_i)`.
//!
//! A [`RunReport`] is the outcome of a single integrator run: snapshots of
//! the nodal solution at requested times plus, when an exact solution is
//! available, an error table with the final-time errors.

use crate::error::{Error, Result};

/// Format a float with 17 significant digits, enough to round-trip `f64`
/// bit-exactly through text.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// The five error norms reported for problems with an exact solution.
#[derive(Clone, Copy, Debug, Default)]
pub struct NormTuple {
    /// `L²(Ω)` error.
    pub l2_bulk: f64,
    /// `L²(Γ)` error (unit density).
    pub l2_surf: f64,
    /// Energy (a-norm) error: bulk gradient + surface reaction + surface gradient.
    pub energy: f64,
    /// Combined `m`-norm: `(‖·‖²_{L²(Ω)} + ∫_Γ μ (·)² dσ)^{1/2}`.
    pub h_combined: f64,
    /// Discrete `H^{−1/2}(Γ)` surrogate norm of the boundary trace error.
    pub hminus_half_surf: f64,
}

impl NormTuple {
    pub const COLUMNS: [&'static str; 5] = [
        "l2_bulk",
        "l2_surf",
        "energy",
        "h_combined",
        "hminus_half_surf",
    ];

    pub fn as_vec(&self) -> Vec<f64> {
        vec![
            self.l2_bulk,
            self.l2_surf,
            self.energy,
            self.h_combined,
            self.hminus_half_surf,
        ]
    }
}

/// A convergence table: strictly decreasing parameter column plus one
/// error column per name, serialisable as CSV with adjacent EOC columns.
#[derive(Clone, Debug)]
pub struct ErrorTable {
    /// Name of the row parameter (`"h"` or `"tau"`).
    pub param_name: String,
    /// Error column names.
    pub columns: Vec<String>,
    /// `(parameter, errors)` rows; parameter strictly decreasing.
    pub rows: Vec<(f64, Vec<f64>)>,
}

impl ErrorTable {
    pub fn new(param_name: &str, columns: &[&str]) -> Self {
        ErrorTable {
            param_name: param_name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Table with the five standard norm columns.
    pub fn for_norms(param_name: &str) -> Self {
        Self::new(param_name, &NormTuple::COLUMNS)
    }

    pub fn push(&mut self, param: f64, errors: Vec<f64>) -> Result<()> {
        if errors.len() != self.columns.len() {
            return Err(Error::invalid(format!(
                "row has {} values, table has {} columns",
                errors.len(),
                self.columns.len()
            )));
        }
        if !(param > 0.0) {
            return Err(Error::invalid(format!(
                "row parameter must be positive, got {param}"
            )));
        }
        if let Some(&(prev, _)) = self.rows.last() {
            if param >= prev {
                return Err(Error::invalid(format!(
                    "row parameter must decrease strictly: {param} after {prev}"
                )));
            }
        }
        self.rows.push((param, errors));
        Ok(())
    }

    pub fn push_norms(&mut self, param: f64, norms: &NormTuple) -> Result<()> {
        self.push(param, norms.as_vec())
    }

    /// Pairwise convergence orders for one column.  Entry `i` (for `i ≥ 1`)
    /// is the rate between rows `i−1` and `i`; `None` when a row error is
    /// zero (rate undefined).  Entry 0 is always `None`.
    pub fn eoc(&self, column: usize) -> Vec<Option<f64>> {
        let mut out = vec![None];
        for i in 1..self.rows.len() {
            let (p0, ref e0) = self.rows[i - 1];
            let (p1, ref e1) = self.rows[i];
            let (e0, e1) = (e0[column], e1[column]);
            out.push(if e0 > 0.0 && e1 > 0.0 {
                Some((e0 / e1).ln() / (p0 / p1).ln())
            } else {
                None
            });
        }
        out
    }

    /// The rate between the last two rows of a column.
    pub fn eoc_last(&self, column: usize) -> Option<f64> {
        self.eoc(column).last().copied().flatten()
    }

    /// Least-squares slope of `log e` against `log p` over all rows — a
    /// robust single-number order for temporal ladders.
    pub fn ls_slope(&self, column: usize) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|(_, e)| e[column] > 0.0)
            .map(|(p, e)| (p.ln(), e[column].ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// CSV body: header row, then one row per refinement with each error
    /// followed by its EOC column (empty where undefined).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.param_name);
        for c in &self.columns {
            out.push_str(&format!(",{c},eoc_{c}"));
        }
        out.push('\n');
        let eocs: Vec<Vec<Option<f64>>> = (0..self.columns.len()).map(|j| self.eoc(j)).collect();
        for (i, (p, errs)) in self.rows.iter().enumerate() {
            out.push_str(&format_float(*p));
            for (j, e) in errs.iter().enumerate() {
                out.push(',');
                out.push_str(&format_float(*e));
                out.push(',');
                if let Some(r) = eocs[j][i] {
                    out.push_str(&format!("{r:.4}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// One recorded state of a run.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub time: f64,
    pub values: Vec<f64>,
}

/// Outcome of a single integrator run.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub problem: String,
    pub method: String,
    /// Mesh width of the run.
    pub h: f64,
    pub n_dofs: usize,
    pub tau: f64,
    pub t_end: f64,
    /// Snapshots with strictly increasing times; the final state is always
    /// the last entry.
    pub snapshots: Vec<Snapshot>,
    /// Final-time errors (single-row table in `h`) when the problem has an
    /// exact solution.
    pub error_table: Option<ErrorTable>,
    /// Wall-clock seconds per phase, in execution order.
    pub phase_seconds: Vec<(String, f64)>,
}

impl RunReport {
    /// The state at the final time.
    pub fn final_state(&self) -> &Snapshot {
        self.snapshots.last().expect("run recorded no snapshots")
    }

    /// Final-time norm errors, when available.
    pub fn final_errors(&self) -> Option<&Vec<f64>> {
        self.error_table.as_ref().and_then(|t| t.rows.last().map(|r| &r.1))
    }
}
