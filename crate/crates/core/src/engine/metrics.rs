use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "iter,overlap_pct,pressure_sum,area_u,E_coll,E_cont,ms";

/// One completed outer iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IterationMetrics {
    pub iter: usize,
    pub overlap_pct: f64,
    pub pressure_sum: f64,
    pub area_u: f64,
    pub e_coll: f64,
    pub e_cont: f64,
    /// Wall time, present only when timing is recorded.
    pub ms: Option<f64>,
    pub transport_converged: bool,
    pub membrane_solver_failures: usize,
    pub membrane_infeasible: bool,
    pub prototypes_with_replacement: bool,
    /// MTV mode only: every pair separated within the sweep cap.
    pub mtv_converged: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunMetrics {
    pub initial_overlap_pct: f64,
    pub rows: Vec<IterationMetrics>,
}

impl RunMetrics {
    pub fn final_overlap(&self) -> f64 {
        self.rows.last().map_or(self.initial_overlap_pct, |r| r.overlap_pct)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let ms = r.ms.map(|m| format!("{m:.3}")).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.iter, r.overlap_pct, r.pressure_sum, r.area_u, r.e_coll, r.e_cont, ms
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
