use std::fmt;
use std::io::Write;

pub const TRACE_HEADER: &str = "n,inner_iters,psi,norm_v,norm_eps,mu";

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Converged,
    MaxOuter,
    BudgetExhausted,
    /// An inner solve hit its iteration cap without passing the σ-test.
    Aborted(String),
}

impl RunStatus {
    /// Whether the run ended normally (anything but an abort).
    pub fn is_success(&self) -> bool {
        !matches!(self, RunStatus::Aborted(_))
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Converged => f.write_str("converged"),
            RunStatus::MaxOuter => f.write_str("max_outer"),
            RunStatus::BudgetExhausted => f.write_str("budget_exhausted"),
            RunStatus::Aborted(reason) => write!(f, "aborted: {reason}"),
        }
    }
}

/// One completed outer iteration.
///
/// `psi` is the objective at the new iterate in the caller's units; `norm_v`,
/// `norm_eps` and `mu` refer to the internally normalized problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub n: usize,
    pub inner_iters: usize,
    pub psi: f64,
    pub norm_v: f64,
    pub norm_eps: f64,
    pub mu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
    pub status: RunStatus,
}

impl SolverTrace {
    pub fn outer_iters(&self) -> usize {
        self.rows.len()
    }

    pub fn total_inner(&self) -> usize {
        self.rows.iter().map(|r| r.inner_iters).sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n,
                r.inner_iters,
                format_sig15(r.psi),
                format_sig15(r.norm_v),
                format_sig15(r.norm_eps),
                format_sig15(r.mu)
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace CSV is ASCII")
    }
}

/// Scientific notation with 15 significant digits.
pub fn format_sig15(x: f64) -> String {
    format!("{x:.14e}")
}
