use serde::Serialize;
use superdrift::Error;

/// Everything that ends a run early, with its exit status.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Core(Error),
    /// Names of the checks that did not pass.
    Checks(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Checks(names) => write!(f, "failed checks: {}", names.join(", ")),
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Checks(_) => 1,
            Failure::Config(_) => 2,
            Failure::Core(e) => match e {
                Error::Instability { .. }
                | Error::NonConvergence { .. }
                | Error::Singularity(_)
                | Error::Simulation { .. } => 3,
                _ => 2,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            1 => "check_failure",
            2 => "configuration_error",
            _ => "numerical_instability",
        }
    }

    pub fn record(&self) -> FailureRecord {
        let residuals = match self {
            Failure::Core(Error::NonConvergence { residuals, .. }) => residuals.clone(),
            _ => Vec::new(),
        };
        let failed_checks = match self {
            Failure::Checks(n) => n.clone(),
            _ => Vec::new(),
        };
        FailureRecord {
            kind: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
            failed_checks,
            residuals,
        }
    }
}

/// Machine-readable form written as `failure.json`.
#[derive(Debug, Serialize)]
pub struct FailureRecord {
    pub kind: &'static str,
    pub exit_code: u8,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failed_checks: Vec<String>,
    /// Residual history of a non-converged iteration.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub residuals: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::Checks(vec!["x".into()]).exit_code(), 1);
        assert_eq!(Failure::Config("x".into()).exit_code(), 2);
        assert_eq!(Failure::Core(Error::Format("x".into())).exit_code(), 2);
        let nc = Failure::Core(Error::NonConvergence {
            iterations: 2,
            residuals: vec![0.5, 0.7],
        });
        assert_eq!(nc.exit_code(), 3);
        assert_eq!(nc.record().residuals, vec![0.5, 0.7]);
    }
}
