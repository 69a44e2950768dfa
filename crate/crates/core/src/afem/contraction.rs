use serde::Serialize;

use super::{AfemError, AfemTrace};

/// Slack admitted in `e²_{k+1} ≤ Λ e²_k − E²_k` before a step is flagged.
pub const QUASI_ORTHOGONALITY_LAMBDA: f64 = 1.05;

/// Observed contraction of `e_k² + γ η_k²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub gamma: f64,
    pub quantities: Vec<f64>,
    /// `q_{k+1} / q_k`.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    /// Steps where quasi-orthogonality fails with slack `Λ`.
    pub quasi_orthogonality_violations: Vec<usize>,
}

/// Contraction ratios of a trace whose records all carry `error`. With
/// `gamma = None`, `γ = 1/η²(D, T₀)`.
pub fn contraction_check(trace: &AfemTrace, gamma: Option<f64>) -> Result<ContractionReport, AfemError> {
    let first = trace.records.first().ok_or_else(|| AfemError::Oracle("empty trace".into()))?;
    let gamma = match gamma {
        Some(g) => g,
        None if first.eta_d2 > 0.0 => 1.0 / first.eta_d2,
        None => return Err(AfemError::Oracle("η(D) vanishes; pass γ explicitly".into())),
    };
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(AfemError::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let errors: Vec<f64> = trace
        .records
        .iter()
        .map(|r| r.error.ok_or_else(|| AfemError::Oracle(format!("iteration {} has no error", r.iteration))))
        .collect::<Result<_, _>>()?;
    let quantities: Vec<f64> =
        trace.records.iter().zip(&errors).map(|(r, e)| e * e + gamma * r.eta * r.eta).collect();
    let ratios: Vec<f64> = quantities.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let quasi_orthogonality_violations = (0..ratios.len())
        .filter(|&k| {
            let big_e = trace.records[k].increment.unwrap_or(0.0);
            errors[k + 1].powi(2) > QUASI_ORTHOGONALITY_LAMBDA * errors[k].powi(2) - big_e * big_e
        })
        .collect();
    Ok(ContractionReport { gamma, quantities, ratios, max_ratio, quasi_orthogonality_violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afem::IterationRecord;
    use crate::estimate::EstimatorVariant;
    use crate::splitting::Scheme;

    fn rec(k: usize, eta: f64, err: f64, inc: f64) -> IterationRecord {
        IterationRecord {
            iteration: k,
            tets: 0,
            vertices: 0,
            eta,
            osc: 0.0,
            eta_d2: 4.0,
            error: Some(err),
            increment: Some(inc),
            newton_iterations: 1,
            marked: 0,
            wall_time_s: 0.0,
            max_abs_u: 0.0,
        }
    }

    #[test]
    fn ratios_by_hand() {
        let trace = AfemTrace {
            scheme: Scheme::ThreeTerm,
            theta: 0.5,
            ell: 1,
            lambda: 0.2,
            estimator: EstimatorVariant::Paper,
            records: vec![rec(0, 2.0, 1.0, 0.5), rec(1, 1.0, 0.5, 0.0)],
        };
        let r = contraction_check(&trace, None).unwrap();
        assert_eq!(r.gamma, 0.25);
        assert!((r.quantities[0] - 2.0).abs() < 1e-15);
        assert!((r.ratios[0] - 0.25).abs() < 1e-15);
        assert!(r.quasi_orthogonality_violations.is_empty());
    }

    #[test]
    fn missing_error_is_reported() {
        let mut r0 = rec(0, 1.0, 1.0, 0.0);
        r0.error = None;
        let trace = AfemTrace {
            scheme: Scheme::ThreeTerm,
            theta: 0.5,
            ell: 1,
            lambda: 0.2,
            estimator: EstimatorVariant::Paper,
            records: vec![r0],
        };
        assert!(contraction_check(&trace, Some(1.0)).is_err());
    }
}
