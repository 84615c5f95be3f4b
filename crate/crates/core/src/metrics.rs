//! Precision, retrieval accuracy and the RF iteration number.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::Session;

/// Relevant retrieved over retrieved.
pub fn precision(relevant_retrieved: usize, retrieved: usize) -> Result<f64> {
    if retrieved == 0 {
        return Err(Error::UndefinedMetric(
            "precision of an empty retrieval".into(),
        ));
    }
    if relevant_retrieved > retrieved {
        return Err(Error::Parameter(format!(
            "{relevant_retrieved} relevant out of {retrieved} retrieved"
        )));
    }
    Ok(relevant_retrieved as f64 / retrieved as f64)
}

/// Cumulative relevant retrieved over the scope.
pub fn retrieval_accuracy(cumulative_relevant: usize, scope: usize) -> Result<f64> {
    if scope == 0 || cumulative_relevant > scope {
        return Err(Error::Parameter(format!(
            "retrieval accuracy needs 0 <= {cumulative_relevant} <= scope {scope} and scope >= 1"
        )));
    }
    Ok(cumulative_relevant as f64 / scope as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub scope: usize,
    pub max_iterations: usize,
    /// `|R|` after each answered batch.
    pub cumulative_relevant: Vec<usize>,
    /// Precision of each answered batch; `None` for an empty batch.
    pub precision: Vec<Option<f64>>,
    pub retrieval_accuracy: Vec<f64>,
    pub rf_iteration_number: usize,
    pub complete: bool,
}

impl SessionMetrics {
    pub fn from_session(session: &Session) -> Self {
        let cfg = session.config();
        let cumulative_relevant: Vec<usize> = session
            .feedback()
            .iter()
            .map(|f| f.cumulative_relevant)
            .collect();
        let precision = session
            .feedback()
            .iter()
            .map(|f| precision(f.relevant.len(), f.shown.len()).ok())
            .collect();
        let retrieval_accuracy: Vec<f64> = cumulative_relevant
            .iter()
            .map(|&r| r as f64 / cfg.scope as f64)
            .collect();
        let rf_iteration_number = rf_iteration_number(&retrieval_accuracy, cfg.max_iterations);
        Self {
            scope: cfg.scope,
            max_iterations: cfg.max_iterations,
            cumulative_relevant,
            precision,
            retrieval_accuracy,
            rf_iteration_number,
            complete: session.is_complete(),
        }
    }

    /// Accuracy after the last answered batch (0 before any feedback).
    pub fn final_accuracy(&self) -> f64 {
        self.retrieval_accuracy.last().copied().unwrap_or(0.0)
    }

    /// Accuracy at iteration `t`, carrying the final value forward for
    /// sessions that finished earlier.
    pub fn accuracy_at(&self, t: usize) -> f64 {
        self.retrieval_accuracy
            .get(t)
            .or(self.retrieval_accuracy.last())
            .copied()
            .unwrap_or(0.0)
    }
}

/// First iteration whose accuracy reaches 1, or `max_iterations` if none does.
pub fn rf_iteration_number(retrieval_accuracy: &[f64], max_iterations: usize) -> usize {
    retrieval_accuracy
        .iter()
        .position(|&a| a >= 1.0)
        .map_or(max_iterations, |t| t.min(max_iterations))
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (n, sum) = values
        .into_iter()
        .fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| sum / n as f64)
}
