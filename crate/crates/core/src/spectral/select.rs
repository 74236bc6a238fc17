use serde::{Deserialize, Serialize};

use super::eigen::SpectralBasis;
use crate::error::{EnsError, Result};

/// Low band `[0, low)` plus an optional contiguous high band `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EigenPolicy {
    pub low: usize,
    pub high: Option<(usize, usize)>,
}

impl EigenPolicy {
    /// Default used at desk scale: 600 eigenpairs computed, 120 low plus the last 80.
    pub const DESK: EigenPolicy = EigenPolicy {
        low: 120,
        high: Some((520, 600)),
    };

    /// 820 low plus `[8500, 10000)`, out of 10000 computed.
    pub const PAPER: EigenPolicy = EigenPolicy {
        low: 820,
        high: Some((8500, 10000)),
    };

    pub fn all(d: usize) -> Self {
        Self { low: d, high: None }
    }

    /// Number of eigenpairs that must be computed.
    pub fn required(&self) -> usize {
        self.high.map_or(self.low, |(_, e)| e.max(self.low))
    }

    /// Selected indices in ascending order.
    pub fn indices(&self) -> Result<Vec<usize>> {
        let mut idx: Vec<usize> = (0..self.low).collect();
        if let Some((s, e)) = self.high {
            if s >= e {
                return Err(EnsError::Argument(format!("empty high band [{s}, {e})")));
            }
            if s < self.low {
                return Err(EnsError::Argument(format!(
                    "high band [{s}, {e}) overlaps low band [0, {})",
                    self.low
                )));
            }
            idx.extend(s..e);
        }
        Ok(idx)
    }

    pub fn width(&self) -> usize {
        self.low + self.high.map_or(0, |(s, e)| e.saturating_sub(s))
    }
}

pub fn select_eigenfunctions(basis: &SpectralBasis, policy: &EigenPolicy) -> Result<SpectralBasis> {
    let idx = policy.indices()?;
    if policy.required() > basis.dim() {
        return Err(EnsError::Argument(format!(
            "policy needs {} eigenfunctions but basis has {}",
            policy.required(),
            basis.dim()
        )));
    }
    basis.subset(&idx)
}
