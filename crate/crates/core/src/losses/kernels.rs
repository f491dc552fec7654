use serde::{Deserialize, Serialize};

use super::KdError;
use crate::matrix::{dot, norm, squared_distance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `(cos(x, y) + 1) / 2`, in `[0, 1]`.
    CosineAffinity,
    /// `exp(-|x - y|² / 2σ²)`.
    Gaussian { sigma: f64 },
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self, KdError> {
        let k = KernelSpec::Gaussian { sigma };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), KdError> {
        match *self {
            KernelSpec::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                KdError::InvalidKernel(format!("sigma must be positive, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }

    pub(crate) fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::CosineAffinity => {
                let c = (dot(x, y) / (norm(x) * norm(y))).clamp(-1.0, 1.0);
                0.5 * (c + 1.0)
            }
            KernelSpec::Gaussian { sigma } => gaussian_kernel(x, y, sigma),
        }
    }

    /// Adds `scale * ∂K(x, y)/∂x` to `out`. `k` is the kernel value.
    pub(crate) fn add_grad_x(&self, x: &[f64], y: &[f64], k: f64, scale: f64, out: &mut [f64]) {
        match *self {
            KernelSpec::CosineAffinity => {
                let (nx, ny) = (norm(x), norm(y));
                let c = dot(x, y) / (nx * ny);
                let a = 0.5 * scale / (nx * ny);
                let b = 0.5 * scale * c / (nx * nx);
                for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
                    *o += a * yi - b * xi;
                }
            }
            KernelSpec::Gaussian { sigma } => {
                let f = -scale * k / (sigma * sigma);
                for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
                    *o += f * (xi - yi);
                }
            }
        }
    }
}

/// `(cos(x, y) + 1) / 2`.
pub fn cosine_affinity(x: &[f64], y: &[f64]) -> Result<f64, KdError> {
    if x.len() != y.len() {
        return Err(KdError::DimensionMismatch(x.len(), y.len()));
    }
    if norm(x) == 0.0 {
        return Err(KdError::ZeroVector("x".into()));
    }
    if norm(y) == 0.0 {
        return Err(KdError::ZeroVector("y".into()));
    }
    Ok(KernelSpec::CosineAffinity.eval(x, y))
}

/// `exp(-|x - y|² / 2σ²)`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    (-squared_distance(x, y) / (2.0 * sigma * sigma)).exp()
}
