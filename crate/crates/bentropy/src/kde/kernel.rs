//! Kernel functions: nonnegative, symmetric, unit mass.

use serde::{Deserialize, Serialize};

/// Kernel identifier; string forms `"epanechnikov"`, `"uniform"`,
/// `"gaussian"` in CLI and config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelId {
    Epanechnikov,
    Uniform,
    Gaussian,
}

impl KernelId {
    pub const ALL: [KernelId; 3] = [KernelId::Epanechnikov, KernelId::Uniform, KernelId::Gaussian];

    pub fn as_str(&self) -> &'static str {
        match self {
            KernelId::Epanechnikov => "epanechnikov",
            KernelId::Uniform => "uniform",
            KernelId::Gaussian => "gaussian",
        }
    }
}

impl std::fmt::Display for KernelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for KernelId {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "epanechnikov" => Ok(KernelId::Epanechnikov),
            "uniform" => Ok(KernelId::Uniform),
            "gaussian" => Ok(KernelId::Gaussian),
            other => Err(crate::invalid(format!(
                "unknown kernel {other:?}; valid kernels: epanechnikov, uniform, gaussian"
            ))),
        }
    }
}

const INV_SQRT_2PI: f64 = 0.3989422804014327;

/// A smoothing kernel `K(u)` together with the pieces of calculus the
/// entropy-derivative quadratures need (a.e. derivatives, antiderivatives of
/// the bandwidth-derivative integrands, support-edge data).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Kernel {
    id: KernelId,
}

impl Kernel {
    pub fn new(id: KernelId) -> Self {
        Self { id }
    }

    pub fn id(&self) -> KernelId {
        self.id
    }

    /// Radius of the kernel support (`∞` for the Gaussian).
    pub fn support_radius(&self) -> f64 {
        match self.id {
            KernelId::Epanechnikov | KernelId::Uniform => 1.0,
            KernelId::Gaussian => f64::INFINITY,
        }
    }

    /// Radius used to pad integration domains: the support radius for
    /// compact kernels, 8 for the Gaussian (each truncated point carries
    /// less than 1e-14 of mass beyond 8 bandwidths).
    pub fn integration_radius(&self) -> f64 {
        match self.id {
            KernelId::Epanechnikov | KernelId::Uniform => 1.0,
            KernelId::Gaussian => 8.0,
        }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self.id {
            KernelId::Epanechnikov => {
                if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelId::Uniform => {
                if u.abs() < 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            KernelId::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
        }
    }

    /// `K'(u)` almost everywhere (the value at compact support endpoints is
    /// immaterial; quadrature nodes sit off the edges by construction).
    #[inline]
    pub fn deriv(&self, u: f64) -> f64 {
        match self.id {
            KernelId::Epanechnikov => {
                if u.abs() < 1.0 {
                    -1.5 * u
                } else {
                    0.0
                }
            }
            KernelId::Uniform => 0.0,
            KernelId::Gaussian => -u * INV_SQRT_2PI * (-0.5 * u * u).exp(),
        }
    }

    /// `K''(u)` almost everywhere.
    #[inline]
    pub fn second_deriv(&self, u: f64) -> f64 {
        match self.id {
            KernelId::Epanechnikov => {
                if u.abs() < 1.0 {
                    -1.5
                } else {
                    0.0
                }
            }
            KernelId::Uniform => 0.0,
            KernelId::Gaussian => (u * u - 1.0) * INV_SQRT_2PI * (-0.5 * u * u).exp(),
        }
    }

    /// Antiderivative `M(u) = ∫_{-∞}^{u} [K + tK'](t) dt` of the classical
    /// bandwidth-derivative integrand. Exact per-cell masses of `∂F̂/∂h`
    /// come from differences of this.
    #[inline]
    pub fn first_h_antiderivative(&self, u: f64) -> f64 {
        match self.id {
            // uK(u), continuous through the support edges.
            KernelId::Epanechnikov => {
                if u.abs() < 1.0 {
                    u * 0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelId::Uniform => {
                if u <= -1.0 {
                    0.0
                } else if u < 1.0 {
                    0.5 * (u + 1.0)
                } else {
                    1.0
                }
            }
            KernelId::Gaussian => u * INV_SQRT_2PI * (-0.5 * u * u).exp(),
        }
    }

    /// Antiderivative `A(u) = ∫_{-∞}^{u} [2K + 4tK' + t²K''](t) dt` of the
    /// classical second bandwidth-derivative integrand.
    #[inline]
    pub fn second_h_antiderivative(&self, u: f64) -> f64 {
        match self.id {
            KernelId::Epanechnikov => {
                if u <= -1.0 {
                    0.0
                } else if u < 1.0 {
                    1.5 * u - 3.0 * u.powi(3) - 1.5
                } else {
                    -3.0
                }
            }
            // The uniform kernel's own value jumps at the support edge, so
            // its second h-derivative is not a function; unsupported.
            KernelId::Uniform => f64::NAN,
            KernelId::Gaussian => {
                (2.0 * u - u.powi(3)) * INV_SQRT_2PI * (-0.5 * u * u).exp()
            }
        }
    }

    /// `K(r⁻)`: kernel value just inside the support edge (0 when the kernel
    /// vanishes there, e.g. Epanechnikov).
    pub fn edge_value(&self) -> f64 {
        match self.id {
            KernelId::Epanechnikov => 0.0,
            KernelId::Uniform => 0.5,
            KernelId::Gaussian => 0.0,
        }
    }

    /// `K'(r⁻)`: slope just inside the support edge.
    pub fn edge_slope(&self) -> f64 {
        match self.id {
            KernelId::Epanechnikov => -1.5,
            KernelId::Uniform => 0.0,
            KernelId::Gaussian => 0.0,
        }
    }

    /// Whether second-bandwidth-derivative operations are defined for this
    /// kernel (requires a continuous kernel).
    pub fn supports_second_h_derivative(&self) -> bool {
        !matches!(self.id, KernelId::Uniform)
    }

    /// Roughness `R(K) = ∫ K(u)² du`, by quadrature (midpoint, which keeps
    /// nodes off the uniform kernel's support-edge jumps).
    pub fn roughness(&self) -> f64 {
        let r = self.integration_radius();
        crate::numeric::midpoint_converged(|u| self.eval(u) * self.eval(u), -r, r, 1e-12)
    }

    /// Second moment `∫ u² K(u) du`, by quadrature.
    pub fn second_moment(&self) -> f64 {
        let r = self.integration_radius();
        crate::numeric::midpoint_converged(|u| u * u * self.eval(u), -r, r, 1e-12)
    }

    /// Unit mass `∫ K(u) du`, by quadrature (a defining kernel condition).
    pub fn mass(&self) -> f64 {
        let r = self.integration_radius();
        crate::numeric::midpoint_converged(|u| self.eval(u), -r, r, 1e-12)
    }

    /// Differential entropy of the kernel itself, `-∫ K ln K du`.
    pub fn shape_entropy(&self) -> f64 {
        let r = self.integration_radius();
        crate::numeric::midpoint_converged(
            |u| {
                let k = self.eval(u);
                if k > 0.0 {
                    -k * k.ln()
                } else {
                    0.0
                }
            },
            -r,
            r,
            1e-12,
        )
    }
}
