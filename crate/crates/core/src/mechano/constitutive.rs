//! Atrophy-weighted compressible neo-Hookean material.
//!
//! ψ(F) = ϑ ψ₀(Fe) with Fe = F Fa⁻¹ and
//! ψ₀(Fe) = G/2 (tr FeᵀFe − 3) − G ln Je + λ/2 (ln Je)².
//! Stress and tangent are both derived from this energy, so P = J σ F⁻ᵀ holds by construction.

use nalgebra::SMatrix;

use crate::error::{Error, Result};
use crate::fe::{Mat3, Vec3};
use crate::kinematics::fa_inverse;
use crate::params::RegionParams;

/// Fourth-order tangent ∂P/∂F stored as a 9×9 matrix indexed by (3i + J, 3k + L).
pub type Tangent = SMatrix<f64, 9, 9>;

/// Material state of one element: moduli, atrophy factor and Fa⁻¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementMaterial {
    pub lambda: f64,
    pub shear_g: f64,
    pub theta: f64,
    pub fa_inv: Mat3,
}

struct Elastic {
    fe: Mat3,
    fe_inv: Mat3,
    log_je: f64,
}

impl ElementMaterial {
    /// `fibre = None` selects isotropic atrophy.
    pub fn new(lambda: f64, shear_g: f64, theta: f64, fibre: Option<Vec3>) -> Self {
        ElementMaterial {
            lambda,
            shear_g,
            theta,
            fa_inv: fa_inverse(theta, fibre),
        }
    }

    pub fn from_region(region: &RegionParams, theta: f64, fibre: Option<Vec3>) -> Self {
        Self::new(region.lambda, region.shear_g, theta, fibre)
    }

    /// Material with an explicit atrophy tensor.
    pub fn with_fa(lambda: f64, shear_g: f64, theta: f64, fa: &Mat3) -> Result<Self> {
        let fa_inv = fa
            .try_inverse()
            .ok_or_else(|| Error::Kinematics("atrophy tensor is not invertible".into()))?;
        Ok(ElementMaterial {
            lambda,
            shear_g,
            theta,
            fa_inv,
        })
    }

    fn elastic(&self, f: &Mat3) -> Result<Elastic> {
        let fe = f * self.fa_inv;
        let je = fe.determinant();
        if !(je > 0.0) {
            return Err(Error::Kinematics(format!("non-positive elastic Jacobian {je:e}")));
        }
        let fe_inv = fe
            .try_inverse()
            .ok_or_else(|| Error::Kinematics("singular elastic deformation".into()))?;
        Ok(Elastic {
            fe,
            fe_inv,
            log_je: je.ln(),
        })
    }

    /// Strain energy per unit reference volume.
    pub fn energy(&self, f: &Mat3) -> Result<f64> {
        let el = self.elastic(f)?;
        let g = self.shear_g;
        let psi0 = 0.5 * g * ((el.fe.transpose() * el.fe).trace() - 3.0) - g * el.log_je
            + 0.5 * self.lambda * el.log_je * el.log_je;
        Ok(self.theta * psi0)
    }

    /// First Piola–Kirchhoff stress ϑ [G(Fe − Fe⁻ᵀ) + λ ln Je Fe⁻ᵀ] Fa⁻ᵀ.
    pub fn piola(&self, f: &Mat3) -> Result<Mat3> {
        let el = self.elastic(f)?;
        let fe_it = el.fe_inv.transpose();
        let p0 = (el.fe - fe_it) * self.shear_g + fe_it * (self.lambda * el.log_je);
        Ok(p0 * self.fa_inv.transpose() * self.theta)
    }

    /// Cauchy stress ϑ [(G/J)(Fe Feᵀ − I) + (λ ln Je / J) I].
    pub fn cauchy(&self, f: &Mat3) -> Result<Mat3> {
        let el = self.elastic(f)?;
        let j = f.determinant();
        let b = el.fe * el.fe.transpose();
        Ok(
            ((b - Mat3::identity()) * (self.shear_g / j) + Mat3::identity() * (self.lambda * el.log_je / j))
                * self.theta,
        )
    }

    /// ∂P/∂F.
    pub fn tangent(&self, f: &Mat3) -> Result<Tangent> {
        let el = self.elastic(f)?;
        let g = self.shear_g;
        let c1 = g - self.lambda * el.log_je;
        let h = &el.fe_inv;
        // Tangent with respect to Fe: A0[iM][kN].
        let mut a0 = Tangent::zeros();
        for i in 0..3 {
            for m in 0..3 {
                for k in 0..3 {
                    for n in 0..3 {
                        let mut v = c1 * h[(n, i)] * h[(m, k)] + self.lambda * h[(m, i)] * h[(n, k)];
                        if i == k && m == n {
                            v += g;
                        }
                        a0[(3 * i + m, 3 * k + n)] = v;
                    }
                }
            }
        }
        // Chain rule through Fe = F Fa⁻¹: A[iJ][kL] = ϑ Σ_MN A0[iM][kN] Fa⁻¹_JM Fa⁻¹_LN.
        let q = &self.fa_inv;
        let mut a = Tangent::zeros();
        for i in 0..3 {
            for k in 0..3 {
                let block = Mat3::from_fn(|m, n| a0[(3 * i + m, 3 * k + n)]);
                let r = q * block * q.transpose();
                for jj in 0..3 {
                    for l in 0..3 {
                        a[(3 * i + jj, 3 * k + l)] = self.theta * r[(jj, l)];
                    }
                }
            }
        }
        Ok(a)
    }
}

/// Piola stress for an explicit atrophy tensor.
pub fn piola_stress(f: &Mat3, fa: &Mat3, theta: f64, region: &RegionParams) -> Result<Mat3> {
    ElementMaterial::with_fa(region.lambda, region.shear_g, theta, fa)?.piola(f)
}

/// Cauchy stress for an explicit atrophy tensor.
pub fn cauchy_stress(f: &Mat3, fa: &Mat3, theta: f64, region: &RegionParams) -> Result<Mat3> {
    ElementMaterial::with_fa(region.lambda, region.shear_g, theta, fa)?.cauchy(f)
}
