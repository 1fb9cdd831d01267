//! Atrophy tensors, the multiplicative split F = Fe·Fa, and spatial diffusion tensors.

use crate::error::{Error, Result};
use crate::fe::{Mat3, Vec3};
use crate::meshio::TissueClass;
use crate::params::BioParams;

/// Axonal stretch below which the tau diffusion dyad is undefined.
pub const LAMBDA_A_MIN: f64 = 1e-9;

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta <= 1.0 {
        Ok(())
    } else {
        Err(Error::Kinematics(format!("atrophy factor {theta} outside (0, 1]")))
    }
}

/// Fa for a given atrophy factor. `fibre = None` gives the isotropic ϑ^{1/3} I, otherwise the
/// transversely isotropic √ϑ I + (1 − √ϑ) a⊗a.
pub fn fa_tensor(theta: f64, fibre: Option<Vec3>) -> Mat3 {
    match fibre {
        None => Mat3::identity() * theta.cbrt(),
        Some(a) => {
            let s = theta.sqrt();
            Mat3::identity() * s + a * a.transpose() * (1.0 - s)
        }
    }
}

/// Closed-form inverse of [`fa_tensor`].
pub fn fa_inverse(theta: f64, fibre: Option<Vec3>) -> Mat3 {
    match fibre {
        None => Mat3::identity() / theta.cbrt(),
        Some(a) => {
            let s = 1.0 / theta.sqrt();
            Mat3::identity() * s + a * a.transpose() * (1.0 - s)
        }
    }
}

/// Atrophy deformation gradient of a tissue class. White matter requires a unit fibre direction.
pub fn atrophy_tensor(theta: f64, a: Option<Vec3>, tissue: TissueClass) -> Result<Mat3> {
    check_theta(theta)?;
    match tissue {
        TissueClass::White => {
            let a = a.ok_or_else(|| Error::Kinematics("white matter requires an axonal direction".into()))?;
            if (a.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Kinematics(format!("axonal direction has norm {}", a.norm())));
            }
            Ok(fa_tensor(theta, Some(a)))
        }
        TissueClass::Grey | TissueClass::Fluid => Ok(fa_tensor(theta, None)),
    }
}

/// Fe = F·Fa⁻¹ and Je = det F / det Fa.
pub fn elastic_part(f: &Mat3, fa: &Mat3) -> Result<(Mat3, f64)> {
    let ja = fa.determinant();
    if !(ja > 0.0) {
        return Err(Error::Kinematics(format!("atrophy tensor has det {ja:e}")));
    }
    let inv = fa
        .try_inverse()
        .ok_or_else(|| Error::Kinematics("atrophy tensor is not invertible".into()))?;
    Ok((f * inv, f.determinant() / ja))
}

/// Kinematic quantities at one quadrature point.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationState {
    pub f: Mat3,
    pub fa: Mat3,
    pub fe: Mat3,
    pub j: f64,
    pub ja: f64,
    pub je: f64,
    /// ‖F·a‖, present when a fibre direction is.
    pub lambda_a: Option<f64>,
}

impl DeformationState {
    pub fn new(f: Mat3, theta: f64, fibre: Option<Vec3>) -> Result<Self> {
        check_theta(theta)?;
        let fa = fa_tensor(theta, fibre);
        let fe = f * fa_inverse(theta, fibre);
        let j = f.determinant();
        Ok(DeformationState {
            f,
            fa,
            fe,
            j,
            ja: theta,
            je: j / theta,
            lambda_a: fibre.map(|a| (f * a).norm()),
        })
    }
}

/// Tau diffusion d_ext i + d_axn (Fa ⊗ Fa)/λa² in white matter, d_ext i elsewhere.
pub fn tau_diffusion(f: &Mat3, a: Option<Vec3>, bio: &BioParams, tissue: TissueClass) -> Result<Mat3> {
    tau_diffusion_with(f, a, bio, tissue, LAMBDA_A_MIN)
}

pub fn tau_diffusion_with(
    f: &Mat3,
    a: Option<Vec3>,
    bio: &BioParams,
    tissue: TissueClass,
    lambda_a_min: f64,
) -> Result<Mat3> {
    let iso = Mat3::identity() * bio.d_ext;
    if tissue != TissueClass::White {
        return Ok(iso);
    }
    let a = a.ok_or_else(|| Error::Kinematics("white matter requires an axonal direction".into()))?;
    let fa = f * a;
    let lambda_a = fa.norm();
    if !(lambda_a > lambda_a_min) {
        return Err(Error::Kinematics(format!(
            "axonal stretch {lambda_a:e} below threshold {lambda_a_min:e} (collapsed fibre)"
        )));
    }
    Ok(iso + fa * fa.transpose() * (bio.d_axn / (lambda_a * lambda_a)))
}

pub fn abeta_diffusion(bio: &BioParams) -> Mat3 {
    Mat3::identity() * bio.d_ext
}

/// Isotropic tensor with the same trace as the white-matter tau tensor.
pub fn isotropized_tau_diffusion(bio: &BioParams) -> Mat3 {
    Mat3::identity() * ((3.0 * bio.d_ext + bio.d_axn) / 3.0)
}

/// Pulls a spatial diffusion tensor back to the reference configuration: J F⁻¹ d F⁻ᵀ.
pub fn pull_back(f: &Mat3, d: &Mat3) -> Result<Mat3> {
    let j = f.determinant();
    let inv = f
        .try_inverse()
        .filter(|_| j > 0.0)
        .ok_or_else(|| Error::Kinematics(format!("deformation gradient has det {j:e}")))?;
    Ok(inv * d * inv.transpose() * j)
}

/// Element fibre direction from its four nodal vectors.
///
/// Vectors are sign-aligned with the first available one, averaged and renormalized. When the
/// average nearly cancels (norm < 0.1) the vector of the node closest to the centroid is used.
pub fn element_direction(nodal: [Option<Vec3>; 4], points: &[Vec3; 4]) -> Option<Vec3> {
    let reference = nodal.iter().flatten().next().copied()?;
    let mut sum = Vec3::zeros();
    let mut count = 0;
    for v in nodal.iter().flatten() {
        sum += if v.dot(&reference) < 0.0 { -v } else { *v };
        count += 1;
    }
    let mean = sum / count as f64;
    if mean.norm() >= 0.1 {
        return Some(mean.normalize());
    }
    let centroid = points.iter().sum::<Vec3>() / 4.0;
    (0..4)
        .filter(|&i| nodal[i].is_some())
        .min_by(|&i, &j| {
            (points[i] - centroid)
                .norm_squared()
                .total_cmp(&(points[j] - centroid).norm_squared())
        })
        .and_then(|i| nodal[i])
}
