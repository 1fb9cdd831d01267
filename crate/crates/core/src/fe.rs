//! Linear tetrahedron geometry shared by the transport and mechanics assemblies.
//!
//! All element quantities use a single quadrature point: P1 gradients are constant
//! over the element, so the one-point rule integrates stiffness terms exactly.

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Signed volume of the tetrahedron `(p0, p1, p2, p3)`; positive for right-handed ordering.
pub fn signed_volume(p: &[Vec3; 4]) -> f64 {
    (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])) / 6.0
}

/// Reference-configuration data of a P1 tetrahedron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetGeometry {
    /// Volume in the reference configuration.
    pub volume: f64,
    /// Shape function gradients with respect to the reference coordinates.
    pub grads: [Vec3; 4],
}

impl TetGeometry {
    /// Returns `None` when the element is degenerate (edge matrix not invertible).
    pub fn new(p: &[Vec3; 4]) -> Option<Self> {
        let edges = Mat3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
        let inv = edges.try_inverse()?;
        // Rows of the inverse edge matrix are the gradients of N1..N3.
        let g1: Vec3 = inv.row(0).transpose();
        let g2: Vec3 = inv.row(1).transpose();
        let g3: Vec3 = inv.row(2).transpose();
        let g0 = -(g1 + g2 + g3);
        Some(TetGeometry {
            volume: edges.determinant() / 6.0,
            grads: [g0, g1, g2, g3],
        })
    }

    /// Deformation gradient F = I + Σ u_a ⊗ ∇N_a.
    pub fn deformation_gradient(&self, u: &[Vec3; 4]) -> Mat3 {
        let mut f = Mat3::identity();
        for (ua, ga) in u.iter().zip(&self.grads) {
            f += ua * ga.transpose();
        }
        f
    }

    /// Gradient of a nodal scalar field.
    pub fn scalar_gradient(&self, values: [f64; 4]) -> Vec3 {
        self.grads
            .iter()
            .zip(values)
            .fold(Vec3::zeros(), |acc, (g, v)| acc + g * v)
    }

    /// Element stiffness `V ∇Nᵀ D ∇N` for a constant conductivity tensor in reference coordinates.
    #[allow(clippy::needless_range_loop)]
    pub fn diffusion_stiffness(&self, d: &Mat3) -> [[f64; 4]; 4] {
        let mut k = [[0.0; 4]; 4];
        for a in 0..4 {
            let dg = d * self.grads[a];
            for b in a..4 {
                let v = self.volume * self.grads[b].dot(&dg);
                k[a][b] = v;
                k[b][a] = v;
            }
        }
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_tet() -> [Vec3; 4] {
        [
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ]
    }

    #[test]
    fn reference_simplex() {
        let g = TetGeometry::new(&unit_tet()).unwrap();
        assert!((g.volume - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(g.grads[0], Vec3::new(-1.0, -1.0, -1.0));
        assert_eq!(g.grads[1], Vec3::new(1.0, 0.0, 0.0));
        assert!((signed_volume(&unit_tet()) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_of_linear_field_is_exact() {
        let p = [
            Vec3::new(0.1, 0.2, -0.3),
            Vec3::new(1.3, 0.1, 0.0),
            Vec3::new(0.2, 1.1, 0.4),
            Vec3::new(-0.1, 0.3, 1.2),
        ];
        let g = TetGeometry::new(&p).unwrap();
        let w = Vec3::new(2.0, -1.0, 0.5);
        let vals = [
            w.dot(&p[0]) + 3.0,
            w.dot(&p[1]) + 3.0,
            w.dot(&p[2]) + 3.0,
            w.dot(&p[3]) + 3.0,
        ];
        assert!((g.scalar_gradient(vals) - w).norm() < 1e-12);
    }

    #[test]
    fn affine_displacement_recovers_f() {
        let p = unit_tet();
        let g = TetGeometry::new(&p).unwrap();
        let f = Mat3::new(1.1, 0.2, 0.0, -0.1, 0.9, 0.05, 0.0, 0.3, 1.2);
        let u = p.map(|x| f * x - x);
        assert!((g.deformation_gradient(&u) - f).norm() < 1e-14);
    }
}
