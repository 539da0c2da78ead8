//! Ion arrangements and the orbital frame derived from them.

use crate::error::{invalid, Result};
use crate::quadrature::{norm, sub};

/// One nucleus: charge in units of e and position in bohr.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ion {
    pub charge: f64,
    pub position: [f64; 3],
}

/// Fixed Coulomb centers seen by the electron.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGeometry {
    ions: Vec<Ion>,
}

/// Right-handed orthonormal frame; orbital harmonics are quantized along
/// `axes[2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub axes: [[f64; 3]; 3],
}

impl Frame {
    pub const IDENTITY: Frame = Frame {
        axes: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Components of a lab vector in this frame.
    #[inline]
    pub fn to_local(&self, v: [f64; 3]) -> [f64; 3] {
        [dot(self.axes[0], v), dot(self.axes[1], v), dot(self.axes[2], v)]
    }

    /// Lab vector from local components.
    #[inline]
    pub fn to_lab(&self, v: [f64; 3]) -> [f64; 3] {
        let a = &self.axes;
        [
            a[0][0] * v[0] + a[1][0] * v[1] + a[2][0] * v[2],
            a[0][1] * v[0] + a[1][1] * v[1] + a[2][1] * v[2],
            a[0][2] * v[0] + a[1][2] * v[1] + a[2][2] * v[2],
        ]
    }
}

const COLLINEAR_TOL: f64 = 1e-9;

impl ClusterGeometry {
    pub fn new(ions: Vec<Ion>) -> Result<Self> {
        if ions.is_empty() {
            return invalid("geometry needs at least one ion");
        }
        for (i, ion) in ions.iter().enumerate() {
            if !(ion.charge > 0.0) || !ion.charge.is_finite() {
                return invalid(format!("ion {i} has non-positive charge {}", ion.charge));
            }
            if ion.position.iter().any(|c| !c.is_finite()) {
                return invalid(format!("ion {i} has a non-finite position"));
            }
            for (j, other) in ions.iter().enumerate().take(i) {
                if norm(sub(ion.position, other.position)) < 1e-8 {
                    return invalid(format!("ions {j} and {i} coincide"));
                }
            }
        }
        Ok(Self { ions })
    }

    /// Equal charges on the x axis.
    pub fn chain_x(charge: f64, xs: &[f64]) -> Result<Self> {
        Self::new(
            xs.iter()
                .map(|&x| Ion { charge, position: [x, 0.0, 0.0] })
                .collect(),
        )
    }

    pub fn ions(&self) -> &[Ion] {
        &self.ions
    }

    pub fn len(&self) -> usize {
        self.ions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ions.is_empty()
    }

    pub fn total_charge(&self) -> f64 {
        self.ions.iter().map(|i| i.charge).sum()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.ions.iter().map(|i| i.position).collect()
    }

    pub fn translated(&self, shift: [f64; 3]) -> Self {
        Self {
            ions: self
                .ions
                .iter()
                .map(|i| Ion {
                    charge: i.charge,
                    position: [i.position[0] + shift[0], i.position[1] + shift[1], i.position[2] + shift[2]],
                })
                .collect(),
        }
    }

    /// Unit vector along the line holding every ion, or `None` if the ions
    /// are not collinear. A single ion reports the z axis.
    pub fn axis(&self) -> Option<[f64; 3]> {
        let p0 = self.ions[0].position;
        let far = self
            .ions
            .iter()
            .map(|i| sub(i.position, p0))
            .max_by(|a, b| norm(*a).total_cmp(&norm(*b)))
            .unwrap();
        let len = norm(far);
        if len == 0.0 {
            return Some([0.0, 0.0, 1.0]);
        }
        let mut u = [far[0] / len, far[1] / len, far[2] / len];
        for ion in &self.ions {
            let d = sub(ion.position, p0);
            let along = dot(d, u);
            let perp = sub(d, [along * u[0], along * u[1], along * u[2]]);
            if norm(perp) > COLLINEAR_TOL * len.max(1.0) {
                return None;
            }
        }
        // canonical direction: first non-negligible component positive
        if let Some(c) = u.iter().find(|c| c.abs() > 1e-12) {
            if *c < 0.0 {
                u = [-u[0], -u[1], -u[2]];
            }
        }
        Some(u)
    }

    pub fn is_axial(&self) -> bool {
        self.axis().is_some()
    }

    /// Frame whose z axis is the chain axis for collinear geometries; the
    /// lab frame otherwise.
    pub fn orbital_frame(&self) -> Frame {
        let Some(ez) = self.axis() else {
            return Frame::IDENTITY;
        };
        // least aligned lab axis seeds x'
        let mut k = 0;
        for j in 1..3 {
            if ez[j].abs() < ez[k].abs() - 1e-12 {
                k = j;
            }
        }
        let mut seed = [0.0; 3];
        seed[k] = 1.0;
        let proj = dot(seed, ez);
        let ex = sub(seed, [proj * ez[0], proj * ez[1], proj * ez[2]]);
        let n = norm(ex);
        let ex = [ex[0] / n, ex[1] / n, ex[2] / n];
        let ey = cross(ez, ex);
        Frame { axes: [ex, ey, ez] }
    }

    /// Signed coordinates of the ions along the axis, measured from the
    /// projection of the lab origin.
    pub fn axial_coordinates(&self) -> Option<Vec<f64>> {
        let u = self.axis()?;
        Some(self.ions.iter().map(|i| dot(i.position, u)).collect())
    }

    /// Lab-frame point on the axis closest to the origin.
    pub fn axis_origin(&self) -> Option<[f64; 3]> {
        let u = self.axis()?;
        let p = self.ions[0].position;
        let a = dot(p, u);
        Some(sub(p, [a * u[0], a * u[1], a * u[2]]))
    }
}

#[inline]
pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
