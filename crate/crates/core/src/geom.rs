//! Small linear-algebra helpers shared by the fitters.

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};

/// Components with magnitude at or below this are treated as zero when
/// choosing the canonical sign of a direction.
const SIGN_EPS: f64 = 1e-12;

/// Flips `v` so that its first non-negligible component is positive.
pub fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    for i in 0..3 {
        if v[i].abs() > SIGN_EPS {
            return if v[i] < 0.0 { -v } else { v };
        }
    }
    v
}

pub fn centroid<'a, I>(points: I) -> Option<Point3<f64>>
where
    I: IntoIterator<Item = &'a Point3<f64>>,
{
    let mut sum = Vector3::zeros();
    let mut n = 0usize;
    for p in points {
        sum += p.coords;
        n += 1;
    }
    (n > 0).then(|| Point3::from(sum / n as f64))
}

/// Eigen-decomposition of the scatter matrix of `points` about `center`.
/// Eigenpairs come back sorted by ascending eigenvalue.
pub struct Scatter {
    pub values: [f64; 3],
    pub vectors: [Vector3<f64>; 3],
}

impl Scatter {
    pub fn of<'a, I>(points: I, center: &Point3<f64>) -> Self
    where
        I: IntoIterator<Item = &'a Point3<f64>>,
    {
        let mut m = Matrix3::zeros();
        for p in points {
            let d = p - center;
            m += d * d.transpose();
        }
        let eig = SymmetricEigen::new(m);
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        Self {
            values: idx.map(|i| eig.eigenvalues[i].max(0.0)),
            vectors: idx.map(|i| eig.eigenvectors.column(i).into_owned().normalize()),
        }
    }

    pub fn smallest(&self) -> Vector3<f64> {
        self.vectors[0]
    }

    pub fn largest(&self) -> Vector3<f64> {
        self.vectors[2]
    }
}

/// Two unit vectors completing `n` to an orthonormal right-handed basis
/// `(e1, e2, n)`.
pub fn orthonormal_complement(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = (helper - n * n.dot(&helper)).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}
