use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Relative size of the second singular value below which the covariance is
/// treated as rank deficient.
const DEGENERATE_TOL: f64 = 1e-10;

/// Rigid transform taking the mobile structure onto the reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub rmsd: f64,
}

impl Alignment {
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        std::array::from_fn(|k| r[k][0] * p[0] + r[k][1] * p[1] + r[k][2] * p[2] + self.translation[k])
    }

    pub fn determinant(&self) -> f64 {
        to_matrix(&self.rotation).determinant()
    }
}

fn to_matrix(r: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| r[i][j])
}

fn centroid(x: &[[f64; 3]]) -> Vector3<f64> {
    let mut c = Vector3::zeros();
    for p in x {
        c += Vector3::from(*p);
    }
    c / x.len() as f64
}

fn check_pair(x: &[[f64; 3]], x_ref: &[[f64; 3]]) -> Result<()> {
    if x.len() != x_ref.len() {
        return Err(Error::Shape(format!("{} beads vs {} in the reference", x.len(), x_ref.len())));
    }
    if x.len() < 3 {
        return Err(Error::InvalidInput(format!("superposition needs at least 3 beads, got {}", x.len())));
    }
    Ok(())
}

/// Least-squares proper rotation and translation of `x` onto `x_ref`.
pub fn kabsch_align(x: &[[f64; 3]], x_ref: &[[f64; 3]]) -> Result<Alignment> {
    check_pair(x, x_ref)?;
    let (cx, cy) = (centroid(x), centroid(x_ref));
    let mut h = Matrix3::zeros();
    for (p, q) in x.iter().zip(x_ref) {
        h += (Vector3::from(*p) - cx) * (Vector3::from(*q) - cy).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let s = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    if !(s[order[0]] > 0.0) || s[order[1]] <= DEGENERATE_TOL * s[order[0]] {
        return Err(Error::InvalidInput(
            "structures are collinear or coincident; the rotation is not unique".into(),
        ));
    }
    let v = v_t.transpose();
    let mut flip = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        flip[(order[2], order[2])] = -1.0;
    }
    let r = v * flip * u.transpose();
    let t = cy - r * cx;
    let mut a = Alignment {
        rotation: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
        translation: [t[0], t[1], t[2]],
        rmsd: 0.0,
    };
    let sq: f64 = x
        .iter()
        .zip(x_ref)
        .map(|(p, q)| {
            let y = a.apply(*p);
            (0..3).map(|k| (y[k] - q[k]).powi(2)).sum::<f64>()
        })
        .sum();
    a.rmsd = (sq / x.len() as f64).sqrt();
    Ok(a)
}

/// Root mean square deviation after optimal superposition, in the units of the input.
pub fn rmsd(x: &[[f64; 3]], x_ref: &[[f64; 3]]) -> Result<f64> {
    kabsch_align(x, x_ref).map(|a| a.rmsd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect()
    }

    fn euler(a: f64, b: f64, c: f64) -> Matrix3<f64> {
        let rz = |t: f64| Matrix3::new(t.cos(), -t.sin(), 0.0, t.sin(), t.cos(), 0.0, 0.0, 0.0, 1.0);
        let ry = |t: f64| Matrix3::new(t.cos(), 0.0, t.sin(), 0.0, 1.0, 0.0, -t.sin(), 0.0, t.cos());
        rz(a) * ry(b) * rz(c)
    }

    fn transform(x: &[[f64; 3]], r: &Matrix3<f64>, t: [f64; 3]) -> Vec<[f64; 3]> {
        x.iter()
            .map(|p| {
                let y = r * Vector3::from(*p);
                [y[0] + t[0], y[1] + t[1], y[2] + t[2]]
            })
            .collect()
    }

    #[test]
    fn identical_structures() {
        let x = cloud(10, 1);
        let a = kabsch_align(&x, &x).unwrap();
        assert!(a.rmsd < 1e-14);
        assert!((to_matrix(&a.rotation) - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn rigid_copies_superpose_exactly() {
        let x = cloud(25, 2);
        let r = euler(0.7, 2.1, -1.3);
        let y = transform(&x, &r, [3.0, -1.0, 0.5]);
        let a = kabsch_align(&y, &x).unwrap();
        assert!(a.rmsd <= 1e-10, "{}", a.rmsd);
        assert!((a.determinant() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mirror_images_still_get_proper_rotations() {
        let x = cloud(12, 3);
        let mirrored: Vec<[f64; 3]> = x.iter().map(|p| [p[0], p[1], -p[2]]).collect();
        let a = kabsch_align(&mirrored, &x).unwrap();
        assert!((a.determinant() - 1.0).abs() < 1e-10);
        assert!(a.rmsd > 0.05);
    }

    #[test]
    fn matches_brute_force_rotation_search() {
        let x = cloud(15, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y: Vec<[f64; 3]> = transform(&x, &euler(0.3, 0.4, 0.5), [0.1, 0.2, 0.3])
            .into_iter()
            .map(|p| p.map(|v| v + rng.gen_range(-0.05..0.05)))
            .collect();
        let objective = |ang: [f64; 3]| {
            let r = euler(ang[0], ang[1], ang[2]);
            let (cy, cx) = (centroid(&y), centroid(&x));
            let sq: f64 = y
                .iter()
                .zip(&x)
                .map(|(p, q)| (r * (Vector3::from(*p) - cy) - (Vector3::from(*q) - cx)).norm_squared())
                .sum();
            (sq / x.len() as f64).sqrt()
        };
        // coordinate descent with shrinking steps from the inverse rotation's neighbourhood
        let mut best = [-0.5, -0.4, -0.3];
        let mut f = objective(best);
        let mut step = 0.2;
        while step > 1e-12 {
            let mut improved = false;
            for k in 0..3 {
                for sgn in [-1.0, 1.0] {
                    let mut cand = best;
                    cand[k] += sgn * step;
                    let fc = objective(cand);
                    if fc < f {
                        (best, f, improved) = (cand, fc, true);
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        let kab = rmsd(&y, &x).unwrap();
        assert!((kab - f).abs() <= 1e-8, "kabsch {kab} vs search {f}");
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let x = cloud(2, 6);
        assert!(kabsch_align(&x, &x).is_err());
        let line: Vec<[f64; 3]> = (0..6).map(|i| [i as f64, 2.0 * i as f64, 0.0]).collect();
        assert!(kabsch_align(&line, &line).is_err());
        let same = vec![[1.0, 1.0, 1.0]; 5];
        assert!(kabsch_align(&same, &same).is_err());
        assert!(kabsch_align(&cloud(4, 1), &cloud(5, 1)).is_err());
    }
}
