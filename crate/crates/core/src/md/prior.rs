use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm3, sub3};

/// Harmonic bond `0.5 k (|r_i - r_j| - r0)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    /// Spring constant in energy / nm^2.
    pub k: f64,
    /// Rest length in nm.
    pub r0: f64,
}

/// Prior energy terms added to the network energy.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PriorSpec {
    pub bonds: Vec<Bond>,
}

impl PriorSpec {
    pub fn new(bonds: Vec<Bond>) -> Result<Self> {
        for (b, bond) in bonds.iter().enumerate() {
            if bond.i == bond.j {
                return Err(Error::InvalidInput(format!("bond {b} joins bead {} to itself", bond.i)));
            }
            if !(bond.k >= 0.0 && bond.k.is_finite()) {
                return Err(Error::InvalidInput(format!("bond {b} has spring constant {}", bond.k)));
            }
            if !(bond.r0 > 0.0 && bond.r0.is_finite()) {
                return Err(Error::InvalidInput(format!("bond {b} has rest length {}", bond.r0)));
            }
        }
        Ok(Self { bonds })
    }

    /// Consecutive beads `0-1, 1-2, ...` joined by identical bonds.
    pub fn chain(n: usize, k: f64, r0: f64) -> Result<Self> {
        Self::new(
            (1..n)
                .map(|i| Bond {
                    i: i - 1,
                    j: i,
                    k,
                    r0,
                })
                .collect(),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.bonds.is_empty()
    }

    pub fn check_indices(&self, n: usize) -> Result<()> {
        match self.bonds.iter().position(|b| b.i >= n || b.j >= n) {
            Some(b) => Err(Error::InvalidInput(format!(
                "bond {b} ({} - {}) refers past the last of {n} beads",
                self.bonds[b].i, self.bonds[b].j
            ))),
            None => Ok(()),
        }
    }
}

/// Prior energy and forces.
pub fn prior_energy_forces(positions: &[[f64; 3]], prior: &PriorSpec) -> (f64, Vec<[f64; 3]>) {
    let mut forces = vec![[0.0; 3]; positions.len()];
    let mut energy = 0.0;
    for b in &prior.bonds {
        let u = sub3(positions[b.i], positions[b.j]);
        let r = norm3(u);
        let dr = r - b.r0;
        energy += 0.5 * b.k * dr * dr;
        if r > 0.0 {
            // dE/dr_i = k dr u / r
            let s = b.k * dr / r;
            for c in 0..3 {
                forces[b.i][c] -= s * u[c];
                forces[b.j][c] += s * u[c];
            }
        }
    }
    (energy, forces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn rest_length_is_force_free() {
        let p = [[0.0, 0.0, 0.0], [0.38, 0.0, 0.0], [0.38, 0.38, 0.0]];
        let prior = PriorSpec::chain(3, 100.0, 0.38).unwrap();
        let (e, f) = prior_energy_forces(&p, &prior);
        assert!(e.abs() < 1e-20);
        assert!(f.iter().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn stretched_bond() {
        let prior = PriorSpec::chain(2, 50.0, 0.4).unwrap();
        let (e, f) = prior_energy_forces(&[[0.0; 3], [0.0, 0.0, 0.45]], &prior);
        assert!((e - 0.5 * 50.0 * 0.05f64.powi(2)).abs() < 1e-12);
        assert!((f[1][2] + 50.0 * 0.05).abs() < 1e-12);
        assert!((f[0][2] - 50.0 * 0.05).abs() < 1e-12);
    }

    #[test]
    fn forces_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 8;
        let bonds = (0..12)
            .map(|_| {
                let i = rng.gen_range(0..n);
                let j = (i + rng.gen_range(1..n)) % n;
                Bond {
                    i,
                    j,
                    k: rng.gen_range(10.0..500.0),
                    r0: rng.gen_range(0.3..0.5),
                }
            })
            .collect();
        let prior = PriorSpec::new(bonds).unwrap();
        let p: Vec<[f64; 3]> = (0..n).map(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.0))).collect();
        let (_, f) = prior_energy_forces(&p, &prior);
        let h = 1e-6;
        for a in 0..n {
            for c in 0..3 {
                let mut q = p.clone();
                q[a][c] += h;
                let ep = prior_energy_forces(&q, &prior).0;
                q[a][c] -= 2.0 * h;
                let em = prior_energy_forces(&q, &prior).0;
                let fd = -(ep - em) / (2.0 * h);
                assert!((fd - f[a][c]).abs() < 1e-6 * f[a][c].abs().max(1.0), "{a} {c}: {fd} vs {}", f[a][c]);
            }
        }
    }

    #[test]
    fn invalid_bonds_rejected() {
        let b = |i, j, k, r0| Bond { i, j, k, r0 };
        assert!(PriorSpec::new(vec![b(1, 1, 1.0, 0.4)]).is_err());
        assert!(PriorSpec::new(vec![b(0, 1, -1.0, 0.4)]).is_err());
        assert!(PriorSpec::new(vec![b(0, 1, 1.0, 0.0)]).is_err());
        assert!(PriorSpec::chain(3, 1.0, 0.4).unwrap().check_indices(2).is_err());
    }
}
