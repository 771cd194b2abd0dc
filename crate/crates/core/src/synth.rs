//! Synthetic chains and graphs standing in for protein data.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::md::{Bond, System};
use crate::neighbor::NeighborList;

/// Consecutive bead spacing of the generated chains, in nm.
pub const BOND_LENGTH: f64 = 0.38;
/// Closest approach allowed between beads of a generated chain.
pub const MIN_SEPARATION: f64 = 0.4;
pub const DEFAULT_MASS: f64 = 110.0;
/// Bond spring constant in kJ/(mol nm^2).
pub const DEFAULT_BOND_K: f64 = 20_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Self-avoiding random walk.
    Coil,
    /// Spiral with helical rise and twist.
    Helix,
    /// Self-avoiding walk confined to a sphere.
    Globule,
}

impl std::str::FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coil" => Ok(Shape::Coil),
            "helix" => Ok(Shape::Helix),
            "globule" => Ok(Shape::Globule),
            _ => Err(Error::Config(format!("unknown shape {s:?}; expected coil, helix or globule"))),
        }
    }
}

/// Helix with 0.23 nm radius, 0.15 nm rise and 100 degrees per bead.
pub fn helix(n: usize) -> Vec<[f64; 3]> {
    let (radius, rise, turn) = (0.23, 0.15, 100f64.to_radians());
    (0..n)
        .map(|i| {
            let a = i as f64 * turn;
            [radius * a.cos(), radius * a.sin(), rise * i as f64]
        })
        .collect()
}

fn too_close(p: [f64; 3], placed: &[[f64; 3]], min: f64) -> bool {
    // the previous bead is bonded and sits exactly one bond away
    let m2 = min * min;
    placed[..placed.len().saturating_sub(1)].iter().any(|q| {
        let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
        d[0] * d[0] + d[1] * d[1] + d[2] * d[2] < m2
    })
}

fn walk(n: usize, seed: u64, radius: Option<f64>) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<[f64; 3]> = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push([0.0; 3]);
    while out.len() < n {
        let last = *out.last().unwrap();
        let mut best = None;
        for attempt in 0..200 {
            let u: [f64; 3] = UnitSphere.sample(&mut rng);
            let mut p = [
                last[0] + BOND_LENGTH * u[0],
                last[1] + BOND_LENGTH * u[1],
                last[2] + BOND_LENGTH * u[2],
            ];
            if let Some(r) = radius {
                let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                if norm > r && attempt < 150 {
                    continue;
                }
                if norm > r {
                    // pull the step back toward the centre
                    let inward = [-last[0], -last[1], -last[2]];
                    let l = (inward.iter().map(|v| v * v).sum::<f64>()).sqrt().max(1e-12);
                    p = [
                        last[0] + BOND_LENGTH * inward[0] / l,
                        last[1] + BOND_LENGTH * inward[1] / l,
                        last[2] + BOND_LENGTH * inward[2] / l,
                    ];
                }
            }
            best = Some(p);
            if !too_close(p, &out, MIN_SEPARATION) {
                break;
            }
        }
        out.push(best.expect("at least one attempt"));
    }
    out
}

pub fn random_coil(n: usize, seed: u64) -> Vec<[f64; 3]> {
    walk(n, seed, None)
}

/// Compact chain at roughly `density` beads per nm^3.
pub fn globule(n: usize, density: f64, seed: u64) -> Vec<[f64; 3]> {
    let r = (3.0 * n as f64 / (4.0 * std::f64::consts::PI * density)).cbrt().max(BOND_LENGTH);
    walk(n, seed, Some(r))
}

/// A bonded chain of `shape` with types cycling over `num_types`, unit masses
/// of [`DEFAULT_MASS`] and its own coordinates as the native structure.
pub fn chain_system(shape: Shape, n: usize, num_types: usize, seed: u64) -> Result<System> {
    if num_types == 0 {
        return Err(Error::Config("need at least one bead type".into()));
    }
    let positions = match shape {
        Shape::Coil => random_coil(n, seed),
        Shape::Helix => helix(n),
        Shape::Globule => globule(n, 3.0, seed),
    };
    let mut sys = System::new(
        (0..n).map(|i| i % num_types).collect(),
        vec![DEFAULT_MASS; n],
        positions.clone(),
    )?;
    sys.bonds = (1..n)
        .map(|i| {
            let d = crate::linalg::norm3(crate::linalg::sub3(positions[i], positions[i - 1]));
            Bond {
                i: i - 1,
                j: i,
                k: DEFAULT_BOND_K,
                r0: d,
            }
        })
        .collect();
    sys.native = Some(positions);
    sys.validate()?;
    Ok(sys)
}

/// Degree profile of a synthetic graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegreeProfile {
    /// Every unordered pair equally likely.
    Uniform,
    /// Endpoint weights `(i + 1)^(-1 / (exponent - 1))`, giving a power-law
    /// degree tail with the given exponent.
    PowerLaw { exponent: f64 },
}

/// Symmetric graph with exactly `edges` directed edges (`edges / 2` pairs) on
/// `n` nodes placed in a cube small enough that every pair lies within
/// `cutoff`. Returns positions and the canonical edge list.
pub fn degree_skew_graph(
    n: usize,
    edges: usize,
    profile: DegreeProfile,
    cutoff: f64,
    seed: u64,
) -> Result<(Vec<[f64; 3]>, NeighborList)> {
    let pairs = edges / 2;
    if edges % 2 != 0 || n < 2 || pairs > n * (n - 1) / 2 {
        return Err(Error::InvalidInput(format!(
            "cannot place {edges} directed edges on {n} nodes as symmetric pairs"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = 0.9 * cutoff / 3f64.sqrt();
    let positions: Vec<[f64; 3]> = (0..n)
        .map(|_| std::array::from_fn(|_| rng.gen_range(0.0..side)))
        .collect();
    let weights: Vec<f64> = match profile {
        DegreeProfile::Uniform => vec![1.0; n],
        DegreeProfile::PowerLaw { exponent } => {
            if !(exponent > 1.0) {
                return Err(Error::InvalidInput(format!("power-law exponent must exceed 1, got {exponent}")));
            }
            (0..n).map(|i| ((i + 1) as f64).powf(-1.0 / (exponent - 1.0))).collect()
        }
    };
    let pick = WeightedIndex::new(&weights).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut chosen: HashSet<(u32, u32)> = HashSet::with_capacity(pairs);
    let mut stale = 0usize;
    while chosen.len() < pairs {
        let (a, b) = (pick.sample(&mut rng), pick.sample(&mut rng));
        if a == b || !chosen.insert((a.min(b) as u32, a.max(b) as u32)) {
            stale += 1;
            if stale > 50 * pairs + 1000 {
                // saturated hubs: fill the rest uniformly
                let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
                if a != b {
                    chosen.insert((a.min(b) as u32, a.max(b) as u32));
                }
            }
        }
    }
    let mut src = Vec::with_capacity(edges);
    let mut dst = Vec::with_capacity(edges);
    for &(a, b) in &chosen {
        src.extend([a, b]);
        dst.extend([b, a]);
    }
    let mut nl = NeighborList::from_edges(n, src, dst)?;
    nl.canonicalize();
    Ok((positions, nl))
}

/// Random gas of `n` beads in a cube at `density` beads per nm^3.
pub fn random_gas(n: usize, density: f64, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (n as f64 / density).cbrt();
    (0..n).map(|_| std::array::from_fn(|_| rng.gen_range(0.0..side))).collect()
}

/// Gaussian displacement of every coordinate by `sigma` nm.
pub fn jitter(positions: &[[f64; 3]], sigma: f64, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positions
        .iter()
        .map(|p| {
            p.map(|v| {
                let z: f64 = rng.sample(StandardNormal);
                v + sigma * z
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm3, sub3};

    #[test]
    fn chains_have_bond_length_spacing() {
        for pos in [random_coil(50, 1), helix(50), globule(50, 3.0, 2)] {
            for w in pos.windows(2) {
                assert!((norm3(sub3(w[1], w[0])) - BOND_LENGTH).abs() < 0.01);
            }
        }
    }

    #[test]
    fn globule_is_compact() {
        let g = globule(200, 3.0, 1);
        let c = random_coil(200, 1);
        let rg = |p: &[[f64; 3]]| {
            let n = p.len() as f64;
            let m: [f64; 3] = std::array::from_fn(|k| p.iter().map(|x| x[k]).sum::<f64>() / n);
            (p.iter().map(|x| norm3(sub3(*x, m)).powi(2)).sum::<f64>() / n).sqrt()
        };
        assert!(rg(&g) < 0.6 * rg(&c), "{} vs {}", rg(&g), rg(&c));
    }

    #[test]
    fn skew_graph_has_exact_edge_count_and_symmetry() {
        for profile in [DegreeProfile::Uniform, DegreeProfile::PowerLaw { exponent: 2.2 }] {
            let (pos, nl) = degree_skew_graph(300, 6000, profile, 1.5, 3).unwrap();
            assert_eq!(nl.num_edges(), 6000);
            let set: HashSet<(u32, u32)> = nl.src.iter().zip(&nl.dst).map(|(&s, &d)| (s, d)).collect();
            assert_eq!(set.len(), 6000);
            assert!(set.iter().all(|&(s, d)| set.contains(&(d, s))));
            for (&s, &d) in nl.src.iter().zip(&nl.dst) {
                assert!(norm3(sub3(pos[s as usize], pos[d as usize])) < 1.5);
            }
        }
        let (_, skew) = degree_skew_graph(300, 6000, DegreeProfile::PowerLaw { exponent: 2.2 }, 1.5, 3).unwrap();
        let (_, flat) = degree_skew_graph(300, 6000, DegreeProfile::Uniform, 1.5, 3).unwrap();
        let max = |nl: &NeighborList| *nl.in_degrees().iter().max().unwrap();
        assert!(max(&skew) > 3 * max(&flat));
    }

    #[test]
    fn chain_system_is_valid() {
        let s = chain_system(Shape::Helix, 20, 4, 0).unwrap();
        assert_eq!(s.bonds.len(), 19);
        let (e, _) = crate::md::prior_energy_forces(&s.positions, &s.prior().unwrap());
        assert!(e.abs() < 1e-20);
    }
}
