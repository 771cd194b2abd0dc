use crate::error::{Error, Result};
use crate::linalg::{norm3, sub3};
use crate::model::{Mlp, MlpCache, ModelParams};
use crate::neighbor::NeighborList;
use crate::real::Real;

/// Displacements `u_e = r_dst - r_src` and their lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGeometry<T> {
    pub u: Vec<[T; 3]>,
    pub d: Vec<T>,
}

pub fn compute_edge_geometry<T: Real>(positions: &[[T; 3]], nl: &NeighborList) -> EdgeGeometry<T> {
    let mut u = Vec::with_capacity(nl.num_edges());
    let mut d = Vec::with_capacity(nl.num_edges());
    for (&s, &t) in nl.src.iter().zip(&nl.dst) {
        let v = sub3(positions[t as usize], positions[s as usize]);
        u.push(v);
        d.push(norm3(v));
    }
    EdgeGeometry { u, d }
}

/// Distances only, for pipelines that never store displacements.
pub fn compute_distances<T: Real>(positions: &[[T; 3]], nl: &NeighborList) -> Vec<T> {
    nl.src
        .iter()
        .zip(&nl.dst)
        .map(|(&s, &t)| norm3(sub3(positions[t as usize], positions[s as usize])))
        .collect()
}

/// `u / d`, or zero for numerically coincident endpoints.
#[inline]
pub fn unit_direction<T: Real>(u: [T; 3], d: T) -> [T; 3] {
    if d.as_f64() < 1e-12 {
        [T::zero(); 3]
    } else {
        [u[0] / d, u[1] / d, u[2] / d]
    }
}

pub fn check_inputs<T: Real>(
    positions: &[[T; 3]],
    types: &[usize],
    params: &ModelParams<T>,
    nl: &NeighborList,
) -> Result<()> {
    if positions.len() != types.len() {
        return Err(Error::Shape(format!(
            "{} positions but {} atom types",
            positions.len(),
            types.len()
        )));
    }
    if nl.num_nodes() != positions.len() {
        return Err(Error::Shape(format!(
            "neighbor list built for {} nodes, system has {}",
            nl.num_nodes(),
            positions.len()
        )));
    }
    let nt = params.config().num_atom_types;
    if let Some((i, t)) = types.iter().enumerate().find(|(_, &t)| t >= nt) {
        return Err(Error::InvalidInput(format!("atom {i} has type {t}, model knows {nt} types")));
    }
    if let Some(i) = positions.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput(format!("position of atom {i} is not finite")));
    }
    Ok(())
}

pub fn embed<T: Real>(types: &[usize], params: &ModelParams<T>) -> Vec<T> {
    let d = params.config().hidden_dim;
    let mut x = Vec::with_capacity(types.len() * d);
    for &t in types {
        x.extend_from_slice(params.embedding.row(t));
    }
    x
}

/// Per-atom energies and their sum accumulated in f64.
pub fn readout_forward<T: Real>(params: &ModelParams<T>, x: &[T], n: usize, cache: &mut MlpCache<T>) -> (Vec<T>, f64) {
    let eps = params.readout.forward_rows(x, n, cache).to_vec();
    let energy = eps.iter().map(|v| v.as_f64()).sum();
    (eps, energy)
}

/// Gradient of the total energy with respect to the final node features.
pub fn readout_backward<T: Real>(params: &ModelParams<T>, n: usize, cache: &mut MlpCache<T>) -> Vec<T> {
    let ones = vec![T::one(); n];
    let mut g = Vec::new();
    params.readout.backward_input_rows(cache, &ones, &mut g);
    g
}

/// Byte width of hidden activations inside `mlp`.
pub fn mlp_width<T: Real>(mlp: &Mlp<T>) -> u64 {
    if mlp.is_quantized() {
        2
    } else {
        T::BYTES as u64
    }
}

pub fn widths<T: Real>(mlp: &Mlp<T>) -> Vec<u64> {
    std::iter::once(mlp.in_dim())
        .chain(mlp.widths())
        .map(|w| w as u64)
        .collect()
}

/// Forces `-dE/dr` from per-edge `dE/dd` accumulated over blocks.
pub fn forces_from_edge_gradients<T: Real>(
    n: usize,
    nl: &NeighborList,
    geometry: &EdgeGeometry<T>,
    dedd: &[T],
) -> Vec<[T; 3]> {
    let mut grad = vec![[T::zero(); 3]; n];
    for e in 0..nl.num_edges() {
        let dir = unit_direction(geometry.u[e], geometry.d[e]);
        let (s, t) = (nl.src[e] as usize, nl.dst[e] as usize);
        for k in 0..3 {
            let g = dedd[e] * dir[k];
            grad[t][k] += g;
            grad[s][k] -= g;
        }
    }
    grad.into_iter().map(|g| [-g[0], -g[1], -g[2]]).collect()
}
