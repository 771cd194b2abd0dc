use flashcg::analysis::{
    build_contacts, fraction_native_contacts, gdt_ts, kabsch_align, rmsd, DEFAULT_BETA, DEFAULT_CONTACT_CUTOFF,
    DEFAULT_LAMBDA, MIN_SEQUENCE_SEPARATION,
};
use flashcg::backend::{flash_energy_forces, BackendMode, FlashOptions};
use flashcg::md::{checkpoint_from_bytes, checkpoint_to_bytes, ReplicaState, SimState};
use flashcg::model::{init_params, rbf_expand, ModelConfig, ModelParams, RbfSpec};
use flashcg::neighbor::{build_neighbors_bruteforce, build_neighbors_cells, group_by_destination, group_by_source};
use flashcg::quant::{quantize_layer, CalibrationSet};
use flashcg::segment::{scatter_add, segment_reduce_csr};
use flashcg::synth::random_coil;
use proptest::prelude::*;

fn small_model() -> ModelConfig {
    ModelConfig {
        hidden_dim: 16,
        rbf_dim: 12,
        num_blocks: 2,
        filter_hidden_dim: 16,
        readout_hidden_dim: 8,
        cutoff: 1.0,
        ..ModelConfig::default()
    }
}

fn point(side: f64) -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(0.0..side)
}

/// Up to 40 beads in a box of side 1.2 to 3 nm.
fn cloud() -> impl Strategy<Value = Vec<[f64; 3]>> {
    (1.2f64..3.0).prop_flat_map(|side| prop::collection::vec(point(side), 2..40))
}

/// Rotation from a (not necessarily normalized) quaternion.
fn rotation(q: [f64; 4]) -> [[f64; 3]; 3] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn quaternion() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.0f64..1.0).prop_filter("nonzero", |q| q.iter().map(|v| v * v).sum::<f64>() > 0.05)
}

fn transform(p: &[[f64; 3]], r: &[[f64; 3]; 3], t: [f64; 3]) -> Vec<[f64; 3]> {
    p.iter()
        .map(|x| std::array::from_fn(|i| r[i][0] * x[0] + r[i][1] * x[1] + r[i][2] * x[2] + t[i]))
        .collect()
}

fn energy_forces(p: &[[f64; 3]], types: &[usize], params: &ModelParams<f64>) -> (f64, Vec<[f64; 3]>) {
    let nl = build_neighbors_cells(p, params.config().cutoff);
    let ef = flash_energy_forces(p, types, params, &nl, BackendMode::FLASH, &FlashOptions::default()).unwrap();
    (ef.energy, ef.forces)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rbf_values_lie_in_unit_interval(d in 0.0f64..4.0, dim in 1usize..64, cutoff in 0.3f64..3.0) {
        let spec = RbfSpec::uniform(dim, cutoff);
        for v in rbf_expand(d, &spec) {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn cell_list_equals_brute_force(p in cloud(), r_cut in 0.1f64..1.5) {
        let mut a = build_neighbors_cells(&p, r_cut);
        let mut b = build_neighbors_bruteforce(&p, r_cut);
        a.canonicalize();
        b.canonicalize();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn layouts_are_permutations_covering_each_edge_once(p in cloud(), r_cut in 0.2f64..1.2) {
        let nl = build_neighbors_cells(&p, r_cut);
        let n = p.len();
        for layout in [group_by_destination(&nl, n), group_by_source(&nl, n)] {
            let mut perm = layout.perm.clone();
            perm.sort_unstable();
            prop_assert!(perm.iter().enumerate().all(|(i, &e)| e as usize == i));
            let visited: usize = (0..layout.num_segments()).map(|i| layout.segment(i).len()).sum();
            prop_assert_eq!(visited, nl.num_edges());
        }
        let dst = group_by_destination(&nl, n);
        for i in 0..n {
            prop_assert!(dst.segment(i).iter().all(|&e| nl.dst[e as usize] as usize == i));
        }
    }

    #[test]
    fn layouts_survive_perturbations_that_keep_the_edges(p in cloud(), r_cut in 0.2f64..1.2, eps in 1e-9f64..1e-7) {
        let nl = build_neighbors_cells(&p, r_cut);
        let moved: Vec<[f64; 3]> = p.iter().map(|x| [x[0] + eps, x[1] - eps, x[2]]).collect();
        let nl2 = build_neighbors_cells(&moved, r_cut);
        let (mut a, mut b) = (nl.clone(), nl2.clone());
        a.canonicalize();
        b.canonicalize();
        prop_assume!(a == b);
        let n = p.len();
        prop_assert_eq!(group_by_destination(&a, n), group_by_destination(&b, n));
        prop_assert_eq!(group_by_source(&a, n), group_by_source(&b, n));
    }

    #[test]
    fn segment_reduce_matches_scatter(
        n in 1usize..40,
        d in 1usize..9,
        edges in prop::collection::vec((0u32..40, 0u32..40, -1.0f64..1.0), 0..200),
    ) {
        let dst: Vec<u32> = edges.iter().map(|e| e.1 % n as u32).collect();
        let src: Vec<u32> = edges.iter().map(|e| e.0 % n as u32).collect();
        let values: Vec<f64> = edges.iter().flat_map(|e| (0..d).map(move |c| e.2 * (c + 1) as f64)).collect();
        let nl = flashcg::neighbor::NeighborList::from_edges(n, src, dst.clone()).unwrap();
        let (a, updates) = scatter_add(&values, &dst, n, d);
        let b = segment_reduce_csr(&values, &group_by_destination(&nl, n), d);
        prop_assert_eq!(updates, (edges.len() * d) as u64);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_is_invariant_under_rigid_motion(
        p in cloud(),
        q in quaternion(),
        t in prop::array::uniform3(-5.0f64..5.0),
        seed in 0u64..1000,
    ) {
        let params = init_params::<f64>(&small_model(), seed).unwrap();
        let types: Vec<usize> = (0..p.len()).map(|i| (i * 7 + seed as usize) % 4).collect();
        let (e0, _) = energy_forces(&p, &types, &params);
        let (e1, _) = energy_forces(&transform(&p, &rotation(q), t), &types, &params);
        prop_assert!((e1 - e0).abs() <= 1e-5 * e0.abs().max(1.0), "{} vs {}", e0, e1);
    }

    #[test]
    fn energy_is_invariant_under_relabeling(p in cloud(), seed in 0u64..1000, shift in 1usize..40) {
        let params = init_params::<f64>(&small_model(), seed).unwrap();
        let n = p.len();
        let types: Vec<usize> = (0..n).map(|i| (i * 3 + 1) % 4).collect();
        let order: Vec<usize> = (0..n).map(|i| (i * shift + 1) % n).collect();
        prop_assume!({
            let mut o = order.clone();
            o.sort_unstable();
            o.dedup();
            o.len() == n
        });
        let p2: Vec<[f64; 3]> = order.iter().map(|&i| p[i]).collect();
        let t2: Vec<usize> = order.iter().map(|&i| types[i]).collect();
        let (e0, f0) = energy_forces(&p, &types, &params);
        let (e1, f1) = energy_forces(&p2, &t2, &params);
        prop_assert!((e1 - e0).abs() <= 1e-6 * e0.abs().max(1.0));
        for (k, &i) in order.iter().enumerate() {
            for c in 0..3 {
                prop_assert!((f1[k][c] - f0[i][c]).abs() <= 1e-6 * (1.0 + f0[i][c].abs()));
            }
        }
    }

    #[test]
    fn net_force_and_torque_vanish(p in cloud(), seed in 0u64..1000) {
        let params = init_params::<f64>(&small_model(), seed).unwrap();
        let types: Vec<usize> = (0..p.len()).map(|i| i % 4).collect();
        let (_, f) = energy_forces(&p, &types, &params);
        let n = p.len() as f64;
        let c: [f64; 3] = std::array::from_fn(|k| p.iter().map(|x| x[k]).sum::<f64>() / n);
        let scale = f.iter().map(|v| v.iter().map(|x| x.abs()).fold(0.0, f64::max)).fold(1.0, f64::max);
        let mut net = [0.0; 3];
        let mut torque = [0.0; 3];
        for (x, v) in p.iter().zip(&f) {
            let r = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
            for k in 0..3 {
                net[k] += v[k];
            }
            torque[0] += r[1] * v[2] - r[2] * v[1];
            torque[1] += r[2] * v[0] - r[0] * v[2];
            torque[2] += r[0] * v[1] - r[1] * v[0];
        }
        prop_assert!(net.iter().chain(&torque).all(|v| v.abs() <= 1e-4 * scale), "{:?} {:?}", net, torque);
    }

    #[test]
    fn flash_is_bit_reproducible(p in cloud(), seed in 0u64..1000) {
        let params = init_params::<f32>(&small_model(), seed).unwrap();
        let p32: Vec<[f32; 3]> = p.iter().map(|x| x.map(|v| v as f32)).collect();
        let types: Vec<usize> = (0..p.len()).map(|i| i % 4).collect();
        let nl = build_neighbors_cells(&p32, params.config().cutoff);
        let run = || flash_energy_forces(&p32, &types, &params, &nl, BackendMode::FLASH, &FlashOptions::default()).unwrap();
        let (a, b) = (run(), run());
        prop_assert_eq!(a.energy.to_bits(), b.energy.to_bits());
        prop_assert!(a.forces.iter().flatten().zip(b.forces.iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert_eq!(a.traffic.atomic_updates, 0);
    }

    #[test]
    fn per_channel_error_never_exceeds_per_tensor(
        out_dim in 1usize..8,
        in_dim in 1usize..8,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let weight: Vec<f64> = (0..out_dim * in_dim)
            .map(|k| rng.gen_range(-1.0..1.0) * 10f64.powi((k / in_dim) as i32 - 3))
            .collect();
        let bias = vec![0.0; out_dim];
        let samples: Vec<f64> = (0..40 * in_dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let calib = CalibrationSet::new(in_dim, samples).unwrap();
        let q = quantize_layer(&weight, &bias, out_dim, in_dim, &calib).unwrap();
        prop_assert!(q.per_channel_error <= q.per_tensor_error);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn q_is_bounded_and_rigid_invariant(
        n in 8usize..40,
        seed in 0u64..500,
        noise in 0.0f64..0.3,
        qr in quaternion(),
        t in prop::array::uniform3(-3.0f64..3.0),
    ) {
        let native = random_coil(n, seed);
        let x = flashcg::synth::jitter(&native, noise, seed + 1);
        let contacts = build_contacts(&native, DEFAULT_CONTACT_CUTOFF, MIN_SEQUENCE_SEPARATION);
        prop_assume!(!contacts.is_empty());
        let q = fraction_native_contacts(&x, &contacts, DEFAULT_BETA, DEFAULT_LAMBDA).unwrap();
        prop_assert!((0.0..=1.0).contains(&q));
        let moved = transform(&x, &rotation(qr), t);
        let q2 = fraction_native_contacts(&moved, &contacts, DEFAULT_BETA, DEFAULT_LAMBDA).unwrap();
        prop_assert!((q - q2).abs() <= 1e-12);
    }

    #[test]
    fn rmsd_ignores_rigid_motion_and_rotations_are_proper(
        n in 4usize..40,
        seed in 0u64..500,
        qr in quaternion(),
        t in prop::array::uniform3(-10.0f64..10.0),
        mirror in any::<bool>(),
    ) {
        let reference = random_coil(n, seed);
        let x = flashcg::synth::jitter(&reference, 0.2, seed + 7);
        let moved = transform(&x, &rotation(qr), t);
        let a = rmsd(&x, &reference).unwrap();
        let b = rmsd(&moved, &reference).unwrap();
        prop_assert!((a - b).abs() <= 1e-10, "{} vs {}", a, b);
        let probe: Vec<[f64; 3]> = if mirror { moved.iter().map(|p| [-p[0], p[1], p[2]]).collect() } else { moved };
        let al = kabsch_align(&probe, &reference).unwrap();
        prop_assert!((al.determinant() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn gdt_is_a_fraction(n in 6usize..40, seed in 0u64..500, noise in 0.0f64..1.5) {
        let reference = random_coil(n, seed);
        let x = flashcg::synth::jitter(&reference, noise, seed + 3);
        let g = gdt_ts(&x, &reference).unwrap();
        prop_assert!((0.0..=1.0).contains(&g.score));
        prop_assert!(g.fractions.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(gdt_ts(&reference, &reference).unwrap().score, 1.0);
    }

    #[test]
    fn checkpoint_round_trip(
        replicas in prop::collection::vec(
            prop::collection::vec((prop::array::uniform3(-1e3f64..1e3), prop::array::uniform3(-10.0f64..10.0)), 3),
            1..4,
        ),
        step in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let state = SimState {
            replicas: replicas
                .iter()
                .map(|r| ReplicaState {
                    positions: r.iter().map(|x| x.0).collect(),
                    velocities: r.iter().map(|x| x.1).collect(),
                })
                .collect(),
            masses: vec![110.0, 72.0, 1e-3],
            step,
        };
        let (back, s) = checkpoint_from_bytes(&checkpoint_to_bytes(&state, seed)).unwrap();
        prop_assert_eq!(back, state);
        prop_assert_eq!(s, seed);
    }
}

#[test]
fn gdt_decreases_as_noise_grows() {
    // averaged over seeds: individual draws may cross
    let levels = [0.05, 0.2, 0.5, 1.0];
    let mean: Vec<f64> = levels
        .iter()
        .map(|&s| {
            (0..20)
                .map(|k| {
                    let r = random_coil(30, k);
                    gdt_ts(&flashcg::synth::jitter(&r, s, 100 + k), &r).unwrap().score
                })
                .sum::<f64>()
                / 20.0
        })
        .collect();
    assert!(mean.windows(2).all(|w| w[1] <= w[0]), "{mean:?}");
}
