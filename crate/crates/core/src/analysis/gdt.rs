use super::align::{kabsch_align, Alignment};
use crate::error::Result;
use crate::linalg::{norm3, sub3};

/// Distance cutoffs in nm (1, 2, 4 and 8 Angstrom).
pub const GDT_CUTOFFS: [f64; 4] = [0.1, 0.2, 0.4, 0.8];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdtScore {
    /// Fraction of beads within each of [`GDT_CUTOFFS`].
    pub fractions: [f64; 4],
    pub score: f64,
}

fn counts(x: &[[f64; 3]], x_ref: &[[f64; 3]], a: &Alignment) -> [usize; 4] {
    let mut c = [0usize; 4];
    for (p, q) in x.iter().zip(x_ref) {
        let d = norm3(sub3(a.apply(*p), *q));
        for (k, &cut) in GDT_CUTOFFS.iter().enumerate() {
            if d <= cut {
                c[k] += 1;
            }
        }
    }
    c
}

/// Global distance test. Superpositions are seeded from the whole structure and
/// from every contiguous window of N/2 and N/4 beads; each cutoff keeps its best
/// seed.
pub fn gdt_ts(x: &[[f64; 3]], x_ref: &[[f64; 3]]) -> Result<GdtScore> {
    let n = x.len();
    let whole = kabsch_align(x, x_ref)?;
    let mut best = counts(x, x_ref, &whole);
    for len in [n / 2, n / 4] {
        if len < 3 || len == n {
            continue;
        }
        for start in 0..=n - len {
            let w = start..start + len;
            // collinear windows have no unique superposition
            let Ok(a) = kabsch_align(&x[w.clone()], &x_ref[w]) else {
                continue;
            };
            let c = counts(x, x_ref, &a);
            for k in 0..4 {
                best[k] = best[k].max(c[k]);
            }
        }
    }
    let fractions = best.map(|c| c as f64 / n as f64);
    Ok(GdtScore {
        fractions,
        score: fractions.iter().sum::<f64>() / 4.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{helix, random_coil};

    #[test]
    fn identity_scores_one() {
        let x = random_coil(30, 1);
        let g = gdt_ts(&x, &x).unwrap();
        assert_eq!(g.score, 1.0);
        assert_eq!(g.fractions, [1.0; 4]);
    }

    #[test]
    fn one_displaced_bead() {
        let x = helix(20);
        let mut y = x.clone();
        y[7][0] += 0.3;
        let g = gdt_ts(&y, &x).unwrap();
        assert!(g.fractions[0] >= 0.95);
        assert_eq!(g.fractions[2], 1.0);
        assert_eq!(g.fractions[3], 1.0);
        // the other 19 beads superpose exactly; the moved one sits 0.3 nm off
        assert_eq!(g.fractions, [0.95, 0.95, 1.0, 1.0]);
        assert_eq!(g.score, (0.95 + 0.95 + 1.0 + 1.0) / 4.0);
    }

    #[test]
    fn mirrored_large_structure_scores_near_zero() {
        let x: Vec<[f64; 3]> = random_coil(40, 3).iter().map(|p| p.map(|v| 10.0 * v)).collect();
        let y: Vec<[f64; 3]> = x.iter().map(|p| [p[0], p[1], -p[2]]).collect();
        let g = gdt_ts(&y, &x).unwrap();
        assert!(g.score < 0.2, "{g:?}");
    }

    #[test]
    fn degenerate_input_is_an_error() {
        let line: Vec<[f64; 3]> = (0..8).map(|i| [i as f64, 0.0, 0.0]).collect();
        assert!(gdt_ts(&line, &line).is_err());
    }
}
