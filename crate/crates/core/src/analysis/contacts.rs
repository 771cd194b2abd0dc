use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm3, sub3};

/// Bead-distance contact cutoff in nm.
pub const DEFAULT_CONTACT_CUTOFF: f64 = 0.9;
pub const MIN_SEQUENCE_SEPARATION: usize = 3;
/// Sigmoid steepness in 1/nm.
pub const DEFAULT_BETA: f64 = 10.0;
/// Tolerance factor on the native distance.
pub const DEFAULT_LAMBDA: f64 = 1.5;

/// Native contacts: bead pairs `i < j` with their reference distances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactSet {
    pairs: Vec<(usize, usize)>,
    r0: Vec<f64>,
}

impl ContactSet {
    pub fn from_pairs(pairs: Vec<(usize, usize)>, r0: Vec<f64>) -> Result<Self> {
        if pairs.len() != r0.len() {
            return Err(Error::Shape(format!("{} pairs but {} distances", pairs.len(), r0.len())));
        }
        let mut seen = std::collections::HashSet::new();
        for (&(i, j), &d) in pairs.iter().zip(&r0) {
            if i >= j || !seen.insert((i, j)) || !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidInput(format!("bad contact ({i}, {j}) at {d} nm")));
            }
        }
        Ok(Self { pairs, r0 })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn reference_distances(&self) -> &[f64] {
        &self.r0
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn build_contacts(x_ref: &[[f64; 3]], cutoff: f64, min_separation: usize) -> ContactSet {
    let mut set = ContactSet::default();
    for i in 0..x_ref.len() {
        for j in i + min_separation.max(1)..x_ref.len() {
            let d = norm3(sub3(x_ref[i], x_ref[j]));
            if d < cutoff && d > 0.0 {
                set.pairs.push((i, j));
                set.r0.push(d);
            }
        }
    }
    set
}

/// Smooth contact indicator `1 / (1 + exp(beta (r - lambda r0)))`.
pub fn contact_value(r: f64, r0: f64, beta: f64, lambda: f64) -> f64 {
    1.0 / (1.0 + (beta * (r - lambda * r0)).exp())
}

pub fn fraction_native_contacts(x: &[[f64; 3]], contacts: &ContactSet, beta: f64, lambda: f64) -> Result<f64> {
    if contacts.is_empty() {
        return Err(Error::InvalidInput("no native contacts; Q is undefined".into()));
    }
    let mut sum = 0.0;
    for (&(i, j), &r0) in contacts.pairs.iter().zip(&contacts.r0) {
        if j >= x.len() {
            return Err(Error::Shape(format!("contact ({i}, {j}) outside a {}-bead frame", x.len())));
        }
        sum += contact_value(norm3(sub3(x[i], x[j])), r0, beta, lambda);
    }
    Ok(sum / contacts.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_contact_at_native_distance() {
        let x = vec![[0.0; 3], [9.0, 0.0, 0.0], [9.0, 9.0, 0.0], [0.5, 0.0, 0.0]];
        let c = build_contacts(&x, 0.9, 3);
        assert_eq!(c.pairs(), &[(0, 3)]);
        let q = fraction_native_contacts(&x, &c, DEFAULT_BETA, DEFAULT_LAMBDA).unwrap();
        assert!((q - 1.0 / (1.0 + (-2.5f64).exp())).abs() < 1e-15);
        assert!((q - 0.92414).abs() < 1e-5);
    }

    #[test]
    fn limits_and_midpoint() {
        assert_eq!(contact_value(1e6, 0.5, 10.0, 1.5), 0.0);
        assert_eq!(contact_value(0.75, 0.5, 10.0, 1.5), 0.5);
    }

    #[test]
    fn spaced_chain_has_no_contacts() {
        let x: Vec<[f64; 3]> = (0..10).map(|i| [0.5 * i as f64, 0.0, 0.0]).collect();
        assert!(build_contacts(&x, 0.45, 3).is_empty());
        let q = fraction_native_contacts(&x, &ContactSet::default(), 10.0, 1.5);
        assert!(q.is_err());
    }

    #[test]
    fn compact_cluster_counts_all_separated_pairs() {
        let n = 12;
        let x: Vec<[f64; 3]> = (0..n).map(|i| [0.01 * i as f64, 0.02 * (i % 3) as f64, 0.0]).collect();
        let c = build_contacts(&x, 5.0, 3);
        // pairs with j - i >= 3
        assert_eq!(c.len(), (n - 3) * (n - 2) / 2);
    }

    #[test]
    fn validates_pairs() {
        assert!(ContactSet::from_pairs(vec![(0, 3)], vec![0.5]).is_ok());
        assert!(ContactSet::from_pairs(vec![(3, 0)], vec![0.5]).is_err());
        assert!(ContactSet::from_pairs(vec![(0, 3), (0, 3)], vec![0.5, 0.5]).is_err());
        assert!(ContactSet::from_pairs(vec![(0, 3)], vec![0.0]).is_err());
    }
}
