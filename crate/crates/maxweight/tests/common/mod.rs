//! Shared random-instance generation for the integration suites.
#![allow(dead_code)]

use maxweight::model::{LoadVector, ServiceSet, ServiceVector, WeightMatrix};
use maxweight::rng::SplitMix64;

pub struct Gen {
    pub rng: SplitMix64,
}

impl Gen {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: SplitMix64::new(seed),
        }
    }

    pub fn f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.rng.next_f64() * (hi - lo)
    }

    /// Inclusive integer range.
    pub fn usize(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.rng.next_u64() % (hi - lo + 1) as u64) as usize
    }

    pub fn vec(&mut self, len: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..len).map(|_| self.f64(lo, hi)).collect()
    }

    /// A service set with entries in `[0, max_entry]`, no zero vectors, no
    /// duplicates.
    pub fn service_set(&mut self, q: usize, n: usize, max_entry: f64) -> ServiceSet {
        loop {
            let mut vectors = Vec::with_capacity(n);
            for _ in 0..n {
                let mut row = self.vec(q, 0.0, max_entry);
                // Sparsify a little so cones differ meaningfully.
                for v in row.iter_mut() {
                    if self.rng.next_f64() < 0.25 {
                        *v = 0.0;
                    }
                }
                if row.iter().all(|&v| v == 0.0) {
                    row[self.usize(0, q - 1)] = self.f64(0.5, max_entry);
                }
                vectors.push(ServiceVector::new(row).expect("generated row is valid"));
            }
            if let Ok(set) = ServiceSet::new(vectors) {
                return set;
            }
        }
    }

    /// A load strictly outside the stability region, with a margin so
    /// borderline rounding cannot flip the verdict.
    pub fn overloaded_load(&mut self, set: &ServiceSet) -> LoadVector {
        let q = set.dim();
        let mut rho = self.vec(q, 0.3, 2.5);
        for _ in 0..64 {
            let load = LoadVector::new(rho.clone()).expect("positive load");
            if maxweight::geometry::stability_margin(&load, set) < -0.05 {
                return load;
            }
            for v in rho.iter_mut() {
                *v *= 1.4;
            }
        }
        panic!("could not push load out of the stability region");
    }

    pub fn weights(&mut self, q: usize, lo: f64, hi: f64) -> WeightMatrix {
        WeightMatrix::new(self.vec(q, lo, hi)).expect("positive weights")
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn normalize(v: &[f64]) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    v.iter().map(|x| x / sum).collect()
}
