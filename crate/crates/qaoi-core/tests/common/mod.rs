//! Shared test helpers: an exhaustive-enumeration oracle for discrete delay
//! laws on an integer grid.
//!
//! The oracle evaluates the single-query problem by plain top-down recursion
//! over the finite decision tree (memoized on the exact integer states),
//! independently of the production solver's table layout and sweep order.
//! With dyadic atom probabilities and integer grids every arithmetic
//! operation is exact in f64, so oracle and solver must agree bit-for-bit.

use std::collections::HashMap;

use qaoi_core::PenaltyFunction;

/// Oracle over integer grid states. `atoms` are `(delay in steps, prob)`.
pub struct ExhaustiveOracle<'a> {
    pub atoms: &'a [(usize, f64)],
    pub g: &'a PenaltyFunction,
    pub step: f64,
    pub z_cap: i64,
    request_memo: HashMap<(i64, i64), f64>,
    delivery_memo: HashMap<(i64, i64), f64>,
}

impl<'a> ExhaustiveOracle<'a> {
    pub fn new(atoms: &'a [(usize, f64)], g: &'a PenaltyFunction, step: f64, z_cap: i64) -> Self {
        Self {
            atoms,
            g,
            step,
            z_cap,
            request_memo: HashMap::new(),
            delivery_memo: HashMap::new(),
        }
    }

    /// Expected penalty of a request placed `remaining` steps before the
    /// query while the age is `age` steps, under optimal future decisions.
    pub fn request_value(&mut self, remaining: i64, age: i64) -> f64 {
        if let Some(v) = self.request_memo.get(&(remaining, age)) {
            return *v;
        }
        let mut value = 0.0;
        for &(y, p) in self.atoms {
            let y = y as i64;
            value += if y <= remaining {
                p * self.delivery_value(remaining - y, y)
            } else {
                p * self.g.eval((remaining + age) as f64 * self.step)
            };
        }
        self.request_memo.insert((remaining, age), value);
        value
    }

    /// Expected penalty at a delivery `remaining` steps before the query
    /// with age `age` steps, minimizing over waits (including giving up).
    pub fn delivery_value(&mut self, remaining: i64, age: i64) -> f64 {
        if let Some(v) = self.delivery_memo.get(&(remaining, age)) {
            return *v;
        }
        let mut best = self.g.eval((remaining + age) as f64 * self.step);
        for z in 0..=self.z_cap.min(remaining) {
            let v = self.request_value(remaining - z, age + z);
            if v < best {
                best = v;
            }
        }
        self.delivery_memo.insert((remaining, age), best);
        best
    }

    /// Optimal single-query value and border offset (in steps): minimize the
    /// age-free request value over the window between one and three delay
    /// bounds, taking the earliest minimizing request point.
    pub fn optimal(&mut self, n: i64) -> (f64, i64) {
        let y_max = self.atoms.iter().map(|(y, _)| *y as i64).max().unwrap();
        let anchor = (3 * y_max).min(n);
        let mut best = f64::INFINITY;
        let mut best_r = y_max;
        for r in y_max..=anchor {
            let v = self.request_value(r, 0);
            if v < best {
                best = v;
                best_r = r;
            }
        }
        (best, best_r)
    }
}
