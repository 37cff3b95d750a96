//! Seeded random assimilation instances.

use eakf_core::{ForecastEnsemble, Matrix, ObservationModel, Vector};
use nalgebra::SymmetricEigen;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

/// Upper bound on the condition number of generated `R`.
pub const MAX_R_CONDITION: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    /// Dense or coordinate-selection `H`, unconstrained shapes.
    Generic,
    /// `m − 1 < n`.
    RankDeficient,
    /// Coordinate-selection `H` with `p < rank(Z)`, so `rank(S) < rank(Z)`.
    PartialObs,
    /// `H = 0`.
    ZeroH,
    /// All members identical, `Z = 0`.
    ZeroSpread,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Range {
    pub min: usize,
    pub max: usize,
}

impl Range {
    pub fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Shapes {
    pub n: Range,
    pub m: Range,
    pub p: Range,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub category: Category,
    pub ensemble: ForecastEnsemble,
    pub obs: ObservationModel,
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Random SPD `R`, either diagonal or `D + L·Lᵀ/p`, shifted if needed so its
/// condition number stays at or below [`MAX_R_CONDITION`].
pub fn random_r(rng: &mut ChaCha8Rng, p: usize) -> Matrix {
    if rng.random_bool(0.5) {
        let d = Vector::from_fn(p, |_, _| rng.random_range(0.1..10.0));
        return Matrix::from_diagonal(&d);
    }
    let d = Vector::from_fn(p, |_, _| rng.random_range(0.5..2.0));
    let l = normal_matrix(rng, p, p);
    let mut r = Matrix::from_diagonal(&d) + &l * l.transpose() / p as f64;
    r = (&r + r.transpose()) * 0.5;
    let eig = SymmetricEigen::new(r.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if hi > MAX_R_CONDITION * lo {
        let shift = (hi - MAX_R_CONDITION * lo) / (MAX_R_CONDITION - 1.0);
        for i in 0..p {
            r[(i, i)] += shift;
        }
    }
    r
}

fn selection(rng: &mut ChaCha8Rng, p: usize, n: usize) -> Matrix {
    let picks = sample(rng, n, p);
    let mut h = Matrix::zeros(p, n);
    for (i, j) in picks.iter().enumerate() {
        h[(i, j)] = 1.0;
    }
    h
}

fn clamp_range(r: Range, hi: usize) -> Range {
    let max = r.max.min(hi).max(1);
    Range::new(r.min.min(max).max(1), max)
}

/// Draws `(n, m)` for a category, or `None` when the shape ranges cannot
/// realize it.
fn draw_dims(category: Category, shapes: &Shapes, rng: &mut ChaCha8Rng) -> Option<(usize, usize)> {
    match category {
        Category::RankDeficient => {
            // need m − 1 < n, i.e. n ≥ m
            let m_hi = shapes.m.max.min(shapes.n.max);
            if m_hi < shapes.m.min {
                return None;
            }
            let m = rng.random_range(shapes.m.min..=m_hi);
            let n = rng.random_range(shapes.n.min.max(m)..=shapes.n.max);
            Some((n, m))
        }
        Category::PartialObs => {
            // need rank(Z) = min(n, m − 1) ≥ 2
            if shapes.n.max < 2 || shapes.m.max < 3 {
                return None;
            }
            let m = rng.random_range(shapes.m.min.max(3)..=shapes.m.max);
            let n = rng.random_range(shapes.n.min.max(2)..=shapes.n.max);
            Some((n, m))
        }
        _ => Some((shapes.n.draw(rng), shapes.m.draw(rng))),
    }
}

/// Builds an instance of `category`. Falls back to [`Category::Generic`] when
/// the shape ranges exclude the requested category.
pub fn generate(category: Category, shapes: &Shapes, rng: &mut ChaCha8Rng) -> Instance {
    let (category, n, m) = match draw_dims(category, shapes, rng) {
        Some((n, m)) => (category, n, m),
        None => {
            let (n, m) = draw_dims(Category::Generic, shapes, rng).expect("generic shapes");
            (Category::Generic, n, m)
        }
    };

    let members = if category == Category::ZeroSpread {
        let x = normal_vector(rng, n);
        Matrix::from_fn(n, m, |i, _| x[i])
    } else {
        normal_matrix(rng, n, m)
    };

    let (p, h) = match category {
        Category::PartialObs => {
            let rank = n.min(m - 1);
            let p = clamp_range(shapes.p, rank - 1).draw(rng);
            (p, selection(rng, p, n))
        }
        Category::ZeroH => {
            let p = clamp_range(shapes.p, n).draw(rng);
            (p, Matrix::zeros(p, n))
        }
        _ => {
            let p = clamp_range(shapes.p, n).draw(rng);
            let h = if rng.random_bool(0.5) {
                normal_matrix(rng, p, n)
            } else {
                selection(rng, p, n)
            };
            (p, h)
        }
    };
    let r = random_r(rng, p);
    let y = normal_vector(rng, p);

    Instance {
        category,
        ensemble: ForecastEnsemble::new(members).expect("finite members with m >= 2"),
        obs: ObservationModel::new(h, r, y).expect("generated R is SPD"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn shapes() -> Shapes {
        Shapes {
            n: Range::new(1, 20),
            m: Range::new(2, 12),
            p: Range::new(1, 20),
        }
    }

    #[test]
    fn r_condition_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in 1..15 {
            let r = random_r(&mut rng, p);
            let eig = SymmetricEigen::new(r).eigenvalues;
            assert!(eig.min() > 0.0);
            assert!(eig.max() / eig.min() <= MAX_R_CONDITION * (1.0 + 1e-9));
        }
    }

    #[test]
    fn categories_have_their_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let inst = generate(Category::RankDeficient, &shapes(), &mut rng);
            assert!(inst.ensemble.size() - 1 < inst.ensemble.state_dim());

            let inst = generate(Category::PartialObs, &shapes(), &mut rng);
            let rank = inst.ensemble.state_dim().min(inst.ensemble.size() - 1);
            assert!(inst.obs.obs_dim() < rank);

            let inst = generate(Category::ZeroH, &shapes(), &mut rng);
            assert_eq!(inst.obs.h().norm(), 0.0);

            let inst = generate(Category::ZeroSpread, &shapes(), &mut rng);
            assert_eq!(inst.ensemble.perturbations().matrix().norm(), 0.0);
        }
    }

    #[test]
    fn impossible_category_falls_back() {
        let tiny = Shapes {
            n: Range::new(1, 1),
            m: Range::new(2, 2),
            p: Range::new(1, 1),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            generate(Category::PartialObs, &tiny, &mut rng).category,
            Category::Generic
        );
        assert_eq!(
            generate(Category::RankDeficient, &tiny, &mut rng).category,
            Category::Generic
        );
    }
}
