use rand::Rng;

use super::objective::Objective;
use super::spec::{PsoParams, TrainerSpec};
use super::trace::{Minimum, Progress};
use crate::error::{Error, Result};

/// Deterministic particle swarm with equal cognitive and social weights:
/// `v ← a v + b (p_d − x)`, `x ← x + v`, where `p_d` is the midpoint of the
/// particle's own best and the swarm's best.
#[derive(Debug, Clone, PartialEq)]
pub struct Swarm {
    positions: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
    personal_best: Vec<Vec<f64>>,
    personal_best_fitness: Vec<f64>,
    global_best: usize,
    generation: usize,
}

impl Swarm {
    /// Builds a swarm from explicit positions and velocities, evaluating the
    /// initial fitness of each particle.
    pub fn from_parts(
        positions: Vec<Vec<f64>>,
        velocities: Vec<Vec<f64>>,
        fitness: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Optimizer("swarm needs at least one particle".into()));
        }
        let dim = positions[0].len();
        if velocities.len() != positions.len() {
            return Err(Error::LengthMismatch {
                expected: positions.len(),
                got: velocities.len(),
            });
        }
        for v in positions.iter().chain(&velocities) {
            if v.len() != dim {
                return Err(Error::Dimension {
                    what: "particle",
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        let mut personal_best_fitness = Vec::with_capacity(positions.len());
        for x in &positions {
            let f = fitness(x);
            if !f.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: 0 });
            }
            personal_best_fitness.push(f);
        }
        let mut swarm = Self {
            personal_best: positions.clone(),
            positions,
            velocities,
            personal_best_fitness,
            global_best: 0,
            generation: 0,
        };
        swarm.global_best = swarm.argmin();
        Ok(swarm)
    }

    /// Particle 0 sits at `start`; the others are uniform on
    /// `[−position_range, position_range]`. Velocities are uniform on
    /// `[−velocity_range, velocity_range]`.
    pub fn initialize<R: Rng + ?Sized>(
        start: &[f64],
        p: &PsoParams,
        rng: &mut R,
        fitness: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let dim = start.len();
        let mut positions = vec![start.to_vec()];
        for _ in 1..p.particles {
            positions.push(uniform(rng, dim, p.position_range));
        }
        let velocities = (0..p.particles)
            .map(|_| uniform(rng, dim, p.velocity_range))
            .collect();
        Self::from_parts(positions, velocities, fitness)
    }

    /// One generation: move every particle using the bests from the previous
    /// generation, then update personal and global bests.
    pub fn step(
        &mut self,
        inertia: f64,
        acceleration: f64,
        velocity_clamp: f64,
        fitness: impl Fn(&[f64]) -> f64,
    ) -> Result<()> {
        self.generation += 1;
        let gbest = self.personal_best[self.global_best].clone();
        for i in 0..self.positions.len() {
            let (x, v, pb) = (
                &mut self.positions[i],
                &mut self.velocities[i],
                &self.personal_best[i],
            );
            for d in 0..x.len() {
                let target = 0.5 * (pb[d] + gbest[d]);
                v[d] = (inertia * v[d] + acceleration * (target - x[d]))
                    .clamp(-velocity_clamp, velocity_clamp);
                x[d] += v[d];
            }
            let f = fitness(x);
            if !f.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: self.generation,
                });
            }
            if f < self.personal_best_fitness[i] {
                self.personal_best_fitness[i] = f;
                self.personal_best[i].copy_from_slice(x);
            }
        }
        self.global_best = self.argmin();
        Ok(())
    }

    fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &f) in self.personal_best_fitness.iter().enumerate() {
            if f < self.personal_best_fitness[best] {
                best = i;
            }
        }
        best
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn velocities(&self) -> &[Vec<f64>] {
        &self.velocities
    }

    pub fn personal_bests(&self) -> &[Vec<f64>] {
        &self.personal_best
    }

    pub fn personal_best_fitness(&self) -> &[f64] {
        &self.personal_best_fitness
    }

    pub fn global_best(&self) -> &[f64] {
        &self.personal_best[self.global_best]
    }

    pub fn global_best_fitness(&self) -> f64 {
        self.personal_best_fitness[self.global_best]
    }

    pub fn generation(&self) -> usize {
        self.generation
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, dim: usize, range: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            if range > 0.0 {
                rng.random_range(-range..=range)
            } else {
                0.0
            }
        })
        .collect()
}

pub(crate) fn run<R: Rng + ?Sized>(
    obj: &dyn Objective,
    spec: &TrainerSpec,
    p: PsoParams,
    x0: Vec<f64>,
    rng: &mut R,
) -> Result<Minimum> {
    let fitness = |x: &[f64]| obj.loss(x);
    let mut swarm = Swarm::initialize(&x0, &p, rng, fitness)?;
    let mut progress = Progress::new(spec, swarm.global_best(), swarm.global_best_fitness())?;
    if let Some(t) = progress.at_start() {
        return Ok(progress.finish(t));
    }
    loop {
        swarm.step(p.inertia, p.acceleration, p.velocity_clamp, fitness)?;
        if let Some(t) = progress.record(swarm.global_best(), swarm.global_best_fitness())? {
            return Ok(progress.finish(t));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn converged_particle_is_fixed() {
        let mut s = Swarm::from_parts(vec![vec![0.3, -0.2]], vec![vec![0.0, 0.0]], sphere).unwrap();
        for _ in 0..10 {
            s.step(0.729, 1.494, 4.0, sphere).unwrap();
        }
        assert_eq!(s.positions()[0], vec![0.3, -0.2]);
    }

    #[test]
    fn inertial_drift() {
        let x0 = vec![0.5, -1.0];
        let v0 = vec![0.25, 0.125];
        let mut s = Swarm::from_parts(vec![x0.clone()], vec![v0.clone()], sphere).unwrap();
        for t in 1..=6 {
            s.step(1.0, 0.0, 4.0, sphere).unwrap();
            for d in 0..2 {
                assert_eq!(s.positions()[0][d], x0[d] + t as f64 * v0[d]);
            }
        }
    }

    #[test]
    fn velocity_is_clamped() {
        let mut s = Swarm::from_parts(
            vec![vec![0.0], vec![100.0]],
            vec![vec![0.0], vec![0.0]],
            sphere,
        )
        .unwrap();
        s.step(0.729, 1.494, 4.0, sphere).unwrap();
        assert_eq!(s.velocities()[1][0], -4.0);
    }

    #[test]
    fn global_best_is_min_of_personal() {
        let mut s = Swarm::from_parts(
            vec![vec![1.0], vec![-0.5], vec![2.0]],
            vec![vec![0.1], vec![0.3], vec![-0.7]],
            sphere,
        )
        .unwrap();
        let mut prev = s.global_best_fitness();
        for _ in 0..20 {
            s.step(0.6, 1.7, 4.0, sphere).unwrap();
            let min = s
                .personal_best_fitness()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert_eq!(s.global_best_fitness(), min);
            assert!(s.global_best_fitness() <= prev);
            prev = s.global_best_fitness();
        }
    }

    #[test]
    fn non_finite_fitness_is_reported() {
        let mut s = Swarm::from_parts(vec![vec![1.0]], vec![vec![1.0]], |x: &[f64]| {
            1.0 / (2.0 - x[0]) - 1.0
        })
        .unwrap();
        let err = s.step(
            1.0,
            0.0,
            4.0,
            |x: &[f64]| if x[0] >= 2.0 { f64::NAN } else { 0.0 },
        );
        assert!(matches!(err, Err(Error::NonFiniteLoss { epoch: 1 })));
    }
}
