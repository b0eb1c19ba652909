//! Genetic-algorithm placement solver.
//!
//! A genome is a candidate translation (motion vector) of the movable object.
//! Its fitness is the total squared residual `E` of the constraint set with the
//! movable object's bounding box shifted by that motion; lower is better.
//!
//! The population is seeded around the proposed position: genome 0 is the zero
//! motion, the rest are Gaussian with a per-axis spread of half the summed
//! reference and movable extents. Each generation keeps `elite_count`
//! individuals, fills the rest by tournament selection, per-gene arithmetic
//! crossover and per-gene Gaussian mutation, and stops on the error threshold,
//! on a stall, or at `max_generations`.
//!
//! Randomness comes from ChaCha8 seeded with [`GaConfig::seed`]; fitness
//! evaluation is the only parallel step and is order-preserving, so results
//! are bit-identical across runs, platforms and [`Execution`] modes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{CompiledSet, ConstraintError, ConstraintSet, ResidualReport};
use crate::exec::Execution;
use crate::geometry::{Aabb, Axis, ObjectId, ObjectInstance, Vec3};

pub type SolverRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("empty constraint set: nothing to solve for `{0}`")]
    EmptyConstraints(ObjectId),
    #[error("constraint set is for `{expected}` but the movable object is `{found}`")]
    WrongMovable { expected: ObjectId, found: ObjectId },
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("invalid GA configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub tournament_size: usize,
    pub elite_count: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub mutation_sigma_scale: f64,
    pub convergence_epsilon: f64,
    pub stall_generations: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 64,
            max_generations: 500,
            tournament_size: 4,
            elite_count: 2,
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            mutation_sigma_scale: 0.1,
            convergence_epsilon: 1e-8,
            stall_generations: 50,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let fail = |msg: &str| Err(SolveError::Config(msg.to_owned()));
        let probability = |p: f64| (0.0..=1.0).contains(&p);
        if self.population_size == 0 {
            return fail("population_size must be positive");
        }
        if self.max_generations == 0 {
            return fail("max_generations must be positive");
        }
        if self.tournament_size == 0 || self.tournament_size > self.population_size {
            return fail("tournament_size must be in 1..=population_size");
        }
        if self.elite_count >= self.population_size {
            return fail("elite_count must be smaller than population_size");
        }
        if !probability(self.crossover_rate) || !probability(self.mutation_rate) {
            return fail("crossover_rate and mutation_rate must be probabilities");
        }
        if !(self.mutation_sigma_scale.is_finite() && self.mutation_sigma_scale > 0.0) {
            return fail("mutation_sigma_scale must be positive");
        }
        if !(self.convergence_epsilon.is_finite() && self.convergence_epsilon >= 0.0) {
            return fail("convergence_epsilon must be non-negative");
        }
        if self.stall_generations == 0 {
            return fail("stall_generations must be positive");
        }
        Ok(())
    }
}

/// Candidate translation of the movable object.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Genome {
    pub motion: Vec3,
}

impl Genome {
    pub fn new(motion: Vec3) -> Self {
        Self { motion }
    }
}

/// Per-axis standard deviation of the initial population: half the sum of the
/// reference and movable extents.
pub fn search_scale(reference: &Aabb, movable: &Aabb) -> Vec3 {
    (reference.extents() + movable.extents()) * 0.5
}

/// Initial population: the zero motion followed by `population_size - 1`
/// zero-mean Gaussian samples with per-axis spread [`search_scale`].
pub fn heuristic_init(config: &GaConfig, reference: &Aabb, movable: &Aabb, rng: &mut SolverRng) -> Vec<Genome> {
    let sigma = search_scale(reference, movable);
    let mut population = Vec::with_capacity(config.population_size);
    population.push(Genome::default());
    while population.len() < config.population_size {
        population.push(Genome::new(gaussian(rng, sigma)));
    }
    population
}

fn gaussian(rng: &mut SolverRng, sigma: Vec3) -> Vec3 {
    let mut v = Vec3::ZERO;
    for axis in Axis::ALL {
        let z: f64 = rng.sample(StandardNormal);
        v.set(axis, z * sigma[axis]);
    }
    v
}

/// Indices sorted by ascending fitness; ties keep the lower index first.
fn ranking(fitness: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));
    order
}

fn tournament(fitness: &[f64], size: usize, rng: &mut SolverRng) -> usize {
    let mut winner = rng.random_range(0..fitness.len());
    for _ in 1..size {
        let challenger = rng.random_range(0..fitness.len());
        let better = fitness[challenger].total_cmp(&fitness[winner]).then(challenger.cmp(&winner)).is_lt();
        if better {
            winner = challenger;
        }
    }
    winner
}

/// Produce the next generation from a scored population.
///
/// `fitness[i]` is the error of `population[i]`; `sigma` is the initial search
/// scale, from which the mutation spread is derived.
pub fn evolve_generation(
    population: &[Genome],
    fitness: &[f64],
    sigma: Vec3,
    config: &GaConfig,
    rng: &mut SolverRng,
) -> Vec<Genome> {
    assert_eq!(population.len(), fitness.len(), "one fitness value per genome");
    assert!(!population.is_empty(), "population must not be empty");
    let size = population.len();
    let mutation_sigma = sigma * config.mutation_sigma_scale;
    let mut next: Vec<Genome> = ranking(fitness)
        .into_iter()
        .take(config.elite_count.min(size))
        .map(|i| population[i])
        .collect();
    while next.len() < size {
        let p1 = population[tournament(fitness, config.tournament_size, rng)].motion;
        let p2 = population[tournament(fitness, config.tournament_size, rng)].motion;
        let mut child = p1;
        if rng.random_bool(config.crossover_rate) {
            for axis in Axis::ALL {
                let alpha: f64 = rng.random();
                child.set(axis, alpha * p1[axis] + (1.0 - alpha) * p2[axis]);
            }
        }
        for axis in Axis::ALL {
            if rng.random_bool(config.mutation_rate) {
                let z: f64 = rng.sample(StandardNormal);
                child.set(axis, child[axis] + z * mutation_sigma[axis]);
            }
        }
        next.push(Genome::new(child));
    }
    next
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub best_motion: Vec3,
    pub final_error: f64,
    pub residuals: ResidualReport,
    pub generations_run: usize,
    pub converged: bool,
    /// Best-so-far error after each evaluated generation.
    #[serde(skip)]
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct GaSolver {
    config: GaConfig,
    execution: Execution,
}

impl GaSolver {
    pub fn new(config: GaConfig) -> Self {
        Self { config, execution: Execution::default() }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn config(&self) -> &GaConfig {
        &self.config
    }

    /// Find the motion of `movable` minimising the total error of `constraints`.
    ///
    /// `movable` is taken at its current (proposed) position; the returned
    /// motion is relative to it. The search scale uses the bounds of the first
    /// constraint's reference.
    pub fn solve(
        &self,
        constraints: &ConstraintSet,
        reference_bounds: &BTreeMap<ObjectId, Aabb>,
        movable: &ObjectInstance,
    ) -> Result<SolveResult, SolveError> {
        self.config.validate()?;
        if constraints.is_empty() {
            return Err(SolveError::EmptyConstraints(constraints.movable().clone()));
        }
        if constraints.movable() != movable.id() {
            return Err(SolveError::WrongMovable { expected: constraints.movable().clone(), found: movable.id().clone() });
        }
        let compiled = constraints.compile(reference_bounds)?;
        Ok(self.run(&compiled, &movable.bounds()))
    }

    /// Solve against an already-compiled set with the movable box at `base`.
    pub fn run(&self, compiled: &CompiledSet, base: &Aabb) -> SolveResult {
        let config = &self.config;
        let reference = compiled.primary_reference().copied().unwrap_or(*base);
        let sigma = search_scale(&reference, base);
        let mut rng = SolverRng::seed_from_u64(config.seed);
        let mut population = heuristic_init(config, &reference, base, &mut rng);

        let mut best_error = f64::INFINITY;
        let mut best_motion = Vec3::ZERO;
        let mut stalled = 0usize;
        let mut history = Vec::new();
        let mut converged = false;

        loop {
            let fitness = self.execution.map(&population, |g| compiled.total_error(&base.translated(g.motion)));
            let leader = ranking(&fitness)[0];
            if fitness[leader] < best_error {
                best_error = fitness[leader];
                best_motion = population[leader].motion;
                stalled = 0;
            } else {
                stalled += 1;
            }
            history.push(best_error);

            if best_error <= config.convergence_epsilon || stalled >= config.stall_generations {
                converged = true;
                break;
            }
            if history.len() >= config.max_generations {
                break;
            }
            population = evolve_generation(&population, &fitness, sigma, config, &mut rng);
        }

        let residuals = compiled.report(&base.translated(best_motion));
        SolveResult {
            best_motion,
            final_error: residuals.total_error,
            residuals,
            generations_run: history.len(),
            converged,
            history,
        }
    }
}

/// [`GaSolver::solve`] with the default execution mode.
pub fn solve(
    constraints: &ConstraintSet,
    reference_bounds: &BTreeMap<ObjectId, Aabb>,
    movable: &ObjectInstance,
    config: &GaConfig,
) -> Result<SolveResult, SolveError> {
    GaSolver::new(config.clone()).solve(constraints, reference_bounds, movable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{Constraint, ConstraintKind};
    use crate::geometry::Block;

    fn cube_box(center: [f64; 3], e: f64) -> Aabb {
        Aabb::from_center_extents(center.into(), Vec3::splat(e)).unwrap()
    }

    #[test]
    fn defaults_are_valid() {
        GaConfig::default().validate().unwrap();
        for bad in [
            GaConfig { elite_count: 64, ..GaConfig::default() },
            GaConfig { tournament_size: 65, ..GaConfig::default() },
            GaConfig { mutation_rate: 1.5, ..GaConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn init_seeds_zero_motion_and_is_deterministic() {
        let cfg = GaConfig::default().with_seed(7);
        let r = cube_box([0.0; 3], 2.0);
        let m = cube_box([5.0; 3], 1.0);
        assert_eq!(search_scale(&r, &m), Vec3::splat(1.5));
        let a = heuristic_init(&cfg, &r, &m, &mut SolverRng::seed_from_u64(7));
        let b = heuristic_init(&cfg, &r, &m, &mut SolverRng::seed_from_u64(7));
        assert_eq!(a.len(), 64);
        assert_eq!(a[0].motion, Vec3::ZERO);
        assert_eq!(a, b);
    }

    #[test]
    fn init_spread_matches_search_scale() {
        let cfg = GaConfig { population_size: 20_001, ..GaConfig::default() };
        let r = cube_box([0.0; 3], 2.0);
        let m = cube_box([0.0; 3], 1.0);
        let pop = heuristic_init(&cfg, &r, &m, &mut SolverRng::seed_from_u64(3));
        for axis in Axis::ALL {
            let n = (pop.len() - 1) as f64;
            let var = pop[1..].iter().map(|g| g.motion[axis].powi(2)).sum::<f64>() / n;
            assert!((var.sqrt() - 1.5).abs() < 0.03, "axis {axis}: sd {}", var.sqrt());
        }
    }

    #[test]
    fn selection_only_generation_copies_parents() {
        let cfg = GaConfig { crossover_rate: 0.0, mutation_rate: 0.0, ..GaConfig::default() };
        let mut rng = SolverRng::seed_from_u64(1);
        let pop: Vec<Genome> = (0..64).map(|i| Genome::new(Vec3::new(i as f64, 0.0, 0.0))).collect();
        let fitness: Vec<f64> = (0..64).map(|i| ((i * 37) % 64) as f64).collect();
        let next = evolve_generation(&pop, &fitness, Vec3::splat(1.0), &cfg, &mut rng);
        assert_eq!(next.len(), 64);
        for g in &next {
            assert!(pop.contains(g));
        }
    }

    #[test]
    fn elites_survive_unchanged() {
        let cfg = GaConfig { elite_count: 2, ..GaConfig::default() };
        let mut rng = SolverRng::seed_from_u64(2);
        let pop: Vec<Genome> = (0..16).map(|i| Genome::new(Vec3::new(i as f64, 1.0, 2.0))).collect();
        let mut fitness: Vec<f64> = (0..16).map(|i| 100.0 - i as f64).collect();
        fitness[9] = -1.0;
        let next = evolve_generation(&pop, &fitness, Vec3::splat(1.0), &cfg, &mut rng);
        assert_eq!(next[0], pop[9]);
        assert_eq!(next[1], pop[15]);
        assert_eq!(next.len(), pop.len());
    }

    fn lamp_on_desk() -> (ConstraintSet, BTreeMap<ObjectId, Aabb>, ObjectInstance) {
        let desk = cube_box([0.0, 0.0, 0.5], 1.0);
        let refs = BTreeMap::from([(ObjectId::from("desk"), desk)]);
        let lamp = ObjectInstance::new("lamp", "lamp", vec![Block::from_arrays([0.3, -0.2, 1.7], [0.2, 0.2, 0.4]).unwrap()]).unwrap();
        let set = ConstraintSet::new(
            "lamp",
            vec![
                Constraint::new(ConstraintKind::Above, "desk", "lamp", 0.0).unwrap(),
                Constraint::new(ConstraintKind::XAligned, "desk", "lamp", 0.0).unwrap(),
            ],
        )
        .unwrap();
        (set, refs, lamp)
    }

    #[test]
    fn solves_small_problem_deterministically() {
        let (set, refs, lamp) = lamp_on_desk();
        let cfg = GaConfig::default().with_seed(11);
        let a = solve(&set, &refs, &lamp, &cfg).unwrap();
        let b = GaSolver::new(cfg).with_execution(Execution::Sequential).solve(&set, &refs, &lamp).unwrap();
        assert_eq!(a, b);
        assert!(a.final_error <= 1e-4, "E = {}", a.final_error);
        assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(a.history.len(), a.generations_run);
    }

    #[test]
    fn satisfied_start_converges_immediately() {
        let (set, refs, lamp) = lamp_on_desk();
        // move lamp so that it already satisfies both constraints
        let fix = Vec3::new(-0.3, 0.0, 1.0 - lamp.bounds().min().z);
        let placed = lamp.translated(fix);
        let result = solve(&set, &refs, &placed, &GaConfig::default()).unwrap();
        assert_eq!(result.generations_run, 1);
        assert!(result.converged);
        assert_eq!(result.best_motion, Vec3::ZERO);
        assert!(result.final_error <= 1e-20);
    }

    #[test]
    fn solve_errors() {
        let (set, refs, lamp) = lamp_on_desk();
        let empty = ConstraintSet::new("lamp", vec![]).unwrap();
        assert!(matches!(solve(&empty, &refs, &lamp, &GaConfig::default()), Err(SolveError::EmptyConstraints(_))));
        let err = solve(&set, &BTreeMap::new(), &lamp, &GaConfig::default()).unwrap_err();
        assert!(err.to_string().contains("desk"));
        let other = ObjectInstance::new("chair", "chair", lamp.blocks().to_vec()).unwrap();
        assert!(matches!(solve(&set, &refs, &other, &GaConfig::default()), Err(SolveError::WrongMovable { .. })));
    }
}
