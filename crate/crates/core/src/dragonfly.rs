//! Dragonfly Algorithm: a swarm minimizer over a box, driven by
//! separation, alignment, cohesion, food attraction and enemy distraction
//! with a decaying inertia, plus Lévy flights for isolated individuals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::gamma;
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum DaError {
    #[error("invalid swarm config: {0}")]
    Config(String),
    #[error("individual {index} is out of range for a population of {pop}")]
    IndexOutOfRange { index: usize, pop: usize },
    #[error(
        "objective returned a non-finite value for individual {index} at iteration {iteration}"
    )]
    NonFinite { index: usize, iteration: usize },
}

pub type Result<T, E = DaError> = std::result::Result<T, E>;

/// Fitness function to minimize. Must be pure within a run.
pub trait Objective<T> {
    fn evaluate(&self, x: &[T]) -> T;
}

impl<T, F> Objective<T> for F
where
    F: Fn(&[T]) -> T,
{
    fn evaluate(&self, x: &[T]) -> T {
        self(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaConfig<T> {
    pub dim: usize,
    pub lb: Vec<T>,
    pub ub: Vec<T>,
    pub pop: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl<T: Scalar> DaConfig<T> {
    /// Rastrigin benchmark setup: 10 dimensions in `[-5.12, 5.12]`,
    /// 30 individuals, 100 iterations.
    pub fn benchmark(seed: u64) -> Self {
        Self::uniform_bounds(10, T::of(-5.12), T::of(5.12), 30, 100, seed)
    }

    /// Hyperparameter-tuning setup: learning rate in `[0.0001, 0.1]`,
    /// hidden width in `[10, 200]`, 10 individuals, 2 iterations.
    pub fn tuning(seed: u64) -> Self {
        Self {
            dim: 2,
            lb: vec![T::of(0.0001), T::of(10.0)],
            ub: vec![T::of(0.1), T::of(200.0)],
            pop: 10,
            max_iter: 2,
            seed,
        }
    }

    pub fn uniform_bounds(
        dim: usize,
        lb: T,
        ub: T,
        pop: usize,
        max_iter: usize,
        seed: u64,
    ) -> Self {
        Self {
            dim,
            lb: vec![lb; dim],
            ub: vec![ub; dim],
            pop,
            max_iter,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.pop == 0 {
            return Err(DaError::Config("dim and pop must be positive".into()));
        }
        if self.lb.len() != self.dim || self.ub.len() != self.dim {
            return Err(DaError::Config(format!(
                "bounds have lengths {}/{} for dim {}",
                self.lb.len(),
                self.ub.len(),
                self.dim
            )));
        }
        for d in 0..self.dim {
            let (lo, hi) = (self.lb[d], self.ub[d]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(DaError::Config(format!(
                    "dimension {d}: need lb < ub, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    fn span(&self, d: usize) -> T {
        self.ub[d] - self.lb[d]
    }

    fn clip(&self, x: &mut [T]) {
        for (d, v) in x.iter_mut().enumerate() {
            *v = v.max(self.lb[d]).min(self.ub[d]);
        }
    }
}

/// A position together with its fitness.
#[derive(Debug, Clone, PartialEq)]
pub struct Record<T> {
    pub position: Vec<T>,
    pub fitness: T,
}

/// Coefficients for one iteration of the position update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaWeights<T> {
    pub s: T,
    pub a: T,
    pub c: T,
    pub f: T,
    pub e: T,
    pub w: T,
}

impl<T: Scalar> DaWeights<T> {
    pub fn zero() -> Self {
        Self {
            s: T::zero(),
            a: T::zero(),
            c: T::zero(),
            f: T::zero(),
            e: T::zero(),
            w: T::zero(),
        }
    }

    /// Schedule for iteration `t` of `max_iter`: inertia falls linearly from
    /// 0.9 to 0.4 and `beta` from 0.1 to 0; `s, a, c = 2 u beta`, `f = 2 u`,
    /// `e = beta` with fresh uniform `u` per coefficient.
    pub fn scheduled(t: usize, max_iter: usize, rng: &mut impl Rng) -> Self {
        let frac = if max_iter == 0 {
            1.0
        } else {
            t as f64 / max_iter as f64
        };
        let w = 0.9 - 0.5 * frac;
        let beta = 0.1 * (1.0 - frac);
        let s = 2.0 * rng.random::<f64>() * beta;
        let a = 2.0 * rng.random::<f64>() * beta;
        let c = 2.0 * rng.random::<f64>() * beta;
        let f = 2.0 * rng.random::<f64>();
        Self {
            s: T::of(s),
            a: T::of(a),
            c: T::of(c),
            f: T::of(f),
            e: T::of(beta),
            w: T::of(w),
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.s, self.a, self.c, self.f, self.e, self.w]
            .iter()
            .all(|&v| v >= T::zero())
    }
}

/// Swarm state between iterations.
#[derive(Debug, Clone)]
pub struct DaState<T> {
    pub positions: Vec<Vec<T>>,
    pub steps: Vec<Vec<T>>,
    pub fitness: Vec<T>,
    /// Best position seen so far.
    pub food: Record<T>,
    /// Worst individual of the current population.
    pub enemy: Record<T>,
    pub iteration: usize,
    /// Number of objective evaluations so far.
    pub evaluations: usize,
    rng: ChaCha8Rng,
}

impl<T: Scalar> DaState<T> {
    pub fn pop(&self) -> usize {
        self.positions.len()
    }

    pub fn dim(&self) -> usize {
        self.food.position.len()
    }
}

/// Uniform random positions, zero steps, food on individual 0 with
/// fitness +inf. Nothing is evaluated yet.
pub fn initialize_swarm<T: Scalar>(cfg: &DaConfig<T>) -> Result<DaState<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let positions: Vec<Vec<T>> = (0..cfg.pop)
        .map(|_| {
            (0..cfg.dim)
                .map(|d| cfg.lb[d] + cfg.span(d) * T::of(rng.random::<f64>()))
                .collect()
        })
        .collect();
    let first = positions[0].clone();
    Ok(DaState {
        steps: vec![vec![T::zero(); cfg.dim]; cfg.pop],
        fitness: vec![T::infinity(); cfg.pop],
        food: Record {
            position: first.clone(),
            fitness: T::infinity(),
        },
        enemy: Record {
            position: first,
            fitness: T::neg_infinity(),
        },
        positions,
        iteration: 0,
        evaluations: 0,
        rng,
    })
}

/// `+inf` is an admissible fitness (a rejected candidate); NaN and `-inf` are not.
fn admissible<T: Scalar>(v: T) -> bool {
    !v.is_nan() && v != T::neg_infinity()
}

/// Evaluates every individual in index order and refreshes food and enemy.
pub fn evaluate_population<T: Scalar, O: Objective<T> + ?Sized>(
    state: &mut DaState<T>,
    cfg: &DaConfig<T>,
    objective: &O,
) -> Result<()> {
    for i in 0..state.pop() {
        let mut v = objective.evaluate(&state.positions[i]);
        state.evaluations += 1;
        if !admissible(v) {
            log::warn!("non-finite fitness for individual {i}; re-clipping and retrying");
            cfg.clip(&mut state.positions[i]);
            v = objective.evaluate(&state.positions[i]);
            state.evaluations += 1;
            if !admissible(v) {
                return Err(DaError::NonFinite {
                    index: i,
                    iteration: state.iteration,
                });
            }
        }
        state.fitness[i] = v;
    }
    let mut worst = 0;
    for i in 0..state.pop() {
        if state.fitness[i] < state.food.fitness {
            state.food = Record {
                position: state.positions[i].clone(),
                fitness: state.fitness[i],
            };
        }
        if state.fitness[i] > state.fitness[worst] {
            worst = i;
        }
    }
    state.enemy = Record {
        position: state.positions[worst].clone(),
        fitness: state.fitness[worst],
    };
    Ok(())
}

/// The five behavior vectors acting on one individual.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorTerms<T> {
    /// `-sum_j (x_i - x_j)`
    pub separation: Vec<T>,
    /// Mean neighbor step.
    pub alignment: Vec<T>,
    /// Mean neighbor position minus `x_i`.
    pub cohesion: Vec<T>,
    /// `x_food - x_i`
    pub food: Vec<T>,
    /// `x_i - x_enemy`; added with a positive weight it pushes away from the enemy.
    pub enemy: Vec<T>,
}

pub fn behavior_terms<T: Scalar>(
    state: &DaState<T>,
    i: usize,
    neighbors: &[usize],
) -> Result<BehaviorTerms<T>> {
    let pop = state.pop();
    if i >= pop {
        return Err(DaError::IndexOutOfRange { index: i, pop });
    }
    if let Some(&j) = neighbors.iter().find(|&&j| j >= pop || j == i) {
        return Err(DaError::IndexOutOfRange { index: j, pop });
    }
    let dim = state.dim();
    let xi = &state.positions[i];
    let mut separation = vec![T::zero(); dim];
    let mut alignment = vec![T::zero(); dim];
    let mut cohesion = vec![T::zero(); dim];
    if !neighbors.is_empty() {
        let k = T::of_usize(neighbors.len());
        for d in 0..dim {
            let mut sep = T::zero();
            let mut step_sum = T::zero();
            let mut pos_sum = T::zero();
            for &j in neighbors {
                sep = sep - (xi[d] - state.positions[j][d]);
                step_sum = step_sum + state.steps[j][d];
                pos_sum = pos_sum + state.positions[j][d];
            }
            separation[d] = sep;
            alignment[d] = step_sum / k;
            cohesion[d] = pos_sum / k - xi[d];
        }
    }
    let food = (0..dim).map(|d| state.food.position[d] - xi[d]).collect();
    let enemy = (0..dim).map(|d| xi[d] - state.enemy.position[d]).collect();
    Ok(BehaviorTerms {
        separation,
        alignment,
        cohesion,
        food,
        enemy,
    })
}

/// Per-dimension neighborhood radius at iteration `t`:
/// `span/4 + 2 * span * t / max_iter`.
pub fn neighborhood_radius<T: Scalar>(cfg: &DaConfig<T>, t: usize) -> Vec<T> {
    let frac = if cfg.max_iter == 0 {
        T::zero()
    } else {
        T::of_usize(t) / T::of_usize(cfg.max_iter)
    };
    (0..cfg.dim)
        .map(|d| cfg.span(d) / T::of(4.0) + T::of(2.0) * cfg.span(d) * frac)
        .collect()
}

/// Indices `j != i` inside the axis-aligned ellipsoid around `x_i` with
/// semi-axes `radius`, i.e. `sum(((x_j - x_i) / r)^2) <= 1`.
pub fn neighbors_of<T: Scalar>(positions: &[Vec<T>], i: usize, radius: &[T]) -> Vec<usize> {
    (0..positions.len())
        .filter(|&j| {
            j != i
                && positions[i]
                    .iter()
                    .zip(&positions[j])
                    .zip(radius)
                    .map(|((&a, &b), &r)| {
                        let z = (a - b) / r;
                        z * z
                    })
                    .sum::<T>()
                    <= T::one()
        })
        .collect()
}

pub const LEVY_BETA: f64 = 1.5;
pub const LEVY_SCALE: f64 = 0.01;

/// Mantegna's sigma for the numerator normal of a Lévy-stable step.
pub fn mantegna_sigma(beta: f64) -> f64 {
    let num = gamma(1.0 + beta) * (std::f64::consts::PI * beta / 2.0).sin();
    let den = gamma((1.0 + beta) / 2.0) * beta * 2f64.powf((beta - 1.0) / 2.0);
    (num / den).powf(1.0 / beta)
}

/// One Lévy-distributed vector (Mantegna), already scaled by 0.01.
pub fn levy<T: Scalar>(dim: usize, rng: &mut impl Rng) -> Vec<T> {
    let sigma = mantegna_sigma(LEVY_BETA);
    (0..dim)
        .map(|_| {
            let u: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
            let v: f64 = rng.sample(StandardNormal);
            T::of(LEVY_SCALE * u / v.abs().powf(1.0 / LEVY_BETA))
        })
        .collect()
}

/// One synchronous iteration: every new position is computed from the
/// state at the start of the step, then the whole population is evaluated.
pub fn da_step<T: Scalar, O: Objective<T> + ?Sized>(
    state: &mut DaState<T>,
    weights: &DaWeights<T>,
    cfg: &DaConfig<T>,
    objective: &O,
) -> Result<()> {
    if !weights.is_valid() {
        return Err(DaError::Config(format!(
            "negative behavior weight in {weights:?}"
        )));
    }
    let t = state.iteration + 1;
    let radius = neighborhood_radius(cfg, t);
    let max_step: Vec<T> = (0..cfg.dim).map(|d| cfg.span(d) / T::of(10.0)).collect();

    let mut new_positions = state.positions.clone();
    let mut new_steps = state.steps.clone();
    for i in 0..state.pop() {
        let neighbors = neighbors_of(&state.positions, i, &radius);
        if neighbors.is_empty() {
            let jump: Vec<T> = levy(cfg.dim, &mut state.rng);
            for d in 0..cfg.dim {
                new_positions[i][d] = state.positions[i][d] + jump[d] * state.positions[i][d];
                new_steps[i][d] = T::zero();
            }
        } else {
            let b = behavior_terms(state, i, &neighbors)?;
            for d in 0..cfg.dim {
                let step = weights.s * b.separation[d]
                    + weights.a * b.alignment[d]
                    + weights.c * b.cohesion[d]
                    + weights.f * b.food[d]
                    + weights.e * b.enemy[d]
                    + weights.w * state.steps[i][d];
                let step = step.max(-max_step[d]).min(max_step[d]);
                new_steps[i][d] = step;
                new_positions[i][d] = state.positions[i][d] + step;
            }
        }
        cfg.clip(&mut new_positions[i]);
    }
    state.positions = new_positions;
    state.steps = new_steps;
    state.iteration = t;
    evaluate_population(state, cfg, objective)
}

/// Result of [`optimize`]; `trace[k]` is the best fitness after `k` iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult<T> {
    pub best_position: Vec<T>,
    pub best_fitness: T,
    pub trace: Vec<T>,
    pub initial_best: T,
}

/// Runs the swarm for `cfg.max_iter` iterations after an initial evaluation pass.
pub fn optimize<T: Scalar, O: Objective<T> + ?Sized>(
    objective: &O,
    cfg: &DaConfig<T>,
) -> Result<OptimizeResult<T>> {
    let mut state = initialize_swarm(cfg)?;
    evaluate_population(&mut state, cfg, objective)?;
    let initial_best = state.food.fitness;
    let mut trace = Vec::with_capacity(cfg.max_iter + 1);
    trace.push(initial_best);
    for t in 1..=cfg.max_iter {
        let weights = DaWeights::scheduled(t, cfg.max_iter, &mut state.rng);
        da_step(&mut state, &weights, cfg, objective)?;
        trace.push(state.food.fitness);
    }
    Ok(OptimizeResult {
        best_position: state.food.position,
        best_fitness: state.food.fitness,
        trace,
        initial_best,
    })
}

/// `10 n + sum(x_i^2 - 10 cos(2 pi x_i))`
pub fn rastrigin<T: Scalar>(x: &[T]) -> T {
    let ten = T::of(10.0);
    let two_pi = T::of(2.0) * T::PI();
    ten * T::of_usize(x.len())
        + x.iter()
            .map(|&v| v * v - ten * (two_pi * v).cos())
            .sum::<T>()
}

pub fn sphere<T: Scalar>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum()
}
