//! Synchronous master–worker particle swarm over a bounded box.
//!
//! The master owns the [`SwarmState`]. Each generation it hands
//! `(particle_index, position)` jobs to a pool of workers, blocks until every
//! `(particle_index, fitness)` result is back, then updates bests and moves
//! the particles. Random draws for particle `j` in generation `t` come from a
//! stream keyed by `(seed, j, t)`, so the trajectory does not depend on the
//! number of workers or on completion order.

use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Objective minimised by the swarm. Must tolerate concurrent calls.
pub trait Fitness: Sync {
    fn evaluate(&self, position: &[f64]) -> f64;
}

impl<F> Fitness for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn evaluate(&self, position: &[f64]) -> f64 {
        self(position)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmConfig {
    pub num_particles: usize,
    pub generations: usize,
    /// Inertia weight on the previous velocity.
    pub inertia: f64,
    pub c1: f64,
    pub c2: f64,
    /// Per-dimension `[min, max]`.
    pub bounds: Vec<[f64; 2]>,
    pub v_max_fraction: f64,
    pub seed: u64,
    pub num_workers: usize,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            num_particles: 8,
            generations: 20,
            inertia: 1.0,
            c1: 2.0,
            c2: 2.0,
            bounds: vec![[0.0, 0.1], [0.0, 300.0]],
            v_max_fraction: 0.2,
            seed: 0,
            num_workers: 1,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_particles < 1 {
            return Err(Error::Config("swarm.num_particles must be >= 1".into()));
        }
        if self.bounds.is_empty() {
            return Err(Error::Config("swarm needs at least one dimension".into()));
        }
        for (d, [lo, hi]) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "degenerate bounds [{lo}, {hi}] on dimension {d}"
                )));
            }
        }
        if !(self.v_max_fraction > 0.0 && self.v_max_fraction.is_finite()) {
            return Err(Error::Config("swarm.v_max_fraction must be > 0".into()));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0 && self.c1.is_finite() && self.c2.is_finite()) {
            return Err(Error::Config("swarm.c1 and swarm.c2 must be >= 0".into()));
        }
        if !self.inertia.is_finite() {
            return Err(Error::Config("swarm.inertia must be finite".into()));
        }
        Ok(())
    }

    /// `v_max_d = fraction * (max_d - min_d)`.
    pub fn v_max(&self) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|[lo, hi]| self.v_max_fraction * (hi - lo))
            .collect()
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub best_position: Vec<f64>,
    /// `+inf` until the first evaluation.
    pub best_fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleTrace {
    pub pos: Vec<f64>,
    pub vel: Vec<f64>,
    pub fitness: f64,
}

/// One line of the swarm trace, describing the positions evaluated in a generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub global_best_fitness: f64,
    pub global_best_pos: Vec<f64>,
    pub per_particle: Vec<ParticleTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub particles: Vec<Particle>,
    pub global_best_position: Vec<f64>,
    pub global_best_fitness: f64,
    /// Number of completed generations.
    pub generation: usize,
    pub history: Vec<GenerationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmOutcome {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    pub history: Vec<GenerationRecord>,
}

impl SwarmOutcome {
    /// Writes the history as JSON lines.
    pub fn write_trace<W: Write>(&self, mut out: W) -> Result<()> {
        for record in &self.history {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn init_swarm(cfg: &SwarmConfig) -> Result<SwarmState> {
    cfg.validate()?;
    let v_max = cfg.v_max();
    let particles: Vec<Particle> = (0..cfg.num_particles)
        .map(|j| {
            let mut rng = seed::rng_for(cfg.seed, &[seed::tag::PARTICLE_INIT, j as u64]);
            let position: Vec<f64> = cfg
                .bounds
                .iter()
                .map(|&[lo, hi]| rng.random_range(lo..=hi))
                .collect();
            let velocity = v_max.iter().map(|&vm| rng.random_range(-vm..=vm)).collect();
            Particle {
                best_position: position.clone(),
                position,
                velocity,
                best_fitness: f64::INFINITY,
            }
        })
        .collect();
    Ok(SwarmState {
        global_best_position: particles[0].position.clone(),
        global_best_fitness: f64::INFINITY,
        particles,
        generation: 0,
        history: Vec::new(),
    })
}

fn guarded<F: Fitness + ?Sized>(fitness: &F, index: usize, position: &[f64]) -> f64 {
    match panic::catch_unwind(AssertUnwindSafe(|| fitness.evaluate(position))) {
        Ok(f) if f.is_nan() => f64::INFINITY,
        Ok(f) => f,
        Err(_) => {
            log::warn!("fitness evaluation for particle {index} failed; scoring it +inf");
            f64::INFINITY
        }
    }
}

/// Evaluates every position, `workers` at a time, returning results by index.
pub fn evaluate_all<F: Fitness + ?Sized>(
    positions: &[Vec<f64>],
    fitness: &F,
    workers: usize,
) -> Vec<f64> {
    let n = positions.len();
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return positions
            .iter()
            .enumerate()
            .map(|(j, p)| guarded(fitness, j, p))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, f64)>();
    let mut results = vec![f64::INFINITY; n];
    thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                if j >= n {
                    break;
                }
                if tx.send((j, guarded(fitness, j, &positions[j]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (j, f) in rx.iter().take(n) {
            results[j] = f;
        }
    });
    results
}

/// One synchronous generation: evaluate all, update bests, then move.
pub fn step_generation<F: Fitness + ?Sized>(
    state: &mut SwarmState,
    cfg: &SwarmConfig,
    fitness: &F,
) -> Result<()> {
    cfg.validate()?;
    let positions: Vec<Vec<f64>> = state.particles.iter().map(|p| p.position.clone()).collect();
    let scores = evaluate_all(&positions, fitness, cfg.num_workers);

    for (p, &f) in state.particles.iter_mut().zip(&scores) {
        if f < p.best_fitness {
            p.best_fitness = f;
            p.best_position = p.position.clone();
        }
    }
    for p in &state.particles {
        if p.best_fitness < state.global_best_fitness {
            state.global_best_fitness = p.best_fitness;
            state.global_best_position = p.best_position.clone();
        }
    }
    state.history.push(GenerationRecord {
        generation: state.generation,
        global_best_fitness: state.global_best_fitness,
        global_best_pos: state.global_best_position.clone(),
        per_particle: state
            .particles
            .iter()
            .zip(&scores)
            .map(|(p, &f)| ParticleTrace {
                pos: p.position.clone(),
                vel: p.velocity.clone(),
                fitness: f,
            })
            .collect(),
    });

    let v_max = cfg.v_max();
    let gb = &state.global_best_position;
    for (j, p) in state.particles.iter_mut().enumerate() {
        let mut rng = seed::rng_for(
            cfg.seed,
            &[seed::tag::PARTICLE_STEP, j as u64, state.generation as u64],
        );
        for d in 0..cfg.dims() {
            let r1: f64 = rng.random();
            let r2: f64 = rng.random();
            let v = cfg.inertia * p.velocity[d]
                + cfg.c1 * r1 * (p.best_position[d] - p.position[d])
                + cfg.c2 * r2 * (gb[d] - p.position[d]);
            let v = v.clamp(-v_max[d], v_max[d]);
            let [lo, hi] = cfg.bounds[d];
            let next = p.position[d] + v;
            if next < lo || next > hi {
                p.position[d] = next.clamp(lo, hi);
                p.velocity[d] = 0.0;
            } else {
                p.position[d] = next;
                p.velocity[d] = v;
            }
        }
    }
    state.generation += 1;
    Ok(())
}

/// Initializes the swarm and runs `cfg.generations` synchronous steps.
pub fn run_swarm<F: Fitness + ?Sized>(cfg: &SwarmConfig, fitness: &F) -> Result<SwarmOutcome> {
    let mut state = init_swarm(cfg)?;
    for _ in 0..cfg.generations {
        step_generation(&mut state, cfg, fitness)?;
    }
    Ok(SwarmOutcome {
        best_position: state.global_best_position,
        best_fitness: state.global_best_fitness,
        history: state.history,
    })
}
