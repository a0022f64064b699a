use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::TimeGrid;
use crate::market::JumpSpec;

/// Brownian increments and jump atoms of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathNoise {
    pub dw1: Vec<f64>,
    pub dw2: Vec<f64>,
    /// `jump_atoms[jump_start[k]..jump_start[k + 1]]` are the atoms hit during step `k`.
    jump_start: Vec<u32>,
    jump_atoms: Vec<u16>,
}

impl PathNoise {
    /// Draws the noise of path `path` from stream `path` of the master seed.
    pub fn draw(grid: &TimeGrid, jumps: &JumpSpec, seed: u64, path: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        let n = grid.steps();
        let mut dw1 = Vec::with_capacity(n);
        let mut dw2 = Vec::with_capacity(n);
        let mut jump_start = Vec::with_capacity(n + 1);
        let mut jump_atoms = Vec::new();
        let mut scratch = Vec::new();
        jump_start.push(0);
        for k in 0..n {
            let sq = grid.dt(k).sqrt();
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            dw1.push(sq * z1);
            dw2.push(sq * z2);
            scratch.clear();
            jumps.sample_atoms(grid.dt(k), &mut rng, &mut scratch);
            jump_atoms.extend(scratch.iter().map(|&i| i as u16));
            jump_start.push(jump_atoms.len() as u32);
        }
        Self { dw1, dw2, jump_start, jump_atoms }
    }

    /// No Brownian motion and no jumps.
    pub fn quiet(grid: &TimeGrid) -> Self {
        let n = grid.steps();
        Self { dw1: vec![0.0; n], dw2: vec![0.0; n], jump_start: vec![0; n + 1], jump_atoms: Vec::new() }
    }

    /// Same increments with the jumps removed.
    pub fn without_jumps(&self) -> Self {
        Self {
            dw1: self.dw1.clone(),
            dw2: self.dw2.clone(),
            jump_start: vec![0; self.jump_start.len()],
            jump_atoms: Vec::new(),
        }
    }

    pub fn steps(&self) -> usize {
        self.dw1.len()
    }

    /// Atom indices of the jumps in step `k`.
    #[inline]
    pub fn jumps_at(&self, k: usize) -> &[u16] {
        &self.jump_atoms[self.jump_start[k] as usize..self.jump_start[k + 1] as usize]
    }

    pub fn jump_count(&self) -> usize {
        self.jump_atoms.len()
    }
}
