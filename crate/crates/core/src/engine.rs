//! The weak Euler scheme: coefficients frozen at the left grid node, exact
//! driver increments over each step, and deterministic parallel Monte Carlo.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{LevyMeasureSpec, LevySampler};
use crate::model::{CoefficientField, TestFunction};
use crate::rng::{Stream, StreamKey};
use crate::stable::{IsotropicSampler, StableDriverSpec};
use crate::stats::{pairwise_reduce, Moments};

/// Paths whose state norm exceeds this are aborted and excluded.
pub const EXPLOSION_THRESHOLD: f64 = 1e12;

/// Number of consecutive paths reduced sequentially before the pairwise tree.
pub const BLOCK_SIZE: u64 = 1024;

/// Partition `0 = τ₀ < τ₁ < … < τ_n = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    delta: f64,
}

impl TimeGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::InvalidParameter {
                name: "nodes",
                value: nodes.first().copied().unwrap_or(f64::NAN),
                constraint: "need at least two nodes starting at 0".into(),
            });
        }
        let mut delta: f64 = 0.0;
        for w in nodes.windows(2) {
            let h = w[1] - w[0];
            if !(h > 0.0) || !w[1].is_finite() {
                return Err(Error::InvalidParameter {
                    name: "nodes",
                    value: w[1],
                    constraint: "must be finite and strictly increasing".into(),
                });
            }
            delta = delta.max(h);
        }
        Ok(Self { nodes, delta })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Largest step.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn horizon(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Fails unless `delta < bound`.
    pub fn require_delta_below(&self, bound: f64) -> Result<()> {
        if self.delta < bound {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "delta",
                value: self.delta,
                constraint: format!("maximum step must be below {bound}"),
            })
        }
    }
}

/// Uniform grid `τ_i = i·T/n`.
pub fn make_uniform_grid(horizon: f64, n: usize) -> Result<TimeGrid> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: 0.0,
            constraint: "need at least one step".into(),
        });
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "T",
            value: horizon,
            constraint: "must be positive and finite".into(),
        });
    }
    let nodes: Vec<f64> = (0..=n).map(|i| i as f64 * horizon / n as f64).collect();
    let mut grid = TimeGrid::new(nodes)?;
    grid.delta = horizon / n as f64;
    Ok(grid)
}

/// Outcome of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub terminal: Vec<f64>,
    /// `Σ_i f(Y_{τ_i}) (τ_{i+1} − τ_i)`; zero without a running function.
    pub running_integral: f64,
    pub jump_count: u64,
}

/// Euler scheme with samplers and constant coefficients precomputed.
pub struct EulerScheme {
    field: CoefficientField,
    stable: IsotropicSampler,
    levy: Option<LevySampler>,
}

impl std::fmt::Debug for EulerScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EulerScheme")
            .field("field", &self.field)
            .field("driver", self.stable.spec())
            .field("levy", &self.levy)
            .finish()
    }
}

struct Workspace {
    a: Vec<f64>,
    b: Vec<f64>,
    g: Vec<f64>,
    du: Vec<f64>,
    dz: Vec<f64>,
    y: Vec<f64>,
}

impl EulerScheme {
    pub fn new(field: CoefficientField, driver: StableDriverSpec, z: Option<&LevyMeasureSpec>) -> Result<Self> {
        driver.validate()?;
        if driver.dim != field.dim {
            return Err(Error::Dimension(format!(
                "driver dimension {} differs from field dimension {}",
                driver.dim, field.dim
            )));
        }
        if driver.alpha < 1.0 && !field.drift_is_zero {
            return Err(Error::Hypothesis("a must be zero for α ∈ (0,1)".into()));
        }
        let levy = match z {
            Some(z) if z.rate > 0.0 => {
                if z.dim() != field.jump_dim {
                    return Err(Error::Dimension(format!(
                        "jump dimension {} differs from G's column count {}",
                        z.dim(),
                        field.jump_dim
                    )));
                }
                if z.driver_alpha != driver.alpha {
                    return Err(Error::InvalidParameter {
                        name: "driver_alpha",
                        value: z.driver_alpha,
                        constraint: format!("must equal the stable index {}", driver.alpha),
                    });
                }
                Some(LevySampler::new(z)?)
            }
            _ => None,
        };
        Ok(Self {
            stable: IsotropicSampler::new(driver)?,
            field,
            levy,
        })
    }

    pub fn field(&self) -> &CoefficientField {
        &self.field
    }

    pub fn driver(&self) -> &StableDriverSpec {
        self.stable.spec()
    }

    fn workspace(&self, x0: &[f64]) -> Workspace {
        let d = self.field.dim;
        let m = self.field.jump_dim;
        let mut ws = Workspace {
            a: vec![0.0; d],
            b: vec![0.0; d * d],
            g: vec![0.0; d * m],
            du: vec![0.0; d],
            dz: vec![0.0; m],
            y: x0.to_vec(),
        };
        self.field.drift.eval(x0, &mut ws.a);
        self.field.diffusion.eval(x0, &mut ws.b);
        self.field.jump.eval(x0, &mut ws.g);
        ws
    }

    /// Runs one path over `grid` from `x0`.
    pub fn simulate(
        &self,
        x0: &[f64],
        grid: &TimeGrid,
        running: Option<&TestFunction>,
        rng: &mut Stream,
    ) -> Result<PathResult> {
        let d = self.field.dim;
        let m = self.field.jump_dim;
        if x0.len() != d {
            return Err(Error::Dimension(format!("x0 has length {}, expected {d}", x0.len())));
        }
        let [const_a, const_b, const_g] = self.field.constant;
        let mut ws = self.workspace(x0);
        let mut running_integral = 0.0;
        let mut jump_count = 0;
        let mut last_dt = f64::NAN;
        let mut scale = 0.0;
        let mut levy_step = None;
        let nodes = grid.nodes();
        for (i, w) in nodes.windows(2).enumerate() {
            let dt = w[1] - w[0];
            if dt != last_dt {
                scale = self.stable.step_scale(dt);
                levy_step = self.levy.as_ref().map(|l| l.step(dt));
                last_dt = dt;
            }
            let y = &mut ws.y;
            if let Some(f) = running {
                running_integral += f.eval(y) * dt;
            }
            if i > 0 {
                if !const_a {
                    self.field.drift.eval(y, &mut ws.a);
                }
                if !const_b {
                    self.field.diffusion.eval(y, &mut ws.b);
                }
                if !const_g && levy_step.is_some() {
                    self.field.jump.eval(y, &mut ws.g);
                }
            }
            self.stable.fill_scaled(scale, rng, &mut ws.du);
            let jumps = match &levy_step {
                Some(s) => s.sample(rng, &mut ws.dz),
                None => 0,
            };
            jump_count += jumps;
            let mut norm2 = 0.0;
            for r in 0..d {
                let mut v = y[r] + ws.a[r] * dt;
                let brow = &ws.b[r * d..(r + 1) * d];
                for (bk, uk) in brow.iter().zip(&ws.du) {
                    v += bk * uk;
                }
                if levy_step.is_some() {
                    let grow = &ws.g[r * m..(r + 1) * m];
                    for (gk, zk) in grow.iter().zip(&ws.dz) {
                        v += gk * zk;
                    }
                }
                y[r] = v;
                norm2 += v * v;
            }
            if !(norm2 <= EXPLOSION_THRESHOLD * EXPLOSION_THRESHOLD) {
                return Err(Error::Explosion {
                    step: i + 1,
                    norm: norm2.sqrt(),
                });
            }
        }
        Ok(PathResult {
            terminal: ws.y,
            running_integral,
            jump_count,
        })
    }
}

/// One path of the Euler scheme.
pub fn simulate_euler_path(
    x0: &[f64],
    field: &CoefficientField,
    driver: &StableDriverSpec,
    z: Option<&LevyMeasureSpec>,
    grid: &TimeGrid,
    running: Option<&TestFunction>,
    rng: &mut Stream,
) -> Result<PathResult> {
    EulerScheme::new(field.clone(), *driver, z)?.simulate(x0, grid, running, rng)
}

/// Aggregate of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct McSummary {
    pub moments: Moments,
    /// Paths attempted, including excluded ones.
    pub n_paths: u64,
    pub excluded: u64,
    pub jumps: u64,
}

impl McSummary {
    fn merge(&self, other: &McSummary) -> McSummary {
        McSummary {
            moments: self.moments.merge(&other.moments),
            n_paths: self.n_paths + other.n_paths,
            excluded: self.excluded + other.excluded,
            jumps: self.jumps + other.jumps,
        }
    }

    pub fn mean(&self) -> f64 {
        self.moments.mean
    }

    pub fn stderr(&self) -> f64 {
        self.moments.stderr()
    }
}

/// Runs `n` independent tasks `task(index, rng)` in fixed blocks and reduces
/// the per-task values with a fixed pairwise tree. Tasks returning
/// [`Error::Explosion`] are counted as excluded; other errors abort.
///
/// The result depends only on `(key, n)`, never on `workers`.
pub fn monte_carlo<F>(key: StreamKey, n: u64, workers: usize, task: F) -> Result<McSummary>
where
    F: Fn(u64, &mut Stream) -> Result<(f64, u64)> + Sync,
{
    let blocks = n.div_ceil(BLOCK_SIZE);
    let run_block = |b: u64| -> Result<McSummary> {
        let mut s = McSummary::default();
        for i in b * BLOCK_SIZE..((b + 1) * BLOCK_SIZE).min(n) {
            let mut rng = key.stream(i);
            s.n_paths += 1;
            match task(i, &mut rng) {
                Ok((v, jumps)) => {
                    s.moments.push(v);
                    s.jumps += jumps;
                }
                Err(Error::Explosion { .. }) => s.excluded += 1,
                Err(e) => return Err(e),
            }
        }
        Ok(s)
    };
    let parts: Vec<McSummary> = if workers <= 1 {
        (0..blocks).map(run_block).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Io(e.to_string()))?;
        pool.install(|| (0..blocks).into_par_iter().map(run_block).collect::<Result<_>>())?
    };
    Ok(pairwise_reduce(&parts, &|a: &McSummary, b: &McSummary| a.merge(b)).unwrap_or_default())
}
