//! Spectral solver for the three evolution problems on a periodic box:
//! L1 Caputo memory in time, implicit fractional Laplacian, explicit
//! transformed-argument nonlinearity.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::ExponentInputs;
use crate::frac_space::{weight_value, WeightParams};
use crate::frac_time::{mean_time_integral, rl_right_derivative_closed, TestFunctionParams};
use crate::special::gamma;
use crate::transforms::{planar_rotation, CustomMap, SpaceTransform, TransformKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub d: usize,
    pub half_width: f64,
    pub n: usize,
    pub dt: f64,
    pub t_max: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.d == 1 || self.d == 2) {
            return Err(Error::config(
                "grid.d",
                format!("must be 1 or 2, got {}", self.d),
            ));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::config("grid.half_width", "must be positive"));
        }
        if self.n < 4 || !self.n.is_power_of_two() {
            return Err(Error::config(
                "grid.n",
                format!("must be a power of two >= 4, got {}", self.n),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("grid.dt", "must be positive"));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::config("grid.t_max", "must be positive"));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn points(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Coordinates of flat index `j` (axis 0 varies slowest).
    pub fn coords(&self, j: usize) -> Vec<f64> {
        let h = self.h();
        let mut out = vec![0.0; self.d];
        let mut rem = j;
        for a in (0..self.d).rev() {
            out[a] = -self.half_width + (rem % self.n) as f64 * h;
            rem /= self.n;
        }
        out
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Scalar,
    Damped,
    System,
}

/// Physics parameters; each problem requires its own subset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsBlock {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub theta: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
}

fn need(v: Option<f64>, field: &str, problem: ProblemKind) -> Result<f64> {
    v.ok_or_else(|| {
        Error::config(
            format!("physics.{field}"),
            format!("required for the {problem:?} problem"),
        )
    })
}

impl PhysicsBlock {
    pub fn resolve(&self, problem: ProblemKind, d: usize) -> Result<ExponentInputs> {
        let mut i = ExponentInputs {
            d: d as u32,
            ..Default::default()
        };
        match problem {
            ProblemKind::Scalar | ProblemKind::Damped => {
                i.alpha = need(self.alpha, "alpha", problem)?;
                i.delta = need(self.delta, "delta", problem)?;
                i.p = need(self.p, "p", problem)?;
                if problem == ProblemKind::Damped {
                    i.beta = need(self.beta, "beta", problem)?;
                    i.validate_damped()?;
                } else {
                    i.validate_scalar()?;
                }
            }
            ProblemKind::System => {
                i.gamma = need(self.gamma, "gamma", problem)?;
                i.theta = need(self.theta, "theta", problem)?;
                i.mu = need(self.mu, "mu", problem)?;
                i.sigma = need(self.sigma, "sigma", problem)?;
                i.p = need(self.p, "p", problem)?;
                i.q = need(self.q, "q", problem)?;
                i.validate_system()?;
            }
        }
        Ok(i)
    }
}

/// Transform as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TransformSpec {
    Identity,
    Dilation {
        k: f64,
    },
    Rotation {
        #[serde(default)]
        angle: Option<f64>,
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
    },
    Shift {
        x0: Vec<f64>,
    },
    Affine {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
}

impl TransformSpec {
    pub fn build(&self, d: usize) -> Result<SpaceTransform> {
        match self {
            TransformSpec::Identity => Ok(SpaceTransform::identity(d)),
            TransformSpec::Dilation { k } => SpaceTransform::dilation(d, *k),
            TransformSpec::Rotation { angle, matrix } => match (angle, matrix) {
                (_, Some(m)) => {
                    if m.len() != d {
                        return Err(Error::config("transform.matrix", "must be d x d"));
                    }
                    SpaceTransform::rotation(m.clone())
                }
                (Some(a), None) => SpaceTransform::rotation(planar_rotation(d, *a)),
                (None, None) => Err(Error::config(
                    "transform.angle",
                    "rotation needs `angle` or `matrix`",
                )),
            },
            TransformSpec::Shift { x0 } => {
                if x0.len() != d {
                    return Err(Error::config("transform.x0", "length must equal d"));
                }
                SpaceTransform::shift(x0.clone())
            }
            TransformSpec::Affine { matrix, offset } => {
                if offset.len() != d {
                    return Err(Error::config("transform.offset", "length must equal d"));
                }
                SpaceTransform::custom(d, CustomMap::affine(matrix.clone(), offset.clone())?)
            }
        }
    }
}

/// Gaussian initial data `A exp(-|x - c|²/w²)`, plus optional seeded noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub amplitude: f64,
    pub width: f64,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    /// Initial velocity amplitude (damped problem).
    #[serde(default)]
    pub u1_amplitude: Option<f64>,
    /// Second component amplitude (system).
    #[serde(default)]
    pub v0_amplitude: Option<f64>,
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_threshold() -> f64 {
    1e6
}

fn default_window() -> usize {
    3
}

impl Default for Detection {
    fn default() -> Self {
        Detection {
            threshold: default_threshold(),
            window: default_window(),
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub problem: ProblemKind,
    pub grid: GridSpec,
    pub physics: PhysicsBlock,
    /// `g`: argument map of the nonlinearity in the `u` equation.
    pub transform: TransformSpec,
    /// `f`: argument map in the `v` equation (system only; identity if absent).
    #[serde(default)]
    pub transform_f: Option<TransformSpec>,
    pub data: DataSpec,
    #[serde(default)]
    pub detection: Detection,
    #[serde(default = "yes")]
    pub nonlinear: bool,
    /// Drops the source of the `v` equation.
    #[serde(default)]
    pub decouple_v: bool,
    #[serde(default)]
    pub store_history: bool,
    #[serde(default)]
    pub seed: u64,
}

struct Spectral {
    n: usize,
    d: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    absxi: Vec<f64>,
}

fn wave_index(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

impl Spectral {
    fn new(g: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let k0 = PI / g.half_width;
        let n = g.n;
        let absxi = (0..g.points())
            .map(|j| {
                let mut s = 0.0;
                let mut rem = j;
                for _ in 0..g.d {
                    let k = wave_index(rem % n, n) * k0;
                    s += k * k;
                    rem /= n;
                }
                s.sqrt()
            })
            .collect();
        Spectral {
            n,
            d: g.d,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            absxi,
        }
    }

    fn apply(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        plan.process(buf);
        if self.d == 2 {
            transpose(buf, self.n);
            plan.process(buf);
            transpose(buf, self.n);
        }
    }

    fn forward(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.apply(&mut buf, &self.fwd);
        buf
    }

    fn inverse(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.apply(&mut buf, &self.inv);
        let scale = 1.0 / buf.len() as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }
}

enum Sample {
    Node(usize),
    Zero,
    Trig(Vec<Vec<Complex64>>),
    Linear(Vec<(usize, f64)>),
}

/// Precomputed evaluation of `u(g(x_j))` on the grid.
struct Sampler {
    samples: Vec<Sample>,
    needs_spectrum: bool,
}

impl Sampler {
    fn new(g: &GridSpec, t: &SpaceTransform) -> Self {
        let (n, l, h) = (g.n, g.half_width, g.h());
        let k0 = PI / l;
        let linear = matches!(t.kind, TransformKind::Custom(_));
        let samples: Vec<Sample> = (0..g.points())
            .map(|j| {
                let y = t.apply(&g.coords(j));
                if y.iter().any(|v| v.abs() > l * (1.0 + 1e-12)) {
                    return Sample::Zero;
                }
                let pos: Vec<f64> = y.iter().map(|v| (v + l) / h).collect();
                if pos.iter().all(|p| (p - p.round()).abs() < 1e-9) {
                    let idx = pos
                        .iter()
                        .fold(0, |acc, p| acc * n + (p.round() as usize) % n);
                    return Sample::Node(idx);
                }
                if linear {
                    let mut w = vec![(0usize, 1.0f64)];
                    for p in &pos {
                        let f = p.floor();
                        let frac = p - f;
                        let i0 = (f as usize) % n;
                        let i1 = (i0 + 1) % n;
                        w = w
                            .into_iter()
                            .flat_map(|(idx, wt)| {
                                [(idx * n + i0, wt * (1.0 - frac)), (idx * n + i1, wt * frac)]
                            })
                            .collect();
                    }
                    return Sample::Linear(w);
                }
                Sample::Trig(
                    y.iter()
                        .map(|v| {
                            (0..n)
                                .map(|k| {
                                    Complex64::from_polar(1.0, wave_index(k, n) * k0 * (v + l))
                                })
                                .collect()
                        })
                        .collect(),
                )
            })
            .collect();
        let needs_spectrum = samples.iter().any(|s| matches!(s, Sample::Trig(_)));
        Sampler {
            samples,
            needs_spectrum,
        }
    }

    fn eval(&self, u: &[f64], spectrum: Option<&[Complex64]>) -> Vec<f64> {
        let total = u.len() as f64;
        self.samples
            .iter()
            .map(|s| match s {
                Sample::Node(i) => u[*i],
                Sample::Zero => 0.0,
                Sample::Linear(w) => w.iter().map(|(i, wt)| u[*i] * wt).sum(),
                Sample::Trig(e) => {
                    let uh = spectrum.expect("spectrum computed for trig samples");
                    let acc = if e.len() == 1 {
                        uh.iter().zip(&e[0]).map(|(a, b)| a * b).sum::<Complex64>()
                    } else {
                        let n = e[0].len();
                        (0..n)
                            .map(|k0| {
                                let row: Complex64 = uh[k0 * n..(k0 + 1) * n]
                                    .iter()
                                    .zip(&e[1])
                                    .map(|(a, b)| a * b)
                                    .sum();
                                row * e[0][k0]
                            })
                            .sum()
                    };
                    acc.re / total
                }
            })
            .collect()
    }
}

/// `(k+1)^{1-a} - k^{1-a}`.
fn l1_weight(k: usize, a: f64) -> f64 {
    let k = k as f64;
    (k + 1.0).powf(1.0 - a) - k.powf(1.0 - a)
}

/// One first-order-in-time component `D^order w + (-Δ)^{lap/2} w = source`.
struct Component {
    order: f64,
    lap: f64,
    c: f64,
    hat: Vec<Complex64>,
    diffs: Vec<Vec<Complex64>>,
    u: Vec<f64>,
}

impl Component {
    fn new(order: f64, lap: f64, dt: f64, u0: Vec<f64>, spec: &Spectral) -> Self {
        Component {
            order,
            lap,
            c: dt.powf(-order) / gamma(2.0 - order),
            hat: spec.forward(&u0),
            diffs: Vec::new(),
            u: u0,
        }
    }

    fn memory(&self) -> Vec<Complex64> {
        let m = self.diffs.len();
        let mut acc = vec![Complex64::new(0.0, 0.0); self.hat.len()];
        if self.order < 1.0 {
            for k in 1..=m {
                let w = l1_weight(k, self.order);
                for (a, b) in acc.iter_mut().zip(&self.diffs[m - k]) {
                    *a += b * w;
                }
            }
        }
        acc
    }

    fn advance(&mut self, source: &[f64], spec: &Spectral) {
        let src = spec.forward(source);
        let mem = self.memory();
        let new: Vec<Complex64> = (0..self.hat.len())
            .map(|j| {
                let rhs = self.hat[j] - mem[j] + src[j] / self.c;
                rhs / (1.0 + spec.absxi[j].powf(self.lap) / self.c)
            })
            .collect();
        let diff: Vec<Complex64> = new.iter().zip(&self.hat).map(|(a, b)| a - b).collect();
        if self.order < 1.0 {
            self.diffs.push(diff);
        }
        self.hat = new;
        self.u = spec.inverse(self.hat.clone());
    }
}

/// `D^β w + D^α w + (-Δ)^{δ/2} w = source` with `β ∈ (1,2]`.
struct DampedComponent {
    alpha: f64,
    beta: f64,
    lap: f64,
    ca: f64,
    cb: f64,
    hat: Vec<Complex64>,
    prev_hat: Vec<Complex64>,
    first: Vec<Vec<Complex64>>,
    second: Vec<Vec<Complex64>>,
    u: Vec<f64>,
}

impl DampedComponent {
    fn new(
        alpha: f64,
        beta: f64,
        lap: f64,
        dt: f64,
        u0: Vec<f64>,
        u1: &[f64],
        spec: &Spectral,
    ) -> Self {
        let ghost: Vec<f64> = u0.iter().zip(u1).map(|(a, b)| a - dt * b).collect();
        DampedComponent {
            alpha,
            beta,
            lap,
            ca: dt.powf(-alpha) / gamma(2.0 - alpha),
            cb: dt.powf(-beta) / gamma(3.0 - beta),
            hat: spec.forward(&u0),
            prev_hat: spec.forward(&ghost),
            first: Vec::new(),
            second: Vec::new(),
            u: u0,
        }
    }

    fn advance(&mut self, source: &[f64], spec: &Spectral) {
        let src = spec.forward(source);
        let m = self.first.len();
        let zero = Complex64::new(0.0, 0.0);
        let mut mem = vec![zero; self.hat.len()];
        for k in 1..=m {
            let wa = if self.alpha < 1.0 {
                l1_weight(k, self.alpha) * self.ca
            } else {
                0.0
            };
            let wb = if self.beta < 2.0 {
                l1_weight(k, self.beta - 1.0) * self.cb
            } else {
                0.0
            };
            if wa == 0.0 && wb == 0.0 {
                continue;
            }
            for j in 0..mem.len() {
                mem[j] += self.first[m - k][j] * wa + self.second[m - k][j] * wb;
            }
        }
        let new: Vec<Complex64> = (0..self.hat.len())
            .map(|j| {
                let (u1, u2) = (self.hat[j], self.prev_hat[j]);
                let rhs = (u1 * 2.0 - u2) * self.cb + u1 * self.ca - mem[j] + src[j];
                rhs / (self.cb + self.ca + spec.absxi[j].powf(self.lap))
            })
            .collect();
        let d1: Vec<Complex64> = new.iter().zip(&self.hat).map(|(a, b)| a - b).collect();
        let d2: Vec<Complex64> = (0..new.len())
            .map(|j| new[j] - self.hat[j] * 2.0 + self.prev_hat[j])
            .collect();
        self.first.push(d1);
        self.second.push(d2);
        self.prev_hat = std::mem::replace(&mut self.hat, new);
        self.u = spec.inverse(self.hat.clone());
    }
}

enum Stepper {
    Scalar(Component),
    Damped(DampedComponent),
    System(Component, Component),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub step: usize,
    pub t: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    /// Second component (system runs), zero otherwise.
    pub v_linf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    BlewUp { t_detect: f64 },
    ReachedHorizon,
    Diverged { step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub peak_norms: PeakNorms,
    pub steps: usize,
    pub extension_rule: String,
    pub warnings: Vec<String>,
}

/// A run in progress.
pub struct Solver {
    pub config: SimConfig,
    pub inputs: ExponentInputs,
    grid: GridSpec,
    spec: Spectral,
    sampler_g: Sampler,
    sampler_f: Option<Sampler>,
    stepper: Stepper,
    pub t: f64,
    pub step_count: usize,
    pub trace: Vec<NormRow>,
    pub history: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

fn gaussian(grid: &GridSpec, amp: f64, width: f64, center: &[f64]) -> Vec<f64> {
    (0..grid.points())
        .map(|j| {
            let x = grid.coords(j);
            let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
            amp * (-r2 / (width * width)).exp()
        })
        .collect()
}

fn norms(u: &[f64], grid: &GridSpec) -> (f64, f64, f64) {
    let vol = grid.h().powi(grid.d as i32);
    let l1 = u.iter().map(|v| v.abs()).sum::<f64>() * vol;
    let l2 = (u.iter().map(|v| v * v).sum::<f64>() * vol).sqrt();
    let linf = u.iter().fold(0.0f64, |m, v| {
        if v.is_finite() {
            m.max(v.abs())
        } else {
            f64::NAN
        }
    });
    (l1, l2, linf)
}

impl Solver {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.grid.validate()?;
        let grid = config.grid;
        let inputs = config.physics.resolve(config.problem, grid.d)?;
        if !(config.data.width > 0.0) {
            return Err(Error::config("data.width", "must be positive"));
        }
        if !config.data.amplitude.is_finite() {
            return Err(Error::config("data.amplitude", "must be finite"));
        }
        if !(config.detection.threshold > 0.0) || config.detection.window == 0 {
            return Err(Error::config(
                "detection",
                "threshold must be positive and window at least 1",
            ));
        }
        let center = config
            .data
            .center
            .clone()
            .unwrap_or_else(|| vec![0.0; grid.d]);
        if center.len() != grid.d {
            return Err(Error::config("data.center", "length must equal grid.d"));
        }
        let g = config
            .transform
            .build(grid.d)
            .map_err(|e| Error::config("transform", e.to_string()))?;
        let spec = Spectral::new(&grid);
        let mut u0 = gaussian(&grid, config.data.amplitude, config.data.width, &center);
        if config.data.noise != 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            for (v, base) in u0
                .iter_mut()
                .zip(gaussian(&grid, 1.0, config.data.width, &center))
            {
                *v += config.data.noise * base * rng.gen_range(-1.0..1.0);
            }
        }
        let (stepper, sampler_f) = match config.problem {
            ProblemKind::Scalar => (
                Stepper::Scalar(Component::new(
                    inputs.alpha,
                    inputs.delta,
                    grid.dt,
                    u0,
                    &spec,
                )),
                None,
            ),
            ProblemKind::Damped => {
                let a1 = config.data.u1_amplitude.ok_or_else(|| {
                    Error::config("data.u1_amplitude", "required for the damped problem")
                })?;
                let u1 = gaussian(&grid, a1, config.data.width, &center);
                (
                    Stepper::Damped(DampedComponent::new(
                        inputs.alpha,
                        inputs.beta,
                        inputs.delta,
                        grid.dt,
                        u0,
                        &u1,
                        &spec,
                    )),
                    None,
                )
            }
            ProblemKind::System => {
                let av = config.data.v0_amplitude.ok_or_else(|| {
                    Error::config("data.v0_amplitude", "required for the system problem")
                })?;
                let v0 = gaussian(&grid, av, config.data.width, &center);
                let f = match &config.transform_f {
                    Some(s) => s
                        .build(grid.d)
                        .map_err(|e| Error::config("transform_f", e.to_string()))?,
                    None => SpaceTransform::identity(grid.d),
                };
                (
                    Stepper::System(
                        Component::new(inputs.gamma, inputs.mu, grid.dt, u0, &spec),
                        Component::new(inputs.theta, inputs.sigma, grid.dt, v0, &spec),
                    ),
                    Some(Sampler::new(&grid, &f)),
                )
            }
        };
        let mut s = Solver {
            config: config.clone(),
            inputs,
            grid,
            sampler_g: Sampler::new(&grid, &g),
            sampler_f,
            spec,
            stepper,
            t: 0.0,
            step_count: 0,
            trace: Vec::new(),
            history: Vec::new(),
            warnings: Vec::new(),
        };
        s.record();
        Ok(s)
    }

    pub fn u(&self) -> &[f64] {
        match &self.stepper {
            Stepper::Scalar(c) | Stepper::System(c, _) => &c.u,
            Stepper::Damped(c) => &c.u,
        }
    }

    pub fn v(&self) -> Option<&[f64]> {
        match &self.stepper {
            Stepper::System(_, c) => Some(&c.u),
            _ => None,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn record(&mut self) {
        let (l1, l2, linf) = norms(self.u(), &self.grid);
        let v_linf = self.v().map(|v| norms(v, &self.grid).2).unwrap_or(0.0);
        self.trace.push(NormRow {
            step: self.step_count,
            t: self.t,
            l1,
            l2,
            linf,
            v_linf,
        });
        if self.config.store_history {
            self.history.push(self.u().to_vec());
        }
    }

    fn source(&self, sampler: &Sampler, w: &[f64], hat: &[Complex64], power: f64) -> Vec<f64> {
        if !self.config.nonlinear {
            return vec![0.0; w.len()];
        }
        let spectrum = sampler.needs_spectrum.then_some(hat);
        sampler
            .eval(w, spectrum)
            .iter()
            .map(|v| v.abs().powf(power))
            .collect()
    }

    fn stability_check(&mut self, linf: f64, power: f64) {
        let dt = self.grid.dt;
        if dt * power * linf.powf(power - 1.0) > 1.0 && self.warnings.len() < 8 {
            self.warnings.push(format!(
                "explicit source stiffness dt*p*|u|^(p-1) exceeds 1 at t = {:.6}",
                self.t
            ));
        }
    }

    /// Advances one time step and records norms.
    pub fn step(&mut self) {
        let p = self.inputs.p;
        let spec = &self.spec;
        match &self.stepper {
            Stepper::Scalar(c) => {
                let src = self.source(&self.sampler_g, &c.u, &c.hat, p);
                let linf = c.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if let Stepper::Scalar(c) = &mut self.stepper {
                    c.advance(&src, spec);
                }
                self.stability_check(linf, p);
            }
            Stepper::Damped(c) => {
                let src = self.source(&self.sampler_g, &c.u, &c.hat, p);
                if let Stepper::Damped(c) = &mut self.stepper {
                    c.advance(&src, spec);
                }
            }
            Stepper::System(cu, cv) => {
                let su = self.source(&self.sampler_g, &cv.u, &cv.hat, p);
                let sampler_f = self.sampler_f.as_ref().expect("system sampler");
                let sv = if self.config.decouple_v {
                    vec![0.0; cu.u.len()]
                } else {
                    self.source(sampler_f, &cu.u, &cu.hat, self.inputs.q)
                };
                if let Stepper::System(cu, cv) = &mut self.stepper {
                    cu.advance(&su, spec);
                    cv.advance(&sv, spec);
                }
            }
        }
        self.step_count += 1;
        self.t = self.step_count as f64 * self.grid.dt;
        self.record();
    }
}

/// Whether the trace shows blow-up at index `i`.
fn blowup_at(linf: &[f64], i: usize, threshold: f64, window: usize) -> bool {
    i >= window && linf[i] > threshold && (i + 1 - window..=i).all(|j| linf[j] > linf[j - 1])
}

/// Classifies a norm trace: any non-finite value is divergence, otherwise
/// blow-up requires crossing `threshold` after `window` consecutive increases.
pub fn detect_blowup(linf: &[f64], times: &[f64], threshold: f64, window: usize) -> RunStatus {
    for (i, v) in linf.iter().enumerate() {
        if !v.is_finite() {
            return RunStatus::Diverged { step: i };
        }
        if blowup_at(linf, i, threshold, window) {
            return RunStatus::BlewUp { t_detect: times[i] };
        }
    }
    RunStatus::ReachedHorizon
}

pub struct RunResult {
    pub outcome: RunOutcome,
    pub trace: Vec<NormRow>,
    pub history: Vec<Vec<f64>>,
    pub config: SimConfig,
    pub inputs: ExponentInputs,
}

fn combined_linf(r: &NormRow) -> f64 {
    if r.linf.is_finite() && r.v_linf.is_finite() {
        r.linf.max(r.v_linf)
    } else {
        f64::NAN
    }
}

/// Runs to the horizon, stopping early on blow-up or divergence.
pub fn run(config: &SimConfig) -> Result<RunResult> {
    let mut s = Solver::new(config)?;
    let steps = s.grid.steps();
    let det = config.detection;
    let mut linf = vec![combined_linf(&s.trace[0])];
    let mut status = RunStatus::ReachedHorizon;
    for _ in 0..steps {
        s.step();
        let last = combined_linf(s.trace.last().expect("trace"));
        linf.push(last);
        let i = linf.len() - 1;
        if !last.is_finite() {
            status = RunStatus::Diverged { step: s.step_count };
            break;
        }
        if blowup_at(&linf, i, det.threshold, det.window) {
            status = RunStatus::BlewUp { t_detect: s.t };
            break;
        }
    }
    let peak = s.trace.iter().fold(
        PeakNorms {
            l1: 0.0,
            l2: 0.0,
            linf: 0.0,
        },
        |m, r| PeakNorms {
            l1: m.l1.max(r.l1),
            l2: m.l2.max(r.l2),
            linf: m.linf.max(combined_linf(r)),
        },
    );
    let outcome = RunOutcome {
        status,
        peak_norms: peak,
        steps: s.step_count,
        extension_rule: "u(g(x)) is evaluated by trigonometric interpolation (linear for affine maps) and extended by zero outside the box".into(),
        warnings: s.warnings.clone(),
    };
    Ok(RunResult {
        outcome,
        trace: s.trace,
        history: s.history,
        config: s.config,
        inputs: s.inputs,
    })
}

/// Writes the norm trace as CSV.
pub fn write_trace<W: std::io::Write>(trace: &[NormRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for row in trace {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Relative defect of the weak formulation of the scalar problem for the
/// test function `Φ_R(x) φ(t)`, with time integrals by the trapezoid rule on
/// the stored levels `t_n ≤ T`.
pub fn weak_residual(
    result: &RunResult,
    weight: &WeightParams,
    test: &TestFunctionParams,
) -> Result<f64> {
    if result.config.problem != ProblemKind::Scalar {
        return Err(Error::param(
            "problem",
            "the weak residual is implemented for the scalar problem",
        ));
    }
    if matches!(result.outcome.status, RunStatus::Diverged { .. }) {
        return Err(Error::param("run", "diverged runs have no weak residual"));
    }
    if result.history.is_empty() {
        return Err(Error::param(
            "store_history",
            "the run must store its history",
        ));
    }
    let grid = result.config.grid;
    if weight.d != grid.d {
        return Err(Error::param("weight.d", "must equal the grid dimension"));
    }
    let horizon = test.horizon;
    let dt = grid.dt;
    let last_t = (result.history.len() - 1) as f64 * dt;
    if horizon > last_t * (1.0 + 1e-12) {
        return Err(Error::param(
            "T",
            format!("horizon {horizon} exceeds the stored run length {last_t}"),
        ));
    }
    let (alpha, delta, p) = (result.inputs.alpha, result.inputs.delta, result.inputs.p);
    let spec = Spectral::new(&grid);
    let g = result.config.transform.build(grid.d)?;
    let sampler = Sampler::new(&grid, &g);
    let vol = grid.h().powi(grid.d as i32);
    let phi_x: Vec<f64> = (0..grid.points())
        .map(|j| weight_value(weight, &grid.coords(j)))
        .collect();
    let dot = |a: &[f64]| a.iter().zip(&phi_x).map(|(x, y)| x * y).sum::<f64>() * vol;

    let levels = ((horizon / dt) + 1e-9).floor() as usize;
    let (mut nonlinear, mut mem, mut lap) = (0.0, 0.0, 0.0);
    for (n, u) in result.history.iter().enumerate().take(levels + 1) {
        let t = n as f64 * dt;
        let w = if n == 0 || n == levels { 0.5 * dt } else { dt };
        let phi_t = test.eval(t);
        let dphi = if t < horizon {
            rl_right_derivative_closed(test, alpha, t)?
        } else {
            0.0
        };
        let hat = spec.forward(u);
        if result.config.nonlinear {
            let src: Vec<f64> = sampler
                .eval(u, sampler.needs_spectrum.then_some(&hat[..]))
                .iter()
                .map(|v| v.abs().powf(p))
                .collect();
            nonlinear += w * phi_t * dot(&src);
        }
        let lap_u = spec.inverse(
            hat.iter()
                .zip(&spec.absxi)
                .map(|(c, k)| c * k.powf(delta))
                .collect(),
        );
        lap += w * phi_t * dot(&lap_u);
        mem += w * dphi * dot(u);
    }
    let (c, e) = mean_time_integral(test, alpha)?;
    let data = dot(&result.history[0]) * c * horizon.powf(e);
    let lhs = nonlinear + data;
    let rhs = mem + lap;
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((lhs - rhs).abs() / scale)
}
