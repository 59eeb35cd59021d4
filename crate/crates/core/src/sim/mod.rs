//! Time-domain simulation of the plant
//!
//! ```text
//! u_t = u_xx + lambda(x) u,   u(0, t) = 0,   u(1, t) = U(t)
//! ```
//!
//! in open loop, under full-state feedback, with the flux-injection observer
//! and with observer-based output feedback.
//!
//! Space is discretized with second-order central differences on a uniform
//! grid; time with Crank-Nicolson or backward Euler. The boundary value at
//! the new time level enters through the last row of the tridiagonal system.
//! Feedback and observer injection are evaluated from the states at the start
//! of each step.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{l2_norm_values, trapezoid, KernelField, PdeState, ReactionProfile, UniformGrid1D};
use crate::kernel::volterra_apply;

mod tridiag;
pub use tridiag::TridiagonalLu;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStepper {
    BackwardEuler,
    #[default]
    CrankNicolson,
}

impl TimeStepper {
    /// Implicit weight of the step.
    fn theta(self) -> f64 {
        match self {
            TimeStepper::BackwardEuler => 1.0,
            TimeStepper::CrankNicolson => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum InitialCondition {
    /// `value` on `(0, 1]`, zero at `x = 0`.
    Constant { value: f64 },
    /// `sin(pi x)`.
    Sine,
    /// Nodal values; the first must be zero.
    Values { values: Vec<f64> },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Constant { value: 10.0 }
    }
}

impl InitialCondition {
    pub fn state(&self, grid: UniformGrid1D) -> Result<PdeState> {
        let u = match self {
            InitialCondition::Constant { value } => {
                let mut u = vec![*value; grid.n_points()];
                u[0] = 0.0;
                u
            }
            InitialCondition::Sine => grid
                .nodes()
                .into_iter()
                .map(|x| (std::f64::consts::PI * x).sin())
                .collect(),
            InitialCondition::Values { values } => values.clone(),
        };
        let state = PdeState::new(grid, u, 0.0)?;
        if state.u[0] != 0.0 {
            return Err(invalid("initial condition must vanish at x = 0"));
        }
        Ok(state)
    }
}

/// `amplitude sin(2 pi frequency t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Open-loop boundary input `U(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Signal {
    Zero,
    Constant { value: f64 },
    Sinusoids { terms: Vec<Sinusoid> },
}

impl Signal {
    /// `7 sin(16 pi t) + 10 cos(2 pi t)`.
    pub fn observer_demo() -> Self {
        Signal::Sinusoids {
            terms: vec![
                Sinusoid {
                    amplitude: 7.0,
                    frequency: 8.0,
                    phase: 0.0,
                },
                Sinusoid {
                    amplitude: 10.0,
                    frequency: 1.0,
                    phase: std::f64::consts::FRAC_PI_2,
                },
            ],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Constant { value } => *value,
            Signal::Sinusoids { terms } => terms
                .iter()
                .map(|s| s.amplitude * (2.0 * std::f64::consts::PI * s.frequency * t + s.phase).sin())
                .sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum BoundaryInput {
    Zero,
    /// `U = int_0^1 gain(y) u(y) dy` with the gain supplied by the caller.
    Feedback,
    Signal { signal: Signal },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub n_points: usize,
    pub dt: f64,
    pub t_final: f64,
    pub stepper: TimeStepper,
    pub initial_condition: InitialCondition,
    /// Open-loop input; ignored by the feedback runs.
    pub boundary: BoundaryInput,
    /// Trace rows every `record_stride` steps (the final step is always kept).
    pub record_stride: usize,
    /// State snapshots every `snapshot_stride` steps; `None` keeps none.
    pub snapshot_stride: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_points: 101,
            dt: 1e-4,
            t_final: 1.0,
            stepper: TimeStepper::CrankNicolson,
            initial_condition: InitialCondition::default(),
            boundary: BoundaryInput::Zero,
            record_stride: 1,
            snapshot_stride: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        UniformGrid1D::new(self.n_points)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt must be positive"));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return Err(invalid("t_final must be at least dt"));
        }
        if self.record_stride == 0 || self.snapshot_stride == Some(0) {
            return Err(invalid("strides must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<UniformGrid1D> {
        UniformGrid1D::new(self.n_points)
    }

    /// Steps to reach `t_final`, rounding to the nearest whole step.
    pub fn n_steps(&self) -> usize {
        ((self.t_final / self.dt).round() as usize).max(1)
    }
}

/// Sampled output of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    /// `||u(t)||` of the plant.
    pub l2_norms: Vec<f64>,
    /// Boundary value `U` applied from each sample time on.
    pub control: Vec<f64>,
    /// `||u(t) - u_hat(t)||` for runs with an observer.
    pub err_norms: Option<Vec<f64>>,
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    /// Observer snapshots at `snapshot_times` for runs with an observer.
    pub estimate_snapshots: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
    pub final_estimate: Option<Vec<f64>>,
}

impl SimulationTrace {
    fn new(observer: bool) -> Self {
        Self {
            times: Vec::new(),
            l2_norms: Vec::new(),
            control: Vec::new(),
            err_norms: observer.then(Vec::new),
            snapshot_times: Vec::new(),
            snapshots: Vec::new(),
            estimate_snapshots: Vec::new(),
            final_state: Vec::new(),
            final_estimate: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `t,l2_norm,control[,err_norm]`, one row per sample.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t", "l2_norm", "control"];
        if self.err_norms.is_some() {
            header.push("err_norm");
        }
        w.write_record(&header)?;
        for i in 0..self.times.len() {
            let mut row = vec![
                self.times[i].to_string(),
                self.l2_norms[i].to_string(),
                self.control[i].to_string(),
            ];
            if let Some(e) = &self.err_norms {
                row.push(e[i].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Plant snapshots; rows are sample times, columns grid nodes, with `t`
    /// in the first column.
    pub fn write_snapshots_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix_csv(&self.snapshot_times, &self.snapshots, out)
    }

    /// Observer snapshots in the layout of [`SimulationTrace::write_snapshots_csv`].
    pub fn write_estimate_snapshots_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix_csv(&self.snapshot_times, &self.estimate_snapshots, out)
    }
}

fn write_matrix_csv<W: Write>(times: &[f64], rows: &[Vec<f64>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = rows.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("u{i}")));
    w.write_record(&header)?;
    for (t, row) in times.iter().zip(rows) {
        w.write_record(std::iter::once(t.to_string()).chain(row.iter().map(f64::to_string)))?;
    }
    w.flush()?;
    Ok(())
}

/// Factored implicit step for one `(lambda, dt, stepper)` triple.
#[derive(Debug, Clone)]
pub struct PlantStepper {
    lam: Vec<f64>,
    h: f64,
    dt: f64,
    theta: f64,
    lu: TridiagonalLu,
}

impl PlantStepper {
    pub fn new(lambda: &ReactionProfile, dt: f64, stepper: TimeStepper) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt must be positive"));
        }
        let grid = lambda.grid();
        let n = grid.n_points();
        let h = grid.spacing();
        let theta = stepper.theta();
        let r = theta * dt / (h * h);
        let lam = lambda.values().to_vec();
        let m = n - 2;
        let lower = vec![-r; m];
        let upper = vec![-r; m];
        let diag: Vec<f64> = (1..n - 1).map(|i| 1.0 + 2.0 * r - theta * dt * lam[i]).collect();
        Ok(Self {
            lu: TridiagonalLu::factor(&lower, &diag, &upper),
            lam,
            h,
            dt,
            theta,
        })
    }

    /// Advance `u` by one step with `u(1) = boundary` at the new level and an
    /// explicit interior source.
    pub fn step(&self, u: &[f64], boundary: f64, source: Option<&[f64]>) -> Vec<f64> {
        let n = u.len();
        let inv_h2 = 1.0 / (self.h * self.h);
        let ex = (1.0 - self.theta) * self.dt;
        let r = self.theta * self.dt * inv_h2;
        let mut rhs: Vec<f64> = (1..n - 1)
            .map(|i| {
                let lu = (u[i - 1] - 2.0 * u[i] + u[i + 1]) * inv_h2 + self.lam[i] * u[i];
                u[i] + ex * lu
            })
            .collect();
        if let Some(s) = source {
            for (v, si) in rhs.iter_mut().zip(&s[1..n - 1]) {
                *v += self.dt * si;
            }
        }
        rhs[n - 3] += r * boundary;
        self.lu.solve_in_place(&mut rhs);
        let mut out = Vec::with_capacity(n);
        out.push(0.0);
        out.extend(rhs);
        out.push(boundary);
        out
    }
}

/// One implicit step with Dirichlet data `u(0) = 0`, `u(1) = u_now`.
pub fn step_plant(
    state: &PdeState,
    lambda: &ReactionProfile,
    u_now: f64,
    dt: f64,
    stepper: TimeStepper,
) -> Result<PdeState> {
    state.grid.check_same(&lambda.grid())?;
    let s = PlantStepper::new(lambda, dt, stepper)?;
    PdeState::new(state.grid, s.step(&state.u, u_now, None), state.t + dt)
}

/// `int_0^1 gain(y) u(y) dy` by the trapezoid rule.
pub fn full_state_control(gain_row: &[f64], state: &PdeState) -> Result<f64> {
    if gain_row.len() != state.u.len() {
        return Err(Error::GridMismatch(gain_row.len(), state.u.len()));
    }
    let prod: Vec<f64> = gain_row.iter().zip(&state.u).map(|(a, b)| a * b).collect();
    trapezoid(&prod, state.grid.spacing())
}

/// `u_x(1)` by the one-sided second-order stencil.
pub fn boundary_flux(u: &[f64], h: f64) -> f64 {
    let n = u.len();
    (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h)
}

/// `w(x) = u(x) - int_0^x k(x, y) u(y) dy`.
pub fn backstepping_transform(u: &PdeState, k: &KernelField) -> Result<PdeState> {
    u.grid.check_same(&k.grid())?;
    PdeState::new(u.grid, volterra_apply(k, &u.u, -1.0), u.t)
}

fn dot_trapezoid(gain: &[f64], u: &[f64], h: f64) -> f64 {
    let n = u.len();
    let inner: f64 = gain[1..n - 1].iter().zip(&u[1..n - 1]).map(|(a, b)| a * b).sum();
    h * (inner + 0.5 * (gain[0] * u[0] + gain[n - 1] * u[n - 1]))
}

fn flux_injection(gain: &[f64], u: &[f64], u_hat: &[f64], h: f64) -> Vec<f64> {
    let mismatch = boundary_flux(u, h) - boundary_flux(u_hat, h);
    gain.iter().map(|g| g * mismatch).collect()
}

enum Control<'a> {
    Open(&'a Signal),
    StateFeedback(&'a [f64]),
    /// Observer driven by an open-loop signal.
    Observer(&'a [f64], &'a Signal),
    /// Observer whose estimate drives the feedback.
    OutputFeedback(&'a [f64]),
}

fn run(
    lambda: &ReactionProfile,
    config: &SimulationConfig,
    control: Control,
    estimate_ic: Option<&PdeState>,
) -> Result<SimulationTrace> {
    config.validate()?;
    let grid = config.grid()?;
    grid.check_same(&lambda.grid())?;
    let h = grid.spacing();
    let stepper = PlantStepper::new(lambda, config.dt, config.stepper)?;
    let mut u = config.initial_condition.state(grid)?.u;
    let mut u_hat = estimate_ic.map(|s| s.u.clone());
    let observer = u_hat.is_some();
    let mut trace = SimulationTrace::new(observer);
    let n_steps = config.n_steps();

    let control_at = |step: usize, u: &[f64], u_hat: Option<&Vec<f64>>| -> f64 {
        let t = step as f64 * config.dt;
        match control {
            Control::Open(s) | Control::Observer(_, s) => s.eval(t),
            Control::StateFeedback(g) => dot_trapezoid(g, u, h),
            Control::OutputFeedback(g) => dot_trapezoid(g, u_hat.expect("estimate"), h),
        }
    };

    for step in 0..=n_steps {
        let t = step as f64 * config.dt;
        let u_now = control_at(step, &u, u_hat.as_ref());
        if step % config.record_stride == 0 || step == n_steps {
            trace.times.push(t);
            trace.l2_norms.push(l2_norm_values(&u, h));
            trace.control.push(u_now);
            if let (Some(e), Some(uh)) = (trace.err_norms.as_mut(), u_hat.as_ref()) {
                let diff: Vec<f64> = u.iter().zip(uh).map(|(a, b)| a - b).collect();
                e.push(l2_norm_values(&diff, h));
            }
        }
        if let Some(s) = config.snapshot_stride {
            if step % s == 0 || step == n_steps {
                trace.snapshot_times.push(t);
                trace.snapshots.push(u.clone());
                if let Some(uh) = &u_hat {
                    trace.estimate_snapshots.push(uh.clone());
                }
            }
        }
        if step == n_steps {
            break;
        }
        // boundary value at the new level: signals are sampled there, feedback
        // laws use the states at the start of the step
        let boundary = match control {
            Control::Open(s) | Control::Observer(_, s) => s.eval(t + config.dt),
            _ => u_now,
        };
        let next_hat = match (&control, u_hat.as_ref()) {
            (Control::Observer(g, _) | Control::OutputFeedback(g), Some(uh)) => {
                let src = flux_injection(g, &u, uh, h);
                Some(stepper.step(uh, boundary, Some(&src)))
            }
            _ => None,
        };
        u = stepper.step(&u, boundary, None);
        u_hat = next_hat;
        if u.iter().any(|v| !v.is_finite()) || u_hat.as_ref().is_some_and(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(invalid(format!("simulation produced non-finite values at t = {t}")));
        }
    }
    trace.final_state = u;
    trace.final_estimate = u_hat;
    Ok(trace)
}

fn gain_row(k: &KernelField, lambda: &ReactionProfile) -> Result<Vec<f64>> {
    k.grid().check_same(&lambda.grid())?;
    Ok(k.gain_row().to_vec())
}

/// Open loop with `config.boundary` as the input.
pub fn simulate_open_loop(lambda: &ReactionProfile, config: &SimulationConfig) -> Result<SimulationTrace> {
    let zero = Signal::Zero;
    let signal = match &config.boundary {
        BoundaryInput::Zero => &zero,
        BoundaryInput::Signal { signal } => signal,
        BoundaryInput::Feedback => {
            return Err(invalid("feedback boundary needs a gain; use simulate_closed_loop"))
        }
    };
    run(lambda, config, Control::Open(signal), None)
}

/// Full-state feedback `U = int_0^1 k(1, y) u(y) dy`.
pub fn simulate_closed_loop(
    lambda: &ReactionProfile,
    k: &KernelField,
    config: &SimulationConfig,
) -> Result<SimulationTrace> {
    let g = gain_row(k, lambda)?;
    run(lambda, config, Control::StateFeedback(&g), None)
}

/// Plant driven by `signal` together with the observer
///
/// ```text
/// u_hat_t = u_hat_xx + lambda u_hat + k(1, x) [u_x(1) - u_hat_x(1)]
/// ```
///
/// started from `observer_ic`; `config.boundary` is ignored.
pub fn simulate_observer(
    lambda: &ReactionProfile,
    k: &KernelField,
    config: &SimulationConfig,
    observer_ic: &InitialCondition,
    signal: &Signal,
) -> Result<SimulationTrace> {
    let g = gain_row(k, lambda)?;
    let ic = observer_ic.state(config.grid()?)?;
    run(lambda, config, Control::Observer(&g, signal), Some(&ic))
}

/// Observer plus the feedback `U = int_0^1 k(1, x) u_hat(x) dx`.
pub fn simulate_output_feedback(
    lambda: &ReactionProfile,
    k: &KernelField,
    config: &SimulationConfig,
    observer_ic: &InitialCondition,
) -> Result<SimulationTrace> {
    let g = gain_row(k, lambda)?;
    let ic = observer_ic.state(config.grid()?)?;
    run(lambda, config, Control::OutputFeedback(&g), Some(&ic))
}

/// `max_t ||a(t) - b(t)|| / max_t ||b(t)||` over the snapshots of two runs
/// on one grid and time sampling.
pub fn trajectory_deviation(a: &[Vec<f64>], b: &[Vec<f64>], h: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(invalid("trajectory comparison needs matching, nonempty snapshot sets"));
    }
    let mut dev = 0.0_f64;
    let mut scale = 0.0_f64;
    for (x, y) in a.iter().zip(b) {
        if x.len() != y.len() {
            return Err(Error::GridMismatch(x.len(), y.len()));
        }
        let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
        dev = dev.max(l2_norm_values(&d, h));
        scale = scale.max(l2_norm_values(y, h));
    }
    Ok(if scale > 0.0 { dev / scale } else { dev })
}
