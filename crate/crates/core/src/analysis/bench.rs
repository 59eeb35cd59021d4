//! Wall-clock comparison of operator inference against the marching solver.

use std::hint::black_box;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{ReactionProfile, UniformGrid1D};
use crate::kernel::solve_kernel_fd;
use crate::operator::DeepOperatorModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub grid_list: Vec<usize>,
    /// Timed calls per sample, averaged; hides timer granularity.
    pub calls_per_sample: usize,
    /// Untimed calls per sample before timing.
    pub warmup_calls: usize,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            grid_list: vec![51, 101, 201],
            calls_per_sample: 5,
            warmup_calls: 2,
            repetitions: 3,
        }
    }
}

/// Timings at one grid size. Times are seconds per kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub n_points: usize,
    /// Median over repetitions of the median over samples.
    pub fd_median_s: f64,
    pub predict_median_s: f64,
    /// `predict_with_basis` with the trunk basis built once beforehand.
    pub cached_median_s: f64,
    /// `fd_median_s / predict_median_s`.
    pub speedup: f64,
    pub cached_speedup: f64,
    /// Coefficient of variation of the per-repetition medians.
    pub fd_cv: f64,
    pub predict_cv: f64,
    pub cached_cv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_lambdas: usize,
    pub config: BenchConfig,
    pub entries: Vec<BenchEntry>,
    /// Least-squares slope of `ln time` against `ln N`; `None` for one grid.
    pub fd_exponent: Option<f64>,
    pub predict_exponent: Option<f64>,
    pub cached_exponent: Option<f64>,
}

impl BenchReport {
    pub fn entry(&self, n_points: usize) -> Option<&BenchEntry> {
        self.entries.iter().find(|e| e.n_points == n_points)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "n_points",
            "fd_median_s",
            "predict_median_s",
            "cached_median_s",
            "speedup",
            "cached_speedup",
            "fd_cv",
            "predict_cv",
            "cached_cv",
        ])?;
        for e in &self.entries {
            wr.write_record([
                e.n_points.to_string(),
                e.fd_median_s.to_string(),
                e.predict_median_s.to_string(),
                e.cached_median_s.to_string(),
                e.speedup.to_string(),
                e.cached_speedup.to_string(),
                e.fd_cv.to_string(),
                e.predict_cv.to_string(),
                e.cached_cv.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// `bench.json` and `bench.csv` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("bench.json"), serde_json::to_string_pretty(self)? + "\n")?;
        self.write_csv(std::fs::File::create(dir.join("bench.csv"))?)
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn coefficient_of_variation(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if n < 2.0 || mean == 0.0 {
        return 0.0;
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    var.sqrt() / mean
}

pub(crate) fn loglog_slope(ns: &[usize], ts: &[f64]) -> Option<f64> {
    if ns.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Mean seconds per call of `f` after `warmup` untimed calls.
fn time_per_call<T>(warmup: usize, calls: usize, mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    for _ in 0..warmup {
        black_box(f()?);
    }
    let start = Instant::now();
    for _ in 0..calls {
        black_box(f()?);
    }
    Ok(start.elapsed().as_secs_f64() / calls as f64)
}

/// Median per-kernel times of the marching solver, full operator inference
/// and cached-basis inference, on the calling thread.
pub fn speedup_benchmark(
    model: &DeepOperatorModel,
    lambdas: &[ReactionProfile],
    config: &BenchConfig,
) -> Result<BenchReport> {
    if lambdas.len() < 20 {
        return Err(invalid("benchmark needs at least 20 reaction profiles"));
    }
    if config.grid_list.is_empty() || config.calls_per_sample == 0 || config.repetitions == 0 {
        return Err(invalid("benchmark needs grids, calls and repetitions"));
    }
    let mut entries = Vec::with_capacity(config.grid_list.len());
    for &n in &config.grid_list {
        let grid = UniformGrid1D::new(n)?;
        let lams = lambdas
            .iter()
            .map(|l| l.resample(grid))
            .collect::<Result<Vec<_>>>()?;
        let basis = model.trunk_basis(n)?;
        let (mut fd_reps, mut pr_reps, mut ca_reps) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..config.repetitions {
            let (mut fd, mut pr, mut ca) = (Vec::new(), Vec::new(), Vec::new());
            for lam in &lams {
                let (w, c) = (config.warmup_calls, config.calls_per_sample);
                fd.push(time_per_call(w, c, || solve_kernel_fd(lam, n))?);
                pr.push(time_per_call(w, c, || model.predict_kernel(lam, n))?);
                ca.push(time_per_call(w, c, || model.predict_with_basis(&basis, lam))?);
            }
            fd_reps.push(median(&mut fd));
            pr_reps.push(median(&mut pr));
            ca_reps.push(median(&mut ca));
        }
        let (fd_cv, predict_cv, cached_cv) = (
            coefficient_of_variation(&fd_reps),
            coefficient_of_variation(&pr_reps),
            coefficient_of_variation(&ca_reps),
        );
        let fd_median_s = median(&mut fd_reps);
        let predict_median_s = median(&mut pr_reps);
        let cached_median_s = median(&mut ca_reps);
        entries.push(BenchEntry {
            n_points: n,
            fd_median_s,
            predict_median_s,
            cached_median_s,
            speedup: fd_median_s / predict_median_s,
            cached_speedup: fd_median_s / cached_median_s,
            fd_cv,
            predict_cv,
            cached_cv,
        });
    }
    let ns: Vec<usize> = entries.iter().map(|e| e.n_points).collect();
    let col = |f: fn(&BenchEntry) -> f64| entries.iter().map(f).collect::<Vec<_>>();
    Ok(BenchReport {
        n_lambdas: lambdas.len(),
        config: config.clone(),
        fd_exponent: loglog_slope(&ns, &col(|e| e.fd_median_s)),
        predict_exponent: loglog_slope(&ns, &col(|e| e.predict_median_s)),
        cached_exponent: loglog_slope(&ns, &col(|e| e.cached_median_s)),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{Activation, OperatorArchitecture};

    #[test]
    fn slope_of_power_law() {
        let ns = [10, 20, 40];
        let ts: Vec<f64> = ns.iter().map(|&n| 3e-6 * (n as f64).powi(2)).collect();
        assert!((loglog_slope(&ns, &ts).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&[10], &[1.0]), None);
    }

    #[test]
    fn statistics() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(coefficient_of_variation(&[2.0, 2.0, 2.0]), 0.0);
        assert!((coefficient_of_variation(&[1.0, 3.0]) - 2f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn small_benchmark_runs() {
        let arch = OperatorArchitecture {
            sensors: 11,
            branch_hidden: vec![8],
            trunk_hidden: vec![8],
            basis: 4,
            activation: Activation::Tanh,
        };
        let model = DeepOperatorModel::new(arch, 0.02, 3).unwrap();
        let g = UniformGrid1D::new(21).unwrap();
        let lams: Vec<_> = (0..20)
            .map(|i| ReactionProfile::chebyshev(g, 50.0, 4.0 + i as f64 * 0.25).unwrap())
            .collect();
        let cfg = BenchConfig {
            grid_list: vec![11, 21],
            calls_per_sample: 1,
            warmup_calls: 0,
            repetitions: 2,
        };
        let r = speedup_benchmark(&model, &lams, &cfg).unwrap();
        assert_eq!(r.entries.len(), 2);
        assert!(r.entry(21).unwrap().fd_median_s > 0.0);
        assert!(r.fd_exponent.unwrap().is_finite());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
        assert!(speedup_benchmark(&model, &lams[..5], &cfg).is_err());
    }
}
