//! Reproducible `(lambda, k)` datasets.
//!
//! On disk a dataset is a directory with `manifest.json` and `data.bin`. The
//! blob holds, per sample in index order, `n` little-endian `f64` values of
//! `lambda` followed by the `n (n + 1) / 2` kernel values in row-major
//! triangle order. No header, no padding.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{KernelField, ReactionProfile, UniformGrid1D};
use crate::kernel::{kernel_residuals, solve_kernel, GoursatSolveOptions};
use crate::util::{derive_seed, f64s_to_le, le_to_f64s, sha256_hex};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaFamily {
    /// `c cos(gamma acos x)`
    #[default]
    Chebyshev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaFamilySpec {
    pub family: LambdaFamily,
    pub amplitude: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub seed: u64,
}

impl Default for LambdaFamilySpec {
    fn default() -> Self {
        Self::control()
    }
}

impl LambdaFamilySpec {
    /// Amplitude 50, used for the stabilization scenarios.
    pub fn control() -> Self {
        Self {
            family: LambdaFamily::Chebyshev,
            amplitude: 50.0,
            gamma_lo: 4.0,
            gamma_hi: 9.0,
            seed: 2023,
        }
    }

    /// Amplitude 20, used for the observer scenario.
    pub fn observer() -> Self {
        Self {
            amplitude: 20.0,
            ..Self::control()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_lo < self.gamma_hi) || !self.amplitude.is_finite() {
            return Err(invalid("family needs gamma_lo < gamma_hi and a finite amplitude"));
        }
        Ok(())
    }

    /// `gamma` of sample `index`, drawn from its own stream.
    pub fn gamma(&self, index: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, index as u64));
        rng.gen_range(self.gamma_lo..self.gamma_hi)
    }
}

pub fn sample_lambda(spec: &LambdaFamilySpec, index: usize, n_points: usize) -> Result<ReactionProfile> {
    spec.validate()?;
    let grid = UniformGrid1D::new(n_points)?;
    match spec.family {
        LambdaFamily::Chebyshev => ReactionProfile::chebyshev(grid, spec.amplitude, spec.gamma(index)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub n_samples: usize,
    pub n_points: usize,
    pub family: LambdaFamilySpec,
    pub solver: GoursatSolveOptions,
    /// Fraction of samples in the training split.
    pub split: f64,
    pub seed: u64,
    pub gammas: Vec<f64>,
    /// `C` such that every stored kernel has PDE residual `<= C h^2`.
    pub residual_constant: f64,
    /// SHA-256 of `data.bin`, hex.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub lambda: ReactionProfile,
    pub kernel: KernelField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
}

fn record_len(n_points: usize) -> usize {
    8 * (n_points + n_points * (n_points + 1) / 2)
}

fn solve_sample(spec: &LambdaFamilySpec, index: usize, solver: &GoursatSolveOptions) -> Result<Sample> {
    let lambda = sample_lambda(spec, index, solver.n_points)?;
    let kernel = solve_kernel(&lambda, solver).map_err(|e| Error::Sample {
        index,
        source: Box::new(e),
    })?;
    Ok(Sample { lambda, kernel })
}

/// Residual constant from a convergence study over the family: kernels on
/// `n` and `2n - 1` points for eleven evenly spread `gamma`. The constant is
/// the largest `residual / h^2` seen, with 50% headroom.
fn residual_constant(spec: &LambdaFamilySpec, solver: &GoursatSolveOptions) -> Result<f64> {
    let mut c = 0.0_f64;
    for q in 0..=10 {
        let gamma = spec.gamma_lo + (spec.gamma_hi - spec.gamma_lo) * q as f64 / 10.0;
        for n in [solver.n_points, 2 * solver.n_points - 1] {
            let grid = UniformGrid1D::new(n)?;
            let lam = ReactionProfile::chebyshev(grid, spec.amplitude, gamma)?;
            let k = solve_kernel(&lam, &GoursatSolveOptions { n_points: n, ..*solver })?;
            let h = grid.spacing();
            c = c.max(kernel_residuals(&k, &lam)?.pde_residual_sup / (h * h));
        }
    }
    Ok(1.5 * c)
}

/// Generate `n_samples` pairs, spreading the solves over `threads` workers.
///
/// Every sample has its own RNG stream and results are merged by index, so
/// the output does not depend on `threads`.
pub fn build_dataset(
    spec: &LambdaFamilySpec,
    n_samples: usize,
    solver: &GoursatSolveOptions,
    split: f64,
    threads: usize,
) -> Result<Dataset> {
    spec.validate()?;
    solver.validate()?;
    if n_samples == 0 {
        return Err(invalid("dataset needs at least one sample"));
    }
    if !(split > 0.0 && split <= 1.0) {
        return Err(invalid("split fraction must lie in (0, 1]"));
    }
    let threads = threads.clamp(1, n_samples);
    let chunk = n_samples.div_ceil(threads);
    let mut parts: Vec<Result<Vec<Sample>>> = Vec::with_capacity(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                scope.spawn(move || {
                    let start = t * chunk;
                    let end = ((t + 1) * chunk).min(n_samples);
                    (start..end)
                        .map(|i| solve_sample(spec, i, solver))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        for h in handles {
            parts.push(h.join().expect("dataset worker panicked"));
        }
    });
    let mut samples = Vec::with_capacity(n_samples);
    for part in parts {
        samples.extend(part?);
    }
    let manifest = DatasetManifest {
        version: FORMAT_VERSION,
        n_samples,
        n_points: solver.n_points,
        family: *spec,
        solver: *solver,
        split,
        seed: spec.seed,
        gammas: (0..n_samples).map(|i| spec.gamma(i)).collect(),
        residual_constant: residual_constant(spec, solver)?,
        checksum: String::new(),
    };
    let mut ds = Dataset { manifest, samples };
    ds.manifest.checksum = sha256_hex(&ds.blob());
    Ok(ds)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn grid(&self) -> UniformGrid1D {
        self.samples[0].kernel.grid()
    }

    pub fn blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.samples.len() * record_len(self.manifest.n_points));
        for s in &self.samples {
            f64s_to_le(s.lambda.values().iter().copied(), &mut out);
            f64s_to_le(s.kernel.values().iter().copied(), &mut out);
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(DATA_FILE), self.blob())?;
        fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&self.manifest)? + "\n",
        )?;
        Ok(())
    }

    /// Seeded partition into `(train, test)` index lists; at least one
    /// training sample is always kept.
    pub fn split_indices(&self, fraction: f64) -> (Vec<usize>, Vec<usize>) {
        let n = self.samples.len();
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.manifest.seed, u64::MAX));
        idx.shuffle(&mut rng);
        let n_train = ((fraction * n as f64).round() as usize).clamp(1, n);
        let test = idx.split_off(n_train);
        (idx, test)
    }
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Version {
            found: manifest.version,
            expected: FORMAT_VERSION,
        });
    }
    let grid = UniformGrid1D::new(manifest.n_points)?;
    let blob = fs::read(dir.join(DATA_FILE))?;
    let rec = record_len(manifest.n_points);
    if blob.len() % rec != 0 {
        return Err(Error::Truncated {
            expected: (blob.len() / rec + 1) * rec,
            found: blob.len(),
        });
    }
    if blob.len() / rec != manifest.n_samples {
        return Err(Error::Structural(format!(
            "manifest lists {} samples, blob holds {}",
            manifest.n_samples,
            blob.len() / rec
        )));
    }
    let actual = sha256_hex(&blob);
    if actual != manifest.checksum {
        return Err(Error::Checksum {
            expected: manifest.checksum.clone(),
            actual,
        });
    }
    let n = manifest.n_points;
    let samples = blob
        .chunks_exact(rec)
        .map(|r| {
            let vals = le_to_f64s(r);
            let lambda = ReactionProfile::new(grid, vals[..n].to_vec())?;
            let kernel = KernelField::from_values(grid, vals[n..].to_vec())?;
            Ok(Sample { lambda, kernel })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { manifest, samples })
}
