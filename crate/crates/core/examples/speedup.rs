//! Time operator inference against the marching solver with a freshly
//! initialized network of the default size; timings do not depend on the
//! weights.

use backstep::analysis::{speedup_benchmark, BenchConfig};
use backstep::dataset::{sample_lambda, LambdaFamilySpec};
use backstep::operator::{DeepOperatorModel, OperatorArchitecture};

fn main() -> backstep::Result<()> {
    let model = DeepOperatorModel::new(OperatorArchitecture::default(), 0.02, 1)?;
    let spec = LambdaFamilySpec::control();
    let lambdas = (0..20).map(|i| sample_lambda(&spec, i, 201)).collect::<backstep::Result<Vec<_>>>()?;
    let report = speedup_benchmark(&model, &lambdas, &BenchConfig::default())?;
    report.write_csv(std::io::stdout().lock())?;
    println!(
        "exponents: fd {:.2}, predict {:.2}, cached {:.2}",
        report.fd_exponent.unwrap_or(f64::NAN),
        report.predict_exponent.unwrap_or(f64::NAN),
        report.cached_exponent.unwrap_or(f64::NAN)
    );
    Ok(())
}
