//! Train a small operator on a small dataset, save it, and compare its
//! kernel with the solver's on a held-out profile.
//!
//! `cargo run --release --example train_operator -- [samples] [epochs]`

use backstep::dataset::{build_dataset, LambdaFamilySpec};
use backstep::kernel::GoursatSolveOptions;
use backstep::operator::{
    gradient_check, load_model, operator_error, save_model, train, DeepOperatorModel, OperatorArchitecture,
    TrainingConfig,
};

fn main() -> backstep::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let samples = args.next().unwrap_or(200);
    let epochs = args.next().unwrap_or(200);
    let spec = LambdaFamilySpec::control();
    let ds = build_dataset(&spec, samples, &GoursatSolveOptions::default(), 0.8, 4)?;
    let arch = OperatorArchitecture {
        branch_hidden: vec![64, 64],
        trunk_hidden: vec![64, 64],
        basis: 32,
        ..Default::default()
    };
    let model = DeepOperatorModel::new(arch, 1.0 / spec.amplitude, 1)?;
    println!("gradient check {:.2e}", gradient_check(&model, &ds.samples[0].lambda, 0)?);
    let cfg = TrainingConfig {
        epochs,
        eval_every: (epochs / 10).max(1),
        ..Default::default()
    };
    let report = train(model, &ds, &cfg)?;
    for r in report.curve().iter().filter(|r| r.test_rel_l2.is_some()) {
        println!(
            "epoch {:4} loss {:.3e} train {:.4} test {:.4}",
            r.epoch,
            r.train_loss,
            r.train_rel_l2.unwrap_or(f64::NAN),
            r.test_rel_l2.unwrap_or(f64::NAN)
        );
    }
    let dir = std::env::temp_dir().join("backstep-model-example");
    save_model(report.model(), &dir)?;
    let model = load_model(&dir)?;
    let i = report.test_indices[0];
    let e = operator_error(&model, &ds.samples[i].lambda, &ds.samples[i].kernel)?;
    println!(
        "held-out gamma {:.3}: rel L2 {:.4}, sup err {:.3e}, eps {:.3e}",
        ds.manifest.gammas[i], e.rel_l2, e.kernel_sup_err, e.epsilon
    );
    Ok(())
}
