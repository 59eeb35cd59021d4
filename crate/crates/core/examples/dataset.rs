//! Build a small dataset in parallel, write it, and load it back.

use backstep::dataset::{build_dataset, load_dataset, LambdaFamilySpec};
use backstep::kernel::GoursatSolveOptions;

fn main() -> backstep::Result<()> {
    let dir = std::env::temp_dir().join("backstep-dataset-example");
    let ds = build_dataset(&LambdaFamilySpec::control(), 50, &GoursatSolveOptions::default(), 0.8, 4)?;
    ds.write(&dir)?;
    let back = load_dataset(&dir)?;
    assert_eq!(back.blob(), ds.blob());
    let (train, test) = back.split_indices(back.manifest.split);
    println!(
        "{} samples at N = {}, checksum {}, {} train / {} test, residual constant {:.3e}",
        back.len(),
        back.manifest.n_points,
        back.manifest.checksum,
        train.len(),
        test.len(),
        back.manifest.residual_constant
    );
    println!("written to {}", dir.display());
    Ok(())
}
