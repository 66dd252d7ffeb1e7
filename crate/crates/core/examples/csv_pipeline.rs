//! The command-line workflow from a program: simulate two accelerometers to
//! CSV, read the file back, fit, and write the report and moment table.

use wavecal::cli::{cmd_fit, cmd_simulate, ingest, parse_spec, IngestOptions, SpecFile};
use wavecal::estimator::FitOptions;

const MODEL: &str = r#"
channels = 2
class = "custom"

[[block]]
kind = "AR1"
channels = [1, 2]
cross = "full"
values = [0.1300635, 0.07466659, 8.142854e-5, 1.255179e-4, -4.603401e-5]

[[block]]
kind = "AR1"
channels = [1]
values = [0.9989909, 1.612509e-10]

[[block]]
kind = "AR1"
channels = [2]
values = [0.9999121, 2.075570e-10]

[[block]]
kind = "RW"
channels = [1, 2]
values = [1.756252e-11, 5.015933e-12]
"#;

fn main() -> wavecal::Result<()> {
    let dir = std::env::temp_dir().join("wavecal-csv-pipeline");
    std::fs::create_dir_all(&dir)?;
    let model = parse_spec(MODEL).expect("valid model");
    let data = dir.join("accelerometers.csv");
    cmd_simulate(&model, None, 1 << 18, 1, 2024, &data)?;
    let dataset = ingest(&data, &IngestOptions::default())?;
    let unknown = SpecFile {
        spec: model.spec.clone(),
        theta: None,
    };
    let report = cmd_fit(
        &dataset,
        &unknown,
        &FitOptions::default(),
        0.05,
        &dir.join("fit.json"),
        Some(&dir.join("moments.csv")),
    )?;
    println!("converged {}, objective {:.2}", report.converged, report.objective);
    for p in &report.parameters {
        println!("  {:<10} {:>12.4e}", p.name, p.estimate);
    }
    println!("report and moment table written to {}", dir.display());
    Ok(())
}
