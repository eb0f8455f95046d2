// Render distribution reports from label counts.

use snipdoc::stats::{distribution_from_counts, emit_report, LabelCounts, ReportFormat};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let manual = LabelCounts {
        installation_instruction: 14,
        usage_instruction: 162,
        usage_example: 38,
        feature_explanation: 157,
        code_example: 27,
        unclear: 2,
    };
    let report = distribution_from_counts(&manual)?;
    print!("{}", emit_report(&report, None, None, ReportFormat::Markdown));
    println!();
    print!("{}", emit_report(&report, None, None, ReportFormat::Csv));
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
