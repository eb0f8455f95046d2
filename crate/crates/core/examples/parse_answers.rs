// Turn raw model answers into labels, refusals or format violations.

use snipdoc::taxonomy::{parse_llm_classification, ParseOutcome};

const ANSWERS: [&str; 5] = [
    "Type: Instruction\nOption: Installation instruction\nExample: guide to install and configure software or tools on a computer.",
    "Type: Example\nOption: Feature explanation",
    "Couldn't decide a task or description",
    "Type: Unclear",
    "Sure! I think this is an example.",
];

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for (i, answer) in ANSWERS.iter().enumerate() {
        match parse_llm_classification(answer, &format!("demo:README.md:{i}")) {
            ParseOutcome::Label { label, warning } => {
                let subtype = label.subtype.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
                println!("{i}: {} / {subtype}", label.category);
                if let Some(w) = warning {
                    println!("   note: {w}");
                }
            }
            ParseOutcome::Refusal => println!("{i}: refused"),
            ParseOutcome::FormatViolation { line, diagnostic } => println!("{i}: violation at line {line}: {diagnostic}"),
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
