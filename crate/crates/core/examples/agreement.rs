// Inter-rater agreement on category labels.

use snipdoc::stats::cohen_kappa;
use snipdoc::taxonomy::Category::{self, *};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let rater_a = [Instruction, Instruction, Example, Example, Unclear, Example];
    let rater_b = [Instruction, Example, Example, Example, Unclear, Example];
    let r = cohen_kappa(&rater_a, &rater_b, Category::ALL.len())?;
    println!("observed agreement  {:.4}", r.observed_agreement);
    println!("cohen's kappa       {:.4}", r.kappa()?);
    println!("free-marginal kappa {:.4}", r.free_marginal_kappa);

    // both raters always say Example: chance agreement is total, kappa undefined
    let r = cohen_kappa(&[Example; 4], &[Example; 4], 3)?;
    println!("unanimous: kappa {:?}, free-marginal {:.4}", r.cohen_kappa, r.free_marginal_kappa);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
