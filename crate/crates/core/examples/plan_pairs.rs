//! One translation model per unordered class pair: k classes need k(k-1)/2.

use cfx::explain::plan_pairs;

fn main() -> cfx::Result<()> {
    let classes: Vec<String> = ["normal", "opacity", "effusion", "nodule"].iter().map(|s| s.to_string()).collect();
    let plan = plan_pairs(&classes)?;
    for (a, b) in &plan.pairs {
        println!("{a} <-> {b}");
    }
    for k in 2..=8 {
        let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        println!("k = {k}: {} models", plan_pairs(&names)?.pairs.len());
    }
    Ok(())
}
