//! Runs selected acceptance criteria, e.g. `-- 1 2 9`.

use coulomb_lab::verify::run_criterion;

fn main() -> coulomb_lab::Result<()> {
    let ids: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    for id in if ids.is_empty() { vec![1, 9] } else { ids } {
        println!("{}", run_criterion(id, 1)?.detail());
    }
    Ok(())
}
