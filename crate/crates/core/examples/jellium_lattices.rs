//! Renormalized jellium energy of standard lattices and the scan over
//! two-dimensional unit-density lattices.

use coulomb_lab::jellium::{lattice_scan_2d, renorm_energy_periodic, default_etas, LatticeSpec};
use coulomb_lab::kernel::KernelSpec;

fn main() -> coulomb_lab::Result<()> {
    let cases = [
        ("integer", LatticeSpec::integer(), KernelSpec::log1()),
        ("square", LatticeSpec::square(), KernelSpec::log2()),
        ("triangular", LatticeSpec::triangular(), KernelSpec::log2()),
        ("bcc", LatticeSpec::bcc(), KernelSpec::coulomb(3)?),
        ("fcc", LatticeSpec::fcc(), KernelSpec::coulomb(3)?),
    ];
    for (name, lattice, kernel) in cases {
        let pc = lattice.with_density(1.0)?.as_periodic();
        let w = renorm_energy_periodic(&pc, &kernel, &default_etas(&pc))?;
        println!("{name:<11} W = {:>12.8} ± {:.1e} (direct {:.8})", w.value, w.error, w.direct);
    }
    let scan = lattice_scan_2d(11, 21, 2.0)?;
    println!("scan minimum W = {:.8} at τ = {:.3} + {:.3}i", scan.min, scan.argmin.0, scan.argmin.1);
    Ok(())
}
