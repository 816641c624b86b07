//! log Z_N from closed forms and thermodynamic integration, and the fit of
//! the large-N expansion.

use coulomb_lab::equilibrium::PotentialSpec;
use coulomb_lab::kernel::KernelSpec;
use coulomb_lab::sampler::GibbsParams;
use coulomb_lab::thermo::{closed_form_entries, expansion_fit, logz_closed_form, logz_estimate_ti, TiSettings};

fn main() -> coulomb_lab::Result<()> {
    let kernel = KernelSpec::log1();
    let v = PotentialSpec::quadratic(0.5)?;
    let entries = closed_form_entries(&[8, 16, 32, 64, 128, 256], 2.0, &kernel, &v)?;
    let fit = expansion_fit(&entries, 2.0, &kernel, &v)?;
    println!(
        "N^{} coefficient {:.5} (predicted {:.5}), N log N {:?} (predicted {:?}), N {:.4}",
        fit.leading_power, fit.fit_leading, fit.predicted_leading, fit.fit_nlogn, fit.predicted_nlogn, fit.fit_linear
    );

    let n = 8;
    let params = GibbsParams::new(3.0, n, kernel, v.clone())?;
    let ti = logz_estimate_ti(&params, 2.0, 3.0, &TiSettings::default())?;
    let exact = logz_closed_form(n, 3.0, &kernel, &v)?;
    println!(
        "N = {n}, β = 3: TI {:.5} ± {:.1e} (stat) ± {:.1e} (quad), exact {exact:.5}",
        ti.value, ti.statistical_error, ti.quadrature_error
    );
    Ok(())
}
