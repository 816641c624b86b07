//! Gibbs sampling of the Coulomb gas and exact reference ensembles.

mod mcmc;
mod oracle;

pub use mcmc::{
    chain_rng, has_oracle, mcmc_run, run_chains, Chain, ChainReport, ChainState, Checkpoint, GibbsParams, Schedule,
    CHECKPOINT_VERSION,
};
pub use oracle::{kostlan_radii, sample_beta_tridiag, sample_ginibre, tridiag_eigenvalues};
