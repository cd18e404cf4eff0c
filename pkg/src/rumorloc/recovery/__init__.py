"""Recovery of missing observations: compressed sensing, DN completion, renewal correction."""
from .cs import (BASES, SelectionMatrix, SparsifyingBasis, basis_pursuit, build_selection_matrix,
                 cs_recover, dct_basis, haar_basis, identity_basis, pca_basis)
from .dn import (DNResult, PartialDelayMatrix, condition_check_and_load, condition_number,
                 dn_complete, fit_rank_one, observed_row_covariance)
from .renewal import (RenewalParams, ResidualEstimate, dn_complete_renewal, gamma_sampler,
                      mean_residual, renewal_expected_residual, renewal_residual_matrix,
                      sample_residuals, simulate_renewal_residual)

__all__ = [
    "BASES", "SelectionMatrix", "SparsifyingBasis", "basis_pursuit", "build_selection_matrix",
    "cs_recover", "dct_basis", "haar_basis", "identity_basis", "pca_basis",
    "DNResult", "PartialDelayMatrix", "condition_check_and_load", "condition_number",
    "dn_complete", "fit_rank_one", "observed_row_covariance",
    "RenewalParams", "ResidualEstimate", "dn_complete_renewal", "gamma_sampler", "mean_residual",
    "renewal_expected_residual", "renewal_residual_matrix", "sample_residuals",
    "simulate_renewal_residual",
]
