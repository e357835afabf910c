"""Asymptotic theory of spiked eigenvectors for X = H + W."""
from .model import (
    DegenerateSpikeWarning,
    NoiseProfile,
    SampleMatrix,
    SpikedMeanModel,
    bernoulli_profile,
    build_custom,
    build_dcmm,
    build_sbm,
    model_from_spec,
    model_to_spec,
    read_matrix,
    sample_data,
    sample_noise,
    two_point_profile,
    write_matrix,
    zero_profile,
)
from .spectral import SpikedEigenPair, spiked_eigs
from .moments import (
    MomentTable,
    alpha_n,
    bilinear_variance,
    expected_power,
    kappa_xy,
    moment_table,
    quadratic_form_mean,
    quadratic_form_variance,
    s2_xy,
    zero_moment_table,
)
from .ate_core import (
    AteSolution,
    BilinearPrediction,
    a_coeff,
    b_vec,
    bilinear_predict,
    eigenvalue_stat,
    eigenvector_stat_general,
    eigenvector_stat_self,
    f_k,
    p_tilde,
    r_func,
    r_func_deriv,
    solve_tk,
)

__version__ = "0.1.0"
