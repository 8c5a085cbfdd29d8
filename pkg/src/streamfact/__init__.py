"""Streaming matrix factorisation with matrix-variate recursive linear filters."""

from .baselines import NmfConfig, SgdConfig, broyden_gamma, nmf_multiplicative, sgd_run, sgd_update
from .data import (
    MaskedDataset,
    ParseError,
    SamplerState,
    load_dataset,
    load_matrix_csv,
    load_pgm,
    make_bernoulli_mask,
    make_block_mask,
    next_index,
    sample_order,
    save_matrix_csv,
    save_pgm,
    synthetic_faces,
    synthetic_lowrank,
    vectorise_images,
)
from .experiments import ExperimentConfig, RunReport, compare, run_restoration, snr
from .linalg import CapacityExceeded, ContractViolation, SingularSystem
from .model import (
    DictionaryState,
    ModelConfig,
    NotPositiveSemidefinite,
    Observation,
    covariance_update,
    estimate_coefficients,
    estimate_coefficients_masked,
    init_state,
    mean_update,
    predict,
    reconstruct,
    run_pass,
    step,
)

__version__ = "0.1.0"
