"""Furstenberg f-entropy of random walks on free groups and their boundaries."""

__version__ = "0.1.0"

from .boundary import (BoundaryParams, CylinderDensity, HittingSample, boundary_entropy,
                       criterion_values, cylinder_masses, cylinder_table, density_entropy,
                       density_entropy_batch, harmonic_cylinder, monte_carlo_entropy,
                       push_convolve, rn_derivative, simulate_hitting, solve_q,
                       stationarity_residual)
from .config import ExperimentConfig, load_config
from .divergence import (BUILTINS, CHI2, HELLINGER2, KL, LINEAR, REVERSE_KL, Divergent,
                         FDivergence, f_divergence, first_order_bound,
                         furstenberg_entropy_group, get_divergence, is_divergent,
                         kl_lower_bound, psi)
from .errors import CapacityError, EntropyLabError, NumericalError, ValidationError
from .green import (GreenParams, LatticeEntropy, SweepRow, abel_entropy, kv_entropy_rate,
                    lattice_abel_entropy, lazy_walk, mu_a_mass, radial_abel_masses,
                    radial_distribution, simple_walk, solve_first_passage, sweep_a)
from .groups import (FreeBall, FreeWord, LatticePoint, ball_size, enumerate_ball, format_word,
                     parse_word, random_word, sphere_size, words_of_length)
from .measures import (GeneratorMeasure, SparseMeasure, abel_sum_truncated,
                       abel_truncation_index, convolve, convolve_power, shannon_entropy,
                       translate, tv_distance)
from .tmap import invert_weights, phi, phi_inverse, q_matrix, q_to_p, t_forward, t_inverse

__all__ = [name for name in dir() if not name.startswith("_")]
