"""Balls in nested boxes: occupancy counts driven by multiplicative cascades."""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .laws import (SHIPPED_LAWS, BetaSplit, DirichletSymmetric, Gem, PoissonDirichlet1, SplittingLaw,
                   laplace_transform, monte_carlo_laplace, parse_law, sample_atoms_until)
from .analytics import (AnalyticProfile, build_profile, m_inverse, mean_fn, rate_phi, regime_theta,
                        theorem1_constants, var_fn)
from .occupancy import (OccupancyCounts, OccupancyStats, mu, mu_bar, poissonized_throw, sigma2,
                        stats_from_counts, throw_balls)
from .cascade import (DEFAULT_SEED, OccupiedTree, TruncatedMassTree, TestFunction, allocate_balls,
                      expand_mass_tree, grow_occupied_tree, heavy_box_counts, large_deviation_functional,
                      martingale_W, occupancy_moments, shattering_generation, simulate_occupancy,
                      theorem1_functional, tilted_window_mass)
from .regimes import (RegimeReport, RegimeSchedule, ks_distance, run_clt, run_growth, run_lln, run_shatter,
                      run_tilted)
from .partitions import (NestedSequence, Partition, is_refinement, paintbox_sample, partition_from_cascade,
                         restrict)
