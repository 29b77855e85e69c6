"""Simulator of dynamically tuned Ising antiferromagnets on Rydberg arrays.

Layered API: lattices and displacement classes (lattice), drive ramps
(schedule), Hamiltonians in the bitstring basis (operator), coherent
propagation (propagate), dephasing via master equation or trajectories
(openquantum), correlation estimators and sampling (measure), exact
classical ground sets (classical), short-time expansion checks
(shorttime), and experiment pipelines with a CLI (runner).
"""

__version__ = "0.1.0"

from .lattice import (LatticeGeometry, Site, build_lattice, count_shortest_paths,
                      displacement_classes, geometry_from_json, geometry_to_json,
                      graph_distance, nearest_neighbor_pairs)
from .schedule import (MHZ_TO_RADPUS, RampSchedule, build_ramp,
                       sweep_duration_for_rate)
from .operator import (CouplingMap, HamiltonianView, build_couplings,
                       spectrum_at)
from .propagate import (EvolutionConfig, NumericalError, Snapshot,
                        all_down_state, check_convergence, evolve_unitary)
from .openquantum import (DensityOperator, DephasingModel, TrajectoryEnsemble,
                          evolve_master, evolve_mcwf)
from .measure import (CorrelationMap, ShotSet, fit_correlation_length,
                      g2_connected, lightcone_crossings, neel_structure_factor,
                      sample_shots, staggered_shell_series, sublattice_histogram)
from .classical import (ClassicalGroundSet, classical_density_curve,
                        classical_ground_states, classical_mixture_g2,
                        classical_plateaus, minimum_energy_table)
from .shorttime import (AveragedDrive, average_hamiltonian, predict_g2_leading,
                        verify_scaling)
from .runner import ConfigError, preset_config, presets, run, validate_config
