"""Iterated Schur-complement multiscale analysis of the discrete Anderson model.

Modules
-------
lattice      boxes, disorder and the Hamiltonian
schur        Schur complements and their fixed-point eigenvalues
multiscale   scale ladders, resonant blocks, collars and the cascade
eigenflow    the energy-following procedure and completeness checks
influence    boundary influence, eigenvalue movement and the potential sweep
experiments  Monte Carlo ensembles and report writers
verify       acceptance checks and golden digests
"""
from .lattice import (DisorderRealization, Hamiltonian, LatticeGeometry, build_geometry,
                      build_hamiltonian, disorder_from_levels, sample_disorder)
from .schur import (BlockPartition, NearSingularElimination, SchurComplement, SpectralWindow,
                    fixed_point_eigenvalues, lift_eigenvector, schur_complement)
from .multiscale import (Block, MultiscaleState, ScaleSchedule, advance_scale, localized_operator,
                         make_schedule, start_cascade)
from .eigenflow import EFPResult, EigenpairApprox, completeness_check, efp_run, snap_energy
from .influence import (CollarExhaustsLattice, InfluenceProfile, MovementDecomposition,
                        influence_profile, movement_decomposition, sweep_vbar)
from .experiments import ExperimentConfig, EnsembleReport, run_ensemble

__version__ = "0.1.0"
