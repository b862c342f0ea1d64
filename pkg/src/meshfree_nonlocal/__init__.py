"""Meshfree solvers for 2D nonlocal diffusion and bond-based peridynamics."""

from .errors import MeshfreeError, NeighborhoodError, QuadratureError, SingularSystemError, SolveError
from .fracture import (BondStateField, KWConfig, Segment2, bond_stretch, crack_angle, damage, fragments,
                       initialize_prenotch, run_kalthoff_winkler, update_bond_states)
from .kernel import (KernelSpec, critical_stretch, harmonic_mean_coefficient, kernel_eval,
                     kernel_scaling_constant)
from .operators import NonlocalOperator, OperatorKind, apply, assemble_diffusion, assemble_peridynamic
from .pointcloud import (UNIT_SQUARE, Neighborhood, PerturbationSpec, PointCloud, Rectangle, Region,
                         build_neighborhoods, build_uniform_grid, perturb_grid)
from .quadrature import (Mode, ReproducingSpace, WeightFamily, build_basis, generate_all_weights,
                         moment_integrals, solve_weights)
from .solver import (ConstrainedSystem, LinearSolver, TimeIntegratorState, solve_static, step_diffusion,
                     step_peridynamic)
from .verify import (ConvergenceReport, FixedDelta, FixedRatio, ManufacturedCase, case_example1,
                     case_example2, case_example3, l2_norm, linf_norm, run_convergence_study,
                     truncation_error)
