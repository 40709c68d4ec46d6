"""Adaptive and goal-oriented adaptive P1/P2 finite elements with newest
vertex bisection, edge-based residual estimators and tail-based marking."""
from .driver import (AdaptiveRecord, RunConfig, adaptive_steps, extrapolate_reference,
                     reference_values, run, run_afem, run_goafem, run_uniform)
from .estimator import data_resolution, edge_indicators, oscillation
from .fem import (DiscreteSolution, assemble_system, dirichlet_energy, energy_norm,
                  evaluate_goal, prolongate, solve)
from .marking import (mark_doerfler, mark_goafem_maximum, mark_goal_doerfler,
                      mark_maximum, marking_ratio)
from .mesh import (Lineage, Mesh, build_mesh, check_admissibility, read_mesh, refine,
                   tail, uniform_refine, write_mesh)
from .output import read_csv, render_convergence_svg, render_level_svg, write_csv
from .problem import ProblemSpec, builtin_problem, load_problem

__version__ = "0.1.0"
