import os
from pathlib import Path


project_root = Path.cwd()
outputs_dir = Path.cwd() / ".hospec"

fixtures_dir = Path(os.path.dirname(os.path.abspath(__file__)), "fixtures")
if __package__ is None or __package__ == "":
    fixtures_dir = Path.cwd() / "hospec" / "fixtures"

# Discretization and truncation
grid_points = 401
levels = 25
truncation = 25
workers = None

# ODE engine
magnus_max_phase = 0.25
pole_threshold = 1e-8
laurent_nodes = 32
laurent_tolerance = 1e-8
derivative_nodes = 8

# Root location
newton_tolerance = 1e-11
newton_accept_tolerance = 1e-8
newton_max_iterations = 60
derivative_radius_ratio = 0.1
certification_radius_ratio = 0.4
winding_nodes = 64
winding_max_nodes = 1024
coincidence_tolerance = 1e-6
reseed_offsets = (-0.25, 0.25, -0.375, 0.375, -0.5, 0.5, 0.25j, -0.25j)

# Inverse stage
inverse_circle_nodes = 16
pole_circle_ratio = 0.25
inverse_circle_tolerance = 1e-6
residue_triangular_tolerance = 1e-6
solve_residual_tolerance = 1e-10
singular_condition = 1e14
x_chunk = 32
tail_warning_threshold = 1e-2
plateau_tolerance = 0.05

# Offsets chi_k of the eigenvalue asymptotics for the identity / anti-identity
# boundary configuration, indexed by order n.
chi_table = {
    2: (0.0,),
    3: (1 / 6, 1 / 6),
    4: (0.25, 0.5, 0.25),
}
