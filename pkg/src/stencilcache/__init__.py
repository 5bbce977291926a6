"""Cache behaviour of stencil sweeps: interference lattices, cache-fitting traversals, load bounds."""
from .bounds import BoundInputs, BoundResult, lower_bound, lower_bound_multi, upper_bound, upper_bound_multi
from .cache_sim import CacheConfig, CacheState, LoadKind, MissKind, MissReport, simulate_stream
from .grid import GridShape, Stencil, interior_points, star_stencil
from .lattice import InterferenceLattice, classify, interference_lattice, lll_reduce, shortest_vector
from .traversal import UnfavorableLatticeError, cache_fitting_order, make_plan, natural_order, run_stencil, simulate

__version__ = "0.1.0"
