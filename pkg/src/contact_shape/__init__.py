"""Contact process on Z^d: coupled Harris simulation, essential hitting
times, and Monte Carlo estimators for time constants and asymptotic shapes.
"""

__version__ = "0.1.0"

from .field import (
    ClockKey,
    HarrisField,
    arrivals,
    box_edges,
    box_edges_sized,
    edges_touching_box,
    idem_holds,
    shift_space,
    shift_time,
    thin,
)
from .sim import (
    SurvivalPolicy,
    Trajectory,
    Window,
    hitting_time,
    infected_region,
    lifetime,
    simulate,
    simulate_coupled,
    simulate_sets,
    survival_proxy,
)
from .hitting import (
    HittingRecord,
    essential_hitting,
    g_event_check,
    regeneration_view,
)
from .estimators import (
    Estimate,
    RunParams,
    ShapeEstimate,
    TheoryConstants,
    continuity_scan,
    estimate_mu_direct,
    estimate_mu_subadditive,
    estimate_survival,
    good_growth_probability,
    hausdorff_distance,
    idem_probability,
    shape_estimate,
)
from .oracle import TinyLattice, mc_vs_oracle, transient_distribution
