from .experiments import ExperimentReport, run_emulation, run_realdata
from .functions import FUNCTIONS, borehole, dette_pepelyshev, gramacy_1d, piston
from .metrics import nlpd, rmse
from .sobol import sobol_points

__all__ = [
    "ExperimentReport", "run_emulation", "run_realdata", "FUNCTIONS", "borehole",
    "dette_pepelyshev", "gramacy_1d", "piston", "nlpd", "rmse", "sobol_points",
]
