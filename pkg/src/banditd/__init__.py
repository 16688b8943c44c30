"""banditd: a contextual-bandit decision service and off-policy toolkit.

Serving path: business rules compute the legal subset of candidate actions,
the champion policy scores them, an exploration distribution is built and
sampled with a per-user deterministic seed, and the full decision (including
the candidate superset and per-action probabilities) is appended to a
dedicated log channel. Offline: logs are joined with delayed reward signals,
policies are trained off-policy with divergence regularization toward the
logging policy, evaluated with importance-sampling estimators and bootstrap
confidence intervals, and promoted behind guard rails.
"""
from banditd._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
