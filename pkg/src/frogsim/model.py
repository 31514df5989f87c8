"""Parameter and outcome records shared by all simulators.

Vertex counts are always the total number of vertices ``m`` of the complete
graph K_m. A jump from any vertex is uniform over the other ``m - 1``
vertices, so wherever a statement is phrased on K_{n+1} the artifact uses
``m = n + 1`` and denominators ``m - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dists import EtaSpec
from .errors import ConfigError

CAP_LIMIT = 2**62


@dataclass(frozen=True)
class SimParams:
    m: int
    p: float
    eta: EtaSpec
    seed: int = 0
    stream: int = 0
    conditional_root: bool = False

    def __post_init__(self):
        if isinstance(self.m, bool) or not float(self.m).is_integer() or self.m < 1:
            raise ConfigError("m", f"must be an integer >= 1, got {self.m}")
        object.__setattr__(self, "m", int(self.m))
        p = float(self.p)
        if not 0.0 <= p <= 1.0:
            raise ConfigError("p", f"must lie in [0, 1], got {self.p}")
        object.__setattr__(self, "p", p)
        if not isinstance(self.eta, EtaSpec):
            raise ConfigError("eta", "must be an EtaSpec")


@dataclass
class TrialOutcome:
    """Result of one trial.

    ``rounds_elapsed`` counts synchronous time steps for the reference
    simulator and one-particle rounds for the auxiliary chain (so it equals
    the absorption time R there). ``by_convention`` marks p = 1 outcomes,
    which are assigned ``v_infty = m`` without simulating.
    """

    v_infty: int
    total_steps: int
    rounds_elapsed: int
    capped: bool = False
    by_convention: bool = False
    trace: "AuxTrace | None" = field(default=None, repr=False)


@dataclass
class AuxTrace:
    """Per-round record of the auxiliary chain; index 0 is the initial state."""

    x: np.ndarray        # X_k for k = 1..R (x[0] unused, set to -1)
    a_prime: np.ndarray  # A'_k for k = 0..R
    v_prime: np.ndarray  # V'_k for k = 0..R

    def rows(self):
        for k in range(len(self.a_prime)):
            yield k, int(self.x[k]), int(self.a_prime[k]), int(self.v_prime[k])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("k,X_k,A_prime_k,V_prime_k\n")
            for k, x, a, v in self.rows():
                fh.write(f"{k},{'' if k == 0 else x},{a},{v}\n")


def round_cap(m: int, p: float) -> int:
    """64 m (ln m + 10) / (1 - p) rounds; beyond this a trial is flagged as capped."""
    if p >= 1.0:
        return CAP_LIMIT
    cap = 64.0 * m * (math.log(m) + 10.0) / (1.0 - p)
    return int(min(cap, CAP_LIMIT))
