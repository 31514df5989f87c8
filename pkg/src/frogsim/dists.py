"""Initial-occupancy laws (eta) and geometric lifetimes.

An :class:`EtaSpec` is the user-facing description of the i.i.d. law of the
number of sleeping particles per vertex. Compiled kernels never see the
dataclass; they receive ``(kind_code, params)`` from :meth:`EtaSpec.encode`.

Lifetimes are Geo_0(1 - p): ``P(L >= k) = p**k``, the number of moves a
particle makes before it dies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import ConfigError
from .rng import RngStream, uniform

CONSTANT, BERNOULLI, POISSON, GEOMETRIC, TABLE = 0, 1, 2, 3, 4
_CODES = {"constant": CONSTANT, "bernoulli": BERNOULLI, "poisson": POISSON,
          "geometric": GEOMETRIC, "table": TABLE}
_PARAM_NAMES = {"constant": ("value",), "bernoulli": ("q",), "poisson": ("lam",),
                "geometric": ("q",), "table": ("pmf",)}

# exp(-lam) underflows past this; sequential-search inversion needs it positive
POISSON_LAM_MAX = 700.0
TABLE_TOL = 1e-12


@dataclass(frozen=True)
class EtaSpec:
    """Law of eta.

    kinds and params:

    - ``constant``: ``value`` (integer >= 0)
    - ``bernoulli``: ``q`` in [0, 1], P(eta = 1) = q
    - ``poisson``: ``lam`` > 0
    - ``geometric``: ``q`` in (0, 1], P(eta = k) = (1 - q)**k q on {0, 1, ...}
    - ``table``: ``pmf``, a finite list of masses over {0, ..., K}
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _CODES:
            raise ConfigError("eta.kind", f"unknown kind {self.kind!r}; expected one of {sorted(_CODES)}")
        expected = set(_PARAM_NAMES[self.kind])
        got = set(self.params)
        if got != expected:
            raise ConfigError("eta.params", f"{self.kind} expects {sorted(expected)}, got {sorted(got)}")
        if self.kind == "constant":
            v = self.params["value"]
            if not float(v).is_integer() or v < 0:
                raise ConfigError("eta.params.value", f"must be an integer >= 0, got {v}")
            object.__setattr__(self, "params", {"value": int(v)})
        elif self.kind in ("bernoulli", "geometric"):
            q = float(self.params["q"])
            lo_ok = q >= 0 if self.kind == "bernoulli" else q > 0
            if not (lo_ok and q <= 1):
                rng = "[0, 1]" if self.kind == "bernoulli" else "(0, 1]"
                raise ConfigError("eta.params.q", f"must lie in {rng}, got {q}")
            object.__setattr__(self, "params", {"q": q})
        elif self.kind == "poisson":
            lam = float(self.params["lam"])
            if not lam > 0:
                raise ConfigError("eta.params.lam", f"must be > 0, got {lam}")
            if lam > POISSON_LAM_MAX:
                raise ConfigError("eta.params.lam", f"must be <= {POISSON_LAM_MAX}, got {lam}")
            object.__setattr__(self, "params", {"lam": lam})
        else:
            pmf = tuple(float(x) for x in self.params["pmf"])
            if not pmf:
                raise ConfigError("eta.params.pmf", "must be non-empty")
            if any(not x >= 0 for x in pmf):
                raise ConfigError("eta.params.pmf", "masses must be >= 0")
            if abs(math.fsum(pmf) - 1.0) > TABLE_TOL:
                raise ConfigError("eta.params.pmf", f"masses sum to {math.fsum(pmf)!r}, not 1")
            object.__setattr__(self, "params", {"pmf": pmf})

    # -- constructors -----------------------------------------------------

    @classmethod
    def constant(cls, value: int) -> "EtaSpec":
        return cls("constant", {"value": value})

    @classmethod
    def bernoulli(cls, q: float) -> "EtaSpec":
        return cls("bernoulli", {"q": q})

    @classmethod
    def poisson(cls, lam: float) -> "EtaSpec":
        return cls("poisson", {"lam": lam})

    @classmethod
    def geometric(cls, q: float) -> "EtaSpec":
        return cls("geometric", {"q": q})

    @classmethod
    def table(cls, pmf) -> "EtaSpec":
        return cls("table", {"pmf": tuple(pmf)})

    @classmethod
    def parse(cls, text: str) -> "EtaSpec":
        """Parse the flag syntax ``kind:param[,param...]``, e.g. ``bernoulli:0.5``."""
        kind, sep, rest = text.partition(":")
        kind = kind.strip()
        if kind not in _CODES:
            raise ConfigError("eta", f"unknown kind {kind!r} in {text!r}")
        try:
            values = [float(x) for x in rest.split(",")] if sep and rest.strip() else []
        except ValueError:
            raise ConfigError("eta", f"non-numeric parameter in {text!r}") from None
        if kind == "table":
            return cls.table(values)
        if len(values) != 1:
            raise ConfigError("eta", f"{kind} takes exactly one parameter, got {text!r}")
        return cls(kind, {_PARAM_NAMES[kind][0]: values[0]})

    @classmethod
    def from_dict(cls, d: dict) -> "EtaSpec":
        if not isinstance(d, dict) or set(d) != {"kind", "params"}:
            raise ConfigError("eta", 'expected an object {"kind": ..., "params": {...}}')
        params = dict(d["params"])
        if "pmf" in params:
            params["pmf"] = tuple(params["pmf"])
        return cls(d["kind"], params)

    def to_dict(self) -> dict:
        params = dict(self.params)
        if "pmf" in params:
            params["pmf"] = list(params["pmf"])
        return {"kind": self.kind, "params": params}

    def __str__(self):
        if self.kind == "table":
            return "table:" + ",".join(repr(x) for x in self.params["pmf"])
        return f"{self.kind}:{next(iter(self.params.values()))}"

    # -- exact quantities ---------------------------------------------------

    def pmf(self, k: int) -> float:
        """P(eta = k)."""
        if k < 0:
            return 0.0
        kind, prm = self.kind, self.params
        if kind == "constant":
            return 1.0 if k == prm["value"] else 0.0
        if kind == "bernoulli":
            return (1.0 - prm["q"]) if k == 0 else (prm["q"] if k == 1 else 0.0)
        if kind == "poisson":
            lam = prm["lam"]
            return math.exp(k * math.log(lam) - lam - math.lgamma(k + 1))
        if kind == "geometric":
            q = prm["q"]
            if q == 1.0:
                return 1.0 if k == 0 else 0.0
            return math.exp(k * math.log1p(-q)) * q
        pmf = prm["pmf"]
        return pmf[k] if k < len(pmf) else 0.0

    @property
    def p_zero(self) -> float:
        return self.pmf(0)

    def mean(self) -> float:
        kind, prm = self.kind, self.params
        if kind == "constant":
            return float(prm["value"])
        if kind == "bernoulli":
            return prm["q"]
        if kind == "poisson":
            return prm["lam"]
        if kind == "geometric":
            return (1.0 - prm["q"]) / prm["q"]
        return math.fsum(k * x for k, x in enumerate(prm["pmf"]))

    @property
    def support_max(self) -> int | None:
        """Largest k with positive mass, or None for unbounded laws."""
        kind, prm = self.kind, self.params
        if kind == "constant":
            return prm["value"]
        if kind == "bernoulli":
            return 1 if prm["q"] > 0 else 0
        if kind == "table":
            pmf = prm["pmf"]
            return max(k for k, x in enumerate(pmf) if x > 0)
        if kind == "geometric" and prm["q"] == 1.0:
            return 0
        return None

    def kmax(self, tol: float = 1e-9) -> int:
        """Smallest K with sum_{k<=K} P(eta = k) >= 1 - tol (exact K for bounded laws)."""
        bound = self.support_max
        if bound is not None:
            return bound
        total, k = 0.0, 0
        while True:
            total += self.pmf(k)
            if total >= 1.0 - tol:
                return k
            k += 1

    def truncated(self, K: int) -> tuple["EtaSpec", float]:
        """Table law of min(eta, K) and the tail mass P(eta > K) folded into K."""
        masses = [self.pmf(k) for k in range(K)]
        tail = max(0.0, 1.0 - math.fsum(masses))
        cut = max(0.0, tail - self.pmf(K))
        return EtaSpec.table(masses + [tail]), cut

    def encode(self) -> tuple[int, np.ndarray]:
        """(kind_code, float64 params) for compiled kernels."""
        code = _CODES[self.kind]
        if self.kind == "table":
            prm = np.asarray(self.params["pmf"], dtype=np.float64)
        else:
            prm = np.array([float(next(iter(self.params.values())))], dtype=np.float64)
        return code, prm


# -- compiled samplers ---------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def geometric0_from_uniform(u, p):
    """Inversion for Geo_0(1 - p): floor(ln(1 - u) / ln p); 0 when p == 0."""
    if p <= 0.0:
        return 0
    return np.int64(math.floor(math.log1p(-u) / math.log(p)))


@nb.njit(cache=True, nogil=True)
def draw_lifetime(p, s):
    return geometric0_from_uniform(uniform(s), p)


@nb.njit(cache=True, nogil=True)
def draw_eta(kind, prm, s):
    if kind == CONSTANT:
        return np.int64(prm[0])
    if kind == BERNOULLI:
        return np.int64(1) if uniform(s) < prm[0] else np.int64(0)
    if kind == POISSON:
        lam = prm[0]
        u = uniform(s)
        k = 0
        pk = math.exp(-lam)
        cdf = pk
        limit = lam + 40.0 * math.sqrt(lam) + 100.0
        while u >= cdf and k < limit:
            k += 1
            pk *= lam / k
            cdf += pk
        return np.int64(k)
    if kind == GEOMETRIC:
        q = prm[0]
        if q >= 1.0:
            return np.int64(0)
        return geometric0_from_uniform(uniform(s), 1.0 - q)
    # table: sequential search over the cumulative masses
    u = uniform(s)
    cdf = 0.0
    last = 0
    for k in range(prm.shape[0]):
        if prm[k] > 0.0:
            last = k
            cdf += prm[k]
            if u < cdf:
                return np.int64(k)
    return np.int64(last)


@nb.njit(cache=True, nogil=True)
def draw_initial_actives(kind, prm, conditional_root, s):
    """1 + eta_o, or eta_o conditioned on eta_o >= 1 (by rejection)."""
    if not conditional_root:
        return 1 + draw_eta(kind, prm, s)
    while True:
        x = draw_eta(kind, prm, s)
        if x >= 1:
            return x


@nb.njit(cache=True, nogil=True)
def _fill_eta(kind, prm, s, out):
    for i in range(out.shape[0]):
        out[i] = draw_eta(kind, prm, s)


@nb.njit(cache=True, nogil=True)
def _fill_lifetimes(p, s, out):
    for i in range(out.shape[0]):
        out[i] = draw_lifetime(p, s)


# -- Python API ------------------------------------------------------------------


def sample_eta(spec: EtaSpec, rng: RngStream, size: int | None = None):
    code, prm = spec.encode()
    if size is None:
        return int(draw_eta(code, prm, rng.state))
    out = np.empty(size, dtype=np.int64)
    _fill_eta(code, prm, rng.state, out)
    return out


def _check_p(p: float):
    if not 0.0 <= p < 1.0:
        raise ConfigError("p", f"lifetime sampling needs 0 <= p < 1, got {p}")


def lifetime_from_uniform(p: float, u: float) -> int:
    _check_p(p)
    return int(geometric0_from_uniform(u, p))


def sample_lifetime(p: float, rng: RngStream, size: int | None = None):
    """Geo_0(1 - p) lifetime(s). p == 1 is rejected: infinite lifetimes are never sampled."""
    _check_p(p)
    if size is None:
        return int(draw_lifetime(p, rng.state))
    out = np.empty(size, dtype=np.int64)
    _fill_lifetimes(p, rng.state, out)
    return out


def eta_pmf(spec: EtaSpec, k: int) -> float:
    return spec.pmf(k)


def check_conditional_root(spec: EtaSpec):
    if spec.p_zero >= 1.0:
        raise ConfigError("conditional_root", f"P(eta >= 1) = 0 for {spec}; conditioning is undefined")


def initial_actives(eta: EtaSpec, conditional_root: bool, rng: RngStream) -> int:
    if conditional_root:
        check_conditional_root(eta)
    code, prm = eta.encode()
    return int(draw_initial_actives(code, prm, conditional_root, rng.state))
