"""Two discrete Gronwall lemmas with recursion oracles.

Lemma form: nonnegative sequences with
    a_n + sum_{m<=n} k_m b_m <= sum_{m<=n} k_m g_m a_m + sum_{m<=n} k_m c_m + B
and k_m g_m < 1 imply
    a_n + sum k_m b_m <= exp(sum k_m s_m g_m) (sum k_m c_m + B),  s_m = 1/(1 - k_m g_m).

Quadlinear form: with
    x_n^2 + sum b_m <= sum g_m x_m^2 + sum d_m x_m + sum c_m + B
and g_m < 1,
    x_n^2 + sum b_m <= 2 exp(2 sum s_m g_m) [(sum d_m)^2 + sum c_m + B],  s_m = 1/(1 - g_m).

Bounds grow like exponentials of sums, so every comparison is done on
logarithms; the plain bounds may overflow to ``inf``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GronwallInstance:
    """Data of one instance; ``d`` is used by the quadlinear form only.

    For the quadlinear form ``k`` is ignored (all ones).
    """

    gamma: np.ndarray
    c: np.ndarray
    B: float = 0.0
    k: np.ndarray | None = None
    b: np.ndarray | None = None
    d: np.ndarray | None = None
    kind: str = "lemma"

    def __post_init__(self):
        if self.kind not in ("lemma", "quadlinear"):
            raise ValueError(f"unknown Gronwall form {self.kind!r}")
        g = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        n = len(g)

        def norm(v):
            v = np.zeros(n) if v is None else np.atleast_1d(np.asarray(v, dtype=float))
            if v.shape != (n,):
                raise ValueError("all sequences must have the same length")
            return v

        k = np.ones(n) if (self.k is None or self.kind == "quadlinear") else norm(self.k)
        vals = dict(gamma=g, c=norm(self.c), k=k, b=norm(self.b), d=norm(self.d))
        for name, v in vals.items():
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise ValueError(f"sequence {name} must be finite and nonnegative")
            object.__setattr__(self, name, v)
        if self.B < 0:
            raise ValueError("B must be nonnegative")
        kg = k * g
        if np.any(kg >= 1.0):
            which = "k_m gamma_m" if self.kind == "lemma" else "gamma_m"
            raise ValueError(f"hypothesis violated: {which} < 1 required, max is {kg.max():.6g}")

    @property
    def n(self) -> int:
        return len(self.gamma)

    @property
    def sigma(self) -> np.ndarray:
        return 1.0 / (1.0 - self.k * self.gamma)


def _log_sum(log_terms):
    return float(np.logaddexp.reduce(log_terms)) if len(log_terms) else -np.inf


def log_gronwall_bounds(inst: GronwallInstance) -> np.ndarray:
    """Logarithm of the bound at every index n (prefix sums)."""
    k, g, s = inst.k, inst.gamma, inst.sigma
    with np.errstate(divide="ignore"):
        if inst.kind == "lemma":
            expo = np.cumsum(k * s * g)
            rest = np.log(np.cumsum(k * inst.c) + inst.B)
            return expo + rest
        expo = 2.0 * np.cumsum(s * g)
        rest = np.log(np.cumsum(inst.d) ** 2 + np.cumsum(inst.c) + inst.B)
        return np.log(2.0) + expo + rest


def _as_instance(inst, kind):
    if isinstance(inst, GronwallInstance):
        if inst.kind != kind:
            raise ValueError(f"expected a {kind} instance, got {inst.kind}")
        return inst
    return GronwallInstance(kind=kind, **inst)


def gronwall_bound(inst) -> float:
    """exp(sum k_m s_m g_m) (sum k_m c_m + B) at the last index."""
    inst = _as_instance(inst, "lemma")
    return float(np.exp(log_gronwall_bounds(inst)[-1]))


def gronwall_quadlinear_bound(inst) -> float:
    """2 exp(2 sum s_m g_m) [(sum d_m)^2 + sum c_m + B] at the last index."""
    inst = _as_instance(inst, "quadlinear")
    return float(np.exp(log_gronwall_bounds(inst)[-1]))


@dataclass
class OracleResult:
    values: np.ndarray  # a_n or x_n
    lhs: np.ndarray  # a_n + sum k b (or x_n^2 + sum b)
    b_used: np.ndarray  # b after clipping to keep the sequence nonnegative


def oracle_recursion(inst: GronwallInstance) -> OracleResult:
    """Largest sequence satisfying the hypothesis with equality at every step.

    Step n solves a linear (lemma) or quadratic (quadlinear) equation for the
    newest term. If the accumulated b_m would make that term negative, b_n is
    reduced to the largest admissible value.
    """
    n = inst.n
    k, g, c, d = inst.k, inst.gamma, inst.c, inst.d
    b = inst.b.copy()
    vals = np.zeros(n)
    lhs = np.zeros(n)
    acc = inst.B  # sum_{m<n} (k g a + k c - k b)  (+ d x for quadlinear)
    for m in range(n):
        R = acc + k[m] * c[m] - k[m] * b[m]
        if R < 0:
            b[m] = max(b[m] + R / k[m], 0.0) if k[m] > 0 else b[m]
            R = max(acc + k[m] * c[m] - k[m] * b[m], 0.0)
        if inst.kind == "lemma":
            v = R / (1.0 - k[m] * g[m])
            acc = R + k[m] * g[m] * v
            vals[m] = v
            lhs[m] = v + np.sum(k[: m + 1] * b[: m + 1])
        else:
            a_ = d[m] / (1.0 - g[m])
            b_ = R / (1.0 - g[m])
            x = 0.5 * a_ + np.sqrt(0.25 * a_ * a_ + b_)
            acc = R + g[m] * x * x + d[m] * x
            vals[m] = x
            lhs[m] = x * x + np.sum(b[: m + 1])
    return OracleResult(vals, lhs, b)


def random_instance(rng: np.random.Generator, kind: str = "lemma", n_max: int = 200) -> GronwallInstance:
    """Instance with gamma in [0, 0.9] and the other entries in [0, 10].

    For the lemma form the step sizes are drawn from (0, 1], which keeps
    k_m gamma_m <= 0.9.
    """
    n = int(rng.integers(1, n_max + 1))
    gamma = rng.uniform(0.0, 0.9, n)
    c = rng.uniform(0.0, 10.0, n)
    b = rng.uniform(0.0, 10.0, n)
    B = float(rng.uniform(0.0, 10.0))
    if kind == "lemma":
        k = rng.uniform(0.0, 1.0, n)
        k = np.where(k == 0.0, 1.0, k)
        return GronwallInstance(gamma, c, B, k=k, b=b, kind="lemma")
    d = rng.uniform(0.0, 10.0, n)
    return GronwallInstance(gamma, c, B, b=b, d=d, kind="quadlinear")


def check_instance(inst: GronwallInstance) -> float:
    """Worst log-slack min_n(log bound_n - log lhs_n); negative means a violation."""
    lhs = oracle_recursion(inst).lhs
    lb = log_gronwall_bounds(inst)
    with np.errstate(divide="ignore"):
        ll = np.log(lhs)
    slack = np.where(lhs > 0, lb - ll, np.inf)
    return float(slack.min())


def soundness_suite(count: int = 10_000, seed: int = 42, kind: str = "lemma", n_max: int = 200) -> dict:
    """Run ``count`` random instances; report passes, failures, and the worst log-slack."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    fails = 0
    for _ in range(count):
        s = check_instance(random_instance(rng, kind, n_max))
        # relative round-off tolerance on the logarithm
        if s < -1e-12:
            fails += 1
        worst = min(worst, s)
    return {"kind": kind, "instances": count, "passes": count - fails, "failures": fails, "worst_log_slack": worst}


__all__ = [
    "GronwallInstance",
    "OracleResult",
    "check_instance",
    "gronwall_bound",
    "gronwall_quadlinear_bound",
    "log_gronwall_bounds",
    "oracle_recursion",
    "random_instance",
    "soundness_suite",
]
