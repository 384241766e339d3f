"""Energy-detection spectrum sensing statistics and OR-rule fusion.

Closed forms for the false-alarm and Rayleigh-averaged detection
probabilities of an energy detector collecting an integer number of
samples, a bisection threshold solver, cooperative OR fusion across
users, and the per-subcarrier chip-zeroing / misdetection model that
both the BER analysis and the link simulator consume.

The detection statistic is chi-squared with 2*samples degrees of
freedom: central under the idle hypothesis, noncentral with parameter
2*gamma under the occupied hypothesis, gamma exponentially distributed
over the Rayleigh sensing channel.  The Rayleigh-averaged detection
probability uses exp(-zeta/(2*(1+gbar))) in its second term; the
(1-gbar) variant sometimes seen in print diverges near gbar=1 and is
not physical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np
from scipy.special import gammaln, logsumexp


class NoSolutionError(ValueError):
    """Threshold target is outside the achievable open interval (0, 1)."""


@dataclass(frozen=True)
class DetectorConfig:
    """Energy detector operating point.

    samples: number of collected samples (time-bandwidth product), >= 2
    threshold: decision threshold on the energy statistic
    mean_snr_db: mean sensing SNR (dB) entering the Rayleigh average
    """

    samples: int
    threshold: float
    mean_snr_db: float

    def __post_init__(self):
        if self.samples < 2:
            raise ValueError("detector needs at least 2 samples")
        if self.threshold < 0:
            raise ValueError("threshold must be nonnegative")

    @property
    def mean_snr_linear(self) -> float:
        return 10.0 ** (self.mean_snr_db / 10.0)


@dataclass(frozen=True)
class SensingOutcome:
    """Per-user false-alarm and detection probabilities."""

    pfa: float
    pd: float

    def __post_init__(self):
        for name, v in (("pfa", self.pfa), ("pd", self.pd)):
            if not (-1e-12 <= v <= 1.0 + 1e-12):
                raise ValueError(f"{name}={v} outside [0, 1]")


@dataclass(frozen=True)
class FusionResult:
    """OR-fused false-alarm and detection probabilities of k_users CRs."""

    qfa: float
    qd: float
    k_users: int


@dataclass(frozen=True)
class OccupancyModel:
    """Per-subcarrier chip-zeroing and misdetection probabilities.

    p_zero: chip set to zero (estimated busy), pr_h1*qd + (1-pr_h1)*qfa
    p_mis:  occupied but estimated free, (1-qd)*pr_h1
    """

    pr_h1: float
    p_zero: float
    p_mis: float

    @property
    def p_free(self) -> float:
        """Idle and correctly estimated free: the remaining trinomial mass."""
        return 1.0 - self.p_zero - self.p_mis


def _poisson_tail(terms: int, x: float) -> float:
    """exp(-x) * sum_{p<terms} x^p / p!  (== regularized upper gamma Q(terms, x)).

    Evaluated in log space so it stays finite for large x and many terms.
    """
    if terms <= 0:
        return 0.0
    if x == 0.0:
        return 1.0
    p = np.arange(terms)
    logs = -x + p * math.log(x) - gammaln(p + 1)
    return float(np.exp(logsumexp(logs)))


def _log_poisson_lower(shape: int, y: float) -> float:
    """log of the regularized lower gamma P(shape, y) at integer shape.

    P(shape, y) = exp(-y) * sum_{p>=shape} y^p / p!.  For y < shape the
    terms decay geometrically and the series is summed directly in log
    space; this avoids the catastrophic cancellation of 1 - Q(shape, y)
    when the lower tail is below float epsilon.  For y >= shape the
    complement is order one and safe.
    """
    if y <= 0.0:
        return -math.inf
    if y >= shape:
        p = 1.0 - _poisson_tail(shape, y)
        return math.log(p) if p > 0.0 else -math.inf
    # leading term p = shape, then ratios y/(p+1) < 1
    logs = []
    log_t = -y + shape * math.log(y) - float(gammaln(shape + 1))
    p = shape
    while True:
        logs.append(log_t)
        p += 1
        log_t += math.log(y / p)
        if log_t < logs[0] - 45.0 or len(logs) > 100_000:
            break
    return float(logsumexp(logs))


def pfa(cfg: DetectorConfig) -> float:
    """False-alarm probability of the energy detector.

    Regularized upper incomplete gamma at integer shape, computed via the
    exact Poisson partial-sum identity.  Strictly decreasing in the
    threshold.
    """
    return _poisson_tail(cfg.samples, cfg.threshold / 2.0)


def pd_rayleigh(cfg: DetectorConfig) -> float:
    """Detection probability averaged over Rayleigh fading.

    With u = samples, x = zeta/2, gbar the linear mean SNR:

        Pd = Q(u-1, x)
           + ((1+gbar)/gbar)^(u-1) * exp(-x/(1+gbar)) * P(u-1, x*gbar/(1+gbar))

    where Q and P are the regularized upper/lower incomplete gamma
    functions at integer shape.  The prefactor is evaluated in log space.
    """
    u = cfg.samples
    gbar = cfg.mean_snr_linear
    if gbar <= 0:
        raise ValueError("mean SNR must be positive")
    x = cfg.threshold / 2.0
    t1 = _poisson_tail(u - 1, x)
    y = x * gbar / (1.0 + gbar)
    log_p_low = _log_poisson_lower(u - 1, y)
    if log_p_low == -math.inf:
        return t1
    log_t2 = (u - 1) * math.log1p(1.0 / gbar) - x / (1.0 + gbar) + log_p_low
    return t1 + math.exp(min(log_t2, 0.0))


def detect_sample_level(cfg: DetectorConfig, occupied: bool, rng: np.random.Generator) -> bool:
    """One sample-level energy detection decision.

    Sums 2*samples squared unit normals; when occupied, the instantaneous
    SNR is drawn exponential with the configured mean and enters as a
    noncentrality shift sqrt(2*gamma) on the first component.  Exists to
    validate the closed forms, not for bulk simulation.
    """
    u = cfg.samples
    shift = 0.0
    if occupied:
        gamma = rng.exponential(cfg.mean_snr_linear)
        shift = math.sqrt(2.0 * gamma)
    z = rng.standard_normal(2 * u)
    z[0] += shift
    energy = float(np.sum(z * z))
    return energy > cfg.threshold


def sample_level_rate(
    cfg: DetectorConfig,
    occupied: bool,
    trials: int,
    rng: np.random.Generator,
    chunk: int = 50_000,
) -> float:
    """Empirical decision rate over many sample-level trials (chunked)."""
    u = cfg.samples
    hits = 0
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        z = rng.standard_normal((b, 2 * u))
        if occupied:
            gamma = rng.exponential(cfg.mean_snr_linear, size=b)
            z[:, 0] += np.sqrt(2.0 * gamma)
        energy = np.einsum("ij,ij->i", z, z)
        hits += int(np.count_nonzero(energy > cfg.threshold))
        done += b
    return hits / trials


def solve_threshold(
    samples: int,
    target: float,
    mode: Literal["for_pfa", "for_pd"],
    mean_snr_db: float = 0.0,
    tol: float = 1e-12,
) -> float:
    """Threshold zeta achieving the target false-alarm or detection probability.

    Bisection on the monotone (decreasing) map zeta -> probability; the
    upper bracket is grown geometrically until it straddles the target.
    """
    if not (0.0 < target < 1.0):
        raise NoSolutionError(f"target {target} outside the open interval (0, 1)")

    def f(zeta: float) -> float:
        cfg = DetectorConfig(samples=samples, threshold=zeta, mean_snr_db=mean_snr_db)
        return pfa(cfg) if mode == "for_pfa" else pd_rayleigh(cfg)

    if mode not in ("for_pfa", "for_pd"):
        raise ValueError(f"unknown mode {mode!r}")

    lo, hi = 0.0, 1.0
    for _ in range(200):
        if f(hi) < target:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise NoSolutionError(f"no threshold reaches target {target}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        v = f(mid)
        if abs(v - target) <= tol:
            return mid
        if v > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= max(1e-14, 1e-14 * hi):
            break
    return 0.5 * (lo + hi)


def fuse_or(outcomes: Iterable[SensingOutcome]) -> FusionResult:
    """OR-rule decision fusion: busy if any CR reports busy."""
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("fuse_or needs at least one sensing outcome")
    miss_fa = 1.0
    miss_d = 1.0
    for o in outcomes:
        miss_fa *= 1.0 - o.pfa
        miss_d *= 1.0 - o.pd
    return FusionResult(qfa=1.0 - miss_fa, qd=1.0 - miss_d, k_users=len(outcomes))


def local_probability(fused_target: float, k_users: int) -> float:
    """Per-user probability whose K-fold OR fusion equals the fused target."""
    if not (0.0 <= fused_target < 1.0):
        raise ValueError("fused target must lie in [0, 1)")
    if k_users < 1:
        raise ValueError("k_users must be >= 1")
    return 1.0 - (1.0 - fused_target) ** (1.0 / k_users)


def occupancy_model(pr_h1: float, fused: FusionResult) -> OccupancyModel:
    """Chip-zeroing and misdetection probabilities from the fused decisions.

    All subcarriers share the same occupancy prior.
    """
    if not (0.0 <= pr_h1 <= 1.0):
        raise ValueError("pr_h1 must lie in [0, 1]")
    p_zero = pr_h1 * fused.qd + (1.0 - pr_h1) * fused.qfa
    p_mis = (1.0 - fused.qd) * pr_h1
    return OccupancyModel(pr_h1=pr_h1, p_zero=p_zero, p_mis=p_mis)
