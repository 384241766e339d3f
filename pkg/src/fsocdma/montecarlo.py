"""Deterministic Monte Carlo BER estimation over slots and SNR sweeps.

Every slot gets its own counter-based random stream (Philox keyed by
master seed, sweep-point index and slot index), so results are bitwise
independent of evaluation order, thread count and batch size.  Error and
bit counters are plain integers aggregated in slot order; the stopping
rule is evaluated at fixed batch boundaries, keeping the set of
simulated slots a pure function of the configuration.

SNR is the per-bit ratio energy_per_bit / noise_psd; a sweep rescales
the noise PSD per point and keeps the configured interference-to-noise
ratio fixed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .ber_analysis import BerPoint, average_pe
from .phylink import CapacityError, SensingProbs, SystemParams, draw_slot, transmit_block
from .sensing import (
    DetectorConfig,
    FusionResult,
    OccupancyModel,
    SensingOutcome,
    fuse_or,
    local_probability,
    occupancy_model,
    pfa,
    solve_threshold,
)

_MASK64 = (1 << 64) - 1
_PURPOSE_SLOT = 1


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a BER run, including the master seed."""

    params: SystemParams
    detector: DetectorConfig
    target_pd: float = 0.95  # fused detection probability target
    snr_grid_db: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    trials_min: int = 2_000  # minimum bits per point
    target_error_events: int = 100  # stop once this many bit errors observed
    max_trials: int = 5_000_000  # hard cap on bits per point
    master_seed: int = 24601
    code_policy: str = "rechoose"
    batch_slots: int = 8

    def __post_init__(self):
        if not self.snr_grid_db:
            raise ValueError("snr grid must not be empty")
        if self.trials_min < 1 or self.target_error_events < 1:
            raise ValueError("trials_min and target_error_events must be >= 1")
        if self.max_trials < self.trials_min:
            raise ValueError("max_trials must be >= trials_min")


@dataclass(frozen=True)
class SensingDerivation:
    """Solved sensing operating point shared by analysis and simulation."""

    probs: SensingProbs  # per-user local pd/pfa
    threshold: float
    fused: FusionResult
    model: OccupancyModel


@dataclass(frozen=True)
class BerCurve:
    points: tuple[BerPoint, ...]
    config_digest: str
    elapsed: float


def config_digest(cfg: RunConfig) -> str:
    """Content hash over every field that can change the results."""
    parts = []
    for obj, prefix in ((cfg.params, "params"), (cfg.detector, "detector")):
        for f in dataclasses.fields(obj):
            parts.append(f"{prefix}.{f.name}={getattr(obj, f.name)!r}")
    for f in dataclasses.fields(cfg):
        if f.name in ("params", "detector"):
            continue
        parts.append(f"{f.name}={getattr(cfg, f.name)!r}")
    return hashlib.sha256("\n".join(sorted(parts)).encode()).hexdigest()


@lru_cache(maxsize=64)
def derive_sensing(cfg: RunConfig) -> SensingDerivation:
    """Solve the detector threshold for the fused detection target.

    The per-user local detection probability is the K-th OR-root of the
    fused target; the threshold is solved against the Rayleigh-averaged
    closed form and the resulting false-alarm rate is carried through,
    never assumed zero.
    """
    k = cfg.params.n_users
    pd_local = local_probability(cfg.target_pd, k)
    zeta = solve_threshold(
        cfg.detector.samples, pd_local, "for_pd", cfg.detector.mean_snr_db
    )
    solved = DetectorConfig(
        samples=cfg.detector.samples, threshold=zeta, mean_snr_db=cfg.detector.mean_snr_db
    )
    pfa_local = pfa(solved)
    fused = fuse_or([SensingOutcome(pfa=pfa_local, pd=pd_local)] * k)
    model = occupancy_model(cfg.params.pr_h1, fused)
    return SensingDerivation(
        probs=SensingProbs(pd=pd_local, pfa=pfa_local),
        threshold=zeta,
        fused=fused,
        model=model,
    )


def point_params(cfg: RunConfig, snr_db: float) -> SystemParams:
    """Link parameters at one sweep point: noise set by SNR, INR preserved."""
    inr = cfg.params.interference_power / cfg.params.noise_psd
    noise = cfg.params.energy_per_bit / 10.0 ** (snr_db / 10.0)
    return dataclasses.replace(
        cfg.params, noise_psd=noise, interference_power=inr * noise
    )


def _slot_rng(master_seed: int, point_index: int, slot_index: int) -> np.random.Generator:
    key = np.array(
        [master_seed & _MASK64, ((_PURPOSE_SLOT << 32) | point_index) & _MASK64],
        dtype=np.uint64,
    )
    counter = np.array([0, slot_index & _MASK64, 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def _run_slot(params, probs, code_policy, rng, n_bits, trace, slot_index):
    """Simulate one slot's worth of bits; returns (errors, bits, infeasible)."""
    try:
        slot = draw_slot(params, probs, rng, code_policy)
    except CapacityError:
        # untransmittable slot: every bit is a coin flip
        errors = int(np.sum(rng.integers(0, 2, n_bits)))
        return errors, n_bits, 1
    bits = rng.integers(0, 2, (n_bits, params.n_users)) * 2 - 1
    out = transmit_block(slot, params, bits, rng)
    errors = int(np.count_nonzero(out["decided"] != bits[:, 0]))
    if trace is not None:
        n_busy = int(np.count_nonzero(slot.occupancy))
        n_est = int(np.count_nonzero(slot.est_busy))
        n_mis = int(np.count_nonzero(slot.misdetected))
        for i in range(n_bits):
            trace.append(
                (
                    slot_index,
                    n_busy,
                    n_est,
                    n_mis,
                    float(out["decision"][i]),
                    float(out["r_signal"][i]),
                    float(out["r_mai"][i]),
                    float(out["r_gi"][i]),
                    float(out["r_noise"][i]),
                    int(bits[i, 0]),
                    int(out["decided"][i]),
                )
            )
    return errors, n_bits, 0


def estimate_ber(
    cfg: RunConfig,
    snr_db: float,
    point_index: int | None = None,
    trace: list | None = None,
) -> BerPoint:
    """Simulate one sweep point until the stopping rule fires.

    Stops at the first batch boundary where at least trials_min bits and
    target_error_events errors have accumulated, or at the max_trials cap.
    Fully determined by (cfg, snr_db, point_index).
    """
    if point_index is None:
        point_index = (
            cfg.snr_grid_db.index(snr_db) if snr_db in cfg.snr_grid_db else 0
        )
    params = point_params(cfg, snr_db)
    derived = derive_sensing(cfg)
    analytic = average_pe(params, derived.model, cfg.code_policy)

    bits_per_slot = params.bits_per_slot
    errors = 0
    bits_done = 0
    infeasible = 0
    slot_index = 0
    while True:
        for _ in range(cfg.batch_slots):
            rng = _slot_rng(cfg.master_seed, point_index, slot_index)
            e, b, bad = _run_slot(
                params, derived.probs, cfg.code_policy, rng, bits_per_slot, trace, slot_index
            )
            errors += e
            bits_done += b
            infeasible += bad
            slot_index += 1
        if bits_done >= cfg.max_trials:
            break
        if bits_done >= cfg.trials_min and errors >= cfg.target_error_events:
            break

    p_hat = errors / bits_done
    if errors == 0:
        ci = 3.0 / bits_done  # rule-of-three upper bound
    else:
        ci = 1.96 * np.sqrt(p_hat * (1.0 - p_hat) / bits_done)
    return BerPoint(
        snr_db=snr_db,
        ber_analytic=analytic,
        ber_simulated=p_hat,
        ci_halfwidth=float(ci),
        trials=bits_done,
        errors=errors,
        infeasible_slots=infeasible,
    )


def analytic_point(cfg: RunConfig, snr_db: float) -> BerPoint:
    """Closed-form BER only, no simulation."""
    params = point_params(cfg, snr_db)
    derived = derive_sensing(cfg)
    return BerPoint(snr_db=snr_db, ber_analytic=average_pe(params, derived.model, cfg.code_policy))


def sweep(cfg: RunConfig, threads: int = 1, simulate: bool = True) -> BerCurve:
    """One BerPoint per grid value, on independent derived substreams.

    The result is identical for any thread count; threads only run grid
    points concurrently.
    """
    start = time.perf_counter()
    indexed = list(enumerate(cfg.snr_grid_db))

    def work(item):
        i, snr = item
        if simulate:
            return estimate_ber(cfg, snr, point_index=i)
        return analytic_point(cfg, snr)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(work, indexed))
    else:
        points = [work(it) for it in indexed]
    points.sort(key=lambda p: p.snr_db)
    return BerCurve(
        points=tuple(points),
        config_digest=config_digest(cfg),
        elapsed=time.perf_counter() - start,
    )


def curve_csv(curve: BerCurve, comments: tuple[str, ...] = ()) -> str:
    """Sweep export: comment block, digest, then one row per point."""
    lines = [f"# {c}" for c in comments]
    lines.append(f"# digest={curve.config_digest}")
    lines.append("snr_db,ber_analytic,ber_sim,ci_halfwidth,trials,errors")
    for p in curve.points:
        sim = "" if p.ber_simulated is None else f"{p.ber_simulated:.10e}"
        ci = "" if p.ci_halfwidth is None else f"{p.ci_halfwidth:.10e}"
        lines.append(
            f"{p.snr_db:.6g},{p.ber_analytic:.10e},{sim},{ci},{p.trials},{p.errors}"
        )
    return "\n".join(lines) + "\n"


TRACE_HEADER = "slot,n_busy_true,n_est_busy,n_misdetected,R,R_s,R_MAI,R_GI,R_n,bit,decided"


def trace_csv(rows: list, comments: tuple[str, ...] = ()) -> str:
    lines = [f"# {c}" for c in comments]
    lines.append(TRACE_HEADER)
    for r in rows:
        slot, nb, ne, nm, R, rs, rm, rg, rn, bit, dec = r
        lines.append(
            f"{slot},{nb},{ne},{nm},{R:.10e},{rs:.10e},{rm:.10e},{rg:.10e},{rn:.10e},{bit},{dec}"
        )
    return "\n".join(lines) + "\n"
