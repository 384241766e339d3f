"""Frequency-domain simulation of one transmission slot.

A slot: primary-user occupancy is drawn per subcarrier, every CR user
senses and the coordinator OR-fuses the decisions, signature codes are
chosen for the estimated-free subcarriers, all K users transmit their
bits over per-subcarrier Rayleigh fading, and the first user's receiver
forms the combining decision variable

    R = sum_n sqrt(P_n) * Re{ conj(beta_n) * c_n * r_n }

split into its desired-signal, multiple-access-interference, primary-
interference and noise components.  Each subcarrier is flat; no time
domain waveform is synthesized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .orthocodes import (
    ModifiedSignature,
    build,
    embed,
    largest_supported_order,
)

CODE_POLICIES = ("rechoose", "fixed")


class CapacityError(Exception):
    """The slot cannot carry all users (too few usable subcarriers)."""


@dataclass(frozen=True)
class SystemParams:
    """Static link parameters shared by the analysis and the simulator."""

    n_subcarriers: int
    n_users: int
    pr_h1: float
    energy_per_bit: float = 1.0
    noise_psd: float = 0.1
    interference_power: float = 0.1
    bit_duration: float = 10e-6
    slot_duration: float = 1e-3
    sensing_duration: float = 1e-4

    def __post_init__(self):
        if self.n_subcarriers < 1 or self.n_users < 1:
            raise ValueError("need at least one subcarrier and one user")
        if not (0.0 <= self.pr_h1 <= 1.0):
            raise ValueError("pr_h1 must lie in [0, 1]")
        if self.energy_per_bit <= 0 or self.noise_psd <= 0:
            raise ValueError("energy per bit and noise PSD must be positive")
        if self.interference_power < 0:
            raise ValueError("interference power must be nonnegative")
        if not (0.0 < self.sensing_duration < self.slot_duration):
            raise ValueError("need 0 < sensing_duration < slot_duration")
        if largest_supported_order(self.n_subcarriers) < self.n_users:
            raise ValueError(
                f"{self.n_users} users exceed the largest supported code order "
                f"<= {self.n_subcarriers} subcarriers"
            )

    @property
    def subcarrier_bandwidth(self) -> float:
        """Two-sided null-to-null bandwidth, 2 / bit_duration (documentation)."""
        return 2.0 / self.bit_duration

    @property
    def bits_per_slot(self) -> int:
        """Bits transmitted per user in the slot's transmission phase."""
        # epsilon guards the floor against float representation error
        return int((self.slot_duration - self.sensing_duration) / self.bit_duration + 1e-9)


@dataclass(frozen=True)
class SensingProbs:
    """Per-user local sensing probabilities fed to the Bernoulli shortcut."""

    pd: float
    pfa: float

    def __post_init__(self):
        for name, v in (("pd", self.pd), ("pfa", self.pfa)):
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")


@dataclass(frozen=True)
class SlotRealization:
    """Ground truth and randomness of one slot.

    misdetected marks subcarriers that are occupied but estimated free;
    signatures carry zeros exactly where a chip was deactivated (estimated
    busy, plus any free subcarriers dropped to reach a supported code
    order).
    """

    occupancy: np.ndarray  # (N,) bool, true primary occupancy
    decisions: np.ndarray  # (K, N) bool, per-user busy decisions
    est_busy: np.ndarray  # (N,) bool, OR fusion of decisions
    misdetected: np.ndarray  # (N,) bool, occupancy & ~est_busy
    gains: np.ndarray  # (K, N) complex, unit-variance channel gains
    signatures: tuple[ModifiedSignature, ...]

    @property
    def lambda_indices(self) -> np.ndarray:
        return np.flatnonzero(self.misdetected)

    @property
    def n_active(self) -> int:
        return int(self.signatures[0].free_count)


@dataclass(frozen=True)
class ReceiverOutput:
    """First user's combining output for one bit interval."""

    test_statistics: np.ndarray  # (N,) complex per-subcarrier projections
    decision_variable: float
    r_signal: float
    r_mai: float
    r_gi: float
    r_noise: float
    decided_bit: int


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def draw_slot(
    params: SystemParams,
    probs: SensingProbs,
    rng: np.random.Generator,
    code_policy: str = "rechoose",
) -> SlotRealization:
    """Draw one slot: occupancy, sensing decisions, codes and channel gains.

    Draw order is fixed (occupancy, decisions, gains) so a seeded stream
    reproduces the slot bit for bit.  Sensing uses the Bernoulli shortcut:
    each user reports busy with probability pd on occupied subcarriers and
    pfa on idle ones.

    rechoose policy: a fresh orthogonal family of the largest supported
    order n' <= n_free is embedded onto the first n' free subcarriers; the
    trailing excess free subcarriers are deactivated.  fixed policy: the
    rows of the fixed length-N family keep their positions and the chips
    on estimated-busy subcarriers are zeroed (loses row orthogonality).

    Raises CapacityError when fewer orthogonal rows than users remain.
    """
    if code_policy not in CODE_POLICIES:
        raise ValueError(f"unknown code policy {code_policy!r}")
    n = params.n_subcarriers
    k = params.n_users
    occupancy = rng.random(n) < params.pr_h1
    p_busy = np.where(occupancy, probs.pd, probs.pfa)
    decisions = rng.random((k, n)) < p_busy[np.newaxis, :]
    est_busy = np.any(decisions, axis=0)
    misdetected = occupancy & ~est_busy

    free_idx = np.flatnonzero(~est_busy)
    if code_policy == "rechoose":
        n_active = largest_supported_order(free_idx.size)
        if n_active < k:
            raise CapacityError(
                f"{k} users but only {n_active} orthogonal rows available "
                f"({free_idx.size} estimated-free subcarriers)"
            )
        family = build(n_active)
        busy_for_embed = np.ones(n, dtype=bool)
        busy_for_embed[free_idx[:n_active]] = False
        signatures = tuple(embed(family.entries[i], busy_for_embed) for i in range(k))
    else:
        if free_idx.size == 0:
            raise CapacityError("no estimated-free subcarriers to transmit on")
        family = build(n)
        free_mask = ~est_busy
        signatures = []
        for i in range(k):
            chips = np.where(free_mask, family.entries[i], 0)
            energy = int(np.sum(chips.astype(object) ** 2))
            signatures.append(
                ModifiedSignature(
                    length=n,
                    chips=_freeze(chips),
                    free_mask=_freeze(free_mask.copy()),
                    energy=energy,
                )
            )
        signatures = tuple(signatures)

    gains = (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))) / np.sqrt(2.0)
    return SlotRealization(
        occupancy=_freeze(occupancy),
        decisions=_freeze(decisions),
        est_busy=_freeze(est_busy),
        misdetected=_freeze(misdetected),
        gains=_freeze(gains),
        signatures=signatures,
    )


def transmit_block(
    slot: SlotRealization,
    params: SystemParams,
    bits: np.ndarray,
    rng: np.random.Generator,
):
    """Run the first user's receiver over a block of bit intervals.

    bits has shape (I, K) with entries +-1; the channel gains are held for
    the whole block (slot coherence) while noise, primary interference and
    the other users' bits are fresh per interval.  Returns a dict with the
    per-interval test statistics, decision variables, the four components
    and the decided bits.  Noise is drawn before interference.
    """
    bits = np.asarray(bits, dtype=np.float64)
    if bits.ndim != 2 or bits.shape[1] != params.n_users:
        raise ValueError(f"bits must have shape (I, {params.n_users})")
    n_bits = bits.shape[0]
    n = params.n_subcarriers

    chips = np.stack([s.chips for s in slot.signatures]).astype(np.float64)
    energies = np.array([s.energy for s in slot.signatures], dtype=np.float64)
    if np.any(energies <= 0):
        raise CapacityError("signature with zero energy cannot carry a bit")
    amp = np.sqrt(params.energy_per_bit / energies)  # sqrt(P_n) per user

    tx = slot.gains * chips * amp[:, np.newaxis]  # (K, N)
    signal = bits @ tx  # (I, N) complex

    noise = (
        rng.standard_normal((n_bits, n)) + 1j * rng.standard_normal((n_bits, n))
    ) * np.sqrt(params.noise_psd / 2.0)
    lam = slot.lambda_indices
    r = signal + noise
    if lam.size:
        interf = (
            rng.standard_normal((n_bits, lam.size))
            + 1j * rng.standard_normal((n_bits, lam.size))
        ) * np.sqrt(params.interference_power / 2.0)
        r[:, lam] += interf

    weight = np.conj(slot.gains[0]) * chips[0] * amp[0]  # (N,)
    decision = (r @ weight).real

    r_signal = bits[:, 0] * float(
        np.sum(np.abs(slot.gains[0]) ** 2 * chips[0] ** 2) * amp[0] ** 2
    )
    r_mai = ((bits[:, 1:] @ tx[1:]) @ weight).real if params.n_users > 1 else np.zeros(n_bits)
    r_gi = (interf @ weight[lam]).real if lam.size else np.zeros(n_bits)
    r_noise = (noise @ weight).real

    if not np.all(np.isfinite(decision)):
        raise FloatingPointError("non-finite decision variable")
    decided = np.where(decision >= 0.0, 1, -1)
    return {
        "test_statistics": r,
        "decision": decision,
        "r_signal": r_signal,
        "r_mai": r_mai,
        "r_gi": r_gi,
        "r_noise": r_noise,
        "decided": decided,
    }


def transmit_and_receive(
    slot: SlotRealization,
    params: SystemParams,
    bits: np.ndarray,
    rng: np.random.Generator,
) -> ReceiverOutput:
    """Single bit interval: every user sends one +-1 bit, user 1 is decoded."""
    bits = np.asarray(bits, dtype=np.float64)
    if bits.shape != (params.n_users,):
        raise ValueError(f"bits must have shape ({params.n_users},)")
    out = transmit_block(slot, params, bits[np.newaxis, :], rng)
    return ReceiverOutput(
        test_statistics=out["test_statistics"][0],
        decision_variable=float(out["decision"][0]),
        r_signal=float(out["r_signal"][0]),
        r_mai=float(out["r_mai"][0]),
        r_gi=float(out["r_gi"][0]),
        r_noise=float(out["r_noise"][0]),
        decided_bit=int(out["decided"][0]),
    )
