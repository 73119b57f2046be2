"""
Seeded Monte Carlo simulation of market-share dynamics under solved policies.

Each replication r draws its uniforms from its own stream
Generator(PCG64(SeedSequence(seed, spawn_key=(r,)))), so aggregate results do
not depend on how replications are chunked or scheduled. Within a chunk all
replications advance together as numpy arrays. Every aggregate is an integer
count, summed across chunks.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from numpy.random import PCG64, Generator, SeedSequence
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.core.errors import ParameterError
from src.core.parallel import ordered_map
from src.core.shock_dist import ShockDistribution, ppf
from src.solvers.lbd_model import LbdEquilibrium
from src.solvers.switching_model import SwitchingEquilibrium

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ["rep", "period", "i", "j", "winner"]
SEED_MAX = 2 ** 64 - 1


class SimModel(str, Enum):
    LBD = "lbd"
    SWITCHING = "switching"


class SimConfig(BaseModel):
    """Simulation run settings."""

    model_config = ConfigDict(frozen=True)

    model: SimModel = SimModel.LBD
    periods: int = Field(default=100, ge=1, description="Periods T per replication")
    replications: int = Field(default=10_000, ge=1, description="Replications R")
    seed: int = Field(default=0, ge=0, le=SEED_MAX)
    initial_state: Tuple[int, int] = Field(default=(0, 0), description="Starting (i, j) for lbd; experience beyond m is capped")
    record_trajectories: bool = False
    sample_shocks: bool = Field(default=False, description="Draw xi explicitly instead of the Bernoulli reduction")
    chunk_size: int = Field(default=4096, ge=1)
    max_workers: Optional[int] = Field(default=None, ge=1)

    @field_validator('initial_state')
    @classmethod
    def validate_initial_state(cls, v: Tuple[int, int]) -> Tuple[int, int]:
        if min(v) < 0:
            raise ValueError(f"initial state must be non-negative, got {v}")
        return v

    @classmethod
    def build(cls, **kwargs) -> 'SimConfig':
        try:
            return cls(**kwargs)
        except ValidationError as e:
            raise ParameterError.from_pydantic_error(e) from e


@dataclass(frozen=True)
class SimResult:
    """
    Aggregated outcome of a simulation.

    For lbd, `occupancy` has shape (T, m+1, m+1) and `state_visits`/`state_wins`
    pool both firms' perspectives: a visit to (i, j) by firm A is also a visit
    to (j, i) by firm B. For switching, `occupancy` has shape (T, 2) over the
    insider's identity (A, B).
    """
    model: SimModel
    config: SimConfig
    occupancy: np.ndarray
    state_visits: Optional[np.ndarray] = None
    state_wins: Optional[np.ndarray] = None
    first_wins_a: int = 0
    final_ahead_a: int = 0
    first_winner_ahead: int = 0
    lead_total: int = 0
    leader_switches: int = 0
    cap_reached: int = 0
    cap_time_total: int = 0
    insider_wins: int = 0
    trajectories: Optional[pd.DataFrame] = field(default=None, repr=False)

    @property
    def replications(self) -> int:
        return self.config.replications

    @property
    def win_rates(self) -> np.ndarray:
        """Empirical win frequency per ordered state (nan where never visited)."""
        with np.errstate(invalid='ignore', divide='ignore'):
            return np.where(self.state_visits > 0, self.state_wins / np.maximum(self.state_visits, 1), np.nan)

    @property
    def retention_rate(self) -> Optional[float]:
        if self.model != SimModel.SWITCHING:
            return None
        return self.insider_wins / (self.config.periods * self.replications)

    @property
    def mean_cap_time(self) -> Optional[float]:
        """Mean period at which both firms first sit at the cap, over replications that got there."""
        if self.model != SimModel.LBD or self.cap_reached == 0:
            return None
        return self.cap_time_total / self.cap_reached

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "model": self.model.value,
            "periods": self.config.periods,
            "replications": self.replications,
            "seed": self.config.seed,
            "final_occupancy": self.occupancy[-1].tolist(),
        }
        if self.model == SimModel.LBD:
            rates = self.win_rates
            out.update({
                "win_rates": [[None if np.isnan(r) else float(r) for r in row] for row in rates],
                "state_visits": self.state_visits.tolist(),
                "mean_cap_time": self.mean_cap_time,
                "cap_reached_fraction": self.cap_reached / self.replications,
                "mean_leader_switches": self.leader_switches / self.replications,
                "dominance": dominance_statistics(self),
            })
        else:
            out["retention_rate"] = self.retention_rate
        return out


# ===== Random streams =====

def replication_uniforms(seed: int, reps: range, periods: int) -> np.ndarray:
    """Uniform draws, one row per replication, from the per-replication substreams."""
    out = np.empty((len(reps), periods))
    for row, r in enumerate(reps):
        out[row] = Generator(PCG64(SeedSequence(seed, spawn_key=(r,)))).random(periods)
    return out


def _wins(u: np.ndarray, q: np.ndarray, gap: np.ndarray, d: ShockDistribution, sample_shocks: bool) -> np.ndarray:
    # xi = F^{-1}(1 - u) >= gap  <=>  u <= 1 - F(gap) = q
    if sample_shocks:
        return np.asarray(ppf(d, 1.0 - u)) >= gap
    return u < q


# ===== Chunk kernels =====

@dataclass
class _Tally:
    occupancy: np.ndarray
    state_visits: Optional[np.ndarray] = None
    state_wins: Optional[np.ndarray] = None
    counts: Dict[str, int] = field(default_factory=dict)
    trajectory: Optional[List[np.ndarray]] = None


def _lbd_chunk(eq: LbdEquilibrium, config: SimConfig, reps: range) -> _Tally:
    m, T, n = eq.m, config.periods, len(reps)
    u = replication_uniforms(config.seed, reps, T)
    i0, j0 = config.initial_state

    a = np.full(n, i0, dtype=np.int64)
    b = np.full(n, j0, dtype=np.int64)
    i, j = np.minimum(a, m), np.minimum(b, m)
    leader = np.sign(a - b)
    switches = np.zeros(n, dtype=np.int64)
    cap_time = np.where((i == m) & (j == m), 0, -1)

    occupancy = np.zeros((T, m + 1, m + 1), dtype=np.int64)
    visits = np.zeros((m + 1) * (m + 1), dtype=np.int64)
    wins = np.zeros((m + 1) * (m + 1), dtype=np.int64)
    rows = [] if config.record_trajectories else None
    first_win = None

    for t in range(T):
        flat = i * (m + 1) + j
        mirror = j * (m + 1) + i
        occupancy[t] = np.bincount(flat, minlength=(m + 1) ** 2).reshape(m + 1, m + 1)

        a_wins = _wins(u[:, t], eq.q[i, j], eq.P[i, j], eq.params.dist, config.sample_shocks)
        visits += np.bincount(flat, minlength=visits.size) + np.bincount(mirror, minlength=visits.size)
        wins += np.bincount(flat[a_wins], minlength=wins.size) + np.bincount(mirror[~a_wins], minlength=wins.size)

        if rows is not None:
            rows.append(np.column_stack([
                np.asarray(reps), np.full(n, t), i, j, np.where(a_wins, 0, 1)
            ]))
        if t == 0:
            first_win = a_wins.copy()

        a += a_wins
        b += ~a_wins
        i, j = np.minimum(a, m), np.minimum(b, m)

        now = np.sign(a - b)
        switches += (now != 0) & (leader != 0) & (now != leader)
        leader = np.where(now != 0, now, leader)
        cap_time = np.where((cap_time < 0) & (i == m) & (j == m), t + 1, cap_time)

    lead = a - b
    first_lead = np.where(first_win, lead, -lead)
    return _Tally(
        occupancy=occupancy,
        state_visits=visits.reshape(m + 1, m + 1),
        state_wins=wins.reshape(m + 1, m + 1),
        counts={
            "first_wins_a": int(first_win.sum()),
            "final_ahead_a": int((lead > 0).sum()),
            "first_winner_ahead": int((first_lead > 0).sum()),
            "lead_total": int(first_lead.sum()),
            "leader_switches": int(switches.sum()),
            "cap_reached": int((cap_time >= 0).sum()),
            "cap_time_total": int(cap_time[cap_time >= 0].sum()),
        },
        trajectory=rows,
    )


def _switching_chunk(eq: SwitchingEquilibrium, dist: ShockDistribution, config: SimConfig, reps: range) -> _Tally:
    T, n = config.periods, len(reps)
    u = replication_uniforms(config.seed, reps, T)
    insider = np.zeros(n, dtype=np.int64)
    occupancy = np.zeros((T, 2), dtype=np.int64)
    q1 = np.full(n, eq.q1)
    gap = np.full(n, eq.x)
    retained = 0
    rows = [] if config.record_trajectories else None

    for t in range(T):
        occupancy[t] = np.bincount(insider, minlength=2)
        keep = _wins(u[:, t], q1, gap, dist, config.sample_shocks)
        retained += int(keep.sum())
        winner = np.where(keep, insider, 1 - insider)
        if rows is not None:
            rows.append(np.column_stack([np.asarray(reps), np.full(n, t), insider, 1 - insider, winner]))
        insider = winner

    return _Tally(occupancy=occupancy, counts={"insider_wins": retained}, trajectory=rows)


def _chunks(replications: int, size: int) -> List[range]:
    return [range(start, min(start + size, replications)) for start in range(0, replications, size)]


def _trajectory_frame(tallies: List[_Tally]) -> pd.DataFrame:
    blocks = [block for tally in tallies for block in tally.trajectory]
    data = np.concatenate(blocks) if blocks else np.empty((0, 5), dtype=np.int64)
    frame = pd.DataFrame(data.astype(np.int64), columns=TRAJECTORY_COLUMNS)
    frame["winner"] = np.where(frame["winner"].to_numpy() == 0, "A", "B")
    return frame.sort_values(["rep", "period"], kind="stable").reset_index(drop=True)


# ===== Operations =====

def simulate(
    eq: Union[LbdEquilibrium, SwitchingEquilibrium],
    config: SimConfig,
    dist: Optional[ShockDistribution] = None
) -> SimResult:
    """
    Simulate R replications of T periods under the solved policy.

    In every period firm A (for lbd) or the insider (for switching) wins with
    probability q of the current state. Results depend only on (eq, config).

    Args:
        eq: Solved equilibrium of the model named by config.model
        config: Run settings
        dist: Shock law for switching with sample_shocks (lbd reads it from eq.params)

    Raises:
        ParameterError: model/equilibrium mismatch, or switching shocks requested without a law
    """
    if config.model == SimModel.LBD:
        if not isinstance(eq, LbdEquilibrium):
            raise ParameterError("lbd simulation needs an LbdEquilibrium")
        kernel = lambda reps: _lbd_chunk(eq, config, reps)  # noqa: E731
    else:
        if not isinstance(eq, SwitchingEquilibrium):
            raise ParameterError("switching simulation needs a SwitchingEquilibrium")
        if config.sample_shocks and dist is None:
            raise ParameterError("sample_shocks for switching needs the shock distribution")
        kernel = lambda reps: _switching_chunk(eq, dist, config, reps)  # noqa: E731

    chunks = _chunks(config.replications, config.chunk_size)
    logger.debug(f"Simulating {config.replications} replications in {len(chunks)} chunks")
    tallies = ordered_map(kernel, chunks, config.max_workers)

    counts: Dict[str, int] = {}
    for tally in tallies:
        for key, value in tally.counts.items():
            counts[key] = counts.get(key, 0) + value

    occupancy = sum(t.occupancy for t in tallies)
    result = SimResult(
        model=config.model,
        config=config,
        occupancy=occupancy / config.replications,
        state_visits=sum(t.state_visits for t in tallies) if config.model == SimModel.LBD else None,
        state_wins=sum(t.state_wins for t in tallies) if config.model == SimModel.LBD else None,
        trajectories=_trajectory_frame(tallies) if config.record_trajectories else None,
        **counts,
    )
    logger.info(f"✓ Simulated {config.replications} x {config.periods} periods ({config.model.value})")
    return result


def dominance_statistics(result: SimResult) -> Dict[str, float]:
    """
    Whether winning the first sale leads to finishing ahead.

    Returns:
        first_winner_ahead_probability: share of replications where the first-period
            winner ends with strictly more cumulative sales
        mean_lead: mean final lead of the first-period winner (negative when it fell behind)
        first_period_win_rate_a / final_ahead_rate_a: firm A's first-period win share and
            share of replications finishing strictly ahead (equal when T = 1)
    """
    if result.model != SimModel.LBD:
        raise ParameterError("dominance statistics apply to lbd simulations")
    R = result.replications
    return {
        "first_winner_ahead_probability": result.first_winner_ahead / R,
        "mean_lead": result.lead_total / R,
        "first_period_win_rate_a": result.first_wins_a / R,
        "final_ahead_rate_a": result.final_ahead_a / R,
    }
