"""
Control signals of target-aware forgetting: the forgetting weight k(t), the
consistency indicator, the threshold beta and the retaining mask tau.
"""

import enum
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from unlearnlab.errors import ConfigError, NumericError, PolicyError, RangeError

logger = logging.getLogger(__name__)


class ScheduleMode(enum.Enum):
    ANNEALED = "annealed"
    CONSTANT = "constant"
    INCREASING = "increasing"


class Granularity(enum.Enum):
    CLASSWISE = "classwise"
    INSTANCEWISE = "instancewise"


@dataclass(frozen=True)
class AnnealSchedule:
    """
    Parameters
    ----------
    k : float
        initial forgetting strength
    t0 : int
        offset of the end of active forgetting, k(t) reaches 0 at T - t0
    t1 : int
        epoch at which retaining starts and tau is frozen
    T : int
        total epochs
    mode : ScheduleMode
        annealed, constant or increasing
    """

    k: float
    t0: int
    t1: int
    T: int
    mode: ScheduleMode = ScheduleMode.ANNEALED

    def __post_init__(self):
        object.__setattr__(self, "mode", ScheduleMode(self.mode))
        if not (self.k >= 0 and math.isfinite(self.k)):
            raise ConfigError("k must be a finite value >= 0", "schedule.k")
        if self.T < 1:
            raise ConfigError("total epochs must be >= 1", "schedule.T")
        if not 0 <= self.t0 <= self.T:
            raise ConfigError(f"t0 must be in [0, {self.T}]", "schedule.t0")
        if not 0 <= self.t1 <= self.T:
            raise ConfigError(f"t1 must be in [0, {self.T}]", "schedule.t1")


@dataclass(frozen=True)
class TauPolicy:
    granularity: Granularity = Granularity.CLASSWISE
    declared_count: int | None = None
    quantile: float = 0.1
    beta_override: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "granularity", Granularity(self.granularity))
        if self.declared_count is not None and self.declared_count < 0:
            raise ConfigError("declared count must be >= 0", "tau.declared_count")
        if self.granularity == Granularity.INSTANCEWISE and not 0 < self.quantile < 1:
            raise ConfigError("quantile must be in (0, 1)", "tau.quantile")
        if self.beta_override is not None and math.isnan(self.beta_override):
            raise ConfigError("beta override is NaN", "tau.beta_override")

    def with_declared_count(self, count: int) -> "TauPolicy":
        """
        fill in the declared count when the policy leaves it open.
        """
        if self.declared_count is not None:
            return self
        return replace(self, declared_count=count)


@dataclass(frozen=True, eq=False)
class TauMask:
    """
    Per-unit retain (1) / exclude (0) decision fixed at epoch `frozen_at`.
    """

    values: np.ndarray
    frozen_at: int
    beta: float

    def __post_init__(self):
        values = np.array(self.values, dtype=np.int8, copy=True)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def at(self, t: int) -> np.ndarray:
        if t < self.frozen_at:
            return np.zeros_like(self.values)
        return self.values

    @property
    def retained(self) -> int:
        return int(self.values.sum())

    def __len__(self) -> int:
        return len(self.values)


def k_at(sched: AnnealSchedule, t: int) -> float:
    if t < 0 or t > sched.T:
        raise RangeError(f"epoch {t} outside [0, {sched.T}]")
    match sched.mode:
        case ScheduleMode.ANNEALED:
            return max(0.0, sched.k * (sched.T - t - sched.t0) / sched.T)
        case ScheduleMode.CONSTANT:
            return float(sched.k)
        case ScheduleMode.INCREASING:
            return sched.k * (t + sched.t0) / sched.T


def con_indicator(loss_before, loss_after):
    """
    |loss_before - loss_after|, elementwise for arrays.
    """
    before = np.asarray(loss_before, dtype=np.float64)
    after = np.asarray(loss_after, dtype=np.float64)
    if not (np.all(np.isfinite(before)) and np.all(np.isfinite(after))):
        raise NumericError("consistency indicator of a non-finite loss")
    out = np.abs(before - after)
    if out.ndim == 0:
        return float(out)
    return out


def estimate_beta(changes, policy: TauPolicy) -> float:
    """
    threshold separating high-change units from the retained ones.

    class-wise: midpoint between the N-th and (N+1)-th largest change, +inf
    for N = 0. instance-wise: the (1 - q) quantile of the changes.
    """
    if policy.beta_override is not None:
        return float(policy.beta_override)
    values = np.asarray(changes, dtype=np.float64).reshape(-1)
    if len(values) == 0:
        raise PolicyError("no units to rank")
    if not np.all(np.isfinite(values)):
        raise NumericError("non-finite change value")
    match policy.granularity:
        case Granularity.CLASSWISE:
            n = policy.declared_count
            if n is None:
                raise PolicyError("class-wise threshold needs a declared count")
            if n == 0:
                return math.inf
            if n >= len(values):
                raise PolicyError(f"declared count {n} leaves no unit below the threshold")
            ranked = np.sort(values)[::-1]
            return float((ranked[n - 1] + ranked[n]) / 2)
        case Granularity.INSTANCEWISE:
            return float(np.quantile(values, 1.0 - policy.quantile))


def tau_mask(changes, beta: float, t: int, t1: int) -> TauMask:
    """
    retain units whose change is strictly below `beta`; all zero before t1.
    """
    values = np.asarray(changes, dtype=np.float64).reshape(-1)
    if t < t1:
        return TauMask(np.zeros(len(values), dtype=np.int8), t1, beta)
    mask = TauMask((values < beta).astype(np.int8), t1, beta)
    logger.debug("tau frozen at %d: beta=%g, %d/%d retained", t1, beta, mask.retained, len(mask))
    return mask
