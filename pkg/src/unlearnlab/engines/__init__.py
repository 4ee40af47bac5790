from typing import Callable

from unlearnlab.engines.base import (
    EngineConfig,
    UfMode,
    UnlearnOutcome,
    pretrain,
    retrain_reference,
)
from unlearnlab.engines.baselines import (
    bs_run,
    ft_run,
    ga_run,
    l1_sparse_run,
    rl_run,
    salun_run,
    scrub_run,
)
from unlearnlab.engines.tarf import tarf_instance_run, tarf_run
from unlearnlab.errors import MethodError

ENGINES: dict[str, Callable[..., UnlearnOutcome]] = {
    "tarf": tarf_run,
    "tarf-i": tarf_instance_run,
    "ft": ft_run,
    "ga": ga_run,
    "rl": rl_run,
    "l1": l1_sparse_run,
    "bs": bs_run,
    "salun": salun_run,
    "scrub": scrub_run,
}


def get_engine(name: str) -> Callable[..., UnlearnOutcome]:
    try:
        return ENGINES[name]
    except KeyError:
        raise MethodError(
            f"unknown method {name!r}, expected one of {', '.join(ENGINES)}"
        ) from None
