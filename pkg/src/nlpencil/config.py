"""Numeric defaults for every module, in one place.

Values resolve in three layers: the dataclass defaults below, then
``NLPENCIL_<FIELD>`` environment variables, then explicit overrides
(the CLI passes its flags through :func:`configure`).
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields

ENV_PREFIX = "NLPENCIL_"


@dataclass(frozen=True)
class Settings:
    # ode
    grid_n: int = 1024
    min_grid_n: int = 512
    atol: float = 1e-10
    rtol: float = 1e-10
    overflow_threshold: float = 1e100
    max_steps: int = 2_000_000
    # model
    h1_floor: float = 1e-12
    # charfns
    pole_floor: float = 1e-12
    # spectra
    root_tol: float = 1e-10
    newton_max_iter: int = 100
    cluster_size: float = 1e-3
    boundary_floor: float = 1e-10
    condition_gap: float = 1e-6
    # asymptotics
    bound_constant: float = 100.0
    # inverse
    fd_step: float = 1e-6
    damping: float = 1e-3
    max_iter: int = 50
    inverse_tol: float = 1e-8
    # execution
    workers: int = 0  # 0 -> os.cpu_count()
    seed: int = 0


def _coerce(field_type: str, raw: str):
    if field_type == "int":
        return int(raw)
    return float(raw)


def from_environment(base: Settings | None = None) -> Settings:
    base = base or Settings()
    updates = {}
    for f in fields(Settings):
        raw = os.environ.get(ENV_PREFIX + f.name.upper())
        if raw is not None:
            updates[f.name] = _coerce(f.type, raw)
    return dataclasses.replace(base, **updates)


_current = from_environment()


def current() -> Settings:
    return _current


def configure(**overrides) -> Settings:
    """Replace the active settings; ``None`` values are ignored."""
    global _current
    clean = {k: v for k, v in overrides.items() if v is not None}
    _current = dataclasses.replace(from_environment(), **clean)
    return _current


def reset() -> Settings:
    global _current
    _current = from_environment()
    return _current


def workers() -> int:
    w = current().workers
    return w if w > 0 else (os.cpu_count() or 1)
