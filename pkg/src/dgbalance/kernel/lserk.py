"""Low-storage explicit Runge-Kutta schemes (2N storage, Williamson form).

Each stage performs ``du = a_i du + dt L(u, t + c_i dt)`` followed by
``u = u + b_i du``, so only the state and one residual register live
across stages.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LserkScheme:
    name: str
    a: tuple[float, ...]
    b: tuple[float, ...]
    c: tuple[float, ...]
    order: int

    def __post_init__(self):
        if not (len(self.a) == len(self.b) == len(self.c)) or not self.a:
            raise ValueError("stage coefficient arrays must have equal, non-zero length")
        if self.a[0] != 0.0:
            raise ValueError("first stage must not reuse a residual register")

    @property
    def n_stages(self) -> int:
        return len(self.a)

    def step(self, u: np.ndarray, t: float, dt: float, rhs) -> np.ndarray:
        """Advance a plain array ODE ``du/dt = rhs(u, t)`` by one step."""
        u = np.array(u, dtype=float, copy=True)
        du = np.zeros_like(u)
        for a, b, c in zip(self.a, self.b, self.c):
            du = a * du + dt * rhs(u, t + c * dt)
            u = u + b * du
        return u


# Carpenter & Kennedy five-stage fourth-order coefficients
CK45 = LserkScheme(
    name="ck45",
    a=(0.0,
       -567301805773.0 / 1357537059087.0,
       -2404267990393.0 / 2016746695238.0,
       -3550918686646.0 / 2091501179385.0,
       -1275806237668.0 / 842570457699.0),
    b=(1432997174477.0 / 9575080441755.0,
       5161836677717.0 / 13612068292357.0,
       1720146321549.0 / 2090206949498.0,
       3134564353537.0 / 4481467310338.0,
       2277821191437.0 / 14882151754819.0),
    c=(0.0,
       1432997174477.0 / 9575080441755.0,
       2526269341429.0 / 6820363962896.0,
       2006345519317.0 / 3224310063776.0,
       2802321613138.0 / 2924317926251.0),
    order=4,
)

# single-stage forward Euler written in low-storage form, useful for tests
EULER = LserkScheme(name="euler", a=(0.0,), b=(1.0,), c=(0.0,), order=1)

SCHEMES = {s.name: s for s in (CK45, EULER)}


def get_scheme(name: str) -> LserkScheme:
    try:
        return SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown LSERK scheme {name!r}, choose from {sorted(SCHEMES)}") from None
