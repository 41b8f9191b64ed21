"""Physical constants and unit systems.

Every routine that needs c0, eps0, hbar or k_B takes a ``units`` argument.
``SI`` is the default; ``NORMALIZED`` sets c0 = eps0 = hbar = k_B = 1, which
keeps desk-scale problems well conditioned.
"""
from dataclasses import dataclass, asdict

import numpy as np
from scipy import constants as _sc


@dataclass(frozen=True)
class Units:
    name: str
    c0: float
    eps0: float
    hbar: float
    kB: float

    @property
    def mu0(self) -> float:
        return 1.0 / (self.eps0 * self.c0 ** 2)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["mu0"] = self.mu0
        return d


SI = Units("SI", _sc.c, _sc.epsilon_0, _sc.hbar, _sc.k)
NORMALIZED = Units("normalized", 1.0, 1.0, 1.0, 1.0)


def get_units(name: str) -> Units:
    if name in ("SI", "si"):
        return SI
    if name == "normalized":
        return NORMALIZED
    raise ValueError(f"unknown unit system {name!r}")


FOUR_PI = 4.0 * np.pi
