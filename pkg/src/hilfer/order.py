"""The fractional order pair of a Hilfer derivative."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParameterError


@dataclass(frozen=True)
class HilferOrder:
    """Order ``mu`` in (0, 1] and type ``nu`` in [0, 1].

    ``nu = 0`` is Riemann-Liouville, ``nu = 1`` is Caputo.
    """

    mu: float
    nu: float

    def __post_init__(self) -> None:
        if not (0.0 < self.mu <= 1.0):
            raise ParameterError(f"mu={self.mu} outside (0, 1]")
        if not (0.0 <= self.nu <= 1.0):
            raise ParameterError(f"nu={self.nu} outside [0, 1]")

    @property
    def beta(self) -> float:
        """``mu + nu (1 - mu)``; forward modes behave like ``t^(beta-1)``."""
        return self.mu + self.nu * (1.0 - self.mu)

    @property
    def gamma(self) -> float:
        """``(1 - nu)(1 - mu)``, the order of the inner integral."""
        return (1.0 - self.nu) * (1.0 - self.mu)

    @property
    def outer(self) -> float:
        """``nu (1 - mu)``, the order of the outer integral."""
        return self.nu * (1.0 - self.mu)

    def dual(self) -> HilferOrder:
        """The order ``(mu, 1 - nu)`` of the backward (adjoint) problem."""
        return HilferOrder(self.mu, 1.0 - self.nu)
