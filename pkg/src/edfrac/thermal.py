"""Non-mechanical loading: thermal-shock strain field and strength scatter."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

CRITICAL_DROP = math.sqrt(3.0 / 8.0)


@dataclass(frozen=True)
class ThermalShockCase:
    """Sudden surface cooling of a half space, diffusing upward from y = 0.

    intensity scales the critical temperature drop; below 1 the response
    stays elastic. The temperature change is the analytic complementary-error
    profile of the matching diffusion problem.
    """

    beta_th: float = 1.0
    k_c: float = 1.0
    intensity: float = 1.0
    perturb_amplitude: float = 0.02
    seed: int = 0

    @property
    def delta_t(self) -> float:
        return self.intensity * CRITICAL_DROP

    def temperature_change(self, tau, y):
        if tau <= 0.0:
            raise ValueError("time must be positive")
        arg = np.asarray(y, dtype=float) / (2.0 * math.sqrt(self.k_c * tau))
        return -self.delta_t * erfc(arg)

    def thermal_strain(self, tau, y) -> np.ndarray:
        """Prescribed strain vector(s) (eps_xx, eps_yy, 0) at height y."""
        t = self.beta_th * self.temperature_change(tau, y)
        t = np.atleast_1d(t)
        out = np.zeros(t.shape + (3,))
        out[..., 0] = t
        out[..., 1] = t
        return out if out.shape[0] > 1 else out[0]


def perturb_strength(n_elements, sigma_un, amplitude, seed):
    """Per-element tensile strengths with seeded uniform scatter.

    Draws are independent uniform offsets in +-amplitude*sigma_un, one per
    element, reproducible from the seed.
    """
    rng = np.random.default_rng(seed)
    bound = amplitude * sigma_un
    return sigma_un + rng.uniform(-bound, bound, size=n_elements)


def effective_strain(strains, eps_t):
    """Strains entering the constitutive law when a thermal field is active."""
    if eps_t is None:
        return strains
    return strains - eps_t
