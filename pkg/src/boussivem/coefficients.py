"""Temperature-dependent coefficients and problem data.

The admissible coefficient forms are constants and exponentials exp(a*phi),
which keeps Newton derivatives exact. Both viscosity and conductivity must
stay strictly positive; evaluation raises CoefficientOutOfBounds otherwise.
"""

import numpy as np

from .exceptions import CoefficientOutOfBounds, ConfigError


class TemperatureCoefficient:
    """mu(phi) = value (const) or exp(a*phi)."""

    def __init__(self, kind, value=1.0, a=0.0):
        if kind not in ("const", "exp"):
            raise ConfigError(f"coefficient kind {kind!r} not in whitelist")
        self.kind = kind
        self.value = float(value)
        self.a = float(a)

    def __call__(self, phi):
        phi = np.asarray(phi, dtype=float)
        if self.kind == "const":
            return np.full(phi.shape, self.value)
        return np.exp(self.a * phi)

    def derivative(self, phi):
        phi = np.asarray(phi, dtype=float)
        if self.kind == "const":
            return np.zeros(phi.shape)
        return self.a * np.exp(self.a * phi)

    def to_dict(self):
        if self.kind == "const":
            return {"kind": "const", "value": self.value}
        return {"kind": "exp", "a": self.a}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], value=d.get("value", 1.0), a=d.get("a", 0.0))

    def __eq__(self, other):
        return (isinstance(other, TemperatureCoefficient)
                and self.to_dict() == other.to_dict())

    def __repr__(self):
        if self.kind == "const":
            return f"TemperatureCoefficient('const', value={self.value})"
        return f"TemperatureCoefficient('exp', a={self.a})"


class Coefficients:
    """Model coefficients of the five-field system.

    viscous_scale multiplies mu (1 for the plain system, 2*Pr for the
    Ra/Pr-scaled one); buoyancy_scale multiplies the phi g load (1 or Ra*Pr).
    """

    def __init__(self, mu, kappa, g=(0.0, 1.0), viscous_scale=1.0,
                 buoyancy_scale=1.0):
        self.mu = mu
        self.kappa = kappa
        self.g = np.asarray(g, dtype=float)
        self.viscous_scale = float(viscous_scale)
        self.buoyancy_scale = float(buoyancy_scale)

    def _check(self, vals, name):
        if vals.min() <= 0.0:
            raise CoefficientOutOfBounds(
                f"{name} must stay positive (min {vals.min():.3e})")

    def mu_eff(self, phi):
        vals = self.viscous_scale * self.mu(phi)
        self._check(vals, "viscosity")
        return vals

    def mu_eff_prime(self, phi):
        return self.viscous_scale * self.mu.derivative(phi)

    def kappa_val(self, phi):
        vals = self.kappa(phi)
        self._check(vals, "conductivity")
        return vals

    def kappa_prime(self, phi):
        return self.kappa.derivative(phi)

    def buoyancy(self):
        return self.buoyancy_scale * self.g


class ProblemData:
    """Coefficients plus boundary data and optional manufactured sources.

    phi_D maps (npts, 2) points to Dirichlet temperature values; f_src and
    q_src (if given) are momentum/energy source terms entering the right-hand
    sides as element loads.
    """

    def __init__(self, coefficients, phi_D=None, f_src=None, q_src=None):
        self.coefficients = coefficients
        self.phi_D = phi_D if phi_D is not None else \
            (lambda pts: np.zeros(len(np.atleast_2d(pts))))
        self.f_src = f_src
        self.q_src = q_src
