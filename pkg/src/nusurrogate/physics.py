"""Closed-form Nusselt correlation for liquid sodium in rectangular minichannels.

    gamma   = alpha**0.35 / (L/Dh)**0.1
    Pe*     = Pe * gamma
    Nu*     = 0.164 + 10.2 gamma - 12 gamma**2
    Nu_hat  = Nu* (1 + 0.135 Pe***0.388)

All coefficients are carried by :class:`PhysicsParams` so perturbed variants
(e.g. the water-analog generator) reuse the same code.
"""

import warnings
from dataclasses import asdict, dataclass

import numpy as np

# validated envelope of the correlation
ALPHA_RANGE = (0.143, 1.0)
LD_RANGE = (75.0, 150.0)
PE_RANGE = (3.9, 163.0)


class DomainError(ValueError):
    pass


class NegativePrediction(ValueError):
    pass


class RangeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PhysicsParams:
    alpha_exp: float = 0.35
    ld_exp: float = 0.1
    c0: float = 0.164
    c1: float = 10.2
    c2: float = 12.0
    pe_coeff: float = 0.135
    pe_exp: float = 0.388

    def __post_init__(self):
        vals = np.array(list(asdict(self).values()), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("physics coefficients must be finite")
        if self.pe_exp <= 0:
            raise ValueError("pe_exp must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(v) for k, v in d.items()})


SODIUM = PhysicsParams()
# stand-in source fluid for transfer learning; no public water data exists
WATER_ANALOG = PhysicsParams(c0=0.3, c1=8.0, pe_exp=0.45)


def _positive(name, x):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise DomainError(f"{name} must be finite and > 0")
    return x


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def gamma(alpha, l_over_d, p=SODIUM):
    alpha = _positive("alpha", alpha)
    l_over_d = _positive("l_over_d", l_over_d)
    return _scalar_or_array(alpha ** p.alpha_exp / l_over_d ** p.ld_exp)


def pe_star(pe, g):
    return _scalar_or_array(np.asarray(pe, dtype=float) * np.asarray(g, dtype=float))


def nu_star(g, p=SODIUM):
    g = np.asarray(g, dtype=float)
    return _scalar_or_array(p.c0 + p.c1 * g - p.c2 * g * g)


def in_envelope(alpha, l_over_d, pe):
    alpha, l_over_d, pe = (np.asarray(v, dtype=float) for v in (alpha, l_over_d, pe))
    return ((alpha >= ALPHA_RANGE[0]) & (alpha <= ALPHA_RANGE[1])
            & (l_over_d >= LD_RANGE[0]) & (l_over_d <= LD_RANGE[1])
            & (pe >= PE_RANGE[0]) & (pe <= PE_RANGE[1]))


def nu_ave_hat(alpha, l_over_d, pe, p=SODIUM, warn=True):
    """Physics estimate of the average Nusselt number.

    Works elementwise on arrays. Inputs outside the validated envelope
    trigger a :class:`RangeWarning`, not an error.

    Raises
    ------
    DomainError
        Non-positive ``alpha`` or ``l_over_d``, or negative ``pe``.
    NegativePrediction
        Any result <= 0 (only reachable outside the envelope).
    """
    pe_arr = np.asarray(pe, dtype=float)
    if np.any(~np.isfinite(pe_arr)) or np.any(pe_arr < 0):
        raise DomainError("pe must be finite and >= 0")
    g = np.asarray(gamma(alpha, l_over_d, p))
    if warn and not np.all(in_envelope(alpha, l_over_d, pe_arr)):
        warnings.warn("inputs outside the validated correlation envelope",
                      RangeWarning, stacklevel=2)
    out = np.asarray(nu_star(g, p)) * (1.0 + p.pe_coeff * (pe_arr * g) ** p.pe_exp)
    if np.any(out <= 0):
        raise NegativePrediction("correlation predicts a non-positive Nusselt number")
    return _scalar_or_array(out)


def evaluate_chain(alpha, l_over_d, pe, p=SODIUM):
    """All intermediate quantities for one input, as a dict."""
    g = gamma(alpha, l_over_d, p)
    return {
        "gamma": g,
        "pe_star": pe_star(pe, g),
        "nu_star": nu_star(g, p),
        "nu_ave_hat": nu_ave_hat(alpha, l_over_d, pe, p),
    }


def physics_predict(features, p=SODIUM, warn=False):
    """Correlation applied to raw feature rows (alpha, W, Dh, L, L/D, Pe)."""
    F = np.atleast_2d(np.asarray(features, dtype=float))
    return np.asarray(nu_ave_hat(F[:, 0], F[:, 4], F[:, 5], p, warn=warn), dtype=float)
