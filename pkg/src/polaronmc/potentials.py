"""Pair interaction potentials w(t, x) and their (g, v) factorization.

Every potential is written as w(t, x) = g(t) v(t, x) with the exponential
time factor g(t) = beta * exp(-beta * t).  This choice makes the service
times of the underlying interval process exponential, so all queue-side
formulas stay closed-form; v carries the spatial part of the interaction.

For potentials whose spatial profile is completely monotone in |x|^2, v
admits a representation as a scale mixture of centered Gaussian bumps,

    v(t, x) = integral mu(du) exp(-u^2 |x|^2 / 2),

encoded here as a `MarkLaw`.  The mixture form is what makes exact (no
Metropolis) Gaussian weight estimation and path sampling possible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate, optimize


@dataclass(frozen=True)
class MarkLaw:
    """Gaussian scale-mixture representation of the spatial profile.

    h_single(L) = integral mu(du) (1 + u^2 L)^(-d/2), the exact single
    interval weight for an interval of length L; sample_posterior draws
    marks u from the density proportional to mu(du) (1 + u^2 L)^(-d/2).
    """

    h_single: Callable[[float], float]
    sample_posterior: Callable[[np.random.Generator, float, int], np.ndarray]


@dataclass(frozen=True)
class Potential:
    name: str
    d: int
    beta: float
    eval_w: Callable  # (t, x[..., d]) -> values, +inf allowed
    eval_v: Callable  # (t, x[..., d]) -> values, v = w / g
    rotationally_symmetric: bool
    quasiconcave_in_x: bool
    completely_monotone: bool
    closed_form_h: Callable[[float, float], float] | None = None
    marks: MarkLaw | None = None
    w_radial: Callable[[float, float], float] | None = None  # (t, r) -> w
    closed_form_F: Callable | None = None  # exact cluster weight, when known
    params: dict = field(default_factory=dict)

    def g(self, t):
        t = np.asarray(t, dtype=float)
        return self.beta * np.exp(-self.beta * t)


def _norm(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.sum(x * x, axis=-1))


def make_frohlich() -> Potential:
    """Coulomb-type interaction w(t, x) = exp(-|t|) / |x| in d = 3."""

    def eval_w(t, x):
        r = _norm(x)
        with np.errstate(divide="ignore"):
            return np.exp(-np.abs(np.asarray(t, dtype=float))) / r

    def eval_v(t, x):
        r = _norm(x)
        with np.errstate(divide="ignore"):
            return np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0), np.inf)

    c = np.sqrt(2.0 / np.pi)

    def h_single(L: float) -> float:
        # E[1/|X_L|] for a 3-dim Gaussian increment of variance L per axis.
        return c / np.sqrt(L)

    def sample_posterior(rng: np.random.Generator, L: float, n: int) -> np.ndarray:
        # Mark density prop. to (1 + u^2 L)^(-3/2); in s = u sqrt(L) the CDF
        # is s / sqrt(1 + s^2), inverted in closed form.
        p = rng.random(n)
        s = p / np.sqrt(1.0 - p * p)
        return s / np.sqrt(L)

    return Potential(
        name="frohlich",
        d=3,
        beta=1.0,
        eval_w=eval_w,
        eval_v=eval_v,
        rotationally_symmetric=True,
        quasiconcave_in_x=True,
        completely_monotone=True,
        closed_form_h=lambda t1, t2: c / np.sqrt(t2),
        marks=MarkLaw(h_single=h_single, sample_posterior=sample_posterior),
        w_radial=lambda t, r: np.exp(-abs(t)) / r,
    )


def make_trivial(beta: float = 1.0, d: int = 3) -> Potential:
    """w = g, v identically 1: the analytic ground-truth potential."""
    if beta <= 0:
        raise ValueError("beta must be positive")

    def eval_v(t, x):
        return np.ones(np.broadcast(np.asarray(t, float), _norm(x)).shape)

    def eval_w(t, x):
        return beta * np.exp(-beta * np.abs(np.asarray(t, float))) * eval_v(t, x)

    return Potential(
        name="trivial",
        d=d,
        beta=beta,
        eval_w=eval_w,
        eval_v=eval_v,
        rotationally_symmetric=True,
        quasiconcave_in_x=True,
        completely_monotone=True,
        closed_form_h=lambda t1, t2: 1.0,
        marks=MarkLaw(
            h_single=lambda L: 1.0,
            sample_posterior=lambda rng, L, n: np.zeros(n),
        ),
        w_radial=lambda t, r: beta * np.exp(-beta * abs(t)),
        closed_form_F=lambda cluster: 1.0,
        params={"beta": beta, "d": d},
    )


def make_bounded_exponential(c: float, beta: float, ell: float, d: int = 3) -> Potential:
    """Bounded Gaussian-profile interaction c exp(-beta t) exp(-|x|^2/(2 ell^2))."""
    if c <= 0 or beta <= 0 or ell <= 0:
        raise ValueError("parameters must be positive")
    amp = c / beta
    u0 = 1.0 / ell

    def eval_v_simple(t, x):
        r2 = np.sum(np.asarray(x, float) ** 2, axis=-1)
        return amp * np.exp(-r2 / (2.0 * ell * ell))

    def eval_w(t, x):
        return beta * np.exp(-beta * np.abs(np.asarray(t, float))) * eval_v_simple(t, x)

    def h_single(L: float) -> float:
        return amp * (1.0 + u0 * u0 * L) ** (-d / 2.0)

    return Potential(
        name="bounded_exp",
        d=d,
        beta=beta,
        eval_w=eval_w,
        eval_v=eval_v_simple,
        rotationally_symmetric=True,
        quasiconcave_in_x=True,
        completely_monotone=True,
        closed_form_h=lambda t1, t2: amp * (1.0 + u0 * u0 * t2) ** (-d / 2.0),
        marks=MarkLaw(
            h_single=h_single,
            sample_posterior=lambda rng, L, n: np.full(n, u0),
        ),
        w_radial=lambda t, r: c * np.exp(-beta * abs(t)) * np.exp(-r * r / (2.0 * ell * ell)),
        params={"c": c, "beta": beta, "ell": ell, "d": d},
    )


def make_nelson(kappa: float, lambda_uv: float, beta: float | None = None) -> Potential:
    """Infrared/ultraviolet-regularized interaction

        w(t, x) = 4 pi * integral_kappa^Lambda exp(-r|t|) sin(r|x|)/|x| dr,

    computed by adaptive quadrature.  The time factor of the factorization
    must be chosen by the user; beta defaults to kappa (slowest mode) or 1.
    """
    if not (0 <= kappa < lambda_uv):
        raise ValueError("need 0 <= kappa < lambda_uv")
    if beta is None:
        beta = kappa if kappa > 0 else 1.0

    def _w_scalar(t: float, rho: float) -> float:
        t = abs(t)
        if rho == 0.0:
            f = lambda r: 4.0 * np.pi * r * np.exp(-r * t)
        else:
            f = lambda r: 4.0 * np.pi * np.exp(-r * t) * np.sin(r * rho) / rho
        val, _ = integrate.quad(f, kappa, lambda_uv, epsabs=1e-10, limit=200)
        return val

    def eval_w(t, x):
        rho = _norm(x)
        t_arr, rho_arr = np.broadcast_arrays(np.asarray(t, float), rho)
        out = np.empty(t_arr.shape)
        for idx in np.ndindex(t_arr.shape):
            out[idx] = _w_scalar(t_arr[idx], rho_arr[idx])
        return out if out.shape else float(out)

    def eval_v(t, x):
        g = beta * np.exp(-beta * np.abs(np.asarray(t, float)))
        return eval_w(t, x) / g

    return Potential(
        name="nelson",
        d=3,
        beta=beta,
        eval_w=eval_w,
        eval_v=eval_v,
        rotationally_symmetric=True,
        quasiconcave_in_x=False,
        completely_monotone=False,
        w_radial=lambda t, r: _w_scalar(t, r),
        params={"kappa": kappa, "lambda_uv": lambda_uv, "beta": beta},
    )


def shift_by_g(pot: Potential, c: float) -> Potential:
    """Add c * g(t) to the interaction, i.e. replace v by v + c.

    Useful to force v > 1 (or v bounded away from zero) without changing
    the time factor.
    """
    if c <= 0:
        raise ValueError("shift must be positive")
    base_v, base_w = pot.eval_v, pot.eval_w
    beta = pot.beta

    def eval_v(t, x):
        return base_v(t, x) + c

    def eval_w(t, x):
        return base_w(t, x) + c * beta * np.exp(-beta * np.abs(np.asarray(t, float)))

    marks = None
    if pot.marks is not None:
        old = pot.marks

        def h_single(L: float) -> float:
            return old.h_single(L) + c

        def sample_posterior(rng, L, n):
            # Posterior mixture of the old marks and an atom at u = 0 with
            # weight c (a Gaussian bump of zero precision is the constant 1).
            h_old = old.h_single(L)
            take_zero = rng.random(n) < c / (c + h_old)
            u = old.sample_posterior(rng, L, n)
            u[take_zero] = 0.0
            return u

        marks = MarkLaw(h_single=h_single, sample_posterior=sample_posterior)

    cfh = None
    if pot.closed_form_h is not None:
        base_h = pot.closed_form_h
        cfh = lambda t1, t2: base_h(t1, t2) + c

    wrad = None
    if pot.w_radial is not None:
        base_rad = pot.w_radial
        wrad = lambda t, r: base_rad(t, r) + c * beta * np.exp(-beta * abs(t))

    return replace(
        pot,
        name=pot.name + "+shift",
        eval_v=eval_v,
        eval_w=eval_w,
        closed_form_h=cfh,
        marks=marks,
        w_radial=wrad,
        closed_form_F=None,
        params={**pot.params, "shift": c},
    )


def make_constant_v(c: float, beta: float = 1.0, d: int = 3) -> Potential:
    """w = c * g, v identically c; all tilting quantities are closed-form."""
    if c <= 0:
        raise ValueError("c must be positive")
    if c == 1.0:
        return make_trivial(beta=beta, d=d)
    return _scaled_trivial(c, beta, d)


def _scaled_trivial(c: float, beta: float, d: int) -> Potential:
    base = make_trivial(beta=beta, d=d)

    def eval_v(t, x):
        return c * base.eval_v(t, x)

    def eval_w(t, x):
        return c * base.eval_w(t, x)

    return replace(
        base,
        name=f"const_v",
        eval_v=eval_v,
        eval_w=eval_w,
        closed_form_h=lambda t1, t2: c,
        marks=MarkLaw(h_single=lambda L: c, sample_posterior=lambda rng, L, n: np.zeros(n)),
        closed_form_F=lambda cluster: float(c**cluster.n_customers),
        params={"c": c, "beta": beta, "d": d},
    )


def w_beta_sup(pot: Potential, beta: float, r: float, t_max: float = 200.0) -> float:
    """sup over t >= 0 of exp(beta t) * w(t, r e_1) for radial potentials.

    Raises OverflowError when the supremum is infinite (beta exceeds the
    temporal decay rate of w).
    """
    if pot.w_radial is None:
        raise ValueError("potential does not expose a radial profile")
    phi = lambda t: np.exp(beta * t) * pot.w_radial(t, r)
    grid = np.linspace(0.0, t_max, 4001)
    vals = np.array([phi(t) for t in grid])
    if vals[-1] > vals[len(vals) // 2] * (1.0 + 1e-9) and vals[-1] >= vals[0]:
        raise OverflowError("supremum over t diverges for this beta")
    i = int(np.argmax(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda t: -phi(t), bounds=(lo, hi), method="bounded")
        return float(max(vals[i], -res.fun))
    return float(vals[i])


POTENTIAL_REGISTRY = {
    "frohlich": lambda params: make_frohlich(),
    "trivial": lambda params: make_trivial(beta=params.get("beta", 1.0), d=int(params.get("d", 3))),
    "bounded_exp": lambda params: make_bounded_exponential(
        c=params["c"], beta=params["beta"], ell=params["ell"], d=int(params.get("d", 3))
    ),
    "nelson": lambda params: make_nelson(
        kappa=params["kappa"], lambda_uv=params["lambda_uv"], beta=params.get("beta")
    ),
    "const_v": lambda params: make_constant_v(
        c=params["c"], beta=params.get("beta", 1.0), d=int(params.get("d", 3))
    ),
}


def from_config(name: str, params: dict | None = None) -> Potential:
    """Build a potential from its registry key plus a parameter table."""
    params = dict(params or {})
    if name not in POTENTIAL_REGISTRY:
        raise KeyError(f"unknown potential key: {name!r}")
    pot = POTENTIAL_REGISTRY[name](params)
    shift = params.get("shift")
    if shift:
        pot = shift_by_g(pot, float(shift))
    return pot
