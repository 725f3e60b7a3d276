"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``.

Both implementations perform the same floating-point operations in the same
order, so they agree bit for bit.
"""

import numpy as np


def advance(cum, states, actions, u, out):
    """Inverse-CDF step: ``out[p] = #{k < m-1 : cum[states[p], actions[p], k] <= u[p]}``."""
    rows = cum[states, actions, :-1]
    out[:] = np.count_nonzero(rows <= u[:, None], axis=1)
    return out


def _wrap(raw):
    raw = np.where(raw > 1.0, raw - 1.0, np.where(raw < 0.0, raw + 1.0, raw))
    raw[(raw <= 0.0) | (raw >= 1.0)] = 0.5
    return raw


def wrap_step(theta, gamma, omega):
    """Wrapped AR(1) step on (0, 1): ``gamma*theta + (1-gamma)*omega`` folded by +-1."""
    return _wrap(gamma * theta + (1.0 - gamma) * omega)


def example1_step(theta, thetabar, omega, gamma, cost, weight, path_weight, acc, dacc):
    """One period of the nonlinear-pricing paths, all in place.

    ``theta`` is ``(G, N)`` (true types for each grid start), ``thetabar`` is
    ``(N,)`` (reported types).  Accumulates ``weight * theta * a*(thetabar)``
    into ``acc`` and ``path_weight * a*(thetabar)`` into ``dacc``, then moves
    both type processes with the shared draw ``omega``.
    """
    alloc = (thetabar >= cost).astype(np.float64)
    dacc += path_weight * alloc
    acc += (weight * theta) * alloc[None, :]
    theta[...] = wrap_step(theta, gamma, omega[None, :])
    thetabar[...] = wrap_step(thetabar, gamma, omega)
