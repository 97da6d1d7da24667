"""Problem descriptors: autonomous ODEs, linear systems, canonical Hamiltonians."""
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

__all__ = [
    "CostTally",
    "OdeSystem",
    "LinearSystem",
    "HamiltonianSystem",
    "symplectic_matrix",
    "hamiltonian_to_ode",
    "linearize",
    "linear_ode",
    "anharmonic2d",
    "circ_init",
    "circular_period",
    "circular_orbit",
    "circular_angular_velocity",
    "harmonic1d",
    "quartic1d",
    "quadratic_hamiltonian",
    "SYSTEMS",
    "register_system",
    "get_system",
    "check_jacobian",
    "check_gradient",
]


@dataclass
class CostTally:
    """Evaluation counters for one integration run."""

    f_evals: int = 0
    jac_evals: int = 0
    h_evals: int = 0
    grad_evals: int = 0
    hess_evals: int = 0
    matfun_evals: int = 0

    def units(self, dim, matfun_weight=None):
        """Weighted cost in scalar-evaluation units.

        For a state of size ``dim = d`` with ``m = d // 2`` degrees of
        freedom: F costs d, a Jacobian d**2, an energy evaluation 1, a
        Hamiltonian gradient m and a Hessian m**2.  One matrix-function
        evaluation costs ``matfun_weight`` units (default ``2 d**2``).
        """
        m = max(dim // 2, 1)
        if matfun_weight is None:
            matfun_weight = 2 * dim * dim
        return (self.h_evals
                + dim * self.f_evals + dim * dim * self.jac_evals
                + m * self.grad_evals + m * m * self.hess_evals
                + matfun_weight * self.matfun_evals)

    def copy(self):
        return replace(self)


def symplectic_matrix(m):
    """S = [[0, I], [-I, 0]] for ``m`` degrees of freedom."""
    S = np.zeros((2 * m, 2 * m))
    S[:m, m:] = np.eye(m)
    S[m:, :m] = -np.eye(m)
    return S


@dataclass
class HamiltonianSystem:
    """Canonical Hamiltonian with ``m`` degrees of freedom.

    The raw evaluators take ``(x, p)``; ``grad`` returns ``(H_x, H_p)`` and
    ``hess`` returns ``(H_xx, H_xp, H_px, H_pp)``.  The packed methods work on
    ``y = (x, p)`` and update ``tally``.
    """

    m: int
    h_fn: Callable
    grad: Callable
    hess: Callable
    name: str = "hamiltonian"
    tally: CostTally = field(default_factory=CostTally)

    @property
    def dim(self):
        return 2 * self.m

    def split(self, y):
        y = np.asarray(y, dtype=float)
        return y[:self.m], y[self.m:]

    def energy(self, y):
        self.tally.h_evals += 1
        return float(self.h_fn(*self.split(y)))

    def gradient(self, y):
        self.tally.grad_evals += 1
        hx, hp = self.grad(*self.split(y))
        return np.concatenate([np.atleast_1d(hx), np.atleast_1d(hp)]).astype(float)

    def hessian(self, y):
        self.tally.hess_evals += 1
        m = self.m
        out = np.empty((2 * m, 2 * m))
        hxx, hxp, hpx, hpp = self.hess(*self.split(y))
        out[:m, :m] = hxx
        out[:m, m:] = hxp
        out[m:, :m] = hpx
        out[m:, m:] = hpp
        return out

    def fresh(self):
        return replace(self, tally=CostTally())


@dataclass
class OdeSystem:
    """Autonomous system dx/dt = F(x) with an analytic Jacobian.

    ``hamiltonian`` is set when the system was induced by a
    :class:`HamiltonianSystem`; the gradient schemes need it and runs use it
    to record energies.
    """

    dim: int
    f: Callable
    jac: Callable
    name: str = "ode"
    tally: CostTally = field(default_factory=CostTally)
    hamiltonian: Optional[HamiltonianSystem] = None

    def F(self, x):
        self.tally.f_evals += 1
        return np.asarray(self.f(x), dtype=float).reshape(self.dim)

    def J(self, x):
        self.tally.jac_evals += 1
        return np.asarray(self.jac(x), dtype=float).reshape(self.dim, self.dim)

    def fresh(self):
        """Copy with a new counter instance, sharing it with the Hamiltonian."""
        tally = CostTally()
        hs = None
        if self.hamiltonian is not None:
            hs = replace(self.hamiltonian, tally=tally)
        return replace(self, tally=tally, hamiltonian=hs)


@dataclass
class LinearSystem:
    """dx/dt = A x + b with constant A and b."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        d = self.a.shape[0]
        if self.a.shape != (d, d):
            raise ValueError(f"A must be square, got {self.a.shape}")
        self.b = np.zeros(d) if self.b is None else np.asarray(self.b, dtype=float).reshape(-1)
        if self.b.shape != (d,):
            raise ValueError(f"b has length {self.b.size}, expected {d}")

    @property
    def dim(self):
        return self.a.shape[0]

    def to_ode(self, name="linear"):
        a, b = self.a, self.b
        return OdeSystem(self.dim, lambda x: a @ x + b, lambda x: a, name=name)


def linear_ode(a, b=None, name="linear"):
    return LinearSystem(a, b).to_ode(name)


def hamiltonian_to_ode(hs):
    """Vector field F = (H_p, -H_x) and Jacobian F' = S H_yy of a Hamiltonian."""
    m = hs.m

    def f(y):
        hx, hp = hs.grad(*hs.split(y))
        return np.concatenate([np.atleast_1d(hp), -np.atleast_1d(hx)])

    def jac(y):
        hxx, hxp, hpx, hpp = hs.hess(*hs.split(y))
        out = np.empty((2 * m, 2 * m))
        out[:m, :m] = hpx
        out[:m, m:] = hpp
        out[m:, :m] = np.negative(hxx)
        out[m:, m:] = np.negative(hxp)
        return out

    return OdeSystem(2 * m, f, jac, name=hs.name, hamiltonian=hs).fresh()


def linearize(sys, anchor):
    """Linear system dx/dt = F'(a) x + (F(a) - F'(a) a) tangent at ``a``."""
    anchor = np.asarray(anchor, dtype=float)
    A = sys.J(anchor)
    return LinearSystem(A, sys.F(anchor) - A @ anchor)


# ---------------------------------------------------------------------------
# Benchmark and test systems

def anharmonic2d():
    """H = |p|^2/2 + |x|^2/2 - |x|^3/30 with two degrees of freedom."""

    def h_fn(x, p):
        r = np.hypot(x[0], x[1])
        return 0.5 * (p @ p) + 0.5 * r * r - r**3 / 30.0

    def grad(x, p):
        r = np.hypot(x[0], x[1])
        return x * (1.0 - 0.1 * r), p.copy()

    def hess(x, p):
        r = np.hypot(x[0], x[1])
        hxx = (1.0 - 0.1 * r) * np.eye(2)
        if r > 0.0:
            # d/dx (x r) = r I + x x^T / r; the term vanishes as r -> 0.
            hxx -= 0.1 * np.outer(x, x) / r
        z = np.zeros((2, 2))
        return hxx, z, z, np.eye(2)

    return HamiltonianSystem(2, h_fn, grad, hess, name="anharmonic2d")


def circ_init(radius):
    """Initial state (x, p) of the circular orbit of the given radius."""
    if not 0.0 < radius < 10.0:
        raise ValueError("circular orbits exist only for 0 < R < 10")
    return np.array([radius, 0.0, 0.0, radius * np.sqrt(1.0 - 0.1 * radius)])


def circular_angular_velocity(radius):
    return np.sqrt(1.0 - 0.1 * radius)


def circular_period(radius):
    return 2.0 * np.pi / circular_angular_velocity(radius)


def circular_orbit(radius):
    """Exact solution t -> y(t) of the circular orbit started by :func:`circ_init`."""
    w = circular_angular_velocity(radius)

    def state(t):
        c, s = np.cos(w * t), np.sin(w * t)
        return np.array([radius * c, radius * s, -radius * w * s, radius * w * c])

    return state


def harmonic1d():
    """H = (x^2 + p^2)/2."""
    return HamiltonianSystem(
        1,
        lambda x, p: 0.5 * (x @ x + p @ p),
        lambda x, p: (x.copy(), p.copy()),
        lambda x, p: (np.eye(1), np.zeros((1, 1)), np.zeros((1, 1)), np.eye(1)),
        name="harmonic1d",
    )


def quartic1d(eps=1.0):
    """H = p^2/2 + x^2/2 + eps x^4/4, a one-degree-of-freedom test oscillator."""
    return HamiltonianSystem(
        1,
        lambda x, p: 0.5 * (p @ p) + 0.5 * (x @ x) + 0.25 * eps * float(x[0]) ** 4,
        lambda x, p: (x + eps * x**3, p.copy()),
        lambda x, p: (np.atleast_2d(1.0 + 3.0 * eps * x[0] ** 2), np.zeros((1, 1)),
                      np.zeros((1, 1)), np.eye(1)),
        name="quartic1d",
    )


def quadratic_hamiltonian(Q, c=None, name="quadratic"):
    """H(y) = y^T Q y / 2 + c^T y for symmetric ``Q`` of size 2m."""
    Q = np.asarray(Q, dtype=float)
    Q = 0.5 * (Q + Q.T)
    d = Q.shape[0]
    m = d // 2
    c = np.zeros(d) if c is None else np.asarray(c, dtype=float)

    half = 0.5 * Q

    def h_fn(x, p):
        y = np.concatenate((x, p))
        return np.dot(y, half.dot(y) + c)

    def grad(x, p):
        g = Q @ np.concatenate([x, p]) + c
        return g[:m], g[m:]

    def hess(x, p):
        return Q[:m, :m], Q[:m, m:], Q[m:, :m], Q[m:, m:]

    return HamiltonianSystem(m, h_fn, grad, hess, name=name)


def _damped_oscillator():
    return linear_ode([[0.0, 1.0], [-1.0, -0.1]], name="linear")


def _decay():
    return linear_ode([[-1.0]], name="decay")


def _rotation():
    return linear_ode([[0.0, 1.0], [-1.0, 0.0]], name="rotation")


# name -> (factory returning an OdeSystem, initial state for a radius)
SYSTEMS = {
    "anharmonic2d": (lambda: hamiltonian_to_ode(anharmonic2d()), circ_init),
    "harmonic1d": (lambda: hamiltonian_to_ode(harmonic1d()), lambda r: np.array([r, 0.0])),
    "quartic1d": (lambda: hamiltonian_to_ode(quartic1d()), lambda r: np.array([r, 0.0])),
    "linear": (_damped_oscillator, lambda r: np.array([r, 0.0])),
    "decay": (_decay, lambda r: np.array([r])),
    "rotation": (_rotation, lambda r: np.array([r, 0.0])),
}


def register_system(name, factory, initial_state):
    SYSTEMS[name] = (factory, initial_state)


def get_system(name):
    """Return ``(ode, initial_state)`` for a registered system name."""
    try:
        factory, init = SYSTEMS[name]
    except KeyError:
        raise KeyError(f"unknown system {name!r}; valid: {', '.join(sorted(SYSTEMS))}") from None
    return factory(), init


# ---------------------------------------------------------------------------
# Finite-difference self-checks

def check_jacobian(sys, x, step=1e-5):
    """Max abs difference between ``sys.jac`` and central differences of ``sys.f``."""
    x = np.asarray(x, dtype=float)
    J = np.asarray(sys.jac(x), dtype=float)
    fd = np.empty_like(J)
    for k in range(sys.dim):
        e = np.zeros(sys.dim)
        e[k] = step
        fd[:, k] = (np.asarray(sys.f(x + e)) - np.asarray(sys.f(x - e))) / (2 * step)
    return np.max(np.abs(J - fd))


def check_gradient(hs, y, step=1e-5):
    """Max abs difference between the packed gradient and central differences of H."""
    y = np.asarray(y, dtype=float)
    g = np.concatenate([np.atleast_1d(v) for v in hs.grad(*hs.split(y))])
    fd = np.empty_like(g)
    for k in range(y.size):
        e = np.zeros(y.size)
        e[k] = step
        fd[k] = (hs.h_fn(*hs.split(y + e)) - hs.h_fn(*hs.split(y - e))) / (2 * step)
    return np.max(np.abs(g - fd))
