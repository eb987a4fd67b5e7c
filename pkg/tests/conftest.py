"""Shared fixtures: model systems, seeded sampling, observable library."""

import numpy as np
import pytest

from adiakit import CircleAction, PhasePoint, elastic_pendulum, charged_particle
from adiakit import kernel as sk


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def pendulum():
    return elastic_pendulum(omega=1.0, gamma=1.0)


@pytest.fixture
def pendulum_action(pendulum):
    return CircleAction(pendulum.system)


@pytest.fixture
def particle():
    return charged_particle(b=1.0, lam=0.3)


@pytest.fixture
def particle_action(particle):
    return CircleAction(particle.system)


def sample_points(fixture, rng, n):
    """Random phase points from the fixture's domain box."""
    system = fixture.system
    coords = system.domain.sample(rng, n)
    return [PhasePoint(c[: 2 * system.r], c[2 * system.r:]) for c in coords]


def observable_library():
    """Fixed polynomial observables over (y, x, p, q) with r = k = 1."""
    return [
        lambda fast, slow: fast[0],
        lambda fast, slow: fast[1],
        lambda fast, slow: fast[0] * fast[0],
        lambda fast, slow: fast[0] * fast[1],
        lambda fast, slow: fast[1] ** 3 + slow[0] * fast[0],
        lambda fast, slow: slow[1] * fast[0] * fast[1] ** 2,
    ]


def random_polynomial(rng, degree=3):
    """Random polynomial in all four coordinates with O(1) coefficients."""
    n_terms = 6
    powers = rng.integers(0, degree + 1, size=(n_terms, 4))
    coeffs = rng.uniform(-1.0, 1.0, size=n_terms)

    def poly(fast, slow):
        y, x = fast[0], fast[1]
        p, q = slow[0], slow[1]
        total = 0.0
        for (a, b, c, d), w in zip(powers, coeffs):
            total = total + w * y ** int(a) * x ** int(b) * p ** int(c) * q ** int(d)
        return total

    return poly
