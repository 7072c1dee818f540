"""Instance builders shared by the test modules."""

from __future__ import annotations

import math

import numpy as np

from lmpcluster.core_model import Instance, Objective, validate_instance

# Ring radius and chord windows (as distances) that steer facilities into I2/I3 when every t is 1.
# Chords cost more than 1, so neighbouring clients do not speed up tightness at lambda = 1.
RING = {
    Objective.KMEANS: dict(radius=(math.sqrt(2.0), math.sqrt(2.187)), chord=(1.0, math.sqrt(2.0))),
    Objective.KMEDIAN: dict(radius=(1.395, math.sqrt(2.0)), chord=(1.0, math.sqrt(2.0))),
}


def random_instance(rng: np.random.Generator, objective, n_range=(2, 12), m_range=(1, 8), d_range=(1, 3),
                    validate: bool = True) -> Instance:
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    m = int(rng.integers(m_range[0], m_range[1] + 1))
    d = int(rng.integers(d_range[0], d_range[1] + 1))
    inst = Instance(objective, rng.random((n, d)), rng.random((m, d)))
    return validate_instance(inst) if validate else inst


def planted_ring(rng: np.random.Generator, objective, rings: int = 2, per_ring=(2, 5),
                 stray_clients: int = 6) -> Instance:
    """Center facilities each with a ring of facilities at the radius window; one client sits on
    every facility, plus a few stray clients near the rings.  Run with lambda = 1."""
    objective = Objective.parse(objective)
    win = RING[objective]
    fac, cli = [], []
    for r in range(rings):
        center = np.array([12.0 * r, 0.0])
        fac.append(center)
        radius = rng.uniform(*win["radius"])
        angle = rng.uniform(0, 2 * math.pi)
        for _ in range(int(rng.integers(per_ring[0], per_ring[1] + 1))):
            fac.append(center + radius * np.array([math.cos(angle), math.sin(angle)]))
            chord = rng.uniform(*win["chord"])
            angle += 2 * math.asin(min(1.0, chord / (2 * radius)))
    fac = np.array(fac)
    cli = fac.copy()
    if stray_clients:
        picks = fac[rng.integers(0, len(fac), stray_clients)]
        cli = np.vstack([cli, picks + rng.normal(0, 0.6, picks.shape)])
    return Instance(objective, cli, fac)
