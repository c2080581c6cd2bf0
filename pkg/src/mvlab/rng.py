"""Counter-based random streams with a normative derivation contract.

Every random quantity in the package is a pure function of a 64-bit master
seed plus a role tag and an index, realized as Philox streams:

* ensemble solvers draw the Gaussian increments of global step ``s`` for all
  particles at once from the stream keyed ``(seed, STEP, s)``; the increment
  of particle ``i`` is row ``i`` of that block, so the value attached to
  ``(seed, particle, step)`` never depends on scheduling, thread count, or
  how many particles run alongside;
* a standalone noise path for particle ``i`` is the stream keyed
  ``(seed, PATH, i)``, reproducible from ``(seed, particle)`` alone;
* initial conditions, assumption samplers, and bridge-crossing uniforms use
  their own tags so no stream is ever consumed twice.

The exact generator (Philox 4x64) is an implementation detail; the keying
contract above is what tests rely on.
"""

from __future__ import annotations

import numpy as np

# Role tags occupy the top byte of the second key word.
STEP = 1        # per-step ensemble increments, index = global step
INIT = 2        # initial-condition sampler, index = 0
PATH = 3        # standalone per-particle noise paths, index = particle id
ASSUMPTION = 4  # assumption-checker samples, index = 0
BRIDGE = 5      # bridge-crossing uniforms, index = global step
EXPERIMENT = 6  # per-sub-experiment seed derivation, index = case number

_INDEX_MASK = (1 << 56) - 1
_U64_MASK = (1 << 64) - 1


def stream(seed: int, domain: int, index: int) -> np.random.Generator:
    """Generator for the (seed, domain, index) cell of the stream space."""
    key = [int(seed) & _U64_MASK, (domain << 56) | (int(index) & _INDEX_MASK)]
    return np.random.Generator(np.random.Philox(key=key))


def step_normals(seed: int, step: int, shape) -> np.ndarray:
    """Standard-normal block for one global step; particle id = leading row."""
    return stream(seed, STEP, step).standard_normal(shape)


def bridge_uniforms(seed: int, step: int, shape) -> np.ndarray:
    """Uniform(0,1) block used by within-step crossing tests."""
    return stream(seed, BRIDGE, step).random(shape)


def path_normals(seed: int, particle: int, shape) -> np.ndarray:
    """Standard-normal block for one particle's standalone noise path."""
    return stream(seed, PATH, particle).standard_normal(shape)


def derive_seed(seed: int, case: int) -> int:
    """Independent 64-bit sub-seed for sub-experiment `case`."""
    g = stream(seed, EXPERIMENT, case)
    return int(g.integers(0, 2**63, dtype=np.uint64))
