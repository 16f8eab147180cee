"""Reproducible random streams, Sobol initialization, and posterior sampling.

Every source of randomness in a run is an :class:`RngStream` keyed by
``(master_seed, stream_id, path)``.  Streams are backed by counter-based
Philox generators derived through ``numpy.random.SeedSequence``, so equal
keys replay identical sequences and sibling streams are statistically
independent.  Purpose-specific substreams are derived with :meth:`RngStream.spawn`,
which keeps iteration ``n`` of an algorithm independent of how many
iterations follow it (truncated runs replay exactly).
"""

from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import NumericalError

# Diagonal jitter escalation used for every Cholesky in the package.
JITTER_LADDER = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


def _key_to_uint32(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    return zlib.crc32(str(key).encode("utf-8"))


@dataclass
class RngStream:
    """A replayable random stream for one replication (or a derived purpose).

    Parameters
    ----------
    master_seed:
        Experiment-level seed.
    stream_id:
        Replication index; distinct ids give independent streams.
    path:
        Derivation path of spawned substreams (filled by :meth:`spawn`).
    """

    master_seed: int
    stream_id: int = 0
    path: tuple = ()
    _generator: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def spawn(self, *keys) -> "RngStream":
        """Derive an independent substream; string keys are hashed to uint32."""
        suffix = tuple(_key_to_uint32(k) for k in keys)
        return RngStream(self.master_seed, self.stream_id, self.path + suffix)

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            seq = np.random.SeedSequence(
                entropy=self.master_seed, spawn_key=(self.stream_id,) + self.path
            )
            self._generator = np.random.Generator(np.random.Philox(seq))
        return self._generator


def sobol_points(d: int, n: int, stream: RngStream) -> np.ndarray:
    """First ``n`` points of an Owen-scrambled Sobol sequence in ``[0,1)^d``.

    The scramble is seeded from ``stream``, so replications differ while each
    stream replays the same matrix.
    """
    if d < 1 or n < 1:
        raise ValueError(f"need d >= 1 and n >= 1, got d={d}, n={n}")
    engine = qmc.Sobol(d=d, scramble=True, seed=stream.generator)
    with warnings.catch_warnings():
        # non power-of-two counts only cost balance, which we do not rely on
        warnings.simplefilter("ignore", UserWarning)
        return engine.random(n)


def jittered_cholesky(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``cov`` after deterministic jitter escalation.

    Tries the ladder ``0, 1e-8, ..., 1e-4`` added to the diagonal; raises
    :class:`NumericalError` if none succeeds.
    """
    for jitter in JITTER_LADDER:
        try:
            L = np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
            return L, jitter
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        f"covariance not positive definite after jitter up to {JITTER_LADDER[-1]:g}"
    )


def mvn_sample(mean: np.ndarray, cov: np.ndarray, stream: RngStream) -> np.ndarray:
    """One draw from N(mean, cov) using a jittered Cholesky factor."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (mean.size, mean.size):
        raise ValueError(f"cov shape {cov.shape} does not match mean size {mean.size}")
    if not np.any(cov):
        return mean.copy()
    L, _ = jittered_cholesky(cov)
    z = stream.generator.standard_normal(mean.size)
    return mean + L @ z


class JointSampler:
    """Draws joint posterior samples of a GP at a fixed candidate set.

    Factors the posterior covariance once so repeated Thompson draws reuse it.
    """

    def __init__(self, gp, candidates: np.ndarray):
        self.candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
        self.mean, cov = gp.posterior_joint(self.candidates)
        if not np.any(cov):
            self._factor = None
        else:
            self._factor, _ = jittered_cholesky(cov)

    def draw(self, stream: RngStream) -> np.ndarray:
        if self._factor is None:
            return self.mean.copy()
        z = stream.generator.standard_normal(self.mean.size)
        return self.mean + self._factor @ z

    def argmax_draw(self, stream: RngStream) -> tuple[int, float]:
        sample = self.draw(stream)
        idx = int(np.argmax(sample))
        return idx, float(sample[idx])


def thompson_argmax(gp, candidates: np.ndarray, stream: RngStream) -> tuple[int, float]:
    """Sample the GP jointly at ``candidates`` and return (argmax index, value).

    Ties break to the lowest index.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if candidates.shape[0] == 0:
        raise ValueError("candidate set is empty")
    return JointSampler(gp, candidates).argmax_draw(stream)
