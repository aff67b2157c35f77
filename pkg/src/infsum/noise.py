"""Random perturbation models and reproducible random streams."""

from dataclasses import dataclass

import numpy as np

from .data import SparseVector

_MASK64 = (1 << 64) - 1


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by the Philox generator with the 128-bit key built from the two
    64-bit words, so distinct ids give independent sequences and the same
    pair always replays the same draws.
    """

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = self.seed | (self.stream_id << 64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def integers(self, high, size=None):
        return self.generator.integers(high, size=size)

    def random(self, size=None):
        return self.generator.random(size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    p: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind == "dropout":
            if not (0.0 <= self.p < 1.0):
                raise ValueError("dropout probability must lie in [0, 1)")
        elif self.kind == "gauss":
            if not (np.isfinite(self.sigma) and self.sigma > 0):
                raise ValueError("gaussian sigma must be positive and finite")
        elif self.kind != "none":
            raise ValueError(f"unknown noise kind {self.kind!r}")

    @classmethod
    def parse(cls, token):
        """Parse ``none``, ``dropout:<p>`` or ``gauss:<sigma>``."""
        kind, _, arg = token.strip().partition(":")
        if kind == "none" and not arg:
            return cls()
        if kind == "dropout":
            return cls("dropout", p=float(arg))
        if kind == "gauss":
            return cls("gauss", sigma=float(arg))
        raise ValueError(f"bad noise token {token!r}")

    def __str__(self):
        if self.kind == "dropout":
            return f"dropout:{self.p!r}"
        if self.kind == "gauss":
            return f"gauss:{self.sigma!r}"
        return "none"


def dropout(p):
    return NoiseSpec("dropout", p=p)


def gaussian(sigma):
    return NoiseSpec("gauss", sigma=sigma)


NONE = NoiseSpec()


def perturb(x, spec, rng):
    """Draw one perturbed copy of ``x``.

    Dropout zeroes each stored coordinate with probability ``p`` and rescales
    survivors by ``1/(1-p)``. Gaussian noise is added on the stored support
    only, so sparsity is preserved.
    """
    if spec.kind == "none" or x.indices.size == 0:
        return x
    if spec.kind == "dropout":
        if spec.p == 0.0:
            return x
        keep = rng.random(x.indices.size) >= spec.p
        return SparseVector._raw(x.indices[keep], x.values[keep] / (1.0 - spec.p))
    vals = x.values + spec.sigma * rng.normal(x.indices.size)
    nz = vals != 0.0
    if nz.all():
        return SparseVector._raw(x.indices, vals)
    return SparseVector._raw(x.indices[nz], vals[nz])


def expected_sample(x, spec):
    # all supported kinds are mean-preserving
    return x


def expected_sq_norm(x, spec):
    sq = x.sq_norm()
    if spec.kind == "dropout":
        return sq / (1.0 - spec.p)
    if spec.kind == "gauss":
        return sq + x.nnz * spec.sigma**2
    return sq
