"""Instance generation: ground truths, random and semi-random revelation,
and the two block counter-examples for plain non-convex completion."""
from dataclasses import dataclass, field
import csv
import math

import numpy as np

from .completion import GroundTruth, incoherence
from .errors import ArgumentError

__all__ = ["ObservationSet", "AdversaryStrategy", "make_ground_truth",
           "sample_uniform_observations", "adversary_add", "counterexample_rank1",
           "counterexample_rank2", "weighted_to_semirandom", "incoherence",
           "block_representative", "rank1_certificate", "max_principal_angle"]

RANDOM, ADVERSARIAL = "random", "adversarial"


@dataclass
class ObservationSet:
    """Revealed entries ``(rows[k], cols[k]) -> values[k]`` with a provenance
    flag per entry (``True`` for adversarial)."""

    n1: int
    n2: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    adversarial: np.ndarray = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64).ravel()
        self.cols = np.asarray(self.cols, dtype=np.int64).ravel()
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.adversarial is None:
            self.adversarial = np.zeros(self.rows.size, dtype=bool)
        self.adversarial = np.asarray(self.adversarial, dtype=bool).ravel()
        if not (self.rows.size == self.cols.size == self.values.size
                == self.adversarial.size):
            raise ArgumentError("observation arrays differ in length")
        if self.rows.size and (self.rows.min() < 0 or self.rows.max() >= self.n1
                               or self.cols.min() < 0 or self.cols.max() >= self.n2):
            raise ArgumentError("observation index out of range")
        if np.unique(self.rows * self.n2 + self.cols).size != self.rows.size:
            raise ArgumentError("duplicate observations")

    @property
    def size(self):
        return self.rows.size

    @property
    def shape(self):
        return self.n1, self.n2

    @property
    def mask(self):
        m = np.zeros((self.n1, self.n2), dtype=bool)
        m[self.rows, self.cols] = True
        return m

    def dense(self):
        """``(M_obs, mask)`` with zeros off the mask."""
        M = np.zeros((self.n1, self.n2))
        M[self.rows, self.cols] = self.values
        return M, self.mask

    @classmethod
    def from_mask(cls, mask, M, adversarial=None):
        mask = np.asarray(mask, dtype=bool)
        r, c = np.nonzero(mask)
        adv = None if adversarial is None else np.asarray(adversarial)[r, c]
        return cls(mask.shape[0], mask.shape[1], r, c, np.asarray(M)[r, c], adv)

    def edges(self):
        """Bipartite edge list of the revealed pattern."""
        from .spectral_core import EdgeList
        return EdgeList(self.n1, self.n2, self.rows, self.cols)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# n1={self.n1} n2={self.n2}\n")
            w = csv.writer(fh)
            w.writerow(["i", "j", "value", "provenance"])
            for i, j, v, a in zip(self.rows, self.cols, self.values, self.adversarial):
                w.writerow([int(i), int(j), repr(float(v)), ADVERSARIAL if a else RANDOM])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            head = fh.readline()
            try:
                dims = dict(kv.split("=") for kv in head.lstrip("#").split())
                n1, n2 = int(dims["n1"]), int(dims["n2"])
            except (ValueError, KeyError) as err:
                raise ArgumentError(f"{path}: missing '# n1=.. n2=..' header") from err
            rows = list(csv.DictReader(fh))
        try:
            return cls(n1, n2, [int(r["i"]) for r in rows], [int(r["j"]) for r in rows],
                       [float(r["value"]) for r in rows],
                       [r["provenance"] == ADVERSARIAL for r in rows])
        except KeyError as err:
            raise ArgumentError(f"{path}: missing column {err}") from err

    def same_as(self, other):
        a = np.lexsort((self.cols, self.rows))
        b = np.lexsort((other.cols, other.rows))
        return (self.shape == other.shape
                and np.array_equal(self.rows[a], other.rows[b])
                and np.array_equal(self.cols[a], other.cols[b])
                and np.array_equal(self.values[a], other.values[b])
                and np.array_equal(self.adversarial[a], other.adversarial[b]))


@dataclass
class AdversaryStrategy:
    """Which extra entries the adversary reveals.

    kind : ``"none"``, ``"probability_matrix"``, ``"block_pattern"`` or ``"dense_rows"``
    params :
        ``probability_matrix``: ``P`` (n1 x n2 reveal probabilities, each at
        least the base ``p``) and ``p``.
        ``block_pattern``: ``blocks`` (a small matrix of weights, each block
        covering an equal share of rows and columns) and ``p``; reveals with
        probability ``p * weight``.
        ``dense_rows``: ``rows`` (indices to reveal completely), optionally
        ``cols``.
    """

    kind: str = "none"
    params: dict = field(default_factory=dict)
    seed: int = 0

    KINDS = ("none", "probability_matrix", "block_pattern", "dense_rows")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ArgumentError(f"unknown adversary kind {self.kind!r}")
        if self.kind == "probability_matrix":
            P = np.asarray(self.params.get("P"), dtype=float)
            p = float(self.params.get("p", 0.0))
            if P.ndim != 2 or np.any(P > 1) or np.any(P < p):
                raise ArgumentError("probabilities must lie in [p, 1]")
        if self.kind == "block_pattern":
            B = np.asarray(self.params.get("blocks"), dtype=float)
            p = float(self.params.get("p", 0.0))
            if B.ndim != 2 or np.any(B < 1) or p * B.max() > 1 or p <= 0:
                raise ArgumentError("block weights must be >= 1 with p*max <= 1")

    def to_dict(self):
        def enc(v):
            return v.tolist() if isinstance(v, np.ndarray) else v
        return {"kind": self.kind, "seed": self.seed,
                "params": {k: enc(v) for k, v in self.params.items()}}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("kind", "none"), dict(d.get("params", {})), d.get("seed", 0))


def _orthonormal(n, r, rng):
    Q, R = np.linalg.qr(rng.standard_normal((n, r)))
    return Q * np.sign(np.diag(R))


def make_ground_truth(n1, n2, r, spectrum=None, coherence_profile="haar", seed=0,
                      spike=0.5):
    """Balanced rank-r factors ``U* = X S^1/2``, ``V* = Y S^1/2``.

    Parameters
    ----------
    spectrum : sequence of float, optional
        Singular values, positive and non-increasing. Defaults to
        ``linspace(kappa, 1)`` with ``kappa = 4``.
    coherence_profile : {"haar", "spiky", "flat"}
        ``haar`` draws uniformly random singular subspaces (low ``mu``).
        ``spiky`` mixes them with standard-basis rows so that a ``spike``
        fraction of each singular vector's mass sits on one coordinate.
        ``flat`` (rank one only) uses the normalized all-ones vectors.
    """
    if not (1 <= r <= min(n1, n2)):
        raise ArgumentError(f"rank {r} infeasible for a {n1}x{n2} matrix")
    s = np.linspace(4.0, 1.0, r) if spectrum is None else np.asarray(spectrum, float)
    if s.shape != (r,) or np.any(s <= 0) or np.any(np.diff(s) > 0):
        raise ArgumentError("spectrum must be r positive non-increasing values")
    rng = np.random.default_rng(seed)
    if coherence_profile == "haar":
        X, Y = _orthonormal(n1, r, rng), _orthonormal(n2, r, rng)
    elif coherence_profile == "spiky":
        if not 0 <= spike < 1:
            raise ArgumentError("spike must be in [0, 1)")

        def spiky(n):
            H = _orthonormal(n, r, rng)
            E = np.zeros((n, r))
            E[rng.choice(n, r, replace=False), np.arange(r)] = 1.0
            # project out E's span from H so that mixing keeps unit columns
            H -= E @ (E.T @ H)
            H, _ = np.linalg.qr(H)
            return math.sqrt(1 - spike) * H + math.sqrt(spike) * E
        X, Y = spiky(n1), spiky(n2)
    elif coherence_profile == "flat":
        if r != 1:
            raise ArgumentError("flat profile is rank one only")
        X = np.full((n1, 1), 1 / math.sqrt(n1))
        Y = np.full((n2, 1), 1 / math.sqrt(n2))
    else:
        raise ArgumentError(f"unknown coherence profile {coherence_profile!r}")
    sq = np.sqrt(s)
    return GroundTruth(X * sq, Y * sq, s.copy())


def sample_uniform_observations(gt, p, seed=0):
    """Reveal each entry independently with probability ``p``."""
    if not 0 < p <= 1:
        raise ArgumentError("p must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    mask = rng.random(gt.shape) < p
    return ObservationSet.from_mask(mask, gt.M)


def adversary_add(obs, gt, strategy):
    """Superset of ``obs``: the adversary's extra reveals are flagged.

    For ``probability_matrix`` and ``block_pattern`` an entry not already
    revealed is added with probability ``(P_ij - p) / (1 - p)``, so an entry
    is revealed overall with probability ``P_ij`` when ``obs`` came from
    uniform sampling at rate ``p``.
    """
    if strategy.kind == "none":
        return ObservationSet(obs.n1, obs.n2, obs.rows.copy(), obs.cols.copy(),
                              obs.values.copy(), obs.adversarial.copy())
    if obs.shape != gt.shape:
        raise ArgumentError("observations and ground truth differ in shape")
    have = obs.mask
    rng = np.random.default_rng(strategy.seed)
    if strategy.kind == "dense_rows":
        extra = np.zeros(gt.shape, dtype=bool)
        cols = strategy.params.get("cols")
        cols = np.arange(gt.shape[1]) if cols is None else np.asarray(cols)
        extra[np.ix_(np.asarray(strategy.params["rows"]), cols)] = True
    else:
        p = float(strategy.params["p"])
        if strategy.kind == "probability_matrix":
            P = np.asarray(strategy.params["P"], dtype=float)
        else:
            P = p * _expand_blocks(np.asarray(strategy.params["blocks"], float), gt.shape)
        if P.shape != gt.shape:
            raise ArgumentError("probability matrix shape mismatch")
        cond = (P - p) / (1 - p) if p < 1 else np.zeros_like(P)
        extra = rng.random(gt.shape) < cond
    extra &= ~have
    r, c = np.nonzero(extra)
    M = gt.M
    return ObservationSet(obs.n1, obs.n2, np.concatenate([obs.rows, r]),
                          np.concatenate([obs.cols, c]),
                          np.concatenate([obs.values, M[r, c]]),
                          np.concatenate([obs.adversarial, np.ones(r.size, bool)]))


def _expand_blocks(B, shape):
    n1, n2 = shape
    b1, b2 = B.shape
    if n1 % b1 or n2 % b2:
        raise ArgumentError(f"{shape} not divisible into {B.shape} blocks")
    return np.kron(B, np.ones((n1 // b1, n2 // b2)))


def block_representative(A, blocks):
    """Top-left entry of each block; ``None`` if ``A`` is not block constant."""
    A = np.asarray(A)
    b1, b2 = blocks
    h, w = A.shape[0] // b1, A.shape[1] // b2
    rep = A[::h, ::w]
    if not np.array_equal(np.kron(rep, np.ones((h, w))), A):
        return None
    return rep


def counterexample_rank1(n, beta=0.9):
    """Rank-one all-ones truth with a two-block weight matrix that creates a
    spurious local minimum at ``u = (beta; -beta)``.

    Returns
    -------
    gt : GroundTruth
        Symmetric, ``M* = 1 1^T``.
    W : ndarray
        ``[[g J, J], [J, g J]]`` with ``g = (1 + beta^2) / (1 - beta^2)``.
    u : ndarray, shape (n, 1)
    """
    if n < 2 or n % 2:
        raise ArgumentError("n must be a positive multiple of 2")
    if not 2 ** -0.25 < beta <= 0.9:
        raise ArgumentError("beta must lie in (2^-1/4, 9/10]")
    g = (1 + beta ** 2) / (1 - beta ** 2)
    W = _expand_blocks(np.array([[g, 1.0], [1.0, g]]), (n, n))
    u = np.concatenate([np.full(n // 2, beta), np.full(n // 2, -beta)])[:, None]
    one = np.ones((n, 1))
    gt = GroundTruth(one, one.copy(), np.array([float(n)]), 1.0, 1.0, symmetric=True)
    return gt, W, u


def rank1_certificate(beta):
    """``2 beta^2 (g - 1) - (g + 1)``; positive means the Hessian at ``u`` is
    positive definite."""
    g = (1 + beta ** 2) / (1 - beta ** 2)
    return 2 * beta ** 2 * (g - 1) - (g + 1)


def counterexample_rank2(n):
    """Rank-two block truth whose ``W``-weighted top singular space is
    orthogonal to the true column space.

    Returns ``(gt, W)`` with ``n x n`` matrices made of ``(n/4) x (n/4)``
    constant blocks; ``gt`` has singular values ``(4n, n)``.
    """
    if n < 4 or n % 4:
        raise ArgumentError("n must be a positive multiple of 4")
    A = np.array([[1.0, 1], [1, 1], [1, -1], [1, -1]])
    k = n // 4
    Af = np.kron(A, np.ones((k, 1)))          # columns have norm 2 sqrt(k)
    X = Af / (2 * math.sqrt(k))
    s = np.array([4.0, 1.0]) * 4 * k
    U = X * np.sqrt(s)
    gt = GroundTruth(U, U.copy(), s, symmetric=True)
    W = _expand_blocks(np.array([[2.0, 1, 2, 1], [1, 2, 1, 2],
                                 [2, 1, 2, 1], [1, 2, 1, 2]]), (n, n))
    return gt, W


def max_principal_angle(X, Y):
    """Largest principal angle, in degrees, between ``span(X)`` and ``span(Y)``.

    Computed as the arccos of the smallest singular value of ``Qx^T Qy``,
    which is well conditioned near 90 degrees.
    """
    Qx, _ = np.linalg.qr(np.asarray(X, dtype=float))
    Qy, _ = np.linalg.qr(np.asarray(Y, dtype=float))
    if Qx.shape[0] != Qy.shape[0]:
        raise ArgumentError("subspaces live in different dimensions")
    if Qx.shape[1] > Qy.shape[1]:
        Qx, Qy = Qy, Qx
    c = np.linalg.svd(Qx.T @ Qy, compute_uv=False)
    return float(np.degrees(np.arccos(np.clip(c.min(), -1.0, 1.0))))


def weighted_to_semirandom(W, p, gt, seed=0):
    """Reveal entry ``(i, j)`` with probability ``p W_ij``.

    A base Bernoulli(``p``) layer is flagged random; the rest is the
    adversary's, so ``E[mask] / p = W``.
    """
    W = np.asarray(W, dtype=float)
    if W.shape != gt.shape:
        raise ArgumentError("weight shape mismatch")
    if not 0 < p <= 1:
        raise ArgumentError("p must lie in (0, 1]")
    if np.any(W < 1):
        raise ArgumentError("weights below 1 would undercut the base rate p")
    if p * W.max() > 1:
        raise ArgumentError(f"p * max(W) = {p * W.max():.4g} exceeds 1")
    rng = np.random.default_rng(seed)
    base = sample_uniform_observations(gt, p, int(rng.integers(2 ** 63)))
    strat = AdversaryStrategy("probability_matrix", {"P": p * W, "p": p},
                              int(rng.integers(2 ** 63)))
    return adversary_add(base, gt, strat)
