"""Exact minimization over prescription profiles (internal machinery).

The backup at one information state minimizes over every joint prescription
profile.  Profiles that assign the same actions to every private realization
that can influence the outcome (positive-mass realizations for costs and
branch probabilities, plus any realization whose assignment is recorded
inside a successor state) produce identical values and identical successors,
so the minimization enumerates *behaviors*: action assignments on those
relevant realizations only.  The minimizing full profile is recovered as the
behavior's zero-filled completion, which is also its smallest-rank completion,
so smallest-rank tie-breaking over all profiles is preserved exactly.

Behavior enumeration order (ascending realization rank, earlier positions
more significant, controller 0 most significant overall) coincides with the
rank order of the zero-filled completions; np.argmin over the assembled value
array therefore lands on the smallest-rank minimizer directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import histories
from ._tables import tables
from .errors import BudgetError
from .model import ProblemSpec

DEFAULT_MAX_JOINT_BEHAVIORS = 1 << 22


@dataclass
class BehaviorSpace:
    """Enumerated action assignments on restricted realization sets."""

    t: int
    restricted: tuple[tuple[int, ...], ...]   # per k: realization ranks, ascending
    counts: tuple[int, ...]                   # per k: number of behaviors
    shape: tuple[int, ...]
    mats: tuple[np.ndarray, ...]              # per k: (N_k, |restricted_k|) digits
    onehots: tuple[np.ndarray, ...]           # per k: (N_k, |restricted_k|, u_k)
    pos: tuple[dict[int, int], ...]           # per k: realization rank -> column


def behavior_space(spec: ProblemSpec, t: int,
                   restricted: tuple[tuple[int, ...], ...],
                   max_joint: int = DEFAULT_MAX_JOINT_BEHAVIORS) -> BehaviorSpace:
    counts = []
    joint = 1
    for k in range(spec.K):
        n_k = spec.u_size[k] ** len(restricted[k])
        counts.append(n_k)
        joint *= n_k
    if joint > max_joint:
        raise BudgetError(
            f"profile minimization at t={t} needs {joint} joint behaviors "
            f"(budget {max_joint})")
    mats = []
    onehots = []
    pos = []
    for k in range(spec.K):
        m = len(restricted[k])
        u = spec.u_size[k]
        mat = np.zeros((counts[k], m), dtype=np.int64)
        idx = np.arange(counts[k], dtype=np.int64)
        for col in reversed(range(m)):
            mat[:, col] = idx % u
            idx //= u
        mats.append(mat)
        onehots.append(np.eye(u, dtype=np.float64)[mat])
        pos.append({lam: i for i, lam in enumerate(restricted[k])})
    return BehaviorSpace(
        t=t, restricted=tuple(tuple(r) for r in restricted),
        counts=tuple(counts), shape=tuple(counts),
        mats=tuple(mats), onehots=tuple(onehots), pos=tuple(pos),
    )


_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def _einsum_subscripts(K: int) -> str:
    lam = _LETTERS[:K]
    act = _LETTERS[K:2 * K]
    beh = _LETTERS[2 * K:3 * K]
    operands = [lam + act]
    operands += [beh[k] + lam[k] + act[k] for k in range(K)]
    return ",".join(operands) + "->" + beh


def stage_totals(spec: ProblemSpec, t: int, p: np.ndarray,
                 bs: BehaviorSpace) -> np.ndarray:
    """Expected stage cost of every behavior, shaped bs.shape.

    Zero-mass realizations outside the restricted sets contribute nothing,
    so restricting the cost tensor to them is exact.
    """
    st = tables(spec).stage[t]
    cube = p.reshape(st.shape)
    cube_r = cube[np.ix_(range(spec.x_size), *bs.restricted)]
    q_cube = st.q.reshape((spec.x_size, *spec.u_size))
    ct = np.tensordot(cube_r, q_cube, axes=([0], [0]))
    return np.einsum(_einsum_subscripts(spec.K), ct, *bs.onehots, optimize=True)


def subkey_vector(spec: ProblemSpec, bs: BehaviorSpace, k: int,
                  lam_subset: tuple[int, ...]) -> np.ndarray:
    """Per behavior, the mixed-radix key of its digits on lam_subset."""
    u = spec.u_size[k]
    key = np.zeros(bs.counts[k], dtype=np.int64)
    for lam in lam_subset:
        key = key * u + bs.mats[k][:, bs.pos[k][lam]]
    return key


def embedded_profile(spec: ProblemSpec, t: int,
                     lam_sets: tuple[tuple[int, ...], ...],
                     digit_sets: tuple[tuple[int, ...], ...]) -> histories.GammaProfile:
    """The smallest-rank full profile carrying the given partial assignment."""
    gammas = []
    for k in range(spec.K):
        table = [0] * histories.private_count(spec, k, t)
        for lam, d in zip(lam_sets[k], digit_sets[k]):
            table[lam] = d
        gammas.append(histories.PartialFunction(k, t, tuple(table)))
    return histories.GammaProfile(t, tuple(gammas))


def completion_rank(spec: ProblemSpec, bs: BehaviorSpace,
                    flat_index: int) -> int:
    """Full profile rank of the zero-filled completion of one behavior."""
    per_k = np.unravel_index(flat_index, bs.shape)
    rank = 0
    for k in range(spec.K):
        digits = bs.mats[k][per_k[k]]
        table_rank = 0
        u = spec.u_size[k]
        count = histories.private_count(spec, k, bs.t)
        full = [0] * count
        for lam, d in zip(bs.restricted[k], digits):
            full[lam] = int(d)
        for entry in full:
            table_rank = table_rank * u + entry
        rank = rank * (u ** count) + table_rank
    return rank


def behavior_digits(bs: BehaviorSpace, flat_index: int) -> tuple[tuple[int, ...], ...]:
    per_k = np.unravel_index(flat_index, bs.shape)
    return tuple(tuple(int(d) for d in bs.mats[k][per_k[k]]) for k in range(len(bs.shape)))
