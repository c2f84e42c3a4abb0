"""Reference implementations used only as test oracles: plain loops, no
grouping or vectorization, independent of the solver internals they check."""

import numpy as np

from delayed_sharing.coordinator import belief_update, expected_stage_cost
from delayed_sharing.errors import UnreachableObservationError
from delayed_sharing.histories import common_obs_space, gamma_profiles


def naive_value(spec, t, pi):
    """Direct recursion over every profile and shared symbol."""
    best = np.inf
    for profile in gamma_profiles(spec, t):
        v = expected_stage_cost(spec, pi, profile)
        if t < spec.T:
            for z in common_obs_space(spec, t + 1):
                try:
                    pi2, pz = belief_update(spec, pi, profile, z)
                except UnreachableObservationError:
                    continue
                v += pz * naive_value(spec, t + 1, pi2)
        if v < best:
            best = v
    return best


def primitive_joint(spec, t):
    """Joint distribution of (X_0, all observations through t) by direct
    enumeration, as nested dict {(x0, y_tuples): prob}.  Only valid while no
    actions have been taken (t = 1)."""
    assert t == 1
    out = {}
    for x0 in range(spec.x_size):
        base = spec.x0_dist[x0]
        if base <= 0:
            continue
        def rec(k, ys, w):
            if k == spec.K:
                out[(x0, ys)] = out.get((x0, ys), 0.0) + w
                return
            for y in range(spec.y_size[k]):
                p = spec.obs[k][0][x0, y]
                if p > 0:
                    rec(k + 1, ys + (y,), w * p)
        rec(0, (), float(base))
    return out
