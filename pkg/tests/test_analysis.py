import numpy as np
import pytest

from delayed_sharing.analysis import (check_aicardi_degenerate,
                                      check_one_step_factorization,
                                      concavity_probe,
                                      kurtaran_witness_search,
                                      kurtaran_random_search,
                                      verify_kurtaran_witness)
from delayed_sharing.coordinator import PiBelief, extract_design, state_count, value_at
from delayed_sharing.errors import PreconditionError
from delayed_sharing.generate import random_instance
from delayed_sharing.histories import private_space, random_design
from delayed_sharing.model import ProblemSpec, normalize_problem


# -- delay-1 factorization ------------------------------------------------------

def test_factorization_requires_delay_one(i2_spec):
    with pytest.raises(PreconditionError):
        check_one_step_factorization(i2_spec, random_design(i2_spec, 1))


def test_factorization_deterministic_obs():
    spec = normalize_problem(random_instance(
        2, 2, 1, 2, (2, 2), (2, 2), seed=31, deterministic=True))
    rep = check_one_step_factorization(spec, random_design(spec, 2))
    assert rep.passed


def test_factorization_uninformative_obs():
    base = random_instance(2, 2, 1, 2, (2, 2), (2, 2), seed=32)
    obs = np.full((2, 2, 2), 0.5)
    spec = normalize_problem(ProblemSpec(
        K=2, T=2, n=1, x_size=2, y_size=(2, 2), u_size=(2, 2),
        x0_dist=np.array(base.x0_dist), trans=np.array(base.trans),
        obs=(obs.copy(), obs.copy()), cost=np.array(base.cost)))
    rep = check_one_step_factorization(spec, random_design(spec, 2))
    assert rep.passed


def test_factorization_on_solved_instances(solved):
    for name in ("io", "i1"):
        entry = solved[name]
        design = extract_design(entry["spec"], entry["pol"])
        rep = check_one_step_factorization(entry["spec"], design)
        assert rep.passed
        assert rep.max_product_error <= 1e-12
        assert rep.max_independence_error <= 1e-12
        assert rep.overlap_checked >= 1


# -- fully-observed degeneracy ---------------------------------------------------

def test_aicardi_requires_projections(i2_spec):
    with pytest.raises(PreconditionError):
        check_aicardi_degenerate(i2_spec, (2, 1))


def test_aicardi_factor_mismatch(ia_spec):
    with pytest.raises(PreconditionError):
        check_aicardi_degenerate(ia_spec, (4, 2))


def test_aicardi_degenerate_passes(ia_spec):
    rep = check_aicardi_degenerate(ia_spec, (2, 2))
    assert rep.passed
    assert rep.max_offpoint_mass <= 1e-12
    assert rep.structurally_indexed
    assert abs(rep.dp1_cost - rep.dp2_cost) <= 1e-9


def test_aicardi_early_theta_is_prior(ia_spec):
    from delayed_sharing.second_form import reachable_graph2
    graph2 = reachable_graph2(ia_spec)
    for t in (1, 2):      # t <= n: nothing shared, prior retained
        for node in graph2.stages[t]:
            assert np.abs(node.state.theta.p - ia_spec.x0_dist).max() <= 1e-12


# -- two-step-back statistic -----------------------------------------------------

def test_kurtaran_requires_delay_two(i1_spec):
    with pytest.raises(PreconditionError):
        kurtaran_witness_search(i1_spec, random_design(i1_spec, 1))


def test_kurtaran_structural_exhaustion_small_horizon():
    # T=2, n=2: a single (empty) shared history exists, no pairs to compare
    spec = normalize_problem(random_instance(2, 2, 2, 2, (2, 2), (2, 2), seed=41))
    rep = kurtaran_witness_search(spec, random_design(spec, 1))
    assert rep.exhausted
    assert rep.histories == {}      # no stage has both a statistic and a successor


def test_kurtaran_i2_runs_to_completion(i2_spec, solved):
    design = extract_design(i2_spec, solved["i2"]["pol"])
    rep = kurtaran_witness_search(i2_spec, design)
    assert rep.exhausted
    assert rep.histories == {2: 1}


def _collision_instance():
    """Stage-1 observations carry no information, so shared histories
    differing only there have equal two-step-back statistics."""
    base = random_instance(2, 4, 2, 2, (2, 2), (2, 2), seed=99)
    obs = [np.array(o) for o in base.obs]
    for k in range(2):
        obs[k][0, :, :] = 0.5
    return normalize_problem(ProblemSpec(
        K=2, T=4, n=2, x_size=2, y_size=(2, 2), u_size=(2, 2),
        x0_dist=np.array(base.x0_dist), trans=np.array(base.trans),
        obs=tuple(obs), cost=np.array(base.cost)))


def test_kurtaran_witness_found_and_reverified():
    """A history-dependent design whose later prescriptions split statistic-
    equal histories: the statistic admits no self-contained update here."""
    spec = _collision_instance()
    design = random_design(spec, 5)
    for k in range(2):
        design.tables[k][0][:, :] = 0
        for lam, info in enumerate(private_space(spec, k, 2)):
            design.tables[k][1][:, lam] = info.y_seq[-1]
    rep = kurtaran_witness_search(spec, design)
    assert rep.witness is not None
    w = rep.witness
    assert w.gap > 1e-6
    assert np.abs(np.array(w.phi) - np.array(w.phi)).max() <= 1e-12
    assert verify_kurtaran_witness(spec, design, w)


def test_kurtaran_open_loop_design_exhausts_with_comparisons():
    """On the collision instance, prescriptions that ignore both the shared
    data and the uninformative first stage keep statistics and their
    successors together: comparisons happen, no witness appears."""
    spec = _collision_instance()
    design = random_design(spec, 5)
    for k in range(2):
        design.tables[k][0][:, :] = 0
        for lam, info in enumerate(private_space(spec, k, 2)):
            design.tables[k][1][:, lam] = info.y_seq[-1]
        for t in (3, 4):
            for lam in range(design.tables[k][t - 1].shape[1]):
                design.tables[k][t - 1][:, lam] = design.tables[k][t - 1][0, lam]
    rep = kurtaran_witness_search(spec, design)
    assert rep.exhausted
    assert rep.comparisons >= 1


def test_kurtaran_random_search_protocol():
    reports = kurtaran_random_search(10, seed=3)
    assert len(reports) == 10
    for rep in reports:
        assert rep.exhausted or rep.witness.gap > 1e-6


# -- concavity -------------------------------------------------------------------

def test_concavity_edge_cases(i1_spec):
    spec = i1_spec
    rng = np.random.default_rng(2)
    memo = {}
    for t in (1, 2):
        dim = state_count(spec, t)
        p1 = rng.dirichlet(np.ones(dim))
        p2 = rng.dirichlet(np.ones(dim))
        v1 = value_at(spec, t, PiBelief(t, p1), _memo=memo)
        v2 = value_at(spec, t, PiBelief(t, p2), _memo=memo)
        # lambda in {0, 1} and equal endpoints give exact equality
        assert value_at(spec, t, PiBelief(t, p1.copy()), _memo=memo) == v1
        mix_same = value_at(spec, t, PiBelief(t, 0.5 * p1 + 0.5 * p1), _memo=memo)
        assert mix_same == pytest.approx(v1, abs=1e-12)
        assert v2 == pytest.approx(
            value_at(spec, t, PiBelief(t, 0.0 * p1 + 1.0 * p2), _memo=memo), abs=1e-12)


def test_concavity_probe_reports(i1_spec):
    rep = concavity_probe(i1_spec, 20, seed=7)
    assert rep.passed
    assert set(rep.min_slack) == {1, 2}
    assert min(rep.min_slack.values()) >= -1e-9
