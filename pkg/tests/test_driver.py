import warnings

import numpy as np
import pytest

from goafem.driver import (NonMonotoneWarning, RunConfig, TooFewRecords, AdaptiveRecord,
                           adaptive_steps, extrapolate_reference, reference_values,
                           run, run_afem, run_goafem, run_uniform)
from goafem.fem import energy_inner, prolongate
from goafem.mesh import refine
from goafem.problem import builtin_problem


def _records(values, dofs):
    return [AdaptiveRecord(iter=i, ntri=2 * n, nedges=3 * n, ndof=n, eta2=1.0, eta_star2=1.0,
                           rho2=0.0, rho_star2=0.0, osc2=0.0, osc_star2=0.0, energy_uu=v,
                           energy_dual=v, goal=v, nmarked=1, seconds=0.0)
            for i, (v, n) in enumerate(zip(values, dofs))]


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(theta=1.5)
    with pytest.raises(ValueError):
        RunConfig(theta=0.0)
    with pytest.raises(ValueError):
        RunConfig(p=3)
    with pytest.raises(ValueError):
        RunConfig(c_min=0)
    with pytest.raises(ValueError):
        RunConfig(strategy="greedy")
    with pytest.raises(ValueError):
        RunConfig(strategy="doerfler", theta=1.0)
    assert RunConfig(strategy="bet").goal_oriented
    assert RunConfig(theta=0.3).bulk_theta == pytest.approx(0.7)


def test_five_iterations_give_six_growing_records():
    records = run_afem(RunConfig(problem="zshape", p=1, strategy="maximum", max_iterations=5))
    assert len(records) == 6
    ntri = [r.ntri for r in records]
    assert all(a < b for a, b in zip(ntri, ntri[1:]))
    assert records[-1].nmarked == 0
    assert all(r.nmarked > 0 for r in records[:-1])
    assert [r.iter for r in records] == list(range(6))


def test_strategy_family_checks():
    with pytest.raises(ValueError):
        run_afem(RunConfig(strategy="bet"))
    with pytest.raises(ValueError):
        run_goafem(RunConfig(strategy="maximum"))


def test_dof_limit_stops_the_loop():
    records = run(RunConfig(max_dofs=100))
    assert records[-1].ndof >= 100
    assert all(r.ndof < 100 for r in records[:-1])


def test_steps_are_nested_and_match_refine():
    cfg = RunConfig(problem="goal_square", p=2, strategy="goafem_maximum", max_iterations=6)
    steps = list(adaptive_steps(cfg))
    for prev, step in zip(steps, steps[1:]):
        assert step.lineage.coarse is prev.mesh
        fine, lin = refine(prev.mesh, prev.marked)
        np.testing.assert_array_equal(fine.triangles, step.mesh.triangles)
        np.testing.assert_array_equal(lin.bisected, step.lineage.bisected)
        # Pythagoras between consecutive Galerkin solutions
        P = prolongate(prev.primal, step.mesh, step.lineage)
        d = step.primal - P
        gain = step.record.energy_uu - prev.record.energy_uu
        assert gain == pytest.approx(energy_inner(d, d), rel=1e-8, abs=1e-15)
        assert gain >= -1e-12 * step.record.energy_uu
    assert set(steps[0].extra) >= {"primal", "dual", "min_set", "max_subset", "n"}


def test_goal_problem_records_dual_quantities():
    records = run_goafem(RunConfig(problem="goal_square", strategy="fpz", max_iterations=3))
    assert all(r.eta_star2 > 0 for r in records)
    assert any(r.eta_star2 != r.eta2 for r in records)
    assert all(r.goal != 0 for r in records[1:])


def test_extrapolation_recovers_exact_model():
    N = np.array([10, 20, 40, 80, 160], dtype=float)
    v = 7 - 3 / N
    assert extrapolate_reference(_records(v, N.astype(int)), "energy_sq", 1.0) == pytest.approx(7, abs=1e-8)


def test_extrapolation_with_other_rate():
    N = np.array([10, 20, 40, 80, 160, 320, 640, 1280], dtype=float)
    v = 2 + 5 * N**-0.7
    assert extrapolate_reference(_records(v, N.astype(int)), "goal", 1.0) == pytest.approx(2, abs=1e-8)


def test_extrapolation_of_constant_sequence():
    assert extrapolate_reference(_records([5.0] * 6, [1, 2, 3, 4, 5, 6])) == 5.0


def test_extrapolation_errors():
    with pytest.raises(TooFewRecords):
        extrapolate_reference(_records([1, 2, 3], [1, 2, 3]))
    with pytest.raises(ValueError):
        extrapolate_reference(_records([1, 2, 3, 4], [1, 2, 3, 4]), "eta")
    with pytest.warns(NonMonotoneWarning):
        assert extrapolate_reference(_records([1, 3, 2, 4], [1, 2, 3, 4])) == 4.0


def test_uniform_and_reference_helpers():
    records = run_uniform("smooth_square", p=1, levels=4)
    assert [r.ntri for r in records] == [2, 8, 32, 128, 512]
    assert records[0].ndof == 0
    _, spec = builtin_problem("smooth_square")
    aa, zz, g = reference_values(spec, spec.mesh, 1, refinements=4)
    assert aa == pytest.approx(records[-1].energy_uu)
    assert zz == pytest.approx(aa)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        extrapolate_reference(records)
