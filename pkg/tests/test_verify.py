import numpy as np
import pytest

from agebif.verify import (CHECKS, check_radius_monotonicity, random_field, run_all,
                           supersolution_f, supersolution_f_prime)


@pytest.mark.parametrize("name", list(CHECKS))
def test_check_passes_on_few_trials(small, name):
    rep = CHECKS[name](small, 4, 11)
    assert rep.passed, rep
    assert rep.trials == 4 and rep.seed == 11
    assert rep.config_hash == small.fingerprint()


def test_reports_are_reproducible(small):
    a = check_radius_monotonicity(small, 10, 3)
    b = check_radius_monotonicity(small, 10, 3)
    c = check_radius_monotonicity(small, 10, 4)
    assert a == b and a.worst_violation != c.worst_violation


def test_random_fields_nonnegative(small):
    rng = np.random.default_rng(0)
    for _ in range(20):
        f = random_field(small, rng)
        assert f.shape == (small.ag.n_a + 1, small.sg.n_x) and np.all(f >= 0)
        assert np.max(f) > 0
    g = random_field(small, rng, boundary_free=True)
    assert np.max(g[:, [0, -1]]) < np.max(g)


def test_supersolution_derivative_closed_form():
    a = np.linspace(0, 1, 101)
    for v0, b1, m in [(0.5, 1.0, 2.0), (3.0, 2.0, 0.7), (1.0, 1.0, 1.0)]:
        f = supersolution_f(a, v0, b1, m)
        assert f[0] == pytest.approx(v0)
        np.testing.assert_allclose(supersolution_f_prime(a, v0, b1, m),
                                   -b1 * f * f + m * f, rtol=1e-12, atol=1e-12)
        dh = 1e-6
        fd = (supersolution_f(a + dh, v0, b1, m) - supersolution_f(a - dh, v0, b1, m)) / (2 * dh)
        np.testing.assert_allclose(fd, supersolution_f_prime(a, v0, b1, m), rtol=1e-6, atol=1e-8)


def test_run_all_covers_every_check(small):
    reps = run_all(small, trials=2, seed=1)
    assert [r.name for r in reps] == list(CHECKS)
    assert next(r for r in reps if r.name == "radius_monotonicity").trials == 100
    assert all(r.passed for r in reps)
    assert set(reps[0].as_dict()) == {"name", "trials", "failures", "worst_violation",
                                      "seed", "config_hash"}
