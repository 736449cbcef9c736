import numpy as np
import pytest

from chunkmask.allocation import ratio_estimator
from chunkmask.verify import (
    check_allocation_optimality,
    check_bias_bound,
    check_gradient_finite_difference,
    check_ratio_estimator,
    check_sampling_inclusion,
    check_speedup,
    run_checks,
)


def test_fast_suite_passes():
    results = run_checks(fast=True)
    assert len(results) == 6
    for r in results:
        assert r.passed, f"{r.name}: {r.detail}"


def test_zero_budget_rejected_before_checks():
    with pytest.raises(ValueError):
        run_checks(budget=0)


def test_injected_fault_breaks_unbiasedness():
    # Dropping the N_c/b_c rescaling makes the estimator a plain subset sum,
    # whose enumeration mean is (b/N) g_c, not g_c: the oracle must notice.
    from itertools import combinations

    rng = np.random.default_rng(0)
    n, b = 5, 2
    terms = rng.normal(size=(n, 3))
    target = terms.sum(axis=0)
    broken = np.mean([terms[list(s)].sum(axis=0)  # no N/b factor
                      for s in combinations(range(n), b)], axis=0)
    assert np.abs(broken - target).max() > 1e-6
    correct = np.mean([ratio_estimator(terms[list(s)], n)
                       for s in combinations(range(n), b)], axis=0)
    assert np.abs(correct - target).max() < 1e-12


def test_individual_checks_report_measurements():
    r = check_speedup(instances=200)
    assert r.passed
    r = check_sampling_inclusion(draws=20000)
    assert r.passed and "max_z" in r.measured
